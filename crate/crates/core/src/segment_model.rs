//! Changepoint state space, Student-t segment likelihood and priors.
//!
//! Changepoints are 0-based indices marking the first sample of a new
//! segment. With changepoints `c_1 < ... < c_m`, segment `l` covers
//! `[c_l, c_{l+1})` where `c_0 = 0` and `c_{m+1} = n`, so every sample
//! belongs to exactly one segment.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Shortest segment the sampler will create.
pub const MIN_SEGMENT_LEN: usize = 2;

/// Student-t parameters of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub mu: f64,
    /// Squared scale of the location-scale t.
    pub sigma2: f64,
    /// Degrees of freedom.
    pub nu: f64,
}

impl SegmentParams {
    pub fn new(mu: f64, sigma2: f64, nu: f64) -> Self {
        Self { mu, sigma2, nu }
    }
}

/// One state of the reversible-jump chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub tau: Vec<usize>,
    pub segments: Vec<SegmentParams>,
}

impl ChainState {
    pub fn single(params: SegmentParams) -> Self {
        Self {
            tau: Vec::new(),
            segments: vec![params],
        }
    }

    /// Number of changepoints.
    pub fn m(&self) -> usize {
        self.tau.len()
    }

    /// Start of segment `l`.
    pub fn seg_start(&self, l: usize) -> usize {
        if l == 0 {
            0
        } else {
            self.tau[l - 1]
        }
    }

    /// One past the end of segment `l`.
    pub fn seg_end(&self, l: usize, n: usize) -> usize {
        if l == self.tau.len() {
            n
        } else {
            self.tau[l]
        }
    }

    /// `[start, end)` of every segment.
    pub fn bounds(&self, n: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.tau.len()).map(move |l| (self.seg_start(l), self.seg_end(l, n)))
    }

    /// Structural check: ordering, bounds and parameter count.
    /// Segments must be non-empty; `min_len` tightens that.
    pub fn check(&self, n: usize, min_len: usize) -> Result<()> {
        let min_len = min_len.max(1);
        if self.segments.len() != self.tau.len() + 1 {
            return Err(Error::InvalidState(format!(
                "{} changepoints need {} segments, found {}",
                self.tau.len(),
                self.tau.len() + 1,
                self.segments.len()
            )));
        }
        let mut prev = 0;
        for (i, &c) in self.tau.iter().enumerate() {
            if c < 1 || c + 1 > n {
                return Err(Error::InvalidState(format!(
                    "changepoint {c} outside 1..={}",
                    n.saturating_sub(1)
                )));
            }
            if i > 0 && c <= prev {
                return Err(Error::InvalidState(format!(
                    "changepoints not strictly increasing at position {i}"
                )));
            }
            prev = c;
        }
        if let Some((a, b)) = self.bounds(n).find(|(a, b)| b - a < min_len) {
            return Err(Error::InvalidState(format!(
                "segment [{a}, {b}) shorter than {min_len}"
            )));
        }
        Ok(())
    }
}

/// Log-density of the location-scale Student-t.
pub fn student_t_logpdf(x: f64, mu: f64, sigma2: f64, nu: f64) -> f64 {
    let z2 = (x - mu) * (x - mu) / sigma2;
    t_log_norm(sigma2, nu) - 0.5 * (nu + 1.0) * (z2 / nu).ln_1p()
}

fn t_log_norm(sigma2: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln() - 0.5 * sigma2.ln()
}

/// Sum of Student-t log-densities over `values`.
pub fn segment_loglik(values: &[f64], params: &SegmentParams) -> f64 {
    let SegmentParams { mu, sigma2, nu } = *params;
    let inv = 1.0 / (nu * sigma2);
    let tail: f64 = values
        .iter()
        .map(|&v| {
            let d = v - mu;
            (d * d * inv).ln_1p()
        })
        .sum();
    values.len() as f64 * t_log_norm(sigma2, nu) - 0.5 * (nu + 1.0) * tail
}

/// Likelihood of the whole series under `state`.
pub fn total_loglik(y: &[f64], state: &ChainState) -> Result<f64> {
    state.check(y.len(), 1)?;
    Ok(state
        .bounds(y.len())
        .zip(&state.segments)
        .map(|((a, b), p)| segment_loglik(&y[a..b], p))
        .sum())
}

/// Hyperparameters of the segment and changepoint priors.
///
/// * `mu ~ N(mu_mean, mu_var)`
/// * `sigma2 ~ Scaled-Inv-chi2(sigma2_df, sigma2_scale)`
/// * `nu ~ U[nu_min, nu_max]`
/// * `M ~ Bin(n - 1, expected_changepoints / (n - 1))`
/// * `tau | M` uniform over admissible placements
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub sigma2_df: f64,
    pub sigma2_scale: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub expected_changepoints: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_var: 1.0,
            sigma2_df: 5.0,
            sigma2_scale: 0.4 * 0.4,
            nu_min: 2.0,
            nu_max: 100.0,
            expected_changepoints: 0.5,
        }
    }
}

impl PriorSpec {
    pub fn log_mu(&self, mu: f64) -> f64 {
        let d = mu - self.mu_mean;
        -0.5 * (2.0 * PI * self.mu_var).ln() - 0.5 * d * d / self.mu_var
    }

    pub fn log_sigma2(&self, sigma2: f64) -> f64 {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return f64::NEG_INFINITY;
        }
        let half = 0.5 * self.sigma2_df;
        half * (half * self.sigma2_scale).ln()
            - ln_gamma(half)
            - (1.0 + half) * sigma2.ln()
            - half * self.sigma2_scale / sigma2
    }

    pub fn sample_mu<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mu_mean + self.mu_var.sqrt() * z
    }

    /// Draw from the scaled inverse chi-square prior on `sigma2`.
    pub fn sample_sigma2<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x: f64 = ChiSquared::new(self.sigma2_df).expect("positive prior df").sample(rng);
        self.sigma2_df * self.sigma2_scale / x
    }

    pub fn log_nu(&self, nu: f64) -> f64 {
        if nu >= self.nu_min && nu <= self.nu_max {
            -(self.nu_max - self.nu_min).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn log_params(&self, p: &SegmentParams) -> f64 {
        let s = self.log_sigma2(p.sigma2) + self.log_nu(p.nu);
        if s == f64::NEG_INFINITY {
            return s;
        }
        s + self.log_mu(p.mu)
    }

    /// Binomial log-mass of `m` changepoints for a series of length `n`.
    pub fn log_m(&self, m: usize, n: usize) -> f64 {
        let trials = n.saturating_sub(1);
        if m > trials || trials == 0 {
            return if m == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let p = (self.expected_changepoints / trials as f64).min(1.0);
        let mut lp = ln_binomial(trials as u64, m as u64);
        if m > 0 {
            lp += m as f64 * p.ln();
        }
        if trials > m {
            lp += (trials - m) as f64 * (-p).ln_1p();
        }
        lp
    }

    /// Uniform log-mass of one placement of `m` changepoints.
    pub fn log_tau(&self, m: usize, n: usize) -> f64 {
        match admissible_placements_ln(m, n) {
            Some(ln_count) => -ln_count,
            None => f64::NEG_INFINITY,
        }
    }
}

/// Log of the number of ways to place `m` changepoints in `n` samples with
/// every segment at least [`MIN_SEGMENT_LEN`] long, or `None` if impossible.
pub fn admissible_placements_ln(m: usize, n: usize) -> Option<f64> {
    let need = MIN_SEGMENT_LEN * (m + 1);
    if n < need {
        return None;
    }
    // Compositions of n into m + 1 parts, each >= L: C(n - (L-1)(m+1) - 1, m).
    let top = n - (MIN_SEGMENT_LEN - 1) * (m + 1) - 1;
    Some(ln_binomial(top as u64, m as u64))
}

/// Joint log-prior of a state for a series of length `n`.
/// Out-of-support parameters give negative infinity.
pub fn log_prior(state: &ChainState, priors: &PriorSpec, n: usize) -> f64 {
    let mut lp = priors.log_m(state.m(), n) + priors.log_tau(state.m(), n);
    for p in &state.segments {
        lp += priors.log_params(p);
        if lp == f64::NEG_INFINITY {
            break;
        }
    }
    lp
}
