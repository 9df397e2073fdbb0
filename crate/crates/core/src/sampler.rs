//! Reversible-jump Metropolis-Hastings over `(M, tau, theta)`.
//!
//! Each iteration draws one of four moves uniformly among those admissible
//! at the current changepoint count:
//!
//! * resample the parameters of every segment (Gaussian random walk),
//! * shift one changepoint by a signed Poisson step and perturb the
//!   parameters of its two neighbouring segments,
//! * birth: split a segment at a uniformly drawn admissible position,
//!   centring the new `mu`/`sigma2` proposals on the empirical mean and
//!   variance of each half and splitting `nu` as `nu +- u` (Jacobian 2),
//! * death: merge two neighbouring segments, centring the proposals on the
//!   merged data and averaging the two `nu` (Jacobian 1/2).
//!
//! In both dimension-changing moves each new segment's `(mu, sigma2)` is
//! drawn from the prior instead with probability `prior_mix`, and the
//! mixture density enters the ratio.
//!
//! Death at `M = 0` and birth at `M = k_max` are never drawn; the
//! state-dependent move probabilities enter the dimension-changing ratios.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment_model::{segment_loglik, ChainState, PriorSpec, SegmentParams, MIN_SEGMENT_LEN};
use crate::series_prep::LogDiffSeries;

/// Variance floor applied to empirical segment variances.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    #[default]
    StudentT,
    /// Constant likelihood; the chain then samples the prior.
    Flat,
}

/// Standard deviations of the Gaussian perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub mu: f64,
    pub sigma2: f64,
    pub nu: f64,
}

impl ProposalScales {
    pub fn uniform(eps: f64) -> Self {
        Self {
            mu: eps,
            sigma2: eps,
            nu: eps,
        }
    }
}

/// Default perturbation scales. They give roughly 50% parameter and 30%
/// shift acceptance on 0.1-scale log-difference noise.
pub const DEFAULT_EPSILON_MU: f64 = 0.02;
pub const DEFAULT_EPSILON_SIGMA2: f64 = 0.002;
pub const DEFAULT_EPSILON_NU: f64 = 3.0;

/// Probability that a birth or death draws a segment's `(mu, sigma2)` from
/// the prior instead of around the segment's empirical statistics. Without
/// it a short segment whose parameters have wandered away from its data
/// can essentially never be merged again.
pub const DEFAULT_PRIOR_MIX: f64 = 0.25;

fn default_prior_mix() -> f64 {
    DEFAULT_PRIOR_MIX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub thin: usize,
    pub k_max: usize,
    /// Perturbation scale for `mu`; also used for `sigma2` and `nu` when
    /// their own scales are unset.
    pub epsilon: f64,
    pub epsilon_sigma2: Option<f64>,
    pub epsilon_nu: Option<f64>,
    /// Poisson rate of changepoint shifts.
    pub lambda: f64,
    pub seed: u64,
    #[serde(default)]
    pub likelihood: Likelihood,
    #[serde(default = "default_prior_mix")]
    pub prior_mix: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 100_000,
            burn_in_fraction: 0.25,
            thin: 5,
            k_max: 10,
            epsilon: DEFAULT_EPSILON_MU,
            epsilon_sigma2: Some(DEFAULT_EPSILON_SIGMA2),
            epsilon_nu: Some(DEFAULT_EPSILON_NU),
            lambda: 1.0,
            seed: 0,
            likelihood: Likelihood::StudentT,
            prior_mix: DEFAULT_PRIOR_MIX,
        }
    }
}

impl SamplerConfig {
    pub fn scales(&self) -> ProposalScales {
        ProposalScales {
            mu: self.epsilon,
            sigma2: self.epsilon_sigma2.unwrap_or(self.epsilon),
            nu: self.epsilon_nu.unwrap_or(self.epsilon),
        }
    }

    pub fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.iterations as f64).floor() as usize
    }

    /// Number of states a run stores.
    pub fn stored_count(&self) -> usize {
        (self.iterations - self.burn_in()) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad("burn-in fraction must lie in [0, 1)");
        }
        if self.thin == 0 {
            return bad("thinning stride must be at least 1");
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1");
        }
        if !(0.0..1.0).contains(&self.prior_mix) {
            return bad("prior mixing weight must lie in [0, 1)");
        }
        let s = self.scales();
        for (name, v) in [
            ("epsilon", s.mu),
            ("epsilon_sigma2", s.sigma2),
            ("epsilon_nu", s.nu),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Params,
    Shift,
    Birth,
    Death,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Params, MoveKind::Shift, MoveKind::Birth, MoveKind::Death];

    pub fn admissible(self, m: usize, k_max: usize) -> bool {
        match self {
            MoveKind::Params => true,
            MoveKind::Shift | MoveKind::Death => m >= 1,
            MoveKind::Birth => m < k_max,
        }
    }
}

/// Moves admissible with `m` changepoints, in dispatch order.
pub fn admissible_moves(m: usize, k_max: usize) -> Vec<MoveKind> {
    MoveKind::ALL.into_iter().filter(|k| k.admissible(m, k_max)).collect()
}

/// Probability of dispatching `kind` with `m` changepoints.
pub fn move_probability(kind: MoveKind, m: usize, k_max: usize) -> f64 {
    if !kind.admissible(m, k_max) {
        return 0.0;
    }
    1.0 / admissible_moves(m, k_max).len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Rejected,
    /// No admissible proposal existed (e.g. nowhere to split).
    Inadmissible,
}

impl Outcome {
    pub fn accepted(self) -> bool {
        self == Outcome::Accepted
    }
}

/// Chain state together with its cached per-segment log-likelihoods.
#[derive(Debug, Clone)]
pub struct Walker {
    state: ChainState,
    seg_ll: Vec<f64>,
}

impl Walker {
    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn into_state(self) -> ChainState {
        self.state
    }

    pub fn loglik(&self) -> f64 {
        self.seg_ll.iter().sum()
    }
}

/// Birth proposal: split the segment containing `position`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthProposal {
    pub position: usize,
    pub mu_left: f64,
    pub sigma2_left: f64,
    pub mu_right: f64,
    pub sigma2_right: f64,
    /// `nu_left = nu + nu_offset`, `nu_right = nu - nu_offset`.
    pub nu_offset: f64,
}

/// Death proposal: remove changepoint `index` and give the merged segment
/// the proposed `mu`/`sigma2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeathProposal {
    pub index: usize,
    pub mu: f64,
    pub sigma2: f64,
}

/// Split `nu` into roughly `(nu + u, nu - u)` such that [`merge_nu`]
/// recovers `nu` bit for bit whenever `|u| <= nu`. The side pushed away
/// from `nu` is rounded; the other is `2 nu` minus it, which is exact there.
pub fn split_nu(nu: f64, u: f64) -> (f64, f64) {
    if !u.is_finite() {
        return (f64::NAN, f64::NAN);
    }
    if u >= 0.0 {
        let left = nu + u;
        (left, 2.0 * nu - left)
    } else {
        let right = nu - u;
        (2.0 * nu - right, right)
    }
}

pub fn merge_nu(left: f64, right: f64) -> f64 {
    0.5 * (left + right)
}

/// Mean and unbiased variance (floored) of a segment.
pub fn empirical_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.max(VARIANCE_FLOOR))
}

fn ln_normal(x: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * PI * sd * sd).ln() - 0.5 * x * x / (sd * sd)
}

/// Number of birth positions inside a segment of length `len`.
fn split_positions(len: usize) -> usize {
    (len + 1).saturating_sub(2 * MIN_SEGMENT_LEN)
}

/// Transition kernel for one series.
pub struct Kernel<'a> {
    y: &'a [f64],
    priors: PriorSpec,
    likelihood: Likelihood,
    prior_mix: f64,
    k_max: usize,
    scales: ProposalScales,
    shift: Poisson<f64>,
}

impl<'a> Kernel<'a> {
    pub fn new(y: &'a [f64], priors: PriorSpec, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        let shift = Poisson::new(config.lambda).map_err(|e| Error::InvalidConfig(format!("lambda: {e}")))?;
        Ok(Self {
            y,
            priors,
            likelihood: config.likelihood,
            prior_mix: config.prior_mix,
            k_max: config.k_max,
            scales: config.scales(),
            shift,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    fn seg_ll(&self, a: usize, b: usize, p: &SegmentParams) -> f64 {
        match self.likelihood {
            Likelihood::StudentT => segment_loglik(&self.y[a..b], p),
            Likelihood::Flat => 0.0,
        }
    }

    fn stats(&self, a: usize, b: usize) -> (f64, f64) {
        empirical_stats(&self.y[a..b])
    }

    /// Wrap a state, validating it against this series.
    pub fn walker(&self, state: ChainState) -> Result<Walker> {
        state.check(self.n(), MIN_SEGMENT_LEN)?;
        if state.m() > self.k_max {
            return Err(Error::InvalidState(format!(
                "{} changepoints exceed k_max = {}",
                state.m(),
                self.k_max
            )));
        }
        let seg_ll = state
            .bounds(self.n())
            .zip(&state.segments)
            .map(|((a, b), p)| self.seg_ll(a, b, p))
            .collect();
        Ok(Walker { state, seg_ll })
    }

    fn perturb<R: Rng + ?Sized>(&self, p: &SegmentParams, rng: &mut R) -> SegmentParams {
        let z = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
        SegmentParams {
            mu: p.mu + self.scales.mu * z(rng),
            sigma2: p.sigma2 + self.scales.sigma2 * z(rng),
            nu: p.nu + self.scales.nu * z(rng),
        }
    }

    /// Draw `(mu, sigma2)` for a new segment with data mean `mean` and
    /// variance `var`.
    fn draw_location_scale<R: Rng + ?Sized>(&self, mean: f64, var: f64, rng: &mut R) -> (f64, f64) {
        if self.prior_mix > 0.0 && rng.random::<f64>() < self.prior_mix {
            return (self.priors.sample_mu(rng), self.priors.sample_sigma2(rng));
        }
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        (mean + self.scales.mu * z1, var + self.scales.sigma2 * z2)
    }

    /// Log density of [`Self::draw_location_scale`].
    fn ln_q(&self, mu: f64, sigma2: f64, mean: f64, var: f64) -> f64 {
        let local = ln_normal(mu - mean, self.scales.mu) + ln_normal(sigma2 - var, self.scales.sigma2);
        if self.prior_mix == 0.0 {
            return local;
        }
        let a = (1.0 - self.prior_mix).ln() + local;
        let b = self.prior_mix.ln() + self.priors.log_mu(mu) + self.priors.log_sigma2(sigma2);
        let hi = a.max(b);
        if hi == f64::NEG_INFINITY {
            return hi;
        }
        hi + ((a - hi).exp() + (b - hi).exp()).ln()
    }

    fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
        if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
            return false;
        }
        if log_ratio >= 0.0 {
            return true;
        }
        let u: f64 = rng.random();
        u <= log_ratio.exp()
    }

    // ------------------------------------------------------------------
    // Parameter resampling
    // ------------------------------------------------------------------

    /// Log acceptance ratio for replacing every segment's parameters.
    /// Returns the ratio and the new per-segment log-likelihoods.
    pub fn resample_log_ratio(&self, w: &Walker, proposed: &[SegmentParams]) -> (f64, Vec<f64>) {
        let mut lp = 0.0;
        for (new, old) in proposed.iter().zip(&w.state.segments) {
            let p = self.priors.log_params(new);
            if p == f64::NEG_INFINITY {
                return (p, Vec::new());
            }
            lp += p - self.priors.log_params(old);
        }
        let n = self.n();
        let new_ll: Vec<f64> = w
            .state
            .bounds(n)
            .zip(proposed)
            .map(|((a, b), p)| self.seg_ll(a, b, p))
            .collect();
        let dll: f64 = new_ll.iter().sum::<f64>() - w.loglik();
        (dll + lp, new_ll)
    }

    pub fn move_resample_params<R: Rng + ?Sized>(&self, w: &mut Walker, rng: &mut R) -> Outcome {
        let proposed: Vec<SegmentParams> = w.state.segments.iter().map(|p| self.perturb(p, rng)).collect();
        let (log_ratio, new_ll) = self.resample_log_ratio(w, &proposed);
        if Self::accept(log_ratio, rng) {
            w.state.segments = proposed;
            w.seg_ll = new_ll;
            Outcome::Accepted
        } else {
            Outcome::Rejected
        }
    }

    // ------------------------------------------------------------------
    // Changepoint shift
    // ------------------------------------------------------------------

    /// Log acceptance ratio for moving changepoint `index` to `position`
    /// with new neighbouring parameters. Negative infinity if the position
    /// violates ordering or the minimum segment length.
    pub fn shift_log_ratio(
        &self,
        w: &Walker,
        index: usize,
        position: usize,
        left: &SegmentParams,
        right: &SegmentParams,
    ) -> (f64, [f64; 2]) {
        let n = self.n();
        let st = &w.state;
        let a = st.seg_start(index);
        let b = st.seg_end(index + 1, n);
        if position < a + MIN_SEGMENT_LEN || position + MIN_SEGMENT_LEN > b {
            return (f64::NEG_INFINITY, [0.0; 2]);
        }
        let lp_new = self.priors.log_params(left) + self.priors.log_params(right);
        if lp_new == f64::NEG_INFINITY {
            return (lp_new, [0.0; 2]);
        }
        let lp_old = self.priors.log_params(&st.segments[index]) + self.priors.log_params(&st.segments[index + 1]);
        let ll = [self.seg_ll(a, position, left), self.seg_ll(position, b, right)];
        let dll = ll[0] + ll[1] - w.seg_ll[index] - w.seg_ll[index + 1];
        (dll + lp_new - lp_old, ll)
    }

    pub fn move_shift_changepoint<R: Rng + ?Sized>(&self, w: &mut Walker, rng: &mut R) -> Outcome {
        let m = w.state.m();
        assert!(m >= 1, "shift dispatched with no changepoints");
        let index = rng.random_range(0..m);
        let step = self.shift.sample(rng) as i64;
        let sign = if rng.random_bool(0.5) { -1 } else { 1 };
        let target = w.state.tau[index] as i64 + sign * step;
        let left = self.perturb(&w.state.segments[index], rng);
        let right = self.perturb(&w.state.segments[index + 1], rng);
        if target < 0 {
            return Outcome::Rejected;
        }
        let position = target as usize;
        let (log_ratio, ll) = self.shift_log_ratio(w, index, position, &left, &right);
        if Self::accept(log_ratio, rng) {
            w.state.tau[index] = position;
            w.state.segments[index] = left;
            w.state.segments[index + 1] = right;
            w.seg_ll[index] = ll[0];
            w.seg_ll[index + 1] = ll[1];
            Outcome::Accepted
        } else {
            Outcome::Rejected
        }
    }

    // ------------------------------------------------------------------
    // Birth / death
    // ------------------------------------------------------------------

    /// Total number of admissible birth positions in `state`.
    pub fn birth_positions(&self, state: &ChainState) -> usize {
        state.bounds(self.n()).map(|(a, b)| split_positions(b - a)).sum()
    }

    fn segment_of(state: &ChainState, position: usize) -> usize {
        state.tau.partition_point(|&c| c <= position)
    }

    /// Log acceptance ratio of a birth. Negative infinity when the
    /// proposal is not admissible or leaves the prior support.
    pub fn birth_log_ratio(&self, w: &Walker, prop: &BirthProposal) -> f64 {
        let n = self.n();
        let st = &w.state;
        let m = st.m();
        if m >= self.k_max {
            return f64::NEG_INFINITY;
        }
        let l = Self::segment_of(st, prop.position);
        let (a, b) = (st.seg_start(l), st.seg_end(l, n));
        let c = prop.position;
        if c < a + MIN_SEGMENT_LEN || c + MIN_SEGMENT_LEN > b {
            return f64::NEG_INFINITY;
        }
        let old = st.segments[l];
        let (nu_l, nu_r) = split_nu(old.nu, prop.nu_offset);
        let left = SegmentParams::new(prop.mu_left, prop.sigma2_left, nu_l);
        let right = SegmentParams::new(prop.mu_right, prop.sigma2_right, nu_r);
        let lp_new = self.priors.log_params(&left) + self.priors.log_params(&right);
        if lp_new == f64::NEG_INFINITY {
            return lp_new;
        }

        let dll = self.seg_ll(a, c, &left) + self.seg_ll(c, b, &right) - w.seg_ll[l];
        let dprior = self.priors.log_m(m + 1, n) - self.priors.log_m(m, n) + self.priors.log_tau(m + 1, n)
            - self.priors.log_tau(m, n)
            + lp_new
            - self.priors.log_params(&old);

        let (mean_ab, var_ab) = self.stats(a, b);
        let (mean_l, var_l) = self.stats(a, c);
        let (mean_r, var_r) = self.stats(c, b);
        let u = 0.5 * (nu_l - nu_r);
        let s = &self.scales;
        let forward = move_probability(MoveKind::Birth, m, self.k_max).ln() - (self.birth_positions(st) as f64).ln()
            + self.ln_q(left.mu, left.sigma2, mean_l, var_l)
            + self.ln_q(right.mu, right.sigma2, mean_r, var_r)
            + ln_normal(u, s.nu);
        let reverse = move_probability(MoveKind::Death, m + 1, self.k_max).ln() - ((m + 1) as f64).ln()
            + self.ln_q(old.mu, old.sigma2, mean_ab, var_ab);

        dll + dprior + reverse - forward + LN_2
    }

    pub fn apply_birth(&self, state: &ChainState, prop: &BirthProposal) -> ChainState {
        let l = Self::segment_of(state, prop.position);
        let (nu_l, nu_r) = split_nu(state.segments[l].nu, prop.nu_offset);
        let mut next = state.clone();
        next.tau.insert(l, prop.position);
        next.segments[l] = SegmentParams::new(prop.mu_left, prop.sigma2_left, nu_l);
        next.segments
            .insert(l + 1, SegmentParams::new(prop.mu_right, prop.sigma2_right, nu_r));
        next
    }

    /// Draw a birth proposal, or `None` if no segment can be split.
    pub fn propose_birth<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Option<BirthProposal> {
        let total = self.birth_positions(state);
        if total == 0 {
            return None;
        }
        let mut k = rng.random_range(0..total);
        let n = self.n();
        let mut position = 0;
        for (a, b) in state.bounds(n) {
            let here = split_positions(b - a);
            if k < here {
                position = a + MIN_SEGMENT_LEN + k;
                break;
            }
            k -= here;
        }
        let l = Self::segment_of(state, position);
        let (a, b) = (state.seg_start(l), state.seg_end(l, n));
        let (mean_l, var_l) = self.stats(a, position);
        let (mean_r, var_r) = self.stats(position, b);
        let (mu_left, sigma2_left) = self.draw_location_scale(mean_l, var_l, rng);
        let (mu_right, sigma2_right) = self.draw_location_scale(mean_r, var_r, rng);
        let z: f64 = rng.sample(StandardNormal);
        Some(BirthProposal {
            position,
            mu_left,
            sigma2_left,
            mu_right,
            sigma2_right,
            nu_offset: self.scales.nu * z,
        })
    }

    pub fn move_birth<R: Rng + ?Sized>(&self, w: &mut Walker, rng: &mut R) -> Outcome {
        let Some(prop) = self.propose_birth(&w.state, rng) else {
            return Outcome::Inadmissible;
        };
        let log_ratio = self.birth_log_ratio(w, &prop);
        if Self::accept(log_ratio, rng) {
            let n = self.n();
            let l = Self::segment_of(&w.state, prop.position);
            let (a, b) = (w.state.seg_start(l), w.state.seg_end(l, n));
            w.state = self.apply_birth(&w.state, &prop);
            let ll_l = self.seg_ll(a, prop.position, &w.state.segments[l]);
            let ll_r = self.seg_ll(prop.position, b, &w.state.segments[l + 1]);
            w.seg_ll[l] = ll_l;
            w.seg_ll.insert(l + 1, ll_r);
            Outcome::Accepted
        } else {
            Outcome::Rejected
        }
    }

    /// Log acceptance ratio of a death.
    pub fn death_log_ratio(&self, w: &Walker, prop: &DeathProposal) -> f64 {
        let n = self.n();
        let st = &w.state;
        let m = st.m();
        if m == 0 || prop.index >= m {
            return f64::NEG_INFINITY;
        }
        let j = prop.index;
        let (a, c, b) = (st.seg_start(j), st.tau[j], st.seg_end(j + 1, n));
        let left = st.segments[j];
        let right = st.segments[j + 1];
        let merged = SegmentParams::new(prop.mu, prop.sigma2, merge_nu(left.nu, right.nu));
        let lp_new = self.priors.log_params(&merged);
        if lp_new == f64::NEG_INFINITY {
            return lp_new;
        }

        let dll = self.seg_ll(a, b, &merged) - w.seg_ll[j] - w.seg_ll[j + 1];
        let dprior = self.priors.log_m(m - 1, n) - self.priors.log_m(m, n) + self.priors.log_tau(m - 1, n)
            - self.priors.log_tau(m, n)
            + lp_new
            - self.priors.log_params(&left)
            - self.priors.log_params(&right);

        let (mean_ab, var_ab) = self.stats(a, b);
        let (mean_l, var_l) = self.stats(a, c);
        let (mean_r, var_r) = self.stats(c, b);
        let merged_positions =
            self.birth_positions(st) + split_positions(b - a) - split_positions(c - a) - split_positions(b - c);
        let u = 0.5 * (left.nu - right.nu);
        let s = &self.scales;
        let forward = move_probability(MoveKind::Death, m, self.k_max).ln() - (m as f64).ln()
            + self.ln_q(merged.mu, merged.sigma2, mean_ab, var_ab);
        let reverse = move_probability(MoveKind::Birth, m - 1, self.k_max).ln() - (merged_positions as f64).ln()
            + self.ln_q(left.mu, left.sigma2, mean_l, var_l)
            + self.ln_q(right.mu, right.sigma2, mean_r, var_r)
            + ln_normal(u, s.nu);

        dll + dprior + reverse - forward - LN_2
    }

    pub fn apply_death(&self, state: &ChainState, prop: &DeathProposal) -> ChainState {
        let j = prop.index;
        let nu = merge_nu(state.segments[j].nu, state.segments[j + 1].nu);
        let mut next = state.clone();
        next.tau.remove(j);
        next.segments.remove(j + 1);
        next.segments[j] = SegmentParams::new(prop.mu, prop.sigma2, nu);
        next
    }

    pub fn propose_death<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> DeathProposal {
        let m = state.m();
        assert!(m >= 1, "death dispatched with no changepoints");
        let index = rng.random_range(0..m);
        let (a, b) = (state.seg_start(index), state.seg_end(index + 1, self.n()));
        let (mean, var) = self.stats(a, b);
        let (mu, sigma2) = self.draw_location_scale(mean, var, rng);
        DeathProposal { index, mu, sigma2 }
    }

    pub fn move_death<R: Rng + ?Sized>(&self, w: &mut Walker, rng: &mut R) -> Outcome {
        let prop = self.propose_death(&w.state, rng);
        let log_ratio = self.death_log_ratio(w, &prop);
        if Self::accept(log_ratio, rng) {
            let j = prop.index;
            let (a, b) = (w.state.seg_start(j), w.state.seg_end(j + 1, self.n()));
            w.state = self.apply_death(&w.state, &prop);
            w.seg_ll[j] = self.seg_ll(a, b, &w.state.segments[j]);
            w.seg_ll.remove(j + 1);
            Outcome::Accepted
        } else {
            Outcome::Rejected
        }
    }

    /// Dispatch one move drawn uniformly from the admissible ones.
    pub fn step<R: Rng + ?Sized>(&self, w: &mut Walker, rng: &mut R) -> (MoveKind, Outcome) {
        let moves = admissible_moves(w.state.m(), self.k_max);
        let kind = moves[rng.random_range(0..moves.len())];
        (kind, self.apply_move(kind, w, rng))
    }

    pub fn apply_move<R: Rng + ?Sized>(&self, kind: MoveKind, w: &mut Walker, rng: &mut R) -> Outcome {
        match kind {
            MoveKind::Params => self.move_resample_params(w, rng),
            MoveKind::Shift => self.move_shift_changepoint(w, rng),
            MoveKind::Birth => self.move_birth(w, rng),
            MoveKind::Death => self.move_death(w, rng),
        }
    }
}

/// Dispatch and acceptance counts for one move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub dispatched: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// Rejections caused by the absence of any admissible proposal.
    pub inadmissible: u64,
}

impl MoveCounts {
    pub fn acceptance_rate(&self) -> f64 {
        if self.dispatched == 0 {
            0.0
        } else {
            self.accepted as f64 / self.dispatched as f64
        }
    }

    fn record(&mut self, outcome: Outcome) {
        self.dispatched += 1;
        match outcome {
            Outcome::Accepted => self.accepted += 1,
            Outcome::Rejected => self.rejected += 1,
            Outcome::Inadmissible => {
                self.rejected += 1;
                self.inadmissible += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub params: MoveCounts,
    pub shift: MoveCounts,
    pub birth: MoveCounts,
    pub death: MoveCounts,
}

impl MoveStats {
    pub fn get(&self, kind: MoveKind) -> &MoveCounts {
        match kind {
            MoveKind::Params => &self.params,
            MoveKind::Shift => &self.shift,
            MoveKind::Birth => &self.birth,
            MoveKind::Death => &self.death,
        }
    }

    fn get_mut(&mut self, kind: MoveKind) -> &mut MoveCounts {
        match kind {
            MoveKind::Params => &mut self.params,
            MoveKind::Shift => &mut self.shift,
            MoveKind::Birth => &mut self.birth,
            MoveKind::Death => &mut self.death,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredState {
    pub iter: usize,
    #[serde(flatten)]
    pub state: ChainState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub samples: Vec<StoredState>,
    pub stats: MoveStats,
    pub config: SamplerConfig,
    pub n: usize,
    /// The series had (near) zero variance and the variance floor was used.
    pub degenerate_init: bool,
}

/// Zero changepoints with the empirical mean and variance of the series.
/// `nu` comes from the moment estimate `4 + 6 / excess kurtosis`.
pub fn initial_state(y: &[f64], priors: &PriorSpec) -> (ChainState, bool) {
    let (mean, var) = empirical_stats(y);
    let n = y.len() as f64;
    let m2 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = y.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let excess = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    let nu = if excess > 0.0 {
        4.0 + 6.0 / excess
    } else {
        priors.nu_max
    };
    let nu = nu.clamp(priors.nu_min, priors.nu_max);
    let degenerate = m2 * n / (n - 1.0).max(1.0) < VARIANCE_FLOOR;
    (ChainState::single(SegmentParams::new(mean, var, nu)), degenerate)
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run the reversible-jump chain on `y`, discarding the burn-in and keeping
/// every `thin`-th state after it.
pub fn run_chain(y: &LogDiffSeries, priors: &PriorSpec, config: &SamplerConfig) -> Result<ChainTrace> {
    config.validate()?;
    let need = 2 * MIN_SEGMENT_LEN;
    if y.len() < need {
        return Err(Error::InsufficientLength {
            required: need,
            actual: y.len(),
        });
    }
    let kernel = Kernel::new(&y.y, *priors, config)?;
    let (init, degenerate_init) = initial_state(&y.y, priors);
    let mut walker = kernel.walker(init)?;
    let mut rng = rng_for(config.seed, 0);

    let burn_in = config.burn_in();
    let mut stats = MoveStats::default();
    let mut samples = Vec::with_capacity(config.stored_count());
    for iter in 0..config.iterations {
        let (kind, outcome) = kernel.step(&mut walker, &mut rng);
        stats.get_mut(kind).record(outcome);
        if iter >= burn_in && (iter - burn_in + 1).is_multiple_of(config.thin) {
            samples.push(StoredState {
                iter,
                state: walker.state.clone(),
            });
        }
    }
    Ok(ChainTrace {
        samples,
        stats,
        config: config.clone(),
        n: y.len(),
        degenerate_init,
    })
}
