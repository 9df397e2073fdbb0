//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// Student-t log-density with location `mu`, squared scale `sigma2`.
pub fn t_ln(x: f64, mu: f64, sigma2: f64, nu: f64) -> f64 {
    let z2 = (x - mu) * (x - mu) / sigma2;
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * PI * sigma2).ln()
        - 0.5 * (nu + 1.0) * (1.0 + z2 / nu).ln()
}

pub fn normal_ln(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * (x - mean) * (x - mean) / var
}

/// Scaled inverse chi-square log-density.
pub fn sinvchi2_ln(x: f64, df: f64, scale: f64) -> f64 {
    let h = 0.5 * df;
    h * (h * scale).ln() - ln_gamma(h) - (1.0 + h) * x.ln() - h * scale / x
}

pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Every placement of `m` changepoints in `[2, n-2]` with gaps of at least 2.
pub fn placements(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, m: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        let left = m - cur.len();
        // The remaining changepoints each need two samples after them.
        let mut c = start;
        while c + 2 * left <= n {
            cur.push(c);
            rec(n, m, c + 2, cur, out);
            cur.pop();
            c += 1;
        }
    }
    let mut out = Vec::new();
    rec(n, m, 2, &mut Vec::new(), &mut out);
    out
}

/// Posterior over the number of changepoints and the pooled location
/// histogram, by enumerating every admissible configuration and integrating
/// segment parameters on a fixed grid: mu in steps of 0.025, 40 log-spaced
/// sigma2 values and 10 midpoint nu values.
pub struct Enumerated {
    pub p_m: Vec<f64>,
    pub p_tau: Vec<f64>,
}

/// Log evidence of each segment `[a, b)` of `y` with the segment
/// parameters integrated against their priors on the fixed grid.
pub fn segment_log_evidence(y: &[f64], segments: &[(usize, usize)]) -> Vec<f64> {
    let n = y.len();
    let mus: Vec<f64> = (0..=320).map(|j| -4.0 + 0.025 * j as f64).collect();
    let (ls_lo, ls_hi) = (0.002f64.ln(), 6f64.ln());
    let hs = (ls_hi - ls_lo) / 39.0;
    let sig2: Vec<f64> = (0..40).map(|k| (ls_lo + hs * k as f64).exp()).collect();
    let hn = 98.0 / 10.0;
    let nus: Vec<f64> = (0..10).map(|k| 2.0 + hn * (k as f64 + 0.5)).collect();

    let mut z = vec![f64::NEG_INFINITY; segments.len()];
    let mut prefix = vec![0.0; n + 1];
    for &nu in &nus {
        for &s2 in &sig2 {
            for &mu in &mus {
                let lw =
                    normal_ln(mu, 0.0, 1.0) + sinvchi2_ln(s2, 5.0, 0.16) - 98f64.ln() + (0.025 * hs * s2 * hn).ln();
                for i in 0..n {
                    prefix[i + 1] = prefix[i] + t_ln(y[i], mu, s2, nu);
                }
                for (zk, &(a, b)) in z.iter_mut().zip(segments) {
                    *zk = log_add(*zk, prefix[b] - prefix[a] + lw);
                }
            }
        }
    }
    z
}

pub fn enumerate_posterior(y: &[f64], k_max: usize) -> Enumerated {
    let n = y.len();
    let segs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 2..=n).map(move |b| (a, b))).collect();
    let ev = segment_log_evidence(y, &segs);
    let mut z = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    for (&(a, b), &e) in segs.iter().zip(&ev) {
        z[a][b] = e;
    }

    let p = 0.5 / (n - 1) as f64;
    let mut log_post_m = vec![f64::NEG_INFINITY; k_max + 1];
    let mut states: Vec<(Vec<usize>, f64)> = Vec::new();
    for (m, slot) in log_post_m.iter_mut().enumerate() {
        let all = placements(n, m);
        if all.is_empty() {
            continue;
        }
        let lprior =
            ln_choose(n - 1, m) + m as f64 * p.ln() + (n - 1 - m) as f64 * (1.0 - p).ln() - (all.len() as f64).ln();
        for tau in all {
            let mut bounds = vec![0];
            bounds.extend(&tau);
            bounds.push(n);
            let lp = lprior + bounds.windows(2).map(|w| z[w[0]][w[1]]).sum::<f64>();
            *slot = log_add(*slot, lp);
            states.push((tau, lp));
        }
    }
    let total = log_post_m.iter().fold(f64::NEG_INFINITY, |a, &b| log_add(a, b));
    let p_m: Vec<f64> = log_post_m.iter().map(|l| (l - total).exp()).collect();
    let mut p_tau = vec![0.0; n];
    for (tau, lp) in &states {
        let w = (lp - total).exp();
        for &c in tau {
            p_tau[c] += w;
        }
    }
    let s: f64 = p_tau.iter().sum();
    if s > 0.0 {
        for v in &mut p_tau {
            *v /= s;
        }
    }
    Enumerated { p_m, p_tau }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Chi-square goodness-of-fit p-value. Adjacent bins are pooled from the
/// left until every pooled expected count reaches 5.
pub fn chi_square_p(observed: &[f64], expected_prob: &[f64]) -> (f64, f64, usize) {
    let total: f64 = observed.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (ob, pr) in observed.iter().zip(expected_prob) {
        o += ob;
        e += pr * total;
        if e >= 5.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = bins.len().saturating_sub(1);
    if df == 0 {
        return (stat, 1.0, 0);
    }
    let p = 1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat);
    (stat, p, df)
}

/// Integrated autocorrelation time with Sokal's self-consistent window.
pub fn autocorr_time(x: &[f64]) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / (n as f64 * var);
        tau += 2.0 * c;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Brute-force two-changepoint least-squares search, costs from scratch.
pub fn exhaustive_pair(y: &[f64], min_dist: usize) -> (usize, usize, f64) {
    let n = y.len();
    let ss = |a: usize, b: usize| {
        let s = &y[a..b];
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    let mut best = (0, 0, f64::INFINITY);
    for k1 in min_dist..=n - 2 * min_dist {
        for k2 in k1 + min_dist..=n - min_dist {
            let c = ss(0, k1) + ss(k1, k2) + ss(k2, n);
            if c < best.2 {
                best = (k1, k2, c);
            }
        }
    }
    best
}
