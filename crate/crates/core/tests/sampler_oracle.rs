mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use airway_cpd_core::posterior::pooled_histogram;
use airway_cpd_core::sampler::{run_chain, Kernel, MoveKind, SamplerConfig};
use airway_cpd_core::segment_model::{ChainState, PriorSpec, SegmentParams};
use airway_cpd_core::series_prep::LogDiffSeries;

use common::*;

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

fn step_signal(seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let t = StudentT::new(10.0).unwrap();
    (0..100)
        .map(|i| if i < 50 { 0.0 } else { 3.0 } + 0.1 * t.sample(&mut r))
        .collect()
}

fn prior_ln(p: &SegmentParams) -> f64 {
    if p.sigma2 <= 0.0 || !(2.0..=100.0).contains(&p.nu) {
        return f64::NEG_INFINITY;
    }
    normal_ln(p.mu, 0.0, 1.0) + sinvchi2_ln(p.sigma2, 5.0, 0.16) - 98f64.ln()
}

fn loglik(y: &[f64], p: &SegmentParams) -> f64 {
    y.iter().map(|&v| t_ln(v, p.mu, p.sigma2, p.nu)).sum()
}

fn mean_var(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    (m, y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn step_signal_puts_one_changepoint_at_the_step() {
    let y = LogDiffSeries::new(step_signal(5));
    let cfg = SamplerConfig {
        seed: 3,
        ..SamplerConfig::default()
    };
    let trace = run_chain(&y, &PriorSpec::default(), &cfg).unwrap();
    let mut counts = [0usize; 11];
    for s in &trace.samples {
        counts[s.state.m()] += 1;
    }
    let modal = (0..counts.len()).max_by_key(|&m| counts[m]).unwrap();
    assert_eq!(modal, 1, "M counts {counts:?}");
    let h = pooled_histogram(&trace, 100).unwrap();
    let near: f64 = h.mass[48..=52].iter().sum();
    assert!(near > 0.8, "tau mass within 2 of 50: {near}");
}

#[test]
fn two_point_params_acceptance_matches_monte_carlo() {
    let y = [0.1, -0.2];
    let cfg = SamplerConfig {
        epsilon: 0.1,
        epsilon_sigma2: Some(0.1),
        epsilon_nu: Some(0.1),
        ..SamplerConfig::default()
    };
    let kernel = Kernel::new(&y, PriorSpec::default(), &cfg).unwrap();
    let theta = SegmentParams::new(0.0, 0.1, 5.0);
    let start = kernel.walker(ChainState::single(theta)).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let draws = 10_000;
    let mut accepted = 0;
    for _ in 0..draws {
        let mut w = start.clone();
        if kernel.move_resample_params(&mut w, &mut r).accepted() {
            accepted += 1;
        }
    }
    let empirical = accepted as f64 / draws as f64;

    let mut r = ChaCha8Rng::seed_from_u64(10);
    let base = loglik(&y, &theta) + prior_ln(&theta);
    let mc_draws = 200_000;
    let mut alpha = 0.0;
    for _ in 0..mc_draws {
        let p = SegmentParams::new(
            theta.mu + 0.1 * gauss(&mut r),
            theta.sigma2 + 0.1 * gauss(&mut r),
            theta.nu + 0.1 * gauss(&mut r),
        );
        let lp = prior_ln(&p);
        if lp > f64::NEG_INFINITY {
            alpha += (loglik(&y, &p) + lp - base).exp().min(1.0);
        }
    }
    alpha /= mc_draws as f64;
    assert!(
        (empirical - alpha).abs() <= 0.02,
        "empirical {empirical} vs oracle {alpha}"
    );
}

/// Birth/death proposal density for one segment's `(mu, sigma2)`.
fn ln_q(mu: f64, sigma2: f64, mean: f64, var: f64, mix: f64) -> f64 {
    let local = (1.0 - mix) * (normal_ln(mu, mean, 0.04) + normal_ln(sigma2, var, 0.0025)).exp();
    let prior = if sigma2 > 0.0 {
        mix * (normal_ln(mu, 0.0, 1.0) + sinvchi2_ln(sigma2, 5.0, 0.16)).exp()
    } else {
        0.0
    };
    (local + prior).ln()
}

#[test]
fn birth_ratio_matches_independent_formula() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let n = 12;
    let y: Vec<f64> = (0..n)
        .map(|i| if i < 6 { 0.0 } else { 0.4 } + 0.2 * gauss(&mut r))
        .collect();
    for mix in [0.0, 0.25] {
        let cfg = SamplerConfig {
            k_max: 3,
            epsilon: 0.2,
            epsilon_sigma2: Some(0.05),
            epsilon_nu: Some(4.0),
            prior_mix: mix,
            ..SamplerConfig::default()
        };
        let kernel = Kernel::new(&y, PriorSpec::default(), &cfg).unwrap();
        let old = SegmentParams::new(0.2, 0.06, 20.0);
        let w = kernel.walker(ChainState::single(old)).unwrap();
        let mut checked = 0;
        for _ in 0..200 {
            let Some(prop) = kernel.propose_birth(w.state(), &mut r) else {
                continue;
            };
            let got = kernel.birth_log_ratio(&w, &prop);
            let c = prop.position;
            let u = prop.nu_offset;
            let left = SegmentParams::new(prop.mu_left, prop.sigma2_left, old.nu + u);
            let right = SegmentParams::new(prop.mu_right, prop.sigma2_right, old.nu - u);
            let (lp_l, lp_r) = (prior_ln(&left), prior_ln(&right));
            if lp_l == f64::NEG_INFINITY || lp_r == f64::NEG_INFINITY {
                assert_eq!(got, f64::NEG_INFINITY);
                continue;
            }
            let p = 0.5 / (n - 1) as f64;
            let prior_m = ((n - 1) as f64 * p / (1.0 - p)).ln();
            let prior_tau = -((n - 3) as f64).ln();
            let post =
                loglik(&y[..c], &left) + loglik(&y[c..], &right) - loglik(&y, &old) + prior_m + prior_tau + lp_l + lp_r
                    - prior_ln(&old);
            let (ml, vl) = mean_var(&y[..c]);
            let (mr, vr) = mean_var(&y[c..]);
            let (ma, va) = mean_var(&y);
            let forward = (0.5f64).ln() - ((n - 3) as f64).ln()
                + ln_q(left.mu, left.sigma2, ml, vl, mix)
                + ln_q(right.mu, right.sigma2, mr, vr, mix)
                + normal_ln(u, 0.0, 16.0);
            let reverse = (0.25f64).ln() + ln_q(old.mu, old.sigma2, ma, va, mix);
            let expected = post + reverse - forward + 2f64.ln();
            assert!(
                (got - expected).abs() < 1e-9,
                "mix {mix}, position {c}: {got} vs {expected}"
            );
            checked += 1;
        }
        assert!(checked > 50, "only {checked} proposals inside the support");
    }
}

#[test]
fn pinned_single_changepoint_matches_enumeration() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let n = 40;
    let y: Vec<f64> = (0..n)
        .map(|i| if i < 22 { 0.0 } else { 0.5 } + 0.3 * gauss(&mut r))
        .collect();

    let positions: Vec<usize> = (2..=n - 2).collect();
    let segs: Vec<(usize, usize)> = positions.iter().flat_map(|&c| [(0, c), (c, n)]).collect();
    let ev = segment_log_evidence(&y, &segs);
    let lp: Vec<f64> = ev.chunks(2).map(|z| z[0] + z[1]).collect();
    let top = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut exact = vec![0.0; n];
    for (&c, wc) in positions.iter().zip(&w) {
        exact[c] = wc / total;
    }

    let cfg = SamplerConfig {
        k_max: 1,
        epsilon: 0.2,
        epsilon_sigma2: Some(0.05),
        epsilon_nu: Some(20.0),
        lambda: 2.0,
        ..SamplerConfig::default()
    };
    let kernel = Kernel::new(&y, PriorSpec::default(), &cfg).unwrap();
    let init = ChainState {
        tau: vec![8],
        segments: vec![SegmentParams::new(0.0, 0.1, 10.0); 2],
    };
    let mut walker = kernel.walker(init).unwrap();
    let iterations = 400_000;
    let mut hist = vec![0.0; n];
    for it in 0..iterations {
        let kind = if r.random::<bool>() {
            MoveKind::Params
        } else {
            MoveKind::Shift
        };
        kernel.apply_move(kind, &mut walker, &mut r);
        assert_eq!(walker.state().m(), 1);
        if it >= iterations / 4 {
            hist[walker.state().tau[0]] += 1.0;
        }
    }
    let s: f64 = hist.iter().sum();
    hist.iter_mut().for_each(|v| *v /= s);
    let tv = total_variation(&hist, &exact);
    assert!(tv <= 0.1, "TV {tv}");
}

#[test]
fn iid_noise_count_posterior_matches_enumeration() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let n = 20;
    let y: Vec<f64> = (0..n).map(|_| 0.3 * gauss(&mut r)).collect();
    let exact = enumerate_posterior(&y, 2);
    let cfg = SamplerConfig {
        iterations: 500_000,
        k_max: 2,
        epsilon: 0.3,
        epsilon_sigma2: Some(0.15),
        epsilon_nu: Some(20.0),
        lambda: 2.0,
        seed: 8,
        ..SamplerConfig::default()
    };
    let trace = run_chain(&LogDiffSeries::new(y), &PriorSpec::default(), &cfg).unwrap();
    let mut pm = vec![0.0; 3];
    for s in &trace.samples {
        pm[s.state.m()] += 1.0 / trace.samples.len() as f64;
    }
    let tv = total_variation(&pm, &exact.p_m);
    assert!(tv <= 0.1, "sampled {pm:?} vs exact {:?}", exact.p_m);
}

#[test]
fn stored_states_are_valid_and_evenly_thinned() {
    let y = LogDiffSeries::new(step_signal(6));
    let cfg = SamplerConfig {
        iterations: 2_000,
        thin: 7,
        k_max: 4,
        seed: 1,
        ..SamplerConfig::default()
    };
    let trace = run_chain(&y, &PriorSpec::default(), &cfg).unwrap();
    assert_eq!(trace.samples.len(), cfg.stored_count());
    for pair in trace.samples.windows(2) {
        assert_eq!(pair[1].iter - pair[0].iter, 7);
    }
    for s in &trace.samples {
        assert!(s.iter >= cfg.burn_in());
        assert!(s.state.m() <= 4);
        s.state.check(100, 2).unwrap();
    }
    let dispatched: u64 = MoveKind::ALL.iter().map(|&k| trace.stats.get(k).dispatched).sum();
    assert_eq!(dispatched, 2_000);
}
