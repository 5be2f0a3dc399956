use proptest::prelude::*;
use quadrec::generative::check_step_condition;
use quadrec::harness::{derive_seed, sample_generative_truth};
use quadrec::linalg::{dot, norm2};
use quadrec::measure::sample_ensemble;
use quadrec::{
    default_w0, projected_power, relative_distance, solve_pgd, MeasurementSet, PgdConfig, ProjectionConfig,
    SubspaceModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const N: usize = 200;
const K: usize = 10;

fn measurements(factor: f64) -> usize {
    (factor * K as f64 * (N as f64).ln()).round() as usize
}

/// Calibrated constant of `‖ŵ/‖ŵ‖ − x‖ ≤ C √(k ln n / m)` at m = 5·k·ln n
/// with a start of correlation 0.5: pilot maximum over these 20 seeds was
/// 0.88; frozen with a 25% margin.
const RATE_CONSTANT: f64 = 1.1;

#[test]
fn power_estimate_error_follows_the_rate() {
    let model = SubspaceModel::new(0, N, K, 1.0).unwrap();
    let m = measurements(5.0);
    let rate = (K as f64 * (N as f64).ln() / m as f64).sqrt();
    for s in 0..20u64 {
        let x = sample_generative_truth(&model, true, derive_seed(s, &[0]));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, &[2]));
        let mut u: Vec<f64> = (0..N).map(|_| rng.sample(StandardNormal)).collect();
        let d = dot(&u, &x);
        u.iter_mut().zip(&x).for_each(|(a, b)| *a -= d * b);
        let nu = norm2(&u);
        let w0: Vec<f64> = x.iter().zip(&u).map(|(a, b)| 0.5 * a + 0.75f64.sqrt() * b / nu).collect();
        let set =
            MeasurementSet::simulate(sample_ensemble(N, m, derive_seed(s, &[1]), None).unwrap(), x.clone()).unwrap();
        let w = projected_power(&set, &model, &w0, &ProjectionConfig::default()).unwrap();
        let nw = norm2(&w);
        let err = w.iter().zip(&x).map(|(a, b)| (a / nw - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= RATE_CONSTANT * rate, "seed {s}: {err} > {}", RATE_CONSTANT * rate);
        assert!(dot(&w, &x) > 0.0, "seed {s}: sign flipped");
    }
}

/// Per-step contraction factor of PGD from the power estimate: pilot step
/// ratios over these 50 seeds had 90th percentile 0.956 and maximum 0.997.
const PGD_CONTRACTION: f64 = 0.98;

#[test]
fn pgd_refines_the_power_estimate() {
    let model = SubspaceModel::new(0, N, K, 1.0).unwrap();
    let m = measurements(10.0);
    let cfg = PgdConfig::default();
    let (mut accurate, mut contracting, mut steps) = (0, 0, 0);
    for s in 0..50u64 {
        let x = sample_generative_truth(&model, true, derive_seed(s, &[0]));
        let set =
            MeasurementSet::simulate(sample_ensemble(N, m, derive_seed(s, &[1]), None).unwrap(), x.clone()).unwrap();
        let w = projected_power(&set, &model, &default_w0(N), &cfg.projection).unwrap();
        let run = solve_pgd(&set, &model, &w, &cfg).unwrap();
        let start = relative_distance(&run.initial, &x).unwrap();
        let end = relative_distance(&run.estimate, &x).unwrap();
        assert!(end < start, "seed {s}: {end} !< {start}");
        accurate += (end <= 1e-3) as usize;
        for e in run.error_trace().windows(2) {
            steps += 1;
            contracting += (e[1] <= PGD_CONTRACTION * e[0] + 1e-12) as usize;
        }
        // No sign flip from a positively correlated start.
        if dot(&run.initial, &x) > 0.0 && end <= 1e-3 {
            assert!(dot(&run.estimate, &x) > 0.0, "seed {s}");
        }
    }
    assert!(accurate >= 40, "{accurate}/50 within 1e-3");
    assert!(contracting * 10 >= steps * 9, "{contracting}/{steps} contracting steps");
}

proptest! {
    #[test]
    fn step_condition_never_holds_far_from_the_truth(
        err in 2.0f64 / 7.0..4.0,
        mu in 1e-6f64..=1.0,
        eps in 1e-6f64..=0.5,
    ) {
        prop_assert!(!check_step_condition(err, mu, eps));
    }

    #[test]
    fn step_condition_is_monotone_in_the_error(
        a in 0.0f64..0.3,
        b in 0.0f64..0.3,
        mu in 1e-3f64..=1.0,
        eps in 1e-3f64..=0.5,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(!check_step_condition(hi, mu, eps) || check_step_condition(lo, mu, eps));
    }
}
