//! Reference computations that share no accumulation code with the solvers:
//! everything here works on raw (unsymmetrized) matrices with plain loops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{derive_seed, sample_sparse_signal};
use crate::measure::{data_matrix, sample_ensemble, MeasurementEnsemble, MeasurementSet, Storage};

/// Outcome of one bound-type check: `pass ⇔ observed ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub observed: f64,
    pub bound: f64,
    pub detail: String,
}

impl CheckReport {
    pub fn new(name: &str, observed: f64, bound: f64, detail: String) -> Self {
        Self { name: name.to_string(), pass: observed <= bound, observed, bound, detail }
    }

    /// The same check re-judged against `bound · factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self::new(&self.name, self.observed, self.bound * factor, self.detail.clone())
    }
}

/// `y_i = Σ_p Σ_q A_i[p][q] x_p x_q` over explicit row-major `n x n` matrices.
pub fn brute_force_forward(n: usize, matrices: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    matrices
        .iter()
        .map(|a| {
            if a.len() != n * n {
                return Err(Error::DimensionMismatch { expected: n * n, got: a.len() });
            }
            let mut y = 0.0;
            for p in 0..n {
                for q in 0..n {
                    y += a[p * n + q] * x[p] * x[q];
                }
            }
            Ok(y)
        })
        .collect()
}

fn raw_matrices(ens: &MeasurementEnsemble) -> Result<Vec<Vec<f64>>> {
    (0..ens.m()).map(|i| ens.raw_matrix(i)).collect()
}

fn loss_from_raw(n: usize, raw: &[Vec<f64>], y: &[f64], z: &[f64]) -> Result<f64> {
    let q = brute_force_forward(n, raw, z)?;
    Ok(q.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (4.0 * y.len() as f64))
}

/// Central differences of `f(z) = (1/4m) Σ (zᵀA_i z − y_i)²`, with the loss
/// evaluated on the raw matrices.
pub fn finite_diff_loss_gradient(set: &MeasurementSet, z: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let n = set.n();
    if z.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z.len() });
    }
    let raw = raw_matrices(&set.ensemble)?;
    (0..n)
        .map(|j| {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[j] += h;
            zm[j] -= h;
            Ok((loss_from_raw(n, &raw, &set.y, &zp)? - loss_from_raw(n, &raw, &set.y, &zm)?) / (2.0 * h))
        })
        .collect()
}

/// Two-sided standard normal quantile `z` with `P(|Z| > z) = p`.
pub fn normal_two_sided_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid / std::f64::consts::SQRT_2) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided tail mass of a 3σ interval, `P(|Z| > 3)`.
pub fn three_sigma_tail() -> f64 {
    libm::erfc(3.0 / std::f64::consts::SQRT_2)
}

/// Per-entry statistics of `S̃_in − xxᵀ` on the distinct entries `p ≤ q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationDeviation {
    /// `max |S̃_pq − x_p x_q|` for the library's data matrix.
    pub max_abs: f64,
    /// `max |S̃_pq − x_p x_q| / se_pq` with `se_pq` the sample standard
    /// deviation of `y_i ã^{(i)}_pq` over `√m` (0/0 counts as 0).
    pub max_standardized: f64,
    /// `max |S̃_lib − S̃_ref|` against an independent raw-matrix accumulation.
    pub reference_gap: f64,
}

/// Compares the data matrix built by the library with its expectation
/// `xxᵀ`, standardizing each entry by an independently computed standard
/// error.
pub fn expectation_deviation(n: usize, m: usize, seed: u64, x: &[f64]) -> Result<ExpectationDeviation> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let set = MeasurementSet::simulate(sample_ensemble(n, m, seed, None)?, x.to_vec())?;
    let s = data_matrix(&set)?;
    let mut sum = vec![0.0; n * n];
    let mut sq = vec![0.0; n * n];
    for i in 0..m {
        let a = set.ensemble.raw_matrix(i)?;
        let y = brute_force_forward(n, std::slice::from_ref(&a), x)?[0];
        for p in 0..n {
            for q in p..n {
                let v = y * 0.5 * (a[p * n + q] + a[q * n + p]);
                sum[p * n + q] += v;
                sq[p * n + q] += v * v;
            }
        }
    }
    let mf = m as f64;
    let mut out = ExpectationDeviation { max_abs: 0.0, max_standardized: 0.0, reference_gap: 0.0 };
    for p in 0..n {
        for q in p..n {
            let mean = sum[p * n + q] / mf;
            let var = ((sq[p * n + q] - mf * mean * mean) / (mf - 1.0)).max(0.0);
            let se = (var / mf).sqrt();
            let dev = (s[p * n + q] - x[p] * x[q]).abs();
            out.max_abs = out.max_abs.max(dev);
            out.reference_gap = out.reference_gap.max((s[p * n + q] - mean).abs());
            if dev > 0.0 {
                out.max_standardized = out.max_standardized.max(dev / se);
            }
        }
    }
    Ok(out)
}

/// Checks `E[S̃_in] = xxᵀ` entrywise. The envelope is 3σ-equivalent
/// family-wise: each of the `n(n+1)/2` distinct entries must lie within
/// `z·se` where `P(|Z| > z) = P(|Z| > 3) / (n(n+1)/2)`.
pub fn expectation_check(n: usize, m_large: usize, seed: u64, x: &[f64]) -> Result<CheckReport> {
    if m_large < 10_000 {
        return Err(Error::InvalidParameter(format!("expectation check needs m >= 10000, got {m_large}")));
    }
    let dev = expectation_deviation(n, m_large, seed, x)?;
    let entries = (n * (n + 1) / 2) as f64;
    let z = normal_two_sided_quantile(three_sigma_tail() / entries);
    Ok(CheckReport::new(
        "expectation",
        dev.max_standardized,
        z,
        format!(
            "n = {n}, m = {m_large}, seed = {seed}: max |S - xx^T| = {:.3e}, gap to reference accumulation = {:.1e}",
            dev.max_abs, dev.reference_gap
        ),
    ))
}

/// `(mean y_i²)^{1/4}` with `y` from the raw matrices.
fn phi_from_raw(ens: &MeasurementEnsemble, x: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..ens.m() {
        let y = brute_force_forward(ens.n(), &[ens.raw_matrix(i)?], x)?[0];
        acc += y * y;
    }
    Ok((acc / ens.m() as f64).powf(0.25))
}

/// `max |φ − 1|` over `seeds` unit-norm signals (`n`, `m` fixed).
pub fn phi_concentration(n: usize, m: usize, seeds: &[u64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &s in seeds {
        let x = sample_sparse_signal(n, n.min(10), derive_seed(s, &[0]), true)?.values;
        let ens = MeasurementEnsemble::with_storage(n, m, derive_seed(s, &[1]), Storage::Streamed)?;
        worst = worst.max((phi_from_raw(&ens, &x)? - 1.0).abs());
    }
    Ok(worst)
}

/// `max_l |I_l − x_l²| · √(m / ln n)` for one unit-norm `k`-sparse signal.
pub fn score_deviation(n: usize, k: usize, m: usize, seed: u64) -> Result<f64> {
    let x = sample_sparse_signal(n, k, derive_seed(seed, &[0]), true)?.values;
    let ens = MeasurementEnsemble::with_storage(n, m, derive_seed(seed, &[1]), Storage::Streamed)?;
    let mut scores = vec![0.0; n];
    for i in 0..m {
        let a = ens.raw_matrix(i)?;
        let y = brute_force_forward(n, std::slice::from_ref(&a), &x)?[0];
        for (l, s) in scores.iter_mut().enumerate() {
            *s += y * a[l * n + l];
        }
    }
    let worst = scores.iter().zip(&x).map(|(s, xl)| (s / m as f64 - xl * xl).abs()).fold(0.0, f64::max);
    Ok(worst * (m as f64 / (n as f64).ln()).sqrt())
}

/// Band for `φ` at `n = 100`, `m = 1000`.
pub const PHI_BAND: f64 = 0.1;
/// Calibrated constant `c` of `|I_l − x_l²| ≤ c √(ln n / m)` at
/// `n = 500`, `k = 5`, `m = 500`: the pilot over seeds
/// `derive_seed(s, [1])`, `s = 0..20`, peaked at 1.59; frozen with a 25%
/// margin.
pub const SCORE_CONSTANT: f64 = 2.0;

/// Concentration checks for the norm estimate and the support scores.
pub fn concentration_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let seeds: Vec<u64> = (0..50).map(|j| derive_seed(seed, &[0, j])).collect();
    let phi = phi_concentration(100, 1000, &seeds)?;
    let score = score_deviation(500, 5, 500, derive_seed(seed, &[1]))?;
    Ok(vec![
        CheckReport::new(
            "phi_concentration",
            phi,
            PHI_BAND,
            format!("max |phi - 1| over 50 unit-norm signals, n = 100, m = 1000 (seed {seed})"),
        ),
        CheckReport::new(
            "support_score_concentration",
            score,
            SCORE_CONSTANT,
            format!("max_l |I_l - x_l^2| * sqrt(m / ln n), n = 500, k = 5, m = 500 (seed {seed})"),
        ),
    ])
}
