//! Sparse prior: spectral initialization with support estimation and
//! thresholded Wirtinger flow (TWF). Plain Wirtinger flow is the `β = 0` case
//! and also has a separate reference implementation ([`solve_wf`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, leading_eigenpair, nonzeros, norm2, sym_matvec_quad};
use crate::measure::{data_matrix, diagonal_scores, MeasurementSet};
use crate::metrics::relative_distance;
use crate::recovery::{RecoveryResult, Status, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Hard,
    Soft,
}

/// Schedule for the thresholding parameter β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BetaSchedule {
    Constant {
        beta: f64,
    },
    /// `β_t = initial · factor^⌊t / period⌋`.
    Damped {
        initial: f64,
        factor: f64,
        period: usize,
    },
}

impl BetaSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            BetaSchedule::Constant { beta } => beta,
            BetaSchedule::Damped { initial, factor, period } => initial * factor.powi((t / period) as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Constant { beta } if beta >= 0.0 => Ok(()),
            BetaSchedule::Damped { initial, factor, period }
                if initial >= 0.0 && factor > 0.0 && factor <= 1.0 && period >= 1 =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParameter(format!("invalid beta schedule {self:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparseConfig {
    /// Support-threshold multiplier α.
    pub alpha: f64,
    pub beta: BetaSchedule,
    /// Step size µ (scaled by 1/φ² inside the update).
    pub step_size: f64,
    pub iterations: usize,
    pub threshold: ThresholdKind,
    /// Stop once `‖x_{t+1} − x_t‖ / max(‖x_t‖, 1e-30)` drops below this.
    pub early_stop_tol: Option<f64>,
}

impl Default for SparseConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: BetaSchedule::Damped { initial: 0.5, factor: 0.5, period: 1000 },
            step_size: 0.1,
            iterations: 4000,
            threshold: ThresholdKind::Soft,
            early_stop_tol: None,
        }
    }
}

impl SparseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidParameter(format!("step size must be > 0, got {}", self.step_size)));
        }
        if let Some(tol) = self.early_stop_tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidParameter(format!("early-stop tolerance must be > 0, got {tol}")));
            }
        }
        self.beta.validate()
    }
}

/// Iterate state of the thresholded gradient phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseState {
    pub t: usize,
    pub x: Vec<f64>,
    /// Norm estimate, frozen at initialization.
    pub phi: f64,
    pub support0: Vec<usize>,
    pub trace: Vec<TraceRecord>,
}

/// `φ = (mean y_i²)^{1/4}`, an estimate of `‖x‖₂`.
pub fn estimate_norm(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    ms.sqrt().sqrt()
}

/// `I_l = (1/m) Σ y_i a^{(i)}_ll`.
pub fn support_scores(set: &MeasurementSet) -> Vec<f64> {
    diagonal_scores(set)
}

/// `{l : I_l > α φ² √(log n / m)}`, falling back to the first argmax of `I`
/// when nothing passes.
pub fn estimate_support(scores: &[f64], phi: f64, alpha: f64, n: usize, m: usize) -> Vec<usize> {
    let level = alpha * phi * phi * ((n as f64).ln() / m as f64).sqrt();
    let support: Vec<usize> = scores.iter().enumerate().filter(|(_, s)| **s > level).map(|(l, _)| l).collect();
    if !support.is_empty() {
        return support;
    }
    let mut best = 0;
    for (l, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = l;
        }
    }
    vec![best]
}

/// Output of the spectral initializer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInit {
    pub x0: Vec<f64>,
    pub support: Vec<usize>,
    pub phi: f64,
    pub eigenvalue: f64,
}

/// Sufficient statistics of the spectral initializers for one data set.
#[derive(Debug, Clone)]
pub struct SpectralStatistics {
    pub n: usize,
    pub m: usize,
    pub phi: f64,
    pub scores: Vec<f64>,
    /// Full `S̃_in`, row-major.
    pub data_matrix: Vec<f64>,
}

impl SpectralStatistics {
    pub fn from_set(set: &MeasurementSet) -> Result<Self> {
        Ok(Self {
            n: set.n(),
            m: set.m(),
            phi: estimate_norm(&set.y),
            scores: support_scores(set),
            data_matrix: data_matrix(set)?,
        })
    }

    /// Support-restricted initializer (`Some(α)`) or the unrestricted one.
    pub fn initializer(&self, alpha: Option<f64>) -> Result<SpectralInit> {
        let n = self.n;
        let support = match alpha {
            Some(a) => estimate_support(&self.scores, self.phi, a, n, self.m),
            None => (0..n).collect(),
        };
        let s = support.len();
        let mut sub = vec![0.0; s * s];
        for (a, &p) in support.iter().enumerate() {
            for (b, &q) in support.iter().enumerate() {
                sub[a * s + b] = self.data_matrix[p * n + q];
            }
        }
        embed_leading(&sub, &support, n, self.phi)
    }
}

fn embed_leading(sub: &[f64], support: &[usize], n: usize, phi: f64) -> Result<SpectralInit> {
    let eig = leading_eigenpair(sub, support.len())?;
    let mut v = vec![0.0; n];
    for (a, &p) in support.iter().enumerate() {
        v[p] = eig.vector[a];
    }
    // Sign convention on the embedded vector (same coordinates, same order).
    crate::linalg::normalize_sign(&mut v);
    Ok(SpectralInit { x0: v.iter().map(|c| phi * c).collect(), support: support.to_vec(), phi, eigenvalue: eig.value })
}

/// `[S̃_in]_{S,S}` without forming the full matrix. Bit-identical to the
/// corresponding block of [`data_matrix`].
fn restricted_data_matrix(set: &MeasurementSet, support: &[usize]) -> Vec<f64> {
    let n = set.n();
    let m = set.m();
    let s = support.len();
    let mut sum = vec![0.0; s * s];
    let ens = &set.ensemble;
    let cheap_isolated = ens.storage() == crate::measure::Storage::Streamed && 3 * s * s < n * n;
    if cheap_isolated {
        for i in 0..m {
            for (a, &p) in support.iter().enumerate() {
                for (b, &q) in support.iter().enumerate() {
                    sum[a * s + b] += set.y[i] * ens.sym_entry(i, p, q);
                }
            }
        }
    } else {
        ens.for_each_sym(0..m, |i, mat| {
            for (a, &p) in support.iter().enumerate() {
                for (b, &q) in support.iter().enumerate() {
                    sum[a * s + b] += set.y[i] * mat[p * n + q];
                }
            }
        });
    }
    sum.iter().map(|v| v / m as f64).collect()
}

/// Spectral initialization restricted to the estimated support.
pub fn spectral_init(set: &MeasurementSet, alpha: f64) -> Result<SpectralInit> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    let phi = estimate_norm(&set.y);
    let scores = support_scores(set);
    let support = estimate_support(&scores, phi, alpha, set.n(), set.m());
    let sub = restricted_data_matrix(set, &support);
    embed_leading(&sub, &support, set.n(), phi)
}

/// Standard spectral initialization on the full data matrix.
pub fn spectral_init_unrestricted(set: &MeasurementSet) -> Result<SpectralInit> {
    let n = set.n();
    let phi = estimate_norm(&set.y);
    let s = data_matrix(set)?;
    embed_leading(&s, &(0..n).collect::<Vec<_>>(), n, phi)
}

/// Entrywise thresholding; `|a| ≤ τ` maps to zero for both kinds.
pub fn threshold(v: &[f64], tau: f64, kind: ThresholdKind) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            if a.abs() > tau {
                match kind {
                    ThresholdKind::Hard => a,
                    ThresholdKind::Soft => a.signum() * (a.abs() - tau),
                }
            } else {
                0.0
            }
        })
        .collect()
}

/// Residuals and loss gradient at one point, from a single pass.
#[derive(Debug, Clone)]
pub struct LossEval {
    /// `r_i = zᵀA_i z − y_i`.
    pub residuals: Vec<f64>,
    /// `∇f(z) = (1/m) Σ r_i Ã_i z`.
    pub gradient: Vec<f64>,
}

impl LossEval {
    pub fn residual_norm(&self) -> f64 {
        norm2(&self.residuals)
    }

    /// `f(z) = (1/4m) Σ r_i²`.
    pub fn loss(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum::<f64>() / (4.0 * self.residuals.len() as f64)
    }

    /// `[β/m² Σ r_i²]^{1/2} · ‖z‖₂`.
    pub fn threshold_level(&self, z: &[f64], beta: f64) -> f64 {
        let m = self.residuals.len() as f64;
        let ss: f64 = self.residuals.iter().map(|r| r * r).sum();
        (beta / (m * m) * ss).sqrt() * norm2(z)
    }
}

pub fn evaluate(set: &MeasurementSet, z: &[f64]) -> Result<LossEval> {
    let n = set.n();
    if z.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z.len() });
    }
    let m = set.m();
    let support = nonzeros(z);
    let mut residuals = vec![0.0; m];
    let mut grad = vec![0.0; n];
    if !support.is_empty() {
        let mut w = vec![0.0; n];
        set.ensemble.for_each_sym(0..m, |i, mat| {
            let r = sym_matvec_quad(mat, n, z, &support, &mut w) - set.y[i];
            residuals[i] = r;
            axpy(r, &w, &mut grad);
        });
    } else {
        for (r, y) in residuals.iter_mut().zip(&set.y) {
            *r = -y;
        }
    }
    grad.iter_mut().for_each(|g| *g /= m as f64);
    Ok(LossEval { residuals, gradient: grad })
}

/// `∇f(z) = (1/m) Σ (zᵀA_i z − y_i) Ã_i z`.
pub fn gradient(set: &MeasurementSet, z: &[f64]) -> Result<Vec<f64>> {
    Ok(evaluate(set, z)?.gradient)
}

/// `τ(z) = [β/m² Σ (zᵀA_i z − y_i)²]^{1/2} · ‖z‖₂`.
pub fn threshold_level(set: &MeasurementSet, z: &[f64], beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
    }
    Ok(evaluate(set, z)?.threshold_level(z, beta))
}

fn trace_record(set: &MeasurementSet, t: usize, x: &[f64], residual_norm: f64) -> TraceRecord {
    TraceRecord {
        t,
        residual_norm,
        nnz: x.iter().filter(|v| **v != 0.0).count(),
        rel_dist: set.truth.as_deref().and_then(|truth| relative_distance(x, truth).ok()),
    }
}

/// One TWF update:
/// `x_{t+1} = T_{(µ/φ²)τ(x_t)}(x_t − (µ/φ²)∇f(x_t))`.
pub fn twf_step(set: &MeasurementSet, mut state: SparseState, cfg: &SparseConfig) -> Result<SparseState> {
    if !(state.phi > 0.0) {
        return Err(Error::InvalidParameter(format!("phi must be > 0, got {}", state.phi)));
    }
    let eval = evaluate(set, &state.x)?;
    let beta = cfg.beta.at(state.t);
    let scale = cfg.step_size / (state.phi * state.phi);
    let tau = eval.threshold_level(&state.x, beta);
    let mut candidate = state.x.clone();
    axpy(-scale, &eval.gradient, &mut candidate);
    let next = threshold(&candidate, scale * tau, cfg.threshold);
    state.trace.push(trace_record(set, state.t, &state.x, eval.residual_norm()));
    // A NaN level would silently zero every entry, so check it too.
    if !tau.is_finite() || candidate.iter().chain(&next).any(|v| !v.is_finite()) {
        return Err(Error::Diverged(Box::new(state)));
    }
    state.x = next;
    state.t += 1;
    Ok(state)
}

fn relative_update(prev: &[f64], next: &[f64]) -> f64 {
    let diff: f64 = prev.iter().zip(next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    diff / norm2(prev).max(1e-30)
}

fn finish(
    set: &MeasurementSet,
    initial: Vec<f64>,
    mut state: SparseState,
    status: Status,
    iterations: usize,
) -> Result<RecoveryResult> {
    let r = evaluate(set, &state.x)?.residual_norm();
    state.trace.push(trace_record(set, state.t, &state.x, r));
    Ok(RecoveryResult { estimate: state.x, initial, trace: state.trace, status, iterations })
}

/// Thresholded gradient phase from a given initializer.
pub fn refine_twf(set: &MeasurementSet, init: &SpectralInit, cfg: &SparseConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    let mut state = SparseState {
        t: 0,
        x: init.x0.clone(),
        phi: init.phi,
        support0: init.support.clone(),
        trace: Vec::with_capacity(cfg.iterations + 1),
    };
    if cfg.iterations > 0 && !(init.phi > 0.0) {
        // All measurements vanish; the zero vector is the only sensible answer.
        return finish(set, init.x0.clone(), state, Status::Completed, 0);
    }
    for _ in 0..cfg.iterations {
        let prev = state.x.clone();
        state = match twf_step(set, state, cfg) {
            Ok(s) => s,
            Err(Error::Diverged(last)) => {
                let last = *last;
                let t = last.t;
                return Ok(RecoveryResult {
                    estimate: last.x,
                    initial: init.x0.clone(),
                    trace: last.trace,
                    status: Status::Diverged,
                    iterations: t,
                });
            }
            Err(e) => return Err(e),
        };
        if let Some(tol) = cfg.early_stop_tol {
            if relative_update(&prev, &state.x) < tol {
                let t = state.t;
                return finish(set, init.x0.clone(), state, Status::EarlyStopped, t);
            }
        }
    }
    let t = state.t;
    finish(set, init.x0.clone(), state, Status::Completed, t)
}

/// Spectral initialization followed by `T` TWF steps.
pub fn solve_twf(set: &MeasurementSet, cfg: &SparseConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    let init = spectral_init(set, cfg.alpha)?;
    refine_twf(set, &init, cfg)
}

/// Plain Wirtinger flow update `x − (µ/φ²)∇f(x)`; reference for the `β = 0`
/// case of TWF.
pub fn wf_step(set: &MeasurementSet, x: &[f64], phi: f64, step_size: f64) -> Result<Vec<f64>> {
    let g = gradient(set, x)?;
    let scale = step_size / (phi * phi);
    Ok(x.iter().zip(&g).map(|(xi, gi)| xi - scale * gi).collect())
}

/// Plain Wirtinger flow from a given initializer.
pub fn refine_wf(
    set: &MeasurementSet,
    init: &SpectralInit,
    step_size: f64,
    iterations: usize,
) -> Result<RecoveryResult> {
    let mut x = init.x0.clone();
    let mut trace = Vec::with_capacity(iterations + 1);
    let mut status = Status::Completed;
    let mut done = 0;
    if init.phi > 0.0 {
        for t in 0..iterations {
            let eval = evaluate(set, &x)?;
            trace.push(trace_record(set, t, &x, eval.residual_norm()));
            let scale = step_size / (init.phi * init.phi);
            let next: Vec<f64> = x.iter().zip(&eval.gradient).map(|(xi, gi)| xi - scale * gi).collect();
            if next.iter().any(|v| !v.is_finite()) {
                status = Status::Diverged;
                break;
            }
            x = next;
            done = t + 1;
        }
    }
    if status != Status::Diverged {
        let r = evaluate(set, &x)?.residual_norm();
        trace.push(trace_record(set, done, &x, r));
    }
    Ok(RecoveryResult { estimate: x, initial: init.x0.clone(), trace, status, iterations: done })
}

/// Wirtinger flow with the same (support-restricted) initializer as TWF.
pub fn solve_wf(set: &MeasurementSet, alpha: f64, step_size: f64, iterations: usize) -> Result<RecoveryResult> {
    let init = spectral_init(set, alpha)?;
    refine_wf(set, &init, step_size, iterations)
}
