//! Generative prior: range projections, the projected power method and
//! projected gradient descent (PGD).

mod relu;
mod subspace;

pub use relu::ReluDecoderModel;
pub use subspace::SubspaceModel;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2};
use crate::measure::{data_matrix, MeasurementSet};
use crate::metrics::relative_distance;
use crate::recovery::{RecoveryResult, Status, TraceRecord};
use crate::sparse::evaluate;

/// A decoder `G: 𝔹ᵏ(r) → ℝⁿ` with a projection onto its range.
pub trait GenerativeModel: Send + Sync {
    fn ambient_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn radius(&self) -> f64;

    /// Advertised Lipschitz constant; metadata only.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }

    /// `G(z)`; callers keep `‖z‖₂ ≤ r`.
    fn decode(&self, z: &[f64]) -> Vec<f64>;

    /// `‖G(z) − v‖²` and its gradient in `z`.
    fn objective_and_gradient(&self, z: &[f64], v: &[f64]) -> (f64, Vec<f64>);

    /// Distance by which `project(decode(z))` may miss `decode(z)`.
    fn projection_tolerance(&self) -> f64;

    /// Euclidean projection onto `G(𝔹ᵏ(r))`, approximate unless overridden.
    fn project(&self, v: &[f64], cfg: &ProjectionConfig) -> Result<Vec<f64>> {
        Ok(latent_project(self, v, cfg)?.point)
    }
}

/// Settings of the latent-space projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub steps: usize,
    pub step_size: f64,
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { steps: 100, step_size: 0.1, restarts: 5, restart_seed: 0 }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.restarts == 0 || !(self.step_size > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "projection needs steps >= 1, restarts >= 1 and a positive step size, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgdConfig {
    /// µ in (0, 1].
    pub step_size: f64,
    pub iterations: usize,
    /// Contraction margin ε for [`check_step_condition`]; diagnostic only.
    pub epsilon: f64,
    pub projection: ProjectionConfig,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self { step_size: 0.9, iterations: 10, epsilon: 0.05, projection: ProjectionConfig::default() }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidParameter(format!("PGD step size must lie in (0, 1], got {}", self.step_size)));
        }
        self.projection.validate()
    }
}

pub(crate) fn clip_to_ball(z: &mut [f64], r: f64) {
    let nrm = norm2(z);
    if nrm > r {
        let s = r / nrm;
        z.iter_mut().for_each(|v| *v *= s);
    }
}

/// Result of a latent-space projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentProjection {
    pub point: Vec<f64>,
    pub latent: Vec<f64>,
    pub objective: f64,
    /// Index of the winning restart.
    pub restart: usize,
}

/// Approximate `P_G(v)` by gradient descent on `z ↦ ‖G(z) − v‖²`.
///
/// Restart 0 starts at `z = 0`, the others uniformly in the latent ball
/// (seeded by `restart_seed`, one ChaCha stream per restart). Every step is
/// followed by clipping to the ball. The lowest final objective wins; ties go
/// to the lowest restart index.
pub fn latent_project<M: GenerativeModel + ?Sized>(
    model: &M,
    v: &[f64],
    cfg: &ProjectionConfig,
) -> Result<LatentProjection> {
    cfg.validate()?;
    if v.len() != model.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: model.ambient_dim(), got: v.len() });
    }
    let k = model.latent_dim();
    let r = model.radius();
    let base = ChaCha8Rng::seed_from_u64(cfg.restart_seed);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for restart in 0..cfg.restarts {
        let mut z = if restart == 0 {
            vec![0.0; k]
        } else {
            let mut rng = base.clone();
            rng.set_stream(restart as u64);
            uniform_in_ball(&mut rng, k, r)
        };
        for _ in 0..cfg.steps {
            let (_, g) = model.objective_and_gradient(&z, v);
            axpy(-cfg.step_size, &g, &mut z);
            clip_to_ball(&mut z, r);
        }
        let (obj, _) = model.objective_and_gradient(&z, v);
        if !obj.is_finite() {
            return Err(Error::ProjectionFailure { restart });
        }
        if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
            best = Some((obj, restart, z));
        }
    }
    let (objective, restart, latent) = best.expect("at least one restart");
    Ok(LatentProjection { point: model.decode(&latent), latent, objective, restart })
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, k: usize, r: f64) -> Vec<f64> {
    let mut z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let nrm = norm2(&z);
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / k as f64);
    z.iter_mut().for_each(|v| *v *= radius / nrm);
    z
}

/// The flat unit vector `(1/√n, …, 1/√n)`.
pub fn default_w0(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

fn check_unit(w0: &[f64]) -> Result<()> {
    let nrm = norm2(w0);
    if (nrm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("w0 must have unit norm, got {nrm}")));
    }
    Ok(())
}

/// `P_G(S w0)` for a given symmetric data matrix `S` (row-major `n x n`).
pub fn projected_power_from_matrix<M: GenerativeModel + ?Sized>(
    s: &[f64],
    model: &M,
    w0: &[f64],
    cfg: &ProjectionConfig,
) -> Result<Vec<f64>> {
    let n = model.ambient_dim();
    if w0.len() != n || s.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n, got: w0.len() });
    }
    check_unit(w0)?;
    let v = crate::linalg::matvec(s, n, n, w0);
    model.project(&v, cfg)
}

/// Projected power method: `ŵ = P_G(S̃_in w0)`.
pub fn projected_power<M: GenerativeModel + ?Sized>(
    set: &MeasurementSet,
    model: &M,
    w0: &[f64],
    cfg: &ProjectionConfig,
) -> Result<Vec<f64>> {
    if set.n() != model.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: model.ambient_dim(), got: set.n() });
    }
    if let Some(x) = &set.truth {
        if w0.len() == x.len() && dot(w0, x) <= 0.0 {
            log::warn!("w0 is not positively correlated with the truth (w0ᵀx = {})", dot(w0, x));
        }
    }
    let s = data_matrix(set)?;
    projected_power_from_matrix(&s, model, w0, cfg)
}

/// Step-size condition `2 − (2 − 7‖x0 − x‖)µ < 1 − 2ε` for the PGD
/// contraction guarantee, meant for `µ ∈ (0, 1]`, `ε ∈ (0, ½]`.
pub fn check_step_condition(x0_err: f64, step_size: f64, epsilon: f64) -> bool {
    2.0 - (2.0 - 7.0 * x0_err) * step_size < 1.0 - 2.0 * epsilon
}

fn pgd_trace(set: &MeasurementSet, t: usize, x: &[f64], residual_norm: f64) -> TraceRecord {
    TraceRecord {
        t,
        residual_norm,
        nnz: x.iter().filter(|v| **v != 0.0).count(),
        rel_dist: set.truth.as_deref().and_then(|truth| relative_distance(x, truth).ok()),
    }
}

/// One PGD update `P_G(x − µ∇f(x))` for an `x` already in the range.
pub fn pgd_step<M: GenerativeModel + ?Sized>(
    set: &MeasurementSet,
    model: &M,
    x: &[f64],
    cfg: &PgdConfig,
) -> Result<Vec<f64>> {
    let eval = evaluate(set, x)?;
    step_from_gradient(model, x, &eval.gradient, cfg)
}

fn step_from_gradient<M: GenerativeModel + ?Sized>(
    model: &M,
    x: &[f64],
    grad: &[f64],
    cfg: &PgdConfig,
) -> Result<Vec<f64>> {
    if grad.iter().all(|g| *g == 0.0) {
        // x is in the range already and P_G fixes the range.
        return Ok(x.to_vec());
    }
    let mut v = x.to_vec();
    axpy(-cfg.step_size, grad, &mut v);
    if v.iter().any(|c| !c.is_finite()) {
        return Ok(v);
    }
    model.project(&v, &cfg.projection)
}

/// Projected gradient descent from `x0` (projected once onto the range).
pub fn solve_pgd<M: GenerativeModel + ?Sized>(
    set: &MeasurementSet,
    model: &M,
    x0: &[f64],
    cfg: &PgdConfig,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    if x0.len() != set.n() || set.n() != model.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: set.n(), got: x0.len() });
    }
    let initial = model.project(x0, &cfg.projection)?;
    let mut x = initial.clone();
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    for t in 0..cfg.iterations {
        let eval = evaluate(set, &x)?;
        trace.push(pgd_trace(set, t, &x, eval.residual_norm()));
        let next = step_from_gradient(model, &x, &eval.gradient, cfg)?;
        if next.iter().any(|c| !c.is_finite()) {
            return Ok(RecoveryResult { estimate: x, initial, trace, status: Status::Diverged, iterations: t });
        }
        x = next;
    }
    let r = evaluate(set, &x)?.residual_norm();
    trace.push(pgd_trace(set, cfg.iterations, &x, r));
    Ok(RecoveryResult { estimate: x, initial, trace, status: Status::Completed, iterations: cfg.iterations })
}
