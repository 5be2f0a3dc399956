use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::GenerativeModel;
use crate::error::{Error, Result};
use crate::linalg::{matvec, matvec_t, norm2};

/// Fixed random two-layer network `z ↦ W₂ relu(W₁z + b₁)`, optionally
/// normalized onto the unit sphere.
///
/// Weights are drawn row-major from `ChaCha8Rng::seed_from_u64(seed)` in the
/// order `W₁` (`h x k`, variance `2/h`), `b₁` (variance `0.01`), `W₂`
/// (`n x h`, variance `3/n`). This scaling keeps `JᵀJ` of the unnormalized
/// network well conditioned with eigenvalues inside the stable range of the
/// default latent step, so projections onto the range converge.
#[derive(Debug, Clone)]
pub struct ReluDecoderModel {
    seed: u64,
    n: usize,
    h: usize,
    k: usize,
    r: f64,
    normalize_output: bool,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
}

struct Forward {
    pre: Vec<f64>,
    raw: Vec<f64>,
    raw_norm: f64,
}

impl ReluDecoderModel {
    pub fn new(seed: u64, n: usize, h: usize, k: usize, r: f64, normalize_output: bool) -> Result<Self> {
        if n == 0 || h == 0 || k == 0 || !(r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "decoder needs positive sizes and radius (n = {n}, h = {h}, k = {k}, r = {r})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw =
            |len: usize, sd: f64| -> Vec<f64> { (0..len).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect() };
        let w1 = draw(h * k, (2.0 / h as f64).sqrt());
        let b1 = draw(h, 0.1);
        let w2 = draw(n * h, (3.0 / n as f64).sqrt());
        Ok(Self { seed, n, h, k, r, normalize_output, w1, b1, w2 })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hidden_dim(&self) -> usize {
        self.h
    }

    pub fn normalize_output(&self) -> bool {
        self.normalize_output
    }

    fn forward(&self, z: &[f64]) -> Forward {
        let mut pre = matvec(&self.w1, self.h, self.k, z);
        pre.iter_mut().zip(&self.b1).for_each(|(a, b)| *a += b);
        let hidden: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
        let raw = matvec(&self.w2, self.n, self.h, &hidden);
        let raw_norm = norm2(&raw);
        Forward { pre, raw, raw_norm }
    }

    fn output(&self, f: &Forward) -> Vec<f64> {
        if self.normalize_output && f.raw_norm > 0.0 {
            f.raw.iter().map(|v| v / f.raw_norm).collect()
        } else {
            f.raw.clone()
        }
    }
}

impl GenerativeModel for ReluDecoderModel {
    fn ambient_dim(&self) -> usize {
        self.n
    }

    fn latent_dim(&self) -> usize {
        self.k
    }

    fn radius(&self) -> f64 {
        self.r
    }

    /// `‖W₁‖_F · ‖W₂‖_F`, a conservative bound for the unnormalized network.
    fn lipschitz_bound(&self) -> Option<f64> {
        Some(norm2(&self.w1) * norm2(&self.w2))
    }

    fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.output(&self.forward(z))
    }

    fn objective_and_gradient(&self, z: &[f64], v: &[f64]) -> (f64, Vec<f64>) {
        let f = self.forward(z);
        let out = self.output(&f);
        let mut d: Vec<f64> = out.iter().zip(v).map(|(a, b)| 2.0 * (a - b)).collect();
        let obj = d.iter().map(|e| 0.25 * e * e).sum();
        if self.normalize_output && f.raw_norm > 0.0 {
            // Jacobian of u = w/‖w‖ is (I − uuᵀ)/‖w‖.
            let ud: f64 = out.iter().zip(&d).map(|(a, b)| a * b).sum();
            d.iter_mut().zip(&out).for_each(|(g, u)| *g = (*g - u * ud) / f.raw_norm);
        }
        let mut g_hidden = matvec_t(&self.w2, self.n, self.h, &d);
        g_hidden.iter_mut().zip(&f.pre).for_each(|(g, a)| {
            if *a <= 0.0 {
                *g = 0.0;
            }
        });
        (obj, matvec_t(&self.w1, self.h, self.k, &g_hidden))
    }

    /// Normalizing makes the network nearly scale invariant in `z`, which
    /// flattens the latent objective along rays and slows the descent.
    fn projection_tolerance(&self) -> f64 {
        if self.normalize_output {
            2e-2
        } else {
            1e-6
        }
    }
}
