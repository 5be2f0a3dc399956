use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{clip_to_ball, GenerativeModel, ProjectionConfig};
use crate::error::{Error, Result};
use crate::linalg::{matvec, matvec_t, modified_gram_schmidt};

/// Linear model `G(z) = Wz` with orthonormal `W ∈ ℝⁿˣᵏ` on the ball of
/// radius `r`. Its range projection has a closed form.
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    seed: u64,
    n: usize,
    k: usize,
    r: f64,
    /// Row-major `n x k`.
    basis: Vec<f64>,
}

impl SubspaceModel {
    /// `W` is the modified Gram–Schmidt Q factor (columns left to right) of
    /// an `n x k` standard normal matrix drawn row-major from
    /// `ChaCha8Rng::seed_from_u64(seed)`.
    pub fn new(seed: u64, n: usize, k: usize, r: f64) -> Result<Self> {
        if k == 0 || k > n || !(r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "subspace model needs 1 <= k <= n and r > 0 (n = {n}, k = {k}, r = {r})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = (0..n * k).map(|_| rng.sample(StandardNormal)).collect();
        let basis = modified_gram_schmidt(&g, n, k)?;
        Ok(Self { seed, n, k, r, basis })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// Exact Euclidean projection onto `{Wz : ‖z‖ ≤ r}`.
    pub fn exact_project(&self, v: &[f64]) -> Vec<f64> {
        let mut z = matvec_t(&self.basis, self.n, self.k, v);
        clip_to_ball(&mut z, self.r);
        matvec(&self.basis, self.n, self.k, &z)
    }
}

impl GenerativeModel for SubspaceModel {
    fn ambient_dim(&self) -> usize {
        self.n
    }

    fn latent_dim(&self) -> usize {
        self.k
    }

    fn radius(&self) -> f64 {
        self.r
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn decode(&self, z: &[f64]) -> Vec<f64> {
        matvec(&self.basis, self.n, self.k, z)
    }

    fn objective_and_gradient(&self, z: &[f64], v: &[f64]) -> (f64, Vec<f64>) {
        let resid: Vec<f64> = self.decode(z).iter().zip(v).map(|(a, b)| a - b).collect();
        let obj = resid.iter().map(|e| e * e).sum();
        let mut g = matvec_t(&self.basis, self.n, self.k, &resid);
        g.iter_mut().for_each(|c| *c *= 2.0);
        (obj, g)
    }

    fn projection_tolerance(&self) -> f64 {
        1e-12
    }

    fn project(&self, v: &[f64], _cfg: &ProjectionConfig) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        Ok(self.exact_project(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::latent_project;
    use crate::linalg::{dot, norm2};

    fn random_vec(seed: u64, n: usize, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn basis_is_orthonormal() {
        let m = SubspaceModel::new(4, 50, 6, 1.0).unwrap();
        let (n, k) = (50, 6);
        for a in 0..k {
            for b in 0..k {
                let d: f64 = (0..n).map(|r| m.basis[r * k + a] * m.basis[r * k + b]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_of_range_point_and_complement() {
        let m = SubspaceModel::new(1, 20, 4, 2.0).unwrap();
        let v = m.decode(&[0.5, -0.2, 0.1, 0.9]);
        let p = m.exact_project(&v);
        for (a, b) in p.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
        // component orthogonal to span(W)
        let g = random_vec(3, 20, 1.0);
        let inside = matvec(&m.basis, 20, 4, &matvec_t(&m.basis, 20, 4, &g));
        let orth: Vec<f64> = g.iter().zip(&inside).map(|(a, b)| a - b).collect();
        assert!(norm2(&m.exact_project(&orth)) < 1e-14);
    }

    #[test]
    fn projection_matches_least_squares_with_clip() {
        let (n, k, r) = (20, 4, 0.8);
        let m = SubspaceModel::new(2, n, k, r).unwrap();
        for seed in 0..10 {
            let v = random_vec(100 + seed, n, 1.0);
            // normal equations (WᵀW) z = Wᵀv solved by Gaussian elimination
            let mut a = vec![0.0; k * k];
            let mut b = vec![0.0; k];
            for i in 0..k {
                for j in 0..k {
                    a[i * k + j] = (0..n).map(|row| m.basis[row * k + i] * m.basis[row * k + j]).sum();
                }
                b[i] = (0..n).map(|row| m.basis[row * k + i] * v[row]).sum();
            }
            for col in 0..k {
                for row in (col + 1)..k {
                    let f = a[row * k + col] / a[col * k + col];
                    for c in col..k {
                        a[row * k + c] -= f * a[col * k + c];
                    }
                    b[row] -= f * b[col];
                }
            }
            let mut z = vec![0.0; k];
            for row in (0..k).rev() {
                let s: f64 = ((row + 1)..k).map(|c| a[row * k + c] * z[c]).sum();
                z[row] = (b[row] - s) / a[row * k + row];
            }
            let nz = norm2(&z);
            if nz > r {
                z.iter_mut().for_each(|c| *c *= r / nz);
            }
            let want = m.decode(&z);
            let got = m.exact_project(&v);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projection_is_optimal_among_candidates() {
        let (n, k, r) = (15, 3, 1.0);
        let m = SubspaceModel::new(5, n, k, r).unwrap();
        let v = random_vec(8, n, 1.5);
        let p = m.exact_project(&v);
        let best = norm2(&p.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let mut z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let u: f64 = rng.random();
            let s = r * u.powf(1.0 / k as f64) / norm2(&z);
            z.iter_mut().for_each(|c| *c *= s);
            let g = m.decode(&z);
            let d = norm2(&g.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(best <= d + 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let m = SubspaceModel::new(6, 30, 5, 0.7).unwrap();
        for seed in 0..20 {
            let v = random_vec(seed, 30, 1.0);
            let p = m.exact_project(&v);
            let pp = m.exact_project(&p);
            for (a, b) in p.iter().zip(&pp) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn latent_descent_recovers_range_point() {
        let m = SubspaceModel::new(9, 25, 4, 2.0).unwrap();
        let v = m.decode(&[0.4, 0.3, -0.6, 0.2]);
        let out = latent_project(&m, &v, &ProjectionConfig::default()).unwrap();
        let d = norm2(&out.point.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(d < 1e-8, "{d}");
        assert!(dot(&out.point, &v) > 0.0);
    }

    #[test]
    fn latent_descent_agrees_with_closed_form() {
        let m = SubspaceModel::new(10, 30, 4, 1.0).unwrap();
        let cfg = ProjectionConfig::default();
        for seed in 0..50 {
            let v = random_vec(500 + seed, 30, 0.5);
            let a = latent_project(&m, &v, &cfg).unwrap().point;
            let b = m.exact_project(&v);
            let d = norm2(&a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>());
            assert!(d < 1e-6, "seed {seed}: {d}");
        }
    }

    #[test]
    fn more_restarts_never_hurt() {
        let m = SubspaceModel::new(12, 20, 3, 1.0).unwrap();
        for seed in 0..10 {
            let v = random_vec(900 + seed, 20, 1.0);
            let few = ProjectionConfig { restarts: 1, steps: 5, ..ProjectionConfig::default() };
            let many = ProjectionConfig { restarts: 5, ..few };
            let a = latent_project(&m, &v, &few).unwrap();
            let b = latent_project(&m, &v, &many).unwrap();
            assert!(b.objective <= a.objective);
        }
    }
}
