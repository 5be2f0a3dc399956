//! Counter-based standard normal entries for the measurement matrices.
//!
//! Scheme (frozen; changing any step changes every simulated data set):
//!
//! * Key: `ChaCha8Rng::seed_from_u64(seed)`; stream id: the matrix index `i`.
//! * The unordered entry pair `{(p, q), (q, p)}` with `p ≤ q` owns two
//!   consecutive 64-bit words at position `2·t`, where `t` counts upper-triangle
//!   pairs in row-major order: `t = p(2n − p + 1)/2 + (q − p)`.
//! * The two words `w0, w1` become a Box–Muller pair
//!   `u1 = ((w0 >> 11) + ½)·2⁻⁵³`, `u2 = (w1 >> 11)·2⁻⁵³`,
//!   `r = √(−2 ln u1)`, `(a_pq, a_qp) = (r cos 2πu2, r sin 2πu2)`.
//!   Diagonal entries keep the cosine branch only.
//! * `ln`, `sin`, `cos`, `sqrt` come from the pure-Rust `libm` crate, so the
//!   bits do not depend on the platform math library.
//!
//! Any single entry can be regenerated from `(seed, i, p, q)` alone.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
fn box_muller(w0: u64, w1: u64) -> (f64, f64) {
    let u1 = ((w0 >> 11) as f64 + 0.5) * TWO_POW_M53;
    let u2 = (w1 >> 11) as f64 * TWO_POW_M53;
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let (s, c) = libm::sincos(std::f64::consts::TAU * u2);
    (r * c, r * s)
}

/// Position of the pair `(p, q)`, `p ≤ q`, in the upper-triangle order.
#[inline]
pub fn pair_index(n: usize, p: usize, q: usize) -> u64 {
    debug_assert!(p <= q && q < n);
    let (n, p, q) = (n as u64, p as u64, q as u64);
    p * (2 * n - p + 1) / 2 + (q - p)
}

#[derive(Clone)]
pub struct MatrixGenerator {
    base: ChaCha8Rng,
}

impl MatrixGenerator {
    pub fn new(seed: u64) -> Self {
        Self { base: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn stream(&self, i: usize) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(i as u64);
        rng.set_word_pos(0);
        rng
    }

    /// `(a_pq, a_qp)` of matrix `i`, regenerated in isolation.
    pub fn entry_pair(&self, i: usize, n: usize, p: usize, q: usize) -> (f64, f64) {
        let (lo, hi, swapped) = if p <= q { (p, q, false) } else { (q, p, true) };
        let mut rng = self.stream(i);
        // ChaCha word positions count 32-bit words.
        rng.set_word_pos(4 * pair_index(n, lo, hi) as u128);
        let (a, b) = box_muller(rng.next_u64(), rng.next_u64());
        if lo == hi {
            (a, a)
        } else if swapped {
            (b, a)
        } else {
            (a, b)
        }
    }

    /// Raw entry `a_pq` of matrix `i`.
    pub fn entry(&self, i: usize, n: usize, p: usize, q: usize) -> f64 {
        self.entry_pair(i, n, p, q).0
    }

    /// Symmetrized entry `½(a_pq + a_qp)`; exactly `a_pp` on the diagonal.
    pub fn sym_entry(&self, i: usize, n: usize, p: usize, q: usize) -> f64 {
        if p == q {
            return self.entry(i, n, p, p);
        }
        let (a, b) = self.entry_pair(i, n, p.min(q), p.max(q));
        0.5 * (a + b)
    }

    /// Writes the raw row-major matrix `A_i` into `out` (len `n²`).
    pub fn fill_raw(&self, i: usize, n: usize, out: &mut [f64]) {
        let mut rng = self.stream(i);
        for p in 0..n {
            for q in p..n {
                let (a, b) = box_muller(rng.next_u64(), rng.next_u64());
                out[p * n + q] = a;
                if q != p {
                    out[q * n + p] = b;
                }
            }
        }
    }

    /// Writes `Ã_i = ½(A_i + A_iᵀ)` into `out` (len `n²`).
    pub fn fill_symmetrized(&self, i: usize, n: usize, out: &mut [f64]) {
        let mut rng = self.stream(i);
        for p in 0..n {
            for q in p..n {
                let (a, b) = box_muller(rng.next_u64(), rng.next_u64());
                if q == p {
                    out[p * n + p] = a;
                } else {
                    let s = 0.5 * (a + b);
                    out[p * n + q] = s;
                    out[q * n + p] = s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_index_enumerates_upper_triangle() {
        let n = 7;
        let mut expect = 0;
        for p in 0..n {
            for q in p..n {
                assert_eq!(pair_index(n, p, q), expect);
                expect += 1;
            }
        }
    }

    #[test]
    fn isolated_entries_match_sequential_fill() {
        let g = MatrixGenerator::new(11);
        let n = 6;
        for i in [0, 3, 17] {
            let mut raw = vec![0.0; n * n];
            let mut sym = vec![0.0; n * n];
            g.fill_raw(i, n, &mut raw);
            g.fill_symmetrized(i, n, &mut sym);
            for p in 0..n {
                for q in 0..n {
                    assert_eq!(g.entry(i, n, p, q).to_bits(), raw[p * n + q].to_bits());
                    assert_eq!(g.sym_entry(i, n, p, q).to_bits(), sym[p * n + q].to_bits());
                }
            }
        }
    }

    #[test]
    fn moments_look_standard_normal() {
        let g = MatrixGenerator::new(5);
        let n = 40;
        let mut raw = vec![0.0; n * n];
        let (mut s1, mut s2, mut s4, mut count) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..50 {
            g.fill_raw(i, n, &mut raw);
            for v in &raw {
                s1 += v;
                s2 += v * v;
                s4 += v * v * v * v;
                count += 1.0;
            }
        }
        let mean = s1 / count;
        let var = s2 / count - mean * mean;
        let kurt = s4 / count / (var * var);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
        assert!((kurt - 3.0).abs() < 0.1, "kurtosis {kurt}");
    }

    #[test]
    fn distinct_matrices_and_seeds_differ() {
        let n = 3;
        let a = MatrixGenerator::new(1).entry(0, n, 0, 1);
        assert_ne!(a, MatrixGenerator::new(1).entry(1, n, 0, 1));
        assert_ne!(a, MatrixGenerator::new(2).entry(0, n, 0, 1));
    }
}
