//! Gaussian measurement ensembles and the quadratic forward model.
//!
//! Every operation works on the symmetrized matrices `Ã_i = ½(A_i + A_iᵀ)`;
//! `xᵀA_i x = xᵀÃ_i x` and `a_ll = ã_ll`, so nothing downstream needs the raw
//! `A_i`. Materialized ensembles keep all `Ã_i` in memory, streamed ones
//! regenerate each `Ã_i` into a scratch buffer. Both feed the same kernels, so
//! results are bit-identical across storage modes.

pub mod gaussian;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, nonzeros, sym_matvec_quad};
use gaussian::MatrixGenerator;

pub use gaussian::pair_index;

/// Default cap on materialized storage: 2 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    Materialized,
    Streamed,
}

/// What gets persisted for an ensemble: never the matrices themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub storage: Storage,
}

// One per ensemble; boxing the generator would only add an indirection.
#[allow(clippy::large_enum_variant)]
#[derive(Clone)]
enum Source {
    Gaussian(MatrixGenerator),
    /// Explicit raw matrices (row-major, concatenated). Test fixtures only.
    Explicit(Vec<f64>),
}

#[derive(Clone)]
pub struct MeasurementEnsemble {
    n: usize,
    m: usize,
    seed: u64,
    storage: Storage,
    source: Source,
    /// Concatenated `Ã_i` when materialized.
    sym: Option<Vec<f64>>,
}

impl std::fmt::Debug for MeasurementEnsemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeasurementEnsemble")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("seed", &self.seed)
            .field("storage", &self.storage)
            .field("explicit", &matches!(self.source, Source::Explicit(_)))
            .finish()
    }
}

fn storage_bytes(n: usize, m: usize) -> Result<u64> {
    let overflow = || Error::DimensionOverflow { n, m };
    let entries = n.checked_mul(n).and_then(|nn| nn.checked_mul(m)).ok_or_else(overflow)?;
    (entries as u64).checked_mul(8).ok_or_else(overflow)
}

/// Storage rule: materialize iff `m·n²·8` bytes fit the budget.
pub fn choose_storage(n: usize, m: usize, budget: Option<u64>) -> Result<Storage> {
    let bytes = storage_bytes(n, m)?;
    Ok(if bytes <= budget.unwrap_or(DEFAULT_MEMORY_BUDGET) { Storage::Materialized } else { Storage::Streamed })
}

/// Draws an ensemble of `m` i.i.d. Gaussian `n x n` matrices.
pub fn sample_ensemble(n: usize, m: usize, seed: u64, budget: Option<u64>) -> Result<MeasurementEnsemble> {
    let storage = choose_storage(n, m, budget)?;
    MeasurementEnsemble::with_storage(n, m, seed, storage)
}

impl MeasurementEnsemble {
    pub fn with_storage(n: usize, m: usize, seed: u64, storage: Storage) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!("ensemble needs n >= 1 and m >= 1 (got n = {n}, m = {m})")));
        }
        storage_bytes(n, m)?;
        if m > 100 * n {
            log::warn!("m = {m} is far above n = {n}; the analysis assumes m = O(n)");
        }
        let gen = MatrixGenerator::new(seed);
        let sym = match storage {
            Storage::Materialized => {
                let nn = n * n;
                let mut all = vec![0.0; m * nn];
                for (i, chunk) in all.chunks_exact_mut(nn).enumerate() {
                    gen.fill_symmetrized(i, n, chunk);
                }
                Some(all)
            }
            Storage::Streamed => None,
        };
        Ok(Self { n, m, seed, storage, source: Source::Gaussian(gen), sym })
    }

    /// Ensemble built from explicit raw matrices. Bypasses the Gaussian
    /// contract; meant for hand-checkable fixtures, never used by the solvers
    /// or the experiment harness.
    pub fn from_matrices(n: usize, matrices: &[Vec<f64>]) -> Result<Self> {
        if n == 0 || matrices.is_empty() {
            return Err(Error::InvalidParameter("explicit ensemble needs n >= 1 and one matrix".into()));
        }
        let nn = n * n;
        let mut raw = Vec::with_capacity(matrices.len() * nn);
        for a in matrices {
            if a.len() != nn {
                return Err(Error::DimensionMismatch { expected: nn, got: a.len() });
            }
            raw.extend_from_slice(a);
        }
        let mut sym = vec![0.0; raw.len()];
        for (a, s) in raw.chunks_exact(nn).zip(sym.chunks_exact_mut(nn)) {
            for p in 0..n {
                s[p * n + p] = a[p * n + p];
                for q in (p + 1)..n {
                    let v = 0.5 * (a[p * n + q] + a[q * n + p]);
                    s[p * n + q] = v;
                    s[q * n + p] = v;
                }
            }
        }
        Ok(Self {
            n,
            m: matrices.len(),
            seed: 0,
            storage: Storage::Materialized,
            source: Source::Explicit(raw),
            sym: Some(sym),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn header(&self) -> EnsembleHeader {
        EnsembleHeader { n: self.n, m: self.m, seed: self.seed, storage: self.storage }
    }

    /// Same matrices, other storage mode.
    pub fn restored(&self, storage: Storage) -> Result<Self> {
        match self.source {
            Source::Gaussian(_) => Self::with_storage(self.n, self.m, self.seed, storage),
            Source::Explicit(_) => Ok(self.clone()),
        }
    }

    /// The first `m` matrices of this ensemble, as an ensemble of its own.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m {
            return Err(Error::IndexOutOfRange { index: m, len: self.m });
        }
        let nn = self.n * self.n;
        let source = match &self.source {
            Source::Gaussian(g) => Source::Gaussian(g.clone()),
            Source::Explicit(raw) => Source::Explicit(raw[..m * nn].to_vec()),
        };
        Ok(Self {
            n: self.n,
            m,
            seed: self.seed,
            storage: self.storage,
            source,
            sym: self.sym.as_ref().map(|s| s[..m * nn].to_vec()),
        })
    }

    /// Raw `A_i` (row-major), regenerated explicitly.
    pub fn raw_matrix(&self, i: usize) -> Result<Vec<f64>> {
        self.check_index(i)?;
        let nn = self.n * self.n;
        Ok(match &self.source {
            Source::Gaussian(g) => {
                let mut out = vec![0.0; nn];
                g.fill_raw(i, self.n, &mut out);
                out
            }
            Source::Explicit(raw) => raw[i * nn..(i + 1) * nn].to_vec(),
        })
    }

    /// Symmetrized entry `ã_pq` of matrix `i` without touching the others.
    pub fn sym_entry(&self, i: usize, p: usize, q: usize) -> f64 {
        let n = self.n;
        match (&self.sym, &self.source) {
            (Some(all), _) => all[i * n * n + p * n + q],
            (None, Source::Gaussian(g)) => g.sym_entry(i, n, p, q),
            (None, Source::Explicit(_)) => unreachable!("explicit ensembles are materialized"),
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.m {
            return Err(Error::IndexOutOfRange { index: i, len: self.m });
        }
        Ok(())
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        Ok(())
    }

    /// Visits `Ã_i` for `i` in `range`, in increasing order.
    pub fn for_each_sym<F>(&self, range: std::ops::Range<usize>, mut f: F)
    where
        F: FnMut(usize, &[f64]),
    {
        let nn = self.n * self.n;
        match (&self.sym, &self.source) {
            (Some(all), _) => {
                for i in range {
                    f(i, &all[i * nn..(i + 1) * nn]);
                }
            }
            (None, Source::Gaussian(g)) => {
                let mut buf = vec![0.0; nn];
                for i in range {
                    g.fill_symmetrized(i, self.n, &mut buf);
                    f(i, &buf);
                }
            }
            (None, Source::Explicit(_)) => unreachable!("explicit ensembles are materialized"),
        }
    }

    /// `Ã_i z = ½(A_i z + A_iᵀ z)`.
    pub fn sym_apply(&self, i: usize, z: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        self.check_len(z)?;
        let n = self.n;
        let support = nonzeros(z);
        let mut out = vec![0.0; n];
        match &self.sym {
            Some(all) => {
                sym_matvec_quad(&all[i * n * n..(i + 1) * n * n], n, z, &support, &mut out);
            }
            None => {
                // Rows of Ã_i on supp(z) are all that is needed.
                for &q in &support {
                    for (p, o) in out.iter_mut().enumerate() {
                        *o += z[q] * self.sym_entry(i, q, p);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `y_i = xᵀA_i x` for every `i`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let n = self.n;
        let support = nonzeros(x);
        let s = support.len();
        let mut y = vec![0.0; self.m];
        if s == 0 {
            return Ok(y);
        }
        // For a sparse x in streamed mode, regenerating just the supp × supp
        // block beats generating whole matrices.
        let isolated = self.sym.is_none() && 3 * s * (s + 1) < n * (n + 1);
        if isolated {
            let mut block = vec![0.0; s * s];
            let mut w = vec![0.0; s];
            for (i, yi) in y.iter_mut().enumerate() {
                for (a, &p) in support.iter().enumerate() {
                    for (b, &q) in support.iter().enumerate().skip(a) {
                        let v = self.sym_entry(i, p, q);
                        block[a * s + b] = v;
                        block[b * s + a] = v;
                    }
                }
                // Same accumulation order as `sym_matvec_quad`.
                w.fill(0.0);
                for (b, &q) in support.iter().enumerate() {
                    for a in 0..s {
                        w[a] += x[q] * block[b * s + a];
                    }
                }
                let mut quad = 0.0;
                for (a, &p) in support.iter().enumerate() {
                    quad += x[p] * w[a];
                }
                *yi = quad;
            }
        } else {
            let mut w = vec![0.0; n];
            self.for_each_sym(0..self.m, |i, mat| {
                y[i] = sym_matvec_quad(mat, n, x, &support, &mut w);
            });
        }
        Ok(y)
    }
}

/// Signal with an optional sparsity hint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub values: Vec<f64>,
    pub sparsity: Option<usize>,
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, sparsity: None }
    }

    pub fn with_sparsity(values: Vec<f64>, k: usize) -> Result<Self> {
        let nnz = values.iter().filter(|v| **v != 0.0).count();
        if nnz > k {
            return Err(Error::InvalidParameter(format!("signal has {nnz} nonzeros but sparsity hint is {k}")));
        }
        Ok(Self { values, sparsity: Some(k) })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// An ensemble together with its observations (and the truth, if simulated).
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub ensemble: MeasurementEnsemble,
    pub y: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

impl MeasurementSet {
    pub fn new(ensemble: MeasurementEnsemble, y: Vec<f64>) -> Result<Self> {
        if y.len() != ensemble.m() {
            return Err(Error::DimensionMismatch { expected: ensemble.m(), got: y.len() });
        }
        Ok(Self { ensemble, y, truth: None })
    }

    /// Noiseless simulation: `y = forward(ensemble, truth)`.
    pub fn simulate(ensemble: MeasurementEnsemble, truth: Vec<f64>) -> Result<Self> {
        let y = ensemble.forward(&truth)?;
        Ok(Self { ensemble, y, truth: Some(truth) })
    }

    pub fn n(&self) -> usize {
        self.ensemble.n()
    }

    pub fn m(&self) -> usize {
        self.ensemble.m()
    }

    /// The first `m` measurements.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        Ok(Self { ensemble: self.ensemble.prefix(m)?, y: self.y[..m].to_vec(), truth: self.truth.clone() })
    }
}

/// `S̃_in = (1/m) Σ y_i Ã_i`, exactly symmetric.
pub fn data_matrix(set: &MeasurementSet) -> Result<Vec<f64>> {
    let m = set.m();
    Ok(data_matrix_prefixes(set, &[m])?.pop().expect("one prefix"))
}

/// `S̃_in` for each prefix length in `ms` (strictly increasing), from a
/// single pass over the matrices. Each snapshot is bit-identical to
/// `data_matrix` on the corresponding prefix set.
pub fn data_matrix_prefixes(set: &MeasurementSet, ms: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_prefixes(ms, set.m())?;
    let n = set.n();
    let mut sum = vec![0.0; n * n];
    let mut out = Vec::with_capacity(ms.len());
    let mut next = 0;
    let last = *ms.last().unwrap_or(&0);
    set.ensemble.for_each_sym(0..last, |i, mat| {
        axpy(set.y[i], mat, &mut sum);
        if i + 1 == ms[next] {
            let mf = ms[next] as f64;
            out.push(sum.iter().map(|v| v / mf).collect());
            next += 1;
        }
    });
    Ok(out)
}

fn check_prefixes(ms: &[usize], m: usize) -> Result<()> {
    if ms.is_empty() || ms[0] == 0 || ms.windows(2).any(|w| w[0] >= w[1]) || ms[ms.len() - 1] > m {
        return Err(Error::InvalidParameter(format!(
            "prefix lengths must be strictly increasing within 1..={m}, got {ms:?}"
        )));
    }
    Ok(())
}

/// Diagonal of `S_in`: `I_l = (1/m) Σ y_i a^{(i)}_ll`.
pub fn diagonal_scores(set: &MeasurementSet) -> Vec<f64> {
    let n = set.n();
    let m = set.m();
    let mut acc = vec![0.0; n];
    if set.ensemble.sym.is_some() {
        set.ensemble.for_each_sym(0..m, |i, mat| {
            for (l, a) in acc.iter_mut().enumerate() {
                *a += set.y[i] * mat[l * n + l];
            }
        });
    } else {
        for i in 0..m {
            for (l, a) in acc.iter_mut().enumerate() {
                *a += set.y[i] * set.ensemble.sym_entry(i, l, l);
            }
        }
    }
    acc.iter().map(|v| v / m as f64).collect()
}
