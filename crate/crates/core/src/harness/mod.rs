//! Trials, seeds and the experiment grids built on top of the solvers.

mod output;

pub use output::{fmt_f64, write_grid_csv, write_sweep_csv, write_trace_csv, write_trials_csv};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generative::{
    default_w0, projected_power, solve_pgd, GenerativeModel, PgdConfig, ReluDecoderModel, SubspaceModel,
};
use crate::linalg::{dot, norm2};
use crate::measure::{data_matrix_prefixes, sample_ensemble, MeasurementSet, Signal};
use crate::metrics::{cosine_similarity, relative_distance};
use crate::recovery::{RecoveryResult, Status};
use crate::sparse::{estimate_norm, solve_twf, solve_wf, SparseConfig, SpectralStatistics};

/// Relative distance below which a reconstruction counts as a success.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with coordinates (grid axes, trial index, ...) into a
/// new 64-bit seed: `h₀ = sm(base)`, `h_{j+1} = sm(h_j ⊕ sm(c_j))` with
/// `sm` the SplitMix64 finalizer.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(base), |h, &c| splitmix64(h ^ splitmix64(c)))
}

/// `k`-sparse signal: support uniform among `k`-subsets, nonzeros i.i.d.
/// Uniform[−0.5, 0.5], optionally rescaled to unit norm.
pub fn sample_sparse_signal(n: usize, k: usize, seed: u64, normalize: bool) -> Result<Signal> {
    if k > n {
        return Err(Error::InvalidParameter(format!("sparsity {k} exceeds dimension {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = rand::seq::index::sample(&mut rng, n, k).into_vec();
    support.sort_unstable();
    let mut values = vec![0.0; n];
    for &l in &support {
        values[l] = rng.random_range(-0.5..=0.5);
    }
    if normalize {
        let nrm = norm2(&values);
        if nrm > 0.0 {
            values.iter_mut().for_each(|v| *v /= nrm);
        }
    }
    Signal::with_sparsity(values, k)
}

/// Structural prior of the simulated truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Sparse {
        #[serde(default)]
        normalize: bool,
    },
    Subspace {
        #[serde(default)]
        model_seed: u64,
        #[serde(default = "unit")]
        r: f64,
    },
    ReluDecoder {
        #[serde(default)]
        model_seed: u64,
        h: usize,
        #[serde(default = "unit")]
        r: f64,
        #[serde(default)]
        normalize_output: bool,
    },
}

fn unit() -> f64 {
    1.0
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Sparse { normalize: false }
    }
}

impl PriorSpec {
    pub fn is_sparse(&self) -> bool {
        matches!(self, PriorSpec::Sparse { .. })
    }

    /// The generative model of a non-sparse prior with latent dimension `k`.
    pub fn model(&self, n: usize, k: usize) -> Result<Option<Box<dyn GenerativeModel>>> {
        Ok(match *self {
            PriorSpec::Sparse { .. } => None,
            PriorSpec::Subspace { model_seed, r } => Some(Box::new(SubspaceModel::new(model_seed, n, k, r)?)),
            PriorSpec::ReluDecoder { model_seed, h, r, normalize_output } => {
                Some(Box::new(ReluDecoderModel::new(model_seed, n, h, k, r, normalize_output)?))
            }
        })
    }
}

/// A point in the range of `model`. For the subspace model the latent code
/// is a uniform direction of norm `min(1, r)` whose sign is chosen so the
/// truth correlates nonnegatively with [`default_w0`]; the decoder model
/// uses a latent code uniform in its ball.
pub fn sample_generative_truth(model: &dyn GenerativeModel, subspace: bool, seed: u64) -> Vec<f64> {
    let k = model.latent_dim();
    let r = model.radius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let len = if subspace { r.min(1.0) } else { r * rng.random::<f64>().powf(1.0 / k as f64) };
    let s = len / norm2(&z);
    z.iter_mut().for_each(|c| *c *= s);
    let mut x = model.decode(&z);
    if subspace && dot(&x, &default_w0(x.len())) < 0.0 {
        x.iter_mut().for_each(|c| *c = -*c);
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Spectral initialization (support-restricted) + plain Wirtinger flow.
    Wf,
    /// Spectral initialization (support-restricted) + thresholded WF.
    Twf,
    /// One projected power step from the flat vector.
    #[serde(rename = "ppower")]
    PPower,
    /// PGD started from the projected flat vector.
    Pgd,
    /// PGD started from the projected power estimate.
    #[serde(rename = "ppower_then_pgd")]
    PPowerThenPgd,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Wf => "wf",
            Algorithm::Twf => "twf",
            Algorithm::PPower => "ppower",
            Algorithm::Pgd => "pgd",
            Algorithm::PPowerThenPgd => "ppower_then_pgd",
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Algorithm::Wf | Algorithm::Twf)
    }
}

/// Everything needed to reproduce one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub n: usize,
    /// Sparsity or latent dimension.
    pub k: usize,
    pub m: usize,
    pub algorithm: Algorithm,
    pub prior: PriorSpec,
    pub sparse: SparseConfig,
    pub pgd: PgdConfig,
    pub trial_seed: u64,
    pub success_threshold: f64,
    /// Materialization budget in bytes (`None`: library default).
    pub memory_budget: Option<u64>,
}

impl TrialSpec {
    pub fn new(n: usize, k: usize, m: usize, algorithm: Algorithm, trial_seed: u64) -> Self {
        let prior =
            if algorithm.is_sparse() { PriorSpec::default() } else { PriorSpec::Subspace { model_seed: 0, r: 1.0 } };
        Self {
            n,
            k,
            m,
            algorithm,
            prior,
            sparse: SparseConfig::default(),
            pgd: PgdConfig::default(),
            trial_seed,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            memory_budget: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidParameter(format!("n and m must be positive (n = {}, m = {})", self.n, self.m)));
        }
        if self.algorithm.is_sparse() != self.prior.is_sparse() {
            return Err(Error::InvalidParameter(format!(
                "algorithm {} does not match the {:?} prior",
                self.algorithm.name(),
                self.prior
            )));
        }
        if self.algorithm.is_sparse() {
            self.sparse.validate()
        } else {
            self.pgd.validate()
        }
    }

    /// Seeds of the truth and of the measurement ensemble.
    pub fn sub_seeds(&self) -> (u64, u64) {
        (derive_seed(self.trial_seed, &[0]), derive_seed(self.trial_seed, &[1]))
    }

    /// Simulated truth and measurements of this trial.
    pub fn simulate(&self) -> Result<(MeasurementSet, Option<Box<dyn GenerativeModel>>)> {
        self.validate()?;
        let (signal_seed, ensemble_seed) = self.sub_seeds();
        let model = self.prior.model(self.n, self.k)?;
        let truth = match (&model, self.prior) {
            (None, PriorSpec::Sparse { normalize }) => {
                sample_sparse_signal(self.n, self.k, signal_seed, normalize)?.values
            }
            (Some(g), prior) => {
                sample_generative_truth(g.as_ref(), matches!(prior, PriorSpec::Subspace { .. }), signal_seed)
            }
            (None, _) => unreachable!("non-sparse priors always build a model"),
        };
        let ensemble = sample_ensemble(self.n, self.m, ensemble_seed, self.memory_budget)?;
        Ok((MeasurementSet::simulate(ensemble, truth)?, model))
    }
}

/// Runs `algorithm` on an existing data set.
pub fn run_algorithm(
    set: &MeasurementSet,
    algorithm: Algorithm,
    sparse: &SparseConfig,
    pgd: &PgdConfig,
    model: Option<&dyn GenerativeModel>,
) -> Result<RecoveryResult> {
    let need_model =
        || model.ok_or_else(|| Error::InvalidParameter(format!("{} needs a generative model", algorithm.name())));
    match algorithm {
        Algorithm::Wf => solve_wf(set, sparse.alpha, sparse.step_size, sparse.iterations),
        Algorithm::Twf => solve_twf(set, sparse),
        Algorithm::PPower => {
            let w = projected_power(set, need_model()?, &default_w0(set.n()), &pgd.projection)?;
            Ok(single_shot(set, w))
        }
        Algorithm::Pgd => solve_pgd(set, need_model()?, &default_w0(set.n()), pgd),
        Algorithm::PPowerThenPgd => {
            let g = need_model()?;
            let w = projected_power(set, g, &default_w0(set.n()), &pgd.projection)?;
            solve_pgd(set, g, &w, pgd)
        }
    }
}

fn single_shot(set: &MeasurementSet, w: Vec<f64>) -> RecoveryResult {
    let residual_norm = set
        .ensemble
        .forward(&w)
        .map(|yh| yh.iter().zip(&set.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .unwrap_or(f64::NAN);
    let record = crate::recovery::TraceRecord {
        t: 0,
        residual_norm,
        nnz: w.iter().filter(|v| **v != 0.0).count(),
        rel_dist: set.truth.as_deref().and_then(|x| relative_distance(&w, x).ok()),
    };
    RecoveryResult { initial: w.clone(), estimate: w, trace: vec![record], status: Status::Completed, iterations: 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    EarlyStopped,
    Diverged,
    /// The solver returned an error.
    Failed,
}

impl TrialStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialStatus::Completed => "completed",
            TrialStatus::EarlyStopped => "early_stopped",
            TrialStatus::Diverged => "diverged",
            TrialStatus::Failed => "failed",
        }
    }
}

impl From<Status> for TrialStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Completed => TrialStatus::Completed,
            Status::EarlyStopped => TrialStatus::EarlyStopped,
            Status::Diverged => TrialStatus::Diverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub spec: TrialSpec,
    pub status: TrialStatus,
    pub rel_dist: Option<f64>,
    pub cosine: Option<f64>,
    /// `rel_dist < success_threshold`; false for failed or diverged trials.
    pub success: bool,
    pub iterations: usize,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

impl TrialRecord {
    /// Equality of everything except the wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        TrialRecord { wall_time_ms: 0.0, ..self.clone() } == TrialRecord { wall_time_ms: 0.0, ..other.clone() }
    }
}

/// Simulates and solves one trial; solver errors become a `Failed` record.
pub fn run_trial(spec: &TrialSpec) -> TrialRecord {
    let start = Instant::now();
    let outcome = spec.simulate().and_then(|(set, model)| {
        let res = run_algorithm(&set, spec.algorithm, &spec.sparse, &spec.pgd, model.as_deref())?;
        Ok((set, res))
    });
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((set, res)) => {
            let truth = set.truth.as_deref().expect("simulated sets carry their truth");
            let finite = res.estimate.iter().all(|v| v.is_finite());
            let rel_dist = finite.then(|| relative_distance(&res.estimate, truth).ok()).flatten();
            let cosine = finite.then(|| cosine_similarity(&res.estimate, truth).ok()).flatten();
            let status = TrialStatus::from(res.status);
            let success = status != TrialStatus::Diverged && rel_dist.is_some_and(|d| d < spec.success_threshold);
            TrialRecord {
                spec: *spec,
                status,
                rel_dist,
                cosine,
                success,
                iterations: res.iterations,
                wall_time_ms,
                error: None,
            }
        }
        Err(e) => TrialRecord {
            spec: *spec,
            status: TrialStatus::Failed,
            rel_dist: None,
            cosine: None,
            success: false,
            iterations: 0,
            wall_time_ms,
            error: Some(e.to_string()),
        },
    }
}

/// Outcome counts of one `(k, m)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub k: usize,
    pub m: usize,
    pub successes: usize,
    /// Trials that ran but missed the threshold (including divergence).
    pub failures: usize,
    /// Trials whose solver returned an error.
    pub errored: usize,
    pub records: Vec<TrialRecord>,
}

impl CellResult {
    pub fn trials(&self) -> usize {
        self.successes + self.failures + self.errored
    }

    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials() as f64
    }
}

/// Success-rate grid over sparsity/latent dimension and measurement count.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub k_values: Vec<usize>,
    pub m_values: Vec<usize>,
    /// Row-major over `(k, m)`.
    pub cells: Vec<CellResult>,
}

impl GridResult {
    pub fn cell(&self, ki: usize, mi: usize) -> &CellResult {
        &self.cells[ki * self.m_values.len() + mi]
    }

    pub fn success_rate(&self, ki: usize, mi: usize) -> f64 {
        self.cell(ki, mi).success_rate()
    }
}

/// The per-trial specs of cell `(k, m)`: `template` with the cell's
/// coordinates and seeds `derive_seed(base_seed, [k, m, trial])`.
pub fn cell_specs(template: &TrialSpec, k: usize, m: usize, trials: usize, base_seed: u64) -> Vec<TrialSpec> {
    (0..trials)
        .map(|t| TrialSpec { k, m, trial_seed: derive_seed(base_seed, &[k as u64, m as u64, t as u64]), ..*template })
        .collect()
}

/// Runs all trials of one cell (in parallel on the current rayon pool).
pub fn run_cell(template: &TrialSpec, k: usize, m: usize, trials: usize, base_seed: u64) -> CellResult {
    let records: Vec<TrialRecord> = cell_specs(template, k, m, trials, base_seed).par_iter().map(run_trial).collect();
    let successes = records.iter().filter(|r| r.success).count();
    let errored = records.iter().filter(|r| r.status == TrialStatus::Failed).count();
    CellResult { k, m, successes, failures: records.len() - successes - errored, errored, records }
}

/// Phase-transition grid: success rate for every `(k, m)` pair.
pub fn phase_transition_grid(
    template: &TrialSpec,
    k_values: &[usize],
    m_values: &[usize],
    trials: usize,
    base_seed: u64,
) -> Result<GridResult> {
    if k_values.is_empty() || m_values.is_empty() || trials == 0 {
        return Err(Error::InvalidParameter("grid axes must be non-empty and trials >= 1".into()));
    }
    let mut cells = Vec::with_capacity(k_values.len() * m_values.len());
    for &k in k_values {
        for &m in m_values {
            cells.push(run_cell(template, k, m, trials, base_seed));
        }
    }
    Ok(GridResult { k_values: k_values.to_vec(), m_values: m_values.to_vec(), cells })
}

/// Linearly interpolated quantile of sorted data (`q ∈ [0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles of one method at one measurement count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub algo: String,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl SweepRow {
    pub fn from_values(m: usize, algo: &str, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        SweepRow {
            m,
            algo: algo.to_string(),
            q25: quantile(&values, 0.25),
            median: quantile(&values, 0.5),
            q75: quantile(&values, 0.75),
        }
    }
}

/// Distances of the unrestricted (`si`) and support-restricted (`si_s`)
/// spectral initializers to the truth for every prefix length in
/// `m_values` of one trial. The prefixes share one ensemble of size
/// `max(m_values)`, so the curves use common random numbers.
pub fn spectral_closeness_trial(
    n: usize,
    k: usize,
    m_values: &[usize],
    trial_seed: u64,
    alpha: f64,
    memory_budget: Option<u64>,
) -> Result<Vec<(f64, f64)>> {
    let (signal_seed, ensemble_seed) = (derive_seed(trial_seed, &[0]), derive_seed(trial_seed, &[1]));
    let truth = sample_sparse_signal(n, k, signal_seed, false)?.values;
    let m_max = *m_values.iter().max().ok_or_else(|| Error::InvalidParameter("no measurement counts".into()))?;
    let set = MeasurementSet::simulate(sample_ensemble(n, m_max, ensemble_seed, memory_budget)?, truth)?;
    let mut order: Vec<usize> = m_values.to_vec();
    order.sort_unstable();
    order.dedup();
    let snapshots = data_matrix_prefixes(&set, &order)?;
    let truth = set.truth.as_deref().expect("simulated");
    let mut by_m = Vec::with_capacity(order.len());
    for (&m, s) in order.iter().zip(snapshots) {
        let stats = SpectralStatistics {
            n,
            m,
            phi: estimate_norm(&set.y[..m]),
            scores: (0..n).map(|l| s[l * n + l]).collect(),
            data_matrix: s,
        };
        let si = stats.initializer(None)?;
        let sis = stats.initializer(Some(alpha))?;
        by_m.push((m, (relative_distance(&si.x0, truth)?, relative_distance(&sis.x0, truth)?)));
    }
    m_values.iter().map(|m| Ok(by_m.iter().find(|(mm, _)| mm == m).expect("every m was evaluated").1)).collect()
}

/// Quartiles of both initializers' distances over `trials` paired trials,
/// seeded by `derive_seed(base_seed, [trial])`.
pub fn spectral_closeness_sweep(
    n: usize,
    k: usize,
    m_values: &[usize],
    trials: usize,
    base_seed: u64,
    alpha: f64,
    memory_budget: Option<u64>,
) -> Result<Vec<SweepRow>> {
    if trials == 0 || m_values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs trials >= 1 and measurement counts".into()));
    }
    let per_trial: Vec<Vec<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| spectral_closeness_trial(n, k, m_values, derive_seed(base_seed, &[t as u64]), alpha, memory_budget))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(2 * m_values.len());
    for (j, &m) in m_values.iter().enumerate() {
        rows.push(SweepRow::from_values(m, "si", per_trial.iter().map(|v| v[j].0).collect()));
        rows.push(SweepRow::from_values(m, "si_s", per_trial.iter().map(|v| v[j].1).collect()));
    }
    Ok(rows)
}

/// Quartiles of the cosine similarity of each algorithm over `m_values`
/// (generative recovery sweep). Trials use `derive_seed(base_seed, [m, t])`
/// and are shared across algorithms.
pub fn recovery_sweep(
    template: &TrialSpec,
    algorithms: &[Algorithm],
    m_values: &[usize],
    trials: usize,
    base_seed: u64,
) -> Result<Vec<SweepRow>> {
    if trials == 0 || m_values.is_empty() || algorithms.is_empty() {
        return Err(Error::InvalidParameter("sweep needs trials >= 1, measurement counts and algorithms".into()));
    }
    let mut rows = Vec::new();
    for &m in m_values {
        for &algorithm in algorithms {
            let specs: Vec<TrialSpec> = (0..trials)
                .map(|t| TrialSpec {
                    m,
                    algorithm,
                    trial_seed: derive_seed(base_seed, &[m as u64, t as u64]),
                    ..*template
                })
                .collect();
            let values: Vec<f64> = specs.par_iter().map(|s| run_trial(s).cosine.unwrap_or(f64::NAN)).collect();
            rows.push(SweepRow::from_values(m, algorithm.name(), values));
        }
    }
    Ok(rows)
}
