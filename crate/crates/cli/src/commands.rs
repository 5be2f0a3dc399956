//! Subcommand implementations. Every command echoes the config verbatim
//! into its output directory (`config.toml`) and into `result.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context as _};
use log::{info, warn};
use quadrec::harness::{
    derive_seed, recovery_sweep, run_algorithm, run_cell, sample_sparse_signal, spectral_closeness_sweep,
    write_grid_csv, write_sweep_csv, write_trace_csv, write_trials_csv, CellResult, GridResult,
};
use quadrec::measure::choose_storage;
use quadrec::oracle::{concentration_suite, expectation_check, CheckReport};
use quadrec::{cosine_similarity, relative_distance, Algorithm, EnsembleHeader, MeasurementEnsemble, MeasurementSet};
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, RunConfig};
use crate::Init;

pub enum Outcome {
    Success,
    /// The command ran but its result is a failure (solver divergence,
    /// failed checks): exit code 1.
    Failure,
}

pub enum CliError {
    /// Bad arguments or configuration: exit code 2.
    Usage(anyhow::Error),
    /// Everything else: exit code 1.
    Runtime(anyhow::Error),
}

type CmdResult = Result<Outcome, CliError>;

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

pub struct Context {
    pub config: RunConfig,
    pub text: String,
    pub seed: u64,
    pub out: PathBuf,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(
        path: Option<&Path>,
        seed: Option<u64>,
        out: Option<PathBuf>,
        workers: Option<usize>,
    ) -> anyhow::Result<Self> {
        let LoadedConfig { config, text } = LoadedConfig::load(path)?;
        if workers == Some(0) {
            bail!("--workers must be at least 1");
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .context("cannot start worker pool")?;
        Ok(Self {
            seed: seed.unwrap_or(config.problem.seed),
            out: out.unwrap_or_else(|| PathBuf::from(&config.output.directory)),
            config,
            text,
            pool,
        })
    }

    fn prepare_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create {}", self.out.display()))
            .map_err(runtime)?;
        fs::write(self.out.join("config.toml"), &self.text).context("cannot write config.toml").map_err(runtime)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .with_context(|| format!("cannot create {}", path.display()))
            .map_err(runtime)
    }
}

fn write_column(mut w: impl Write, header: &str, values: &[f64]) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(&mut w);
    out.write_record([header])?;
    for v in values {
        out.write_record([quadrec::harness::fmt_f64(*v)])?;
    }
    out.flush()?;
    Ok(())
}

fn read_column(path: &Path, header: &str) -> anyhow::Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let found = rdr.headers()?.clone();
    if found.len() != 1 || &found[0] != header {
        bail!("{}: expected a single column named {header:?}", path.display());
    }
    rdr.records()
        .enumerate()
        .map(|(i, r)| {
            let r = r?;
            r[0].trim()
                .parse::<f64>()
                .with_context(|| format!("{}: row {}: not a number: {:?}", path.display(), i + 1, &r[0]))
        })
        .collect()
}

/// `ensemble.json`: what is needed to regenerate the measurement matrices.
#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    ensemble: EnsembleHeader,
    config: String,
}

pub fn simulate(ctx: &Context) -> CmdResult {
    let spec = quadrec::TrialSpec { trial_seed: ctx.seed, ..ctx.config.trial_template().map_err(usage)? };
    let (set, _) = spec.simulate().map_err(runtime)?;
    ctx.prepare_out()?;
    let truth = set.truth.as_deref().expect("simulated sets carry their truth");
    write_column(ctx.create("truth.csv")?, "x", truth).map_err(runtime)?;
    write_column(ctx.create("y.csv")?, "y", &set.y).map_err(runtime)?;
    let file = EnsembleFile { ensemble: set.ensemble.header(), config: ctx.text.clone() };
    serde_json::to_writer_pretty(ctx.create("ensemble.json")?, &file).map_err(runtime)?;
    info!("simulated n = {}, m = {} into {}", set.n(), set.m(), ctx.out.display());
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SolveResult<'a> {
    algorithm: &'a str,
    status: &'a str,
    rel_dist: Option<f64>,
    cosine: Option<f64>,
    iterations: usize,
    wall_time_ms: f64,
    error: Option<String>,
    config: &'a str,
}

fn solve_algorithm(config: &RunConfig, init: Option<Init>) -> Result<Algorithm, CliError> {
    match init {
        None => Ok(config.algorithm.name),
        Some(_) if config.prior.is_sparse() => Err(usage(anyhow!("--init applies to generative priors only"))),
        Some(Init::Ppower) => Ok(Algorithm::PPowerThenPgd),
        Some(Init::Flat) => Ok(Algorithm::Pgd),
    }
}

pub fn solve(ctx: &Context, input: Option<PathBuf>, init: Option<Init>) -> CmdResult {
    let cfg = &ctx.config;
    cfg.trial_template().map_err(usage)?;
    let algorithm = solve_algorithm(cfg, init)?;
    if algorithm.is_sparse() != cfg.prior.is_sparse() {
        return Err(usage(anyhow!("algorithm {} does not match the configured prior", algorithm.name())));
    }
    let input = input.unwrap_or_else(|| ctx.out.clone());
    let header_path = input.join("ensemble.json");
    let header: EnsembleFile = serde_json::from_reader(
        File::open(&header_path).with_context(|| format!("cannot open {}", header_path.display())).map_err(usage)?,
    )
    .with_context(|| format!("invalid {}", header_path.display()))
    .map_err(usage)?;
    let h = header.ensemble;
    let y = read_column(&input.join("y.csv"), "y").map_err(usage)?;
    if y.len() != h.m {
        return Err(usage(anyhow!("y.csv has {} rows but the ensemble has m = {}", y.len(), h.m)));
    }
    let truth_path = input.join("truth.csv");
    let truth = if truth_path.exists() { Some(read_column(&truth_path, "x").map_err(usage)?) } else { None };
    if cfg.problem.n != h.n {
        warn!("config n = {} differs from the ensemble's n = {}; using the ensemble", cfg.problem.n, h.n);
    }
    let storage = choose_storage(h.n, h.m, cfg.problem.memory_budget).map_err(runtime)?;
    let ensemble = MeasurementEnsemble::with_storage(h.n, h.m, h.seed, storage).map_err(runtime)?;
    let mut set = MeasurementSet::new(ensemble, y).map_err(usage)?;
    if let Some(t) = truth {
        if t.len() != h.n {
            return Err(usage(anyhow!("truth.csv has {} rows but n = {}", t.len(), h.n)));
        }
        set.truth = Some(t);
    }
    let model = cfg.prior.model(h.n, cfg.problem.k).map_err(usage)?;

    let start = Instant::now();
    let outcome = ctx
        .pool
        .install(|| run_algorithm(&set, algorithm, &cfg.algorithm.sparse, &cfg.algorithm.pgd, model.as_deref()));
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    ctx.prepare_out()?;
    let mut result = SolveResult {
        algorithm: algorithm.name(),
        status: "failed",
        rel_dist: None,
        cosine: None,
        iterations: 0,
        wall_time_ms,
        error: None,
        config: &ctx.text,
    };
    let verdict = match &outcome {
        Ok(res) => {
            write_column(ctx.create("estimate.csv")?, "x_hat", &res.estimate).map_err(runtime)?;
            write_trace_csv(ctx.create("trace.csv")?, &res.trace).map_err(runtime)?;
            let status = quadrec::harness::TrialStatus::from(res.status);
            result.status = status.as_str();
            result.iterations = res.iterations;
            if let Some(t) = set.truth.as_deref() {
                result.rel_dist = relative_distance(&res.estimate, t).ok().filter(|v| v.is_finite());
                result.cosine = cosine_similarity(&res.estimate, t).ok().filter(|v| v.is_finite());
            }
            if status == quadrec::harness::TrialStatus::Diverged {
                Outcome::Failure
            } else {
                Outcome::Success
            }
        }
        Err(e) => {
            result.error = Some(e.to_string());
            Outcome::Failure
        }
    };
    serde_json::to_writer_pretty(ctx.create("result.json")?, &result).map_err(runtime)?;
    match (&outcome, &result.rel_dist) {
        (Err(e), _) => eprintln!("solver failed: {e}"),
        (Ok(_), Some(d)) => info!("{}: status {}, rel_dist {d:.3e}", algorithm.name(), result.status),
        (Ok(_), None) => info!("{}: status {}", algorithm.name(), result.status),
    }
    Ok(verdict)
}

/// Per-cell summary persisted by `grid` so that runs can be resumed.
#[derive(Serialize, Deserialize)]
struct CellSummary {
    k: usize,
    m: usize,
    successes: usize,
    failures: usize,
    errored: usize,
}

fn cell_stem(k: usize, m: usize) -> String {
    format!("k{k}_m{m}")
}

pub fn grid(ctx: &Context, resume: bool, stop_after: Option<usize>) -> CmdResult {
    let cfg = &ctx.config;
    let template = cfg.trial_template().map_err(usage)?;
    let (k_values, m_values) = cfg.axes().map_err(usage)?;
    let trials = cfg.experiment.trials;
    let cells_dir = ctx.out.join("cells");
    let stamp = cells_dir.join("config.toml");
    let stamp_text = format!("# seed = {}\n{}", ctx.seed, ctx.text);
    if cells_dir.exists() {
        let previous = fs::read_to_string(&stamp).unwrap_or_default();
        if !resume {
            return Err(usage(anyhow!(
                "{} holds a previous grid run; pass --resume to continue it or choose another --out",
                cells_dir.display()
            )));
        }
        if previous != stamp_text {
            return Err(usage(anyhow!("cannot resume: the config or seed differs from the interrupted run")));
        }
    }
    ctx.prepare_out()?;
    fs::create_dir_all(&cells_dir).context("cannot create cells directory").map_err(runtime)?;
    fs::write(&stamp, &stamp_text).context("cannot write cell stamp").map_err(runtime)?;

    let mut cells = Vec::with_capacity(k_values.len() * m_values.len());
    let mut computed = 0usize;
    for &k in &k_values {
        for &m in &m_values {
            let stem = cell_stem(k, m);
            let marker = cells_dir.join(format!("{stem}.done"));
            let summary_path = cells_dir.join(format!("{stem}.json"));
            if marker.exists() {
                let s: CellSummary = serde_json::from_slice(
                    &fs::read(&summary_path)
                        .with_context(|| format!("cannot read {}", summary_path.display()))
                        .map_err(runtime)?,
                )
                .map_err(runtime)?;
                cells.push(CellResult {
                    k,
                    m,
                    successes: s.successes,
                    failures: s.failures,
                    errored: s.errored,
                    records: vec![],
                });
                continue;
            }
            if stop_after.is_some_and(|limit| computed >= limit) {
                info!("stopped after {computed} new cells; rerun with --resume to finish");
                return Ok(Outcome::Success);
            }
            let started = Instant::now();
            let cell = ctx.pool.install(|| run_cell(&template, k, m, trials, ctx.seed));
            info!(
                "cell k = {k}, m = {m}: {}/{} successes ({:.1} s)",
                cell.successes,
                cell.trials(),
                started.elapsed().as_secs_f64()
            );
            let summary =
                CellSummary { k, m, successes: cell.successes, failures: cell.failures, errored: cell.errored };
            write_trials_csv(
                BufWriter::new(File::create(cells_dir.join(format!("{stem}.trials.csv"))).map_err(runtime)?),
                &cell.records,
            )
            .map_err(runtime)?;
            fs::write(&summary_path, serde_json::to_vec(&summary).map_err(runtime)?).map_err(runtime)?;
            fs::write(&marker, b"").map_err(runtime)?;
            cells.push(cell);
            computed += 1;
        }
    }
    let grid = GridResult { k_values: k_values.clone(), m_values: m_values.clone(), cells };
    write_grid_csv(ctx.create("grid.csv")?, &grid).map_err(runtime)?;
    if cfg.output.write_trials {
        let mut out = ctx.create("trials.csv")?;
        for (i, c) in grid.cells.iter().enumerate() {
            let text =
                fs::read_to_string(cells_dir.join(format!("{}.trials.csv", cell_stem(c.k, c.m)))).map_err(runtime)?;
            let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |(_, rest)| rest) };
            out.write_all(body.as_bytes()).map_err(runtime)?;
        }
        out.flush().map_err(runtime)?;
    }
    info!("grid written to {}", ctx.out.join("grid.csv").display());
    Ok(Outcome::Success)
}

pub fn sweep(ctx: &Context) -> CmdResult {
    let cfg = &ctx.config;
    let template = cfg.trial_template().map_err(usage)?;
    let m_values = cfg.m_axis().map_err(usage)?;
    let trials = cfg.experiment.trials;
    let rows = ctx
        .pool
        .install(|| {
            if cfg.prior.is_sparse() {
                spectral_closeness_sweep(
                    template.n,
                    template.k,
                    &m_values,
                    trials,
                    ctx.seed,
                    cfg.algorithm.sparse.alpha,
                    cfg.problem.memory_budget,
                )
            } else {
                recovery_sweep(&template, &cfg.experiment.sweep_algorithms, &m_values, trials, ctx.seed)
            }
        })
        .map_err(runtime)?;
    ctx.prepare_out()?;
    write_sweep_csv(ctx.create("sweep.csv")?, &rows).map_err(runtime)?;
    info!("sweep written to {}", ctx.out.join("sweep.csv").display());
    Ok(Outcome::Success)
}

/// Measurement count of the expectation check.
const EXPECTATION_M: usize = 100_000;

pub fn verify(ctx: &Context, bound_scale: f64) -> CmdResult {
    if !(bound_scale > 0.0 && bound_scale.is_finite()) {
        return Err(usage(anyhow!("--bound-scale must be positive and finite")));
    }
    let seed = ctx.seed;
    let reports: Vec<CheckReport> = ctx
        .pool
        .install(|| -> quadrec::Result<Vec<CheckReport>> {
            let mut reports = concentration_suite(seed)?;
            let x = sample_sparse_signal(10, 10, derive_seed(seed, &[2, 0]), true)?.values;
            reports.push(expectation_check(10, EXPECTATION_M, derive_seed(seed, &[2, 1]), &x)?);
            Ok(reports)
        })
        .map_err(runtime)?
        .iter()
        .map(|r| r.rescaled(bound_scale))
        .collect();
    println!("{}", serde_json::to_string_pretty(&reports).map_err(runtime)?);
    for r in &reports {
        info!(
            "{}: {} (observed {:.4}, bound {:.4})",
            r.name,
            if r.pass { "pass" } else { "FAIL" },
            r.observed,
            r.bound
        );
    }
    Ok(if reports.iter().all(|r| r.pass) { Outcome::Success } else { Outcome::Failure })
}
