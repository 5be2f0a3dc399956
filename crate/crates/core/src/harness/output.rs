use std::io::Write;

use super::{GridResult, SweepRow, TrialRecord};
use crate::error::{Error, Result};
use crate::recovery::TraceRecord;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(io)?;
    for row in rows {
        out.write_record(&row).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// `trials.csv`: one row per trial.
pub fn write_trials_csv<W: Write>(w: W, records: &[TrialRecord]) -> Result<()> {
    let header = [
        "trial_seed",
        "n",
        "k",
        "m",
        "algorithm",
        "status",
        "rel_dist",
        "cosine",
        "success",
        "iterations",
        "wall_time_ms",
        "error",
    ];
    write_rows(
        w,
        &header,
        records.iter().map(|r| {
            vec![
                r.spec.trial_seed.to_string(),
                r.spec.n.to_string(),
                r.spec.k.to_string(),
                r.spec.m.to_string(),
                r.spec.algorithm.name().to_string(),
                r.status.as_str().to_string(),
                fmt_opt(r.rel_dist),
                fmt_opt(r.cosine),
                r.success.to_string(),
                r.iterations.to_string(),
                fmt_f64(r.wall_time_ms),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// `grid.csv`: `k, m, success_rate, trials`, cells in axis order.
pub fn write_grid_csv<W: Write>(w: W, grid: &GridResult) -> Result<()> {
    write_rows(
        w,
        &["k", "m", "success_rate", "trials"],
        grid.cells
            .iter()
            .map(|c| vec![c.k.to_string(), c.m.to_string(), fmt_f64(c.success_rate()), c.trials().to_string()]),
    )
}

/// `sweep.csv`: `m, algo, q25, median, q75`.
pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    write_rows(
        w,
        &["m", "algo", "q25", "median", "q75"],
        rows.iter().map(|r| vec![r.m.to_string(), r.algo.clone(), fmt_f64(r.q25), fmt_f64(r.median), fmt_f64(r.q75)]),
    )
}

/// `trace.csv`: `t, residual_norm, nnz, rel_dist` (empty without a truth).
pub fn write_trace_csv<W: Write>(w: W, trace: &[TraceRecord]) -> Result<()> {
    write_rows(
        w,
        &["t", "residual_norm", "nnz", "rel_dist"],
        trace.iter().map(|r| vec![r.t.to_string(), fmt_f64(r.residual_norm), r.nnz.to_string(), fmt_opt(r.rel_dist)]),
    )
}
