//! Trace, timing and summary files.
//!
//! The trace is CSV with a header row and one record per vehicle per tick,
//! columns in the declaration order of [`TraceRecord`]. Every row carries
//! the format version so readers can reject files they do not understand.

use super::audit::SafetyViolation;
use crate::error::{Error, Result};
use crate::reconfig::SwitchEvent;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const TRACE_FORMAT_VERSION: u32 = 1;
pub const SUMMARY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub format_version: u32,
    pub time: f64,
    pub vehicle: usize,
    pub s: f64,
    pub r: f64,
    pub v: f64,
    pub theta: f64,
    pub k: f64,
    pub a: f64,
    pub kappa: f64,
    pub e_s: f64,
    pub e_r: f64,
    pub e: f64,
    pub x: f64,
    pub y: f64,
    /// Cartesian heading of the vehicle, rad.
    pub yaw: f64,
    pub road_left: f64,
    pub road_right: f64,
    pub formation: String,
    /// Position in the active priority list, 0 for the highest.
    pub rank: usize,
    pub solver_status: String,
    pub solver_iterations: usize,
    pub solver_cost: f64,
    /// Age of the parent plan used at the last replan; empty for the root
    /// and for bootstrap references.
    pub plan_age: Option<f64>,
    /// `;`-separated watched vehicles, their rules and first-knot slacks.
    pub watched: String,
    pub rules: String,
    pub slacks: String,
}

/// Wall-clock cost of one solve. Kept apart from the trace so traces stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub time: f64,
    pub vehicle: usize,
    pub solve_ms: f64,
    pub iterations: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub vehicle: usize,
    pub max: f64,
    pub mean: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub a: usize,
    pub b: usize,
    pub min_distance: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SolverStats {
    pub solves: usize,
    pub converged: usize,
    pub max_iter: usize,
    pub infeasible_hard: usize,
    pub mean_iterations: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl SolverStats {
    pub fn from_timing(timing: &[TimingRecord]) -> Self {
        if timing.is_empty() {
            return Self::default();
        }
        let mut ms: Vec<f64> = timing.iter().map(|t| t.solve_ms).collect();
        ms.sort_by(f64::total_cmp);
        let count = |s: &str| timing.iter().filter(|t| t.status == s).count();
        Self {
            solves: timing.len(),
            converged: count("converged"),
            max_iter: count("max-iter"),
            infeasible_hard: count("infeasible-hard"),
            mean_iterations: timing.iter().map(|t| t.iterations as f64).sum::<f64>() / timing.len() as f64,
            median_ms: percentile(&ms, 0.5),
            p99_ms: percentile(&ms, 0.99),
            max_ms: ms[ms.len() - 1],
        }
    }
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub simulated_time: f64,
    pub ticks: usize,
    pub vehicles: usize,
    pub completed: bool,
    pub abort_reason: Option<String>,
    pub formation_errors: Vec<ErrorStats>,
    pub min_distances: Vec<PairDistance>,
    pub solver: SolverStats,
    pub switch_events: Vec<SwitchEvent>,
    pub violations: Vec<SafetyViolation>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::TraceFormat(format!("{}: {e}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub const TRACE_COLUMNS: [&str; 27] = [
    "format_version",
    "time",
    "vehicle",
    "s",
    "r",
    "v",
    "theta",
    "k",
    "a",
    "kappa",
    "e_s",
    "e_r",
    "e",
    "x",
    "y",
    "yaw",
    "road_left",
    "road_right",
    "formation",
    "rank",
    "solver_status",
    "solver_iterations",
    "solver_cost",
    "plan_age",
    "watched",
    "rules",
    "slacks",
];

/// Writes the header even when there are no records.
pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_rows(path, records, &TRACE_COLUMNS)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let missing: Vec<&str> = TRACE_COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::TraceFormat(format!(
            "{}: missing columns {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        let rec: TraceRecord = row.map_err(|e| csv_error(path, e))?;
        if rec.format_version != TRACE_FORMAT_VERSION {
            return Err(Error::TraceFormat(format!(
                "{}: unsupported format version {} (expected {TRACE_FORMAT_VERSION})",
                path.display(),
                rec.format_version
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_timing(path: &Path, records: &[TimingRecord]) -> Result<()> {
    write_rows(path, records, &["time", "vehicle", "solve_ms", "iterations", "status"])
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
