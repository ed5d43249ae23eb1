//! `mabt report`: coverage summaries of a results CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use mabt_simlab::{aggregate, RunRecord, Summary};

use crate::simulate::{ResultRow, RESULT_COLUMNS};
use crate::{CmdResult, Failure};

pub const SUMMARY_SCHEMA: &str = "mabt-summary/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub alpha: f64,
    pub runs: usize,
    /// Coverage below this is flagged as liberal.
    pub liberal_threshold: f64,
    pub cells: Vec<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub schema: String,
    pub source: String,
    pub experiments: Vec<ExperimentSummary>,
}

/// Flat CSV form of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub rule: String,
    pub runs: usize,
    pub alpha: f64,
    pub coverage: f64,
    pub coverage_mcse: f64,
    pub liberal_threshold: f64,
    pub liberal: bool,
    pub mean_bound: f64,
    pub mean_bound_se: f64,
    pub mean_true: f64,
    pub mean_true_se: f64,
    pub mean_tightness: f64,
    pub mean_tightness_se: f64,
    pub mean_m: f64,
    pub fallbacks: usize,
}

pub fn read_results(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        bail!("{}: empty file", path.display());
    }
    if headers.iter().ne(RESULT_COLUMNS) {
        bail!(
            "{}: schema mismatch, expected columns `{}`",
            path.display(),
            RESULT_COLUMNS.join(",")
        );
    }
    let rows = reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{}: row {}", path.display(), i + 1)))
        .collect::<anyhow::Result<Vec<ResultRow>>>()?;
    if rows.is_empty() {
        bail!("{}: no result rows", path.display());
    }
    Ok(rows)
}

pub fn summarize(source: &str, rows: Vec<ResultRow>) -> CmdResult<SummaryReport> {
    let mut by_experiment: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for r in rows {
        by_experiment
            .entry(r.experiment.clone())
            .or_default()
            .push(r.into_record());
    }
    let experiments = by_experiment
        .into_iter()
        .map(|(experiment, records)| {
            let cells = aggregate(&records)?;
            let alpha = cells[0].alpha;
            if cells.iter().any(|c| c.alpha != alpha) {
                return Err(Failure::input(anyhow!(
                    "experiment `{experiment}` mixes several alpha values"
                )));
            }
            let runs = cells.iter().map(|c| c.runs).max().unwrap_or(0);
            Ok(ExperimentSummary {
                liberal_threshold: mabt_simlab::liberal_threshold(alpha, runs),
                experiment,
                alpha,
                runs,
                cells,
            })
        })
        .collect::<CmdResult<Vec<_>>>()?;
    Ok(SummaryReport {
        schema: SUMMARY_SCHEMA.into(),
        source: source.into(),
        experiments,
    })
}

impl SummaryReport {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.experiments
            .iter()
            .flat_map(|e| {
                e.cells.iter().map(|c| SummaryRow {
                    experiment: e.experiment.clone(),
                    method: c.method.clone(),
                    rule: c.rule.clone(),
                    runs: c.runs,
                    alpha: c.alpha,
                    coverage: c.coverage,
                    coverage_mcse: c.coverage_mcse,
                    liberal_threshold: c.liberal_threshold,
                    liberal: c.liberal,
                    mean_bound: c.mean_bound,
                    mean_bound_se: c.mean_bound_se,
                    mean_true: c.mean_true,
                    mean_true_se: c.mean_true_se,
                    mean_tightness: c.mean_tightness,
                    mean_tightness_se: c.mean_tightness_se,
                    mean_m: c.mean_m,
                    fallbacks: c.fallbacks,
                })
            })
            .collect()
    }

    /// Plain-text table with the liberal threshold in each experiment header.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for e in &self.experiments {
            let _ = writeln!(
                s,
                "# {}: alpha={} runs={} liberal threshold={:.4}",
                e.experiment, e.alpha, e.runs, e.liberal_threshold
            );
            let _ = writeln!(
                s,
                "{:<14} {:<20} {:>9} {:>7} {:>8} {:>10} {:>10} {:>10} {:>7}",
                "method",
                "rule",
                "coverage",
                "mcse",
                "liberal",
                "bound",
                "true",
                "tightness",
                "mean_m"
            );
            for c in &e.cells {
                let _ = writeln!(
                    s,
                    "{:<14} {:<20} {:>9.4} {:>7.4} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>7.2}",
                    c.method,
                    c.rule,
                    c.coverage,
                    c.coverage_mcse,
                    if c.liberal { "yes" } else { "no" },
                    c.mean_bound,
                    c.mean_true,
                    c.mean_tightness,
                    c.mean_m
                );
            }
        }
        s
    }
}

pub fn cmd_report(path: &Path) -> CmdResult<SummaryReport> {
    let rows = read_results(path).map_err(Failure::input)?;
    summarize(&path.display().to_string(), rows)
}
