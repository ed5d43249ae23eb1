//! `mabt bound`: lower bounds for the best column of a prediction file.

use std::path::PathBuf;

use anyhow::anyhow;
use serde::{Deserialize, Serialize};

use mabt_core::methods::{compute_bound, BaseMethod, Method};
use mabt_core::resample::{bootstrap_performance, default_resamples, draw_resamples};
use mabt_core::{final_select, MeasureKind, Rule};

use crate::predictions::PredictionFile;
use crate::{CmdResult, Failure};

pub const REPORT_SCHEMA: &str = "mabt-bound-report/1";

#[derive(Debug, Clone)]
pub struct BoundRequest {
    pub input: PathBuf,
    pub measure: MeasureKind,
    pub methods: Vec<Method>,
    pub rule: Rule,
    pub alpha: f64,
    /// `None` picks the measure's default.
    pub resamples: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBound {
    pub method: String,
    pub lower_bound: f64,
    pub plug_in: f64,
    pub alpha: f64,
    pub adjusted_alpha: f64,
    pub tau: Option<f64>,
    pub fallback_used: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema: String,
    pub input: String,
    pub measure: MeasureKind,
    pub rule: String,
    pub n: usize,
    pub m: usize,
    pub model_ids: Vec<String>,
    pub plug_in_estimates: Vec<f64>,
    pub selected_model: String,
    pub alpha: f64,
    pub resamples: usize,
    pub seed: u64,
    /// Resamples whose AUC was undefined for the selected model.
    pub degenerate_rows: usize,
    pub bounds: Vec<MethodBound>,
}

/// One flat CSV row per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub input: String,
    pub measure: MeasureKind,
    pub rule: String,
    pub m: usize,
    pub selected_model: String,
    pub method: String,
    pub alpha: f64,
    pub adjusted_alpha: f64,
    pub plug_in: f64,
    pub lower_bound: f64,
    pub tau: Option<f64>,
    pub fallback_used: bool,
    pub resamples: usize,
    pub seed: u64,
    pub degenerate_rows: usize,
}

impl BoundReport {
    pub fn rows(&self) -> Vec<BoundRow> {
        self.bounds
            .iter()
            .map(|b| BoundRow {
                input: self.input.clone(),
                measure: self.measure,
                rule: self.rule.clone(),
                m: self.m,
                selected_model: self.selected_model.clone(),
                method: b.method.clone(),
                alpha: b.alpha,
                adjusted_alpha: b.adjusted_alpha,
                plug_in: b.plug_in,
                lower_bound: b.lower_bound,
                tau: b.tau,
                fallback_used: b.fallback_used,
                resamples: self.resamples,
                seed: self.seed,
                degenerate_rows: self.degenerate_rows,
            })
            .collect()
    }
}

pub fn cmd_bound(req: &BoundRequest) -> CmdResult<BoundReport> {
    if !(req.alpha > 0.0 && req.alpha < 0.5) {
        return Err(Failure::input(anyhow!(
            "--alpha must lie in (0, 0.5), got {}",
            req.alpha
        )));
    }
    let resamples = req
        .resamples
        .unwrap_or_else(|| default_resamples(req.measure));
    if resamples < 100 {
        return Err(Failure::input(anyhow!(
            "--B must be at least 100, got {resamples}"
        )));
    }
    if req.methods.is_empty() {
        return Err(Failure::input(anyhow!("no methods given")));
    }
    req.rule.validate()?;
    for m in &req.methods {
        m.check_measure(req.measure)?;
    }

    let file = PredictionFile::read_path(&req.input, req.measure).map_err(Failure::input)?;
    if file.m() == 1 && req.methods.iter().any(|m| m.base == BaseMethod::Mabt) {
        return Err(Failure::input(anyhow!(
            "mabt needs at least two model columns; use `bt` for a single model"
        )));
    }
    let table = file.into_table()?;
    table.validate_for(req.measure)?;
    let estimates = table.plug_in_all(req.measure)?;
    let s = final_select(&estimates)?;

    let ensemble = if req.methods.iter().any(|m| m.base.needs_bootstrap()) {
        let plan = draw_resamples(table.n(), resamples, req.seed)?;
        Some(bootstrap_performance(&table, req.measure, plan)?)
    } else {
        None
    };
    let bounds = req
        .methods
        .iter()
        .map(|&method| {
            let o = compute_bound(&table, req.measure, s, method, ensemble.as_ref(), req.alpha)?;
            Ok(MethodBound {
                method: method.to_string(),
                lower_bound: o.lower_bound,
                plug_in: o.plug_in,
                alpha: req.alpha,
                adjusted_alpha: o.adjusted_alpha,
                tau: o.tau,
                fallback_used: o.fallback_used,
                iterations: o.iterations,
            })
        })
        .collect::<CmdResult<Vec<_>>>()?;

    Ok(BoundReport {
        schema: REPORT_SCHEMA.into(),
        input: req.input.display().to_string(),
        measure: req.measure,
        rule: req.rule.to_string(),
        n: table.n(),
        m: table.m(),
        model_ids: table.model_ids().to_vec(),
        plug_in_estimates: estimates,
        selected_model: table.model_ids()[s].clone(),
        alpha: req.alpha,
        resamples,
        seed: req.seed,
        degenerate_rows: ensemble.as_ref().map_or(0, |e| e.degenerate_rows(s)),
        bounds,
    })
}
