//! `mabt simulate`: runs the experiments of a TOML config and writes one CSV row per record.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use mabt_core::MeasureKind;
use mabt_simlab::{run_experiment, DataSource, ExperimentConfig, InjectedData, RunRecord};

use crate::{CmdResult, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationFile {
    pub experiment: Vec<ExperimentConfig>,
}

impl SimulationFile {
    pub fn parse(text: &str) -> CmdResult<Self> {
        let file: SimulationFile =
            toml::from_str(text).map_err(|e| Failure::input(anyhow!("config: {e}")))?;
        if file.experiment.is_empty() {
            return Err(Failure::input(anyhow!(
                "config has no [[experiment]] tables"
            )));
        }
        for (k, e) in file.experiment.iter().enumerate() {
            if file.experiment[..k].iter().any(|o| o.name == e.name) {
                return Err(Failure::input(anyhow!(
                    "duplicate experiment name `{}`",
                    e.name
                )));
            }
            e.validate()
                .map_err(|err| Failure::input(anyhow!("experiment `{}`: {err}", e.name)))?;
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> CmdResult<String> {
        toml::to_string(self).map_err(Failure::input)
    }
}

/// A run record tagged with its experiment, as written to the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub run: usize,
    pub method: String,
    pub rule: String,
    pub measure: MeasureKind,
    pub alpha: f64,
    pub n_total: usize,
    pub m: usize,
    pub selected: usize,
    pub plug_in: f64,
    pub bound: f64,
    pub true_performance: f64,
    pub covered: bool,
    pub tightness: f64,
    pub fallback_used: bool,
    pub adjusted_alpha: f64,
    pub tau: Option<f64>,
}

pub const RESULT_COLUMNS: [&str; 17] = [
    "experiment",
    "run",
    "method",
    "rule",
    "measure",
    "alpha",
    "n_total",
    "m",
    "selected",
    "plug_in",
    "bound",
    "true_performance",
    "covered",
    "tightness",
    "fallback_used",
    "adjusted_alpha",
    "tau",
];

impl ResultRow {
    pub fn new(experiment: &str, r: RunRecord) -> Self {
        ResultRow {
            experiment: experiment.to_string(),
            run: r.run,
            method: r.method,
            rule: r.rule,
            measure: r.measure,
            alpha: r.alpha,
            n_total: r.n_total,
            m: r.m,
            selected: r.selected,
            plug_in: r.plug_in,
            bound: r.bound,
            true_performance: r.true_performance,
            covered: r.covered,
            tightness: r.tightness,
            fallback_used: r.fallback_used,
            adjusted_alpha: r.adjusted_alpha,
            tau: r.tau,
        }
    }

    pub fn into_record(self) -> RunRecord {
        RunRecord {
            run: self.run,
            method: self.method,
            rule: self.rule,
            measure: self.measure,
            alpha: self.alpha,
            n_total: self.n_total,
            m: self.m,
            selected: self.selected,
            plug_in: self.plug_in,
            bound: self.bound,
            true_performance: self.true_performance,
            covered: self.covered,
            tightness: self.tightness,
            fallback_used: self.fallback_used,
            adjusted_alpha: self.adjusted_alpha,
            tau: self.tau,
        }
    }
}

/// Path of the echoed config next to `out`.
pub fn resolved_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".resolved.toml");
    PathBuf::from(s)
}

/// Runs every experiment of `config_path`, writes the results to `out` and
/// the fully resolved config beside it. Returns the number of rows written.
pub fn cmd_simulate(config_path: &Path, out: &Path) -> CmdResult<usize> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("cannot read {}", config_path.display()))
        .map_err(Failure::input)?;
    let file = SimulationFile::parse(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));

    let mut rows = Vec::new();
    for e in &file.experiment {
        let source = match &e.data_file {
            None => DataSource::ScenarioA,
            Some(p) => {
                let path = base.join(p);
                DataSource::Injected(Arc::new(InjectedData::from_csv(&path)?))
            }
        };
        let name = e.name.clone();
        let total = e.runs;
        let progress = move |done: usize| {
            if done.is_multiple_of(100) || done == total {
                eprintln!("[{name}] {done}/{total} runs");
            }
        };
        let output = run_experiment(e, &source, &progress)?;
        for f in &output.failures {
            eprintln!(
                "[{}] run {} {}{}: {}",
                e.name,
                f.run,
                f.rule.as_deref().unwrap_or("-"),
                f.method
                    .as_deref()
                    .map(|m| format!("/{m}"))
                    .unwrap_or_default(),
                f.message
            );
        }
        if output.nonconverged_fits > 0 {
            eprintln!(
                "[{}] {} lasso fits hit the iteration cap",
                e.name, output.nonconverged_fits
            );
        }
        rows.extend(
            output
                .records
                .into_iter()
                .map(|r| ResultRow::new(&e.name, r)),
        );
    }

    let write = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(out)
            .with_context(|| format!("cannot write {}", out.display()))?;
        if rows.is_empty() {
            w.write_record(RESULT_COLUMNS)?;
        }
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        std::fs::write(resolved_path(out), file.to_toml().map_err(|f| f.error)?)?;
        Ok(())
    };
    write().map_err(Failure::input)?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[experiment]]
name = "tiny"
measure = "accuracy"
alpha = 0.05
resamples = 200
runs = 2
seed = 5
methods = ["mabt", "bt"]
rules = ["single-best", "top-fraction=0.1"]
validation = "holdout"
cv_folds = 10
grid_size = 20
refit = "proportional"

[experiment.scenario]
n_total = 200
p = 50
n_nonzero = 10
signal = 2.0
ground_truth_n = 2000
"#;

    #[test]
    fn resolved_config_round_trips() {
        let f = SimulationFile::parse(MINIMAL).unwrap();
        let again = SimulationFile::parse(&f.to_toml().unwrap()).unwrap();
        assert_eq!(f, again);
        assert_eq!(f.experiment[0].scenario.split.train, 0.5);
    }

    #[test]
    fn unknown_keys_and_bad_alpha_are_rejected() {
        let extra = MINIMAL.replace("runs = 2", "runs = 2\nverbose = true");
        assert_eq!(
            SimulationFile::parse(&extra).unwrap_err().code,
            crate::EXIT_INPUT
        );
        let bad = MINIMAL.replace("alpha = 0.05", "alpha = 0.6");
        assert_eq!(
            SimulationFile::parse(&bad).unwrap_err().code,
            crate::EXIT_INPUT
        );
        assert!(SimulationFile::parse("").is_err());
    }

    #[test]
    fn header_matches_columns() {
        let mut w = csv::Writer::from_writer(Vec::new());
        let f = SimulationFile::parse(MINIMAL).unwrap();
        let rec = RunRecord {
            run: 0,
            method: "bt".into(),
            rule: "single-best".into(),
            measure: MeasureKind::Accuracy,
            alpha: f.experiment[0].alpha,
            n_total: 200,
            m: 1,
            selected: 3,
            plug_in: 0.8,
            bound: 0.7,
            true_performance: 0.75,
            covered: true,
            tightness: 0.05,
            fallback_used: false,
            adjusted_alpha: 0.05,
            tau: None,
        };
        w.serialize(ResultRow::new("x", rec)).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULT_COLUMNS.join(","));
    }
}
