//! The two-stage selection pipeline, repeated over simulation runs.
//!
//! Every run generates data, trains the λ grid on the learning data only,
//! scores the candidates on validation data, preselects, refits the
//! preselected models on the full learning data, evaluates them on the
//! evaluation set, picks the final model and computes every requested bound
//! for it. Its true performance comes from the ground-truth set.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mabt_core::baselines::sidak_adjust;
use mabt_core::measures::evaluate;
use mabt_core::methods::{compute_bound, BaseMethod, BoundOutcome, Method};
use mabt_core::resample::{bootstrap_performance, draw_resamples, ResamplePlan};
use mabt_core::rng::derive_seed;
use mabt_core::selection::{
    cv_performance, final_select, holdout_performance, preselect, Predictor, Rule, Trainer,
};
use mabt_core::tilting::fallback_lower_bound;
use mabt_core::{Error, EvaluationTable, MeasureKind, WeightVector};

use crate::error::{Result, SimError};
use crate::lasso::{fit_path, grid_fractions, lambda_max, LassoGridTrainer, LogisticLasso};
use crate::scenario::{gen_scenario_a, DataRole, Dataset, InjectedData, RunData, ScenarioAConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationKind {
    Holdout,
    Cv,
}

/// How λ is chosen when a preselected model is refit on the learning data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefitLambda {
    /// Same fraction of λ_max, with λ_max recomputed on the learning data.
    Proportional,
    /// Same absolute λ as on the training data.
    Fixed,
}

/// One simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub measure: MeasureKind,
    pub alpha: f64,
    pub resamples: usize,
    pub runs: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub rules: Vec<Rule>,
    pub validation: ValidationKind,
    pub cv_folds: usize,
    pub grid_size: usize,
    pub refit: RefitLambda,
    pub scenario: ScenarioAConfig,
    /// Optional labelled feature CSV used instead of generated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "scenario-a".into(),
            measure: MeasureKind::Accuracy,
            alpha: 0.05,
            resamples: 2000,
            runs: 100,
            seed: 1,
            methods: vec![
                Method::plain(BaseMethod::Mabt),
                Method::plain(BaseMethod::Bt),
            ],
            rules: vec![Rule::SingleBest, Rule::TopFraction(0.1)],
            validation: ValidationKind::Holdout,
            cv_folds: 10,
            grid_size: 100,
            refit: RefitLambda::Proportional,
            scenario: ScenarioAConfig::default(),
            data_file: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must lie in (0, 0.5), got {}", self.alpha));
        }
        if self.resamples < 100 {
            return bad(format!(
                "resamples must be at least 100, got {}",
                self.resamples
            ));
        }
        if self.runs == 0 {
            return bad("runs must be positive".into());
        }
        if self.methods.is_empty() || self.rules.is_empty() {
            return bad("at least one method and one rule are required".into());
        }
        for m in &self.methods {
            m.check_measure(self.measure)?;
        }
        for r in &self.rules {
            r.validate()?;
            if *r == Rule::WithinOneSe && self.validation != ValidationKind::Cv {
                return bad("within-1-se needs validation = \"cv\"".into());
            }
        }
        if self.grid_size == 0 {
            return bad("grid_size must be positive".into());
        }
        if self.validation == ValidationKind::Cv && self.cv_folds < 2 {
            return bad(format!(
                "cv_folds must be at least 2, got {}",
                self.cv_folds
            ));
        }
        if self.data_file.is_none() {
            self.scenario.validate()?;
        } else {
            self.scenario.split.validate()?;
        }
        Ok(())
    }
}

/// Where each run's data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    ScenarioA,
    Injected(Arc<InjectedData>),
}

impl DataSource {
    fn draw(&self, config: &ExperimentConfig, seed: u64) -> Result<RunData> {
        match self {
            DataSource::ScenarioA => gen_scenario_a(&config.scenario, seed),
            DataSource::Injected(d) => {
                d.split(config.scenario.n_total, &config.scenario.split, seed)
            }
        }
    }
}

/// Outcome of one method in one run under one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub method: String,
    pub rule: String,
    pub measure: MeasureKind,
    pub alpha: f64,
    pub n_total: usize,
    pub m: usize,
    /// Grid index of the finally selected candidate.
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

/// A run, rule or method that produced no record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub rule: Option<String>,
    pub method: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    /// Lasso fits that hit the sweep cap before converging.
    pub nonconverged_fits: usize,
}

#[derive(Default)]
struct RunOutput {
    records: Vec<RunRecord>,
    failures: Vec<RunFailure>,
    nonconverged: usize,
}

/// Runs the experiment; `progress` receives the number of completed runs.
pub fn run_experiment(
    config: &ExperimentConfig,
    source: &DataSource,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<ExperimentOutput> {
    config.validate()?;
    let done = AtomicUsize::new(0);
    let outputs: Vec<RunOutput> = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let out = run_once(config, source, run).unwrap_or_else(|e| RunOutput {
                failures: vec![RunFailure {
                    run,
                    rule: None,
                    method: None,
                    message: e.to_string(),
                }],
                ..Default::default()
            });
            progress(done.fetch_add(1, Ordering::Relaxed) + 1);
            out
        })
        .collect();
    let mut result = ExperimentOutput::default();
    for out in outputs {
        result.records.extend(out.records);
        result.failures.extend(out.failures);
        result.nonconverged_fits += out.nonconverged;
    }
    Ok(result)
}

/// Candidate models in grid order plus the means to refit any of them.
struct Stage {
    eta: mabt_core::selection::ValidationScores,
    /// Models fitted on the learning data, filled lazily for the holdout path.
    refit: Vec<Option<LogisticLasso>>,
    refit_lambdas: Vec<f64>,
}

fn run_once(config: &ExperimentConfig, source: &DataSource, run: usize) -> Result<RunOutput> {
    let run_seed = derive_seed(config.seed, run as u64);
    let data = source.draw(config, run_seed)?;
    let learning = data.learning()?;
    debug_assert_eq!(learning.role, DataRole::Learning);
    let trainer = LassoGridTrainer::new(config.grid_size);
    let kind = config.measure;
    let mut out = RunOutput::default();

    let mut stage = match config.validation {
        ValidationKind::Holdout => {
            let eta = holdout_performance(
                &data.train.x,
                &data.train.y,
                &data.validation.x,
                &data.validation.y,
                &trainer,
                kind,
            )?;
            let base = match config.refit {
                RefitLambda::Proportional => lambda_max(&learning.x, &learning.y)?,
                RefitLambda::Fixed => lambda_max(&data.train.x, &data.train.y)?,
            };
            Stage {
                eta,
                refit: vec![None; config.grid_size],
                refit_lambdas: grid_fractions(config.grid_size)
                    .iter()
                    .map(|f| f * base)
                    .collect(),
            }
        }
        ValidationKind::Cv => {
            let eta = cv_performance(
                &learning.x,
                &learning.y,
                &trainer,
                kind,
                config.cv_folds,
                derive_seed(run_seed, 2),
            )?;
            let models = trainer.train(&learning.x, &learning.y)?;
            out.nonconverged += models.iter().filter(|m| !m.diagnostics.converged).count();
            Stage {
                eta,
                refit_lambdas: models.iter().map(|m| m.lambda).collect(),
                refit: models.into_iter().map(Some).collect(),
            }
        }
    };

    let needs_bootstrap = config.methods.iter().any(|m| m.base.needs_bootstrap());
    let n_eval = data.evaluation.n();
    let plan: Option<Arc<ResamplePlan>> = if needs_bootstrap {
        Some(Arc::new(draw_resamples(
            n_eval,
            config.resamples,
            derive_seed(run_seed, 1),
        )?))
    } else {
        None
    };

    for rule in &config.rules {
        let rule_name = rule.to_string();
        let fail = |method: Option<String>, e: &dyn std::fmt::Display| RunFailure {
            run,
            rule: Some(rule_name.clone()),
            method,
            message: e.to_string(),
        };
        let outcome = match preselect(&stage.eta, *rule) {
            Ok(o) => o,
            Err(e) => {
                out.failures.push(fail(None, &e));
                continue;
            }
        };
        let missing: Vec<usize> = outcome
            .preselected
            .iter()
            .copied()
            .filter(|&k| stage.refit[k].is_none())
            .collect();
        if !missing.is_empty() {
            let mut order = missing;
            order.sort_unstable();
            let lambdas: Vec<f64> = order.iter().map(|&k| stage.refit_lambdas[k]).collect();
            match fit_path(&learning.x, &learning.y, &lambdas, &trainer.settings) {
                Ok(fits) => {
                    for (k, fit) in order.into_iter().zip(fits) {
                        out.nonconverged += usize::from(!fit.diagnostics.converged);
                        stage.refit[k] = Some(fit);
                    }
                }
                Err(e) => {
                    out.failures.push(fail(None, &e));
                    continue;
                }
            }
        }
        let models: Vec<&LogisticLasso> = outcome
            .preselected
            .iter()
            .map(|&k| stage.refit[k].as_ref().expect("refit above"))
            .collect();
        match evaluate_rule(
            config,
            &data.evaluation,
            &data.ground_truth,
            &models,
            plan.clone(),
        ) {
            Ok(rows) => {
                for (method, row) in config.methods.iter().zip(rows) {
                    match row {
                        Ok(r) => out.records.push(RunRecord {
                            run,
                            method: method.to_string(),
                            rule: rule_name.clone(),
                            measure: kind,
                            alpha: config.alpha,
                            n_total: config.scenario.n_total,
                            m: models.len(),
                            selected: outcome.preselected[r.position],
                            plug_in: r.bound.plug_in,
                            bound: r.bound.lower_bound,
                            true_performance: r.truth,
                            covered: r.truth >= r.bound.lower_bound,
                            tightness: r.truth - r.bound.lower_bound,
                            fallback_used: r.bound.fallback_used,
                            adjusted_alpha: r.bound.adjusted_alpha,
                            tau: r.bound.tau,
                        }),
                        Err(e) => out.failures.push(fail(Some(method.to_string()), &e)),
                    }
                }
            }
            Err(e) => out.failures.push(fail(None, &e)),
        }
    }
    Ok(out)
}

struct MethodRow {
    position: usize,
    bound: BoundOutcome,
    truth: f64,
}

fn evaluate_rule(
    config: &ExperimentConfig,
    evaluation: &Dataset,
    ground_truth: &Dataset,
    models: &[&LogisticLasso],
    plan: Option<Arc<ResamplePlan>>,
) -> Result<Vec<std::result::Result<MethodRow, Error>>> {
    debug_assert_eq!(evaluation.role, DataRole::Evaluation);
    debug_assert_eq!(ground_truth.role, DataRole::GroundTruth);
    let kind = config.measure;
    let columns: Vec<Vec<f64>> = models
        .iter()
        .map(|m| m.predict(&evaluation.x, kind))
        .collect();
    let ids = (0..models.len()).map(|k| format!("c{k}")).collect();
    let table = EvaluationTable::new(evaluation.y.clone(), columns, ids)?;
    table.validate_for(kind)?;
    let plug_ins = table.plug_in_all(kind)?;
    let s = final_select(&plug_ins)?;
    let truth = evaluate(
        kind,
        &ground_truth.y,
        &models[s].predict(&ground_truth.x, kind),
        &WeightVector::uniform(ground_truth.n()),
    )?;
    let ensemble = match plan {
        Some(p) => Some(bootstrap_performance(&table, kind, p)?),
        None => None,
    };
    Ok(config
        .methods
        .iter()
        .map(|&method| {
            let bound =
                match compute_bound(&table, kind, s, method, ensemble.as_ref(), config.alpha) {
                    Err(Error::CalibrationFailure { .. }) => {
                        calibration_fallback(&table, kind, s, method, config.alpha)
                    }
                    other => other,
                }?;
            Ok(MethodRow {
                position: s,
                bound,
                truth,
            })
        })
        .collect())
}

/// Conservative replacement when the tilting calibration cannot reach its level.
fn calibration_fallback(
    table: &EvaluationTable,
    kind: MeasureKind,
    j: usize,
    method: Method,
    alpha: f64,
) -> std::result::Result<BoundOutcome, Error> {
    let level = if method.sidak || method.base == BaseMethod::Mabt {
        sidak_adjust(alpha, table.m())?
    } else {
        alpha
    };
    let plug_in = table.plug_in(kind, j)?;
    Ok(BoundOutcome {
        lower_bound: fallback_lower_bound(table, kind, j, level)?.min(plug_in),
        plug_in,
        adjusted_alpha: level,
        tau: None,
        fallback_used: true,
        iterations: 0,
    })
}
