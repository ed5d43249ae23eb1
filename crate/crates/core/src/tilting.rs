//! Exponential tilting of the empirical distribution, importance-sampling
//! reweighting of bootstrap resamples, and the single-model bootstrap
//! tilting (BT) lower bound.
//!
//! The tilted distribution puts mass `p_i(τ) ∝ exp(τ·z_i)` on observation
//! `i`, where `z` are the influence scores of the model. A resample with
//! counts `c` then has relative likelihood
//!
//! ```text
//! W(τ) = Π_i (n·p_i(τ))^{c_i} = exp(τ·Σ_i c_i z_i − n·A(τ) + n·ln n),
//! ```
//!
//! with `A(τ) = ln Σ_k exp(τ·z_k)`. Only the per-resample sufficient
//! statistic `Σ_i c_i z_i` depends on the resample, so every level
//! evaluation during calibration costs O(B).
//!
//! The lower bound is found by calibrating `τ < 0` until the tilted
//! probability of a bootstrap estimate at least as large as the observed one
//! drops to α, taking the largest such `τ`. The statistic re-evaluated under
//! the tilted weights is the bound.

use serde::{Deserialize, Serialize};

use crate::baselines::{cp_lower, hm_lower, hm_variance, AucSummary, BinomialSummary};
use crate::error::{Error, Result};
use crate::measures::{evaluate, influence_scores, EvaluationTable, MeasureKind, WeightVector};
use crate::resample::BootstrapEnsemble;

/// One-parameter exponential family over the observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltingFamily {
    z: Vec<f64>,
    centered: bool,
}

impl TiltingFamily {
    /// Fails with [`Error::DegenerateTilt`] when all scores are equal.
    pub fn new(z: Vec<f64>, centered: bool) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "tilting needs n >= 2, got {}",
                z.len()
            )));
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite influence score at position {i}"
            )));
        }
        let (lo, hi) = z
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
            return Err(Error::DegenerateTilt);
        }
        let z = if centered {
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            z.into_iter().map(|v| v - mean).collect()
        } else {
            z
        };
        Ok(TiltingFamily { z, centered })
    }

    /// Family built from the influence scores of model column `j`.
    pub fn for_model(
        data: &EvaluationTable,
        kind: MeasureKind,
        j: usize,
        centered: bool,
    ) -> Result<Self> {
        let z = influence_scores(kind, data.labels(), data.column(j))?;
        TiltingFamily::new(z, centered)
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// `ln Σ_k exp(τ·z_k)`, evaluated with the maximum exponent factored out.
    pub fn log_partition(&self, tau: f64) -> f64 {
        let top = self
            .z
            .iter()
            .map(|&v| tau * v)
            .fold(f64::NEG_INFINITY, f64::max);
        top + self
            .z
            .iter()
            .map(|&v| (tau * v - top).exp())
            .sum::<f64>()
            .ln()
    }

    /// `Σ_i counts_i · z_i`.
    pub fn sufficient_statistic(&self, counts: &[u32]) -> f64 {
        counts
            .iter()
            .zip(&self.z)
            .map(|(&c, &v)| f64::from(c) * v)
            .sum()
    }
}

/// Tilted sampling weights `p_i(τ) = exp(τ·z_i) / Σ_k exp(τ·z_k)`.
pub fn tilt_weights(family: &TiltingFamily, tau: f64) -> Result<WeightVector> {
    if !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau must be finite, got {tau}"
        )));
    }
    let log_z = family.log_partition(tau);
    let w: Vec<f64> = family.z.iter().map(|&v| (tau * v - log_z).exp()).collect();
    WeightVector::normalized(w)
}

/// `ln W_b = Σ_i counts_i · ln(n·p_i)`; `-inf` when a resampled observation has zero weight.
pub fn log_importance_weight(counts: &[u32], p: &WeightVector, n: usize) -> Result<f64> {
    if counts.len() != p.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            found: counts.len(),
        });
    }
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if total != n as u64 {
        return Err(Error::InvalidArgument(format!(
            "resample counts sum to {total}, expected {n}"
        )));
    }
    let nf = n as f64;
    let mut acc = 0.0;
    for (&c, &pi) in counts.iter().zip(p.as_slice()) {
        if c == 0 {
            continue;
        }
        if pi == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        acc += f64::from(c) * (nf * pi).ln();
    }
    Ok(acc)
}

/// Value of a tilted ECDF, clamped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedEcdfValue {
    pub value: f64,
    /// Amount by which the raw importance-sampling estimate exceeded one.
    pub overshoot: f64,
}

/// `(1/B) Σ_b W_b · I{θ*_b ≤ x}`.
pub fn tilted_ecdf(theta_star: &[f64], log_w: &[f64], x: f64) -> TiltedEcdfValue {
    let b = theta_star.len() as f64;
    let raw: f64 = theta_star
        .iter()
        .zip(log_w)
        .filter(|(&t, _)| t <= x)
        .map(|(_, &lw)| lw.exp())
        .sum::<f64>()
        / b;
    TiltedEcdfValue {
        value: raw.clamp(0.0, 1.0),
        overshoot: (raw - 1.0).max(0.0),
    }
}

/// The performance measure of `model` re-evaluated under weights `p`.
pub fn tilted_statistic(
    data: &EvaluationTable,
    kind: MeasureKind,
    model: &str,
    p: &WeightVector,
) -> Result<f64> {
    let j = data.index_of(model)?;
    evaluate(kind, data.labels(), data.column(j), p)
}

/// Outcome of a tilting calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Calibrated tilting parameter; `None` when a fallback bound was used.
    pub tau: Option<f64>,
    pub lower_bound: f64,
    pub plug_in: f64,
    /// Tilted exceedance probability at the calibrated `tau`.
    pub achieved_level: f64,
    /// Level the exceedance probability was calibrated against.
    pub target_level: f64,
    pub iterations: usize,
    pub fallback_used: bool,
}

/// Bracket and stopping rules of the bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSettings {
    pub initial_tau: f64,
    pub max_abs_tau: f64,
    pub tau_tolerance: f64,
    /// Bisection also stops once the level changes by less than this fraction of `1/B`.
    pub level_resolution: f64,
    pub max_iterations: usize,
    pub centered: bool,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            initial_tau: -1.0,
            max_abs_tau: 50.0,
            tau_tolerance: 1e-6,
            level_resolution: 0.1,
            max_iterations: 200,
            centered: false,
        }
    }
}

/// Tilted probability that a model's bootstrap estimate is at least its
/// observed value, as a function of `τ`.
#[derive(Debug, Clone)]
pub(crate) struct TiltedTail {
    family: TiltingFamily,
    /// Sufficient statistics of the resamples with `θ*_b ≥ θ̂`.
    exceeding: Vec<f64>,
    n: usize,
    b: usize,
}

impl TiltedTail {
    pub(crate) fn new(family: TiltingFamily, ensemble: &BootstrapEnsemble, j: usize) -> Self {
        let threshold = ensemble.plug_in(j);
        let plan = ensemble.plan();
        let exceeding = ensemble
            .column(j)
            .iter()
            .zip(plan.rows())
            .filter(|(&t, _)| t >= threshold)
            .map(|(_, counts)| family.sufficient_statistic(counts))
            .collect();
        TiltedTail {
            n: plan.n(),
            b: plan.b(),
            family,
            exceeding,
        }
    }

    pub(crate) fn level(&self, tau: f64) -> f64 {
        let nf = self.n as f64;
        let offset = -nf * self.family.log_partition(tau) + nf * nf.ln();
        self.exceeding
            .iter()
            .map(|&s| (tau * s + offset).exp())
            .sum::<f64>()
            / self.b as f64
    }

    pub(crate) fn family(&self) -> &TiltingFamily {
        &self.family
    }
}

#[derive(Debug)]
pub(crate) struct Calibrated {
    pub tau: f64,
    pub level: f64,
    pub iterations: usize,
}

/// Largest `τ ≤ 0` (within bracket resolution) whose level passes `accept`.
///
/// `accept` must hold for sufficiently negative `τ`. The returned `τ` is
/// always on the accepted side of the final bracket.
pub(crate) fn calibrate_tau(
    level: impl Fn(f64) -> f64,
    accept: impl Fn(f64) -> bool,
    b: usize,
    settings: &CalibrationSettings,
    target: f64,
) -> Result<Calibrated> {
    let mut iterations = 1;
    let level_hi0 = level(0.0);
    if accept(level_hi0) {
        return Ok(Calibrated {
            tau: 0.0,
            level: level_hi0,
            iterations,
        });
    }

    let mut hi = 0.0;
    let mut level_hi = level_hi0;
    let mut lo = settings.initial_tau;
    let mut level_lo = level(lo);
    iterations += 1;
    while !accept(level_lo) {
        if lo.abs() >= settings.max_abs_tau {
            return Err(Error::CalibrationFailure {
                tau_lo: lo,
                level_lo,
                target,
                iterations,
            });
        }
        hi = lo;
        level_hi = level_lo;
        lo = (2.0 * lo).max(-settings.max_abs_tau);
        level_lo = level(lo);
        iterations += 1;
    }

    let min_change = settings.level_resolution / b as f64;
    while hi - lo > settings.tau_tolerance
        && (level_hi - level_lo).abs() >= min_change
        && iterations < settings.max_iterations
    {
        let mid = 0.5 * (lo + hi);
        let level_mid = level(mid);
        iterations += 1;
        if accept(level_mid) {
            lo = mid;
            level_lo = level_mid;
        } else {
            hi = mid;
            level_hi = level_mid;
        }
    }
    Ok(Calibrated {
        tau: lo,
        level: level_lo,
        iterations,
    })
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 0.5), got {alpha}"
        )))
    }
}

/// Conservative bound used when the model's data cannot be tilted.
///
/// Accuracy falls back to Clopper-Pearson. AUC falls back to Hanley-McNeil
/// when its variance is positive, and to the trivial bound 0 otherwise.
pub fn fallback_lower_bound(
    data: &EvaluationTable,
    kind: MeasureKind,
    j: usize,
    alpha: f64,
) -> Result<f64> {
    match kind {
        MeasureKind::Accuracy => {
            let s = BinomialSummary::new(data.correct_count(j) as u64, data.n() as u64)?;
            cp_lower(&s, alpha)
        }
        MeasureKind::Auc => {
            let auc = data.plug_in(kind, j)?;
            let n_pos = data.labels().iter().filter(|&&y| y == 1).count();
            let n_neg = data.n() - n_pos;
            if hm_variance(auc, n_pos, n_neg) > 0.0 {
                hm_lower(
                    &AucSummary {
                        auc,
                        n_pos,
                        n_neg,
                        variance: 0.0,
                    },
                    alpha,
                )
            } else {
                Ok(0.0)
            }
        }
    }
}

pub(crate) fn fallback_result(
    data: &EvaluationTable,
    kind: MeasureKind,
    j: usize,
    alpha: f64,
    plug_in: f64,
) -> Result<CalibrationResult> {
    let bound = fallback_lower_bound(data, kind, j, alpha)?;
    Ok(CalibrationResult {
        tau: None,
        lower_bound: bound.min(plug_in),
        plug_in,
        achieved_level: alpha,
        target_level: alpha,
        iterations: 0,
        fallback_used: true,
    })
}

/// Calibrates model `j` against an acceptance rule on the tilted level.
pub(crate) fn calibrate_model(
    data: &EvaluationTable,
    kind: MeasureKind,
    j: usize,
    tail: &TiltedTail,
    accept: impl Fn(f64) -> bool,
    target: f64,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    let plug_in = data.plug_in(kind, j)?;
    let cal = calibrate_tau(|t| tail.level(t), accept, tail.b, settings, target)?;
    let p = tilt_weights(tail.family(), cal.tau)?;
    let tilted = evaluate(kind, data.labels(), data.column(j), &p)?;
    Ok(CalibrationResult {
        tau: Some(cal.tau),
        lower_bound: tilted.clamp(0.0, 1.0).min(plug_in),
        plug_in,
        achieved_level: cal.level,
        target_level: target,
        iterations: cal.iterations,
        fallback_used: false,
    })
}

/// Bootstrap tilting lower bound for a single model.
pub fn bt_lower_bound(
    data: &EvaluationTable,
    kind: MeasureKind,
    model: &str,
    ensemble: &BootstrapEnsemble,
    alpha: f64,
) -> Result<CalibrationResult> {
    bt_lower_bound_with(
        data,
        kind,
        model,
        ensemble,
        alpha,
        &CalibrationSettings::default(),
    )
}

pub fn bt_lower_bound_with(
    data: &EvaluationTable,
    kind: MeasureKind,
    model: &str,
    ensemble: &BootstrapEnsemble,
    alpha: f64,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    check_alpha(alpha)?;
    check_ensemble(data, kind, ensemble)?;
    let j = data.index_of(model)?;
    let family = match TiltingFamily::for_model(data, kind, j, settings.centered) {
        Ok(f) => f,
        Err(Error::DegenerateTilt) => {
            return fallback_result(data, kind, j, alpha, ensemble.plug_in(j))
        }
        Err(e) => return Err(e),
    };
    let tail = TiltedTail::new(family, ensemble, j);
    calibrate_model(
        data,
        kind,
        j,
        &tail,
        |level| level <= alpha,
        alpha,
        settings,
    )
}

pub(crate) fn check_ensemble(
    data: &EvaluationTable,
    kind: MeasureKind,
    ensemble: &BootstrapEnsemble,
) -> Result<()> {
    if ensemble.kind() != kind {
        return Err(Error::InvalidArgument(format!(
            "ensemble was computed for {}, not {kind}",
            ensemble.kind()
        )));
    }
    if ensemble.m() != data.m() || ensemble.plan().n() != data.n() {
        return Err(Error::InvalidArgument(
            "ensemble dimensions do not match the evaluation table".into(),
        ));
    }
    Ok(())
}
