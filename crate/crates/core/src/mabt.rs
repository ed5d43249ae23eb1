//! Multiplicity adjustment through per-model ECDF transforms and the
//! maximum ECDF over models, and the adjusted tilting calibration.
//!
//! Each bootstrap estimate is mapped through its own model's bootstrap ECDF,
//! which puts all models on a common uniform scale; the row-wise maximum over
//! models then has a distribution that accounts for having looked at all of
//! them. Calibration of the selected model's tilt targets a quantile of that
//! maximum instead of the nominal level.
//!
//! The calibration uses left limits `F(x-) = P*(θ* < x)` for the inner and
//! outer ECDFs. In that form the acceptance rule for a tilted exceedance
//! level `ℓ` reads
//!
//! ```text
//! ℓ ≤ α   and   #{b : min_j P*(θ*_j ≥ θ*_bj) ≤ ℓ} ≤ α·B,
//! ```
//!
//! i.e. `ℓ` is compared against the α-quantile of the row-wise minimum
//! bootstrap tail probability. With a single model the second condition is
//! implied by the first, so the bound coincides with plain bootstrap tilting.

use rayon::prelude::*;

use crate::baselines::sidak_adjust;
use crate::error::{Error, Result};
use crate::measures::{EvaluationTable, MeasureKind};
use crate::resample::BootstrapEnsemble;
use crate::tilting::{
    calibrate_model, check_alpha, check_ensemble, fallback_result, CalibrationResult,
    CalibrationSettings, TiltedTail, TiltingFamily,
};

/// Bootstrap ECDF of every model.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfTransform {
    sorted: Vec<Vec<f64>>,
}

impl EcdfTransform {
    pub fn m(&self) -> usize {
        self.sorted.len()
    }

    pub fn b(&self) -> usize {
        self.sorted.first().map_or(0, Vec::len)
    }

    /// Sorted bootstrap estimates of model `j`.
    pub fn sorted(&self, j: usize) -> &[f64] {
        &self.sorted[j]
    }

    /// `F̂*_j(x) = #{b : θ*_bj ≤ x} / B`.
    pub fn cdf(&self, j: usize, x: f64) -> f64 {
        let col = &self.sorted[j];
        col.partition_point(|&v| v <= x) as f64 / col.len() as f64
    }

    /// Left limit `#{b : θ*_bj < x} / B`.
    pub fn cdf_below(&self, j: usize, x: f64) -> f64 {
        let col = &self.sorted[j];
        col.partition_point(|&v| v < x) as f64 / col.len() as f64
    }

    /// `û*_bj = F̂*_j(θ*_bj)` for every resample `b`, in resample order.
    pub fn transform(&self, j: usize, theta_star: &[f64]) -> Vec<f64> {
        theta_star.iter().map(|&x| self.cdf(j, x)).collect()
    }

    fn count_at_least(&self, j: usize, x: f64) -> usize {
        let col = &self.sorted[j];
        col.len() - col.partition_point(|&v| v < x)
    }
}

/// ECDF of the row-wise maxima of transformed bootstrap estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxEcdf {
    sorted: Vec<f64>,
}

impl MaxEcdf {
    /// Builds the ECDF from raw row maxima.
    pub fn from_maxima(mut maxima: Vec<f64>) -> Self {
        maxima.sort_by(f64::total_cmp);
        MaxEcdf { sorted: maxima }
    }

    pub fn maxima(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{b : u_b ≤ v} / B`.
    pub fn at(&self, v: f64) -> f64 {
        self.sorted.partition_point(|&u| u <= v) as f64 / self.sorted.len() as f64
    }

    /// `#{b : u_b < v} / B`.
    pub fn below(&self, v: f64) -> f64 {
        self.sorted.partition_point(|&u| u < v) as f64 / self.sorted.len() as f64
    }
}

pub fn model_ecdfs(ensemble: &BootstrapEnsemble) -> EcdfTransform {
    let sorted = (0..ensemble.m())
        .map(|j| {
            let mut col = ensemble.column(j).to_vec();
            col.sort_by(f64::total_cmp);
            col
        })
        .collect();
    EcdfTransform { sorted }
}

/// Maximum ECDF over the models, using `û*_bj = F̂*_j(θ*_bj)`.
pub fn max_ecdf(transform: &EcdfTransform, ensemble: &BootstrapEnsemble) -> MaxEcdf {
    row_maxima(transform, ensemble, |j, x| transform.cdf(j, x))
}

/// Maximum ECDF over the models built from left limits `F̂*_j(θ*_bj -)`.
pub fn max_ecdf_left(transform: &EcdfTransform, ensemble: &BootstrapEnsemble) -> MaxEcdf {
    row_maxima(transform, ensemble, |j, x| transform.cdf_below(j, x))
}

fn row_maxima(
    transform: &EcdfTransform,
    ensemble: &BootstrapEnsemble,
    f: impl Fn(usize, f64) -> f64,
) -> MaxEcdf {
    let maxima = (0..ensemble.b())
        .map(|b| {
            (0..transform.m())
                .map(|j| f(j, ensemble.column(j)[b]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    MaxEcdf::from_maxima(maxima)
}

/// Shared multiplicity adjustment for one ensemble and one α.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjustment {
    alpha: f64,
    /// Row-wise minimum bootstrap tail counts `B·min_j P*(θ*_j ≥ θ*_bj)`, sorted.
    min_tail: Vec<usize>,
    b: usize,
    /// Exceedance levels strictly below this value pass the multiplicity check.
    threshold: f64,
}

impl Adjustment {
    pub fn new(ensemble: &BootstrapEnsemble, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let ecdfs = model_ecdfs(ensemble);
        let b = ensemble.b();
        let mut min_tail: Vec<usize> = (0..b)
            .into_par_iter()
            .map(|r| {
                (0..ensemble.m())
                    .map(|j| ecdfs.count_at_least(j, ensemble.column(j)[r]))
                    .min()
                    .unwrap_or(b)
            })
            .collect();
        min_tail.sort_unstable();
        let k = (alpha * b as f64 + 1e-9).floor() as usize;
        let threshold = if k < b {
            min_tail[k] as f64 / b as f64
        } else {
            f64::INFINITY
        };
        Ok(Adjustment {
            alpha,
            min_tail,
            b,
            threshold,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Supremum of exceedance levels the calibration may accept.
    pub fn adjusted_alpha(&self) -> f64 {
        self.alpha.min(self.threshold)
    }

    /// Whether the tilted exceedance level `level` is accepted.
    pub fn accepts(&self, level: f64) -> bool {
        level <= self.alpha && level < self.threshold
    }

    /// Outer ECDF at `1 - level` in left-limit form, `P*(max_j û_bj < 1 - level)`.
    pub fn outer(&self, level: f64) -> f64 {
        let bf = self.b as f64;
        let at_or_below = self.min_tail.partition_point(|&c| c as f64 / bf <= level);
        1.0 - at_or_below as f64 / bf
    }
}

/// Multiplicity-adjusted lower bound for the selected model.
pub fn mabt_lower_bound(
    data: &EvaluationTable,
    kind: MeasureKind,
    selected: &str,
    ensemble: &BootstrapEnsemble,
    alpha: f64,
) -> Result<CalibrationResult> {
    let adj = Adjustment::new(ensemble, alpha)?;
    let j = data.index_of(selected)?;
    bound_for(
        data,
        kind,
        j,
        ensemble,
        &adj,
        &CalibrationSettings::default(),
    )
}

pub fn mabt_lower_bound_with(
    data: &EvaluationTable,
    kind: MeasureKind,
    selected: &str,
    ensemble: &BootstrapEnsemble,
    alpha: f64,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    let adj = Adjustment::new(ensemble, alpha)?;
    let j = data.index_of(selected)?;
    bound_for(data, kind, j, ensemble, &adj, settings)
}

/// Adjusted bounds for every model, sharing one ensemble and one adjustment.
pub fn simultaneous_bounds(
    data: &EvaluationTable,
    kind: MeasureKind,
    ensemble: &BootstrapEnsemble,
    alpha: f64,
) -> Result<Vec<Result<CalibrationResult>>> {
    let adj = Adjustment::new(ensemble, alpha)?;
    check_ensemble(data, kind, ensemble)?;
    let settings = CalibrationSettings::default();
    Ok((0..data.m())
        .into_par_iter()
        .map(|j| bound_for(data, kind, j, ensemble, &adj, &settings))
        .collect())
}

fn bound_for(
    data: &EvaluationTable,
    kind: MeasureKind,
    j: usize,
    ensemble: &BootstrapEnsemble,
    adj: &Adjustment,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    check_ensemble(data, kind, ensemble)?;
    let family = match TiltingFamily::for_model(data, kind, j, settings.centered) {
        Ok(f) => f,
        Err(Error::DegenerateTilt) => {
            let level = sidak_adjust(adj.alpha, data.m())?;
            return fallback_result(data, kind, j, level, ensemble.plug_in(j));
        }
        Err(e) => return Err(e),
    };
    let tail = TiltedTail::new(family, ensemble, j);
    calibrate_model(
        data,
        kind,
        j,
        &tail,
        |level| adj.accepts(level),
        adj.adjusted_alpha(),
        settings,
    )
}
