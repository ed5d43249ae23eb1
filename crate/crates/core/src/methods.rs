//! Registry of interval methods and a single entry point that computes any
//! of them for a selected model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    cp_lower, delong_components, delong_lower, hm_lower, sidak_adjust, wald_lower, wilson_lower,
    BinomialSummary,
};
use crate::error::{Error, Result};
use crate::mabt::{mabt_lower_bound_with, Adjustment};
use crate::measures::{EvaluationTable, MeasureKind};
use crate::resample::BootstrapEnsemble;
use crate::tilting::{bt_lower_bound_with, CalibrationSettings};

/// Marker appended to a method name to request the Šidák-adjusted level.
pub const SIDAK_SUFFIX: &str = "+sidak";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseMethod {
    Mabt,
    Bt,
    Wald,
    Wilson,
    Cp,
    Delong,
    Hm,
}

impl BaseMethod {
    pub const ALL: [BaseMethod; 7] = [
        BaseMethod::Mabt,
        BaseMethod::Bt,
        BaseMethod::Wald,
        BaseMethod::Wilson,
        BaseMethod::Cp,
        BaseMethod::Delong,
        BaseMethod::Hm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseMethod::Mabt => "mabt",
            BaseMethod::Bt => "bt",
            BaseMethod::Wald => "wald",
            BaseMethod::Wilson => "wilson",
            BaseMethod::Cp => "cp",
            BaseMethod::Delong => "delong",
            BaseMethod::Hm => "hm",
        }
    }

    pub fn supports(self, kind: MeasureKind) -> bool {
        match self {
            BaseMethod::Mabt | BaseMethod::Bt => true,
            BaseMethod::Wald | BaseMethod::Wilson | BaseMethod::Cp => kind == MeasureKind::Accuracy,
            BaseMethod::Delong | BaseMethod::Hm => kind == MeasureKind::Auc,
        }
    }

    pub fn needs_bootstrap(self) -> bool {
        matches!(self, BaseMethod::Mabt | BaseMethod::Bt)
    }
}

/// A base method, optionally at the Šidák-adjusted level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Method {
    pub base: BaseMethod,
    pub sidak: bool,
}

impl Method {
    pub fn new(base: BaseMethod, sidak: bool) -> Result<Self> {
        if sidak && base == BaseMethod::Mabt {
            return Err(Error::InvalidArgument(
                "mabt already adjusts for multiplicity and takes no sidak marker".into(),
            ));
        }
        Ok(Method { base, sidak })
    }

    pub fn plain(base: BaseMethod) -> Self {
        Method { base, sidak: false }
    }

    /// Fails when the method is not defined for the measure.
    pub fn check_measure(&self, kind: MeasureKind) -> Result<()> {
        if self.base.supports(kind) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "method `{self}` is not available for {kind}"
            )))
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base.name())?;
        if self.sidak {
            f.write_str(SIDAK_SUFFIX)?;
        }
        Ok(())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, sidak) = match s.strip_suffix(SIDAK_SUFFIX) {
            Some(rest) => (rest, true),
            None => (s.as_str(), false),
        };
        let base = BaseMethod::ALL
            .into_iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))?;
        Method::new(base, sidak)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods given".into()));
    }
    Ok(methods)
}

/// A computed bound and its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOutcome {
    pub lower_bound: f64,
    pub plug_in: f64,
    /// Level the method was effectively run at.
    pub adjusted_alpha: f64,
    pub tau: Option<f64>,
    pub fallback_used: bool,
    pub iterations: usize,
}

/// Computes `method` for model column `j`.
///
/// The bootstrap methods need `ensemble`; Šidák-marked methods use
/// `1 − (1 − α)^(1/m)` with `m` the number of columns in `data`.
pub fn compute_bound(
    data: &EvaluationTable,
    kind: MeasureKind,
    j: usize,
    method: Method,
    ensemble: Option<&BootstrapEnsemble>,
    alpha: f64,
) -> Result<BoundOutcome> {
    method.check_measure(kind)?;
    let level = if method.sidak {
        sidak_adjust(alpha, data.m())?
    } else {
        alpha
    };
    let plug_in = data.plug_in(kind, j)?;
    let simple = |lower_bound: f64| BoundOutcome {
        lower_bound: lower_bound.min(plug_in),
        plug_in,
        adjusted_alpha: level,
        tau: None,
        fallback_used: false,
        iterations: 0,
    };
    let settings = CalibrationSettings::default();
    let need = || {
        ensemble.ok_or_else(|| {
            Error::InvalidArgument(format!("method `{method}` needs a bootstrap ensemble"))
        })
    };
    match method.base {
        BaseMethod::Bt => {
            let r =
                bt_lower_bound_with(data, kind, &data.model_ids()[j], need()?, level, &settings)?;
            Ok(BoundOutcome {
                lower_bound: r.lower_bound,
                plug_in: r.plug_in,
                adjusted_alpha: level,
                tau: r.tau,
                fallback_used: r.fallback_used,
                iterations: r.iterations,
            })
        }
        BaseMethod::Mabt => {
            let ens = need()?;
            let r = mabt_lower_bound_with(data, kind, &data.model_ids()[j], ens, alpha, &settings)?;
            let adjusted_alpha = if r.fallback_used {
                sidak_adjust(alpha, data.m())?
            } else {
                Adjustment::new(ens, alpha)?.adjusted_alpha()
            };
            Ok(BoundOutcome {
                lower_bound: r.lower_bound,
                plug_in: r.plug_in,
                adjusted_alpha,
                tau: r.tau,
                fallback_used: r.fallback_used,
                iterations: r.iterations,
            })
        }
        BaseMethod::Wald | BaseMethod::Wilson | BaseMethod::Cp => {
            let s = BinomialSummary::new(data.correct_count(j) as u64, data.n() as u64)?;
            let b = match method.base {
                BaseMethod::Wald => wald_lower(&s, level)?,
                BaseMethod::Wilson => wilson_lower(&s, level)?,
                _ => cp_lower(&s, level)?,
            };
            Ok(simple(b))
        }
        BaseMethod::Delong | BaseMethod::Hm => {
            let s = delong_components(data.labels(), data.column(j))?;
            let b = if method.base == BaseMethod::Delong {
                delong_lower(&s, level)?
            } else {
                hm_lower(&s, level)?
            };
            Ok(simple(b))
        }
    }
}
