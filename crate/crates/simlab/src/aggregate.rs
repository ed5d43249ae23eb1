//! Coverage and tightness summaries over simulation records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::pipeline::RunRecord;

/// Coverage below this value is flagged as liberal: `1 − α − sqrt((1 − α)·α / runs)`.
pub fn liberal_threshold(alpha: f64, runs: usize) -> f64 {
    1.0 - alpha - ((1.0 - alpha) * alpha / runs as f64).sqrt()
}

/// Summary of one (method, rule) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
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

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-(method, rule) summaries, sorted by method then rule.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(SimError::Empty);
    }
    let mut cells: BTreeMap<(&str, &str), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((&r.method, &r.rule)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((method, rule), rs)| {
            let alpha = rs[0].alpha;
            if rs.iter().any(|r| r.alpha != alpha) {
                return Err(SimError::Config(format!(
                    "records for {method}/{rule} mix several alpha values"
                )));
            }
            let runs = rs.len();
            let covered: Vec<f64> = rs.iter().map(|r| f64::from(u8::from(r.covered))).collect();
            let (coverage, _) = mean_se(&covered);
            let pick = |f: fn(&RunRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (mean_bound, mean_bound_se) = mean_se(&pick(|r| r.bound));
            let (mean_true, mean_true_se) = mean_se(&pick(|r| r.true_performance));
            let (mean_tightness, mean_tightness_se) = mean_se(&pick(|r| r.tightness));
            let threshold = liberal_threshold(alpha, runs);
            Ok(Summary {
                method: method.to_string(),
                rule: rule.to_string(),
                runs,
                alpha,
                coverage,
                coverage_mcse: (coverage * (1.0 - coverage) / runs as f64).sqrt(),
                liberal_threshold: threshold,
                liberal: coverage < threshold,
                mean_bound,
                mean_bound_se,
                mean_true,
                mean_true_se,
                mean_tightness,
                mean_tightness_se,
                mean_m: rs.iter().map(|r| r.m as f64).sum::<f64>() / runs as f64,
                fallbacks: rs.iter().filter(|r| r.fallback_used).count(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mabt_core::MeasureKind;

    fn record(run: usize, bound: f64, truth: f64) -> RunRecord {
        RunRecord {
            run,
            method: "bt".into(),
            rule: "single-best".into(),
            measure: MeasureKind::Accuracy,
            alpha: 0.05,
            n_total: 200,
            m: 1,
            selected: 0,
            plug_in: 0.9,
            bound,
            true_performance: truth,
            covered: truth >= bound,
            tightness: truth - bound,
            fallback_used: false,
            adjusted_alpha: 0.05,
            tau: Some(-1.0),
        }
    }

    #[test]
    fn thresholds() {
        assert!((liberal_threshold(0.05, 5000) - 0.9469).abs() < 5e-5);
        assert!((liberal_threshold(0.05, 1000) - 0.9431).abs() < 5e-5);
    }

    #[test]
    fn all_covered() {
        let rs: Vec<RunRecord> = (0..10).map(|i| record(i, 0.7, 0.8)).collect();
        let s = &aggregate(&rs).unwrap()[0];
        assert_eq!(s.coverage, 1.0);
        assert!(!s.liberal);
        assert_eq!(s.runs, 10);
        assert!((s.mean_tightness - 0.1).abs() < 1e-12);
        assert!(s.mean_bound_se < 1e-15);
    }

    #[test]
    fn liberal_flag() {
        let rs: Vec<RunRecord> = (0..100)
            .map(|i| record(i, if i < 20 { 0.9 } else { 0.7 }, 0.8))
            .collect();
        let s = &aggregate(&rs).unwrap()[0];
        assert!((s.coverage - 0.8).abs() < 1e-12);
        assert!(s.liberal);
        assert!((s.coverage_mcse - 0.04).abs() < 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(aggregate(&[]), Err(SimError::Empty)));
    }
}
