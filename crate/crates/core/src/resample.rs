//! Bootstrap resampling of evaluation-set indices and the bootstrap
//! performance ensemble.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{accuracy_kernel, auc_kernel, score_order, EvaluationTable, MeasureKind};
use crate::rng::stream_rng;

/// Default number of resamples for accuracy.
pub const DEFAULT_B_ACCURACY: usize = 10_000;
/// Default number of resamples for AUC.
pub const DEFAULT_B_AUC: usize = 2_000;

pub fn default_resamples(kind: MeasureKind) -> usize {
    match kind {
        MeasureKind::Accuracy => DEFAULT_B_ACCURACY,
        MeasureKind::Auc => DEFAULT_B_AUC,
    }
}

/// Multiplicity of every observation in every resample.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    counts: Vec<u32>,
    n: usize,
    b: usize,
    seed: Option<u64>,
}

/// Draws `b` uniform with-replacement resamples of `{0, .., n-1}`.
///
/// Row `r` is generated from its own stream `(seed, r)`.
pub fn draw_resamples(n: usize, b: usize, seed: u64) -> Result<ResamplePlan> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "resampling needs n >= 2, got {n}"
        )));
    }
    if b == 0 {
        return Err(Error::InvalidArgument(
            "number of resamples must be positive".into(),
        ));
    }
    let rows: Vec<Vec<u32>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut row = vec![0u32; n];
            for _ in 0..n {
                row[rng.random_range(0..n)] += 1;
            }
            row
        })
        .collect();
    Ok(ResamplePlan {
        counts: rows.concat(),
        n,
        b,
        seed: Some(seed),
    })
}

impl ResamplePlan {
    /// Plan from explicit count rows, e.g. an exhaustive enumeration.
    pub fn from_counts(rows: Vec<Vec<u32>>) -> Result<Self> {
        let b = rows.len();
        if b == 0 {
            return Err(Error::InvalidArgument("empty resample plan".into()));
        }
        let n = rows[0].len();
        for row in &rows {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            let total: u64 = row.iter().map(|&c| u64::from(c)).sum();
            if total != n as u64 {
                return Err(Error::InvalidArgument(format!(
                    "resample row sums to {total}, expected {n}"
                )));
            }
        }
        Ok(ResamplePlan {
            counts: rows.concat(),
            n,
            b,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.counts[r * self.n..(r + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.counts.chunks_exact(self.n)
    }

    /// Bootstrap weights `counts / n` of row `r`.
    pub fn row_weights(&self, r: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.row(r).iter().map(|&c| f64::from(c) / n).collect()
    }
}

/// Bootstrap performance estimates, one column per model.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    kind: MeasureKind,
    plan: Arc<ResamplePlan>,
    theta_star: Vec<Vec<f64>>,
    plug_in: Vec<f64>,
    degenerate_rows: Vec<usize>,
}

impl BootstrapEnsemble {
    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn plan(&self) -> &ResamplePlan {
        &self.plan
    }

    pub fn b(&self) -> usize {
        self.plan.b()
    }

    pub fn m(&self) -> usize {
        self.theta_star.len()
    }

    /// Bootstrap estimates of model `j`, indexed by resample.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.theta_star[j]
    }

    pub fn plug_in(&self, j: usize) -> f64 {
        self.plug_in[j]
    }

    /// Resamples of model `j` that contained a single class (AUC only) and
    /// were replaced by the plug-in estimate.
    pub fn degenerate_rows(&self, j: usize) -> usize {
        self.degenerate_rows[j]
    }
}

/// Evaluates every model on every resample of the plan.
///
/// Each estimate is the weighted measure with weights `counts / n`. In AUC
/// mode a resample holding only one class gets the plug-in estimate instead,
/// and is counted in [`BootstrapEnsemble::degenerate_rows`].
pub fn bootstrap_performance(
    data: &EvaluationTable,
    kind: MeasureKind,
    plan: impl Into<Arc<ResamplePlan>>,
) -> Result<BootstrapEnsemble> {
    let plan = plan.into();
    data.validate_for(kind)?;
    if plan.n() != data.n() {
        return Err(Error::LengthMismatch {
            expected: data.n(),
            found: plan.n(),
        });
    }
    let plug_in = data.plug_in_all(kind)?;
    let labels = data.labels();
    let orders: Vec<Vec<usize>> = match kind {
        MeasureKind::Auc => data.columns().iter().map(|c| score_order(c)).collect(),
        MeasureKind::Accuracy => Vec::new(),
    };

    // rows of (estimate, degenerate) per model
    let rows: Vec<Vec<(f64, bool)>> = (0..plan.b())
        .into_par_iter()
        .map(|r| {
            let w = plan.row_weights(r);
            (0..data.m())
                .map(|j| match kind {
                    MeasureKind::Accuracy => (accuracy_kernel(labels, data.column(j), &w), false),
                    MeasureKind::Auc => match auc_kernel(labels, data.column(j), &orders[j], &w) {
                        Some(v) => (v, false),
                        None => (plug_in[j], true),
                    },
                })
                .collect()
        })
        .collect();

    let m = data.m();
    let mut theta_star = vec![Vec::with_capacity(plan.b()); m];
    let mut degenerate_rows = vec![0; m];
    for row in rows {
        for (j, (v, degenerate)) in row.into_iter().enumerate() {
            theta_star[j].push(v);
            if degenerate {
                degenerate_rows[j] += 1;
            }
        }
    }
    Ok(BootstrapEnsemble {
        kind,
        plan,
        theta_star,
        plug_in,
        degenerate_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{evaluate, WeightVector};

    #[test]
    fn rejects_bad_sizes() {
        assert!(draw_resamples(1, 10, 0).is_err());
        assert!(draw_resamples(5, 0, 0).is_err());
    }

    #[test]
    fn rows_sum_to_n() {
        let plan = draw_resamples(17, 200, 3).unwrap();
        assert!(plan.rows().all(|r| r.iter().sum::<u32>() == 17));
    }

    #[test]
    fn mean_counts_near_one() {
        let plan = draw_resamples(50, 10_000, 11).unwrap();
        for i in 0..50 {
            let mean = plan.rows().map(|r| f64::from(r[i])).sum::<f64>() / 10_000.0;
            assert!((0.9..=1.1).contains(&mean), "observation {i}: {mean}");
        }
    }

    #[test]
    fn rows_are_keyed_by_index() {
        let small = draw_resamples(9, 5, 42).unwrap();
        let large = draw_resamples(9, 50, 42).unwrap();
        for r in 0..5 {
            assert_eq!(small.row(r), large.row(r));
        }
    }

    #[test]
    fn from_counts_checks_rows() {
        assert!(ResamplePlan::from_counts(vec![vec![2, 0, 1], vec![1, 1, 0]]).is_err());
        assert!(ResamplePlan::from_counts(vec![vec![2, 0, 1], vec![1, 1]]).is_err());
        assert!(ResamplePlan::from_counts(vec![]).is_err());
    }

    fn acc_table() -> EvaluationTable {
        // model 0 correct on (1,1,0,1); model 1 always correct
        EvaluationTable::new(
            vec![1, 0, 1, 0],
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 1.0, 0.0]],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn identity_resample_gives_plug_in() {
        let t = acc_table();
        let plan = ResamplePlan::from_counts(vec![vec![1, 1, 1, 1]]).unwrap();
        let e = bootstrap_performance(&t, MeasureKind::Accuracy, plan).unwrap();
        assert_eq!(e.column(0)[0], 0.75);
        assert_eq!(e.column(0)[0], e.plug_in(0));
    }

    #[test]
    fn weighted_count_example() {
        let t = acc_table();
        let plan = ResamplePlan::from_counts(vec![vec![2, 0, 1, 1]]).unwrap();
        let e = bootstrap_performance(&t, MeasureKind::Accuracy, plan).unwrap();
        assert_eq!(e.column(0)[0], 0.75);
        assert_eq!(e.column(1)[0], 1.0);
    }

    #[test]
    fn constant_correct_column_is_one_everywhere() {
        let t = acc_table();
        let e = bootstrap_performance(
            &t,
            MeasureKind::Accuracy,
            draw_resamples(4, 300, 1).unwrap(),
        )
        .unwrap();
        assert!(e.column(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_class_auc_rows_use_plug_in() {
        let t = EvaluationTable::new(vec![1, 0, 1], vec![vec![0.9, 0.2, 0.1]], vec!["a".into()])
            .unwrap();
        let plan =
            ResamplePlan::from_counts(vec![vec![3, 0, 0], vec![1, 1, 1], vec![0, 2, 1]]).unwrap();
        let e = bootstrap_performance(&t, MeasureKind::Auc, plan).unwrap();
        assert_eq!(e.degenerate_rows(0), 1);
        assert_eq!(e.column(0)[0], e.plug_in(0));
        assert_eq!(e.column(0)[2], 0.0);
    }

    #[test]
    fn rows_match_weighted_measure() {
        let t = EvaluationTable::new(
            vec![1, 0, 1, 0, 1, 1],
            vec![vec![0.3, 0.1, 0.3, 0.7, 0.9, 0.2]],
            vec!["s".into()],
        )
        .unwrap();
        let plan = draw_resamples(6, 100, 5).unwrap();
        let e = bootstrap_performance(&t, MeasureKind::Auc, plan.clone()).unwrap();
        for r in 0..100 {
            let w = WeightVector::new(plan.row_weights(r)).unwrap();
            match evaluate(MeasureKind::Auc, t.labels(), t.column(0), &w) {
                Ok(v) => assert_eq!(e.column(0)[r], v),
                Err(_) => assert_eq!(e.column(0)[r], e.plug_in(0)),
            }
        }
    }
}
