//! Weighted binary-classification performance measures and their
//! per-observation influence scores.
//!
//! Every measure here accepts observation weights. Weights only need to be
//! nonnegative; the kernels divide by the total weight, so `counts / n`
//! bootstrap weights and tilted weights go through the same code path.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which performance measure is being bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    /// Proportion of correctly predicted class labels. Prediction columns hold labels in {0, 1}.
    Accuracy,
    /// Area under the ROC curve. Prediction columns hold real-valued scores.
    Auc,
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKind::Accuracy => f.write_str("accuracy"),
            MeasureKind::Auc => f.write_str("auc"),
        }
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accuracy" | "acc" => Ok(MeasureKind::Accuracy),
            "auc" => Ok(MeasureKind::Auc),
            other => Err(Error::InvalidArgument(format!("unknown measure `{other}`"))),
        }
    }
}

/// Nonnegative observation weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Allowed deviation of the weight sum from one.
    pub const SUM_TOLERANCE: f64 = 1e-12;

    /// Validates weights that should already sum to one.
    ///
    /// Values are kept as given; residual rounding in the sum is absorbed by
    /// the measures, which divide by the total weight.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum = check_nonnegative(&weights)?;
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(WeightVector(weights))
    }

    /// Scales arbitrary nonnegative weights to unit sum.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum = check_nonnegative(&weights)?;
        if sum <= 0.0 {
            return Err(Error::InvalidWeights("total weight is zero".into()));
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(WeightVector(weights))
    }

    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_nonnegative(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector".into()));
    }
    let mut sum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidWeights(format!("weight {w} at position {i}")));
        }
        sum += w;
    }
    Ok(sum)
}

/// True labels plus one prediction column per evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationTable {
    labels: Vec<u8>,
    columns: Vec<Vec<f64>>,
    model_ids: Vec<String>,
}

impl EvaluationTable {
    pub fn new(labels: Vec<u8>, columns: Vec<Vec<f64>>, model_ids: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 observations, found {n}"
            )));
        }
        if columns.is_empty() {
            return Err(Error::InvalidArgument(
                "need at least one model column".into(),
            ));
        }
        if columns.len() != model_ids.len() {
            return Err(Error::LengthMismatch {
                expected: model_ids.len(),
                found: columns.len(),
            });
        }
        check_labels(&labels)?;
        for col in &columns {
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: col.len(),
                });
            }
            if let Some((i, &v)) = col.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite prediction {v} at row {i}"
                )));
            }
        }
        for (j, id) in model_ids.iter().enumerate() {
            if model_ids[..j].contains(id) {
                return Err(Error::InvalidArgument(format!("duplicate model id `{id}`")));
            }
        }
        Ok(EvaluationTable {
            labels,
            columns,
            model_ids,
        })
    }

    /// Checks the table against the requirements of a measure.
    pub fn validate_for(&self, kind: MeasureKind) -> Result<()> {
        match kind {
            MeasureKind::Accuracy => {
                for col in &self.columns {
                    check_binary(col)?;
                }
                Ok(())
            }
            MeasureKind::Auc => {
                let pos = self.labels.iter().filter(|&&y| y == 1).count();
                if pos == 0 || pos == self.labels.len() {
                    Err(Error::SingleClass)
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.model_ids
            .iter()
            .position(|m| m == id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    /// Table restricted to a subset of model columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        let columns = indices.iter().map(|&j| self.columns[j].clone()).collect();
        let ids = indices.iter().map(|&j| self.model_ids[j].clone()).collect();
        EvaluationTable::new(self.labels.clone(), columns, ids)
    }

    /// Unweighted estimate of model `j`'s performance.
    pub fn plug_in(&self, kind: MeasureKind, j: usize) -> Result<f64> {
        evaluate(
            kind,
            &self.labels,
            &self.columns[j],
            &WeightVector::uniform(self.n()),
        )
    }

    /// Unweighted estimates for every model column.
    pub fn plug_in_all(&self, kind: MeasureKind) -> Result<Vec<f64>> {
        (0..self.m()).map(|j| self.plug_in(kind, j)).collect()
    }

    /// Number of correct predictions of model `j` (accuracy mode).
    pub fn correct_count(&self, j: usize) -> usize {
        self.labels
            .iter()
            .zip(&self.columns[j])
            .filter(|(&y, &p)| f64::from(y) == p)
            .count()
    }
}

fn check_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().position(|&y| y > 1) {
        Some(i) => Err(Error::NonBinary {
            index: i,
            value: f64::from(labels[i]),
        }),
        None => Ok(()),
    }
}

fn check_binary(values: &[f64]) -> Result<()> {
    match values.iter().position(|&v| v != 0.0 && v != 1.0) {
        Some(i) => Err(Error::NonBinary {
            index: i,
            value: values[i],
        }),
        None => Ok(()),
    }
}

fn check_lengths(labels: &[u8], preds: &[f64], w: &WeightVector) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: preds.len(),
        });
    }
    if w.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: w.len(),
        });
    }
    Ok(())
}

/// Weighted proportion of correct predictions.
pub fn weighted_accuracy(labels: &[u8], preds: &[f64], w: &WeightVector) -> Result<f64> {
    check_lengths(labels, preds, w)?;
    check_labels(labels)?;
    check_binary(preds)?;
    Ok(accuracy_kernel(labels, preds, w.as_slice()))
}

/// Weighted Mann-Whitney AUC; tied scores count one half.
pub fn weighted_auc(labels: &[u8], scores: &[f64], w: &WeightVector) -> Result<f64> {
    check_lengths(labels, scores, w)?;
    check_labels(labels)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite score at position {i}"
        )));
    }
    let order = score_order(scores);
    auc_kernel(labels, scores, &order, w.as_slice()).ok_or(Error::SingleClass)
}

/// Dispatches on the measure kind.
pub fn evaluate(kind: MeasureKind, labels: &[u8], preds: &[f64], w: &WeightVector) -> Result<f64> {
    match kind {
        MeasureKind::Accuracy => weighted_accuracy(labels, preds, w),
        MeasureKind::Auc => weighted_auc(labels, preds, w),
    }
}

// Weights are divided by their maximum before summing, so uniform weights
// reduce to exact integer counts.
pub(crate) fn accuracy_kernel(labels: &[u8], preds: &[f64], w: &[f64]) -> f64 {
    let scale = max_weight(w);
    let mut hit = 0.0;
    let mut total = 0.0;
    for ((&y, &p), &wi) in labels.iter().zip(preds).zip(w) {
        let v = wi / scale;
        total += v;
        if f64::from(y) == p {
            hit += v;
        }
    }
    hit / total
}

/// Indices sorted by ascending score, ties kept in index order.
pub(crate) fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Returns `None` when either class has zero total weight.
pub(crate) fn auc_kernel(labels: &[u8], scores: &[f64], order: &[usize], w: &[f64]) -> Option<f64> {
    let scale = max_weight(w);
    if scale <= 0.0 {
        return None;
    }
    let mut neg_below = 0.0;
    let mut pos_total = 0.0;
    let mut pairs = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let mut group_pos = 0.0;
        let mut group_neg = 0.0;
        while k < order.len() && scores[order[k]] == s {
            let i = order[k];
            let v = w[i] / scale;
            if labels[i] == 1 {
                group_pos += v;
            } else {
                group_neg += v;
            }
            k += 1;
        }
        pairs += group_pos * (neg_below + 0.5 * group_neg);
        neg_below += group_neg;
        pos_total += group_pos;
    }
    if pos_total <= 0.0 || neg_below <= 0.0 {
        return None;
    }
    Some(pairs / (pos_total * neg_below))
}

fn max_weight(w: &[f64]) -> f64 {
    w.iter().copied().fold(0.0, f64::max)
}

/// Per-observation influence scores defining the tilting direction.
///
/// Accuracy uses the correctness indicators. AUC uses leave-one-out
/// jackknife pseudo-values `n * auc - (n - 1) * auc_without_i`.
pub fn influence_scores(kind: MeasureKind, labels: &[u8], preds: &[f64]) -> Result<Vec<f64>> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: preds.len(),
        });
    }
    check_labels(labels)?;
    match kind {
        MeasureKind::Accuracy => {
            check_binary(preds)?;
            Ok(labels
                .iter()
                .zip(preds)
                .map(|(&y, &p)| if f64::from(y) == p { 1.0 } else { 0.0 })
                .collect())
        }
        MeasureKind::Auc => auc_pseudo_values(labels, preds),
    }
}

fn auc_pseudo_values(labels: &[u8], scores: &[f64]) -> Result<Vec<f64>> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::InsufficientClass {
            required: 2,
            positives: n_pos,
            negatives: n_neg,
        });
    }
    let placements = placement_counts(labels, scores);
    let pairs: f64 = labels
        .iter()
        .zip(&placements)
        .filter(|(&y, _)| y == 1)
        .map(|(_, &c)| c)
        .sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let n = labels.len() as f64;
    let auc = pairs / (np * nn);
    Ok(labels
        .iter()
        .zip(&placements)
        .map(|(&y, &c)| {
            let loo = if y == 1 {
                (pairs - c) / ((np - 1.0) * nn)
            } else {
                (pairs - c) / (np * (nn - 1.0))
            };
            n * auc - (n - 1.0) * loo
        })
        .collect())
}

/// For a positive: number of negatives scored below it (ties one half).
/// For a negative: number of positives scored above it (ties one half).
pub(crate) fn placement_counts(labels: &[u8], scores: &[f64]) -> Vec<f64> {
    let order = score_order(scores);
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut out = vec![0.0; labels.len()];
    let mut neg_below = 0.0;
    let mut pos_below = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let start = k;
        let (mut gp, mut gn) = (0.0, 0.0);
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] == 1 {
                gp += 1.0;
            } else {
                gn += 1.0;
            }
            k += 1;
        }
        for &i in &order[start..k] {
            out[i] = if labels[i] == 1 {
                neg_below + 0.5 * gn
            } else {
                (n_pos - pos_below - gp) + 0.5 * gp
            };
        }
        neg_below += gn;
        pos_below += gp;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let y = [1, 0, 1, 1];
        let p = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(
            weighted_accuracy(&y, &p, &WeightVector::uniform(4)).unwrap(),
            0.75
        );
        let acc = weighted_accuracy(&y, &p, &w(&[0.4, 0.2, 0.2, 0.2])).unwrap();
        assert!((acc - 0.8).abs() < 1e-15);
        let perfect = [1.0, 0.0, 1.0, 1.0];
        assert_eq!(
            weighted_accuracy(&y, &perfect, &w(&[0.1, 0.2, 0.3, 0.4])).unwrap(),
            1.0
        );
    }

    #[test]
    fn accuracy_errors() {
        let u = WeightVector::uniform(3);
        assert!(matches!(
            weighted_accuracy(&[1, 0], &[1.0, 0.0, 1.0], &u),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            weighted_accuracy(&[1, 0, 1], &[1.0, 0.5, 1.0], &u),
            Err(Error::NonBinary { index: 1, .. })
        ));
        assert!(matches!(
            weighted_accuracy(&[1, 2, 1], &[1.0, 0.0, 1.0], &u),
            Err(Error::NonBinary { index: 1, .. })
        ));
    }

    #[test]
    fn auc_examples() {
        let u = WeightVector::uniform(4);
        assert_eq!(
            weighted_auc(&[1, 1, 0, 0], &[0.9, 0.8, 0.7, 0.1], &u).unwrap(),
            1.0
        );
        assert_eq!(
            weighted_auc(&[1, 0], &[0.5, 0.5], &WeightVector::uniform(2)).unwrap(),
            0.5
        );
        let a = weighted_auc(&[1, 0, 0], &[0.6, 0.8, 0.2], &w(&[0.25, 0.25, 0.5])).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auc_single_class() {
        let u = WeightVector::uniform(3);
        assert_eq!(
            weighted_auc(&[1, 1, 1], &[0.1, 0.2, 0.3], &u),
            Err(Error::SingleClass)
        );
        // a class present but with zero weight
        let z = w(&[0.5, 0.5, 0.0]);
        assert_eq!(
            weighted_auc(&[1, 1, 0], &[0.1, 0.2, 0.3], &z),
            Err(Error::SingleClass)
        );
    }

    #[test]
    fn weight_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5]).is_err());
        assert!(WeightVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(WeightVector::new(vec![0.5, 0.5 + 1e-13]).is_ok());
        let n = WeightVector::normalized(vec![2.0, 6.0]).unwrap();
        assert_eq!(n.as_slice(), &[0.25, 0.75]);
        assert!(WeightVector::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn accuracy_influence_is_correctness() {
        let z = influence_scores(MeasureKind::Accuracy, &[1, 0, 1], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(z, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn auc_influence_constant_under_perfect_separation() {
        let z = influence_scores(MeasureKind::Auc, &[1, 1, 0, 0], &[0.9, 0.8, 0.3, 0.1]).unwrap();
        assert!(z.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn auc_influence_needs_two_per_class() {
        let r = influence_scores(MeasureKind::Auc, &[1, 0, 0], &[0.9, 0.8, 0.3]);
        assert!(matches!(
            r,
            Err(Error::InsufficientClass { positives: 1, .. })
        ));
    }

    #[test]
    fn table_validation() {
        let t = EvaluationTable::new(
            vec![1, 0, 1],
            vec![vec![1.0, 0.0, 0.0], vec![0.3, 0.2, 0.9]],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(t.validate_for(MeasureKind::Auc).is_ok());
        assert!(matches!(
            t.validate_for(MeasureKind::Accuracy),
            Err(Error::NonBinary { .. })
        ));
        assert_eq!(t.index_of("b").unwrap(), 1);
        assert!(t.index_of("zz").is_err());
        assert_eq!(t.correct_count(0), 2);

        assert!(EvaluationTable::new(vec![1], vec![vec![1.0]], vec!["a".into()]).is_err());
        assert!(EvaluationTable::new(
            vec![1, 0],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec!["a".into(), "a".into()]
        )
        .is_err());
        let single =
            EvaluationTable::new(vec![1, 1], vec![vec![0.2, 0.4]], vec!["a".into()]).unwrap();
        assert_eq!(
            single.validate_for(MeasureKind::Auc),
            Err(Error::SingleClass)
        );
    }

    #[test]
    fn measure_kind_parsing() {
        assert_eq!("AUC".parse::<MeasureKind>().unwrap(), MeasureKind::Auc);
        assert_eq!(
            "accuracy".parse::<MeasureKind>().unwrap(),
            MeasureKind::Accuracy
        );
        assert!("f1".parse::<MeasureKind>().is_err());
    }
}
