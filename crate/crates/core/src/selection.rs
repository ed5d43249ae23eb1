//! Validation-stage performance estimates, preselection rules and the final
//! selection among evaluated models.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{evaluate, MeasureKind, WeightVector};
use crate::rng::stream_rng;

/// Where validation estimates came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationSource {
    Holdout,
    Cv { k: usize },
}

/// Validation performance `η̂_j` of each of the `r` candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationScores {
    eta: Vec<f64>,
    se: Option<Vec<f64>>,
    source: ValidationSource,
}

impl ValidationScores {
    pub fn new(eta: Vec<f64>, se: Option<Vec<f64>>, source: ValidationSource) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::InvalidArgument("no candidates".into()));
        }
        match (&se, source) {
            (Some(se), ValidationSource::Cv { .. }) if se.len() != eta.len() => {
                Err(Error::LengthMismatch {
                    expected: eta.len(),
                    found: se.len(),
                })
            }
            (Some(_), ValidationSource::Cv { .. }) | (None, ValidationSource::Holdout) => {
                Ok(ValidationScores { eta, se, source })
            }
            _ => Err(Error::InvalidArgument(
                "standard errors must be present exactly for cross-validation scores".into(),
            )),
        }
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn se(&self) -> Option<&[f64]> {
        self.se.as_deref()
    }

    pub fn source(&self) -> ValidationSource {
        self.source
    }

    pub fn r(&self) -> usize {
        self.eta.len()
    }

    /// Candidate indices by decreasing `η̂`, ties by lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.eta.len()).collect();
        idx.sort_by(|&a, &b| self.eta[b].total_cmp(&self.eta[a]).then(a.cmp(&b)));
        idx
    }
}

/// Preselection rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    SingleBest,
    TopFraction(f64),
    WithinOneSe,
}

impl Rule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Rule::TopFraction(f) if !(f > 0.0 && f <= 1.0) => Err(Error::InvalidArgument(format!(
                "top fraction must lie in (0, 1], got {f}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::SingleBest => f.write_str("single-best"),
            Rule::TopFraction(x) => write!(f, "top-fraction={x}"),
            Rule::WithinOneSe => f.write_str("within-1-se"),
        }
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rule = match s.trim() {
            "single-best" => Rule::SingleBest,
            "within-1-se" => Rule::WithinOneSe,
            other => match other.strip_prefix("top-fraction=") {
                Some(v) => Rule::TopFraction(
                    v.parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad fraction `{v}`")))?,
                ),
                None => return Err(Error::InvalidArgument(format!("unknown rule `{s}`"))),
            },
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl Serialize for Rule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Preselected candidates in rank order, plus the final choice once made.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub preselected: Vec<usize>,
    pub rule: Rule,
    /// Position within `preselected` of the finally selected model.
    pub final_choice: Option<usize>,
}

impl SelectionOutcome {
    pub fn m(&self) -> usize {
        self.preselected.len()
    }

    /// Candidate index of the final model.
    pub fn final_candidate(&self) -> Option<usize> {
        self.final_choice.map(|k| self.preselected[k])
    }
}

pub fn preselect(scores: &ValidationScores, rule: Rule) -> Result<SelectionOutcome> {
    rule.validate()?;
    let ranking = scores.ranking();
    let best = ranking[0];
    let preselected = match rule {
        Rule::SingleBest => vec![best],
        Rule::TopFraction(f) => {
            let m = ((f * scores.r() as f64) - 1e-9).ceil().max(1.0) as usize;
            ranking[..m.min(scores.r())].to_vec()
        }
        Rule::WithinOneSe => {
            let se = scores.se().ok_or_else(|| {
                Error::InvalidArgument("within-1-se needs cross-validation standard errors".into())
            })?;
            let cut = scores.eta[best] - se[best] - 1e-12;
            ranking
                .into_iter()
                .filter(|&j| scores.eta[j] >= cut)
                .collect()
        }
    };
    Ok(SelectionOutcome {
        preselected,
        rule,
        final_choice: None,
    })
}

/// Position of the best evaluation estimate; ties go to the earlier position.
pub fn final_select(estimates: &[f64]) -> Result<usize> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no evaluated models".into()));
    }
    let mut best = 0;
    for (k, &v) in estimates.iter().enumerate().skip(1) {
        if v > estimates[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} observations into {k} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, 0));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f >= k - extra);
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

/// A fitted model: scores for AUC, 0/1 labels for accuracy.
pub trait Predictor: Send + Sync {
    fn score(&self, x: &Array2<f64>) -> Vec<f64>;
    fn label(&self, x: &Array2<f64>) -> Vec<u8>;

    fn predict(&self, x: &Array2<f64>, kind: MeasureKind) -> Vec<f64> {
        match kind {
            MeasureKind::Accuracy => self.label(x).into_iter().map(f64::from).collect(),
            MeasureKind::Auc => self.score(x),
        }
    }
}

/// Fits all `r` candidate models on a training set.
pub trait Trainer: Sync {
    type Model: Predictor;

    fn candidates(&self) -> usize;
    fn train(&self, x: &Array2<f64>, y: &[u8]) -> Result<Vec<Self::Model>>;
}

fn score_models<M: Predictor>(
    models: &[M],
    x: &Array2<f64>,
    y: &[u8],
    kind: MeasureKind,
) -> Result<Vec<f64>> {
    let w = WeightVector::uniform(y.len());
    models
        .iter()
        .map(|model| evaluate(kind, y, &model.predict(x, kind), &w))
        .collect()
}

fn check_trained<M>(models: &[M], r: usize) -> Result<()> {
    if models.len() == r {
        Ok(())
    } else {
        Err(Error::Training(format!(
            "trainer returned {} models, expected {r}",
            models.len()
        )))
    }
}

/// Trains on one set and scores every candidate on another.
pub fn holdout_performance<T: Trainer>(
    train_x: &Array2<f64>,
    train_y: &[u8],
    val_x: &Array2<f64>,
    val_y: &[u8],
    trainer: &T,
    kind: MeasureKind,
) -> Result<ValidationScores> {
    let models = trainer.train(train_x, train_y)?;
    check_trained(&models, trainer.candidates())?;
    let eta = score_models(&models, val_x, val_y, kind)?;
    ValidationScores::new(eta, None, ValidationSource::Holdout)
}

/// K-fold cross-validated performance with standard errors `sd / sqrt(k)`.
pub fn cv_performance<T: Trainer>(
    x: &Array2<f64>,
    y: &[u8],
    trainer: &T,
    kind: MeasureKind,
    k: usize,
    seed: u64,
) -> Result<ValidationScores> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs k >= 2, got {k}"
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: x.nrows(),
        });
    }
    let folds = kfold_indices(y.len(), k, seed)?;
    let r = trainer.candidates();
    let fold_scores: Vec<Vec<f64>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            let wrap = |e: Error| Error::Fold {
                fold: f,
                source: Box::new(e),
            };
            let mut in_fold = vec![false; y.len()];
            held.iter().for_each(|&i| in_fold[i] = true);
            let train: Vec<usize> = (0..y.len()).filter(|&i| !in_fold[i]).collect();
            let tx = x.select(Axis(0), &train);
            let ty: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let vx = x.select(Axis(0), held);
            let vy: Vec<u8> = held.iter().map(|&i| y[i]).collect();
            let models = trainer.train(&tx, &ty).map_err(wrap)?;
            check_trained(&models, r).map_err(wrap)?;
            score_models(&models, &vx, &vy, kind).map_err(wrap)
        })
        .collect::<Result<_>>()?;

    let kf = k as f64;
    let mut eta = vec![0.0; r];
    let mut se = vec![0.0; r];
    for j in 0..r {
        let mean = fold_scores.iter().map(|s| s[j]).sum::<f64>() / kf;
        let var = fold_scores
            .iter()
            .map(|s| (s[j] - mean).powi(2))
            .sum::<f64>()
            / (kf - 1.0);
        eta[j] = mean;
        se[j] = var.sqrt() / kf.sqrt();
    }
    ValidationScores::new(eta, Some(se), ValidationSource::Cv { k })
}
