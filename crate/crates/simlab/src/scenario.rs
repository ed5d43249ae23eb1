//! Data generation for the simulation scenarios, and injected datasets.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use mabt_core::rng::stream_rng;

use crate::error::{Result, SimError};

/// Which stage of the pipeline a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRole {
    Train,
    Validation,
    /// Training and validation sets together.
    Learning,
    Evaluation,
    GroundTruth,
}

/// Features and binary labels, tagged with their pipeline role.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub role: DataRole,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<u8>, role: DataRole) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(SimError::Config(format!(
                "{} feature rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Dataset { x, y, role })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows of `self` followed by rows of `other`, under a new role.
    pub fn concat(&self, other: &Dataset, role: DataRole) -> Result<Dataset> {
        let x = ndarray::concatenate(Axis(0), &[self.x.view(), other.x.view()])
            .map_err(|e| SimError::Config(e.to_string()))?;
        let y = [self.y.as_slice(), other.y.as_slice()].concat();
        Dataset::new(x, y, role)
    }

    fn rows(&self, idx: &[usize], role: DataRole) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            role,
        }
    }
}

/// The four datasets of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub train: Dataset,
    pub validation: Dataset,
    pub evaluation: Dataset,
    pub ground_truth: Dataset,
}

impl RunData {
    pub fn learning(&self) -> Result<Dataset> {
        self.train.concat(&self.validation, DataRole::Learning)
    }
}

/// Sizes of the train / validation / evaluation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub evaluation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.5,
            validation: 0.25,
            evaluation: 0.25,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.evaluation];
        if parts.iter().any(|&f| !(f > 0.0 && f < 1.0))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(SimError::Config(format!(
                "split fractions must be positive and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Set sizes for `n_total` observations; the evaluation set takes the remainder.
    pub fn sizes(&self, n_total: usize) -> (usize, usize, usize) {
        let train = (self.train * n_total as f64).round() as usize;
        let validation = (self.validation * n_total as f64).round() as usize;
        (train, validation, n_total - train - validation)
    }
}

/// Sparse logistic scenario with standard normal features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioAConfig {
    pub n_total: usize,
    pub p: usize,
    pub n_nonzero: usize,
    pub signal: f64,
    pub split: SplitFractions,
    pub ground_truth_n: usize,
}

impl Default for ScenarioAConfig {
    fn default() -> Self {
        ScenarioAConfig {
            n_total: 200,
            p: 50,
            n_nonzero: 10,
            signal: 2.0,
            split: SplitFractions::default(),
            ground_truth_n: 10_000,
        }
    }
}

impl ScenarioAConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.p == 0 || self.n_nonzero > self.p {
            return Err(SimError::Config(format!(
                "need 0 < p and n_nonzero <= p, got p={} n_nonzero={}",
                self.p, self.n_nonzero
            )));
        }
        let (tr, va, ev) = self.split.sizes(self.n_total);
        if tr < 4 || va < 2 || ev < 2 || self.ground_truth_n < 2 {
            return Err(SimError::Config(format!(
                "n_total={} is too small for the split",
                self.n_total
            )));
        }
        Ok(())
    }

    pub fn beta(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| if j < self.n_nonzero { self.signal } else { 0.0 })
            .collect()
    }

    fn draw(&self, n: usize, seed: u64, stream: u64, role: DataRole) -> Dataset {
        let mut rng = stream_rng(seed, stream);
        let beta = self.beta();
        let mut x = Array2::zeros((n, self.p));
        let mut y = Vec::with_capacity(n);
        for mut row in x.rows_mut() {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let u: f64 = rng.random();
            y.push(u8::from(inv_logit(eta) >= u));
        }
        Dataset { x, y, role }
    }
}

pub fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Draws the four datasets of one run from the scenario law.
pub fn gen_scenario_a(config: &ScenarioAConfig, seed: u64) -> Result<RunData> {
    config.validate()?;
    let (tr, va, ev) = config.split.sizes(config.n_total);
    Ok(RunData {
        train: config.draw(tr, seed, 0, DataRole::Train),
        validation: config.draw(va, seed, 1, DataRole::Validation),
        evaluation: config.draw(ev, seed, 2, DataRole::Evaluation),
        ground_truth: config.draw(config.ground_truth_n, seed, 3, DataRole::GroundTruth),
    })
}

/// A user-supplied labelled feature table that runs are subsampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectedData {
    data: Dataset,
}

impl InjectedData {
    pub fn new(x: Array2<f64>, y: Vec<u8>) -> Result<Self> {
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(SimError::Config(format!(
                "label {} in row {i} is not 0/1",
                y[i]
            )));
        }
        Ok(InjectedData {
            data: Dataset::new(x, y, DataRole::GroundTruth)?,
        })
    }

    /// Reads a CSV with header `y,<feature_1>,…`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("y") || headers.len() < 2 {
            return Err(SimError::Config(format!(
                "{}: header must be `y,<features…>`",
                path.display()
            )));
        }
        let p = headers.len() - 1;
        let mut values = Vec::new();
        let mut y = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse = |col: usize| -> Result<f64> {
                rec.get(col)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        SimError::Config(format!(
                            "{}: bad value at row {}, column {}",
                            path.display(),
                            row + 1,
                            col + 1
                        ))
                    })
            };
            let label = parse(0)?;
            if label != 0.0 && label != 1.0 {
                return Err(SimError::Config(format!(
                    "{}: label {label} at row {} is not 0/1",
                    path.display(),
                    row + 1
                )));
            }
            y.push(label as u8);
            for col in 1..=p {
                values.push(parse(col)?);
            }
        }
        let x = Array2::from_shape_vec((y.len(), p), values)
            .map_err(|e| SimError::Config(e.to_string()))?;
        InjectedData::new(x, y)
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// Shuffles the rows and splits off `n_total` rows; the rest is ground truth.
    pub fn split(&self, n_total: usize, split: &SplitFractions, seed: u64) -> Result<RunData> {
        split.validate()?;
        if n_total + 2 > self.n() {
            return Err(SimError::Config(format!(
                "injected data has {} rows, need more than n_total={n_total}",
                self.n()
            )));
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut stream_rng(seed, 0));
        let (tr, va, ev) = split.sizes(n_total);
        Ok(RunData {
            train: self.data.rows(&idx[..tr], DataRole::Train),
            validation: self.data.rows(&idx[tr..tr + va], DataRole::Validation),
            evaluation: self
                .data
                .rows(&idx[tr + va..tr + va + ev], DataRole::Evaluation),
            ground_truth: self.data.rows(&idx[n_total..], DataRole::GroundTruth),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        assert_eq!(SplitFractions::default().sizes(200), (100, 50, 50));
        assert_eq!(SplitFractions::default().sizes(698), (349, 175, 174));
        let bad = SplitFractions {
            train: 0.5,
            validation: 0.5,
            evaluation: 0.25,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn generation_shapes_and_roles() {
        let cfg = ScenarioAConfig {
            ground_truth_n: 500,
            ..Default::default()
        };
        let d = gen_scenario_a(&cfg, 1).unwrap();
        assert_eq!(
            (
                d.train.n(),
                d.validation.n(),
                d.evaluation.n(),
                d.ground_truth.n()
            ),
            (100, 50, 50, 500)
        );
        assert_eq!(d.train.p(), 50);
        assert_eq!(d.evaluation.role, DataRole::Evaluation);
        assert_eq!(d.learning().unwrap().role, DataRole::Learning);
        assert_eq!(d.learning().unwrap().n(), 150);
        assert_eq!(gen_scenario_a(&cfg, 1).unwrap(), d);
        assert_ne!(gen_scenario_a(&cfg, 2).unwrap().train, d.train);
    }

    #[test]
    fn class_balance() {
        let d = gen_scenario_a(&ScenarioAConfig::default(), 7).unwrap();
        let share =
            d.ground_truth.y.iter().map(|&v| f64::from(v)).sum::<f64>() / d.ground_truth.n() as f64;
        assert!((0.48..=0.52).contains(&share), "{share}");
    }

    #[test]
    fn beta_layout() {
        let cfg = ScenarioAConfig {
            p: 12,
            n_nonzero: 3,
            ..Default::default()
        };
        assert_eq!(cfg.beta(), [vec![2.0; 3], vec![0.0; 9]].concat());
        let bad = ScenarioAConfig {
            p: 5,
            n_nonzero: 6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn injected_split_is_disjoint() {
        let n = 40;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let y = (0..n).map(|i| (i % 2) as u8).collect();
        let inj = InjectedData::new(x, y).unwrap();
        let d = inj.split(20, &SplitFractions::default(), 3).unwrap();
        assert_eq!(
            (
                d.train.n(),
                d.validation.n(),
                d.evaluation.n(),
                d.ground_truth.n()
            ),
            (10, 5, 5, 20)
        );
        let mut firsts: Vec<i64> = [&d.train, &d.validation, &d.evaluation, &d.ground_truth]
            .iter()
            .flat_map(|s| s.x.column(0).iter().map(|&v| v as i64).collect::<Vec<_>>())
            .collect();
        firsts.sort_unstable();
        assert_eq!(firsts, (0..n as i64).map(|i| 2 * i).collect::<Vec<_>>());
        assert!(inj.split(39, &SplitFractions::default(), 3).is_err());
    }
}
