//! L1-regularized logistic regression fitted by cyclic coordinate descent on
//! the iteratively reweighted quadratic approximation.
//!
//! The objective is `-(1/n)·loglik(b0, β) + λ·‖β‖₁` with an unpenalized
//! intercept.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use mabt_core::selection::{Predictor, Trainer};
use mabt_core::Error;

use crate::scenario::inv_logit;

const PROB_FLOOR: f64 = 1e-5;

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Convergence when the largest coefficient change falls below this.
    pub tolerance: f64,
    /// Coordinate sweeps allowed per λ, summed over reweighting steps.
    pub max_sweeps: usize,
    pub max_irls: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-7,
            max_sweeps: 10_000,
            max_irls: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub irls_iterations: usize,
    pub sweeps: usize,
    pub converged: bool,
}

/// A fitted logistic lasso model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticLasso {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub diagnostics: FitDiagnostics,
}

impl LogisticLasso {
    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }

    fn linear(&self, row: ArrayView1<f64>) -> f64 {
        self.intercept + row.iter().zip(&self.beta).map(|(x, b)| x * b).sum::<f64>()
    }
}

impl Predictor for LogisticLasso {
    fn score(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.linear(r)).collect()
    }

    fn label(&self, x: &Array2<f64>) -> Vec<u8> {
        // invlogit(η) ≥ 0.5 exactly when η ≥ 0
        self.score(x)
            .into_iter()
            .map(|s| u8::from(s >= 0.0))
            .collect()
    }
}

fn check_labels(x: &Array2<f64>, y: &[u8]) -> Result<f64, Error> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: x.nrows(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mean = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
    if mean == 0.0 || mean == 1.0 {
        return Err(Error::SingleClass);
    }
    Ok(mean)
}

/// Smallest λ at which every coefficient is zero: `max_j |⟨x_j, y − ȳ⟩| / n`.
pub fn lambda_max(x: &Array2<f64>, y: &[u8]) -> Result<f64, Error> {
    let mean = check_labels(x, y)?;
    let n = y.len() as f64;
    Ok(x.columns()
        .into_iter()
        .map(|col| {
            col.iter()
                .zip(y)
                .map(|(v, &yi)| v * (f64::from(yi) - mean))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max))
}

/// Grid of `size` fractions of λ_max, equidistant from 1 down to 0, with the
/// 0 endpoint replaced by 1/1000.
pub fn grid_fractions(size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![1.0];
    }
    (0..size)
        .map(|k| {
            let f = 1.0 - k as f64 / (size - 1) as f64;
            if k == size - 1 {
                1e-3
            } else {
                f
            }
        })
        .collect()
}

/// Fits one model per λ (given in decreasing order), warm-starting each fit
/// from the previous one.
pub fn fit_path(
    x: &Array2<f64>,
    y: &[u8],
    lambdas: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<LogisticLasso>, Error> {
    let mean = check_labels(x, y)?;
    let lmax = lambda_max(x, y)?;
    let null_intercept = (mean / (1.0 - mean)).ln();
    let mut solver = Solver::new(x, y);
    let mut b0 = null_intercept;
    let mut beta = vec![0.0; x.ncols()];
    let mut fits = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid lambda {lambda}")));
        }
        if lambda >= lmax * (1.0 - 1e-12) {
            b0 = null_intercept;
            beta.iter_mut().for_each(|b| *b = 0.0);
            fits.push(LogisticLasso {
                intercept: b0,
                beta: beta.clone(),
                lambda,
                diagnostics: FitDiagnostics {
                    irls_iterations: 0,
                    sweeps: 0,
                    converged: true,
                },
            });
            continue;
        }
        let diagnostics = solver.fit(lambda, &mut b0, &mut beta, settings);
        fits.push(LogisticLasso {
            intercept: b0,
            beta: beta.clone(),
            lambda,
            diagnostics,
        });
    }
    Ok(fits)
}

/// Fits a single λ from a cold start.
pub fn fit(
    x: &Array2<f64>,
    y: &[u8],
    lambda: f64,
    settings: &SolverSettings,
) -> Result<LogisticLasso, Error> {
    Ok(fit_path(x, y, &[lambda], settings)?.remove(0))
}

struct Solver<'a> {
    x: &'a Array2<f64>,
    y: Vec<f64>,
    /// Feature columns, contiguous.
    cols: Vec<Vec<f64>>,
}

impl<'a> Solver<'a> {
    fn new(x: &'a Array2<f64>, y: &[u8]) -> Self {
        Solver {
            x,
            y: y.iter().map(|&v| f64::from(v)).collect(),
            cols: x.columns().into_iter().map(|c| c.to_vec()).collect(),
        }
    }

    fn fit(
        &mut self,
        lambda: f64,
        b0: &mut f64,
        beta: &mut [f64],
        settings: &SolverSettings,
    ) -> FitDiagnostics {
        let n = self.y.len();
        let nf = n as f64;
        let mut eta = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut xwx = vec![0.0; beta.len()];
        let mut sweeps = 0;
        let mut irls = 0;
        let mut converged = false;
        while irls < settings.max_irls && sweeps < settings.max_sweeps {
            irls += 1;
            for (i, e) in eta.iter_mut().enumerate() {
                *e = *b0
                    + self
                        .x
                        .row(i)
                        .iter()
                        .zip(beta.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
            for i in 0..n {
                let p = inv_logit(eta[i]).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                w[i] = p * (1.0 - p);
                r[i] = (self.y[i] - p) / w[i];
            }
            for (j, col) in self.cols.iter().enumerate() {
                xwx[j] = col.iter().zip(&w).map(|(v, wi)| wi * v * v).sum::<f64>() / nf;
            }
            let sum_w: f64 = w.iter().sum();
            let start_b0 = *b0;
            let start_beta = beta.to_vec();

            loop {
                sweeps += 1;
                let mut max_delta = 0.0_f64;
                let d0 = r.iter().zip(&w).map(|(ri, wi)| wi * ri).sum::<f64>() / sum_w;
                *b0 += d0;
                r.iter_mut().for_each(|ri| *ri -= d0);
                max_delta = max_delta.max(d0.abs());
                for (j, col) in self.cols.iter().enumerate() {
                    if xwx[j] <= 0.0 {
                        continue;
                    }
                    let g = col
                        .iter()
                        .zip(&w)
                        .zip(&r)
                        .map(|((v, wi), ri)| wi * v * ri)
                        .sum::<f64>()
                        / nf
                        + xwx[j] * beta[j];
                    let new = soft_threshold(g, lambda) / xwx[j];
                    let delta = new - beta[j];
                    if delta != 0.0 {
                        beta[j] = new;
                        r.iter_mut().zip(col).for_each(|(ri, v)| *ri -= delta * v);
                        max_delta = max_delta.max(delta.abs());
                    }
                }
                if max_delta < settings.tolerance || sweeps >= settings.max_sweeps {
                    break;
                }
            }

            let outer_delta = beta
                .iter()
                .zip(&start_beta)
                .map(|(a, b)| (a - b).abs())
                .fold((*b0 - start_b0).abs(), f64::max);
            if outer_delta < settings.tolerance {
                converged = true;
                break;
            }
        }
        FitDiagnostics {
            irls_iterations: irls,
            sweeps,
            converged,
        }
    }
}

fn soft_threshold(g: f64, lambda: f64) -> f64 {
    if g > lambda {
        g - lambda
    } else if g < -lambda {
        g + lambda
    } else {
        0.0
    }
}

/// Trains the full λ grid; λ_max is recomputed from each training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoGridTrainer {
    pub grid_size: usize,
    pub settings: SolverSettings,
}

impl LassoGridTrainer {
    pub fn new(grid_size: usize) -> Self {
        LassoGridTrainer {
            grid_size,
            settings: SolverSettings::default(),
        }
    }
}

impl Trainer for LassoGridTrainer {
    type Model = LogisticLasso;

    fn candidates(&self) -> usize {
        self.grid_size
    }

    fn train(&self, x: &Array2<f64>, y: &[u8]) -> Result<Vec<LogisticLasso>, Error> {
        let lmax = lambda_max(x, y)?;
        let lambdas: Vec<f64> = grid_fractions(self.grid_size)
            .iter()
            .map(|f| f * lmax)
            .collect();
        fit_path(x, y, &lambdas, &self.settings)
    }
}
