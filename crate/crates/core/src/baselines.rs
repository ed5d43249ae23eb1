//! Classical one-sided lower confidence bounds and the Šidák adjustment.
//!
//! All bounds use the one-sided normal quantile `z = Φ⁻¹(1 − α)` where a
//! normal approximation is involved, and are clamped into `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::placement_counts;
use crate::special::{beta_quantile, normal_quantile};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn z_upper(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha)
}

/// Per-comparison level `1 − (1 − α)^(1/m)`.
pub fn sidak_adjust(alpha: f64, m: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if m == 1 {
        return Ok(alpha);
    }
    // -expm1(ln(1-α)/m) avoids cancellation for large m
    Ok(-((-alpha).ln_1p() / m as f64).exp_m1())
}

/// Successes out of trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialSummary {
    successes: u64,
    trials: u64,
}

impl BinomialSummary {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(Error::InvalidArgument(format!(
                "invalid binomial summary {successes}/{trials}"
            )));
        }
        Ok(BinomialSummary { successes, trials })
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn proportion(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Wald normal-approximation lower bound.
pub fn wald_lower(s: &BinomialSummary, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let p = s.proportion();
    let se = (p * (1.0 - p) / s.trials as f64).sqrt();
    Ok((p - z_upper(alpha) * se).clamp(0.0, 1.0))
}

/// Wilson score lower bound, without continuity correction.
pub fn wilson_lower(s: &BinomialSummary, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if s.successes == 0 {
        return Ok(0.0);
    }
    let n = s.trials as f64;
    let p = s.proportion();
    let z = z_upper(alpha);
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((centre - spread) / (1.0 + z2 / n)).clamp(0.0, p))
}

/// Clopper-Pearson lower bound: the α quantile of Beta(x, n − x + 1).
pub fn cp_lower(s: &BinomialSummary, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if s.successes == 0 {
        return Ok(0.0);
    }
    let x = s.successes as f64;
    let n = s.trials as f64;
    if s.successes == s.trials {
        return Ok(alpha.powf(1.0 / n));
    }
    Ok(beta_quantile(alpha, x, n - x + 1.0).clamp(0.0, 1.0))
}

/// AUC estimate with its variance and class sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub variance: f64,
}

/// DeLong structural components: AUC and its variance `S10/n_pos + S01/n_neg`.
pub fn delong_components(labels: &[u8], scores: &[f64]) -> Result<AucSummary> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::NonBinary {
            index: i,
            value: f64::from(labels[i]),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let placements = placement_counts(labels, scores);
    let mut v10 = Vec::with_capacity(n_pos);
    let mut v01 = Vec::with_capacity(n_neg);
    for (&y, &c) in labels.iter().zip(&placements) {
        if y == 1 {
            v10.push(c / n_neg as f64);
        } else {
            v01.push(c / n_pos as f64);
        }
    }
    // pair count first, so the AUC is the same single division as the weighted measure
    let pairs: f64 = labels
        .iter()
        .zip(&placements)
        .filter(|(&y, _)| y == 1)
        .map(|(_, &c)| c)
        .sum();
    let auc = pairs / (n_pos as f64 * n_neg as f64);
    let variance = sample_variance(&v10) / n_pos as f64 + sample_variance(&v01) / n_neg as f64;
    Ok(AucSummary {
        auc,
        n_pos,
        n_neg,
        variance,
    })
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// DeLong lower bound `AUC − z·sqrt(variance)`.
pub fn delong_lower(s: &AucSummary, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((s.auc - z_upper(alpha) * s.variance.max(0.0).sqrt()).clamp(0.0, 1.0))
}

/// Hanley-McNeil variance of an AUC value.
pub fn hm_variance(auc: f64, n_pos: usize, n_neg: usize) -> f64 {
    let a = auc;
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let a2 = a * a;
    let var = (a * (1.0 - a) + (n_pos as f64 - 1.0) * (q1 - a2) + (n_neg as f64 - 1.0) * (q2 - a2))
        / (n_pos as f64 * n_neg as f64);
    var.max(0.0)
}

/// Hanley-McNeil lower bound; uses the AUC and class sizes of the summary.
pub fn hm_lower(s: &AucSummary, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if s.n_pos == 0 || s.n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let var = hm_variance(s.auc, s.n_pos, s.n_neg);
    Ok((s.auc - z_upper(alpha) * var.sqrt()).clamp(0.0, 1.0))
}
