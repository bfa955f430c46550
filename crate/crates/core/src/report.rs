//! Quantile tables, histograms and batch summaries of cost samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::cvar_estimate;

pub const DEFAULT_LEVELS: [f64; 8] = [0.20, 0.40, 0.60, 0.70, 0.80, 0.90, 0.95, 0.99];
pub const DEFAULT_BINS: usize = 60;

/// Empirical quantile by linear interpolation of order statistics
/// (`h = (S − 1) p`).
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(costs: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::EmptySample);
    }
    check_levels(levels)?;
    let mut sorted = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(levels.iter().map(|&p| quantile_sorted(&sorted, p)).collect())
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::param("levels", "at least one level required"));
    }
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::param("levels", "levels must lie in (0, 1)"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("levels", "levels must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileReport {
    pub levels: Vec<f64>,
    /// Baseline quantiles.
    pub cost1: Vec<f64>,
    /// Risk-averse quantiles.
    pub cost2: Vec<f64>,
    /// `cost1 − cost2`
    pub differences: Vec<f64>,
}

impl QuantileReport {
    pub fn from_costs(baseline: &[f64], risk_averse: &[f64], levels: &[f64]) -> Result<Self> {
        Self::from_columns(levels, quantiles(baseline, levels)?, quantiles(risk_averse, levels)?)
    }

    pub fn from_columns(levels: &[f64], cost1: Vec<f64>, cost2: Vec<f64>) -> Result<Self> {
        check_levels(levels)?;
        if cost1.len() != levels.len() || cost2.len() != levels.len() {
            return Err(Error::Dimension("quantile columns and levels differ in length".into()));
        }
        let differences = cost1.iter().zip(&cost2).map(|(a, b)| a - b).collect();
        Ok(QuantileReport {
            levels: levels.to_vec(),
            cost1,
            cost2,
            differences,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantile,cost1,cost2,difference\n");
        for i in 0..self.levels.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.levels[i], self.cost1[i], self.cost2[i], self.differences[i]
            ));
        }
        out
    }

    /// Plain-text table in the usual two-decimal layout.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:>8} {:>10} {:>10} {:>12}\n", "quantile", "cost1", "cost2", "difference");
        for i in 0..self.levels.len() {
            out.push_str(&format!(
                "{:>8.2} {:>10.2} {:>10.2} {:>12.2}\n",
                self.levels[i], self.cost1[i], self.cost2[i], self.differences[i]
            ));
        }
        out
    }
}

/// Fixed-width bins over the common range of both samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts1: Vec<u64>,
    pub counts2: Vec<u64>,
}

impl Histogram {
    pub fn new(first: &[f64], second: &[f64], bins: usize) -> Result<Self> {
        if first.is_empty() || second.is_empty() {
            return Err(Error::EmptySample);
        }
        if bins == 0 {
            return Err(Error::param("bins", "must be positive"));
        }
        let (lo, hi) = first
            .iter()
            .chain(second)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let count = |xs: &[f64]| {
            let mut c = vec![0u64; bins];
            for x in xs {
                let i = (((x - lo) / width).floor() as usize).min(bins - 1);
                c[i] += 1;
            }
            c
        };
        Ok(Histogram {
            edges,
            counts1: count(first),
            counts2: count(second),
        })
    }
}

/// Moments, tail risk and quantiles of one cost sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub alpha: f64,
    pub cvar: f64,
    pub levels: Vec<f64>,
    pub quantiles: Vec<f64>,
}

impl BatchSummary {
    pub fn new(costs: &[f64], alpha: f64, levels: &[f64]) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::EmptySample);
        }
        let s = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / s;
        let var = if costs.len() > 1 {
            costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (s - 1.0)
        } else {
            0.0
        };
        Ok(BatchSummary {
            samples: costs.len(),
            mean,
            std: var.sqrt(),
            min: costs.iter().copied().fold(f64::INFINITY, f64::min),
            max: costs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            alpha,
            cvar: cvar_estimate(costs, alpha)?,
            levels: levels.to_vec(),
            quantiles: quantiles(costs, levels)?,
        })
    }
}
