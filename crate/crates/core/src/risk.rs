//! Empirical CVaR and Euclidean projection onto its risk envelope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    Cvar,
    Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub kind: RiskKind,
    pub alpha: f64,
    pub gamma: f64,
}

impl RiskSpec {
    pub fn cvar(alpha: f64, gamma: f64) -> Result<Self> {
        let spec = RiskSpec {
            kind: RiskKind::Cvar,
            alpha,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn expectation() -> Self {
        RiskSpec {
            kind: RiskKind::Expectation,
            alpha: 1.0,
            gamma: 0.0,
        }
    }

    /// Tail level actually used: expectation is CVaR at level 1.
    pub fn level(&self) -> f64 {
        match self.kind {
            RiskKind::Cvar => self.alpha,
            RiskKind::Expectation => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn evaluate(&self, costs: &[f64]) -> Result<f64> {
        cvar_estimate(costs, self.level())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Per-sample dual weights, feasible for `{ζ : mean ζ = 1, 0 ≤ ζ ≤ 1/α}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskWeights {
    pub zeta: Vec<f64>,
}

impl RiskWeights {
    pub fn uniform(samples: usize) -> Self {
        RiskWeights {
            zeta: vec![1.0; samples],
        }
    }

    pub fn mean(&self) -> f64 {
        self.zeta.iter().sum::<f64>() / self.zeta.len() as f64
    }

    pub fn is_feasible(&self, alpha: f64, tol: f64) -> bool {
        let cap = 1.0 / alpha;
        !self.zeta.is_empty()
            && (self.mean() - 1.0).abs() <= tol
            && self.zeta.iter().all(|z| *z >= -tol && *z <= cap + tol)
    }

    /// `(1/S) Σ ζ_i c_i`
    pub fn weighted_mean(&self, costs: &[f64]) -> f64 {
        self.zeta.iter().zip(costs).map(|(z, c)| z * c).sum::<f64>() / costs.len() as f64
    }
}

/// Mean of the worst `α` fraction of `costs`, with fractional weight on the
/// boundary sample when `αS` is not an integer.
pub fn cvar_estimate(costs: &[f64], alpha: f64) -> Result<f64> {
    if costs.is_empty() {
        return Err(Error::EmptySample);
    }
    check_alpha(alpha)?;
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mass = alpha * sorted.len() as f64;
    let whole = (mass.floor() as usize).min(sorted.len());
    let mut acc: f64 = sorted[..whole].iter().sum();
    let frac = mass - whole as f64;
    if frac > 0.0 && whole < sorted.len() {
        acc += frac * sorted[whole];
    }
    Ok(acc / mass)
}

/// Euclidean projection of `y` onto the CVaR envelope:
/// `ζ_i = clip(y_i + τ, 0, 1/α)` with `τ` chosen so that `mean ζ = 1`.
pub fn project_risk_weights(y: &[f64], alpha: f64) -> Result<RiskWeights> {
    if y.is_empty() {
        return Err(Error::EmptySample);
    }
    check_alpha(alpha)?;
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::param("y", format!("non-finite entry {bad}")));
    }
    let cap = 1.0 / alpha;
    let s = y.len() as f64;
    let total = |tau: f64| y.iter().map(|v| (v + tau).clamp(0.0, cap)).sum::<f64>();

    let (ymin, ymax) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let mut lo = -ymax;
    let mut hi = cap - ymin;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
        if total(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut tau = 0.5 * (lo + hi);

    // Once the active set is known, τ solves a linear equation exactly.
    let (mut upper, mut free_sum, mut free) = (0usize, 0.0, 0usize);
    for v in y {
        let z = v + tau;
        if z >= cap {
            upper += 1;
        } else if z > 0.0 {
            free += 1;
            free_sum += v;
        }
    }
    if free > 0 {
        let exact = (s - cap * upper as f64 - free_sum) / free as f64;
        if (exact - tau).abs() <= 1e-6 * (1.0 + tau.abs()) {
            tau = exact;
        }
    }
    Ok(RiskWeights {
        zeta: y.iter().map(|v| (v + tau).clamp(0.0, cap)).collect(),
    })
}
