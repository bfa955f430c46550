//! Mean-cost-optimal static gain from the generalized algebraic Riccati
//! equation of a linear SDE with state-multiplicative noise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{frobenius, rows};
use crate::reduction::ReducedModel;
use crate::sde::{FeedbackPolicy, TimeGrid};

pub const GAIN_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    #[serde(with = "rows")]
    pub p: DMatrix<f64>,
    pub k: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl RiccatiSolution {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Linear SDE data `dZ = (A Z + b U) dt + C Z dW` with cost `∫ ZᵀQZ + r U²`.
#[derive(Debug, Clone, Copy)]
pub struct LqProblem<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DVector<f64>,
    pub c: &'a DMatrix<f64>,
    pub q: &'a DMatrix<f64>,
    pub r: f64,
}

impl LqProblem<'_> {
    fn n(&self) -> usize {
        self.a.nrows()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.a.ncols() != n || self.b.len() != n || self.c.shape() != (n, n) || self.q.shape() != (n, n) {
            return Err(Error::Dimension("Riccati data shapes disagree".into()));
        }
        if !(self.r > 0.0) {
            return Err(Error::param("r_ctrl", "must be positive"));
        }
        Ok(())
    }

    /// `ÂᵀP + PÂ + CᵀPC − P b r⁻¹ bᵀ P + Q`
    pub fn residual(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let pb = p * self.b;
        self.a.transpose() * p + p * self.a + self.c.transpose() * p * self.c - &pb * pb.transpose() / self.r
            + self.q
    }
}

/// `X ↦ AclᵀX + X Acl + CᵀXC` as a matrix on column-major `vec X`.
fn lyapunov_operator(acl: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = acl.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let at = acl.transpose();
    id.kronecker(&at) + at.kronecker(&id) + c.transpose().kronecker(&c.transpose())
}

/// Largest real part of the spectrum of the second-moment generator; negative
/// iff `A + bK` is mean-square stable under `C`.
pub fn mean_square_abscissa(acl: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    lyapunov_operator(acl, c)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn closed_loop(a: &DMatrix<f64>, b: &DVector<f64>, k: &DVector<f64>) -> DMatrix<f64> {
    a + b * k.transpose()
}

/// Solves `AclᵀP + P Acl + CᵀPC + Q + r KᵀK = 0`.
fn policy_evaluation(pr: &LqProblem, acl: &DMatrix<f64>, k: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = pr.n();
    let op = lyapunov_operator(acl, pr.c);
    let rhs = -(pr.q + k * k.transpose() * pr.r);
    let vec = DVector::from_column_slice(rhs.as_slice());
    let sol = op
        .lu()
        .solve(&vec)
        .ok_or_else(|| Error::Singular("Lyapunov-type operator".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Kleinman–Newton from a mean-square stabilizing `k0`; returns the
/// solution and every iterate `P_k`.
pub fn kleinman_newton(pr: &LqProblem, k0: DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>, Vec<DMatrix<f64>>)> {
    let mut k = k0;
    let mut iterates = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let acl = closed_loop(pr.a, pr.b, &k);
        let p = policy_evaluation(pr, &acl, &k)?;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Riccati("non-finite Lyapunov solution".into()));
        }
        let next = -(p.transpose() * pr.b) / pr.r;
        let change = (&next - &k).amax();
        iterates.push(p);
        k = next;
        if change < GAIN_TOL {
            let p = iterates.last().cloned().unwrap_or_else(|| DMatrix::zeros(pr.n(), pr.n()));
            return Ok((p, k, iterates));
        }
    }
    Err(Error::Riccati(format!(
        "Kleinman-Newton did not converge in {MAX_ITERATIONS} iterations"
    )))
}

/// Solves the generalized ARE. The initial stabilizing gain comes from a
/// shift continuation: for `Â − sI` with `s` large the zero gain is mean-square
/// stabilizing; the shift is then lowered to zero, warm-starting each solve.
pub fn solve_are(pr: &LqProblem) -> Result<RiccatiSolution> {
    pr.validate()?;
    let n = pr.n();
    let id = DMatrix::<f64>::identity(n, n);
    let abscissa = mean_square_abscissa(pr.a, pr.c);
    let mut shift = if abscissa < 0.0 { 0.0 } else { 0.5 * abscissa + 1.0 };
    let mut k = DVector::zeros(n);
    let mut step = shift;
    let mut total = 0;
    for _ in 0..500 {
        let shifted = pr.a - &id * shift;
        let sub = LqProblem { a: &shifted, ..*pr };
        let (p, next_k, iterates) = kleinman_newton(&sub, k.clone())?;
        total += iterates.len();
        k = next_k;
        if shift == 0.0 {
            let residual = frobenius(&pr.residual(&p));
            return Ok(RiccatiSolution {
                p,
                k: k.iter().copied().collect(),
                residual,
                iterations: total,
            });
        }
        // Lower the shift as far as the current gain stays stabilizing.
        let mut accepted = false;
        for _ in 0..60 {
            let trial = (shift - step).max(0.0);
            if trial >= shift {
                break;
            }
            let acl = closed_loop(&(pr.a - &id * trial), pr.b, &k);
            if mean_square_abscissa(&acl, pr.c) < 0.0 {
                shift = trial;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::Riccati(
                "no mean-square stabilizing gain found (system not stabilizable?)".into(),
            ));
        }
    }
    Err(Error::Riccati("shift continuation did not reach the original system".into()))
}

pub fn solve_stochastic_are(model: &ReducedModel) -> Result<RiccatiSolution> {
    let a = model.drift_matrix();
    solve_are(&LqProblem {
        a: &a,
        b: &model.b,
        c: &model.c,
        q: &model.cost.q,
        r: model.cost.r_ctrl,
    })
}

/// `v ≡ 0`, `K = K_lq` clipped into `box_k`.
pub fn baseline_policy(sol: &RiccatiSolution, grid: &TimeGrid, box_v: [f64; 2], box_k: [f64; 2]) -> FeedbackPolicy {
    let mut policy = FeedbackPolicy {
        v: vec![0.0; grid.steps],
        k: sol.k.clone(),
        box_v,
        box_k,
    };
    if policy.project() {
        log::warn!("baseline gain clipped into [{}, {}]; it differs from the unconstrained LQ law", box_k[0], box_k[1]);
    }
    policy
}
