//! Galerkin reduction of the lifted heat/SDE system to a finite linear SDE.
//!
//! Augmented coordinates are ordered `(X ∈ ℝ^d, Y = V, κ_0..κ_N)` where
//! `κ` are coefficients of `z = u - θV - ψMX` on the eigenbasis. With
//! `u(t, 0) = γ₀*z + θ(0)V + ψ(0)MX` the reduced drift is
//!
//! ```text
//!   X-row:  [A + ψ(0)BM,  θ(0)B,  B·trace]
//!   Y-row:  [0,           μ,      0      ]
//!   z-rows: -ψ̂ M · X-row + [μ ψ̂ M,  0,  c·I]
//! ```
//!
//! with `ψ̂` the H¹ projection coefficients of `ψ` and `trace = (φ_n(0))`.
//! The diffusion matrix follows the same pattern with `C, D` in place of
//! `A, B` and no `μ`/`c` terms. The generator block `delta` stores `-λ_n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::FunctionDescriptor;
use crate::matrix::{self, min_symmetric_eigenvalue};
use crate::spectral::{
    project_h1, solve_lifter, BoundaryLifter, EigenBasis, LifterSide, RobinParams,
    TraceRepresenter,
};

/// Deterministic drift term `r(t)` or `σ(t)`, piecewise constant in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    Constant { value: Vec<f64> },
    /// `values[j]` holds on `[j·dt, (j+1)·dt)`; the last value extends to the horizon.
    Piecewise { dt: f64, values: Vec<Vec<f64>> },
}

impl Drift {
    pub fn zeros(dim: usize) -> Self {
        Drift::Constant {
            value: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Drift::Constant { value } => value.len(),
            Drift::Piecewise { values, .. } => values.first().map_or(0, |v| v.len()),
        }
    }

    pub fn at(&self, t: f64) -> &[f64] {
        match self {
            Drift::Constant { value } => value,
            Drift::Piecewise { dt, values } => {
                let idx = ((t / dt + 1e-9).floor().max(0.0) as usize).min(values.len() - 1);
                &values[idx]
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Drift::Constant { value } => value.iter().all(|v| *v == 0.0),
            Drift::Piecewise { values, .. } => values.iter().flatten().all(|v| *v == 0.0),
        }
    }

    /// Applies `map` (rows = output dimension) to every value.
    pub fn mapped(&self, map: &DMatrix<f64>) -> Drift {
        let apply = |v: &[f64]| -> Vec<f64> {
            (map * DVector::from_column_slice(v)).iter().copied().collect()
        };
        match self {
            Drift::Constant { value } => Drift::Constant {
                value: apply(value),
            },
            Drift::Piecewise { dt, values } => Drift::Piecewise {
                dt: *dt,
                values: values.iter().map(|v| apply(v)).collect(),
            },
        }
    }

    pub fn add(&self, other: &Drift) -> Result<Drift> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension("drift dimensions differ".into()));
        }
        match (self, other) {
            (Drift::Constant { value: a }, Drift::Constant { value: b }) => Ok(Drift::Constant {
                value: a.iter().zip(b).map(|(x, y)| x + y).collect(),
            }),
            (Drift::Piecewise { dt, values: a }, Drift::Piecewise { dt: dt2, values: b })
                if dt == dt2 && a.len() == b.len() =>
            {
                Ok(Drift::Piecewise {
                    dt: *dt,
                    values: a
                        .iter()
                        .zip(b)
                        .map(|(u, v)| u.iter().zip(v).map(|(x, y)| x + y).collect())
                        .collect(),
                })
            }
            _ => Err(Error::Dimension("cannot add drifts on different grids".into())),
        }
    }

    pub(crate) fn check(&self, name: &str, dim: usize, horizon: f64) -> Result<()> {
        match self {
            Drift::Constant { value } if value.len() == dim => Ok(()),
            Drift::Piecewise { dt, values }
                if !values.is_empty() && values.iter().all(|v| v.len() == dim) =>
            {
                if *dt <= 0.0 || (values.len() as f64) * dt < horizon * (1.0 - 1e-9) {
                    Err(Error::Dimension(format!("{name}: time grid does not cover [0, T]")))
                } else {
                    Ok(())
                }
            }
            _ => Err(Error::Dimension(format!("{name}: expected vectors of length {dim}"))),
        }
    }
}

/// The original coupled system: heat equation on `[0, 1]` with reaction `c`,
/// boundary input `V` at `x = 1`, and an SDE driven by `u(t, 0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupledSystemSpec {
    #[serde(with = "matrix::rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "matrix::vector")]
    pub b: DVector<f64>,
    #[serde(with = "matrix::rows")]
    pub c: DMatrix<f64>,
    #[serde(with = "matrix::vector")]
    pub d: DVector<f64>,
    /// Row vector coupling `X` into the left boundary flux.
    #[serde(with = "matrix::vector")]
    pub m: DVector<f64>,
    pub r_drift: Drift,
    pub sigma_drift: Drift,
    pub robin: RobinParams,
    pub horizon: f64,
    #[serde(with = "matrix::vector")]
    pub x0: DVector<f64>,
    pub u0: FunctionDescriptor,
    pub v0: f64,
}

/// Tolerance on the boundary compatibility of `u0`.
pub const COMPATIBILITY_TOL: f64 = 1e-6;

impl CoupledSystemSpec {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let shape = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Dimension(format!("{name} has the wrong shape for d = {d}")))
            }
        };
        shape("A", self.a.ncols() == d)?;
        shape("B", self.b.len() == d)?;
        shape("C", self.c.nrows() == d && self.c.ncols() == d)?;
        shape("D", self.d.len() == d)?;
        shape("M", self.m.len() == d)?;
        shape("X0", self.x0.len() == d)?;
        self.r_drift.check("r", d, self.horizon)?;
        self.sigma_drift.check("sigma", d, self.horizon)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("horizon", "must be positive"));
        }
        self.robin.validate()?;
        let left = self.robin.left_residual(&self.u0) - self.m.dot(&self.x0);
        let right = self.robin.right_residual(&self.u0) - self.v0;
        if left.abs() > COMPATIBILITY_TOL || right.abs() > COMPATIBILITY_TOL {
            return Err(Error::param(
                "u0",
                format!(
                    "incompatible with boundary data at t = 0 (left mismatch {left:.3e}, right mismatch {right:.3e})"
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lifters {
    pub actuation: BoundaryLifter,
    pub sde: BoundaryLifter,
}

impl Lifters {
    pub fn solve(params: &RobinParams) -> Result<Self> {
        Ok(Lifters {
            actuation: solve_lifter(params, LifterSide::Actuation)?,
            sde: solve_lifter(params, LifterSide::Sde)?,
        })
    }
}

/// Block sign conventions of the augmented drift/diffusion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Signs obtained by substituting `u(t,0) = z(t,0) + θ(0)V + ψ(0)MX`,
    /// including the reaction term on the z-block.
    #[default]
    Substitution,
    /// The alternative block signs `(A - Bψ(0)M, -Bθ(0), Bγ₀*)` with `-μ` on
    /// the z/X block and no reaction term. Kept for comparison only.
    Alternative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedCost {
    #[serde(with = "matrix::rows")]
    pub q: DMatrix<f64>,
    #[serde(with = "matrix::rows")]
    pub g: DMatrix<f64>,
    pub r_ctrl: f64,
}

impl ReducedCost {
    pub fn zero(n: usize) -> Self {
        ReducedCost {
            q: DMatrix::zeros(n, n),
            g: DMatrix::zeros(n, n),
            r_ctrl: 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ReducedCost {
            q: &self.q * factor,
            g: &self.g * factor,
            r_ctrl: self.r_ctrl * factor,
        }
    }
}

/// Finite-dimensional augmented SDE
/// `dZ = [(diag(delta) + A)Z + B U + r(t)]dt + [C Z + σ(t)]dW` and its cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedModel {
    pub dim_x: usize,
    /// Number of retained modes, `N + 1`.
    pub modes: usize,
    pub n_aug: usize,
    pub eigenvalues: Vec<f64>,
    /// Diagonal generator: zeros on `(X, Y)`, then `-λ_n`.
    pub delta: Vec<f64>,
    #[serde(with = "matrix::rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "matrix::vector")]
    pub b: DVector<f64>,
    #[serde(with = "matrix::rows")]
    pub c: DMatrix<f64>,
    pub r: Drift,
    pub sigma: Drift,
    pub cost: ReducedCost,
    #[serde(with = "matrix::vector")]
    pub z0: DVector<f64>,
    pub horizon: f64,
    pub mu: f64,
    pub signs: SignConvention,
}

impl ReducedModel {
    /// `diag(delta) + A`.
    pub fn drift_matrix(&self) -> DMatrix<f64> {
        let mut m = self.a.clone();
        for (i, d) in self.delta.iter().enumerate() {
            m[(i, i)] += d;
        }
        m
    }

    pub fn with_cost(mut self, cost: ReducedCost) -> Result<Self> {
        if cost.q.nrows() != self.n_aug || cost.g.nrows() != self.n_aug {
            return Err(Error::Dimension(format!(
                "cost matrices must be {n}x{n}",
                n = self.n_aug
            )));
        }
        self.cost = cost;
        Ok(self)
    }

    /// Index of the first PDE coefficient in the augmented state.
    pub fn mode_offset(&self) -> usize {
        self.dim_x + 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn assemble_reduced(
    spec: &CoupledSystemSpec,
    basis: &EigenBasis,
    lifters: &Lifters,
    representer: &TraceRepresenter,
) -> Result<ReducedModel> {
    assemble_reduced_with(spec, basis, lifters, representer, SignConvention::Substitution)
}

pub fn assemble_reduced_with(
    spec: &CoupledSystemSpec,
    basis: &EigenBasis,
    lifters: &Lifters,
    representer: &TraceRepresenter,
    signs: SignConvention,
) -> Result<ReducedModel> {
    spec.validate()?;
    if basis.params != spec.robin {
        return Err(Error::Dimension(
            "eigenbasis was computed for different Robin parameters".into(),
        ));
    }
    if (lifters.actuation.rate - spec.robin.lifter_rate()).abs() > 1e-12
        || (lifters.sde.rate - spec.robin.lifter_rate()).abs() > 1e-12
    {
        return Err(Error::Dimension("lifters were computed for a different shift".into()));
    }
    if representer.inner_with_basis.len() != basis.len() {
        return Err(Error::Dimension("trace representer does not match the basis".into()));
    }
    let d = spec.dim();
    let nm = basis.len();
    let n = d + 1 + nm;
    let (ix, iy, iz) = (0, d, d + 1);
    let mu = spec.robin.mu;

    let theta = lifters.actuation.function();
    let psi = lifters.sde.function();
    let theta_hat = project_h1(&theta, basis)?;
    let psi_hat = project_h1(&psi, basis)?;
    let theta0 = lifters.actuation.value_at0;
    let psi0 = lifters.sde.value_at0;
    // γ₀* applied to Σκ_nφ_n is Σκ_nφ_n(0).
    let trace = DVector::from_column_slice(&basis.trace0);
    let m_row = spec.m.transpose();

    let sign = match signs {
        SignConvention::Substitution => 1.0,
        SignConvention::Alternative => -1.0,
    };

    // X-rows of an operator built from (F, G) = (A, B) or (C, D).
    let x_rows = |f: &DMatrix<f64>, g: &DVector<f64>| -> DMatrix<f64> {
        let mut rows = DMatrix::zeros(d, n);
        let fx = f + (g * &m_row) * (sign * psi0);
        rows.view_mut((0, ix), (d, d)).copy_from(&fx);
        rows.view_mut((0, iy), (d, 1)).copy_from(&(g * (sign * theta0)));
        rows.view_mut((0, iz), (d, nm)).copy_from(&(g * trace.transpose()));
        rows
    };

    let ax = x_rows(&spec.a, &spec.b);
    let cx = x_rows(&spec.c, &spec.d);

    let mut a = DMatrix::zeros(n, n);
    a.rows_mut(ix, d).copy_from(&ax);
    a[(iy, iy)] = mu;
    let psi_m = &psi_hat * &m_row; // nm × d
    a.rows_mut(iz, nm).copy_from(&(-(&psi_hat * (&m_row * &ax))));
    {
        let mut zx = a.view_mut((iz, ix), (nm, d));
        zx += &psi_m * (sign * mu);
    }
    if signs == SignConvention::Substitution {
        for k in 0..nm {
            a[(iz + k, iz + k)] += spec.robin.c;
        }
    }

    let mut c = DMatrix::zeros(n, n);
    c.rows_mut(ix, d).copy_from(&cx);
    c.rows_mut(iz, nm).copy_from(&(-(&psi_hat * (&m_row * &cx))));

    let mut b = DVector::zeros(n);
    b[iy] = 1.0;
    b.rows_mut(iz, nm).copy_from(&(-&theta_hat));

    // drift lift map: r ↦ (r, 0, -ψ̂ M r)
    let mut lift = DMatrix::zeros(n, d);
    lift.view_mut((ix, 0), (d, d)).copy_from(&DMatrix::identity(d, d));
    lift.view_mut((iz, 0), (nm, d)).copy_from(&(-&psi_m));

    let mut delta = vec![0.0; n];
    for (k, lam) in basis.eigenvalues.iter().enumerate() {
        delta[iz + k] = -lam;
    }

    let z_init = FunctionDescriptor::combination([
        (1.0, &spec.u0),
        (-spec.v0, &theta),
        (-spec.m.dot(&spec.x0), &psi),
    ]);
    let kappa0 = project_h1(&z_init, basis)?;
    let mut z0 = DVector::zeros(n);
    z0.rows_mut(ix, d).copy_from(&spec.x0);
    z0[iy] = spec.v0;
    z0.rows_mut(iz, nm).copy_from(&kappa0);

    Ok(ReducedModel {
        dim_x: d,
        modes: nm,
        n_aug: n,
        eigenvalues: basis.eigenvalues.clone(),
        delta,
        a,
        b,
        c,
        r: spec.r_drift.mapped(&lift),
        sigma: spec.sigma_drift.mapped(&lift),
        cost: ReducedCost::zero(n),
        z0,
        horizon: spec.horizon,
        mu,
        signs,
    })
}

/// `Q_N = blockdiag(Q, r, 0)`, `G_N = blockdiag(G, 0, 0)`.
pub fn assemble_cost(
    q: &DMatrix<f64>,
    g: &DMatrix<f64>,
    r_ctrl: f64,
    basis: &EigenBasis,
) -> Result<ReducedCost> {
    let d = q.nrows();
    if q.ncols() != d || g.nrows() != d || g.ncols() != d {
        return Err(Error::Dimension("Q and G must be square of equal size".into()));
    }
    if !(r_ctrl > 0.0 && r_ctrl.is_finite()) {
        return Err(Error::param("r_ctrl", format!("must be positive, got {r_ctrl}")));
    }
    for (name, m) in [("Q", q), ("G", g)] {
        let asym = (m - m.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + m.abs().max()) {
            return Err(Error::param("cost", format!("{name} is not symmetric")));
        }
        if d > 0 && min_symmetric_eigenvalue(m) < -1e-12 {
            return Err(Error::param("cost", format!("{name} is indefinite")));
        }
    }
    let n = d + 1 + basis.len();
    let mut qn = DMatrix::zeros(n, n);
    qn.view_mut((0, 0), (d, d)).copy_from(q);
    qn[(d, d)] = r_ctrl;
    let mut gn = DMatrix::zeros(n, n);
    gn.view_mut((0, 0), (d, d)).copy_from(g);
    Ok(ReducedCost {
        q: qn,
        g: gn,
        r_ctrl,
    })
}

/// Physical state recovered from reduced coordinates.
#[derive(Debug, Clone)]
pub struct ReconstructedState {
    pub u: FunctionDescriptor,
    pub x: DVector<f64>,
    pub v: f64,
}

/// `u = Σκ_nφ_n + θV + ψMX`, reading `X` and `V` from the augmented state.
pub fn reconstruct_state(
    z: &[f64],
    basis: &EigenBasis,
    lifters: &Lifters,
    m: &DVector<f64>,
) -> Result<ReconstructedState> {
    let d = m.len();
    if z.len() != d + 1 + basis.len() {
        return Err(Error::Dimension(format!(
            "state has length {}, expected {}",
            z.len(),
            d + 1 + basis.len()
        )));
    }
    let x = DVector::from_column_slice(&z[..d]);
    let v = z[d];
    let theta = lifters.actuation.function();
    let psi = lifters.sde.function();
    let mx = m.dot(&x);
    let mut parts: Vec<(f64, &FunctionDescriptor)> = z[d + 1..]
        .iter()
        .copied()
        .zip(basis.functions.iter())
        .collect();
    parts.push((v, &theta));
    parts.push((mx, &psi));
    Ok(ReconstructedState {
        u: FunctionDescriptor::combination(parts),
        x,
        v,
    })
}

/// Human-readable summary used by the CLI.
pub fn summary(model: &ReducedModel, lifters: &Lifters) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "state dimension d      : {}", model.dim_x);
    let _ = writeln!(s, "retained modes (N + 1) : {}", model.modes);
    let _ = writeln!(s, "augmented dimension    : {}", model.n_aug);
    let _ = writeln!(s, "horizon T              : {}", model.horizon);
    let _ = writeln!(s, "lifting shift mu       : {}", model.mu);
    let _ = writeln!(s, "eigenvalues            : {:?}", model.eigenvalues);
    let _ = writeln!(
        s,
        "actuation lifter       : f(0) = {:.12}, f(1) = {:.12}",
        lifters.actuation.value_at0, lifters.actuation.value_at1
    );
    let _ = writeln!(
        s,
        "SDE-side lifter        : f(0) = {:.12}, f(1) = {:.12}",
        lifters.sde.value_at0, lifters.sde.value_at1
    );
    let _ = writeln!(s, "|A_N|_F                : {:.6e}", matrix::frobenius(&model.a));
    let _ = writeln!(s, "|C_N|_F                : {:.6e}", matrix::frobenius(&model.c));
    let _ = writeln!(s, "|B_N|_2                : {:.6e}", model.b.norm());
    let _ = writeln!(s, "|Q_N|_F                : {:.6e}", matrix::frobenius(&model.cost.q));
    let _ = writeln!(s, "|G_N|_F                : {:.6e}", matrix::frobenius(&model.cost.g));
    let _ = writeln!(s, "control weight r       : {}", model.cost.r_ctrl);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{solve_eigenpairs, trace_representer};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    pub(crate) fn example_spec() -> CoupledSystemSpec {
        CoupledSystemSpec {
            a: DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.0, 0.4]),
            b: DVector::from_column_slice(&[0.0, 1.0]),
            c: DMatrix::from_diagonal_element(2, 2, 0.1),
            d: DVector::zeros(2),
            m: DVector::zeros(2),
            r_drift: Drift::zeros(2),
            sigma_drift: Drift::Constant {
                value: vec![0.05, 0.05],
            },
            robin: RobinParams::new(0.0, 0.0, 0.2),
            horizon: 4.0,
            x0: DVector::from_column_slice(&[1.0, 1.0]),
            u0: FunctionDescriptor::zero(),
            v0: 0.0,
        }
    }

    fn assemble(spec: &CoupledSystemSpec, modes: usize) -> (ReducedModel, EigenBasis, Lifters) {
        let basis = solve_eigenpairs(&spec.robin, modes).unwrap();
        let lifters = Lifters::solve(&spec.robin).unwrap();
        let rep = trace_representer(&basis);
        let model = assemble_reduced(spec, &basis, &lifters, &rep).unwrap();
        (model, basis, lifters)
    }

    #[test]
    fn example_generator_block() {
        let (model, _, _) = assemble(&example_spec(), 3);
        assert_eq!(model.n_aug, 7);
        let expected = [0.0, 0.0, 0.0, 0.0, -PI * PI, -4.0 * PI * PI, -9.0 * PI * PI];
        for (got, want) in model.delta.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(model.a[(2, 2)], model.mu);
        assert_eq!(model.b[2], 1.0);
    }

    #[test]
    fn decoupled_subsystem_is_preserved() {
        let mut spec = example_spec();
        spec.b = DVector::zeros(2);
        spec.c = DMatrix::from_row_slice(2, 2, &[0.1, -0.3, 0.2, 0.05]);
        let (model, _, _) = assemble(&spec, 4);
        assert_eq!(model.a.view((0, 0), (2, 2)).clone_owned(), spec.a);
        assert_eq!(model.c.view((0, 0), (2, 2)).clone_owned(), spec.c);
        for j in 2..model.n_aug {
            assert_eq!(model.a[(0, j)], 0.0);
            assert_eq!(model.c[(1, j)], 0.0);
        }
    }

    #[test]
    fn initial_state_projects_lifted_data() {
        let mut spec = example_spec();
        spec.u0 = FunctionDescriptor::Trig {
            coefficients: [2.0, 0.0],
            frequency: PI,
        };
        let (model, basis, _) = assemble(&spec, 3);
        // u0 = 2cos(πx) = 2·√(1+π²)/√2 · φ₁
        let scale = 2.0 / basis.functions[1].value(0.0);
        assert_abs_diff_eq!(model.z0[4], scale, epsilon = 1e-12);
        assert_abs_diff_eq!(model.z0[3], 0.0, epsilon = 1e-12);
        assert_eq!(model.z0[0], 1.0);
    }

    #[test]
    fn incompatible_initial_profile_is_rejected() {
        let mut spec = example_spec();
        spec.u0 = FunctionDescriptor::Polynomial {
            coefficients: vec![0.0, 1.0],
        };
        assert!(spec.validate().is_err());
        spec.v0 = 1.0; // u0'(1) = 1 = V0, but u0'(0) = 1 ≠ MX0 = 0
        assert!(spec.validate().is_err());
    }

    #[test]
    fn cost_blocks() {
        let basis = solve_eigenpairs(&RobinParams::new(0.0, 0.0, 0.2), 3).unwrap();
        let cost = assemble_cost(&DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), 3.0, &basis).unwrap();
        let diag: Vec<f64> = cost.q.diagonal().iter().copied().collect();
        assert_eq!(diag, vec![1.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(cost.q.iter().filter(|v| **v != 0.0).count(), 3);

        let zero = assemble_cost(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2), 3.0, &basis).unwrap();
        assert_eq!(zero.q.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(zero.q[(2, 2)], 3.0);

        let g = assemble_cost(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), 3.0, &basis).unwrap();
        assert_eq!(g.g.view((0, 0), (2, 2)).clone_owned(), DMatrix::identity(2, 2));
        assert_eq!(g.g.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn cost_rejects_indefinite_or_asymmetric() {
        let basis = solve_eigenpairs(&RobinParams::new(0.0, 0.0, 0.2), 1).unwrap();
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(assemble_cost(&indefinite, &DMatrix::zeros(2, 2), 1.0, &basis).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(assemble_cost(&asym, &DMatrix::zeros(2, 2), 1.0, &basis).is_err());
        assert!(assemble_cost(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2), 0.0, &basis).is_err());
    }

    #[test]
    fn reconstruction_of_simple_states() {
        let spec = example_spec();
        let (_, basis, lifters) = assemble(&spec, 3);
        let mut z = vec![0.0; 7];
        let st = reconstruct_state(&z, &basis, &lifters, &spec.m).unwrap();
        for i in 0..=10 {
            assert_eq!(st.u.value(i as f64 / 10.0), 0.0);
        }
        z[3] = 1.0;
        let st = reconstruct_state(&z, &basis, &lifters, &spec.m).unwrap();
        for i in 0..=10 {
            assert_abs_diff_eq!(st.u.value(i as f64 / 10.0), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let (model, _, _) = assemble(&example_spec(), 2);
        let back = ReducedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.a, model.a);
        assert_eq!(back.z0, model.z0);
        assert_eq!(back.sigma, model.sigma);
    }

    #[test]
    fn mismatched_basis_is_rejected() {
        let spec = example_spec();
        let basis = solve_eigenpairs(&RobinParams::new(1.0, 0.0, 0.2), 2).unwrap();
        let lifters = Lifters::solve(&spec.robin).unwrap();
        let rep = trace_representer(&basis);
        assert!(assemble_reduced(&spec, &basis, &lifters, &rep).is_err());
    }
}
