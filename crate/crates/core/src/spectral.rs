//! Robin-Laplacian eigenbasis on `[0, 1]`, boundary lifters and the H¹
//! Riesz representer of the trace at `x = 0`.
//!
//! Boundary conventions throughout: `f'(0) - β₀ f(0)` is the left Robin
//! residual and `f'(1) + β₁ f(1)` the right one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::{h1_inner, FunctionDescriptor};

/// Robin coefficients, reaction rate `c` and lifting shift `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobinParams {
    pub beta0: f64,
    pub beta1: f64,
    pub c: f64,
    pub mu: f64,
}

impl RobinParams {
    /// Uses the default shift `mu = c + 1`.
    pub fn new(beta0: f64, beta1: f64, c: f64) -> Self {
        RobinParams {
            beta0,
            beta1,
            c,
            mu: c + 1.0,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta0", self.beta0), ("beta1", self.beta1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.c.is_finite() || !self.mu.is_finite() {
            return Err(Error::param("mu", "c and mu must be finite"));
        }
        if self.mu - self.c <= 0.0 {
            return Err(Error::param(
                "mu",
                format!("mu - c must be positive (mu = {}, c = {})", self.mu, self.c),
            ));
        }
        Ok(())
    }

    pub fn is_neumann(&self) -> bool {
        self.beta0 == 0.0 && self.beta1 == 0.0
    }

    /// `√(mu - c)`, the rate of the hyperbolic lifters.
    pub fn lifter_rate(&self) -> f64 {
        (self.mu - self.c).sqrt()
    }

    pub fn left_residual(&self, f: &FunctionDescriptor) -> f64 {
        f.derivative(0.0) - self.beta0 * f.value(0.0)
    }

    pub fn right_residual(&self, f: &FunctionDescriptor) -> f64 {
        f.derivative(1.0) + self.beta1 * f.value(1.0)
    }
}

/// First `N + 1` eigenpairs of `-φ'' = λφ` with homogeneous Robin conditions,
/// normalized in H¹.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenBasis {
    pub params: RobinParams,
    pub eigenvalues: Vec<f64>,
    pub functions: Vec<FunctionDescriptor>,
    pub trace0: Vec<f64>,
    pub trace1: Vec<f64>,
    /// Row-major `(N+1)²` H¹ Gram matrix.
    pub gram: Vec<f64>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_row_slice(n, n, &self.gram)
    }

    /// `Σ coefficients[n] φ_n`.
    pub fn synthesize(&self, coefficients: &[f64]) -> FunctionDescriptor {
        FunctionDescriptor::combination(
            coefficients
                .iter()
                .copied()
                .zip(self.functions.iter()),
        )
    }

    /// Basis restricted to its first `len` modes.
    pub fn truncated(&self, len: usize) -> EigenBasis {
        let n = self.len();
        let len = len.min(n);
        let mut gram = Vec::with_capacity(len * len);
        for i in 0..len {
            gram.extend_from_slice(&self.gram[i * n..i * n + len]);
        }
        EigenBasis {
            params: self.params,
            eigenvalues: self.eigenvalues[..len].to_vec(),
            functions: self.functions[..len].to_vec(),
            trace0: self.trace0[..len].to_vec(),
            trace1: self.trace1[..len].to_vec(),
            gram,
        }
    }
}

/// `s·g(s)` where `g` is the right Robin residual of the left-admissible
/// candidate `cos(sx) + (β₀/s) sin(sx)`. Multiplying by `s` removes the
/// pole at the origin.
fn characteristic(s: f64, beta0: f64, beta1: f64) -> f64 {
    let (sin, cos) = s.sin_cos();
    (beta0 * beta1 - s * s) * sin + (beta0 + beta1) * s * cos
}

const BISECTION_WIDTH: f64 = 1e-13;
const SCAN_PER_PI: usize = 64;

fn bisect(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenpairs `(λ_n, φ_n)`, `n = 0..=modes`, in increasing order.
pub fn solve_eigenpairs(params: &RobinParams, modes: usize) -> Result<EigenBasis> {
    params.validate()?;
    let wanted = modes + 1;
    let mut roots: Vec<f64> = Vec::with_capacity(wanted);
    let mut functions = Vec::with_capacity(wanted);

    if params.is_neumann() {
        // Characteristic function reduces to -s² sin s: roots at nπ exactly,
        // plus the constant mode.
        functions.push(FunctionDescriptor::constant(1.0));
        roots.push(0.0);
        for n in 1..wanted {
            roots.push(n as f64 * std::f64::consts::PI);
        }
    } else {
        let (b0, b1) = (params.beta0, params.beta1);
        let f = |s: f64| characteristic(s, b0, b1);
        let pi = std::f64::consts::PI;
        let mut k = 0usize;
        while roots.len() < wanted {
            // Interval (kπ, (k+1)π] holds exactly one root for β ≥ 0; scan
            // it on a fine grid anyway so tangencies cannot hide a sign change.
            let lo = (k as f64 * pi).max(1e-9);
            let hi = (k + 1) as f64 * pi;
            let mut found = 0;
            let mut prev_s = lo;
            let mut prev_f = f(lo);
            for j in 1..=SCAN_PER_PI {
                let s = lo + (hi - lo) * j as f64 / SCAN_PER_PI as f64;
                let fs = f(s);
                if fs == 0.0 {
                    roots.push(s);
                    found += 1;
                } else if (fs > 0.0) != (prev_f > 0.0) && prev_f != 0.0 {
                    roots.push(bisect(prev_s, s, f));
                    found += 1;
                }
                prev_s = s;
                prev_f = fs;
            }
            if found == 0 {
                return Err(Error::RootBracketing {
                    lo,
                    hi,
                    found: roots.len(),
                    wanted,
                });
            }
            k += 1;
            if k > wanted + 8 {
                return Err(Error::RootBracketing {
                    lo,
                    hi,
                    found: roots.len(),
                    wanted,
                });
            }
        }
        roots.truncate(wanted);
    }

    let eigenvalues: Vec<f64> = roots.iter().map(|s| s * s).collect();
    for (i, &s) in roots.iter().enumerate() {
        if i == 0 && s == 0.0 {
            continue;
        }
        let raw = FunctionDescriptor::Trig {
            coefficients: [1.0, params.beta0 / s],
            frequency: s,
        };
        let norm = h1_inner(&raw, &raw).sqrt();
        functions.push(raw.scaled(1.0 / norm));
    }

    let n = functions.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let g = h1_inner(&functions[i], &functions[j]);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    let trace0 = functions.iter().map(|f| f.value(0.0)).collect();
    let trace1 = functions.iter().map(|f| f.value(1.0)).collect();
    Ok(EigenBasis {
        params: *params,
        eigenvalues,
        functions,
        trace0,
        trace1,
        gram,
    })
}

/// Coefficients `κ` of the H¹-orthogonal projection of `f` onto the basis
/// span: `gram · κ = [⟨f, φ_n⟩_{H¹}]_n`.
pub fn project_h1(f: &FunctionDescriptor, basis: &EigenBasis) -> Result<DVector<f64>> {
    let rhs = DVector::from_iterator(
        basis.len(),
        basis.functions.iter().map(|phi| h1_inner(f, phi)),
    );
    solve_gram(basis, rhs)
}

pub(crate) fn solve_gram(basis: &EigenBasis, rhs: DVector<f64>) -> Result<DVector<f64>> {
    if basis.params.is_neumann() {
        // orthonormal: the Gram matrix is the identity up to rounding
        return Ok(rhs);
    }
    let chol = basis
        .gram_matrix()
        .cholesky()
        .ok_or_else(|| Error::Singular("H1 Gram matrix of the eigenbasis".into()))?;
    Ok(chol.solve(&rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifterSide {
    /// Multiplies the boundary input `V`; unit Robin residual at `x = 1`.
    Actuation,
    /// Multiplies `M X`; unit Robin residual at `x = 0`.
    Sde,
}

/// Solution of `-f'' - c f + mu f = 0` with one unit Robin residual,
/// written as `a cosh(kx) + b sinh(kx)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLifter {
    pub side: LifterSide,
    pub rate: f64,
    pub coef_a: f64,
    pub coef_b: f64,
    pub value_at0: f64,
    pub value_at1: f64,
}

impl BoundaryLifter {
    pub fn function(&self) -> FunctionDescriptor {
        FunctionDescriptor::Hyperbolic {
            coefficients: [self.coef_a, self.coef_b],
            rate: self.rate,
        }
    }
}

pub fn solve_lifter(params: &RobinParams, side: LifterSide) -> Result<BoundaryLifter> {
    params.validate()?;
    let k = params.lifter_rate();
    let (sh, ch) = (k.sinh(), k.cosh());
    // rows: left residual, right residual as linear forms in (a, b)
    let m = [
        [-params.beta0, k],
        [k * sh + params.beta1 * ch, k * ch + params.beta1 * sh],
    ];
    let rhs = match side {
        LifterSide::Actuation => [0.0, 1.0],
        LifterSide::Sde => [1.0, 0.0],
    };
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(Error::Singular("lifter boundary system".into()));
    }
    let a = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
    let b = (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det;
    Ok(BoundaryLifter {
        side,
        rate: k,
        coef_a: a,
        coef_b: b,
        value_at0: a,
        value_at1: a * ch + b * sh,
    })
}

/// The function `γ₀(x) = cosh(1 - x) / sinh(1)` with `⟨γ₀, v⟩_{H¹} = v(0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRepresenter {
    pub function: FunctionDescriptor,
    /// `⟨γ₀, φ_n⟩_{H¹}` for each basis function.
    pub inner_with_basis: Vec<f64>,
}

pub fn trace_representer(basis: &EigenBasis) -> TraceRepresenter {
    // cosh(1-x) = cosh 1 cosh x - sinh 1 sinh x
    let function = FunctionDescriptor::Hyperbolic {
        coefficients: [1.0f64.cosh() / 1.0f64.sinh(), -1.0],
        rate: 1.0,
    };
    let inner_with_basis = basis
        .functions
        .iter()
        .map(|phi| h1_inner(&function, phi))
        .collect();
    TraceRepresenter {
        function,
        inner_with_basis,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn residual_grid() -> impl Iterator<Item = f64> {
        (0..=100).map(|i| i as f64 / 100.0)
    }

    #[test]
    fn neumann_eigenvalues_are_n_squared_pi_squared() {
        let basis = solve_eigenpairs(&RobinParams::new(0.0, 0.0, 0.2), 3).unwrap();
        let expected = [0.0, PI * PI, 4.0 * PI * PI, 9.0 * PI * PI];
        for (l, e) in basis.eigenvalues.iter().zip(expected) {
            assert_abs_diff_eq!(*l, e, epsilon = 1e-12);
        }
        assert_eq!(basis.functions[0], FunctionDescriptor::constant(1.0));
        assert_abs_diff_eq!(basis.gram[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn neumann_basis_is_h1_orthonormal() {
        let basis = solve_eigenpairs(&RobinParams::new(0.0, 0.0, 0.0), 7).unwrap();
        let g = basis.gram_matrix();
        let err = (g - DMatrix::identity(8, 8)).abs().max();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn robin_eigenpairs_satisfy_ode_and_boundary_conditions() {
        for &(b0, b1) in &[(1.0, 1.0), (0.0, 2.5), (3.0, 0.0), (0.01, 50.0)] {
            let p = RobinParams::new(b0, b1, 0.0);
            let basis = solve_eigenpairs(&p, 6).unwrap();
            for w in basis.eigenvalues.windows(2) {
                assert!(w[0] < w[1]);
            }
            for (lam, phi) in basis.eigenvalues.iter().zip(&basis.functions) {
                for x in residual_grid() {
                    let r = -phi.second_derivative(x) - lam * phi.value(x);
                    assert!(r.abs() < 1e-10 * (1.0 + lam), "ode residual {r}");
                }
                assert!(p.left_residual(phi).abs() < 1e-10);
                assert!(p.right_residual(phi).abs() < 1e-10 * (1.0 + lam.sqrt()));
            }
            for i in 0..basis.len() {
                assert_abs_diff_eq!(basis.gram[i * basis.len() + i], 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn robin_gram_has_boundary_coupling() {
        // distinct Robin modes are L²-orthogonal but not H¹-orthogonal
        let p = RobinParams::new(1.0, 1.0, 0.0);
        let basis = solve_eigenpairs(&p, 2).unwrap();
        let (f0, f1) = (&basis.functions[0], &basis.functions[1]);
        let expected = -p.beta1 * f0.value(1.0) * f1.value(1.0) - p.beta0 * f0.value(0.0) * f1.value(0.0);
        assert_abs_diff_eq!(basis.gram[1], expected, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(solve_eigenpairs(&RobinParams::new(-1.0, 0.0, 0.0), 2).is_err());
        let bad_mu = RobinParams::new(0.0, 0.0, 1.0).with_mu(1.0);
        assert!(solve_lifter(&bad_mu, LifterSide::Actuation).is_err());
    }

    #[test]
    fn neumann_lifters_closed_form() {
        let p = RobinParams::new(0.0, 0.0, 0.2).with_mu(1.2);
        let k: f64 = 1.0;
        let act = solve_lifter(&p, LifterSide::Actuation).unwrap().function();
        let sde = solve_lifter(&p, LifterSide::Sde).unwrap().function();
        for x in residual_grid() {
            assert_abs_diff_eq!(act.value(x), (k * x).cosh() / (k * k.sinh()), epsilon = 1e-14);
            assert_abs_diff_eq!(
                sde.value(x),
                -(k * (1.0 - x)).cosh() / (k * k.sinh()),
                epsilon = 1e-14
            );
        }
        assert_abs_diff_eq!(act.derivative(0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(act.derivative(1.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sde.derivative(0.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sde.derivative(1.0), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn lifters_solve_the_elliptic_problem() {
        for &(b0, b1, c, mu) in &[(0.0, 0.0, 0.2, 1.2), (1.0, 2.0, -0.5, 0.3), (0.3, 0.0, 2.0, 6.0)] {
            let p = RobinParams {
                beta0: b0,
                beta1: b1,
                c,
                mu,
            };
            for side in [LifterSide::Actuation, LifterSide::Sde] {
                let l = solve_lifter(&p, side).unwrap();
                let f = l.function();
                for x in residual_grid() {
                    let r = -f.second_derivative(x) - c * f.value(x) + mu * f.value(x);
                    assert!(r.abs() < 1e-10, "{r}");
                }
                let (left, right) = match side {
                    LifterSide::Actuation => (0.0, 1.0),
                    LifterSide::Sde => (1.0, 0.0),
                };
                assert_abs_diff_eq!(p.left_residual(&f), left, epsilon = 1e-12);
                assert_abs_diff_eq!(p.right_residual(&f), right, epsilon = 1e-12);
                assert_abs_diff_eq!(l.value_at0, f.value(0.0), epsilon = 1e-15);
                assert_abs_diff_eq!(l.value_at1, f.value(1.0), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn trace_representer_reproduces_point_evaluation() {
        let basis = solve_eigenpairs(&RobinParams::new(0.0, 0.0, 0.0), 4).unwrap();
        let rep = trace_representer(&basis);
        assert_abs_diff_eq!(
            h1_inner(&rep.function, &FunctionDescriptor::constant(1.0)),
            1.0,
            epsilon = 1e-14
        );
        for (ip, t) in rep.inner_with_basis.iter().zip(&basis.trace0) {
            assert_abs_diff_eq!(ip, t, epsilon = 1e-10);
        }
        let robin = solve_eigenpairs(&RobinParams::new(0.7, 1.3, 0.0), 4).unwrap();
        let rep = trace_representer(&robin);
        for (ip, t) in rep.inner_with_basis.iter().zip(&robin.trace0) {
            assert_abs_diff_eq!(ip, t, epsilon = 1e-10);
        }
    }

    #[test]
    fn projection_of_basis_elements() {
        for p in [RobinParams::new(0.0, 0.0, 0.0), RobinParams::new(1.0, 0.5, 0.0)] {
            let basis = solve_eigenpairs(&p, 4).unwrap();
            let k = project_h1(&basis.functions[2], &basis).unwrap();
            for (i, v) in k.iter().enumerate() {
                assert_abs_diff_eq!(*v, if i == 2 { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
            let f = basis.synthesize(&[3.0, 2.0]);
            let k = project_h1(&f, &basis).unwrap();
            assert_abs_diff_eq!(k[0], 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(k[1], 2.0, epsilon = 1e-12);
            for v in k.iter().skip(2) {
                assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
            }
        }
    }
}
