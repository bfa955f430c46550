use heatrisk::spectral::{solve_eigenpairs, solve_lifter, LifterSide, RobinParams};
use heatrisk::{h1_inner, FunctionDescriptor};
use proptest::prelude::*;

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix
/// `(diag, off)` by Sturm sequence.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let prev = if q == 0.0 { 1e-300 } else { q };
        q = diag[i] - x - off[i - 1] * off[i - 1] / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Second-order ghost-point discretization of `-φ'' = λφ` with Robin ends,
/// symmetrized. Returns the lowest `k` eigenvalues by bisection.
fn fd_eigenvalues(beta0: f64, beta1: f64, intervals: usize, k: usize) -> Vec<f64> {
    let h = 1.0 / intervals as f64;
    let h2 = h * h;
    let n = intervals + 1;
    let mut diag = vec![2.0 / h2; n];
    diag[0] = 2.0 * (1.0 + h * beta0) / h2;
    diag[n - 1] = 2.0 * (1.0 + h * beta1) / h2;
    let mut off = vec![-1.0 / h2; n - 1];
    off[0] = -(2f64).sqrt() / h2;
    off[n - 2] = -(2f64).sqrt() / h2;
    let upper = 4.0 / h2 + 2.0 * (beta0 + beta1) / h;
    (0..k)
        .map(|i| {
            let (mut lo, mut hi) = (-1.0, upper);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sturm_count(&diag, &off, mid) > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-13 * hi.abs().max(1.0) {
                    break;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

fn richardson(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
}

#[test]
fn robin_eigenvalues_match_finite_differences() {
    for (b0, b1) in [(0.7, 1.3), (5.0, 0.0), (0.0, 2.0), (0.2, 0.2)] {
        let params = RobinParams::new(b0, b1, 0.2);
        let basis = solve_eigenpairs(&params, 5).unwrap();
        let oracle = richardson(&fd_eigenvalues(b0, b1, 1000, 6), &fd_eigenvalues(b0, b1, 2000, 6));
        for (l, o) in basis.eigenvalues.iter().zip(&oracle) {
            assert!((l - o).abs() < 1e-6 * o.max(1.0), "beta = ({b0}, {b1}): {l} vs {o}");
        }
    }
}

/// `f'' = k² f` with `f'(0) − β₀f(0) = g0`, `f'(1) + β₁f(1) = g1`, ghost-point
/// finite differences, solved by the Thomas algorithm.
fn fd_lifter(beta0: f64, beta1: f64, k2: f64, g0: f64, g1: f64, intervals: usize) -> Vec<f64> {
    let n = intervals + 1;
    let h = 1.0 / intervals as f64;
    let h2 = h * h;
    let mut lower = vec![1.0 / h2; n];
    let mut diag = vec![-2.0 / h2 - k2; n];
    let mut upper = vec![1.0 / h2; n];
    let mut rhs = vec![0.0; n];
    upper[0] = 2.0 / h2;
    diag[0] -= 2.0 * beta0 / h;
    rhs[0] = 2.0 * g0 / h;
    lower[n - 1] = 2.0 / h2;
    diag[n - 1] -= 2.0 * beta1 / h;
    rhs[n - 1] = -2.0 * g1 / h;
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    }
    x
}

#[test]
fn lifters_match_a_finite_difference_bvp() {
    for (b0, b1, c) in [(0.0, 0.0, 0.2), (0.7, 1.3, 0.2), (2.0, 0.5, -1.0)] {
        let params = RobinParams::new(b0, b1, c);
        let k2 = params.mu - params.c;
        for (side, g0, g1) in [(LifterSide::Actuation, 0.0, 1.0), (LifterSide::Sde, 1.0, 0.0)] {
            let f = solve_lifter(&params, side).unwrap().function();
            let coarse = fd_lifter(b0, b1, k2, g0, g1, 1000);
            let fine = fd_lifter(b0, b1, k2, g0, g1, 2000);
            for i in 0..=100 {
                let oracle = (4.0 * fine[20 * i] - coarse[10 * i]) / 3.0;
                let x = i as f64 / 100.0;
                assert!((f.value(x) - oracle).abs() < 1e-6, "{side:?} at {x}");
            }
        }
    }
}

#[test]
fn lifter_h1_projection_matches_least_squares() {
    // Discrete H¹ least squares on 10⁴ points against the retained modes.
    let params = RobinParams::new(0.0, 0.0, 0.2);
    let basis = solve_eigenpairs(&params, 3).unwrap();
    let theta = solve_lifter(&params, LifterSide::Actuation).unwrap().function();
    let coef = heatrisk::spectral::project_h1(&theta, &basis).unwrap();
    let pts = 10_000;
    let h = 1.0 / pts as f64;
    let m = basis.len();
    let mut normal = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for j in 0..pts {
        let x = (j as f64 + 0.5) * h;
        let vals: Vec<(f64, f64)> = basis
            .functions
            .iter()
            .map(|f| (f.value(x), f.derivative(x)))
            .collect();
        let (t, dt) = (theta.value(x), theta.derivative(x));
        for a in 0..m {
            rhs[a] += h * (vals[a].0 * t + vals[a].1 * dt);
            for b in 0..m {
                normal[(a, b)] += h * (vals[a].0 * vals[b].0 + vals[a].1 * vals[b].1);
            }
        }
    }
    let ls = normal.lu().solve(&rhs).unwrap();
    for i in 0..m {
        assert!((coef[i] - ls[i]).abs() < 1e-4, "mode {i}: {} vs {}", coef[i], ls[i]);
    }
}

fn ode_residual(f: &FunctionDescriptor, lambda: f64) -> f64 {
    (0..=100)
        .map(|i| {
            let x = i as f64 / 100.0;
            (f.second_derivative(x) + lambda * f.value(x)).abs()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenpairs_satisfy_ode_bcs_and_are_h1_normalized(b0 in 0.0f64..6.0, b1 in 0.0f64..6.0) {
        let params = RobinParams::new(b0, b1, 0.2);
        let basis = solve_eigenpairs(&params, 4).unwrap();
        prop_assert!(basis.eigenvalues.windows(2).all(|w| w[1] > w[0]));
        for (f, &l) in basis.functions.iter().zip(&basis.eigenvalues) {
            let scale = l.max(1.0);
            prop_assert!(ode_residual(f, l) < 1e-9 * scale);
            prop_assert!(params.left_residual(f).abs() < 1e-9 * scale.sqrt());
            prop_assert!(params.right_residual(f).abs() < 1e-9 * scale.sqrt());
            prop_assert!((h1_inner(f, f) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvalue_n_lies_in_its_interlacing_window(b0 in 0.0f64..6.0, b1 in 0.0f64..6.0) {
        // With β ≥ 0 the n-th Robin eigenvalue sits between the n-th
        // Neumann and the n-th Dirichlet eigenvalue.
        let basis = solve_eigenpairs(&RobinParams::new(b0, b1, 0.2), 5).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        for (n, &l) in basis.eigenvalues.iter().enumerate() {
            let n = n as f64;
            prop_assert!(l >= n * n * pi2 - 1e-9);
            prop_assert!(l <= (n + 1.0) * (n + 1.0) * pi2 + 1e-9);
        }
    }
}
