//! Direct simulation of the original coupled PDE–SDE system: second-order
//! finite differences in space with ghost-point Robin conditions, implicit
//! Euler for diffusion, explicit reaction, Euler–Maruyama for `X`.

use crate::error::{Error, Result};
use crate::par::map_chunks;
use crate::reduction::{CoupledSystemSpec, ReducedModel};
use crate::sde::NoiseBank;

pub const MIN_POINTS: usize = 64;

/// Output of [`cosimulate_original`]: `x[s][m * d + i]`, snapshots of `u`
/// on the spatial grid at the requested steps, and per-sample costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CosimResult {
    pub dim_x: usize,
    pub steps: usize,
    pub grid: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub snapshot_steps: Vec<usize>,
    /// `u[s][k]` is the profile at `snapshot_steps[k]`.
    pub u: Vec<Vec<Vec<f64>>>,
    pub costs: Vec<f64>,
}

impl CosimResult {
    pub fn terminal_x(&self, sample: usize) -> &[f64] {
        &self.x[sample][self.steps * self.dim_x..]
    }
}

/// Weights of the original cost `∫ XᵀQX + r(V² + V'²) dt + X_TᵀGX_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginalCost {
    pub q: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosimOptions {
    pub points: usize,
    pub snapshot_steps: Vec<usize>,
    pub cost: Option<OriginalCost>,
}

impl CosimOptions {
    pub fn new(points: usize) -> Self {
        CosimOptions {
            points,
            snapshot_steps: Vec::new(),
            cost: None,
        }
    }
}

/// `V` on the grid obtained from an open-loop input `U` through
/// `V_{m+1} = V_m + (μ V_m + U_m) dt`, exactly as the reduced model's
/// `Y` coordinate evolves when `K = 0`.
pub fn open_loop_boundary_path(model: &ReducedModel, u: &[f64], v0: f64) -> Vec<f64> {
    let dt = model.horizon / u.len() as f64;
    let mut v = Vec::with_capacity(u.len() + 1);
    v.push(v0);
    for &um in u {
        let last = *v.last().unwrap_or(&v0);
        v.push(last + (model.mu * last + um) * dt);
    }
    v
}

/// Constant tridiagonal system `(I − dt L)` factored once for the Thomas sweep.
struct Tridiagonal {
    lower: Vec<f64>,
    diag_inv: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    fn factor(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        let mut d = diag;
        let mut diag_inv = vec![0.0; n];
        for i in 0..n {
            if i > 0 {
                d[i] -= lower[i] * upper[i - 1] * diag_inv[i - 1];
            }
            if d[i].abs() < 1e-300 || !d[i].is_finite() {
                return Err(Error::Singular("implicit diffusion matrix".into()));
            }
            diag_inv[i] = 1.0 / d[i];
        }
        Ok(Tridiagonal {
            lower,
            diag_inv,
            upper,
        })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 1..n {
            rhs[i] -= self.lower[i] * self.diag_inv[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] *= self.diag_inv[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) * self.diag_inv[i];
        }
    }
}

pub fn cosimulate_original(
    spec: &CoupledSystemSpec,
    v_path: &[f64],
    noise: &NoiseBank,
    opts: &CosimOptions,
) -> Result<CosimResult> {
    spec.validate()?;
    let j = opts.points;
    if j < MIN_POINTS {
        return Err(Error::param("points", format!("need at least {MIN_POINTS} grid points, got {j}")));
    }
    let steps = noise.steps;
    if v_path.len() != steps + 1 {
        return Err(Error::Dimension(format!(
            "boundary path has {} values, expected {}",
            v_path.len(),
            steps + 1
        )));
    }
    if (noise.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(Error::Dimension("noise horizon differs from system horizon".into()));
    }
    let d = spec.dim();
    let dt = noise.grid().dt();
    let h = 1.0 / (j - 1) as f64;
    let h2 = h * h;
    let (beta0, beta1, c) = (spec.robin.beta0, spec.robin.beta1, spec.robin.c);

    let mut lower = vec![-dt / h2; j];
    let mut upper = vec![-dt / h2; j];
    let mut diag = vec![1.0 + 2.0 * dt / h2; j];
    diag[0] = 1.0 + dt * (2.0 + 2.0 * h * beta0) / h2;
    upper[0] = -2.0 * dt / h2;
    diag[j - 1] = 1.0 + dt * (2.0 + 2.0 * h * beta1) / h2;
    lower[j - 1] = -2.0 * dt / h2;
    lower[0] = 0.0;
    upper[j - 1] = 0.0;
    let system = Tridiagonal::factor(lower, diag, upper)?;

    let grid: Vec<f64> = (0..j).map(|i| i as f64 * h).collect();
    let u_init: Vec<f64> = grid.iter().map(|&x| spec.u0.value(x)).collect();
    let mut drift = Vec::with_capacity(steps * d);
    let mut sigma = Vec::with_capacity(steps * d);
    for m in 0..steps {
        let t = spec.horizon * m as f64 / steps as f64;
        drift.extend_from_slice(spec.r_drift.at(t));
        sigma.extend_from_slice(spec.sigma_drift.at(t));
    }
    let a = &spec.a;
    let cm = &spec.c;

    type Sample = (Vec<f64>, Vec<Vec<f64>>, f64);
    let chunks = map_chunks(noise.samples, |start, end| -> Result<Vec<Sample>> {
        let mut out = Vec::with_capacity(end - start);
        let mut dw = vec![0.0; steps];
        for s in start..end {
            noise.fill(s, &mut dw);
            let mut u = u_init.clone();
            let mut xs = vec![0.0; (steps + 1) * d];
            xs[..d].copy_from_slice(spec.x0.as_slice());
            let mut snaps = Vec::with_capacity(opts.snapshot_steps.len());
            if opts.snapshot_steps.contains(&0) {
                snaps.push(u.clone());
            }
            let mut running = 0.0;
            for m in 0..steps {
                let (done, rest) = xs.split_at_mut((m + 1) * d);
                let x = &done[m * d..];
                let next = &mut rest[..d];
                let u0 = u[0];
                if let Some(cost) = &opts.cost {
                    let vdot = (v_path[m + 1] - v_path[m]) / dt;
                    running += quad(&cost.q, x) + cost.r * (v_path[m] * v_path[m] + vdot * vdot);
                }
                let mut finite = true;
                for i in 0..d {
                    let mut dr = drift[m * d + i] + spec.b[i] * u0;
                    let mut df = sigma[m * d + i] + spec.d[i] * u0;
                    for k in 0..d {
                        dr += a[(i, k)] * x[k];
                        df += cm[(i, k)] * x[k];
                    }
                    next[i] = x[i] + dr * dt + df * dw[m];
                    finite &= next[i].is_finite();
                }
                let g0 = spec.m.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
                for v in u.iter_mut() {
                    *v *= 1.0 + c * dt;
                }
                u[0] -= 2.0 * dt * g0 / h;
                u[j - 1] += 2.0 * dt * v_path[m] / h;
                system.solve(&mut u);
                finite &= u[0].is_finite() && u[j - 1].is_finite();
                if !finite {
                    return Err(Error::NonFinite {
                        sample: s,
                        step: m + 1,
                    });
                }
                if opts.snapshot_steps.contains(&(m + 1)) {
                    snaps.push(u.clone());
                }
            }
            let mut cost = running * dt;
            if let Some(c) = &opts.cost {
                cost += quad(&c.g, &xs[steps * d..]);
            }
            out.push((xs, snaps, cost));
        }
        Ok(out)
    });

    let mut result = CosimResult {
        dim_x: d,
        steps,
        grid,
        x: Vec::with_capacity(noise.samples),
        snapshot_steps: opts.snapshot_steps.iter().copied().filter(|k| *k <= steps).collect(),
        u: Vec::with_capacity(noise.samples),
        costs: Vec::with_capacity(noise.samples),
    };
    result.snapshot_steps.sort_unstable();
    result.snapshot_steps.dedup();
    for chunk in chunks {
        for (x, u, cost) in chunk? {
            result.x.push(x);
            result.u.push(u);
            result.costs.push(cost);
        }
    }
    Ok(result)
}

fn quad(m: &[Vec<f64>], x: &[f64]) -> f64 {
    m.iter()
        .zip(x)
        .map(|(row, xi)| xi * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}
