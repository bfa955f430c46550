//! Euler–Maruyama simulation of the reduced SDE under a feedback policy.
//!
//! Every sample draws its Brownian increments from its own ChaCha stream
//! keyed by `(seed, sample)`, so a batch is a pure function of
//! `(seed, samples, steps, horizon)` and of the model and policy, whatever
//! the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Sparse};
use crate::par::map_chunks;
use crate::reduction::ReducedModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::param("grid", format!("need T > 0 and steps > 0 (T = {horizon}, steps = {steps})")));
        }
        Ok(TimeGrid { horizon, steps })
    }

    /// Grid with step closest to `dt`.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        Self::new(horizon, (horizon / dt).round().max(1.0) as usize)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        self.horizon * m as f64 / self.steps as f64
    }
}

/// Brownian increments `ΔW ~ N(0, dt)` for `samples` independent paths,
/// generated on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseBank {
    pub seed: u64,
    pub samples: usize,
    pub steps: usize,
    horizon_bits: u64,
}

impl NoiseBank {
    pub fn new(seed: u64, samples: usize, grid: &TimeGrid) -> Self {
        NoiseBank {
            seed,
            samples,
            steps: grid.steps,
            horizon_bits: grid.horizon.to_bits(),
        }
    }

    pub fn horizon(&self) -> f64 {
        f64::from_bits(self.horizon_bits)
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            horizon: self.horizon(),
            steps: self.steps,
        }
    }

    /// Writes the increments of `sample` into `out[..steps]`.
    pub fn fill(&self, sample: usize, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sample as u64);
        let scale = (self.horizon() / self.steps as f64).sqrt();
        for o in out.iter_mut().take(self.steps) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *o = z * scale;
        }
    }

    pub fn increments(&self, sample: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.steps];
        self.fill(sample, &mut out);
        out
    }
}

/// `U(t) = v(t) + K Z_t` with `v` piecewise constant on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    pub v: Vec<f64>,
    pub k: Vec<f64>,
    pub box_v: [f64; 2],
    pub box_k: [f64; 2],
}

impl FeedbackPolicy {
    pub fn zero(n_aug: usize, steps: usize, box_v: [f64; 2], box_k: [f64; 2]) -> Self {
        FeedbackPolicy {
            v: vec![0.0; steps],
            k: vec![0.0; n_aug],
            box_v,
            box_k,
        }
    }

    /// Entrywise clipping into the boxes; returns whether anything moved.
    pub fn project(&mut self) -> bool {
        let mut moved = false;
        for (vals, [lo, hi]) in [(&mut self.v, self.box_v), (&mut self.k, self.box_k)] {
            for x in vals.iter_mut() {
                let c = x.clamp(lo, hi);
                if c != *x {
                    moved = true;
                    *x = c;
                }
            }
        }
        moved
    }

    pub fn is_feasible(&self) -> bool {
        self.v.iter().all(|x| (self.box_v[0]..=self.box_v[1]).contains(x))
            && self.k.iter().all(|x| (self.box_k[0]..=self.box_k[1]).contains(x))
    }

    pub(crate) fn check(&self, model: &ReducedModel, grid: &TimeGrid) -> Result<()> {
        if self.k.len() != model.n_aug {
            return Err(Error::Dimension(format!(
                "gain has {} entries, model state has {}",
                self.k.len(),
                model.n_aug
            )));
        }
        if self.v.len() != grid.steps {
            return Err(Error::Dimension(format!(
                "open-loop term has {} entries, grid has {} steps",
                self.v.len(),
                grid.steps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    /// Per-sample costs only.
    Costs,
    /// Costs, state paths and realized controls.
    Paths,
    /// Everything in `Paths` plus fundamental-matrix paths.
    Fundamental,
}

/// Output of [`simulate_batch`]. Paths are flattened per sample:
/// `states[s][m * n + i]`, `fundamentals[s][(m * n + i) * n + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub n_aug: usize,
    pub steps: usize,
    pub dt: f64,
    pub costs: Vec<f64>,
    pub states: Option<Vec<Vec<f64>>>,
    pub controls: Option<Vec<Vec<f64>>>,
    pub fundamentals: Option<Vec<Vec<f64>>>,
}

impl TrajectoryBatch {
    pub fn samples(&self) -> usize {
        self.costs.len()
    }

    pub fn state(&self, sample: usize, step: usize) -> Option<&[f64]> {
        let n = self.n_aug;
        self.states
            .as_ref()
            .map(|s| &s[sample][step * n..(step + 1) * n])
    }

    pub fn terminal_state(&self, sample: usize) -> Option<&[f64]> {
        self.state(sample, self.steps)
    }
}

/// Precomputed closed-loop data for the per-sample recursions.
pub(crate) struct Kernel {
    pub n: usize,
    pub steps: usize,
    pub dt: f64,
    /// `Δ_N + A_N`
    pub drift_matrix: Sparse,
    pub diffusion: Sparse,
    pub b: Vec<f64>,
    pub k: Vec<f64>,
    pub q: Sparse,
    pub g: Sparse,
    pub r_ctrl: f64,
    /// `r_N(t_m)` flattened per step
    pub drift: Vec<f64>,
    pub sigma: Vec<f64>,
    pub z0: Vec<f64>,
}

/// Per-sample scratch space for the forward and adjoint passes.
pub(crate) struct Workspace {
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    a: Vec<f64>,
    c: Vec<f64>,
    lambda: Vec<f64>,
    next: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize, steps: usize) -> Self {
        Workspace {
            states: vec![0.0; (steps + 1) * n],
            controls: vec![0.0; steps],
            a: vec![0.0; n],
            c: vec![0.0; n],
            lambda: vec![0.0; n],
            next: vec![0.0; n],
        }
    }
}

impl Kernel {
    pub fn new(model: &ReducedModel, policy: &FeedbackPolicy, grid: &TimeGrid) -> Result<Self> {
        policy.check(model, grid)?;
        let n = model.n_aug;
        let mut drift = Vec::with_capacity(grid.steps * n);
        let mut sigma = Vec::with_capacity(grid.steps * n);
        for m in 0..grid.steps {
            let t = grid.time(m);
            drift.extend_from_slice(model.r.at(t));
            sigma.extend_from_slice(model.sigma.at(t));
        }
        Ok(Kernel {
            n,
            steps: grid.steps,
            dt: grid.dt(),
            drift_matrix: Sparse::from_matrix(&model.drift_matrix()),
            diffusion: Sparse::from_matrix(&model.c),
            b: model.b.iter().copied().collect(),
            k: policy.k.clone(),
            q: Sparse::from_matrix(&model.cost.q),
            g: Sparse::from_matrix(&model.cost.g),
            r_ctrl: model.cost.r_ctrl,
            drift,
            sigma,
            z0: model.z0.iter().copied().collect(),
        })
    }

    /// One sample path into `ws.states` and `ws.controls`; returns the cost.
    pub fn forward(&self, sample: usize, v: &[f64], dw: &[f64], ws: &mut Workspace) -> Result<f64> {
        let n = self.n;
        let dt = self.dt;
        ws.states[..n].copy_from_slice(&self.z0);
        let mut running = 0.0;
        for m in 0..self.steps {
            let (done, rest) = ws.states.split_at_mut((m + 1) * n);
            let z = &done[m * n..];
            let next = &mut rest[..n];
            let u = v[m] + dot(&self.k, z);
            ws.controls[m] = u;
            running += self.q.quad(z) + self.r_ctrl * u * u;
            self.drift_matrix.mul_into(z, &mut ws.a);
            self.diffusion.mul_into(z, &mut ws.c);
            let r = &self.drift[m * n..(m + 1) * n];
            let s = &self.sigma[m * n..(m + 1) * n];
            let w = dw[m];
            let mut finite = true;
            for i in 0..n {
                next[i] = z[i] + (ws.a[i] + self.b[i] * u + r[i]) * dt + (ws.c[i] + s[i]) * w;
                finite &= next[i].is_finite();
            }
            if !finite {
                return Err(Error::NonFinite {
                    sample,
                    step: m + 1,
                });
            }
        }
        let zt = &ws.states[self.steps * n..];
        Ok(running * dt + self.g.quad(zt))
    }

    /// Exact gradient of the discrete cost of the path last computed by
    /// [`Kernel::forward`], by reverse accumulation. Adds `weight · ∂J/∂v_m / dt`
    /// to `grad_v[m]` and `weight · ∂J/∂K` to `grad_k`.
    pub fn adjoint(&self, dw: &[f64], ws: &mut Workspace, weight: f64, grad_v: &mut [f64], grad_k: &mut [f64]) {
        let n = self.n;
        let dt = self.dt;
        let lam = &mut ws.lambda;
        lam.iter_mut().for_each(|l| *l = 0.0);
        self.g.add_sym_mul(&ws.states[self.steps * n..], 1.0, lam);
        for m in (0..self.steps).rev() {
            let z = &ws.states[m * n..(m + 1) * n];
            let u = ws.controls[m];
            let bl = dot(&self.b, lam);
            let g = 2.0 * self.r_ctrl * u + bl;
            grad_v[m] += weight * g;
            let gw = weight * g * dt;
            for (gk, zi) in grad_k.iter_mut().zip(z) {
                *gk += gw * zi;
            }
            // λ_m = ∇ℓ_m + (I + (Â + bK) dt + C ΔW_m)ᵀ λ_{m+1}
            self.drift_matrix.mul_t_into(lam, &mut ws.a);
            self.diffusion.mul_t_into(lam, &mut ws.c);
            let w = dw[m];
            for i in 0..n {
                ws.next[i] = lam[i] + (ws.a[i] + self.k[i] * g) * dt + ws.c[i] * w;
            }
            self.q.add_sym_mul(z, dt, &mut ws.next);
            std::mem::swap(lam, &mut ws.next);
        }
    }

    /// `Φ_{m+1} = Φ_m + (Â + bK) Φ_m dt + C Φ_m ΔW_m`, `Φ_0 = I`, row-major per step.
    pub fn fundamental(&self, sample: usize, dw: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        let nn = n * n;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = if i == j { 1.0 } else { 0.0 };
            }
        }
        let mut col = vec![0.0; n];
        let mut fc = vec![0.0; n];
        let mut cc = vec![0.0; n];
        for m in 0..self.steps {
            let (cur, rest) = out[m * nn..].split_at_mut(nn);
            let nxt = &mut rest[..nn];
            for j in 0..n {
                for i in 0..n {
                    col[i] = cur[i * n + j];
                }
                self.drift_matrix.mul_into(&col, &mut fc);
                self.diffusion.mul_into(&col, &mut cc);
                let kc = dot(&self.k, &col);
                for i in 0..n {
                    let v = col[i] + (fc[i] + self.b[i] * kc) * self.dt + cc[i] * dw[m];
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            sample,
                            step: m + 1,
                        });
                    }
                    nxt[i * n + j] = v;
                }
            }
        }
        Ok(())
    }
}

pub fn simulate_batch(
    model: &ReducedModel,
    policy: &FeedbackPolicy,
    noise: &NoiseBank,
    record: Record,
) -> Result<TrajectoryBatch> {
    let grid = noise.grid();
    if (grid.horizon - model.horizon).abs() > 1e-12 * model.horizon {
        return Err(Error::Dimension(format!(
            "noise horizon {} differs from model horizon {}",
            grid.horizon, model.horizon
        )));
    }
    let kernel = Kernel::new(model, policy, &grid)?;
    let n = kernel.n;
    let steps = grid.steps;

    type SampleOut = (f64, Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>);
    let chunks: Vec<Result<Vec<SampleOut>>> = map_chunks(noise.samples, |start, end| {
        let mut dw = vec![0.0; steps];
        let mut ws = Workspace::new(n, steps);
        let mut out = Vec::with_capacity(end - start);
        for s in start..end {
            noise.fill(s, &mut dw);
            let cost = kernel.forward(s, &policy.v, &dw, &mut ws)?;
            let (mut st, mut ctl, mut phi) = (None, None, None);
            if record != Record::Costs {
                st = Some(ws.states.clone());
                ctl = Some(ws.controls.clone());
            }
            if record == Record::Fundamental {
                let mut buf = vec![0.0; (steps + 1) * n * n];
                kernel.fundamental(s, &dw, &mut buf)?;
                phi = Some(buf);
            }
            out.push((cost, st, ctl, phi));
        }
        Ok(out)
    });

    let mut costs = Vec::with_capacity(noise.samples);
    let mut states = (record != Record::Costs).then(Vec::new);
    let mut controls = (record != Record::Costs).then(Vec::new);
    let mut fundamentals = (record == Record::Fundamental).then(Vec::new);
    for chunk in chunks {
        for (cost, st, ctl, phi) in chunk? {
            costs.push(cost);
            if let (Some(all), Some(st)) = (states.as_mut(), st) {
                all.push(st);
            }
            if let (Some(all), Some(c)) = (controls.as_mut(), ctl) {
                all.push(c);
            }
            if let (Some(all), Some(p)) = (fundamentals.as_mut(), phi) {
                all.push(p);
            }
        }
    }
    Ok(TrajectoryBatch {
        n_aug: n,
        steps,
        dt: grid.dt(),
        costs,
        states,
        controls,
        fundamentals,
    })
}

/// Per-sample costs only; never stores paths.
pub fn sample_costs(model: &ReducedModel, policy: &FeedbackPolicy, noise: &NoiseBank) -> Result<Vec<f64>> {
    Ok(simulate_batch(model, policy, noise, Record::Costs)?.costs)
}

/// Recomputes `Σ (ZᵀQZ + r U²) dt + Z_Mᵀ G Z_M` from recorded paths.
pub fn evaluate_cost(batch: &TrajectoryBatch, model: &ReducedModel) -> Result<Vec<f64>> {
    let states = batch.states.as_ref().ok_or(Error::MissingRecord("state paths"))?;
    let controls = batch.controls.as_ref().ok_or(Error::MissingRecord("controls"))?;
    if batch.n_aug != model.n_aug {
        return Err(Error::Dimension("batch and model dimensions differ".into()));
    }
    let n = batch.n_aug;
    let q = Sparse::from_matrix(&model.cost.q);
    let g = Sparse::from_matrix(&model.cost.g);
    Ok(states
        .iter()
        .zip(controls)
        .map(|(z, u)| {
            let mut running = 0.0;
            for m in 0..batch.steps {
                running += q.quad(&z[m * n..(m + 1) * n]) + model.cost.r_ctrl * u[m] * u[m];
            }
            running * batch.dt + g.quad(&z[batch.steps * n..])
        })
        .collect())
}
