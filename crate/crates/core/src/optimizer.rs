//! Policy gradients and the regularized projected gradient descent–ascent
//! loop on a coherent risk of the cost.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_chunks;
use crate::reduction::ReducedModel;
use crate::risk::{project_risk_weights, RiskSpec, RiskWeights};
use crate::sde::{FeedbackPolicy, Kernel, NoiseBank, TimeGrid, TrajectoryBatch, Workspace};

/// Condition estimate above which a fundamental-matrix solve is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// `grad_v` is the L² gradient density on the grid (the derivative with
/// respect to entry `m` divided by `dt`); `grad_k` is the plain derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientPair {
    pub grad_v: Vec<f64>,
    pub grad_k: Vec<f64>,
}

impl GradientPair {
    pub fn zeros(steps: usize, n_aug: usize) -> Self {
        GradientPair {
            grad_v: vec![0.0; steps],
            grad_k: vec![0.0; n_aug],
        }
    }

    /// `(‖grad_v‖_{L²}, ‖grad_K‖₂)`
    pub fn norms(&self, dt: f64) -> (f64, f64) {
        (
            (self.grad_v.iter().map(|g| g * g).sum::<f64>() * dt).sqrt(),
            self.grad_k.iter().map(|g| g * g).sum::<f64>().sqrt(),
        )
    }

    fn add_assign(&mut self, other: &GradientPair) {
        for (a, b) in self.grad_v.iter_mut().zip(&other.grad_v) {
            *a += b;
        }
        for (a, b) in self.grad_k.iter_mut().zip(&other.grad_k) {
            *a += b;
        }
    }

    fn scale(&mut self, f: f64) {
        self.grad_v.iter_mut().chain(self.grad_k.iter_mut()).for_each(|g| *g *= f);
    }

    pub fn is_finite(&self) -> bool {
        self.grad_v.iter().chain(&self.grad_k).all(|g| g.is_finite())
    }
}

/// Gradient of `(1/S) Σ_s w_s J_s` from a batch recorded with fundamental
/// matrices. The adjoint row `p(t_m) = I(t_m) Φ(t_m)⁻¹` is obtained by
/// accumulating `I` backward and right-solving against `Φ(t_m)` at each step.
pub fn compute_gradients(
    model: &ReducedModel,
    policy: &FeedbackPolicy,
    batch: &TrajectoryBatch,
    weights: &[f64],
) -> Result<GradientPair> {
    let phis = batch
        .fundamentals
        .as_ref()
        .ok_or(Error::MissingRecord("fundamental matrices"))?;
    let states = batch.states.as_ref().ok_or(Error::MissingRecord("state paths"))?;
    let controls = batch.controls.as_ref().ok_or(Error::MissingRecord("controls"))?;
    if weights.len() != batch.samples() {
        return Err(Error::Dimension(format!(
            "{} weights for {} samples",
            weights.len(),
            batch.samples()
        )));
    }
    let grid = TimeGrid::new(model.horizon, batch.steps)?;
    policy.check(model, &grid)?;
    let n = model.n_aug;
    let steps = batch.steps;
    let dt = batch.dt;
    let q = &model.cost.q;
    let g = &model.cost.g;
    let rho = model.cost.r_ctrl;
    let k = DVector::from_column_slice(&policy.k);
    let b = &model.b;

    let chunks = map_chunks(batch.samples(), |start, end| -> Result<GradientPair> {
        let mut acc = GradientPair::zeros(steps, n);
        for s in start..end {
            let w = weights[s];
            if w == 0.0 {
                continue;
            }
            let z = |m: usize| DVector::from_column_slice(&states[s][m * n..(m + 1) * n]);
            let phi = |m: usize| DMatrix::from_row_slice(n, n, &phis[s][m * n * n..(m + 1) * n * n]);
            // I(t_M) = 2 Z_Mᵀ G Φ_M
            let mut running = (2.0 * (g * z(steps))).transpose() * phi(steps);
            for m in (0..steps).rev() {
                let p = right_solve(&running, &phi(m + 1), m + 1)?;
                let u = controls[s][m];
                let gm = 2.0 * rho * u + (p * b)[0];
                acc.grad_v[m] += w * gm;
                let zm = z(m);
                for i in 0..n {
                    acc.grad_k[i] += w * gm * dt * zm[i];
                }
                let grad_l = (2.0 * (q * &zm) + 2.0 * rho * u * &k) * dt;
                running += grad_l.transpose() * phi(m);
            }
        }
        Ok(acc)
    });
    let mut total = GradientPair::zeros(steps, n);
    for c in chunks {
        total.add_assign(&c?);
    }
    total.scale(1.0 / batch.samples() as f64);
    Ok(total)
}

/// Solves `p Φ = row` for the row vector `p`.
fn right_solve(row: &RowDVector<f64>, phi: &DMatrix<f64>, step: usize) -> Result<RowDVector<f64>> {
    let lu = phi.transpose().lu();
    let u = lu.u();
    let diag: Vec<f64> = u.diagonal().iter().map(|d| d.abs()).collect();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { step, condition });
    }
    let sol = lu
        .solve(&row.transpose())
        .ok_or(Error::IllConditioned { step, condition })?;
    Ok(sol.transpose())
}

/// Per-sample costs and the weighted gradient `(1/S) Σ_s w_s ∇J_s`, by a
/// forward pass and an exact reverse pass per sample. Never stores paths
/// beyond one sample per worker.
pub fn costs_and_gradients(
    model: &ReducedModel,
    policy: &FeedbackPolicy,
    noise: &NoiseBank,
    weights: &(dyn Fn(usize, f64) -> f64 + Sync),
) -> Result<(Vec<f64>, GradientPair)> {
    let grid = noise.grid();
    let kernel = Kernel::new(model, policy, &grid)?;
    let n = kernel.n;
    let steps = grid.steps;
    let chunks = map_chunks(noise.samples, |start, end| -> Result<(Vec<f64>, GradientPair)> {
        let mut dw = vec![0.0; steps];
        let mut ws = Workspace::new(n, steps);
        let mut acc = GradientPair::zeros(steps, n);
        let mut costs = Vec::with_capacity(end - start);
        for s in start..end {
            noise.fill(s, &mut dw);
            let cost = kernel.forward(s, &policy.v, &dw, &mut ws)?;
            let w = weights(s, cost);
            if w != 0.0 {
                kernel.adjoint(&dw, &mut ws, w, &mut acc.grad_v, &mut acc.grad_k);
            }
            costs.push(cost);
        }
        Ok((costs, acc))
    });
    let mut costs = Vec::with_capacity(noise.samples);
    let mut total = GradientPair::zeros(steps, n);
    for c in chunks {
        let (cs, g) = c?;
        costs.extend(cs);
        total.add_assign(&g);
    }
    total.scale(1.0 / noise.samples as f64);
    Ok((costs, total))
}

/// Which Brownian increments each iteration trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One training bank for all iterations; `ζ_i` stays attached to sample `i`.
    Frozen,
    /// A fresh bank per iteration; `ζ` is carried by index and re-projected.
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub risk: f64,
    pub mean_cost: f64,
    pub grad_v_norm: f64,
    pub grad_k_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    pub risk: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub policy: FeedbackPolicy,
    pub weights: RiskWeights,
    pub eta: f64,
    pub beta_step: f64,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    previous: Option<GradientPair>,
}

impl OptimizerState {
    pub fn new(policy: FeedbackPolicy, samples: usize, eta: f64, beta_step: f64) -> Self {
        OptimizerState {
            policy,
            weights: RiskWeights::uniform(samples),
            eta,
            beta_step,
            iteration: 0,
            history: Vec::new(),
            previous: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub risk: RiskSpec,
    /// Halve both steps whenever successive gradients point in opposite
    /// directions.
    pub adaptive: bool,
}

/// One simulate → weight → gradient → primal projection → dual ascent cycle.
pub fn gda_step(
    state: &mut OptimizerState,
    model: &ReducedModel,
    noise: &NoiseBank,
    opts: &StepOptions,
) -> Result<IterationRecord> {
    if state.weights.zeta.len() != noise.samples {
        return Err(Error::Dimension(format!(
            "{} dual weights for {} samples",
            state.weights.zeta.len(),
            noise.samples
        )));
    }
    let alpha = opts.risk.level();
    let gamma = opts.risk.gamma;
    let zeta = state.weights.zeta.clone();
    let weight = |s: usize, _cost: f64| zeta[s] * (1.0 - gamma * zeta[s]);
    let (costs, grad) = costs_and_gradients(model, &state.policy, noise, &weight)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite {
            sample: 0,
            step: noise.steps,
        });
    }

    let dt = noise.grid().dt();
    let (gv, gk) = grad.norms(dt);
    let record = IterationRecord {
        iteration: state.iteration,
        risk: opts.risk.evaluate(&costs)?,
        mean_cost: costs.iter().sum::<f64>() / costs.len() as f64,
        grad_v_norm: gv,
        grad_k_norm: gk,
    };

    if opts.adaptive {
        if let Some(prev) = &state.previous {
            let turn: f64 = prev
                .grad_v
                .iter()
                .zip(&grad.grad_v)
                .map(|(a, b)| a * b * dt)
                .chain(prev.grad_k.iter().zip(&grad.grad_k).map(|(a, b)| a * b))
                .sum();
            if turn < 0.0 {
                state.eta *= 0.5;
                state.beta_step *= 0.5;
            }
        }
    }

    for (v, g) in state.policy.v.iter_mut().zip(&grad.grad_v) {
        *v -= state.eta * g;
    }
    for (k, g) in state.policy.k.iter_mut().zip(&grad.grad_k) {
        *k -= state.eta * g;
    }
    state.policy.project();

    let ascent: Vec<f64> = zeta
        .iter()
        .zip(&costs)
        .map(|(z, c)| z + state.beta_step * (1.0 - 2.0 * gamma * z) * c)
        .collect();
    state.weights = project_risk_weights(&ascent, alpha)?;
    state.iteration += 1;
    state.history.push(record);
    if opts.adaptive {
        state.previous = Some(grad);
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub eta: f64,
    pub beta_step: f64,
    pub samples: usize,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    pub adaptive: bool,
    /// Held-out bank used every `eval_every` iterations.
    pub eval_samples: usize,
    pub eval_seed: u64,
    pub eval_every: usize,
    pub steps: usize,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::param("samples", "must be positive"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) || !(self.beta_step >= 0.0 && self.beta_step.is_finite()) {
            return Err(Error::param("eta/beta_step", "steps must be finite and >= 0"));
        }
        if self.steps == 0 {
            return Err(Error::param("steps", "must be positive"));
        }
        Ok(())
    }

    fn training_bank(&self, iteration: usize, grid: &TimeGrid) -> NoiseBank {
        let seed = match self.noise_mode {
            NoiseMode::Frozen => self.seed,
            NoiseMode::Resample => self
                .seed
                .wrapping_add((iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        };
        NoiseBank::new(seed, self.samples, grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRun {
    pub state: OptimizerState,
    pub evaluations: Vec<Evaluation>,
    /// Why the run stopped early, if it did; the state is then the last
    /// policy before the failing step.
    pub aborted: Option<String>,
}

impl OptimizerRun {
    pub fn final_policy(&self) -> &FeedbackPolicy {
        &self.state.policy
    }
}

/// Iterates [`gda_step`]; on divergence (training risk above 10× its
/// initial value) or a numerical failure the run stops, keeping the last
/// feasible policy, and the error is returned alongside it.
pub fn run_optimization(
    model: &ReducedModel,
    risk: &RiskSpec,
    init: &FeedbackPolicy,
    schedule: &Schedule,
) -> (OptimizerRun, Option<Error>) {
    let mut state = OptimizerState::new(init.clone(), schedule.samples, schedule.eta, schedule.beta_step);
    let mut run = OptimizerRun {
        state: state.clone(),
        evaluations: Vec::new(),
        aborted: None,
    };
    if let Err(e) = schedule.validate().and_then(|_| risk.validate()) {
        return (run, Some(e));
    }
    let grid = match TimeGrid::new(model.horizon, schedule.steps) {
        Ok(g) => g,
        Err(e) => return (run, Some(e)),
    };
    let eval_bank = NoiseBank::new(schedule.eval_seed, schedule.eval_samples, &grid);
    let opts = StepOptions {
        risk: *risk,
        adaptive: schedule.adaptive,
    };
    let evaluate = |policy: &FeedbackPolicy, iteration: usize| -> Result<Evaluation> {
        let costs = crate::sde::sample_costs(model, policy, &eval_bank)?;
        Ok(Evaluation {
            iteration,
            risk: risk.evaluate(&costs)?,
            mean_cost: costs.iter().sum::<f64>() / costs.len() as f64,
        })
    };

    let mut initial_risk = None;
    for it in 0..schedule.iterations {
        if schedule.eval_samples > 0 && schedule.eval_every > 0 && it % schedule.eval_every == 0 {
            match evaluate(&state.policy, it) {
                Ok(e) => run.evaluations.push(e),
                Err(e) => return abort(run, state, e),
            }
        }
        let bank = schedule.training_bank(it, &grid);
        let before = state.clone();
        match gda_step(&mut state, model, &bank, &opts) {
            Ok(rec) => {
                let initial = *initial_risk.get_or_insert(rec.risk);
                if rec.risk > 10.0 * initial.abs() && it > 0 {
                    let err = Error::Divergence {
                        iteration: it,
                        risk: rec.risk,
                        initial,
                    };
                    return abort(run, before, err);
                }
            }
            Err(e) => return abort(run, before, e),
        }
        log::debug!("iteration {it}: risk {:.6}", state.history.last().map_or(f64::NAN, |r| r.risk));
    }
    if schedule.iterations > 0 && schedule.eval_samples > 0 && schedule.eval_every > 0 {
        match evaluate(&state.policy, schedule.iterations) {
            Ok(e) => run.evaluations.push(e),
            Err(e) => return abort(run, state, e),
        }
    }
    run.state = state;
    (run, None)
}

fn abort(mut run: OptimizerRun, state: OptimizerState, err: Error) -> (OptimizerRun, Option<Error>) {
    run.aborted = Some(err.to_string());
    run.state = state;
    (run, Some(err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{Drift, ReducedCost, SignConvention};
    use crate::sde::{simulate_batch, Record};

    fn small_model() -> ReducedModel {
        ReducedModel {
            dim_x: 2,
            modes: 0,
            n_aug: 2,
            eigenvalues: vec![],
            delta: vec![0.0, 0.0],
            a: DMatrix::from_row_slice(2, 2, &[0.3, 0.5, -0.2, -0.4]),
            b: DVector::from_column_slice(&[0.2, 1.0]),
            c: DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.05, 0.2]),
            r: Drift::Constant { value: vec![0.1, 0.0] },
            sigma: Drift::Constant { value: vec![0.05, 0.1] },
            cost: ReducedCost {
                q: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
                g: DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.1]),
                r_ctrl: 0.7,
            },
            z0: DVector::from_column_slice(&[1.0, -0.5]),
            horizon: 1.0,
            mu: 1.0,
            signs: SignConvention::Substitution,
        }
    }

    fn policy(steps: usize) -> FeedbackPolicy {
        let mut p = FeedbackPolicy::zero(2, steps, [-10.0, 10.0], [-10.0, 10.0]);
        p.k = vec![-0.6, -0.9];
        p.v.iter_mut().enumerate().for_each(|(i, v)| *v = 0.3 * (i as f64 * 0.1).sin());
        p
    }

    #[test]
    fn both_gradient_routes_agree() {
        let m = small_model();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let noise = NoiseBank::new(11, 40, &grid);
        let p = policy(50);
        let weights: Vec<f64> = (0..40).map(|s| 0.5 + 0.05 * s as f64).collect();
        let batch = simulate_batch(&m, &p, &noise, Record::Fundamental).unwrap();
        let phi_route = compute_gradients(&m, &p, &batch, &weights).unwrap();
        let (costs, fused) = costs_and_gradients(&m, &p, &noise, &|s, _| weights[s]).unwrap();
        assert_eq!(costs, batch.costs);
        for (a, b) in phi_route.grad_v.iter().zip(&fused.grad_v) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} {b}");
        }
        for (a, b) in phi_route.grad_k.iter().zip(&fused.grad_k) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn zero_cost_gives_zero_gradient() {
        let mut m = small_model();
        m.cost = ReducedCost {
            q: DMatrix::zeros(2, 2),
            g: DMatrix::zeros(2, 2),
            r_ctrl: 0.0,
        };
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let noise = NoiseBank::new(1, 5, &grid);
        let batch = simulate_batch(&m, &policy(20), &noise, Record::Fundamental).unwrap();
        let g = compute_gradients(&m, &policy(20), &batch, &[1.0; 5]).unwrap();
        assert!(g.grad_v.iter().chain(&g.grad_k).all(|x| *x == 0.0));
    }

    #[test]
    fn missing_fundamental_is_an_error() {
        let m = small_model();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let noise = NoiseBank::new(1, 3, &grid);
        let batch = simulate_batch(&m, &policy(20), &noise, Record::Paths).unwrap();
        assert!(matches!(
            compute_gradients(&m, &policy(20), &batch, &[1.0; 3]),
            Err(Error::MissingRecord(_))
        ));
    }

    #[test]
    fn zero_steps_only_advance_the_counter() {
        let m = small_model();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let noise = NoiseBank::new(2, 8, &grid);
        let mut st = OptimizerState::new(policy(20), 8, 0.0, 0.0);
        let opts = StepOptions {
            risk: RiskSpec::cvar(0.25, 0.01).unwrap(),
            adaptive: false,
        };
        gda_step(&mut st, &m, &noise, &opts).unwrap();
        assert_eq!(st.iteration, 1);
        assert_eq!(st.policy, policy(20));
        assert_eq!(st.weights, RiskWeights::uniform(8));
    }

    #[test]
    fn zero_iterations_return_the_initial_policy() {
        let m = small_model();
        let schedule = Schedule {
            iterations: 0,
            eta: 1e-3,
            beta_step: 1e-2,
            samples: 4,
            seed: 0,
            noise_mode: NoiseMode::Frozen,
            adaptive: false,
            eval_samples: 4,
            eval_seed: 1,
            eval_every: 50,
            steps: 20,
        };
        let (run, err) = run_optimization(&m, &RiskSpec::expectation(), &policy(20), &schedule);
        assert!(err.is_none());
        assert_eq!(run.final_policy(), &policy(20));
        assert!(run.state.history.is_empty());
    }
}
