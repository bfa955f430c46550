//! Browser bindings: eigenfunction and lifter curves, a baseline-versus-open-loop
//! cost comparison, and the CVaR weight projection. Every export returns a
//! JSON string; failures come back as `{"error": "..."}`.

use heatrisk::config::ExperimentConfig;
use heatrisk::lq::{baseline_policy, solve_stochastic_are};
use heatrisk::report::{BatchSummary, Histogram, DEFAULT_LEVELS};
use heatrisk::risk::{cvar_estimate, project_risk_weights};
use heatrisk::sde::{sample_costs, FeedbackPolicy, NoiseBank};
use heatrisk::spectral::{solve_eigenpairs, solve_lifter, LifterSide, RobinParams};
use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_MODES: usize = 40;
const MAX_SAMPLES: usize = 20_000;

fn respond(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
struct Curves {
    x: Vec<f64>,
    eigenvalues: Vec<f64>,
    modes: Vec<Vec<f64>>,
    actuation_lifter: Vec<f64>,
    sde_lifter: Vec<f64>,
}

pub fn eigenbasis_curves(beta0: f64, beta1: f64, c: f64, modes: usize, points: usize) -> Result<Value, String> {
    if modes > MAX_MODES {
        return Err(format!("at most {MAX_MODES} modes"));
    }
    let points = points.clamp(2, 2000);
    let params = RobinParams::new(beta0, beta1, c);
    let basis = solve_eigenpairs(&params, modes).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let sample = |f: &heatrisk::FunctionDescriptor| x.iter().map(|&t| f.value(t)).collect::<Vec<_>>();
    let lifter = |side| solve_lifter(&params, side).map(|l| sample(&l.function())).map_err(|e| e.to_string());
    let curves = Curves {
        eigenvalues: basis.eigenvalues.clone(),
        modes: basis.functions.iter().map(sample).collect(),
        actuation_lifter: lifter(LifterSide::Actuation)?,
        sde_lifter: lifter(LifterSide::Sde)?,
        x,
    };
    serde_json::to_value(curves).map_err(|e| e.to_string())
}

pub fn compare_policies(samples: usize, seed: u64, steps: usize, alpha: f64, bins: usize) -> Result<Value, String> {
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(format!("samples must be in 1..={MAX_SAMPLES}"));
    }
    let cfg = ExperimentConfig::from_toml_str(&format!("[simulation]\nsteps = {steps}\nseed = {seed}\n"))
        .map_err(|e| e.to_string())?;
    let model = cfg.build_model().map_err(|e| e.to_string())?.0;
    let grid = cfg.grid();
    let sol = solve_stochastic_are(&model).map_err(|e| e.to_string())?;
    let lq = baseline_policy(&sol, &grid, cfg.optimizer.box_v, cfg.optimizer.box_k);
    let open = FeedbackPolicy::zero(model.n_aug, grid.steps, cfg.optimizer.box_v, cfg.optimizer.box_k);
    let bank = NoiseBank::new(seed, samples, &grid);
    let a = sample_costs(&model, &lq, &bank).map_err(|e| e.to_string())?;
    let b = sample_costs(&model, &open, &bank).map_err(|e| e.to_string())?;
    let hist = Histogram::new(&a, &b, bins.max(1)).map_err(|e| e.to_string())?;
    Ok(json!({
        "gain": sol.k,
        "riccati_residual": sol.residual,
        "lq": BatchSummary::new(&a, alpha, &DEFAULT_LEVELS).map_err(|e| e.to_string())?,
        "open_loop": BatchSummary::new(&b, alpha, &DEFAULT_LEVELS).map_err(|e| e.to_string())?,
        "histogram": hist,
    }))
}

pub fn risk_weights(costs: &[f64], alpha: f64, scale: f64) -> Result<Value, String> {
    let y: Vec<f64> = costs.iter().map(|c| scale * c).collect();
    let w = project_risk_weights(&y, alpha).map_err(|e| e.to_string())?;
    Ok(json!({
        "zeta": w.zeta,
        "weighted_mean": w.weighted_mean(costs),
        "cvar": cvar_estimate(costs, alpha).map_err(|e| e.to_string())?,
    }))
}

/// Eigenvalues, sampled eigenfunctions and both boundary lifters.
#[wasm_bindgen]
pub fn eigenbasis(beta0: f64, beta1: f64, c: f64, modes: u32, points: u32) -> String {
    respond(eigenbasis_curves(beta0, beta1, c, modes as usize, points as usize))
}

/// Cost distributions of the LQ feedback and the uncontrolled system on
/// common noise.
#[wasm_bindgen]
pub fn compare(samples: u32, seed: u32, steps: u32, alpha: f64, bins: u32) -> String {
    respond(compare_policies(samples as usize, seed as u64, steps as usize, alpha, bins as usize))
}

/// Projection of `scale · costs` onto the CVaR envelope at level `alpha`.
#[wasm_bindgen]
pub fn project(costs: &[f64], alpha: f64, scale: f64) -> String {
    respond(risk_weights(costs, alpha, scale))
}
