//! Experiment configuration file (TOML). Every key is optional and defaults
//! to the reference experiment; unknown keys are rejected.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::func::FunctionDescriptor;
use crate::optimizer::{NoiseMode, Schedule};
use crate::reduction::{
    assemble_cost, assemble_reduced_with, CoupledSystemSpec, Drift, Lifters, ReducedModel,
    SignConvention,
};
use crate::risk::{RiskKind, RiskSpec};
use crate::sde::TimeGrid;
use crate::spectral::{solve_eigenpairs, trace_representer, EigenBasis, RobinParams};

type Matrix = Spanned<Vec<Vec<f64>>>;
type Vector = Spanned<Vec<f64>>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    reduction: Option<RawReduction>,
    simulation: Option<RawSimulation>,
    cost: Option<RawCost>,
    risk: Option<RawRisk>,
    optimizer: Option<RawOptimizer>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    d: Option<Spanned<usize>>,
    #[serde(rename = "A")]
    a: Option<Matrix>,
    #[serde(rename = "B")]
    b: Option<Vector>,
    #[serde(rename = "C")]
    c: Option<Matrix>,
    #[serde(rename = "D")]
    d_vec: Option<Vector>,
    #[serde(rename = "M")]
    m: Option<Vector>,
    sigma: Option<Spanned<RawDrift>>,
    r: Option<Spanned<RawDrift>>,
    #[serde(rename = "c")]
    c_reaction: Option<f64>,
    beta0: Option<f64>,
    beta1: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    #[serde(rename = "X0")]
    x0: Option<Vector>,
    u0: Option<FunctionDescriptor>,
    #[serde(rename = "V0")]
    v0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDrift {
    Constant(Vec<f64>),
    Piecewise { dt: f64, values: Vec<Vec<f64>> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReduction {
    #[serde(rename = "N")]
    n: Option<usize>,
    mu: Option<f64>,
    signs: Option<SignConvention>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    dt: Option<f64>,
    steps: Option<usize>,
    #[serde(rename = "S_train")]
    s_train: Option<usize>,
    #[serde(rename = "S_eval")]
    s_eval: Option<usize>,
    #[serde(rename = "S_monitor")]
    s_monitor: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    c_q: Option<f64>,
    #[serde(rename = "Q")]
    q: Option<Matrix>,
    #[serde(rename = "G")]
    g: Option<Matrix>,
    r_ctrl: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRisk {
    kind: Option<RiskKind>,
    alpha: Option<f64>,
    gamma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    iterations: Option<usize>,
    eta: Option<f64>,
    beta_step: Option<f64>,
    box_v: Option<[f64; 2]>,
    box_k: Option<[f64; 2]>,
    adaptive: Option<bool>,
    noise: Option<NoiseMode>,
    eval_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    formats: Option<Vec<OutputFormat>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub steps: usize,
    pub s_train: usize,
    pub s_eval: usize,
    pub s_monitor: usize,
    pub seed: u64,
    pub workers: usize,
}

impl SimulationConfig {
    pub fn train_seed(&self) -> u64 {
        self.seed
    }

    pub fn monitor_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn eval_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    #[serde(with = "crate::matrix::rows")]
    pub q: DMatrix<f64>,
    #[serde(with = "crate::matrix::rows")]
    pub g: DMatrix<f64>,
    pub r_ctrl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub eta: f64,
    pub beta_step: f64,
    pub box_v: [f64; 2],
    pub box_k: [f64; 2],
    pub adaptive: bool,
    pub noise: NoiseMode,
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: CoupledSystemSpec,
    /// Highest retained mode index `N` (modes `0..=N`).
    pub highest_mode: usize,
    pub signs: SignConvention,
    pub simulation: SimulationConfig,
    pub cost: CostConfig,
    pub risk: RiskSpec,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
}

pub const DEFAULT_A: [[f64; 2]; 2] = [[0.6, 0.4], [0.0, 0.4]];
pub const DEFAULT_X0: [f64; 2] = [0.4, 0.4];

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_toml_str("").expect("built-in defaults are valid")
    }
}

/// 1-based line of a byte offset.
fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn err<T>(&self, path: &str, span: Option<std::ops::Range<usize>>, reason: impl std::fmt::Display) -> Result<T> {
        let reason = match span {
            Some(s) => format!("{reason} (line {})", line_of(self.src, s.start)),
            None => reason.to_string(),
        };
        Err(Error::config(path, reason))
    }

    fn matrix(&self, path: &str, m: &Matrix, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let v = m.get_ref();
        if v.len() != rows {
            return self.err(path, Some(m.span()), format!("expected {rows} rows, found {}", v.len()));
        }
        for (i, row) in v.iter().enumerate() {
            if row.len() != cols {
                return self.err(
                    path,
                    Some(m.span()),
                    format!("expected {cols} columns (row {} has {})", i + 1, row.len()),
                );
            }
            if row.iter().any(|x| !x.is_finite()) {
                return self.err(path, Some(m.span()), "entries must be finite");
            }
        }
        crate::matrix::from_rows(v).map_err(|e| Error::config(path, e))
    }

    fn vector(&self, path: &str, v: &Vector, len: usize) -> Result<DVector<f64>> {
        let x = v.get_ref();
        if x.len() != len {
            return self.err(path, Some(v.span()), format!("expected {len} entries, found {}", x.len()));
        }
        if x.iter().any(|x| !x.is_finite()) {
            return self.err(path, Some(v.span()), "entries must be finite");
        }
        Ok(DVector::from_column_slice(x))
    }

    fn drift(&self, path: &str, raw: &Spanned<RawDrift>, d: usize, horizon: f64) -> Result<Drift> {
        let drift = match raw.get_ref() {
            RawDrift::Constant(v) => Drift::Constant { value: v.clone() },
            RawDrift::Piecewise { dt, values } => Drift::Piecewise {
                dt: *dt,
                values: values.clone(),
            },
        };
        if let Err(e) = drift.check(path, d, horizon) {
            return self.err(path, Some(raw.span()), e);
        }
        Ok(drift)
    }
}

fn positive(path: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(path, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&src)
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| Error::config("config", e.to_string().trim_end()))?;
        let cx = Ctx { src };

        let sys = raw.system.unwrap_or_default();
        let a = match &sys.a {
            Some(m) => {
                let rows = m.get_ref().len();
                if rows == 0 {
                    return cx.err("system.A", Some(m.span()), "must not be empty");
                }
                cx.matrix("system.A", m, rows, rows)?
            }
            None => DMatrix::from_fn(2, 2, |i, j| DEFAULT_A[i][j]),
        };
        let d = a.nrows();
        if let Some(dd) = &sys.d {
            if *dd.get_ref() != d {
                return cx.err("system.d", Some(dd.span()), format!("is {} but A is {d}x{d}", dd.get_ref()));
            }
        }
        let vec_or = |path: &str, v: &Option<Vector>, default: DVector<f64>| -> Result<DVector<f64>> {
            match v {
                Some(v) => cx.vector(path, v, d),
                None if default.len() == d => Ok(default),
                None => Err(Error::config(path, format!("required when d = {d}"))),
            }
        };
        let b = vec_or("system.B", &sys.b, DVector::from_column_slice(&[0.0, 1.0]))?;
        let c = match &sys.c {
            Some(m) => cx.matrix("system.C", m, d, d)?,
            None => DMatrix::from_diagonal_element(d, d, 0.1),
        };
        let dv = vec_or("system.D", &sys.d_vec, DVector::zeros(d))?;
        let m = vec_or("system.M", &sys.m, DVector::zeros(d))?;
        let x0 = vec_or("system.X0", &sys.x0, DVector::from_column_slice(&DEFAULT_X0))?;
        let horizon = positive("system.T", sys.horizon.unwrap_or(4.0))?;
        let sigma = match &sys.sigma {
            Some(s) => cx.drift("system.sigma", s, d, horizon)?,
            None if d == 2 => Drift::Constant { value: vec![0.05, 0.05] },
            None => Drift::zeros(d),
        };
        let r_drift = match &sys.r {
            Some(s) => cx.drift("system.r", s, d, horizon)?,
            None => Drift::zeros(d),
        };
        let creact = sys.c_reaction.unwrap_or(0.2);
        let red = raw.reduction.unwrap_or_default();
        let mut robin = RobinParams::new(sys.beta0.unwrap_or(0.0), sys.beta1.unwrap_or(0.0), creact);
        if let Some(mu) = red.mu {
            robin = robin.with_mu(mu);
        }
        robin
            .validate()
            .map_err(|e| Error::config("system", e.to_string()))?;
        let system = CoupledSystemSpec {
            a,
            b,
            c,
            d: dv,
            m,
            r_drift,
            sigma_drift: sigma,
            robin,
            horizon,
            x0,
            u0: sys.u0.unwrap_or_else(FunctionDescriptor::zero),
            v0: sys.v0.unwrap_or(0.0),
        };
        system
            .validate()
            .map_err(|e| Error::config("system", e.to_string()))?;

        let sim = raw.simulation.unwrap_or_default();
        let steps = match (sim.steps, sim.dt) {
            (Some(_), Some(_)) => return Err(Error::config("simulation", "give either dt or steps, not both")),
            (Some(0), None) => return Err(Error::config("simulation.steps", "must be positive")),
            (Some(s), None) => s,
            (None, dt) => {
                let dt = positive("simulation.dt", dt.unwrap_or(1e-3))?;
                TimeGrid::with_step(horizon, dt)
                    .map_err(|e| Error::config("simulation.dt", e.to_string()))?
                    .steps
            }
        };
        let nonzero = |path: &str, v: usize| {
            if v == 0 {
                Err(Error::config(path, "must be positive"))
            } else {
                Ok(v)
            }
        };
        let simulation = SimulationConfig {
            steps,
            s_train: nonzero("simulation.S_train", sim.s_train.unwrap_or(2000))?,
            s_eval: nonzero("simulation.S_eval", sim.s_eval.unwrap_or(10_000))?,
            s_monitor: sim.s_monitor.unwrap_or(1000),
            seed: sim.seed.unwrap_or(2024),
            workers: sim.workers.unwrap_or(0),
        };

        let cost_raw = raw.cost.unwrap_or_default();
        let q = match (&cost_raw.q, cost_raw.c_q) {
            (Some(_), Some(_)) => return Err(Error::config("cost", "give either Q or c_q, not both")),
            (Some(m), None) => cx.matrix("cost.Q", m, d, d)?,
            (None, cq) => DMatrix::from_diagonal_element(d, d, cq.unwrap_or(1.0)),
        };
        let g = match &cost_raw.g {
            Some(m) => cx.matrix("cost.G", m, d, d)?,
            None => DMatrix::zeros(d, d),
        };
        let cost = CostConfig {
            q,
            g,
            r_ctrl: positive("cost.r_ctrl", cost_raw.r_ctrl.unwrap_or(3.0))?,
        };

        let risk_raw = raw.risk.unwrap_or_default();
        let risk = match risk_raw.kind.unwrap_or(RiskKind::Cvar) {
            RiskKind::Cvar => RiskSpec::cvar(risk_raw.alpha.unwrap_or(0.1), risk_raw.gamma.unwrap_or(1e-3)),
            RiskKind::Expectation => Ok(RiskSpec::expectation()),
        }
        .map_err(|e| Error::config("risk", e.to_string()))?;

        let opt = raw.optimizer.unwrap_or_default();
        let box_of = |path: &str, b: Option<[f64; 2]>| -> Result<[f64; 2]> {
            let b = b.unwrap_or([-50.0, 50.0]);
            if !(b[0] <= 0.0 && b[1] >= 0.0 && b[0].is_finite() && b[1].is_finite()) {
                return Err(Error::config(path, "must be a finite interval containing 0"));
            }
            Ok(b)
        };
        let optimizer = OptimizerConfig {
            iterations: opt.iterations.unwrap_or(1000),
            eta: opt.eta.unwrap_or(1e-3),
            beta_step: opt.beta_step.unwrap_or(1e-2),
            box_v: box_of("optimizer.box_v", opt.box_v)?,
            box_k: box_of("optimizer.box_k", opt.box_k)?,
            adaptive: opt.adaptive.unwrap_or(false),
            noise: opt.noise.unwrap_or(NoiseMode::Resample),
            eval_every: opt.eval_every.unwrap_or(50),
        };
        if !(optimizer.eta >= 0.0 && optimizer.beta_step >= 0.0) {
            return Err(Error::config("optimizer", "step sizes must be >= 0"));
        }

        let out = raw.output.unwrap_or_default();
        let output = OutputConfig {
            directory: out.directory.unwrap_or_else(|| PathBuf::from("out")),
            formats: out.formats.unwrap_or_else(|| vec![OutputFormat::Csv, OutputFormat::Json]),
        };

        Ok(ExperimentConfig {
            system,
            highest_mode: red.n.unwrap_or(3),
            signs: red.signs.unwrap_or_default(),
            simulation,
            cost,
            risk,
            optimizer,
            output,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            horizon: self.system.horizon,
            steps: self.simulation.steps,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            iterations: self.optimizer.iterations,
            eta: self.optimizer.eta,
            beta_step: self.optimizer.beta_step,
            samples: self.simulation.s_train,
            seed: self.simulation.train_seed(),
            noise_mode: self.optimizer.noise,
            adaptive: self.optimizer.adaptive,
            eval_samples: self.simulation.s_monitor,
            eval_seed: self.simulation.monitor_seed(),
            eval_every: self.optimizer.eval_every,
            steps: self.simulation.steps,
        }
    }

    /// Eigenbasis, lifters and the reduced model with its cost.
    pub fn build_model(&self) -> Result<(ReducedModel, EigenBasis, Lifters)> {
        let basis = solve_eigenpairs(&self.system.robin, self.highest_mode)?;
        let lifters = Lifters::solve(&self.system.robin)?;
        let rep = trace_representer(&basis);
        let model = assemble_reduced_with(&self.system, &basis, &lifters, &rep, self.signs)?;
        let cost = assemble_cost(&self.cost.q, &self.cost.g, self.cost.r_ctrl, &basis)?;
        Ok((model.with_cost(cost)?, basis, lifters))
    }
}
