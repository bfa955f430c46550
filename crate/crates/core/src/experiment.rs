//! End-to-end stages (reduce, baseline, optimize, report) writing their
//! artifacts into one output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::io::{self, PolicyArtifact};
use crate::lq::{baseline_policy, solve_stochastic_are, RiccatiSolution};
use crate::optimizer::{run_optimization, OptimizerRun};
use crate::par::with_workers;
use crate::reduction::{summary, ReducedModel};
use crate::report::{BatchSummary, Histogram, QuantileReport, DEFAULT_BINS, DEFAULT_LEVELS};
use crate::sde::{sample_costs, FeedbackPolicy, NoiseBank};

pub const MODEL_JSON: &str = "model.json";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const RICCATI_JSON: &str = "riccati.json";
pub const BASELINE_POLICY_JSON: &str = "baseline_policy.json";
pub const BASELINE_COSTS_CSV: &str = "baseline_costs.csv";
pub const POLICY_JSON: &str = "risk_averse_policy.json";
pub const HISTORY_CSV: &str = "history.csv";
pub const EVALUATIONS_CSV: &str = "evaluations.csv";
pub const RISK_AVERSE_COSTS_CSV: &str = "risk_averse_costs.csv";
pub const QUANTILES_CSV: &str = "quantiles.csv";
pub const QUANTILES_TXT: &str = "quantiles.txt";
pub const REPORT_JSON: &str = "report.json";
pub const HISTOGRAM_JSON: &str = "histogram.json";
pub const HISTOGRAM_CSV: &str = "histogram.csv";

/// Output directory plus the formats enabled for the report stage.
#[derive(Debug, Clone)]
pub struct ArtifactDir {
    pub root: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl ArtifactDir {
    pub fn create(root: impl Into<PathBuf>, formats: &[OutputFormat]) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(ArtifactDir {
            root,
            formats: formats.to_vec(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

pub fn reduce(cfg: &ExperimentConfig, out: &ArtifactDir) -> Result<ReducedModel> {
    let (model, _, lifters) = cfg.build_model()?;
    io::write_json(&out.path(MODEL_JSON), &model)?;
    std::fs::write(out.path(SUMMARY_TXT), summary(&model, &lifters))?;
    Ok(model)
}

pub fn load_model(cfg: &ExperimentConfig, out: &ArtifactDir) -> Result<ReducedModel> {
    let path = out.path(MODEL_JSON);
    if !path.exists() {
        return Err(missing(&path, "reduce"));
    }
    let model: ReducedModel = io::read_json(&path)?;
    if (model.horizon - cfg.system.horizon).abs() > 0.0 || model.modes != cfg.highest_mode + 1 {
        return Err(Error::config(
            path.display().to_string(),
            "model artifact does not match the configuration; rerun `reduce`",
        ));
    }
    Ok(model)
}

fn missing(path: &Path, stage: &str) -> Error {
    Error::config(path.display().to_string(), format!("not found; run `{stage}` first"))
}

/// Held-out evaluation bank shared by both policies.
pub fn evaluation_bank(cfg: &ExperimentConfig) -> NoiseBank {
    NoiseBank::new(cfg.simulation.eval_seed(), cfg.simulation.s_eval, &cfg.grid())
}

pub struct BaselineOutcome {
    pub riccati: RiccatiSolution,
    pub policy: FeedbackPolicy,
    pub costs: Vec<f64>,
}

pub fn baseline(cfg: &ExperimentConfig, model: &ReducedModel, out: &ArtifactDir) -> Result<BaselineOutcome> {
    let riccati = solve_stochastic_are(model)?;
    io::write_json(&out.path(RICCATI_JSON), &riccati)?;
    let grid = cfg.grid();
    let policy = baseline_policy(&riccati, &grid, cfg.optimizer.box_v, cfg.optimizer.box_k);
    io::write_json(
        &out.path(BASELINE_POLICY_JSON),
        &PolicyArtifact::new(&policy, &grid, cfg.simulation.seed, "lq"),
    )?;
    let costs = with_workers(cfg.simulation.workers, || sample_costs(model, &policy, &evaluation_bank(cfg)))?;
    io::write_costs_csv(&out.path(BASELINE_COSTS_CSV), &costs)?;
    Ok(BaselineOutcome { riccati, policy, costs })
}

pub fn load_policy(out: &ArtifactDir, name: &str, stage: &str) -> Result<FeedbackPolicy> {
    let path = out.path(name);
    if !path.exists() {
        return Err(missing(&path, stage));
    }
    io::read_json::<PolicyArtifact>(&path)?.policy()
}

pub struct OptimizeOutcome {
    pub run: OptimizerRun,
    pub costs: Vec<f64>,
}

/// Runs the optimizer from `init`. The final (or last good) policy, the
/// history and the evaluation trace are written even when the run aborts;
/// the abort is then returned as the error.
pub fn optimize(
    cfg: &ExperimentConfig,
    model: &ReducedModel,
    init: &FeedbackPolicy,
    out: &ArtifactDir,
) -> Result<OptimizeOutcome> {
    let grid = cfg.grid();
    let (run, err) = with_workers(cfg.simulation.workers, || {
        run_optimization(model, &cfg.risk, init, &cfg.schedule())
    });
    let policy = run.final_policy();
    let source = if err.is_some() { "cvar-gda (aborted)" } else { "cvar-gda" };
    io::write_json(
        &out.path(POLICY_JSON),
        &PolicyArtifact::new(policy, &grid, cfg.simulation.seed, source),
    )?;
    io::write_history_csv(&out.path(HISTORY_CSV), &run.state.history)?;
    io::write_evaluations_csv(&out.path(EVALUATIONS_CSV), &run.evaluations)?;
    if let Some(e) = err {
        return Err(e);
    }
    let costs = with_workers(cfg.simulation.workers, || sample_costs(model, policy, &evaluation_bank(cfg)))?;
    io::write_costs_csv(&out.path(RISK_AVERSE_COSTS_CSV), &costs)?;
    Ok(OptimizeOutcome { run, costs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub quantiles: QuantileReport,
    pub baseline: BatchSummary,
    pub risk_averse: BatchSummary,
}

pub fn report(
    baseline: &[f64],
    risk_averse: &[f64],
    alpha: f64,
    levels: &[f64],
    bins: usize,
    out: &ArtifactDir,
) -> Result<(Report, Histogram)> {
    let rep = Report {
        quantiles: QuantileReport::from_costs(baseline, risk_averse, levels)?,
        baseline: BatchSummary::new(baseline, alpha, levels)?,
        risk_averse: BatchSummary::new(risk_averse, alpha, levels)?,
    };
    let hist = Histogram::new(baseline, risk_averse, bins)?;
    std::fs::write(out.path(QUANTILES_TXT), rep.quantiles.to_table())?;
    if out.wants(OutputFormat::Csv) {
        std::fs::write(out.path(QUANTILES_CSV), rep.quantiles.to_csv())?;
        let mut s = String::from("lower,upper,count1,count2\n");
        for i in 0..hist.counts1.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                hist.edges[i],
                hist.edges[i + 1],
                hist.counts1[i],
                hist.counts2[i]
            ));
        }
        std::fs::write(out.path(HISTOGRAM_CSV), s)?;
    }
    if out.wants(OutputFormat::Json) {
        io::write_json(&out.path(REPORT_JSON), &rep)?;
        io::write_json(&out.path(HISTOGRAM_JSON), &hist)?;
    }
    Ok((rep, hist))
}

pub fn report_from_files(cfg: &ExperimentConfig, levels: &[f64], bins: usize, out: &ArtifactDir) -> Result<Report> {
    let read = |name: &str, stage: &str| {
        let p = out.path(name);
        if p.exists() {
            io::read_costs_csv(&p)
        } else {
            Err(missing(&p, stage))
        }
    };
    let base = read(BASELINE_COSTS_CSV, "baseline")?;
    let ra = read(RISK_AVERSE_COSTS_CSV, "optimize")?;
    Ok(report(&base, &ra, cfg.risk.alpha, levels, bins, out)?.0)
}

/// Everything the full pipeline produced, for callers that want to inspect
/// the numbers rather than the files.
pub struct PipelineOutcome {
    pub model: ReducedModel,
    pub baseline: BaselineOutcome,
    pub optimized: OptimizeOutcome,
    pub report: Report,
}

pub fn run_all(cfg: &ExperimentConfig, out: &ArtifactDir) -> Result<PipelineOutcome> {
    let model = reduce(cfg, out)?;
    let base = baseline(cfg, &model, out)?;
    let optimized = optimize(cfg, &model, &base.policy, out)?;
    let (rep, _) = report(
        &base.costs,
        &optimized.costs,
        cfg.risk.alpha,
        &DEFAULT_LEVELS,
        DEFAULT_BINS,
        out,
    )?;
    Ok(PipelineOutcome {
        model,
        baseline: base,
        optimized,
        report: rep,
    })
}
