use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatrisk::config::ExperimentConfig;
use heatrisk::experiment::{self, ArtifactDir, BASELINE_POLICY_JSON};
use heatrisk::io;
use heatrisk::report::{DEFAULT_BINS, DEFAULT_LEVELS};
use heatrisk::Error;
use log::info;

#[derive(Parser)]
#[command(name = "heatrisk", version, about = "Reduced-order CVaR control of a heat equation coupled to an SDE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Base seed, overriding `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sampling (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct ReportArgs {
    /// Quantile levels, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEVELS.to_vec())]
    levels: Vec<f64>,
    /// Histogram bins.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Build the reduced model and write model.json and summary.txt.
    Reduce(Common),
    /// Solve the Riccati equation and evaluate the LQ feedback.
    Baseline(Common),
    /// Run the CVaR optimizer starting from a policy file.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Initial policy (default: baseline_policy.json in the output directory).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Quantile table and histograms of two cost samples.
    Report {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        report: ReportArgs,
        /// Baseline costs CSV (default: baseline_costs.csv in the output directory).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Risk-averse costs CSV (default: risk_averse_costs.csv in the output directory).
        #[arg(long)]
        risk_averse: Option<PathBuf>,
    },
    /// reduce, baseline, optimize and report in one go.
    All {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        report: ReportArgs,
    },
}

fn load(common: &Common) -> heatrisk::Result<(ExperimentConfig, ArtifactDir)> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.simulation.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.simulation.workers = w;
    }
    if let Some(o) = &common.out {
        cfg.output.directory = o.clone();
    }
    let out = ArtifactDir::create(&cfg.output.directory, &cfg.output.formats)?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> heatrisk::Result<()> {
    match cli.command {
        Command::Reduce(common) => {
            let (cfg, out) = load(&common)?;
            let model = experiment::reduce(&cfg, &out)?;
            info!("reduced model with {} states", model.n_aug);
            print!("{}", std::fs::read_to_string(out.path(experiment::SUMMARY_TXT))?);
        }
        Command::Baseline(common) => {
            let (cfg, out) = load(&common)?;
            let model = experiment::load_model(&cfg, &out)?;
            let b = experiment::baseline(&cfg, &model, &out)?;
            println!(
                "riccati residual {:.3e}, {} evaluation samples, mean cost {:.4}",
                b.riccati.residual,
                b.costs.len(),
                b.costs.iter().sum::<f64>() / b.costs.len() as f64
            );
        }
        Command::Optimize { common, init } => {
            let (cfg, out) = load(&common)?;
            let model = experiment::load_model(&cfg, &out)?;
            let policy = match init {
                Some(p) => io::read_json::<io::PolicyArtifact>(&p)?.policy()?,
                None => experiment::load_policy(&out, BASELINE_POLICY_JSON, "baseline")?,
            };
            let done = experiment::optimize(&cfg, &model, &policy, &out)?;
            if let (Some(first), Some(last)) = (done.run.state.history.first(), done.run.state.history.last()) {
                println!(
                    "{} iterations, training risk {:.4} -> {:.4}",
                    done.run.state.history.len(),
                    first.risk,
                    last.risk
                );
            }
        }
        Command::Report {
            common,
            report,
            baseline,
            risk_averse,
        } => {
            let (cfg, out) = load(&common)?;
            let rep = if baseline.is_none() && risk_averse.is_none() {
                experiment::report_from_files(&cfg, &report.levels, report.bins, &out)?
            } else {
                let b = io::read_costs_csv(&baseline.unwrap_or_else(|| out.path(experiment::BASELINE_COSTS_CSV)))?;
                let r = io::read_costs_csv(&risk_averse.unwrap_or_else(|| out.path(experiment::RISK_AVERSE_COSTS_CSV)))?;
                experiment::report(&b, &r, cfg.risk.alpha, &report.levels, report.bins, &out)?.0
            };
            print!("{}", rep.quantiles.to_table());
        }
        Command::All { common, report } => {
            let (cfg, out) = load(&common)?;
            let model = experiment::reduce(&cfg, &out)?;
            let base = experiment::baseline(&cfg, &model, &out)?;
            let opt = experiment::optimize(&cfg, &model, &base.policy, &out)?;
            let (rep, _) = experiment::report(&base.costs, &opt.costs, cfg.risk.alpha, &report.levels, report.bins, &out)?;
            print!("{}", rep.quantiles.to_table());
            println!(
                "CVaR {:.4} -> {:.4}, mean {:.4} -> {:.4}",
                rep.baseline.cvar, rep.risk_averse.cvar, rep.baseline.mean, rep.risk_averse.mean
            );
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
