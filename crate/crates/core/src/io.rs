//! On-disk artifacts: cost and history CSV files, JSON documents.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{Evaluation, IterationRecord};
use crate::sde::{FeedbackPolicy, TimeGrid};

pub const COSTS_HEADER: [&str; 2] = ["sample", "cost"];
pub const HISTORY_HEADER: [&str; 5] = ["iteration", "risk", "mean_cost", "grad_v_norm", "grad_K_norm"];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::config(path.display().to_string(), e.to_string())
}

pub fn write_costs_csv(path: &Path, costs: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(COSTS_HEADER).map_err(|e| csv_error(path, e))?;
    for (i, c) in costs.iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `sample,cost` file; rows must be numbered `0, 1, …`.
pub fn read_costs_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != COSTS_HEADER {
        return Err(Error::config(
            path.display().to_string(),
            format!("expected header `sample,cost`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut costs = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| Error::config(format!("{}:{}", path.display(), i + 2), what.to_string());
        let idx: usize = row.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("bad sample index"))?;
        if idx != i {
            return Err(bad("sample indices must be 0, 1, 2, ..."));
        }
        let c: f64 = row.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("bad cost value"))?;
        if !c.is_finite() {
            return Err(bad("non-finite cost"));
        }
        costs.push(c);
    }
    if costs.is_empty() {
        return Err(Error::config(path.display().to_string(), "no cost rows"));
    }
    Ok(costs)
}

pub fn write_history_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(HISTORY_HEADER).map_err(|e| csv_error(path, e))?;
    for h in history {
        w.write_record([
            h.iteration.to_string(),
            h.risk.to_string(),
            h.mean_cost.to_string(),
            h.grad_v_norm.to_string(),
            h.grad_k_norm.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_evaluations_csv(path: &Path, evals: &[Evaluation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["iteration", "risk", "mean_cost"])
        .map_err(|e| csv_error(path, e))?;
    for e in evals {
        w.write_record([e.iteration.to_string(), e.risk.to_string(), e.mean_cost.to_string()])
            .map_err(|er| csv_error(path, er))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&s)?)
}

/// Policy on disk: the grid it lives on, its values and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub horizon: f64,
    pub steps: usize,
    pub dt: f64,
    pub v: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub box_v: [f64; 2],
    pub box_k: [f64; 2],
    pub seed: u64,
    pub source: String,
}

impl PolicyArtifact {
    pub fn new(policy: &FeedbackPolicy, grid: &TimeGrid, seed: u64, source: &str) -> Self {
        PolicyArtifact {
            horizon: grid.horizon,
            steps: grid.steps,
            dt: grid.dt(),
            v: policy.v.clone(),
            k: policy.k.clone(),
            box_v: policy.box_v,
            box_k: policy.box_k,
            seed,
            source: source.to_string(),
        }
    }

    pub fn policy(&self) -> Result<FeedbackPolicy> {
        if self.v.len() != self.steps {
            return Err(Error::Dimension(format!(
                "policy file has {} open-loop values for {} steps",
                self.v.len(),
                self.steps
            )));
        }
        Ok(FeedbackPolicy {
            v: self.v.clone(),
            k: self.k.clone(),
            box_v: self.box_v,
            box_k: self.box_k,
        })
    }
}
