//! Metrics, the hand-off latency model, and report generation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::Problem;
use crate::error::{Error, Result};

/// Latency of a successful proactive hand-off, ms.
pub const PROACTIVE_MS: f64 = 11.4;
/// Latency of a reactive recovery after an unpredicted blockage, ms.
pub const REACTIVE_MS: f64 = 222.8;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{a} predictions for {b} targets")));
    }
    if a == 0 {
        return Err(Error::invalid("no predictions to evaluate"));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn top1(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(preds.len(), targets.len())?;
    let hits = preds.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Mean absolute error and the population standard deviation of the
/// absolute errors.
pub fn mae_std(preds: &[f64], targets: &[f64]) -> Result<(f64, f64)> {
    check_lengths(preds.len(), targets.len())?;
    let n = preds.len() as f64;
    let errs: Vec<f64> = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).collect();
    let mae = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mae) * (e - mae)).sum::<f64>() / n;
    Ok((mae, var.sqrt()))
}

/// Row-normalized confusion matrix; rows are ground truth, columns are
/// predictions, both indexed like `classes`. Rows without samples are zero.
pub fn confusion(preds: &[f64], targets: &[f64], classes: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_lengths(preds.len(), targets.len())?;
    let index = |v: f64| {
        classes
            .iter()
            .position(|&c| c == v)
            .ok_or_else(|| Error::invalid(format!("label {v} is not one of {classes:?}")))
    };
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (&p, &t) in preds.iter().zip(targets) {
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.into_iter()
                .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect())
}

/// Expected hand-off latency for prediction accuracy `p_hat`.
pub fn latency(p_hat: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(Error::invalid(format!("accuracy {p_hat} outside [0, 1]")));
    }
    Ok(p_hat * PROACTIVE_MS + (1.0 - p_hat) * REACTIVE_MS)
}

/// Metrics for one (problem, horizon) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub problem: Problem,
    pub horizon: usize,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classes: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confusion: Option<Vec<Vec<f64>>>,
    /// Hand-off latency implied by the occurrence accuracy, ms.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency_ms: Option<f64>,
}

impl ProblemResult {
    /// Scores aligned predictions and targets.
    pub fn score(problem: Problem, horizon: usize, preds: &[f64], targets: &[f64]) -> Result<Self> {
        let mut r = Self {
            problem,
            horizon,
            samples: preds.len(),
            top1: None,
            mae: None,
            std: None,
            classes: None,
            confusion: None,
            latency_ms: None,
        };
        if problem.is_regression() {
            let (mae, std) = mae_std(preds, targets)?;
            r.mae = Some(mae);
            r.std = Some(std);
            return Ok(r);
        }
        let acc = top1(preds, targets)?;
        r.top1 = Some(acc);
        let mut classes: Vec<f64> = targets.iter().chain(preds).copied().collect();
        classes.sort_by(f64::total_cmp);
        classes.dedup();
        r.confusion = Some(confusion(preds, targets, &classes)?);
        r.classes = Some(classes);
        if problem == Problem::Occurrence {
            r.latency_ms = Some(latency(acc)?);
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub results: Vec<ProblemResult>,
    /// Dataset manifests keyed by horizon, echoed verbatim.
    #[serde(default)]
    pub datasets: BTreeMap<String, serde_json::Value>,
}

impl EvalReport {
    pub fn new(mut results: Vec<ProblemResult>, datasets: BTreeMap<String, serde_json::Value>) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::invalid("report needs at least one result"));
        }
        results.sort_by_key(|r| (r.problem, r.horizon));
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            results,
            datasets,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("report serialization: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    /// Plain-text tables.
    pub fn to_text(&self) -> String {
        let mut out = format!("blockcast {} evaluation report\n", self.tool_version);
        for problem in Problem::ALL {
            let rows: Vec<&ProblemResult> =
                self.results.iter().filter(|r| r.problem == problem).collect();
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\nproblem {problem} ({})", problem.name());
            if problem.is_regression() {
                let _ = writeln!(out, "{:>8} {:>8} {:>10} {:>10}", "horizon", "samples", "mae", "std");
                for r in &rows {
                    let _ = writeln!(
                        out,
                        "{:>8} {:>8} {:>10.4} {:>10.4}",
                        r.horizon,
                        r.samples,
                        r.mae.unwrap_or(f64::NAN),
                        r.std.unwrap_or(f64::NAN)
                    );
                }
                continue;
            }
            let _ = writeln!(out, "{:>8} {:>8} {:>10} {:>12}", "horizon", "samples", "top1", "latency_ms");
            for r in &rows {
                let latency = r.latency_ms.map_or("-".to_string(), |l| format!("{l:.2}"));
                let _ = writeln!(
                    out,
                    "{:>8} {:>8} {:>10.4} {:>12}",
                    r.horizon,
                    r.samples,
                    r.top1.unwrap_or(f64::NAN),
                    latency
                );
            }
            for r in &rows {
                let (Some(classes), Some(m)) = (&r.classes, &r.confusion) else {
                    continue;
                };
                let _ = writeln!(out, "confusion at horizon {} (rows: truth, cols: predicted)", r.horizon);
                let header: Vec<String> = classes.iter().map(|c| format!("{c:>7}")).collect();
                let _ = writeln!(out, "{:>7} {}", "", header.join(" "));
                for (c, row) in classes.iter().zip(m) {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v:>7.3}")).collect();
                    let _ = writeln!(out, "{c:>7} {}", cells.join(" "));
                }
            }
        }
        out
    }

    /// `horizon,metric,value` rows for plotting.
    pub fn to_curves_csv(&self) -> String {
        let mut out = String::from("problem,horizon,metric,value\n");
        for r in &self.results {
            for (name, value) in [
                ("top1", r.top1),
                ("mae", r.mae),
                ("std", r.std),
                ("latency_ms", r.latency_ms),
            ] {
                if let Some(v) = value {
                    let _ = writeln!(out, "{},{},{name},{}", r.problem, r.horizon, crate::io::fmt_f64(v));
                }
            }
        }
        out
    }
}
