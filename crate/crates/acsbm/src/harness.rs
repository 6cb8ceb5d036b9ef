//! Replicated experiments: sample, fit, score, and summarize across a
//! grid of network sizes.
//!
//! Results are written as CSV with one row per successful replicate.
//! Seeds derive deterministically from the master seed and the replicate's
//! grid position, so the output is byte-identical across runs and across
//! thread counts.

use crate::clustering::ClusterMethod;
use crate::error::{Error, Result};
use crate::linalg::solve_assignment;
use crate::model::ModelSpec;
use crate::pipeline::{fit, FitOptions};
use crate::rng::child_seed;
use crate::sampler::{sample_attributes, sample_network};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Fraction of nodes whose estimated community disagrees with the truth,
/// minimized over global relabelings of the estimate.
pub fn misclassification(estimate: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} estimates vs {} true labels",
            estimate.len(),
            truth.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::Domain("no labels to score".into()));
    }
    if k == 0 {
        return Err(Error::Domain("community count must be at least 1".into()));
    }
    let mut confusion = Array2::<f64>::zeros((k, k));
    for (&e, &t) in estimate.iter().zip(truth) {
        if e < 1 || e > k || t < 1 || t > k {
            return Err(Error::Domain(format!(
                "labels must lie in 1..={k}; saw estimate {e}, truth {t}"
            )));
        }
        confusion[[e - 1, t - 1]] += 1.0;
    }
    // maximize agreement over relabelings = min-cost assignment on -N
    let cost = confusion.mapv(|c| -c);
    let assignment = solve_assignment(&cost.view())?;
    let agreements: f64 = assignment
        .perm
        .iter()
        .enumerate()
        .map(|(t, &e)| confusion[[e, t]])
        .sum();
    Ok(1.0 - agreements / estimate.len() as f64)
}

/// A full experiment: one model, a grid of sizes, several replicates each.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n_values: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_method")]
    pub method: ClusterMethod,
    /// Embedding dimension override; None uses the pipeline default.
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_method() -> ClusterMethod {
    ClusterMethod::Gmm
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::Config("n_values must not be empty".into()));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_values must be strictly ascending".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        let min_n = self.model.index().total().max(2);
        if let Some(&n) = self.n_values.iter().find(|&&n| n < min_n) {
            return Err(Error::Config(format!(
                "n = {n} is too small for {} subcommunities",
                self.model.index().total()
            )));
        }
        Ok(())
    }
}

/// One successful replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub n: usize,
    pub replicate: usize,
    /// Seed this replicate derived its attribute/network/fit streams from.
    pub seed: u64,
    pub edges: usize,
    pub misclassification: f64,
}

/// One failed replicate (kept separate so failures never silently skew
/// the summaries).
#[derive(Clone, Debug, PartialEq)]
pub struct FailureRecord {
    pub n: usize,
    pub replicate: usize,
    pub message: String,
}

/// Records and failures, each in grid order (sizes in the configured
/// order, replicates increasing within a size).
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<FailureRecord>,
}

fn run_replicate(
    config: &ExperimentConfig,
    n_idx: usize,
    rep: usize,
) -> std::result::Result<ReplicateRecord, String> {
    let n = config.n_values[n_idx];
    let seed = child_seed(config.master_seed, &[n_idx as u64, rep as u64]);
    let attrs = sample_attributes(&config.model, n, child_seed(seed, &[0]))
        .map_err(|e| e.to_string())?;
    let net =
        sample_network(&config.model, &attrs, child_seed(seed, &[1])).map_err(|e| e.to_string())?;
    let opts = FitOptions {
        k: config.model.k,
        d: config.d,
        method: config.method,
        seed: child_seed(seed, &[2]),
    };
    let result = fit(&net, &opts).map_err(|e| e.to_string())?;
    let rate = result
        .misclassification
        .ok_or_else(|| "replicate produced no score".to_string())?;
    log::debug!("n={n} rep={rep}: rate={rate:.4}, edges={}", net.edge_count);
    Ok(ReplicateRecord {
        n,
        replicate: rep,
        seed,
        edges: net.edge_count,
        misclassification: rate,
    })
}

/// Runs every (size, replicate) job, in parallel when a rayon pool is
/// configured. Results are deterministic regardless of thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.n_values.len())
        .flat_map(|n_idx| (0..config.replicates).map(move |rep| (n_idx, rep)))
        .collect();
    let results: Vec<std::result::Result<ReplicateRecord, (usize, usize, String)>> = jobs
        .into_par_iter()
        .map(|(n_idx, rep)| {
            run_replicate(config, n_idx, rep).map_err(|msg| (config.n_values[n_idx], rep, msg))
        })
        .collect();
    let mut outcome = ExperimentOutcome::default();
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err((n, replicate, message)) => {
                log::warn!("replicate n={n} rep={replicate} failed: {message}");
                outcome.failures.push(FailureRecord {
                    n,
                    replicate,
                    message,
                });
            }
        }
    }
    Ok(outcome)
}

pub const CSV_HEADER: &str = "n,replicate,seed,edges,misclassification";

/// Writes records as CSV. Floats use the shortest round-trip decimal form,
/// so equal results produce identical bytes.
pub fn write_csv<W: Write>(records: &[ReplicateRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.n, r.replicate, r.seed, r.edges, r.misclassification
        )?;
    }
    Ok(())
}

/// Reads records from CSV. Columns are located by header name, so extra
/// columns are tolerated; missing ones are an error.
pub fn read_csv<R: BufRead>(reader: R) -> Result<Vec<ReplicateRecord>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty results file".into()))??;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|&h| h == name)
            .ok_or_else(|| Error::Parse(format!("results file lacks a '{name}' column")))
    };
    let (ci_n, ci_rep, ci_seed, ci_edges, ci_rate) = (
        col("n")?,
        col("replicate")?,
        col("seed")?,
        col("edges")?,
        col("misclassification")?,
    );
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let field = |ci: usize| -> Result<&str> {
            fields.get(ci).copied().ok_or_else(|| {
                Error::Parse(format!("line {}: too few fields", lineno + 2))
            })
        };
        let parse_err =
            |what: &str, v: &str| Error::Parse(format!("line {}: bad {what} '{v}'", lineno + 2));
        records.push(ReplicateRecord {
            n: field(ci_n)?
                .parse()
                .map_err(|_| parse_err("n", field(ci_n).unwrap()))?,
            replicate: field(ci_rep)?
                .parse()
                .map_err(|_| parse_err("replicate", field(ci_rep).unwrap()))?,
            seed: field(ci_seed)?
                .parse()
                .map_err(|_| parse_err("seed", field(ci_seed).unwrap()))?,
            edges: field(ci_edges)?
                .parse()
                .map_err(|_| parse_err("edges", field(ci_edges).unwrap()))?,
            misclassification: field(ci_rate)?
                .parse()
                .map_err(|_| parse_err("misclassification", field(ci_rate).unwrap()))?,
        });
    }
    Ok(records)
}

/// Summary statistics for one network size.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub replicates: usize,
    pub failures: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
}

/// Per-size summaries plus the chance-level rate when K is known.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// 1 - 1/K: the rate of a constant (or independent) labeling.
    pub worst_case_misclassification: Option<f64>,
    pub per_n: Vec<SummaryRow>,
}

/// Linear-interpolation quantile of a sorted slice (the convention where
/// the h-th order statistic sits at h = (len - 1) q).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 == sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Groups records by size (in first-appearance order) and summarizes each
/// group. `expected_replicates` turns missing rows into failure counts;
/// `k` fills in the chance-level reference rate.
pub fn summarize(
    records: &[ReplicateRecord],
    expected_replicates: Option<usize>,
    k: Option<usize>,
) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Domain("no records to summarize".into()));
    }
    let mut order: Vec<usize> = Vec::new();
    for r in records {
        if !order.contains(&r.n) {
            order.push(r.n);
        }
    }
    let mut per_n = Vec::with_capacity(order.len());
    for &n in &order {
        let mut rates: Vec<f64> = records
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.misclassification)
            .collect();
        rates.sort_by(|a, b| a.total_cmp(b));
        let count = rates.len();
        let mean = rates.iter().sum::<f64>() / count as f64;
        per_n.push(SummaryRow {
            n,
            replicates: count,
            failures: expected_replicates.map_or(0, |e| e.saturating_sub(count)),
            median: quantile(&rates, 0.5),
            q1: quantile(&rates, 0.25),
            q3: quantile(&rates, 0.75),
            mean,
        });
    }
    Ok(Summary {
        worst_case_misclassification: k.map(|k| 1.0 - 1.0 / k as f64),
        per_n,
    })
}

impl Summary {
    pub fn to_json_string(&self) -> Result<String> {
        use serde_json::json;
        let per_n: Vec<_> = self
            .per_n
            .iter()
            .map(|row| {
                json!({
                    "n": row.n,
                    "replicates": row.replicates,
                    "failures": row.failures,
                    "median": row.median,
                    "q1": row.q1,
                    "q3": row.q3,
                    "mean": row.mean,
                })
            })
            .collect();
        let doc = json!({
            "worst_case_misclassification": self.worst_case_misclassification,
            "per_n": per_n,
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}
