//! Command-line front end: simulate networks, fit them, and run replicated
//! experiments.
//!
//! Exit codes: 0 on success, 2 when flags or configuration are invalid,
//! 3 when a run fails after setup.

use acsbm::clustering::ClusterMethod;
use acsbm::harness;
use acsbm::model::{validate_model, ModelSpec};
use acsbm::pipeline::{fit, FitOptions};
use acsbm::sampler::{
    read_network, sample_attributes, sample_network, write_attributes, write_edge_list,
};
use clap::{Parser, Subcommand};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "acsbm",
    about = "Community recovery in covariate-adjusted block models",
    version
)]
struct Cli {
    /// Size of the worker pool for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a network from a model and write edge/attribute files.
    Simulate {
        /// Model description (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Number of nodes.
        #[arg(long)]
        n: usize,
        /// Seed for attribute and edge sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for edges.txt and attributes.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover communities from an edge list and attribute table.
    Fit {
        /// Edge list file ("u v" per line, 0-indexed).
        #[arg(long)]
        edges: PathBuf,
        /// Attribute table (TSV: node, theta, z1..zM).
        #[arg(long)]
        attributes: PathBuf,
        /// Number of communities to recover (or take K from --config).
        #[arg(long)]
        k: Option<usize>,
        /// Optional model description; supplies K when --k is absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Embedding dimension override.
        #[arg(long)]
        d: Option<usize>,
        /// Clustering method.
        #[arg(long, default_value = "gmm", value_parser = parse_method)]
        method: ClusterMethod,
        /// Seed for clustering restarts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for fit.json (default: print to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replicated experiment over a grid of network sizes.
    Experiment {
        /// Experiment description (JSON): model, n_values, replicates, ...
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's clustering method.
        #[arg(long, value_parser = parse_method)]
        method: Option<ClusterMethod>,
        /// Output directory for results.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize an experiment CSV into per-size quantiles.
    Summarize {
        /// Results CSV produced by `experiment`.
        #[arg(long)]
        input: PathBuf,
        /// Community count; enables the worst-case reference rate.
        #[arg(long)]
        k: Option<usize>,
        /// Replicates attempted per size; enables failure counts.
        #[arg(long)]
        replicates: Option<usize>,
        /// Output directory for summary.json (default: print to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<ClusterMethod, String> {
    s.parse().map_err(|e: acsbm::Error| e.to_string())
}

struct Failure {
    code: i32,
    message: String,
}

/// Setup problems: bad flags, unreadable or invalid configuration/input.
fn setup<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })
}

/// Failures after setup: sampling, fitting, writing output.
fn runtime<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure {threads} worker threads: {e}");
            std::process::exit(3);
        }
    }
    if let Err(failure) = dispatch(cli.command) {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            config,
            n,
            seed,
            out,
        } => simulate(&config, n, seed, &out),
        Command::Fit {
            edges,
            attributes,
            k,
            config,
            d,
            method,
            seed,
            out,
        } => fit_files(&edges, &attributes, k, config.as_deref(), d, method, seed, out.as_deref()),
        Command::Experiment {
            config,
            seed,
            method,
            out,
        } => experiment(&config, seed, method, &out),
        Command::Summarize {
            input,
            k,
            replicates,
            out,
        } => summarize_csv(&input, k, replicates, out.as_deref()),
    }
}

/// Reads a model description: either a bare model JSON or an experiment
/// JSON, in which case the embedded model is taken.
fn load_model(path: &Path) -> Result<ModelSpec, Failure> {
    let text = setup(fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display())))?;
    match ModelSpec::from_json_str(&text) {
        Ok(spec) => Ok(spec),
        Err(model_err) => match harness::ExperimentConfig::from_json_str(&text) {
            Ok(cfg) => Ok(cfg.model),
            Err(_) => setup(Err(format!(
                "{}: not a model or experiment description: {model_err}",
                path.display()
            ))),
        },
    }
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<fs::File>, Failure> {
    runtime(fs::create_dir_all(dir))?;
    let path = dir.join(name);
    let file = runtime(fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn simulate(config: &Path, n: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    let spec = load_model(config)?;
    let report = setup(validate_model(&spec, n))?;
    if !report.out_of_range.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!(
                "model produces probabilities outside [0,1] at n = {n}: {}",
                report.messages.join("; ")
            ),
        });
    }
    for message in &report.messages {
        log::warn!("{message}");
    }
    let attrs = runtime(sample_attributes(&spec, n, seed))?;
    let net = runtime(sample_network(&spec, &attrs, acsbm::rng::child_seed(seed, &[1])))?;
    let mut edges = out_file(out, "edges.txt")?;
    runtime(write_edge_list(&net, &mut edges))?;
    runtime(edges.flush())?;
    let mut attrs_file = out_file(out, "attributes.tsv")?;
    runtime(write_attributes(
        &attrs.communities,
        &attrs.covariates,
        &mut attrs_file,
    ))?;
    runtime(attrs_file.flush())?;
    println!(
        "wrote {} nodes, {} edges to {}",
        net.n(),
        net.edge_count,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit_files(
    edges: &Path,
    attributes: &Path,
    k: Option<usize>,
    config: Option<&Path>,
    d: Option<usize>,
    method: ClusterMethod,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let k = match (k, config) {
        (Some(k), _) => k,
        (None, Some(path)) => load_model(path)?.k,
        (None, None) => {
            return Err(Failure {
                code: 2,
                message: "provide --k or --config to set the community count".into(),
            })
        }
    };
    let edge_file =
        setup(fs::File::open(edges).map_err(|e| format!("{}: {e}", edges.display())))?;
    let attr_file =
        setup(fs::File::open(attributes).map_err(|e| format!("{}: {e}", attributes.display())))?;
    let net = setup(read_network(
        BufReader::new(edge_file),
        BufReader::new(attr_file),
    ))?;
    let opts = FitOptions { k, d, method, seed };
    let result = runtime(fit(&net, &opts))?;
    for warning in &result.diagnostics.warnings {
        log::warn!("{warning}");
    }
    let json = runtime(result.to_json_string())?;
    match out {
        Some(dir) => {
            let mut file = out_file(dir, "fit.json")?;
            runtime(writeln!(file, "{json}"))?;
            runtime(file.flush())?;
            println!("wrote {}", dir.join("fit.json").display());
        }
        None => println!("{json}"),
    }
    if let Some(rate) = result.misclassification {
        log::info!("misclassification against provided labels: {rate:.4}");
    }
    Ok(())
}

fn experiment(
    config: &Path,
    seed: Option<u64>,
    method: Option<ClusterMethod>,
    out: &Path,
) -> Result<(), Failure> {
    let text = setup(fs::read_to_string(config).map_err(|e| format!("{}: {e}", config.display())))?;
    let mut cfg = setup(harness::ExperimentConfig::from_json_str(&text))?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(method) = method {
        cfg.method = method;
    }
    let outcome = runtime(harness::run_experiment(&cfg))?;
    let mut csv = out_file(out, "results.csv")?;
    runtime(harness::write_csv(&outcome.records, &mut csv))?;
    runtime(csv.flush())?;
    let summary = runtime(harness::summarize(
        &outcome.records,
        Some(cfg.replicates),
        Some(cfg.model.k),
    ))?;
    let mut summary_file = out_file(out, "summary.json")?;
    runtime(writeln!(summary_file, "{}", runtime(summary.to_json_string())?))?;
    runtime(summary_file.flush())?;
    for row in &summary.per_n {
        println!(
            "n={}: median {:.4}, IQR [{:.4}, {:.4}] over {} replicates ({} failed)",
            row.n, row.median, row.q1, row.q3, row.replicates, row.failures
        );
    }
    if !outcome.failures.is_empty() {
        log::warn!("{} replicates failed; see the log above", outcome.failures.len());
    }
    println!(
        "wrote {} and {}",
        out.join("results.csv").display(),
        out.join("summary.json").display()
    );
    Ok(())
}

fn summarize_csv(
    input: &Path,
    k: Option<usize>,
    replicates: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let file = setup(fs::File::open(input).map_err(|e| format!("{}: {e}", input.display())))?;
    let records = setup(harness::read_csv(BufReader::new(file)))?;
    let summary = setup(harness::summarize(&records, replicates, k))?;
    let json = runtime(summary.to_json_string())?;
    match out {
        Some(dir) => {
            let mut file = out_file(dir, "summary.json")?;
            runtime(writeln!(file, "{json}"))?;
            runtime(file.flush())?;
            println!("wrote {}", dir.join("summary.json").display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
