//! Command-line front end: dataset generation, super-structure learning,
//! masked discovery, evaluation, and benchmark sweeps.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 solver failure,
//! 3 benchmark completed with per-cell failures.

mod bench;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use alvgl::graphs::{Dag, GroundTruth};
use alvgl::metrics::{evaluate, EvalMode, CSV_HEADER};
use alvgl::scm::{Dataset, NoiseFamily};
use alvgl::superstructure::SuperStructure;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{GraphKind, Method, RunConfig};
use pipeline::{discover, generate_cell, learn_mask, CellSpec};

#[derive(Parser)]
#[command(
    name = "alvgl",
    version,
    about = "Super-structure-guided causal discovery: decompose the precision matrix, \
             mask the search space, fit a DAG"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Values given here override the config
/// file.
#[derive(Args, Debug, Clone, Default)]
struct CommonOpts {
    /// JSON config file; flags override its values
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default "runs")
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Mask method; "none" fits without a mask
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Number of observed variables
    #[arg(long)]
    d: Option<usize>,
    /// Expected node degree of the sampled graph
    #[arg(long)]
    degree: Option<f64>,
    /// Sample size
    #[arg(long)]
    n: Option<usize>,
    /// Noise family
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    /// Graph family
    #[arg(long, value_enum)]
    graph: Option<GraphKind>,
    /// Number of latent confounders
    #[arg(long)]
    latents: Option<usize>,
    /// Sparse penalty of the decomposition
    #[arg(long)]
    lambda_s: Option<f64>,
    /// Low-rank penalty of the decomposition
    #[arg(long)]
    lambda_l: Option<f64>,
    /// Mask threshold on |S| + |L|
    #[arg(long)]
    tau_edge: Option<f64>,
    /// Eigenvalue cutoff fraction for the rank estimate
    #[arg(long)]
    tau_rank: Option<f64>,
    /// Iteration cap (decomposition iterations, or outer iterations of the
    /// DAG fit for `discover`)
    #[arg(long)]
    max_iters: Option<usize>,
    /// Parallel workers for bench sweeps
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum NoiseArg {
    Gaussian,
    Exponential,
    Gumbel,
    Uniform,
}

impl From<NoiseArg> for NoiseFamily {
    fn from(a: NoiseArg) -> NoiseFamily {
        match a {
            NoiseArg::Gaussian => NoiseFamily::Gaussian,
            NoiseArg::Exponential => NoiseFamily::Exponential,
            NoiseArg::Gumbel => NoiseFamily::Gumbel,
            NoiseArg::Uniform => NoiseFamily::Uniform,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample synthetic datasets and ground truths onto disk
    Generate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Learn an edge mask from data by precision-matrix decomposition
    Superstructure {
        /// Dataset CSV
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Ground-truth JSON; adds a validation section to the diagnostics
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Fit a DAG to data, restricted to a mask unless given "full"
    Discover {
        /// Dataset CSV
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Mask file (CSV or JSON), or "full" for an unrestricted fit
        #[arg(long, default_value = "full")]
        mask: String,
        /// ℓ1 weight of the fit (default 0.1·√(log d / n))
        #[arg(long)]
        lambda1: Option<f64>,
        /// Final edge-weight threshold
        #[arg(long)]
        omega: Option<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Score a discovered graph against ground truth
    Evaluate {
        /// Predicted graph JSON
        #[arg(long, value_name = "PATH")]
        pred: PathBuf,
        /// Ground-truth JSON
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        /// Comparison mode
        #[arg(long, value_enum, default_value = "directed")]
        mode: ModeArg,
        /// Append a metrics row to this CSV (created with a header if new)
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        /// Wall-clock seconds to record alongside the scores
        #[arg(long, default_value_t = 0.0)]
        seconds: f64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the benchmark grid: generate → mask → fit → evaluate per cell
    Bench {
        #[command(flatten)]
        common: CommonOpts,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Directed,
    Skeleton,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> EvalMode {
        match m {
            ModeArg::Directed => EvalMode::Directed,
            ModeArg::Skeleton => EvalMode::Skeleton,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}

/// 2 for solver/numeric failures, 1 for everything the user can fix.
fn classify(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<alvgl::Error>() {
            match core {
                alvgl::Error::Solver(_) | alvgl::Error::Numeric(_) => return 2,
                _ => return 1,
            }
        }
    }
    1
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = RunConfig::resolve(&common)?;
            cmd_generate(&cfg)?;
            Ok(0)
        }
        Command::Superstructure {
            data,
            truth,
            common,
        } => {
            let mut cfg = RunConfig::resolve(&common)?;
            if let Some(iters) = cfg.max_iters_flag {
                cfg.admm.max_iters = iters;
            }
            cmd_superstructure(&cfg, &data, truth.as_deref())?;
            Ok(0)
        }
        Command::Discover {
            data,
            mask,
            lambda1,
            omega,
            common,
        } => {
            let mut cfg = RunConfig::resolve(&common)?;
            if let Some(iters) = cfg.max_iters_flag {
                cfg.dcd.max_outer = iters;
            }
            if lambda1.is_some() {
                cfg.dcd.lambda1 = lambda1;
            }
            if let Some(w) = omega {
                cfg.dcd.omega = w;
            }
            cmd_discover(&cfg, &data, &mask)?;
            Ok(0)
        }
        Command::Evaluate {
            pred,
            truth,
            mode,
            csv,
            seconds,
            common,
        } => {
            let cfg = RunConfig::resolve(&common)?;
            cmd_evaluate(&cfg, &pred, &truth, mode.into(), csv.as_deref(), seconds)?;
            Ok(0)
        }
        Command::Bench { common } => {
            let cfg = RunConfig::resolve(&common)?;
            let outcome = bench::run_bench(&cfg)?;
            Ok(if outcome.failed > 0 { 3 } else { 0 })
        }
    }
}

#[derive(serde::Serialize)]
struct ManifestCell {
    id: String,
    d: usize,
    degree: f64,
    n: usize,
    noise: String,
    graph: String,
    latents: usize,
    seed: u64,
    dataset: String,
    truth: String,
}

#[derive(serde::Serialize)]
struct Manifest {
    master_seed: u64,
    cells: Vec<ManifestCell>,
}

fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.ensure_out()?;
    let data_root = out.join("data");
    std::fs::create_dir_all(&data_root)?;
    let mut cells = Vec::new();
    for &d in &cfg.grid.d {
        for &degree in &cfg.grid.degree {
            for &n in &cfg.grid.n {
                for &noise in &cfg.grid.noise {
                    for &graph in &cfg.grid.graph {
                        for &latents in &cfg.grid.latents {
                            for &seed in &cfg.grid.seeds {
                                let spec = CellSpec {
                                    d,
                                    degree,
                                    n,
                                    noise,
                                    graph,
                                    latents,
                                    seed,
                                };
                                let (data, truth) = generate_cell(&spec, cfg.seed)?;
                                let dir = data_root.join(spec.id());
                                std::fs::create_dir_all(&dir)?;
                                let dataset_path = dir.join("dataset.csv");
                                let truth_path = dir.join("truth.json");
                                data.save_csv(&dataset_path)?;
                                truth.save(&truth_path)?;
                                cells.push(ManifestCell {
                                    id: spec.id(),
                                    d,
                                    degree,
                                    n,
                                    noise: noise.name().to_string(),
                                    graph: graph.to_string(),
                                    latents,
                                    seed,
                                    dataset: dataset_path.to_string_lossy().into_owned(),
                                    truth: truth_path.to_string_lossy().into_owned(),
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    let count = cells.len();
    let manifest = Manifest {
        master_seed: cfg.seed,
        cells,
    };
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest encoding cannot fail"),
    )?;
    println!("wrote {count} dataset(s) under {}", data_root.display());
    Ok(())
}

fn cmd_superstructure(
    cfg: &RunConfig,
    data_path: &std::path::Path,
    truth_path: Option<&std::path::Path>,
) -> Result<()> {
    if cfg.method == Method::None {
        bail!("method 'none' learns no super-structure; pick alvgl, glasso, or lvgl");
    }
    let data = Dataset::load_csv(data_path)
        .with_context(|| format!("loading dataset {}", data_path.display()))?;
    let (mask, dec) = learn_mask(&data, cfg.method, &cfg.admm, cfg.tau_edge)?;
    let out = cfg.ensure_out()?;
    mask.save_csv(&out.join("mask.csv"))?;
    mask.save_json(&out.join("mask.json"))?;

    let mut diagnostics = serde_json::json!({
        "method": cfg.method.to_string(),
        "tau_edge": cfg.tau_edge,
        "edge_count": mask.edge_count(),
        "solver": serde_json::from_str::<serde_json::Value>(&dec.diagnostics_json())?,
    });
    if let Some(tp) = truth_path {
        let truth = GroundTruth::load(tp)
            .with_context(|| format!("loading ground truth {}", tp.display()))?;
        let v = mask.validate(&truth)?;
        diagnostics["validation"] = serde_json::json!({
            "recall": v.recall,
            "precision_vs_moralized": v.precision_vs_moralized,
            "edge_count": v.edge_count,
        });
    }
    std::fs::write(
        out.join("diagnostics.json"),
        serde_json::to_string_pretty(&diagnostics).expect("diagnostics encoding cannot fail"),
    )?;
    println!(
        "mask: {} edges at tau_edge {} (decomposition {} in {} iterations); files in {}",
        mask.edge_count(),
        cfg.tau_edge,
        if dec.converged {
            "converged"
        } else {
            "hit the iteration cap"
        },
        dec.iterations,
        out.display()
    );
    Ok(())
}

fn cmd_discover(cfg: &RunConfig, data_path: &std::path::Path, mask_arg: &str) -> Result<()> {
    let data = Dataset::load_csv(data_path)
        .with_context(|| format!("loading dataset {}", data_path.display()))?;
    let mask = if mask_arg == "full" {
        None
    } else {
        Some(
            SuperStructure::load(std::path::Path::new(mask_arg))
                .with_context(|| format!("loading mask {mask_arg}"))?,
        )
    };
    let result = discover(&data, mask.as_ref(), &cfg.dcd)?;
    let out = cfg.ensure_out()?;
    result.save_json(&out.join("result.json"))?;
    result.save_w_hat_csv(&out.join("w_hat.csv"))?;
    result.save_graph_json(&out.join("graph.json"))?;
    println!(
        "fit: {} edges, h = {:.3e}, objective = {:.6}, {:.2}s over {} outer iterations; files in {}",
        result.graph.edge_count(),
        result.h_final,
        result.objective,
        result.seconds,
        result.outer_iters,
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(
    cfg: &RunConfig,
    pred_path: &std::path::Path,
    truth_path: &std::path::Path,
    mode: EvalMode,
    csv: Option<&std::path::Path>,
    seconds: f64,
) -> Result<()> {
    let pred = Dag::load(pred_path)
        .with_context(|| format!("loading predicted graph {}", pred_path.display()))?;
    let truth = GroundTruth::load(truth_path)
        .with_context(|| format!("loading ground truth {}", truth_path.display()))?;
    let mut report = evaluate(&pred.adjacency(), &truth, mode)?;
    report.seconds = seconds;
    println!("{}", report.to_json_string());
    if let Some(csv_path) = csv {
        let spec_seed = cfg.grid.seeds.first().copied().unwrap_or(cfg.seed);
        let noise = cfg
            .grid
            .noise
            .first()
            .map(|n| n.name())
            .unwrap_or("gaussian");
        let row = report.csv_row(
            &cfg.method.to_string(),
            truth.node_count(),
            cfg.grid.degree.first().copied().unwrap_or(0.0),
            cfg.grid.n.first().copied().unwrap_or(0),
            noise,
            spec_seed,
        );
        if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        let mut content = if csv_path.exists() {
            std::fs::read_to_string(csv_path)
                .with_context(|| format!("reading {}", csv_path.display()))?
        } else {
            format!("{CSV_HEADER}\n")
        };
        content.push_str(&row);
        content.push('\n');
        std::fs::write(csv_path, content)
            .with_context(|| format!("writing {}", csv_path.display()))?;
    }
    Ok(())
}
