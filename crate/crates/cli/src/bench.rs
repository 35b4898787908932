//! Benchmark sweeps: the full generate → mask → fit → evaluate pipeline for
//! every (cell, seed, method) in the grid, run in parallel, resumable, and
//! aggregated into plot-ready tables.
//!
//! Each run persists its own `result.json`; a rerun loads existing results
//! instead of recomputing them, so interrupted sweeps pick up where they
//! stopped and re-aggregation is a pure function of the stored artifacts
//! (identical bytes out for identical inputs).

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use alvgl::metrics::{evaluate, CSV_HEADER};
use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::pipeline::{discover, generate_cell, learn_mask, CellSpec};

/// Everything one pipeline run leaves behind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: String,
    pub method: String,
    pub d: usize,
    pub degree: f64,
    pub n: usize,
    pub noise: String,
    pub graph: String,
    pub latents: usize,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Wall-clock of the DAG fit alone.
    pub fit_seconds: f64,
    /// Wall-clock of super-structure learning, reported separately so the
    /// mask's share of the total cost stays visible. Zero for unmasked runs.
    pub superstructure_seconds: f64,
    pub mask_edges: Option<usize>,
    pub decomposition_converged: Option<bool>,
    pub outer_iters: usize,
    pub h_final: f64,
}

#[derive(Debug, Serialize)]
struct FailureRecord {
    cell: String,
    method: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct Summary {
    master_seed: u64,
    methods: Vec<String>,
    runs_total: usize,
    runs_failed: usize,
    runs_resumed: usize,
    failures: Vec<FailureRecord>,
    aggregate_csv: String,
    runs_csv: String,
}

pub struct BenchOutcome {
    pub failed: usize,
}

struct Planned {
    spec: CellSpec,
    method: Method,
    dir: PathBuf,
}

enum ExecResult {
    Fresh(RunRecord),
    Resumed(RunRecord),
    Failed(FailureRecord),
}

pub fn run_bench(cfg: &RunConfig) -> Result<BenchOutcome> {
    let root = cfg.out.join("bench");
    fs::create_dir_all(root.join("cells"))
        .with_context(|| format!("creating {}", root.display()))?;

    let planned = plan(cfg, &root);
    let total = planned.len();
    let done = AtomicUsize::new(0);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;
    let results: Vec<ExecResult> = pool.install(|| {
        planned
            .par_iter()
            .map(|p| {
                let r = execute(p, cfg);
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                match &r {
                    ExecResult::Fresh(rec) => eprintln!(
                        "[{k}/{total}] {} {}: f1 {:.3}, fit {:.2}s",
                        rec.cell, rec.method, rec.f1, rec.fit_seconds
                    ),
                    ExecResult::Resumed(rec) => {
                        eprintln!("[{k}/{total}] {} {}: resumed", rec.cell, rec.method)
                    }
                    ExecResult::Failed(f) => {
                        eprintln!("[{k}/{total}] {} {}: FAILED: {}", f.cell, f.method, f.error)
                    }
                }
                r
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut resumed = 0;
    for r in results {
        match r {
            ExecResult::Fresh(rec) => records.push(rec),
            ExecResult::Resumed(rec) => {
                resumed += 1;
                records.push(rec);
            }
            ExecResult::Failed(f) => failures.push(f),
        }
    }

    let aggregate = aggregate_rows(&records);
    let mut agg_csv = String::from(
        "method,d,degree,n,noise,graph,latents,seeds,f1_mean,f1_std,seconds_mean,seconds_std\n",
    );
    for row in &aggregate {
        agg_csv.push_str(row);
        agg_csv.push('\n');
    }
    fs::write(root.join("aggregate.csv"), &agg_csv)?;

    let mut runs_csv = String::from(CSV_HEADER);
    runs_csv.push('\n');
    for rec in &records {
        runs_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            rec.method,
            rec.d,
            rec.degree,
            rec.n,
            rec.noise,
            rec.seed,
            rec.precision,
            rec.recall,
            rec.f1,
            rec.fit_seconds
        ));
    }
    fs::write(root.join("runs.csv"), &runs_csv)?;

    let summary = Summary {
        master_seed: cfg.seed,
        methods: cfg.methods.iter().map(|m| m.to_string()).collect(),
        runs_total: total,
        runs_failed: failures.len(),
        runs_resumed: resumed,
        failures,
        aggregate_csv: "aggregate.csv".into(),
        runs_csv: "runs.csv".into(),
    };
    fs::write(
        root.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary encoding cannot fail"),
    )?;

    println!(
        "bench complete: {} runs ({} resumed, {} failed); tables in {}",
        total,
        resumed,
        summary.runs_failed,
        root.display()
    );
    Ok(BenchOutcome {
        failed: summary.runs_failed,
    })
}

/// The grid × seeds × methods, in a fixed nested order so output files and
/// aggregate rows are stable across runs.
fn plan(cfg: &RunConfig, root: &std::path::Path) -> Vec<Planned> {
    let mut out = Vec::new();
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
                                for &method in &cfg.methods {
                                    let dir =
                                        root.join("cells").join(spec.id()).join(method.to_string());
                                    out.push(Planned { spec, method, dir });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn execute(p: &Planned, cfg: &RunConfig) -> ExecResult {
    let result_path = p.dir.join("result.json");
    if let Ok(text) = fs::read_to_string(&result_path) {
        if let Ok(rec) = serde_json::from_str::<RunRecord>(&text) {
            return ExecResult::Resumed(rec);
        }
    }
    match compute(p, cfg) {
        Ok(rec) => {
            let failed_write = fs::create_dir_all(&p.dir).is_err()
                || fs::write(
                    &result_path,
                    serde_json::to_string_pretty(&rec).expect("record encoding cannot fail"),
                )
                .is_err();
            if failed_write {
                return ExecResult::Failed(FailureRecord {
                    cell: p.spec.id(),
                    method: p.method.to_string(),
                    error: format!("could not persist {}", result_path.display()),
                });
            }
            ExecResult::Fresh(rec)
        }
        Err(e) => {
            let failure = FailureRecord {
                cell: p.spec.id(),
                method: p.method.to_string(),
                error: format!("{e:#}"),
            };
            if fs::create_dir_all(&p.dir).is_ok() {
                let _ = fs::write(
                    p.dir.join("error.json"),
                    serde_json::to_string_pretty(&failure).expect("encoding cannot fail"),
                );
            }
            ExecResult::Failed(failure)
        }
    }
}

fn compute(p: &Planned, cfg: &RunConfig) -> Result<RunRecord> {
    let (data, truth) = generate_cell(&p.spec, cfg.seed)?;
    let (mask, ss_seconds, mask_edges, converged) = match p.method {
        Method::None => (None, 0.0, None, None),
        m => {
            let t0 = Instant::now();
            let (mask, dec) = learn_mask(&data, m, &cfg.admm, cfg.tau_edge)?;
            let secs = t0.elapsed().as_secs_f64();
            let edges = mask.edge_count();
            (Some(mask), secs, Some(edges), Some(dec.converged))
        }
    };
    let result = discover(&data, mask.as_ref(), &cfg.dcd)?;
    let mut report = evaluate(&result.graph.adjacency(), &truth, cfg.eval_mode)?;
    report.seconds = result.seconds;
    Ok(RunRecord {
        cell: p.spec.id(),
        method: p.method.to_string(),
        d: p.spec.d,
        degree: p.spec.degree,
        n: p.spec.n,
        noise: p.spec.noise.name().to_string(),
        graph: p.spec.graph.to_string(),
        latents: p.spec.latents,
        seed: p.spec.seed,
        precision: report.precision,
        recall: report.recall,
        f1: report.f1,
        fit_seconds: result.seconds,
        superstructure_seconds: ss_seconds,
        mask_edges,
        decomposition_converged: converged,
        outer_iters: result.outer_iters,
        h_final: result.h_final,
    })
}

/// Mean ± sample standard deviation of F1 and fit seconds per cell (seeds
/// pooled), keyed by everything except the seed, in first-appearance order.
fn aggregate_rows(records: &[RunRecord]) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(f64, f64)>> = HashMap::new();
    for rec in records {
        let key = format!(
            "{},{},{},{},{},{},{}",
            rec.method, rec.d, rec.degree, rec.n, rec.noise, rec.graph, rec.latents
        );
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups
            .entry(key)
            .or_default()
            .push((rec.f1, rec.fit_seconds));
    }
    order
        .into_iter()
        .map(|key| {
            let vals = &groups[&key];
            let (f1_mean, f1_std) = mean_std(vals.iter().map(|v| v.0));
            let (sec_mean, sec_std) = mean_std(vals.iter().map(|v| v.1));
            format!(
                "{key},{},{},{},{},{}",
                vals.len(),
                f1_mean,
                f1_std,
                sec_mean,
                sec_std
            )
        })
        .collect()
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (mean, var.sqrt())
}
