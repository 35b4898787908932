//! Run configuration: a JSON config file plus command-line overrides, where
//! flags always win. Sweeps need files; quick runs need flags.

use std::fmt;
use std::path::{Path, PathBuf};

use alvgl::admm::{AdmmConfig, SolverMode};
use alvgl::dcd::DcdConfig;
use alvgl::metrics::EvalMode;
use alvgl::scm::NoiseFamily;
use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crate::CommonOpts;

/// Which pipeline produces the mask ahead of the DAG fit. `None` runs the
/// fit unmasked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Alvgl,
    Glasso,
    Lvgl,
    None,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "alvgl" => Ok(Method::Alvgl),
            "glasso" => Ok(Method::Glasso),
            "lvgl" => Ok(Method::Lvgl),
            "none" => Ok(Method::None),
            other => bail!("unknown method '{other}' (expected alvgl, glasso, lvgl, or none)"),
        }
    }

    pub fn solver_mode(self) -> Option<SolverMode> {
        match self {
            Method::Alvgl => Some(SolverMode::Alvgl),
            Method::Glasso => Some(SolverMode::Glasso),
            Method::Lvgl => Some(SolverMode::Lvgl),
            Method::None => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Alvgl => "alvgl",
            Method::Glasso => "glasso",
            Method::Lvgl => "lvgl",
            Method::None => "none",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GraphKind {
    Er,
    Sf,
    Bp,
}

impl GraphKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "er" => Ok(GraphKind::Er),
            "sf" => Ok(GraphKind::Sf),
            "bp" => Ok(GraphKind::Bp),
            other => bail!("unknown graph type '{other}' (expected er, sf, or bp)"),
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Er => "er",
            GraphKind::Sf => "sf",
            GraphKind::Bp => "bp",
        })
    }
}

/// Experiment grid: the cartesian product of every list, run once per seed.
#[derive(Debug, Clone)]
pub struct Grid {
    pub d: Vec<usize>,
    pub degree: Vec<f64>,
    pub n: Vec<usize>,
    pub noise: Vec<NoiseFamily>,
    pub graph: Vec<GraphKind>,
    pub latents: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.d.is_empty()
            || self.degree.is_empty()
            || self.n.is_empty()
            || self.noise.is_empty()
            || self.graph.is_empty()
            || self.latents.is_empty()
            || self.seeds.is_empty()
        {
            bail!("grid has an empty dimension; every list needs at least one entry");
        }
        let mut seen = std::collections::BTreeSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                bail!("grid seeds must be distinct (seed {s} repeats)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGrid {
    d: Option<Vec<usize>>,
    degree: Option<Vec<f64>>,
    n: Option<Vec<usize>>,
    noise: Option<Vec<String>>,
    graph: Option<Vec<String>>,
    latents: Option<Vec<usize>>,
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAdmm {
    lambda_s: Option<f64>,
    lambda_l: Option<f64>,
    tau_rank: Option<f64>,
    max_iters: Option<usize>,
    mu0: Option<f64>,
    eps_primal: Option<f64>,
    eps_dual: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDcd {
    lambda1: Option<f64>,
    rho0: Option<f64>,
    omega: Option<f64>,
    h_tol: Option<f64>,
    max_outer: Option<usize>,
    inner_max_iters: Option<usize>,
    grad_tol: Option<f64>,
}

/// On-disk shape of `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    out: Option<PathBuf>,
    seed: Option<u64>,
    method: Option<String>,
    methods: Option<Vec<String>>,
    grid: Option<FileGrid>,
    admm: Option<FileAdmm>,
    dcd: Option<FileDcd>,
    tau_edge: Option<f64>,
    workers: Option<usize>,
    eval_mode: Option<String>,
}

/// Fully merged settings every command runs from.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub method: Method,
    /// Methods a bench sweep compares; defaults to masked-vs-unmasked.
    pub methods: Vec<Method>,
    pub grid: Grid,
    pub admm: AdmmConfig,
    pub tau_edge: f64,
    pub dcd: DcdConfig,
    pub workers: usize,
    pub eval_mode: EvalMode,
    /// Raw `--max-iters`; commands apply it to the loop they own (the
    /// decomposition's iteration cap or the DAG fit's outer cap).
    pub max_iters_flag: Option<usize>,
}

impl RunConfig {
    /// Loads the optional config file and layers the flags on top.
    pub fn resolve(opts: &CommonOpts) -> Result<RunConfig> {
        let file: FileConfig = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))?
            }
            None => FileConfig::default(),
        };

        let method = match (&opts.method, &file.method) {
            (Some(m), _) => *m,
            (None, Some(s)) => Method::parse(s)?,
            (None, None) => Method::Alvgl,
        };
        let methods = match &file.methods {
            Some(list) if !list.is_empty() => list
                .iter()
                .map(|s| Method::parse(s))
                .collect::<Result<Vec<_>>>()?,
            _ => match opts.method {
                Some(m) => vec![m],
                None => vec![Method::Alvgl, Method::None],
            },
        };

        let fg = file.grid.unwrap_or_default();
        let noise = match (&opts.noise, fg.noise) {
            (Some(n), _) => vec![(*n).into()],
            (None, Some(list)) => list
                .iter()
                .map(|s| NoiseFamily::parse(s).map_err(anyhow::Error::from))
                .collect::<Result<Vec<_>>>()?,
            (None, None) => vec![NoiseFamily::Gaussian],
        };
        let graph = match (&opts.graph, fg.graph) {
            (Some(g), _) => vec![*g],
            (None, Some(list)) => list
                .iter()
                .map(|s| GraphKind::parse(s))
                .collect::<Result<Vec<_>>>()?,
            (None, None) => vec![GraphKind::Er],
        };
        let seed = opts.seed.or(file.seed).unwrap_or(1);
        let grid = Grid {
            d: opts.d.map(|v| vec![v]).or(fg.d).unwrap_or_else(|| vec![20]),
            degree: opts
                .degree
                .map(|v| vec![v])
                .or(fg.degree)
                .unwrap_or_else(|| vec![1.0]),
            n: opts
                .n
                .map(|v| vec![v])
                .or(fg.n)
                .unwrap_or_else(|| vec![1000]),
            noise,
            graph,
            latents: opts
                .latents
                .map(|v| vec![v])
                .or(fg.latents)
                .unwrap_or_else(|| vec![0]),
            seeds: fg.seeds.unwrap_or_else(|| vec![seed]),
        };
        grid.validate()?;

        let fa = file.admm.unwrap_or_default();
        let mut admm = AdmmConfig::default();
        admm.lambda_s = opts.lambda_s.or(fa.lambda_s).unwrap_or(admm.lambda_s);
        admm.lambda_l = opts.lambda_l.or(fa.lambda_l).unwrap_or(admm.lambda_l);
        admm.tau_rank = opts.tau_rank.or(fa.tau_rank).unwrap_or(admm.tau_rank);
        admm.max_iters = fa.max_iters.unwrap_or(admm.max_iters);
        admm.mu0 = fa.mu0.unwrap_or(admm.mu0);
        admm.eps_primal = fa.eps_primal.unwrap_or(admm.eps_primal);
        admm.eps_dual = fa.eps_dual.unwrap_or(admm.eps_dual);

        let fd = file.dcd.unwrap_or_default();
        let mut dcd = DcdConfig::default();
        dcd.lambda1 = fd.lambda1.map(Some).unwrap_or(dcd.lambda1);
        dcd.rho0 = fd.rho0.unwrap_or(dcd.rho0);
        dcd.omega = fd.omega.unwrap_or(dcd.omega);
        dcd.h_tol = fd.h_tol.unwrap_or(dcd.h_tol);
        dcd.max_outer = fd.max_outer.unwrap_or(dcd.max_outer);
        dcd.inner_max_iters = fd.inner_max_iters.unwrap_or(dcd.inner_max_iters);
        dcd.grad_tol = fd.grad_tol.unwrap_or(dcd.grad_tol);

        let eval_mode = match file.eval_mode.as_deref() {
            None | Some("directed") => EvalMode::Directed,
            Some("skeleton") => EvalMode::Skeleton,
            Some(other) => bail!("unknown eval_mode '{other}' (expected directed or skeleton)"),
        };

        let workers = opts
            .workers
            .or(file.workers)
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|p| p.get())
                    .unwrap_or(1)
            })
            .max(1);

        Ok(RunConfig {
            out: opts
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("runs")),
            seed,
            method,
            methods,
            grid,
            admm,
            tau_edge: opts.tau_edge.or(file.tau_edge).unwrap_or(1e-6),
            dcd,
            workers,
            eval_mode,
            max_iters_flag: opts.max_iters,
        })
    }

    pub fn ensure_out(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output directory {}", self.out.display()))?;
        Ok(&self.out)
    }
}
