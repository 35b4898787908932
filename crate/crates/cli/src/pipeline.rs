//! Shared pipeline stages: synthetic-cell generation, mask learning, and the
//! masked fit. Both the single-shot commands and the benchmark sweep build
//! on these.

use alvgl::admm::{solve, AdmmConfig, PrecisionDecomposition};
use alvgl::dcd::{fit, DcdConfig, DiscoveryResult};
use alvgl::graphs::{gen_bp, gen_er, gen_sf, marginalize_latents, Dag, GroundTruth};
use alvgl::nalgebra::DMatrix;
use alvgl::scm::{
    assign_weights, empirical_covariance, inject_latents, sample, Dataset, NoiseFamily, NoiseSpec,
};
use alvgl::seed::{derive, derive_indexed, Stream};
use alvgl::superstructure::SuperStructure;
use anyhow::{bail, Context, Result};

use crate::config::{GraphKind, Method};

/// Edge-weight band for synthetic models: magnitudes drawn from
/// ±[0.5, 2.0], matching the generator's conventions.
pub const WEIGHT_LOW: f64 = 0.5;
pub const WEIGHT_HIGH: f64 = 2.0;

/// One point of the experiment grid.
#[derive(Debug, Clone, Copy)]
pub struct CellSpec {
    pub d: usize,
    pub degree: f64,
    pub n: usize,
    pub noise: NoiseFamily,
    pub graph: GraphKind,
    pub latents: usize,
    pub seed: u64,
}

impl CellSpec {
    /// Stable directory-name encoding of the cell.
    pub fn id(&self) -> String {
        format!(
            "d{}_deg{}_n{}_{}_{}_l{}_s{}",
            self.d,
            self.degree,
            self.n,
            self.noise.name(),
            self.graph,
            self.latents,
            self.seed
        )
    }
}

/// Samples the cell's dataset and ground truth. Each randomized stage gets
/// its own derived stream, all rooted at (master seed, cell seed), so every
/// artifact is reproducible bit for bit.
pub fn generate_cell(spec: &CellSpec, master: u64) -> Result<(Dataset, GroundTruth)> {
    let cell = derive_indexed(master, Stream::BenchCell, spec.seed);
    let g_seed = derive(cell, Stream::GraphTopology);
    let w_seed = derive(cell, Stream::EdgeWeights);
    let lw_seed = derive(cell, Stream::LatentWiring);
    let n_seed = derive(cell, Stream::Noise);

    let dag = match spec.graph {
        GraphKind::Er => gen_er(spec.d, spec.degree, g_seed)?,
        GraphKind::Sf => gen_sf(spec.d, (spec.degree.round() as usize).max(1), g_seed)?,
        GraphKind::Bp => gen_bp(spec.d, 0.5, spec.degree, g_seed)?,
    };
    let b = assign_weights(&dag, WEIGHT_LOW, WEIGHT_HIGH, w_seed)?;
    let observed: Vec<usize> = (0..spec.d).collect();

    if spec.latents == 0 {
        let noise = NoiseSpec::unit(spec.noise, spec.d);
        let data = sample(&b, &noise, spec.n, &observed, n_seed)?;
        Ok((data, GroundTruth::from_dag(&dag)))
    } else {
        let (b_full, observed) = inject_latents(&b, spec.latents, 2, lw_seed)?;
        let d_full = b_full.node_count();
        let noise = NoiseSpec::unit(spec.noise, d_full);
        let data = sample(&b_full, &noise, spec.n, &observed, n_seed)?;
        let full_dag = dag_from_support(b_full.matrix())?;
        let truth = marginalize_latents(&full_dag, &observed)?;
        Ok((data, truth))
    }
}

fn dag_from_support(b: &DMatrix<f64>) -> Result<Dag> {
    let d = b.nrows();
    let mut edges = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if b[(i, j)] != 0.0 {
                edges.push((i, j));
            }
        }
    }
    Ok(Dag::new(d, edges)?)
}

/// Decomposes the empirical precision matrix and thresholds it into a mask.
/// The full method combines |S| + |L|; the sparse-only ablations threshold
/// |S| alone (their L is either pinned to zero or deliberately ignored).
pub fn learn_mask(
    data: &Dataset,
    method: Method,
    admm: &AdmmConfig,
    tau_edge: f64,
) -> Result<(SuperStructure, PrecisionDecomposition)> {
    let Some(mode) = method.solver_mode() else {
        bail!("method 'none' runs unmasked; no super-structure to learn");
    };
    let cov = empirical_covariance(data, true)?;
    let cfg = AdmmConfig {
        mode,
        ..admm.clone()
    };
    let dec = solve(&cov, &cfg).context("precision-matrix decomposition failed")?;
    let mask = match method {
        Method::Alvgl => SuperStructure::from_decomposition(&dec, tau_edge),
        Method::Glasso | Method::Lvgl => {
            let mut sparse_only = dec.clone();
            sparse_only.l.fill(0.0);
            SuperStructure::from_decomposition(&sparse_only, tau_edge)
        }
        Method::None => unreachable!("handled above"),
    };
    Ok((mask, dec))
}

/// Runs the DAG fit with an optional mask; wall-clock for the fit alone is
/// recorded inside the result.
pub fn discover(
    data: &Dataset,
    mask: Option<&SuperStructure>,
    dcd: &DcdConfig,
) -> Result<DiscoveryResult> {
    Ok(fit(data, mask, dcd)?)
}
