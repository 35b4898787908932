//! Linear SCM parameterization, latent injection, sampling and covariance
//! estimation.
//!
//! The model is `X = B^T X + N` over a DAG support: weights are drawn
//! uniformly from a signed magnitude band, latent confounders enter as extra
//! source nodes, and samples are produced by forward substitution in
//! topological order. Non-Gaussian noise families are standardized to mean 0
//! and the requested per-node scale so the covariance-based stages downstream
//! see comparably scaled inputs.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gumbel, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::graphs::{is_acyclic, Dag};
use crate::seed;
use crate::{Error, Result};

/// Default signed magnitude band for edge weights.
pub const WEIGHT_LOW: f64 = 0.5;
pub const WEIGHT_HIGH: f64 = 2.0;

/// Directed edge coefficients: `b[(i, j)]` is the weight of `i -> j`
/// (column `j` collects the parents of node `j`). Zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    b: DMatrix<f64>,
}

impl WeightedAdjacency {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != b.ncols() {
            return Err(Error::Parameter("adjacency must be square".into()));
        }
        if (0..b.nrows()).any(|i| b[(i, i)] != 0.0) {
            return Err(Error::Contract("adjacency diagonal must be zero".into()));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract("adjacency entries must be finite".into()));
        }
        Ok(WeightedAdjacency { b })
    }

    pub fn zeros(d: usize) -> Self {
        WeightedAdjacency {
            b: DMatrix::zeros(d, d),
        }
    }

    pub fn node_count(&self) -> usize {
        self.b.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// 0/1 support pattern.
    pub fn support(&self) -> DMatrix<f64> {
        self.b.map(|x| if x != 0.0 { 1.0 } else { 0.0 })
    }
}

/// Noise distribution family for the SCM disturbances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Exponential,
    Gumbel,
    Uniform,
}

impl NoiseFamily {
    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Exponential => "exponential",
            NoiseFamily::Gumbel => "gumbel",
            NoiseFamily::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "exponential" => Ok(NoiseFamily::Exponential),
            "gumbel" => Ok(NoiseFamily::Gumbel),
            "uniform" => Ok(NoiseFamily::Uniform),
            other => Err(Error::Parameter(format!("unknown noise family '{other}'"))),
        }
    }
}

/// Per-node noise specification; every scale must be strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub scales: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, scales: Vec<f64>) -> Result<Self> {
        if scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Parameter(
                "noise scales must be strictly positive".into(),
            ));
        }
        Ok(NoiseSpec { family, scales })
    }

    /// Homogeneous unit-scale noise, the benchmark default.
    pub fn unit(family: NoiseFamily, d: usize) -> Self {
        NoiseSpec {
            family,
            scales: vec![1.0; d],
        }
    }
}

/// An `n × d` sample matrix plus generation metadata. Loaded external data
/// has neither seed nor noise spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    seed: Option<u64>,
    noise: Option<NoiseSpec>,
}

impl Dataset {
    pub fn from_matrix(x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::Parameter("dataset needs at least 2 rows".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("dataset entries must be finite".into()));
        }
        Ok(Dataset {
            x,
            seed: None,
            noise: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn noise(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref()
    }

    /// Writes CSV with a `x0,x1,...` header row; float formatting is the
    /// shortest round-trip representation, so files are byte-reproducible.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..self.d()).map(|j| format!("x{j}")).collect();
        w.write_record(&header)?;
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.d()).map(|j| self.x[(i, j)].to_string()).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads CSV, auto-detecting an optional header row (a first row that
    /// does not parse as numbers is treated as a header).
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width: Option<usize> = None;
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(vals) => {
                    if let Some(w) = width {
                        if vals.len() != w {
                            return Err(Error::Parse(format!(
                                "row {idx} has {} fields, expected {w}",
                                vals.len()
                            )));
                        }
                    } else {
                        width = Some(vals.len());
                    }
                    rows.push(vals);
                }
                Err(_) if idx == 0 => continue, // header row
                Err(e) => return Err(Error::Parse(format!("row {idx}: {e}"))),
            }
        }
        let d = width.ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let n = rows.len();
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Dataset::from_matrix(x)
    }
}

/// Symmetric covariance estimate with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma: DMatrix<f64>,
    pub n: usize,
    pub centered: bool,
}

impl CovarianceEstimate {
    pub fn d(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        save_matrix_csv(&self.sigma, path)
    }
}

/// Writes a dense matrix as a plain d×d CSV (no header).
pub fn save_matrix_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dense numeric CSV (no header) as a matrix.
pub fn load_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse(format!("row {idx}: {e}")))?;
        if let Some(first) = rows.first() {
            if vals.len() != first.len() {
                return Err(Error::Parse(format!("ragged row {idx}")));
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix file".into()));
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Draws a weight for every edge of `dag`, uniform over `±[low, high]`.
pub fn assign_weights(dag: &Dag, low: f64, high: f64, seed: u64) -> Result<WeightedAdjacency> {
    if !(0.0 < low && low < high) {
        return Err(Error::Parameter("weight range needs 0 < low < high".into()));
    }
    let mut rng = seed::rng(seed);
    let d = dag.node_count();
    let mut b = DMatrix::zeros(d, d);
    for &(i, j) in dag.edges() {
        let magnitude = rng.gen_range(low..high);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        b[(i, j)] = sign * magnitude;
    }
    Ok(WeightedAdjacency { b })
}

/// Appends `l` latent source nodes, each pointing at `children_per_latent`
/// distinct observed children with weights from the default `±[0.5, 2.0]`
/// band. Returns the extended adjacency and the observed index set
/// (always the first `d` indices).
pub fn inject_latents(
    b: &WeightedAdjacency,
    l: usize,
    children_per_latent: usize,
    seed: u64,
) -> Result<(WeightedAdjacency, Vec<usize>)> {
    let d = b.node_count();
    let observed: Vec<usize> = (0..d).collect();
    if l == 0 {
        return Ok((b.clone(), observed));
    }
    if children_per_latent < 2 {
        return Err(Error::Parameter("children_per_latent must be >= 2".into()));
    }
    if children_per_latent > d {
        return Err(Error::Parameter(format!(
            "children_per_latent {children_per_latent} exceeds d={d}"
        )));
    }
    let mut rng = seed::rng(seed);
    let full_d = d + l;
    let mut full = DMatrix::zeros(full_d, full_d);
    full.view_mut((0, 0), (d, d)).copy_from(b.matrix());
    for latent in d..full_d {
        let mut children: Vec<usize> =
            rand::seq::index::sample(&mut rng, d, children_per_latent).into_vec();
        children.sort_unstable();
        for child in children {
            let magnitude = rng.gen_range(WEIGHT_LOW..WEIGHT_HIGH);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            full[(latent, child)] = sign * magnitude;
        }
    }
    Ok((WeightedAdjacency { b: full }, observed))
}

fn euler_gamma() -> f64 {
    0.577_215_664_901_532_9
}

/// One column of standardized noise: mean 0, standard deviation `scale`.
fn draw_noise_column(
    family: NoiseFamily,
    scale: f64,
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<f64> {
    match family {
        NoiseFamily::Gaussian => {
            let dist = Normal::new(0.0, scale).expect("positive scale");
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        NoiseFamily::Exponential => {
            // Exp(1) has mean 1 and standard deviation 1.
            let dist = Exp::new(1.0).expect("positive rate");
            (0..n).map(|_| scale * (dist.sample(rng) - 1.0)).collect()
        }
        NoiseFamily::Gumbel => {
            // Gumbel(0, 1) has mean γ and standard deviation π/√6.
            let dist = Gumbel::new(0.0, 1.0).expect("positive scale");
            let std = std::f64::consts::PI / 6f64.sqrt();
            (0..n)
                .map(|_| scale * (dist.sample(rng) - euler_gamma()) / std)
                .collect()
        }
        NoiseFamily::Uniform => {
            // U(-a, a) has standard deviation a/√3.
            let a = scale * 3f64.sqrt();
            (0..n).map(|_| rng.gen_range(-a..a)).collect()
        }
    }
}

/// Samples `n` rows of `X = B^T X + N` by forward substitution in topological
/// order and returns the observed columns.
pub fn sample(
    b_full: &WeightedAdjacency,
    noise: &NoiseSpec,
    n: usize,
    observed: &[usize],
    seed_value: u64,
) -> Result<Dataset> {
    let d_full = b_full.node_count();
    if n < 2 {
        return Err(Error::Parameter("sample needs n >= 2".into()));
    }
    if noise.scales.len() != d_full {
        return Err(Error::Parameter(format!(
            "noise spec covers {} nodes, adjacency has {d_full}",
            noise.scales.len()
        )));
    }
    if observed.windows(2).any(|w| w[0] >= w[1]) || observed.iter().any(|&v| v >= d_full) {
        return Err(Error::Parameter(
            "observed set must be strictly increasing and in range".into(),
        ));
    }
    if !is_acyclic(&b_full.support()) {
        return Err(Error::Contract("adjacency support contains a cycle".into()));
    }

    let mut rng = seed::rng(seed_value);
    // Noise drawn column-by-column in node order, independent of topology, so
    // reweighting a fixed graph keeps the same disturbances.
    let mut x = DMatrix::<f64>::zeros(n, d_full);
    for j in 0..d_full {
        let col = draw_noise_column(noise.family, noise.scales[j], n, &mut rng);
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }

    let order = topological_order(b_full)?;
    let b = b_full.matrix();
    for &j in &order {
        for i in 0..d_full {
            let w = b[(i, j)];
            if w != 0.0 {
                // X[:, j] += w * X[:, i]; parents precede j in `order`.
                for row in 0..n {
                    x[(row, j)] += w * x[(row, i)];
                }
            }
        }
    }

    let x_obs = DMatrix::from_fn(n, observed.len(), |i, k| x[(i, observed[k])]);
    if x_obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "sampled data contains non-finite values".into(),
        ));
    }
    Ok(Dataset {
        x: x_obs,
        seed: Some(seed_value),
        noise: Some(noise.clone()),
    })
}

fn topological_order(b: &WeightedAdjacency) -> Result<Vec<usize>> {
    let d = b.node_count();
    let m = b.matrix();
    let mut indeg = vec![0usize; d];
    for j in 0..d {
        for i in 0..d {
            if m[(i, j)] != 0.0 {
                indeg[j] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = (0..d).filter(|&j| indeg[j] == 0).collect();
    let mut order = Vec::with_capacity(d);
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        order.push(v);
        for j in 0..d {
            if m[(v, j)] != 0.0 {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    queue.push(j);
                }
            }
        }
    }
    if order.len() != d {
        return Err(Error::Contract("adjacency support contains a cycle".into()));
    }
    Ok(order)
}

/// `Σ̂ = (1/n) Xᶜᵀ Xᶜ` with optional column centering (the default).
pub fn empirical_covariance(data: &Dataset, center: bool) -> Result<CovarianceEstimate> {
    let n = data.n();
    if n < 2 {
        return Err(Error::Parameter("covariance needs n >= 2".into()));
    }
    let d = data.d();
    let x = data.x();
    let mut xc = x.clone();
    if center {
        for j in 0..d {
            let mean = x.column(j).sum() / n as f64;
            for i in 0..n {
                xc[(i, j)] -= mean;
            }
        }
    }
    let mut sigma = xc.transpose() * &xc / n as f64;
    // Force exact symmetry against round-off.
    sigma = crate::linalg::sym_part(&sigma);
    Ok(CovarianceEstimate {
        sigma,
        n,
        centered: center,
    })
}
