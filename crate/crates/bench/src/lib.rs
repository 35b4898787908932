//! Shared fixtures for the benchmark targets: deterministic synthetic
//! problems at the sizes the solvers are meant for.

use alvgl::admm::{solve, AdmmConfig, SolverMode};
use alvgl::graphs::gen_er;
use alvgl::scm::{
    assign_weights, empirical_covariance, sample, CovarianceEstimate, Dataset, NoiseFamily,
    NoiseSpec,
};
use alvgl::superstructure::SuperStructure;

/// Gaussian linear-SCM sample over an ER graph with expected degree 1.
pub fn linear_problem(d: usize, n: usize, seed: u64) -> Dataset {
    let dag = gen_er(d, 1.0, seed).expect("graph");
    let b = assign_weights(&dag, 0.5, 2.0, seed + 100).expect("weights");
    let noise = NoiseSpec::unit(NoiseFamily::Gaussian, d);
    let observed: Vec<usize> = (0..d).collect();
    sample(&b, &noise, n, &observed, seed + 200).expect("sample")
}

pub fn covariance(data: &Dataset) -> CovarianceEstimate {
    empirical_covariance(data, true).expect("covariance")
}

/// Decomposition configuration used for the masked-fit comparisons.
pub fn mask_config() -> AdmmConfig {
    AdmmConfig {
        lambda_s: 0.05,
        lambda_l: 1.0,
        mode: SolverMode::Alvgl,
        ..AdmmConfig::default()
    }
}

/// Learns the edge mask the way the pipeline does before a masked fit.
pub fn learn_mask(data: &Dataset, tau_edge: f64) -> SuperStructure {
    let dec = solve(&covariance(data), &mask_config()).expect("decomposition");
    SuperStructure::from_decomposition(&dec, tau_edge)
}
