//! Release gate: twelve checks covering the acyclicity machinery, the ADMM
//! decomposition, super-structure quality, end-to-end discovery, efficiency,
//! and reproducibility. Each check prints a single verdict line
//! (`criterion NN: PASS/FAIL (...)`) — run with `--nocapture` to watch them.
//!
//! The checks share one lock so wall-clock comparisons are never skewed by a
//! sibling test hogging cores.

use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::Instant;

use alvgl::admm::{
    estimate_rank, l_update, soft_threshold, solve, AdmmConfig, PrecisionDecomposition, SolverMode,
};
use alvgl::dcd::{fit, h_dag, score, DcdConfig};
use alvgl::graphs::{gen_er, is_acyclic, marginalize_latents, moralize, Dag, GroundTruth};
use alvgl::metrics::{evaluate, EvalMode};
use alvgl::nalgebra::DMatrix;
use alvgl::scm::{
    assign_weights, empirical_covariance, inject_latents, sample, CovarianceEstimate, Dataset,
    NoiseFamily, NoiseSpec,
};
use alvgl::superstructure::SuperStructure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static GATE: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, pass: bool, detail: &str) {
    println!(
        "criterion {id:02}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id:02} failed: {detail}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Linear-SCM cell: ER graph, weights in ±[0.5, 2], unit noise, all nodes
/// observed.
fn linear_cell(d: usize, n: usize, noise: NoiseFamily, seed: u64) -> (Dag, Dataset) {
    let dag = gen_er(d, 1.0, seed).expect("graph");
    let b = assign_weights(&dag, 0.5, 2.0, seed + 100).expect("weights");
    let spec = NoiseSpec::unit(noise, d);
    let observed: Vec<usize> = (0..d).collect();
    let data = sample(&b, &spec, n, &observed, seed + 200).expect("sample");
    (dag, data)
}

/// Mask-learning configuration used for the d≥20 recovery and efficiency
/// cells: heavier nuclear penalty keeps the low-rank part out of the way on
/// latent-free data, and the 0.02 threshold trims decomposition noise.
fn recovery_mask_config() -> AdmmConfig {
    AdmmConfig {
        lambda_s: 0.05,
        lambda_l: 1.0,
        mode: SolverMode::Alvgl,
        ..AdmmConfig::default()
    }
}

fn learn_mask(
    data: &Dataset,
    cfg: &AdmmConfig,
    tau_edge: f64,
) -> (SuperStructure, PrecisionDecomposition) {
    let cov = empirical_covariance(data, true).expect("covariance");
    let dec = solve(&cov, cfg).expect("decomposition");
    (SuperStructure::from_decomposition(&dec, tau_edge), dec)
}

fn dag_from_support(b: &DMatrix<f64>) -> Dag {
    let d = b.nrows();
    let mut edges = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if b[(i, j)] != 0.0 {
                edges.push((i, j));
            }
        }
    }
    Dag::new(d, edges).expect("support is acyclic")
}

fn undirected_pairs(adj: &DMatrix<f64>) -> BTreeSet<(usize, usize)> {
    let d = adj.nrows();
    let mut set = BTreeSet::new();
    for i in 0..d {
        for j in (i + 1)..d {
            if adj[(i, j)] != 0.0 || adj[(j, i)] != 0.0 {
                set.insert((i, j));
            }
        }
    }
    set
}

#[test]
fn criterion_01_acyclicity_oracle_equivalence() {
    let _lock = serial();
    let start = Instant::now();
    let mut agree = 0usize;
    for bits in 0..512u32 {
        let mut w = DMatrix::zeros(3, 3);
        for k in 0..9 {
            if bits >> k & 1 == 1 {
                let (i, j) = (k / 3, k % 3);
                if i != j {
                    w[(i, j)] = 1.0;
                }
            }
        }
        let smooth_acyclic = h_dag(&w).expect("no overflow at d=3").0 < 1e-8;
        if smooth_acyclic == is_acyclic(&w) {
            agree += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        1,
        agree == 512 && elapsed < 1.0,
        &format!("agreement {agree}/512 binary 3x3 matrices, {elapsed:.3}s"),
    );
}

#[test]
fn criterion_02_gradient_finite_difference_checks() {
    let _lock = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let d = 6;
    let mut worst_h = 0.0f64;
    let mut worst_s = 0.0f64;
    for _ in 0..20 {
        let w = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                0.0
            } else {
                rng.gen_range(-0.9..0.9)
            }
        });
        let (_, grad_h) = h_dag(&w).expect("bounded entries");
        let x = DMatrix::from_fn(120, d, |_, _| rng.gen_range(-1.0..1.0));
        let data = Dataset::from_matrix(x).expect("data");
        let (_, grad_s) = score(&w, &data, 0.0);

        let eps = 1e-6;
        let mut fd_h = DMatrix::zeros(d, d);
        let mut fd_s = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[(i, j)] += eps;
                wm[(i, j)] -= eps;
                fd_h[(i, j)] =
                    (h_dag(&wp).expect("ok").0 - h_dag(&wm).expect("ok").0) / (2.0 * eps);
                fd_s[(i, j)] = (score(&wp, &data, 0.0).0 - score(&wm, &data, 0.0).0) / (2.0 * eps);
            }
        }
        worst_h = worst_h.max((&fd_h - &grad_h).norm() / grad_h.norm().max(1e-12));
        worst_s = worst_s.max((&fd_s - &grad_s).norm() / grad_s.norm().max(1e-12));
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        2,
        worst_h < 1e-5 && worst_s < 1e-5 && elapsed < 10.0,
        &format!(
            "20 instances at d=6: max rel err {worst_h:.2e} (constraint), {worst_s:.2e} (score), {elapsed:.2}s"
        ),
    );
}

#[test]
fn criterion_03_decomposition_unit_identities() {
    let _lock = serial();
    let tol = 1e-10;
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let m = DMatrix::from_row_slice(2, 2, &[2.0, -0.3, -0.3, 2.0]);
    checks.push((
        "soft zero threshold is identity",
        soft_threshold(&m, 0.0) == m,
    ));
    let shrunk = soft_threshold(&m, 0.5);
    let want = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 1.5]);
    checks.push((
        "soft 0.5 on [[2,-.3],[-.3,2]]",
        (shrunk - want).abs().max() <= tol,
    ));
    let z = DMatrix::<f64>::zeros(3, 3);
    checks.push(("soft of zero matrix", soft_threshold(&z, 0.7) == z));

    let cov = |sigma: DMatrix<f64>| CovarianceEstimate {
        sigma,
        n: 100,
        centered: true,
    };
    let spread = cov(DMatrix::from_diagonal(
        &[4.0, 1.0, 0.01].iter().copied().collect::<Vec<_>>().into(),
    ));
    checks.push((
        "rank of diag(4,1,.01) at 0.1",
        estimate_rank(&spread, 0.1).expect("finite") == 2,
    ));
    let eye = cov(DMatrix::identity(5, 5));
    checks.push((
        "rank of identity below 1",
        estimate_rank(&eye, 0.5).expect("finite") == 5,
    ));
    let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
    let outer = cov(&v * v.transpose());
    checks.push((
        "rank of outer product",
        estimate_rank(&outer, 0.5).expect("finite") == 1,
    ));

    let l0 = l_update(&DMatrix::zeros(2, 2), 0.5, 1.0, 2).expect("ok");
    checks.push(("shrink of zero residual", l0.abs().max() <= tol));
    let l1 = l_update(
        &DMatrix::from_diagonal(&[3.0, 1.0].iter().copied().collect::<Vec<_>>().into()),
        0.5,
        1.0,
        1,
    )
    .expect("ok");
    let want1 = DMatrix::from_row_slice(2, 2, &[2.5, 0.0, 0.0, 0.0]);
    checks.push((
        "rank-1 shrink of diag(3,1)",
        (l1 - want1).abs().max() <= tol,
    ));
    let l2 = l_update(
        &DMatrix::from_diagonal(&[-3.0, 1.0].iter().copied().collect::<Vec<_>>().into()),
        0.5,
        1.0,
        2,
    )
    .expect("ok");
    let want2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.5]);
    checks.push(("negative eigenvalue clamp", (l2 - want2).abs().max() <= tol));

    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    verdict(
        3,
        failed.is_empty(),
        &format!(
            "{}/{} closed-form identities exact{}",
            checks.len() - failed.len(),
            checks.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {failed:?}")
            }
        ),
    );
}

#[test]
fn criterion_04_decomposition_of_identity_covariance() {
    let _lock = serial();
    let start = Instant::now();
    let d = 20;
    let cov = CovarianceEstimate {
        sigma: DMatrix::identity(d, d),
        n: 1000,
        centered: true,
    };
    let cfg = AdmmConfig::default();
    let out = solve(&cov, &cfg).expect("solve");
    let target = 1.0 / (1.0 + cfg.lambda_s);
    let mut max_err = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let want = if i == j { target } else { 0.0 };
            max_err = max_err.max((out.s[(i, j)] - want).abs());
        }
    }
    let l_norm = out.l.norm();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        4,
        out.converged
            && out.primal_residual <= 1e-4
            && max_err <= 1e-2
            && l_norm <= 1e-3
            && elapsed < 5.0,
        &format!(
            "converged={} in {} iters, primal {:.1e}, max |S - {:.4}I| = {max_err:.1e}, ||L||_F {l_norm:.1e}, {elapsed:.2}s",
            out.converged, out.iterations, out.primal_residual, target
        ),
    );
}

#[test]
fn criterion_05_superstructure_recall_at_d50() {
    let _lock = serial();
    let start = Instant::now();
    let mut recalls = Vec::new();
    for seed in 0..10 {
        let (dag, data) = linear_cell(50, 1000, NoiseFamily::Gaussian, seed);
        let (mask, _) = learn_mask(&data, &recovery_mask_config(), 0.02);
        let v = mask
            .validate(&GroundTruth::from_dag(&dag))
            .expect("validate");
        recalls.push(v.recall);
    }
    let m = mean(&recalls);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        5,
        m >= 0.95 && elapsed < 120.0,
        &format!("mean recall {m:.4} over 10 seeds (d=50, n=1000), {elapsed:.1}s"),
    );
}

#[test]
fn criterion_06_latent_containment() {
    let _lock = serial();
    let start = Instant::now();
    let mut contained = 0usize;
    let mut worst: f64 = 1.0;
    for seed in 0..10u64 {
        let s = 200 + seed;
        let dag = gen_er(15, 1.0, s).expect("graph");
        let b = assign_weights(&dag, 0.5, 2.0, s).expect("weights");
        let (b_full, observed) = inject_latents(&b, 2, 3, s).expect("latents");
        let spec = NoiseSpec::unit(NoiseFamily::Gaussian, 17);
        let data = sample(&b_full, &spec, 2000, &observed, s).expect("sample");
        let truth = marginalize_latents(&dag_from_support(b_full.matrix()), &observed)
            .expect("marginal truth");
        let (mask, _) = learn_mask(&data, &AdmmConfig::default(), 1e-6);
        let v = mask.validate(&truth).expect("validate");
        worst = worst.min(v.recall);
        if v.recall >= 0.9 {
            contained += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        6,
        contained >= 8 && elapsed < 60.0,
        &format!(
            "containment >= 0.9 on {contained}/10 seeds (worst {worst:.3}), d=15 with 2 latents, {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_07_mask_matches_moralized_graph() {
    let _lock = serial();
    let start = Instant::now();
    let cfg = AdmmConfig {
        lambda_s: 0.01,
        lambda_l: 1.0,
        mode: SolverMode::Alvgl,
        ..AdmmConfig::default()
    };
    let mut detail = String::new();
    let mut all_ok = true;
    for seed in 100..103u64 {
        let dag = gen_er(15, 1.0, seed).expect("graph");
        let b = assign_weights(&dag, 0.5, 2.0, seed).expect("weights");
        let spec = NoiseSpec::unit(NoiseFamily::Gaussian, 15);
        let observed: Vec<usize> = (0..15).collect();
        let data = sample(&b, &spec, 100_000, &observed, seed).expect("sample");
        let (mask, _) = learn_mask(&data, &cfg, 0.05);
        let moral = undirected_pairs(&moralize(&dag));
        let got = mask.pairs();
        let symdiff = moral.symmetric_difference(&got).count();
        all_ok &= symdiff as f64 <= 0.10 * moral.len() as f64;
        detail.push_str(&format!(
            "seed {seed}: symdiff {symdiff}/{} moral edges; ",
            moral.len()
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    detail.push_str(&format!("{elapsed:.1}s"));
    verdict(7, all_ok && elapsed < 60.0, &detail);
}

#[test]
fn criterion_08_end_to_end_recovery_quality() {
    let _lock = serial();
    let start = Instant::now();
    let mut f1_masked = Vec::new();
    let mut f1_full = Vec::new();
    for seed in 0..5 {
        let (dag, data) = linear_cell(20, 1000, NoiseFamily::Gaussian, seed);
        let truth = GroundTruth::from_dag(&dag);
        let (mask, _) = learn_mask(&data, &recovery_mask_config(), 0.02);
        let masked = fit(&data, Some(&mask), &DcdConfig::default()).expect("masked fit");
        let full = fit(&data, None, &DcdConfig::default()).expect("full fit");
        f1_masked.push(
            evaluate(&masked.graph.adjacency(), &truth, EvalMode::Directed)
                .expect("eval")
                .f1,
        );
        f1_full.push(
            evaluate(&full.graph.adjacency(), &truth, EvalMode::Directed)
                .expect("eval")
                .f1,
        );
    }
    let (mm, mf) = (mean(&f1_masked), mean(&f1_full));
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        8,
        mm >= 0.85 && mm >= mf - 0.05 && elapsed < 300.0,
        &format!(
            "masked F1 {mm:.3} vs unmasked {mf:.3} over 5 seeds (d=20, n=1000), {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_09_masked_fit_is_not_slower() {
    let _lock = serial();
    let start = Instant::now();
    let mut t_masked = Vec::new();
    let mut t_full = Vec::new();
    for seed in 0..5 {
        let (_, data) = linear_cell(50, 1000, NoiseFamily::Gaussian, seed);
        let (mask, _) = learn_mask(&data, &recovery_mask_config(), 0.02);
        let masked = fit(&data, Some(&mask), &DcdConfig::default()).expect("masked fit");
        let full = fit(&data, None, &DcdConfig::default()).expect("full fit");
        t_masked.push(masked.seconds);
        t_full.push(full.seconds);
    }
    let (med_m, med_f) = (median(&t_masked), median(&t_full));
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        9,
        med_m <= med_f && elapsed < 900.0,
        &format!(
            "median fit wall-clock masked {med_m:.2}s vs unmasked {med_f:.2}s over 5 seeds (d=50), total {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_10_mask_stays_sparse() {
    let _lock = serial();
    let d = 50;
    let cap = (0.2 * (d * (d - 1)) as f64 / 2.0) as usize;
    let mut max_edges = 0usize;
    for seed in 0..10 {
        let (_, data) = linear_cell(d, 1000, NoiseFamily::Gaussian, seed);
        let (mask, _) = learn_mask(&data, &recovery_mask_config(), 0.02);
        max_edges = max_edges.max(mask.edge_count());
    }
    verdict(
        10,
        max_edges <= cap,
        &format!("largest mask {max_edges} edges vs cap {cap} over 10 seeds (d=50)"),
    );
}

#[test]
fn criterion_11_bench_aggregate_is_reproducible() {
    let _lock = serial();
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = tmp.path().join("bench.json");
    std::fs::write(
        &config,
        r#"{
  "seed": 33,
  "methods": ["alvgl", "none"],
  "grid": {
    "d": [10], "degree": [1.0], "n": [400], "noise": ["gaussian"],
    "graph": ["er"], "latents": [0], "seeds": [0, 1]
  },
  "tau_edge": 0.02,
  "admm": { "lambda_s": 0.05, "lambda_l": 1.0 }
}"#,
    )
    .expect("write config");
    let out = tmp.path().join("runs");
    let run = || {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_alvgl"))
            .args([
                "bench",
                "--config",
                config.to_str().expect("utf8"),
                "--out",
                out.to_str().expect("utf8"),
                "--workers",
                "2",
            ])
            .output()
            .expect("spawn bench");
        assert!(
            status.status.success(),
            "bench failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        std::fs::read(out.join("bench").join("aggregate.csv")).expect("aggregate")
    };
    let first = run();
    let second = run();
    verdict(
        11,
        first == second,
        &format!(
            "aggregate CSV identical across two runs: {} ({} bytes)",
            first == second,
            first.len()
        ),
    );
}

#[test]
fn criterion_12_non_gaussian_noise_smoke() {
    let _lock = serial();
    let start = Instant::now();
    let mut detail = String::new();
    let mut all_ok = true;
    for family in [
        NoiseFamily::Uniform,
        NoiseFamily::Exponential,
        NoiseFamily::Gumbel,
    ] {
        let mut t_masked = Vec::new();
        let mut t_full = Vec::new();
        for seed in 0..3 {
            let (_, data) = linear_cell(30, 1000, family, seed);
            let (mask, _) = learn_mask(&data, &recovery_mask_config(), 0.02);
            let masked = fit(&data, Some(&mask), &DcdConfig::default()).expect("masked fit");
            let full = fit(&data, None, &DcdConfig::default()).expect("full fit");
            t_masked.push(masked.seconds);
            t_full.push(full.seconds);
        }
        let (med_m, med_f) = (median(&t_masked), median(&t_full));
        all_ok &= med_m <= med_f;
        detail.push_str(&format!(
            "{}: masked {med_m:.2}s vs {med_f:.2}s; ",
            family.name()
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    detail.push_str(&format!("{elapsed:.1}s"));
    verdict(12, all_ok, &detail);
}
