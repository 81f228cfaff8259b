//! End-to-end acceptance checks. Each test prints one `criterion N: PASS`
//! line when its gate holds; heavy artifacts (the calibration runs, the
//! phase grids) are computed once and shared through lazy statics.

use rpca::metrics::{psnr, rel_error, ssim, SsimParams};
use rpca::numerics::{shrink, shrink_scalar, singular_values, svt, DenseMatrix};
use rpca::phase::{run_phase, PhaseConfig, PhaseGrid};
use rpca::rng::{fill_gaussian, mix_seed, rng_from};
use rpca::solver::{
    default_lambda, make_problem, solve, solve_pcp, Model, PcpSolver, SolveReport, Solver,
    SolverConfig,
};
use rpca::synth::{
    gen_features, gen_instance, gen_low_rank, gen_mask, gen_side_info_with_variance,
    gen_sparse_errors, InstanceParams, SignMode,
};
use rand::Rng;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::LazyLock;

const EPSILON: f64 = 1e-7;

fn ones(n1: usize, n2: usize) -> DenseMatrix {
    DenseMatrix::ones(n1, n2)
}

fn rel_fro(a: &DenseMatrix, b: &DenseMatrix, denom: &DenseMatrix) -> f64 {
    a.sub(b).fro_norm() / denom.fro_norm().max(1e-300)
}

// ---------------------------------------------------------------------
// Criterion 1 + 6: the 200x200 calibration instance, solved by all four
// models.

struct Calibration {
    l0: DenseMatrix,
    runs: Vec<(Model, SolveReport)>,
}

static CALIBRATION: LazyLock<Calibration> = LazyLock::new(|| {
    let params = InstanceParams {
        side_noise: Some(0.0), // S = L0 exactly
        ..InstanceParams::default()
    };
    let inst = gen_instance(&params, 42).unwrap();
    // Exact singular-vector features, no null-space padding.
    let (u, v) = gen_features(&inst.l0, 0, 42).unwrap();
    let lambda = default_lambda(200, 200);
    let config = SolverConfig::default();
    let w = || ones(200, 200);

    let problems = [
        (
            Model::Pcp,
            make_problem(inst.x.clone(), w(), None, None, None, 0.0, lambda).unwrap(),
        ),
        (
            Model::Pcpsm,
            make_problem(inst.x.clone(), w(), Some(inst.s.clone()), None, None, 0.2, lambda)
                .unwrap(),
        ),
        (
            Model::Pcpf,
            make_problem(
                inst.x.clone(),
                w(),
                None,
                Some(u.clone()),
                Some(v.clone()),
                0.0,
                lambda,
            )
            .unwrap(),
        ),
        (
            Model::Pcpsfm,
            make_problem(
                inst.x.clone(),
                w(),
                Some(inst.s.clone()),
                Some(u),
                Some(v),
                0.2,
                lambda,
            )
            .unwrap(),
        ),
    ];
    let runs = problems
        .into_iter()
        .map(|(model, p)| {
            assert_eq!(p.model, model);
            (model, solve(p, config).unwrap())
        })
        .collect();
    Calibration { l0: inst.l0, runs }
});

#[test]
fn criterion_1_calibration() {
    let cal = &CALIBRATION;
    for (model, report) in &cal.runs {
        assert!(report.converged, "{model} did not converge");
        assert!(report.iterations <= 1000);
        let rank = report.l.rank().unwrap();
        assert_eq!(rank, 10, "{model}: recovered rank {rank}");
        let nnz = report.e.count(|v| v.abs() > 1e-4);
        let sparsity = nnz as f64 / 40_000.0;
        assert!(
            (sparsity - 0.05).abs() <= 0.005,
            "{model}: E sparsity {sparsity}"
        );
        let err = rel_error(&report.l, &cal.l0).unwrap();
        assert!(err <= 1e-5, "{model}: rel_error {err}");
    }
    println!("criterion 1 (calibration reproduction): PASS");
}

// ---------------------------------------------------------------------
// Criterion 2 + 6: reduction equivalence against the dedicated PCP path.

struct ReductionOutcome {
    max_iterate_gap: f64,
    general: SolveReport,
    dedicated: SolveReport,
}

static REDUCTIONS: LazyLock<Vec<ReductionOutcome>> = LazyLock::new(|| {
    let config = SolverConfig::default();
    (0..20)
        .map(|k| {
            let seed = mix_seed(900, &[k]);
            let params = InstanceParams {
                n1: 60,
                n2: 60,
                rank: 3,
                density: 0.1,
                feature_margin: 5,
                ..InstanceParams::default()
            };
            let inst = gen_instance(&params, seed).unwrap();
            let lambda = default_lambda(60, 60);

            let problem =
                make_problem(inst.x.clone(), ones(60, 60), None, None, None, 0.0, lambda)
                    .unwrap();
            let mut general = Solver::new(problem, config).unwrap();
            let mut dedicated =
                PcpSolver::new(inst.x.clone(), ones(60, 60), lambda, config).unwrap();

            let mut max_gap: f64 = 0.0;
            loop {
                let done_g = general.step().unwrap();
                let done_d = dedicated.step().unwrap();
                // Identity feature semantics make H the low-rank iterate.
                let gap_l = rel_fro(&general.state().h, &dedicated.l, &inst.x);
                let gap_e = rel_fro(&general.state().e, &dedicated.e, &inst.x);
                max_gap = max_gap.max(gap_l).max(gap_e);
                assert_eq!(done_g, done_d, "instance {k}: convergence flags diverged");
                if done_g || general.state().iter >= config.max_iter {
                    break;
                }
            }

            // Independent full runs feed the KKT criterion.
            let problem =
                make_problem(inst.x.clone(), ones(60, 60), None, None, None, 0.0, lambda)
                    .unwrap();
            let general = solve(problem, config).unwrap();
            let dedicated = solve_pcp(inst.x.clone(), ones(60, 60), lambda, config).unwrap();
            ReductionOutcome {
                max_iterate_gap: max_gap,
                general,
                dedicated,
            }
        })
        .collect()
});

#[test]
fn criterion_2_reduction_equivalence() {
    for (k, outcome) in REDUCTIONS.iter().enumerate() {
        assert!(
            outcome.max_iterate_gap <= 1e-8,
            "instance {k}: iterate gap {}",
            outcome.max_iterate_gap
        );
        assert_eq!(outcome.general.model, Model::Pcp);
        let gap = rel_fro(&outcome.general.l, &outcome.dedicated.l, &outcome.dedicated.l);
        assert!(gap <= 1e-8, "instance {k}: final L gap {gap}");
    }
    println!("criterion 2 (reduction equivalence): PASS");
}

// ---------------------------------------------------------------------
// Criterion 3 + 6: tiny instances against a slow proximal-gradient oracle
// on the penalty reformulation min ||L||* + lambda ||E||_1
// + (c/2) ||X - L - E||_F^2 with continuation in c.

fn penalty_oracle(x: &DenseMatrix, lambda: f64) -> (DenseMatrix, DenseMatrix) {
    let (n1, n2) = x.shape();
    let mut l = DenseMatrix::zeros(n1, n2);
    let mut e = DenseMatrix::zeros(n1, n2);
    // 5 stages x 200k iterations = 1e6 total, warm-started.
    for c in [1e2, 1e3, 1e4, 1e5, 1e6] {
        let step = 1.0 / (2.0 * c);
        let mut yl = l.clone();
        let mut ye = e.clone();
        let mut t = 1.0f64;
        for _ in 0..200_000 {
            let grad = yl.add(&ye).sub(x).scale(c);
            let l_new = svt(&yl.sub(&grad.scale(step)), step).unwrap();
            let e_new = shrink(&ye.sub(&grad.scale(step)), step * lambda);
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let gamma = (t - 1.0) / t_new;
            yl = l_new.add(&l_new.sub(&l).scale(gamma));
            ye = e_new.add(&e_new.sub(&e).scale(gamma));
            l = l_new;
            e = e_new;
            t = t_new;
        }
    }
    (l, e)
}

struct OracleOutcome {
    gap_l: f64,
    gap_e: f64,
    admm: SolveReport,
}

static ORACLE: LazyLock<Vec<OracleOutcome>> = LazyLock::new(|| {
    (0..5)
        .map(|k| {
            let seed = mix_seed(700, &[k]);
            let (l0, _, _) = gen_low_rank(10, 10, 1, 1.0, mix_seed(seed, &[1])).unwrap();
            let e0 = gen_sparse_errors(10, 10, 0.03, SignMode::RandomSign, None, mix_seed(seed, &[2]))
                .unwrap();
            assert_eq!(e0.count(|v| v != 0.0), 3);
            let x = l0.add(&e0);
            let lambda = default_lambda(10, 10);

            let admm = solve_pcp(x.clone(), ones(10, 10), lambda, SolverConfig::default())
                .unwrap();
            let (l_oracle, e_oracle) = penalty_oracle(&x, lambda);
            OracleOutcome {
                gap_l: rel_fro(&admm.l, &l_oracle, &admm.l),
                gap_e: rel_fro(&admm.e, &e_oracle, &admm.l),
                admm,
            }
        })
        .collect()
});

#[test]
fn criterion_3_tiny_instance_oracle() {
    for (k, outcome) in ORACLE.iter().enumerate() {
        assert!(
            outcome.gap_l <= 1e-4,
            "instance {k}: L differs from oracle by {}",
            outcome.gap_l
        );
        assert!(
            outcome.gap_e <= 1e-4,
            "instance {k}: E differs from oracle by {}",
            outcome.gap_e
        );
    }
    println!("criterion 3 (tiny-instance oracle): PASS");
}

// ---------------------------------------------------------------------
// Criterion 4 + 6: phase-transition dominance on the default grid, fully
// observed and with 10% occlusion.

static PHASE_FULL: LazyLock<PhaseGrid> = LazyLock::new(|| run_phase(&PhaseConfig::default()));

static PHASE_OCCLUDED: LazyLock<PhaseGrid> = LazyLock::new(|| {
    run_phase(&PhaseConfig {
        observed_fraction: 0.9,
        ..PhaseConfig::default()
    })
});

fn assert_included(grid: &PhaseGrid, weaker: Model, stronger: Model, label: &str) {
    let weak = grid.success_set(weaker);
    let strong = grid.success_set(stronger);
    for cell in &weak {
        assert!(
            strong.contains(cell),
            "{label}: cell {cell:?} solved by {weaker} but not by {stronger}"
        );
    }
}

#[test]
fn criterion_4_phase_dominance() {
    for (grid, label) in [(&*PHASE_FULL, "full observation"), (&*PHASE_OCCLUDED, "10% occluded")] {
        assert_included(grid, Model::Pcp, Model::Pcpsm, label);
        assert_included(grid, Model::Pcpf, Model::Pcpsfm, label);
    }
    let pcp = PHASE_FULL.success_set(Model::Pcp).len();
    let pcpsfm = PHASE_FULL.success_set(Model::Pcpsfm).len();
    assert!(
        pcpsfm > pcp,
        "full observation: PCPSFM solved {pcpsfm} cells, PCP {pcp}"
    );
    let pcp_occ = PHASE_OCCLUDED.success_set(Model::Pcp).len();
    let pcpsm_occ = PHASE_OCCLUDED.success_set(Model::Pcpsm).len();
    assert!(
        pcpsm_occ > pcp_occ,
        "10% occluded: PCPSM solved {pcpsm_occ} cells, PCP {pcp_occ}"
    );
    println!("criterion 4 (phase-transition dominance): PASS");
}

// ---------------------------------------------------------------------
// Criterion 5: proximal operators on 1000 random small matrices.

#[test]
fn criterion_5_proximal_operators() {
    let mut rng = rng_from(0x5157);
    for _ in 0..1000 {
        let n1 = rng.gen_range(1..=8);
        let n2 = rng.gen_range(1..=8);
        let mut a = DenseMatrix::zeros(n1, n2);
        fill_gaussian(&mut rng, 1.0, a.as_mut_slice());
        let mut b = DenseMatrix::zeros(n1, n2);
        fill_gaussian(&mut rng, 1.0, b.as_mut_slice());
        let tau = rng.gen_range(0.0..2.0);

        // Entrywise soft threshold equals the scalar formula exactly.
        let sa = shrink(&a, tau);
        for (idx, &v) in a.as_slice().iter().enumerate() {
            assert_eq!(sa.as_slice()[idx], shrink_scalar(v, tau));
        }
        assert!(sa.sub(&shrink(&b, tau)).fro_norm() <= a.sub(&b).fro_norm() + 1e-12);

        // Singular value thresholding: subgradient optimality and
        // non-expansiveness.
        let z = svt(&a, tau).unwrap();
        let residual = a.sub(&z);
        let spectral = singular_values(&residual).unwrap().first().copied().unwrap_or(0.0);
        assert!(spectral <= tau + 1e-8, "||A - Z||_2 = {spectral} > tau = {tau}");
        let inner: f64 = residual
            .as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(r, z)| r * z)
            .sum();
        let nuclear: f64 = singular_values(&z).unwrap().iter().sum();
        assert!(
            (inner - tau * nuclear).abs() <= 1e-8,
            "<A-Z, Z> = {inner}, tau ||Z||_* = {}",
            tau * nuclear
        );
        let zb = svt(&b, tau).unwrap();
        assert!(z.sub(&zb).fro_norm() <= a.sub(&b).fro_norm() + 1e-10);
    }
    println!("criterion 5 (proximal-operator suite): PASS");
}

// ---------------------------------------------------------------------
// Criterion 6: every converged run recorded in criteria 1-4 satisfies the
// KKT stopping rule at its final iterate. The phase grids keep only
// per-cell errors, so representative grid cells are re-solved here with
// the same construction.

fn assert_kkt(report: &SolveReport, label: &str) {
    if !report.converged {
        return;
    }
    let last = report.residual_history.last().expect("converged without history");
    assert!(
        last.r_primal <= EPSILON && last.r_side <= EPSILON,
        "{label}: converged with residuals ({}, {})",
        last.r_primal,
        last.r_side
    );
}

#[test]
fn criterion_6_kkt_termination() {
    let mut converged_runs = 0usize;
    for (model, report) in &CALIBRATION.runs {
        assert_kkt(report, &format!("calibration {model}"));
        converged_runs += report.converged as usize;
    }
    for (k, outcome) in REDUCTIONS.iter().enumerate() {
        assert_kkt(&outcome.general, &format!("reduction general {k}"));
        assert_kkt(&outcome.dedicated, &format!("reduction dedicated {k}"));
        converged_runs += outcome.general.converged as usize;
        converged_runs += outcome.dedicated.converged as usize;
    }
    for (k, outcome) in ORACLE.iter().enumerate() {
        assert_kkt(&outcome.admm, &format!("oracle admm {k}"));
        converged_runs += outcome.admm.converged as usize;
    }

    // Phase-style cells across the easy/hard boundary, both masks.
    for (rank, density, observed) in [
        (10usize, 0.05, 1.0),
        (30, 0.15, 1.0),
        (20, 0.10, 0.9),
        (40, 0.20, 0.9),
    ] {
        let params = InstanceParams {
            rank,
            density,
            missing_fraction: 1.0 - observed,
            ..InstanceParams::default()
        };
        let inst = gen_instance(&params, mix_seed(600, &[rank as u64])).unwrap();
        let lambda = default_lambda(200, 200);
        let pcp = make_problem(inst.x.clone(), inst.w.clone(), None, None, None, 0.0, lambda)
            .unwrap();
        let pcpsfm = make_problem(
            inst.x.clone(),
            inst.w.clone(),
            Some(inst.s.clone()),
            Some(inst.u.clone()),
            Some(inst.v.clone()),
            0.2,
            lambda,
        )
        .unwrap();
        for problem in [pcp, pcpsfm] {
            let model = problem.model;
            let report = solve(problem, SolverConfig::default()).unwrap();
            assert_kkt(&report, &format!("phase cell r={rank} rho={density} {model}"));
            converged_runs += report.converged as usize;
        }
    }
    assert!(converged_runs > 0, "no converged runs were checked");
    println!("criterion 6 (KKT termination): PASS");
}

// ---------------------------------------------------------------------
// Criterion 7: denoising quality ordering on a synthetic 64-frame
// sequence.

#[test]
fn criterion_7_denoising_ordering() {
    let (width, height, frames) = (32usize, 32usize, 64usize);
    let pixels = width * height;
    let seed = 0xDE401;

    // Image-like rank-8 ground truth: rank-7 texture around a constant
    // 0.5 background (the constant adds one more rank).
    let (texture, _, _) = gen_low_rank(pixels, frames, 7, 0.012, mix_seed(seed, &[1])).unwrap();
    let l0 = texture.map(|v| v + 0.5);
    assert_eq!(l0.rank().unwrap(), 8);

    // Coherent gross errors are the hard case for plain PCP.
    let e0 = gen_sparse_errors(
        pixels,
        frames,
        0.05,
        SignMode::Coherent,
        Some(&l0),
        mix_seed(seed, &[2]),
    )
    .unwrap();
    let x = l0.add(&e0);
    let w = gen_mask(pixels, frames, 0.05, mix_seed(seed, &[3])).unwrap();

    // Side info with ~1% relative Frobenius error, and feature bases
    // containing the true subspaces.
    let variance = (0.01 * l0.fro_norm()).powi(2) / (pixels * frames) as f64;
    let s = gen_side_info_with_variance(&l0, variance, mix_seed(seed, &[4]));
    let (u, v) = gen_features(&l0, 10, mix_seed(seed, &[5])).unwrap();

    let lambda = default_lambda(pixels, frames);
    let config = SolverConfig::default();
    let solve_model = |s: Option<DenseMatrix>, uv: Option<(DenseMatrix, DenseMatrix)>, alpha| {
        let (u, v) = match uv {
            Some((u, v)) => (Some(u), Some(v)),
            None => (None, None),
        };
        solve(
            make_problem(x.clone(), w.clone(), s, u, v, alpha, lambda).unwrap(),
            config,
        )
        .unwrap()
    };
    let pcp = solve_model(None, None, 0.0);
    let pcpsm = solve_model(Some(s.clone()), None, 0.5);
    let pcpsfm = solve_model(Some(s), Some((u, v)), 0.5);

    let frame = |m: &DenseMatrix, f: usize| {
        DenseMatrix::from_fn(height, width, |y, x| m[(y * width + x, f)])
    };
    let quality = |report: &SolveReport| {
        let p = psnr(&report.l, &l0, 1.0).unwrap();
        let mut total = 0.0;
        for f in 0..frames {
            total += ssim(&frame(&report.l, f), &frame(&l0, f), &SsimParams::default(), 1.0)
                .unwrap();
        }
        (p, total / frames as f64)
    };
    let (psnr_pcp, ssim_pcp) = quality(&pcp);
    let (psnr_pcpsm, ssim_pcpsm) = quality(&pcpsm);
    let (psnr_pcpsfm, ssim_pcpsfm) = quality(&pcpsfm);

    assert!(
        psnr_pcpsfm > psnr_pcpsm && psnr_pcpsm > psnr_pcp,
        "PSNR not strictly ordered: pcpsfm {psnr_pcpsfm}, pcpsm {psnr_pcpsm}, pcp {psnr_pcp}"
    );
    assert!(
        ssim_pcpsfm > ssim_pcpsm && ssim_pcpsm > ssim_pcp,
        "SSIM not strictly ordered: pcpsfm {ssim_pcpsfm}, pcpsm {ssim_pcpsm}, pcp {ssim_pcp}"
    );
    println!("criterion 7 (denoising ordering): PASS");
}

// ---------------------------------------------------------------------
// Criterion 8: K-SVD behavior.

#[test]
fn criterion_8_ksvd() {
    use rpca::ksvd::{ksvd_learn, omp};

    // Monotone reconstruction error on a 256x200 synthetic matrix.
    let mut rng = rng_from(0x85D);
    let mut m = DenseMatrix::zeros(256, 200);
    fill_gaussian(&mut rng, 1.0, m.as_mut_slice());
    let dict = ksvd_learn(&m, 40, 5, 10, 3).unwrap();
    assert_eq!(dict.history.len(), 10);
    for pair in dict.history.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-8, "error increased: {pair:?}");
    }
    for j in 0..dict.d.cols() {
        let norm: f64 = dict.d.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-10, "atom {j} has norm {norm}");
    }

    // Planted 2-sparse recovery under low coherence. Random dictionaries
    // at this shape never reach coherence 1/3, so one is designed by
    // alternating projections on the Gram matrix.
    let (n, c) = (8usize, 12usize);
    let dictionary = {
        let mut rng = rng_from(0x85E);
        let mut d = DenseMatrix::zeros(n, c);
        fill_gaussian(&mut rng, 1.0, d.as_mut_slice());
        let normalize = |d: &mut DenseMatrix| {
            for j in 0..d.cols() {
                let col = d.column(j);
                let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                d.set_column(j, &col.iter().map(|v| v / norm).collect::<Vec<_>>());
            }
        };
        normalize(&mut d);
        for _ in 0..5000 {
            let mut g =
                DenseMatrix::from_fn(c, c, |a, b| (0..n).map(|i| d[(i, a)] * d[(i, b)]).sum());
            let mut clipped = false;
            for a in 0..c {
                for b in 0..c {
                    if a != b && g[(a, b)].abs() > 0.3 {
                        g[(a, b)] = 0.3 * g[(a, b)].signum();
                        clipped = true;
                    }
                }
            }
            if !clipped {
                break;
            }
            // Rank-n refactoring of the clipped Gram.
            let f = rpca::numerics::svd(&g).unwrap();
            for i in 0..n {
                let scale = f.singular_values[i].sqrt();
                for j in 0..c {
                    d[(i, j)] = scale * f.left[(j, i)];
                }
            }
            normalize(&mut d);
        }
        d
    };
    let mut max_coherence = 0.0f64;
    for a in 0..c {
        for b in (a + 1)..c {
            let dot: f64 = (0..n).map(|i| dictionary[(i, a)] * dictionary[(i, b)]).sum();
            max_coherence = max_coherence.max(dot.abs());
        }
    }
    assert!(max_coherence < 1.0 / 3.0, "coherence {max_coherence}");
    for trial in 0..50 {
        let i = trial % c;
        let j = (trial * 5 + 1) % c;
        if i == j {
            continue;
        }
        let (ci, cj) = (1.5, -0.75);
        let x: Vec<f64> = (0..n)
            .map(|p| ci * dictionary[(p, i)] + cj * dictionary[(p, j)])
            .collect();
        let code = omp(&dictionary, &x, 2);
        for (k, &c) in code.iter().enumerate() {
            let expect = if k == i { ci } else if k == j { cj } else { 0.0 };
            assert!(
                (c - expect).abs() <= 1e-8,
                "trial {trial}: code[{k}] = {c}, expected {expect}"
            );
        }
    }
    println!("criterion 8 (K-SVD): PASS");
}

// ---------------------------------------------------------------------
// Criterion 9: CLI determinism under a fixed seed.

fn rpca_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rpca"))
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("failed to launch rpca");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Byte-compares every file except report.json (whose wall-time field is
/// legitimately run-dependent).
fn assert_dirs_identical(a: &Path, b: &Path) {
    let list = |dir: &Path| -> Vec<PathBuf> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.file_name().unwrap() != "report.json" {
                    files.push(path.strip_prefix(dir).unwrap().to_path_buf());
                }
            }
        }
        files.sort();
        files
    };
    let files_a = list(a);
    assert_eq!(files_a, list(b), "directory listings differ");
    assert!(!files_a.is_empty());
    for rel in files_a {
        let bytes_a = std::fs::read(a.join(&rel)).unwrap();
        let bytes_b = std::fs::read(b.join(&rel)).unwrap();
        assert_eq!(bytes_a, bytes_b, "file {rel:?} differs between reruns");
    }
}

#[test]
fn criterion_9_cli_determinism() {
    let root = tempfile::tempdir().unwrap();
    let dir = |name: &str| root.path().join(name);

    // gen, twice.
    for out in ["g1", "g2"] {
        run_ok(rpca_bin().args([
            "gen", "--n1", "40", "--n2", "40", "--rank", "3", "--density", "0.05",
            "--seed", "11", "--out",
        ]).arg(dir(out)));
    }
    assert_dirs_identical(&dir("g1"), &dir("g2"));

    // solve on the generated instance, twice.
    for out in ["s1", "s2"] {
        run_ok(
            rpca_bin()
                .args(["solve", "--x"])
                .arg(dir("g1").join("x.bmat"))
                .args(["--side"])
                .arg(dir("g1").join("s.bmat"))
                .args(["--u"])
                .arg(dir("g1").join("u.bmat"))
                .args(["--v"])
                .arg(dir("g1").join("v.bmat"))
                .args(["--alpha", "0.2", "--out"])
                .arg(dir(out)),
        );
    }
    assert_dirs_identical(&dir("s1"), &dir("s2"));

    // phase on a small grid, twice.
    for out in ["p1", "p2"] {
        run_ok(rpca_bin().args([
            "phase", "--ranks", "2,3", "--densities", "0.05", "--methods", "pcp,pcpsfm",
            "--trials", "1", "--n1", "40", "--n2", "40", "--seed", "5", "--out",
        ]).arg(dir(out)));
    }
    assert_dirs_identical(&dir("p1"), &dir("p2"));

    // denoise on synthetic frames, twice.
    let (texture, _, _) = gen_low_rank(256, 8, 2, 0.01, 77).unwrap();
    let stack = rpca::io::ImageColumnStack {
        width: 16,
        height: 16,
        frames: 8,
        matrix: texture.map(|v| v + 0.5),
    };
    let frames = rpca::io::unstack_to_images(&stack, &dir("frames")).unwrap();
    for out in ["d1", "d2"] {
        let mut cmd = rpca_bin();
        cmd.args(["denoise", "--images"]);
        for f in &frames {
            cmd.arg(f);
        }
        cmd.args([
            "--missing", "0.05", "--side", "mean", "--features", "none", "--eps", "1e-5",
            "--seed", "3", "--out",
        ])
        .arg(dir(out));
        run_ok(&mut cmd);
    }
    assert_dirs_identical(&dir("d1"), &dir("d2"));

    println!("criterion 9 (CLI determinism): PASS");
}
