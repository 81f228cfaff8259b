//! Command implementations behind the `rpca` binary: synthetic data
//! generation, solving, phase-transition sweeps and image denoising.
//! Every command that takes a seed is bit-reproducible, and every run
//! that produces results also produces a JSON report carrying all
//! parameters that influenced them.

use crate::io::{self, IoError};
use crate::ksvd;
use crate::metrics::{self, SsimParams};
use crate::numerics::{orthonormalize, DenseMatrix, NumericsError};
use crate::phase::{run_phase_with, write_grid_csv, write_grid_json, Parallelism, PhaseConfig};
use crate::rng::mix_seed;
use crate::solver::{default_lambda, make_problem, solve, Model, SolveReport, SolverConfig};
use crate::synth::{self, gen_instance, InstanceParams, SignMode};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("solver did not converge within the iteration cap")]
    NotConverged,
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// 0 success, 2 usage, 3 not-converged, 4 I/O, 5 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NotConverged => 3,
            CliError::Io(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(IoError::Io(e))
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<crate::solver::SolverError> for CliError {
    fn from(e: crate::solver::SolverError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<synth::SynthError> for CliError {
    fn from(e: synth::SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ksvd::KsvdError> for CliError {
    fn from(e: ksvd::KsvdError) -> Self {
        match e {
            ksvd::KsvdError::Io(io) => CliError::Io(io),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<metrics::MetricsError> for CliError {
    fn from(e: metrics::MetricsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "rpca", version, about = "Robust PCA with side information and features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic low-rank plus sparse instance.
    Gen(GenArgs),
    /// Decompose a matrix into low-rank and sparse parts.
    Solve(SolveArgs),
    /// Sweep the rank x density phase-transition grid.
    Phase(PhaseArgs),
    /// Denoise a grayscale image sequence.
    Denoise(DenoiseArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 200)]
    pub n1: usize,
    #[arg(long, default_value_t = 200)]
    pub n2: usize,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    /// Fraction of entries corrupted by gross errors.
    #[arg(long, default_value_t = 0.05)]
    pub density: f64,
    /// Error sign pattern: random or coherent.
    #[arg(long, default_value = "random")]
    pub sign: SignMode,
    /// Fraction of entries hidden by the observation mask.
    #[arg(long, default_value_t = 0.0)]
    pub missing: f64,
    /// Side-information noise variance: "paper", "none", or a number.
    #[arg(long, default_value = "paper")]
    pub side_noise: String,
    /// Extra null-space columns padded into the feature bases.
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Observation matrix (.csv or BMAT).
    #[arg(long)]
    pub x: PathBuf,
    /// Binary observation mask; defaults to all-ones.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Side-information matrix S.
    #[arg(long)]
    pub side: Option<PathBuf>,
    /// Column-space feature basis U.
    #[arg(long)]
    pub u: Option<PathBuf>,
    /// Row-space feature basis V.
    #[arg(long)]
    pub v: Option<PathBuf>,
    /// Side-information weight; defaults to 0.2 when --side is given, else 0.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sparsity weight; defaults to 1/sqrt(max dimension).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e7)]
    pub mu_max: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Report path; defaults to OUT/report.json.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PhaseArgs {
    /// Comma-separated ranks.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 30, 40, 50, 60])]
    pub ranks: Vec<usize>,
    /// Comma-separated error densities.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30])]
    pub densities: Vec<f64>,
    /// Comma-separated methods out of pcp,pcpm,pcpsm,pcpf,pcpsfm,lrr.
    #[arg(long, value_delimiter = ',', default_values_t = ["pcp".to_string(), "pcpsm".to_string(), "pcpf".to_string(), "pcpsfm".to_string()])]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, default_value = "random")]
    pub sign: SignMode,
    /// Observed fraction of entries; 1 means no occlusion.
    #[arg(long, default_value_t = 1.0)]
    pub observed: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n1: usize,
    #[arg(long, default_value_t = 200)]
    pub n2: usize,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// Relative-error success threshold per cell.
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    /// Run cells on one thread even when the parallel feature is on.
    #[arg(long, default_value_t = false)]
    pub sequential: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Input PGM frames, in order.
    #[arg(long, num_args = 1.., required = true)]
    pub images: Vec<PathBuf>,
    /// Fraction of pixels hidden per frame.
    #[arg(long, default_value_t = 0.05)]
    pub missing: f64,
    /// Side information: "mean", "none", or a matrix file.
    #[arg(long, default_value = "mean")]
    pub side: String,
    /// Features: "ksvd", "none", or "UFILE,VFILE".
    #[arg(long, default_value = "ksvd")]
    pub features: String,
    #[arg(long, default_value_t = 40)]
    pub ksvd_atoms: usize,
    #[arg(long, default_value_t = 40)]
    pub ksvd_sparsity: usize,
    #[arg(long, default_value_t = 10)]
    pub ksvd_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clean reference frames for truth metrics, same order and count.
    #[arg(long, num_args = 1..)]
    pub truth: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything needed to reproduce a run, bundled with its outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub model: String,
    pub alpha: f64,
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub mu0_scale: f64,
    pub mu_max: f64,
    pub max_iter: usize,
    pub seed: Option<u64>,
    pub converged: bool,
    pub iterations: usize,
    pub r_primal: f64,
    pub r_side: f64,
    pub metrics: BTreeMap<String, f64>,
    pub wall_time_secs: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    fn from_solve(
        command: Vec<String>,
        report: &SolveReport,
        alpha: f64,
        lambda: f64,
        config: &SolverConfig,
        seed: Option<u64>,
        wall: f64,
    ) -> Self {
        let last = report.residual_history.last();
        RunReport {
            command,
            model: report.model.to_string(),
            alpha,
            lambda,
            beta: config.beta,
            epsilon: config.epsilon,
            mu0_scale: config.mu0_scale,
            mu_max: config.mu_max,
            max_iter: config.max_iter,
            seed,
            converged: report.converged,
            iterations: report.iterations,
            r_primal: last.map_or(f64::NAN, |r| r.r_primal),
            r_side: last.map_or(f64::NAN, |r| r.r_side),
            metrics: BTreeMap::new(),
            wall_time_secs: wall,
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Dispatches a parsed command line. The report (when the command makes
/// one) is also printed on stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let command = std::env::args().collect();
    match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Solve(args) => cmd_solve(&args, command).map(|_| ()),
        Command::Phase(args) => cmd_phase(&args),
        Command::Denoise(args) => cmd_denoise(&args, command).map(|_| ()),
    }
}

#[derive(Serialize)]
struct GenManifest {
    n1: usize,
    n2: usize,
    rank: usize,
    density: f64,
    sign: String,
    missing: f64,
    side_noise_variance: f64,
    features: usize,
    seed: u64,
    // File names relative to the manifest's directory, so generated
    // bundles are relocatable and byte-identical across reruns.
    files: BTreeMap<String, String>,
}

fn parse_side_noise(spec: &str, rank: usize) -> Result<f64, CliError> {
    match spec {
        "paper" => Ok(synth::side_noise_variance(rank)),
        "none" => Ok(0.0),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|v| *v >= 0.0)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "--side-noise must be 'paper', 'none' or a nonnegative number, got '{other}'"
                ))
            }),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let variance = parse_side_noise(&args.side_noise, args.rank)?;
    let params = InstanceParams {
        n1: args.n1,
        n2: args.n2,
        rank: args.rank,
        density: args.density,
        sign_mode: args.sign,
        missing_fraction: args.missing,
        feature_margin: args.features,
        side_noise: Some(variance),
        ..InstanceParams::default()
    };
    let inst = gen_instance(&params, args.seed)?;
    std::fs::create_dir_all(&args.out)?;

    let mut files = BTreeMap::new();
    let parts: [(&str, &DenseMatrix); 7] = [
        ("l0", &inst.l0),
        ("e0", &inst.e0),
        ("x", &inst.x),
        ("w", &inst.w),
        ("s", &inst.s),
        ("u", &inst.u),
        ("v", &inst.v),
    ];
    for (name, m) in parts {
        let file = format!("{name}.bmat");
        io::write_matrix(&args.out.join(&file), m)?;
        files.insert(name.to_string(), file);
    }
    let manifest = GenManifest {
        n1: args.n1,
        n2: args.n2,
        rank: args.rank,
        density: args.density,
        sign: args.sign.to_string(),
        missing: args.missing,
        side_noise_variance: variance,
        features: args.features,
        seed: args.seed,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    std::fs::write(args.out.join("manifest.json"), json + "\n")?;
    Ok(())
}

fn read_optional(path: &Option<PathBuf>) -> Result<Option<DenseMatrix>, CliError> {
    path.as_ref().map(|p| io::read_matrix(p)).transpose().map_err(CliError::from)
}

pub fn cmd_solve(args: &SolveArgs, command: Vec<String>) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let x = io::read_matrix(&args.x)?;
    let w = match read_optional(&args.mask)? {
        Some(w) => w,
        None => DenseMatrix::ones(x.rows(), x.cols()),
    };
    let s = read_optional(&args.side)?;
    let u = read_optional(&args.u)?;
    let v = read_optional(&args.v)?;

    let alpha = args.alpha.unwrap_or(if s.is_some() { 0.2 } else { 0.0 });
    if alpha == 0.0 && s.is_some() {
        eprintln!("warning: --alpha 0 ignores the side information; solving the reduced model");
    }
    let lambda = args
        .lambda
        .unwrap_or_else(|| default_lambda(x.rows(), x.cols()));
    let config = SolverConfig {
        beta: args.beta,
        epsilon: args.eps,
        mu_max: args.mu_max,
        max_iter: args.max_iter,
        ..SolverConfig::default()
    };

    let s_for_model = if alpha == 0.0 { None } else { s };
    let problem = make_problem(x, w, s_for_model, u, v, alpha, lambda)?;
    let solved = solve(problem, config)?;

    std::fs::create_dir_all(&args.out)?;
    let l_path = args.out.join("l.bmat");
    let e_path = args.out.join("e.bmat");
    io::write_matrix(&l_path, &solved.l)?;
    io::write_matrix(&e_path, &solved.e)?;

    let mut report = RunReport::from_solve(
        command,
        &solved,
        alpha,
        lambda,
        &config,
        None,
        start.elapsed().as_secs_f64(),
    );
    report
        .metrics
        .insert("rank_l".into(), solved.l.rank()? as f64);
    report.outputs = vec![l_path, e_path];
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.join("report.json"));
    report.save(&report_path)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Numeric(e.to_string()))?
    );
    if !report.converged {
        return Err(CliError::NotConverged);
    }
    Ok(report)
}

pub fn cmd_phase(args: &PhaseArgs) -> Result<(), CliError> {
    if args.ranks.is_empty() || args.densities.is_empty() || args.methods.is_empty() {
        return Err(CliError::Usage(
            "--ranks, --densities and --methods must be non-empty".into(),
        ));
    }
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&args.observed) {
        return Err(CliError::Usage(format!(
            "--observed must lie in [0, 1], got {}",
            args.observed
        )));
    }
    let methods: Vec<Model> = args
        .methods
        .iter()
        .map(|m| m.parse::<Model>().map_err(CliError::Usage))
        .collect::<Result<_, _>>()?;

    let config = PhaseConfig {
        ranks: args.ranks.clone(),
        densities: args.densities.clone(),
        trials_per_cell: args.trials,
        sign_mode: args.sign,
        observed_fraction: args.observed,
        methods,
        success_threshold: args.threshold,
        base_seed: args.seed,
        n1: args.n1,
        n2: args.n2,
        alpha: args.alpha,
        ..PhaseConfig::default()
    };
    let parallelism = if args.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::default()
    };
    let grid = run_phase_with(&config, parallelism);

    std::fs::create_dir_all(&args.out)?;
    let mut csv = Vec::new();
    write_grid_csv(&grid, &mut csv)?;
    std::fs::write(args.out.join("grid.csv"), csv)?;
    let mut json = Vec::new();
    write_grid_json(&grid, &mut json)?;
    std::fs::write(args.out.join("grid.json"), json)?;
    Ok(())
}

/// Reshapes one stacked column back into a height x width frame
/// (row-by-row scan order).
fn frame_from_column(stack_matrix: &DenseMatrix, frame: usize, width: usize, height: usize) -> DenseMatrix {
    DenseMatrix::from_fn(height, width, |y, x| stack_matrix[(y * width + x, frame)])
}

fn stack_metrics(
    recovered: &DenseMatrix,
    reference: &DenseMatrix,
    width: usize,
    height: usize,
) -> Result<(f64, f64), CliError> {
    let psnr = metrics::psnr(recovered, reference, 1.0)?;
    let params = SsimParams::default();
    let frames = recovered.cols();
    let mut total = 0.0;
    for f in 0..frames {
        let a = frame_from_column(recovered, f, width, height);
        let b = frame_from_column(reference, f, width, height);
        total += metrics::ssim(&a, &b, &params, 1.0)?;
    }
    Ok((psnr, total / frames as f64))
}

fn learned_or_loaded_features(
    spec: &str,
    x: &DenseMatrix,
    atoms: usize,
    sparsity: usize,
    iters: usize,
    seed: u64,
) -> Result<(Option<DenseMatrix>, Option<DenseMatrix>), CliError> {
    match spec {
        "none" => Ok((None, None)),
        "ksvd" => {
            let dict_u = ksvd::ksvd_learn(x, atoms, sparsity, iters, mix_seed(seed, &[21]))?;
            let dict_v =
                ksvd::ksvd_learn(&x.transpose(), atoms, sparsity, iters, mix_seed(seed, &[22]))?;
            let u = orthonormalize(&dict_u.d)?;
            let v = orthonormalize(&dict_v.d)?;
            Ok((Some(u), Some(v)))
        }
        files => {
            let (u_path, v_path) = files.split_once(',').ok_or_else(|| {
                CliError::Usage(format!(
                    "--features must be 'ksvd', 'none' or 'UFILE,VFILE', got '{files}'"
                ))
            })?;
            let u = io::read_matrix(Path::new(u_path.trim()))?;
            let v = io::read_matrix(Path::new(v_path.trim()))?;
            Ok((Some(u), Some(v)))
        }
    }
}

pub fn cmd_denoise(args: &DenoiseArgs, command: Vec<String>) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let stack = io::stack_images(&args.images)?;
    let (pixels, frames) = stack.matrix.shape();
    let x = stack.matrix.clone();

    let w = synth::gen_mask(pixels, frames, args.missing, mix_seed(args.seed, &[11]))?;

    let s = match args.side.as_str() {
        "none" => None,
        "mean" => {
            // Column-wise mean frame, tiled across all columns.
            let mut mean = vec![0.0; pixels];
            for f in 0..frames {
                for p in 0..pixels {
                    mean[p] += x[(p, f)];
                }
            }
            for m in &mut mean {
                *m /= frames as f64;
            }
            Some(DenseMatrix::from_fn(pixels, frames, |p, _| mean[p]))
        }
        file => {
            let s = io::read_matrix(Path::new(file))?;
            if s.shape() != (pixels, frames) {
                return Err(CliError::Usage(format!(
                    "side matrix is {}x{}, observations are {pixels}x{frames}",
                    s.rows(),
                    s.cols()
                )));
            }
            Some(s)
        }
    };

    let (u, v) = learned_or_loaded_features(
        &args.features,
        &x,
        args.ksvd_atoms,
        args.ksvd_sparsity,
        args.ksvd_iters,
        args.seed,
    )?;

    let alpha = if s.is_some() { args.alpha } else { 0.0 };
    let lambda = args.lambda.unwrap_or_else(|| default_lambda(pixels, frames));
    let config = SolverConfig {
        epsilon: args.eps,
        max_iter: args.max_iter,
        ..SolverConfig::default()
    };
    let problem = make_problem(x.clone(), w, s, u, v, alpha, lambda)?;
    let solved = solve(problem, config)?;

    std::fs::create_dir_all(&args.out)?;
    let recovered = io::ImageColumnStack {
        width: stack.width,
        height: stack.height,
        frames,
        matrix: solved.l.clone(),
    };
    let mut outputs = io::unstack_to_images(&recovered, &args.out.join("recovered"))?;

    let mut report = RunReport::from_solve(
        command,
        &solved,
        alpha,
        lambda,
        &config,
        Some(args.seed),
        start.elapsed().as_secs_f64(),
    );
    let (psnr_in, ssim_in) = stack_metrics(&solved.l, &x, stack.width, stack.height)?;
    report.metrics.insert("psnr_vs_input".into(), psnr_in);
    report.metrics.insert("ssim_vs_input".into(), ssim_in);
    if let Some(truth_paths) = &args.truth {
        let truth = io::stack_images(truth_paths)?;
        if truth.matrix.shape() != (pixels, frames) {
            return Err(CliError::Usage(format!(
                "truth stack is {}x{}, observations are {pixels}x{frames}",
                truth.matrix.rows(),
                truth.matrix.cols()
            )));
        }
        let (psnr_t, ssim_t) = stack_metrics(&solved.l, &truth.matrix, stack.width, stack.height)?;
        report.metrics.insert("psnr_vs_truth".into(), psnr_t);
        report.metrics.insert("ssim_vs_truth".into(), ssim_t);
    }

    let report_path = args.out.join("report.json");
    report.outputs = std::mem::take(&mut outputs);
    report.save(&report_path)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Numeric(e.to_string()))?
    );
    if !report.converged {
        return Err(CliError::NotConverged);
    }
    Ok(report)
}
