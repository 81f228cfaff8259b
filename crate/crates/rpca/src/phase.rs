//! Phase-transition sweeps over (rank, error-density) grids. Cells are
//! independent jobs keyed by (method, rank, density, trial) with seeds
//! derived from the base seed, so parallel and serial execution produce
//! identical grids.

use crate::metrics::rel_error;
use crate::rng::mix_seed;
use crate::solver::{
    default_lambda, make_problem, solve, Model, Problem, SolverConfig, SolverError,
};
use crate::synth::{gen_instance, InstanceParams, SignMode, SyntheticInstance};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Clone, Debug)]
pub struct PhaseConfig {
    pub ranks: Vec<usize>,
    pub densities: Vec<f64>,
    pub trials_per_cell: usize,
    pub sign_mode: SignMode,
    /// 1.0 means full observation.
    pub observed_fraction: f64,
    pub methods: Vec<Model>,
    pub success_threshold: f64,
    pub base_seed: u64,
    pub n1: usize,
    pub n2: usize,
    /// Extra null-space columns d padded into the features.
    pub feature_margin: usize,
    /// Side-information weight for the models that use it.
    pub alpha: f64,
    pub solver: SolverConfig,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            ranks: (1..=6).map(|k| 10 * k).collect(),
            densities: (1..=6).map(|k| 0.05 * k as f64).collect(),
            trials_per_cell: 3,
            sign_mode: SignMode::RandomSign,
            observed_fraction: 1.0,
            methods: vec![Model::Pcp, Model::Pcpsm, Model::Pcpf, Model::Pcpsfm],
            success_threshold: 1e-3,
            base_seed: 0,
            n1: 200,
            n2: 200,
            feature_margin: 10,
            alpha: 0.2,
            solver: SolverConfig::default(),
        }
    }
}

/// One grid cell: the per-trial relative errors and the all-trials
/// success verdict.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseCell {
    pub rank: usize,
    pub density: f64,
    pub errors: Vec<f64>,
    pub success: bool,
}

/// Sweep results for every requested method over the same instances.
#[derive(Clone, Debug)]
pub struct PhaseGrid {
    pub ranks: Vec<usize>,
    pub densities: Vec<f64>,
    pub success_threshold: f64,
    pub base_seed: u64,
    /// Per method, cells in rank-major order (rank index * densities +
    /// density index).
    pub cells: BTreeMap<String, Vec<PhaseCell>>,
}

impl PhaseGrid {
    pub fn cell(&self, method: Model, rank_idx: usize, density_idx: usize) -> &PhaseCell {
        &self.cells[&method.to_string()][rank_idx * self.densities.len() + density_idx]
    }

    /// Indices of all successful cells for a method.
    pub fn success_set(&self, method: Model) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.ranks.len() {
            for d in 0..self.densities.len() {
                if self.cell(method, r, d).success {
                    out.push((r, d));
                }
            }
        }
        out
    }
}

/// How the sweep executes its independent cell jobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Default for Parallelism {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Parallelism::Rayon
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Parallelism::Sequential
    }
}

/// Instance seed for a cell trial: shared across methods so dominance
/// comparisons see identical observations.
pub fn instance_seed(base_seed: u64, rank: usize, density_idx: usize, trial: usize) -> u64 {
    mix_seed(base_seed, &[rank as u64, density_idx as u64, trial as u64])
}

fn build_problem(
    method: Model,
    inst: &SyntheticInstance,
    alpha: f64,
    lambda: f64,
) -> Result<Problem, SolverError> {
    match method {
        Model::Pcp | Model::Pcpm => {
            make_problem(inst.x.clone(), inst.w.clone(), None, None, None, 0.0, lambda)
        }
        Model::Pcpsm => make_problem(
            inst.x.clone(),
            inst.w.clone(),
            Some(inst.s.clone()),
            None,
            None,
            alpha,
            lambda,
        ),
        Model::Pcpf => make_problem(
            inst.x.clone(),
            inst.w.clone(),
            None,
            Some(inst.u.clone()),
            Some(inst.v.clone()),
            0.0,
            lambda,
        ),
        Model::Pcpsfm => make_problem(
            inst.x.clone(),
            inst.w.clone(),
            Some(inst.s.clone()),
            Some(inst.u.clone()),
            Some(inst.v.clone()),
            alpha,
            lambda,
        ),
        Model::Lrr => make_problem(
            inst.x.clone(),
            inst.w.clone(),
            None,
            Some(inst.u.clone()),
            None,
            0.0,
            lambda,
        ),
    }
}

/// Runs one cell trial. Any failure (generation error, solver error,
/// non-convergence) scores an infinite error so sweeps are total.
fn run_trial(config: &PhaseConfig, method: Model, rank: usize, density_idx: usize, trial: usize) -> f64 {
    let density = config.densities[density_idx];
    let params = InstanceParams {
        n1: config.n1,
        n2: config.n2,
        rank,
        density,
        sign_mode: config.sign_mode,
        missing_fraction: 1.0 - config.observed_fraction,
        feature_margin: config.feature_margin,
        ..InstanceParams::default()
    };
    let seed = instance_seed(config.base_seed, rank, density_idx, trial);
    let inst = match gen_instance(&params, seed) {
        Ok(i) => i,
        Err(_) => return f64::INFINITY,
    };
    let lambda = default_lambda(config.n1, config.n2);
    let report = build_problem(method, &inst, config.alpha, lambda)
        .and_then(|p| solve(p, config.solver));
    match report {
        Ok(r) if r.converged => rel_error(&r.l, &inst.l0).unwrap_or(f64::INFINITY),
        _ => f64::INFINITY,
    }
}

type JobKey = (usize, usize, usize, usize); // method, rank, density, trial

fn assemble(config: &PhaseConfig, results: Vec<(JobKey, f64)>) -> PhaseGrid {
    let nd = config.densities.len();
    let nr = config.ranks.len();
    let mut cells: BTreeMap<String, Vec<PhaseCell>> = BTreeMap::new();
    for &method in &config.methods {
        let grid = (0..nr * nd)
            .map(|idx| PhaseCell {
                rank: config.ranks[idx / nd],
                density: config.densities[idx % nd],
                errors: vec![f64::INFINITY; config.trials_per_cell],
                success: false,
            })
            .collect();
        cells.insert(method.to_string(), grid);
    }
    for ((m_idx, r_idx, d_idx, trial), err) in results {
        let key = config.methods[m_idx].to_string();
        let cell = &mut cells.get_mut(&key).unwrap()[r_idx * nd + d_idx];
        cell.errors[trial] = err;
    }
    for grid in cells.values_mut() {
        for cell in grid.iter_mut() {
            cell.success = cell.errors.iter().all(|&e| e < config.success_threshold);
        }
    }
    PhaseGrid {
        ranks: config.ranks.clone(),
        densities: config.densities.clone(),
        success_threshold: config.success_threshold,
        base_seed: config.base_seed,
        cells,
    }
}

pub fn run_phase_with(config: &PhaseConfig, parallelism: Parallelism) -> PhaseGrid {
    let mut jobs: Vec<JobKey> = Vec::new();
    for m in 0..config.methods.len() {
        for r in 0..config.ranks.len() {
            for d in 0..config.densities.len() {
                for t in 0..config.trials_per_cell {
                    jobs.push((m, r, d, t));
                }
            }
        }
    }
    let eval = |&(m, r, d, t): &JobKey| -> (JobKey, f64) {
        (
            (m, r, d, t),
            run_trial(config, config.methods[m], config.ranks[r], d, t),
        )
    };
    let results: Vec<(JobKey, f64)> = match parallelism {
        Parallelism::Sequential => jobs.iter().map(eval).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            use rayon::prelude::*;
            jobs.par_iter().map(eval).collect()
        }
    };
    assemble(config, results)
}

/// Full sweep with the default execution mode (rayon worker pool when the
/// `parallel` feature is on).
pub fn run_phase(config: &PhaseConfig) -> PhaseGrid {
    run_phase_with(config, Parallelism::default())
}

fn fmt_error(e: f64) -> String {
    if e.is_infinite() {
        "inf".to_string()
    } else {
        format!("{e:e}")
    }
}

/// CSV export: method,rank,density,trial,rel_error,success per row.
pub fn write_grid_csv(grid: &PhaseGrid, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "method,rank,density,trial,rel_error,success")?;
    for (method, cells) in &grid.cells {
        for cell in cells {
            for (trial, &err) in cell.errors.iter().enumerate() {
                writeln!(
                    out,
                    "{method},{},{},{trial},{},{}",
                    cell.rank,
                    cell.density,
                    fmt_error(err),
                    err < grid.success_threshold
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GridSummary<'a> {
    ranks: &'a [usize],
    densities: &'a [f64],
    success_threshold: f64,
    base_seed: u64,
    /// Per method: success matrix indexed [rank][density].
    success: BTreeMap<String, Vec<Vec<bool>>>,
}

/// JSON summary export: the success matrix per method.
pub fn write_grid_json(grid: &PhaseGrid, out: &mut impl Write) -> std::io::Result<()> {
    let nd = grid.densities.len();
    let mut success = BTreeMap::new();
    for (method, cells) in &grid.cells {
        let matrix: Vec<Vec<bool>> = (0..grid.ranks.len())
            .map(|r| (0..nd).map(|d| cells[r * nd + d].success).collect())
            .collect();
        success.insert(method.clone(), matrix);
    }
    let summary = GridSummary {
        ranks: &grid.ranks,
        densities: &grid.densities,
        success_threshold: grid.success_threshold,
        base_seed: grid.base_seed,
        success,
    };
    serde_json::to_writer_pretty(&mut *out, &summary)?;
    out.write_all(b"\n")
}
