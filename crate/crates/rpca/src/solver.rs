//! Multi-block ADMM for principal component pursuit with side information
//! and features (PCPSFM), with continuation on the penalty and KKT-based
//! stopping. The plain PCP, masked PCP, PCPF, PCPSM and LRR problems are
//! exact special cases of the same iteration.

use crate::numerics::{
    orthonormalize, shrink_scalar, svt, DenseMatrix, NumericsError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("shape mismatch: {what} is {got}, expected {expected}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("mask entry at ({row}, {col}) is {value}, must be 0 or 1")]
    MaskNotBinary { row: usize, col: usize, value: f64 },
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("observation matrix is zero; cannot scale the penalty")]
    DegenerateObservation,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Which special case of the full model a [`Problem`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    Pcp,
    Pcpm,
    Pcpf,
    Pcpsm,
    Pcpsfm,
    Lrr,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Model::Pcp => "PCP",
            Model::Pcpm => "PCPM",
            Model::Pcpf => "PCPF",
            Model::Pcpsm => "PCPSM",
            Model::Pcpsfm => "PCPSFM",
            Model::Lrr => "LRR",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pcp" => Ok(Model::Pcp),
            "pcpm" => Ok(Model::Pcpm),
            "pcpf" => Ok(Model::Pcpf),
            "pcpsm" => Ok(Model::Pcpsm),
            "pcpsfm" => Ok(Model::Pcpsfm),
            "lrr" => Ok(Model::Lrr),
            other => Err(format!("unknown model '{other}'")),
        }
    }
}

/// One observation instance: what to decompose and under which model.
/// Absent features keep identity semantics: no U/V multiplication is ever
/// performed, but every result equals the materialized-identity
/// computation.
#[derive(Clone, Debug)]
pub struct Problem {
    pub x: DenseMatrix,
    pub w: DenseMatrix,
    pub s: Option<DenseMatrix>,
    pub u: Option<DenseMatrix>,
    pub v: Option<DenseMatrix>,
    pub alpha: f64,
    pub lambda: f64,
    pub model: Model,
    /// U^T S V, the side-information image in feature coordinates
    /// (zero matrix when no side information is present).
    side_proj: DenseMatrix,
}

/// The sparsity weight 1/sqrt(max(n1, n2)) that works across scales.
pub fn default_lambda(n1: usize, n2: usize) -> f64 {
    1.0 / (n1.max(n2) as f64).sqrt()
}

pub fn make_problem(
    x: DenseMatrix,
    w: DenseMatrix,
    s: Option<DenseMatrix>,
    u: Option<DenseMatrix>,
    v: Option<DenseMatrix>,
    alpha: f64,
    lambda: f64,
) -> Result<Problem, SolverError> {
    let (n1, n2) = x.shape();
    if w.shape() != (n1, n2) {
        return Err(SolverError::ShapeMismatch {
            what: "mask W",
            expected: format!("{n1}x{n2}"),
            got: format!("{}x{}", w.rows(), w.cols()),
        });
    }
    for i in 0..n1 {
        for j in 0..n2 {
            let v = w[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(SolverError::MaskNotBinary {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    if let Some(ref s) = s {
        if s.shape() != (n1, n2) {
            return Err(SolverError::ShapeMismatch {
                what: "side information S",
                expected: format!("{n1}x{n2}"),
                got: format!("{}x{}", s.rows(), s.cols()),
            });
        }
    }
    if !(lambda > 0.0) {
        return Err(SolverError::InvalidWeight(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if alpha < 0.0 {
        return Err(SolverError::InvalidWeight(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    if s.is_none() && alpha != 0.0 {
        return Err(SolverError::InvalidWeight(format!(
            "alpha must be 0 when no side information is given, got {alpha}"
        )));
    }
    let u = match u {
        Some(u) => {
            if u.rows() != n1 || u.cols() > n1 {
                return Err(SolverError::ShapeMismatch {
                    what: "features U",
                    expected: format!("{n1}xd1 with d1 <= {n1}"),
                    got: format!("{}x{}", u.rows(), u.cols()),
                });
            }
            Some(orthonormalize(&u)?)
        }
        None => None,
    };
    let v = match v {
        Some(v) => {
            if v.rows() != n2 || v.cols() > n2 {
                return Err(SolverError::ShapeMismatch {
                    what: "features V",
                    expected: format!("{n2}xd2 with d2 <= {n2}"),
                    got: format!("{}x{}", v.rows(), v.cols()),
                });
            }
            Some(orthonormalize(&v)?)
        }
        None => None,
    };

    let mask_is_full = w.as_slice().iter().all(|&v| v == 1.0);
    let model = match (&s, &u, &v) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Model::Pcpsfm,
        (Some(_), None, None) => Model::Pcpsm,
        (None, Some(_), Some(_)) => Model::Pcpf,
        (None, Some(_), None) => Model::Lrr,
        (None, None, _) if mask_is_full => Model::Pcp,
        (None, None, _) => Model::Pcpm,
    };

    let mut problem = Problem {
        x,
        w,
        s,
        u,
        v,
        alpha,
        lambda,
        model,
        side_proj: DenseMatrix::zeros(0, 0),
    };
    problem.side_proj = match &problem.s {
        Some(s) => problem.project(s),
        None => DenseMatrix::zeros(problem.d1(), problem.d2()),
    };
    Ok(problem)
}

impl Problem {
    pub fn n1(&self) -> usize {
        self.x.rows()
    }

    pub fn n2(&self) -> usize {
        self.x.cols()
    }

    pub fn d1(&self) -> usize {
        self.u.as_ref().map_or(self.n1(), DenseMatrix::cols)
    }

    pub fn d2(&self) -> usize {
        self.v.as_ref().map_or(self.n2(), DenseMatrix::cols)
    }

    /// U M V^T, skipping absent factors.
    pub fn lift(&self, m: &DenseMatrix) -> DenseMatrix {
        match (&self.u, &self.v) {
            (Some(u), Some(v)) => u.dot(m).dot(&v.transpose()),
            (Some(u), None) => u.dot(m),
            (None, Some(v)) => m.dot(&v.transpose()),
            (None, None) => m.clone(),
        }
    }

    /// U^T M V, skipping absent factors.
    pub fn project(&self, m: &DenseMatrix) -> DenseMatrix {
        match (&self.u, &self.v) {
            (Some(u), Some(v)) => u.transpose().dot(m).dot(v),
            (Some(u), None) => u.transpose().dot(m),
            (None, Some(v)) => m.dot(v),
            (None, None) => m.clone(),
        }
    }

    pub fn side_projection(&self) -> &DenseMatrix {
        &self.side_proj
    }
}

/// Continuation schedule, tolerance and iteration cap.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Penalty scaling ratio applied each iteration; must exceed 1.
    pub beta: f64,
    /// KKT feasibility tolerance.
    pub epsilon: f64,
    /// Penalty cap, guards against ill-conditioning.
    pub mu_max: f64,
    pub max_iter: usize,
    /// Initial penalty is mu0_scale / ||X||_2.
    pub mu0_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            beta: 1.1,
            epsilon: 1e-7,
            mu_max: 1e7,
            max_iter: 1000,
            mu0_scale: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.beta > 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "beta must exceed 1, got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.mu0_scale > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "mu0_scale must be positive, got {}",
                self.mu0_scale
            )));
        }
        if self.max_iter < 1 {
            return Err(SolverError::InvalidConfig("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Live ADMM variables. H and B are d1 x d2, E and the multiplier Z are
/// n1 x n2, the multiplier N is d1 x d2.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub h: DenseMatrix,
    pub b: DenseMatrix,
    pub e: DenseMatrix,
    pub z: DenseMatrix,
    pub n: DenseMatrix,
    pub mu: f64,
    pub iter: usize,
    pub r_primal: f64,
    pub r_side: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub iter: usize,
    pub r_primal: f64,
    pub r_side: f64,
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Recovered low-rank component U H* V^T.
    pub l: DenseMatrix,
    pub e: DenseMatrix,
    pub h: DenseMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<ResidualRecord>,
    pub model: Model,
}

/// E-step: soft threshold on observed entries, pass-through elsewhere.
/// R = X - U H V^T + Z / mu; E = S_{lambda/mu}(R) o W + R o (1 - W).
pub fn update_e(state: &SolverState, problem: &Problem) -> DenseMatrix {
    let l = problem.lift(&state.h);
    let tau = problem.lambda / state.mu;
    let inv_mu = 1.0 / state.mu;
    let mut e = DenseMatrix::zeros(problem.n1(), problem.n2());
    let x = problem.x.as_slice();
    let w = problem.w.as_slice();
    let ls = l.as_slice();
    let zs = state.z.as_slice();
    for (idx, out) in e.as_mut_slice().iter_mut().enumerate() {
        let r = x[idx] - ls[idx] + zs[idx] * inv_mu;
        *out = if w[idx] == 1.0 {
            shrink_scalar(r, tau)
        } else {
            r
        };
    }
    e
}

/// H-step: H = U^T D_{1/(2mu)}(P) V with
/// P = (X - E + Z/mu + U (B + U^T S V - N/mu) V^T) / 2.
pub fn update_h(state: &SolverState, problem: &Problem) -> Result<DenseMatrix, SolverError> {
    let inv_mu = 1.0 / state.mu;
    let inner = state
        .b
        .add(problem.side_projection())
        .sub(&state.n.scale(inv_mu));
    let p = problem
        .x
        .sub(&state.e)
        .add(&state.z.scale(inv_mu))
        .add(&problem.lift(&inner))
        .scale(0.5);
    let thresholded = svt(&p, 1.0 / (2.0 * state.mu))?;
    Ok(problem.project(&thresholded))
}

/// B-step: B = D_{alpha/mu}(Q) with Q = H - U^T S V + N/mu. The
/// threshold-free alpha = 0 case returns Q exactly, keeping the
/// featureless and side-information-free reductions exact.
pub fn update_b(state: &SolverState, problem: &Problem) -> Result<DenseMatrix, SolverError> {
    let q = state
        .h
        .sub(problem.side_projection())
        .add(&state.n.scale(1.0 / state.mu));
    if problem.alpha == 0.0 {
        return Ok(q);
    }
    Ok(svt(&q, problem.alpha / state.mu)?)
}

/// Multiplier step: Z += mu (X - E - U H V^T), N += mu (H - B - U^T S V).
pub fn update_multipliers(
    state: &SolverState,
    problem: &Problem,
) -> (DenseMatrix, DenseMatrix) {
    let primal = problem.x.sub(&state.e).sub(&problem.lift(&state.h));
    let side = state.h.sub(&state.b).sub(problem.side_projection());
    (
        state.z.add(&primal.scale(state.mu)),
        state.n.add(&side.scale(state.mu)),
    )
}

/// Stepwise access to the ADMM iteration; `solve` drives it to
/// convergence, tests and oracles may drive it one iterate at a time.
pub struct Solver {
    problem: Problem,
    config: SolverConfig,
    state: SolverState,
    x_fro: f64,
    history: Vec<ResidualRecord>,
}

impl Solver {
    pub fn new(problem: Problem, config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        let spectral = problem.x.spectral_norm()?;
        if spectral == 0.0 {
            return Err(SolverError::DegenerateObservation);
        }
        let mu0 = config.mu0_scale / spectral;
        if config.mu_max < mu0 {
            return Err(SolverError::InvalidConfig(format!(
                "mu_max {} is below the initial penalty {mu0}",
                config.mu_max
            )));
        }
        let (d1, d2) = (problem.d1(), problem.d2());
        let (n1, n2) = (problem.n1(), problem.n2());
        let x_fro = problem.x.fro_norm();
        Ok(Solver {
            state: SolverState {
                h: DenseMatrix::zeros(d1, d2),
                b: DenseMatrix::zeros(d1, d2),
                e: DenseMatrix::zeros(n1, n2),
                z: DenseMatrix::zeros(n1, n2),
                n: DenseMatrix::zeros(d1, d2),
                mu: mu0,
                iter: 0,
                r_primal: f64::INFINITY,
                r_side: f64::INFINITY,
            },
            problem,
            config,
            x_fro,
            history: Vec::new(),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    /// Runs one E -> H -> B -> multipliers -> continuation cycle and
    /// returns whether the KKT residuals fell below the tolerance.
    pub fn step(&mut self) -> Result<bool, SolverError> {
        self.state.e = update_e(&self.state, &self.problem);
        self.state.h = update_h(&self.state, &self.problem)?;
        self.state.b = update_b(&self.state, &self.problem)?;

        let primal = self
            .problem
            .x
            .sub(&self.state.e)
            .sub(&self.problem.lift(&self.state.h));
        let side = self
            .state
            .h
            .sub(&self.state.b)
            .sub(self.problem.side_projection());
        self.state.z = self.state.z.add(&primal.scale(self.state.mu));
        self.state.n = self.state.n.add(&side.scale(self.state.mu));

        self.state.r_primal = primal.fro_norm() / self.x_fro;
        self.state.r_side = side.fro_norm() / self.x_fro;
        self.state.iter += 1;
        self.history.push(ResidualRecord {
            iter: self.state.iter,
            r_primal: self.state.r_primal,
            r_side: self.state.r_side,
            mu: self.state.mu,
        });
        let converged =
            self.state.r_primal.max(self.state.r_side) < self.config.epsilon;
        self.state.mu = (self.state.mu * self.config.beta).min(self.config.mu_max);
        Ok(converged)
    }

    pub fn run(mut self) -> Result<SolveReport, SolverError> {
        let mut converged = false;
        while self.state.iter < self.config.max_iter {
            if self.step()? {
                converged = true;
                break;
            }
        }
        Ok(SolveReport {
            l: self.problem.lift(&self.state.h),
            e: self.state.e,
            h: self.state.h,
            converged,
            iterations: self.state.iter,
            residual_history: self.history,
            model: self.problem.model,
        })
    }
}

/// Solves a problem to convergence or the iteration cap. Non-convergence
/// is reported in the result, never as an error.
pub fn solve(problem: Problem, config: SolverConfig) -> Result<SolveReport, SolverError> {
    Solver::new(problem, config)?.run()
}

/// Dedicated single-constraint path for PCP and masked PCP, kept as an
/// independent route for the reduction-equivalence checks. Same update
/// schedule as the full solver with the B bookkeeping eliminated by
/// algebra.
pub struct PcpSolver {
    x: DenseMatrix,
    w: DenseMatrix,
    lambda: f64,
    config: SolverConfig,
    pub l: DenseMatrix,
    pub e: DenseMatrix,
    z: DenseMatrix,
    mu: f64,
    iter: usize,
    x_fro: f64,
    pub r_primal: f64,
    history: Vec<ResidualRecord>,
    model: Model,
}

impl PcpSolver {
    pub fn new(
        x: DenseMatrix,
        w: DenseMatrix,
        lambda: f64,
        config: SolverConfig,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        if w.shape() != x.shape() {
            return Err(SolverError::ShapeMismatch {
                what: "mask W",
                expected: format!("{}x{}", x.rows(), x.cols()),
                got: format!("{}x{}", w.rows(), w.cols()),
            });
        }
        let spectral = x.spectral_norm()?;
        if spectral == 0.0 {
            return Err(SolverError::DegenerateObservation);
        }
        let mu0 = config.mu0_scale / spectral;
        let model = if w.as_slice().iter().all(|&v| v == 1.0) {
            Model::Pcp
        } else {
            Model::Pcpm
        };
        let (n1, n2) = x.shape();
        let x_fro = x.fro_norm();
        Ok(PcpSolver {
            l: DenseMatrix::zeros(n1, n2),
            e: DenseMatrix::zeros(n1, n2),
            z: DenseMatrix::zeros(n1, n2),
            mu: mu0,
            iter: 0,
            x_fro,
            r_primal: f64::INFINITY,
            history: Vec::new(),
            model,
            x,
            w,
            lambda,
            config,
        })
    }

    pub fn step(&mut self) -> Result<bool, SolverError> {
        let inv_mu = 1.0 / self.mu;
        let tau = self.lambda * inv_mu;
        let mut e = DenseMatrix::zeros(self.x.rows(), self.x.cols());
        for (idx, out) in e.as_mut_slice().iter_mut().enumerate() {
            let r = self.x.as_slice()[idx] - self.l.as_slice()[idx]
                + self.z.as_slice()[idx] * inv_mu;
            *out = if self.w.as_slice()[idx] == 1.0 {
                shrink_scalar(r, tau)
            } else {
                r
            };
        }
        self.e = e;
        let p = self
            .x
            .sub(&self.e)
            .add(&self.z.scale(inv_mu))
            .add(&self.l)
            .scale(0.5);
        self.l = svt(&p, 1.0 / (2.0 * self.mu))?;
        let primal = self.x.sub(&self.e).sub(&self.l);
        self.z = self.z.add(&primal.scale(self.mu));
        self.r_primal = primal.fro_norm() / self.x_fro;
        self.iter += 1;
        self.history.push(ResidualRecord {
            iter: self.iter,
            r_primal: self.r_primal,
            r_side: 0.0,
            mu: self.mu,
        });
        let converged = self.r_primal < self.config.epsilon;
        self.mu = (self.mu * self.config.beta).min(self.config.mu_max);
        Ok(converged)
    }

    pub fn run(mut self) -> Result<SolveReport, SolverError> {
        let mut converged = false;
        while self.iter < self.config.max_iter {
            if self.step()? {
                converged = true;
                break;
            }
        }
        Ok(SolveReport {
            h: self.l.clone(),
            l: self.l,
            e: self.e,
            converged,
            iterations: self.iter,
            residual_history: self.history,
            model: self.model,
        })
    }
}

/// Convenience wrapper for the dedicated PCP/PCPM route.
pub fn solve_pcp(
    x: DenseMatrix,
    w: DenseMatrix,
    lambda: f64,
    config: SolverConfig,
) -> Result<SolveReport, SolverError> {
    PcpSolver::new(x, w, lambda, config)?.run()
}
