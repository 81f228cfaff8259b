//! Dictionary feature learning: orthogonal matching pursuit for the
//! sparse-coding stage and K-SVD atom updates. Used to derive U/V
//! features for denoising workflows when no ground truth is available.

use crate::numerics::{svd, DenseMatrix, NumericsError};
use crate::rng::{rng_from, SeededRng};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KsvdError {
    #[error("input matrix is zero; nothing to learn")]
    DegenerateInput,
    #[error("atom count {c} exceeds sample count {m}")]
    TooManyAtoms { c: usize, m: usize },
    #[error("sparsity {t} exceeds atom count {c}")]
    SparsityTooLarge { t: usize, c: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

/// A learned dictionary: unit-norm atoms D, sparse codes B with at most
/// `t` nonzeros per column, and the per-iteration reconstruction errors.
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub d: DenseMatrix,
    pub b: DenseMatrix,
    pub t: usize,
    pub history: Vec<f64>,
}

impl Dictionary {
    pub fn save(&self, atoms_path: &std::path::Path, codes_path: &std::path::Path) -> Result<(), KsvdError> {
        crate::io::write_matrix(atoms_path, &self.d)?;
        crate::io::write_matrix(codes_path, &self.b)?;
        Ok(())
    }

    pub fn load(
        atoms_path: &std::path::Path,
        codes_path: &std::path::Path,
        t: usize,
    ) -> Result<Dictionary, KsvdError> {
        Ok(Dictionary {
            d: crate::io::read_matrix(atoms_path)?,
            b: crate::io::read_matrix(codes_path)?,
            t,
            history: Vec::new(),
        })
    }
}

const OMP_RESIDUAL_TOL: f64 = 1e-10;

/// Greedy orthogonal matching pursuit: picks at most `t` atoms, then
/// least-squares refits so the residual is orthogonal to every selected
/// atom. Returns a dense length-c code.
pub fn omp(dictionary: &DenseMatrix, x: &[f64], t: usize) -> Vec<f64> {
    let n = dictionary.rows();
    let c = dictionary.cols();
    assert_eq!(x.len(), n, "signal length must match atom length");
    let mut code = vec![0.0; c];
    let mut residual = x.to_vec();
    let mut selected: Vec<usize> = Vec::new();

    for _ in 0..t.min(c) {
        let norm: f64 = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < OMP_RESIDUAL_TOL {
            break;
        }
        // Atom most correlated with the residual.
        let mut best = None;
        let mut best_abs = 0.0;
        for j in 0..c {
            if selected.contains(&j) {
                continue;
            }
            let corr: f64 = (0..n).map(|i| dictionary[(i, j)] * residual[i]).sum();
            if corr.abs() > best_abs {
                best_abs = corr.abs();
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        if best_abs < OMP_RESIDUAL_TOL {
            break;
        }
        selected.push(j);

        // Least squares on the selected atoms via normal equations.
        let k = selected.len();
        let gram = DMatrix::from_fn(k, k, |a, b| {
            (0..n)
                .map(|i| dictionary[(i, selected[a])] * dictionary[(i, selected[b])])
                .sum()
        });
        let rhs = DVector::from_fn(k, |a, _| {
            (0..n).map(|i| dictionary[(i, selected[a])] * x[i]).sum()
        });
        let Some(chol) = Cholesky::new(gram) else {
            selected.pop();
            break;
        };
        let coef = chol.solve(&rhs);
        for i in 0..n {
            let mut fit = 0.0;
            for (a, &j) in selected.iter().enumerate() {
                fit += coef[a] * dictionary[(i, j)];
            }
            residual[i] = x[i] - fit;
        }
        for v in &mut code {
            *v = 0.0;
        }
        for (a, &j) in selected.iter().enumerate() {
            code[j] = coef[a];
        }
    }
    code
}

fn reconstruction_error(m: &DenseMatrix, d: &DenseMatrix, b: &DenseMatrix) -> f64 {
    m.sub(&d.dot(b)).fro_norm()
}

fn normalize_column(v: &mut [f64]) -> f64 {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
    norm
}

fn init_dictionary(m: &DenseMatrix, c: usize, rng: &mut SeededRng) -> DenseMatrix {
    // Seed atoms from shuffled training columns, preferring columns that
    // are not near-duplicates of atoms already taken; duplicate initial
    // atoms trap the alternation in poor local minima when the training
    // set has repeated columns.
    let mut order: Vec<usize> = (0..m.cols()).collect();
    order.shuffle(rng);
    let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(c);
    for pass in 0..2 {
        for &col in &order {
            if atoms.len() == c {
                break;
            }
            let mut v = m.column(col);
            if normalize_column(&mut v) == 0.0 {
                continue;
            }
            let duplicate = atoms.iter().any(|a| {
                let dot: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
                dot.abs() > COHERENCE_LIMIT
            });
            if pass == 0 && duplicate {
                continue;
            }
            atoms.push(v);
        }
    }
    // Degenerate tail (fewer nonzero columns than atoms): fill with
    // random unit vectors so the Gram stays invertible.
    while atoms.len() < c {
        let mut v: Vec<f64> = (0..m.rows()).map(|_| crate::rng::gaussian(rng)).collect();
        normalize_column(&mut v);
        atoms.push(v);
    }
    let mut d = DenseMatrix::zeros(m.rows(), c);
    for (j, v) in atoms.iter().enumerate() {
        d.set_column(j, v);
    }
    d
}

fn code_all(d: &DenseMatrix, m: &DenseMatrix, t: usize) -> DenseMatrix {
    let cols: Vec<Vec<f64>> = (0..m.cols()).map(|i| m.column(i)).collect();
    #[cfg(feature = "parallel")]
    let codes: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        cols.par_iter().map(|x| omp(d, x, t)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let codes: Vec<Vec<f64>> = cols.iter().map(|x| omp(d, x, t)).collect();
    let mut b = DenseMatrix::zeros(d.cols(), m.cols());
    for (i, code) in codes.iter().enumerate() {
        for (j, &v) in code.iter().enumerate() {
            b[(j, i)] = v;
        }
    }
    b
}

/// Training column indices sorted by reconstruction error, worst first.
fn columns_by_error(m: &DenseMatrix, d: &DenseMatrix, b: &DenseMatrix) -> Vec<usize> {
    let approx = d.dot(b);
    let mut errors: Vec<(usize, f64)> = (0..m.cols())
        .map(|i| {
            let err: f64 = (0..m.rows())
                .map(|r| {
                    let diff = m[(r, i)] - approx[(r, i)];
                    diff * diff
                })
                .sum();
            (i, err)
        })
        .collect();
    errors.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    errors.into_iter().map(|(i, _)| i).collect()
}

const COHERENCE_LIMIT: f64 = 0.99;

fn max_coherence_against(d: &DenseMatrix, v: &[f64], skip: usize) -> f64 {
    let mut worst = 0.0f64;
    for other in 0..d.cols() {
        if other == skip {
            continue;
        }
        let dot: f64 = (0..d.rows()).map(|r| v[r] * d[(r, other)]).sum();
        worst = worst.max(dot.abs());
    }
    worst
}

/// Replaces atom `j` by the worst-reconstructed training column that does
/// not duplicate another atom; falls back to a seeded random direction
/// when every candidate is coherent. Zeroes the atom's codes.
fn replace_atom(
    m: &DenseMatrix,
    d: &mut DenseMatrix,
    b: &mut DenseMatrix,
    j: usize,
    rng: &mut SeededRng,
) {
    let mut replacement = None;
    for col in columns_by_error(m, d, b) {
        let mut v = m.column(col);
        if normalize_column(&mut v) == 0.0 {
            continue;
        }
        if max_coherence_against(d, &v, j) <= COHERENCE_LIMIT {
            replacement = Some(v);
            break;
        }
    }
    let v = replacement.unwrap_or_else(|| {
        let mut v: Vec<f64> = (0..m.rows()).map(|_| crate::rng::gaussian(rng)).collect();
        normalize_column(&mut v);
        v
    });
    d.set_column(j, &v);
    for i in 0..m.cols() {
        b[(j, i)] = 0.0;
    }
}

/// One K-SVD atom-update sweep: rank-1 refits on the restricted residual,
/// with unused or near-duplicate atoms replaced.
fn update_atoms(
    m: &DenseMatrix,
    d: &mut DenseMatrix,
    b: &mut DenseMatrix,
    rng: &mut SeededRng,
) -> Result<(), KsvdError> {
    let c = d.cols();
    for j in 0..c {
        let usage: Vec<usize> = (0..m.cols()).filter(|&i| b[(j, i)] != 0.0).collect();
        let coherent = max_coherence_against(d, &d.column(j), j) > COHERENCE_LIMIT;
        if usage.is_empty() || coherent {
            replace_atom(m, d, b, j, rng);
            continue;
        }
        // Restricted residual with atom j's contribution added back.
        let mut restricted = DenseMatrix::zeros(m.rows(), usage.len());
        for (col_out, &i) in usage.iter().enumerate() {
            for r in 0..m.rows() {
                let mut approx = 0.0;
                for a in 0..c {
                    if a != j {
                        approx += d[(r, a)] * b[(a, i)];
                    }
                }
                restricted[(r, col_out)] = m[(r, i)] - approx;
            }
        }
        let factors = svd(&restricted)?;
        if factors.singular_values.is_empty() || factors.singular_values[0] == 0.0 {
            continue;
        }
        let sigma = factors.singular_values[0];
        for r in 0..m.rows() {
            d[(r, j)] = factors.left[(r, 0)];
        }
        for (col_out, &i) in usage.iter().enumerate() {
            b[(j, i)] = sigma * factors.right[(col_out, 0)];
        }
    }
    Ok(())
}

/// Alternates OMP coding and atom-by-atom rank-1 updates on the
/// restricted residual for `iterations` rounds.
pub fn ksvd_learn(
    m: &DenseMatrix,
    c: usize,
    t: usize,
    iterations: usize,
    seed: u64,
) -> Result<Dictionary, KsvdError> {
    if m.fro_norm() == 0.0 {
        return Err(KsvdError::DegenerateInput);
    }
    if c > m.cols() {
        return Err(KsvdError::TooManyAtoms { c, m: m.cols() });
    }
    if t > c {
        return Err(KsvdError::SparsityTooLarge { t, c });
    }
    let mut rng = rng_from(seed);
    let mut d = init_dictionary(m, c, &mut rng);
    let mut b = DenseMatrix::zeros(c, m.cols());
    let mut history = Vec::with_capacity(iterations);

    for _round in 0..iterations {
        b = code_all(&d, m, t);
        update_atoms(m, &mut d, &mut b, &mut rng)?;
        history.push(reconstruction_error(m, &d, &b));
    }
    Ok(Dictionary { d, b, t, history })
}
