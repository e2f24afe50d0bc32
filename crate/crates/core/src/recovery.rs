//! Sparse recovery: orthogonal matching pursuit and basis pursuit, plus the
//! singular-value bounds on noise amplification by a preconditioner.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{self, ConeProgram, ConicError, SolveStatus, SolverSettings};
use crate::numerics::{self, Matrix, NumericsError, Vector};

/// Entries of an estimate above this magnitude form its support.
pub const SUPPORT_TOL: f64 = 1e-8;
/// Relative error below which a recovery counts as exact.
pub const SUCCESS_TOL: f64 = 1e-4;
/// Columns farther than this from unit norm are normalized before OMP.
pub const OMP_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("measurement vector has {got} entries, matrix has {rows} rows")]
    DimensionMismatch { rows: usize, got: usize },
    #[error("measurements are not in the range of the matrix")]
    Infeasible,
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, RecoveryError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Omp,
    BasisPursuit,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub estimate: Vector,
    /// Indices with `|x̂ᵢ| > 10⁻⁸`, ascending.
    pub support: Vec<usize>,
    /// `‖Ax̂ − y‖₂`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: Method,
    /// Solver status for basis pursuit.
    pub status: Option<SolveStatus>,
}

impl RecoveryResult {
    fn new(
        a: &Matrix,
        y: &Vector,
        estimate: Vector,
        iterations: usize,
        method: Method,
        status: Option<SolveStatus>,
    ) -> Self {
        let support = support_of(&estimate);
        let residual_norm = (a * &estimate - y).norm();
        Self {
            estimate,
            support,
            residual_norm,
            iterations,
            method,
            status,
        }
    }
}

pub fn support_of(x: &Vector) -> Vec<usize> {
    (0..x.len()).filter(|&i| x[i].abs() > SUPPORT_TOL).collect()
}

/// `‖x̂ − x‖₂ / ‖x‖₂ ≤ 10⁻⁴`.
pub fn is_success(estimate: &Vector, truth: &Vector) -> bool {
    let n = truth.norm();
    if n == 0.0 {
        return estimate.norm() == 0.0;
    }
    (estimate - truth).norm() / n <= SUCCESS_TOL
}

fn check_dims(a: &Matrix, y: &Vector) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(RecoveryError::DimensionMismatch {
            rows: a.nrows(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Orthogonal matching pursuit: repeatedly adds the column most correlated
/// with the residual and refits by least squares on the support. Stops after
/// `k_max` atoms, when `‖r‖₂ ≤ res_tol`, or when no new atom is usable.
pub fn omp(a: &Matrix, y: &Vector, k_max: usize, res_tol: f64) -> Result<RecoveryResult> {
    check_dims(a, y)?;
    let big_m = a.ncols();
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let needs_norm = norms.iter().any(|n| (n - 1.0).abs() > OMP_NORM_TOL);
    let work = if needs_norm {
        log::warn!("OMP dictionary columns are not unit norm; normalizing");
        let mut w = a.clone();
        for (mut c, n) in w.column_iter_mut().zip(&norms) {
            c /= *n;
        }
        w
    } else {
        a.clone()
    };

    let mut support: Vec<usize> = Vec::new();
    let mut coeffs = Vector::zeros(0);
    let mut residual = y.clone();
    let mut iterations = 0;
    let floor = numerics::NORM_FLOOR * (1.0 + y.norm());
    while support.len() < k_max.min(big_m) && residual.norm() > res_tol {
        let corr = work.transpose() * &residual;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..big_m {
            if support.contains(&i) {
                continue;
            }
            let c = corr[i].abs();
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        let Some((atom, c)) = best else { break };
        if c <= floor {
            break;
        }
        support.push(atom);
        let sub = Matrix::from_fn(work.nrows(), support.len(), |r, k| work[(r, support[k])]);
        match numerics::least_squares(&sub, y) {
            Ok(x) => {
                residual = y - &sub * &x;
                coeffs = x;
                iterations += 1;
            }
            Err(NumericsError::RankDeficient { .. }) => {
                support.pop();
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut estimate = Vector::zeros(big_m);
    for (k, &i) in support.iter().enumerate() {
        estimate[i] = if needs_norm {
            coeffs[k] / norms[i]
        } else {
            coeffs[k]
        };
    }
    Ok(RecoveryResult::new(
        a,
        y,
        estimate,
        iterations,
        Method::Omp,
        None,
    ))
}

/// Settings used by [`basis_pursuit`] when the caller has no preference.
pub fn basis_pursuit_settings() -> SolverSettings {
    SolverSettings {
        gap_tol: 1e-9,
        feas_tol: 1e-10,
        ..SolverSettings::default()
    }
}

/// Rewrites `Ax = y` as `Qᵀx = R⁻ᵀy` from `Aᵀ = QR`. The feasible set only
/// depends on the row space, so `A` and `GA` give the same program. Rank
/// deficient systems are returned unchanged.
fn orthonormal_rows(a: &Matrix, y: &Vector) -> (Matrix, Vector) {
    let m = a.nrows();
    if m > a.ncols() {
        return (a.clone(), y.clone());
    }
    let qr = a.transpose().qr();
    let r = qr.r();
    let diag = r.diagonal().abs();
    if diag.min() <= numerics::RANK_TOL * diag.max() {
        return (a.clone(), y.clone());
    }
    match r.transpose().solve_lower_triangular(y) {
        Some(rhs) => (qr.q().transpose(), rhs),
        None => (a.clone(), y.clone()),
    }
}

/// `min ‖x‖₁ s.t. Ax = y`, solved as the linear program over `x = u − v`,
/// `u, v ≥ 0`, minimizing `Σ(u + v)`.
pub fn basis_pursuit(a: &Matrix, y: &Vector, settings: &SolverSettings) -> Result<RecoveryResult> {
    check_dims(a, y)?;
    let (m, big_m) = a.shape();
    let (rows, rhs) = orthonormal_rows(a, y);
    let mut prog = ConeProgram::new(Vector::from_element(2 * big_m, 1.0));
    let mut eq = Matrix::zeros(m, 2 * big_m);
    eq.columns_mut(0, big_m).copy_from(&rows);
    eq.columns_mut(big_m, big_m).copy_from(&(-&rows));
    prog.a = eq;
    prog.b = rhs;
    prog.g_lin = -Matrix::identity(2 * big_m, 2 * big_m);
    prog.h_lin = Vector::zeros(2 * big_m);
    let sol = match conic::solve_program(&prog, settings) {
        Ok(s) => s,
        Err(ConicError::InconsistentEqualities { .. }) => return Err(RecoveryError::Infeasible),
        Err(e) => return Err(e.into()),
    };
    let estimate = sol.x.rows(0, big_m) - sol.x.rows(big_m, big_m);
    let result = RecoveryResult::new(
        a,
        y,
        estimate,
        sol.iterations,
        Method::BasisPursuit,
        Some(sol.status),
    );
    if result.residual_norm > 1e-4 * (1.0 + y.norm()) && sol.status != SolveStatus::Optimal {
        log::warn!(
            "basis pursuit stopped with status {} and residual {:e}",
            sol.status,
            result.residual_norm
        );
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBounds {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub kappa: f64,
}

/// Extreme singular values of `G`: for any residual `e`,
/// `σ_min ‖e‖ ≤ ‖G e‖ ≤ σ_max ‖e‖`.
pub fn noise_amplification_bounds(g: &Matrix) -> Result<NoiseBounds> {
    let s = numerics::singular_values(g)?;
    let sigma_max = s[0];
    let sigma_min = s[s.len() - 1];
    let kappa = if sigma_min > 0.0 {
        sigma_max / sigma_min
    } else {
        f64::INFINITY
    };
    Ok(NoiseBounds {
        sigma_min,
        sigma_max,
        kappa,
    })
}

/// A `k`-sparse vector of length `n` with a uniformly random support and
/// standard normal coefficients.
pub fn plant_sparse<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vector {
    let mut x = Vector::zeros(n);
    let mut support = index::sample(rng, n, k.min(n)).into_vec();
    support.sort_unstable();
    for i in support {
        let mut v: f64 = rng.sample(StandardNormal);
        while v.abs() < 1e-3 {
            v = rng.sample(StandardNormal);
        }
        x[i] = v;
    }
    x
}
