//! Generic mixed-cone program in inequality form:
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x = b
//!             G x + s = h,   s ∈ ℝˡ₊ × S^{d₁}₊ × … × S^{d_k}₊
//! ```
//!
//! with dual `maximize −bᵀy − hᵀz` subject to `c + Aᵀy + Gᵀz = 0`, `z ∈ K`.
//! The structured coherence programs lower to this form, and the linear
//! programs used for basis pursuit and certificates are built in it directly.

use serde::{Deserialize, Serialize};

use super::cone::svec_len;
use super::ConicError;
use crate::numerics::{Matrix, Vector};

/// One positive semidefinite block `smat(h − G x) ⪰ 0`. Rows of `g` and
/// entries of `h` are in packed (`svec`) coordinates.
#[derive(Debug, Clone)]
pub struct PsdConstraint {
    pub order: usize,
    pub g: Matrix,
    pub h: Vector,
}

/// Optional warm start. Slacks are always derived as `h − G x` and shifted
/// into the interior when necessary.
#[derive(Debug, Clone, Default)]
pub struct StartPoint {
    pub x: Option<Vector>,
    pub y: Option<Vector>,
    pub z_lin: Option<Vector>,
    pub z_psd: Option<Vec<Matrix>>,
}

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub c: Vector,
    pub a: Matrix,
    pub b: Vector,
    pub g_lin: Matrix,
    pub h_lin: Vector,
    pub psd: Vec<PsdConstraint>,
    pub start: StartPoint,
}

impl ConeProgram {
    /// Program with `n` variables, objective `c` and no constraints yet.
    pub fn new(c: Vector) -> Self {
        let n = c.len();
        Self {
            c,
            a: Matrix::zeros(0, n),
            b: Vector::zeros(0),
            g_lin: Matrix::zeros(0, n),
            h_lin: Vector::zeros(0),
            psd: Vec::new(),
            start: StartPoint::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    /// Barrier degree `l + Σ dₖ`.
    pub fn degree(&self) -> usize {
        self.g_lin.nrows() + self.psd.iter().map(|c| c.order).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.num_vars();
        let mismatch = |what: &str| Err(ConicError::DimensionMismatch(what.to_string()));
        if n == 0 {
            return mismatch("program has no variables");
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return mismatch("equality block does not match variable count");
        }
        if self.g_lin.ncols() != n || self.g_lin.nrows() != self.h_lin.len() {
            return mismatch("linear cone block does not match variable count");
        }
        for blk in &self.psd {
            let len = svec_len(blk.order);
            if blk.order == 0 || blk.g.ncols() != n || blk.g.nrows() != len || blk.h.len() != len {
                return mismatch("semidefinite block has inconsistent dimensions");
            }
        }
        if self.degree() == 0 {
            return mismatch("program has no conic constraints");
        }
        let finite = self.c.iter().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.g_lin.iter().all(|v| v.is_finite())
            && self.h_lin.iter().all(|v| v.is_finite())
            && self
                .psd
                .iter()
                .all(|c| c.g.iter().chain(c.h.iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(ConicError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Complementarity and objective-gap tolerance.
    pub gap_tol: f64,
    /// Relative primal and dual residual tolerance.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            gap_tol: 1e-7,
            feas_tol: 1e-7,
            max_iter: 200,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Complementarity `sᵀz` at the start of the iteration.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Smallest slack entry or slack-block eigenvalue.
    pub min_slack: f64,
    pub step: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct ProgramSolution {
    pub x: Vector,
    /// Equality multipliers; rows dropped by presolve get zero.
    pub y: Vector,
    pub s_lin: Vector,
    pub z_lin: Vector,
    pub s_psd: Vec<Matrix>,
    pub z_psd: Vec<Matrix>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Complementarity `sᵀz`.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub dropped_rows: Vec<usize>,
    pub history: Vec<IterationLog>,
}

/// Relative threshold below which an equality row is considered a linear
/// combination of the rows kept before it.
pub const DEPENDENT_ROW_TOL: f64 = 1e-9;

/// Drops equality rows that are linearly dependent on earlier rows, after
/// checking they are consistent. Returns the kept row indices.
pub(crate) fn independent_rows(a: &Matrix, b: &Vector) -> Result<Vec<usize>, ConicError> {
    let n = a.ncols();
    let mut basis: Vec<Vector> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, row) in a.row_iter().enumerate() {
        let orig = row.transpose();
        let norm = orig.norm();
        if norm == 0.0 {
            if b[i].abs() > DEPENDENT_ROW_TOL * (1.0 + b.amax()) {
                return Err(ConicError::InconsistentEqualities { row: i });
            }
            dropped.push(i);
            continue;
        }
        let mut r = orig.clone();
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn > DEPENDENT_ROW_TOL * norm && basis.len() < n {
            basis.push(r / rn);
            kept.push(i);
        } else {
            dropped.push(i);
        }
    }
    if !dropped.is_empty() {
        let keep_t = Matrix::from_fn(n, kept.len(), |r, c| a[(kept[c], r)]);
        let b_keep = Vector::from_iterator(kept.len(), kept.iter().map(|&i| b[i]));
        for &i in &dropped {
            if a.row(i).norm() == 0.0 {
                continue;
            }
            let target = a.row(i).transpose();
            let coeffs = crate::numerics::least_squares(&keep_t, &target)
                .map_err(|_| ConicError::InconsistentEqualities { row: i })?;
            let implied = coeffs.dot(&b_keep);
            let scale = 1.0 + b[i].abs() + coeffs.abs().dot(&b_keep.abs());
            if (implied - b[i]).abs() > 1e-7 * scale {
                return Err(ConicError::InconsistentEqualities { row: i });
            }
        }
        log::debug!(
            "dropped {} linearly dependent equality rows of {}",
            dropped.len(),
            a.nrows()
        );
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presolve_keeps_independent_rows() {
        let a = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let b = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(independent_rows(&a, &b).unwrap(), vec![0, 1]);
        let bad = Vector::from_vec(vec![1.0, 2.0, 4.0]);
        assert!(matches!(
            independent_rows(&a, &bad),
            Err(ConicError::InconsistentEqualities { row: 2 })
        ));
    }
}
