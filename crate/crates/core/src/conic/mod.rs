//! Primal-dual interior-point solver for the structured coherence programs.
//!
//! A [`ConicProblem`] minimizes a scalar `q` over a symmetric matrix `X ⪰ 0`
//! (or a nonnegative diagonal in LP mode), `q ≥ 0` and nonnegative slacks,
//! subject to linear equality rows
//!
//! ```text
//! ⟨Aₖ, X⟩ + aₖ q + cₖ s_{j(k)} = bₖ
//! ```
//!
//! and optional eigenvalue bounds on `X`. Every slack appears in exactly one
//! row, so a slack row is an inequality and is handled as a nonnegative-orthant
//! constraint; `X` is the only semidefinite block apart from the bound blocks.

pub mod cone;
mod ipm;
pub mod program;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Matrix, Vector};
use cone::{smat, svec, svec_identity, svec_len};
pub use ipm::solve_program;
pub use program::{
    ConeProgram, IterationLog, ProgramSolution, PsdConstraint, SolveStatus, SolverSettings,
    StartPoint,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("problem data contains NaN or infinite entries")]
    NonFinite,
    #[error("equality row {row} is inconsistent with the rows before it")]
    InconsistentEqualities { row: usize },
    #[error("coefficient matrix of row {row} is not symmetric")]
    NotSymmetric { row: usize },
    #[error("invalid slack layout: {0}")]
    InvalidSlack(String),
    #[error("invalid eigenvalue bounds t1 = {t1}, t2 = {t2} (need finite t1 >= t2 > 0)")]
    InvalidBounds { t1: f64, t2: f64 },
}

/// Role of a constraint row in a coherence program; used to group the
/// complementarity residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    /// `φᵢᵀ X φᵢ = 1`.
    Diagonal(usize),
    /// `⟨φ′ᵢⱼ, X⟩ + pᵢⱼ − q = 0`.
    Upper(usize, usize),
    /// `−⟨φ′ᵢⱼ, X⟩ + qᵢⱼ − q = 0`.
    Lower(usize, usize),
    Other,
}

#[derive(Debug, Clone)]
pub struct ConstraintRow {
    /// Symmetric coefficient matrix on `X`.
    pub coef: Matrix,
    pub q_coef: f64,
    /// Slack index and its (nonzero) coefficient.
    pub slack: Option<(usize, f64)>,
    pub rhs: f64,
    pub tag: RowTag,
}

/// Two-sided eigenvalue bounds on `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EigenBounds {
    /// `t₂ I ⪯ X ⪯ t₁ I`.
    Fixed { t1: f64, t2: f64 },
    /// `τ t₂ I ⪯ X ⪯ τ t₁ I` for a free scale `τ > 0`; bounds `κ(X)` by
    /// `t₁/t₂` without fixing the spectrum's location.
    Relative { t1: f64, t2: f64 },
}

impl EigenBounds {
    pub fn limits(&self) -> (f64, f64) {
        match *self {
            EigenBounds::Fixed { t1, t2 } | EigenBounds::Relative { t1, t2 } => (t1, t2),
        }
    }

    /// Upper bound on `κ(X)` implied by the constraint.
    pub fn condition_limit(&self) -> f64 {
        let (t1, t2) = self.limits();
        t1 / t2
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let (t1, t2) = self.limits();
        if !(t1.is_finite() && t2.is_finite() && t2 > 0.0 && t1 >= t2) {
            return Err(ConicError::InvalidBounds { t1, t2 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub psd_dim: usize,
    /// LP mode: `X = diag(σ)` with `σ ≥ 0`.
    pub diagonal: bool,
    pub rows: Vec<ConstraintRow>,
    pub slack_count: usize,
    pub eig_bounds: Option<EigenBounds>,
    /// Starting value of `q`; `X` starts at the identity.
    pub start_q: f64,
}

impl ConicProblem {
    pub fn new(psd_dim: usize) -> Self {
        Self {
            psd_dim,
            diagonal: false,
            rows: Vec::new(),
            slack_count: 0,
            eig_bounds: None,
            start_q: 1.0,
        }
    }

    pub fn num_equalities(&self) -> usize {
        self.rows.iter().filter(|r| r.slack.is_none()).count()
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let m = self.psd_dim;
        if m == 0 {
            return Err(ConicError::DimensionMismatch("psd_dim is zero".into()));
        }
        let mut seen = vec![false; self.slack_count];
        for (k, row) in self.rows.iter().enumerate() {
            if row.coef.nrows() != m || row.coef.ncols() != m {
                return Err(ConicError::DimensionMismatch(format!(
                    "row {k} coefficient is {}x{}, expected {m}x{m}",
                    row.coef.nrows(),
                    row.coef.ncols()
                )));
            }
            if !row.coef.iter().all(|v| v.is_finite())
                || !row.q_coef.is_finite()
                || !row.rhs.is_finite()
            {
                return Err(ConicError::NonFinite);
            }
            let asym = (&row.coef - row.coef.transpose()).amax();
            if asym > 1e-12 * (1.0 + row.coef.amax()) {
                return Err(ConicError::NotSymmetric { row: k });
            }
            if let Some((j, c)) = row.slack {
                if j >= self.slack_count {
                    return Err(ConicError::InvalidSlack(format!(
                        "row {k} references slack {j} of {}",
                        self.slack_count
                    )));
                }
                if seen[j] {
                    return Err(ConicError::InvalidSlack(format!("slack {j} used twice")));
                }
                if !(c.is_finite() && c != 0.0) {
                    return Err(ConicError::InvalidSlack(format!(
                        "row {k} has slack coefficient {c}"
                    )));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(ConicError::InvalidSlack(format!("slack {j} is unused")));
        }
        if let Some(b) = &self.eig_bounds {
            b.validate()?;
        }
        if !(self.start_q.is_finite() && self.start_q >= 0.0) {
            return Err(ConicError::NonFinite);
        }
        Ok(())
    }

    fn x_len(&self) -> usize {
        if self.diagonal {
            self.psd_dim
        } else {
            svec_len(self.psd_dim)
        }
    }

    fn x_coef(&self, coef: &Matrix) -> Vector {
        if self.diagonal {
            coef.diagonal()
        } else {
            svec(coef)
        }
    }

    fn x_identity(&self) -> Vector {
        if self.diagonal {
            Vector::from_element(self.psd_dim, 1.0)
        } else {
            svec_identity(self.psd_dim)
        }
    }

    fn has_scale(&self) -> bool {
        matches!(self.eig_bounds, Some(EigenBounds::Relative { .. }))
    }

    /// Lowers to the generic inequality form. Variables are `(X, q[, τ])`,
    /// linear cone rows are the slack rows, then `q ≥ 0`, then `σ ≥ 0` (LP
    /// mode) and the bounds in LP mode; PSD blocks are `X`, then the bounds.
    fn lower(&self) -> Layout {
        let m = self.psd_dim;
        let nx = self.x_len();
        let qi = nx;
        let ti = nx + 1;
        let n = nx + 1 + usize::from(self.has_scale());
        let mut c = Vector::zeros(n);
        c[qi] = 1.0;
        let mut prog = ConeProgram::new(c);

        let eq: Vec<usize> = (0..self.rows.len())
            .filter(|&k| self.rows[k].slack.is_none())
            .collect();
        let ineq: Vec<usize> = (0..self.rows.len())
            .filter(|&k| self.rows[k].slack.is_some())
            .collect();
        let full_row = |k: usize| {
            let row = &self.rows[k];
            let mut v = Vector::zeros(n);
            v.rows_mut(0, nx).copy_from(&self.x_coef(&row.coef));
            v[qi] = row.q_coef;
            v
        };

        prog.a = Matrix::zeros(eq.len(), n);
        prog.b = Vector::zeros(eq.len());
        for (r, &k) in eq.iter().enumerate() {
            prog.a.row_mut(r).copy_from(&full_row(k).transpose());
            prog.b[r] = self.rows[k].rhs;
        }

        let bounds_lin = self.diagonal && self.eig_bounds.is_some();
        let n_lin =
            ineq.len() + 1 + if self.diagonal { m } else { 0 } + if bounds_lin { 2 * m } else { 0 };
        let mut g = Matrix::zeros(n_lin, n);
        let mut h = Vector::zeros(n_lin);
        for (r, &k) in ineq.iter().enumerate() {
            let sign = self.rows[k].slack.unwrap().1.signum();
            g.row_mut(r).copy_from(&(full_row(k) * sign).transpose());
            h[r] = sign * self.rows[k].rhs;
        }
        let q_row = ineq.len();
        g[(q_row, qi)] = -1.0;
        let mut next = q_row + 1;
        if self.diagonal {
            for i in 0..m {
                g[(next + i, i)] = -1.0;
            }
            next += m;
        }
        if bounds_lin {
            let (t1, t2) = self.eig_bounds.unwrap().limits();
            for i in 0..m {
                // σᵢ ≥ t₂ (or τ t₂) and σᵢ ≤ t₁ (or τ t₁).
                g[(next + i, i)] = -1.0;
                g[(next + m + i, i)] = 1.0;
                if self.has_scale() {
                    g[(next + i, ti)] = t2;
                    g[(next + m + i, ti)] = -t1;
                } else {
                    h[next + i] = -t2;
                    h[next + m + i] = t1;
                }
            }
        }
        prog.g_lin = g;
        prog.h_lin = h;

        if !self.diagonal {
            let len = svec_len(m);
            let mut gx = Matrix::zeros(len, n);
            for i in 0..len {
                gx[(i, i)] = -1.0;
            }
            prog.psd.push(PsdConstraint {
                order: m,
                g: gx.clone(),
                h: Vector::zeros(len),
            });
            if let Some(b) = self.eig_bounds {
                let (t1, t2) = b.limits();
                let id = svec_identity(m);
                let mut lo = gx.clone();
                let mut hi = -gx;
                let (mut h_lo, mut h_hi) = (Vector::zeros(len), Vector::zeros(len));
                if self.has_scale() {
                    lo.column_mut(ti).copy_from(&(&id * t2));
                    hi.column_mut(ti).copy_from(&(&id * -t1));
                } else {
                    h_lo = &id * -t2;
                    h_hi = &id * t1;
                }
                prog.psd.push(PsdConstraint {
                    order: m,
                    g: lo,
                    h: h_lo,
                });
                prog.psd.push(PsdConstraint {
                    order: m,
                    g: hi,
                    h: h_hi,
                });
            }
        }

        // Start: X = I, q = start_q, τ centered in its bracket; unit
        // equality duals and small slack-row duals so the dual starts close to
        // feasible whenever Σ wₖ Aₖ is positive definite.
        let mut x0 = Vector::zeros(n);
        x0.rows_mut(0, nx).copy_from(&self.x_identity());
        x0[qi] = self.start_q;
        if let Some(EigenBounds::Relative { t1, t2 }) = self.eig_bounds {
            x0[ti] = 2.0 / (t1 + t2);
        }
        let y0 = Vector::from_element(eq.len(), 1.0);
        let w_small = 1.0 / (ineq.len() + eq.len()).max(1) as f64;
        let mut w = vec![0.0; self.rows.len()];
        for &k in &eq {
            w[k] = 1.0;
        }
        for &k in &ineq {
            w[k] = self.rows[k].slack.unwrap().1.signum() * w_small;
        }
        let mut z_lin = Vector::from_element(n_lin, 1.0);
        for r in 0..ineq.len() {
            z_lin[r] = w_small;
        }
        let zq = 1.0
            + (0..self.rows.len())
                .map(|k| w[k] * self.rows[k].q_coef)
                .sum::<f64>();
        z_lin[q_row] = if zq > 0.0 { zq } else { 1.0 };
        let mut start = StartPoint {
            x: Some(x0),
            y: Some(y0),
            z_lin: Some(z_lin),
            z_psd: None,
        };
        if !self.diagonal {
            let s = self.row_dual_matrix(&w);
            let z0 = if s.clone().cholesky().is_some() {
                s
            } else {
                Matrix::identity(m, m)
            };
            let mut zs = vec![z0];
            if self.eig_bounds.is_some() {
                zs.push(Matrix::identity(m, m));
                zs.push(Matrix::identity(m, m));
            }
            start.z_psd = Some(zs);
        } else if let Some(z) = start.z_lin.as_mut() {
            let diag = self.row_dual_matrix(&w).diagonal();
            for i in 0..m {
                if diag[i] > 0.0 {
                    z[q_row + 1 + i] = diag[i];
                }
            }
        }
        prog.start = start;
        Layout {
            prog,
            eq,
            ineq,
            q_row,
        }
    }

    /// `Σ wₖ Aₖ` for per-row multipliers `w`.
    pub fn row_dual_matrix(&self, w: &[f64]) -> Matrix {
        let m = self.psd_dim;
        let mut s = Matrix::zeros(m, m);
        for (row, &wk) in self.rows.iter().zip(w) {
            if wk != 0.0 {
                s += &row.coef * wk;
            }
        }
        s
    }
}

struct Layout {
    prog: ConeProgram,
    eq: Vec<usize>,
    ineq: Vec<usize>,
    q_row: usize,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Matrix,
    pub q: f64,
    /// Free scale `τ` of relative eigenvalue bounds.
    pub scale: Option<f64>,
    /// Slack values, indexed as in the problem.
    pub slacks: Vector,
    /// Multiplier of every constraint row in the convention
    /// `S = Σ wₖ Aₖ`; equality rows are free, a slack row with coefficient
    /// `c` has `w c ≥ 0`.
    pub row_duals: Vector,
    /// Dual matrix of the `X ⪰ 0` cone (diagonal in LP mode).
    pub dual_matrix: Matrix,
    /// Duals of the lower and upper eigenvalue-bound blocks, when present.
    pub bound_duals: Option<(Matrix, Matrix)>,
    /// Multiplier of `q ≥ 0`.
    pub q_dual: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub dropped_rows: Vec<usize>,
    pub history: Vec<IterationLog>,
}

/// Solves a structured problem. Failure to converge is a status, not an error.
pub fn solve(
    problem: &ConicProblem,
    settings: &SolverSettings,
) -> Result<ConicSolution, ConicError> {
    problem.validate()?;
    let layout = problem.lower();
    let sol = solve_program(&layout.prog, settings)?;
    let m = problem.psd_dim;
    let nx = problem.x_len();
    let x = if problem.diagonal {
        Matrix::from_diagonal(&sol.x.rows(0, m).clone_owned())
    } else {
        smat(sol.x.rows(0, nx).as_slice(), m)
    };
    let q = sol.x[nx];
    let scale = problem.has_scale().then(|| sol.x[nx + 1]);

    let mut slacks = Vector::zeros(problem.slack_count);
    let mut w = Vector::zeros(problem.rows.len());
    for (r, &k) in layout.eq.iter().enumerate() {
        w[k] = sol.y[r];
    }
    for (r, &k) in layout.ineq.iter().enumerate() {
        let (j, c) = problem.rows[k].slack.unwrap();
        slacks[j] = sol.s_lin[r] / c.abs();
        w[k] = c.signum() * sol.z_lin[r];
    }
    let dual_matrix = if problem.diagonal {
        Matrix::from_diagonal(&sol.z_lin.rows(layout.q_row + 1, m).clone_owned())
    } else {
        sol.z_psd[0].clone()
    };
    let bound_duals = if problem.diagonal {
        problem.eig_bounds.map(|_| {
            let base = layout.q_row + 1 + m;
            (
                Matrix::from_diagonal(&sol.z_lin.rows(base, m).clone_owned()),
                Matrix::from_diagonal(&sol.z_lin.rows(base + m, m).clone_owned()),
            )
        })
    } else {
        problem
            .eig_bounds
            .map(|_| (sol.z_psd[1].clone(), sol.z_psd[2].clone()))
    };
    let dropped_rows = sol.dropped_rows.iter().map(|&r| layout.eq[r]).collect();
    Ok(ConicSolution {
        x,
        q,
        scale,
        slacks,
        row_duals: w,
        dual_matrix,
        bound_duals,
        q_dual: sol.z_lin[layout.q_row],
        primal_objective: sol.primal_objective,
        dual_objective: sol.dual_objective,
        gap: sol.gap,
        primal_infeasibility: sol.primal_infeasibility,
        dual_infeasibility: sol.dual_infeasibility,
        status: sol.status,
        iterations: sol.iterations,
        dropped_rows,
        history: sol.history,
    })
}

/// Residuals of the optimality conditions of a coherence program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖X (Σ wₖ Aₖ − bound terms)‖_F` (diagonal entries only in LP mode).
    pub stationarity: f64,
    /// `max |wₖ sₖ|` over the upper-pair rows (and untagged slack rows).
    pub upper: f64,
    /// `max |wₖ sₖ|` over the lower-pair rows.
    pub lower: f64,
    /// `|q (1 + Σ wₖ aₖ)|`.
    pub scale: f64,
    /// Complementarity of the eigenvalue-bound blocks, zero without bounds.
    pub bounds: f64,
    /// `|q + Σ wₖ bₖ|`; zero at optimality when there are no bounds.
    pub objective: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.upper,
            self.lower,
            self.scale,
            self.bounds,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn kkt_residuals(problem: &ConicProblem, solution: &ConicSolution) -> KktResiduals {
    let w = solution.row_duals.as_slice();
    let mut z = problem.row_dual_matrix(w);
    let x = &solution.x;
    let mut bounds = 0.0;
    if let (Some(b), Some((lo, hi))) = (problem.eig_bounds, &solution.bound_duals) {
        let (t1, t2) = b.limits();
        let tau = solution.scale.unwrap_or(1.0);
        let id = Matrix::identity(problem.psd_dim, problem.psd_dim);
        z -= lo;
        z += hi;
        let lo_res = ((x - &id * (tau * t2)) * lo).norm();
        let hi_res = ((&id * (tau * t1) - x) * hi).norm();
        bounds = lo_res.max(hi_res);
    }
    let stationarity = if problem.diagonal {
        x.diagonal().component_mul(&z.diagonal()).norm()
    } else {
        (x * &z).norm()
    };
    let mut upper: f64 = 0.0;
    let mut lower: f64 = 0.0;
    for (k, row) in problem.rows.iter().enumerate() {
        if let Some((j, _)) = row.slack {
            let v = (w[k] * solution.slacks[j]).abs();
            match row.tag {
                RowTag::Lower(..) => lower = lower.max(v),
                _ => upper = upper.max(v),
            }
        }
    }
    let sum_q: f64 = problem
        .rows
        .iter()
        .zip(w)
        .map(|(r, wk)| wk * r.q_coef)
        .sum();
    let sum_b: f64 = problem.rows.iter().zip(w).map(|(r, wk)| wk * r.rhs).sum();
    KktResiduals {
        stationarity,
        upper,
        lower,
        scale: (solution.q * (1.0 + sum_q)).abs(),
        bounds,
        objective: (solution.q + sum_b).abs(),
    }
}
