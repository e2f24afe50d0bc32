//! Coherence-minimizing preconditioners.
//!
//! With `X = GᵀG`, the coherence of a unit-norm frame `GΦ` is the largest
//! `|φᵢᵀXφⱼ|` subject to `φᵢᵀXφᵢ = 1`, which is a semidefinite program in
//! `(X, q)`. This module builds that program and its variants (eigenvalue
//! bounds, diagonal `X`), turns the optimal `X` into `G`, projects onto the
//! nearest tight frame and checks the dual certificate that decides whether
//! any strict improvement over `μ(Φ)` exists.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{
    self, ConeProgram, ConicError, ConicProblem, ConstraintRow, EigenBounds, KktResiduals, RowTag,
    SolveStatus, SolverSettings,
};
use crate::frames::{self, Frame, FrameError};
use crate::numerics::{self, Matrix, NumericsError, Vector};

/// Tolerance for membership in the active sets `D⁺`, `D⁻`.
pub const ACTIVE_SET_TOL: f64 = 1e-6;
/// Largest ℓ∞ violation accepted as a feasible certificate.
pub const CERTIFICATE_TOL: f64 = 1e-7;
/// Smallest eigenvalue of `X` below which the factor is jittered.
pub const SINGULAR_X_TOL: f64 = 1e-9;
/// Relative singular value threshold for the squared-entry span.
pub const SQUARED_SPAN_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PreconditionError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("frame has coherence zero; there is nothing to certify")]
    ZeroCoherence,
    #[error("eigenvalue bounds t1 = {t1}, t2 = {t2} admit no unit-norm preconditioned frame")]
    InfeasibleBounds { t1: f64, t2: f64 },
    #[error("matrix is rank deficient (sigma_min/sigma_max = {0:e})")]
    RankDeficient(f64),
}

pub type Result<T> = std::result::Result<T, PreconditionError>;

/// `φ′ᵢⱼ = (φᵢφⱼᵀ + φⱼφᵢᵀ)/2`.
pub fn pair_matrix(phi_i: &Vector, phi_j: &Vector) -> Matrix {
    let a = phi_i * phi_j.transpose();
    (&a + a.transpose()) * 0.5
}

fn unit_norm(frame: &Frame) -> Frame {
    if frame.is_unit_norm() {
        frame.clone()
    } else {
        log::warn!("frame columns are not unit norm; normalizing");
        frame.normalized()
    }
}

/// Slack index of the upper row of pair `(i, j)`, `i < j`; the lower row
/// uses the next index.
fn pair_slack(big_m: usize, i: usize, j: usize) -> usize {
    let before = i * big_m - i * (i + 1) / 2;
    2 * (before + j - i - 1)
}

fn coherence_rows(frame: &Frame) -> ConicProblem {
    let m = frame.dim();
    let big_m = frame.len();
    let cols: Vec<Vector> = (0..big_m).map(|i| frame.column(i)).collect();
    let mut p = ConicProblem::new(m);
    for (i, c) in cols.iter().enumerate() {
        p.rows.push(ConstraintRow {
            coef: c * c.transpose(),
            q_coef: 0.0,
            slack: None,
            rhs: 1.0,
            tag: RowTag::Diagonal(i),
        });
    }
    for i in 0..big_m {
        for j in (i + 1)..big_m {
            let pm = pair_matrix(&cols[i], &cols[j]);
            let s = pair_slack(big_m, i, j);
            p.rows.push(ConstraintRow {
                coef: pm.clone(),
                q_coef: -1.0,
                slack: Some((s, 1.0)),
                rhs: 0.0,
                tag: RowTag::Upper(i, j),
            });
            p.rows.push(ConstraintRow {
                coef: -pm,
                q_coef: -1.0,
                slack: Some((s + 1, 1.0)),
                rhs: 0.0,
                tag: RowTag::Lower(i, j),
            });
        }
    }
    p.slack_count = big_m * (big_m - 1);
    p
}

/// The coherence program: minimize `q` subject to `φᵢᵀXφᵢ = 1`,
/// `±⟨φ′ᵢⱼ, X⟩ + slack − q = 0`, `X ⪰ 0`.
pub fn build_c1(frame: &Frame) -> Result<ConicProblem> {
    if frame.len() < 2 {
        return Err(FrameError::SingleColumn.into());
    }
    Ok(coherence_rows(&unit_norm(frame)))
}

/// The coherence program with `t₂ I ⪯ X ⪯ t₁ I`.
pub fn build_c2(frame: &Frame, t1: f64, t2: f64) -> Result<ConicProblem> {
    let bounds = EigenBounds::Fixed { t1, t2 };
    bounds.validate()?;
    let mut p = build_c1(frame)?;
    p.eig_bounds = Some(bounds);
    Ok(p)
}

/// The coherence program with `τ t₂ I ⪯ X ⪯ τ t₁ I` for a free `τ`, which
/// bounds `κ(X)` by `t₁/t₂` without pinning the scale of `X`.
pub fn build_c2_relative(frame: &Frame, t1: f64, t2: f64) -> Result<ConicProblem> {
    let bounds = EigenBounds::Relative { t1, t2 };
    bounds.validate()?;
    let mut p = build_c1(frame)?;
    p.eig_bounds = Some(bounds);
    Ok(p)
}

/// The linear program over diagonal `X = diag(σ)`.
pub fn build_diagonal_lp(frame: &Frame) -> Result<ConicProblem> {
    let mut p = build_c1(frame)?;
    p.diagonal = true;
    Ok(p)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActiveSets {
    /// Pairs `i < j` with `φᵢᵀXφⱼ ≥ q − τ`.
    pub plus: Vec<(usize, usize)>,
    /// Pairs `i < j` with `φᵢᵀXφⱼ ≤ −q + τ`.
    pub minus: Vec<(usize, usize)>,
}

impl ActiveSets {
    pub fn len(&self) -> usize {
        self.plus.len() + self.minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn active_sets(frame: &Frame, x: &Matrix, q: f64, tau: f64) -> ActiveSets {
    let phi = frame.matrix();
    let gram = phi.transpose() * x * phi;
    let mut sets = ActiveSets::default();
    for i in 0..frame.len() {
        for j in (i + 1)..frame.len() {
            let v = gram[(i, j)];
            if v >= q - tau {
                sets.plus.push((i, j));
            }
            if v <= -q + tau {
                sets.minus.push((i, j));
            }
        }
    }
    sets
}

/// Number of linearly independent vectors `(φ²₁ᵢ, …, φ²ₘᵢ)`; when it equals
/// `m` no diagonal preconditioner changes the coherence.
pub fn squared_span_dimension(frame: &Frame) -> usize {
    let sq = frame.matrix().map(|v| v * v);
    numerics::numerical_rank(&sq, SQUARED_SPAN_TOL).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    /// Upper-triangular `G` with `GᵀG = X` (plus jitter).
    pub g: Matrix,
    /// Multiple of the identity added before factorizing, zero if none.
    pub jitter: f64,
    pub min_eig: f64,
}

/// Factor `X = GᵀG` with `G = Lᵀ` from the Cholesky factor `L`. A matrix on
/// the boundary of the cone gets `10⁻⁹ tr(X)/m` added first.
pub fn extract_preconditioner(x: &Matrix) -> Result<Extracted> {
    let x = numerics::symmetrized(x)?;
    let m = x.nrows();
    let min_eig = numerics::sym_eig(&x)?.min();
    let mut jitter = 0.0;
    let mut target = x.clone();
    if min_eig < SINGULAR_X_TOL {
        jitter = SINGULAR_X_TOL * x.trace().abs().max(numerics::NORM_FLOOR) / m as f64;
        if min_eig < 0.0 {
            jitter -= min_eig;
        }
        for i in 0..m {
            target[(i, i)] += jitter;
        }
        log::warn!("X has smallest eigenvalue {min_eig:e}; adding jitter {jitter:e}");
    }
    let l = numerics::cholesky(&target)?;
    Ok(Extracted {
        g: l.transpose(),
        jitter,
        min_eig,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDual {
    pub i: usize,
    pub j: usize,
    /// Multiplier `zᵢⱼ ≥ 0` of `φᵢᵀXφⱼ ≤ q`.
    pub upper: f64,
    /// Multiplier `zⱼᵢ ≥ 0` of `−φᵢᵀXφⱼ ≤ q`.
    pub lower: f64,
}

#[derive(Debug, Clone)]
pub struct PreconditionResult {
    pub x: Matrix,
    pub g: Matrix,
    /// Optimal value of the program.
    pub q: f64,
    /// `μ(GΦ)` recomputed from `G`.
    pub verified_coherence: f64,
    pub coherence_before: f64,
    pub welch_bound: f64,
    /// Equality multipliers `zᵢᵢ`.
    pub diag_duals: Vector,
    pub pair_duals: Vec<PairDual>,
    pub active_sets: ActiveSets,
    pub kappa_g: f64,
    pub kappa_x: f64,
    pub min_eig_x: f64,
    pub jitter: f64,
    /// `min eig(X) < 10⁻⁹`; `G` comes from a jittered factorization.
    pub near_singular: bool,
    /// Free scale of relative eigenvalue bounds.
    pub scale: Option<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub gap: f64,
    pub kkt: Option<KktResiduals>,
}

impl PreconditionResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// The preconditioned frame `GΦ`.
    pub fn apply(&self, frame: &Frame) -> Result<Frame> {
        Ok(frame.transformed(&self.g)?)
    }
}

fn finish(
    frame: &Frame,
    x: Matrix,
    q: f64,
    sol: Option<(&ConicProblem, &conic::ConicSolution)>,
) -> Result<PreconditionResult> {
    let big_m = frame.len();
    let ext = extract_preconditioner(&x)?;
    let gphi = &ext.g * frame.matrix();
    let verified = frames::coherence_of_matrix(&gphi)?.value;
    let before = frames::coherence(frame)?.value;
    let welch = frames::welch_bound(frame.dim(), big_m)?;
    let kappa_g = numerics::condition_number(&ext.g)?;
    let eig = numerics::sym_eig(&x)?;
    let kappa_x = if eig.min() > 0.0 {
        eig.max() / eig.min()
    } else {
        f64::INFINITY
    };
    let mut diag_duals = Vector::zeros(big_m);
    let mut pair_duals = Vec::new();
    let (status, iterations, gap, kkt, scale) = match sol {
        Some((p, s)) => {
            for (k, row) in p.rows.iter().enumerate() {
                match row.tag {
                    RowTag::Diagonal(i) => diag_duals[i] = s.row_duals[k],
                    RowTag::Upper(i, j) => pair_duals.push(PairDual {
                        i,
                        j,
                        upper: s.row_duals[k],
                        lower: 0.0,
                    }),
                    RowTag::Lower(..) => {
                        if let Some(last) = pair_duals.last_mut() {
                            last.lower = s.row_duals[k];
                        }
                    }
                    RowTag::Other => {}
                }
            }
            (
                s.status,
                s.iterations,
                s.gap,
                Some(conic::kkt_residuals(p, s)),
                s.scale,
            )
        }
        None => (SolveStatus::Optimal, 0, 0.0, None, None),
    };
    let active = active_sets(frame, &x, q, ACTIVE_SET_TOL);
    Ok(PreconditionResult {
        g: ext.g,
        q,
        verified_coherence: verified,
        coherence_before: before,
        welch_bound: welch,
        diag_duals,
        pair_duals,
        active_sets: active,
        kappa_g,
        kappa_x,
        min_eig_x: ext.min_eig,
        jitter: ext.jitter,
        near_singular: ext.min_eig < SINGULAR_X_TOL,
        scale,
        status,
        iterations,
        gap,
        kkt,
        x,
    })
}

fn solve_built(
    frame: &Frame,
    problem: &ConicProblem,
    settings: &SolverSettings,
) -> Result<PreconditionResult> {
    let sol = conic::solve(problem, settings)?;
    if sol.status != SolveStatus::Optimal {
        log::warn!(
            "coherence program stopped with status {} after {} iterations",
            sol.status,
            sol.iterations
        );
    }
    let x = (&sol.x + sol.x.transpose()) * 0.5;
    finish(frame, x, sol.q, Some((problem, &sol)))
}

/// Minimizes `μ(GΦ)` over nonsingular `G`.
pub fn solve_coherence(frame: &Frame, settings: &SolverSettings) -> Result<PreconditionResult> {
    let frame = unit_norm(frame);
    let problem = build_c1(&frame)?;
    solve_built(&frame, &problem, settings)
}

/// Minimizes `μ(GΦ)` over diagonal `G`.
pub fn diagonal_lp(frame: &Frame, settings: &SolverSettings) -> Result<PreconditionResult> {
    let frame = unit_norm(frame);
    let problem = build_diagonal_lp(&frame)?;
    solve_built(&frame, &problem, settings)
}

/// Minimizes `μ(GΦ)` subject to eigenvalue bounds on `X = GᵀG`.
///
/// For unit-norm frames `φᵢᵀXφᵢ = 1` pins the spectrum of `X` around 1: fixed
/// bounds with `t₂ ≥ 1` or `t₁ ≤ 1` leave at most `X = I`, and so do relative
/// bounds with `t₁ = t₂`. Those cases have no interior and are answered in
/// closed form.
pub fn solve_bounded(
    frame: &Frame,
    bounds: EigenBounds,
    settings: &SolverSettings,
) -> Result<PreconditionResult> {
    bounds.validate()?;
    let frame = unit_norm(frame);
    let (t1, t2) = bounds.limits();
    let tight = 1e-12;
    let pinned = match bounds {
        EigenBounds::Fixed { .. } => {
            if t2 > 1.0 + tight || t1 < 1.0 - tight {
                return Err(PreconditionError::InfeasibleBounds { t1, t2 });
            }
            t2 >= 1.0 - tight || t1 <= 1.0 + tight
        }
        EigenBounds::Relative { .. } => t1 - t2 <= tight * t1,
    };
    if pinned {
        let m = frame.dim();
        let mu = frames::coherence(&frame)?.value;
        let mut res = finish(&frame, Matrix::identity(m, m), mu, None)?;
        if matches!(bounds, EigenBounds::Relative { .. }) {
            res.scale = Some(1.0 / t2);
        }
        return Ok(res);
    }
    let mut problem = build_c1(&frame)?;
    problem.eig_bounds = Some(bounds);
    solve_built(&frame, &problem, settings)
}

/// `√α · UVᵀ` for `Ψ = UΣVᵀ`: the α-tight frame closest to `Ψ` in Frobenius
/// norm.
pub fn nearest_tight_frame(psi: &Frame, alpha: f64) -> Result<Frame> {
    let svd = numerics::svd(psi.matrix())?;
    let ratio = svd.sigma_min() / svd.sigma_max();
    if !(ratio > SQUARED_SPAN_TOL) {
        return Err(PreconditionError::RankDeficient(ratio));
    }
    Ok(Frame::new(&svd.u * svd.v.transpose() * alpha.sqrt())?)
}

/// The same projection computed as `√α (ΨΨᵀ)^{-1/2} Ψ`.
pub fn nearest_tight_frame_via_frame_operator(psi: &Frame, alpha: f64) -> Result<Frame> {
    let eig = numerics::sym_eig(&psi.frame_operator())?;
    let ratio = eig.min() / eig.max();
    if !(ratio > SQUARED_SPAN_TOL * SQUARED_SPAN_TOL) {
        return Err(PreconditionError::RankDeficient(ratio.max(0.0).sqrt()));
    }
    let inv_sqrt = eig.map(|l| 1.0 / l.sqrt());
    Ok(Frame::new(inv_sqrt * psi.matrix() * alpha.sqrt())?)
}

/// `G₁ = √(M/m) U Σ⁻¹ Uᵀ G` where `GΦ = UΣVᵀ`, so that `G₁Φ` is the nearest
/// `M/m`-tight frame to `GΦ`.
pub fn compose_tight_preconditioner(g: &Matrix, frame: &Frame) -> Result<(Matrix, Frame)> {
    let psi = frame.transformed(g)?;
    let svd = numerics::svd(psi.matrix())?;
    let ratio = svd.sigma_min() / svd.sigma_max();
    if !(ratio > SQUARED_SPAN_TOL) {
        return Err(PreconditionError::RankDeficient(ratio));
    }
    let alpha = frame.len() as f64 / frame.dim() as f64;
    let inv = svd.singular_values.map(|s| 1.0 / s);
    let g1_prime = &svd.u * Matrix::from_diagonal(&inv) * svd.u.transpose() * alpha.sqrt();
    let g1 = g1_prime * g;
    let out = frame.transformed(&g1)?;
    Ok((g1, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateWitness {
    /// `r̃ᵢᵢ`, one per frame vector.
    pub diag: Vec<f64>,
    /// `r̃ᵢⱼ` on `D⁺`, in the order of the set.
    pub plus: Vec<f64>,
    /// `r̃ⱼᵢ` on `D⁻`.
    pub minus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    /// The system has a solution: no strict decrease of coherence exists.
    Feasible(CertificateWitness),
    /// No solution: some preconditioner strictly lowers the coherence.
    Infeasible { max_violation: f64 },
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    /// Smallest achievable ℓ∞ violation of the matrix equation.
    pub min_violation: f64,
    pub sets: ActiveSets,
    pub status: SolveStatus,
}

/// Decides whether
///
/// ```text
/// Σ rᵢᵢ φᵢφᵢᵀ + Σ_{D⁺} rᵢⱼ φ′ᵢⱼ − Σ_{D⁻} rⱼᵢ φ′ᵢⱼ = 0,   Σ rᵢⱼ + Σ rⱼᵢ = 1,
/// ```
///
/// has a solution with `rᵢᵢ` free and `rᵢⱼ, rⱼᵢ ≥ 0`, by minimizing the
/// largest entry of the left-hand side in absolute value.
pub fn certificate_feasibility(frame: &Frame, sets: &ActiveSets) -> Result<Certificate> {
    let mu = frames::coherence(frame)?.value;
    if mu <= numerics::NORM_FLOOR {
        return Err(PreconditionError::ZeroCoherence);
    }
    let frame = unit_norm(frame);
    let m = frame.dim();
    let big_m = frame.len();
    if sets.is_empty() {
        return Ok(Certificate {
            verdict: Verdict::Infeasible {
                max_violation: f64::INFINITY,
            },
            min_violation: f64::INFINITY,
            sets: sets.clone(),
            status: SolveStatus::Optimal,
        });
    }
    let entries = |a: &Matrix| -> Vector {
        let mut v = Vector::zeros(m * (m + 1) / 2);
        let mut k = 0;
        for j in 0..m {
            for i in j..m {
                v[k] = a[(i, j)];
                k += 1;
            }
        }
        v
    };
    let cols: Vec<Vector> = (0..big_m).map(|i| frame.column(i)).collect();
    // The free variables only matter through their span; keep an independent
    // subset so the program has no null directions.
    let diag_all: Vec<Vector> = cols.iter().map(|c| entries(&(c * c.transpose()))).collect();
    let mut basis: Vec<Vector> = Vec::new();
    let mut diag_keep = Vec::new();
    for (i, v) in diag_all.iter().enumerate() {
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let n = r.norm();
        if n > 1e-9 * v.norm() {
            basis.push(r / n);
            diag_keep.push(i);
        }
    }
    let nd = diag_keep.len();
    let np = sets.plus.len();
    let nn = sets.minus.len();
    let nvar = nd + np + nn + 1;
    let ti = nvar - 1;
    let ne = m * (m + 1) / 2;
    let mut coef = Matrix::zeros(ne, nvar);
    for (k, &i) in diag_keep.iter().enumerate() {
        coef.column_mut(k).copy_from(&diag_all[i]);
    }
    for (k, &(i, j)) in sets.plus.iter().enumerate() {
        coef.column_mut(nd + k)
            .copy_from(&entries(&pair_matrix(&cols[i], &cols[j])));
    }
    for (k, &(i, j)) in sets.minus.iter().enumerate() {
        coef.column_mut(nd + np + k)
            .copy_from(&(-entries(&pair_matrix(&cols[i], &cols[j]))));
    }

    let mut c = Vector::zeros(nvar);
    c[ti] = 1.0;
    let mut prog = ConeProgram::new(c);
    prog.a = Matrix::zeros(1, nvar);
    for k in nd..nd + np + nn {
        prog.a[(0, k)] = 1.0;
    }
    prog.b = Vector::from_element(1, 1.0);
    let nlin = 2 * ne + np + nn;
    let mut g = Matrix::zeros(nlin, nvar);
    for r in 0..ne {
        for k in 0..nvar - 1 {
            g[(r, k)] = coef[(r, k)];
            g[(ne + r, k)] = -coef[(r, k)];
        }
        g[(r, ti)] = -1.0;
        g[(ne + r, ti)] = -1.0;
    }
    for k in 0..np + nn {
        g[(2 * ne + k, nd + k)] = -1.0;
    }
    prog.g_lin = g;
    prog.h_lin = Vector::zeros(nlin);
    let mut x0 = Vector::zeros(nvar);
    for k in nd..nd + np + nn {
        x0[k] = 1.0 / (np + nn) as f64;
    }
    x0[ti] = 1.0 + (coef.columns(0, nvar - 1) * x0.rows(0, nvar - 1)).amax();
    prog.start.x = Some(x0);
    let settings = SolverSettings {
        gap_tol: 1e-10,
        feas_tol: 1e-10,
        ..SolverSettings::default()
    };
    let sol = conic::solve_program(&prog, &settings)?;
    let lhs = coef.columns(0, nvar - 1) * sol.x.rows(0, nvar - 1);
    let violation = lhs.amax();
    let normalization: f64 = sol.x.rows(nd, np + nn).sum();
    let min_violation = violation.max((normalization - 1.0).abs());
    let verdict = if min_violation <= CERTIFICATE_TOL {
        let mut diag = vec![0.0; big_m];
        for (k, &i) in diag_keep.iter().enumerate() {
            diag[i] = sol.x[k];
        }
        Verdict::Feasible(CertificateWitness {
            diag,
            plus: sol.x.rows(nd, np).iter().map(|v| v.max(0.0)).collect(),
            minus: sol.x.rows(nd + np, nn).iter().map(|v| v.max(0.0)).collect(),
        })
    } else {
        Verdict::Infeasible {
            max_violation: min_violation,
        }
    };
    Ok(Certificate {
        verdict,
        min_violation,
        sets: sets.clone(),
        status: sol.status,
    })
}

/// The certificate at `(I, μ(Φ))`: feasible exactly when no preconditioner
/// strictly lowers the coherence.
pub fn certify_identity(frame: &Frame) -> Result<Certificate> {
    let frame = unit_norm(frame);
    let mu = frames::coherence(&frame)?.value;
    if mu <= numerics::NORM_FLOOR {
        return Err(PreconditionError::ZeroCoherence);
    }
    let m = frame.dim();
    let sets = active_sets(&frame, &Matrix::identity(m, m), mu, ACTIVE_SET_TOL);
    certificate_feasibility(&frame, &sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::catalog;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn c1_row_counts() {
        let p = build_c1(&catalog::mercedes_benz()).unwrap();
        assert_eq!(p.psd_dim, 2);
        assert_eq!(p.num_equalities(), 3);
        assert_eq!(p.rows.len() - 3, 6);
        assert_eq!(p.slack_count, 6);
        let f = frames::random_gaussian_frame(8, 64, 1).unwrap();
        let p = build_c1(&f).unwrap();
        assert_eq!(p.num_equalities(), 64);
        assert_eq!(p.slack_count, 4032);
        p.validate().unwrap();
    }

    #[test]
    fn c1_pair_rows_share_coefficients() {
        let p = build_c1(&catalog::sign_pattern()).unwrap();
        for w in p.rows[4..].chunks(2) {
            let (RowTag::Upper(a, b), RowTag::Lower(c, d)) = (w[0].tag, w[1].tag) else {
                panic!("rows out of order");
            };
            assert_eq!((a, b), (c, d));
            assert_eq!(w[0].coef, -w[1].coef.clone());
            assert_ne!(w[0].slack.unwrap().0, w[1].slack.unwrap().0);
        }
    }

    #[test]
    fn mercedes_benz_cannot_improve() {
        let f = catalog::mercedes_benz();
        let r = solve_coherence(&f, &settings()).unwrap();
        assert!(r.is_optimal());
        assert!((r.q - 0.5).abs() < 1e-5, "{}", r.q);
        assert!((r.verified_coherence - 0.5).abs() < 1e-5);
        let kkt = r.kkt.unwrap();
        assert!(kkt.max() < 1e-5, "{kkt:?}");
        assert!((r.q + r.diag_duals.sum()).abs() < 1e-6);
    }

    #[test]
    fn sign_pattern_optimum() {
        let f = catalog::sign_pattern();
        let want = Matrix::from_diagonal(&Vector::from_vec(vec![4.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]));
        for r in [
            solve_coherence(&f, &settings()).unwrap(),
            diagonal_lp(&f, &settings()).unwrap(),
        ] {
            assert!(r.is_optimal());
            assert!((r.q - 1.0 / 3.0).abs() < 1e-5, "{}", r.q);
            assert!((r.verified_coherence - 1.0 / 3.0).abs() < 1e-5);
            assert!((&r.x - &want).amax() < 1e-4, "{}", r.x);
        }
    }

    #[test]
    fn diagonal_lp_keeps_identity_when_squares_span() {
        let f = catalog::two_axes_and_diagonal();
        assert_eq!(squared_span_dimension(&f), 2);
        let r = diagonal_lp(&f, &settings()).unwrap();
        assert!((&r.x - Matrix::identity(2, 2)).amax() < 1e-6);
        assert!((r.q - 1.0 / 2f64.sqrt()).abs() < 1e-6);

        // Column-normalized 0/1 frame.
        let raw = Matrix::from_column_slice(
            3,
            5,
            &[
                1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0,
            ],
        );
        let f = Frame::new(raw).unwrap().normalized();
        assert_eq!(squared_span_dimension(&f), 3);
        let r = diagonal_lp(&f, &settings()).unwrap();
        assert!((&r.x - Matrix::identity(3, 3)).amax() < 1e-6);
        assert!((r.q - frames::coherence(&f).unwrap().value).abs() < 1e-6);
    }

    #[test]
    fn squared_span_examples() {
        assert_eq!(squared_span_dimension(&catalog::sign_pattern()), 2);
        assert_eq!(squared_span_dimension(&catalog::orthonormal_basis(5)), 5);
    }

    #[test]
    fn extraction_examples() {
        let e = extract_preconditioner(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(e.g, Matrix::identity(3, 3));
        assert_eq!(e.jitter, 0.0);
        let x = Matrix::from_diagonal(&Vector::from_vec(vec![4.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]));
        let e = extract_preconditioner(&x).unwrap();
        let want = x.map(f64::sqrt);
        assert!((&e.g - want).amax() < 1e-15);
        // Boundary case gets jitter.
        let x = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let e = extract_preconditioner(&x).unwrap();
        assert!(e.jitter > 0.0);
        assert!((e.g.transpose() * &e.g - x).amax() < 1e-8);
    }

    #[test]
    fn active_sets_examples() {
        let f = catalog::mercedes_benz();
        let s = active_sets(&f, &Matrix::identity(2, 2), 0.5, ACTIVE_SET_TOL);
        assert_eq!(s.len(), 3);
        assert_eq!(s.minus, vec![(0, 1), (0, 2), (1, 2)]);
        let f = catalog::two_axes_and_diagonal();
        let mu = frames::coherence(&f).unwrap().value;
        let s = active_sets(&f, &Matrix::identity(2, 2), mu, ACTIVE_SET_TOL);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn certificates_match_known_frames() {
        let c = certify_identity(&catalog::mercedes_benz()).unwrap();
        assert!(c.verdict.is_feasible(), "{c:?}");
        let Verdict::Feasible(w) = &c.verdict else {
            unreachable!()
        };
        let total: f64 = w.plus.iter().chain(&w.minus).sum();
        assert!((total - 1.0).abs() < 1e-7);

        let c = certify_identity(&catalog::sign_pattern()).unwrap();
        assert!(!c.verdict.is_feasible(), "{c:?}");

        assert!(matches!(
            certify_identity(&catalog::orthonormal_basis(3)),
            Err(PreconditionError::ZeroCoherence)
        ));
    }

    #[test]
    fn bounded_program_closed_forms() {
        let f = frames::random_gaussian_frame(4, 8, 3).unwrap();
        let mu = frames::coherence(&f).unwrap().value;
        for bounds in [
            EigenBounds::Fixed { t1: 1.0, t2: 1.0 },
            EigenBounds::Fixed { t1: 3.0, t2: 1.0 },
            EigenBounds::Relative { t1: 2.0, t2: 2.0 },
        ] {
            let r = solve_bounded(&f, bounds, &settings()).unwrap();
            assert_eq!(r.x, Matrix::identity(4, 4));
            assert_eq!(r.q, mu);
            assert_eq!(r.kappa_g, 1.0);
        }
        assert!(matches!(
            solve_bounded(&f, EigenBounds::Fixed { t1: 3.0, t2: 1.5 }, &settings()),
            Err(PreconditionError::InfeasibleBounds { .. })
        ));
        assert!(build_c2(&f, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn bounded_program_respects_condition_limit() {
        let f = frames::random_gaussian_frame(4, 8, 5).unwrap();
        let free = solve_coherence(&f, &settings()).unwrap();
        let mut prev = f64::INFINITY;
        for t1 in [1.25, 2.0, 4.0] {
            let r = solve_bounded(&f, EigenBounds::Relative { t1, t2: 1.0 }, &settings()).unwrap();
            assert!(r.is_optimal());
            assert!(r.kappa_x <= t1 * (1.0 + 1e-5), "{} > {t1}", r.kappa_x);
            assert!(r.q >= free.q - 1e-6);
            assert!(r.q <= prev + 2e-7);
            prev = r.q;
        }
        let r = solve_bounded(&f, EigenBounds::Fixed { t1: 2.0, t2: 0.5 }, &settings()).unwrap();
        assert!(r.is_optimal());
        let eig = numerics::sym_eig(&r.x).unwrap();
        assert!(eig.max() <= 2.0 + 1e-6 && eig.min() >= 0.5 - 1e-6);
    }

    #[test]
    fn nearest_tight_frame_agrees_with_frame_operator_form() {
        let f = frames::random_gaussian_frame(5, 12, 9).unwrap();
        let alpha = 12.0 / 5.0;
        let a = nearest_tight_frame(&f, alpha).unwrap();
        let b = nearest_tight_frame_via_frame_operator(&f, alpha).unwrap();
        assert!((a.matrix() - b.matrix()).amax() < 1e-8);
        let s = a.frame_operator() - Matrix::identity(5, 5) * alpha;
        assert!(s.norm() < 1e-8);
        let again = nearest_tight_frame(&a, alpha).unwrap();
        assert!((again.matrix() - a.matrix()).amax() < 1e-9);
    }

    #[test]
    fn tight_composition() {
        let f = frames::random_gaussian_frame(6, 16, 2).unwrap();
        let g = extract_preconditioner(&solve_coherence(&f, &settings()).unwrap().x)
            .unwrap()
            .g;
        let (g1, out) = compose_tight_preconditioner(&g, &f).unwrap();
        let alpha = 16.0 / 6.0;
        assert!((out.frame_operator() - Matrix::identity(6, 6) * alpha).norm() < 1e-7);
        let direct = nearest_tight_frame(&f.transformed(&g).unwrap(), alpha).unwrap();
        assert!((out.matrix() - direct.matrix()).amax() < 1e-8);
        assert!(numerics::condition_number(&g1).unwrap().is_finite());
    }
}
