//! Frames and their scalar metrics: coherence, Welch bound, frame potential,
//! tightness, equiangularity and the coherence-based recovery bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, Matrix, NumericsError, Vector};

/// A frame is unit-norm when every column norm is within this of 1.
pub const UNIT_NORM_TOL: f64 = 1e-8;
/// Spread of `|⟨φᵢ, φⱼ⟩|` below which a frame counts as equiangular.
pub const EQUIANGULAR_TOL: f64 = 1e-8;
/// Columns with norm at or below this are rejected.
pub const ZERO_COLUMN_TOL: f64 = 1e-12;
/// Relative singular value threshold for the spanning (rank = m) check.
pub const SPAN_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("invalid frame shape {m}x{big_m} (need 1 <= m <= M)")]
    InvalidShape { m: usize, big_m: usize },
    #[error("column {0} is (numerically) zero")]
    ZeroColumn(usize),
    #[error("columns do not span R^{m} (rank {rank})")]
    NotSpanning { rank: usize, m: usize },
    #[error("coherence needs at least two columns")]
    SingleColumn,
    #[error("coherence is zero; the recovery bound is unbounded")]
    ZeroCoherence,
    #[error("coherence {0} outside (0, 1]")]
    InvalidCoherence(f64),
    #[error("preconditioner is singular (sigma_min/sigma_max = {0:e})")]
    SingularG(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, FrameError>;

/// An `m × M` synthesis matrix whose columns are the frame vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    matrix: Matrix,
    unit_norm: bool,
}

impl Frame {
    /// Validates finiteness, `m ≤ M`, nonzero columns and rank `m`.
    pub fn new(matrix: Matrix) -> Result<Self> {
        numerics::check_finite(&matrix)?;
        let (m, big_m) = matrix.shape();
        if m == 0 || m > big_m {
            return Err(FrameError::InvalidShape { m, big_m });
        }
        for (i, col) in matrix.column_iter().enumerate() {
            if col.norm() <= ZERO_COLUMN_TOL {
                return Err(FrameError::ZeroColumn(i));
            }
        }
        let rank = numerics::numerical_rank(&matrix, SPAN_RANK_TOL)?;
        if rank < m {
            return Err(FrameError::NotSpanning { rank, m });
        }
        let unit_norm = matrix
            .column_iter()
            .all(|c| (c.norm() - 1.0).abs() <= UNIT_NORM_TOL);
        Ok(Self { matrix, unit_norm })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    /// Ambient dimension `m`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of frame vectors `M`.
    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.ncols() == 0
    }

    pub fn column(&self, i: usize) -> Vector {
        self.matrix.column(i).clone_owned()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.norm()).collect()
    }

    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    /// Same frame with every column scaled to unit norm.
    pub fn normalized(&self) -> Frame {
        let mut m = self.matrix.clone();
        for mut c in m.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        let unit_norm = m
            .column_iter()
            .all(|c| (c.norm() - 1.0).abs() <= UNIT_NORM_TOL);
        Frame {
            matrix: m,
            unit_norm,
        }
    }

    /// Gram matrix `ΦᵀΦ`.
    pub fn gram(&self) -> Matrix {
        self.matrix.transpose() * &self.matrix
    }

    /// Frame operator `ΦΦᵀ`.
    pub fn frame_operator(&self) -> Matrix {
        &self.matrix * self.matrix.transpose()
    }

    /// The frame `GΦ` for a square `G`.
    pub fn transformed(&self, g: &Matrix) -> Result<Frame> {
        if g.nrows() != g.ncols() || g.ncols() != self.dim() {
            return Err(FrameError::DimensionMismatch(format!(
                "preconditioner is {}x{}, frame dimension is {}",
                g.nrows(),
                g.ncols(),
                self.dim()
            )));
        }
        Frame::new(g * &self.matrix)
    }
}

/// Known frames used as fixtures and examples.
pub mod catalog {
    use super::*;

    /// The 2×3 equiangular tight frame with vectors 120° apart.
    pub fn mercedes_benz() -> Frame {
        let h = 3f64.sqrt() / 2.0;
        Frame::new(Matrix::from_column_slice(
            2,
            3,
            &[0.0, 1.0, -h, -0.5, h, -0.5],
        ))
        .expect("valid frame")
    }

    /// `{(1,1,0), (1,−1,0), (0,1,1), (0,1,−1)}/√2` in ℝ³: its squared
    /// entries span only a plane, so a diagonal preconditioner helps.
    pub fn sign_pattern() -> Frame {
        let s = 1.0 / 2f64.sqrt();
        Frame::new(Matrix::from_column_slice(
            3,
            4,
            &[s, s, 0.0, s, -s, 0.0, 0.0, s, s, 0.0, s, -s],
        ))
        .expect("valid frame")
    }

    /// `[e₁, e₂, (e₁+e₂)/√2]` in ℝ².
    pub fn two_axes_and_diagonal() -> Frame {
        let s = 1.0 / 2f64.sqrt();
        Frame::new(Matrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, s, s]))
            .expect("valid frame")
    }

    pub fn orthonormal_basis(m: usize) -> Frame {
        Frame::new(Matrix::identity(m, m)).expect("valid frame")
    }
}

/// Seeded `m × M` matrix of i.i.d. standard normals (drawn column by column),
/// then column-normalized.
pub fn random_gaussian_frame(m: usize, big_m: usize, seed: u64) -> Result<Frame> {
    if m == 0 || m > big_m {
        return Err(FrameError::InvalidShape { m, big_m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * big_m).map(|_| rng.sample(StandardNormal)).collect();
    let raw = Matrix::from_vec(m, big_m, data);
    Ok(Frame::new(raw)?.normalized())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub value: f64,
    /// Lexicographically smallest `(i, j)`, `i < j`, attaining the maximum.
    pub pair: (usize, usize),
}

/// Largest normalized absolute inner product between distinct columns of `a`.
pub fn coherence_of_matrix(a: &Matrix) -> Result<Coherence> {
    let big_m = a.ncols();
    if big_m < 2 {
        return Err(FrameError::SingleColumn);
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let gram = a.transpose() * a;
    let mut best = Coherence {
        value: -1.0,
        pair: (0, 1),
    };
    for i in 0..big_m {
        for j in (i + 1)..big_m {
            let v = gram[(i, j)].abs() / (norms[i] * norms[j]);
            if v > best.value {
                best = Coherence {
                    value: v,
                    pair: (i, j),
                };
            }
        }
    }
    best.value = best.value.min(1.0);
    Ok(best)
}

pub fn coherence(frame: &Frame) -> Result<Coherence> {
    coherence_of_matrix(frame.matrix())
}

/// `√((M − m) / (m (M − 1)))`.
pub fn welch_bound(m: usize, big_m: usize) -> Result<f64> {
    if m == 0 || big_m < m || big_m < 2 {
        return Err(FrameError::InvalidShape { m, big_m });
    }
    let (m, big_m) = (m as f64, big_m as f64);
    Ok(((big_m - m) / (m * (big_m - 1.0))).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub rows: usize,
    pub cols: usize,
    pub unit_norm: bool,
    pub coherence: f64,
    pub coherence_pair: Option<(usize, usize)>,
    pub welch_bound: f64,
    pub frame_potential: f64,
    /// `M²/m`; the frame potential of a unit-norm frame is at least this,
    /// with equality exactly for tight frames.
    pub potential_floor: f64,
    /// Constant `A = tr(ΦΦᵀ)/m` used for `tight_defect` (`M/m` when unit-norm).
    pub tight_constant: f64,
    /// `‖ΦΦᵀ − A·I‖_F`.
    pub tight_defect: f64,
    pub equiangular: bool,
    /// Extreme eigenvalues `(A, B)` of the frame operator.
    pub frame_bounds: (f64, f64),
}

pub fn frame_report(frame: &Frame) -> Result<FrameReport> {
    let (m, big_m) = (frame.dim(), frame.len());
    let normalized = frame.normalized();
    let gram = normalized.gram();
    let raw_gram = frame.gram();

    let frame_potential: f64 = raw_gram.iter().map(|v| v * v).sum();

    let (coh, pair, equiangular) = if big_m >= 2 {
        let c = coherence(frame)?;
        let mut lo = f64::INFINITY;
        for i in 0..big_m {
            for j in (i + 1)..big_m {
                lo = lo.min(gram[(i, j)].abs());
            }
        }
        (c.value, Some(c.pair), c.value - lo <= EQUIANGULAR_TOL)
    } else {
        (0.0, None, true)
    };

    let op = frame.frame_operator();
    let tight_constant = op.trace() / m as f64;
    let tight_defect = (&op - Matrix::identity(m, m) * tight_constant).norm();
    let eig = numerics::sym_eig(&op)?;

    Ok(FrameReport {
        rows: m,
        cols: big_m,
        unit_norm: frame.is_unit_norm(),
        coherence: coh,
        coherence_pair: pair,
        welch_bound: if big_m >= 2 {
            welch_bound(m, big_m)?
        } else {
            0.0
        },
        frame_potential,
        potential_floor: (big_m * big_m) as f64 / m as f64,
        tight_constant,
        tight_defect,
        equiangular,
        frame_bounds: (eig.min(), eig.max()),
    })
}

/// Strict upper bound `½(1 + 1/μ)` on the sparsity recoverable by OMP and
/// basis pursuit.
pub fn recovery_bound(mu: f64) -> Result<f64> {
    if mu == 0.0 {
        return Err(FrameError::ZeroCoherence);
    }
    if !(mu > 0.0 && mu <= 1.0 + 1e-12) {
        return Err(FrameError::InvalidCoherence(mu));
    }
    Ok(0.5 * (1.0 + 1.0 / mu))
}

/// Largest integer sparsity strictly below [`recovery_bound`].
pub fn max_guaranteed_sparsity(mu: f64) -> Result<usize> {
    let bound = recovery_bound(mu)?;
    Ok((bound.ceil() as usize).saturating_sub(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub order: usize,
    pub delta: f64,
    /// Whether `delta < √2 − 1`.
    pub below_threshold: bool,
}

pub const RIP_THRESHOLD: f64 = std::f64::consts::SQRT_2 - 1.0;

/// `δ_k ≤ (k − 1) μ` for unit-norm columns.
pub fn rip_constant_estimate(mu: f64, k: usize) -> RipEstimate {
    let delta = k.saturating_sub(1) as f64 * mu;
    RipEstimate {
        order: k,
        delta,
        below_threshold: delta < RIP_THRESHOLD,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitNormCheck {
    pub maps_to_unit_norm: bool,
    /// `max_i |‖Gφᵢ‖₂ − 1|`.
    pub norm_residual: f64,
    /// `max_i |Σ_j (λ_j − 1) ⟨φᵢ, e_j⟩²|` over the eigenpairs of `GᵀG`.
    pub eigen_residual: f64,
    /// Whether the eigen characterization reaches the same verdict.
    pub tests_agree: bool,
}

/// Checks whether `G` maps the unit-norm frame `Φ` to a unit-norm frame, both
/// directly and through the eigenvector characterization of `GᵀG`.
pub fn verify_unit_norm_mapping(g: &Matrix, frame: &Frame) -> Result<UnitNormCheck> {
    let m = frame.dim();
    if g.nrows() != m || g.ncols() != m {
        return Err(FrameError::DimensionMismatch(format!(
            "preconditioner is {}x{}, frame dimension is {m}",
            g.nrows(),
            g.ncols()
        )));
    }
    let sv = numerics::singular_values(g)?;
    let ratio = sv[sv.len() - 1] / sv[0].max(numerics::NORM_FLOOR);
    if !(ratio > 1e-10) {
        return Err(FrameError::SingularG(ratio));
    }
    let gphi = g * frame.matrix();
    let norm_residual = gphi
        .column_iter()
        .map(|c| (c.norm() - 1.0).abs())
        .fold(0.0, f64::max);

    let eig = numerics::sym_eig(&(g.transpose() * g))?;
    // coeffs[(i, j)] = ⟨φᵢ, e_j⟩²
    let proj = frame.matrix().transpose() * &eig.vectors;
    let eigen_residual = proj
        .row_iter()
        .map(|row| {
            row.iter()
                .zip(eig.values.iter())
                .map(|(p, l)| (l - 1.0) * p * p)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max);

    let maps_to_unit_norm = norm_residual <= UNIT_NORM_TOL;
    // |‖Gφ‖² − 1| = |‖Gφ‖ − 1|·(‖Gφ‖ + 1) ≈ 2·|‖Gφ‖ − 1| near the unit sphere.
    let eigen_verdict = eigen_residual <= 2.0 * UNIT_NORM_TOL + 1e-12;
    Ok(UnitNormCheck {
        maps_to_unit_norm,
        norm_residual,
        eigen_residual,
        tests_agree: maps_to_unit_norm == eigen_verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_frames_are_deterministic_and_normalized() {
        let a = random_gaussian_frame(5, 9, 42).unwrap();
        let b = random_gaussian_frame(5, 9, 42).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!(a.is_unit_norm());
        for n in a.column_norms() {
            assert!((n - 1.0).abs() <= 1e-12);
        }
        assert_ne!(
            a.matrix(),
            random_gaussian_frame(5, 9, 43).unwrap().matrix()
        );
        assert!(matches!(
            random_gaussian_frame(4, 3, 0),
            Err(FrameError::InvalidShape { .. })
        ));
        assert!(matches!(
            random_gaussian_frame(0, 3, 0),
            Err(FrameError::InvalidShape { .. })
        ));
    }

    #[test]
    fn frame_validation() {
        let z = Matrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(Frame::new(z), Err(FrameError::ZeroColumn(1))));
        let flat = Matrix::from_column_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, -1.0, 0.0]);
        assert!(matches!(
            Frame::new(flat),
            Err(FrameError::NotSpanning { rank: 1, m: 2 })
        ));
    }

    #[test]
    fn coherence_examples() {
        assert_eq!(coherence(&orthonormal_basis(4)).unwrap().value, 0.0);
        let c = coherence(&two_axes_and_diagonal()).unwrap();
        assert!((c.value - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.pair, (0, 2));

        let m = Matrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let c = coherence(&Frame::new(m).unwrap()).unwrap();
        assert_eq!(c.value, 1.0);
        assert_eq!(c.pair, (0, 2));

        let single = Frame::new(Matrix::from_element(1, 1, 1.0)).unwrap();
        assert!(matches!(coherence(&single), Err(FrameError::SingleColumn)));
    }

    #[test]
    fn coherence_ties_pick_smallest_pair() {
        let c = coherence(&mercedes_benz()).unwrap();
        assert!((c.value - 0.5).abs() < 1e-15);
        assert_eq!(c.pair, (0, 1));
    }

    #[test]
    fn welch_bound_values() {
        assert!((welch_bound(30, 64).unwrap() - 0.1341).abs() < 5e-5);
        assert_eq!(welch_bound(7, 7).unwrap(), 0.0);
        assert!((welch_bound(2, 3).unwrap() - 0.5).abs() < 1e-15);
        assert!(welch_bound(5, 4).is_err());
        assert!(welch_bound(1, 1).is_err());
    }

    #[test]
    fn report_on_equiangular_tight_frame() {
        let r = frame_report(&mercedes_benz()).unwrap();
        assert!(r.equiangular);
        assert!((r.coherence - 0.5).abs() < 1e-12);
        assert!(r.tight_defect <= 1e-8);
        assert!((r.frame_potential - 9.0 / 2.0).abs() <= 1e-8);
        assert!((r.tight_constant - 1.5).abs() < 1e-12);
        assert!((r.frame_bounds.0 - 1.5).abs() < 1e-12 && (r.frame_bounds.1 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn report_on_gaussian_frame() {
        let f = random_gaussian_frame(30, 64, 1).unwrap();
        let r = frame_report(&f).unwrap();
        assert!(!r.equiangular);
        assert!(r.coherence >= r.welch_bound);
        assert!(r.frame_potential >= r.potential_floor - 1e-9);
        assert!(r.tight_defect > 1e-3);
    }

    #[test]
    fn recovery_bound_values() {
        assert_eq!(recovery_bound(1.0).unwrap(), 1.0);
        assert_eq!(recovery_bound(0.5).unwrap(), 1.5);
        assert!((recovery_bound(0.0529).unwrap() - 9.952).abs() < 1e-3);
        assert!(matches!(
            recovery_bound(0.0),
            Err(FrameError::ZeroCoherence)
        ));
        assert!(recovery_bound(1.5).is_err());
        assert_eq!(max_guaranteed_sparsity(0.5).unwrap(), 1);
        assert_eq!(max_guaranteed_sparsity(1.0).unwrap(), 0);
        assert_eq!(max_guaranteed_sparsity(0.2).unwrap(), 2);
    }

    #[test]
    fn rip_estimates() {
        assert_eq!(rip_constant_estimate(0.7, 1).delta, 0.0);
        assert!((rip_constant_estimate(0.1, 3).delta - 0.2).abs() < 1e-15);
        let r = rip_constant_estimate(0.1341, 4);
        assert!((r.delta - 0.4023).abs() < 1e-12);
        assert!(r.below_threshold);
        assert!(!rip_constant_estimate(0.1341, 5).below_threshold);
    }

    #[test]
    fn unit_norm_mapping_examples() {
        let f = random_gaussian_frame(4, 7, 9).unwrap();
        let q = numerics::svd(&random_gaussian_frame(4, 4, 3).unwrap().into_matrix())
            .unwrap()
            .u;
        let check = verify_unit_norm_mapping(&q, &f).unwrap();
        assert!(check.maps_to_unit_norm && check.tests_agree);

        let check = verify_unit_norm_mapping(&(Matrix::identity(4, 4) * 2.0), &f).unwrap();
        assert!(!check.maps_to_unit_norm && check.tests_agree);

        let g = Matrix::from_diagonal(&Vector::from_vec(vec![
            (4.0f64 / 3.0).sqrt(),
            (2.0f64 / 3.0).sqrt(),
            (4.0f64 / 3.0).sqrt(),
        ]));
        let check = verify_unit_norm_mapping(&g, &sign_pattern()).unwrap();
        assert!(check.maps_to_unit_norm && check.tests_agree, "{check:?}");

        let singular = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0, 1.0]));
        assert!(matches!(
            verify_unit_norm_mapping(&singular, &sign_pattern()),
            Err(FrameError::SingularG(_))
        ));
    }

    fn random_orthogonal(m: usize, seed: u64) -> Matrix {
        let raw = random_gaussian_frame(m, m, seed).unwrap().into_matrix();
        numerics::svd(&raw).unwrap().u
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn coherence_respects_welch_bound(m in 1usize..8, extra in 1usize..10, seed in any::<u64>()) {
            let big_m = m + extra;
            let f = random_gaussian_frame(m, big_m, seed).unwrap();
            let mu = coherence(&f).unwrap().value;
            prop_assert!(mu >= welch_bound(m, big_m).unwrap() - 1e-9);
        }

        #[test]
        fn coherence_is_unitarily_invariant(m in 2usize..7, extra in 1usize..8, seed in any::<u64>()) {
            let f = random_gaussian_frame(m, m + extra, seed).unwrap();
            let u = random_orthogonal(m, seed.wrapping_add(1));
            let uf = f.transformed(&u).unwrap();
            let d = (coherence(&f).unwrap().value - coherence(&uf).unwrap().value).abs();
            prop_assert!(d <= 1e-10);
        }

        #[test]
        fn frame_potential_equals_gram_norm(m in 1usize..7, extra in 0usize..8, seed in any::<u64>()) {
            let f = random_gaussian_frame(m, m + extra.max(1), seed).unwrap();
            let r = frame_report(&f).unwrap();
            let op = f.frame_operator();
            let fro2 = op.norm_squared();
            prop_assert!((r.frame_potential - fro2).abs() <= 1e-10 * fro2.max(1.0));
            prop_assert!(r.frame_potential >= r.potential_floor - 1e-9);
        }

        #[test]
        fn bounds_are_monotone(a in 0.01f64..1.0, b in 0.01f64..1.0, k in 1usize..20) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(recovery_bound(lo).unwrap() >= recovery_bound(hi).unwrap());
            prop_assert!(rip_constant_estimate(hi, k).delta >= rip_constant_estimate(lo, k).delta);
            prop_assert!(rip_constant_estimate(hi, k + 1).delta >= rip_constant_estimate(hi, k).delta);
        }
    }
}
