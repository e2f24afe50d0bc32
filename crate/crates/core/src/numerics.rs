//! Dense linear-algebra kernels with explicit accuracy contracts.
//!
//! Eigen and singular value decompositions are delegated to `nalgebra`;
//! Cholesky is implemented here so the pivot floor is under our control.
//! All tolerances are relative to the Frobenius norm of the input, with an
//! absolute floor of [`NORM_FLOOR`] so the zero matrix does not divide by zero.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute floor applied to every norm used as a relative scale.
pub const NORM_FLOOR: f64 = 1e-14;

/// Relative asymmetry accepted by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Cholesky pivots at or below this fraction of the largest diagonal entry
/// are treated as zero.
pub const PIVOT_FLOOR: f64 = 1e-14;

/// Singular values below this fraction of the largest one count as zero
/// for [`least_squares`].
pub const RANK_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("iterative decomposition did not converge")]
    NoConvergence,
    #[error("matrix is rank deficient (sigma_min {sigma_min:e}, sigma_max {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix has no rows or no columns")]
    Empty,
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// `max(‖a‖_F, NORM_FLOOR)`.
pub fn scale_of(a: &Matrix) -> f64 {
    a.norm().max(NORM_FLOOR)
}

pub fn check_finite(a: &Matrix) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(NumericsError::Empty);
    }
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite)
    }
}

/// Verifies squareness and symmetry to [`SYMMETRY_TOL`] relative, returning
/// the exactly symmetrized copy `(A + Aᵀ)/2`.
pub fn symmetrized(a: &Matrix) -> Result<Matrix> {
    check_finite(a)?;
    if a.nrows() != a.ncols() {
        return Err(NumericsError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let asym = (a - a.transpose()).norm() / scale_of(a);
    if asym > SYMMETRY_TOL {
        return Err(NumericsError::NotSymmetric { asymmetry: asym });
    }
    Ok((a + a.transpose()) * 0.5)
}

/// Lower-triangular `L` with positive diagonal and `L Lᵀ = A`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let a = symmetrized(a)?;
    let n = a.nrows();
    let max_diag = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = PIVOT_FLOOR * max_diag.max(NORM_FLOOR);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(NumericsError::NotPositiveDefinite { pivot: d, index: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vector,
    /// Columns are the eigenvectors, aligned with `values`.
    pub vectors: Matrix,
}

impl SymEig {
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            scaled.column_mut(j).scale_mut(w);
        }
        scaled * self.vectors.transpose()
    }
}

pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    let a = symmetrized(a)?;
    let n = a.nrows();
    let eig = nalgebra::SymmetricEigen::try_new(a, f64::EPSILON, MAX_SWEEPS)
        .ok_or(NumericsError::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ` with `σ` descending.
/// `U` is `rows × k` and `V` is `cols × k` where `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values[self.singular_values.len() - 1]
    }

    /// Number of singular values above `rel_tol · σ₁`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cutoff = rel_tol * self.sigma_max();
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * self.v.transpose()
    }
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    check_finite(a)?;
    let dec = a
        .clone()
        .try_svd(true, true, f64::EPSILON, MAX_SWEEPS)
        .ok_or(NumericsError::NoConvergence)?;
    let u = dec.u.ok_or(NumericsError::NoConvergence)?;
    let v_t = dec.v_t.ok_or(NumericsError::NoConvergence)?;
    Ok(Svd {
        u,
        singular_values: dec.singular_values,
        v: v_t.transpose(),
    })
}

/// Singular values only, descending.
pub fn singular_values(a: &Matrix) -> Result<Vector> {
    check_finite(a)?;
    a.clone()
        .try_svd(false, false, f64::EPSILON, MAX_SWEEPS)
        .map(|d| d.singular_values)
        .ok_or(NumericsError::NoConvergence)
}

/// Numerical rank at threshold `rel_tol · σ₁`; zero for the zero matrix.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    let s = singular_values(a)?;
    if s[0] <= NORM_FLOOR {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rel_tol * s[0]).count())
}

/// `σ_max / σ_min`; infinite for singular input.
pub fn condition_number(a: &Matrix) -> Result<f64> {
    let s = singular_values(a)?;
    let smin = s[s.len() - 1];
    Ok(if smin > 0.0 {
        s[0] / smin
    } else {
        f64::INFINITY
    })
}

/// Minimizer of `‖Ax − b‖₂` for `A` with full column rank, via Householder QR.
pub fn least_squares(a: &Matrix, b: &Vector) -> Result<Vector> {
    check_finite(a)?;
    if a.nrows() != b.len() {
        return Err(NumericsError::DimensionMismatch(format!(
            "matrix has {} rows, right-hand side has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    if a.ncols() > a.nrows() {
        return Err(NumericsError::RankDeficient {
            sigma_min: 0.0,
            sigma_max: f64::NAN,
        });
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let s = singular_values(&r)?;
    let (smax, smin) = (s[0], s[s.len() - 1]);
    if !(smin >= RANK_TOL * smax) || smax <= NORM_FLOOR {
        return Err(NumericsError::RankDeficient {
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or(NumericsError::RankDeficient {
            sigma_min: smin,
            sigma_max: smax,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let b = gaussian(n, n, rng);
        b.transpose() * &b + Matrix::identity(n, n)
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(l, Matrix::identity(3, 3));
        let l = cholesky(&Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 1.0]))).unwrap();
        assert_eq!(l, Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0])));
    }

    #[test]
    fn cholesky_roundtrip_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(8, &mut rng);
        let l = cholesky(&a).unwrap();
        assert!((&l * l.transpose() - &a).norm() / a.norm() <= 1e-10);
        for i in 0..8 {
            assert!(l[(i, i)] > 0.0);
            for j in (i + 1)..8 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_and_asymmetric() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            cholesky(&a),
            Err(NumericsError::NotPositiveDefinite { index: 1, .. })
        ));
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            cholesky(&a),
            Err(NumericsError::NotSymmetric { .. })
        ));
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            cholesky(&a),
            Err(NumericsError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn sym_eig_diagonal_sorted_descending() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0, 2.0]));
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 1.0]);
        let e = sym_eig(&Matrix::identity(4, 4)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn sym_eig_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = gaussian(6, 6, &mut rng);
        let a = (&b + b.transpose()) * 0.5;
        let e = sym_eig(&a).unwrap();
        let recon = e.map(|l| l);
        assert!((recon - &a).norm() <= 1e-9 * a.norm());
        let av = &a * &e.vectors;
        let vl = &e.vectors * Matrix::from_diagonal(&e.values);
        assert!((av - vl).norm() <= 1e-9 * a.norm());
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - Matrix::identity(6, 6)).norm() <= 1e-10);
    }

    #[test]
    fn svd_diagonal_and_rank_one() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]));
        let s = svd(&a).unwrap();
        assert!((s.singular_values[0] - 2.0).abs() < 1e-15);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = gaussian(5, 1, &mut rng);
        let v = gaussian(7, 1, &mut rng);
        let a = &u * v.transpose();
        let s = svd(&a).unwrap();
        assert_eq!(s.rank(1e-10), 1);
    }

    #[test]
    fn svd_condition_matches_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = gaussian(4, 7, &mut rng);
        let s = svd(&a).unwrap();
        assert!((s.reconstruct() - &a).norm() <= 1e-9 * a.norm());
        assert!((s.u.transpose() * &s.u - Matrix::identity(4, 4)).norm() <= 1e-10);
        assert!((s.v.transpose() * &s.v - Matrix::identity(4, 4)).norm() <= 1e-10);
        let e = sym_eig(&(&a * a.transpose())).unwrap();
        let kappa_svd = s.sigma_max() / s.sigma_min();
        let kappa_eig = (e.max() / e.min()).sqrt();
        assert!((kappa_svd - kappa_eig).abs() <= 1e-8 * kappa_eig);
    }

    #[test]
    fn least_squares_cases() {
        let b = Vector::from_vec(vec![1.0, -2.0, 3.5]);
        let x = least_squares(&Matrix::identity(3, 3), &b).unwrap();
        assert!((x - &b).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = gaussian(9, 4, &mut rng);
        let x0 = Vector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        let y = &a * &x0;
        let x = least_squares(&a, &y).unwrap();
        assert!((x - x0).norm() <= 1e-9);

        let mut dup = gaussian(6, 3, &mut rng);
        let c0 = dup.column(0).clone_owned();
        dup.set_column(2, &c0);
        let y = Vector::from_element(6, 1.0);
        assert!(matches!(
            least_squares(&dup, &y),
            Err(NumericsError::RankDeficient { .. })
        ));
    }

    #[test]
    fn least_squares_normal_equations_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let a = gaussian(12, 5, &mut rng);
        let b = Vector::from_fn(12, |_, _| rng.sample(StandardNormal));
        let x = least_squares(&a, &b).unwrap();
        let grad = a.transpose() * (&a * &x - &b);
        assert!(grad.norm() <= 1e-9 * a.norm() * b.norm());
    }

    #[test]
    fn factorization_contracts_hold_on_many_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..1000 {
            let n = 1 + (trial % 64);
            let a = random_spd(n, &mut rng);
            let l = cholesky(&a).unwrap();
            assert!((&l * l.transpose() - &a).norm() <= 1e-10 * a.norm());
            // LLᵀ ↦ cholesky recovers L.
            assert!((cholesky(&(&l * l.transpose())).unwrap() - &l).norm() <= 1e-10 * l.norm());
            if trial % 10 == 0 {
                let e = sym_eig(&a).unwrap();
                assert!((e.map(|v| v) - &a).norm() <= 1e-9 * a.norm());
                let g = gaussian(n, n + trial % 5, &mut rng);
                let s = svd(&g).unwrap();
                assert!((s.reconstruct() - &g).norm() <= 1e-9 * g.norm());
            }
        }
    }
}
