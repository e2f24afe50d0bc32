//! Symmetric-matrix vectorization and per-cone kernels used by the
//! path-following iteration.

use crate::numerics::{self, Matrix, Vector};

/// Length of the packed lower triangle of an `order × order` matrix.
pub fn svec_len(order: usize) -> usize {
    order * (order + 1) / 2
}

/// Position of entry `(i, j)`, `i ≥ j`, in the packed vector. Columns of the
/// lower triangle are stored one after another.
#[inline]
pub fn svec_index(order: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < order);
    j * order - j * (j + 1) / 2 + i
}

/// Packs a symmetric matrix with off-diagonals scaled by `√2`, so that
/// `svec(A)ᵀ svec(B) = tr(AB)`.
pub fn svec(a: &Matrix) -> Vector {
    let n = a.nrows();
    let mut v = Vector::zeros(svec_len(n));
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            v[k] = if i == j {
                a[(i, j)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (a[(i, j)] + a[(j, i)])
            };
            k += 1;
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], order: usize) -> Matrix {
    debug_assert_eq!(v.len(), svec_len(order));
    let mut a = Matrix::zeros(order, order);
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = 0;
    for j in 0..order {
        for i in j..order {
            if i == j {
                a[(i, i)] = v[k];
            } else {
                a[(i, j)] = v[k] * inv;
                a[(j, i)] = v[k] * inv;
            }
            k += 1;
        }
    }
    a
}

pub fn svec_identity(order: usize) -> Vector {
    svec(&Matrix::identity(order, order))
}

/// Dense matrix, in packed coordinates, of `V ↦ ½(Z V W + W V Z)` for
/// symmetric `Z` and `W`.
pub fn sym_kron(z: &Matrix, w: &Matrix) -> Matrix {
    let n = z.nrows();
    let len = svec_len(n);
    let r2 = std::f64::consts::SQRT_2;
    let mut h = Matrix::zeros(len, len);
    // ½(Z E W + W E Z) evaluated at (i, j) for E = e_c e_dᵀ is
    // ½(Z_ic W_dj + W_ic Z_dj); the packed basis element for c ≠ d is
    // (e_c e_dᵀ + e_d e_cᵀ)/√2.
    let entry = |i: usize, j: usize, c: usize, d: usize| -> f64 {
        0.5 * (z[(i, c)] * w[(d, j)] + w[(i, c)] * z[(d, j)])
    };
    for d in 0..n {
        for c in d..n {
            let col = svec_index(n, c, d);
            for j in 0..n {
                for i in j..n {
                    let row = svec_index(n, i, j);
                    let val = if c == d {
                        if i == j {
                            entry(i, i, c, c)
                        } else {
                            // svec scales (i, j) by √2 and the matrix is
                            // symmetric, so take the average of both entries.
                            r2 * 0.5 * (entry(i, j, c, c) + entry(j, i, c, c))
                        }
                    } else {
                        let sym = |a: usize, b: usize| (entry(a, b, c, d) + entry(a, b, d, c)) / r2;
                        if i == j {
                            sym(i, i)
                        } else {
                            r2 * 0.5 * (sym(i, j) + sym(j, i))
                        }
                    };
                    h[(row, col)] = val;
                }
            }
        }
    }
    h
}

/// Largest `α ≤ cap` with `s + α ds ≥ 0` componentwise.
pub fn max_step_orthant(s: &Vector, ds: &Vector, cap: f64) -> f64 {
    s.iter()
        .zip(ds.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(cap, f64::min)
}

/// Largest `α ≤ cap` with `S + α dS ⪰ 0`, given the Cholesky factor of `S`.
pub fn max_step_psd(chol: &Matrix, ds: &Matrix, cap: f64) -> f64 {
    let n = chol.nrows();
    let linv_ds = chol
        .solve_lower_triangular(ds)
        .unwrap_or_else(|| Matrix::from_element(n, n, f64::NAN));
    let m = chol
        .solve_lower_triangular(&linv_ds.transpose())
        .unwrap_or_else(|| Matrix::from_element(n, n, f64::NAN));
    let m = (&m + m.transpose()) * 0.5;
    match nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, 10_000) {
        Some(e) => {
            let lmin = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if lmin >= 0.0 {
                cap
            } else {
                (-1.0 / lmin).min(cap)
            }
        }
        None => 0.0,
    }
}

/// Smallest eigenvalue of a symmetric matrix, `-∞` if the decomposition fails.
pub fn min_eig(a: &Matrix) -> f64 {
    numerics::sym_eig(&((a + a.transpose()) * 0.5))
        .map(|e| e.min())
        .unwrap_or(f64::NEG_INFINITY)
}
