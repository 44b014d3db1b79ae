//! Small dense linear-algebra kernels over [`Real`] scalars.
//!
//! Matrices here are tiny (parent sets, evidence blocks), so plain
//! Cholesky and cyclic Jacobi are sufficient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::Real;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Returns `None` when a pivot falls below `rel_tol` times the largest
/// diagonal entry, which is how rank deficiency is detected.
pub fn cholesky<T: Real>(a: ArrayView2<'_, T>, rel_tol: T) -> Option<Array2<T>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let scale = a.diag().iter().fold(T::zero(), |m, &d| m.max(d.abs()));
    let floor = if scale > T::zero() {
        rel_tol * scale
    } else {
        T::min_positive_value()
    };
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if !(d > floor) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Real>(l: &Array2<T>, b: ArrayView1<'_, T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Inverse of `L Lᵀ`.
pub fn cholesky_inverse<T: Real>(l: &Array2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut inv = Array2::<T>::zeros((n, n));
    let mut e = Array1::<T>::zeros(n);
    for j in 0..n {
        e.fill(T::zero());
        e[j] = T::one();
        let col = cholesky_solve(l, e.view());
        inv.column_mut(j).assign(&col);
    }
    inv
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and a matrix whose columns are the matching
/// orthonormal eigenvectors.
pub fn symmetric_eigen<T: Real>(a: ArrayView2<'_, T>) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut v = Array2::<T>::eye(n);
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + m[[p, q]] * m[[p, q]];
            }
        }
        let total = m.iter().fold(T::zero(), |s, &x| s + x * x);
        if off <= T::epsilon() * T::epsilon() * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diag().to_owned(), v)
}

/// Outcome of solving a symmetric positive-semidefinite system.
pub enum PsdSolve<T> {
    Regular(Array1<T>),
    /// Solved through the pseudo-inverse; carries the number of dropped
    /// eigen-directions.
    Pseudo(Array1<T>, usize),
    /// The right-hand side has a component in the null space.
    Inconsistent,
}

/// Solves `A x = b` for symmetric PSD `A`, falling back to the
/// Moore–Penrose pseudo-inverse when `A` is singular within `rel_tol`.
pub fn solve_psd<T: Real>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>, rel_tol: T) -> PsdSolve<T> {
    if let Some(l) = cholesky(a, rel_tol) {
        return PsdSolve::Regular(cholesky_solve(&l, b));
    }
    let (vals, vecs) = symmetric_eigen(a);
    let vmax = vals.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let cut = rel_tol * vmax;
    let n = vals.len();
    let mut x = Array1::<T>::zeros(n);
    let mut dropped = 0;
    let mut null_norm = T::zero();
    let b_norm = b.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
    for k in 0..n {
        let u = vecs.column(k);
        let proj = u.dot(&b);
        if vals[k] > cut && vmax > T::zero() {
            x.scaled_add(proj / vals[k], &u);
        } else {
            dropped += 1;
            null_norm = null_norm + proj * proj;
        }
    }
    let tol = T::lit(1e-6) * (T::one() + b_norm);
    if null_norm.sqrt() > tol {
        PsdSolve::Inconsistent
    } else {
        PsdSolve::Pseudo(x, dropped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let l = cholesky(a.view(), 1e-12).unwrap();
        let x = cholesky_solve(&l, b.view());
        let back = a.dot(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-12);
        }
        let inv = cholesky_inverse(&l);
        let id = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(id[[i, j]], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky(a.view(), 1e-10).is_none());
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (mut vals, _) = symmetric_eigen(a.view());
        vals.as_slice_mut()
            .unwrap()
            .sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pseudo_inverse_handles_consistent_singular_system() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        match solve_psd(a.view(), array![2.0, 2.0].view(), 1e-10) {
            PsdSolve::Pseudo(x, dropped) => {
                assert_eq!(dropped, 1);
                assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
            }
            _ => panic!("expected pseudo-inverse solution"),
        }
        assert!(matches!(
            solve_psd(a.view(), array![1.0, -1.0].view(), 1e-10),
            PsdSolve::Inconsistent
        ));
    }
}
