//! Ordinary least squares with an intercept, plus the usual summary
//! statistics (standard errors, R², F).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky, cholesky_inverse, cholesky_solve};
use crate::scalar::Real;

/// Relative pivot tolerance on the correlation-scaled normal equations.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit<T> {
    pub n: usize,
    pub intercept: T,
    pub coefficients: Vec<T>,
    /// Residual sum of squares.
    pub rss: T,
    /// Total (centered) sum of squares of the response.
    pub tss: T,
    pub intercept_se: T,
    pub coefficient_se: Vec<T>,
    pub r_squared: T,
    pub adj_r_squared: T,
    /// Residual standard error, `sqrt(rss / df_resid)`.
    pub residual_se: T,
    pub df_resid: usize,
    /// `None` for intercept-only models.
    pub f_statistic: Option<T>,
}

impl<T: Real> OlsFit<T> {
    pub fn df_model(&self) -> usize {
        self.coefficients.len()
    }

    /// Maximum-likelihood residual variance, `rss / n`.
    pub fn ml_variance(&self) -> T {
        self.rss / T::from_count(self.n)
    }
}

/// Regresses `y` on the columns of `x` plus a constant.
///
/// Returns `None` if the design (after centering) is rank deficient or if
/// there are not enough rows to leave one residual degree of freedom.
pub fn fit<T: Real>(y: ArrayView1<'_, T>, x: ArrayView2<'_, T>) -> Option<OlsFit<T>> {
    let n = y.len();
    let k = x.ncols();
    debug_assert_eq!(x.nrows(), n);
    if n < k + 2 {
        return None;
    }
    let nf = T::from_count(n);
    let y_mean = y.sum() / nf;
    let x_mean: Array1<T> = if k > 0 {
        x.sum_axis(Axis(0)).mapv(|s| s / nf)
    } else {
        Array1::zeros(0)
    };
    let xc: Array2<T> = &x - &x_mean.view().insert_axis(Axis(0));
    let yc: Array1<T> = y.mapv(|v| v - y_mean);
    let tss = yc.dot(&yc);

    let (coef, cinv) = if k > 0 {
        let cross = xc.t().dot(&xc);
        let xty = xc.t().dot(&yc);
        // scale to unit diagonal so the pivot test is unit-free
        let d: Array1<T> = cross.diag().mapv(|v| {
            if v > T::zero() {
                T::one() / v.sqrt()
            } else {
                T::zero()
            }
        });
        if d.iter().any(|&v| v == T::zero()) {
            return None;
        }
        let mut scaled = cross.clone();
        for i in 0..k {
            for j in 0..k {
                scaled[[i, j]] = scaled[[i, j]] * d[i] * d[j];
            }
        }
        let l = cholesky(scaled.view(), T::lit(RANK_TOL))?;
        let rhs: Array1<T> = &xty * &d;
        let z = cholesky_solve(&l, rhs.view());
        let coef: Array1<T> = &z * &d;
        let sinv = cholesky_inverse(&l);
        let mut cinv = sinv;
        for i in 0..k {
            for j in 0..k {
                cinv[[i, j]] = cinv[[i, j]] * d[i] * d[j];
            }
        }
        (coef, cinv)
    } else {
        (Array1::zeros(0), Array2::zeros((0, 0)))
    };
    let intercept = y_mean - coef.dot(&x_mean);

    let resid: Array1<T> = &yc - &xc.dot(&coef);
    let rss = resid.dot(&resid);
    let df_resid = n - k - 1;
    let dff = T::from_count(df_resid);
    let sigma2 = rss / dff;
    let coefficient_se: Vec<T> = (0..k).map(|i| (sigma2 * cinv[[i, i]]).sqrt()).collect();
    let mean_quad = if k > 0 {
        x_mean.dot(&cinv.dot(&x_mean))
    } else {
        T::zero()
    };
    let intercept_se = (sigma2 * (T::one() / nf + mean_quad)).sqrt();
    let r_squared = if tss > T::zero() {
        T::one() - rss / tss
    } else {
        T::zero()
    };
    let adj_r_squared = T::one() - (T::one() - r_squared) * T::from_count(n - 1) / dff;
    let f_statistic = if k > 0 {
        Some(((tss - rss) / T::from_count(k)) / sigma2)
    } else {
        None
    };
    Some(OlsFit {
        n,
        intercept,
        coefficients: coef.to_vec(),
        rss,
        tss,
        intercept_se,
        coefficient_se,
        r_squared,
        adj_r_squared,
        residual_se: sigma2.sqrt(),
        df_resid,
        f_statistic,
    })
}
