//! Decomposable Gaussian BIC computed from sufficient statistics.
//!
//! The local score of a node depends on the data only through the column
//! means and the centered scatter matrix, so each evaluation costs
//! `O(|pa|³)` regardless of the sample size.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::ols::RANK_TOL;
use crate::scalar::Real;

/// Residual variance at or below this fraction of the marginal variance is
/// treated as zero.
pub const DEGENERATE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalScoreError {
    RankDeficient,
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct ScoreContext<T> {
    n: usize,
    scatter: Array2<T>,
}

impl<T: Real> ScoreContext<T> {
    /// Builds sufficient statistics from a complete `n × V` matrix.
    pub fn new(data: ArrayView2<'_, T>) -> Result<Self> {
        let n = data.nrows();
        if n < 3 {
            return Err(Error::InsufficientData(format!(
                "{n} rows; at least 3 required"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "data contains missing or non-finite cells".into(),
            ));
        }
        let nf = T::from_count(n);
        let means: Array1<T> = data.sum_axis(Axis(0)).mapv(|s| s / nf);
        let centered = &data - &means.view().insert_axis(Axis(0));
        let scatter = centered.t().dot(&centered);
        Ok(ScoreContext { n, scatter })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_vars(&self) -> usize {
        self.scatter.nrows()
    }

    /// ML residual variance of `child` regressed on `parents`.
    pub fn residual_variance(
        &self,
        child: usize,
        parents: &[usize],
    ) -> std::result::Result<T, LocalScoreError> {
        let s = &self.scatter;
        let syy = s[[child, child]];
        let rss = if parents.is_empty() {
            syy
        } else {
            let k = parents.len();
            let mut d = Array1::<T>::zeros(k);
            for (a, &p) in parents.iter().enumerate() {
                let v = s[[p, p]];
                if !(v > T::zero()) {
                    return Err(LocalScoreError::RankDeficient);
                }
                d[a] = T::one() / v.sqrt();
            }
            let mut spp = Array2::<T>::zeros((k, k));
            let mut spy = Array1::<T>::zeros(k);
            for (a, &p) in parents.iter().enumerate() {
                for (b, &q) in parents.iter().enumerate() {
                    spp[[a, b]] = s[[p, q]] * d[a] * d[b];
                }
                spy[a] = s[[p, child]] * d[a];
            }
            let l = cholesky(spp.view(), T::lit(RANK_TOL)).ok_or(LocalScoreError::RankDeficient)?;
            let z = cholesky_solve(&l, spy.view());
            syy - spy.dot(&z)
        };
        let nf = T::from_count(self.n);
        let var = rss / nf;
        if !(syy > T::zero()) || !(var > T::lit(DEGENERATE_REL) * syy / nf) {
            return Err(LocalScoreError::Degenerate);
        }
        Ok(var)
    }

    /// Local BIC of one family: maximized log-likelihood minus
    /// `(|pa| + 2)/2 · ln n`.
    pub fn local_score(
        &self,
        child: usize,
        parents: &[usize],
    ) -> std::result::Result<T, LocalScoreError> {
        let var = self.residual_variance(child, parents)?;
        Ok(local_bic_from_variance(self.n, var, parents.len()))
    }

    /// Sum of local scores for every node of `dag`.
    pub fn score_dag(&self, dag: &Dag) -> Result<T> {
        let mut total = T::zero();
        for v in 0..dag.len() {
            total = total
                + self
                    .local_score(v, dag.parents(v))
                    .map_err(|e| local_error(dag, v, e))?;
        }
        Ok(total)
    }
}

pub(crate) fn local_bic_from_variance<T: Real>(n: usize, var: T, num_parents: usize) -> T {
    let nf = T::from_count(n);
    let half = T::lit(0.5);
    let two_pi = T::lit(2.0 * std::f64::consts::PI);
    let loglik = -half * nf * ((two_pi * var).ln() + T::one());
    let k = T::from_count(num_parents + 2);
    loglik - half * k * nf.ln()
}

pub(crate) fn local_error(dag: &Dag, v: usize, e: LocalScoreError) -> Error {
    match e {
        LocalScoreError::RankDeficient => Error::RankDeficient(dag.label(v).to_string()),
        LocalScoreError::Degenerate => Error::DegenerateVariance(dag.label(v).to_string()),
    }
}

/// Gaussian BIC of `dag` on complete data (higher is better).
pub fn bic_score<T: Real>(dag: &Dag, data: ArrayView2<'_, T>) -> Result<T> {
    if data.ncols() != dag.len() {
        return Err(Error::Validation(format!(
            "data has {} columns but the graph has {} nodes",
            data.ncols(),
            dag.len()
        )));
    }
    ScoreContext::new(data)?.score_dag(dag)
}
