//! Linear-Gaussian Bayesian networks: fitting, likelihood, the implied
//! joint normal and conditional expectations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dag::{Dag, DagRecord};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, solve_psd, PsdSolve};
use crate::ols::{self, OlsFit};
use crate::scalar::Real;
use crate::score::DEGENERATE_REL;

/// Relative eigenvalue cut used when the evidence block is singular.
pub const CONDITIONING_TOL: f64 = 1e-10;

/// `θ(v) = intercept + Σ coefficients·θ(pa(v)) + ε`, `ε ~ N(0, residual_variance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct LinearGaussianNode<T> {
    pub node: String,
    pub parents: Vec<String>,
    pub intercept: T,
    pub coefficients: Vec<T>,
    pub residual_variance: T,
    /// Set when the residual variance is zero up to rounding.
    #[serde(default)]
    pub degenerate: bool,
    /// Regression summary when the node was estimated from data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<OlsFit<T>>,
}

impl<T: Real> LinearGaussianNode<T> {
    pub fn new(
        node: impl Into<String>,
        parents: Vec<String>,
        intercept: T,
        coefficients: Vec<T>,
        residual_variance: T,
    ) -> Self {
        LinearGaussianNode {
            node: node.into(),
            parents,
            intercept,
            coefficients,
            residual_variance,
            degenerate: residual_variance == T::zero(),
            fit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedNetwork<T> {
    dag: Dag,
    nodes: Vec<LinearGaussianNode<T>>,
    sample_size: usize,
}

#[derive(Serialize, Deserialize)]
struct NetworkRecord<T> {
    dag: DagRecord,
    sample_size: usize,
    nodes: Vec<LinearGaussianNode<T>>,
}

impl<T: Real> FittedNetwork<T> {
    /// Assembles a network from per-node models, checking that parents and
    /// coefficient counts agree with `dag`. `nodes` must follow the DAG's
    /// label order.
    pub fn from_parts(
        dag: Dag,
        nodes: Vec<LinearGaussianNode<T>>,
        sample_size: usize,
    ) -> Result<Self> {
        if nodes.len() != dag.len() {
            return Err(Error::Validation(format!(
                "{} node models for {} graph nodes",
                nodes.len(),
                dag.len()
            )));
        }
        for (v, m) in nodes.iter().enumerate() {
            if m.node != dag.label(v) {
                return Err(Error::Validation(format!(
                    "node model `{}` at position of `{}`",
                    m.node,
                    dag.label(v)
                )));
            }
            let expected: Vec<&str> = dag.parents(v).iter().map(|&p| dag.label(p)).collect();
            let got: Vec<&str> = m.parents.iter().map(String::as_str).collect();
            if expected != got {
                return Err(Error::Validation(format!(
                    "parents of `{}` are {:?} in the graph but {:?} in the model",
                    m.node, expected, got
                )));
            }
            if m.coefficients.len() != m.parents.len() {
                return Err(Error::Validation(format!(
                    "node `{}` has {} coefficients for {} parents",
                    m.node,
                    m.coefficients.len(),
                    m.parents.len()
                )));
            }
            if !(m.residual_variance >= T::zero()) {
                return Err(Error::Validation(format!(
                    "node `{}` has negative residual variance",
                    m.node
                )));
            }
        }
        Ok(FittedNetwork {
            dag,
            nodes,
            sample_size,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn nodes(&self) -> &[LinearGaussianNode<T>] {
        &self.nodes
    }

    pub fn node(&self, label: &str) -> Option<&LinearGaussianNode<T>> {
        self.dag.index_of(label).map(|i| &self.nodes[i])
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Number of free parameters: `|pa(v)| + 2` per node.
    pub fn parameter_count(&self) -> usize {
        (0..self.dag.len())
            .map(|v| self.dag.parents(v).len() + 2)
            .sum()
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        let rec = NetworkRecord {
            dag: self.dag.to_record(),
            sample_size: self.sample_size,
            nodes: self.nodes.clone(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let rec: NetworkRecord<T> = serde_json::from_str(s)?;
        let dag = Dag::from_record(&rec.dag)?;
        FittedNetwork::from_parts(dag, rec.nodes, rec.sample_size)
    }
}

fn check_complete<T: Real>(dag: &Dag, data: ArrayView2<'_, T>) -> Result<()> {
    if data.ncols() != dag.len() {
        return Err(Error::Validation(format!(
            "data has {} columns but the graph has {} nodes",
            data.ncols(),
            dag.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "data contains missing or non-finite cells".into(),
        ));
    }
    Ok(())
}

/// Least-squares fit of every node on its parents, with intercept.
///
/// Residual variances use the maximum-likelihood convention (`rss / n`);
/// the attached [`OlsFit`] carries the unbiased summary statistics.
pub fn fit_network<T: Real>(dag: &Dag, data: ArrayView2<'_, T>) -> Result<FittedNetwork<T>> {
    check_complete(dag, data)?;
    let n = data.nrows();
    let max_pa = (0..dag.len())
        .map(|v| dag.parents(v).len())
        .max()
        .unwrap_or(0);
    if n <= max_pa + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot support a parent set of size {max_pa}"
        )));
    }
    let mut nodes = Vec::with_capacity(dag.len());
    for v in 0..dag.len() {
        let pa = dag.parents(v);
        let x = data.select(ndarray::Axis(1), pa);
        let y = data.column(v);
        let fit =
            ols::fit(y, x.view()).ok_or_else(|| Error::RankDeficient(dag.label(v).to_string()))?;
        let variance = fit.ml_variance();
        let marginal = fit.tss / T::from_count(n);
        let degenerate = !(variance > T::lit(DEGENERATE_REL) * marginal);
        if degenerate {
            log::warn!("node `{}` has zero residual variance", dag.label(v));
        }
        nodes.push(LinearGaussianNode {
            node: dag.label(v).to_string(),
            parents: pa.iter().map(|&p| dag.label(p).to_string()).collect(),
            intercept: fit.intercept,
            coefficients: fit.coefficients.clone(),
            residual_variance: if degenerate { T::zero() } else { variance },
            degenerate,
            fit: Some(fit),
        });
    }
    FittedNetwork::from_parts(dag.clone(), nodes, n)
}

/// Log of the factorized density summed over rows.
pub fn log_likelihood<T: Real>(net: &FittedNetwork<T>, data: ArrayView2<'_, T>) -> Result<T> {
    check_complete(&net.dag, data)?;
    let half = T::lit(0.5);
    let ln_two_pi = T::lit((2.0 * std::f64::consts::PI).ln());
    let mut total = T::zero();
    for (v, m) in net.nodes.iter().enumerate() {
        if m.degenerate || !(m.residual_variance > T::zero()) {
            return Err(Error::DegenerateVariance(m.node.clone()));
        }
        let pa = net.dag.parents(v);
        let var = m.residual_variance;
        let norm = -half * (ln_two_pi + var.ln());
        for row in data.rows() {
            let mut pred = m.intercept;
            for (b, &p) in m.coefficients.iter().zip(pa) {
                pred = pred + *b * row[p];
            }
            let r = row[v] - pred;
            total = total + norm - half * r * r / var;
        }
    }
    Ok(total)
}

/// Multivariate normal in the network's label order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian<T> {
    pub labels: Vec<String>,
    pub mean: Array1<T>,
    pub covariance: Array2<T>,
}

/// Mean and covariance implied by the linear-Gaussian recursions,
/// accumulated in topological order.
pub fn joint_distribution<T: Real>(net: &FittedNetwork<T>) -> JointGaussian<T> {
    let dag = &net.dag;
    let n = dag.len();
    let order = dag.topological_order();
    let mut mean = Array1::<T>::zeros(n);
    let mut cov = Array2::<T>::zeros((n, n));
    let mut done: Vec<usize> = Vec::with_capacity(n);
    for &v in &order {
        let m = &net.nodes[v];
        let pa = dag.parents(v);
        let mut mu = m.intercept;
        for (b, &p) in m.coefficients.iter().zip(pa) {
            mu = mu + *b * mean[p];
        }
        mean[v] = mu;
        // cov(v, u) = Σ_p β_p cov(p, u) for every earlier u
        for &u in &done {
            let mut c = T::zero();
            for (b, &p) in m.coefficients.iter().zip(pa) {
                c = c + *b * cov[[p, u]];
            }
            cov[[v, u]] = c;
            cov[[u, v]] = c;
        }
        let mut var = m.residual_variance;
        for (b, &p) in m.coefficients.iter().zip(pa) {
            var = var + *b * cov[[p, v]];
        }
        cov[[v, v]] = var;
        done.push(v);
    }
    JointGaussian {
        labels: dag.labels().to_vec(),
        mean,
        covariance: cov,
    }
}

impl<T: Real> JointGaussian<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Log-density at `x`; errors if the covariance is not positive definite.
    pub fn log_density(&self, x: ArrayView1<'_, T>) -> Result<T> {
        let l = cholesky(self.covariance.view(), T::lit(1e-14))
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let diff: Array1<T> = &x - &self.mean;
        let z = cholesky_solve(&l, diff.view());
        let quad = diff.dot(&z);
        let logdet = l.diag().iter().fold(T::zero(), |s, &d| s + d.ln()) * T::lit(2.0);
        let k = T::from_count(self.dim());
        let ln_two_pi = T::lit((2.0 * std::f64::consts::PI).ln());
        Ok(-T::lit(0.5) * (k * ln_two_pi + logdet + quad))
    }

    /// `E[θ(targets) | θ(evidence) = values]` by Gaussian conditioning.
    ///
    /// A singular evidence block is handled through the pseudo-inverse
    /// (with a warning) as long as the evidence lies in its range.
    pub fn conditional_mean(
        &self,
        targets: &[usize],
        evidence: &[usize],
        values: ArrayView1<'_, T>,
    ) -> Result<Array1<T>> {
        let mut out: Array1<T> = targets.iter().map(|&t| self.mean[t]).collect();
        if evidence.is_empty() {
            return Ok(out);
        }
        let k = evidence.len();
        let mut see = Array2::<T>::zeros((k, k));
        let mut resid = Array1::<T>::zeros(k);
        for (a, &e) in evidence.iter().enumerate() {
            for (b, &f) in evidence.iter().enumerate() {
                see[[a, b]] = self.covariance[[e, f]];
            }
            resid[a] = values[a] - self.mean[e];
        }
        let w = match solve_psd(see.view(), resid.view(), T::lit(CONDITIONING_TOL)) {
            PsdSolve::Regular(w) => w,
            PsdSolve::Pseudo(w, dropped) => {
                log::warn!(
                    "evidence covariance singular ({dropped} direction(s) dropped); using pseudo-inverse"
                );
                w
            }
            PsdSolve::Inconsistent => {
                return Err(Error::SingularEvidence(
                    "evidence is outside the support of the fitted distribution".into(),
                ))
            }
        };
        for (i, &t) in targets.iter().enumerate() {
            let mut adj = T::zero();
            for (a, &e) in evidence.iter().enumerate() {
                adj = adj + self.covariance[[t, e]] * w[a];
            }
            out[i] = out[i] + adj;
        }
        Ok(out)
    }

    /// Marginal over a subset of variables.
    pub fn marginal(&self, idx: &[usize]) -> JointGaussian<T> {
        let mean = idx.iter().map(|&i| self.mean[i]).collect();
        let mut cov = Array2::zeros((idx.len(), idx.len()));
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                cov[[a, b]] = self.covariance[[i, j]];
            }
        }
        JointGaussian {
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            mean,
            covariance: cov,
        }
    }
}

/// Conditional expectation of `target` given labelled evidence.
pub fn predict_expectation<T: Real>(
    net: &FittedNetwork<T>,
    evidence: &[(&str, T)],
    target: &str,
) -> Result<T> {
    let joint = joint_distribution(net);
    let t = joint
        .index_of(target)
        .ok_or_else(|| Error::UnknownNode(target.to_string()))?;
    let mut idx = Vec::with_capacity(evidence.len());
    let mut vals = Vec::with_capacity(evidence.len());
    for (label, v) in evidence {
        if *label == target {
            return Err(Error::Validation(format!(
                "target `{target}` is also evidence"
            )));
        }
        let i = joint
            .index_of(label)
            .ok_or_else(|| Error::UnknownNode(label.to_string()))?;
        idx.push(i);
        vals.push(*v);
    }
    let m = joint.conditional_mean(&[t], &idx, Array1::from(vals).view())?;
    Ok(m[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parentless_node_fit_is_mean_and_ml_variance() {
        let dag = Dag::empty(labels(&["a"]));
        let data = array![[1.0], [2.0], [3.0]];
        let net = fit_network(&dag, data.view()).unwrap();
        assert_abs_diff_eq!(net.nodes()[0].intercept, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(net.nodes()[0].residual_variance, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_linear_child_is_flagged_degenerate() {
        let dag = Dag::new(labels(&["x", "y"]), &[("x", "y")]).unwrap();
        let data = array![[0.0, 1.0], [1.0, 3.0], [2.0, 5.0], [4.0, 9.0]];
        let net = fit_network(&dag, data.view()).unwrap();
        let y = &net.nodes()[1];
        assert_abs_diff_eq!(y.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.intercept, 1.0, epsilon = 1e-12);
        assert_eq!(y.residual_variance, 0.0);
        assert!(y.degenerate);
        assert!(matches!(
            log_likelihood(&net, data.view()),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn constant_column_loglik_errors() {
        let dag = Dag::empty(labels(&["a"]));
        let data = array![[0.0], [0.0]];
        // two rows is enough for an intercept-only fit
        let net = fit_network(&dag, data.view()).unwrap();
        assert!(matches!(
            log_likelihood(&net, data.view()),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn rank_deficient_parents_name_the_node() {
        let dag = Dag::new(labels(&["a", "b", "c"]), &[("a", "c"), ("b", "c")]).unwrap();
        let data = array![
            [1.0, 2.0, 0.3],
            [2.0, 4.0, 0.1],
            [3.0, 6.0, 0.9],
            [4.0, 8.0, 0.2],
            [5.0, 10.0, 0.0]
        ];
        match fit_network(&dag, data.view()) {
            Err(Error::RankDeficient(node)) => assert_eq!(node, "c"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_node_joint() {
        let dag = Dag::empty(labels(&["a"]));
        let net = FittedNetwork::from_parts(
            dag,
            vec![LinearGaussianNode::new("a", vec![], 3.0, vec![], 4.0)],
            0,
        )
        .unwrap();
        let j = joint_distribution(&net);
        assert_eq!(j.mean[0], 3.0);
        assert_eq!(j.covariance[[0, 0]], 4.0);
    }

    #[test]
    fn noiseless_scaling_covariance() {
        let dag = Dag::new(labels(&["x", "y"]), &[("x", "y")]).unwrap();
        let net = FittedNetwork::from_parts(
            dag,
            vec![
                LinearGaussianNode::new("x", vec![], 0.0, vec![], 1.0),
                LinearGaussianNode::new("y", labels(&["x"]), 0.0, vec![2.0], 0.0),
            ],
            0,
        )
        .unwrap();
        let j = joint_distribution(&net);
        assert_abs_diff_eq!(j.covariance[[0, 1]], 2.0);
        assert_abs_diff_eq!(j.covariance[[1, 0]], 2.0);
        assert_abs_diff_eq!(j.covariance[[1, 1]], 4.0);
    }

    fn outcome_model() -> FittedNetwork<f64> {
        let dag = Dag::new(
            labels(&["X2004", "X2005", "Y"]),
            &[("X2004", "X2005"), ("X2005", "Y")],
        )
        .unwrap();
        FittedNetwork::from_parts(
            dag,
            vec![
                LinearGaussianNode::new("X2004", vec![], 11.0, vec![], 1.2),
                LinearGaussianNode::new("X2005", labels(&["X2004"]), 0.984, vec![0.915], 0.08),
                LinearGaussianNode::new(
                    "Y",
                    labels(&["X2005"]),
                    192.574,
                    vec![25.139],
                    37.542f64.powi(2),
                ),
            ],
            57,
        )
        .unwrap()
    }

    #[test]
    fn prediction_given_all_parents_is_linear_predictor() {
        let net = outcome_model();
        let y = predict_expectation(&net, &[("X2005", 10.0)], "Y").unwrap();
        assert_abs_diff_eq!(y, 443.964, epsilon = 1e-9);
        // X2004 is d-separated from Y given X2005
        let y2 = predict_expectation(&net, &[("X2005", 10.0), ("X2004", 3.0)], "Y").unwrap();
        assert_abs_diff_eq!(y2, 443.964, epsilon = 1e-8);
    }

    #[test]
    fn prediction_without_evidence_is_marginal_mean() {
        let net = outcome_model();
        let j = joint_distribution(&net);
        let y = predict_expectation(&net, &[], "Y").unwrap();
        assert_abs_diff_eq!(y, j.mean[2], epsilon = 1e-12);
    }

    #[test]
    fn independent_evidence_leaves_mean_unchanged() {
        let dag = Dag::empty(labels(&["a", "b"]));
        let net = FittedNetwork::from_parts(
            dag,
            vec![
                LinearGaussianNode::new("a", vec![], 1.0, vec![], 1.0),
                LinearGaussianNode::new("b", vec![], -4.0, vec![], 2.0),
            ],
            0,
        )
        .unwrap();
        let y = predict_expectation(&net, &[("a", 100.0)], "b").unwrap();
        assert_abs_diff_eq!(y, -4.0);
    }

    #[test]
    fn target_in_evidence_is_rejected() {
        let net = outcome_model();
        assert!(predict_expectation(&net, &[("Y", 1.0)], "Y").is_err());
        assert!(matches!(
            predict_expectation(&net, &[("nope", 1.0)], "Y"),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let net = outcome_model();
        let s = net.to_json().unwrap();
        let back = FittedNetwork::<f64>::from_json(&s).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn mismatched_parents_rejected() {
        let dag = Dag::new(labels(&["x", "y"]), &[("x", "y")]).unwrap();
        let err = FittedNetwork::from_parts(
            dag,
            vec![
                LinearGaussianNode::new("x", vec![], 0.0, vec![], 1.0),
                LinearGaussianNode::new("y", vec![], 0.0, vec![], 1.0),
            ],
            0,
        );
        assert!(err.is_err());
    }
}
