#![allow(dead_code)]

use gbn_core::{Dag, FittedNetwork, LinearGaussianNode};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Plain least squares via nalgebra's QR.
pub struct QrOls {
    pub beta: Vec<f64>, // intercept first
    pub se: Vec<f64>,
    pub rss: f64,
    pub r_squared: f64,
    pub f_statistic: f64,
}

pub fn qr_ols(y: &[f64], x: &[Vec<f64>]) -> QrOls {
    let n = y.len();
    let k = x.len();
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { x[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let qr = design.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yv;
    let beta = r.solve_upper_triangular(&qty).expect("full rank");
    let resid = &yv - &design * &beta;
    let rss = resid.dot(&resid);
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = (n - k - 1) as f64;
    let sigma2 = rss / df;
    let rinv = r.try_inverse().expect("invertible R");
    let cov = &rinv * rinv.transpose() * sigma2;
    let se = (0..=k).map(|j| cov[(j, j)].sqrt()).collect();
    let r_squared = 1.0 - rss / tss;
    let f_statistic = ((tss - rss) / k as f64) / sigma2;
    QrOls {
        beta: beta.iter().copied().collect(),
        se,
        rss,
        r_squared,
        f_statistic,
    }
}

/// Dense multivariate normal log density.
pub fn mvn_log_density(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let chol = cov.clone().cholesky().expect("positive definite");
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol.l().solve_lower_triangular(&diff).unwrap();
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.dot(&z))
}

/// BIC of a DAG by regressing every node on its parents with QR and
/// summing Gaussian log likelihoods at the ML variance.
pub fn oracle_bic(dag: &Dag, data: &Array2<f64>) -> f64 {
    let n = data.nrows();
    let nf = n as f64;
    let mut total = 0.0;
    for v in 0..dag.len() {
        let y: Vec<f64> = data.column(v).to_vec();
        let pa = dag.parents(v);
        let rss = if pa.is_empty() {
            let m = y.iter().sum::<f64>() / nf;
            y.iter().map(|a| (a - m).powi(2)).sum()
        } else {
            let x: Vec<Vec<f64>> = pa.iter().map(|&p| data.column(p).to_vec()).collect();
            qr_ols(&y, &x).rss
        };
        let s2 = rss / nf;
        total += -0.5 * nf * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0)
            - 0.5 * (pa.len() as f64 + 2.0) * nf.ln();
    }
    total
}

/// Draws rows from a linear Gaussian network with its own sampler.
pub fn forward_sample(net: &FittedNetwork<f64>, n: usize, seed: u64) -> Array2<f64> {
    let dag = net.dag();
    let order = dag.topological_order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((n, dag.len()));
    for r in 0..n {
        for &v in &order {
            let node = &net.nodes()[v];
            let mut val = node.intercept;
            for (&p, &b) in dag.parents(v).iter().zip(&node.coefficients) {
                val += b * out[[r, p]];
            }
            let e: f64 = StandardNormal.sample(&mut rng);
            out[[r, v]] = val + e * node.residual_variance.sqrt();
        }
    }
    out
}

pub fn node(
    name: &str,
    parents: &[&str],
    intercept: f64,
    coefs: &[f64],
    var: f64,
) -> LinearGaussianNode<f64> {
    LinearGaussianNode::new(name, labels(parents), intercept, coefs.to_vec(), var)
}

/// Standard normal matrix.
pub fn noise(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(&mut rng))
}
