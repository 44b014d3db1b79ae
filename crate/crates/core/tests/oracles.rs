mod common;

use approx::assert_abs_diff_eq;
use common::*;
use gbn_core::{
    bic_score, fit_network, generate_from_network, joint_distribution, log_likelihood, ols, Dag,
    FittedNetwork, ScoreContext,
};
use nalgebra::DMatrix;
use ndarray::{s, Array2};

fn chain3() -> FittedNetwork<f64> {
    let dag = Dag::new(labels(&["a", "b", "c"]), &[("a", "b"), ("b", "c")]).unwrap();
    FittedNetwork::from_parts(
        dag,
        vec![
            node("a", &[], 1.0, &[], 2.0),
            node("b", &["a"], -0.5, &[1.5], 0.7),
            node("c", &["b"], 3.0, &[-0.8], 1.1),
        ],
        0,
    )
    .unwrap()
}

fn four_node() -> FittedNetwork<f64> {
    let dag = Dag::new(
        labels(&["a", "b", "c", "d"]),
        &[("a", "c"), ("b", "c"), ("c", "d"), ("a", "d")],
    )
    .unwrap();
    FittedNetwork::from_parts(
        dag,
        vec![
            node("a", &[], 0.5, &[], 1.0),
            node("b", &[], -1.0, &[], 0.5),
            node("c", &["a", "b"], 0.2, &[0.8, -0.6], 0.4),
            node("d", &["a", "c"], 1.0, &[0.3, 0.9], 0.6),
        ],
        0,
    )
    .unwrap()
}

#[test]
fn chain_log_likelihood_matches_dense_density() {
    let net = chain3();
    let data = generate_from_network(&net, 20, 11);
    let fitted = fit_network(net.dag(), data.view()).unwrap();
    let ll = log_likelihood(&fitted, data.view()).unwrap();

    let j = joint_distribution(&fitted);
    let cov = DMatrix::from_fn(3, 3, |i, k| j.covariance[[i, k]]);
    let mean = j.mean.to_vec();
    let oracle: f64 = data
        .rows()
        .into_iter()
        .map(|r| mvn_log_density(&r.to_vec(), &mean, &cov))
        .sum();
    assert_abs_diff_eq!(ll, oracle, epsilon = 1e-8);
}

#[test]
fn independent_network_loglik_is_sum_of_univariate() {
    let data = noise(40, 3, 2);
    let dag = Dag::empty(labels(&["a", "b", "c"]));
    let net = fit_network(&dag, data.view()).unwrap();
    let ll = log_likelihood(&net, data.view()).unwrap();
    let mut expected = 0.0;
    for c in data.columns() {
        let n = c.len() as f64;
        let m = c.sum() / n;
        let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        expected += c
            .iter()
            .map(|x| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v))
            .sum::<f64>();
    }
    assert_abs_diff_eq!(ll, expected, epsilon = 1e-9);
}

#[test]
fn bic_agrees_with_qr_regressions() {
    let net = four_node();
    let data = generate_from_network(&net, 150, 5);
    for dag in [
        net.dag().clone(),
        Dag::empty(net.dag().labels().to_vec()),
        Dag::new(
            labels(&["a", "b", "c", "d"]),
            &[("d", "a"), ("c", "b"), ("a", "b")],
        )
        .unwrap(),
    ] {
        let got = bic_score(&dag, data.view()).unwrap();
        assert_abs_diff_eq!(got, oracle_bic(&dag, &data), epsilon = 1e-7);
        // second route: fitted log likelihood minus penalty
        let fitted = fit_network(&dag, data.view()).unwrap();
        let ll = log_likelihood(&fitted, data.view()).unwrap();
        let k = (2 * dag.len() + dag.edge_count()) as f64;
        assert_abs_diff_eq!(got, ll - 0.5 * k * 150f64.ln(), epsilon = 1e-7);
    }
}

#[test]
fn bic_prefers_empty_graph_on_independent_noise() {
    let data = noise(200, 3, 17);
    let empty = Dag::empty(labels(&["a", "b", "c"]));
    let full = Dag::new(
        labels(&["a", "b", "c"]),
        &[("a", "b"), ("a", "c"), ("b", "c")],
    )
    .unwrap();
    let se = bic_score(&empty, data.view()).unwrap();
    let sf = bic_score(&full, data.view()).unwrap();
    assert!(se > sf);
    assert_abs_diff_eq!(se, oracle_bic(&empty, &data), epsilon = 1e-8);
    assert_abs_diff_eq!(sf, oracle_bic(&full, &data), epsilon = 1e-8);
}

#[test]
fn bic_rewards_a_strong_true_parent() {
    let mut data = noise(200, 2, 23);
    for r in 0..200 {
        data[[r, 1]] = 2.0 * data[[r, 0]] + 0.3 * data[[r, 1]];
    }
    let l = labels(&["x", "y"]);
    let without = bic_score(&Dag::empty(l.clone()), data.view()).unwrap();
    let with = bic_score(&Dag::new(l, &[("x", "y")]).unwrap(), data.view()).unwrap();
    assert!(with > without);
}

#[test]
fn score_ignores_edge_insertion_order() {
    let data = generate_from_network(&four_node(), 80, 1);
    let l = labels(&["a", "b", "c", "d"]);
    let e1 = [("a", "c"), ("b", "c"), ("c", "d"), ("a", "d")];
    let mut e2 = e1;
    e2.reverse();
    let s1 = bic_score(&Dag::new(l.clone(), &e1).unwrap(), data.view()).unwrap();
    let s2 = bic_score(&Dag::new(l, &e2).unwrap(), data.view()).unwrap();
    assert_eq!(s1.to_bits(), s2.to_bits());
}

#[test]
fn joint_moments_match_forward_sampling() {
    let net = four_node();
    let j = joint_distribution(&net);
    let draws = forward_sample(&net, 1_000_000, 99);
    let mean = draws.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = &draws - &mean;
    let cov = centered.t().dot(&centered) / draws.nrows() as f64;
    for i in 0..4 {
        assert_abs_diff_eq!(mean[i], j.mean[i], epsilon = 1e-2);
        for k in 0..4 {
            assert_abs_diff_eq!(cov[[i, k]], j.covariance[[i, k]], epsilon = 1e-2);
        }
    }
}

#[test]
fn generator_moments_match_closed_form_for_chain() {
    let net = chain3();
    let j = joint_distribution(&net);
    let draws = generate_from_network(&net, 1_000_000, 3);
    let mean = draws.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = &draws - &mean;
    let cov = centered.t().dot(&centered) / draws.nrows() as f64;
    for i in 0..3 {
        assert_abs_diff_eq!(mean[i], j.mean[i], epsilon = 1e-2);
        for k in 0..3 {
            assert_abs_diff_eq!(cov[[i, k]], j.covariance[[i, k]], epsilon = 1e-2);
        }
    }
}

#[test]
fn ols_summary_matches_qr_oracle() {
    let x = noise(57, 3, 8);
    let y: Vec<f64> = (0..57)
        .map(|i| {
            4.0 + 1.5 * x[[i, 0]] - 2.0 * x[[i, 1]] + 0.1 * x[[i, 2]] + (i as f64 * 0.37).sin()
        })
        .collect();
    let y = ndarray::Array1::from(y);
    let fit = ols::fit(y.view(), x.view()).unwrap();
    let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
    let o = qr_ols(y.as_slice().unwrap(), &cols);
    assert_abs_diff_eq!(fit.intercept, o.beta[0], epsilon = 1e-9);
    assert_abs_diff_eq!(fit.intercept_se, o.se[0], epsilon = 1e-9);
    for k in 0..3 {
        assert_abs_diff_eq!(fit.coefficients[k], o.beta[k + 1], epsilon = 1e-9);
        assert_abs_diff_eq!(fit.coefficient_se[k], o.se[k + 1], epsilon = 1e-9);
    }
    assert_abs_diff_eq!(fit.r_squared, o.r_squared, epsilon = 1e-12);
    assert_abs_diff_eq!(fit.f_statistic.unwrap(), o.f_statistic, epsilon = 1e-8);
    assert_abs_diff_eq!(fit.rss, o.rss, epsilon = 1e-9);
}

#[test]
fn score_context_matches_direct_variance() {
    let data = generate_from_network(&four_node(), 120, 4);
    let ctx = ScoreContext::new(data.view()).unwrap();
    let v = ctx.residual_variance(3, &[0, 2]).unwrap();
    let y = data.column(3).to_vec();
    let o = qr_ols(&y, &[data.column(0).to_vec(), data.column(2).to_vec()]);
    assert_abs_diff_eq!(v, o.rss / 120.0, epsilon = 1e-10);
}

#[test]
fn single_precision_path_runs() {
    let data = generate_from_network(&four_node(), 300, 6);
    let d32: Array2<f32> = data.mapv(|v| v as f32);
    let net = fit_network(four_node().dag(), d32.view()).unwrap();
    let c = net.node("c").unwrap();
    assert!((c.coefficients[0] - 0.8).abs() < 0.2);
    let s64 = bic_score(four_node().dag(), data.view()).unwrap();
    let s32 = bic_score(four_node().dag(), d32.view()).unwrap();
    assert!(((s32 as f64) - s64).abs() / s64.abs() < 1e-3);
    let sub = data.slice(s![.., ..2]).to_owned();
    assert!(bic_score(&Dag::empty(labels(&["a", "b"])), sub.view()).is_ok());
}
