mod common;

use std::collections::BTreeSet;

use common::*;
use gbn_core::bootstrap::EdgeStrength;
use gbn_core::synthetic::enumerate_dags;
use gbn_core::{
    average_network, bic_score, contribution_index, efficiency_index, fit_network, gap, hill_climb,
    joint_distribution, linalg::symmetric_eigen, ols, strongest_edge_to_outcome, Dag,
    EdgeConstraintSet, EdgeStrengthTable, ScoreContext, SearchConfig, Threshold,
};
use ndarray::Array2;
use proptest::prelude::*;

fn random_dag(n: usize, bits: &[bool]) -> Dag {
    // edges only from lower to higher index, so any bit pattern is acyclic
    let l: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    let mut k = 0;
    for c in 0..n {
        for p in 0..c {
            if bits[k] {
                edges.push((p, c));
            }
            k += 1;
        }
    }
    Dag::from_index_edges(l, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_the_threshold_never_adds_edges(
        s in prop::collection::vec(0.0f64..=1.0, 12),
        t1 in 0.01f64..=1.0,
        t2 in 0.01f64..=1.0,
    ) {
        let l = labels(&["a", "b", "c", "d"]);
        let mut edges = Vec::new();
        let mut k = 0;
        for p in 0..4 {
            for c in 0..4 {
                if p != c {
                    edges.push(EdgeStrength { parent: l[p].clone(), child: l[c].clone(), strength: s[k] });
                    k += 1;
                }
            }
        }
        let t = EdgeStrengthTable::from_edges(l, 100, &edges).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a: BTreeSet<_> = average_network(&t, &Threshold::Fraction(hi)).unwrap().dag.edges().into_iter().collect();
        let b: BTreeSet<_> = average_network(&t, &Threshold::Fraction(lo)).unwrap().dag.edges().into_iter().collect();
        prop_assert!(a.is_subset(&b));
    }

    #[test]
    fn gap_ignores_cell_order(vals in prop::collection::vec(-50.0f64..50.0, 24), seed in 0u64..1000) {
        let a = Array2::from_shape_vec((4, 6), vals.clone()).unwrap();
        let b = a.mapv(|v| v * 0.5 + 1.0);
        let mut cells: Vec<(usize, usize)> = (0..4).flat_map(|r| (0..6).map(move |c| (r, c))).collect();
        let g1 = gap(&a, &b, &cells);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        cells.shuffle(&mut rng);
        let g2 = gap(&a, &b, &cells);
        prop_assert!((g1 - g2).abs() <= 1e-9 * g1.abs().max(1.0));
        prop_assert!(g1 >= 0.0);
    }

    #[test]
    fn accepted_moves_increase_the_score(seed in 0u64..500) {
        let data = noise(80, 4, seed);
        let l = labels(&["a", "b", "c", "d"]);
        let cfg = SearchConfig { record_trace: true, restarts: 0, ..SearchConfig::default() };
        let r = hill_climb(data.view(), &l, &EdgeConstraintSet::default(), &cfg).unwrap();
        let mut last = f64::NEG_INFINITY;
        for ev in &r.trace {
            prop_assert!(ev.delta > 0.0);
            prop_assert!(ev.score > last);
            last = ev.score;
        }
    }

    #[test]
    fn blacklisted_edges_never_appear(seed in 0u64..500, mask in prop::collection::vec(any::<bool>(), 12)) {
        let mut data = noise(100, 4, seed);
        for r in 0..100 {
            data[[r, 1]] += 1.5 * data[[r, 0]];
            data[[r, 3]] += data[[r, 1]] - data[[r, 2]];
        }
        let l = labels(&["a", "b", "c", "d"]);
        let mut bl = BTreeSet::new();
        let mut k = 0;
        for p in &l {
            for c in &l {
                if p != c {
                    if mask[k] {
                        bl.insert((p.clone(), c.clone()));
                    }
                    k += 1;
                }
            }
        }
        let cons = EdgeConstraintSet::new(bl.clone(), BTreeSet::new()).unwrap();
        let cfg = SearchConfig { seed, restarts: 3, ..SearchConfig::default() };
        let r = hill_climb(data.view(), &l, &cons, &cfg).unwrap();
        for (p, c) in r.dag.edges() {
            prop_assert!(!bl.contains(&(l[p].clone(), l[c].clone())));
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors(seed in 0u64..1000, n in 8usize..60) {
        let x = noise(n, 2, seed);
        let e = noise(n, 1, seed + 1);
        let y = ndarray::Array1::from_shape_fn(n, |i| 1.0 + 0.7 * x[[i, 0]] - x[[i, 1]] + e[[i, 0]]);
        let f = ols::fit(y.view(), x.view()).unwrap();
        let resid = ndarray::Array1::from_shape_fn(n, |i| {
            y[i] - f.intercept - f.coefficients[0] * x[[i, 0]] - f.coefficients[1] * x[[i, 1]]
        });
        let scale = y.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        prop_assert!(resid.sum().abs() < 1e-9 * scale);
        for c in 0..2 {
            prop_assert!(resid.dot(&x.column(c)).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn implied_covariance_is_psd(seed in 0u64..1000, bits in prop::collection::vec(any::<bool>(), 10)) {
        let dag = random_dag(5, &bits);
        let data = noise(40, 5, seed);
        let net = fit_network(&dag, data.view()).unwrap();
        let j = joint_distribution(&net);
        let sym = (&j.covariance - &j.covariance.t()).iter().all(|v| v.abs() < 1e-12);
        prop_assert!(sym);
        let (vals, _) = symmetric_eigen(j.covariance.view());
        prop_assert!(vals.iter().all(|&v| v > -1e-10));
    }

    #[test]
    fn contribution_grows_with_y(alpha in 1.0f64..500.0, y1 in 1.0f64..1000.0, y2 in 1.0f64..1000.0) {
        let (lo, hi) = if y1 <= y2 { (y1, y2) } else { (y2, y1) };
        prop_assert!(contribution_index(lo, alpha).unwrap() <= contribution_index(hi, alpha).unwrap());
        if hi > lo {
            prop_assert!(contribution_index(lo, alpha).unwrap() < contribution_index(hi, alpha).unwrap());
        }
        prop_assert_eq!(efficiency_index(hi, hi).unwrap(), 0.0);
        let e = efficiency_index(y1, y2).unwrap();
        prop_assert_eq!(e > 0.0, y1 > y2);
        prop_assert_eq!(e < 0.0, y1 < y2);
    }

    #[test]
    fn bic_is_sum_of_local_scores(seed in 0u64..1000, bits in prop::collection::vec(any::<bool>(), 10)) {
        let dag = random_dag(5, &bits);
        let data = noise(50, 5, seed);
        let ctx = ScoreContext::new(data.view()).unwrap();
        let total = bic_score(&dag, data.view()).unwrap();
        let parts: f64 = (0..5).map(|v| ctx.local_score(v, dag.parents(v)).unwrap()).sum();
        prop_assert!((total - parts).abs() < 1e-9 * total.abs());
    }

    #[test]
    fn enumeration_bounds_hill_climbing(seed in 0u64..1000) {
        let mut data = noise(60, 3, seed);
        for r in 0..60 {
            data[[r, 2]] += 0.8 * data[[r, 0]];
        }
        let l = labels(&["a", "b", "c"]);
        let e = enumerate_dags(&l, &EdgeConstraintSet::default(), data.view(), false, 1).unwrap();
        let h = hill_climb(data.view(), &l, &EdgeConstraintSet::default(), &SearchConfig { seed, ..SearchConfig::default() }).unwrap();
        prop_assert!(e.best_score >= h.score - 1e-9);
    }

    #[test]
    fn strongest_outcome_edge_survives_rescaling(s in prop::collection::vec(0.01f64..=1.0, 3), c in 0.05f64..1.0) {
        let l = labels(&["X1", "X2", "X3", "Y"]);
        let mk = |k: f64| -> EdgeStrengthTable {
            let edges: Vec<EdgeStrength> = (0..3)
                .map(|i| EdgeStrength { parent: l[i].clone(), child: "Y".into(), strength: s[i] * k })
                .collect();
            EdgeStrengthTable::from_edges(l.clone(), 10, &edges).unwrap()
        };
        let a = strongest_edge_to_outcome(&mk(1.0), "Y").map(|x| x.0);
        let b = strongest_edge_to_outcome(&mk(c), "Y").map(|x| x.0);
        prop_assert_eq!(a, b);
    }
}
