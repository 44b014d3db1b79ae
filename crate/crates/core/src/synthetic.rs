//! Ground-truth generators and exhaustive reference search for testing.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::with_jobs;
use crate::dag::{Dag, DagRecord};
use crate::error::{Error, Result};
use crate::network::{joint_distribution, FittedNetwork, LinearGaussianNode};
use crate::pipeline::{study_years, MergedDataset, OUTCOME_LABEL};
use crate::scalar::Real;
use crate::score::ScoreContext;
use crate::search::{predictor_label, EdgeConstraintSet};

/// Cap on row redraws when MCAR masking empties a row.
pub const MCAR_REDRAWS: usize = 100;

/// A replayable ground-truth scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec<T> {
    pub dag: DagRecord,
    /// Node models in `dag.nodes` order.
    pub nodes: Vec<LinearGaussianNode<T>>,
    pub n: usize,
    pub missing_rate: f64,
    pub seed: u64,
    /// Predictor years for columns `1..`; column 0 is the outcome.
    pub years: Vec<i32>,
}

impl<T: Real> ScenarioSpec<T> {
    pub fn network(&self) -> Result<FittedNetwork<T>> {
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Validation(format!(
                "missing rate {} outside [0, 1)",
                self.missing_rate
            )));
        }
        let dag = Dag::from_record(&self.dag)?;
        FittedNetwork::from_parts(dag, self.nodes.clone(), self.n)
    }

    /// Complete data, then MCAR masking at `missing_rate`.
    pub fn generate(&self) -> Result<(Array2<T>, MergedDataset<T>)> {
        let net = self.network()?;
        let full = generate_from_network(&net, self.n, self.seed);
        let masked = apply_mcar(
            &full,
            &self.years,
            self.missing_rate,
            self.seed.wrapping_add(1),
        )?;
        Ok((full, masked))
    }
}

/// Forward sampling in topological order.
pub fn generate_from_network<T: Real>(net: &FittedNetwork<T>, n: usize, seed: u64) -> Array2<T> {
    let dag = net.dag();
    let order = dag.topological_order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sds: Vec<T> = net
        .nodes()
        .iter()
        .map(|m| m.residual_variance.sqrt())
        .collect();
    let mut out = Array2::<T>::zeros((n, dag.len()));
    for r in 0..n {
        for &v in &order {
            let m = &net.nodes()[v];
            let mut x = m.intercept;
            for (b, &p) in m.coefficients.iter().zip(dag.parents(v)) {
                x = x + *b * out[[r, p]];
            }
            let z: f64 = rng.sample(StandardNormal);
            out[[r, v]] = x + sds[v] * T::lit(z);
        }
    }
    out
}

/// Masks each predictor cell (columns `1..`) independently with
/// probability `rate`. Column 0 is never masked.
pub fn apply_mcar<T: Real>(
    matrix: &Array2<T>,
    years: &[i32],
    rate: f64,
    seed: u64,
) -> Result<MergedDataset<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Validation(format!(
            "missing rate {rate} outside [0, 1)"
        )));
    }
    let (n, cols) = matrix.dim();
    if cols != years.len() + 1 {
        return Err(Error::Validation(
            "matrix width does not match years".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = matrix.clone();
    for r in 0..n {
        let mut attempts = 0;
        loop {
            let drop: Vec<bool> = (1..cols).map(|_| rng.random::<f64>() < rate).collect();
            if cols == 1 || drop.iter().any(|d| !d) {
                for (j, d) in drop.into_iter().enumerate() {
                    if d {
                        out[[r, j + 1]] = T::nan();
                    }
                }
                break;
            }
            attempts += 1;
            if attempts >= MCAR_REDRAWS {
                return Err(Error::Validation(format!(
                    "row {r} lost every predictor in {MCAR_REDRAWS} draws"
                )));
            }
        }
    }
    let countries = (0..n).map(|i| format!("C{:04}", i + 1)).collect();
    MergedDataset::new("synthetic", countries, years.to_vec(), out)
}

#[derive(Debug, Clone)]
pub struct Enumeration<T> {
    pub best: Dag,
    pub best_score: T,
    /// Every admissible DAG with its score, in enumeration order.
    pub all: Vec<(Dag, T)>,
}

/// Scores every DAG on `labels` allowed by `constraints`.
///
/// Refuses more than 4 labels unless `allow_five` is set (5 labels is the
/// hard maximum). The result does not depend on `jobs`.
pub fn enumerate_dags<T: Real>(
    labels: &[String],
    constraints: &EdgeConstraintSet,
    data: ArrayView2<'_, T>,
    allow_five: bool,
    jobs: usize,
) -> Result<Enumeration<T>> {
    let cap = if allow_five { 5 } else { 4 };
    if labels.len() > cap {
        return Err(Error::Validation(format!(
            "exhaustive enumeration limited to {cap} nodes, got {}",
            labels.len()
        )));
    }
    if data.ncols() != labels.len() {
        return Err(Error::Validation(
            "data columns and labels differ in length".into(),
        ));
    }
    let cons = constraints.resolve(labels)?;
    cons.start_graph(labels)?;
    let ctx = ScoreContext::new(data)?;
    let n = labels.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|p| (0..n).map(move |c| (p, c)))
        .filter(|&(p, c)| p != c && !cons.is_forbidden(p, c))
        .collect();
    let required: Vec<(usize, usize)> = cons.required().to_vec();
    let total: u64 = 1 << pairs.len();
    let scored: Vec<Option<(Dag, T)>> = with_jobs(jobs, || {
        (0..total)
            .into_par_iter()
            .map(|mask| {
                let edges: Vec<(usize, usize)> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, e)| *e)
                    .collect();
                if !required.iter().all(|e| edges.contains(e)) {
                    return None;
                }
                let dag = Dag::from_index_edges(labels.to_vec(), &edges).ok()?;
                let score = ctx.score_dag(&dag).ok()?;
                Some((dag, score))
            })
            .collect()
    })?;
    let all: Vec<(Dag, T)> = scored.into_iter().flatten().collect();
    let (best, best_score) = all
        .iter()
        .fold(None::<&(Dag, T)>, |acc, cand| match acc {
            Some(b) if b.1 >= cand.1 => Some(b),
            _ => Some(cand),
        })
        .cloned()
        .ok_or_else(|| Error::Numerical("no admissible DAG could be scored".into()))?;
    Ok(Enumeration {
        best,
        best_score,
        all,
    })
}

pub const MIMIC_CHAIN_COEF: f64 = 0.95;
pub const MIMIC_CHAIN_INTERCEPT: f64 = 0.55;
pub const MIMIC_CHAIN_VARIANCE: f64 = 0.1;
pub const MIMIC_START_MEAN: f64 = 11.0;
/// Stationary variance of the chain, so adjacent years correlate at 0.95.
pub const MIMIC_START_VARIANCE: f64 =
    MIMIC_CHAIN_VARIANCE / (1.0 - MIMIC_CHAIN_COEF * MIMIC_CHAIN_COEF);
pub const MIMIC_SLOPE: f64 = 25.0;
pub const MIMIC_INTERCEPT: f64 = 192.0;
pub const MIMIC_R_SQUARED: f64 = 0.35;
pub const MIMIC_OUTCOME_PARENT: i32 = 2005;

/// 19-node truth: a year-on-year chain from 1997 to 2005, one outcome
/// parent in 2005, and later years as independent roots drawn from the
/// chain's stationary law. The outcome noise gives R² = 0.35.
pub fn study_mimic_scenario(n: usize, seed: u64) -> ScenarioSpec<f64> {
    let years = study_years();
    let mut labels = vec![OUTCOME_LABEL.to_string()];
    labels.extend(years.iter().map(|&y| predictor_label(y)));
    let parent = predictor_label(MIMIC_OUTCOME_PARENT);
    let mut edges = vec![(parent.clone(), OUTCOME_LABEL.to_string())];
    for w in years.windows(2).filter(|w| w[1] <= MIMIC_OUTCOME_PARENT) {
        edges.push((predictor_label(w[0]), predictor_label(w[1])));
    }
    let mut nodes = vec![LinearGaussianNode::new(
        OUTCOME_LABEL,
        vec![parent.clone()],
        MIMIC_INTERCEPT,
        vec![MIMIC_SLOPE],
        1.0,
    )];
    for (i, &y) in years.iter().enumerate() {
        nodes.push(if i == 0 || y > MIMIC_OUTCOME_PARENT {
            LinearGaussianNode::new(
                predictor_label(y),
                vec![],
                MIMIC_START_MEAN,
                vec![],
                MIMIC_START_VARIANCE,
            )
        } else {
            LinearGaussianNode::new(
                predictor_label(y),
                vec![predictor_label(years[i - 1])],
                MIMIC_CHAIN_INTERCEPT,
                vec![MIMIC_CHAIN_COEF],
                MIMIC_CHAIN_VARIANCE,
            )
        });
    }
    let dag = Dag::new(labels.clone(), &edges).expect("mimic truth is acyclic");
    let net = FittedNetwork::from_parts(dag.clone(), nodes.clone(), n).expect("consistent truth");
    let joint = joint_distribution(&net);
    let px = joint.index_of(&parent).expect("parent label present");
    let explained = MIMIC_SLOPE * MIMIC_SLOPE * joint.covariance[[px, px]];
    nodes[0].residual_variance = explained * (1.0 - MIMIC_R_SQUARED) / MIMIC_R_SQUARED;
    ScenarioSpec {
        dag: dag.to_record(),
        nodes,
        n,
        missing_rate: 0.0,
        seed,
        years,
    }
}
