//! Gaussian Bayesian networks for country-level panel data.
//!
//! The crate covers the whole workflow: ingesting indicator and score
//! tables into a `[Y, X]` matrix, completing missing predictor cells,
//! learning a temporally constrained DAG by hill-climbing with bootstrap
//! edge strengths, and reporting per-country contribution and efficiency
//! indexes. Numeric code is generic over [`Real`]; the `*64` aliases fix
//! the scalar to `f64`.

// `!(x > y)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bootstrap;
pub mod cli;
pub mod dag;
pub mod error;
pub mod impute;
pub mod linalg;
pub mod network;
pub mod ols;
pub mod pipeline;
pub mod scalar;
pub mod score;
pub mod search;
pub mod synthetic;

pub use analysis::{
    build_report, contribution_index, efficiency_index, extract_path, regression_table,
    strongest_edge_to_outcome, AnalysisReport, RegressionTable,
};
pub use bootstrap::{average_network, bootstrap_strength, Consensus, EdgeStrengthTable, Threshold};
pub use dag::Dag;
pub use error::{Error, Result};
pub use impute::{bnii, gap, knn_impute, mask_random_cells, BniiConfig, BniiMode, ImputationTrace};
pub use network::{
    fit_network, joint_distribution, log_likelihood, predict_expectation, FittedNetwork,
    JointGaussian, LinearGaussianNode,
};
pub use ols::OlsFit;
pub use pipeline::{
    aggregate_national_scores, merge, missingness_summary, IndicatorTable, MergedDataset,
    ScoreTable, Subject,
};
pub use scalar::Real;
pub use score::{bic_score, ScoreContext};
pub use search::{hill_climb, temporal_blacklist, EdgeConstraintSet, SearchConfig, SearchResult};
pub use synthetic::{
    apply_mcar, enumerate_dags, generate_from_network, study_mimic_scenario, ScenarioSpec,
};

pub type FittedNetwork64 = FittedNetwork<f64>;
pub type FittedNetwork32 = FittedNetwork<f32>;
pub type JointGaussian64 = JointGaussian<f64>;
pub type LinearGaussianNode64 = LinearGaussianNode<f64>;
pub type MergedDataset64 = MergedDataset<f64>;
pub type MergedDataset32 = MergedDataset<f32>;
pub type OlsFit64 = OlsFit<f64>;
pub type ScenarioSpec64 = ScenarioSpec<f64>;
