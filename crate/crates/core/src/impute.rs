//! Missing-value completion: nearest-neighbour seeding followed by
//! iterative Bayesian-network imputation.
//!
//! Each iteration hides a random set of observed cells, re-learns the
//! network on the current completion, re-imputes the hidden and the truly
//! missing cells from the fitted joint Gaussian and scores the hidden ones
//! against their known values.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap::replicate_seed;
use crate::error::{Error, Result};
use crate::network::{fit_network, joint_distribution, JointGaussian};
use crate::pipeline::{Cell, MergedDataset};
use crate::scalar::Real;
use crate::search::{hill_climb, EdgeConstraintSet, SearchConfig};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_MASK_SIZE: usize = 50;
pub const DEFAULT_ITERATIONS: usize = 500;

fn describe<T: Real>(d: &MergedDataset<T>, (r, c): Cell) -> String {
    format!("{} / {}", d.countries()[r], d.years()[c - 1])
}

fn observed_sd<T: Real>(d: &MergedDataset<T>, c: usize) -> T {
    let vals: Vec<T> = (0..d.n())
        .filter(|&r| !d.mask()[[r, c]])
        .map(|r| d.values()[[r, c]])
        .collect();
    if vals.len() < 2 {
        return T::one();
    }
    let nf = T::from_count(vals.len());
    let mean = vals.iter().copied().sum::<T>() / nf;
    let var = vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
    if var > T::zero() {
        var.sqrt()
    } else {
        T::one()
    }
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / T::lit(2.0)
    }
}

/// Fills each missing predictor cell with the median of its column over the
/// `k` nearest rows observed in that column.
///
/// Distance is the root mean squared difference over co-observed predictor
/// columns, each scaled by its observed standard deviation.
pub fn knn_impute<T: Real>(d: &MergedDataset<T>, k: usize) -> Result<Array2<T>> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let p = d.p();
    let mask = d.mask();
    let values = d.values();
    for r in 0..d.n() {
        if (1..=p).all(|c| mask[[r, c]]) {
            return Err(Error::Validation(format!(
                "{} has no observed predictor",
                d.countries()[r]
            )));
        }
    }
    let sd: Vec<T> = (0..=p)
        .map(|c| if c == 0 { T::one() } else { observed_sd(d, c) })
        .collect();
    let mut out = values.clone();
    for (r, c) in d.missing_cells() {
        let mut cands: Vec<(T, usize)> = (0..d.n())
            .filter(|&s| s != r && !mask[[s, c]])
            .map(|s| {
                let mut sum = T::zero();
                let mut count = 0usize;
                for j in 1..=p {
                    if j != c && !mask[[r, j]] && !mask[[s, j]] {
                        let z = (values[[r, j]] - values[[s, j]]) / sd[j];
                        sum = sum + z * z;
                        count += 1;
                    }
                }
                let dist = if count == 0 {
                    T::infinity()
                } else {
                    (sum / T::from_count(count)).sqrt()
                };
                (dist, s)
            })
            .collect();
        if cands.is_empty() {
            return Err(Error::Validation(format!(
                "no donor rows for cell {}",
                describe(d, (r, c))
            )));
        }
        if cands.len() < k {
            log::warn!(
                "only {} donor rows for cell {} (k = {k})",
                cands.len(),
                describe(d, (r, c))
            );
        }
        cands.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("distances are not NaN")
                .then(a.1.cmp(&b.1))
        });
        let donors: Vec<T> = cands.iter().take(k).map(|&(_, s)| values[[s, c]]).collect();
        out[[r, c]] = median(donors);
    }
    Ok(out)
}

/// Uniform sample of `m` observed predictor cells, in row-major order.
pub fn mask_random_cells<T: Real>(
    d: &MergedDataset<T>,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Cell>> {
    let observed = d.observed_cells();
    if m > observed.len() {
        return Err(Error::Validation(format!(
            "cannot mask {m} cells: only {} observed predictor cells",
            observed.len()
        )));
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, observed.len(), m).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| observed[i]).collect())
}

/// Sum of squared differences over `cells`.
pub fn gap<T: Real>(original: &Array2<T>, imputed: &Array2<T>, cells: &[Cell]) -> T {
    cells
        .iter()
        .map(|&c| {
            let d = original[c] - imputed[c];
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BniiMode {
    /// Stop at the first iteration whose gap exceeds the best so far.
    Faithful,
    /// Run every iteration and keep the completion with the smallest gap.
    Sweep,
}

impl std::str::FromStr for BniiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faithful" => Ok(BniiMode::Faithful),
            "sweep" => Ok(BniiMode::Sweep),
            other => Err(Error::Validation(format!(
                "unknown imputation mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BniiConfig {
    pub iterations: usize,
    pub mask_size: usize,
    pub k: usize,
    pub seed: u64,
    pub mode: BniiMode,
    pub search: SearchConfig,
}

impl Default for BniiConfig {
    fn default() -> Self {
        BniiConfig {
            iterations: DEFAULT_ITERATIONS,
            mask_size: DEFAULT_MASK_SIZE,
            k: DEFAULT_K,
            seed: 0,
            mode: BniiMode::Sweep,
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gap: f64,
    /// `|S_r ∪ S_NA|`.
    pub masked: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationTrace {
    pub mode: BniiMode,
    pub records: Vec<IterationRecord>,
    pub final_iteration: usize,
    pub best_gap: Option<f64>,
    /// 1-based iteration at which `best_gap` was recorded.
    pub best_rank: Option<usize>,
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    mode: BniiMode,
    iterations_run: usize,
    best_gap: Option<f64>,
    best_rank: Option<usize>,
    config: &'a BniiConfig,
}

impl ImputationTrace {
    fn empty(mode: BniiMode) -> Self {
        ImputationTrace {
            mode,
            records: Vec::new(),
            final_iteration: 0,
            best_gap: None,
            best_rank: None,
        }
    }

    /// Writes `iteration,D,accepted`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iteration", "D", "accepted"])?;
        for r in &self.records {
            wr.write_record([
                r.iteration.to_string(),
                r.gap.to_string(),
                r.accepted.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn summary_json(&self, config: &BniiConfig) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TraceSummary {
            mode: self.mode,
            iterations_run: self.records.len(),
            best_gap: self.best_gap,
            best_rank: self.best_rank,
            config,
        })?)
    }
}

/// Re-imputes `targets` (grouped by row) from the joint Gaussian, using
/// every other column of the row as evidence.
fn impute_cells<T: Real>(
    joint: &JointGaussian<T>,
    data: &mut Array2<T>,
    targets: &[Cell],
) -> Result<()> {
    let mut by_row: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(r, c) in targets {
        by_row.entry(r).or_default().push(c);
    }
    let ncol = data.ncols();
    for (r, cols) in by_row {
        let evidence: Vec<usize> = (0..ncol).filter(|c| !cols.contains(c)).collect();
        let vals: Array1<T> = evidence.iter().map(|&c| data[[r, c]]).collect();
        let mean = joint.conditional_mean(&cols, &evidence, vals.view())?;
        for (i, &c) in cols.iter().enumerate() {
            data[[r, c]] = mean[i];
        }
    }
    Ok(())
}

/// Iterative BN imputation of the missing predictor cells of `d`.
///
/// Cells observed in `d` are returned unchanged; the outcome column only
/// ever serves as evidence.
pub fn bnii<T: Real>(
    d: &MergedDataset<T>,
    constraints: &EdgeConstraintSet,
    config: &BniiConfig,
) -> Result<(MergedDataset<T>, ImputationTrace)> {
    let missing = d.missing_cells();
    if missing.is_empty() {
        return Ok((
            d.with_values(d.values().clone())?,
            ImputationTrace::empty(config.mode),
        ));
    }
    let labels = d.labels();
    let original = d.values();
    let mut current = knn_impute(d, config.k)?;
    let mut best = current.clone();
    let mut best_gap = T::infinity();
    let mut trace = ImputationTrace::empty(config.mode);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for i in 1..=config.iterations {
        let hidden = mask_random_cells(d, config.mask_size, &mut rng)?;
        let search = SearchConfig {
            seed: replicate_seed(config.seed, i as u64),
            record_trace: false,
            ..config.search
        };
        let learned = hill_climb(current.view(), &labels, constraints, &search)?;
        let net = fit_network(&learned.dag, current.view())?;
        let joint = joint_distribution(&net);

        let mut targets = hidden.clone();
        targets.extend_from_slice(&missing);
        let mut candidate = current.clone();
        impute_cells(&joint, &mut candidate, &targets)?;
        let g = gap(original, &candidate, &hidden);
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite imputation gap at iteration {i}"
            )));
        }
        for &c in &hidden {
            candidate[c] = original[c];
        }

        let accepted = match config.mode {
            BniiMode::Faithful => g <= best_gap,
            BniiMode::Sweep => g < best_gap,
        };
        trace.records.push(IterationRecord {
            iteration: i,
            gap: g.as_f64(),
            masked: targets.len(),
            accepted,
        });
        trace.final_iteration = i;
        if accepted {
            best_gap = g;
            best = candidate.clone();
            trace.best_gap = Some(g.as_f64());
            trace.best_rank = Some(i);
        }
        match config.mode {
            BniiMode::Faithful if !accepted => break,
            BniiMode::Faithful => current = best.clone(),
            BniiMode::Sweep => current = candidate,
        }
    }
    Ok((d.with_values(best)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dataset(values: Array2<f64>) -> MergedDataset<f64> {
        let n = values.nrows();
        let p = values.ncols() - 1;
        MergedDataset::new(
            "reading",
            (0..n).map(|i| format!("C{i}")).collect(),
            (2000..2000 + p as i32).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn knn_without_missing_is_identity() {
        let d = dataset(array![[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 1.0, 0.5]]);
        assert_eq!(knn_impute(&d, 10).unwrap(), *d.values());
    }

    #[test]
    fn knn_copies_exact_duplicate() {
        let d = dataset(array![
            [400.0, 1.0, 2.0, f64::NAN],
            [410.0, 1.0, 2.0, 7.5],
            [420.0, 5.0, 9.0, 1.0],
            [430.0, 3.0, 4.0, 2.0]
        ]);
        let out = knn_impute(&d, 1).unwrap();
        assert_eq!(out[[0, 3]], 7.5);
    }

    #[test]
    fn knn_uses_median_of_neighbours() {
        let d = dataset(array![
            [1.0, 0.0, f64::NAN],
            [1.0, 0.1, 10.0],
            [1.0, 0.2, 20.0],
            [1.0, 0.3, 60.0],
            [1.0, 5.0, 1000.0]
        ]);
        let out = knn_impute(&d, 3).unwrap();
        assert_eq!(out[[0, 2]], 20.0);
        // fewer donors than k: uses all four
        let out = knn_impute(&d, 10).unwrap();
        assert_eq!(out[[0, 2]], 40.0);
    }

    #[test]
    fn knn_errors_without_donors() {
        let d = dataset(array![[1.0, 0.0, f64::NAN], [1.0, 0.1, f64::NAN]]);
        let err = knn_impute(&d, 1).unwrap_err();
        assert!(err.to_string().contains("C0 / 2001"), "{err}");
    }

    #[test]
    fn mask_sizes() {
        let d = dataset(array![[1.0, 0.0, f64::NAN], [1.0, 0.1, 2.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(mask_random_cells(&d, 0, &mut rng).unwrap().is_empty());
        let all = mask_random_cells(&d, 3, &mut rng).unwrap();
        assert_eq!(all, d.observed_cells());
        assert!(mask_random_cells(&d, 4, &mut rng).is_err());
    }

    #[test]
    fn gap_examples() {
        let a = array![[0.0, 3.0, 1.0]];
        let b = array![[0.0, 1.0, 2.0]];
        assert_eq!(gap(&a, &a, &[(0, 1), (0, 2)]), 0.0);
        assert_eq!(gap(&a, &b, &[(0, 1)]), 4.0);
        let c = array![[0.0, 2.0, 3.0]];
        assert_eq!(gap(&a, &c, &[(0, 1), (0, 2)]), 5.0);
    }

    #[test]
    fn complete_input_is_returned_unchanged() {
        let d = dataset(array![[1.0, 2.0], [2.0, 3.0], [3.0, 1.0]]);
        let (out, trace) = bnii(&d, &EdgeConstraintSet::default(), &BniiConfig::default()).unwrap();
        assert_eq!(out.values(), d.values());
        assert!(trace.records.is_empty());
        assert_eq!(trace.best_rank, None);
    }
}
