//! Bootstrap edge strengths and the thresholded consensus network.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::{label_index, Dag};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::search::{hill_climb, EdgeConstraintSet, SearchConfig};

/// Redraws allowed for a replicate whose resample has a constant column.
pub const MAX_REDRAWS: usize = 10;

/// Inclusion frequency of every directed edge across bootstrap replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStrengthTable {
    labels: Vec<String>,
    replicates: usize,
    /// Row-major `strength[parent * n + child]`.
    strength: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeStrength {
    pub parent: String,
    pub child: String,
    pub strength: f64,
}

#[derive(Serialize, Deserialize)]
struct StrengthRecord {
    nodes: Vec<String>,
    replicates: usize,
    edges: Vec<EdgeStrength>,
}

impl EdgeStrengthTable {
    /// Builds a table from explicit strengths; unspecified edges get 0.
    pub fn from_edges(
        labels: Vec<String>,
        replicates: usize,
        edges: &[EdgeStrength],
    ) -> Result<Self> {
        let n = labels.len();
        let index = label_index(&labels)?;
        let mut strength = vec![0.0; n * n];
        for e in edges {
            let p = *index
                .get(e.parent.as_str())
                .ok_or_else(|| Error::UnknownNode(e.parent.clone()))?;
            let c = *index
                .get(e.child.as_str())
                .ok_or_else(|| Error::UnknownNode(e.child.clone()))?;
            if !(0.0..=1.0).contains(&e.strength) {
                return Err(Error::Validation(format!(
                    "strength {} for {} -> {} outside [0, 1]",
                    e.strength, e.parent, e.child
                )));
            }
            strength[p * n + c] = e.strength;
        }
        Ok(EdgeStrengthTable {
            labels,
            replicates,
            strength,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn strength(&self, parent: usize, child: usize) -> f64 {
        self.strength[parent * self.labels.len() + child]
    }

    pub fn strength_by_label(&self, parent: &str, child: &str) -> Option<f64> {
        let p = self.labels.iter().position(|l| l == parent)?;
        let c = self.labels.iter().position(|l| l == child)?;
        Some(self.strength(p, c))
    }

    /// Every ordered pair of distinct nodes, parent-major.
    pub fn edges(&self) -> Vec<EdgeStrength> {
        let n = self.labels.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1));
        for p in 0..n {
            for c in 0..n {
                if p != c {
                    out.push(EdgeStrength {
                        parent: self.labels[p].clone(),
                        child: self.labels[c].clone(),
                        strength: self.strength(p, c),
                    });
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["parent", "child", "strength"])?;
        for e in self.edges() {
            wr.write_record([e.parent.as_str(), e.child.as_str(), &e.strength.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `parent,child,strength` rows against a known label order.
    pub fn read_csv<R: Read>(labels: Vec<String>, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["parent", "child", "strength"] {
            return Err(Error::Validation(format!(
                "strength CSV header must be `parent,child,strength`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut edges = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let strength: f64 = rec[2].trim().parse().map_err(|_| Error::Csv {
                path: "strengths".into(),
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                message: format!("invalid strength `{}`", &rec[2]),
            })?;
            edges.push(EdgeStrength {
                parent: rec[0].to_string(),
                child: rec[1].to_string(),
                strength,
            });
        }
        EdgeStrengthTable::from_edges(labels, 0, &edges)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&StrengthRecord {
            nodes: self.labels.clone(),
            replicates: self.replicates,
            edges: self.edges(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: StrengthRecord = serde_json::from_str(s)?;
        EdgeStrengthTable::from_edges(rec.nodes, rec.replicates, &rec.edges)
    }
}

/// Stream seed for replicate `index`, independent of execution order.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over (master, index)
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn has_constant_column<T: Real>(m: &Array2<T>) -> bool {
    m.columns().into_iter().any(|col| {
        let first = col[0];
        col.iter().all(|&v| v == first)
    })
}

fn resample<T: Real>(data: ArrayView2<'_, T>, rng: &mut ChaCha8Rng) -> Array2<T> {
    let n = data.nrows();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    data.select(ndarray::Axis(0), &rows)
}

/// Runs `op` on a pool of `jobs` threads (0 = rayon default).
pub fn with_jobs<R: Send>(jobs: usize, op: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    Ok(pool.install(op))
}

/// Nonparametric bootstrap over rows: each replicate resamples `n` rows
/// with replacement and runs [`hill_climb`]. Output is identical for any
/// `jobs`.
pub fn bootstrap_strength<T: Real>(
    data: ArrayView2<'_, T>,
    labels: &[String],
    constraints: &EdgeConstraintSet,
    config: &SearchConfig,
    replicates: usize,
    seed: u64,
    jobs: usize,
) -> Result<EdgeStrengthTable> {
    if replicates == 0 {
        return Err(Error::Validation(
            "at least one bootstrap replicate is required".into(),
        ));
    }
    if data.ncols() != labels.len() {
        return Err(Error::Validation(
            "data columns and labels differ in length".into(),
        ));
    }
    let n = labels.len();
    let run = |i: usize| -> Result<Dag> {
        let stream = replicate_seed(seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let mut sample = resample(data, &mut rng);
        let mut redraws = 0;
        while has_constant_column(&sample) {
            if redraws == MAX_REDRAWS {
                return Err(Error::Numerical(format!(
                    "bootstrap replicate {i}: constant column after {MAX_REDRAWS} redraws"
                )));
            }
            redraws += 1;
            sample = resample(data, &mut rng);
        }
        let cfg = SearchConfig {
            seed: stream,
            record_trace: false,
            ..*config
        };
        Ok(hill_climb(sample.view(), labels, constraints, &cfg)?.dag)
    };
    let dags: Vec<Dag> = with_jobs(jobs, || {
        (0..replicates)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()
    })??;
    let mut counts = vec![0usize; n * n];
    for dag in &dags {
        for (p, c) in dag.edges() {
            counts[p * n + c] += 1;
        }
    }
    let r = replicates as f64;
    Ok(EdgeStrengthTable {
        labels: labels.to_vec(),
        replicates,
        strength: counts.into_iter().map(|k| k as f64 / r).collect(),
    })
}

/// How the consensus threshold is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    Fraction(f64),
    /// Largest strength among edges into the named outcome node.
    MaxOutcome(String),
}

impl Threshold {
    pub fn resolve(&self, table: &EdgeStrengthTable) -> Result<f64> {
        let t = match self {
            Threshold::Fraction(t) => *t,
            Threshold::MaxOutcome(outcome) => {
                let c = table
                    .labels
                    .iter()
                    .position(|l| l == outcome)
                    .ok_or_else(|| Error::UnknownNode(outcome.clone()))?;
                (0..table.labels.len())
                    .filter(|&p| p != c)
                    .map(|p| table.strength(p, c))
                    .fold(0.0, f64::max)
            }
        };
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Validation(format!(
                "threshold {t} must lie in (0, 1]"
            )));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct Consensus {
    pub dag: Dag,
    pub threshold: f64,
    /// Edges above threshold dropped because they would close a cycle.
    pub skipped: Vec<(String, String)>,
}

/// Keeps every edge with strength ≥ threshold. Edges are admitted in
/// decreasing strength order and any that would close a cycle are skipped.
pub fn average_network(strengths: &EdgeStrengthTable, threshold: &Threshold) -> Result<Consensus> {
    let t = threshold.resolve(strengths)?;
    let n = strengths.labels.len();
    let mut selected: Vec<(usize, usize, f64)> = Vec::new();
    for p in 0..n {
        for c in 0..n {
            let s = strengths.strength(p, c);
            if p != c && s >= t {
                selected.push((p, c, s));
            }
        }
    }
    selected.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut dag = Dag::empty(strengths.labels.clone());
    let mut skipped = Vec::new();
    for (p, c, _) in selected {
        if !dag.try_add_edge(p, c) {
            skipped.push((strengths.labels[p].clone(), strengths.labels[c].clone()));
        }
    }
    if !skipped.is_empty() {
        log::warn!(
            "consensus network skipped cycle-forming edges: {}",
            skipped
                .iter()
                .map(|(p, c)| format!("{p} -> {c}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(Consensus {
        dag,
        threshold: t,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(edges: &[(&str, &str, f64)]) -> EdgeStrengthTable {
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let edges: Vec<EdgeStrength> = edges
            .iter()
            .map(|(p, c, s)| EdgeStrength {
                parent: p.to_string(),
                child: c.to_string(),
                strength: *s,
            })
            .collect();
        EdgeStrengthTable::from_edges(labels, 10, &edges).unwrap()
    }

    #[test]
    fn threshold_selects_strong_edges() {
        let t = table(&[("a", "b", 0.9), ("b", "c", 0.5)]);
        let cons = average_network(&t, &Threshold::Fraction(0.6)).unwrap();
        assert_eq!(cons.dag.edges(), vec![(0, 1)]);
        assert!(cons.skipped.is_empty());
    }

    #[test]
    fn unanimity_threshold_can_be_empty() {
        let t = table(&[("a", "b", 0.9), ("b", "c", 0.5)]);
        let cons = average_network(&t, &Threshold::Fraction(1.0)).unwrap();
        assert_eq!(cons.dag.edge_count(), 0);
    }

    #[test]
    fn cycle_forming_edge_is_skipped() {
        let t = table(&[("a", "b", 0.9), ("b", "a", 0.8)]);
        let cons = average_network(&t, &Threshold::Fraction(0.6)).unwrap();
        assert_eq!(cons.dag.edges(), vec![(0, 1)]);
        assert_eq!(cons.skipped, vec![("b".to_string(), "a".to_string())]);
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let t = table(&[("a", "b", 0.9)]);
        assert!(average_network(&t, &Threshold::Fraction(1.01)).is_err());
        assert!(average_network(&t, &Threshold::Fraction(0.0)).is_err());
    }

    #[test]
    fn max_outcome_threshold() {
        let t = table(&[("a", "c", 0.4), ("b", "c", 0.7), ("a", "b", 0.3)]);
        let cons = average_network(&t, &Threshold::MaxOutcome("c".into())).unwrap();
        assert_eq!(cons.threshold, 0.7);
        assert_eq!(cons.dag.edges(), vec![(1, 2)]);
    }

    #[test]
    fn csv_round_trip() {
        let t = table(&[("a", "b", 0.25), ("c", "a", 0.5)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = EdgeStrengthTable::read_csv(t.labels().to_vec(), buf.as_slice()).unwrap();
        assert_eq!(back.strength, t.strength);
    }

    #[test]
    fn replicate_seeds_differ() {
        let a = replicate_seed(42, 0);
        let b = replicate_seed(42, 1);
        assert_ne!(a, b);
        assert_eq!(a, replicate_seed(42, 0));
    }
}
