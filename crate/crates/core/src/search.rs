//! Greedy hill-climbing over DAGs with edge blacklists, whitelists and
//! random restarts.

use std::collections::{BTreeSet, HashMap};

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{label_index, Dag};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::score::{local_error, LocalScoreError, ScoreContext};

/// Forbidden and required directed edges, by node label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeConstraintSet {
    pub blacklist: BTreeSet<(String, String)>,
    pub whitelist: BTreeSet<(String, String)>,
}

impl EdgeConstraintSet {
    pub fn new(
        blacklist: BTreeSet<(String, String)>,
        whitelist: BTreeSet<(String, String)>,
    ) -> Result<Self> {
        if let Some(e) = blacklist.intersection(&whitelist).next() {
            return Err(Error::Constraint(format!(
                "edge {} -> {} is both required and forbidden",
                e.0, e.1
            )));
        }
        Ok(EdgeConstraintSet {
            blacklist,
            whitelist,
        })
    }

    pub fn is_forbidden(&self, parent: &str, child: &str) -> bool {
        self.blacklist
            .contains(&(parent.to_string(), child.to_string()))
    }

    /// Index form against a label order.
    pub fn resolve(&self, labels: &[String]) -> Result<ResolvedConstraints> {
        let index = label_index(labels)?;
        let n = labels.len();
        let lookup = |l: &str| {
            index
                .get(l)
                .copied()
                .ok_or_else(|| Error::Constraint(format!("constraint names unknown node `{l}`")))
        };
        let mut forbidden = vec![false; n * n];
        for (p, c) in &self.blacklist {
            forbidden[lookup(p)? * n + lookup(c)?] = true;
        }
        let mut required = Vec::with_capacity(self.whitelist.len());
        for (p, c) in &self.whitelist {
            let (pi, ci) = (lookup(p)?, lookup(c)?);
            if forbidden[pi * n + ci] {
                return Err(Error::Constraint(format!(
                    "edge {p} -> {c} is both required and forbidden"
                )));
            }
            required.push((pi, ci));
        }
        Ok(ResolvedConstraints {
            n,
            forbidden,
            required,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedConstraints {
    n: usize,
    forbidden: Vec<bool>,
    required: Vec<(usize, usize)>,
}

impl ResolvedConstraints {
    pub fn is_forbidden(&self, parent: usize, child: usize) -> bool {
        self.forbidden[parent * self.n + child]
    }

    pub fn is_required(&self, parent: usize, child: usize) -> bool {
        self.required.contains(&(parent, child))
    }

    pub fn required(&self) -> &[(usize, usize)] {
        &self.required
    }

    /// Empty graph plus the whitelist; errors if the whitelist is cyclic.
    pub fn start_graph(&self, labels: &[String]) -> Result<Dag> {
        Dag::from_index_edges(labels.to_vec(), &self.required).map_err(|e| match e {
            Error::Cycle(c) => {
                Error::Constraint(format!("whitelist is cyclic: {}", c.join(" -> ")))
            }
            Error::AntiparallelEdge(a, b) => {
                Error::Constraint(format!("whitelist requires both {a} -> {b} and {b} -> {a}"))
            }
            other => other,
        })
    }
}

/// Label used for the predictor column of a given year.
pub fn predictor_label(year: i32) -> String {
    format!("X{year}")
}

/// Forbids every edge pointing backwards in time and every edge out of the
/// outcome into a predictor.
pub fn temporal_blacklist(years: &[i32], outcome: &str) -> Result<EdgeConstraintSet> {
    for w in years.windows(2) {
        if w[1] == w[0] {
            return Err(Error::Validation(format!("duplicate year {}", w[0])));
        }
        if w[1] < w[0] {
            return Err(Error::Validation(
                "years must be strictly increasing".into(),
            ));
        }
    }
    let mut blacklist = BTreeSet::new();
    for (i, &t) in years.iter().enumerate() {
        for &later in &years[i + 1..] {
            blacklist.insert((predictor_label(later), predictor_label(t)));
        }
        blacklist.insert((outcome.to_string(), predictor_label(t)));
    }
    EdgeConstraintSet::new(blacklist, BTreeSet::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub restarts: usize,
    /// Random legal insertions, deletions or reversals applied before each restart.
    pub perturbation: usize,
    /// Budget of accepted moves across the initial climb and all restarts.
    pub max_iterations: usize,
    pub seed: u64,
    pub tie_tolerance: f64,
    /// Keep a per-move log in the result.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            restarts: 10,
            perturbation: 4,
            max_iterations: 10_000,
            seed: 0,
            tie_tolerance: 1e-9,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Add,
    Delete,
    Reverse,
}

/// A single edge operation on `parent -> child` (for reversals, the edge
/// as it was before reversing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub kind: MoveKind,
    pub parent: usize,
    pub child: usize,
}

impl Move {
    fn key(&self) -> (usize, usize, MoveKind) {
        (self.child, self.parent, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub restart: usize,
    pub iteration: usize,
    #[serde(rename = "move")]
    pub kind: MoveKind,
    pub parent: String,
    pub child: String,
    pub delta: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult<T> {
    pub dag: Dag,
    pub score: T,
    /// Accepted moves in order (empty unless requested).
    pub trace: Vec<TraceEvent>,
    /// Accepted moves across all climbs.
    pub iterations: usize,
}

type CacheKey = (usize, Vec<usize>);

/// A move, its score delta and the local scores it would install.
type Candidate<T> = (Move, f64, Vec<(usize, T)>);

struct LocalCache<'a, T> {
    ctx: &'a ScoreContext<T>,
    memo: HashMap<CacheKey, std::result::Result<T, LocalScoreError>>,
}

impl<'a, T: Real> LocalCache<'a, T> {
    fn get(
        &mut self,
        child: usize,
        parents: Vec<usize>,
    ) -> std::result::Result<T, LocalScoreError> {
        let ctx = self.ctx;
        *self
            .memo
            .entry((child, parents))
            .or_insert_with_key(|(c, p)| ctx.local_score(*c, p))
    }
}

fn with_parent(ps: &[usize], p: usize) -> Vec<usize> {
    let mut v = ps.to_vec();
    if let Err(pos) = v.binary_search(&p) {
        v.insert(pos, p);
    }
    v
}

fn without_parent(ps: &[usize], p: usize) -> Vec<usize> {
    ps.iter().copied().filter(|&q| q != p).collect()
}

/// `reach[a*n+b]` is true when a directed path `a ⇝ b` of length ≥ 1 exists.
fn transitive_closure(dag: &Dag) -> Vec<bool> {
    let n = dag.len();
    let children: Vec<Vec<usize>> = (0..n).map(|p| dag.children(p)).collect();
    let mut reach = vec![false; n * n];
    for a in 0..n {
        let mut stack: Vec<usize> = children[a].clone();
        while let Some(v) = stack.pop() {
            if !reach[a * n + v] {
                reach[a * n + v] = true;
                stack.extend(children[v].iter().copied());
            }
        }
    }
    reach
}

struct Climber<'a, T> {
    cache: LocalCache<'a, T>,
    cons: &'a ResolvedConstraints,
    tol: f64,
    budget: usize,
    used: usize,
    trace: Option<Vec<TraceEvent>>,
}

impl<'a, T: Real> Climber<'a, T> {
    fn local_scores(&mut self, dag: &Dag) -> Result<Vec<T>> {
        (0..dag.len())
            .map(|v| {
                self.cache
                    .get(v, dag.parents(v).to_vec())
                    .map_err(|e| local_error(dag, v, e))
            })
            .collect()
    }

    /// Best-improvement climb from `dag` until no move improves by more than
    /// the tie tolerance or the budget is spent.
    fn climb(&mut self, mut dag: Dag, restart: usize) -> Result<(Dag, T)> {
        let n = dag.len();
        let mut local = self.local_scores(&dag)?;
        let mut iteration = 0;
        while self.used < self.budget {
            let reach = transitive_closure(&dag);
            let mut best: Option<Candidate<T>> = None;
            let mut consider = |mv: Move, delta: f64, updates: Vec<(usize, T)>, tol: f64| {
                if !(delta > tol) {
                    return;
                }
                let replace = match &best {
                    None => true,
                    Some((bm, bd, _)) => {
                        if delta > *bd + tol {
                            true
                        } else if delta >= *bd - tol {
                            mv.key() < bm.key()
                        } else {
                            false
                        }
                    }
                };
                if replace {
                    best = Some((mv, delta, updates));
                }
            };
            for c in 0..n {
                for p in 0..n {
                    if p == c {
                        continue;
                    }
                    let pa_c = dag.parents(c);
                    if dag.has_edge(p, c) {
                        if self.cons.is_required(p, c) {
                            continue;
                        }
                        let Ok(del) = self.cache.get(c, without_parent(pa_c, p)) else {
                            continue;
                        };
                        let d_del = (del - local[c]).as_f64();
                        consider(
                            Move {
                                kind: MoveKind::Delete,
                                parent: p,
                                child: c,
                            },
                            d_del,
                            vec![(c, del)],
                            self.tol,
                        );
                        if self.cons.is_forbidden(c, p) {
                            continue;
                        }
                        // reversal is acyclic iff p no longer reaches c once p -> c is gone
                        let other_path = dag
                            .children(p)
                            .into_iter()
                            .any(|q| q != c && reach[q * n + c]);
                        if other_path {
                            continue;
                        }
                        let Ok(add_p) = self.cache.get(p, with_parent(dag.parents(p), c)) else {
                            continue;
                        };
                        let d_rev = d_del + (add_p - local[p]).as_f64();
                        consider(
                            Move {
                                kind: MoveKind::Reverse,
                                parent: p,
                                child: c,
                            },
                            d_rev,
                            vec![(c, del), (p, add_p)],
                            self.tol,
                        );
                    } else if !dag.has_edge(c, p)
                        && !self.cons.is_forbidden(p, c)
                        && !reach[c * n + p]
                    {
                        let Ok(add) = self.cache.get(c, with_parent(pa_c, p)) else {
                            continue;
                        };
                        consider(
                            Move {
                                kind: MoveKind::Add,
                                parent: p,
                                child: c,
                            },
                            (add - local[c]).as_f64(),
                            vec![(c, add)],
                            self.tol,
                        );
                    }
                }
            }
            let Some((mv, delta, updates)) = best else {
                break;
            };
            match mv.kind {
                MoveKind::Add => {
                    dag.insert_parent(mv.child, mv.parent);
                }
                MoveKind::Delete => {
                    dag.remove_edge(mv.parent, mv.child);
                }
                MoveKind::Reverse => {
                    dag.remove_edge(mv.parent, mv.child);
                    dag.insert_parent(mv.parent, mv.child);
                }
            }
            for (v, s) in updates {
                local[v] = s;
            }
            self.used += 1;
            iteration += 1;
            if let Some(trace) = self.trace.as_mut() {
                let score: T = local.iter().copied().sum();
                trace.push(TraceEvent {
                    restart,
                    iteration,
                    kind: mv.kind,
                    parent: dag.label(mv.parent).to_string(),
                    child: dag.label(mv.child).to_string(),
                    delta,
                    score: score.as_f64(),
                });
            }
        }
        let score = local.iter().copied().sum();
        Ok((dag, score))
    }

    /// Toggles up to `count` random legal edges.
    fn perturb(&self, dag: &Dag, count: usize, rng: &mut ChaCha8Rng) -> Dag {
        let n = dag.len();
        let mut out = dag.clone();
        if n < 2 {
            return out;
        }
        let mut done = 0;
        let mut attempts = 0;
        while done < count && attempts < count * 50 {
            attempts += 1;
            let p = rng.random_range(0..n);
            let c = rng.random_range(0..n);
            if p == c {
                continue;
            }
            if out.has_edge(p, c) {
                if self.cons.is_required(p, c) {
                    continue;
                }
                out.remove_edge(p, c);
                if rng.random_bool(0.5) && !self.cons.is_forbidden(c, p) && !out.try_add_edge(c, p)
                {
                    out.insert_parent(c, p);
                    continue;
                }
                done += 1;
            } else if !self.cons.is_forbidden(p, c) && out.try_add_edge(p, c) {
                done += 1;
            }
        }
        out
    }
}

/// Hill-climbing with random restarts over DAGs on the columns of `data`.
///
/// Moves are edge additions, deletions and reversals; only the changed
/// families are rescored. Restarts perturb the best graph so far and climb
/// again, replacing it only on strict improvement.
pub fn hill_climb<T: Real>(
    data: ArrayView2<'_, T>,
    labels: &[String],
    constraints: &EdgeConstraintSet,
    config: &SearchConfig,
) -> Result<SearchResult<T>> {
    if data.ncols() != labels.len() {
        return Err(Error::Validation(format!(
            "data has {} columns but {} labels were given",
            data.ncols(),
            labels.len()
        )));
    }
    let cons = constraints.resolve(labels)?;
    let start = cons.start_graph(labels)?;
    let ctx = ScoreContext::new(data)?;
    let mut climber = Climber {
        cache: LocalCache {
            ctx: &ctx,
            memo: HashMap::new(),
        },
        cons: &cons,
        tol: config.tie_tolerance,
        budget: config.max_iterations,
        used: 0,
        trace: config.record_trace.then(Vec::new),
    };
    let (mut best_dag, mut best_score) = climber.climb(start, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for r in 1..=config.restarts {
        if climber.used >= climber.budget {
            break;
        }
        let perturbed = climber.perturb(&best_dag, config.perturbation, &mut rng);
        let (dag, score) = match climber.climb(perturbed, r) {
            Ok(x) => x,
            // a perturbation can land on an unscorable family; skip it
            Err(Error::RankDeficient(_)) | Err(Error::DegenerateVariance(_)) => continue,
            Err(e) => return Err(e),
        };
        if (score - best_score).as_f64() > config.tie_tolerance {
            best_dag = dag;
            best_score = score;
        }
    }
    Ok(SearchResult {
        dag: best_dag,
        score: best_score,
        trace: climber.trace.unwrap_or_default(),
        iterations: climber.used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_study_blacklist_has_171_edges() {
        let years: Vec<i32> = (1997..=2014).collect();
        let bl = temporal_blacklist(&years, "Y").unwrap();
        assert_eq!(bl.blacklist.len(), 171);
        assert!(bl.whitelist.is_empty());
        assert!(bl.is_forbidden("X2014", "X1997"));
        assert!(!bl.is_forbidden("X1997", "X2014"));
        assert!(bl.is_forbidden("Y", "X2005"));
        assert!(!bl.is_forbidden("X2005", "Y"));
    }

    #[test]
    fn two_year_blacklist() {
        let bl = temporal_blacklist(&[2000, 2001], "Y").unwrap();
        let expected: BTreeSet<(String, String)> =
            [("X2001", "X2000"), ("Y", "X2000"), ("Y", "X2001")]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect();
        assert_eq!(bl.blacklist, expected);
    }

    #[test]
    fn single_year_blacklist() {
        let bl = temporal_blacklist(&[2005], "Y").unwrap();
        assert_eq!(bl.blacklist.len(), 1);
        assert!(bl.is_forbidden("Y", "X2005"));
    }

    #[test]
    fn duplicate_years_rejected() {
        assert!(temporal_blacklist(&[2000, 2000], "Y").is_err());
    }

    #[test]
    fn overlapping_lists_rejected() {
        let e: BTreeSet<(String, String)> = [("a".to_string(), "b".to_string())].into();
        assert!(EdgeConstraintSet::new(e.clone(), e).is_err());
    }

    #[test]
    fn cyclic_whitelist_rejected() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let wl: BTreeSet<(String, String)> = [("a", "b"), ("b", "c"), ("c", "a")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let cons = EdgeConstraintSet::new(BTreeSet::new(), wl).unwrap();
        let data =
            ndarray::Array2::<f64>::from_shape_fn((10, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let err = hill_climb(data.view(), &labels, &cons, &SearchConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Constraint(_)));
    }

    #[test]
    fn too_few_rows_rejected() {
        let labels: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let data = ndarray::array![[1.0, 2.0], [2.0, 1.0]];
        let err = hill_climb(
            data.view(),
            &labels,
            &EdgeConstraintSet::default(),
            &SearchConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }
}
