//! Investment → outcome path extraction, chained regression tables and the
//! per-country contribution and efficiency indexes.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::bootstrap::EdgeStrengthTable;
use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::network::{joint_distribution, FittedNetwork};
use crate::pipeline::{MergedDataset, ScoreTable, Subject, OUTCOME_LABEL};
use crate::scalar::Real;

/// Two-sided 95% normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

/// Parent with the largest strength into `outcome`; ties go to the earliest
/// node in label order. `None` when no edge into the outcome has positive
/// strength.
pub fn strongest_edge_to_outcome(
    strengths: &EdgeStrengthTable,
    outcome: &str,
) -> Option<(String, f64)> {
    let labels = strengths.labels();
    let c = labels.iter().position(|l| l == outcome)?;
    let mut best: Option<(usize, f64)> = None;
    for p in 0..labels.len() {
        if p == c {
            continue;
        }
        let s = strengths.strength(p, c);
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((p, s));
        }
    }
    best.map(|(p, s)| (labels[p].clone(), s))
}

/// Directed path from `source` to `target` whose node sequence is
/// lexicographically smallest in label order; `None` if unreachable.
pub fn extract_path(dag: &Dag, source: &str, target: &str) -> Result<Option<Vec<String>>> {
    let s = dag
        .index_of(source)
        .ok_or_else(|| Error::UnknownNode(source.to_string()))?;
    let t = dag
        .index_of(target)
        .ok_or_else(|| Error::UnknownNode(target.to_string()))?;
    if !dag.reaches(s, t) {
        return Ok(None);
    }
    let mut path = vec![s];
    let mut v = s;
    while v != t {
        v = dag
            .children(v)
            .into_iter()
            .find(|&c| dag.reaches(c, t))
            .expect("a child on the way to the target exists");
        path.push(v);
    }
    Ok(Some(
        path.into_iter().map(|i| dag.label(i).to_string()).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub regressor: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionColumn {
    pub dependent: String,
    pub coefficients: Vec<Coefficient>,
    pub intercept: f64,
    pub intercept_se: f64,
    pub n: usize,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub residual_se: f64,
    pub df_resid: usize,
    pub f_statistic: Option<f64>,
    pub df_model: usize,
}

/// One OLS summary per dependent node along a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTable {
    pub columns: Vec<RegressionColumn>,
}

/// Regression summaries for every node of `path` after the first.
pub fn regression_table<T: Real>(
    net: &FittedNetwork<T>,
    path: &[String],
) -> Result<RegressionTable> {
    let mut columns = Vec::new();
    for label in path.iter().skip(1) {
        let node = net
            .node(label)
            .ok_or_else(|| Error::UnknownNode(label.clone()))?;
        let fit = node.fit.as_ref().ok_or_else(|| {
            Error::Validation(format!("node `{label}` was not estimated from data"))
        })?;
        columns.push(RegressionColumn {
            dependent: label.clone(),
            coefficients: node
                .parents
                .iter()
                .zip(&fit.coefficients)
                .zip(&fit.coefficient_se)
                .map(|((p, b), se)| Coefficient {
                    regressor: p.clone(),
                    estimate: b.as_f64(),
                    std_error: se.as_f64(),
                })
                .collect(),
            intercept: fit.intercept.as_f64(),
            intercept_se: fit.intercept_se.as_f64(),
            n: fit.n,
            r_squared: fit.r_squared.as_f64(),
            adj_r_squared: fit.adj_r_squared.as_f64(),
            residual_se: fit.residual_se.as_f64(),
            df_resid: fit.df_resid,
            f_statistic: fit.f_statistic.map(Real::as_f64),
            df_model: fit.df_model(),
        });
    }
    Ok(RegressionTable { columns })
}

impl RegressionTable {
    /// Regressors in order of first appearance.
    fn regressors(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for col in &self.columns {
            for c in &col.coefficients {
                if !out.contains(&c.regressor) {
                    out.push(c.regressor.clone());
                }
            }
        }
        out
    }

    /// Grid of cells: header row, then coefficient / standard-error row
    /// pairs, the constant, and fit statistics.
    fn grid(&self, display: &dyn Fn(&str) -> String) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        let mut header = vec![String::new()];
        header.extend(self.columns.iter().map(|c| display(&c.dependent)));
        rows.push(header);
        let coef_cell = |col: &RegressionColumn, reg: &str| {
            col.coefficients
                .iter()
                .find(|c| c.regressor == reg)
                .map(|c| {
                    (
                        format!("{:.3}", c.estimate),
                        format!("({:.3})", c.std_error),
                    )
                })
                .unwrap_or_default()
        };
        for reg in self.regressors() {
            let cells: Vec<(String, String)> =
                self.columns.iter().map(|c| coef_cell(c, &reg)).collect();
            let mut est = vec![display(&reg)];
            est.extend(cells.iter().map(|c| c.0.clone()));
            let mut se = vec![String::new()];
            se.extend(cells.iter().map(|c| c.1.clone()));
            rows.push(est);
            rows.push(se);
        }
        let stat = |name: &str, f: &dyn Fn(&RegressionColumn) -> String| {
            let mut r = vec![name.to_string()];
            r.extend(self.columns.iter().map(f));
            r
        };
        rows.push(stat("Const.", &|c| format!("{:.3}", c.intercept)));
        rows.push(stat("", &|c| format!("({:.3})", c.intercept_se)));
        rows.push(stat("Obs.", &|c| c.n.to_string()));
        rows.push(stat("R2", &|c| format!("{:.3}", c.r_squared)));
        rows.push(stat("Adj. R2", &|c| format!("{:.3}", c.adj_r_squared)));
        rows.push(stat("RSE", &|c| format!("{:.3}", c.residual_se)));
        rows.push(stat("df", &|c| c.df_resid.to_string()));
        rows.push(stat("F Stat.", &|c| {
            c.f_statistic.map(|f| format!("{f:.3}")).unwrap_or_default()
        }));
        rows.push(stat("df", &|c| format!("{}; {}", c.df_model, c.df_resid)));
        rows
    }

    pub fn to_text(&self, display: &dyn Fn(&str) -> String) -> String {
        let grid = self.grid(display);
        let ncol = grid[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            let mut line = String::new();
            for (j, cell) in row.iter().enumerate() {
                if j == 0 {
                    let _ = write!(line, "{cell:<w$}", w = widths[j]);
                } else {
                    let _ = write!(line, "  {cell:>w$}", w = widths[j]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W, display: &dyn Fn(&str) -> String) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut grid = self.grid(display);
        grid[0][0] = "term".to_string();
        for row in grid {
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `(y − α̂) / y`: share of the score not accounted for by the intercept.
pub fn contribution_index<T: Real>(y: T, alpha: T) -> Result<T> {
    if !(y > T::zero()) {
        return Err(Error::Validation(format!(
            "score must be positive, got {y}"
        )));
    }
    Ok((y - alpha) / y)
}

/// `(y − ŷ) / y`: observed minus expected score, relative to observed.
pub fn efficiency_index<T: Real>(y: T, y_hat: T) -> Result<T> {
    if !(y > T::zero()) {
        return Err(Error::Validation(format!(
            "score must be positive, got {y}"
        )));
    }
    Ok((y - y_hat) / y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryIndex {
    pub country: String,
    pub y: f64,
    pub y_hat: f64,
    pub contribution: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub subject: String,
    pub outcome: String,
    /// Intercept of the outcome node, α̂.
    pub alpha: f64,
    /// Coefficient of the outcome on `slope_regressor`, when it is a parent.
    pub beta: Option<f64>,
    pub slope_regressor: Option<String>,
    /// Strongest bootstrap edge into the outcome.
    pub strongest_parent: Option<String>,
    pub strongest_year: Option<i32>,
    pub strongest_strength: Option<f64>,
    /// Set when the network gives the outcome no parents.
    pub no_outcome_parent: bool,
    pub countries: Vec<CountryIndex>,
    /// Country codes ordered by increasing contribution.
    pub contribution_ranking: Vec<String>,
    /// Country codes ordered by increasing efficiency.
    pub efficiency_ranking: Vec<String>,
    pub negative_efficiency: usize,
}

fn year_of(label: &str) -> Option<i32> {
    label.strip_prefix('X')?.parse().ok()
}

fn ranking(rows: &[CountryIndex], key: impl Fn(&CountryIndex) -> f64) -> Vec<String> {
    let mut idx: Vec<&CountryIndex> = rows.iter().collect();
    idx.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.country.cmp(&b.country)));
    idx.into_iter().map(|r| r.country.clone()).collect()
}

/// Per-country indexes with `ŷ(w) = E[Y | X(w)]` under the fitted network.
pub fn build_report<T: Real>(
    net: &FittedNetwork<T>,
    strengths: Option<&EdgeStrengthTable>,
    data: &MergedDataset<T>,
) -> Result<AnalysisReport> {
    if !data.is_complete() {
        return Err(Error::Validation(
            "analysis requires a completed dataset".into(),
        ));
    }
    let labels = data.labels();
    if net.dag().labels() != labels.as_slice() {
        return Err(Error::Validation(
            "network and dataset variables differ".into(),
        ));
    }
    let outcome = net
        .node(OUTCOME_LABEL)
        .ok_or_else(|| Error::UnknownNode(OUTCOME_LABEL.to_string()))?;
    let strongest = strengths.and_then(|s| strongest_edge_to_outcome(s, OUTCOME_LABEL));
    let slope_regressor = match &strongest {
        Some((p, _)) if outcome.parents.contains(p) => Some(p.clone()),
        _ if outcome.parents.len() == 1 => Some(outcome.parents[0].clone()),
        _ => None,
    };
    let beta = slope_regressor.as_ref().map(|r| {
        let i = outcome
            .parents
            .iter()
            .position(|p| p == r)
            .expect("regressor is a parent");
        outcome.coefficients[i].as_f64()
    });
    let alpha = outcome.intercept.as_f64();

    let joint = joint_distribution(net);
    let evidence: Vec<usize> = (1..labels.len()).collect();
    let mut rows = Vec::with_capacity(data.n());
    for (r, country) in data.countries().iter().enumerate() {
        let vals: Array1<T> = evidence.iter().map(|&c| data.values()[[r, c]]).collect();
        let y_hat = joint.conditional_mean(&[0], &evidence, vals.view())?[0].as_f64();
        let y = data.values()[[r, 0]].as_f64();
        rows.push(CountryIndex {
            country: country.clone(),
            y,
            y_hat,
            contribution: contribution_index(y, alpha)?,
            efficiency: efficiency_index(y, y_hat)?,
        });
    }
    Ok(AnalysisReport {
        subject: data.subject().to_string(),
        outcome: OUTCOME_LABEL.to_string(),
        alpha,
        beta,
        slope_regressor,
        strongest_year: strongest.as_ref().and_then(|(p, _)| year_of(p)),
        strongest_strength: strongest.as_ref().map(|(_, s)| *s),
        strongest_parent: strongest.map(|(p, _)| p),
        no_outcome_parent: outcome.parents.is_empty(),
        contribution_ranking: ranking(&rows, |r| r.contribution),
        efficiency_ranking: ranking(&rows, |r| r.efficiency),
        negative_efficiency: rows.iter().filter(|r| r.efficiency < 0.0).count(),
        countries: rows,
    })
}

impl AnalysisReport {
    /// Writes `country,Y,Y_hat,contribution,efficiency`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["country", "Y", "Y_hat", "contribution", "efficiency"])?;
        for r in &self.countries {
            wr.write_record([
                r.country.clone(),
                r.y.to_string(),
                r.y_hat.to_string(),
                r.contribution.to_string(),
                r.efficiency.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearCorrelation {
    pub year: i32,
    pub n: usize,
    pub r: f64,
    /// Fisher-z 95% interval; absent when `n ≤ 3`.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Fisher-z confidence interval for a correlation from `n` pairs.
pub fn fisher_interval(r: f64, n: usize) -> Option<(f64, f64)> {
    if n <= 3 || !r.is_finite() {
        return None;
    }
    let z = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh();
    let se = 1.0 / ((n - 3) as f64).sqrt();
    Some(((z - Z_975 * se).tanh(), (z + Z_975 * se).tanh()))
}

/// Pearson correlation of the outcome with every predictor year, using the
/// rows observed in that year.
pub fn correlations<T: Real>(data: &MergedDataset<T>) -> Vec<YearCorrelation> {
    data.years()
        .iter()
        .enumerate()
        .map(|(j, &year)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..data.n())
                .filter(|&r| !data.mask()[[r, j + 1]])
                .map(|r| {
                    (
                        data.values()[[r, j + 1]].as_f64(),
                        data.values()[[r, 0]].as_f64(),
                    )
                })
                .unzip();
            let r = if xs.len() >= 2 {
                pearson(&xs, &ys)
            } else {
                f64::NAN
            };
            let ci = fisher_interval(r, xs.len());
            YearCorrelation {
                year,
                n: xs.len(),
                r,
                lower: ci.map(|c| c.0),
                upper: ci.map(|c| c.1),
            }
        })
        .collect()
}

pub fn write_correlations_csv<W: Write>(rows: &[YearCorrelation], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["year", "n", "r", "lower", "upper"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in rows {
        wr.write_record([
            c.year.to_string(),
            c.n.to_string(),
            c.r.to_string(),
            opt(c.lower),
            opt(c.upper),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Correlation between subjects over countries that report all of them.
pub fn subject_correlations(scores: &ScoreTable) -> Vec<(Subject, Subject, f64)> {
    let common: Vec<&str> = scores
        .countries(Subject::Math)
        .into_iter()
        .filter(|c| Subject::ALL.iter().all(|&s| scores.get(c, s).is_some()))
        .collect();
    let series =
        |s: Subject| -> Vec<f64> { common.iter().map(|c| scores.get(c, s).unwrap()).collect() };
    let mut out = Vec::new();
    for (i, &a) in Subject::ALL.iter().enumerate() {
        for &b in &Subject::ALL[i + 1..] {
            let r = if common.len() >= 2 {
                pearson(&series(a), &series(b))
            } else {
                f64::NAN
            };
            out.push((a, b, r));
        }
    }
    out
}
