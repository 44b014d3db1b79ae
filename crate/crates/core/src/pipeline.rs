//! Indicator and score ingestion, derived R&D series, and the merged
//! `[Y, X]` analysis matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::search::predictor_label;

pub const FIRST_YEAR: i32 = 1997;
pub const LAST_YEAR: i32 = 2014;
pub const OUTCOME_LABEL: &str = "Y";

/// Study years, 1997 through 2014.
pub fn study_years() -> Vec<i32> {
    (FIRST_YEAR..=LAST_YEAR).collect()
}

fn non_negative(name: &str, v: f64) -> Result<f64> {
    if v.is_nan() || v < 0.0 {
        Err(Error::Validation(format!(
            "{name} must be non-negative, got {v}"
        )))
    } else {
        Ok(v)
    }
}

/// Expenditure in dollars from a percent-of-GDP share: `expend · gdp · 10⁻²`.
pub fn compute_total_expenditure(expend: Option<f64>, gdp: Option<f64>) -> Result<Option<f64>> {
    let (Some(e), Some(g)) = (expend, gdp) else {
        return Ok(None);
    };
    let e = non_negative("expend", e)?;
    if e > 100.0 {
        return Err(Error::Validation(format!(
            "expend is a percentage, got {e}"
        )));
    }
    let g = non_negative("gdp", g)?;
    Ok(Some(e * g * 1e-2))
}

/// Researcher head-count from a per-million density: `numbrd · pop · 10⁻⁶`.
pub fn compute_total_researchers(numbrd: Option<f64>, pop: Option<f64>) -> Result<Option<f64>> {
    let (Some(r), Some(p)) = (numbrd, pop) else {
        return Ok(None);
    };
    Ok(Some(
        non_negative("numbrd", r)? * non_negative("pop", p)? * 1e-6,
    ))
}

/// Dollars per researcher; missing when there are no researchers.
pub fn compute_exp_per_researcher(tot_exp: Option<f64>, tot_rd: Option<f64>) -> Option<f64> {
    let (e, r) = (tot_exp?, tot_rd?);
    if r > 0.0 {
        Some(e / r)
    } else {
        log::warn!("researcher count is zero; expenditure per researcher left missing");
        None
    }
}

/// Natural logarithm; non-positive input becomes missing.
pub fn log_transform(x: Option<f64>) -> Option<f64> {
    let x = x?;
    if x > 0.0 {
        Some(x.ln())
    } else {
        log::warn!("non-positive expenditure per researcher {x}; cell left missing");
        None
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub expend: Option<f64>,
    pub numbrd: Option<f64>,
    pub gdp: Option<f64>,
    pub pop: Option<f64>,
    pub tot_exp: Option<f64>,
    pub tot_rd: Option<f64>,
    pub exp_one_rd: Option<f64>,
}

impl IndicatorRow {
    pub fn derive(
        expend: Option<f64>,
        numbrd: Option<f64>,
        gdp: Option<f64>,
        pop: Option<f64>,
    ) -> Result<Self> {
        let tot_exp = compute_total_expenditure(expend, gdp)?;
        let tot_rd = compute_total_researchers(numbrd, pop)?;
        Ok(IndicatorRow {
            expend,
            numbrd,
            gdp,
            pop,
            tot_exp,
            tot_rd,
            exp_one_rd: compute_exp_per_researcher(tot_exp, tot_rd),
        })
    }
}

/// Country × year panel of raw and derived indicators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorTable {
    rows: BTreeMap<(String, i32), IndicatorRow>,
}

impl IndicatorTable {
    pub fn insert(&mut self, country: &str, year: i32, row: IndicatorRow) -> Result<()> {
        if self.rows.insert((country.to_string(), year), row).is_some() {
            return Err(Error::Validation(format!(
                "duplicate indicator row for {country} {year}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, country: &str, year: i32) -> Option<&IndicatorRow> {
        self.rows.get(&(country.to_string(), year))
    }

    pub fn countries(&self) -> BTreeSet<&str> {
        self.rows.keys().map(|(c, _)| c.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, i32), &IndicatorRow)> {
        self.rows.iter()
    }

    /// Parses `country,year,expend,numbrd,gdp,pop`; empty fields are missing.
    pub fn read_csv<R: Read>(source: &str, r: R) -> Result<Self> {
        const HEADER: [&str; 6] = ["country", "year", "expend", "numbrd", "gdp", "pop"];
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rd.headers().map_err(|e| csv_error(source, e))?.clone();
        check_header(source, &headers, &HEADER)?;
        let mut table = IndicatorTable::default();
        for rec in rd.records() {
            let rec = rec.map_err(|e| csv_error(source, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::Csv {
                path: source.to_string(),
                line,
                message,
            };
            let country = rec[0].to_string();
            if country.is_empty() {
                return Err(bad("empty country code".into()));
            }
            let year: i32 = rec[1]
                .parse()
                .map_err(|_| bad(format!("invalid year `{}`", &rec[1])))?;
            let mut vals = [None; 4];
            for (k, slot) in vals.iter_mut().enumerate() {
                *slot = parse_optional(&rec[k + 2])
                    .map_err(|m| bad(format!("{}: {m}", HEADER[k + 2])))?;
            }
            let row = IndicatorRow::derive(vals[0], vals[1], vals[2], vals[3])
                .map_err(|e| bad(e.to_string()))?;
            table
                .insert(&country, year, row)
                .map_err(|e| bad(e.to_string()))?;
        }
        Ok(table)
    }
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    Error::Csv {
        path: source.to_string(),
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}

fn check_header(source: &str, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    for (i, w) in want.iter().enumerate() {
        match got.get(i) {
            Some(g) if g == *w => {}
            Some(g) => {
                return Err(Error::Csv {
                    path: source.to_string(),
                    line: 1,
                    message: format!("unexpected column `{g}` (expected `{w}`)"),
                })
            }
            None => {
                return Err(Error::Csv {
                    path: source.to_string(),
                    line: 1,
                    message: format!("missing column `{w}`"),
                })
            }
        }
    }
    if got.len() > want.len() {
        return Err(Error::Csv {
            path: source.to_string(),
            line: 1,
            message: format!("unexpected column `{}`", &got[want.len()]),
        });
    }
    Ok(())
}

fn parse_optional(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| format!("invalid number `{s}`"))?;
    if v.is_finite() {
        Ok(Some(v))
    } else {
        Err(format!("non-finite value `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subject {
    Math,
    Reading,
    Science,
}

impl Subject {
    pub const ALL: [Subject; 3] = [Subject::Math, Subject::Reading, Subject::Science];

    /// Short name used as the outcome node's display label.
    pub fn display_name(self) -> &'static str {
        match self {
            Subject::Math => "Math",
            Subject::Reading => "Read",
            Subject::Science => "Science",
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subject::Math => "math",
            Subject::Reading => "reading",
            Subject::Science => "science",
        })
    }
}

impl FromStr for Subject {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "math" | "mathematics" => Ok(Subject::Math),
            "read" | "reading" => Ok(Subject::Reading),
            "science" | "sci" => Ok(Subject::Science),
            other => Err(Error::Validation(format!("unknown subject `{other}`"))),
        }
    }
}

/// National score per (country, subject).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<(String, Subject), f64>,
}

impl ScoreTable {
    pub fn insert(&mut self, country: &str, subject: Subject, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::Validation(format!("non-finite score for {country}")));
        }
        if self
            .scores
            .insert((country.to_string(), subject), score)
            .is_some()
        {
            return Err(Error::Validation(format!(
                "duplicate {subject} score for {country}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, country: &str, subject: Subject) -> Option<f64> {
        self.scores.get(&(country.to_string(), subject)).copied()
    }

    pub fn countries(&self, subject: Subject) -> Vec<&str> {
        self.scores
            .keys()
            .filter(|(_, s)| *s == subject)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn has_subject(&self, subject: Subject) -> bool {
        self.scores.keys().any(|(_, s)| *s == subject)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Parses either aggregated (`country,subject,score`) or individual
    /// (`country,subject,mark`) scores; the latter are averaged.
    pub fn read_csv<R: Read>(source: &str, r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rd.headers().map_err(|e| csv_error(source, e))?.clone();
        let individual = headers.get(2) == Some("mark");
        let third = if individual { "mark" } else { "score" };
        check_header(source, &headers, &["country", "subject", third])?;
        let mut records = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| csv_error(source, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::Csv {
                path: source.to_string(),
                line,
                message,
            };
            let subject: Subject = rec[1].parse().map_err(|e: Error| bad(e.to_string()))?;
            let value = parse_optional(&rec[2])
                .map_err(&bad)?
                .ok_or_else(|| bad(format!("missing {third}")))?;
            records.push((rec[0].to_string(), subject, value));
        }
        if individual {
            aggregate_national_scores(&records)
        } else {
            let mut t = ScoreTable::default();
            for (c, s, v) in records {
                t.insert(&c, s, v)?;
            }
            Ok(t)
        }
    }
}

/// Unweighted mean of individual marks per (country, subject).
pub fn aggregate_national_scores(records: &[(String, Subject, f64)]) -> Result<ScoreTable> {
    let mut acc: BTreeMap<(String, Subject), (f64, usize)> = BTreeMap::new();
    for (country, subject, mark) in records {
        if !mark.is_finite() {
            return Err(Error::Validation(format!("non-finite mark for {country}")));
        }
        let e = acc.entry((country.clone(), *subject)).or_insert((0.0, 0));
        e.0 += mark;
        e.1 += 1;
    }
    let mut t = ScoreTable::default();
    for ((c, s), (sum, count)) in acc {
        t.insert(&c, s, sum / count as f64)?;
    }
    Ok(t)
}

/// A predictor cell `(row, column)` with `column` indexing the value
/// matrix (predictors occupy columns `1..=p`).
pub type Cell = (usize, usize);

/// The analysis matrix `[Y, X_first … X_last]` with its missingness mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedDataset<T> {
    subject: String,
    countries: Vec<String>,
    years: Vec<i32>,
    values: Array2<T>,
    mask: Array2<bool>,
}

/// Sidecar metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub subject: String,
    pub n: usize,
    pub p: usize,
    /// `|S_NA|`, the number of missing predictor cells.
    pub missing_cells: usize,
    /// `|S_T| = n · p`.
    pub total_cells: usize,
    pub years: Vec<i32>,
}

impl<T: Real> MergedDataset<T> {
    /// Builds a dataset; missing cells are the non-finite entries of
    /// `values`. The outcome column must be complete.
    pub fn new(
        subject: impl Into<String>,
        countries: Vec<String>,
        years: Vec<i32>,
        values: Array2<T>,
    ) -> Result<Self> {
        let n = countries.len();
        if values.nrows() != n || values.ncols() != years.len() + 1 {
            return Err(Error::Validation(format!(
                "value matrix is {}×{}, expected {}×{}",
                values.nrows(),
                values.ncols(),
                n,
                years.len() + 1
            )));
        }
        for w in years.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation(
                    "years must be strictly increasing".into(),
                ));
            }
        }
        if let Some(r) = (0..n).find(|&r| !values[[r, 0]].is_finite()) {
            return Err(Error::Validation(format!(
                "outcome missing for {}",
                countries[r]
            )));
        }
        let mask = values.mapv(|v| !v.is_finite());
        Ok(MergedDataset {
            subject: subject.into(),
            countries,
            years,
            values,
            mask,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn n(&self) -> usize {
        self.countries.len()
    }

    pub fn p(&self) -> usize {
        self.years.len()
    }

    /// Node labels in column order: `Y, X<year>…`.
    pub fn labels(&self) -> Vec<String> {
        std::iter::once(OUTCOME_LABEL.to_string())
            .chain(self.years.iter().map(|&y| predictor_label(y)))
            .collect()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn is_missing(&self, cell: Cell) -> bool {
        self.mask[cell]
    }

    /// `S_NA` in row-major order.
    pub fn missing_cells(&self) -> Vec<Cell> {
        self.predictor_cells().filter(|&c| self.mask[c]).collect()
    }

    /// `S_T \ S_NA` in row-major order.
    pub fn observed_cells(&self) -> Vec<Cell> {
        self.predictor_cells().filter(|&c| !self.mask[c]).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.n() * self.p()
    }

    fn predictor_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let p = self.p();
        (0..self.n()).flat_map(move |r| (1..=p).map(move |c| (r, c)))
    }

    pub fn is_complete(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Replaces the values, keeping the original missingness mask. Used for
    /// completed copies.
    pub fn with_values(&self, values: Array2<T>) -> Result<MergedDataset<T>> {
        if values.dim() != self.values.dim() {
            return Err(Error::Validation(
                "completed matrix has the wrong shape".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "completed matrix has missing cells".into(),
            ));
        }
        Ok(MergedDataset {
            subject: self.subject.clone(),
            countries: self.countries.clone(),
            years: self.years.clone(),
            values,
            mask: Array2::from_elem(self.mask.dim(), false),
        })
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            subject: self.subject.clone(),
            n: self.n(),
            p: self.p(),
            missing_cells: self.missing_cells().len(),
            total_cells: self.total_cells(),
            years: self.years.clone(),
        }
    }

    /// Writes `country,Y,X<year>…` with missing cells as empty fields.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["country".to_string()];
        header.extend(self.labels());
        wr.write_record(&header)?;
        for (r, country) in self.countries.iter().enumerate() {
            let mut rec = vec![country.clone()];
            for c in 0..=self.p() {
                let v = self.values[[r, c]];
                rec.push(if self.mask[[r, c]] {
                    String::new()
                } else {
                    v.to_string()
                });
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: &str, r: R, subject: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rd.headers().map_err(|e| csv_error(source, e))?.clone();
        let head_err = |message: String| Error::Csv {
            path: source.to_string(),
            line: 1,
            message,
        };
        if headers.get(0) != Some("country") {
            return Err(head_err(format!(
                "unexpected column `{}` (expected `country`)",
                headers.get(0).unwrap_or("")
            )));
        }
        if headers.get(1) != Some(OUTCOME_LABEL) {
            return Err(head_err(format!(
                "unexpected column `{}` (expected `{OUTCOME_LABEL}`)",
                headers.get(1).unwrap_or("")
            )));
        }
        let mut years = Vec::new();
        for h in headers.iter().skip(2) {
            let y = h
                .strip_prefix('X')
                .and_then(|s| s.parse::<i32>().ok())
                .ok_or_else(|| head_err(format!("unexpected column `{h}` (expected X<year>)")))?;
            years.push(y);
        }
        let mut countries = Vec::new();
        let mut flat = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| csv_error(source, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            countries.push(rec[0].to_string());
            for k in 1..rec.len() {
                let v = parse_optional(&rec[k]).map_err(|m| Error::Csv {
                    path: source.to_string(),
                    line,
                    message: m,
                })?;
                flat.push(match v {
                    Some(x) => T::lit(x),
                    None => T::nan(),
                });
            }
        }
        let values = Array2::from_shape_vec((countries.len(), years.len() + 1), flat)
            .map_err(|e| Error::Validation(e.to_string()))?;
        MergedDataset::new(subject, countries, years, values).map_err(|e| match e {
            Error::Validation(m) => Error::Csv {
                path: source.to_string(),
                line: 0,
                message: m,
            },
            other => other,
        })
    }
}

/// Inner join of one subject's scores with log expenditure per researcher.
pub fn merge(
    scores: &ScoreTable,
    indicators: &IndicatorTable,
    subject: Subject,
    years: &[i32],
) -> Result<MergedDataset<f64>> {
    if !scores.has_subject(subject) {
        return Err(Error::Validation(format!("no {subject} scores supplied")));
    }
    let with_indicators = indicators.countries();
    let countries: Vec<String> = scores
        .countries(subject)
        .into_iter()
        .filter(|c| with_indicators.contains(c))
        .map(str::to_string)
        .collect();
    if countries.is_empty() {
        return Err(Error::Validation(
            "no country has both a score and indicator data".into(),
        ));
    }
    let mut values = Array2::from_elem((countries.len(), years.len() + 1), f64::NAN);
    for (r, c) in countries.iter().enumerate() {
        values[[r, 0]] = scores
            .get(c, subject)
            .expect("country drawn from score table");
        for (j, &y) in years.iter().enumerate() {
            let x = indicators
                .get(c, y)
                .and_then(|row| log_transform(row.exp_one_rd));
            if let Some(x) = x {
                values[[r, j + 1]] = x;
            }
        }
    }
    MergedDataset::new(subject.to_string(), countries, years.to_vec(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessSummary {
    pub by_year: Vec<(i32, usize)>,
    pub by_country: Vec<(String, usize)>,
    /// `|S_NA|`.
    pub missing: usize,
    /// `|S_T|`.
    pub total: usize,
}

pub fn missingness_summary<T: Real>(d: &MergedDataset<T>) -> MissingnessSummary {
    let mask = d.mask();
    let by_year = d
        .years()
        .iter()
        .enumerate()
        .map(|(j, &y)| (y, mask.column(j + 1).iter().filter(|&&m| m).count()))
        .collect();
    let by_country = d
        .countries()
        .iter()
        .enumerate()
        .map(|(r, c)| {
            (
                c.clone(),
                mask.row(r).iter().skip(1).filter(|&&m| m).count(),
            )
        })
        .collect();
    MissingnessSummary {
        by_year,
        by_country,
        missing: d.missing_cells().len(),
        total: d.total_cells(),
    }
}
