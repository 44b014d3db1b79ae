//! Command-line front end. Every command writes its outputs plus a
//! `manifest.json` into the output directory; `replay` re-executes a
//! manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    build_report, correlations, extract_path, regression_table, subject_correlations,
    write_correlations_csv,
};
use crate::bootstrap::{average_network, bootstrap_strength, EdgeStrengthTable, Threshold};
use crate::dag::{Dag, DagRecord};
use crate::error::{Error, Result};
use crate::impute::{bnii, BniiConfig, BniiMode, DEFAULT_ITERATIONS, DEFAULT_K, DEFAULT_MASK_SIZE};
use crate::network::fit_network;
use crate::pipeline::{
    merge, missingness_summary, DatasetMeta, IndicatorTable, MergedDataset, ScoreTable, Subject,
    FIRST_YEAR, LAST_YEAR, OUTCOME_LABEL,
};
use crate::search::{hill_climb, predictor_label, temporal_blacklist, SearchConfig};
use crate::synthetic::{enumerate_dags, study_mimic_scenario, ScenarioSpec};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "gbn",
    version,
    about = "Gaussian Bayesian-network panel pipeline"
)]
pub struct Cli {
    /// Worker threads for bootstrap replicates (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Output directory.
    #[arg(long, global = true, env = "GBN_OUT_DIR", default_value = "gbn-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge score and indicator CSVs into the analysis matrix.
    Ingest(IngestArgs),
    /// Complete missing predictor cells.
    Impute(ImputeArgs),
    /// Learn one DAG by hill-climbing.
    Learn(LearnArgs),
    /// Bootstrap edge strengths and build the consensus network.
    Bootstrap(BootstrapArgs),
    /// Regression table, per-country indexes and correlations.
    Analyze(AnalyzeArgs),
    /// Generate data from a known network.
    Simulate(SimulateArgs),
    /// Score every DAG over a few selected columns.
    Enumerate(EnumerateArgs),
    /// ingest → impute → bootstrap → analyze.
    Pipeline(PipelineArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub indicators: PathBuf,
    #[arg(long, default_value = "reading")]
    pub subject: String,
    #[arg(long, default_value_t = FIRST_YEAR)]
    pub first_year: i32,
    #[arg(long, default_value_t = LAST_YEAR)]
    pub last_year: i32,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 4)]
    pub perturbation: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
}

impl SearchArgs {
    fn config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            restarts: self.restarts,
            perturbation: self.perturbation,
            max_iterations: self.max_iterations,
            seed,
            ..SearchConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ImputeArgs {
    #[arg(long)]
    pub merged: PathBuf,
    #[arg(long, default_value = "sweep", value_parser = parse_mode)]
    pub mode: BniiMode,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_MASK_SIZE)]
    pub mask_size: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LearnArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the accepted-move log as JSON lines.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    /// Fraction in (0, 1], or `max-outcome`.
    #[arg(long, default_value = "0.6", value_parser = parse_threshold)]
    pub threshold: Threshold,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub consensus: PathBuf,
    #[arg(long)]
    pub strengths: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Scenario JSON; ignored when `--builtin` is given.
    #[arg(long, conflicts_with = "builtin")]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_parser = ["study-mimic"])]
    pub builtin: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated column labels, e.g. `X2004,X2005,Y`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub columns: Vec<String>,
    /// Permit five columns (29,281 graphs).
    #[arg(long)]
    pub allow_five: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub indicators: PathBuf,
    #[arg(long, default_value = "reading")]
    pub subject: String,
    #[arg(long, default_value = "sweep", value_parser = parse_mode)]
    pub mode: BniiMode,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_MASK_SIZE)]
    pub mask_size: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    #[arg(long, default_value = "0.6", value_parser = parse_threshold)]
    pub threshold: Threshold,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<BniiMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_threshold(s: &str) -> std::result::Result<Threshold, String> {
    if s == "max-outcome" {
        return Ok(Threshold::MaxOutcome(OUTCOME_LABEL.to_string()));
    }
    let t: f64 = s.parse().map_err(|_| format!("invalid threshold `{s}`"))?;
    if t > 0.0 && t <= 1.0 {
        Ok(Threshold::Fraction(t))
    } else {
        Err(format!("threshold {t} must lie in (0, 1]"))
    }
}

/// A command with every flag resolved, as recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Ingest(IngestArgs),
    Impute(ImputeArgs),
    Learn(LearnArgs),
    Bootstrap(BootstrapArgs),
    Analyze(AnalyzeArgs),
    Simulate(SimulateArgs),
    Enumerate(EnumerateArgs),
    Pipeline(PipelineArgs),
}

impl Invocation {
    fn name(&self) -> &'static str {
        match self {
            Invocation::Ingest(_) => "ingest",
            Invocation::Impute(_) => "impute",
            Invocation::Learn(_) => "learn",
            Invocation::Bootstrap(_) => "bootstrap",
            Invocation::Analyze(_) => "analyze",
            Invocation::Simulate(_) => "simulate",
            Invocation::Enumerate(_) => "enumerate",
            Invocation::Pipeline(_) => "pipeline",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Invocation::Impute(a) => a.seed,
            Invocation::Learn(a) => a.seed,
            Invocation::Bootstrap(a) => a.seed,
            Invocation::Simulate(a) => a.seed,
            Invocation::Pipeline(a) => a.seed,
            Invocation::Ingest(_) | Invocation::Analyze(_) | Invocation::Enumerate(_) => None,
        }
    }

    /// Draws and records a seed wherever one was left unspecified.
    fn resolve_seed(mut self) -> Self {
        let fresh = || Some(rand::random::<u64>() >> 11);
        match &mut self {
            Invocation::Impute(a) if a.seed.is_none() => a.seed = fresh(),
            Invocation::Learn(a) if a.seed.is_none() => a.seed = fresh(),
            Invocation::Bootstrap(a) if a.seed.is_none() => a.seed = fresh(),
            Invocation::Simulate(a) if a.seed.is_none() => a.seed = fresh(),
            Invocation::Pipeline(a) if a.seed.is_none() => a.seed = fresh(),
            _ => {}
        }
        self
    }

    fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Invocation::Ingest(a) => vec![a.scores.clone(), a.indicators.clone()],
            Invocation::Impute(a) => vec![a.merged.clone()],
            Invocation::Learn(a) => vec![a.data.clone()],
            Invocation::Bootstrap(a) => vec![a.data.clone()],
            Invocation::Analyze(a) => {
                vec![a.data.clone(), a.consensus.clone(), a.strengths.clone()]
            }
            Invocation::Simulate(a) => a.scenario.iter().cloned().collect(),
            Invocation::Enumerate(a) => vec![a.data.clone()],
            Invocation::Pipeline(a) => vec![a.scores.clone(), a.indicators.clone()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub invocation: Invocation,
    pub seed: Option<u64>,
    pub jobs: usize,
    /// SHA-256 of each input file.
    pub input_digests: BTreeMap<String, String>,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn load_dataset(path: &Path) -> Result<MergedDataset<f64>> {
    let subject = match fs::read_to_string(sidecar_path(path)) {
        Ok(s) => serde_json::from_str::<DatasetMeta>(&s)?.subject,
        Err(_) => Subject::Reading.to_string(),
    };
    let text = read_to_string(path)?;
    MergedDataset::read_csv(&path.display().to_string(), text.as_bytes(), &subject)
}

fn save_dataset(d: &MergedDataset<f64>, dir: &Path, stem: &str) -> Result<()> {
    let mut buf = Vec::new();
    d.write_csv(&mut buf)?;
    write(&dir.join(format!("{stem}.csv")), buf)?;
    write(
        &dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&d.meta())?,
    )
}

/// Node display text for DOT and tables: years for predictors, the
/// subject's short name for the outcome.
fn display_for(subject: &str) -> impl Fn(&str) -> String {
    let outcome = subject
        .parse::<Subject>()
        .map(|s| s.display_name().to_string())
        .unwrap_or_else(|_| OUTCOME_LABEL.to_string());
    move |label: &str| {
        if label == OUTCOME_LABEL {
            outcome.clone()
        } else {
            label.strip_prefix('X').unwrap_or(label).to_string()
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConsensusRecord {
    pub dag: DagRecord,
    pub threshold: f64,
    pub skipped: Vec<(String, String)>,
}

#[derive(Serialize)]
struct LearnedRecord<'a> {
    dag: DagRecord,
    score: f64,
    iterations: usize,
    config: &'a SearchConfig,
}

fn run_ingest(a: &IngestArgs, out: &Path) -> Result<()> {
    let subject: Subject = a.subject.parse()?;
    if a.first_year > a.last_year {
        return Err(Error::Validation("first year after last year".into()));
    }
    let scores = ScoreTable::read_csv(
        &a.scores.display().to_string(),
        read_to_string(&a.scores)?.as_bytes(),
    )?;
    let indicators = IndicatorTable::read_csv(
        &a.indicators.display().to_string(),
        read_to_string(&a.indicators)?.as_bytes(),
    )?;
    let years: Vec<i32> = (a.first_year..=a.last_year).collect();
    let merged = merge(&scores, &indicators, subject, &years)?;
    save_dataset(&merged, out, "merged")?;
    write(
        &out.join("missingness.json"),
        serde_json::to_string_pretty(&missingness_summary(&merged))?,
    )?;
    let subj = subject_correlations(&scores);
    if subj.iter().all(|(_, _, r)| r.is_finite()) {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(["a", "b", "r"])?;
        for (x, y, r) in subj {
            wr.write_record([x.to_string(), y.to_string(), r.to_string()])?;
        }
        write(
            &out.join("subject_correlations.csv"),
            wr.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        )?;
    }
    log::info!(
        "merged {} countries, {} missing cells",
        merged.n(),
        merged.missing_cells().len()
    );
    Ok(())
}

fn run_impute(a: &ImputeArgs, out: &Path) -> Result<()> {
    let seed = a.seed.expect("seed resolved");
    let data = load_dataset(&a.merged)?;
    let constraints = temporal_blacklist(data.years(), OUTCOME_LABEL)?;
    let config = BniiConfig {
        iterations: a.iters,
        mask_size: a.mask_size,
        k: a.k,
        seed,
        mode: a.mode,
        search: a.search.config(seed),
    };
    let (completed, trace) = bnii(&data, &constraints, &config)?;
    save_dataset(&completed, out, "completed")?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write(&out.join("trace.csv"), buf)?;
    write(
        &out.join("imputation_summary.json"),
        trace.summary_json(&config)?,
    )
}

fn run_learn(a: &LearnArgs, out: &Path) -> Result<()> {
    let seed = a.seed.expect("seed resolved");
    let data = load_dataset(&a.data)?;
    if !data.is_complete() {
        return Err(Error::Validation(
            "learning requires a completed dataset".into(),
        ));
    }
    let labels = data.labels();
    let constraints = temporal_blacklist(data.years(), OUTCOME_LABEL)?;
    let config = SearchConfig {
        record_trace: a.trace,
        ..a.search.config(seed)
    };
    let result = hill_climb(data.values().view(), &labels, &constraints, &config)?;
    let display = display_for(data.subject());
    write(
        &out.join("dag.dot"),
        result.dag.to_dot(&display, |_, _| None),
    )?;
    write(
        &out.join("dag.json"),
        serde_json::to_string_pretty(&LearnedRecord {
            dag: result.dag.to_record(),
            score: result.score,
            iterations: result.iterations,
            config: &config,
        })?,
    )?;
    let net = fit_network(&result.dag, data.values().view())?;
    write(&out.join("network.json"), net.to_json()?)?;
    if a.trace {
        let mut lines = String::new();
        for ev in &result.trace {
            lines.push_str(&serde_json::to_string(ev)?);
            lines.push('\n');
        }
        write(&out.join("trace.jsonl"), lines)?;
    }
    Ok(())
}

fn run_bootstrap(a: &BootstrapArgs, out: &Path, jobs: usize) -> Result<()> {
    let seed = a.seed.expect("seed resolved");
    let data = load_dataset(&a.data)?;
    if !data.is_complete() {
        return Err(Error::Validation(
            "bootstrap requires a completed dataset".into(),
        ));
    }
    let labels = data.labels();
    let constraints = temporal_blacklist(data.years(), OUTCOME_LABEL)?;
    let table = bootstrap_strength(
        data.values().view(),
        &labels,
        &constraints,
        &a.search.config(seed),
        a.replicates,
        seed,
        jobs,
    )?;
    let consensus = average_network(&table, &a.threshold)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write(&out.join("strengths.csv"), buf)?;
    write(&out.join("strengths.json"), table.to_json()?)?;
    let display = display_for(data.subject());
    write(
        &out.join("consensus.dot"),
        consensus
            .dag
            .to_dot(&display, |p, c| Some(table.strength(p, c))),
    )?;
    write(
        &out.join("consensus.json"),
        serde_json::to_string_pretty(&ConsensusRecord {
            dag: consensus.dag.to_record(),
            threshold: consensus.threshold,
            skipped: consensus.skipped,
        })?,
    )
}

#[derive(Serialize)]
struct PathRecord {
    source: String,
    target: String,
    path: Option<Vec<String>>,
}

fn run_analyze(a: &AnalyzeArgs, out: &Path) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let labels = data.labels();
    let consensus: ConsensusRecord = serde_json::from_str(&read_to_string(&a.consensus)?)?;
    let dag = Dag::from_record(&consensus.dag)?;
    if dag.labels() != labels.as_slice() {
        return Err(Error::Validation(
            "consensus network and dataset variables differ".into(),
        ));
    }
    let strengths =
        EdgeStrengthTable::read_csv(labels.clone(), read_to_string(&a.strengths)?.as_bytes())?;
    let net = fit_network(&dag, data.values().view())?;
    let report = build_report(&net, Some(&strengths), &data)?;
    if report.no_outcome_parent {
        log::warn!("no outcome parent in the consensus network");
    }
    let source = predictor_label(
        *data
            .years()
            .first()
            .ok_or_else(|| Error::Validation("no predictor years".into()))?,
    );
    let path = extract_path(&dag, &source, OUTCOME_LABEL)?;
    let table_path = path
        .clone()
        .unwrap_or_else(|| vec![source.clone(), OUTCOME_LABEL.to_string()]);
    let table = regression_table(&net, &table_path)?;
    let display = display_for(data.subject());

    write(&out.join("regression_table.txt"), table.to_text(&display))?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf, &display)?;
    write(&out.join("regression_table.csv"), buf)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write(&out.join("report.csv"), buf)?;
    write(
        &out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write(
        &out.join("path.json"),
        serde_json::to_string_pretty(&PathRecord {
            source,
            target: OUTCOME_LABEL.to_string(),
            path,
        })?,
    )?;
    let mut buf = Vec::new();
    write_correlations_csv(&correlations(&data), &mut buf)?;
    write(&out.join("correlations.csv"), buf)?;
    write(&out.join("network.json"), net.to_json()?)
}

fn run_simulate(a: &SimulateArgs, out: &Path) -> Result<()> {
    let seed = a.seed.expect("seed resolved");
    let mut spec: ScenarioSpec<f64> = match (&a.scenario, &a.builtin) {
        (Some(p), None) => serde_json::from_str(&read_to_string(p)?)?,
        (None, Some(_)) => study_mimic_scenario(500, seed),
        _ => {
            return Err(Error::Validation(
                "give either --scenario <json> or --builtin study-mimic".into(),
            ))
        }
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(r) = a.missing_rate {
        spec.missing_rate = r;
    }
    spec.seed = seed;
    let (full, masked) = spec.generate()?;
    let masked = MergedDataset::new(
        Subject::Reading.to_string(),
        masked.countries().to_vec(),
        masked.years().to_vec(),
        masked.values().clone(),
    )?;
    save_dataset(&masked, out, "data")?;
    save_dataset(&masked.with_values(full)?, out, "complete")?;
    write(
        &out.join("truth.json"),
        serde_json::to_string_pretty(&spec)?,
    )?;
    let truth = spec.network()?;
    write(
        &out.join("truth.dot"),
        truth.dag().to_dot(display_for("reading"), |_, _| None),
    )
}

#[derive(Serialize)]
struct EnumerationRecord {
    best: DagRecord,
    best_score: f64,
    graphs: usize,
}

fn run_enumerate(a: &EnumerateArgs, out: &Path, jobs: usize) -> Result<()> {
    let data = load_dataset(&a.data)?;
    if !data.is_complete() {
        return Err(Error::Validation(
            "enumeration requires a completed dataset".into(),
        ));
    }
    let all = data.labels();
    let mut cols = Vec::with_capacity(a.columns.len());
    for c in &a.columns {
        let i = all
            .iter()
            .position(|l| l == c)
            .ok_or_else(|| Error::UnknownNode(c.clone()))?;
        if cols.contains(&i) {
            return Err(Error::Validation(format!("column `{c}` selected twice")));
        }
        cols.push(i);
    }
    let labels: Vec<String> = cols.iter().map(|&i| all[i].clone()).collect();
    let sub = data.values().select(ndarray::Axis(1), &cols);
    let full = temporal_blacklist(data.years(), OUTCOME_LABEL)?;
    let blacklist = full
        .blacklist
        .iter()
        .filter(|(p, c)| labels.contains(p) && labels.contains(c))
        .cloned()
        .collect();
    let cons = crate::search::EdgeConstraintSet::new(blacklist, Default::default())?;
    let e = enumerate_dags(&labels, &cons, sub.view(), a.allow_five, jobs)?;
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["graph", "score", "edges"])?;
    for (i, (dag, score)) in e.all.iter().enumerate() {
        let edges: Vec<String> = dag
            .edges()
            .iter()
            .map(|&(p, c)| format!("{}->{}", labels[p], labels[c]))
            .collect();
        wr.write_record([i.to_string(), score.to_string(), edges.join(" ")])?;
    }
    write(
        &out.join("enumeration.csv"),
        wr.into_inner().map_err(|e| Error::Io(e.into_error()))?,
    )?;
    write(
        &out.join("best.json"),
        serde_json::to_string_pretty(&EnumerationRecord {
            best: e.best.to_record(),
            best_score: e.best_score,
            graphs: e.all.len(),
        })?,
    )
}

fn run_pipeline(a: &PipelineArgs, out: &Path, jobs: usize) -> Result<()> {
    let stage = |name: &str| -> Result<PathBuf> {
        let dir = out.join(name);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    };
    let ingest_dir = stage("ingest")?;
    let impute_dir = stage("impute")?;
    let boot_dir = stage("bootstrap")?;
    let analyze_dir = stage("analyze")?;
    let steps = vec![
        (
            ingest_dir.clone(),
            Invocation::Ingest(IngestArgs {
                scores: a.scores.clone(),
                indicators: a.indicators.clone(),
                subject: a.subject.clone(),
                first_year: FIRST_YEAR,
                last_year: LAST_YEAR,
            }),
        ),
        (
            impute_dir.clone(),
            Invocation::Impute(ImputeArgs {
                merged: ingest_dir.join("merged.csv"),
                mode: a.mode,
                iters: a.iters,
                mask_size: a.mask_size,
                k: a.k,
                seed: a.seed,
                search: a.search.clone(),
            }),
        ),
        (
            boot_dir.clone(),
            Invocation::Bootstrap(BootstrapArgs {
                data: impute_dir.join("completed.csv"),
                replicates: a.replicates,
                threshold: a.threshold.clone(),
                seed: a.seed,
                search: a.search.clone(),
            }),
        ),
        (
            analyze_dir,
            Invocation::Analyze(AnalyzeArgs {
                data: impute_dir.join("completed.csv"),
                consensus: boot_dir.join("consensus.json"),
                strengths: boot_dir.join("strengths.csv"),
            }),
        ),
    ];
    for (dir, inv) in steps {
        execute(inv, &dir, jobs)?;
    }
    Ok(())
}

/// Runs a resolved invocation into `out` and writes its manifest.
pub fn execute(invocation: Invocation, out: &Path, jobs: usize) -> Result<RunManifest> {
    let invocation = invocation.resolve_seed();
    fs::create_dir_all(out)?;
    let started = now();
    let mut input_digests = BTreeMap::new();
    for p in invocation.inputs() {
        input_digests.insert(p.display().to_string(), digest(&p)?);
    }
    match &invocation {
        Invocation::Ingest(a) => run_ingest(a, out)?,
        Invocation::Impute(a) => run_impute(a, out)?,
        Invocation::Learn(a) => run_learn(a, out)?,
        Invocation::Bootstrap(a) => run_bootstrap(a, out, jobs)?,
        Invocation::Analyze(a) => run_analyze(a, out)?,
        Invocation::Simulate(a) => run_simulate(a, out)?,
        Invocation::Enumerate(a) => run_enumerate(a, out, jobs)?,
        Invocation::Pipeline(a) => run_pipeline(a, out, jobs)?,
    }
    let manifest = RunManifest {
        command: invocation.name().to_string(),
        seed: invocation.seed(),
        invocation,
        jobs,
        input_digests,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: now(),
    };
    write(
        &out.join(MANIFEST),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Re-executes a recorded manifest into `out`.
pub fn replay(manifest: &Path, out: &Path, jobs: usize) -> Result<RunManifest> {
    let m: RunManifest = serde_json::from_str(&read_to_string(manifest)?)?;
    for (path, recorded) in &m.input_digests {
        let now = digest(Path::new(path))?;
        if &now != recorded {
            log::warn!("input {path} changed since the manifest was written");
        }
    }
    execute(m.invocation, out, jobs)
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => execute(Invocation::Ingest(a), &cli.out_dir, cli.jobs),
        Command::Impute(a) => execute(Invocation::Impute(a), &cli.out_dir, cli.jobs),
        Command::Learn(a) => execute(Invocation::Learn(a), &cli.out_dir, cli.jobs),
        Command::Bootstrap(a) => execute(Invocation::Bootstrap(a), &cli.out_dir, cli.jobs),
        Command::Analyze(a) => execute(Invocation::Analyze(a), &cli.out_dir, cli.jobs),
        Command::Simulate(a) => execute(Invocation::Simulate(a), &cli.out_dir, cli.jobs),
        Command::Enumerate(a) => execute(Invocation::Enumerate(a), &cli.out_dir, cli.jobs),
        Command::Pipeline(a) => execute(Invocation::Pipeline(a), &cli.out_dir, cli.jobs),
        Command::Replay(a) => replay(&a.manifest, &cli.out_dir, cli.jobs),
    };
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
