//! The `factnet` pipeline. Every stage reads and writes files in one
//! working directory and records their hashes in `manifest.json`.
//!
//! | stage      | reads                                | writes                          |
//! |------------|--------------------------------------|---------------------------------|
//! | `datagen`  |                                      | `graph.json`, `truth.json`      |
//! | `train`    | `graph.json`                         | `model.json`, `train.json`      |
//! | `sample`   | `graph.json`, `model.json`           | `pairs-*.json`, `subgraphs-*.json` |
//! | `simulate` | `graph.json`, `subgraphs-*.json`     | `interactions.jsonl`            |
//! | `run`      | `graph.json`, `model.json`, log      | `run-p{n}.json`                 |
//! | `eval`     | `graph.json`, `model.json`, log      | `eval.json`                     |
//! | `report`   | `eval.json`, `run-p*.json`           | `report.json`, `report.txt`     |

pub mod config;
pub mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use factnet_core::datagen::DatagenError;
use factnet_core::experiment::{
    dev_sources, run_seeds, sample_pairs, Benchmark, ExperimentError, SeedResult, Summary,
};
use factnet_core::graph::{GraphError, InfoGraph, NodeKind, Partition};
use factnet_core::interaction::{
    evaluate_split, group_by_split, run_protocol, simulate_bulk, simulate_interactions, EdgeProposal,
    InteractionError, InteractionLog, Protocol, ProtocolRun, ProtocolSetup,
};
use factnet_core::metrics::{render_table, EvalReport, MetricsError};
use factnet_core::rgcn::{train_on_split, RgcnError, RgcnModel};
use factnet_core::sampler::{user_factuality, Criterion, FocalPair, LabelSource, SamplerError};
use factnet_core::subgraph::{attach_metadata, build_subgraph, InteractionSubGraph, SubgraphLimits};
use factnet_service::{AppState, ServiceConfig, ServiceError};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use config::PipelineConfig;
use manifest::{sha256_file, FileHash, RunManifest, StageRecord};

pub const GRAPH: &str = "graph.json";
pub const TRUTH: &str = "truth.json";
pub const MODEL: &str = "model.json";
pub const TRAIN: &str = "train.json";
pub const LOG: &str = "interactions.jsonl";
pub const EVAL: &str = "eval.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Failure(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Failure(_) | CliError::Io(_) => 1,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Divergence(_) => "divergence",
            CliError::Failure(_) => "failure",
            CliError::Io(_) => "io",
        }
    }

    /// The JSON object written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        json!({"error": self.code(), "message": self.to_string(), "exit_code": self.exit_code()})
    }
}

impl From<RgcnError> for CliError {
    fn from(e: RgcnError) -> Self {
        match e {
            RgcnError::Divergence { .. } => CliError::Divergence(e.to_string()),
            RgcnError::InvalidConfig(_)
            | RgcnError::DimMismatch { .. }
            | RgcnError::SplitViolation(_)
            | RgcnError::Checkpoint(_)
            | RgcnError::Graph(_)
            | RgcnError::EmptyTrainSet => CliError::Validation(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Io(io) => CliError::Io(io),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Graph(g) => g.into(),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Sampler(s) => s.into(),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<InteractionError> for CliError {
    fn from(e: InteractionError) -> Self {
        match e {
            InteractionError::Model(m) => m.into(),
            InteractionError::Graph(g) => g.into(),
            InteractionError::Metrics(m) => m.into(),
            InteractionError::Io(io) => CliError::Io(io),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Datagen(d) => d.into(),
            ExperimentError::Graph(g) => g.into(),
            ExperimentError::Model(m) => m.into(),
            ExperimentError::Sampler(s) => s.into(),
            ExperimentError::Interaction(i) => i.into(),
            ExperimentError::Metrics(m) => m.into(),
            ExperimentError::Seed { seed, source } => match CliError::from(*source) {
                CliError::Validation(m) => CliError::Validation(format!("seed {seed}: {m}")),
                CliError::Divergence(m) => CliError::Divergence(format!("seed {seed}: {m}")),
                CliError::Failure(m) => CliError::Failure(format!("seed {seed}: {m}")),
                CliError::Io(io) => CliError::Io(io),
            },
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Model(m) => m.into(),
            ServiceError::Graph(g) => g.into(),
            ServiceError::Interaction(i) => i.into(),
            ServiceError::Experiment(x) => x.into(),
            ServiceError::BadRequest(m) => CliError::Validation(m),
            other => CliError::Failure(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "factnet", version, about = "Interactive graph learning for news-source factuality")]
pub struct Cli {
    /// Pipeline config, TOML or JSON by extension. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Working directory holding every stage's files.
    #[arg(long, alias = "out", global = true, default_value = ".")]
    pub dir: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a degraded synthetic graph and its ground truth.
    Datagen {
        #[arg(long)]
        breakage: Option<f64>,
    },
    /// Train the base model on the training split.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Pick focal user pairs and build their sub-graphs.
    Sample {
        #[arg(long, value_parser = parse_criterion)]
        criterion: Option<Criterion>,
        #[arg(long, value_parser = parse_split)]
        split: Option<Partition>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Simulate an interactor and append its edges to the log. With
    /// `--fraction`, proposes that share of all same-label user pairs of
    /// the split instead of working from sampled sub-graphs.
    Simulate {
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long, value_parser = parse_criterion)]
        criterion: Option<Criterion>,
        #[arg(long, value_parser = parse_split)]
        split: Option<Partition>,
    },
    /// Serve the interaction API over the working directory's files.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Run an evaluation protocol with the logged interactions.
    Run {
        #[arg(long, value_parser = parse_protocol)]
        protocol: Protocol,
    },
    /// Evaluate the base model on every held-out split, log applied.
    Eval,
    /// Tabulate `eval.json` and any protocol runs.
    Report,
    /// Run the full seeded benchmark end to end.
    Benchmark {
        #[arg(long)]
        seeds: Option<u64>,
    },
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse()
}

fn parse_split(s: &str) -> Result<Partition, String> {
    s.parse().map_err(|e: GraphError| e.to_string())
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse()
}

/// Files one stage read and wrote.
struct Stage {
    name: String,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    /// Skip echoing the summary to stdout.
    quiet: bool,
}

struct Ctx {
    dir: PathBuf,
    cfg: PipelineConfig,
    manifest: RunManifest,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

impl Ctx {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn stage(&self, name: impl Into<String>) -> Stage {
        Stage {
            name: name.into(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            quiet: false,
        }
    }

    /// Records a required input, failing when an earlier stage has not
    /// produced it.
    fn input(&self, stage: &mut Stage, rel: &str) -> Result<PathBuf, CliError> {
        let path = self.path(rel);
        if !path.exists() {
            return Err(CliError::Validation(format!(
                "missing input {}; run the stage that writes it first",
                path.display()
            )));
        }
        stage.inputs.insert(rel.to_string(), sha256_file(&path)?);
        Ok(path)
    }

    fn optional_input(&self, stage: &mut Stage, rel: &str) -> Result<PathBuf, CliError> {
        let path = self.path(rel);
        if path.exists() {
            stage.inputs.insert(rel.to_string(), sha256_file(&path)?);
        }
        Ok(path)
    }

    fn output(&self, stage: &mut Stage, rel: &str) -> PathBuf {
        stage.outputs.push(rel.to_string());
        self.path(rel)
    }

    fn finish(&mut self, stage: Stage, summary: serde_json::Value) -> Result<(), CliError> {
        for path in self.manifest.drifted(&stage.inputs) {
            eprintln!(
                "{}",
                json!({"warning": "drift", "stage": stage.name, "input": path,
                       "message": "input changed since the stage that wrote it"})
            );
        }
        let quiet = stage.quiet;
        let mut outputs = BTreeMap::new();
        for rel in &stage.outputs {
            outputs.insert(rel.clone(), sha256_file(&self.path(rel))?);
        }
        self.manifest.seed = self.cfg.seed;
        self.manifest.record(
            stage.name,
            StageRecord {
                inputs: stage.inputs,
                outputs,
                summary: summary.clone(),
            },
        );
        self.manifest.save(&self.dir)?;
        if !quiet {
            println!("{summary}");
        }
        Ok(())
    }

    fn load_graph(&self, stage: &mut Stage) -> Result<(InfoGraph, factnet_core::graph::SplitSpec), CliError> {
        let path = self.input(stage, GRAPH)?;
        Ok(InfoGraph::load(path)?)
    }

    fn load_model(&self, stage: &mut Stage) -> Result<RgcnModel, CliError> {
        let path = self.input(stage, MODEL)?;
        Ok(RgcnModel::load(path)?)
    }

    fn sample_split(&self, split: Option<Partition>) -> Result<Partition, CliError> {
        match split {
            Some(s) => Ok(s),
            None => self.cfg.sampling.split.parse().map_err(|e: GraphError| CliError::Validation(e.to_string())),
        }
    }
}

fn sample_files(split: Partition, criterion: Criterion) -> (String, String) {
    (
        format!("pairs-{}-{}.json", split.as_str(), criterion.as_str()),
        format!("subgraphs-{}-{}.json", split.as_str(), criterion.as_str()),
    )
}

pub fn run_file(protocol: Protocol) -> String {
    format!("run-p{}.json", protocol.number())
}

/// Applies the config file and flag overrides, then runs the chosen
/// stage.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if matches!(cli.command, Command::Datagen { .. } | Command::Benchmark { .. }) {
        std::fs::create_dir_all(&cli.dir)?;
    } else if !cli.dir.is_dir() {
        return Err(CliError::Validation(format!("{} is not a directory", cli.dir.display())));
    }
    let mut manifest = RunManifest::load_or_default(&cli.dir)?;
    if let Some(p) = &cli.config {
        manifest.config = Some(FileHash {
            path: p.display().to_string(),
            sha256: sha256_file(p)?,
        });
    }
    let mut ctx = Ctx {
        dir: cli.dir,
        cfg,
        manifest,
    };
    match cli.command {
        Command::Datagen { breakage } => datagen(&mut ctx, breakage),
        Command::Train { epochs } => train(&mut ctx, epochs),
        Command::Sample { criterion, split, count } => sample(&mut ctx, criterion, split, count),
        Command::Simulate {
            fraction,
            criterion,
            split,
        } => simulate(&mut ctx, fraction, criterion, split),
        Command::Serve { bind } => serve(&ctx, bind),
        Command::Run { protocol } => run_stage(&mut ctx, protocol),
        Command::Eval => eval(&mut ctx),
        Command::Report => report(&mut ctx),
        Command::Benchmark { seeds } => benchmark(&mut ctx, seeds),
    }
}

fn datagen(ctx: &mut Ctx, breakage: Option<f64>) -> Result<(), CliError> {
    let breakage = breakage.unwrap_or(ctx.cfg.breakage);
    let generator = ctx.cfg.generator.clone().with_seed(ctx.cfg.seed);
    let bench = Benchmark::build(&generator, breakage)?;
    let mut stage = ctx.stage("datagen");
    bench.graph.save(&bench.splits, ctx.output(&mut stage, GRAPH))?;
    bench.truth.save(ctx.output(&mut stage, TRUTH))?;
    let g = &bench.graph;
    let summary = json!({
        "stage": "datagen",
        "seed": ctx.cfg.seed,
        "breakage": breakage,
        "sources": g.nodes_of(NodeKind::Source).count(),
        "articles": g.nodes_of(NodeKind::Article).count(),
        "users": g.nodes_of(NodeKind::User).count(),
        "edges": g.edges().len(),
    });
    ctx.finish(stage, summary)
}

fn train(ctx: &mut Ctx, epochs: Option<usize>) -> Result<(), CliError> {
    let mut stage = ctx.stage("train");
    let (g, splits) = ctx.load_graph(&mut stage)?;
    let mut config = ctx.cfg.model.clone().with_seed(ctx.cfg.seed);
    if let Some(e) = epochs {
        config.epochs = e;
    }
    let mut model = RgcnModel::new(config, g.dims())?;
    let dev = dev_sources(&splits);
    let report = train_on_split(&mut model, &g, &splits, Some(&dev))?;
    model.save(ctx.output(&mut stage, MODEL))?;
    write_json(&ctx.output(&mut stage, TRAIN), &report)?;
    let summary = json!({
        "stage": "train",
        "epochs": report.loss_curve.len(),
        "final_loss": report.final_loss(),
        "best_epoch": report.best_epoch,
        "best_dev_accuracy": report.best_epoch.and_then(|e| report.dev_accuracy.get(e).copied()),
    });
    ctx.finish(stage, summary)
}

fn sample(
    ctx: &mut Ctx,
    criterion: Option<Criterion>,
    split: Option<Partition>,
    count: Option<usize>,
) -> Result<(), CliError> {
    let criterion = criterion.unwrap_or(ctx.cfg.sampling.criterion);
    let split = ctx.sample_split(split)?;
    if !matches!(split, Partition::E1_1 | Partition::E2_1) {
        return Err(CliError::Validation(format!("interactions happen on E1_1 or E2_1, not {split}")));
    }
    let count = count.unwrap_or(ctx.cfg.sampling.count);
    let (pairs_file, subgraphs_file) = sample_files(split, criterion);
    let mut stage = ctx.stage(format!("sample-{}-{}", split.as_str(), criterion.as_str()));
    let (g, splits) = ctx.load_graph(&mut stage)?;
    let model = ctx.load_model(&mut stage)?;
    let pairs = sample_pairs(&g, &splits, &model, split, criterion, count, ctx.cfg.seed)?;
    let sources = factnet_core::experiment::event_members(&splits, NodeKind::Source, split.event());
    let preds = model.predict_sources(&g, &sources)?;
    let limits = SubgraphLimits::default();
    let mut subgraphs = Vec::with_capacity(pairs.len());
    for &p in &pairs {
        let mut sg = build_subgraph(&g, p, &limits)?;
        attach_metadata(&g, &mut sg, Some(&preds))?;
        subgraphs.push(sg);
    }
    write_json(&ctx.output(&mut stage, &pairs_file), &pairs)?;
    write_json(&ctx.output(&mut stage, &subgraphs_file), &subgraphs)?;
    let summary = json!({
        "stage": "sample",
        "split": split,
        "criterion": criterion,
        "pairs": pairs.len(),
    });
    ctx.finish(stage, summary)
}

fn simulate(
    ctx: &mut Ctx,
    fraction: Option<f64>,
    criterion: Option<Criterion>,
    split: Option<Partition>,
) -> Result<(), CliError> {
    let split = ctx.sample_split(split)?;
    if !matches!(split, Partition::E1_1 | Partition::E2_1) {
        return Err(CliError::Validation(format!("interactions happen on E1_1 or E2_1, not {split}")));
    }
    let mut stage = ctx.stage(format!("simulate-{}", split.as_str()));
    let (g, splits) = ctx.load_graph(&mut stage)?;
    let proposals = match fraction {
        Some(f) => {
            let users = splits.members(NodeKind::User, split);
            let gold = user_factuality(&g, &users, LabelSource::Gold)?;
            simulate_bulk(&users, &gold, split, f, ctx.cfg.seed)?
        }
        None => {
            let criterion = criterion.unwrap_or(ctx.cfg.sampling.criterion);
            let (_, file) = sample_files(split, criterion);
            let subgraphs: Vec<InteractionSubGraph> = read_json(&ctx.input(&mut stage, &file)?)?;
            let mut users: Vec<_> = subgraphs.iter().flat_map(|sg| sg.users()).collect();
            users.sort_unstable();
            users.dedup();
            let gold = user_factuality(&g, &users, LabelSource::Gold)?;
            simulate_interactions(&subgraphs, &gold)
        }
    };
    let log_path = ctx.optional_input(&mut stage, LOG)?;
    let log = InteractionLog::new(&log_path);
    let mut seen: BTreeSet<_> = log.read()?.iter().map(EdgeProposal::edge_key).collect();
    let fresh: Vec<EdgeProposal> = proposals
        .iter()
        .filter(|p| seen.insert(p.edge_key()))
        .cloned()
        .collect();
    for p in &fresh {
        p.check_shape()?;
    }
    log.append(&fresh)?;
    ctx.output(&mut stage, LOG);
    let summary = json!({
        "stage": "simulate",
        "split": split,
        "mode": if fraction.is_some() { "bulk" } else { "subgraphs" },
        "proposed": proposals.len(),
        "appended": fresh.len(),
    });
    ctx.finish(stage, summary)
}

fn serve(ctx: &Ctx, bind: Option<String>) -> Result<(), CliError> {
    let bind = bind.unwrap_or_else(|| ctx.cfg.serve.bind.clone());
    let bind: SocketAddr = bind
        .parse()
        .map_err(|e| CliError::Validation(format!("bind address {bind:?}: {e}")))?;
    for rel in [GRAPH, MODEL] {
        if !ctx.path(rel).exists() {
            return Err(CliError::Validation(format!("missing input {}", ctx.path(rel).display())));
        }
    }
    let state = AppState::load(&ServiceConfig {
        bind,
        graph: ctx.path(GRAPH),
        checkpoint: ctx.path(MODEL),
        log: ctx.path(LOG),
    })?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(factnet_service::serve(state, bind))?;
    Ok(())
}

fn protocol_setup<'a>(
    g: &'a InfoGraph,
    splits: &'a factnet_core::graph::SplitSpec,
    dev: &'a [factnet_core::graph::NodeId],
    model: &RgcnModel,
    seed: u64,
) -> ProtocolSetup<'a> {
    ProtocolSetup {
        graph: g,
        splits,
        dev,
        retrain_epochs: (model.config().epochs / 2).max(1),
        purity: true,
        seed,
    }
}

fn run_stage(ctx: &mut Ctx, protocol: Protocol) -> Result<(), CliError> {
    let mut stage = ctx.stage(format!("run-p{}", protocol.number()));
    let (g, splits) = ctx.load_graph(&mut stage)?;
    let model = ctx.load_model(&mut stage)?;
    let log = InteractionLog::new(ctx.optional_input(&mut stage, LOG)?);
    let proposals: BTreeMap<Partition, Vec<EdgeProposal>> = group_by_split(&splits, log.read()?)?
        .into_iter()
        .filter(|(s, _)| protocol.interaction_splits().contains(s))
        .collect();
    let dev = dev_sources(&splits);
    let setup = protocol_setup(&g, &splits, &dev, &model, ctx.cfg.seed);
    let outcome = run_protocol(&model, &setup, protocol, &proposals)?;
    write_json(&ctx.output(&mut stage, &run_file(protocol)), &outcome.run)?;
    let accuracy: BTreeMap<&str, f64> = outcome.run.reports.iter().map(|r| (r.split.as_str(), r.accuracy)).collect();
    let summary = json!({
        "stage": "run",
        "protocol": protocol.number(),
        "edges_added": outcome.run.edges_added,
        "accuracy": accuracy,
    });
    ctx.finish(stage, summary)
}

pub const EVAL_SPLITS: [Partition; 4] = [Partition::E1_1, Partition::E1_2, Partition::E2_1, Partition::E2_2];

fn eval(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut stage = ctx.stage("eval");
    let (mut g, splits) = ctx.load_graph(&mut stage)?;
    let model = ctx.load_model(&mut stage)?;
    let log = InteractionLog::new(ctx.optional_input(&mut stage, LOG)?);
    let added = log.replay(&mut g)?;
    let reports = EVAL_SPLITS
        .iter()
        .map(|&s| evaluate_split(&model, &g, &splits, s, added, Some(ctx.cfg.seed)))
        .collect::<Result<Vec<_>, _>>()?;
    write_json(&ctx.output(&mut stage, EVAL), &reports)?;
    let accuracy: BTreeMap<&str, f64> = reports.iter().map(|r| (r.split.as_str(), r.accuracy)).collect();
    let summary = json!({"stage": "eval", "edges_added": added, "accuracy": accuracy});
    ctx.finish(stage, summary)
}

#[derive(Debug, Serialize)]
struct ReportRow {
    setting: String,
    #[serde(flatten)]
    report: EvalReport,
}

fn report(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut stage = ctx.stage("report");
    let base: Vec<EvalReport> = read_json(&ctx.input(&mut stage, EVAL)?)?;
    let mut rows: Vec<(String, EvalReport)> = base.into_iter().map(|r| ("Model".to_string(), r)).collect();
    for p in Protocol::ALL {
        let file = run_file(p);
        if ctx.path(&file).exists() {
            let run: ProtocolRun = read_json(&ctx.input(&mut stage, &file)?)?;
            rows.extend(run.reports.into_iter().map(|r| (p.to_string(), r)));
        }
    }
    let table = render_table(&rows);
    let json_rows: Vec<ReportRow> = rows
        .iter()
        .map(|(setting, report)| ReportRow {
            setting: setting.clone(),
            report: report.clone(),
        })
        .collect();
    write_json(&ctx.output(&mut stage, REPORT_JSON), &json!({"seed": ctx.cfg.seed, "rows": json_rows}))?;
    std::fs::write(ctx.output(&mut stage, REPORT_TXT), &table)?;
    print!("{table}");
    stage.quiet = true;
    ctx.finish(stage, json!({"stage": "report", "rows": rows.len()}))
}

#[derive(Debug, Serialize)]
struct BenchmarkFile<'a> {
    seeds: Vec<u64>,
    summary: &'a Summary,
    results: &'a [SeedResult],
}

fn benchmark(ctx: &mut Ctx, seeds: Option<u64>) -> Result<(), CliError> {
    let n = seeds.unwrap_or(ctx.cfg.benchmark.seeds);
    let seeds: Vec<u64> = (ctx.cfg.seed..ctx.cfg.seed + n).collect();
    let results = run_seeds(&ctx.cfg.experiment(), &seeds)?;
    let summary = Summary::from_results(&results);
    let mut stage = ctx.stage("benchmark");
    write_json(
        &ctx.output(&mut stage, "benchmark.json"),
        &BenchmarkFile {
            seeds: seeds.clone(),
            summary: &summary,
            results: &results,
        },
    )?;
    let value = serde_json::to_value(&summary).expect("summary serializes");
    ctx.finish(stage, value)
}

/// Pairs for a split as written by `sample`.
pub fn read_pairs(dir: &Path, split: Partition, criterion: Criterion) -> Result<Vec<FocalPair>, CliError> {
    read_json(&dir.join(sample_files(split, criterion).0))
}
