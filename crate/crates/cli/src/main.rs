//! `ucd`: generate corpora, train, evaluate, sweep and export embeddings.
//!
//! Every command writes its outputs and a `manifest.json` into `--out-dir`.
//! Training settings resolve as library defaults, then `--config` (TOML),
//! then individual flags. Exit codes: 0 on success, 1 when a run fails
//! (for example a non-finite training loss), 2 on invalid flags or inputs.

mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ucd::checkpoint;
use ucd::config::RunConfig;
use ucd::data::{self, Corpus, SessionRecord};
use ucd::eval::{self, MetricsReport};
use ucd::synth::{self, SynthSpec};
use ucd::trainer::{self, ablate, EpochReport, ThresholdMode, TrainConfig, Variant};
use ucd::UcdError;

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "ucd", version, about = "Unsupervised cyberbullying detection", propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus: sessions.jsonl and graph.txt.
    Generate(GenerateArgs),
    /// Split a corpus, train on the training part, write checkpoint and losses.
    Train(TrainArgs),
    /// Score sessions with a checkpoint and report metrics.
    Evaluate(EvaluateArgs),
    /// Repeated runs over a grid of values for one setting.
    Sweep(SweepArgs),
    /// Write session representations of a checkpoint as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    n_sessions: Option<usize>,
    /// Fraction of bullying sessions, in (0, 0.5).
    #[arg(long)]
    bully_fraction: Option<f64>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    profane_vocab_size: Option<usize>,
    #[arg(long)]
    profane_rate_bully: Option<f64>,
    #[arg(long)]
    profane_rate_clean: Option<f64>,
    #[arg(long)]
    burst_rate_ratio: Option<f64>,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    homophily: Option<f64>,
    #[arg(long)]
    clean_mean_gap: Option<f64>,
    #[arg(long)]
    mean_comments: Option<f64>,
    #[arg(long)]
    mean_comment_len: Option<f64>,
    #[arg(long)]
    mean_degree: Option<f64>,
    #[arg(long)]
    user_features: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Corpus inputs shared by the training commands.
#[derive(Debug, Args)]
struct DataArgs {
    /// Sessions file, one JSON record per line.
    #[arg(long)]
    sessions: PathBuf,
    /// Follower graph file.
    #[arg(long)]
    graph: Option<PathBuf>,
}

/// Training settings; each flag overrides the config file.
#[derive(Debug, Args)]
struct TrainFlags {
    /// TOML config with [objective], [optimizer], [ablations], [model], [data].
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    ablation: Option<Variant>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    /// Number of mixture components.
    #[arg(long)]
    k: Option<usize>,
    /// Energy quantile used as the classification threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    threshold: Option<ThresholdArg>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    min_token_freq: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ThresholdArg {
    TestQuantile,
    TrainQuantile,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled sessions to score.
    #[arg(long)]
    sessions: PathBuf,
    /// Threshold quantile; defaults to the checkpoint's.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SweepParam {
    Lambda1,
    Lambda2,
    Lambda3,
    K,
    Tau,
    LearningRate,
    Epochs,
    BatchSize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values for `--param`.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Repeated runs per value.
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    sessions: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Bad flags or inputs detected before any work starts.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
        format!("unknown variant {s:?}, expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<UcdError>() {
        Some(UcdError::InvalidArgument(_) | UcdError::Parse { .. } | UcdError::MissingGraph(_)) => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ExportEmbeddings(a) => cmd_export(a),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!(Usage(format!("input file not found: {}", path.display())));
    }
    Ok(())
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_sessions: a.n_sessions.unwrap_or(d.n_sessions),
        bully_fraction: a.bully_fraction.unwrap_or(d.bully_fraction),
        vocab_size: a.vocab_size.unwrap_or(d.vocab_size),
        profane_vocab_size: a.profane_vocab_size.unwrap_or(d.profane_vocab_size),
        profane_rate_bully: a.profane_rate_bully.unwrap_or(d.profane_rate_bully),
        profane_rate_clean: a.profane_rate_clean.unwrap_or(d.profane_rate_clean),
        burst_rate_ratio: a.burst_rate_ratio.unwrap_or(d.burst_rate_ratio),
        n_users: a.n_users.unwrap_or(d.n_users),
        homophily: a.homophily.unwrap_or(d.homophily),
        seed: a.seed.unwrap_or(d.seed),
        clean_mean_gap: a.clean_mean_gap.unwrap_or(d.clean_mean_gap),
        mean_comments: a.mean_comments.unwrap_or(d.mean_comments),
        mean_comment_len: a.mean_comment_len.unwrap_or(d.mean_comment_len),
        mean_degree: a.mean_degree.unwrap_or(d.mean_degree),
        user_features: a.user_features.unwrap_or(d.user_features),
    };
    spec.validate()?;
    let mut m = RunManifest::new("generate", spec.seed, &spec)?;
    let out = m.timed("generate", || synth::generate_records(&spec))?;
    prepare_out_dir(&a.out_dir)?;
    let sessions = a.out_dir.join("sessions.jsonl");
    let graph = a.out_dir.join("graph.txt");
    data::write_session_records(&sessions, &out.records)?;
    out.graph.write(&graph)?;
    m.output(&sessions);
    m.output(&graph);
    let path = m.write(&a.out_dir)?;
    println!("wrote {} sessions to {}, manifest {}", out.records.len(), sessions.display(), path.display());
    Ok(())
}

/// Defaults, then the config file, then flags.
fn resolve_config(flags: &TrainFlags) -> Result<RunConfig> {
    let mut rc = match &flags.config {
        Some(p) => {
            require_file(p)?;
            RunConfig::read(p)?
        }
        None => RunConfig::default(),
    };
    let (o, p) = (&mut rc.objective, &mut rc.optimizer);
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(o.lambda1, flags.lambda1);
    set!(o.lambda2, flags.lambda2);
    set!(o.lambda3, flags.lambda3);
    set!(o.k, flags.k);
    set!(o.tau, flags.tau);
    set!(o.jitter, flags.jitter);
    set!(
        o.threshold,
        flags.threshold.map(|t| match t {
            ThresholdArg::TestQuantile => ThresholdMode::TestQuantile,
            ThresholdArg::TrainQuantile => ThresholdMode::TrainQuantile,
        })
    );
    set!(p.learning_rate, flags.learning_rate);
    set!(p.batch_size, flags.batch_size);
    set!(p.epochs, flags.epochs);
    set!(p.seed, flags.seed);
    set!(rc.data.train_fraction, flags.train_fraction);
    set!(rc.data.min_token_freq, flags.min_token_freq);
    if let Some(v) = flags.ablation {
        rc.ablations = ablate(&rc.train_config(), v).ablations;
    }
    rc.train_config().validate()?;
    Ok(rc)
}

fn load_corpus(data: &DataArgs, min_token_freq: u64, m: &mut RunManifest) -> Result<Corpus> {
    require_file(&data.sessions)?;
    m.input(&data.sessions)?;
    if let Some(g) = &data.graph {
        require_file(g)?;
        m.input(g)?;
    }
    let (corpus, report) = m.timed("ingest", || data::ingest_corpus(&data.sessions, data.graph.as_deref(), min_token_freq))?;
    if report.dropped_comments + report.dropped_sessions > 0 {
        eprintln!(
            "ingest dropped {} comment(s) and {} session(s)",
            report.dropped_comments, report.dropped_sessions
        );
    }
    Ok(corpus)
}

fn variant_name(config: &TrainConfig) -> &'static str {
    config.variant().map(|v| v.name()).unwrap_or("custom")
}

#[derive(Serialize)]
struct ConfigSnapshot<'a> {
    variant: &'static str,
    #[serde(flatten)]
    run: &'a RunConfig,
}

fn losses_csv(epochs: &[EpochReport]) -> String {
    let mut s = String::from("epoch,batches,total_j,time_term,energy_term,graph_term,penalty_term\n");
    for e in epochs {
        let l = &e.mean;
        writeln!(
            s,
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            e.epoch, e.batches, l.total_j, l.time_term, l.energy_term, l.graph_term, l.penalty_term
        )
        .expect("writing to a string");
    }
    s
}

fn split_records(corpus: &Corpus) -> Vec<SessionRecord> {
    corpus.sessions.iter().map(|s| s.to_record()).collect()
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let rc = resolve_config(&a.flags)?;
    let config = rc.train_config();
    if config.uses_graph() && a.data.graph.is_none() {
        bail!(Usage(format!(
            "variant {} needs a social graph; pass --graph",
            variant_name(&config)
        )));
    }
    let mut m = RunManifest::new("train", config.seed, &ConfigSnapshot { variant: variant_name(&config), run: &rc })?;
    let corpus = load_corpus(&a.data, rc.data.min_token_freq, &mut m)?;
    let (train_set, test_set) = data::split_corpus(&corpus, config.train_fraction, config.seed)?;
    let model = m.timed("train", || trainer::train(&train_set, &config))?;

    prepare_out_dir(&a.out_dir)?;
    let ckpt = a.out_dir.join("model.json");
    checkpoint::save(&ckpt, &model)?;
    let losses = a.out_dir.join("losses.csv");
    std::fs::write(&losses, losses_csv(&model.epochs)).with_context(|| format!("writing {}", losses.display()))?;
    let train_path = a.out_dir.join("train.jsonl");
    let test_path = a.out_dir.join("test.jsonl");
    data::write_session_records(&train_path, &split_records(&train_set))?;
    data::write_session_records(&test_path, &split_records(&test_set))?;
    for p in [&ckpt, &losses, &train_path, &test_path] {
        m.output(p);
    }
    m.write(&a.out_dir)?;
    let last = model.epochs.last().map(|e| e.mean.total_j).unwrap_or(f64::NAN);
    println!(
        "{}: trained on {} sessions, held out {}, final epoch J {last:.6e}; checkpoint {}",
        variant_name(&config),
        train_set.len(),
        test_set.len(),
        ckpt.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluationOutput<'a> {
    tau: f64,
    cutoff: f64,
    n_sessions: usize,
    flagged: usize,
    report: &'a MetricsReport,
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    require_file(&a.sessions)?;
    let model = checkpoint::load(&a.checkpoint)?;
    let tau = a.tau.unwrap_or(model.config.tau);
    if !(tau > 0.0 && tau < 1.0) {
        bail!(Usage(format!("tau must be in (0, 1), got {tau}")));
    }
    let mut m = RunManifest::new("evaluate", model.config.seed, &serde_json::json!({ "tau": tau }))?;
    m.input(&a.checkpoint)?;
    m.input(&a.sessions)?;
    let (test, _) = data::ingest_with_vocabulary(&a.sessions, None, model.vocabulary())?;
    let (scored, report) = m.timed("score", || eval::evaluate_model(&model, &test, tau))?;

    prepare_out_dir(&a.out_dir)?;
    let out = EvaluationOutput {
        tau,
        cutoff: scored.cutoff,
        n_sessions: scored.energies.len(),
        flagged: scored.flagged(),
        report: &report,
    };
    let metrics = a.out_dir.join("metrics.json");
    write_json(&metrics, &out)?;
    let scores = a.out_dir.join("scores.csv");
    let mut csv = String::from("session_id,energy,prediction\n");
    for ((id, e), p) in scored.session_ids.iter().zip(&scored.energies).zip(&scored.predictions) {
        let p = if p.is_bullying() { "bullying" } else { "non-bullying" };
        writeln!(csv, "{id},{e:e},{p}").expect("writing to a string");
    }
    std::fs::write(&scores, csv).with_context(|| format!("writing {}", scores.display()))?;
    m.output(&metrics);
    m.output(&scores);
    m.write(&a.out_dir)?;
    print!("{}", report.table());
    println!("flagged {}/{} at tau {tau}", out.flagged, out.n_sessions);
    Ok(())
}

fn integral(param: SweepParam, v: f64) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        bail!(Usage(format!("{param:?} takes whole numbers, got {v}")));
    }
    Ok(v as usize)
}

fn with_param(base: &TrainConfig, param: SweepParam, v: f64) -> Result<TrainConfig> {
    let mut c = base.clone();
    match param {
        SweepParam::Lambda1 => c.lambda1 = v,
        SweepParam::Lambda2 => c.lambda2 = v,
        SweepParam::Lambda3 => c.lambda3 = v,
        SweepParam::Tau => c.tau = v,
        SweepParam::LearningRate => c.learning_rate = v,
        SweepParam::K => c.k = integral(param, v)?,
        SweepParam::Epochs => c.epochs = integral(param, v)?,
        SweepParam::BatchSize => c.batch_size = integral(param, v)?,
    }
    c.validate()?;
    Ok(c)
}

#[derive(Serialize)]
struct SweepPoint {
    value: f64,
    report: MetricsReport,
    kmeans: MetricsReport,
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let rc = resolve_config(&a.flags)?;
    let base = rc.train_config();
    if base.uses_graph() && a.data.graph.is_none() {
        bail!(Usage(format!("variant {} needs a social graph; pass --graph", variant_name(&base))));
    }
    if a.runs == 0 {
        bail!(Usage("--runs must be at least 1".into()));
    }
    let configs: Vec<TrainConfig> = a.values.iter().map(|&v| with_param(&base, a.param, v)).collect::<Result<_>>()?;
    let snapshot = serde_json::json!({
        "variant": variant_name(&base),
        "base": rc,
        "param": a.param,
        "values": a.values,
        "runs": a.runs,
    });
    let mut m = RunManifest::new("sweep", base.seed, &snapshot)?;
    let corpus = load_corpus(&a.data, rc.data.min_token_freq, &mut m)?;
    let mut points = vec![];
    for (&value, config) in a.values.iter().zip(&configs) {
        let r = m.timed(&format!("value {value}"), || eval::repeated_runs(&corpus, config, a.runs))?;
        println!(
            "{:?}={value}: auroc {:.4} ± {:.4}  f1 {:.4} ± {:.4}  k-means auroc {:.4}",
            a.param, r.report.mean.auroc, r.report.std.auroc, r.report.mean.f1, r.report.std.f1, r.baseline.mean.auroc
        );
        points.push(SweepPoint {
            value,
            report: r.report,
            kmeans: r.baseline,
        });
    }
    prepare_out_dir(&a.out_dir)?;
    let path = a.out_dir.join("sweep.json");
    write_json(&path, &points)?;
    m.output(&path);
    m.write(&a.out_dir)?;
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    require_file(&a.sessions)?;
    let model = checkpoint::load(&a.checkpoint)?;
    let mut m = RunManifest::new("export-embeddings", model.config.seed, &serde_json::json!({}))?;
    m.input(&a.checkpoint)?;
    m.input(&a.sessions)?;
    let (corpus, _) = data::ingest_with_vocabulary(&a.sessions, None, model.vocabulary())?;
    let (ids, labels, reps) = m.timed("encode", || eval::session_representations(&model, &corpus))?;
    prepare_out_dir(&a.out_dir)?;
    let path = a.out_dir.join("embeddings.csv");
    eval::export_embeddings(&path, &ids, &labels, &reps)?;
    m.output(&path);
    m.write(&a.out_dir)?;
    println!("wrote {} × {} embeddings to {}", reps.nrows(), reps.ncols(), path.display());
    Ok(())
}
