//! Command-line pipelines: generation, splitting, training, evaluation,
//! analysis, bias auditing, the dot-image experiment, and named end-to-end
//! reproductions.
//!
//! Configuration comes from flags, optionally backed by a plain-text
//! `key = value` file passed with `--config`; flags win on conflict. When
//! `--out` is omitted, artifacts land under the directory named by the
//! `QUANTSCENE_OUT` environment variable (default `runs`).

use crate::dotworld::{generate_dot_corpus, load_dot_corpus, save_dot_corpus, DotCnn, DotImageConfig, DotNetConfig};
use crate::models::{
    build_scene_model, load_model, save_model, Architecture, Model, ModelSpec, SceneDims,
};
use crate::splits::{load_split, save_split, split, verify, Setting, SplitSpec};
use crate::train::{
    dot_items, evaluate, report, scene_items, train, EvalReport, TrainConfig, TrainItem,
};
use crate::world::{audit_bias, generate_corpus, load_corpus, save_corpus, Catalog, GenConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "quantscene",
    version,
    about = "Synthetic quantifier scenarios, classifiers, and analyses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a balanced scenario corpus.
    Generate(GenerateArgs),
    /// Partition a corpus into train/val/test under one of the four settings.
    Split(SplitArgs),
    /// Train a classifier on a split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split partition.
    Eval(EvalArgs),
    /// Re-run one analysis of a checkpoint: ratio bins, distractors, or confusion.
    Analyze(AnalyzeArgs),
    /// Audit per-query label bias of a corpus.
    Audit(AuditArgs),
    /// Generate a balanced dot-image corpus.
    Dotsim(DotsimArgs),
    /// Run a named end-to-end experiment and write a manifest.
    Repro(ReproArgs),
}

/// Entry point behind the binary; returns the process exit status.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Split(args) => cmd_split(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Dotsim(args) => cmd_dotsim(args),
        Command::Repro(args) => cmd_repro(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

// ── configuration plumbing ──────────────────────────────────────────────

/// `key = value` lines, `#` comments. Flags override these values.
struct Overlay {
    map: BTreeMap<String, String>,
}

impl Overlay {
    fn load(path: Option<&PathBuf>) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("config {}: {e}", path.display()))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| format!("config line {}: expected key = value", i + 1))?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self { map })
    }

    fn get<T: FromStr + Copy>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.map.get(key) {
            Some(raw) => raw.parse().map_err(|e| format!("config key {key}: {e}")),
            None => Ok(default),
        }
    }
}

fn default_out(sub: &str) -> PathBuf {
    let base = std::env::var("QUANTSCENE_OUT").unwrap_or_else(|_| "runs".into());
    Path::new(&base).join(sub)
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

// ── generate ────────────────────────────────────────────────────────────

#[derive(Args)]
struct GenerateArgs {
    /// Objects in the synthetic catalog.
    #[arg(long)]
    objects: Option<usize>,
    /// Properties in the synthetic catalog.
    #[arg(long)]
    properties: Option<usize>,
    /// Datapoints per quantifier label.
    #[arg(long)]
    per_quantifier: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Instance noise level.
    #[arg(long)]
    sigma: Option<f64>,
    /// Slots per scenario.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_generate(args: GenerateArgs) -> CliResult {
    let overlay = Overlay::load(args.config.as_ref())?;
    let objects = overlay.get("objects", args.objects, 160)?;
    let properties = overlay.get("properties", args.properties, 24)?;
    let per_quantifier = overlay.get("per-quantifier", args.per_quantifier, 2000)?;
    let seed = overlay.get("seed", args.seed, 0)?;
    let config = GenConfig {
        slots: overlay.get("slots", args.slots, 16)?,
        dim: overlay.get("dim", args.dim, 32)?,
        sigma: overlay.get("sigma", args.sigma, 0.1)?,
        min_restrictor: 6,
    };
    let out = args.out.unwrap_or_else(|| default_out("corpus"));

    let catalog = Catalog::synthetic(objects, properties, seed)?;
    let corpus = generate_corpus(per_quantifier, &catalog, &config, seed)?;
    if corpus.space.crowded {
        eprintln!(
            "warning: {} concepts in {} dimensions leaves directions far from orthogonal",
            objects + properties,
            config.dim
        );
    }
    save_corpus(&corpus, &out)?;
    println!(
        "wrote {} datapoints ({} per label) to {}",
        corpus.datapoints.len(),
        per_quantifier,
        out.display()
    );
    Ok(())
}

// ── split ───────────────────────────────────────────────────────────────

#[derive(Args)]
struct SplitArgs {
    /// Corpus directory (scene or dot).
    #[arg(long)]
    corpus: PathBuf,
    /// unc | unsobj | unsprop | unsque.
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    val_frac: Option<f64>,
    #[arg(long)]
    test_frac: Option<f64>,
    /// Also drop training scenarios containing a held-out object anywhere.
    #[arg(long)]
    exclude_heldout_distractors: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn is_dot_corpus(dir: &Path) -> bool {
    dir.join(crate::dotworld::DOT_INDEX_FILE).exists()
}

fn cmd_split(args: SplitArgs) -> CliResult {
    let overlay = Overlay::load(args.config.as_ref())?;
    let setting: Setting = match &args.setting {
        Some(s) => s.parse()?,
        None => overlay
            .map
            .get("setting")
            .map(|s| s.as_str())
            .unwrap_or("unc")
            .parse()?,
    };
    let spec = SplitSpec {
        setting,
        fractions: (
            overlay.get("train-frac", args.train_frac, 0.7)?,
            overlay.get("val-frac", args.val_frac, 0.15)?,
            overlay.get("test-frac", args.test_frac, 0.15)?,
        ),
        seed: overlay.get("seed", args.seed, 0)?,
        exclude_heldout_distractors: args.exclude_heldout_distractors,
    };
    let out = args.out.unwrap_or_else(|| default_out("split"));

    let records = if is_dot_corpus(&args.corpus) {
        if spec.setting != Setting::Unc {
            return Err("dot corpora only support the unc setting".into());
        }
        let corpus = load_dot_corpus(&args.corpus)?;
        corpus
            .records
            .iter()
            .map(|r| crate::splits::SplitRecord {
                id: r.id,
                label: r.label,
                query: crate::world::Query { object: 0, property: 0 },
                scenario_key: r.id,
                slot_objects: Vec::new(),
            })
            .collect()
    } else {
        load_corpus(&args.corpus)?.split_records()
    };
    let result = split(&records, &spec)?;
    verify(&records, &result, &spec)?;
    save_split(&out, &result, &spec, Some(&args.corpus))?;
    println!(
        "{} split: {} train / {} val / {} test -> {}",
        spec.setting,
        result.train.len(),
        result.val.len(),
        result.test.len(),
        out.display()
    );
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────────

#[derive(Args)]
struct TrainArgs {
    /// bow | cnn-bow | lstm | cnn-lstm | san | qmn | qsan | dot-cnn.
    #[arg(long)]
    arch: String,
    /// Split directory produced by `split`.
    #[arg(long)]
    split: PathBuf,
    /// Corpus override; defaults to the split manifest's corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Optimization seed (shuffling).
    #[arg(long)]
    train_seed: Option<u64>,
    /// Parameter initialization seed.
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    d_embed: Option<usize>,
    #[arg(long)]
    d_hidden: Option<usize>,
    #[arg(long)]
    d_mem: Option<usize>,
    #[arg(long)]
    stacks: Option<usize>,
    /// Variant switch: softmax over the second similarity vector.
    #[arg(long)]
    qmn_softmax_s2: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

struct SplitData {
    train: Vec<TrainItem>,
    val: Vec<TrainItem>,
    test: Vec<TrainItem>,
    scene_dims: Option<SceneDims>,
    corpus_path: PathBuf,
}

fn load_split_data(split_dir: &Path, corpus_override: Option<&PathBuf>) -> Result<SplitData, Box<dyn std::error::Error>> {
    let (result, manifest) = load_split(split_dir)?;
    let corpus_path = corpus_override
        .cloned()
        .or_else(|| manifest.corpus.as_ref().map(PathBuf::from))
        .ok_or("split manifest has no corpus path; pass --corpus")?;
    if is_dot_corpus(&corpus_path) {
        let corpus = load_dot_corpus(&corpus_path)?;
        Ok(SplitData {
            train: dot_items(&corpus, &result.train)?,
            val: dot_items(&corpus, &result.val)?,
            test: dot_items(&corpus, &result.test)?,
            scene_dims: None,
            corpus_path,
        })
    } else {
        let corpus = load_corpus(&corpus_path)?;
        Ok(SplitData {
            train: scene_items(&corpus, &result.train)?,
            val: scene_items(&corpus, &result.val)?,
            test: scene_items(&corpus, &result.test)?,
            scene_dims: Some(SceneDims {
                vocab: corpus.vocab_size(),
                slots: corpus.config.slots,
                dim: corpus.config.dim,
            }),
            corpus_path,
        })
    }
}

#[derive(Serialize)]
struct TrainSummary {
    arch: String,
    model_spec: ModelSpec,
    train_config: TrainConfig,
    split: String,
    corpus: String,
    best_epoch: usize,
    best_val_accuracy: f64,
    epochs_run: usize,
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let overlay = Overlay::load(args.config.as_ref())?;
    let arch: Architecture = args.arch.parse()?;
    let model_spec = ModelSpec {
        arch,
        d_embed: overlay.get("d-embed", args.d_embed, 32)?,
        d_hidden: overlay.get("d-hidden", args.d_hidden, 32)?,
        d_mem: overlay.get("d-mem", args.d_mem, 32)?,
        stacks: overlay.get("stacks", args.stacks, 2)?,
        seed: overlay.get("model-seed", args.model_seed, 0)?,
        qmn_softmax_s2: args.qmn_softmax_s2,
    };
    let train_config = TrainConfig {
        learning_rate: overlay.get("lr", args.lr, default_learning_rate(arch))?,
        batch_size: overlay.get("batch", args.batch, 32)?,
        max_epochs: overlay.get("epochs", args.epochs, default_epochs(arch))?,
        patience: overlay.get("patience", args.patience, 10)?,
        seed: overlay.get("train-seed", args.train_seed, 0)?,
    };
    let out = args.out.unwrap_or_else(|| default_out(&format!("train-{arch}")));
    std::fs::create_dir_all(&out)?;

    let data = load_split_data(&args.split, args.corpus.as_ref())?;
    let mut model: Box<dyn Model> = if arch == Architecture::DotCnn {
        if data.scene_dims.is_some() {
            return Err("dot-cnn trains on a dot corpus, not a scene corpus".into());
        }
        let first = data.train.first().ok_or("empty training set")?;
        let image = match &first.input {
            crate::models::ModelInput::Image(i) => i,
            _ => return Err("dot corpus did not produce image inputs".into()),
        };
        let net = DotNetConfig { height: image.height, width: image.width, ..DotNetConfig::default() };
        Box::new(DotCnn::new(&model_spec, &net)?)
    } else {
        let dims = data.scene_dims.ok_or("scene models need a scene corpus")?;
        build_scene_model(&model_spec, &dims)?
    };

    println!(
        "training {arch} on {} train / {} val datapoints (lr {}, batch {}, ≤{} epochs)",
        data.train.len(),
        data.val.len(),
        train_config.learning_rate,
        train_config.batch_size,
        train_config.max_epochs
    );
    let outcome = train(model.as_mut(), &data.train, &data.val, &train_config)?;
    save_model(model.as_ref(), &out.join("checkpoint.qtns"))?;

    let summary = TrainSummary {
        arch: arch.to_string(),
        model_spec,
        train_config,
        split: args.split.display().to_string(),
        corpus: data.corpus_path.display().to_string(),
        best_epoch: outcome.best_epoch,
        best_val_accuracy: outcome.best_val_accuracy,
        epochs_run: outcome.history.len(),
    };
    report::write_json(&out.join("history.json"), &serde_json::json!({
        "summary": &summary,
        "history": &outcome.history,
    }))?;
    report::write_history_tsv(
        &out.join("history.tsv"),
        &outcome.history,
        &provenance_lines(&summary),
    )?;
    println!(
        "best validation accuracy {:.4} at epoch {} ({} epochs run); checkpoint -> {}",
        outcome.best_val_accuracy,
        outcome.best_epoch,
        outcome.history.len(),
        out.join("checkpoint.qtns").display()
    );
    Ok(())
}

/// Per-architecture defaults found to train reliably at desk scale; all
/// overridable on the command line.
fn default_learning_rate(arch: Architecture) -> f64 {
    match arch {
        Architecture::DotCnn => 0.5,
        Architecture::San | Architecture::Qsan => 0.3,
        _ => 0.05,
    }
}

fn default_epochs(arch: Architecture) -> usize {
    match arch {
        Architecture::DotCnn => 70,
        Architecture::San | Architecture::Qsan => 80,
        _ => 50,
    }
}

fn provenance_lines(summary: &TrainSummary) -> Vec<String> {
    vec![
        format!("arch = {}", summary.arch),
        format!("model_seed = {}", summary.model_spec.seed),
        format!("train_seed = {}", summary.train_config.seed),
        format!("lr = {}", summary.train_config.learning_rate),
        format!("split = {}", summary.split),
        format!("corpus = {}", summary.corpus),
    ]
}

// ── eval / analyze ──────────────────────────────────────────────────────

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Which partition to score.
    #[arg(long, default_value = "test")]
    partition: String,
    /// Ratio bins per quantifier.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalSummary {
    checkpoint: String,
    checkpoint_sha256: String,
    split: String,
    partition: String,
    arch: String,
    model_seed: u64,
    bins: usize,
}

fn eval_items<'a>(data: &'a SplitData, partition: &str) -> Result<&'a [TrainItem], String> {
    match partition {
        "train" => Ok(&data.train),
        "val" => Ok(&data.val),
        "test" => Ok(&data.test),
        other => Err(format!("unknown partition {other}; use train|val|test")),
    }
}

fn run_eval(
    checkpoint: &Path,
    split_dir: &Path,
    corpus: Option<&PathBuf>,
    partition: &str,
    bins: usize,
) -> Result<(EvalReport, EvalSummary), Box<dyn std::error::Error>> {
    let model = load_model(checkpoint)?;
    let data = load_split_data(split_dir, corpus)?;
    let items = eval_items(&data, partition)?;
    let report = evaluate(model.as_ref(), items, bins)?;
    let summary = EvalSummary {
        checkpoint: checkpoint.display().to_string(),
        checkpoint_sha256: sha256_file(checkpoint)?,
        split: split_dir.display().to_string(),
        partition: partition.to_string(),
        arch: model.spec().arch.to_string(),
        model_seed: model.spec().seed,
        bins,
    };
    Ok((report, summary))
}

fn eval_provenance(summary: &EvalSummary) -> Vec<String> {
    vec![
        format!("arch = {}", summary.arch),
        format!("checkpoint = {}", summary.checkpoint),
        format!("checkpoint_sha256 = {}", summary.checkpoint_sha256),
        format!("split = {}", summary.split),
        format!("partition = {}", summary.partition),
    ]
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let overlay = Overlay::load(args.config.as_ref())?;
    let bins = overlay.get("bins", args.bins, 3)?;
    let out = args.out.unwrap_or_else(|| default_out("eval"));
    std::fs::create_dir_all(&out)?;
    let (eval_report, summary) =
        run_eval(&args.checkpoint, &args.split, args.corpus.as_ref(), &args.partition, bins)?;
    let lines = eval_provenance(&summary);
    report::write_json(&out.join("report.json"), &serde_json::json!({
        "summary": &summary,
        "report": &eval_report,
    }))?;
    report::write_accuracy_tsv(&out.join("accuracy.tsv"), &eval_report, &lines)?;
    report::write_confusion_tsv(&out.join("confusion.tsv"), &eval_report, &lines)?;
    report::write_adjacency_tsv(&out.join("adjacency.tsv"), &eval_report, &lines)?;
    report::write_ratio_bins_tsv(&out.join("ratio_bins.tsv"), &eval_report, &lines)?;
    report::write_distractor_tsv(&out.join("distractors.tsv"), &eval_report, &lines)?;
    println!(
        "{} on {}/{}: accuracy {:.4} over {} datapoints -> {}",
        summary.arch,
        summary.split,
        summary.partition,
        eval_report.overall_accuracy,
        eval_report.total,
        out.display()
    );
    for stats in &eval_report.per_label {
        println!("  {:>4}: {:.4} ({}/{})", stats.label, stats.accuracy, stats.correct, stats.count);
    }
    Ok(())
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// ratio | distractor | confusion.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value = "test")]
    partition: String,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_analyze(args: AnalyzeArgs) -> CliResult {
    let overlay = Overlay::load(args.config.as_ref())?;
    let bins = overlay.get("bins", args.bins, 3)?;
    let out = args.out.unwrap_or_else(|| default_out("analyze"));
    std::fs::create_dir_all(&out)?;
    let (eval_report, summary) =
        run_eval(&args.checkpoint, &args.split, args.corpus.as_ref(), &args.partition, bins)?;
    let lines = eval_provenance(&summary);
    match args.kind.as_str() {
        "ratio" => {
            report::write_ratio_bins_tsv(&out.join("ratio_bins.tsv"), &eval_report, &lines)?;
            for label_bins in &eval_report.ratio_bins {
                for bin in &label_bins.bins {
                    println!(
                        "{} [{:.3}, {:.3}]: {:.4} ({}/{})",
                        label_bins.label, bin.lo, bin.hi, bin.accuracy, bin.correct, bin.cases
                    );
                }
            }
        }
        "distractor" => {
            report::write_distractor_tsv(&out.join("distractors.tsv"), &eval_report, &lines)?;
            for row in &eval_report.distractors {
                println!(
                    "{} distractors with scope: {:.4} ({}/{})",
                    row.cardinality, row.accuracy, row.correct, row.cases
                );
            }
        }
        "confusion" => {
            report::write_confusion_tsv(&out.join("confusion.tsv"), &eval_report, &lines)?;
            report::write_adjacency_tsv(&out.join("adjacency.tsv"), &eval_report, &lines)?;
            println!("target\\predicted\tno\tfew\tsome\tmost\tall");
            for stats in &eval_report.per_label {
                let row = eval_report.confusion[stats.label.ordinal()];
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    stats.label, row[0], row[1], row[2], row[3], row[4]
                );
            }
        }
        other => return Err(format!("unknown kind {other}; use ratio|distractor|confusion").into()),
    }
    Ok(())
}

// ── audit ───────────────────────────────────────────────────────────────

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_audit(args: AuditArgs) -> CliResult {
    let corpus = load_corpus(&args.corpus)?;
    let bias = audit_bias(corpus.records.iter().map(|r| (r.query, r.label)))?;
    let out = args.out.unwrap_or_else(|| default_out("audit"));
    std::fs::create_dir_all(&out)?;
    report::write_json(&out.join("bias.json"), &serde_json::json!({
        "corpus": args.corpus.display().to_string(),
        "seed": corpus.seed,
        "queries": bias.per_query.len(),
        "per_label": &bias.per_label,
        "per_query": &bias.per_query,
    }))?;
    println!(
        "{} queries over {} datapoints; max per-query ratio {:.3}",
        bias.per_query.len(),
        corpus.records.len(),
        bias.max_ratio()
    );
    for (label, summary) in crate::quantifier::ALL_LABELS.iter().zip(&bias.per_label) {
        println!(
            "  {:>4}: mean {:.3} min {:.3} q1 {:.3} median {:.3} q3 {:.3} max {:.3}",
            label,
            summary.mean,
            summary.min,
            summary.quartiles[0],
            summary.quartiles[1],
            summary.quartiles[2],
            summary.max
        );
    }
    println!("report -> {}", out.join("bias.json").display());
    Ok(())
}

// ── dotsim ──────────────────────────────────────────────────────────────

#[derive(Args)]
struct DotsimArgs {
    /// Images per quantifier label.
    #[arg(long)]
    per_quantifier: Option<usize>,
    /// Frame edge length in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Dot radius in pixels.
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_dotsim(args: DotsimArgs) -> CliResult {
    let overlay = Overlay::load(args.config.as_ref())?;
    let per_quantifier = overlay.get("per-quantifier", args.per_quantifier, 2000)?;
    let size = overlay.get("size", args.size, 64)?;
    let config = DotImageConfig {
        height: size,
        width: size,
        radius: overlay.get("radius", args.radius, 3)?,
    };
    let seed = overlay.get("seed", args.seed, 0)?;
    let out = args.out.unwrap_or_else(|| default_out("dots"));
    let records = generate_dot_corpus(per_quantifier, &config, seed)?;
    save_dot_corpus(&records, &config, per_quantifier, seed, &out)?;
    println!(
        "wrote {} dot images ({} per label, {}×{}, radius {}) to {}",
        records.len(),
        per_quantifier,
        size,
        size,
        config.radius,
        out.display()
    );
    Ok(())
}

// ── repro ───────────────────────────────────────────────────────────────

#[derive(Args)]
struct ReproArgs {
    /// dotworld, or unc-<arch> (e.g. unc-qsan).
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale down the corpus for a quick run.
    #[arg(long)]
    per_quantifier: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Manifest {
    experiment: String,
    seed: u64,
    stages: Vec<serde_json::Value>,
    artifacts: BTreeMap<String, String>,
    test_accuracy: f64,
}

fn cmd_repro(args: ReproArgs) -> CliResult {
    let name = args.name.clone();
    let out = args.out.clone().unwrap_or_else(|| default_out(&format!("repro-{name}")));
    std::fs::create_dir_all(&out)?;
    let seed = args.seed.unwrap_or(0);

    let (corpus_dir, arch) = if name == "dotworld" {
        let per_quantifier = args.per_quantifier.unwrap_or(2000);
        let dots = out.join("corpus");
        cmd_dotsim(DotsimArgs {
            per_quantifier: Some(per_quantifier),
            size: None,
            radius: None,
            seed: Some(seed),
            out: Some(dots.clone()),
            config: None,
        })?;
        (dots, Architecture::DotCnn)
    } else if let Some(arch_name) = name.strip_prefix("unc-") {
        let arch: Architecture = arch_name.parse()?;
        if arch == Architecture::DotCnn {
            return Err("use `repro dotworld` for the dot experiment".into());
        }
        let per_quantifier = args.per_quantifier.unwrap_or(2000);
        let corpus = out.join("corpus");
        cmd_generate(GenerateArgs {
            objects: None,
            properties: None,
            per_quantifier: Some(per_quantifier),
            dim: None,
            sigma: None,
            slots: None,
            seed: Some(seed),
            out: Some(corpus.clone()),
            config: None,
        })?;
        cmd_audit(AuditArgs {
            corpus: corpus.clone(),
            out: Some(out.join("audit")),
            config: None,
        })?;
        (corpus, arch)
    } else {
        return Err(format!(
            "unknown experiment {name}; use dotworld or unc-<arch>"
        )
        .into())
    };

    // Paper-style partition sizes: 70% train, 10% val, 20% test.
    let split_dir = out.join("split");
    cmd_split(SplitArgs {
        corpus: corpus_dir.clone(),
        setting: Some("unc".into()),
        seed: Some(seed),
        train_frac: Some(0.7),
        val_frac: Some(0.1),
        test_frac: Some(0.2),
        exclude_heldout_distractors: false,
        out: Some(split_dir.clone()),
        config: None,
    })?;

    let train_dir = out.join("train");
    cmd_train(TrainArgs {
        arch: arch.to_string(),
        split: split_dir.clone(),
        corpus: None,
        lr: None,
        batch: None,
        epochs: args.epochs,
        patience: None,
        train_seed: Some(seed),
        model_seed: Some(seed),
        d_embed: None,
        d_hidden: None,
        d_mem: None,
        stacks: None,
        qmn_softmax_s2: false,
        out: Some(train_dir.clone()),
        config: None,
    })?;

    let eval_dir = out.join("eval");
    let checkpoint = train_dir.join("checkpoint.qtns");
    cmd_eval(EvalArgs {
        checkpoint: checkpoint.clone(),
        split: split_dir.clone(),
        corpus: None,
        partition: "test".into(),
        bins: None,
        out: Some(eval_dir.clone()),
        config: None,
    })?;

    // Manifest: configs, seeds, and digests of every artifact.
    let mut artifacts = BTreeMap::new();
    for dir in [&corpus_dir, &split_dir, &train_dir, &eval_dir] {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_file() {
                artifacts.insert(
                    path.strip_prefix(&out).unwrap_or(&path).display().to_string(),
                    sha256_file(&path)?,
                );
            }
        }
    }
    let report_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("report.json"))?)?;
    let test_accuracy = report_json["report"]["overall_accuracy"].as_f64().unwrap_or(0.0);
    let history_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(train_dir.join("history.json"))?)?;
    let manifest = Manifest {
        experiment: name.clone(),
        seed,
        stages: vec![
            serde_json::json!({"stage": "corpus", "path": corpus_dir.display().to_string()}),
            serde_json::json!({"stage": "split", "path": split_dir.display().to_string()}),
            serde_json::json!({"stage": "train", "summary": history_json["summary"]}),
            serde_json::json!({"stage": "eval", "accuracy": test_accuracy}),
        ],
        artifacts,
        test_accuracy,
    };
    report::write_json(&out.join("manifest.json"), &manifest)?;
    println!("experiment {name}: test accuracy {test_accuracy:.4}; manifest -> {}", out.join("manifest.json").display());
    Ok(())
}
