//! `sbcnn`: corpus ingestion, block inspection, training, evaluation and
//! the children-ablation study behind one binary.
//!
//! Exit codes: 0 success, 2 usage, 3 data/input problems, 4 numeric
//! failures (divergence, non-finite values, failed gradient check).

mod config;
mod runs;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use sbcnn_core::blocks::detect;
use sbcnn_core::corpus::{
    align_corpus, dataset_stats, load_embeddings, parse_conllu, parse_manifest, parse_raw, Dataset,
    Dialect, EmbeddingTable, SentenceInstance, Split, Vocab,
};
use sbcnn_core::model::{
    load_checkpoint, model_gradient_check, save_checkpoint, InstanceFeatures, ModelConfig,
};
use sbcnn_core::train::{
    collapse_directions, compute_metrics, confusion_csv, display_order, ensemble_probs,
    is_unscored_label, train, Confusion, Metrics,
};
use sbcnn_core::{Error, Result};

use config::RunConfig;
use runs::{create_run_dir, file_digest, resolve_input, write_manifest, RunManifest};

#[derive(Parser)]
#[command(name = "sbcnn", version, about = "Structural-block CNN relation extraction")]
struct Cli {
    /// Cap on worker threads for featurization (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align raw relation files with CoNLL-U parses into a dataset file.
    Ingest(IngestArgs),
    /// Print corpus statistics as JSON.
    Stats(StatsArgs),
    /// Emit structural blocks as JSON-lines.
    Blocks(BlocksArgs),
    /// Train a model and write checkpoint plus history.
    Train(TrainArgs),
    /// Evaluate one checkpoint or a probability-averaging ensemble.
    Eval(EvalArgs),
    /// Paired with/without-children training comparison.
    Ablation(AblationArgs),
    /// Check analytic gradients on a miniature model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// semeval | kbp37
    #[arg(long)]
    dialect: Dialect,
    #[arg(long)]
    train_raw: PathBuf,
    #[arg(long)]
    train_conllu: PathBuf,
    #[arg(long)]
    test_raw: PathBuf,
    #[arg(long)]
    test_conllu: PathBuf,
    /// JSON-lines {id, conllu_sentence_index} sidecar for the train split.
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    /// Read language-specific XPOS tags instead of UPOS.
    #[arg(long)]
    xpos: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    dataset: PathBuf,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BlocksArgs {
    dataset: PathBuf,
    /// train | test
    #[arg(long, default_value = "train")]
    split: String,
    /// Drop the children term from the block definition.
    #[arg(long)]
    without_children: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable); wins over the file.
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Wins over both the file and --set.
    #[arg(long)]
    seed: Option<u64>,
    /// GloVe-format pretrained word vectors.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    dataset: PathBuf,
    /// One or more checkpoints; several form a probability-averaging ensemble.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    /// Score direction mistakes as correct (collapse X(e1,e2)/X(e2,e1)).
    #[arg(long)]
    ignore_direction: bool,
    /// Evaluate on the train split instead of test.
    #[arg(long)]
    on_train: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AblationArgs {
    dataset: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Maximum tolerated relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("sbcnn: --threads: {e}");
            std::process::exit(2);
        }
    }
    let result = match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Blocks(args) => cmd_blocks(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablation(args) => cmd_ablation(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    if let Err(e) = result {
        eprintln!("sbcnn: {e}");
        std::process::exit(e.exit_code());
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    eprintln!("sbcnn: {msg}");
    std::process::exit(2);
}

fn resolve_config(
    file: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
) -> RunConfig {
    match RunConfig::resolve(file, sets, seed) {
        Ok(cfg) => cfg,
        Err(e) => usage_error(e),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(&resolve_input(path))
}

fn load_split_embeddings(
    path: Option<&Path>,
    vocab: &Vocab,
    d_w: usize,
) -> Result<Option<EmbeddingTable>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let file = std::fs::File::open(resolve_input(p))?;
            let table = load_embeddings(std::io::BufReader::new(file), vocab, Some(d_w))?;
            eprintln!(
                "embeddings: coverage {:.1}% ({} exact, {} lowercase)",
                table.coverage * 100.0,
                table.exact_matches,
                table.lowercase_matches
            );
            Ok(Some(table))
        }
    }
}

fn featurize_parallel(
    instances: &[SentenceInstance],
    vocab: &Vocab,
    cfg: &ModelConfig,
) -> Result<Vec<InstanceFeatures>> {
    instances
        .par_iter()
        .map(|inst| sbcnn_core::model::build_features(inst, vocab, cfg))
        .collect()
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let paths: Vec<PathBuf> = [
        Some(&args.train_raw),
        Some(&args.train_conllu),
        Some(&args.test_raw),
        Some(&args.test_conllu),
        args.train_manifest.as_ref(),
        args.test_manifest.as_ref(),
    ]
    .into_iter()
    .flatten()
    .map(|p| resolve_input(p))
    .collect();
    let inputs = paths
        .iter()
        .map(|p| file_digest(p))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "ingest".into(),
        seed: 0,
        config: RunConfig::default(),
        inputs,
        artifacts: vec![args.out.display().to_string()],
    };
    std::fs::write(
        sidecar_manifest_path(&args.out),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    let open = |p: &Path| -> Result<std::io::BufReader<std::fs::File>> {
        Ok(std::io::BufReader::new(std::fs::File::open(p)?))
    };
    let ingest_split = |raw: &Path,
                        conllu: &Path,
                        manifest: Option<&PathBuf>,
                        split: Split|
     -> Result<Vec<SentenceInstance>> {
        let raws = parse_raw(open(raw)?, args.dialect)?;
        let parses = parse_conllu(open(conllu)?, args.xpos)?;
        let map = manifest
            .map(|p| parse_manifest(open(&resolve_input(p))?))
            .transpose()?;
        let (instances, skipped) = align_corpus(&raws, &parses, map.as_ref(), split);
        for (id, err) in &skipped {
            eprintln!("skipping instance {id}: {err}");
        }
        eprintln!(
            "{:?} {:?}: {} instances, {} skipped",
            args.dialect,
            split,
            instances.len(),
            skipped.len()
        );
        Ok(instances)
    };

    let train = ingest_split(&paths[0], &paths[1], args.train_manifest.as_ref(), Split::Train)?;
    let test = ingest_split(&paths[2], &paths[3], args.test_manifest.as_ref(), Split::Test)?;
    let dataset = Dataset::build(args.dialect, train, test)?;
    dataset.save(&args.out)?;
    println!(
        "wrote {} ({} train, {} test, {} labels, vocab digest {})",
        args.out.display(),
        dataset.train.len(),
        dataset.test.len(),
        dataset.vocab.labels.len(),
        &dataset.vocab.digest()[..12]
    );
    Ok(())
}

fn sidecar_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let mut all = dataset.train.clone();
    all.extend(dataset.test.iter().cloned());
    let stats = dataset_stats(&all);
    let json = serde_json::to_string_pretty(&stats)?;
    match args.out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_blocks(args: BlocksArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let instances = match args.split.as_str() {
        "train" => &dataset.train,
        "test" => &dataset.test,
        other => usage_error(format!("--split: expected train|test, got {other:?}")),
    };
    let include_children = !args.without_children;
    let variant = if include_children {
        "with_children"
    } else {
        "without_children"
    };
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for inst in instances {
        let block = detect(inst, &dataset.vocab, include_children)?;
        let name = |table: &sbcnn_core::corpus::StringTable, id: usize| {
            table.name(id).unwrap_or("?").to_string()
        };
        let row = serde_json::json!({
            "id": inst.id,
            "indices": block.indices,
            "forms": block
                .indices
                .iter()
                .map(|&i| inst.tokens[i - 1].form.clone())
                .collect::<Vec<_>>(),
            "roles": block
                .role_ids
                .iter()
                .map(|&r| name(&dataset.vocab.deprel, r))
                .collect::<Vec<_>>(),
            "pos": block
                .pos_ids
                .iter()
                .map(|&p| name(&dataset.vocab.pos, p))
                .collect::<Vec<_>>(),
            "variant": variant,
        });
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(args.config.as_deref(), &args.sets, args.seed);
    let dataset = load_dataset(&args.dataset)?;
    cfg.model.num_classes = dataset.vocab.labels.len();

    let run_dir = create_run_dir(&args.out_dir, cfg.model.seed)?;
    let mut inputs = vec![file_digest(&resolve_input(&args.dataset))?];
    if let Some(e) = &args.embeddings {
        inputs.push(file_digest(&resolve_input(e))?);
    }
    write_manifest(
        &run_dir,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "train".into(),
            seed: cfg.model.seed,
            config: cfg.clone(),
            inputs,
            artifacts: ["checkpoint.bin", "history.csv", "timing.csv"]
                .iter()
                .map(|a| run_dir.join(a).display().to_string())
                .collect(),
        },
    )?;

    let embeddings = load_split_embeddings(args.embeddings.as_deref(), &dataset.vocab, cfg.model.d_w)?;
    let train_feats = featurize_parallel(&dataset.train, &dataset.vocab, &cfg.model)?;
    let test_feats = featurize_parallel(&dataset.test, &dataset.vocab, &cfg.model)?;
    let scored: Vec<bool> = dataset
        .vocab
        .labels
        .items()
        .iter()
        .map(|l| !is_unscored_label(l))
        .collect();
    let outcome = train(
        &cfg.model,
        &cfg.train,
        &train_feats,
        &test_feats,
        dataset.vocab.words.len(),
        embeddings.as_ref(),
        &scored,
    )?;

    save_checkpoint(
        &outcome.params,
        &cfg.model,
        &dataset.vocab.digest(),
        &outcome.meta,
        &run_dir.join("checkpoint.bin"),
    )?;
    std::fs::write(run_dir.join("history.csv"), outcome.history.history_csv())?;
    std::fs::write(run_dir.join("timing.csv"), outcome.history.timing_csv())?;
    let last = outcome.history.rows.last().expect("at least one epoch");
    println!(
        "{}: {} epochs, final loss {:.4}, train acc {:.4}{}",
        run_dir.display(),
        outcome.meta.epochs,
        last.loss,
        last.train_acc,
        last.eval_f1
            .map(|f| format!(", eval macro-F1 {f:.4}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let digest = dataset.vocab.digest();
    let mut checkpoints = Vec::with_capacity(args.checkpoints.len());
    for path in &args.checkpoints {
        let ckpt = load_checkpoint(&resolve_input(path))?;
        if ckpt.vocab_digest != digest {
            return Err(Error::DigestMismatch(format!(
                "checkpoint {} was trained against a different vocabulary",
                path.display()
            )));
        }
        checkpoints.push(ckpt);
    }
    let cfg = checkpoints[0].config.clone();
    for (path, c) in args.checkpoints.iter().zip(&checkpoints) {
        if c.config != cfg {
            return Err(Error::Checkpoint(format!(
                "checkpoint {} disagrees on model configuration",
                path.display()
            )));
        }
    }

    let run_dir = create_run_dir(&args.out_dir, cfg.seed)?;
    let mut inputs = vec![file_digest(&resolve_input(&args.dataset))?];
    for p in &args.checkpoints {
        inputs.push(file_digest(&resolve_input(p))?);
    }
    write_manifest(
        &run_dir,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "eval".into(),
            seed: cfg.seed,
            config: RunConfig {
                model: cfg.clone(),
                train: Default::default(),
            },
            inputs,
            artifacts: ["metrics.json", "confusion.csv"]
                .iter()
                .map(|a| run_dir.join(a).display().to_string())
                .collect(),
        },
    )?;

    let split = if args.on_train {
        &dataset.train
    } else {
        &dataset.test
    };
    let feats = featurize_parallel(split, &dataset.vocab, &cfg)?;
    let models: Vec<&sbcnn_core::model::ModelParams> =
        checkpoints.iter().map(|c| &c.params).collect();
    let probs = ensemble_probs(&models, &feats)?;
    let labels = dataset.vocab.labels.items().to_vec();
    let confusion = Confusion::from_pairs(
        labels.len(),
        probs.iter().zip(&feats).map(|(p, f)| {
            let pred = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                .map(|(i, _)| i)
                .unwrap_or(0);
            (f.label_id, pred)
        }),
    );

    let (metrics, csv): (Metrics, String) = if args.ignore_direction {
        let (collapsed, collapsed_labels) = collapse_directions(&confusion, &labels);
        let order = display_order(&collapsed_labels, dataset.dialect == Dialect::Kbp37);
        let csv = confusion_csv(&collapsed, &collapsed_labels, &order);
        (compute_metrics(collapsed, &collapsed_labels)?, csv)
    } else {
        let order = display_order(&labels, dataset.dialect == Dialect::Kbp37);
        let csv = confusion_csv(&confusion, &labels, &order);
        (compute_metrics(confusion, &labels)?, csv)
    };

    std::fs::write(
        run_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    std::fs::write(run_dir.join("confusion.csv"), csv)?;
    println!(
        "{}: macro-F1 {:.4}, accuracy {:.4} ({} models, {} instances{})",
        run_dir.display(),
        metrics.macro_f1,
        metrics.micro_accuracy,
        models.len(),
        feats.len(),
        if args.ignore_direction {
            ", direction-insensitive"
        } else {
            ""
        }
    );
    Ok(())
}

fn cmd_ablation(args: AblationArgs) -> Result<()> {
    let mut cfg = resolve_config(args.config.as_deref(), &args.sets, args.seed);
    let dataset = load_dataset(&args.dataset)?;
    cfg.model.num_classes = dataset.vocab.labels.len();

    let run_dir = create_run_dir(&args.out_dir, cfg.model.seed)?;
    let mut inputs = vec![file_digest(&resolve_input(&args.dataset))?];
    if let Some(e) = &args.embeddings {
        inputs.push(file_digest(&resolve_input(e))?);
    }
    write_manifest(
        &run_dir,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "ablation".into(),
            seed: cfg.model.seed,
            config: cfg.clone(),
            inputs,
            artifacts: vec![run_dir.join("ablation.json").display().to_string()],
        },
    )?;

    let embeddings = load_split_embeddings(args.embeddings.as_deref(), &dataset.vocab, cfg.model.d_w)?;
    let report = sbcnn_core::train::ablation(&cfg.model, &cfg.train, &dataset, embeddings.as_ref())?;
    std::fs::write(
        run_dir.join("ablation.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!(
        "{}: with children {:.4}, without {:.4}, delta {:+.4}",
        run_dir.display(),
        report.with_children.macro_f1,
        report.without_children.macro_f1,
        report.macro_f1_delta
    );
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let mut cfg = resolve_config(args.config.as_deref(), &args.sets, None);
    if args.config.is_none() && args.sets.is_empty() {
        // miniature model keeps the central-difference sweep fast
        cfg.model = ModelConfig {
            d_w: 4,
            kernel_widths: vec![2, 3],
            filters: 3,
            hidden_dim: 5,
            max_block_len: 10,
            max_entity_len: 4,
            ..ModelConfig::default()
        };
    }
    cfg.model.num_classes = 3;
    let corpus = sbcnn_core::synth::generate(cfg.model.seed, 6, 0, cfg.model.num_classes);
    let dataset = sbcnn_core::synth::build_dataset(&corpus)?;
    let feats = featurize_parallel(&dataset.train, &dataset.vocab, &cfg.model)?;
    let err = model_gradient_check(
        &cfg.model,
        &feats[..feats.len().min(4)],
        dataset.vocab.words.len(),
        1e-5,
        200,
        cfg.model.seed,
    )?;
    println!("max relative gradient error: {err:.3e} (tolerance {:.1e})", args.tolerance);
    if err > args.tolerance {
        return Err(Error::NonFinite(format!(
            "gradient check: relative error {err:.3e} exceeds tolerance {:.1e}",
            args.tolerance
        )));
    }
    Ok(())
}
