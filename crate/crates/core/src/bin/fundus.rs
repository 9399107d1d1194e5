use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use fundus::config::RunConfig;
use fundus::dataset::{
    class_distribution, load_images, scan_dataset, stratified_split, Ratios, SplitIndex,
    SplitManifest,
};
use fundus::evaluation::{compare_reports, confusion, ClassificationReport};
use fundus::figures;
use fundus::models::{
    build_baseline_cnn, build_transfer_model, default_cache_dir, fetch_pretrained, Model,
    ModelKind,
};
use fundus::synth;
use fundus::training::{load_best_model, predict, TrainConfig, TrainError, Trainer};

#[derive(Parser)]
#[command(
    name = "fundus",
    about = "Train and evaluate four-class eye-disease classifiers on fundus photographs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a folder-per-class corpus and write a deterministic stratified split
    Prepare(PrepareArgs),
    /// Train a model and write a run directory with checkpoints and curves
    Train(TrainArgs),
    /// Score a trained run on one partition of a split
    Evaluate(EvaluateArgs),
    /// Compare the reports of two evaluated runs side by side
    Compare(CompareArgs),
    /// Generate a procedural fixture corpus of fundus-like images
    Synth(SynthArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Corpus root (one subfolder per class)
    #[arg(long)]
    data: PathBuf,
    /// Output directory for split.json, distribution report, and skip list
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// train,test,val fractions
    #[arg(long, default_value = "0.7,0.2,0.1")]
    ratios: String,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration
    #[arg(long, conflicts_with = "resume")]
    config: Option<PathBuf>,
    /// Existing run directory to continue training
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Override [model] kind
    #[arg(long)]
    kind: Option<String>,
    /// Override [train] epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Override [train] seed
    #[arg(long)]
    seed: Option<u64>,
    /// Exact run directory (default: <output.dir>/<kind>-<seed>-<timestamp>)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run directory produced by `train`
    #[arg(long)]
    run: PathBuf,
    /// split.json produced by `prepare` (or by `train`)
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    partition: String,
    /// Relocated corpus root, if it moved since the split was made
    #[arg(long)]
    data_root: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    run_a: PathBuf,
    #[arg(long)]
    run_b: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25)]
    per_class: usize,
    #[arg(long, default_value_t = 512)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Anything the user can fix: bad paths, bad config, bad flags.
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }

    fn diverged(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 3,
        }
    }
}

macro_rules! input_err {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::input(e.to_string())
            }
        }
    )*};
}

input_err!(
    fundus::dataset::DatasetError,
    fundus::config::ConfigError,
    fundus::models::ModelError,
    fundus::models::FetchError,
    fundus::evaluation::EvalError,
    std::io::Error,
    serde_json::Error
);

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::diverged(e.to_string()),
            other => CliError::input(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(args) => prepare(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Compare(args) => compare(args),
        Command::Synth(args) => synth_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn parse_ratios(text: &str) -> Result<Ratios, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::input(format!(
            "--ratios expects train,test,val; got '{text}'"
        )));
    }
    let mut vals = [0f64; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("invalid ratio '{p}'")))?;
    }
    Ok(Ratios {
        train: vals[0],
        test: vals[1],
        val: vals[2],
    })
}

fn prepare(args: PrepareArgs) -> Result<(), CliError> {
    let ratios = parse_ratios(&args.ratios)?;
    let index = scan_dataset(&args.data)?;
    let split = stratified_split(&index, ratios, args.seed)?;
    std::fs::create_dir_all(&args.out)?;

    let manifest = SplitManifest::build(&index, &split);
    manifest.save(&args.out.join("split.json"))?;

    let dist = class_distribution(&index)?;
    std::fs::write(args.out.join("distribution.csv"), dist.to_csv())?;
    std::fs::write(
        args.out.join("distribution.svg"),
        figures::distribution_svg(&dist.class_names, &dist.counts, "class distribution"),
    )?;
    std::fs::write(args.out.join("skipped.txt"), index.skip_list())?;

    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "prepared {} images across {} classes: {} train / {} val / {} test",
        index.len(),
        index.num_classes(),
        split.train.len(),
        split.val.len(),
        split.test.len(),
    );
    println!("split manifest: {}", args.out.join("split.json").display());
    Ok(())
}

/// What `train` stores so `resume` and `evaluate` can find everything.
#[derive(serde::Serialize, serde::Deserialize)]
struct RunMeta {
    config: RunConfig,
    manifest_path: PathBuf,
}

fn build_model(cfg: &RunConfig, seed: u64) -> Result<Model, CliError> {
    let side = cfg.data.target_size;
    match cfg.model.kind {
        ModelKind::Baseline => {
            let spec = build_baseline_cnn(side, 4)?;
            Ok(Model::from_spec(spec, seed))
        }
        ModelKind::Transfer => {
            let policy = cfg.model.freeze_policy().map_err(CliError::input)?;
            let bundle = fetch_pretrained(&cfg.model.backbone_id, &default_cache_dir())?;
            Ok(build_transfer_model(&bundle, side, 4, policy, seed)?)
        }
    }
}

fn partition_ids<'a>(split: &'a SplitIndex, name: &str) -> Result<&'a [usize], CliError> {
    match name {
        "train" => Ok(&split.train),
        "val" => Ok(&split.val),
        "test" => Ok(&split.test),
        other => Err(CliError::input(format!(
            "unknown partition '{other}' (expected train, val, or test)"
        ))),
    }
}

fn write_curves(dir: &Path, trainer: &Trainer) -> Result<(), CliError> {
    std::fs::write(
        dir.join("accuracy.svg"),
        figures::accuracy_curves_svg(&trainer.history, "accuracy per epoch"),
    )?;
    std::fs::write(
        dir.join("loss.svg"),
        figures::loss_curves_svg(&trainer.history, "loss per epoch"),
    )?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    if let Some(run_dir) = args.resume {
        let meta: RunMeta =
            serde_json::from_str(&std::fs::read_to_string(run_dir.join("run.json"))?)?;
        let manifest = SplitManifest::load(&meta.manifest_path)?;
        let (index, split) = manifest.resolve(None)?;
        let side = meta.config.data.target_size;
        let train_set = load_images(&index, &split.train, side)?;
        let val_set = load_images(&index, &split.val, side)?;

        let mut trainer = Trainer::resume(&run_dir)?;
        let epochs = args.epochs.unwrap_or(meta.config.train.epochs);
        let val_arg = (!val_set.is_empty()).then_some(val_set.as_slice());
        let ran = trainer.run(epochs, &train_set, val_arg)?;
        trainer.save(&run_dir)?;
        write_curves(&run_dir, &trainer)?;
        println!(
            "resumed {} for {ran} epochs ({} total)",
            run_dir.display(),
            trainer.epochs_done
        );
        return Ok(());
    }

    let config_path = args
        .config
        .ok_or_else(|| CliError::input("either --config or --resume is required"))?;
    let mut cfg = RunConfig::load(&config_path)?;
    if let Some(kind) = args.kind {
        cfg.model.kind = match kind.as_str() {
            "baseline" => ModelKind::Baseline,
            "transfer" => ModelKind::Transfer,
            other => {
                return Err(CliError::input(format!(
                    "unknown model kind '{other}' (expected baseline or transfer)"
                )))
            }
        };
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }

    let run_dir = args.out.unwrap_or_else(|| {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        cfg.output
            .dir
            .join(format!("{}-{}-{stamp}", cfg.model.kind, cfg.train.seed))
    });
    std::fs::create_dir_all(&run_dir)?;

    // reuse a prepared split when the config names one, else split here
    let manifest_path = match &cfg.split.manifest {
        Some(path) => path.clone(),
        None => {
            let index = scan_dataset(&cfg.data.root)?;
            let split = stratified_split(&index, cfg.split.ratios(), cfg.split.seed)?;
            for w in &split.warnings {
                eprintln!("warning: {w}");
            }
            let path = run_dir.join("split.json");
            SplitManifest::build(&index, &split).save(&path)?;
            path
        }
    };
    let manifest = SplitManifest::load(&manifest_path)?;
    let (index, split) = manifest.resolve(None)?;
    let side = cfg.data.target_size;
    let train_set = load_images(&index, &split.train, side)?;
    let val_set = load_images(&index, &split.val, side)?;

    let model = build_model(&cfg, cfg.train.seed)?;
    let train_cfg = TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.learning_rate,
        seed: cfg.train.seed,
        early_stop_patience: cfg.train.early_stop_patience,
    };
    let mut trainer = Trainer::new(model, train_cfg);
    let val_arg = (!val_set.is_empty()).then_some(val_set.as_slice());
    let ran = trainer.run(cfg.train.epochs, &train_set, val_arg)?;
    trainer.save(&run_dir)?;
    write_curves(&run_dir, &trainer)?;
    std::fs::write(
        run_dir.join("run.json"),
        serde_json::to_string_pretty(&RunMeta {
            config: cfg,
            manifest_path,
        })?,
    )?;
    println!("trained {ran} epochs; run directory: {}", run_dir.display());
    if let (Some(epoch), Some(metric)) = (trainer.best_epoch(), trainer.best_metric()) {
        println!("best epoch {epoch} with accuracy {metric:.4}");
    }
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct EvalMeta {
    manifest_sha256: String,
    partition: String,
    accuracy: f64,
    model_label: String,
}

fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let (mut model, best_epoch, _) = load_best_model(&args.run)?;
    let manifest_bytes = std::fs::read(&args.manifest)?;
    let manifest: SplitManifest = serde_json::from_slice(&manifest_bytes)?;
    let (index, split) = manifest.resolve(args.data_root.as_deref())?;
    let ids = partition_ids(&split, &args.partition)?;
    if ids.is_empty() {
        return Err(CliError::input(format!(
            "partition '{}' is empty",
            args.partition
        )));
    }
    let side = model.spec.input_side;
    let images = load_images(&index, ids, side)?;

    let preds = predict(&mut model, &images, 32)?;
    let truth: Vec<usize> = images.iter().map(|s| s.label).collect();
    let cm = confusion(&truth, &preds, index.num_classes())?
        .with_class_names(&index.class_names)?;

    let label = format!("{} (epoch {best_epoch})", model.spec.kind);
    let report = ClassificationReport::from_confusion(&cm, &index.class_names, &label)?;

    std::fs::write(args.run.join("report.txt"), report.to_text())?;
    std::fs::write(args.run.join("report.csv"), report.to_csv())?;
    std::fs::write(args.run.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(args.run.join("confusion.csv"), cm.to_csv())?;
    std::fs::write(
        args.run.join("confusion.svg"),
        figures::confusion_svg(&cm, &format!("confusion matrix: {label}")),
    )?;
    let meta = EvalMeta {
        manifest_sha256: hex::encode(Sha256::digest(&manifest_bytes)),
        partition: args.partition,
        accuracy: report.accuracy,
        model_label: label,
    };
    std::fs::write(
        args.run.join("eval.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    print!("{}", report.to_text());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let load = |run: &Path| -> Result<(EvalMeta, ClassificationReport), CliError> {
        let meta: EvalMeta = serde_json::from_str(
            &std::fs::read_to_string(run.join("eval.json")).map_err(|_| {
                CliError::input(format!(
                    "{} has no eval.json; run `fundus evaluate` first",
                    run.display()
                ))
            })?,
        )?;
        let report =
            serde_json::from_str(&std::fs::read_to_string(run.join("report.json"))?)?;
        Ok((meta, report))
    };
    let (meta_a, report_a) = load(&args.run_a)?;
    let (meta_b, report_b) = load(&args.run_b)?;
    if meta_a.manifest_sha256 != meta_b.manifest_sha256 {
        return Err(CliError::input(
            "runs were evaluated on different splits; re-evaluate with the same manifest",
        ));
    }
    if meta_a.partition != meta_b.partition {
        return Err(CliError::input(format!(
            "runs were evaluated on different partitions ({} vs {})",
            meta_a.partition, meta_b.partition
        )));
    }
    let (text, _verdict) = compare_reports(&report_a, &report_b);
    print!("{text}");
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<(), CliError> {
    if args.per_class == 0 || args.side == 0 {
        return Err(CliError::input("--per-class and --side must be nonzero"));
    }
    synth::write_fundus_corpus(&args.out, args.per_class, args.side, args.seed)?;
    println!(
        "wrote {} images ({} per class) under {}",
        4 * args.per_class,
        args.per_class,
        args.out.display()
    );
    Ok(())
}
