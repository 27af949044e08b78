//! Command-line front end: validate, preprocess, train, ablate, report, synth.
//!
//! Settings resolve as: flag, then `AFFUSE_SEED` (seed only), then the TOML
//! file given with `--config`, then built-in defaults.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{
    ablation_run, reference_rows, render_folds, render_report, run_fold, AblationReport, EvalConfig, ReportFormat,
};
use crate::features::{validate_manifest, FeatureSet, Manifest, MANIFEST_FILE_NAME};
use crate::fusion::{build_model, ModalityCombo, ModelShape};
use crate::labels::{
    attach_features, label_segments, manifest_windows, read_annotations, AnnotationKind, Dimension, LabelConfig,
    LabeledSegment, LabelsFile, PIPELINE_ORDER,
};
use crate::nn::TrainConfig;
use crate::synth::{generate, SynthConfig};
use crate::training::{split_validation, train_fold, DEFAULT_VAL_FRACTION};

pub const SEED_ENV: &str = "AFFUSE_SEED";

type Echo = Vec<(String, String)>;

#[derive(Debug, Parser)]
#[command(name = "affuse", version, about = "Late-fusion valence/arousal classification over precomputed movie features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a dataset manifest against its feature files.
    Validate {
        /// Dataset root containing manifest.affx.json.
        dataset: PathBuf,
    },
    /// Turn raw annotation tracks into per-segment labels.
    Preprocess(PreprocessArgs),
    /// Train one fusion model and save a checkpoint.
    Train(TrainArgs),
    /// Leave-one-movie-out evaluation over a list of modality combinations.
    Ablate(AblateArgs),
    /// Re-render a saved ablation report.
    Report(ReportArgs),
    /// Write a generated Gaussian-cluster dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Experienced,
    Intended,
}

impl From<KindArg> for AnnotationKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Experienced => AnnotationKind::Experienced,
            KindArg::Intended => AnnotationKind::Intended,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    Arousal,
    Valence,
    Both,
}

impl TargetArg {
    fn dimensions(self) -> Vec<Dimension> {
        match self {
            TargetArg::Arousal => vec![Dimension::Arousal],
            TargetArg::Valence => vec![Dimension::Valence],
            TargetArg::Both => Dimension::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Delimited,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset root containing manifest.affx.json.
    #[arg(long)]
    dataset: PathBuf,
    /// Which annotation set to label with [default: experienced].
    #[arg(long, value_enum)]
    annotation: Option<KindArg>,
    /// Annotation CSV; defaults to the one named in the manifest.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// TOML file with default settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    /// Savitzky-Golay window length in samples (odd) [default: 51].
    #[arg(long)]
    sg_window: Option<usize>,
    /// Savitzky-Golay polynomial order [default: 3].
    #[arg(long)]
    sg_polyorder: Option<usize>,
    /// Number of label classes [default: 7].
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    labels: LabelArgs,
    /// Output file [default: <dataset>/labels.<annotation>.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// SGD learning rate [default: 0.005].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// L2 weight decay on weights [default: 0.005].
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Softmax temperature [default: 2].
    #[arg(long)]
    temperature: Option<f64>,
    /// Maximum epochs [default: 50].
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size [default: 128].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Early-stopping patience in epochs [default: 25].
    #[arg(long)]
    patience: Option<usize>,
    /// Seed for initialization and shuffling [default: 0; env AFFUSE_SEED].
    #[arg(long)]
    seed: Option<u64>,
    /// Per-modality projection width [default: 128].
    #[arg(long)]
    proj_dim: Option<usize>,
    /// Fusion hidden width [default: 256].
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Fraction of each training movie's tail held out for validation [default: 0.1].
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Labels file from `preprocess`; computed on the fly when absent.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    label_args: LabelArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Modality combination, e.g. `text+sound` or `visual`.
    #[arg(long)]
    combo: String,
    /// Target dimension: arousal or valence.
    #[arg(long)]
    target: Dimension,
    /// Movie to exclude from training and score on.
    #[arg(long)]
    holdout: Option<String>,
    /// Checkpoint path; a training-history CSV is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    label_args: LabelArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated combos, e.g. `sound,text,visual+sound` [default: the nine standard rows].
    #[arg(long)]
    combos: Option<String>,
    /// Which dimension(s) to evaluate.
    #[arg(long, value_enum, default_value = "both")]
    target: TargetArg,
    /// Worker threads for folds [default: 1].
    #[arg(long)]
    jobs: Option<usize>,
    /// Append published reference rows to the rendered tables.
    #[arg(long)]
    reference: bool,
    /// Output directory [default: <dataset>/ablation-<annotation>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// report.json written by `ablate`.
    #[arg(long)]
    input: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Append published reference rows.
    #[arg(long)]
    reference: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output dataset root.
    #[arg(long)]
    out: PathBuf,
    /// Number of movies.
    #[arg(long, default_value_t = 3)]
    movies: usize,
    /// Segments per movie.
    #[arg(long, default_value_t = 600)]
    segments: usize,
    /// Feature dimension of every modality.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Class prototype scale relative to unit noise.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Optional settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    annotation: Option<AnnotationKind>,
    combos: Option<Vec<String>>,
    jobs: Option<usize>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    temperature: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    proj_dim: Option<usize>,
    hidden_dim: Option<usize>,
    val_fraction: Option<f64>,
    sg_window: Option<usize>,
    sg_polyorder: Option<usize>,
    bins: Option<usize>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn annotation_kind(data: &DataArgs, file: &FileConfig) -> AnnotationKind {
    data.annotation.map(Into::into).or(file.annotation).unwrap_or(AnnotationKind::Experienced)
}

fn label_config(args: &LabelArgs, file: &FileConfig) -> Result<LabelConfig> {
    let mut cfg = LabelConfig::default();
    if let Some(w) = args.sg_window.or(file.sg_window) {
        cfg.smoother.window = w;
    }
    if let Some(p) = args.sg_polyorder.or(file.sg_polyorder) {
        cfg.smoother.polyorder = p;
    }
    if let Some(b) = args.bins.or(file.bins) {
        cfg.quantizer.num_bins = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn eval_config(args: &ModelArgs, file: &FileConfig, jobs: Option<usize>, num_classes: usize) -> Result<EvalConfig> {
    let d = TrainConfig::default();
    let train = TrainConfig {
        learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(d.learning_rate),
        weight_decay: args.weight_decay.or(file.weight_decay).unwrap_or(d.weight_decay),
        temperature: args.temperature.or(file.temperature).unwrap_or(d.temperature),
        epochs: args.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        patience: args.patience.or(file.patience).unwrap_or(d.patience),
        seed: match args.seed {
            Some(s) => s,
            None => env_seed()?.or(file.seed).unwrap_or(d.seed),
        },
    };
    train.validate()?;
    let s = ModelShape::default();
    let shape = ModelShape {
        proj_dim: args.proj_dim.or(file.proj_dim).unwrap_or(s.proj_dim),
        hidden_dim: args.hidden_dim.or(file.hidden_dim).unwrap_or(s.hidden_dim),
        num_classes,
    };
    if shape.proj_dim == 0 || shape.hidden_dim == 0 {
        return Err(Error::invalid("proj_dim and hidden_dim must be positive"));
    }
    let val_fraction = args.val_fraction.or(file.val_fraction).unwrap_or(DEFAULT_VAL_FRACTION);
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!("val_fraction {val_fraction} must lie in (0, 1)")));
    }
    let jobs = jobs.or(file.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(Error::invalid("jobs must be at least 1"));
    }
    Ok(EvalConfig {
        train,
        shape,
        val_fraction,
        jobs,
    })
}

fn annotations_path(data: &DataArgs, manifest: &Manifest) -> Result<PathBuf> {
    match (&data.annotations, &manifest.annotations) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(rel)) => Ok(data.dataset.join(rel)),
        (None, None) => Err(Error::Config(
            "no annotation file: pass --annotations or name one in the manifest".into(),
        )),
    }
}

fn compute_labels(data: &DataArgs, features: &FeatureSet, kind: AnnotationKind, cfg: &LabelConfig) -> Result<LabelsFile> {
    let tracks = read_annotations(annotations_path(data, &features.manifest)?)?;
    let movies = manifest_windows(features)?;
    let rows = label_segments(&tracks, &movies, kind, cfg)?;
    Ok(LabelsFile::new(kind, cfg, features.manifest.segment_length_s, rows))
}

/// Labeled segments from a labels file, or from the annotations when no file is given.
fn load_segments(
    data: &DataArgs,
    labels_path: Option<&Path>,
    features: &FeatureSet,
    kind: AnnotationKind,
    cfg: &LabelConfig,
) -> Result<(Vec<LabeledSegment>, Echo)> {
    let file = match labels_path {
        Some(p) => {
            let file = LabelsFile::read(p)?;
            if let Some(k) = file.echo_value("annotation_kind") {
                if k != kind.as_str() {
                    return Err(Error::Config(format!(
                        "{} holds {k} labels but --annotation is {kind}",
                        p.display()
                    )));
                }
            }
            file
        }
        None => compute_labels(data, features, kind, cfg)?,
    };
    let segments = attach_features(&file.rows, features)?;
    Ok((segments, file.echo))
}

fn cmd_validate(dataset: &Path) -> Result<i32> {
    if !dataset.is_dir() {
        eprintln!("error: dataset root {} is not a readable directory", dataset.display());
        return Ok(2);
    }
    let manifest = match Manifest::load(dataset) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", dataset.join(MANIFEST_FILE_NAME).display());
            return Ok(2);
        }
    };
    let report = validate_manifest(&manifest, dataset);
    for f in &report.findings {
        println!("{f}");
    }
    if report.is_clean() {
        println!(
            "ok: {} movies, {} modalities",
            manifest.movies.len(),
            manifest.modalities.len()
        );
        Ok(0)
    } else {
        println!("{} finding(s)", report.findings.len());
        Ok(1)
    }
}

fn cmd_preprocess(args: &PreprocessArgs) -> Result<i32> {
    let file = FileConfig::load(args.data.config.as_deref())?;
    let kind = annotation_kind(&args.data, &file);
    let cfg = label_config(&args.labels, &file)?;
    let features = FeatureSet::load(&args.data.dataset)?;
    let labels = compute_labels(&args.data, &features, kind, &cfg)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.data.dataset.join(format!("labels.{kind}.csv")));
    labels.write(&out)?;
    println!("wrote {} segment labels to {}", labels.rows.len(), out.display());
    Ok(0)
}

fn render_echo(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let file = FileConfig::load(args.data.config.as_deref())?;
    let kind = annotation_kind(&args.data, &file);
    let label_cfg = label_config(&args.label_args, &file)?;
    let cfg = eval_config(&args.model, &file, None, label_cfg.quantizer.num_bins)?;
    let combo: ModalityCombo = args.combo.parse()?;
    let features = FeatureSet::load(&args.data.dataset)?;
    let dims = features.manifest.dims();
    let (segments, label_echo) = load_segments(&args.data, args.model.labels.as_deref(), &features, kind, &label_cfg)?;

    let mut echo = label_echo;
    echo.extend(cfg.echo());
    echo.push(("combo".into(), combo.to_string()));
    echo.push(("target".into(), args.target.to_string()));

    let (history, model) = match &args.holdout {
        Some(movie) => {
            let fold = run_fold(&segments, &dims, movie, &combo, args.target, &cfg)?;
            println!(
                "held-out {movie}: accuracy {:.2}%  accuracy±1 {:.2}%  ({} segments)",
                fold.accuracy * 100.0,
                fold.accuracy_within_one * 100.0,
                fold.num_test_segments
            );
            echo.push(("holdout".into(), movie.clone()));
            // run_fold does not hand back the model, so retrain on the same
            // split; training is deterministic so this reproduces it.
            let rest: Vec<&LabeledSegment> = segments.iter().filter(|s| s.movie_id() != movie).collect();
            let (train, val) = split_validation(&rest, cfg.val_fraction)?;
            let model = build_model(&dims, &combo, args.target, &cfg.shape, cfg.train.seed)?;
            let (model, history) = train_fold(&train, &val, model, &cfg.train)?;
            (history, model)
        }
        None => {
            let all: Vec<&LabeledSegment> = segments.iter().collect();
            let (train, val) = split_validation(&all, cfg.val_fraction)?;
            let model = build_model(&dims, &combo, args.target, &cfg.shape, cfg.train.seed)?;
            let (model, history) = train_fold(&train, &val, model, &cfg.train)?;
            (history, model)
        }
    };
    model.save(&args.out, &render_echo(&echo))?;
    let history_path = args.out.with_extension("history.csv");
    crate::features::write_atomic(&history_path, history.to_csv().as_bytes())?;
    println!(
        "best epoch {} (stopped after {}); checkpoint {}",
        history.best_epoch,
        history.stopped_epoch,
        args.out.display()
    );
    Ok(0)
}

fn parse_combos(list: &str) -> Result<Vec<ModalityCombo>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn cmd_ablate(args: &AblateArgs) -> Result<i32> {
    let file = FileConfig::load(args.data.config.as_deref())?;
    let kind = annotation_kind(&args.data, &file);
    let label_cfg = label_config(&args.label_args, &file)?;
    let cfg = eval_config(&args.model, &file, args.jobs, label_cfg.quantizer.num_bins)?;
    let combos = match (&args.combos, &file.combos) {
        (Some(list), _) => parse_combos(list)?,
        (None, Some(list)) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
        (None, None) => ModalityCombo::default_ablation(),
    };
    let features = FeatureSet::load(&args.data.dataset)?;
    let dims = features.manifest.dims();
    let (segments, label_echo) = load_segments(&args.data, args.model.labels.as_deref(), &features, kind, &label_cfg)?;

    let mut report = ablation_run(&segments, &dims, &combos, &args.target.dimensions(), kind, &cfg)?;
    for (k, v) in label_echo {
        if !report.config.iter().any(|(rk, _)| *rk == k) {
            report.config.push((k, v));
        }
    }
    if !report.config.iter().any(|(k, _)| k == "pipeline") {
        report.config.push(("pipeline".into(), PIPELINE_ORDER.into()));
    }
    if args.reference {
        report.reference = reference_rows(kind);
    }

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.data.dataset.join(format!("ablation-{kind}")));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let text = render_report(&report, ReportFormat::TextTable);
    crate::features::write_atomic(&out.join("report.txt"), text.as_bytes())?;
    crate::features::write_atomic(
        &out.join("report.csv"),
        render_report(&report, ReportFormat::Delimited).as_bytes(),
    )?;
    crate::features::write_atomic(&out.join("folds.csv"), render_folds(&report).as_bytes())?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    crate::features::write_atomic(&out.join("report.json"), json.as_bytes())?;

    print!("{text}");
    if report.is_complete() {
        Ok(0)
    } else {
        eprintln!("error: some folds failed; see {}", out.join("folds.csv").display());
        Ok(1)
    }
}

fn cmd_report(args: &ReportArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let mut report: AblationReport = serde_json::from_str(&text)?;
    if args.reference && report.reference.is_empty() {
        report.reference = reference_rows(report.annotation_kind);
    }
    let format = match args.format {
        FormatArg::Text => ReportFormat::TextTable,
        FormatArg::Delimited => ReportFormat::Delimited,
    };
    print!("{}", render_report(&report, format));
    Ok(if report.is_complete() { 0 } else { 1 })
}

fn cmd_synth(args: &SynthArgs) -> Result<i32> {
    let cfg = SynthConfig {
        movies: args.movies,
        segments_per_movie: args.segments,
        dim: args.dim,
        separation: args.separation,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let data = generate(&cfg)?;
    data.write(&args.out)?;
    println!(
        "wrote {} movies x {} segments to {}",
        cfg.movies,
        cfg.segments_per_movie,
        args.out.display()
    );
    Ok(0)
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Validate { dataset } => cmd_validate(dataset),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Train(a) => cmd_train(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 failure, 2 usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => 2,
                _ => 1,
            }
        }
    }
}
