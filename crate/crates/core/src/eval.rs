//! Leave-one-movie-out evaluation, the accuracy / accuracy±1 metrics, the
//! modality ablation matrix and its text and delimited renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Modality;
use crate::fusion::{build_model, ModalityCombo, ModelShape};
use crate::labels::{AnnotationKind, Dimension, LabeledSegment};
use crate::nn::TrainConfig;
use crate::training::{split_validation, train_fold, TrainHistory, DEFAULT_VAL_FRACTION};

fn check_pairs(predictions: &[usize], labels: &[usize]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_pairs(predictions, labels)?;
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Fraction of predictions at most one class away from the label.
pub fn accuracy_within_one(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_pairs(predictions, labels)?;
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p.abs_diff(**l) <= 1).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `counts[label][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_pairs(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<Self> {
        check_pairs(predictions, labels)?;
        let mut m = ConfusionMatrix::new(num_classes);
        for (&p, &l) in predictions.iter().zip(labels) {
            if p >= num_classes || l >= num_classes {
                return Err(Error::invalid(format!("class out of range for {num_classes} classes")));
            }
            m.counts[l][p] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total() as f64
    }

    pub fn accuracy_within_one(&self) -> f64 {
        let near: u64 = self
            .counts
            .iter()
            .enumerate()
            .flat_map(|(l, row)| row.iter().enumerate().filter(move |(p, _)| p.abs_diff(l) <= 1))
            .map(|(_, c)| c)
            .sum();
        near as f64 / self.total() as f64
    }

    fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub movie_id: String,
    pub index: usize,
    pub label: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out_movie: String,
    pub target: Dimension,
    pub combo: ModalityCombo,
    pub accuracy: f64,
    pub accuracy_within_one: f64,
    pub num_test_segments: usize,
    pub confusion: ConfusionMatrix,
    /// Movies that supplied training or validation segments.
    pub train_movies: Vec<String>,
    pub predictions: Vec<SegmentPrediction>,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FoldOutcome {
    Completed(FoldResult),
    Failed { held_out_movie: String, reason: String },
}

impl FoldOutcome {
    pub fn held_out_movie(&self) -> &str {
        match self {
            FoldOutcome::Completed(r) => &r.held_out_movie,
            FoldOutcome::Failed { held_out_movie, .. } => held_out_movie,
        }
    }

    pub fn completed(&self) -> Option<&FoldResult> {
        match self {
            FoldOutcome::Completed(r) => Some(r),
            FoldOutcome::Failed { .. } => None,
        }
    }
}

/// Pooled (segment-weighted) metrics over completed folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: f64,
    pub accuracy_within_one: f64,
    pub num_test_segments: usize,
    pub num_folds: usize,
    pub failed_folds: usize,
}

impl Aggregate {
    pub fn is_complete(&self) -> bool {
        self.failed_folds == 0
    }

    fn from_folds(folds: &[FoldOutcome], num_classes: usize) -> Aggregate {
        let mut confusion = ConfusionMatrix::new(num_classes);
        let mut failed = 0;
        for f in folds {
            match f {
                FoldOutcome::Completed(r) => confusion.add(&r.confusion),
                FoldOutcome::Failed { .. } => failed += 1,
            }
        }
        let n = confusion.total() as usize;
        let (accuracy, accuracy_within_one) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (confusion.accuracy(), confusion.accuracy_within_one())
        };
        Aggregate {
            accuracy,
            accuracy_within_one,
            num_test_segments: n,
            num_folds: folds.len(),
            failed_folds: failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub combo: ModalityCombo,
    pub target: Dimension,
    pub folds: Vec<FoldOutcome>,
    pub aggregate: Aggregate,
}

/// Everything a leave-one-out run needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub shape: ModelShape,
    pub val_fraction: f64,
    /// Worker threads for folds; 1 runs everything on the calling thread.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train: TrainConfig::default(),
            shape: ModelShape::default(),
            val_fraction: DEFAULT_VAL_FRACTION,
            jobs: 1,
        }
    }
}

impl EvalConfig {
    /// Effective settings as `key=value` pairs, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let t = &self.train;
        [
            ("proj_dim", self.shape.proj_dim.to_string()),
            ("hidden_dim", self.shape.hidden_dim.to_string()),
            ("num_classes", self.shape.num_classes.to_string()),
            ("seed", t.seed.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("temperature", t.temperature.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("patience", t.patience.to_string()),
            ("optimizer", "sgd(momentum=0,constant_lr)".to_string()),
            ("early_stopping", "val_loss".to_string()),
            ("val_split", format!("temporal_tail_per_movie({})", self.val_fraction)),
            ("aggregate", "segment_weighted".to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Movie ids in order of first appearance.
pub fn movie_order(segments: &[LabeledSegment]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in segments {
        if !out.iter().any(|m| m == s.movie_id()) {
            out.push(s.movie_id().to_string());
        }
    }
    out
}

/// Trains on every movie but `held_out` and tests on `held_out`.
pub fn run_fold(
    segments: &[LabeledSegment],
    dims: &BTreeMap<Modality, usize>,
    held_out: &str,
    combo: &ModalityCombo,
    target: Dimension,
    config: &EvalConfig,
) -> Result<FoldResult> {
    let (test, rest): (Vec<&LabeledSegment>, Vec<&LabeledSegment>) =
        segments.iter().partition(|s| s.movie_id() == held_out);
    if test.is_empty() {
        return Err(Error::invalid(format!("movie {held_out} has no segments")));
    }
    let (train, val) = split_validation(&rest, config.val_fraction)?;
    let model = build_model(dims, combo, target, &config.shape, config.train.seed)?;
    let (model, history) = train_fold(&train, &val, model, &config.train)?;

    let predicted = model.predict_batch(&test)?;
    let labels: Vec<usize> = test.iter().map(|s| s.class(target)).collect();
    let confusion = ConfusionMatrix::from_pairs(&predicted, &labels, config.shape.num_classes)?;
    let train_movies: Vec<String> = rest
        .iter()
        .map(|s| s.movie_id().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(FoldResult {
        held_out_movie: held_out.to_string(),
        target,
        combo: combo.clone(),
        accuracy: accuracy(&predicted, &labels)?,
        accuracy_within_one: accuracy_within_one(&predicted, &labels)?,
        num_test_segments: test.len(),
        confusion,
        train_movies,
        predictions: test
            .iter()
            .zip(predicted.iter().zip(&labels))
            .map(|(s, (&p, &l))| SegmentPrediction {
                movie_id: s.movie_id().to_string(),
                index: s.window.index,
                label: l,
                predicted: p,
            })
            .collect(),
        history,
    })
}

/// Runs `f` over `items` on `jobs` threads, preserving order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

fn check_dataset(segments: &[LabeledSegment]) -> Result<Vec<String>> {
    let movies = movie_order(segments);
    if movies.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-out needs at least 2 movies, found {}",
            movies.len()
        )));
    }
    Ok(movies)
}

fn outcome(movie: &str, result: Result<FoldResult>) -> FoldOutcome {
    match result {
        Ok(r) => FoldOutcome::Completed(r),
        Err(e) => FoldOutcome::Failed {
            held_out_movie: movie.to_string(),
            reason: e.to_string(),
        },
    }
}

/// One fold per movie. Failed folds are kept in the result and excluded from
/// the aggregate.
pub fn leave_one_out(
    segments: &[LabeledSegment],
    dims: &BTreeMap<Modality, usize>,
    combo: &ModalityCombo,
    target: Dimension,
    config: &EvalConfig,
) -> Result<LooResult> {
    let movies = check_dataset(segments)?;
    check_combo(dims, combo)?;
    let folds = parallel_map(&movies, config.jobs, |m| {
        outcome(m, run_fold(segments, dims, m, combo, target, config))
    });
    let aggregate = Aggregate::from_folds(&folds, config.shape.num_classes);
    Ok(LooResult {
        combo: combo.clone(),
        target,
        folds,
        aggregate,
    })
}

fn check_combo(dims: &BTreeMap<Modality, usize>, combo: &ModalityCombo) -> Result<()> {
    match combo.modalities().iter().find(|m| !dims.contains_key(m)) {
        Some(m) => Err(Error::Config(format!("combo {combo} uses {m}, which the dataset does not provide"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub accuracy: f64,
    pub accuracy_within_one: f64,
    pub failed_folds: usize,
    pub num_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub combo: Option<ModalityCombo>,
    pub arousal: Option<Cell>,
    pub valence: Option<Cell>,
}

impl ReportRow {
    pub fn is_complete(&self) -> bool {
        [self.arousal, self.valence]
            .iter()
            .flatten()
            .all(|c| c.failed_folds == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub combo: ModalityCombo,
    pub target: Dimension,
    pub held_out_movie: String,
    pub status: String,
    pub num_test_segments: usize,
    pub accuracy: f64,
    pub accuracy_within_one: f64,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub annotation_kind: AnnotationKind,
    pub config: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
    /// Published figures, shown for comparison only.
    #[serde(default)]
    pub reference: Vec<ReportRow>,
    #[serde(default)]
    pub folds: Vec<FoldSummary>,
}

impl AblationReport {
    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(ReportRow::is_complete)
    }
}

/// Leave-one-out for every (combo, target) pair. Rows follow `combos`; the
/// work is spread over `config.jobs` threads and gathered in declared order.
pub fn ablation_run(
    segments: &[LabeledSegment],
    dims: &BTreeMap<Modality, usize>,
    combos: &[ModalityCombo],
    targets: &[Dimension],
    annotation_kind: AnnotationKind,
    config: &EvalConfig,
) -> Result<AblationReport> {
    let movies = if combos.is_empty() || targets.is_empty() {
        Vec::new()
    } else {
        check_dataset(segments)?
    };
    for c in combos {
        check_combo(dims, c)?;
    }
    let mut tasks = Vec::new();
    for (ci, combo) in combos.iter().enumerate() {
        for &target in targets {
            for movie in &movies {
                tasks.push((ci, combo, target, movie.as_str()));
            }
        }
    }
    let outcomes = parallel_map(&tasks, config.jobs, |&(_, combo, target, movie)| {
        outcome(movie, run_fold(segments, dims, movie, combo, target, config))
    });

    let mut grouped: BTreeMap<(usize, Dimension), Vec<FoldOutcome>> = BTreeMap::new();
    let mut folds = Vec::with_capacity(tasks.len());
    for (&(ci, combo, target, _), fold) in tasks.iter().zip(outcomes) {
        folds.push(summarize(combo, target, &fold));
        grouped.entry((ci, target)).or_default().push(fold);
    }
    let cell = |ci: usize, target: Dimension| {
        grouped.get(&(ci, target)).map(|f| {
            let agg = Aggregate::from_folds(f, config.shape.num_classes);
            Cell {
                accuracy: agg.accuracy,
                accuracy_within_one: agg.accuracy_within_one,
                failed_folds: agg.failed_folds,
                num_folds: agg.num_folds,
            }
        })
    };
    let rows = combos
        .iter()
        .enumerate()
        .map(|(ci, combo)| ReportRow {
            label: combo.label(),
            combo: Some(combo.clone()),
            arousal: cell(ci, Dimension::Arousal),
            valence: cell(ci, Dimension::Valence),
        })
        .collect();

    let mut echo = vec![("annotation_kind".to_string(), annotation_kind.to_string())];
    echo.extend(config.echo());
    Ok(AblationReport {
        annotation_kind,
        config: echo,
        rows,
        reference: Vec::new(),
        folds,
    })
}

fn summarize(combo: &ModalityCombo, target: Dimension, fold: &FoldOutcome) -> FoldSummary {
    match fold {
        FoldOutcome::Completed(r) => FoldSummary {
            combo: combo.clone(),
            target,
            held_out_movie: r.held_out_movie.clone(),
            status: "ok".into(),
            num_test_segments: r.num_test_segments,
            accuracy: r.accuracy,
            accuracy_within_one: r.accuracy_within_one,
            best_epoch: r.history.best_epoch,
            stopped_epoch: r.history.stopped_epoch,
        },
        FoldOutcome::Failed { held_out_movie, reason } => FoldSummary {
            combo: combo.clone(),
            target,
            held_out_movie: held_out_movie.clone(),
            status: format!("failed: {reason}"),
            num_test_segments: 0,
            accuracy: f64::NAN,
            accuracy_within_one: f64::NAN,
            best_epoch: 0,
            stopped_epoch: 0,
        },
    }
}

fn reference_row(label: &str, v: [f64; 4]) -> ReportRow {
    let cell = |accuracy: f64, within: f64| {
        Some(Cell {
            accuracy: accuracy / 100.0,
            accuracy_within_one: within / 100.0,
            failed_folds: 0,
            num_folds: 0,
        })
    };
    ReportRow {
        label: label.to_string(),
        combo: None,
        arousal: cell(v[0], v[1]),
        valence: cell(v[2], v[3]),
    }
}

/// Published accuracy / accuracy±1 figures (arousal then valence, in %)
/// obtained with the full movie corpus and pretrained backbones. They are
/// not reproducible from generated fixtures and never gate anything.
pub fn reference_rows(kind: AnnotationKind) -> Vec<ReportRow> {
    let table: &[(&str, [f64; 4])] = match kind {
        AnnotationKind::Experienced => &[
            ("FC (RGB frame + OF + Audio)", [53.32, 94.75, 43.10, 90.51]),
            ("LSTM (RGB frame + OF + Audio)", [48.64, 95.28, 37.20, 89.22]),
            ("Visual (Resnet + Places + I3D)", [42.23, 90.55, 41.71, 91.23]),
            ("Sound (SoundNet)", [58.59, 95.11, 56.28, 97.20]),
            ("Text (BERT)", [58.86, 95.13, 32.55, 82.62]),
            ("Visual + Sound", [54.30, 94.20, 32.30, 82.90]),
            ("Resnet + Sound", [58.59, 95.11, 36.43, 86.20]),
            ("Text + Sound", [58.59, 95.11, 30.82, 83.17]),
            ("Text + Visual", [54.22, 94.36, 30.40, 83.22]),
            ("Text + Resnet", [58.22, 95.11, 36.32, 86.18]),
            ("Visual + Sound + Text", [56.86, 94.65, 42.19, 91.46]),
        ],
        AnnotationKind::Intended => &[
            ("FC (RGB frame + OF + Audio)", [31.20, 72.94, 30.33, 66.95]),
            ("LSTM (RGB frame + OF + Audio)", [30.80, 71.69, 22.54, 57.63]),
            ("Malandrakis et al.", [24.00, 57.00, 24.00, 64.00]),
            ("Visual (Resnet + Places + I3D)", [42.67, 86.99, 49.20, 93.81]),
            ("Sound (SoundNet)", [58.51, 95.10, 55.85, 96.21]),
            ("Text (BERT)", [58.56, 95.10, 32.45, 83.99]),
            ("Visual + Sound", [58.51, 95.10, 54.85, 97.45]),
            ("Text + Sound", [58.51, 95.10, 41.79, 83.65]),
            ("Text + Visual", [58.51, 94.94, 31.53, 84.21]),
            ("Text + Resnet", [56.89, 94.79, 30.41, 83.70]),
            ("Sound + Text + Resnet", [54.42, 94.07, 37.48, 87.23]),
            ("Visual + Sound + Text", [54.45, 96.35, 32.48, 83.99]),
        ],
    };
    table.iter().map(|(l, v)| reference_row(l, *v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TextTable,
    Delimited,
}

pub const REPORT_COLUMNS: [&str; 5] = [
    "Model",
    "Arousal Acc(%)",
    "Arousal Acc±1(%)",
    "Valence Acc(%)",
    "Valence Acc±1(%)",
];

fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{:.2}", x * 100.0),
        Some(_) => "n/a".to_string(),
        None => "-".to_string(),
    }
}

fn row_cells(row: &ReportRow, reference: bool) -> [String; 5] {
    let mut label = if reference {
        format!("[ref] {}", row.label)
    } else {
        row.label.clone()
    };
    let failed: usize = [row.arousal, row.valence].iter().flatten().map(|c| c.failed_folds).sum();
    if failed > 0 {
        let _ = write!(label, " [incomplete: {failed} failed fold(s)]");
    }
    [
        label,
        pct(row.arousal.map(|c| c.accuracy)),
        pct(row.arousal.map(|c| c.accuracy_within_one)),
        pct(row.valence.map(|c| c.accuracy)),
        pct(row.valence.map(|c| c.accuracy_within_one)),
    ]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders the report. Config echo lines come first as `# key=value`
/// comments; then the five-column table; reference rows, if any, last.
pub fn render_report(report: &AblationReport, format: ReportFormat) -> String {
    let mut out = String::new();
    for (k, v) in &report.config {
        let _ = writeln!(out, "# {k}={v}");
    }
    let body: Vec<[String; 5]> = report
        .rows
        .iter()
        .map(|r| row_cells(r, false))
        .chain(report.reference.iter().map(|r| row_cells(r, true)))
        .collect();
    match format {
        ReportFormat::Delimited => {
            let _ = writeln!(out, "{}", REPORT_COLUMNS.map(csv_field).join(","));
            for cells in &body {
                let _ = writeln!(out, "{}", cells.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
            }
        }
        ReportFormat::TextTable => {
            let mut widths = REPORT_COLUMNS.map(|c| c.chars().count());
            for cells in &body {
                for (w, c) in widths.iter_mut().zip(cells) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |cells: [&str; 5]| {
                let mut s = String::new();
                for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
                    let pad = w - c.chars().count();
                    if i == 0 {
                        s.push_str(c);
                        s.push_str(&" ".repeat(pad));
                    } else {
                        s.push_str(" | ");
                        s.push_str(&" ".repeat(pad));
                        s.push_str(c);
                    }
                }
                s
            };
            let _ = writeln!(out, "{}", line(REPORT_COLUMNS));
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("-+-"));
            for (i, cells) in body.iter().enumerate() {
                if i == report.rows.len() && !report.reference.is_empty() {
                    let _ = writeln!(out, "{}", rule.join("-+-"));
                }
                let _ = writeln!(out, "{}", line([&cells[0], &cells[1], &cells[2], &cells[3], &cells[4]]));
            }
        }
    }
    out
}

/// Per-fold delimited table.
pub fn render_folds(report: &AblationReport) -> String {
    let mut out = String::from(
        "combo,target,held_out_movie,status,num_test_segments,accuracy,accuracy_within_one,best_epoch,stopped_epoch\n",
    );
    for f in &report.folds {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            f.combo,
            f.target,
            csv_field(&f.held_out_movie),
            csv_field(&f.status),
            f.num_test_segments,
            f.accuracy,
            f.accuracy_within_one,
            f.best_epoch,
            f.stopped_epoch
        );
    }
    out
}
