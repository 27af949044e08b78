//! Label pipeline: continuous valence/arousal tracks to per-segment classes.
//!
//! Each track goes through smooth (Savitzky-Golay, mirror-padded edges) →
//! rescale to [-1, 1] → mean over each segment window → uniform quantization.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, Modality, SegmentWindow};

/// Order of the preprocessing stages, echoed into every output for audit.
pub const PIPELINE_ORDER: &str = "smooth>rescale>segment_mean>quantize";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Valence,
    Arousal,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Arousal, Dimension::Valence];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Valence => "valence",
            Dimension::Arousal => "arousal",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Dimension::Valence => 0,
            Dimension::Arousal => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Dimension> {
        match code {
            0 => Some(Dimension::Valence),
            1 => Some(Dimension::Arousal),
            _ => None,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "valence" => Ok(Dimension::Valence),
            "arousal" => Ok(Dimension::Arousal),
            other => Err(Error::invalid(format!("unknown dimension {other:?}"))),
        }
    }
}

/// Whose emotion an annotation describes: the viewers' (experienced) or the
/// filmmakers' (intended).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Experienced,
    Intended,
}

impl AnnotationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationKind::Experienced => "experienced",
            AnnotationKind::Intended => "intended",
        }
    }
}

impl fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnotationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "experienced" => Ok(AnnotationKind::Experienced),
            "intended" => Ok(AnnotationKind::Intended),
            other => Err(Error::invalid(format!("unknown annotation kind {other:?}"))),
        }
    }
}

/// Uniformly sampled annotation signal; sample `i` sits at `i / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTrack {
    pub movie_id: String,
    pub dimension: Dimension,
    pub kind: AnnotationKind,
    pub sample_rate_hz: f64,
    pub values: Vec<f64>,
}

impl AnnotationTrack {
    fn with_values(&self, values: Vec<f64>) -> AnnotationTrack {
        AnnotationTrack {
            movie_id: self.movie_id.clone(),
            dimension: self.dimension,
            kind: self.kind,
            sample_rate_hz: self.sample_rate_hz,
            values,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub window: usize,
    pub polyorder: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            window: 51,
            polyorder: 3,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "smoothing window must be odd and positive, got {}",
                self.window
            )));
        }
        if self.polyorder >= self.window {
            return Err(Error::invalid(format!(
                "polyorder {} must be below window {}",
                self.polyorder, self.window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub num_bins: usize,
    pub range_lo: f64,
    pub range_hi: f64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig {
            num_bins: 7,
            range_lo: -1.0,
            range_hi: 1.0,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_bins < 2 {
            return Err(Error::invalid(format!("need at least 2 bins, got {}", self.num_bins)));
        }
        if !(self.range_lo < self.range_hi) {
            return Err(Error::invalid(format!(
                "empty quantizer range [{}, {}]",
                self.range_lo, self.range_hi
            )));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        (self.range_hi - self.range_lo) / self.num_bins as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelConfig {
    pub smoother: SmootherConfig,
    pub quantizer: QuantizerConfig,
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        self.smoother.validate()?;
        self.quantizer.validate()
    }
}

/// Least-squares smoothing weights for the window centre.
///
/// Fits a polynomial of degree `polyorder` to the `window` samples at offsets
/// `-h..=h` and returns the weights that map the samples to the fitted value
/// at offset 0. Offsets are scaled to [-1, 1] to keep the normal equations
/// well conditioned; the centre estimate does not depend on that scaling.
pub fn savgol_coefficients(config: &SmootherConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let half = (config.window / 2) as f64;
    let scale = if half > 0.0 { half } else { 1.0 };
    let terms = config.polyorder + 1;
    let xs: Vec<f64> = (0..config.window).map(|j| (j as f64 - half) / scale).collect();

    // Normal matrix G = AᵀA with A[j][k] = x_j^k.
    let mut gram = vec![vec![0.0; terms]; terms];
    for &x in &xs {
        let powers = monomials(x, terms);
        for r in 0..terms {
            for c in 0..terms {
                gram[r][c] += powers[r] * powers[c];
            }
        }
    }
    // Solve G c = e0; the centre weights are then w_j = Σ_k c_k x_j^k.
    let mut rhs = vec![0.0; terms];
    rhs[0] = 1.0;
    let c = solve_dense(gram, rhs)?;
    Ok(xs
        .iter()
        .map(|&x| monomials(x, terms).iter().zip(&c).map(|(p, ck)| p * ck).sum())
        .collect())
}

fn monomials(x: f64, terms: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(terms);
    let mut p = 1.0;
    for _ in 0..terms {
        out.push(p);
        p *= x;
    }
    out
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::invalid("singular smoothing system"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

/// Index into `0..n` under mirror padding (edge sample not repeated).
pub(crate) fn mirror_index(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = k.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

pub fn smooth_track(track: &AnnotationTrack, config: &SmootherConfig) -> Result<AnnotationTrack> {
    let weights = savgol_coefficients(config)?;
    if track.values.is_empty() {
        return Err(Error::invalid("cannot smooth an empty track"));
    }
    let n = track.values.len();
    let half = (config.window / 2) as isize;
    let out = (0..n as isize)
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(j, w)| w * track.values[mirror_index(i + j as isize - half, n)])
                .sum()
        })
        .collect();
    Ok(track.with_values(out))
}

/// Affine map of `[min, max]` onto `[-1, 1]`. A constant track maps to zeros.
pub fn rescale_unit(track: &AnnotationTrack) -> Result<AnnotationTrack> {
    if track.values.is_empty() {
        return Err(Error::invalid("cannot rescale an empty track"));
    }
    if let Some(i) = track.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite sample {} in {} {} track of {}",
            i, track.kind, track.dimension, track.movie_id
        )));
    }
    let lo = track.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = track.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let values = if span == 0.0 {
        vec![0.0; track.values.len()]
    } else {
        track
            .values
            .iter()
            .map(|&v| (2.0 * (v - lo) / span - 1.0).clamp(-1.0, 1.0))
            .collect()
    };
    Ok(track.with_values(values))
}

/// Index range of the samples whose timestamps fall in `[start_s, end_s)`.
fn sample_range(rate: f64, start_s: f64, end_s: f64) -> (usize, usize) {
    // A sample exactly on a boundary belongs to the window that starts there.
    let first = (start_s * rate - 1e-9).ceil().max(0.0) as usize;
    let end = (end_s * rate - 1e-9).ceil().max(0.0) as usize;
    (first, end)
}

/// Mean of the track samples inside the window.
pub fn segment_label(track: &AnnotationTrack, window: &SegmentWindow) -> Result<f64> {
    let (first, end) = sample_range(track.sample_rate_hz, window.start_s, window.end_s);
    if end > track.values.len() {
        return Err(Error::invalid(format!(
            "window [{}, {}) of {} extends past the {:.3} s track",
            window.start_s,
            window.end_s,
            window.movie_id,
            track.duration_s()
        )));
    }
    if end <= first {
        return Err(Error::invalid(format!(
            "window [{}, {}) contains no samples at {} Hz",
            window.start_s, window.end_s, track.sample_rate_hz
        )));
    }
    let slice = &track.values[first..end];
    Ok(slice.iter().sum::<f64>() / slice.len() as f64)
}

/// Uniform-bin class index, clamped to `[0, num_bins - 1]`.
pub fn quantize(value: f64, config: &QuantizerConfig) -> Result<usize> {
    if value.is_nan() {
        return Err(Error::Data("cannot quantize NaN".into()));
    }
    let rel = (value - config.range_lo) / (config.range_hi - config.range_lo);
    let raw = (rel * config.num_bins as f64).floor();
    Ok(raw.clamp(0.0, (config.num_bins - 1) as f64) as usize)
}

/// Smooth then rescale one raw track.
pub fn preprocess_track(track: &AnnotationTrack, config: &LabelConfig) -> Result<AnnotationTrack> {
    rescale_unit(&smooth_track(track, &config.smoother)?)
}

/// Per-segment continuous values and classes for both dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLabels {
    pub movie_id: String,
    pub index: usize,
    pub valence_cont: f64,
    pub valence_class: usize,
    pub arousal_cont: f64,
    pub arousal_class: usize,
}

/// Labels every window of every movie from the tracks of the given kind.
///
/// Output order follows `movies` and, within a movie, the window index.
pub fn label_segments(
    tracks: &[AnnotationTrack],
    movies: &[(String, Vec<SegmentWindow>)],
    kind: AnnotationKind,
    config: &LabelConfig,
) -> Result<Vec<SegmentLabels>> {
    config.validate()?;
    let mut out = Vec::new();
    for (movie_id, windows) in movies {
        let find = |dim: Dimension| {
            tracks
                .iter()
                .find(|t| &t.movie_id == movie_id && t.dimension == dim && t.kind == kind)
                .ok_or_else(|| {
                    Error::Config(format!("missing {kind} {dim} annotation track for movie {movie_id}"))
                })
        };
        let valence = preprocess_track(find(Dimension::Valence)?, config)?;
        let arousal = preprocess_track(find(Dimension::Arousal)?, config)?;
        for w in windows {
            let valence_cont = segment_label(&valence, w)?;
            let arousal_cont = segment_label(&arousal, w)?;
            out.push(SegmentLabels {
                movie_id: movie_id.clone(),
                index: w.index,
                valence_cont,
                valence_class: quantize(valence_cont, &config.quantizer)?,
                arousal_cont,
                arousal_class: quantize(arousal_cont, &config.quantizer)?,
            });
        }
    }
    Ok(out)
}

/// One segment ready for training: its features and both labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSegment {
    pub window: SegmentWindow,
    pub features: BTreeMap<Modality, Vec<f32>>,
    pub valence_class: usize,
    pub arousal_class: usize,
    pub valence_cont: f64,
    pub arousal_cont: f64,
}

impl LabeledSegment {
    pub fn class(&self, dimension: Dimension) -> usize {
        match dimension {
            Dimension::Valence => self.valence_class,
            Dimension::Arousal => self.arousal_class,
        }
    }

    pub fn movie_id(&self) -> &str {
        &self.window.movie_id
    }
}

/// Full label pipeline over every movie in the feature set, joined with the
/// segment features.
pub fn preprocess_annotations(
    tracks: &[AnnotationTrack],
    features: &FeatureSet,
    kind: AnnotationKind,
    config: &LabelConfig,
) -> Result<Vec<LabeledSegment>> {
    let movies = manifest_windows(features)?;
    let labels = label_segments(tracks, &movies, kind, config)?;
    attach_features(&labels, features)
}

pub(crate) fn manifest_windows(features: &FeatureSet) -> Result<Vec<(String, Vec<SegmentWindow>)>> {
    features
        .manifest
        .movies
        .iter()
        .map(|m| Ok((m.movie_id.clone(), features.manifest.windows(&m.movie_id)?)))
        .collect()
}

/// Joins per-segment labels with the pooled feature rows of every modality.
pub fn attach_features(labels: &[SegmentLabels], features: &FeatureSet) -> Result<Vec<LabeledSegment>> {
    let seg_len = features.manifest.segment_length_s;
    labels
        .iter()
        .map(|l| {
            let mut map = BTreeMap::new();
            for entry in &features.manifest.modalities {
                let table = features.table(&l.movie_id, entry.modality).ok_or_else(|| {
                    Error::Data(format!("no {} features for movie {}", entry.modality, l.movie_id))
                })?;
                if l.index >= table.num_rows() {
                    return Err(Error::Data(format!(
                        "segment {} of {} has no {} feature row",
                        l.index, l.movie_id, entry.modality
                    )));
                }
                map.insert(entry.modality, table.row(l.index).to_vec());
            }
            Ok(LabeledSegment {
                window: SegmentWindow {
                    movie_id: l.movie_id.clone(),
                    index: l.index,
                    start_s: l.index as f64 * seg_len,
                    end_s: (l.index + 1) as f64 * seg_len,
                },
                features: map,
                valence_class: l.valence_class,
                arousal_class: l.arousal_class,
                valence_cont: l.valence_cont,
                arousal_cont: l.arousal_cont,
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    movie_id: String,
    dimension: String,
    kind: String,
    time_s: f64,
    value: f64,
}

/// Parses the annotation table (`movie_id,dimension,kind,time_s,value`) into
/// uniformly sampled tracks. Sampling must start at 0 and be uniform.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationTrack>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut grouped: BTreeMap<(String, Dimension, AnnotationKind), Vec<(f64, f64)>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: AnnotationRow = row?;
        let dim: Dimension = row.dimension.parse()?;
        let kind: AnnotationKind = row.kind.parse()?;
        grouped
            .entry((row.movie_id, dim, kind))
            .or_default()
            .push((row.time_s, row.value));
    }
    grouped
        .into_iter()
        .map(|((movie_id, dimension, kind), mut samples)| {
            samples.sort_by(|a, b| a.0.total_cmp(&b.0));
            let sample_rate_hz = infer_rate(&samples).map_err(|reason| {
                Error::Data(format!("{kind} {dimension} track of {movie_id}: {reason}"))
            })?;
            Ok(AnnotationTrack {
                movie_id,
                dimension,
                kind,
                sample_rate_hz,
                values: samples.into_iter().map(|(_, v)| v).collect(),
            })
        })
        .collect()
}

fn infer_rate(samples: &[(f64, f64)]) -> std::result::Result<f64, String> {
    if samples.len() < 2 {
        return Err("need at least two samples to infer the sample rate".into());
    }
    let step = (samples[samples.len() - 1].0 - samples[0].0) / (samples.len() - 1) as f64;
    if !(step > 0.0) {
        return Err("timestamps do not increase".into());
    }
    let tol = step * 1e-3;
    for (i, (t, _)) in samples.iter().enumerate() {
        if (t - i as f64 * step).abs() > tol {
            return Err(format!("sample {i} at {t} s breaks uniform sampling from 0 s"));
        }
    }
    Ok(1.0 / step)
}

pub fn write_annotations(tracks: &[AnnotationTrack], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("movie_id,dimension,kind,time_s,value\n");
    for t in tracks {
        for (i, v) in t.values.iter().enumerate() {
            let time = i as f64 / t.sample_rate_hz;
            let _ = writeln!(out, "{},{},{},{},{}", t.movie_id, t.dimension, t.kind, time, v);
        }
    }
    crate::features::write_atomic(path.as_ref(), out.as_bytes())
}

/// Labeled-segment table plus its `# key=value` header echo.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelsFile {
    pub echo: Vec<(String, String)>,
    pub rows: Vec<SegmentLabels>,
}

impl LabelsFile {
    pub fn new(kind: AnnotationKind, config: &LabelConfig, segment_length_s: f64, rows: Vec<SegmentLabels>) -> Self {
        let echo = vec![
            ("annotation_kind".to_string(), kind.to_string()),
            ("pipeline".to_string(), PIPELINE_ORDER.to_string()),
            ("sg_window".to_string(), config.smoother.window.to_string()),
            ("sg_polyorder".to_string(), config.smoother.polyorder.to_string()),
            ("num_bins".to_string(), config.quantizer.num_bins.to_string()),
            ("range_lo".to_string(), config.quantizer.range_lo.to_string()),
            ("range_hi".to_string(), config.quantizer.range_hi.to_string()),
            ("segment_length_s".to_string(), segment_length_s.to_string()),
        ];
        LabelsFile { echo, rows }
    }

    pub fn echo_value(&self, key: &str) -> Option<&str> {
        self.echo.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Text form. Floats use shortest round-trip formatting, so output is
    /// byte-identical for identical inputs.
    pub fn render(&self) -> String {
        let mut out = String::from("# affuse segment labels v1\n");
        for (k, v) in &self.echo {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("movie_id,index,valence_cont,valence_class,arousal_cont,arousal_class\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.movie_id, r.index, r.valence_cont, r.valence_class, r.arousal_cont, r.arousal_class
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::features::write_atomic(path.as_ref(), self.render().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<LabelsFile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<LabelsFile> {
        let echo = text
            .lines()
            .filter_map(|l| l.strip_prefix('#'))
            .filter_map(|l| l.trim().split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Data(format!("short labels row {rec:?}")));
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|_| Error::Data(format!("bad number in labels row {rec:?}")))
            };
            let int = |i: usize| -> Result<usize> {
                field(i)?.parse().map_err(|_| Error::Data(format!("bad integer in labels row {rec:?}")))
            };
            rows.push(SegmentLabels {
                movie_id: field(0)?.to_string(),
                index: int(1)?,
                valence_cont: num(2)?,
                valence_class: int(3)?,
                arousal_cont: num(4)?,
                arousal_class: int(5)?,
            });
        }
        Ok(LabelsFile { echo, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(values: Vec<f64>, rate: f64) -> AnnotationTrack {
        AnnotationTrack {
            movie_id: "m".into(),
            dimension: Dimension::Valence,
            kind: AnnotationKind::Experienced,
            sample_rate_hz: rate,
            values,
        }
    }

    fn window(start_s: f64, end_s: f64) -> SegmentWindow {
        SegmentWindow {
            movie_id: "m".into(),
            index: 0,
            start_s,
            end_s,
        }
    }

    #[test]
    fn five_point_quadratic_weights() {
        let w = savgol_coefficients(&SmootherConfig { window: 5, polyorder: 2 }).unwrap();
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn identity_filter() {
        let w = savgol_coefficients(&SmootherConfig { window: 1, polyorder: 0 }).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn weights_sum_to_one() {
        for window in [1usize, 3, 5, 11, 21, 51, 101] {
            for polyorder in 0..window.min(6) {
                let w = savgol_coefficients(&SmootherConfig { window, polyorder }).unwrap();
                let s: f64 = w.iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "window {window} order {polyorder}: {s}");
            }
        }
    }

    #[test]
    fn bad_smoother_configs() {
        assert!(savgol_coefficients(&SmootherConfig { window: 5, polyorder: 5 }).is_err());
        assert!(savgol_coefficients(&SmootherConfig { window: 4, polyorder: 1 }).is_err());
        assert!(savgol_coefficients(&SmootherConfig { window: 0, polyorder: 0 }).is_err());
    }

    #[test]
    fn constant_track_is_unchanged() {
        let t = track(vec![0.4; 100], 10.0);
        let s = smooth_track(&t, &SmootherConfig::default()).unwrap();
        for v in &s.values {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_ramp_reproduced_on_interior() {
        let values: Vec<f64> = (0..200).map(|t| 0.001 * (t * t) as f64).collect();
        let t = track(values.clone(), 1.0);
        let s = smooth_track(&t, &SmootherConfig { window: 11, polyorder: 3 }).unwrap();
        assert_eq!(s.values.len(), 200);
        for i in 5..195 {
            assert!((s.values[i] - values[i]).abs() < 1e-10, "sample {i}");
        }
    }

    #[test]
    fn impulse_response_center() {
        let mut values = vec![0.0; 21];
        values[10] = 1.0;
        let s = smooth_track(&track(values, 1.0), &SmootherConfig { window: 5, polyorder: 2 }).unwrap();
        assert!((s.values[10] - 17.0 / 35.0).abs() < 1e-14);
        assert!((s.values[8] + 3.0 / 35.0).abs() < 1e-14);
    }

    #[test]
    fn mirror_index_reflects_without_repeating_edge() {
        let n = 4;
        let got: Vec<usize> = (-3..7).map(|k| mirror_index(k, n)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(mirror_index(-5, 1), 0);
    }

    #[test]
    fn short_track_smooths_without_panicking() {
        let s = smooth_track(&track(vec![1.0, 2.0, 3.0], 1.0), &SmootherConfig::default()).unwrap();
        assert_eq!(s.values.len(), 3);
        assert!(s.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_unit(&track(vec![0.0, 5.0, 10.0], 1.0)).unwrap().values, vec![-1.0, 0.0, 1.0]);
        assert_eq!(rescale_unit(&track(vec![-1.0, 1.0], 1.0)).unwrap().values, vec![-1.0, 1.0]);
        assert_eq!(rescale_unit(&track(vec![3.0; 3], 1.0)).unwrap().values, vec![0.0; 3]);
        assert!(matches!(rescale_unit(&track(vec![0.0, f64::NAN], 1.0)), Err(Error::Data(_))));
    }

    #[test]
    fn segment_means() {
        assert!((segment_label(&track(vec![0.6; 100], 10.0), &window(2.5, 7.5)).unwrap() - 0.6).abs() < 1e-12);
        let t = track(vec![-1.0, -1.0, 1.0, 1.0], 1.0);
        assert_eq!(segment_label(&t, &window(0.0, 4.0)).unwrap(), 0.0);
    }

    #[test]
    fn segment_mean_of_ramp_matches_brute_force() {
        // 0→1 ramp over [0, 5) at 10 Hz; brute-force the 50 samples with t in [0, 5).
        let rate = 10.0;
        let values: Vec<f64> = (0..60).map(|i| i as f64 / 50.0).collect();
        let mut sum = 0.0;
        let mut count = 0;
        for (i, v) in values.iter().enumerate() {
            let t = i as f64 / rate;
            if (0.0..5.0).contains(&t) {
                sum += v;
                count += 1;
            }
        }
        assert_eq!(count, 50);
        let got = segment_label(&track(values, rate), &window(0.0, 5.0)).unwrap();
        assert!((got - sum / count as f64).abs() < 1e-15);
        assert!((got - 0.49).abs() < 1e-12);
    }

    #[test]
    fn window_past_end_is_invalid() {
        let t = track(vec![0.0; 40], 10.0);
        assert!(matches!(segment_label(&t, &window(0.0, 5.0)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn quantize_examples() {
        let q = QuantizerConfig::default();
        assert_eq!(quantize(0.0, &q).unwrap(), 3);
        assert_eq!(quantize(-1.0, &q).unwrap(), 0);
        assert_eq!(quantize(1.0, &q).unwrap(), 6);
        assert_eq!(quantize(0.9, &q).unwrap(), 6);
        assert!(matches!(quantize(f64::NAN, &q), Err(Error::Data(_))));
    }

    #[test]
    fn missing_track_is_config_error() {
        let t = track(vec![0.0; 60], 10.0);
        let movies = vec![("m".to_string(), vec![window(0.0, 5.0)])];
        let err = label_segments(&[t], &movies, AnnotationKind::Experienced, &LabelConfig::default());
        assert!(matches!(err, Err(Error::Config(msg)) if msg.contains("arousal")));
    }

    #[test]
    fn labels_file_round_trip() {
        let rows = vec![SegmentLabels {
            movie_id: "m".into(),
            index: 0,
            valence_cont: -0.123456789012345,
            valence_class: 3,
            arousal_cont: 0.1 + 0.2,
            arousal_class: 4,
        }];
        let f = LabelsFile::new(AnnotationKind::Intended, &LabelConfig::default(), 5.0, rows);
        let back = LabelsFile::parse(&f.render()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.echo_value("annotation_kind"), Some("intended"));
    }
}
