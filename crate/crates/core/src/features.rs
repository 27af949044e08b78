//! Feature store: segment grid, the `AFFX` binary feature container, the
//! dataset manifest and frame pooling.
//!
//! A feature file holds one movie's features for one modality:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "AFFX"
//! 4       4     u32 LE format version (1)
//! 8       2     u16 LE modality-name length, followed by UTF-8 name
//! ..      2     u16 LE movie-id length, followed by UTF-8 id
//! ..      4     u32 LE dim
//! ..      4     u32 LE num_rows
//! ..      4     u32 LE frames_per_row (1 = pre-pooled)
//! ..            num_rows * frames_per_row * dim f32 LE, row-major
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"AFFX";
pub const FEATURE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE_NAME: &str = "manifest.affx.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SEGMENT_LENGTH_S: f64 = 5.0;

/// Input channel. The derived ordering is the canonical concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Still,
    Scene,
    Motion,
    Sound,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Still,
        Modality::Scene,
        Modality::Motion,
        Modality::Sound,
        Modality::Text,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Still => "still",
            Modality::Scene => "scene",
            Modality::Motion => "motion",
            Modality::Sound => "sound",
            Modality::Text => "text",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Modality> {
        Modality::ALL.get(code as usize).copied()
    }

    /// How frame-stacked rows of this modality collapse to one row per
    /// segment: max over frames for the image backbones, mean for the
    /// temporal ones.
    pub fn default_pooling(self) -> Pooling {
        match self {
            Modality::Still | Modality::Scene => Pooling::Max,
            Modality::Motion | Modality::Sound | Modality::Text => Pooling::Mean,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "still" => Ok(Modality::Still),
            "scene" => Ok(Modality::Scene),
            "motion" => Ok(Modality::Motion),
            "sound" => Ok(Modality::Sound),
            "text" => Ok(Modality::Text),
            other => Err(Error::invalid(format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentWindow {
    pub movie_id: String,
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// Cuts `[0, duration_s)` into contiguous windows of `segment_length` seconds.
/// A trailing partial window is dropped.
pub fn align_segments(
    movie_id: &str,
    duration_s: f64,
    segment_length: f64,
) -> Result<Vec<SegmentWindow>> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid(format!("duration must be positive, got {duration_s}")));
    }
    if !(segment_length > 0.0) || !segment_length.is_finite() {
        return Err(Error::invalid(format!(
            "segment length must be positive, got {segment_length}"
        )));
    }
    let count = segment_count(duration_s, segment_length);
    Ok((0..count)
        .map(|index| SegmentWindow {
            movie_id: movie_id.to_string(),
            index,
            start_s: index as f64 * segment_length,
            end_s: (index + 1) as f64 * segment_length,
        })
        .collect())
}

fn segment_count(duration_s: f64, segment_length: f64) -> usize {
    // Absorb representation error so that e.g. 1800 / 5 is not read as 359.999...
    let ratio = duration_s / segment_length;
    (ratio + ratio.abs() * 1e-12).floor() as usize
}

/// One movie's features for one modality.
///
/// Rows are stored row-major; a row holds `frames_per_row * dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub movie_id: String,
    pub modality: Modality,
    dim: usize,
    frames_per_row: usize,
    data: Vec<f32>,
}

impl FeatureTable {
    /// Pre-pooled table, one vector per segment.
    pub fn new(movie_id: impl Into<String>, modality: Modality, dim: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_frames(movie_id, modality, dim, 1, data)
    }

    pub fn with_frames(
        movie_id: impl Into<String>,
        modality: Modality,
        dim: usize,
        frames_per_row: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dim must be positive"));
        }
        if frames_per_row == 0 {
            return Err(Error::invalid("frames_per_row must be positive"));
        }
        if !data.len().is_multiple_of(dim * frames_per_row) {
            return Err(Error::invalid(format!(
                "{} values do not fill whole rows of {} x {}",
                data.len(),
                frames_per_row,
                dim
            )));
        }
        Ok(FeatureTable {
            movie_id: movie_id.into(),
            modality,
            dim,
            frames_per_row,
            data,
        })
    }

    pub fn from_rows(
        movie_id: impl Into<String>,
        modality: Modality,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("rows have differing lengths"));
        }
        Self::new(movie_id, modality, dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames_per_row(&self) -> usize {
        self.frames_per_row
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / (self.dim * self.frames_per_row)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// All values of row `i` (every frame, concatenated).
    pub fn row(&self, i: usize) -> &[f32] {
        let width = self.dim * self.frames_per_row;
        &self.data[i * width..(i + 1) * width]
    }

    /// Row `i` viewed as a `[frames_per_row, dim]` matrix.
    pub fn frames(&self, i: usize) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.frames_per_row, self.dim), self.row(i))
            .expect("row length is frames_per_row * dim")
    }

    /// First row containing a NaN or infinity.
    pub fn first_non_finite_row(&self) -> Option<usize> {
        let width = self.dim * self.frames_per_row;
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|pos| pos / width)
    }

    /// Collapses frame-stacked rows to one vector per segment. Pre-pooled
    /// tables are returned unchanged.
    pub fn pooled(&self, pooling: Pooling) -> Result<FeatureTable> {
        if self.frames_per_row == 1 {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.num_rows() * self.dim);
        for i in 0..self.num_rows() {
            let pooled = match pooling {
                Pooling::Max => max_pool_frames(self.frames(i))?,
                Pooling::Mean => avg_pool_frames(self.frames(i))?,
            };
            data.extend(pooled.iter());
        }
        FeatureTable::new(self.movie_id.clone(), self.modality, self.dim, data)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if let Some(row) = self.first_non_finite_row() {
            return Err(Error::NonFiniteRow { row });
        }
        let name = self.modality.as_str().as_bytes();
        let movie = self.movie_id.as_bytes();
        let movie_len = u16::try_from(movie.len())
            .map_err(|_| Error::invalid("movie id longer than 65535 bytes"))?;
        let mut out = Vec::with_capacity(32 + movie.len() + self.data.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&movie_len.to_le_bytes());
        out.extend_from_slice(movie);
        for field in [self.dim, self.num_rows(), self.frames_per_row] {
            let v = u32::try_from(field).map_err(|_| Error::invalid("header field exceeds u32"))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<FeatureTable> {
        let mut cur = ByteCursor::new(bytes);
        let magic = cur.take(4, "magic")?;
        if magic != FEATURE_MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: format!("bad magic {magic:02x?}, expected \"AFFX\""),
            });
        }
        let version_at = cur.offset();
        let version = cur.u32("version")?;
        if version != FEATURE_FORMAT_VERSION {
            return Err(Error::Format {
                offset: version_at,
                reason: format!("unsupported version {version}"),
            });
        }
        let name_at = cur.offset();
        let name = cur.string("modality name")?;
        let modality = name.parse::<Modality>().map_err(|_| Error::Format {
            offset: name_at,
            reason: format!("unknown modality {name:?}"),
        })?;
        let movie_id = cur.string("movie id")?;
        let dim_at = cur.offset();
        let dim = cur.u32("dim")? as usize;
        let num_rows = cur.u32("num_rows")? as usize;
        let fpr_at = cur.offset();
        let frames_per_row = cur.u32("frames_per_row")? as usize;
        if dim == 0 {
            return Err(Error::Format {
                offset: dim_at,
                reason: "dim is zero".into(),
            });
        }
        if frames_per_row == 0 {
            return Err(Error::Format {
                offset: fpr_at,
                reason: "frames_per_row is zero".into(),
            });
        }
        let count = num_rows
            .checked_mul(frames_per_row)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::Format {
                offset: dim_at,
                reason: "declared shape overflows".into(),
            })?;
        let payload = cur.take(count.saturating_mul(4), "feature payload")?;
        if cur.remaining() != 0 {
            return Err(Error::Format {
                offset: cur.offset(),
                reason: format!("{} trailing bytes after payload", cur.remaining()),
            });
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let table = FeatureTable::with_frames(movie_id, modality, dim, frames_per_row, data)?;
        if let Some(row) = table.first_non_finite_row() {
            return Err(Error::NonFiniteRow { row });
        }
        Ok(table)
    }
}

pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteCursor { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format {
                offset: self.offset(),
                reason: format!(
                    "truncated {what}: need {n} bytes, {} available",
                    self.remaining()
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let at = self.offset();
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset: at,
            reason: format!("{what} is not valid UTF-8"),
        })
    }
}

pub fn write_feature_file(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = table.encode()?;
    write_atomic(path, &bytes)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureTable::decode(&bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Elementwise maximum over the frames (rows) of a segment.
pub fn max_pool_frames(frames: ArrayView2<'_, f32>) -> Result<Array1<f32>> {
    if frames.nrows() == 0 {
        return Err(Error::invalid("cannot pool zero frames"));
    }
    Ok(frames.fold_axis(Axis(0), f32::NEG_INFINITY, |acc, &v| acc.max(v)))
}

/// Elementwise arithmetic mean over the frames of a segment.
pub fn avg_pool_frames(frames: ArrayView2<'_, f32>) -> Result<Array1<f32>> {
    if frames.nrows() == 0 {
        return Err(Error::invalid("cannot pool zero frames"));
    }
    let n = frames.nrows() as f64;
    let sums = frames.fold_axis(Axis(0), 0.0f64, |acc, &v| acc + v as f64);
    Ok(sums.mapv(|s| (s / n) as f32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieEntry {
    pub movie_id: String,
    pub duration_s: f64,
    pub num_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityEntry {
    pub modality: Modality,
    pub dim: usize,
    /// movie id -> feature file path, relative to the dataset root.
    pub files: BTreeMap<String, String>,
}

/// Dataset index, stored as `manifest.affx.json` at the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    #[serde(default = "default_segment_length")]
    pub segment_length_s: f64,
    pub movies: Vec<MovieEntry>,
    pub modalities: Vec<ModalityEntry>,
    /// Annotation table (CSV), relative to the dataset root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<String>,
}

fn default_segment_length() -> f64 {
    DEFAULT_SEGMENT_LENGTH_S
}

impl Manifest {
    pub fn load(root: impl AsRef<Path>) -> Result<Manifest> {
        let path = root.as_ref().join(MANIFEST_FILE_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, root: impl AsRef<Path>) -> Result<()> {
        let path = root.as_ref().join(MANIFEST_FILE_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    }

    pub fn movie(&self, movie_id: &str) -> Option<&MovieEntry> {
        self.movies.iter().find(|m| m.movie_id == movie_id)
    }

    pub fn modality(&self, modality: Modality) -> Option<&ModalityEntry> {
        self.modalities.iter().find(|m| m.modality == modality)
    }

    pub fn dims(&self) -> BTreeMap<Modality, usize> {
        self.modalities.iter().map(|m| (m.modality, m.dim)).collect()
    }

    pub fn windows(&self, movie_id: &str) -> Result<Vec<SegmentWindow>> {
        let movie = self
            .movie(movie_id)
            .ok_or_else(|| Error::Config(format!("movie {movie_id:?} not in manifest")))?;
        align_segments(&movie.movie_id, movie.duration_s, self.segment_length_s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub movie: Option<String>,
    pub modality: Option<Modality>,
    pub what: String,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "movie={} modality={}: {} (expected {}, found {})",
            self.movie.as_deref().unwrap_or("-"),
            self.modality.map_or("-", Modality::as_str),
            self.what,
            self.expected,
            self.found
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(
        &mut self,
        movie: Option<&str>,
        modality: Option<Modality>,
        what: &str,
        expected: impl ToString,
        found: impl ToString,
    ) {
        self.findings.push(Finding {
            movie: movie.map(str::to_string),
            modality,
            what: what.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
}

/// Checks every manifest invariant against the files under `root`.
/// Problems are collected as findings; nothing here fails hard.
pub fn validate_manifest(manifest: &Manifest, root: impl AsRef<Path>) -> ValidationReport {
    let root = root.as_ref();
    let mut report = ValidationReport::default();

    if manifest.format_version != MANIFEST_FORMAT_VERSION {
        report.push(None, None, "manifest format version", MANIFEST_FORMAT_VERSION, manifest.format_version);
    }
    let seg_len = manifest.segment_length_s;
    if !(seg_len > 0.0) {
        report.push(None, None, "segment length", "> 0", seg_len);
    }

    let mut seen_movies = BTreeSet::new();
    for movie in &manifest.movies {
        if !seen_movies.insert(movie.movie_id.as_str()) {
            report.push(Some(&movie.movie_id), None, "duplicate movie id", "unique", "repeated");
            continue;
        }
        if seg_len > 0.0 {
            match align_segments(&movie.movie_id, movie.duration_s, seg_len) {
                Ok(w) if w.len() == movie.num_segments => {}
                Ok(w) => report.push(
                    Some(&movie.movie_id),
                    None,
                    "segment count for duration",
                    w.len(),
                    movie.num_segments,
                ),
                Err(e) => report.push(Some(&movie.movie_id), None, "movie duration", "> 0", e),
            }
        }
    }

    let mut seen_modalities = BTreeSet::new();
    for entry in &manifest.modalities {
        let modality = entry.modality;
        if !seen_modalities.insert(modality) {
            report.push(None, Some(modality), "duplicate modality entry", "unique", "repeated");
            continue;
        }
        if entry.dim == 0 {
            report.push(None, Some(modality), "declared dim", "> 0", 0);
        }
        for movie_id in entry.files.keys() {
            if !seen_movies.contains(movie_id.as_str()) {
                report.push(Some(movie_id), Some(modality), "file for unknown movie", "listed movie", "unlisted");
            }
        }
        for movie in &manifest.movies {
            let id = movie.movie_id.as_str();
            let Some(rel) = entry.files.get(id) else {
                report.push(Some(id), Some(modality), "modality set mismatch", "present", "missing");
                continue;
            };
            let table = match read_feature_file(root.join(rel)) {
                Ok(t) => t,
                Err(e) => {
                    report.push(Some(id), Some(modality), "unreadable feature file", "valid AFFX file", e);
                    continue;
                }
            };
            if table.movie_id != id {
                report.push(Some(id), Some(modality), "file movie id", id, &table.movie_id);
            }
            if table.modality != modality {
                report.push(Some(id), Some(modality), "file modality", modality, table.modality);
            }
            if table.dim() != entry.dim {
                report.push(Some(id), Some(modality), "feature dim", entry.dim, table.dim());
            }
            if table.num_rows() != movie.num_segments {
                report.push(Some(id), Some(modality), "row count", movie.num_segments, table.num_rows());
            }
        }
    }
    report
}

/// Pooled feature tables for every (movie, modality) in a validated manifest.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub manifest: Manifest,
    pub tables: BTreeMap<(String, Modality), FeatureTable>,
}

impl FeatureSet {
    /// Loads the manifest at `root`, validates it and pools every table.
    pub fn load(root: impl AsRef<Path>) -> Result<FeatureSet> {
        let root = root.as_ref();
        let manifest = Manifest::load(root)?;
        let report = validate_manifest(&manifest, root);
        if !report.is_clean() {
            let lines: Vec<String> = report.findings.iter().map(ToString::to_string).collect();
            return Err(Error::Data(format!(
                "manifest validation failed:\n  {}",
                lines.join("\n  ")
            )));
        }
        let mut tables = BTreeMap::new();
        for entry in &manifest.modalities {
            for (movie_id, rel) in &entry.files {
                let table = read_feature_file(root.join(rel))?.pooled(entry.modality.default_pooling())?;
                tables.insert((movie_id.clone(), entry.modality), table);
            }
        }
        Ok(FeatureSet { manifest, tables })
    }

    pub fn from_parts(manifest: Manifest, tables: Vec<FeatureTable>) -> FeatureSet {
        let tables = tables
            .into_iter()
            .map(|t| ((t.movie_id.clone(), t.modality), t))
            .collect();
        FeatureSet { manifest, tables }
    }

    pub fn table(&self, movie_id: &str, modality: Modality) -> Option<&FeatureTable> {
        self.tables.get(&(movie_id.to_string(), modality))
    }

    pub fn movie_ids(&self) -> Vec<String> {
        self.manifest.movies.iter().map(|m| m.movie_id.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn align_exact_division() {
        let w = align_segments("m", 1800.0, 5.0).unwrap();
        assert_eq!(w.len(), 360);
        assert_eq!((w[0].start_s, w[0].end_s), (0.0, 5.0));
        assert_eq!((w[359].start_s, w[359].end_s), (1795.0, 1800.0));
        assert!(w.iter().enumerate().all(|(i, s)| s.index == i));
    }

    #[test]
    fn align_drops_partial_tail() {
        assert_eq!(align_segments("m", 1803.0, 5.0).unwrap().len(), 360);
        assert!(align_segments("m", 4.0, 5.0).unwrap().is_empty());
    }

    #[test]
    fn align_rejects_non_positive() {
        assert!(matches!(align_segments("m", 0.0, 5.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(align_segments("m", 10.0, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn max_pool_examples() {
        assert_eq!(max_pool_frames(array![[1.0, 5.0], [3.0, 2.0]].view()).unwrap(), array![3.0, 5.0]);
        assert_eq!(max_pool_frames(array![[7.0, -1.0]].view()).unwrap(), array![7.0, -1.0]);
        assert_eq!(max_pool_frames(array![[-2.0, -2.0], [-3.0, -1.0]].view()).unwrap(), array![-2.0, -1.0]);
    }

    #[test]
    fn avg_pool_examples() {
        assert_eq!(avg_pool_frames(array![[1.0, 5.0], [3.0, 2.0]].view()).unwrap(), array![2.0, 3.5]);
        assert_eq!(avg_pool_frames(array![[7.0, -1.0]].view()).unwrap(), array![7.0, -1.0]);
        assert_eq!(avg_pool_frames(array![[-1.0, 0.0], [1.0, 0.0]].view()).unwrap(), array![0.0, 0.0]);
    }

    #[test]
    fn pooling_empty_is_invalid() {
        let empty = ndarray::Array2::<f32>::zeros((0, 3));
        assert!(matches!(max_pool_frames(empty.view()), Err(Error::InvalidArgument(_))));
        assert!(matches!(avg_pool_frames(empty.view()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn round_trip_small_table() {
        let t = FeatureTable::new("m1", Modality::Sound, 3, vec![0.0, 1.0, -1.0, 0.5, 2.0, -2.0]).unwrap();
        let back = FeatureTable::decode(&t.encode().unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.num_rows(), 2);
    }

    #[test]
    fn altered_magic_is_format_error() {
        let t = FeatureTable::new("m1", Modality::Text, 2, vec![1.0, 2.0]).unwrap();
        let mut bytes = t.encode().unwrap();
        bytes[1] = b'X';
        assert!(matches!(FeatureTable::decode(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_reports_payload_offset() {
        let t = FeatureTable::new("m1", Modality::Text, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = t.encode().unwrap();
        let header_len = bytes.len() - 16;
        match FeatureTable::decode(&bytes[..bytes.len() - 1]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, header_len as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn nan_row_rejected_on_write() {
        let t = FeatureTable::new("m1", Modality::Still, 2, vec![0.0, 1.0, 2.0, f32::NAN, 4.0, 5.0]).unwrap();
        assert!(matches!(t.encode(), Err(Error::NonFiniteRow { row: 1 })));
    }

    #[test]
    fn frame_stacked_tables_pool_per_row() {
        let t = FeatureTable::with_frames(
            "m",
            Modality::Scene,
            2,
            2,
            vec![1.0, 5.0, 3.0, 2.0, -1.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let maxed = t.pooled(Pooling::Max).unwrap();
        assert_eq!(maxed.data(), &[3.0, 5.0, 1.0, 0.0]);
        let meaned = t.pooled(Pooling::Mean).unwrap();
        assert_eq!(meaned.data(), &[2.0, 3.5, 0.0, 0.0]);
        assert_eq!(meaned.frames_per_row(), 1);
    }

    #[test]
    fn modality_order_is_canonical() {
        let mut m = vec![Modality::Text, Modality::Still, Modality::Sound, Modality::Motion, Modality::Scene];
        m.sort();
        assert_eq!(m, Modality::ALL);
        for x in Modality::ALL {
            assert_eq!(Modality::from_code(x.code()), Some(x));
            assert_eq!(x.as_str().parse::<Modality>().unwrap(), x);
        }
    }
}
