//! Generated Gaussian-cluster datasets for tests, demos and benchmarks.
//!
//! Annotation tracks are triangle waves, so after the label pipeline the
//! classes are close to uniform. Each target dimension gets one informative
//! modality whose rows are a class prototype plus Gaussian noise; every other
//! modality is pure noise.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{
    align_segments, write_feature_file, FeatureSet, FeatureTable, Manifest, ModalityEntry, Modality, MovieEntry,
    MANIFEST_FORMAT_VERSION,
};
use crate::labels::{label_segments, write_annotations, AnnotationKind, AnnotationTrack, Dimension, LabelConfig};

pub const ANNOTATIONS_FILE: &str = "annotations.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub movies: usize,
    pub segments_per_movie: usize,
    pub segment_length_s: f64,
    pub sample_rate_hz: f64,
    pub dim: usize,
    /// Frames stacked per feature row; pooled away on load.
    pub frames_per_row: usize,
    /// Informative modality for each target dimension (experienced labels).
    pub informative: Vec<(Dimension, Modality)>,
    /// Modalities carrying no label information.
    pub noise: Vec<Modality>,
    /// Scale of the class prototypes relative to unit noise.
    pub separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            movies: 3,
            segments_per_movie: 600,
            segment_length_s: 5.0,
            sample_rate_hz: 10.0,
            dim: 16,
            frames_per_row: 1,
            informative: vec![(Dimension::Valence, Modality::Sound), (Dimension::Arousal, Modality::Text)],
            noise: vec![Modality::Still],
            separation: 2.0,
            noise_std: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn modalities(&self) -> Vec<Modality> {
        let mut all: Vec<Modality> = self.informative.iter().map(|(_, m)| *m).chain(self.noise.iter().copied()).collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn movie_ids(&self) -> Vec<String> {
        (0..self.movies).map(|i| format!("movie_{i:02}")).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.movies == 0 || self.segments_per_movie == 0 || self.dim == 0 || self.frames_per_row == 0 {
            return Err(Error::invalid("synthetic dataset sizes must be positive"));
        }
        if !(self.sample_rate_hz > 0.0 && self.segment_length_s > 0.0) {
            return Err(Error::invalid("sample rate and segment length must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("noise_std must be non-negative and separation finite"));
        }
        let mut dims: Vec<Dimension> = self.informative.iter().map(|(d, _)| *d).collect();
        dims.sort();
        dims.dedup();
        if dims.len() != self.informative.len() {
            return Err(Error::invalid("at most one informative modality per dimension"));
        }
        let modalities: Vec<Modality> = self.informative.iter().map(|(_, m)| *m).collect();
        if self.noise.iter().any(|m| modalities.contains(m)) {
            return Err(Error::invalid("a modality cannot be both informative and noise"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: Manifest,
    /// Unpooled tables as they would be stored on disk.
    pub tables: Vec<FeatureTable>,
    pub tracks: Vec<AnnotationTrack>,
}

impl SynthDataset {
    /// Pooled in-memory feature set, equivalent to loading the written files.
    pub fn feature_set(&self) -> Result<FeatureSet> {
        let pooled = self
            .tables
            .iter()
            .map(|t| t.pooled(t.modality.default_pooling()))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureSet::from_parts(self.manifest.clone(), pooled))
    }

    /// Writes feature files, annotations and the manifest under `root`.
    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        let features = root.join("features");
        std::fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
        for entry in &self.manifest.modalities {
            for (movie, rel) in &entry.files {
                let table = self
                    .tables
                    .iter()
                    .find(|t| &t.movie_id == movie && t.modality == entry.modality)
                    .ok_or_else(|| Error::Data(format!("no {} table for {movie}", entry.modality)))?;
                write_feature_file(table, root.join(rel))?;
            }
        }
        write_annotations(&self.tracks, root.join(ANNOTATIONS_FILE))?;
        self.manifest.save(root)
    }
}

/// Triangle wave in [-1, 1] with the given period and phase (both seconds).
fn triangle(t: f64, period: f64, phase: f64) -> f64 {
    let x = ((t + phase) / period).rem_euclid(1.0);
    if x < 0.5 {
        4.0 * x - 1.0
    } else {
        3.0 - 4.0 * x
    }
}

fn track(rng: &mut ChaCha8Rng, movie: &str, dim: Dimension, kind: AnnotationKind, n: usize, rate: f64) -> AnnotationTrack {
    let period = rng.random_range(120.0..400.0);
    let phase = rng.random_range(0.0..period);
    AnnotationTrack {
        movie_id: movie.to_string(),
        dimension: dim,
        kind,
        sample_rate_hz: rate,
        values: (0..n).map(|i| triangle(i as f64 / rate, period, phase)).collect(),
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let duration = config.segments_per_movie as f64 * config.segment_length_s;
    let samples = (duration * config.sample_rate_hz).round() as usize;
    let movie_ids = config.movie_ids();

    let mut tracks = Vec::new();
    for movie in &movie_ids {
        for kind in [AnnotationKind::Experienced, AnnotationKind::Intended] {
            for dim in [Dimension::Valence, Dimension::Arousal] {
                tracks.push(track(&mut rng, movie, dim, kind, samples, config.sample_rate_hz));
            }
        }
    }

    let windows = movie_ids
        .iter()
        .map(|m| Ok((m.clone(), align_segments(m, duration, config.segment_length_s)?)))
        .collect::<Result<Vec<_>>>()?;
    let labels = label_segments(&tracks, &windows, AnnotationKind::Experienced, &LabelConfig::default())?;

    let num_classes = LabelConfig::default().quantizer.num_bins;
    let unit = Normal::new(0.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let prototypes: BTreeMap<Modality, Vec<Vec<f64>>> = config
        .informative
        .iter()
        .map(|(_, m)| {
            let protos = (0..num_classes)
                .map(|_| (0..config.dim).map(|_| config.separation * unit.sample(&mut rng)).collect())
                .collect();
            (*m, protos)
        })
        .collect();

    let mut tables = Vec::new();
    for modality in config.modalities() {
        let target = config.informative.iter().find(|(_, m)| *m == modality).map(|(d, _)| *d);
        for movie in &movie_ids {
            let mut data = Vec::with_capacity(config.segments_per_movie * config.frames_per_row * config.dim);
            for l in labels.iter().filter(|l| &l.movie_id == movie) {
                let center = target.map(|d| match d {
                    Dimension::Valence => &prototypes[&modality][l.valence_class],
                    Dimension::Arousal => &prototypes[&modality][l.arousal_class],
                });
                for _ in 0..config.frames_per_row {
                    for j in 0..config.dim {
                        let v = match center {
                            Some(c) => c[j] + noise.sample(&mut rng),
                            None => unit.sample(&mut rng),
                        };
                        data.push(v as f32);
                    }
                }
            }
            tables.push(FeatureTable::with_frames(
                movie.clone(),
                modality,
                config.dim,
                config.frames_per_row,
                data,
            )?);
        }
    }

    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        segment_length_s: config.segment_length_s,
        movies: windows
            .iter()
            .map(|(m, w)| MovieEntry {
                movie_id: m.clone(),
                duration_s: duration,
                num_segments: w.len(),
            })
            .collect(),
        modalities: config
            .modalities()
            .into_iter()
            .map(|modality| ModalityEntry {
                modality,
                dim: config.dim,
                files: movie_ids
                    .iter()
                    .map(|m| (m.clone(), format!("features/{m}.{modality}.affx")))
                    .collect(),
            })
            .collect(),
        annotations: Some(ANNOTATIONS_FILE.to_string()),
    };
    Ok(SynthDataset { manifest, tables, tracks })
}
