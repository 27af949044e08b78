#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use affuse::features::{write_feature_file, FeatureTable, Manifest, ModalityEntry, Modality, MovieEntry};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// Two 25 s movies with a small `sound` table each, plus the golden
/// annotation CSV, laid out as a dataset root.
pub fn golden_dataset(root: &Path) -> Manifest {
    std::fs::create_dir_all(root.join("features")).unwrap();
    std::fs::copy(golden_dir().join("annotations.csv"), root.join("annotations.csv")).unwrap();
    let movies = ["movie_a", "movie_b"];
    let mut files = BTreeMap::new();
    for (k, m) in movies.iter().enumerate() {
        let rows: Vec<Vec<f32>> = (0..5).map(|i| vec![i as f32, k as f32]).collect();
        let table = FeatureTable::from_rows(*m, Modality::Sound, &rows).unwrap();
        let rel = format!("features/{m}.sound.affx");
        write_feature_file(&table, root.join(&rel)).unwrap();
        files.insert(m.to_string(), rel);
    }
    let manifest = Manifest {
        format_version: 1,
        segment_length_s: 5.0,
        movies: movies
            .iter()
            .map(|m| MovieEntry {
                movie_id: m.to_string(),
                duration_s: 25.0,
                num_segments: 5,
            })
            .collect(),
        modalities: vec![ModalityEntry {
            modality: Modality::Sound,
            dim: 2,
            files,
        }],
        annotations: Some("annotations.csv".into()),
    };
    manifest.save(root).unwrap();
    manifest
}

pub fn run(args: &[&str]) -> i32 {
    let mut v = vec!["affuse"];
    v.extend_from_slice(args);
    affuse::cli::run(v)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
