//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use affuse::eval::{accuracy, accuracy_within_one, leave_one_out, render_report, AblationReport, EvalConfig, ReportFormat};
use affuse::features::{read_feature_file, write_feature_file, FeatureTable, Modality};
use affuse::fusion::{build_model, FusionModel, ModalityCombo, ModelShape};
use affuse::labels::{
    attach_features, label_segments, quantize, savgol_coefficients, smooth_track, AnnotationKind, AnnotationTrack,
    Dimension, LabelConfig, LabeledSegment, QuantizerConfig, SmootherConfig,
};
use affuse::nn::{argmax, mean_loss, softmax_t, TrainConfig};
use affuse::synth::{generate, SynthConfig};
use affuse::training::{evaluate_loss, split_validation, train_fold, EarlyStopping};
use affuse::Error;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------- gradients

struct GradStats {
    checked: usize,
    skipped: usize,
    worst: f64,
}

fn relu_pattern(model: &FusionModel, inputs: &[Array2<f64>]) -> Vec<bool> {
    let acts = model.forward_batch(inputs).unwrap();
    acts.proj_pre
        .iter()
        .chain([&acts.hidden_pre])
        .flat_map(|a| a.iter().map(|v| *v > 0.0).collect::<Vec<_>>())
        .collect()
}

fn loss_of(model: &FusionModel, inputs: &[Array2<f64>], targets: &[usize], t: f64) -> f64 {
    let logits = model.forward_batch(inputs).unwrap().logits;
    mean_loss(logits.view(), targets, t).unwrap()
}

fn gradient_case(seed: u64, stats: &mut GradStats) -> Result<(), String> {
    const H: f64 = 1e-4;
    const TOL: f64 = 1e-4;
    // Entries whose true value is below this cannot be resolved by a central
    // difference at H; the error is measured against it instead.
    const FLOOR: f64 = 1e-8;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=3);
    let mut pool = Modality::ALL.to_vec();
    pool.shuffle(&mut rng);
    let dims: BTreeMap<Modality, usize> = pool[..k].iter().map(|m| (*m, rng.random_range(1..=16))).collect();
    let combo = ModalityCombo::new(dims.keys().copied()).unwrap();
    let shape = ModelShape {
        proj_dim: rng.random_range(2..=8),
        hidden_dim: rng.random_range(2..=12),
        num_classes: rng.random_range(2..=7),
    };
    let mut model = build_model(&dims, &combo, Dimension::Valence, &shape, seed).unwrap();
    for layer in model.layers_mut() {
        layer.bias.mapv_inplace(|_| 0.1 * normal(&mut rng));
    }
    let batch = rng.random_range(1..=6);
    let inputs: Vec<Array2<f64>> = dims
        .values()
        .map(|&d| Array2::from_shape_fn((batch, d), |_| normal(&mut rng)))
        .collect();
    let targets: Vec<usize> = (0..batch).map(|_| rng.random_range(0..shape.num_classes)).collect();
    let t = [0.5, 1.0, 2.0][rng.random_range(0..3)];

    let (_, grads) = model.loss_and_grads(&inputs, &targets, t).map_err(|e| e.to_string())?;
    let analytic: Vec<(Array2<f64>, ndarray::Array1<f64>)> =
        grads.layers().iter().map(|g| (g.weights.clone(), g.bias.clone())).collect();
    let base_pattern = relu_pattern(&model, &inputs);

    let n_layers = analytic.len();
    for li in 0..n_layers {
        let (rows, cols) = analytic[li].0.dim();
        // Weight entries, then bias entries (col == cols).
        for r in 0..rows {
            for c in 0..=cols {
                let a = if c < cols { analytic[li].0[[r, c]] } else { analytic[li].1[r] };
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    let layer = &mut m.layers_mut()[li];
                    if c < cols {
                        layer.weights[[r, c]] += delta;
                    } else {
                        layer.bias[r] += delta;
                    }
                    (loss_of(&m, &inputs, &targets, t), relu_pattern(&m, &inputs))
                };
                let (lp, pp) = eval(H);
                let (lm, pm) = eval(-H);
                if pp != base_pattern || pm != base_pattern {
                    stats.skipped += 1;
                    continue;
                }
                let numeric = (lp - lm) / (2.0 * H);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
                stats.checked += 1;
                stats.worst = stats.worst.max(rel);
                check(rel < TOL, || {
                    format!("model {seed} layer {li} entry ({r},{c}): analytic {a:e} numeric {numeric:e} rel {rel:e}")
                })?;
            }
        }
    }
    Ok(())
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut stats = GradStats {
        checked: 0,
        skipped: 0,
        worst: 0.0,
    };
    for seed in 0..100 {
        gradient_case(1000 + seed, &mut stats)?;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    check(stats.checked > 10 * stats.skipped, || {
        format!("too many entries skipped at ReLU kinks: {} of {}", stats.skipped, stats.checked)
    })?;
    Ok(format!(
        "100 models, {} entries checked, {} skipped at ReLU kinks, worst rel err {:.2e}, {:.1?}",
        stats.checked, stats.skipped, stats.worst, elapsed
    ))
}

// ------------------------------------------------------------------ softmax

fn softmax_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let n = rng.random_range(2..=16);
        let scale = [1.0, 10.0, 100.0, 1e3, 1e4][i % 5];
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        let want = argmax(&z);
        for t in [0.5, 1.0, 2.0, 10.0] {
            let p = softmax_t(&z, t).map_err(|e| e.to_string())?;
            let sum: f64 = p.iter().sum();
            worst = worst.max((sum - 1.0).abs());
            check(p.iter().all(|v| (0.0..=1.0).contains(v)), || format!("vector {i}: probability outside [0,1]"))?;
            check((sum - 1.0).abs() <= 1e-6, || format!("vector {i} T={t}: sum {sum}"))?;
            check(argmax(&p) == want, || format!("vector {i} T={t}: argmax moved"))?;
        }
    }
    Ok(format!("10000 vectors x 4 temperatures, worst |sum-1| {worst:.1e}"))
}

// ----------------------------------------------------------- savitzky-golay

/// Direct least-squares fit over the mirrored window around each sample,
/// evaluated at the window centre.
fn lstsq_smooth(x: &[f64], window: usize, order: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let half = (window / 2) as isize;
    let design = DMatrix::from_fn(window, order + 1, |r, c| (r as f64 - half as f64).powi(c as i32));
    let svd = design.svd(true, true);
    let mirror = |k: isize| -> usize {
        let period = 2 * (n - 1);
        let m = k.rem_euclid(period);
        (if m >= n { period - m } else { m }) as usize
    };
    (0..n)
        .map(|i| {
            let b = DVector::from_fn(window, |r, _| x[mirror(i - half + r as isize)]);
            svd.solve(&b, 1e-14).unwrap()[0]
        })
        .collect()
}

fn track(values: Vec<f64>) -> AnnotationTrack {
    AnnotationTrack {
        movie_id: "m".into(),
        dimension: Dimension::Valence,
        kind: AnnotationKind::Experienced,
        sample_rate_hz: 10.0,
        values,
    }
}

fn savgol_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut worst_poly = 0.0f64;
    for i in 0..1000 {
        let window = [5, 11, 51][i % 3];
        let order = 1 + (i / 3) % 3;
        let cfg = SmootherConfig { window, polyorder: order };
        let n = rng.random_range(window..=window + 150);
        let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let got = smooth_track(&track(x.clone()), &cfg).map_err(|e| e.to_string())?.values;
        let want = lstsq_smooth(&x, window, order);
        for (j, (g, w)) in got.iter().zip(&want).enumerate() {
            let err = (g - w).abs();
            worst = worst.max(err);
            check(err <= 1e-8, || format!("signal {i} (w={window}, p={order}) sample {j}: {g} vs {w}"))?;
        }

        // Polynomial of degree <= order is reproduced on interior points.
        let degree = rng.random_range(0..=order);
        let coef: Vec<f64> = (0..=degree).map(|_| normal(&mut rng)).collect();
        let poly: Vec<f64> = (0..n)
            .map(|k| {
                let u = 2.0 * k as f64 / n as f64 - 1.0;
                coef.iter().rev().fold(0.0, |acc, c| acc * u + c)
            })
            .collect();
        let smoothed = smooth_track(&track(poly.clone()), &cfg).map_err(|e| e.to_string())?.values;
        let half = window / 2;
        for k in half..n - half {
            let err = (smoothed[k] - poly[k]).abs();
            worst_poly = worst_poly.max(err);
            check(err <= 1e-10, || format!("polynomial {i} sample {k}: error {err:e}"))?;
        }
    }
    let w = savgol_coefficients(&SmootherConfig { window: 5, polyorder: 2 }).map_err(|e| e.to_string())?;
    let expect = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
    check(w.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-12), || format!("5/2 weights {w:?}"))?;
    Ok(format!(
        "1000 signals, worst fit error {worst:.1e}, worst polynomial error {worst_poly:.1e}"
    ))
}

// ---------------------------------------------------------- quantizer, metrics

fn quantizer_metric_suite() -> Outcome {
    let cfg = QuantizerConfig::default();
    let q = |v: f64| quantize(v, &cfg).unwrap();
    check(q(0.0) == 3, || "0.0 should map to class 3".into())?;
    check(q(-1.0) == 0, || "-1.0 should map to class 0".into())?;
    check(q(1.0) == 6, || "+1.0 should map to class 6".into())?;
    check(q(0.9) == 6, || "0.9 should map to class 6".into())?;
    check(matches!(quantize(f64::NAN, &cfg), Err(Error::Data(_))), || "NaN must be a data error".into())?;

    // Dense sweep: classes never decrease, every class appears, and each
    // class is one contiguous run whose edges sit on the uniform bin edges.
    let steps = 700_000;
    let mut prev = 0;
    let mut seen = BTreeSet::new();
    let mut changes = Vec::new();
    for s in 0..=steps {
        let v = -1.0 + 2.0 * s as f64 / steps as f64;
        let c = q(v);
        check(c >= prev, || format!("class decreased at {v}"))?;
        if c != prev {
            changes.push(v);
        }
        prev = c;
        seen.insert(c);
    }
    check(seen.len() == 7, || format!("only {} classes reached", seen.len()))?;
    check(changes.len() == 6, || format!("{} class boundaries, expected 6", changes.len()))?;
    for (k, v) in changes.iter().enumerate() {
        let edge = -1.0 + 2.0 * (k + 1) as f64 / 7.0;
        check((v - edge).abs() <= 2.0 / steps as f64 + 1e-12, || format!("boundary {k} at {v}, expected {edge}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let preds: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..7)).collect();
    let labels: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..7)).collect();
    for i in 0..preds.len() {
        let (a, a1) = (
            accuracy(&preds[i..=i], &labels[i..=i]).unwrap(),
            accuracy_within_one(&preds[i..=i], &labels[i..=i]).unwrap(),
        );
        check(a1 >= a, || format!("pair {i}: within-one below exact"))?;
    }
    let (a, a1) = (accuracy(&preds, &labels).unwrap(), accuracy_within_one(&preds, &labels).unwrap());
    check(a1 >= a, || "pooled within-one below exact".into())?;
    check(accuracy_within_one(&[0, 2, 6], &[1, 4, 6]).unwrap() == 2.0 / 3.0, || "[0,2,6] vs [1,4,6]".into())?;
    Ok(format!("7 contiguous bins over [-1,1]; 10000 pairs, acc {a:.3} <= acc±1 {a1:.3}"))
}

// ---------------------------------------------------------------- end to end

fn synthetic_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SynthConfig::default();
    let data = generate(&cfg).map_err(|e| e.to_string())?;
    data.write(dir.path()).map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let combos = "sound,still+sound,text,still+text,sound+text,still";
    let start = Instant::now();
    let code = common::run(&[
        "ablate",
        "--dataset",
        common::s(dir.path()),
        "--combos",
        combos,
        "--target",
        "both",
        "--jobs",
        "1",
        "--out",
        common::s(&out),
    ]);
    let elapsed = start.elapsed();
    check(code == 0, || format!("ablate exited with {code}"))?;
    let report: AblationReport = serde_json::from_str(
        &std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;

    let informative: BTreeMap<Dimension, Modality> = cfg.informative.iter().copied().collect();
    let mut summary = Vec::new();
    for row in &report.rows {
        let combo = row.combo.clone().ok_or("row without combo")?;
        for (dim, cell) in [(Dimension::Arousal, row.arousal), (Dimension::Valence, row.valence)] {
            let cell = cell.ok_or_else(|| format!("{combo} {dim}: missing cell"))?;
            let acc = cell.accuracy;
            if combo.contains(informative[&dim]) {
                check(acc >= 0.9, || format!("{combo} {dim}: accuracy {acc:.4} < 0.9"))?;
            } else if combo.modalities().iter().all(|m| cfg.noise.contains(m)) {
                check((acc - 1.0 / 7.0).abs() <= 0.06, || format!("{combo} {dim}: accuracy {acc:.4} not near 1/7"))?;
            }
            summary.push(format!("{combo}/{dim}={:.1}%", acc * 100.0));
        }
    }
    check(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{} in {:.1?}", summary.join(" "), elapsed))
}

// --------------------------------------------------------------- LOO accounting

fn synth_segments(cfg: &SynthConfig) -> (Vec<LabeledSegment>, BTreeMap<Modality, usize>) {
    let data = generate(cfg).unwrap();
    let features = data.feature_set().unwrap();
    let windows: Vec<_> = cfg
        .movie_ids()
        .iter()
        .map(|m| (m.clone(), features.manifest.windows(m).unwrap()))
        .collect();
    let labels = label_segments(&data.tracks, &windows, AnnotationKind::Experienced, &LabelConfig::default()).unwrap();
    (attach_features(&labels, &features).unwrap(), features.manifest.dims())
}

fn loo_accounting() -> Outcome {
    let fast = EvalConfig {
        train: TrainConfig {
            epochs: 6,
            patience: 3,
            ..TrainConfig::default()
        },
        shape: ModelShape {
            proj_dim: 8,
            hidden_dim: 8,
            num_classes: 7,
        },
        ..EvalConfig::default()
    };
    let mut lines = Vec::new();
    for movies in [2usize, 4, 5] {
        let cfg = SynthConfig {
            movies,
            segments_per_movie: 40 + 7 * movies,
            dim: 4,
            seed: movies as u64,
            ..SynthConfig::default()
        };
        let (segments, dims) = synth_segments(&cfg);
        let combo: ModalityCombo = "text+sound".parse().unwrap();
        let res = leave_one_out(&segments, &dims, &combo, Dimension::Arousal, &fast).map_err(|e| e.to_string())?;
        check(res.folds.len() == movies, || format!("{} folds for {movies} movies", res.folds.len()))?;
        let mut tested = BTreeMap::new();
        for fold in &res.folds {
            let f = fold.completed().ok_or_else(|| format!("fold {} failed", fold.held_out_movie()))?;
            check(!f.train_movies.contains(&f.held_out_movie), || format!("{} trained on itself", f.held_out_movie))?;
            check(f.train_movies.len() == movies - 1, || "training movie count".into())?;
            check(f.accuracy_within_one >= f.accuracy, || "within-one below exact".into())?;
            check((f.confusion.accuracy() - f.accuracy).abs() < 1e-12, || "confusion disagrees".into())?;
            for p in &f.predictions {
                check(p.movie_id == f.held_out_movie, || "foreign test segment".into())?;
                *tested.entry((p.movie_id.clone(), p.index)).or_insert(0) += 1;
            }
        }
        let all: BTreeSet<_> = segments.iter().map(|s| (s.movie_id().to_string(), s.window.index)).collect();
        check(tested.len() == all.len() && tested.values().all(|&c| c == 1), || {
            "not every segment tested exactly once".into()
        })?;
        check(tested.keys().cloned().collect::<BTreeSet<_>>() == all, || "tested set differs".into())?;
        check(res.aggregate.num_test_segments == segments.len(), || "aggregate size".into())?;

        let combos = [combo.clone(), "still".parse().unwrap()];
        let run = |jobs: usize| {
            let cfg = EvalConfig { jobs, ..fast };
            let r = affuse::eval::ablation_run(&segments, &dims, &combos, &Dimension::ALL, AnnotationKind::Experienced, &cfg)
                .unwrap();
            (
                render_report(&r, ReportFormat::TextTable),
                render_report(&r, ReportFormat::Delimited),
                serde_json::to_string(&r).unwrap(),
            )
        };
        let first = run(1);
        check(first == run(1), || "reports differ between identical runs".into())?;
        check(first == run(3), || "reports depend on worker count".into())?;
        lines.push(format!("{movies} movies/{} segments", segments.len()));
    }
    Ok(format!("{}; reports byte-identical across runs and job counts", lines.join(", ")))
}

// ------------------------------------------------------------- early stopping

fn early_stopping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for b in 1..=50usize {
        for variant in 0..3 {
            let mut losses: Vec<f64> = (1..=b).map(|e| 10.0 - e as f64 * 0.1).collect();
            let best = losses[b - 1];
            losses.extend((b + 1..=50).map(|e| match variant {
                0 => best,
                1 => best + 0.5 + (e as f64).sin().abs(),
                _ => best + rng.random_range(0.0..1.0),
            }));
            let params: Vec<Vec<f64>> = (0..50).map(|_| (0..5).map(|_| normal(&mut rng)).collect()).collect();
            let mut stopper = EarlyStopping::new(25);
            let mut stopped = 50;
            for epoch in 1..=50 {
                if stopper.observe(epoch, losses[epoch - 1], || params[epoch - 1].clone()) {
                    stopped = epoch;
                    break;
                }
            }
            let want = 50.min(b + 25);
            check(stopped == want, || format!("best {b} variant {variant}: stopped {stopped}, expected {want}"))?;
            check(stopper.best_epoch() == b, || format!("best epoch {} != {b}", stopper.best_epoch()))?;
            let restored = stopper.into_best().unwrap();
            check(restored == params[b - 1], || format!("best {b}: parameters not restored exactly"))?;
        }
    }

    // Real training run on a noise-only modality, which overfits early: the
    // run must stop before the epoch budget and return the best snapshot.
    let cfg = SynthConfig {
        movies: 2,
        segments_per_movie: 80,
        dim: 16,
        ..SynthConfig::default()
    };
    let (segments, dims) = synth_segments(&cfg);
    let refs: Vec<&LabeledSegment> = segments.iter().collect();
    let (train, val) = split_validation(&refs, 0.25).unwrap();
    let shape = ModelShape {
        proj_dim: 32,
        hidden_dim: 64,
        num_classes: 7,
    };
    let combo: ModalityCombo = "still".parse().unwrap();
    let model = build_model(&dims, &combo, Dimension::Valence, &shape, 1).unwrap();
    let tc = TrainConfig {
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let (best, history) = train_fold(&train, &val, model, &tc).map_err(|e| e.to_string())?;
    let b = history.best_epoch;
    check(b + 25 < 50, || format!("trained run never stopped early (best epoch {b})"))?;
    check(history.stopped_epoch == 50.min(b + 25), || {
        format!("trained run: best {b}, stopped {}", history.stopped_epoch)
    })?;
    let (loss, _) = evaluate_loss(&best, &val, tc.temperature).unwrap();
    let recorded = history.epochs[b - 1].val_loss;
    check(loss == recorded, || format!("restored model val loss {loss} != epoch {b} loss {recorded}"))?;
    Ok(format!(
        "150 synthetic histories exact; trained run best {b}, stopped {}",
        history.stopped_epoch
    ))
}

// ------------------------------------------------------------------- formats

fn random_table(rng: &mut ChaCha8Rng, i: usize) -> FeatureTable {
    let dim = rng.random_range(1..=32);
    let frames = rng.random_range(1..=4);
    let rows = rng.random_range(0..=20);
    let modality = Modality::ALL[rng.random_range(0..5)];
    let data: Vec<f32> = (0..dim * frames * rows)
        .map(|_| loop {
            let v = f32::from_bits(rng.random());
            if v.is_finite() {
                break v;
            }
        })
        .collect();
    FeatureTable::with_frames(format!("film-{i}_é"), modality, dim, frames, data).unwrap()
}

fn format_offset(bytes: &[u8]) -> Option<u64> {
    match FeatureTable::decode(bytes) {
        Err(Error::Format { offset, .. }) => Some(offset),
        _ => None,
    }
}

fn format_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000 {
        let t = random_table(&mut rng, i);
        let path = dir.path().join(format!("t{i}.affx"));
        write_feature_file(&t, &path).map_err(|e| e.to_string())?;
        let back = read_feature_file(&path).map_err(|e| e.to_string())?;
        let same_bits = back.data().iter().map(|v| v.to_bits()).eq(t.data().iter().map(|v| v.to_bits()));
        check(
            same_bits
                && back.movie_id == t.movie_id
                && back.modality == t.modality
                && back.dim() == t.dim()
                && back.frames_per_row() == t.frames_per_row(),
            || format!("table {i} changed on round trip"),
        )?;
    }

    let t = FeatureTable::new("m1", Modality::Sound, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let good = t.encode().unwrap();
    // magic 0..4, version 4..8, name len 8..10, "sound" 10..15, id len 15..17,
    // "m1" 17..19, dim 19..23, rows 23..27, frames 27..31.
    let corrupt = |at: usize, bytes: &[u8]| {
        let mut b = good.clone();
        b[at..at + bytes.len()].copy_from_slice(bytes);
        b
    };
    let cases: [(&str, Vec<u8>, u64); 5] = [
        ("magic", corrupt(0, b"AFFY"), 0),
        ("version", corrupt(4, &2u32.to_le_bytes()), 4),
        ("modality", corrupt(10, b"noise"), 8),
        ("dim", corrupt(19, &0u32.to_le_bytes()), 19),
        ("frames_per_row", corrupt(27, &0u32.to_le_bytes()), 27),
    ];
    for (what, bytes, offset) in cases {
        let got = format_offset(&bytes);
        check(got == Some(offset), || format!("corrupt {what}: got offset {got:?}, expected {offset}"))?;
    }
    for cut in 0..31 {
        let got = format_offset(&good[..cut]);
        check(got.is_some_and(|o| o <= cut as u64), || format!("header cut at {cut}: {got:?}"))?;
    }
    let mut nan = good.clone();
    nan[31 + 8..31 + 12].copy_from_slice(&f32::NAN.to_le_bytes());
    check(matches!(FeatureTable::decode(&nan), Err(Error::NonFiniteRow { row: 1 })), || "NaN row".into())?;
    Ok("1000 tables bit-exact; 5 corrupt headers and 31 truncations rejected with offsets".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient oracle", gradient_oracle),
        ("softmax/temperature", softmax_suite),
        ("savitzky-golay oracle", savgol_oracle),
        ("quantizer/metrics", quantizer_metric_suite),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("leave-one-out accounting", loo_accounting),
        ("early stopping", early_stopping),
        ("format round-trip", format_round_trip),
    ];
    let mut results = Vec::new();
    for (name, f) in criteria {
        let start = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        results.push((name, r, start.elapsed()));
    }
    println!();
    println!("acceptance criteria");
    let mut failed = 0;
    for (name, r, t) in &results {
        match r {
            Ok(detail) => println!("PASS  {name:<26} {detail} [{t:.1?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} {why} [{t:.1?}]");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
