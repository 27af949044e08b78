//! Mini-batch training with a temporal validation split and early stopping
//! on validation loss.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionModel;
use crate::labels::LabeledSegment;
use crate::nn::{self, TrainConfig};

/// Default share of each training movie's timeline held out for validation.
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

/// Rows evaluated per forward pass when scoring a validation set.
const EVAL_CHUNK: usize = 1024;

/// Shuffles `0..len` with a stream keyed by `(seed, epoch)` and cuts it into
/// batches. The final short batch is kept.
pub fn make_batches(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if len == 0 {
        return Err(Error::invalid("cannot batch an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Temporal split: the last `fraction` of every movie's segments (by index)
/// become validation data. Each movie contributes at least one segment to
/// both sides.
pub fn split_validation<'a>(
    segments: &[&'a LabeledSegment],
    fraction: f64,
) -> Result<(Vec<&'a LabeledSegment>, Vec<&'a LabeledSegment>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("validation fraction must be in (0, 1), got {fraction}")));
    }
    let mut movies: Vec<&str> = Vec::new();
    for s in segments {
        if !movies.contains(&s.movie_id()) {
            movies.push(s.movie_id());
        }
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for movie in movies {
        let mut own: Vec<&LabeledSegment> = segments.iter().copied().filter(|s| s.movie_id() == movie).collect();
        if own.len() < 2 {
            return Err(Error::Config(format!(
                "movie {movie} has {} segment(s); a validation split needs at least 2",
                own.len()
            )));
        }
        own.sort_by_key(|s| s.window.index);
        let n = own.len();
        let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        val.extend_from_slice(&own[n - n_val..]);
        train.extend_from_slice(&own[..n - n_val]);
    }
    Ok((train, val))
}

/// Tracks the best validation loss and decides when to stop.
///
/// Training stops after `patience` consecutive epochs without a strict
/// improvement, i.e. at epoch `best_epoch + patience`.
#[derive(Debug, Clone)]
pub struct EarlyStopping<P> {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    best: Option<P>,
}

impl<P> EarlyStopping<P> {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            best: None,
        }
    }

    /// Records an epoch's validation loss; `snapshot` is only called on a new
    /// best. Returns `true` when training should stop.
    pub fn observe(&mut self, epoch: usize, val_loss: f64, snapshot: impl FnOnce() -> P) -> bool {
        if val_loss < self.best_loss || self.best.is_none() {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.best = Some(snapshot());
        }
        epoch >= self.best_epoch + self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn into_best(self) -> Option<P> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# best_epoch={}\n# stopped_epoch={}\n", self.best_epoch, self.stopped_epoch);
        out.push_str("epoch,train_loss,val_loss,val_acc\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.val_acc);
        }
        out
    }
}

/// Feature matrices and targets for a fixed list of segments.
struct Prepared {
    inputs: Vec<Array2<f64>>,
    targets: Vec<usize>,
}

impl Prepared {
    fn new(model: &FusionModel, segments: &[&LabeledSegment]) -> Result<Prepared> {
        Ok(Prepared {
            inputs: model.gather_inputs(segments)?,
            targets: segments.iter().map(|s| s.class(model.target)).collect(),
        })
    }

    fn len(&self) -> usize {
        self.targets.len()
    }

    fn select(&self, rows: &[usize]) -> (Vec<Array2<f64>>, Vec<usize>) {
        (
            self.inputs.iter().map(|x| x.select(Axis(0), rows)).collect(),
            rows.iter().map(|&i| self.targets[i]).collect(),
        )
    }
}

/// Mean loss and accuracy of `model` on a prepared set, with frozen
/// parameters.
fn score(model: &FusionModel, data: &Prepared, temperature: f64) -> Result<(f64, f64)> {
    let n = data.len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let (inputs, targets) = if start == 0 && end == n {
            (data.inputs.clone(), data.targets.clone())
        } else {
            data.select(&rows)
        };
        let logits = model.forward_batch(&inputs)?.logits;
        loss_sum += nn::mean_loss(logits.view(), &targets, temperature)? * (end - start) as f64;
        correct += logits
            .outer_iter()
            .zip(&targets)
            .filter(|(row, &t)| nn::argmax(row.as_slice().expect("standard layout")) == t)
            .count();
        start = end;
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

/// Mean validation loss and accuracy of a model on the given segments.
pub fn evaluate_loss(model: &FusionModel, segments: &[&LabeledSegment], temperature: f64) -> Result<(f64, f64)> {
    if segments.is_empty() {
        return Err(Error::invalid("cannot score an empty segment set"));
    }
    score(model, &Prepared::new(model, segments)?, temperature)
}

/// Trains `model` with mini-batch SGD and early stopping on validation loss.
/// Returns the parameters from the best validation epoch.
pub fn train_fold(
    train: &[&LabeledSegment],
    val: &[&LabeledSegment],
    mut model: FusionModel,
    config: &TrainConfig,
) -> Result<(FusionModel, TrainHistory)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let train_keys: HashSet<(&str, usize)> = train.iter().map(|s| (s.movie_id(), s.window.index)).collect();
    if let Some(s) = val.iter().find(|s| train_keys.contains(&(s.movie_id(), s.window.index))) {
        return Err(Error::invalid(format!(
            "segment {}#{} is in both training and validation sets",
            s.movie_id(),
            s.window.index
        )));
    }
    let num_classes = model.num_classes();
    if let Some(s) = train.iter().chain(val).find(|s| s.class(model.target) >= num_classes) {
        return Err(Error::Data(format!(
            "segment {}#{} has class {} but the model has {num_classes} outputs",
            s.movie_id(),
            s.window.index,
            s.class(model.target)
        )));
    }

    let train_data = Prepared::new(&model, train)?;
    let val_data = Prepared::new(&model, val)?;
    let mut stopper = EarlyStopping::new(config.patience);
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let batches = make_batches(train_data.len(), config.batch_size, config.seed, epoch as u64)?;
        let mut loss_sum = 0.0;
        for (b, rows) in batches.iter().enumerate() {
            let (inputs, targets) = train_data.select(rows);
            let (loss, grads) = model.loss_and_grads(&inputs, &targets, config.temperature)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: b,
                    reason: format!("non-finite training loss {loss}"),
                });
            }
            model
                .apply_sgd(&grads, config.learning_rate, config.weight_decay)
                .map_err(|e| Error::Training {
                    epoch,
                    batch: b,
                    reason: e.to_string(),
                })?;
            loss_sum += loss * rows.len() as f64;
        }
        let (val_loss, val_acc) = score(&model, &val_data, config.temperature)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                batch: batches.len(),
                reason: format!("non-finite validation loss {val_loss}"),
            });
        }
        records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            val_loss,
            val_acc,
        });
        if stopper.observe(epoch, val_loss, || model.clone()) {
            break;
        }
    }

    let history = TrainHistory {
        best_epoch: stopper.best_epoch(),
        stopped_epoch: records.len(),
        epochs: records,
    };
    let best = stopper.into_best().expect("at least one epoch observed");
    Ok((best, history))
}
