//! Training and evaluation.
//!
//! One run trains a freshly seeded model with Adagrad on mini-batches of a
//! shuffled training set, logging train and validation loss/accuracy at
//! fixed fractions of the epoch, then scores a test set. An experiment
//! repeats the run over several seeds and summarizes the test AUCs.

mod adagrad;
mod metrics;
mod report;

pub use adagrad::{Adagrad, DEFAULT_EPS, DEFAULT_LR};
pub use metrics::{accuracy, auc, mean_bce};
pub use report::{
    decile_means, read_summary_csv, stats, summarize, write_auc_csv, write_batch_losses_csv,
    write_metrics_csv, write_summary_csv, write_table_csv, MetricRow, RunReport, Split, Summary,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::EventPoint;
use crate::error::{Error, Result};
use crate::model::{Input, ModelConfig, TbsmModel};
use crate::params::{GradBuffer, ParamGrads};
use crate::synthetic::SynthPoint;

/// Anything the model can be trained on.
pub trait Example: Sync {
    fn input(&self) -> Input<'_>;
    fn label(&self) -> u8;
}

impl Example for SynthPoint {
    fn input(&self) -> Input<'_> {
        Input::Embedded {
            history: &self.history,
            last: &self.last,
        }
    }

    fn label(&self) -> u8 {
        self.label
    }
}

impl Example for EventPoint {
    fn input(&self) -> Input<'_> {
        Input::Events(&self.events)
    }

    fn label(&self) -> u8 {
        self.label
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adagrad_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Number of logging points per epoch.
    pub log_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LR,
            adagrad_eps: DEFAULT_EPS,
            batch_size: 128,
            epochs: 1,
            log_points: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite())
            || self.adagrad_eps.is_nan()
            || self.adagrad_eps <= 0.0
        {
            return Err(Error::Config(format!(
                "invalid optimizer settings lr={} eps={}",
                self.learning_rate, self.adagrad_eps
            )));
        }
        Ok(())
    }
}

/// Scores and summary metrics of one model on one set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub scores: Vec<f64>,
    pub loss: f64,
    pub accuracy: f64,
    /// `None` when the set holds a single class.
    pub auc: Option<f64>,
}

/// Predictions on every example, in order.
pub fn predict_all<E: Example>(model: &TbsmModel, examples: &[E]) -> Result<Vec<f64>> {
    examples
        .par_iter()
        .map(|e| model.predict(e.input()).map(|p| p.p))
        .collect()
}

pub fn evaluate<E: Example>(model: &TbsmModel, examples: &[E]) -> Result<EvalReport> {
    let scores = predict_all(model, examples)?;
    let labels: Vec<u8> = examples.iter().map(Example::label).collect();
    let auc = match auc(&scores, &labels) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        loss: mean_bce(&scores, &labels)?,
        accuracy: accuracy(&scores, &labels)?,
        auc,
        scores,
    })
}

/// Per-batch record of an epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochLog {
    /// Mean training loss of every batch, before its update.
    pub batch_losses: Vec<f64>,
    pub rows: Vec<MetricRow>,
}

/// Mean loss, accuracy and gradient of one batch.
fn batch_gradient<E: Example>(
    model: &TbsmModel,
    batch: &[&E],
    grads: &mut GradBuffer,
) -> Result<(f64, f64)> {
    let results: Vec<(f64, f64, ParamGrads)> = batch
        .par_iter()
        .map(|e| model.loss_and_grads(e.input(), e.label() as f64))
        .collect::<Result<_>>()?;
    grads.clear();
    let scale = 1.0 / batch.len() as f64;
    let (mut loss, mut hits) = (0.0, 0usize);
    for ((l, p, g), e) in results.iter().zip(batch) {
        grads.add(g, scale);
        loss += l;
        hits += usize::from(u8::from(*p > 0.5) == e.label());
    }
    Ok((loss * scale, hits as f64 * scale))
}

/// Trains `model` on `train` for the configured number of epochs.
///
/// Each epoch visits a fresh shuffle drawn from `seed`. Train metrics are
/// averaged over the batches since the previous logging point; validation
/// metrics are computed on `valid` at each logging point when it is
/// non-empty.
pub fn train<E: Example>(
    model: &mut TbsmModel,
    train: &[E],
    valid: &[E],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<EpochLog> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    let mut opt = Adagrad::new(&model.params, cfg.learning_rate, cfg.adagrad_eps);
    let mut grads = GradBuffer::zeros_like(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);
    let log_at: Vec<usize> = (1..=cfg.log_points.max(1))
        .map(|i| (i * batches_per_epoch).div_ceil(cfg.log_points.max(1)))
        .collect();

    let mut log = EpochLog::default();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        let mut order: Vec<&E> = train.iter().collect();
        order.shuffle(&mut rng);
        let (mut acc_loss, mut acc_hits, mut acc_n) = (0.0, 0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, hit_rate) = batch_gradient(model, batch, &mut grads)?;
            opt.step(&mut model.params, &grads)?;
            step += 1;
            log.batch_losses.push(loss);
            acc_loss += loss * batch.len() as f64;
            acc_hits += hit_rate * batch.len() as f64;
            acc_n += batch.len();
            if log_at.contains(&(b + 1)) && acc_n > 0 {
                log.rows.push(MetricRow {
                    seed,
                    step,
                    split: Split::Train,
                    loss: acc_loss / acc_n as f64,
                    accuracy: acc_hits / acc_n as f64,
                });
                (acc_loss, acc_hits, acc_n) = (0.0, 0.0, 0);
                if !valid.is_empty() {
                    let v = evaluate(model, valid)?;
                    log.rows.push(MetricRow {
                        seed,
                        step,
                        split: Split::Validation,
                        loss: v.loss,
                        accuracy: v.accuracy,
                    });
                }
            }
        }
    }
    Ok(log)
}

/// Splits off the last `fraction` of `points` for validation.
pub fn holdout<E>(points: &[E], fraction: f64) -> (&[E], &[E]) {
    let k = ((points.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    points.split_at(points.len() - k.min(points.len()))
}

/// One seeded run: fresh model, training, test evaluation.
pub fn run_once<E: Example>(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &[E],
    valid: &[E],
    test: &[E],
    seed: u64,
) -> Result<(TbsmModel, RunReport)> {
    let started = Instant::now();
    let mut model = TbsmModel::new(model_cfg.clone(), seed)?;
    let log = train(&mut model, train_set, valid, train_cfg, seed)?;
    let eval = evaluate(&model, test)?;
    let mut rows = log.rows;
    rows.push(MetricRow {
        seed,
        step: log.batch_losses.len(),
        split: Split::Test,
        loss: eval.loss,
        accuracy: eval.accuracy,
    });
    let report = RunReport {
        seed,
        rows,
        batch_losses: log.batch_losses,
        test_auc: eval.auc,
        test_accuracy: eval.accuracy,
        test_loss: eval.loss,
        wall_time: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Runs every seed (in parallel) and summarizes test AUCs. Models and
/// reports come back in seed order.
pub fn run_experiment<E: Example>(
    config_id: &str,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &[E],
    valid: &[E],
    test: &[E],
    seeds: &[u64],
) -> Result<(Vec<(TbsmModel, RunReport)>, Summary)> {
    let mut runs: Vec<(TbsmModel, RunReport)> = seeds
        .par_iter()
        .map(|&s| run_once(model_cfg, train_cfg, train_set, valid, test, s))
        .collect::<Result<_>>()?;
    runs.sort_by_key(|r| r.1.seed);
    let reports: Vec<RunReport> = runs.iter().map(|r| r.1.clone()).collect();
    let summary = summarize(config_id, model_cfg, &reports)?;
    Ok((runs, summary))
}
