//! Maximum-likelihood training of encoder models on interventional data.
//!
//! The objective is the sum over regimes of the average negative
//! log-likelihood. Each step draws an equal-size sub-batch from every
//! regime so the stochastic gradient is unbiased for that pooled objective
//! regardless of per-regime sample counts.
//!
//! Determinism contract: given the same data, config and seeds, training is
//! bit-for-bit reproducible, and a run checkpointed at any epoch boundary
//! and resumed continues on the identical trajectory. Everything mutable
//! lives in the serializable `Trainer`.

pub mod adam;

pub use adam::{cosine_lr, Adam};

use crate::error::{Error, Result};
use crate::flow::{EncoderModel, RegimeLogProb};
use crate::rng::stream;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// total batch size, split equally across regimes
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// fraction of each regime held out for validation
    pub validation_fraction: f64,
    /// drives parameter init and batch shuffling
    pub seed: u64,
    /// drives the train/validation split; shared across seeds so all seeds
    /// of one data draw see the same split
    pub split_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 1024,
            lr_max: 5e-3,
            lr_min: 1e-7,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            validation_fraction: 0.1,
            seed: 0,
            split_seed: 0,
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs_run: usize,
    /// running-mean training objective per epoch
    pub train_history: Vec<f64>,
    /// full validation objective per epoch
    pub val_history: Vec<f64>,
    pub final_train_nll: f64,
    pub final_val_nll: f64,
    /// excluded from serialization: wall time is not reproducible
    #[serde(skip)]
    pub wall_secs: f64,
}

/// Pick the best of several runs: lowest final validation objective, ties
/// broken by the lowest seed.
pub fn select_best(reports: &[TrainReport]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        let nll = if r.final_val_nll.is_finite() { r.final_val_nll } else { f64::INFINITY };
        let better = match best {
            None => true,
            Some(j) => {
                let cur = if reports[j].final_val_nll.is_finite() {
                    reports[j].final_val_nll
                } else {
                    f64::INFINITY
                };
                nll < cur || (nll == cur && r.seed < reports[j].seed)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Serializable training state: model, optimizer, rng and progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub model: EncoderModel,
    pub config: TrainConfig,
    opt: Adam,
    rng: ChaCha8Rng,
    epochs_done: usize,
    train_history: Vec<f64>,
    val_history: Vec<f64>,
}

/// Per-regime data with a held-out validation part.
struct Split {
    train: Vec<Array2<f64>>,
    val: Vec<Array2<f64>>,
}

impl Trainer {
    pub fn new(model: EncoderModel, config: TrainConfig) -> Self {
        let opt = Adam::new(model.n_params(), config.beta1, config.beta2, config.adam_eps);
        let rng = stream(config.seed, "train-shuffle", 0);
        Trainer {
            model,
            config,
            opt,
            rng,
            epochs_done: 0,
            train_history: Vec::new(),
            val_history: Vec::new(),
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Pool regimes when the model collapses labels, then hold out the
    /// validation fraction of every regime. Deterministic in `split_seed`.
    fn split(&self, data: &[Array2<f64>]) -> Result<Split> {
        let data = if self.model.n_regimes() == 1 && data.len() > 1 {
            vec![pool_rows(data)?]
        } else {
            data.to_vec()
        };
        if data.len() != self.model.n_regimes() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} regime datasets", self.model.n_regimes()),
                got: format!("{}", data.len()),
            });
        }
        let mut train = Vec::with_capacity(data.len());
        let mut val = Vec::with_capacity(data.len());
        for (k, xk) in data.iter().enumerate() {
            let n = xk.nrows();
            let n_val = (n as f64 * self.config.validation_fraction).floor() as usize;
            if n_val >= n {
                return Err(Error::Config(format!(
                    "validation fraction {} leaves no training data for regime {k}",
                    self.config.validation_fraction
                )));
            }
            let (val_idx, train_idx) =
                holdout_split(n, k, self.config.validation_fraction, self.config.split_seed);
            val.push(take_rows(xk, &val_idx));
            train.push(take_rows(xk, &train_idx));
        }
        Ok(Split { train, val })
    }

    fn steps_per_epoch(&self, split: &Split) -> usize {
        let k = split.train.len();
        let per_regime = (self.config.batch_size / k).max(1);
        split
            .train
            .iter()
            .map(|t| t.nrows() / per_regime)
            .min()
            .unwrap_or(0)
            .max(1)
    }

    /// Advance training to `until_epoch` (exclusive upper bound given by
    /// the config when `None`). Safe to call repeatedly; a deserialized
    /// trainer continues exactly where it stopped.
    pub fn run(&mut self, data: &[Array2<f64>], until_epoch: Option<usize>) -> Result<()> {
        let target = until_epoch.unwrap_or(self.config.epochs).min(self.config.epochs);
        let split = self.split(data)?;
        let k = split.train.len();
        let per_regime = (self.config.batch_size / k).max(1);
        let steps_per_epoch = self.steps_per_epoch(&split);
        let total_steps = (self.config.epochs * steps_per_epoch) as u64;
        let frozen = self.model.frozen_mask();
        let mut params = self.model.params_flat();

        while self.epochs_done < target {
            let epoch = self.epochs_done;
            // fresh pass order per regime
            let mut orders: Vec<Vec<usize>> = Vec::with_capacity(k);
            for t in &split.train {
                let mut idx: Vec<usize> = (0..t.nrows()).collect();
                idx.shuffle(&mut self.rng);
                orders.push(idx);
            }
            let mut epoch_loss = 0.0;
            for step in 0..steps_per_epoch {
                let batches: Vec<Array2<f64>> = split
                    .train
                    .iter()
                    .zip(&orders)
                    .map(|(t, ord)| {
                        let rows = &ord[step * per_regime..(step + 1) * per_regime];
                        take_rows(t, rows)
                    })
                    .collect();
                let global_step = (epoch * steps_per_epoch + step) as u64;
                let lr = cosine_lr(global_step, total_steps, self.config.lr_max, self.config.lr_min);
                let (loss, grad) = self.model.loss_and_grad(&batches).map_err(|e| match e {
                    Error::NonFinite(what) => Error::DivergedTraining {
                        epoch,
                        seed: self.config.seed,
                        reason: format!("non-finite {what} at step {step}"),
                    },
                    other => other,
                })?;
                epoch_loss += loss;
                self.opt.step(&mut params, &grad, lr, &frozen);
                self.model.load_params(&params)?;
            }
            self.train_history.push(epoch_loss / steps_per_epoch as f64);
            let val_nll = if split.val.iter().all(|v| v.nrows() > 0) {
                let v = self.model.pooled_nll(&split.val)?;
                if !v.is_finite() {
                    return Err(Error::DivergedTraining {
                        epoch,
                        seed: self.config.seed,
                        reason: "non-finite validation objective".into(),
                    });
                }
                v
            } else {
                f64::NAN
            };
            self.val_history.push(val_nll);
            self.epochs_done += 1;
        }
        Ok(())
    }

    pub fn report(&self, wall_secs: f64) -> TrainReport {
        TrainReport {
            seed: self.config.seed,
            epochs_run: self.epochs_done,
            train_history: self.train_history.clone(),
            val_history: self.val_history.clone(),
            final_train_nll: self.train_history.last().copied().unwrap_or(f64::NAN),
            final_val_nll: self.val_history.last().copied().unwrap_or(f64::NAN),
            wall_secs,
        }
    }
}

/// Train to completion and report.
pub fn train(
    model: EncoderModel,
    data: &[Array2<f64>],
    config: TrainConfig,
) -> Result<(EncoderModel, TrainReport)> {
    let start = std::time::Instant::now();
    let mut trainer = Trainer::new(model, config);
    trainer.run(data, None)?;
    let report = trainer.report(start.elapsed().as_secs_f64());
    Ok((trainer.model, report))
}

/// The (validation, training) row indices for regime `k`, deterministic in
/// `split_seed`. Evaluation uses the same partition as training, so metrics
/// are computed on rows the optimizer never saw.
pub fn holdout_split(
    n: usize,
    k: usize,
    validation_fraction: f64,
    split_seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let n_val = (n as f64 * validation_fraction).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut split_rng = stream(split_seed, "val-split", k as u64);
    idx.shuffle(&mut split_rng);
    let train = idx.split_off(n_val);
    (idx, train)
}

/// Concatenate regime datasets row-wise.
pub fn pool_rows(data: &[Array2<f64>]) -> Result<Array2<f64>> {
    let d = data.first().map(|x| x.ncols()).unwrap_or(0);
    let n: usize = data.iter().map(|x| x.nrows()).sum();
    let mut out = Array2::zeros((n, d));
    let mut at = 0;
    for x in data {
        if x.ncols() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d} columns"),
                got: format!("{}", x.ncols()),
            });
        }
        for row in x.rows() {
            out.row_mut(at).assign(&row);
            at += 1;
        }
    }
    Ok(out)
}

/// Gather the given rows into a new matrix.
pub fn take_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (r, &src) in rows.iter().enumerate() {
        out.row_mut(r).assign(&x.row(src));
    }
    out
}
