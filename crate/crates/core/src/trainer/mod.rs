//! Triplet training of the adapter head with title-similarity validation.

mod loss;
mod optim;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::AdapterParams;
use crate::error::{Error, Result};
use crate::eval::stats::{pearson, spearman};
use crate::pairing::{SimPair, Triplet};
use crate::scalar::Scalar;
use crate::similarity::cosine;

pub use loss::{triplet_loss, triplet_loss_grad, TripletGrad, TripletLossConfig};
pub use optim::{Adam, AdamConfig, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 3,
            warmup_epochs: 3,
            learning_rate: 1e-5,
            adam: AdamConfig::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }

    /// Batch {16, 32} × warmup {1, 2, 3} × learning rate {1e-6, 1e-5, 2e-5}.
    pub fn grid(epochs: usize, seed: u64) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for batch_size in [16, 32] {
            for warmup_epochs in [1, 2, 3] {
                for learning_rate in [1e-6, 1e-5, 2e-5] {
                    out.push(TrainConfig {
                        batch_size,
                        epochs,
                        warmup_epochs,
                        learning_rate,
                        adam: AdamConfig::default(),
                        seed,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pearson: f64,
    pub spearman: f64,
    pub n_pairs: usize,
    pub epoch: usize,
}

impl ValidationReport {
    /// Higher Pearson wins; Spearman breaks ties.
    pub fn better_than(&self, other: &ValidationReport) -> bool {
        self.pearson > other.pearson || (self.pearson == other.pearson && self.spearman > other.spearman)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub pearson: f64,
    pub spearman: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the best epoch (epoch 0 is the identity baseline).
    pub adapter: AdapterParams<T>,
    pub best: ValidationReport,
    /// Baseline first, then one per epoch.
    pub reports: Vec<ValidationReport>,
    pub log: Vec<EpochLog>,
}

fn lookup<'a, T>(table: &'a IndexMap<String, Vec<T>>, id: &str) -> Result<&'a [T]> {
    table
        .get(id)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::MissingEmbedding(id.to_owned()))
}

/// Correlates `cos(f(i), f(j))` with the title pseudo label over `pairs`.
pub fn validate_adapter<T: Scalar>(
    params: &AdapterParams<T>,
    embeddings: &IndexMap<String, Vec<T>>,
    pairs: &[SimPair],
    epoch: usize,
) -> Result<ValidationReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("validation pairs"));
    }
    let mut pred = Vec::with_capacity(pairs.len());
    let mut gold = Vec::with_capacity(pairs.len());
    for p in pairs {
        let a = params.apply(lookup(embeddings, &p.i)?)?;
        let b = params.apply(lookup(embeddings, &p.j)?)?;
        pred.push(cosine(&a, &b)?.as_f64());
        gold.push(p.sim);
    }
    Ok(ValidationReport {
        pearson: pearson(&pred, &gold)?,
        spearman: spearman(&pred, &gold)?,
        n_pairs: pairs.len(),
        epoch,
    })
}

fn mean_loss<T: Scalar>(
    params: &AdapterParams<T>,
    raw: &[[&[T]; 3]],
    loss_cfg: &TripletLossConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for [a, p, n] in raw {
        let fa = params.apply(a)?;
        let fp = params.apply(p)?;
        let fn_ = params.apply(n)?;
        total += triplet_loss(&fa, &fp, &fn_, loss_cfg)?.as_f64();
    }
    Ok(total / raw.len() as f64)
}

/// Trains an identity-initialised adapter on `triplets` over the frozen
/// `embeddings` table and returns the best checkpoint by validation Pearson.
pub fn train_adapter<T: Scalar>(
    triplets: &[Triplet],
    embeddings: &IndexMap<String, Vec<T>>,
    train_cfg: &TrainConfig,
    loss_cfg: &TripletLossConfig,
    valid_pairs: &[SimPair],
) -> Result<TrainOutcome<T>> {
    train_cfg.validate()?;
    loss_cfg.validate()?;
    if triplets.is_empty() {
        return Err(Error::Empty("triplets"));
    }
    let dim = embeddings
        .values()
        .next()
        .map(Vec::len)
        .ok_or(Error::Empty("embedding table"))?;
    let raw: Vec<[&[T]; 3]> = triplets
        .iter()
        .map(|t| Ok([lookup(embeddings, &t.anchor)?, lookup(embeddings, &t.pos)?, lookup(embeddings, &t.neg)?]))
        .collect::<Result<_>>()?;

    let mut params = AdapterParams::identity(dim);
    let baseline = validate_adapter(&params, embeddings, valid_pairs, 0)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        mean_loss: mean_loss(&params, &raw, loss_cfg)?,
        pearson: baseline.pearson,
        spearman: baseline.spearman,
    }];
    let mut reports = vec![baseline];
    let mut best = (baseline, params.clone());

    let steps_per_epoch = raw.len().div_ceil(train_cfg.batch_size);
    let schedule = Schedule {
        base_lr: train_cfg.learning_rate,
        warmup_steps: train_cfg.warmup_epochs * steps_per_epoch,
        total_steps: train_cfg.epochs * steps_per_epoch,
    };
    let mut adam = Adam::new(&params, train_cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let mut step = 0;

    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(train_cfg.batch_size).enumerate() {
            let grads: Vec<TripletGrad<T>> = batch
                .par_iter()
                .map(|&k| {
                    let [a, p, n] = raw[k];
                    triplet_loss_grad(a, p, n, &params, loss_cfg)
                })
                .collect::<Result<_>>()?;
            let mut acc = TripletGrad::zeros(&params);
            for g in &grads {
                acc.accumulate(g);
            }
            if !acc.is_finite() {
                let ids: Vec<&str> = batch.iter().map(|&k| triplets[k].anchor.as_str()).collect();
                return Err(Error::Numerical(format!(
                    "non-finite loss or gradient at epoch {epoch}, batch {b}, step {step}, lr {:.3e}; anchors {ids:?}",
                    schedule.lr(step)
                )));
            }
            epoch_loss += acc.loss.as_f64();
            adam.step(&mut params, &acc, schedule.lr(step));
            step += 1;
        }
        if params.weight.iter().chain(&params.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("adapter diverged at epoch {epoch}")));
        }
        let report = validate_adapter(&params, embeddings, valid_pairs, epoch)?;
        log::info!(
            "epoch {epoch}: mean loss {:.6}, valid pearson {:.4}, spearman {:.4}",
            epoch_loss / raw.len() as f64,
            report.pearson,
            report.spearman
        );
        log.push(EpochLog {
            epoch,
            mean_loss: epoch_loss / raw.len() as f64,
            pearson: report.pearson,
            spearman: report.spearman,
        });
        if report.better_than(&best.0) {
            best = (report, params.clone());
        }
        reports.push(report);
    }

    Ok(TrainOutcome {
        adapter: best.1,
        best: best.0,
        reports,
        log,
    })
}

/// Runs `train` on every grid point and returns the rows sorted by validation
/// Pearson, descending. Equal rows keep grid order.
pub fn sweep<F>(grid: &[TrainConfig], train: F) -> Result<Vec<(TrainConfig, ValidationReport)>>
where
    F: Fn(&TrainConfig) -> Result<ValidationReport> + Sync,
{
    if grid.is_empty() {
        return Err(Error::Empty("hyperparameter grid"));
    }
    let mut rows: Vec<(TrainConfig, ValidationReport)> = grid
        .par_iter()
        .map(|cfg| Ok((cfg.clone(), train(cfg)?)))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| b.1.pearson.total_cmp(&a.1.pearson));
    Ok(rows)
}
