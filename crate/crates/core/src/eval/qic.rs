//! Questionnaire item classification: stratified k-fold with a linear
//! one-vs-rest SVM trained by seeded stochastic sub-gradient descent.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalReport, MetricRow, Task};
use crate::error::{Error, Result};
use crate::similarity::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 200 }
    }
}

/// One weight vector (with a trailing bias term) per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub classes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

fn score(w: &[f64], x: &[f64]) -> f64 {
    dot(&w[..x.len()], x) + w[x.len()]
}

/// Pegasos on `min λ/2 |w|² + mean hinge`, with λ = 1/(C·n) and the bias as a
/// constant feature.
fn train_binary(xs: &[&[f64]], ys: &[f64], cfg: &SvmConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = xs.len();
    let d = xs[0].len();
    let lambda = 1.0 / (cfg.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = ys[i] * score(&w, xs[i]);
            let shrink = 1.0 - eta * lambda;
            for v in w.iter_mut() {
                *v *= shrink;
            }
            if margin < 1.0 {
                let step = eta * ys[i];
                for (v, &x) in w.iter_mut().zip(xs[i]) {
                    *v += step * x;
                }
                w[d] += step;
            }
            let nrm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm > radius {
                let s = radius / nrm;
                for v in w.iter_mut() {
                    *v *= s;
                }
            }
        }
    }
    w
}

impl LinearSvm {
    pub fn fit(xs: &[&[f64]], labels: &[usize], cfg: &SvmConfig, seed: u64) -> Result<Self> {
        if xs.is_empty() || xs.len() != labels.len() {
            return Err(Error::Data("SVM needs one label per nonempty sample".into()));
        }
        let d = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::DimMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let weights = classes
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let ys: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
                train_binary(xs, &ys, cfg, &mut rng)
            })
            .collect();
        Ok(Self { classes, weights })
    }

    /// Highest-scoring class; ties go to the smaller class id.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = (self.classes[0], f64::NEG_INFINITY);
        for (&c, w) in self.classes.iter().zip(&self.weights) {
            let s = score(w, x);
            if s > best.1 {
                best = (c, s);
            }
        }
        best.0
    }
}

/// Assigns every item to one of `k` folds. Within each class the shuffled
/// items are dealt round-robin, continuing where the previous class stopped,
/// so per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds the number of items ({n})")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::Data("classification needs at least 2 classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        for &i in idx.iter() {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified k-fold accuracy of a linear one-vs-rest SVM on item embeddings.
pub fn eval_qic(item_embs: &[Vec<f64>], labels: &[usize], k: usize, seed: u64) -> Result<EvalReport> {
    eval_qic_with(item_embs, labels, k, seed, &SvmConfig::default())
}

pub fn eval_qic_with(
    item_embs: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    seed: u64,
    cfg: &SvmConfig,
) -> Result<EvalReport> {
    if item_embs.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} embeddings but {} labels",
            item_embs.len(),
            labels.len()
        )));
    }
    let folds = stratified_folds(labels, k, seed)?;
    let accs: Vec<f64> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let mut in_test = vec![false; labels.len()];
            for &i in test {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            let xs: Vec<&[f64]> = train.iter().map(|&i| item_embs[i].as_slice()).collect();
            let ys: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let svm = LinearSvm::fit(&xs, &ys, cfg, seed.wrapping_add(1000 * (f as u64 + 1)))?;
            let correct = test.iter().filter(|&&i| svm.predict(&item_embs[i]) == labels[i]).count();
            Ok(correct as f64 / test.len() as f64)
        })
        .collect::<Result<_>>()?;
    let (m, se) = super::mean_and_stderr(&accs)?;
    Ok(EvalReport {
        task: Task::Qic,
        metric_rows: vec![MetricRow::new("accuracy", m, se, accs.len())],
    })
}
