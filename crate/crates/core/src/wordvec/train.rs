//! CBOW / skip-gram with negative sampling, optionally with hashed character
//! n-grams.

use std::collections::HashMap;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ngram_buckets, Framework, SubwordSpec, WordVecMeta, WordVectorModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MIN_LEARNING_RATE: f64 = 1e-4;
const NOISE_POWER: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Cbow,
    Skipgram,
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbow" => Ok(Architecture::Cbow),
            "skipgram" | "skip-gram" => Ok(Architecture::Skipgram),
            _ => Err(Error::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordVecTrainConfig {
    pub architecture: Architecture,
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negative: usize,
    pub min_count: usize,
    /// `(min_n, max_n)` character n-gram range.
    pub subword: Option<(usize, usize)>,
    pub bucket_count: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Values above 1 train shards in parallel and average them after every
    /// epoch. Results then depend on the worker count.
    pub workers: usize,
}

impl WordVecTrainConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            dim: 300,
            epochs: 5,
            window: 5,
            negative: 5,
            min_count: 10,
            subword: None,
            bucket_count: 2_000_000,
            learning_rate: match architecture {
                Architecture::Skipgram => 0.025,
                Architecture::Cbow => 0.05,
            },
            seed: 42,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if let Some((lo, hi)) = self.subword {
            if lo < 1 || lo > hi {
                return bad("subword range must satisfy 1 <= min_n <= max_n");
            }
            if self.bucket_count == 0 {
                return bad("bucket_count must be positive");
            }
        }
        Ok(())
    }
}

impl Default for WordVecTrainConfig {
    fn default() -> Self {
        Self::new(Architecture::Skipgram)
    }
}

#[derive(Clone)]
struct Params<T> {
    input: Vec<T>,
    output: Vec<T>,
    ngrams: Vec<T>,
}

struct Trainer<'a, T> {
    cfg: &'a WordVecTrainConfig,
    dim: usize,
    noise_cdf: Vec<f64>,
    /// Per vocab entry, the input rows that compose it: the word row index
    /// followed by n-gram rows offset by the vocab size.
    components: Vec<Vec<usize>>,
    total_words: f64,
    _scalar: std::marker::PhantomData<T>,
}

/// Trains word vectors on pre-segmented token sequences.
///
/// With `workers == 1` the result is bit-identical for a given seed.
pub fn train_word_vectors<T: Scalar, S: AsRef<str>>(
    corpus: &[Vec<S>],
    cfg: &WordVecTrainConfig,
) -> Result<WordVectorModel<T>> {
    cfg.validate()?;
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for tok in corpus.iter().flatten() {
        *counts.entry(tok.as_ref()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= cfg.min_count as u64)
        .collect();
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "vocabulary empty after min_count={} truncation",
            cfg.min_count
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let vocab: IndexMap<String, usize> = kept
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (t.to_string(), i))
        .collect();
    let freq: Vec<u64> = kept.iter().map(|&(_, c)| c).collect();

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.get(t.as_ref()).copied()).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| s.len() > 1)
        .collect();

    let subword = cfg.subword.map(|(min_n, max_n)| SubwordSpec {
        min_n,
        max_n,
        bucket_count: cfg.bucket_count,
    });
    let n_vocab = vocab.len();
    let components: Vec<Vec<usize>> = vocab
        .keys()
        .enumerate()
        .map(|(i, token)| {
            let mut c = vec![i];
            if let Some(spec) = &subword {
                c.extend(ngram_buckets(token, spec).into_iter().map(|b| n_vocab + b));
            }
            c
        })
        .collect();

    let mut noise_cdf: Vec<f64> = Vec::with_capacity(n_vocab);
    let mut acc = 0.0;
    for &c in &freq {
        acc += (c as f64).powf(NOISE_POWER);
        noise_cdf.push(acc);
    }
    noise_cdf.iter_mut().for_each(|x| *x /= acc);

    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init = |n: usize| -> Vec<T> {
        (0..n * dim)
            .map(|_| T::lit((rng.random::<f64>() - 0.5) / dim as f64))
            .collect()
    };
    let input = init(n_vocab);
    let ngrams = subword.map(|s| init(s.bucket_count)).unwrap_or_default();
    let mut params = Params {
        input,
        output: vec![T::zero(); n_vocab * dim],
        ngrams,
    };

    let words_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let trainer = Trainer::<T> {
        cfg,
        dim,
        noise_cdf,
        components,
        total_words: (words_per_epoch * cfg.epochs).max(1) as f64,
        _scalar: std::marker::PhantomData,
    };

    let mut done = 0usize;
    for epoch in 0..cfg.epochs {
        if cfg.workers == 1 {
            done = trainer.run(&mut params, &sentences, &mut rng, done);
        } else {
            let shard = sentences.len().div_ceil(cfg.workers).max(1);
            let base = done;
            let results: Vec<(Params<T>, usize)> = sentences
                .par_chunks(shard)
                .enumerate()
                .map(|(w, chunk)| {
                    let mut p = params.clone();
                    let mut r = ChaCha8Rng::seed_from_u64(
                        cfg.seed ^ ((epoch as u64) << 32) ^ (w as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    );
                    // shards share the schedule position of the epoch start
                    let n = trainer.run(&mut p, chunk, &mut r, base) - base;
                    (p, n)
                })
                .collect();
            done = base + results.iter().map(|(_, n)| n).sum::<usize>();
            params = average(results.into_iter().map(|(p, _)| p).collect());
        }
    }

    Ok(WordVectorModel {
        dim,
        vocab,
        vectors: params.input,
        ngrams: subword.map(|_| params.ngrams),
        counts: freq,
        meta: WordVecMeta {
            framework: match cfg.architecture {
                Architecture::Cbow => Framework::Cbow,
                Architecture::Skipgram => Framework::Skipgram,
            },
            min_count: cfg.min_count,
            subword,
        },
    })
}

fn average<T: Scalar>(mut shards: Vec<Params<T>>) -> Params<T> {
    let n = T::from_usize_lossy(shards.len());
    let mut acc = shards.pop().expect("at least one shard");
    for s in &shards {
        for (a, b) in acc.input.iter_mut().zip(&s.input) {
            *a += *b;
        }
        for (a, b) in acc.output.iter_mut().zip(&s.output) {
            *a += *b;
        }
        for (a, b) in acc.ngrams.iter_mut().zip(&s.ngrams) {
            *a += *b;
        }
    }
    for v in [&mut acc.input, &mut acc.output, &mut acc.ngrams] {
        v.iter_mut().for_each(|x| *x /= n);
    }
    acc
}

impl<T: Scalar> Trainer<'_, T> {
    fn learning_rate(&self, done: usize) -> T {
        let lr0 = self.cfg.learning_rate;
        let progress = (done as f64 / self.total_words).min(1.0);
        let floor = MIN_LEARNING_RATE.min(lr0);
        T::lit(lr0 - (lr0 - floor) * progress)
    }

    fn sample_noise(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        self.noise_cdf
            .partition_point(|&c| c <= u)
            .min(self.noise_cdf.len() - 1)
    }

    fn row<'p>(&self, p: &'p Params<T>, r: usize) -> &'p [T] {
        let n_vocab = self.components.len();
        if r < n_vocab {
            &p.input[r * self.dim..(r + 1) * self.dim]
        } else {
            let b = r - n_vocab;
            &p.ngrams[b * self.dim..(b + 1) * self.dim]
        }
    }

    fn row_mut<'p>(&self, p: &'p mut Params<T>, r: usize) -> &'p mut [T] {
        let n_vocab = self.components.len();
        if r < n_vocab {
            &mut p.input[r * self.dim..(r + 1) * self.dim]
        } else {
            let b = r - n_vocab;
            &mut p.ngrams[b * self.dim..(b + 1) * self.dim]
        }
    }

    /// Adds the (mean) input representation of `word` into `h`, scaled.
    fn accumulate_repr(&self, p: &Params<T>, word: usize, scale: T, h: &mut [T]) {
        let comps = &self.components[word];
        let s = scale / T::from_usize_lossy(comps.len());
        for &r in comps {
            for (x, &v) in h.iter_mut().zip(self.row(p, r)) {
                *x += s * v;
            }
        }
    }

    fn apply_grad(&self, p: &mut Params<T>, word: usize, grad: &[T]) {
        for &r in &self.components[word] {
            for (x, &g) in self.row_mut(p, r).iter_mut().zip(grad) {
                *x += g;
            }
        }
    }

    /// One logistic update of `h` against `target` and sampled noise words;
    /// accumulates the input-side gradient into `neu1e`.
    fn negative_sampling(
        &self,
        p: &mut Params<T>,
        h: &[T],
        target: usize,
        lr: T,
        rng: &mut ChaCha8Rng,
        neu1e: &mut [T],
    ) {
        let dim = self.dim;
        for d in 0..=self.cfg.negative {
            let (word, label) = if d == 0 {
                (target, T::one())
            } else {
                let w = self.sample_noise(rng);
                if w == target {
                    continue;
                }
                (w, T::zero())
            };
            let out = &mut p.output[word * dim..(word + 1) * dim];
            let f: T = h.iter().zip(out.iter()).map(|(&a, &b)| a * b).sum();
            let g = (label - sigmoid(f)) * lr;
            for k in 0..dim {
                neu1e[k] += g * out[k];
                out[k] += g * h[k];
            }
        }
    }

    fn run(
        &self,
        p: &mut Params<T>,
        sentences: &[Vec<usize>],
        rng: &mut ChaCha8Rng,
        mut done: usize,
    ) -> usize {
        let dim = self.dim;
        let mut h = vec![T::zero(); dim];
        let mut neu1e = vec![T::zero(); dim];
        for sent in sentences {
            for (pos, &center) in sent.iter().enumerate() {
                let lr = self.learning_rate(done);
                done += 1;
                let reduce = rng.random_range(0..self.cfg.window);
                let span = self.cfg.window - reduce;
                let lo = pos.saturating_sub(span);
                let hi = (pos + span + 1).min(sent.len());
                match self.cfg.architecture {
                    Architecture::Skipgram => {
                        for (ctx_pos, &ctx) in sent.iter().enumerate().take(hi).skip(lo) {
                            if ctx_pos == pos {
                                continue;
                            }
                            h.iter_mut().for_each(|x| *x = T::zero());
                            neu1e.iter_mut().for_each(|x| *x = T::zero());
                            self.accumulate_repr(p, center, T::one(), &mut h);
                            self.negative_sampling(p, &h, ctx, lr, rng, &mut neu1e);
                            self.apply_grad(p, center, &neu1e);
                        }
                    }
                    Architecture::Cbow => {
                        let n_ctx = hi - lo - 1;
                        if n_ctx == 0 {
                            continue;
                        }
                        h.iter_mut().for_each(|x| *x = T::zero());
                        neu1e.iter_mut().for_each(|x| *x = T::zero());
                        let scale = T::one() / T::from_usize_lossy(n_ctx);
                        for (ctx_pos, &ctx) in sent.iter().enumerate().take(hi).skip(lo) {
                            if ctx_pos != pos {
                                self.accumulate_repr(p, ctx, scale, &mut h);
                            }
                        }
                        self.negative_sampling(p, &h, center, lr, rng, &mut neu1e);
                        for (ctx_pos, &ctx) in sent.iter().enumerate().take(hi).skip(lo) {
                            if ctx_pos != pos {
                                self.apply_grad(p, ctx, &neu1e);
                            }
                        }
                    }
                }
            }
        }
        done
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
