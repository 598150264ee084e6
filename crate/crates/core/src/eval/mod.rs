//! Evaluation tasks (STS easy/hard, QIC, PM), the officials benchmark and
//! the report type they share.

mod qic;
pub mod stats;
mod synthetic;

use std::collections::HashMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ParagraphRecord;
use crate::embedding::Encoder;
use crate::error::{Error, Result};
use crate::pairing::{compute_thresholds, label_pairs, random_pairs, Label, ThresholdConfig, TitleSims};
use crate::scoring::{ccr_score, encode_items, encode_records, pm_pseudo_ground_truth, Dictionary, Questionnaire};
use crate::similarity::cosine;
use crate::wordvec::WordVectorModel;

pub use qic::{eval_qic, stratified_folds, LinearSvm, SvmConfig};
pub use stats::{mean_and_stderr, pearson, spearman, spearman_p_value};
pub use synthetic::{
    generate_synthetic_corpus, synthetic_dictionaries, synthetic_officials, synthetic_questionnaires, SyntheticCorpus,
    CONSTRUCTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    StsEasy,
    StsHard,
    Qic,
    Pm,
    Benchmark,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::StsEasy => "sts_easy",
            Task::StsHard => "sts_hard",
            Task::Qic => "qic",
            Task::Pm => "pm",
            Task::Benchmark => "benchmark",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl MetricRow {
    pub fn new(name: impl Into<String>, mean: f64, std_err: f64, n: usize) -> Self {
        Self {
            name: name.into(),
            mean,
            std_err,
            n,
            p_value: None,
        }
    }

    fn from_samples(name: impl Into<String>, samples: &[f64]) -> Result<Self> {
        let (m, se) = mean_and_stderr(samples)?;
        Ok(Self::new(name, m, se, samples.len()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub metric_rows: Vec<MetricRow>,
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&MetricRow> {
        self.metric_rows.iter().find(|r| r.name == name)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let header = ["metric", "mean", "std_err", "n", "p"];
        let cells: Vec<[String; 5]> = self
            .metric_rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    format!("{:.4}", r.mean),
                    format!("{:.4}", r.std_err),
                    r.n.to_string(),
                    r.p_value.map_or_else(|| "-".to_owned(), |p| format!("{p:.3e}")),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = format!("task: {}\n", self.task.as_str());
        let line = |out: &mut String, row: [&str; 5]| {
            for (k, (c, w)) in row.iter().zip(widths).enumerate() {
                let pad = w - c.chars().count();
                if k == 0 {
                    let _ = write!(out, "{c}{}", " ".repeat(pad));
                } else {
                    let _ = write!(out, "  {}{c}", " ".repeat(pad));
                }
            }
            out.push('\n');
        };
        line(&mut out, header);
        for row in &cells {
            line(&mut out, [&row[0], &row[1], &row[2], &row[3], &row[4]].map(String::as_str));
        }
        out
    }
}

/// Where STS pairs come from: uniform random pairs (hard task) or
/// threshold-labeled pairs (easy task).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum PairSource {
    Random,
    Threshold(ThresholdConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StsConfig {
    pub source: PairSource,
    pub rounds: usize,
    pub pairs_per_round: usize,
    pub seed: u64,
}

impl Default for StsConfig {
    fn default() -> Self {
        Self {
            source: PairSource::Random,
            rounds: 20,
            pairs_per_round: 4308,
            seed: 42,
        }
    }
}

/// Embeds `records` through `encoder`, keyed by id.
pub fn embedding_table(encoder: &Encoder<'_>, records: &[ParagraphRecord]) -> Result<IndexMap<String, Vec<f64>>> {
    let rows = encode_records(encoder, records)?;
    Ok(records.iter().map(|r| r.id.clone()).zip(rows).collect())
}

/// STS evaluation with embeddings from `encoder`.
pub fn eval_sts(records: &[ParagraphRecord], sims: &TitleSims, encoder: &Encoder<'_>, cfg: &StsConfig) -> Result<EvalReport> {
    let table = embedding_table(encoder, records)?;
    eval_sts_embedded(records, sims, &table, cfg)
}

struct Round {
    pearson: f64,
    spearman: f64,
    positive_fraction: f64,
}

/// Predicted cosines and pseudo labels for `(i, j, sim)` pairs.
fn predict<'a>(
    embeddings: &IndexMap<String, Vec<f64>>,
    pairs: impl Iterator<Item = (&'a str, &'a str, f64)>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let emb = |id: &str| {
        embeddings
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(id.to_owned()))
    };
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (i, j, s) in pairs {
        pred.push(cosine(emb(i)?, emb(j)?)?);
        gold.push(s);
    }
    Ok((pred, gold))
}

/// STS evaluation over precomputed embeddings. Round `r` is seeded with
/// `seed + r`; rounds run in parallel but results do not depend on it.
pub fn eval_sts_embedded(
    records: &[ParagraphRecord],
    sims: &TitleSims,
    embeddings: &IndexMap<String, Vec<f64>>,
    cfg: &StsConfig,
) -> Result<EvalReport> {
    if cfg.rounds == 0 {
        return Err(Error::Config("rounds must be >= 1".into()));
    }
    if cfg.pairs_per_round < 2 {
        return Err(Error::Config("pairs_per_round must be >= 2".into()));
    }
    let labeled = match cfg.source {
        PairSource::Random => None,
        PairSource::Threshold(t) => {
            let thresholds = compute_thresholds(sims.values(), t)?;
            let pairs: Vec<_> = label_pairs(records, sims, thresholds).collect();
            if pairs.len() < 2 {
                return Err(Error::Data(format!("only {} labeled pair(s); cannot evaluate", pairs.len())));
            }
            Some(pairs)
        }
    };
    let rounds: Vec<Round> = (0..cfg.rounds)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let ((pred, gold), positive_fraction) = match &labeled {
                None => {
                    let drawn = random_pairs(records, sims, cfg.pairs_per_round, seed)?;
                    let it = drawn.iter().map(|p| (p.i.as_str(), p.j.as_str(), p.sim));
                    (predict(embeddings, it)?, f64::NAN)
                }
                Some(all) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let amount = cfg.pairs_per_round.min(all.len());
                    let chosen: Vec<_> = rand::seq::index::sample(&mut rng, all.len(), amount)
                        .iter()
                        .map(|k| &all[k])
                        .collect();
                    let pos = chosen.iter().filter(|p| p.label == Label::Positive).count();
                    let it = chosen.iter().map(|p| (p.i.as_str(), p.j.as_str(), p.sim));
                    (predict(embeddings, it)?, pos as f64 / amount as f64)
                }
            };
            Ok(Round {
                pearson: pearson(&pred, &gold)?,
                spearman: spearman(&pred, &gold)?,
                positive_fraction,
            })
        })
        .collect::<Result<_>>()?;
    let col = |f: fn(&Round) -> f64| rounds.iter().map(f).collect::<Vec<f64>>();
    let mut rows = vec![
        MetricRow::from_samples("pearson", &col(|r| r.pearson))?,
        MetricRow::from_samples("spearman", &col(|r| r.spearman))?,
    ];
    let task = if labeled.is_some() {
        rows.push(MetricRow::from_samples("positive_fraction", &col(|r| r.positive_fraction))?);
        Task::StsEasy
    } else {
        Task::StsHard
    };
    Ok(EvalReport { task, metric_rows: rows })
}

/// Correlates each paragraph's CCR loading score with the PM pseudo ground
/// truth of its title, per construct. Aggregates: the mean over constructs
/// and a pooled correlation over all (paragraph, construct) points.
pub fn eval_pm(
    records: &[ParagraphRecord],
    questionnaires: &[Questionnaire],
    dictionaries: &[Dictionary],
    encoder: &Encoder<'_>,
    model: &WordVectorModel<f64>,
) -> Result<EvalReport> {
    if questionnaires.is_empty() {
        return Err(Error::Empty("questionnaires"));
    }
    if records.len() < 2 {
        return Err(Error::Data("PM evaluation needs at least 2 paragraphs".into()));
    }
    let paras = encode_records(encoder, records)?;
    let per_construct: Vec<(String, Vec<f64>, Vec<f64>)> = questionnaires
        .iter()
        .map(|q| {
            let dict = dictionaries
                .iter()
                .find(|d| d.construct == q.construct)
                .ok_or_else(|| Error::Data(format!("no dictionary for construct {:?}", q.construct)))?;
            let items = encode_items(encoder, q)?;
            let mut gt_cache: HashMap<&str, f64> = HashMap::new();
            let mut ccr = Vec::with_capacity(records.len());
            let mut gt = Vec::with_capacity(records.len());
            for (r, e) in records.iter().zip(&paras) {
                ccr.push(ccr_score(e, &items)?);
                let g = match gt_cache.get(r.title.as_str()) {
                    Some(&g) => g,
                    None => {
                        let g = pm_pseudo_ground_truth(&r.title, dict, model)?;
                        gt_cache.insert(&r.title, g);
                        g
                    }
                };
                gt.push(g);
            }
            Ok((q.construct.clone(), ccr, gt))
        })
        .collect::<Result<_>>()?;
    pm_report(&per_construct)
}

/// Builds the PM report from per-construct `(name, ccr, ground_truth)` columns.
pub fn pm_report(per_construct: &[(String, Vec<f64>, Vec<f64>)]) -> Result<EvalReport> {
    let mut rows = Vec::new();
    let (mut ps, mut ss) = (Vec::new(), Vec::new());
    let (mut all_x, mut all_y) = (Vec::new(), Vec::new());
    for (name, x, y) in per_construct {
        let p = pearson(x, y)?;
        let s = spearman(x, y)?;
        rows.push(MetricRow::new(format!("{name}/pearson"), p, 0.0, x.len()));
        rows.push(MetricRow {
            p_value: spearman_p_value(s, x.len()),
            ..MetricRow::new(format!("{name}/spearman"), s, 0.0, x.len())
        });
        ps.push(p);
        ss.push(s);
        all_x.extend_from_slice(x);
        all_y.extend_from_slice(y);
    }
    rows.push(MetricRow::from_samples("mean/pearson", &ps)?);
    rows.push(MetricRow::from_samples("mean/spearman", &ss)?);
    rows.push(MetricRow::new("pooled/pearson", pearson(&all_x, &all_y)?, 0.0, all_x.len()));
    let pooled_s = spearman(&all_x, &all_y)?;
    rows.push(MetricRow {
        p_value: spearman_p_value(pooled_s, all_x.len()),
        ..MetricRow::new("pooled/spearman", pooled_s, 0.0, all_x.len())
    });
    Ok(EvalReport {
        task: Task::Pm,
        metric_rows: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfficialRecord {
    pub author_id: String,
    pub writings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attitude_ordinal: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_continuous: Option<f64>,
}

impl OfficialRecord {
    pub fn validate(&self) -> Result<()> {
        let who = &self.author_id;
        if self.writings.is_empty() {
            return Err(Error::Data(format!("official {who:?} lists no writings")));
        }
        if self.attitude_ordinal.is_none() && self.support_continuous.is_none() {
            return Err(Error::Data(format!("official {who:?} has no attitude field")));
        }
        if let Some(a) = self.attitude_ordinal {
            if !(-1..=1).contains(&a) {
                return Err(Error::Data(format!("official {who:?}: attitude_ordinal {a} not in -1..=1")));
            }
        }
        if let Some(s) = self.support_continuous {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Data(format!("official {who:?}: support_continuous {s} not in [0,1]")));
            }
        }
        Ok(())
    }
}

/// Mean score over an official's writings, summed in sorted order so the
/// result does not depend on writing order.
pub fn official_mean(official: &OfficialRecord, scores: &HashMap<String, f64>) -> Result<(f64, f64)> {
    let mut vals = official
        .writings
        .iter()
        .map(|w| {
            scores
                .get(w)
                .copied()
                .ok_or_else(|| Error::Data(format!("official {:?}: writing {w:?} has no score", official.author_id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.is_empty() {
        return Err(Error::Data(format!("official {:?} has no scored writings", official.author_id)));
    }
    vals.sort_by(f64::total_cmp);
    mean_and_stderr(&vals)
}

/// Per-official mean scores and their Spearman correlation with each
/// attitude field present, with t-approximation p-values.
pub fn benchmark_officials(officials: &[OfficialRecord], scores: &HashMap<String, f64>) -> Result<EvalReport> {
    if officials.is_empty() {
        return Err(Error::Empty("officials"));
    }
    let mut means = Vec::with_capacity(officials.len());
    let mut official_rows = Vec::with_capacity(officials.len());
    for o in officials {
        o.validate()?;
        let (m, se) = official_mean(o, scores)?;
        means.push(m);
        official_rows.push(MetricRow::new(format!("official/{}", o.author_id), m, se, o.writings.len()));
    }
    let mut rows = Vec::new();
    let fields: [(&str, fn(&OfficialRecord) -> Option<f64>); 2] = [
        ("spearman/attitude_ordinal", |o| o.attitude_ordinal.map(f64::from)),
        ("spearman/support_continuous", |o| o.support_continuous),
    ];
    for (name, get) in fields {
        let (x, y): (Vec<f64>, Vec<f64>) = officials
            .iter()
            .zip(&means)
            .filter_map(|(o, &m)| get(o).map(|a| (m, a)))
            .unzip();
        if x.is_empty() {
            continue;
        }
        let rho = spearman(&x, &y)?;
        rows.push(MetricRow {
            p_value: spearman_p_value(rho, x.len()),
            ..MetricRow::new(name, rho, 0.0, x.len())
        });
    }
    rows.extend(official_rows);
    Ok(EvalReport {
        task: Task::Benchmark,
        metric_rows: rows,
    })
}
