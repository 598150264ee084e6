//! File-level operations behind each subcommand and pipeline stage.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::Context;
use ccr_core::corpus::{self, ParagraphRecord, Split};
use ccr_core::embedding::{self, AdapterCheckpoint, AdapterParams, CheckpointMeta, EmbeddingBackend, Encoder};
use ccr_core::eval::{self, EvalReport, OfficialRecord, PairSource, StsConfig};
use ccr_core::pairing::{self, LabeledPair, LabeledPairSet, SimPair, ThresholdConfig, TitleSims, Triplet};
use ccr_core::scoring::{self, Dictionary, Method, Questionnaire, ScoreRecord};
use ccr_core::trainer::{self, EpochLog, TrainConfig, TripletLossConfig, ValidationReport};
use ccr_core::wordvec::{WordVecTrainConfig, WordVectorModel};
use ccr_core::{jsonl, text, Error};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub type Table = IndexMap<String, Vec<f64>>;

/// Looks paragraph vectors up by id in a precomputed table and sends
/// everything else to the wrapped backend.
pub struct TableFirst<'a> {
    table: &'a Table,
    fallback: &'a dyn EmbeddingBackend,
    name: String,
}

impl<'a> TableFirst<'a> {
    pub fn new(table: &'a Table, fallback: &'a dyn EmbeddingBackend) -> Self {
        let name = format!("table+{}", fallback.name());
        Self { table, fallback, name }
    }
}

impl EmbeddingBackend for TableFirst<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.fallback.dim()
    }

    fn deterministic(&self) -> bool {
        self.fallback.deterministic()
    }

    fn embed_texts(&self, texts: &[&str]) -> ccr_core::Result<Vec<Vec<f64>>> {
        self.fallback.embed_texts(texts)
    }

    fn embed_keyed(&self, items: &[(&str, &str)]) -> ccr_core::Result<Vec<Vec<f64>>> {
        let misses: Vec<(&str, &str)> = items.iter().filter(|(id, _)| !self.table.contains_key(*id)).copied().collect();
        let mut fetched = if misses.is_empty() {
            Vec::new()
        } else {
            embedding::embed_keyed(self.fallback, &misses)?
        }
        .into_iter();
        Ok(items
            .iter()
            .map(|(id, _)| match self.table.get(*id) {
                Some(v) => v.clone(),
                None => fetched.next().expect("one fetched row per miss"),
            })
            .collect())
    }
}

pub fn in_split(records: &[ParagraphRecord], split: Split) -> Vec<ParagraphRecord> {
    records.iter().filter(|r| r.split == Some(split)).cloned().collect()
}

pub fn ids(records: &[ParagraphRecord]) -> Vec<&str> {
    records.iter().map(|r| r.id.as_str()).collect()
}

pub fn parse_split(s: &str) -> ccr_core::Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad split {s:?}, expected e.g. 0.6,0.2,0.2")))?;
    <[f64; 3]>::try_from(parts).map_err(|_| Error::Config(format!("split {s:?} needs three fractions")))
}

pub fn parse_range(s: &str) -> ccr_core::Result<(usize, usize)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("bad range {s:?}, expected min,max")))?;
    let p = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad range {s:?}")))
    };
    Ok((p(a)?, p(b)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub stats: corpus::CorpusStats,
    pub oversized: Vec<String>,
}

pub fn ingest(
    input: &Path,
    out: &Path,
    min_len: usize,
    max_len: usize,
    fractions: [f64; 3],
    seed: u64,
    stratify_by_title: bool,
) -> anyhow::Result<IngestSummary> {
    let raw = corpus::ingest_corpus(input)?;
    let normalized = corpus::normalize_paragraphs(&raw, min_len, max_len);
    for id in &normalized.oversized {
        log::warn!("paragraph {id} holds a single sentence of at least {max_len} characters");
    }
    let split = corpus::assign_splits(&normalized.records, fractions, seed, stratify_by_title)?;
    corpus::write_corpus(out, &split)?;
    Ok(IngestSummary {
        stats: corpus::corpus_stats(&split),
        oversized: normalized.oversized,
    })
}

pub fn train_wordvec(corpus_path: &Path, cfg: &WordVecTrainConfig, out: &Path) -> anyhow::Result<usize> {
    let records = corpus::ingest_corpus(corpus_path)?;
    let sentences: Vec<Vec<String>> = records.iter().map(|r| text::segment(&r.text)).collect();
    let model: WordVectorModel<f64> = ccr_core::wordvec::train_word_vectors(&sentences, cfg)?;
    model.save_vectors(out)?;
    Ok(model.len())
}

pub fn load_vectors(path: &Path) -> anyhow::Result<WordVectorModel<f64>> {
    Ok(WordVectorModel::load_vectors(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub delta_minus: f64,
    pub delta_plus: f64,
    pub n_pairs: usize,
    pub negative_fraction: f64,
    pub excluded_titles: Vec<String>,
}

pub struct PairOutputs<'a> {
    pub title_sims: &'a Path,
    pub pairs: &'a Path,
    pub thresholds: &'a Path,
    pub valid_pairs: Option<&'a Path>,
}

/// Title similarities over the whole corpus, labeled pairs within `split`
/// and one validation partner per record of the valid split.
pub fn build_pairs(
    records: &[ParagraphRecord],
    model: &WordVectorModel<f64>,
    threshold: ThresholdConfig,
    split: Option<Split>,
    seed: u64,
    out: &PairOutputs<'_>,
) -> anyhow::Result<ThresholdSummary> {
    let sims = pairing::title_similarity_matrix(records, model)?;
    for t in &sims.excluded {
        log::warn!("title {t:?} has no vector and is excluded from pairing");
    }
    sims.save(out.title_sims)?;
    let scope = match split {
        Some(s) => in_split(records, s),
        None => records.to_vec(),
    };
    let set = pairing::build_pair_set(&scope, &sims, threshold)?;
    jsonl::write(out.pairs, &set.pairs)?;
    let summary = ThresholdSummary {
        lower_pct: threshold.lower_pct,
        upper_pct: threshold.upper_pct,
        delta_minus: set.thresholds_used.0,
        delta_plus: set.thresholds_used.1,
        n_pairs: set.pairs.len(),
        negative_fraction: set.negative_fraction(),
        excluded_titles: sims.excluded.clone(),
    };
    jsonl::write_json(out.thresholds, &summary)?;
    if let Some(vp) = out.valid_pairs {
        let valid = in_split(records, Split::Valid);
        let pairs = pairing::validation_pairs(&valid, &sims, seed)?;
        jsonl::write(vp, &pairs)?;
    }
    Ok(summary)
}

pub fn load_pair_set(pairs: &Path, thresholds: Option<&Path>) -> anyhow::Result<LabeledPairSet> {
    let pairs: Vec<LabeledPair> = jsonl::read(pairs)?;
    let thresholds_used = match thresholds {
        Some(p) => {
            let t: ThresholdSummary = jsonl::read_json(p)?;
            (t.delta_minus, t.delta_plus)
        }
        None => (f64::NAN, f64::NAN),
    };
    Ok(LabeledPairSet { pairs, thresholds_used })
}

/// Anchors are every id mentioned by a pair, in first-seen order.
pub fn anchors_of(set: &LabeledPairSet) -> Vec<&str> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for p in &set.pairs {
        for id in [p.i.as_str(), p.j.as_str()] {
            if seen.insert(id) {
                out.push(id);
            }
        }
    }
    out
}

pub fn sample_triplets(
    set: &LabeledPairSet,
    hard_table: Option<&Table>,
    seed: u64,
    out: &Path,
) -> anyhow::Result<(usize, usize)> {
    let anchors = anchors_of(set);
    let sample = match hard_table {
        None => pairing::sample_triplets_random(set, &anchors, seed)?,
        Some(t) => pairing::sample_triplets_hard(set, &anchors, t)?,
    };
    if sample.skipped > 0 {
        log::info!("{} anchor(s) lacked a positive or negative partner", sample.skipped);
    }
    jsonl::write(out, &sample.triplets)?;
    Ok((sample.triplets.len(), sample.skipped))
}

pub struct TrainArgs<'a> {
    pub triplets: &'a Path,
    pub valid_pairs: &'a Path,
    pub table: &'a Table,
    pub train: TrainConfig,
    pub loss: TripletLossConfig,
    pub config_hash: String,
    pub out: &'a Path,
    pub log_out: Option<&'a Path>,
}

pub fn train_adapter(args: &TrainArgs<'_>) -> anyhow::Result<(ValidationReport, Vec<EpochLog>)> {
    let triplets: Vec<Triplet> = jsonl::read(args.triplets)?;
    let valid: Vec<SimPair> = jsonl::read(args.valid_pairs)?;
    let outcome = trainer::train_adapter(&triplets, args.table, &args.train, &args.loss, &valid)?;
    let ck = outcome.adapter.to_checkpoint(CheckpointMeta {
        seed: args.train.seed,
        config_hash: args.config_hash.clone(),
        epoch: outcome.best.epoch,
    });
    ck.save(args.out)?;
    if let Some(p) = args.log_out {
        jsonl::write(p, &outcome.log)?;
    }
    Ok((outcome.best, outcome.log))
}

pub fn load_adapter(path: &Path) -> anyhow::Result<AdapterParams<f64>> {
    let ck = AdapterCheckpoint::load(path)?;
    AdapterParams::from_checkpoint(&ck).with_context(|| format!("adapter {}", path.display()))
}

pub fn load_questionnaires(paths: &[impl AsRef<Path>]) -> anyhow::Result<Vec<Questionnaire>> {
    paths.iter().map(|p| Ok(Questionnaire::load(p.as_ref())?)).collect()
}

pub fn load_dictionaries(paths: &[impl AsRef<Path>]) -> anyhow::Result<Vec<Dictionary>> {
    paths.iter().map(|p| Ok(Dictionary::load(p.as_ref())?)).collect()
}

pub fn ccr_scores(
    records: &[ParagraphRecord],
    questionnaires: &[Questionnaire],
    encoder: &Encoder<'_>,
) -> anyhow::Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for q in questionnaires {
        out.extend(scoring::score_corpus(records, q, encoder)?);
    }
    Ok(out)
}

pub fn ddr_scores(
    records: &[ParagraphRecord],
    dictionaries: &[Dictionary],
    model: &WordVectorModel<f64>,
) -> anyhow::Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for d in dictionaries {
        out.extend(scoring::ddr_score_corpus(records, d, model)?);
    }
    Ok(out)
}

/// Item embeddings of every questionnaire, labeled by questionnaire index.
pub fn qic_inputs(questionnaires: &[Questionnaire], encoder: &Encoder<'_>) -> anyhow::Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut embs = Vec::new();
    let mut labels = Vec::new();
    for (k, q) in questionnaires.iter().enumerate() {
        let e = scoring::encode_items(encoder, q)?;
        labels.extend(std::iter::repeat_n(k, e.len()));
        embs.extend(e);
    }
    Ok((embs, labels))
}

pub fn sts_config(task: PairSource, rounds: usize, pairs: usize, seed: u64) -> StsConfig {
    StsConfig {
        source: task,
        rounds,
        pairs_per_round: pairs,
        seed,
    }
}

/// Scores of one construct keyed by paragraph id.
pub fn score_map(scores: &[ScoreRecord], construct: &str, method: Method) -> HashMap<String, f64> {
    scores
        .iter()
        .filter(|s| s.construct == construct && s.method == method)
        .map(|s| (s.paragraph_id.clone(), s.score))
        .collect()
}

pub fn benchmark(officials_path: &Path, scores: &HashMap<String, f64>) -> anyhow::Result<EvalReport> {
    let officials: Vec<OfficialRecord> = jsonl::read(officials_path)?;
    Ok(eval::benchmark_officials(&officials, scores)?)
}

/// Named evaluation reports, serialized in key order.
pub type ReportSet = BTreeMap<String, EvalReport>;

pub fn print_reports(reports: &ReportSet, json: bool) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(reports)?);
    } else {
        for (name, r) in reports {
            println!("[{name}]");
            print!("{}", r.to_table());
            println!();
        }
    }
    Ok(())
}

pub fn load_title_sims(path: &Path) -> anyhow::Result<TitleSims> {
    Ok(TitleSims::load(path)?)
}
