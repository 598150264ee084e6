//! Resumable end-to-end run. A stage is skipped when every output exists,
//! was written under the same config hash and inputs, and still matches its
//! recorded content hash. Once any stage runs, all later stages run too.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ccr_core::corpus::{self, Split};
use ccr_core::embedding::{self, Encoder};
use ccr_core::eval::{self, PairSource};
use ccr_core::scoring::Method;
use ccr_core::trainer::{TrainConfig, TripletLossConfig};
use ccr_core::{jsonl, Error};
use serde::Serialize;

use crate::artifacts::{check_fresh, sha256_file, Provenance};
use crate::config::{PipelineConfig, SamplingMode};
use crate::ops::{self, ReportSet};

pub const CORPUS: &str = "corpus.jsonl";
pub const VECTORS: &str = "vectors.txt";
pub const TITLE_SIMS: &str = "title_sims.jsonl";
pub const PAIRS: &str = "pairs.jsonl";
pub const THRESHOLDS: &str = "thresholds.json";
pub const VALID_PAIRS: &str = "valid_pairs.jsonl";
pub const EMBEDDINGS: &str = "embeddings.jsonl";
pub const TRIPLETS: &str = "triplets.jsonl";
pub const ADAPTER: &str = "adapter.json";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const SCORES: &str = "scores.jsonl";
pub const DDR_SCORES: &str = "ddr_scores.jsonl";
pub const REPORT: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageOutcome {
    pub stage: String,
    pub status: StageStatus,
    /// Why the stage ran; empty when skipped.
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub config_hash: String,
    pub work_dir: PathBuf,
    pub stages: Vec<StageOutcome>,
}

impl PipelineReport {
    pub fn status(&self, stage: &str) -> Option<&StageStatus> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| &s.status)
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    hash: String,
    work: PathBuf,
    dirty: bool,
    outcomes: Vec<StageOutcome>,
}

impl Runner<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.work.join(name)
    }

    /// Runs `body` unless all `outputs` are fresh for these `inputs`.
    fn stage(
        &mut self,
        name: &str,
        inputs: &[(&str, &Path)],
        outputs: &[&str],
        body: impl FnOnce(&Self) -> anyhow::Result<()>,
    ) -> anyhow::Result<()> {
        let mut hashes = BTreeMap::new();
        for (label, path) in inputs {
            if !path.exists() {
                return Err(Error::Config(format!("stage {name}: input {} does not exist", path.display())).into());
            }
            hashes.insert(label.to_string(), sha256_file(path)?);
        }
        let prov = Provenance {
            stage: name.to_owned(),
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            inputs: hashes,
        };
        let stale = if self.dirty {
            Some("upstream stage re-ran".to_owned())
        } else {
            outputs.iter().find_map(|o| {
                check_fresh(&self.out(o), &prov)
                    .err()
                    .map(|why| format!("{o}: {why}"))
            })
        };
        let Some(reason) = stale else {
            log::info!("stage {name}: up to date, skipped");
            self.outcomes.push(StageOutcome {
                stage: name.to_owned(),
                status: StageStatus::Skipped,
                reason: String::new(),
            });
            return Ok(());
        };
        log::info!("stage {name}: running ({reason})");
        body(self).with_context(|| format!("stage {name} failed"))?;
        for o in outputs {
            prov.stamp(&self.out(o)).with_context(|| format!("stage {name} failed"))?;
        }
        self.dirty = true;
        self.outcomes.push(StageOutcome {
            stage: name.to_owned(),
            status: StageStatus::Ran,
            reason,
        });
        Ok(())
    }
}

/// ingest → train-wordvec → build-pairs → embed → sample-triplets →
/// train-adapter → score → eval.
pub fn run_pipeline(cfg: &PipelineConfig) -> anyhow::Result<PipelineReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.paths.work_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", cfg.paths.work_dir.display())))?;
    let mut r = Runner {
        cfg,
        hash: cfg.config_hash(),
        work: cfg.paths.work_dir.clone(),
        dirty: false,
        outcomes: Vec::new(),
    };
    let seed = cfg.seed;
    let corpus_path = r.out(CORPUS);
    let vectors_path = r.out(VECTORS);

    r.stage("ingest", &[("input", &cfg.paths.input)], &[CORPUS], |r| {
        let i = &cfg.ingest;
        let s = ops::ingest(&cfg.paths.input, &r.out(CORPUS), i.min_len, i.max_len, i.split, seed, i.stratify_by_title)?;
        log::info!(
            "ingested {} paragraphs from {} works",
            s.stats.n_paragraphs,
            s.stats.n_works
        );
        Ok(())
    })?;

    match &cfg.paths.vectors {
        Some(pre) => r.stage("train-wordvec", &[("vectors", pre)], &[VECTORS], |r| {
            ops::load_vectors(pre)?.save_vectors(&r.out(VECTORS))?;
            Ok(())
        })?,
        None => r.stage("train-wordvec", &[(CORPUS, &corpus_path)], &[VECTORS], |r| {
            let n = ops::train_wordvec(&corpus_path, &cfg.wordvec.to_train_config(seed), &r.out(VECTORS))?;
            log::info!("trained {n} word vectors");
            Ok(())
        })?,
    }

    r.stage(
        "build-pairs",
        &[(CORPUS, &corpus_path), (VECTORS, &vectors_path)],
        &[TITLE_SIMS, PAIRS, THRESHOLDS, VALID_PAIRS],
        |r| {
            let records = corpus::ingest_corpus(&corpus_path)?;
            let model = ops::load_vectors(&vectors_path)?;
            let (sims, pairs, thr, valid) = (r.out(TITLE_SIMS), r.out(PAIRS), r.out(THRESHOLDS), r.out(VALID_PAIRS));
            let s = ops::build_pairs(
                &records,
                &model,
                cfg.pairs.threshold()?,
                Some(Split::Train),
                seed,
                &ops::PairOutputs {
                    title_sims: &sims,
                    pairs: &pairs,
                    thresholds: &thr,
                    valid_pairs: Some(&valid),
                },
            )?;
            log::info!(
                "{} labeled pairs, delta- {:.4}, delta+ {:.4}",
                s.n_pairs,
                s.delta_minus,
                s.delta_plus
            );
            Ok(())
        },
    )?;

    let backend = embedding::parse_backend(&cfg.backend)?;
    let embeddings_path = r.out(EMBEDDINGS);
    r.stage("embed", &[(CORPUS, &corpus_path)], &[EMBEDDINGS], |r| {
        let records = corpus::ingest_corpus(&corpus_path)?;
        embedding::cache_embeddings(backend.as_ref(), &records, &r.out(EMBEDDINGS))?;
        Ok(())
    })?;

    let pairs_path = r.out(PAIRS);
    let thresholds_path = r.out(THRESHOLDS);
    let hard = cfg.sampling.mode == SamplingMode::Hard;
    let mut trip_inputs: Vec<(&str, &Path)> = vec![(PAIRS, &pairs_path), (THRESHOLDS, &thresholds_path)];
    if hard {
        trip_inputs.push((EMBEDDINGS, &embeddings_path));
    }
    r.stage("sample-triplets", &trip_inputs, &[TRIPLETS], |r| {
        let set = ops::load_pair_set(&pairs_path, Some(&thresholds_path))?;
        let table = if hard { Some(embedding::load_cache(&embeddings_path)?) } else { None };
        let (n, skipped) = ops::sample_triplets(&set, table.as_ref(), seed, &r.out(TRIPLETS))?;
        log::info!("{n} triplets, {skipped} anchors skipped");
        Ok(())
    })?;

    let triplets_path = r.out(TRIPLETS);
    let valid_path = r.out(VALID_PAIRS);
    r.stage(
        "train-adapter",
        &[(TRIPLETS, &triplets_path), (VALID_PAIRS, &valid_path), (EMBEDDINGS, &embeddings_path)],
        &[ADAPTER, TRAIN_LOG],
        |r| {
            let table = embedding::load_cache(&embeddings_path)?;
            let t = &cfg.train;
            let (out, log_out) = (r.out(ADAPTER), r.out(TRAIN_LOG));
            let (best, _) = ops::train_adapter(&ops::TrainArgs {
                triplets: &triplets_path,
                valid_pairs: &valid_path,
                table: &table,
                train: TrainConfig {
                    batch_size: t.batch,
                    epochs: t.epochs,
                    warmup_epochs: t.warmup,
                    learning_rate: t.lr,
                    adam: Default::default(),
                    seed,
                },
                loss: TripletLossConfig { margin_alpha: t.alpha },
                config_hash: r.hash.clone(),
                out: &out,
                log_out: Some(&log_out),
            })?;
            log::info!("best epoch {} with validation pearson {:.4}", best.epoch, best.pearson);
            Ok(())
        },
    )?;

    let adapter_path = r.out(ADAPTER);
    let mut score_inputs: Vec<(String, PathBuf)> = vec![
        (CORPUS.into(), corpus_path.clone()),
        (EMBEDDINGS.into(), embeddings_path.clone()),
        (ADAPTER.into(), adapter_path.clone()),
    ];
    for (k, q) in cfg.paths.questionnaires.iter().enumerate() {
        score_inputs.push((format!("questionnaire{k}"), q.clone()));
    }
    let has_dicts = !cfg.paths.dictionaries.is_empty();
    if has_dicts {
        score_inputs.push((VECTORS.into(), vectors_path.clone()));
        for (k, d) in cfg.paths.dictionaries.iter().enumerate() {
            score_inputs.push((format!("dictionary{k}"), d.clone()));
        }
    }
    let borrowed: Vec<(&str, &Path)> = score_inputs.iter().map(|(l, p)| (l.as_str(), p.as_path())).collect();
    let mut score_outputs = vec![SCORES];
    if has_dicts {
        score_outputs.push(DDR_SCORES);
    }
    r.stage("score", &borrowed, &score_outputs, |r| {
        let records = ops::in_split(&corpus::ingest_corpus(&corpus_path)?, Split::Test);
        let table = embedding::load_cache(&embeddings_path)?;
        let adapter = ops::load_adapter(&adapter_path)?;
        let tf = ops::TableFirst::new(&table, backend.as_ref());
        let enc = Encoder::new(&tf, Some(&adapter));
        let qs = ops::load_questionnaires(&cfg.paths.questionnaires)?;
        jsonl::write(&r.out(SCORES), &ops::ccr_scores(&records, &qs, &enc)?)?;
        if has_dicts {
            let model = ops::load_vectors(&vectors_path)?;
            let ds = ops::load_dictionaries(&cfg.paths.dictionaries)?;
            jsonl::write(&r.out(DDR_SCORES), &ops::ddr_scores(&records, &ds, &model)?)?;
        }
        Ok(())
    })?;

    let sims_path = r.out(TITLE_SIMS);
    let mut eval_inputs = score_inputs.clone();
    eval_inputs.push((TITLE_SIMS.into(), sims_path.clone()));
    if !has_dicts {
        eval_inputs.push((VECTORS.into(), vectors_path.clone()));
    }
    if let Some(o) = &cfg.paths.officials {
        eval_inputs.push(("officials".into(), o.clone()));
    }
    let borrowed: Vec<(&str, &Path)> = eval_inputs.iter().map(|(l, p)| (l.as_str(), p.as_path())).collect();
    r.stage("eval", &borrowed, &[REPORT], |r| {
        let all = corpus::ingest_corpus(&corpus_path)?;
        let test = ops::in_split(&all, Split::Test);
        let table = embedding::load_cache(&embeddings_path)?;
        let adapter = ops::load_adapter(&adapter_path)?;
        let sims = ops::load_title_sims(&sims_path)?;
        let tf = ops::TableFirst::new(&table, backend.as_ref());
        let enc = Encoder::new(&tf, Some(&adapter));
        let base = Encoder::new(&tf, None);
        let e = &cfg.eval;
        let mut reports = ReportSet::new();

        let hard_cfg = ops::sts_config(PairSource::Random, e.sts_rounds, e.sts_pairs, seed);
        let easy_cfg = ops::sts_config(PairSource::Threshold(cfg.pairs.threshold()?), e.sts_rounds, e.sts_pairs, seed);
        reports.insert("sts_hard".into(), eval::eval_sts(&test, &sims, &enc, &hard_cfg)?);
        reports.insert("sts_hard_baseline".into(), eval::eval_sts(&test, &sims, &base, &hard_cfg)?);
        reports.insert("sts_easy".into(), eval::eval_sts(&test, &sims, &enc, &easy_cfg)?);

        let qs = ops::load_questionnaires(&cfg.paths.questionnaires)?;
        if qs.len() >= 2 {
            let (embs, labels) = ops::qic_inputs(&qs, &enc)?;
            reports.insert("qic".into(), eval::eval_qic(&embs, &labels, e.qic_folds, seed)?);
        }
        if has_dicts {
            let model = ops::load_vectors(&vectors_path)?;
            let ds = ops::load_dictionaries(&cfg.paths.dictionaries)?;
            reports.insert("pm".into(), eval::eval_pm(&test, &qs, &ds, &enc, &model)?);
        }
        if let Some(off) = &cfg.paths.officials {
            let construct = match &e.benchmark_construct {
                Some(c) => c.clone(),
                None => qs
                    .first()
                    .map(|q| q.construct.clone())
                    .ok_or_else(|| anyhow!(Error::Config("benchmark needs a questionnaire".into())))?,
            };
            let q = qs
                .iter()
                .find(|q| q.construct == construct)
                .ok_or_else(|| Error::Config(format!("no questionnaire for benchmark construct {construct:?}")))?;
            let scores = ops::ccr_scores(&all, std::slice::from_ref(q), &enc)?;
            let map = ops::score_map(&scores, &construct, Method::Ccr);
            reports.insert("benchmark".into(), ops::benchmark(off, &map)?);
        }
        jsonl::write_json(&r.out(REPORT), &reports)?;
        Ok(())
    })?;

    Ok(PipelineReport {
        config_hash: r.hash,
        work_dir: r.work,
        stages: r.outcomes,
    })
}
