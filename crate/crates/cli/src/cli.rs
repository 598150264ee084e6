//! Command-line definitions and dispatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ccr_core::corpus::{self, Split};
use ccr_core::embedding::{self, EmbeddingBackend, Encoder};
use ccr_core::eval::{self, PairSource};
use ccr_core::pairing::ThresholdConfig;
use ccr_core::scoring::{self, Method, Quote, ScoreRecord};
use ccr_core::trainer::{TrainConfig, TripletLossConfig};
use ccr_core::wordvec::Architecture;
use ccr_core::{jsonl, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{PipelineConfig, SamplingMode};
use crate::ops::{self, ReportSet};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "ccr", version, about = "Construct-representation text analysis pipeline")]
pub struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// `mock[:dim=…,seed=…,mode=bag|text]`, `cache:<file>` or an http(s) URL.
    #[arg(long, env = "CCR_BACKEND", default_value = "mock")]
    pub backend: String,
    /// Adapter checkpoint applied on top of the backend.
    #[arg(long)]
    pub adapter: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StsTask {
    Hard,
    Easy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a raw JSONL corpus and assign splits.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        min_len: usize,
        #[arg(long, default_value_t = 500)]
        max_len: usize,
        #[arg(long, default_value = "0.6,0.2,0.2")]
        split: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        stratify_by_title: bool,
    },
    /// Train word vectors on the segmented corpus.
    TrainWordvec {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "skipgram")]
        arch: Architecture,
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        negative: usize,
        #[arg(long, default_value_t = 10)]
        min_count: usize,
        /// Character n-gram range, e.g. `1,4`.
        #[arg(long)]
        subword: Option<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Title similarities and threshold-labeled paragraph pairs.
    BuildPairs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value = "10,90")]
        pct: ThresholdConfig,
        /// Restrict pairs to one split.
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `title_sims.jsonl` next to `--out`.
        #[arg(long)]
        title_sims_out: Option<PathBuf>,
        /// Defaults to `thresholds.json` next to `--out`.
        #[arg(long)]
        thresholds_out: Option<PathBuf>,
        /// Also write validation pairs drawn from the valid split.
        #[arg(long)]
        valid_out: Option<PathBuf>,
    },
    /// Sample (anchor, positive, negative) triplets from labeled pairs.
    SampleTriplets {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum, default_value_t = SamplingMode::Random)]
        mode: SamplingMode,
        /// Embedding cache; required for hard sampling.
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the adapter with triplet loss.
    TrainAdapter {
        #[arg(long)]
        triplets: PathBuf,
        /// `cache:<file>`, or any backend together with `--corpus`.
        #[arg(long, env = "CCR_BACKEND")]
        backend: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        valid_pairs: PathBuf,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, default_value_t = 1e-5)]
        lr: f64,
        #[arg(long, default_value_t = 5.0)]
        alpha: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training log (JSONL).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Build an embedding cache for a corpus.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, env = "CCR_BACKEND", default_value = "mock")]
        backend: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// CCR loading scores against one or more questionnaires.
    Score {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "questionnaire", required = true)]
        questionnaires: Vec<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: PathBuf,
    },
    /// DDR scores against one or more dictionaries.
    DdrScore {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "dictionary", required = true)]
        dictionaries: Vec<PathBuf>,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank corpus paragraphs as candidate quotes for an item.
    Quotes {
        #[arg(long)]
        item: String,
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Semantic similarity evaluation (hard: random pairs, easy: thresholded).
    EvalSts {
        #[arg(long)]
        corpus: PathBuf,
        /// Title similarity file from `build-pairs`.
        #[arg(long, conflicts_with = "vectors")]
        title_sims: Option<PathBuf>,
        /// Word vectors to compute title similarities from.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, value_enum, default_value_t = StsTask::Hard)]
        task: StsTask,
        #[arg(long, default_value = "10,90")]
        pct: ThresholdConfig,
        #[arg(long, default_value_t = 20)]
        rounds: usize,
        #[arg(long, default_value_t = 4308)]
        pairs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Item classification: k-fold linear SVM over questionnaire items.
    EvalQic {
        #[arg(long = "questionnaire", required = true)]
        questionnaires: Vec<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlate CCR loading scores with dictionary pseudo ground truth.
    EvalPm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "questionnaire", required = true)]
        questionnaires: Vec<PathBuf>,
        #[arg(long = "dictionary", required = true)]
        dictionaries: Vec<PathBuf>,
        #[arg(long)]
        vectors: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate paragraph scores per official and correlate with attitudes.
    Benchmark {
        #[arg(long)]
        officials: PathBuf,
        /// Score JSONL from `score` or `ddr-score`.
        #[arg(long)]
        scores: PathBuf,
        /// Defaults to the only construct present.
        #[arg(long)]
        construct: Option<String>,
        #[arg(long, value_enum, default_value_t = MethodArg::Ccr)]
        method: MethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline from a config file, reusing fresh artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's backend.
        #[arg(long, env = "CCR_BACKEND")]
        backend: Option<String>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
    /// Write a planted two-cluster corpus with matching questionnaires,
    /// dictionaries, officials and a pipeline config.
    GenSynthetic {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        titles: usize,
        #[arg(long, default_value_t = 20)]
        per_title: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 30)]
        officials: usize,
        #[arg(long, default_value_t = 10)]
        writings: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ccr,
    Ddr,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ccr => Method::Ccr,
            MethodArg::Ddr => Method::Ddr,
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn sibling(out: &Path, name: &str) -> PathBuf {
    out.parent().unwrap_or(Path::new(".")).join(name)
}

fn load_records(path: &Path, split: Option<Split>) -> anyhow::Result<Vec<corpus::ParagraphRecord>> {
    let all = corpus::ingest_corpus(path)?;
    Ok(match split {
        Some(s) => ops::in_split(&all, s),
        None => all,
    })
}

struct Backend {
    inner: Box<dyn EmbeddingBackend>,
    adapter: Option<embedding::AdapterParams<f64>>,
}

impl Backend {
    fn open(args: &BackendArgs) -> anyhow::Result<Self> {
        let inner = embedding::parse_backend(&args.backend)?;
        let adapter = args.adapter.as_deref().map(ops::load_adapter).transpose()?;
        Ok(Self { inner, adapter })
    }

    fn encoder(&self) -> Encoder<'_> {
        Encoder::new(self.inner.as_ref(), self.adapter.as_ref())
    }
}

fn emit_reports(reports: ReportSet, out: Option<&Path>, json: bool) -> anyhow::Result<()> {
    if let Some(p) = out {
        jsonl::write_json(p, &reports)?;
    }
    ops::print_reports(&reports, json)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Ingest {
            input,
            out,
            min_len,
            max_len,
            split,
            seed,
            stratify_by_title,
        } => {
            let fractions = ops::parse_split(&split)?;
            let s = ops::ingest(&input, &out, min_len, max_len, fractions, seed, stratify_by_title)?;
            if json {
                print_json(&s)?;
            } else {
                println!(
                    "{} paragraphs, {} works, mean length {:.1}, splits {:?}, {} oversized",
                    s.stats.n_paragraphs,
                    s.stats.n_works,
                    s.stats.mean_char_len,
                    s.stats.split_fractions,
                    s.oversized.len()
                );
            }
        }
        Command::TrainWordvec {
            corpus,
            arch,
            dim,
            epochs,
            window,
            negative,
            min_count,
            subword,
            seed,
            out,
        } => {
            let section = crate::config::WordvecSection {
                arch,
                dim,
                epochs,
                window,
                negative,
                min_count,
                subword: subword.as_deref().map(ops::parse_range).transpose()?,
            };
            let n = ops::train_wordvec(&corpus, &section.to_train_config(seed), &out)?;
            println!("{n} vectors written to {}", out.display());
        }
        Command::BuildPairs {
            corpus,
            vectors,
            pct,
            split,
            seed,
            out,
            title_sims_out,
            thresholds_out,
            valid_out,
        } => {
            let records = corpus::ingest_corpus(&corpus)?;
            let model = ops::load_vectors(&vectors)?;
            let sims = title_sims_out.unwrap_or_else(|| sibling(&out, "title_sims.jsonl"));
            let thr = thresholds_out.unwrap_or_else(|| sibling(&out, "thresholds.json"));
            let s = ops::build_pairs(
                &records,
                &model,
                pct,
                split,
                seed,
                &ops::PairOutputs {
                    title_sims: &sims,
                    pairs: &out,
                    thresholds: &thr,
                    valid_pairs: valid_out.as_deref(),
                },
            )?;
            if json {
                print_json(&s)?;
            } else {
                println!(
                    "{} pairs, delta- {:.6}, delta+ {:.6}, negative fraction {:.4}",
                    s.n_pairs, s.delta_minus, s.delta_plus, s.negative_fraction
                );
            }
        }
        Command::SampleTriplets {
            pairs,
            mode,
            emb,
            seed,
            out,
        } => {
            let thr = sibling(&pairs, "thresholds.json");
            let set = ops::load_pair_set(&pairs, thr.exists().then_some(thr.as_path()))?;
            let table = match (mode, emb) {
                (SamplingMode::Random, _) => None,
                (SamplingMode::Hard, Some(p)) => Some(embedding::load_cache(&p)?),
                (SamplingMode::Hard, None) => {
                    return Err(Error::Config("hard sampling needs --emb <cache.jsonl>".into()).into())
                }
            };
            let (n, skipped) = ops::sample_triplets(&set, table.as_ref(), seed, &out)?;
            println!("{n} triplets, {skipped} anchors skipped");
        }
        Command::TrainAdapter {
            triplets,
            backend,
            corpus,
            valid_pairs,
            batch,
            epochs,
            warmup,
            lr,
            alpha,
            seed,
            out,
            log,
        } => {
            let table = match backend.strip_prefix("cache:") {
                Some(p) => embedding::load_cache(Path::new(p))?,
                None => {
                    let corpus = corpus.ok_or_else(|| {
                        Error::Config("a non-cache backend needs --corpus to embed paragraphs".into())
                    })?;
                    let b = embedding::parse_backend(&backend)?;
                    let records = corpus::ingest_corpus(&corpus)?;
                    eval::embedding_table(&Encoder::new(b.as_ref(), None), &records)?
                }
            };
            let train = TrainConfig {
                batch_size: batch,
                epochs,
                warmup_epochs: warmup,
                learning_rate: lr,
                adam: Default::default(),
                seed,
            };
            let loss = TripletLossConfig { margin_alpha: alpha };
            let config_hash = crate::artifacts::canonical_hash(&serde_json::json!({
                "train": train,
                "loss": loss,
                "backend": backend,
            }));
            let (best, log_rows) = ops::train_adapter(&ops::TrainArgs {
                triplets: &triplets,
                valid_pairs: &valid_pairs,
                table: &table,
                train,
                loss,
                config_hash,
                out: &out,
                log_out: log.as_deref(),
            })?;
            if json {
                print_json(&serde_json::json!({ "best": best, "log": log_rows }))?;
            } else {
                for l in &log_rows {
                    println!(
                        "epoch {}: loss {:.6}, pearson {:.4}, spearman {:.4}",
                        l.epoch, l.mean_loss, l.pearson, l.spearman
                    );
                }
                println!("kept epoch {} (validation pearson {:.4})", best.epoch, best.pearson);
            }
        }
        Command::Embed { corpus, backend, out } => {
            let b = embedding::parse_backend(&backend)?;
            let records = corpus::ingest_corpus(&corpus)?;
            embedding::cache_embeddings(b.as_ref(), &records, &out)?;
            println!("{} vectors of dim {} written to {}", records.len(), b.dim(), out.display());
        }
        Command::Score {
            corpus,
            questionnaires,
            backend,
            split,
            out,
        } => {
            let b = Backend::open(&backend)?;
            let records = load_records(&corpus, split)?;
            let qs = ops::load_questionnaires(&questionnaires)?;
            let scores = ops::ccr_scores(&records, &qs, &b.encoder())?;
            jsonl::write(&out, &scores)?;
            println!("{} scores written to {}", scores.len(), out.display());
        }
        Command::DdrScore {
            corpus,
            dictionaries,
            vectors,
            split,
            out,
        } => {
            let records = load_records(&corpus, split)?;
            let model = ops::load_vectors(&vectors)?;
            let ds = ops::load_dictionaries(&dictionaries)?;
            let scores = ops::ddr_scores(&records, &ds, &model)?;
            jsonl::write(&out, &scores)?;
            println!("{} scores written to {}", scores.len(), out.display());
        }
        Command::Quotes { item, quotes, k, backend } => {
            let b = Backend::open(&backend)?;
            let records = corpus::ingest_corpus(&quotes)?;
            let pool: Vec<Quote> = records
                .into_iter()
                .map(|r| Quote { id: r.id, text: r.text })
                .collect();
            let top = scoring::recommend_quotes(&item, &pool, &b.encoder(), k)?;
            if json {
                let rows: Vec<_> = top.iter().map(|(id, s)| serde_json::json!({"id": id, "score": s})).collect();
                print_json(&rows)?;
            } else {
                let text: BTreeMap<&str, &str> = pool.iter().map(|q| (q.id.as_str(), q.text.as_str())).collect();
                for (rank, (id, s)) in top.iter().enumerate() {
                    println!("{:>3}  {s:.4}  {id}  {}", rank + 1, text[id.as_str()]);
                }
            }
        }
        Command::EvalSts {
            corpus,
            title_sims,
            vectors,
            backend,
            task,
            pct,
            rounds,
            pairs,
            seed,
            split,
            out,
        } => {
            let records = load_records(&corpus, split)?;
            let sims = match (title_sims, vectors) {
                (Some(p), _) => ops::load_title_sims(&p)?,
                (None, Some(v)) => ccr_core::pairing::title_similarity_matrix(&records, &ops::load_vectors(&v)?)?,
                (None, None) => return Err(Error::Config("eval-sts needs --title-sims or --vectors".into()).into()),
            };
            let source = match task {
                StsTask::Hard => PairSource::Random,
                StsTask::Easy => PairSource::Threshold(pct),
            };
            let b = Backend::open(&backend)?;
            let report = eval::eval_sts(&records, &sims, &b.encoder(), &ops::sts_config(source, rounds, pairs, seed))?;
            let name = report.task.as_str().to_owned();
            emit_reports(ReportSet::from([(name, report)]), out.as_deref(), json)?;
        }
        Command::EvalQic {
            questionnaires,
            backend,
            folds,
            seed,
            out,
        } => {
            let b = Backend::open(&backend)?;
            let qs = ops::load_questionnaires(&questionnaires)?;
            let (embs, labels) = ops::qic_inputs(&qs, &b.encoder())?;
            let report = eval::eval_qic(&embs, &labels, folds, seed)?;
            emit_reports(ReportSet::from([("qic".to_owned(), report)]), out.as_deref(), json)?;
        }
        Command::EvalPm {
            corpus,
            questionnaires,
            dictionaries,
            vectors,
            backend,
            split,
            out,
        } => {
            let b = Backend::open(&backend)?;
            let records = load_records(&corpus, split)?;
            let qs = ops::load_questionnaires(&questionnaires)?;
            let ds = ops::load_dictionaries(&dictionaries)?;
            let model = ops::load_vectors(&vectors)?;
            let report = eval::eval_pm(&records, &qs, &ds, &b.encoder(), &model)?;
            emit_reports(ReportSet::from([("pm".to_owned(), report)]), out.as_deref(), json)?;
        }
        Command::Benchmark {
            officials,
            scores,
            construct,
            method,
            out,
        } => {
            let rows: Vec<ScoreRecord> = jsonl::read(&scores)?;
            let method = Method::from(method);
            let construct = match construct {
                Some(c) => c,
                None => {
                    let mut names: Vec<&str> = rows
                        .iter()
                        .filter(|r| r.method == method)
                        .map(|r| r.construct.as_str())
                        .collect();
                    names.sort_unstable();
                    names.dedup();
                    match names.as_slice() {
                        [one] => one.to_string(),
                        _ => {
                            return Err(Error::Config(format!(
                                "scores hold constructs {names:?}; pick one with --construct"
                            ))
                            .into())
                        }
                    }
                }
            };
            let map = ops::score_map(&rows, &construct, method);
            let report = ops::benchmark(&officials, &map)?;
            emit_reports(ReportSet::from([("benchmark".to_owned(), report)]), out.as_deref(), json)?;
        }
        Command::Run {
            config,
            backend,
            seed,
            work_dir,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(b) = backend {
                cfg.backend = b;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = work_dir {
                cfg.paths.work_dir = w;
            }
            let report = pipeline::run_pipeline(&cfg)?;
            if json {
                print_json(&report)?;
            } else {
                for s in &report.stages {
                    match s.status {
                        pipeline::StageStatus::Ran => println!("{:<16} ran      ({})", s.stage, s.reason),
                        pipeline::StageStatus::Skipped => println!("{:<16} skipped", s.stage),
                    }
                }
                let rep = report.work_dir.join(pipeline::REPORT);
                let reports: ReportSet =
                    jsonl::read_json(&rep).with_context(|| format!("reading {}", rep.display()))?;
                ops::print_reports(&reports, false)?;
            }
        }
        Command::GenSynthetic {
            out_dir,
            titles,
            per_title,
            dim,
            noise,
            officials,
            writings,
            seed,
        } => {
            let written = crate::synthetic::write_synthetic(
                &out_dir,
                &crate::synthetic::SyntheticSpec {
                    titles,
                    per_title,
                    dim,
                    noise,
                    officials,
                    writings,
                    seed,
                },
            )?;
            println!("wrote {} files under {}", written.len(), out_dir.display());
        }
    }
    Ok(())
}
