//! On-disk synthetic dataset for smoke runs and tests.

use std::path::{Path, PathBuf};

use ccr_core::corpus;
use ccr_core::eval::{
    generate_synthetic_corpus, synthetic_dictionaries, synthetic_officials, synthetic_questionnaires,
};
use ccr_core::{jsonl, Error};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub titles: usize,
    pub per_title: usize,
    pub dim: usize,
    pub noise: f64,
    pub officials: usize,
    pub writings: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            titles: 10,
            per_title: 20,
            dim: 64,
            noise: 0.3,
            officials: 30,
            writings: 10,
            seed: 42,
        }
    }
}

/// Pipeline config matching the files written by [`write_synthetic`]. Word
/// vectors are small and the learning rate is large because the corpus is.
fn config_text(constructs: &[String], seed: u64) -> String {
    let list = |dir: &str| {
        constructs
            .iter()
            .map(|c| format!("\"{dir}/{c}.json\""))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        r#"seed = {seed}
backend = "mock:dim=64,seed=0"

[paths]
input = "raw.jsonl"
work_dir = "out"
questionnaires = [{q}]
dictionaries = [{d}]
officials = "officials.jsonl"

[ingest]
min_len = 50
max_len = 500
split = [0.6, 0.2, 0.2]
stratify_by_title = true

[wordvec]
arch = "skipgram"
dim = 32
epochs = 5
window = 5
negative = 5
min_count = 5

[pairs]
lower_pct = 10.0
upper_pct = 90.0

[sampling]
mode = "random"

[train]
batch = 16
epochs = 3
warmup = 1
lr = 1e-2
alpha = 5.0

[eval]
sts_rounds = 5
sts_pairs = 200
qic_folds = 10
"#,
        q = list("questionnaires"),
        d = list("dictionaries"),
    )
}

/// Writes `raw.jsonl`, `title_vectors.txt`, `questionnaires/`,
/// `dictionaries/`, `officials.jsonl` and `ccr.toml` under `dir`.
pub fn write_synthetic(dir: &Path, spec: &SyntheticSpec) -> anyhow::Result<Vec<PathBuf>> {
    let syn = generate_synthetic_corpus(spec.titles, spec.per_title, spec.dim, spec.noise, spec.seed)?;
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())));
    mkdir(&dir.join("questionnaires"))?;
    mkdir(&dir.join("dictionaries"))?;
    let mut written = Vec::new();

    let raw = dir.join("raw.jsonl");
    corpus::write_corpus(&raw, &syn.records)?;
    written.push(raw);
    let tv = dir.join("title_vectors.txt");
    syn.title_model().save_vectors(&tv)?;
    written.push(tv);

    let mut constructs = Vec::new();
    for q in synthetic_questionnaires(&syn, spec.seed.wrapping_add(1)) {
        let p = dir.join("questionnaires").join(format!("{}.json", q.construct));
        jsonl::write_json(&p, &q)?;
        constructs.push(q.construct.clone());
        written.push(p);
    }
    for d in synthetic_dictionaries(&syn) {
        let p = dir.join("dictionaries").join(format!("{}.json", d.construct));
        jsonl::write_json(&p, &d)?;
        written.push(p);
    }
    let offs = synthetic_officials(&syn, spec.officials, spec.writings, spec.seed.wrapping_add(2))?;
    let op = dir.join("officials.jsonl");
    jsonl::write(&op, &offs)?;
    written.push(op);

    let cfg = dir.join("ccr.toml");
    std::fs::write(&cfg, config_text(&constructs, spec.seed))
        .map_err(|e| Error::Config(format!("{}: {e}", cfg.display())))?;
    written.push(cfg);
    Ok(written)
}
