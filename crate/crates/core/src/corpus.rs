//! Canonical paragraph records: ingestion, length normalization and
//! train/valid/test assignment.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{char_len, sentences};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// One corpus paragraph. `title` is the topic label of the enclosing work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub id: String,
    pub work_id: String,
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl ParagraphRecord {
    pub fn new(
        id: impl Into<String>,
        work_id: impl Into<String>,
        title: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            work_id: work_id.into(),
            title: title.into(),
            text: text.into(),
            split: None,
        }
    }

    /// Length of `text` in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_paragraphs: usize,
    pub n_works: usize,
    pub mean_char_len: f64,
    /// Fractions of split-assigned records in train, valid, test.
    pub split_fractions: [f64; 3],
}

pub fn corpus_stats(records: &[ParagraphRecord]) -> CorpusStats {
    let n = records.len();
    let works: HashSet<&str> = records.iter().map(|r| r.work_id.as_str()).collect();
    let total: usize = records.iter().map(ParagraphRecord::char_len).sum();
    let mut counts = [0usize; 3];
    for r in records {
        if let Some(s) = r.split {
            counts[s as usize] += 1;
        }
    }
    let assigned: usize = counts.iter().sum();
    let split_fractions = if assigned == 0 {
        [0.0; 3]
    } else {
        counts.map(|c| c as f64 / assigned as f64)
    };
    CorpusStats {
        n_paragraphs: n,
        n_works: works.len(),
        mean_char_len: if n == 0 { 0.0 } else { total as f64 / n as f64 },
        split_fractions,
    }
}

/// Reads a JSONL corpus, validating each line.
pub fn ingest_corpus(path: &Path) -> Result<Vec<ParagraphRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ParagraphRecord = serde_json::from_str(&line)
            .map_err(|e| Error::line(path, lineno, format!("malformed record: {e}")))?;
        if rec.id.is_empty() {
            return Err(Error::line(path, lineno, "empty id"));
        }
        if rec.text.trim().is_empty() {
            return Err(Error::line(path, lineno, format!("empty text in record {:?}", rec.id)));
        }
        if rec.title.trim().is_empty() {
            return Err(Error::line(path, lineno, format!("empty title in record {:?}", rec.id)));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::line(path, lineno, format!("duplicate id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[ParagraphRecord]) -> Result<()> {
    crate::jsonl::write(path, records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub records: Vec<ParagraphRecord>,
    /// Ids of records that still reach `max_len` because a single sentence does.
    pub oversized: Vec<String>,
}

/// Splits over-long paragraphs at sentence boundaries, then merges short ones
/// into a neighbour of the same work.
///
/// A short paragraph joins its predecessor, or failing that its successor;
/// a join is skipped when the result would reach `max_len`. Merged records keep
/// the id of their earliest part; split segments get `{id}#{k}`.
pub fn normalize_paragraphs(records: &[ParagraphRecord], min_len: usize, max_len: usize) -> Normalized {
    let mut out = Vec::with_capacity(records.len());
    let mut oversized = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let work = &records[start].work_id;
        let end = start
            + records[start..]
                .iter()
                .take_while(|r| &r.work_id == work)
                .count();
        let mut pieces = Vec::new();
        for rec in &records[start..end] {
            split_long(rec, max_len, &mut pieces, &mut oversized);
        }
        merge_short(pieces, min_len, max_len, &mut out);
        start = end;
    }
    Normalized {
        records: out,
        oversized,
    }
}

fn split_long(
    rec: &ParagraphRecord,
    max_len: usize,
    out: &mut Vec<ParagraphRecord>,
    oversized: &mut Vec<String>,
) {
    let total = rec.char_len();
    if total < max_len {
        out.push(rec.clone());
        return;
    }
    let sents: Vec<(&str, usize)> = sentences(&rec.text)
        .into_iter()
        .map(|s| (s, char_len(s)))
        .collect();
    let target_segments = total.div_ceil(max_len.saturating_sub(1).max(1));
    let ideal = total as f64 / target_segments as f64;

    let mut segments: Vec<(String, usize)> = Vec::new();
    let mut cur = String::new();
    let mut cur_len = 0usize;
    let mut consumed = 0usize;
    for (s, len) in sents {
        if len >= max_len {
            if cur_len > 0 {
                segments.push((std::mem::take(&mut cur), cur_len));
                cur_len = 0;
            }
            segments.push((s.to_owned(), len));
            consumed += len;
            continue;
        }
        if cur_len > 0 {
            let boundary = ideal * (segments.len() + 1) as f64;
            let before = (consumed as f64 - boundary).abs();
            let after = ((consumed + len) as f64 - boundary).abs();
            let must_close = cur_len + len >= max_len;
            let prefer_close = (consumed + len) as f64 > boundary && before <= after;
            if must_close || prefer_close {
                segments.push((std::mem::take(&mut cur), cur_len));
                cur_len = 0;
            }
        }
        cur.push_str(s);
        cur_len += len;
        consumed += len;
    }
    if cur_len > 0 {
        segments.push((cur, cur_len));
    }

    let single = segments.len() == 1;
    for (k, (text, len)) in segments.into_iter().enumerate() {
        let id = if single {
            rec.id.clone()
        } else {
            format!("{}#{}", rec.id, k + 1)
        };
        if len >= max_len {
            oversized.push(id.clone());
        }
        out.push(ParagraphRecord {
            id,
            text,
            ..rec.clone()
        });
    }
}

fn merge_short(
    pieces: Vec<ParagraphRecord>,
    min_len: usize,
    max_len: usize,
    out: &mut Vec<ParagraphRecord>,
) {
    let work_start = out.len();
    let mut carry: Option<ParagraphRecord> = None;
    for mut p in pieces {
        if let Some(c) = carry.take() {
            if c.char_len() + p.char_len() < max_len {
                let mut joined = c;
                joined.text.push_str(&p.text);
                p = joined;
            } else {
                out.push(c);
            }
        }
        let len = p.char_len();
        if len < min_len {
            if out.len() > work_start {
                let last = out.last_mut().expect("nonempty");
                if last.char_len() + len < max_len {
                    last.text.push_str(&p.text);
                    continue;
                }
            }
            carry = Some(p);
            continue;
        }
        out.push(p);
    }
    if let Some(c) = carry {
        out.push(c);
    }
}

/// Assigns splits with the largest-remainder rule, either over the whole
/// corpus or independently within each title.
pub fn assign_splits(
    records: &[ParagraphRecord],
    fractions: [f64; 3],
    seed: u64,
    stratify_by_title: bool,
) -> Result<Vec<ParagraphRecord>> {
    if fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::Config(format!("split fractions must be positive: {fractions:?}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = records.to_vec();
    let groups: Vec<Vec<usize>> = if stratify_by_title {
        let mut by_title: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            by_title.entry(&r.title).or_default().push(i);
        }
        by_title.into_values().collect()
    } else {
        vec![(0..records.len()).collect()]
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let counts = largest_remainder(group.len(), &fractions);
        let mut it = group.into_iter();
        for (split, n) in Split::ALL.into_iter().zip(counts) {
            for idx in it.by_ref().take(n) {
                out[idx].split = Some(split);
            }
        }
    }
    Ok(out)
}

fn largest_remainder(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * n as f64);
    let mut counts = exact.map(|x| x.floor() as usize);
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}
