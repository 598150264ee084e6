//! Title-similarity pseudo labels, percentile thresholds and triplet sampling.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ParagraphRecord;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::cosine;
use crate::wordvec::{embed_title, WordVectorModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub lower_pct: f64,
    pub upper_pct: f64,
}

impl ThresholdConfig {
    pub const PRESETS: [ThresholdConfig; 4] = [
        ThresholdConfig { lower_pct: 0.5, upper_pct: 99.5 },
        ThresholdConfig { lower_pct: 1.0, upper_pct: 99.0 },
        ThresholdConfig { lower_pct: 10.0, upper_pct: 90.0 },
        ThresholdConfig { lower_pct: 25.0, upper_pct: 75.0 },
    ];

    pub fn new(lower_pct: f64, upper_pct: f64) -> Result<Self> {
        let ok = |p: f64| p > 0.0 && p < 100.0;
        if !ok(lower_pct) || !ok(upper_pct) || lower_pct >= upper_pct {
            return Err(Error::Config(format!(
                "percentiles must satisfy 0 < lower < upper < 100, got {lower_pct},{upper_pct}"
            )));
        }
        Ok(Self { lower_pct, upper_pct })
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self::PRESETS[2]
    }
}

impl FromStr for ThresholdConfig {
    type Err = Error;

    /// Parses `"10,90"`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("expected LOWER,UPPER percentiles, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad percentile {v:?}")))
        };
        Self::new(parse(lo)?, parse(hi)?)
    }
}

impl fmt::Display for ThresholdConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lower_pct, self.upper_pct)
    }
}

/// Cosine similarity between every unordered pair of distinct unique titles.
#[derive(Debug, Clone, PartialEq)]
pub struct TitleSims {
    titles: Vec<String>,
    index: HashMap<String, usize>,
    /// Upper triangle, row-major: (0,1), (0,2), ..., (1,2), ...
    values: Vec<f64>,
    /// Titles dropped because no token had a vector.
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitlePairLine {
    pub a: String,
    pub b: String,
    pub sim: f64,
}

impl TitleSims {
    fn from_parts(titles: Vec<String>, values: Vec<f64>, excluded: Vec<String>) -> Result<Self> {
        if titles.len() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 representable unique titles, found {}",
                titles.len()
            )));
        }
        debug_assert_eq!(values.len(), titles.len() * (titles.len() - 1) / 2);
        let index = titles.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            titles,
            index,
            values,
            excluded,
        })
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let n = self.titles.len();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    pub fn contains(&self, title: &str) -> bool {
        self.index.contains_key(title)
    }

    /// Number of distinct-title pairs.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Similarity of two distinct titles. `None` for identical or unknown titles.
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = *self.index.get(a)?;
        let j = *self.index.get(b)?;
        (i != j).then(|| self.values[self.slot(i, j)])
    }

    /// Like [`get`](Self::get) but identical known titles score 1.
    pub fn pseudo_label(&self, a: &str, b: &str) -> Option<f64> {
        if a == b {
            return self.contains(a).then_some(1.0);
        }
        self.get(a, b)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        let n = self.titles.len();
        (0..n)
            .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
            .zip(&self.values)
            .map(|((i, j), &v)| (self.titles[i].as_str(), self.titles[j].as_str(), v))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::jsonl::write(
            path,
            self.iter().map(|(a, b, sim)| TitlePairLine {
                a: a.to_owned(),
                b: b.to_owned(),
                sim,
            }),
        )
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let lines: Vec<TitlePairLine> = crate::jsonl::read(path)?;
        let mut titles: Vec<String> = lines.iter().flat_map(|l| [l.a.clone(), l.b.clone()]).collect();
        titles.sort();
        titles.dedup();
        let n = titles.len();
        let idx: HashMap<&str, usize> = titles.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut values = vec![f64::NAN; n * n.saturating_sub(1) / 2];
        let shell = TitleSims {
            titles: titles.clone(),
            index: HashMap::new(),
            values: Vec::new(),
            excluded: Vec::new(),
        };
        for (k, l) in lines.iter().enumerate() {
            let (i, j) = (idx[l.a.as_str()], idx[l.b.as_str()]);
            if i == j {
                return Err(Error::line(path, k + 1, "self pair"));
            }
            values[shell.slot(i, j)] = l.sim;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Data(format!("{}: incomplete title-pair table", path.display())));
        }
        Self::from_parts(titles, values, Vec::new())
    }
}

/// Embeds each unique title with the word-vector model and computes all
/// pairwise cosines. Unrepresentable titles are excluded and listed.
pub fn title_similarity_matrix<T: Scalar>(
    records: &[ParagraphRecord],
    model: &WordVectorModel<T>,
) -> Result<TitleSims> {
    let unique: Vec<String> = {
        let mut t: Vec<String> = records.iter().map(|r| r.title.clone()).collect();
        t.sort();
        t.dedup();
        t
    };
    let mut titles = Vec::new();
    let mut vectors: Vec<Vec<T>> = Vec::new();
    let mut excluded = Vec::new();
    for t in unique {
        match embed_title(&t, model) {
            Ok(v) => {
                titles.push(t);
                vectors.push(v);
            }
            Err(Error::UnrepresentableTitle(_)) => excluded.push(t),
            Err(e) => return Err(e),
        }
    }
    if !excluded.is_empty() {
        log::warn!("{} title(s) have no in-vocabulary token and were excluded: {:?}", excluded.len(), excluded);
    }
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| cosine(&vectors[i], &vectors[j]).map(Scalar::as_f64))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    TitleSims::from_parts(titles, rows.concat(), excluded)
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * N)` of the
/// sorted input.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let x = pct * n as f64 / 100.0;
    let r = x.round();
    let rank = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    let rank = (rank as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Returns `(delta_minus, delta_plus)`.
pub fn compute_thresholds(sims: &[f64], config: ThresholdConfig) -> Result<(f64, f64)> {
    if sims.is_empty() {
        return Err(Error::Empty("similarity list"));
    }
    if sims.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN similarity".into()));
    }
    let mut sorted = sims.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((
        nearest_rank(&sorted, config.lower_pct),
        nearest_rank(&sorted, config.upper_pct),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub i: String,
    pub j: String,
    pub sim: f64,
    pub label: Label,
}

/// A paragraph pair with its title-similarity pseudo label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPair {
    pub i: String,
    pub j: String,
    pub sim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPairSet {
    pub pairs: Vec<LabeledPair>,
    /// `(delta_minus, delta_plus)`
    pub thresholds_used: (f64, f64),
}

impl LabeledPairSet {
    pub fn negative_fraction(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let neg = self.pairs.iter().filter(|p| p.label == Label::Negative).count();
        neg as f64 / self.pairs.len() as f64
    }
}

/// Lazily enumerates labeled pairs over `records` in index order `(a, b)`,
/// `a < b`. Pairs strictly between the thresholds are omitted, as are
/// records whose title is not in `sims`.
pub fn label_pairs<'a>(
    records: &'a [ParagraphRecord],
    sims: &'a TitleSims,
    thresholds: (f64, f64),
) -> impl Iterator<Item = LabeledPair> + 'a {
    let (lo, hi) = thresholds;
    let usable: Vec<&'a ParagraphRecord> = records.iter().filter(|r| sims.contains(&r.title)).collect();
    let n = usable.len();
    (0..n).flat_map(move |a| {
        let usable = usable.clone();
        (a + 1..n).filter_map(move |b| {
            let (ra, rb) = (usable[a], usable[b]);
            if ra.id == rb.id {
                return None;
            }
            let (sim, label) = if ra.title == rb.title {
                (1.0, Label::Positive)
            } else {
                let s = sims.get(&ra.title, &rb.title)?;
                if s > hi {
                    (s, Label::Positive)
                } else if s < lo {
                    (s, Label::Negative)
                } else {
                    return None;
                }
            };
            Some(LabeledPair {
                i: ra.id.clone(),
                j: rb.id.clone(),
                sim,
                label,
            })
        })
    })
}

/// Computes thresholds from `sims` under `config` and collects all labeled pairs.
pub fn build_pair_set(
    records: &[ParagraphRecord],
    sims: &TitleSims,
    config: ThresholdConfig,
) -> Result<LabeledPairSet> {
    let thresholds = compute_thresholds(sims.values(), config)?;
    Ok(LabeledPairSet {
        pairs: label_pairs(records, sims, thresholds).collect(),
        thresholds_used: thresholds,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub pos: String,
    pub neg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    pub triplets: Vec<Triplet>,
    /// Anchors without both a positive and a negative partner.
    pub skipped: usize,
}

#[derive(Default)]
struct Pools<'a> {
    pos: Vec<&'a str>,
    neg: Vec<&'a str>,
}

/// Per-anchor partner pools restricted to `anchors`, each sorted by id.
fn pools<'a>(pairs: &'a [LabeledPair], members: &HashSet<&str>) -> HashMap<&'a str, Pools<'a>> {
    let mut out: HashMap<&str, Pools> = HashMap::new();
    for p in pairs {
        if !members.contains(p.i.as_str()) || !members.contains(p.j.as_str()) {
            continue;
        }
        for (a, b) in [(&p.i, &p.j), (&p.j, &p.i)] {
            let e = out.entry(a.as_str()).or_default();
            match p.label {
                Label::Positive => e.pos.push(b.as_str()),
                Label::Negative => e.neg.push(b.as_str()),
            }
        }
    }
    for e in out.values_mut() {
        e.pos.sort_unstable();
        e.pos.dedup();
        e.neg.sort_unstable();
        e.neg.dedup();
    }
    out
}

fn unique_anchors<'a>(anchors: &[&'a str]) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    anchors.iter().copied().filter(|a| seen.insert(*a)).collect()
}

/// One triplet per eligible anchor, partners drawn uniformly from its pools.
/// Only pairs with both ends in `anchors` are used.
pub fn sample_triplets_random(pairs: &LabeledPairSet, anchors: &[&str], seed: u64) -> Result<TripletSample> {
    let members: HashSet<&str> = anchors.iter().copied().collect();
    let pools = pools(&pairs.pairs, &members);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::new();
    let mut skipped = 0;
    for a in unique_anchors(anchors) {
        match pools.get(a) {
            Some(p) if !p.pos.is_empty() && !p.neg.is_empty() => {
                let pos = p.pos[rng.random_range(0..p.pos.len())];
                let neg = p.neg[rng.random_range(0..p.neg.len())];
                triplets.push(Triplet {
                    anchor: a.to_owned(),
                    pos: pos.to_owned(),
                    neg: neg.to_owned(),
                });
            }
            _ => skipped += 1,
        }
    }
    if triplets.is_empty() {
        return Err(Error::Data("no anchor has both a positive and a negative partner".into()));
    }
    Ok(TripletSample { triplets, skipped })
}

/// One triplet per eligible anchor: the least similar positive and the most
/// similar negative by embedding cosine, ties going to the smallest id.
pub fn sample_triplets_hard<T: Scalar>(
    pairs: &LabeledPairSet,
    anchors: &[&str],
    embeddings: &IndexMap<String, Vec<T>>,
) -> Result<TripletSample> {
    let members: HashSet<&str> = anchors.iter().copied().collect();
    let pools = pools(&pairs.pairs, &members);
    let emb = |id: &str| {
        embeddings
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(id.to_owned()))
    };
    let mut triplets = Vec::new();
    let mut skipped = 0;
    for a in unique_anchors(anchors) {
        let Some(p) = pools.get(a).filter(|p| !p.pos.is_empty() && !p.neg.is_empty()) else {
            skipped += 1;
            continue;
        };
        let ea = emb(a)?;
        // pools are sorted by id, so strict comparisons keep the smallest id on ties
        let mut best_pos: Option<(&str, T)> = None;
        for &c in &p.pos {
            let s = cosine(ea, emb(c)?)?;
            if best_pos.is_none_or(|(_, b)| s < b) {
                best_pos = Some((c, s));
            }
        }
        let mut best_neg: Option<(&str, T)> = None;
        for &c in &p.neg {
            let s = cosine(ea, emb(c)?)?;
            if best_neg.is_none_or(|(_, b)| s > b) {
                best_neg = Some((c, s));
            }
        }
        triplets.push(Triplet {
            anchor: a.to_owned(),
            pos: best_pos.expect("nonempty pool").0.to_owned(),
            neg: best_neg.expect("nonempty pool").0.to_owned(),
        });
    }
    if triplets.is_empty() {
        return Err(Error::Data("no anchor has both a positive and a negative partner".into()));
    }
    Ok(TripletSample { triplets, skipped })
}

/// Pairs each record with a uniformly drawn other record, labeled with the
/// title pseudo ground truth. Records with unknown titles are ignored.
pub fn random_pairs(records: &[ParagraphRecord], sims: &TitleSims, n: usize, seed: u64) -> Result<Vec<SimPair>> {
    let usable: Vec<&ParagraphRecord> = records.iter().filter(|r| sims.contains(&r.title)).collect();
    if usable.len() < 2 {
        return Err(Error::Data("need at least 2 records with representable titles to form pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random_range(0..usable.len());
        let mut b = rng.random_range(0..usable.len() - 1);
        if b >= a {
            b += 1;
        }
        let (ra, rb) = (usable[a], usable[b]);
        out.push(SimPair {
            i: ra.id.clone(),
            j: rb.id.clone(),
            sim: sims.pseudo_label(&ra.title, &rb.title).expect("known titles"),
        });
    }
    Ok(out)
}

/// One random partner per record, in record order.
pub fn validation_pairs(records: &[ParagraphRecord], sims: &TitleSims, seed: u64) -> Result<Vec<SimPair>> {
    let usable: Vec<&ParagraphRecord> = records.iter().filter(|r| sims.contains(&r.title)).collect();
    if usable.len() < 2 {
        return Err(Error::Data("need at least 2 records with representable titles to form pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(usable
        .iter()
        .enumerate()
        .map(|(a, ra)| {
            let mut b = rng.random_range(0..usable.len() - 1);
            if b >= a {
                b += 1;
            }
            let rb = usable[b];
            SimPair {
                i: ra.id.clone(),
                j: rb.id.clone(),
                sim: sims.pseudo_label(&ra.title, &rb.title).expect("known titles"),
            }
        })
        .collect())
}
