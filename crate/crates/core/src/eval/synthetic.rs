//! Deterministic planted-structure fixtures: a two-cluster corpus with known
//! title vectors, plus matching questionnaires, dictionaries and officials.

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::OfficialRecord;
use crate::corpus::ParagraphRecord;
use crate::error::{Error, Result};
use crate::scoring::{Dictionary, Item, Questionnaire};
use crate::similarity::l2_normalize;
use crate::wordvec::WordVectorModel;

/// Construct names of the bundled questionnaire layout. Even indices align
/// with cluster 0, odd with cluster 1.
pub const CONSTRUCTS: [&str; 4] = ["collectivism", "individualism", "norm_tightness", "norm_looseness"];

const SLOTS: usize = 16;
const SIGNATURES: usize = 4;
const CLUSTER_WORDS: usize = 8;
const NOISE_WORDS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<ParagraphRecord>,
    /// Planted vector per title.
    pub title_vectors: IndexMap<String, Vec<f64>>,
    /// Cluster (0 or 1) per title.
    pub clusters: IndexMap<String, usize>,
}

fn title_token(t: usize) -> String {
    format!("t{t:02}")
}

fn cluster_token(c: usize) -> String {
    format!("k{c}")
}

fn cluster_word(c: usize, j: usize) -> String {
    format!("c{c}w{j}")
}

fn signature(t: usize, j: usize) -> String {
    format!("s{t:02}x{j}")
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    l2_normalize(&mut v);
    v
}

impl SyntheticCorpus {
    /// Word-vector model holding the planted title vectors.
    pub fn title_model(&self) -> WordVectorModel<f64> {
        WordVectorModel::from_rows(self.title_vectors.iter().map(|(k, v)| (k.clone(), v.clone())))
            .expect("planted vectors are consistent")
    }

    pub fn titles_in_cluster(&self, c: usize) -> Vec<&str> {
        self.clusters
            .iter()
            .filter(|(_, &k)| k == c)
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

/// Titles alternate between two clusters. Each paragraph is `SLOTS`
/// whitespace-separated tokens: the title's canonical multiset (title token,
/// cluster token, title signatures, cluster words) with each slot replaced by
/// a random noise word with probability `noise`, in shuffled order.
pub fn generate_synthetic_corpus(
    n_titles: usize,
    paragraphs_per_title: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<SyntheticCorpus> {
    if n_titles < 2 {
        return Err(Error::Config("synthetic corpus needs at least 2 titles".into()));
    }
    if dim == 0 || !(0.0..=1.0).contains(&noise) {
        return Err(Error::Config("dim must be positive and noise in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [unit(&mut rng, dim), unit(&mut rng, dim)];
    let mut title_vectors = IndexMap::new();
    let mut clusters = IndexMap::new();
    let mut canon: Vec<Vec<String>> = Vec::new();
    for t in 0..n_titles {
        let c = t % 2;
        let offset = unit(&mut rng, dim);
        let mut v: Vec<f64> = centers[c].iter().zip(&offset).map(|(a, b)| a + 0.6 * b).collect();
        l2_normalize(&mut v);
        title_vectors.insert(title_token(t), v);
        clusters.insert(title_token(t), c);

        let mut tokens = vec![title_token(t), title_token(t), cluster_token(c), cluster_token(c)];
        tokens.extend((0..SIGNATURES).map(|j| signature(t, j)));
        tokens.extend((0..2).map(|j| signature(t, j)));
        while tokens.len() < SLOTS {
            tokens.push(cluster_word(c, rng.random_range(0..CLUSTER_WORDS)));
        }
        canon.push(tokens);
    }
    let mut records = Vec::with_capacity(n_titles * paragraphs_per_title);
    for p in 0..paragraphs_per_title {
        for t in 0..n_titles {
            let mut tokens = canon[t].clone();
            for tok in tokens.iter_mut() {
                if rng.random::<f64>() < noise {
                    *tok = format!("n{:02}", rng.random_range(0..NOISE_WORDS));
                }
            }
            tokens.shuffle(&mut rng);
            records.push(ParagraphRecord::new(
                format!("p{t:02}-{p:03}"),
                format!("w{t:02}"),
                title_token(t),
                tokens.join(" "),
            ));
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(SyntheticCorpus {
        records,
        title_vectors,
        clusters,
    })
}

/// Fifteen items per construct built from cluster vocabulary.
pub fn synthetic_questionnaires(corpus: &SyntheticCorpus, seed: u64) -> Vec<Questionnaire> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CONSTRUCTS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let c = k % 2;
            let titles = corpus.titles_in_cluster(c);
            let items = (0..15)
                .map(|i| {
                    let mut toks = vec![cluster_token(c)];
                    let t = titles[rng.random_range(0..titles.len())];
                    toks.push(t.to_owned());
                    for _ in 0..4 {
                        toks.push(cluster_word(c, rng.random_range(0..CLUSTER_WORDS)));
                    }
                    Item {
                        id: format!("{name}-{:02}", i + 1),
                        text: toks.join(" "),
                        source_item: Some(format!("placeholder item {} for {name}", i + 1)),
                    }
                })
                .collect();
            Questionnaire::new(*name, "synthetic", items).expect("nonempty unique items")
        })
        .collect()
}

/// One dictionary per construct: the aligned cluster's titles, cluster token
/// and cluster words.
pub fn synthetic_dictionaries(corpus: &SyntheticCorpus) -> Vec<Dictionary> {
    CONSTRUCTS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let c = k % 2;
            let mut words: Vec<String> = corpus.titles_in_cluster(c).iter().map(|t| t.to_string()).collect();
            words.push(cluster_token(c));
            words.extend((0..CLUSTER_WORDS).map(|j| cluster_word(c, j)));
            Dictionary::new(*name, words).expect("nonempty")
        })
        .collect()
}

/// Officials whose share of cluster-0 writings rises with their index while
/// their support falls, so cluster-0-aligned scores correlate negatively
/// with support.
pub fn synthetic_officials(
    corpus: &SyntheticCorpus,
    n_officials: usize,
    writings_each: usize,
    seed: u64,
) -> Result<Vec<OfficialRecord>> {
    if n_officials < 2 || writings_each == 0 {
        return Err(Error::Config("need at least 2 officials with 1+ writings".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = |c: usize| -> Vec<&str> {
        corpus
            .records
            .iter()
            .filter(|r| corpus.clusters.get(&r.title) == Some(&c))
            .map(|r| r.id.as_str())
            .collect()
    };
    let (p0, p1) = (pool(0), pool(1));
    Ok((0..n_officials)
        .map(|o| {
            let share = o as f64 / (n_officials - 1) as f64;
            let from0 = (share * writings_each as f64).round() as usize;
            let mut writings: Vec<String> = p0.choose_multiple(&mut rng, from0).map(|s| s.to_string()).collect();
            writings.extend(p1.choose_multiple(&mut rng, writings_each - from0).map(|s| s.to_string()));
            writings.sort();
            let attitude = if share < 1.0 / 3.0 {
                1
            } else if share > 2.0 / 3.0 {
                -1
            } else {
                0
            };
            OfficialRecord {
                author_id: format!("official{o:03}"),
                writings,
                attitude_ordinal: Some(attitude),
                support_continuous: Some(1.0 - share),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MockBackend;
    use crate::similarity::cosine;

    #[test]
    fn shape_and_determinism() {
        let a = generate_synthetic_corpus(2, 10, 64, 0.1, 7).unwrap();
        assert_eq!(a.records.len(), 20);
        let mut titles: Vec<&str> = a.records.iter().map(|r| r.title.as_str()).collect();
        titles.sort();
        titles.dedup();
        assert_eq!(titles.len(), 2);
        assert_eq!(a, generate_synthetic_corpus(2, 10, 64, 0.1, 7).unwrap());
        assert!(generate_synthetic_corpus(1, 10, 64, 0.1, 7).is_err());
    }

    #[test]
    fn noiseless_intra_beats_inter() {
        let syn = generate_synthetic_corpus(4, 6, 64, 0.0, 11).unwrap();
        let backend = MockBackend::new(64, 0);
        let e: Vec<Vec<f64>> = syn.records.iter().map(|r| backend.embed_one(&r.text)).collect();
        let n = e.len();
        let mut min_intra = f64::INFINITY;
        let mut max_inter = f64::NEG_INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let c = cosine(&e[i], &e[j]).unwrap();
                if syn.records[i].title == syn.records[j].title {
                    min_intra = min_intra.min(c);
                } else {
                    max_inter = max_inter.max(c);
                }
            }
        }
        assert!(min_intra > max_inter, "{min_intra} vs {max_inter}");
    }

    #[test]
    fn fixtures_line_up() {
        let syn = generate_synthetic_corpus(6, 5, 16, 0.2, 1).unwrap();
        let qs = synthetic_questionnaires(&syn, 2);
        assert_eq!(qs.len(), 4);
        assert!(qs.iter().all(|q| q.items.len() == 15));
        let ds = synthetic_dictionaries(&syn);
        assert_eq!(ds[0].construct, qs[0].construct);
        let offs = synthetic_officials(&syn, 10, 4, 3).unwrap();
        assert_eq!(offs.len(), 10);
        assert!(offs.iter().all(|o| o.writings.len() == 4 && o.validate().is_ok()));
    }
}
