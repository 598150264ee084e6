//! Questionnaires, dictionaries, CCR and DDR scores and quote retrieval.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ParagraphRecord;
use crate::embedding::Encoder;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::{centroid, cosine};
use crate::wordvec::{embed_title, WordVectorModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_item: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawQuestionnaire")]
pub struct Questionnaire {
    pub construct: String,
    pub language: String,
    pub items: Vec<Item>,
}

#[derive(Deserialize)]
struct RawQuestionnaire {
    construct: String,
    language: String,
    items: Vec<Item>,
}

impl TryFrom<RawQuestionnaire> for Questionnaire {
    type Error = Error;

    fn try_from(r: RawQuestionnaire) -> Result<Self> {
        Questionnaire::new(r.construct, r.language, r.items)
    }
}

impl Questionnaire {
    pub fn new(construct: impl Into<String>, language: impl Into<String>, items: Vec<Item>) -> Result<Self> {
        let construct = construct.into();
        if items.is_empty() {
            return Err(Error::Data(format!("questionnaire {construct:?} has no items")));
        }
        let mut seen = HashSet::new();
        for it in &items {
            if it.text.trim().is_empty() {
                return Err(Error::Data(format!("item {:?} of {construct:?} has empty text", it.id)));
            }
            if !seen.insert(it.id.as_str()) {
                return Err(Error::Data(format!("duplicate item id {:?} in {construct:?}", it.id)));
            }
        }
        Ok(Self {
            construct,
            language: language.into(),
            items,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::jsonl::read_json(path)
    }
}

/// Construct dictionary. Words are deduplicated on construction, keeping
/// first occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDictionary")]
pub struct Dictionary {
    pub construct: String,
    words: Vec<String>,
}

#[derive(Deserialize)]
struct RawDictionary {
    construct: String,
    words: Vec<String>,
}

impl TryFrom<RawDictionary> for Dictionary {
    type Error = Error;

    fn try_from(r: RawDictionary) -> Result<Self> {
        Dictionary::new(r.construct, r.words)
    }
}

impl Dictionary {
    pub fn new<S: Into<String>>(construct: impl Into<String>, words: impl IntoIterator<Item = S>) -> Result<Self> {
        let construct = construct.into();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut dropped = 0;
        for w in words {
            let w: String = w.into();
            let w = w.trim().to_owned();
            if w.is_empty() {
                continue;
            }
            if seen.insert(w.clone()) {
                out.push(w);
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            log::info!("dictionary {construct:?}: dropped {dropped} duplicate word(s)");
        }
        if out.is_empty() {
            return Err(Error::Data(format!("dictionary {construct:?} has no words")));
        }
        Ok(Self { construct, words: out })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::jsonl::read_json(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ccr,
    Ddr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub paragraph_id: String,
    pub construct: String,
    pub method: Method,
    pub score: f64,
}

/// Mean cosine between a paragraph embedding and each item embedding.
pub fn ccr_score<T: Scalar, V: AsRef<[T]>>(paragraph_emb: &[T], item_embs: &[V]) -> Result<T> {
    if item_embs.is_empty() {
        return Err(Error::Empty("questionnaire items"));
    }
    let mut acc = T::zero();
    for it in item_embs {
        acc += cosine(paragraph_emb, it.as_ref())?;
    }
    Ok(acc / T::from_usize_lossy(item_embs.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdrScore<T> {
    pub score: T,
    /// Paragraph tokens without a vector.
    pub paragraph_oov: usize,
    /// Dictionary words without a vector.
    pub dictionary_oov: usize,
}

fn known_vectors<T: Scalar, S: AsRef<str>>(tokens: &[S], model: &WordVectorModel<T>) -> (Vec<Vec<T>>, usize) {
    let mut known = Vec::with_capacity(tokens.len());
    let mut oov = 0;
    for t in tokens {
        match model.vector(t.as_ref()) {
            Some(v) => known.push(v),
            None => oov += 1,
        }
    }
    (known, oov)
}

/// Cosine between the centroid of the paragraph's known token vectors and the
/// centroid of the dictionary's known word vectors.
pub fn ddr_score<T: Scalar, S: AsRef<str>>(
    paragraph_tokens: &[S],
    dictionary: &Dictionary,
    model: &WordVectorModel<T>,
) -> Result<DdrScore<T>> {
    let (para, paragraph_oov) = known_vectors(paragraph_tokens, model);
    if para.is_empty() {
        return Err(Error::Data("no known tokens in paragraph".into()));
    }
    let (dict, dictionary_oov) = known_vectors(dictionary.words(), model);
    if dict.is_empty() {
        return Err(Error::Data(format!(
            "no word of dictionary {:?} has a vector",
            dictionary.construct
        )));
    }
    Ok(DdrScore {
        score: cosine(&centroid(&para)?, &centroid(&dict)?)?,
        paragraph_oov,
        dictionary_oov,
    })
}

/// Mean cosine between the title embedding and each known dictionary word.
pub fn pm_pseudo_ground_truth<T: Scalar>(title: &str, dictionary: &Dictionary, model: &WordVectorModel<T>) -> Result<T> {
    let t = embed_title(title, model)?;
    let (dict, _) = known_vectors(dictionary.words(), model);
    if dict.is_empty() {
        return Err(Error::Data(format!(
            "no word of dictionary {:?} has a vector",
            dictionary.construct
        )));
    }
    let mut acc = T::zero();
    for w in &dict {
        acc += cosine(&t, w)?;
    }
    Ok(acc / T::from_usize_lossy(dict.len()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    pub id: String,
    pub text: String,
}

/// Top `k` quotes by cosine to the item, descending, ties by id.
pub fn recommend_quotes(item_text: &str, quotes: &[Quote], encoder: &Encoder<'_>, k: usize) -> Result<Vec<(String, f64)>> {
    if quotes.is_empty() {
        return Err(Error::Empty("quote corpus"));
    }
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let item = encoder.encode_texts(&[item_text])?.remove(0);
    let keyed: Vec<(&str, &str)> = quotes.iter().map(|q| (q.id.as_str(), q.text.as_str())).collect();
    let embs = encoder.encode_keyed(&keyed)?;
    let mut ranked: Vec<(String, f64)> = quotes
        .iter()
        .zip(&embs)
        .map(|(q, e)| Ok((q.id.clone(), cosine(&item, e)?)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

fn in_paragraph(id: &str, e: Error) -> Error {
    match e {
        Error::Backend(m) => Error::Backend(format!("paragraph {id}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("paragraph {id}: {m}")),
        Error::ZeroNorm => Error::Numerical(format!("paragraph {id}: zero-norm embedding")),
        other => Error::Data(format!("paragraph {id}: {other}")),
    }
}

/// Embeds records in chunks so a failure names the paragraphs involved.
pub fn encode_records(encoder: &Encoder<'_>, records: &[ParagraphRecord]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(256) {
        let keyed: Vec<(&str, &str)> = chunk.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
        let rows = encoder.encode_keyed(&keyed).map_err(|e| {
            let span = format!("{}..{}", chunk[0].id, chunk[chunk.len() - 1].id);
            in_paragraph(&span, e)
        })?;
        out.extend(rows);
    }
    Ok(out)
}

/// Item embeddings of a questionnaire under `encoder`.
pub fn encode_items(encoder: &Encoder<'_>, questionnaire: &Questionnaire) -> Result<Vec<Vec<f64>>> {
    let keyed: Vec<(&str, &str)> = questionnaire
        .items
        .iter()
        .map(|i| (i.id.as_str(), i.text.as_str()))
        .collect();
    encoder.encode_keyed(&keyed)
}

/// CCR loading score of every record, in input order.
pub fn score_corpus(
    records: &[ParagraphRecord],
    questionnaire: &Questionnaire,
    encoder: &Encoder<'_>,
) -> Result<Vec<ScoreRecord>> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let items = encode_items(encoder, questionnaire)?;
    let paras = encode_records(encoder, records)?;
    records
        .par_iter()
        .zip(&paras)
        .map(|(r, e)| {
            Ok(ScoreRecord {
                paragraph_id: r.id.clone(),
                construct: questionnaire.construct.clone(),
                method: Method::Ccr,
                score: ccr_score(e, &items).map_err(|err| in_paragraph(&r.id, err))?,
            })
        })
        .collect()
}

/// DDR score of every record, in input order. Paragraphs without any known
/// token are an error naming the paragraph.
pub fn ddr_score_corpus<T: Scalar>(
    records: &[ParagraphRecord],
    dictionary: &Dictionary,
    model: &WordVectorModel<T>,
) -> Result<Vec<ScoreRecord>> {
    records
        .par_iter()
        .map(|r| {
            let tokens = crate::text::segment(&r.text);
            let s = ddr_score(&tokens, dictionary, model).map_err(|e| in_paragraph(&r.id, e))?;
            Ok(ScoreRecord {
                paragraph_id: r.id.clone(),
                construct: dictionary.construct.clone(),
                method: Method::Ddr,
                score: s.score.as_f64(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{MockBackend, MockMode};

    fn model() -> WordVectorModel<f64> {
        WordVectorModel::from_rows([
            ("仁", vec![1.0, 0.0, 0.0]),
            ("義", vec![0.0, 1.0, 0.0]),
            ("禮", vec![0.0, 0.0, 1.0]),
            ("智", vec![1.0, 1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn ccr_examples() {
        let p = [0.3f64, -0.2, 0.9];
        assert!((ccr_score(&p, &[p]).unwrap() - 1.0).abs() < 1e-15);
        // cosines 0.2 and 0.4 against the x axis
        let a = [0.2, (1.0f64 - 0.04).sqrt()];
        let b = [0.4, (1.0f64 - 0.16).sqrt()];
        assert!((ccr_score(&[1.0, 0.0], &[a, b]).unwrap() - 0.3).abs() < 1e-12);
        assert!(ccr_score::<f64, [f64; 2]>(&[1.0, 0.0], &[]).is_err());
        assert!(ccr_score(&[0.0, 0.0], &[[1.0, 0.0]]).is_err());
    }

    #[test]
    fn ddr_examples() {
        let m = model();
        let d = Dictionary::new("c", ["仁", "義"]).unwrap();
        let s = ddr_score(&["義", "仁"], &d, &m).unwrap();
        assert!((s.score - 1.0).abs() < 1e-12);
        assert_eq!((s.paragraph_oov, s.dictionary_oov), (0, 0));
        assert!(ddr_score(&["x", "y"], &d, &m).is_err());
        let s = ddr_score(&["仁", "x"], &d, &m).unwrap();
        assert_eq!(s.paragraph_oov, 1);
        let none = Dictionary::new("c", ["q"]).unwrap();
        assert!(ddr_score(&["仁"], &none, &m).is_err());
    }

    #[test]
    fn duplicates_removed() {
        let d = Dictionary::new("c", ["仁", "仁", "禮"]).unwrap();
        assert_eq!(d.words(), &["仁".to_owned(), "禮".to_owned()]);
        let parsed: Dictionary = serde_json::from_str(r#"{"construct":"c","words":["a","a","b"]}"#).unwrap();
        assert_eq!(parsed.words().len(), 2);
        assert!(serde_json::from_str::<Dictionary>(r#"{"construct":"c","words":[]}"#).is_err());
    }

    #[test]
    fn pm_examples() {
        let m = model();
        let own = Dictionary::new("c", ["仁"]).unwrap();
        assert!((pm_pseudo_ground_truth("仁", &own, &m).unwrap() - 1.0).abs() < 1e-12);
        let two = Dictionary::new("c", ["義", "仁"]).unwrap();
        assert!((pm_pseudo_ground_truth("仁", &two, &m).unwrap() - 0.5).abs() < 1e-12);
        assert!(pm_pseudo_ground_truth("zz", &two, &m).is_err());
    }

    #[test]
    fn questionnaire_validation() {
        let item = |id: &str, text: &str| Item {
            id: id.into(),
            text: text.into(),
            source_item: None,
        };
        assert!(Questionnaire::new("c", "lzh", vec![]).is_err());
        assert!(Questionnaire::new("c", "lzh", vec![item("1", "a"), item("1", "b")]).is_err());
        assert!(Questionnaire::new("c", "lzh", vec![item("1", " ")]).is_err());
        let q = Questionnaire::new("c", "lzh", vec![item("1", "a"), item("2", "b")]).unwrap();
        let back: Questionnaire = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn quotes_ranking() {
        let backend = MockBackend::new(32, 4).with_mode(MockMode::Text);
        let enc = Encoder::new(&backend, None);
        let quotes: Vec<Quote> = ["學而時習之", "溫故而知新", "己所不欲", "三人行"]
            .iter()
            .enumerate()
            .map(|(i, t)| Quote {
                id: format!("q{i}"),
                text: t.to_string(),
            })
            .collect();
        let r = recommend_quotes("溫故而知新", &quotes, &enc, 10).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r[0].0, "q1");
        assert!((r[0].1 - 1.0).abs() < 1e-12);
        assert!(r.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(recommend_quotes("x", &[], &enc, 1).is_err());
    }

    #[test]
    fn score_corpus_single() {
        let backend = MockBackend::new(16, 0);
        let enc = Encoder::new(&backend, None);
        let q = Questionnaire::new(
            "c",
            "lzh",
            vec![Item {
                id: "i".into(),
                text: "天下為公".into(),
                source_item: None,
            }],
        )
        .unwrap();
        let recs = vec![ParagraphRecord::new("p", "w", "t", "天下為公")];
        let s = score_corpus(&recs, &q, &enc).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].score - 1.0).abs() < 1e-12);
        assert!(score_corpus(&[], &q, &enc).is_err());
    }
}
