//! Static word vectors: the model type, the text vector format and title
//! embeddings.

mod train;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::centroid;
use crate::text::segment;

pub use train::{train_word_vectors, Architecture, WordVecTrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Cbow,
    Skipgram,
    Loaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordSpec {
    pub min_n: usize,
    pub max_n: usize,
    pub bucket_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordVecMeta {
    pub framework: Framework,
    pub min_count: usize,
    pub subword: Option<SubwordSpec>,
}

/// Token→vector table. Rows are stored contiguously, one per vocab entry.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorModel<T> {
    dim: usize,
    vocab: IndexMap<String, usize>,
    vectors: Vec<T>,
    ngrams: Option<Vec<T>>,
    counts: Vec<u64>,
    meta: WordVecMeta,
}

impl<T: Scalar> WordVectorModel<T> {
    /// Builds a `loaded` model from explicit rows.
    pub fn from_rows<S: Into<String>>(rows: impl IntoIterator<Item = (S, Vec<T>)>) -> Result<Self> {
        let mut vocab = IndexMap::new();
        let mut vectors = Vec::new();
        let mut dim = None;
        for (token, row) in rows {
            let token = token.into();
            let d = *dim.get_or_insert(row.len());
            if row.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            let idx = vocab.len();
            if vocab.insert(token.clone(), idx).is_some() {
                return Err(Error::Data(format!("duplicate token {token:?}")));
            }
            vectors.extend(row);
        }
        let dim = dim.ok_or(Error::Empty("word vector rows"))?;
        if dim == 0 {
            return Err(Error::Data("vector dimension must be at least 1".into()));
        }
        Ok(Self {
            dim,
            vocab,
            vectors,
            ngrams: None,
            counts: Vec::new(),
            meta: WordVecMeta {
                framework: Framework::Loaded,
                min_count: 1,
                subword: None,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn meta(&self) -> &WordVecMeta {
        &self.meta
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.contains_key(token)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.vocab.keys().map(String::as_str)
    }

    /// Training-corpus frequency per vocab entry (empty for loaded models).
    pub fn count(&self, token: &str) -> Option<u64> {
        self.vocab.get(token).and_then(|&i| self.counts.get(i).copied())
    }

    /// The stored row for an in-vocab token, without subword composition.
    pub fn row(&self, token: &str) -> Option<&[T]> {
        self.vocab.get(token).map(|&i| self.row_at(i))
    }

    fn row_at(&self, i: usize) -> &[T] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Representation of `token`. In subword mode this is the mean of the word
    /// row and its n-gram rows, and OOV tokens are composed from n-grams alone.
    pub fn vector(&self, token: &str) -> Option<Vec<T>> {
        let idx = self.vocab.get(token).copied();
        match (&self.ngrams, self.meta.subword) {
            (Some(table), Some(spec)) => {
                let buckets = ngram_buckets(token, &spec);
                let mut rows: Vec<&[T]> = Vec::with_capacity(buckets.len() + 1);
                if let Some(i) = idx {
                    rows.push(self.row_at(i));
                }
                rows.extend(buckets.iter().map(|&b| &table[b * self.dim..(b + 1) * self.dim]));
                if rows.is_empty() {
                    None
                } else {
                    centroid(&rows).ok()
                }
            }
            _ => idx.map(|i| self.row_at(i).to_vec()),
        }
    }

    /// Writes the text vector format: a `vocab_size dim` header, then one
    /// `token v1 … v_dim` line per token.
    pub fn save_vectors(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.len(), self.dim).map_err(io)?;
        for token in self.vocab.keys() {
            let v = self.vector(token).expect("in-vocab token");
            write!(w, "{token}").map_err(io)?;
            for x in v {
                write!(w, " {}", x.as_f64()).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads the text vector format. A file whose first line is not a
    /// `count dim` header is read as headerless (GloVe output).
    pub fn load_vectors(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut header: Option<(usize, usize)> = None;
        let mut rows: Vec<(String, Vec<T>)> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut dim: Option<usize> = None;

        if let Some((_, first)) = lines.next() {
            let first = first.map_err(|e| Error::io(path, e))?;
            let parts: Vec<&str> = first.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                [a, b] => a.parse::<usize>().ok().zip(b.parse::<usize>().ok()),
                _ => None,
            };
            match parsed {
                Some((n, d)) => {
                    if d == 0 {
                        return Err(Error::line(path, 1, "dimension must be at least 1"));
                    }
                    header = Some((n, d));
                    dim = Some(d);
                }
                None => parse_row(path, 1, &first, &mut dim, &mut seen, &mut rows)?,
            }
        }
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            parse_row(path, idx + 1, &line, &mut dim, &mut seen, &mut rows)?;
        }
        if let Some((n, _)) = header {
            if n != rows.len() {
                return Err(Error::Data(format!(
                    "{}: header declares {n} vectors, found {}",
                    path.display(),
                    rows.len()
                )));
            }
        }
        Self::from_rows(rows)
    }
}

fn parse_row<T: Scalar>(
    path: &Path,
    lineno: usize,
    line: &str,
    dim: &mut Option<usize>,
    seen: &mut std::collections::HashSet<String>,
    rows: &mut Vec<(String, Vec<T>)>,
) -> Result<()> {
    let mut parts = line.split_whitespace();
    let token = parts
        .next()
        .ok_or_else(|| Error::line(path, lineno, "missing token"))?;
    let values = parts
        .map(|p| {
            p.parse::<f64>()
                .map(T::lit)
                .map_err(|_| Error::line(path, lineno, format!("non-numeric component {p:?}")))
        })
        .collect::<Result<Vec<T>>>()?;
    let d = *dim.get_or_insert(values.len());
    if values.len() != d {
        return Err(Error::line(
            path,
            lineno,
            format!("expected {d} components, found {}", values.len()),
        ));
    }
    if !seen.insert(token.to_owned()) {
        return Err(Error::line(path, lineno, format!("duplicate token {token:?}")));
    }
    rows.push((token.to_owned(), values));
    Ok(())
}

/// Title embedding: the token's own vector when the whole title is a known
/// token, otherwise the mean over its representable segmented tokens.
pub fn embed_title<T: Scalar>(title: &str, model: &WordVectorModel<T>) -> Result<Vec<T>> {
    let title = title.trim();
    if title.is_empty() {
        return Err(Error::UnrepresentableTitle(String::new()));
    }
    if model.contains(title) {
        return Ok(model.vector(title).expect("in-vocab"));
    }
    let vecs: Vec<Vec<T>> = segment(title)
        .iter()
        .filter_map(|t| model.vector(t))
        .collect();
    if vecs.is_empty() {
        return Err(Error::UnrepresentableTitle(title.to_owned()));
    }
    centroid(&vecs)
}

/// Character n-gram bucket ids of `<token>`, fastText style.
pub(crate) fn ngram_buckets(token: &str, spec: &SubwordSpec) -> Vec<usize> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for i in 0..chars.len() {
        for n in spec.min_n..=spec.max_n {
            if i + n > chars.len() || n == chars.len() {
                continue;
            }
            if n == 1 && (i == 0 || i == chars.len() - 1) {
                continue;
            }
            let gram: String = chars[i..i + n].iter().collect();
            out.push(fnv1a32(gram.as_bytes()) as usize % spec.bucket_count);
        }
    }
    out
}

fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}
