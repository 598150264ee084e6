//! Embedding cache file: one `{"id": …, "vector": […]}` object per line.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{embed_keyed, EmbeddingBackend};
use crate::corpus::ParagraphRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheLine {
    pub id: String,
    pub vector: Vec<f64>,
}

const CHUNK: usize = 256;

/// Embeds every record and writes the cache in record order.
pub fn cache_embeddings(
    backend: &dyn EmbeddingBackend,
    records: &[ParagraphRecord],
    path: &Path,
) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(Error::Data(format!("duplicate id {:?}", dup.id)));
    }
    let mut lines = Vec::with_capacity(records.len());
    for chunk in records.chunks(CHUNK) {
        let items: Vec<(&str, &str)> = chunk.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
        let rows = embed_keyed(backend, &items)?;
        lines.extend(chunk.iter().zip(rows).map(|(r, vector)| CacheLine {
            id: r.id.clone(),
            vector,
        }));
    }
    crate::jsonl::write(path, &lines)
}

/// Loads a cache, checking that every vector has the same dimension.
pub fn load_cache(path: &Path) -> Result<IndexMap<String, Vec<f64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = IndexMap::new();
    let mut dim = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheLine = serde_json::from_str(&line)
            .map_err(|e| Error::line(path, idx + 1, format!("malformed cache line: {e}")))?;
        let d = *dim.get_or_insert(rec.vector.len());
        if rec.vector.len() != d || d == 0 {
            return Err(Error::line(
                path,
                idx + 1,
                format!("vector for {:?} has dim {}, expected {d}", rec.id, rec.vector.len()),
            ));
        }
        if out.insert(rec.id.clone(), rec.vector).is_some() {
            return Err(Error::line(path, idx + 1, format!("duplicate id {:?}", rec.id)));
        }
    }
    Ok(out)
}

/// Serves embeddings from a cache file, looked up by id.
#[derive(Debug, Clone)]
pub struct CacheBackend {
    name: String,
    dim: usize,
    table: IndexMap<String, Vec<f64>>,
}

impl CacheBackend {
    pub fn open(path: &Path) -> Result<Self> {
        Self::from_table(load_cache(path)?, format!("cache:{}", path.display()))
    }

    pub fn from_table(table: IndexMap<String, Vec<f64>>, name: String) -> Result<Self> {
        let dim = table
            .values()
            .next()
            .map(Vec::len)
            .ok_or(Error::Empty("embedding cache"))?;
        Ok(Self { name, dim, table })
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        self.table
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(id.to_owned()))
    }

    pub fn table(&self) -> &IndexMap<String, Vec<f64>> {
        &self.table
    }
}

impl EmbeddingBackend for CacheBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn deterministic(&self) -> bool {
        true
    }

    /// Texts are treated as cache keys.
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| self.get(t).map(<[f64]>::to_vec)).collect()
    }

    fn embed_keyed(&self, items: &[(&str, &str)]) -> Result<Vec<Vec<f64>>> {
        items.iter().map(|(id, _)| self.get(id).map(<[f64]>::to_vec)).collect()
    }
}
