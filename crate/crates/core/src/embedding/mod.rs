//! Paragraph embeddings behind interchangeable backends, plus the adapter
//! applied on top of them.

mod adapter;
mod cache;
mod http;
mod mock;

use crate::error::{Error, Result};

pub use adapter::{apply_adapter, AdapterCheckpoint, AdapterParams, CheckpointMeta};
pub use cache::{cache_embeddings, load_cache, CacheBackend, CacheLine};
pub use http::{HttpBackend, HttpOptions};
pub use mock::{fnv1a64, mock_embed, MockBackend, MockMode};

/// A source of fixed-dimension text embeddings.
///
/// Implementations must be shareable across threads for read-only calls.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Identical text always yields identical vectors.
    fn deterministic(&self) -> bool;
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;

    /// Embeds `(id, text)` pairs. Backends keyed by id override this.
    fn embed_keyed(&self, items: &[(&str, &str)]) -> Result<Vec<Vec<f64>>> {
        let texts: Vec<&str> = items.iter().map(|(_, t)| *t).collect();
        self.embed_texts(&texts)
    }
}

fn check_shape(backend: &dyn EmbeddingBackend, n: usize, rows: &[Vec<f64>]) -> Result<()> {
    if rows.len() != n {
        return Err(Error::Backend(format!(
            "{} returned {} vectors for {n} inputs",
            backend.name(),
            rows.len()
        )));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != backend.dim()) {
        return Err(Error::Backend(format!(
            "{}: dimension drift, advertised {} but returned {}",
            backend.name(),
            backend.dim(),
            bad.len()
        )));
    }
    Ok(())
}

/// Embeds `texts` and validates the result: one row per text, constant dim.
pub fn embed_batch(backend: &dyn EmbeddingBackend, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
    if let Some(i) = texts.iter().position(|t| t.is_empty()) {
        return Err(Error::Data(format!("text #{i} is empty")));
    }
    let rows = backend.embed_texts(texts)?;
    check_shape(backend, texts.len(), &rows)?;
    Ok(rows)
}

/// Keyed variant of [`embed_batch`].
pub fn embed_keyed(backend: &dyn EmbeddingBackend, items: &[(&str, &str)]) -> Result<Vec<Vec<f64>>> {
    let rows = backend.embed_keyed(items)?;
    check_shape(backend, items.len(), &rows)?;
    Ok(rows)
}

/// Backend plus optional adapter: the representation `f(s)` used for scoring.
#[derive(Clone, Copy)]
pub struct Encoder<'a> {
    pub backend: &'a dyn EmbeddingBackend,
    pub adapter: Option<&'a AdapterParams<f64>>,
}

impl<'a> Encoder<'a> {
    pub fn new(backend: &'a dyn EmbeddingBackend, adapter: Option<&'a AdapterParams<f64>>) -> Self {
        Self { backend, adapter }
    }

    fn adapt(&self, rows: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        match self.adapter {
            None => Ok(rows),
            Some(a) => rows.iter().map(|r| a.apply(r)).collect(),
        }
    }

    pub fn encode_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.adapt(embed_batch(self.backend, texts)?)
    }

    pub fn encode_keyed(&self, items: &[(&str, &str)]) -> Result<Vec<Vec<f64>>> {
        self.adapt(embed_keyed(self.backend, items)?)
    }
}

/// Builds a backend from a spec string: `mock[:dim=64,seed=7,mode=bag|text]`,
/// `cache:<path>`, or an `http://host:port` base URL.
pub fn parse_backend(spec: &str) -> Result<Box<dyn EmbeddingBackend>> {
    let spec = spec.trim();
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(HttpBackend::connect(spec, HttpOptions::default())?));
    }
    if let Some(path) = spec.strip_prefix("cache:") {
        return Ok(Box::new(CacheBackend::open(std::path::Path::new(path))?));
    }
    if spec == "mock" || spec.starts_with("mock:") {
        let mut backend = MockBackend::new(64, 0);
        for kv in spec.trim_start_matches("mock").trim_start_matches(':').split(',') {
            if kv.is_empty() {
                continue;
            }
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad mock option {kv:?}")))?;
            let num = || v.parse::<u64>().map_err(|_| Error::Config(format!("bad value for {k}: {v:?}")));
            match k {
                "dim" => backend.dim = num()? as usize,
                "seed" => backend.seed = num()?,
                "mode" => {
                    backend.mode = match v {
                        "bag" => MockMode::Bag,
                        "text" => MockMode::Text,
                        _ => return Err(Error::Config(format!("unknown mock mode {v:?}"))),
                    }
                }
                _ => return Err(Error::Config(format!("unknown mock option {k:?}"))),
            }
        }
        if backend.dim == 0 {
            return Err(Error::Config("mock dim must be at least 1".into()));
        }
        return Ok(Box::new(backend));
    }
    Err(Error::Config(format!("unrecognised backend spec {spec:?}")))
}
