//! Client for an embedding sidecar speaking
//! `POST /v1/embed {"texts": [...]} -> {"dim", "vectors"}` and
//! `GET /v1/health -> {"status", "model", "dim"}`.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::EmbeddingBackend;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpOptions {
    /// Texts per request.
    pub max_batch: usize,
    /// Concurrent requests per `embed_texts` call.
    pub max_in_flight: usize,
    /// Extra attempts after a transport error or 5xx response.
    pub retries: usize,
    pub timeout: Duration,
    pub backoff: Duration,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self {
            max_batch: 64,
            max_in_flight: 4,
            retries: 3,
            timeout: Duration::from_secs(120),
            backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: String,
    client: Client,
    name: String,
    model: String,
    dim: usize,
    opts: HttpOptions,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fail(Error),
}

impl HttpBackend {
    /// Connects and reads the advertised dimension from `/v1/health`.
    pub fn connect(base_url: &str, opts: HttpOptions) -> Result<Self> {
        if opts.max_batch == 0 || opts.max_in_flight == 0 {
            return Err(Error::Config("max_batch and max_in_flight must be positive".into()));
        }
        let client = Client::builder()
            .timeout(opts.timeout)
            .build()
            .map_err(|e| Error::Backend(format!("http client: {e}")))?;
        let base = base_url.trim_end_matches('/').to_owned();
        let health_url = format!("{base}/v1/health");
        let health: Health = with_retries(&opts, || match client.get(&health_url).send() {
            Err(e) => Attempt::Retry(e.to_string()),
            Ok(resp) if resp.status() == StatusCode::SERVICE_UNAVAILABLE => {
                Attempt::Retry("sidecar still loading (503)".into())
            }
            Ok(resp) if !resp.status().is_success() => Attempt::Fail(Error::Backend(format!(
                "GET {health_url}: {}",
                resp.status()
            ))),
            Ok(resp) => match resp.json::<Health>() {
                Ok(h) => Attempt::Done(h),
                Err(e) => Attempt::Fail(Error::Backend(format!("bad health response: {e}"))),
            },
        })?;
        if health.status != "ok" {
            return Err(Error::Backend(format!("sidecar status {:?}", health.status)));
        }
        if health.dim == 0 {
            return Err(Error::Backend("sidecar advertises dim 0".into()));
        }
        Ok(Self {
            name: format!("http:{base}"),
            base,
            client,
            model: health.model,
            dim: health.dim,
            opts,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    fn post(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/v1/embed", self.base);
        let resp: EmbedResponse = with_retries(&self.opts, || {
            match self.client.post(&url).json(&EmbedRequest { texts }).send() {
                Err(e) => Attempt::Retry(e.to_string()),
                Ok(resp) if resp.status().is_server_error() => {
                    let status = resp.status();
                    let body = resp.text().unwrap_or_default();
                    Attempt::Retry(format!("{status}: {body}"))
                }
                Ok(resp) if !resp.status().is_success() => {
                    let status = resp.status();
                    let body = resp.text().unwrap_or_default();
                    Attempt::Fail(Error::Backend(format!("POST {url}: {status}: {body}")))
                }
                Ok(resp) => match resp.json::<EmbedResponse>() {
                    Ok(r) => Attempt::Done(r),
                    Err(e) => Attempt::Fail(Error::Backend(format!("bad embed response: {e}"))),
                },
            }
        })?;
        if resp.dim != self.dim {
            return Err(Error::Backend(format!(
                "dimension drift: health advertised {}, embed returned {}",
                self.dim, resp.dim
            )));
        }
        Ok(resp.vectors)
    }
}

fn with_retries<T>(opts: &HttpOptions, mut f: impl FnMut() -> Attempt<T>) -> Result<T> {
    let mut last = String::new();
    for attempt in 0..=opts.retries {
        if attempt > 0 {
            std::thread::sleep(opts.backoff * (1 << (attempt - 1).min(6)) as u32);
        }
        match f() {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fail(e) => return Err(e),
            Attempt::Retry(msg) => {
                log::warn!("embedding request failed (attempt {}): {msg}", attempt + 1);
                last = msg;
            }
        }
    }
    Err(Error::Backend(format!(
        "giving up after {} attempts: {last}",
        opts.retries + 1
    )))
}

impl EmbeddingBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let chunks: Vec<&[&str]> = texts.chunks(self.opts.max_batch).collect();
        let mut out = Vec::with_capacity(texts.len());
        for wave in chunks.chunks(self.opts.max_in_flight) {
            let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|c| s.spawn(|| self.post(c))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Backend("request thread panicked".into()))))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}
