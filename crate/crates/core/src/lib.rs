//! Contextualized construct representation (CCR) for classical Chinese text:
//! corpus preparation, word vectors, title-similarity pairing, triplet
//! training of an adapter over sentence embeddings, CCR/DDR scoring and
//! evaluation.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`). Pipeline
//! data such as embedding tables and reports use `f64`.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod jsonl;
pub mod pairing;
pub mod scalar;
pub mod scoring;
pub mod similarity;
pub mod text;
pub mod trainer;
pub mod wordvec;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

pub type Vector = Vec<f64>;
pub type Vector32 = Vec<f32>;
pub type Adapter = embedding::AdapterParams<f64>;
pub type Adapter32 = embedding::AdapterParams<f32>;
pub type WordVectors = wordvec::WordVectorModel<f64>;
pub type WordVectors32 = wordvec::WordVectorModel<f32>;
