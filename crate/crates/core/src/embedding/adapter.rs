//! Trainable affine head `f(e) = W·e + b` over frozen backend embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `dim_out × dim_in` weight matrix plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams<T> {
    pub dim_in: usize,
    pub dim_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> AdapterParams<T> {
    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![T::zero(); dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = T::one();
        }
        Self {
            dim_in: dim,
            dim_out: dim,
            weight,
            bias: vec![T::zero(); dim],
        }
    }

    pub fn zeros(dim_in: usize, dim_out: usize) -> Self {
        Self {
            dim_in,
            dim_out,
            weight: vec![T::zero(); dim_in * dim_out],
            bias: vec![T::zero(); dim_out],
        }
    }

    pub fn from_parts(weight_rows: Vec<Vec<T>>, bias: Vec<T>) -> Result<Self> {
        let dim_out = weight_rows.len();
        let dim_in = weight_rows.first().map_or(0, Vec::len);
        if dim_out == 0 || dim_in == 0 {
            return Err(Error::Data("adapter weight must be non-empty".into()));
        }
        if bias.len() != dim_out {
            return Err(Error::DimMismatch {
                expected: dim_out,
                got: bias.len(),
            });
        }
        let mut weight = Vec::with_capacity(dim_in * dim_out);
        for row in weight_rows {
            if row.len() != dim_in {
                return Err(Error::DimMismatch {
                    expected: dim_in,
                    got: row.len(),
                });
            }
            weight.extend(row);
        }
        Ok(Self {
            dim_in,
            dim_out,
            weight,
            bias,
        })
    }

    pub fn weight_row(&self, i: usize) -> &[T] {
        &self.weight[i * self.dim_in..(i + 1) * self.dim_in]
    }

    pub fn is_identity(&self) -> bool {
        self.dim_in == self.dim_out
            && self.bias.iter().all(|b| b.is_zero())
            && (0..self.dim_out).all(|i| {
                self.weight_row(i)
                    .iter()
                    .enumerate()
                    .all(|(j, &w)| if i == j { w == T::one() } else { w.is_zero() })
            })
    }

    /// `W·e + b`.
    pub fn apply(&self, e: &[T]) -> Result<Vec<T>> {
        if e.len() != self.dim_in {
            return Err(Error::DimMismatch {
                expected: self.dim_in,
                got: e.len(),
            });
        }
        Ok((0..self.dim_out)
            .map(|i| {
                let mut acc = T::zero();
                for (&w, &x) in self.weight_row(i).iter().zip(e) {
                    acc += w * x;
                }
                acc + self.bias[i]
            })
            .collect())
    }

    pub fn to_checkpoint(&self, meta: CheckpointMeta) -> AdapterCheckpoint {
        AdapterCheckpoint {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            w: (0..self.dim_out)
                .map(|i| self.weight_row(i).iter().map(|x| x.as_f64()).collect())
                .collect(),
            b: self.bias.iter().map(|x| x.as_f64()).collect(),
            meta,
        }
    }

    pub fn from_checkpoint(ck: &AdapterCheckpoint) -> Result<Self> {
        let rows = ck
            .w
            .iter()
            .map(|r| r.iter().map(|&x| T::lit(x)).collect())
            .collect();
        let p = Self::from_parts(rows, ck.b.iter().map(|&x| T::lit(x)).collect())?;
        if p.dim_in != ck.dim_in || p.dim_out != ck.dim_out {
            return Err(Error::Data(format!(
                "checkpoint declares {}x{} but W is {}x{}",
                ck.dim_out, ck.dim_in, p.dim_out, p.dim_in
            )));
        }
        Ok(p)
    }
}

/// Convenience wrapper matching the operation name.
pub fn apply_adapter<T: Scalar>(params: &AdapterParams<T>, e: &[T]) -> Result<Vec<T>> {
    params.apply(e)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_hash: String,
    pub epoch: usize,
}

/// On-disk adapter: `{"dim_in","dim_out","W","b","meta":{seed, config_hash, epoch}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterCheckpoint {
    pub dim_in: usize,
    pub dim_out: usize,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub meta: CheckpointMeta,
}

impl AdapterCheckpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::jsonl::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::jsonl::read_json(path)
    }
}
