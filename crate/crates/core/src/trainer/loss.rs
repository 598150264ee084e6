//! Margin triplet loss on squared Euclidean distances and its gradient
//! through the affine adapter.

use serde::{Deserialize, Serialize};

use crate::embedding::AdapterParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::sq_dist;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletLossConfig {
    /// `alpha` in `max(D+ - D- + alpha, 0)`. Zero gives the margin-free form.
    pub margin_alpha: f64,
}

impl Default for TripletLossConfig {
    fn default() -> Self {
        Self { margin_alpha: 5.0 }
    }
}

impl TripletLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin_alpha >= 0.0 && self.margin_alpha.is_finite()) {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin_alpha)));
        }
        Ok(())
    }
}

fn same_dims<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `max(|a-p|^2 - |a-n|^2 + alpha, 0)`.
pub fn triplet_loss<T: Scalar>(anchor: &[T], positive: &[T], negative: &[T], config: &TripletLossConfig) -> Result<T> {
    same_dims(anchor, positive)?;
    same_dims(anchor, negative)?;
    let raw = sq_dist(anchor, positive) - sq_dist(anchor, negative) + T::lit(config.margin_alpha);
    if raw.is_nan() {
        return Ok(raw);
    }
    Ok(raw.max(T::zero()))
}

/// Loss of one triplet and its gradient with respect to `W` (row-major, same
/// layout as [`AdapterParams::weight`]) and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad<T> {
    pub loss: T,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

impl<T: Scalar> TripletGrad<T> {
    pub fn zeros(params: &AdapterParams<T>) -> Self {
        Self {
            loss: T::zero(),
            dw: vec![T::zero(); params.weight.len()],
            db: vec![T::zero(); params.bias.len()],
        }
    }

    pub fn accumulate(&mut self, other: &TripletGrad<T>) {
        self.loss += other.loss;
        for (a, &b) in self.dw.iter_mut().zip(&other.dw) {
            *a += b;
        }
        for (a, &b) in self.db.iter_mut().zip(&other.db) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.dw.iter().chain(&self.db).all(|v| v.is_finite())
    }
}

/// Gradient of the triplet loss of `f(x) = W·x + b` applied to raw backend
/// vectors. Inactive triplets (loss 0) get exactly zero gradients.
pub fn triplet_loss_grad<T: Scalar>(
    anchor_raw: &[T],
    pos_raw: &[T],
    neg_raw: &[T],
    params: &AdapterParams<T>,
    config: &TripletLossConfig,
) -> Result<TripletGrad<T>> {
    let fa = params.apply(anchor_raw)?;
    let fp = params.apply(pos_raw)?;
    let fn_ = params.apply(neg_raw)?;
    let loss = triplet_loss(&fa, &fp, &fn_, config)?;
    let mut grad = TripletGrad::zeros(params);
    if loss <= T::zero() {
        return Ok(grad);
    }
    grad.loss = loss;
    let two = T::lit(2.0);
    let d_in = params.dim_in;
    for i in 0..params.dim_out {
        let ga = two * (fn_[i] - fp[i]);
        let gp = -two * (fa[i] - fp[i]);
        let gn = two * (fa[i] - fn_[i]);
        let row = &mut grad.dw[i * d_in..(i + 1) * d_in];
        for (k, w) in row.iter_mut().enumerate() {
            *w = ga * anchor_raw[k] + gp * pos_raw[k] + gn * neg_raw[k];
        }
        grad.db[i] = ga + gp + gn;
    }
    Ok(grad)
}
