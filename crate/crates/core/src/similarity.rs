//! Vector primitives: dot products, cosine similarity and centroids.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Cosine similarity `a·b / (|a||b|)`, clamped to `[-1, 1]`.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = norm(a);
    let nb = norm(b);
    if !(na > T::zero()) || !(nb > T::zero()) {
        return Err(Error::ZeroNorm);
    }
    let c = dot(a, b) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Component-wise arithmetic mean of a nonempty list of equal-length vectors.
pub fn centroid<T: Scalar, V: AsRef<[T]>>(vectors: &[V]) -> Result<Vec<T>> {
    let first = vectors.first().ok_or(Error::Empty("centroid of no vectors"))?;
    let dim = first.as_ref().len();
    let mut acc = vec![T::zero(); dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = T::from_usize_lossy(vectors.len());
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Scales `v` to unit length in place; zero vectors are left untouched.
pub fn l2_normalize<T: Scalar>(v: &mut [T]) {
    let n = norm(v);
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
