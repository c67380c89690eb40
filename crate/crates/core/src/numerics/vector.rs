use crate::{Error, Result};

/// Inner product, accumulated left to right.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Coordinate-wise mean of equally sized rows, summed in row order and then
/// divided by the row count.
pub fn mean_of<V: AsRef<[f64]>>(rows: &[V]) -> Result<Vec<f64>> {
    let first = rows
        .first()
        .ok_or_else(|| Error::invalid("mean of an empty set of vectors"))?;
    let dim = first.as_ref().len();
    let mut acc = vec![0.0; dim];
    for row in rows {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(Error::invalid(format!(
                "vector length {} does not match {}",
                row.len(),
                dim
            )));
        }
        for (a, r) in acc.iter_mut().zip(row) {
            *a += r;
        }
    }
    let m = rows.len() as f64;
    for a in &mut acc {
        *a /= m;
    }
    Ok(acc)
}

/// `<u, v> / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if !(nu > 0.0 && nv > 0.0) {
        return Err(Error::invalid("cosine similarity of a zero-norm vector"));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
