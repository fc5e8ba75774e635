use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(v: ArrayView1<f64>) -> Array1<f64> {
    let order: Vec<usize> = (0..v.len()).collect();
    softmax_ordered(v, &order)
}

/// Softmax whose normalizer is summed in the given index order.
pub(crate) fn softmax_ordered(v: ArrayView1<f64>, order: &[usize]) -> Array1<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = v.mapv(|x| (x - max).exp());
    let mut z = 0.0;
    for &i in order {
        z += e[i];
    }
    e / z
}

fn cmp_rows(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Canonical node ordering: rows sorted lexicographically by value.
///
/// Returns `(order, rank)` where `order` lists row indices in canonical order
/// and `rank[i]` is the position of row `i`'s value class (bitwise-equal rows
/// share a rank). Sums over nodes are taken in this order so that results do
/// not depend on how nodes are numbered.
pub fn canonical_order(h: &Array2<f64>) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| cmp_rows(h.row(a), h.row(b)).then(a.cmp(&b)));
    let mut rank = vec![0; h.nrows()];
    let mut current = 0;
    for k in 0..order.len() {
        if k > 0 && cmp_rows(h.row(order[k - 1]), h.row(order[k])) != Ordering::Equal {
            current += 1;
        }
        rank[order[k]] = current;
    }
    (order, rank)
}

/// Column sums of `rows`, accumulated in the given row order.
pub(crate) fn ordered_column_sum(rows: &Array2<f64>, order: &[usize]) -> Array1<f64> {
    let mut acc = Array1::zeros(rows.ncols());
    for &i in order {
        acc += &rows.row(i);
    }
    acc
}

/// Cosine similarity and its gradients with respect to both inputs.
pub fn cosine_with_grad(
    u: &Array1<f64>,
    v: &Array1<f64>,
) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    let (uu, vv) = (u.dot(u), v.dot(v));
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let (nu, nv) = (uu.sqrt(), vv.sqrt());
    let s = u.dot(v) / (uu * vv).sqrt();
    let du = v / (nu * nv) - u * (s / (nu * nu));
    let dv = u / (nu * nv) - v * (s / (nv * nv));
    Ok((s, du, dv))
}

/// Cosine similarity, computed as `<u,v> / sqrt(|u|^2 |v|^2)` so that a
/// vector compared with itself gives exactly 1.
pub fn cosine(u: &Array1<f64>, v: &Array1<f64>) -> Result<f64> {
    let uu = u.dot(u);
    let vv = v.dot(v);
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((u.dot(v) / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}
