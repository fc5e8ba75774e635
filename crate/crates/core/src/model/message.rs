//! Edge messages `m_{j->i} = MLP([h_i || h_j || e_type])`, summed at the
//! destination node.
//!
//! The first MLP layer is split into three `d x d` blocks so that the node
//! projections are computed once per node instead of once per edge, and the
//! second (linear) layer is applied after the sum.

use ndarray::{s, Array2, ArrayView2};

use super::PreparedGraph;
use crate::nn::dense::Mlp;
use crate::nn::ops::canonical_order;
use crate::nn::params::{Gradients, ParamStore};
use crate::vocab::EmbeddingTables;

#[derive(Clone, Debug)]
pub struct MessageCache {
    h: Array2<f64>,
    /// `(dst, src, edge type)` in summation order.
    edges: Vec<(usize, usize, usize)>,
    pre: Array2<f64>,
    summed: Array2<f64>,
    degree: Vec<f64>,
}

/// Returns the aggregated messages `M` (`n x d`) and the backward cache.
///
/// In-edges of each node are summed in order of `(canonical rank of the
/// source state, edge type)`, so the result does not depend on node
/// numbering.
pub fn forward(
    mlp: &Mlp,
    tables: &EmbeddingTables,
    store: &ParamStore,
    graph: &PreparedGraph,
    h: &Array2<f64>,
) -> (Array2<f64>, MessageCache) {
    let d = tables.dim;
    let n = h.nrows();
    let (l1, l2) = (&mlp.layers[0], &mlp.layers[1]);
    let w1 = store.value(l1.w);
    let b1 = store.value(l1.b).row(0).to_owned();
    let a = h.dot(&w1.slice(s![0..d, ..]));
    let b = h.dot(&w1.slice(s![d..2 * d, ..]));
    let c = tables.edge_table(store).dot(&w1.slice(s![2 * d..3 * d, ..]));

    let (_, rank) = canonical_order(h);
    let mut edges = Vec::with_capacity(graph.num_edges());
    for (dst, incoming) in graph.in_edges.iter().enumerate() {
        let start = edges.len();
        edges.extend(incoming.iter().map(|&(src, t)| (dst, src, t)));
        edges[start..].sort_by_key(|&(_, src, t)| (rank[src], t));
    }

    let mut pre = Array2::zeros((edges.len(), d));
    let mut summed = Array2::<f64>::zeros((n, d));
    let mut degree = vec![0.0; n];
    for (k, &(dst, src, t)) in edges.iter().enumerate() {
        let mut p = pre.row_mut(k);
        p.assign(&a.row(dst));
        p += &b.row(src);
        p += &c.row(t);
        p += &b1;
        let mut acc = summed.row_mut(dst);
        for (x, &v) in acc.iter_mut().zip(p.iter()) {
            *x += v.max(0.0);
        }
        degree[dst] += 1.0;
    }

    let mut m = summed.dot(store.value(l2.w));
    let b2 = store.value(l2.b).row(0);
    for (mut row, &deg) in m.rows_mut().into_iter().zip(&degree) {
        if deg > 0.0 {
            row.scaled_add(deg, &b2);
        }
    }
    (
        m,
        MessageCache {
            h: h.clone(),
            edges,
            pre,
            summed,
            degree,
        },
    )
}

/// Accumulates parameter and edge-table gradients and returns `dL/dh`.
pub fn backward(
    mlp: &Mlp,
    tables: &EmbeddingTables,
    store: &ParamStore,
    cache: &MessageCache,
    dm: &Array2<f64>,
    grads: &mut Gradients,
) -> Array2<f64> {
    let d = tables.dim;
    let (l1, l2) = (&mlp.layers[0], &mlp.layers[1]);
    let w1 = store.value(l1.w);
    let w2 = store.value(l2.w);

    grads.slot(l2.w).scaled_add(1.0, &cache.summed.t().dot(dm));
    {
        let db2 = grads.slot(l2.b);
        let mut db2 = db2.row_mut(0);
        for (row, &deg) in dm.rows().into_iter().zip(&cache.degree) {
            if deg > 0.0 {
                db2.scaled_add(deg, &row);
            }
        }
    }
    let ds = dm.dot(&w2.t());

    let n = cache.h.nrows();
    let mut da = Array2::<f64>::zeros((n, d));
    let mut db = Array2::<f64>::zeros((n, d));
    let mut dc = Array2::<f64>::zeros((tables.edge_table(store).nrows(), d));
    let mut db1 = ndarray::Array1::<f64>::zeros(d);
    let mut dpre = ndarray::Array1::<f64>::zeros(d);
    for (k, &(dst, src, t)) in cache.edges.iter().enumerate() {
        for ((g, &p), &up) in dpre.iter_mut().zip(cache.pre.row(k)).zip(ds.row(dst)) {
            *g = if p > 0.0 { up } else { 0.0 };
        }
        da.row_mut(dst).scaled_add(1.0, &dpre);
        db.row_mut(src).scaled_add(1.0, &dpre);
        dc.row_mut(t).scaled_add(1.0, &dpre);
        db1 += &dpre;
    }
    grads.slot(l1.b).row_mut(0).scaled_add(1.0, &db1);

    let edge_table: ArrayView2<f64> = tables.edge_table(store);
    {
        let dw1 = grads.slot(l1.w);
        dw1.slice_mut(s![0..d, ..]).scaled_add(1.0, &cache.h.t().dot(&da));
        dw1.slice_mut(s![d..2 * d, ..]).scaled_add(1.0, &cache.h.t().dot(&db));
        dw1.slice_mut(s![2 * d..3 * d, ..])
            .scaled_add(1.0, &edge_table.t().dot(&dc));
    }
    let de = dc.dot(&w1.slice(s![2 * d..3 * d, ..]).t());
    grads.slot(tables.edge).scaled_add(1.0, &de);

    let mut dh = da.dot(&w1.slice(s![0..d, ..]).t());
    dh += &db.dot(&w1.slice(s![d..2 * d, ..]).t());
    dh
}

/// Reference per-edge evaluation through the generic MLP; used in tests.
#[cfg(test)]
pub(crate) fn forward_naive(
    mlp: &Mlp,
    tables: &EmbeddingTables,
    store: &ParamStore,
    graph: &PreparedGraph,
    h: &Array2<f64>,
) -> Array2<f64> {
    let d = tables.dim;
    let edge_table = tables.edge_table(store);
    let mut m = Array2::zeros((h.nrows(), d));
    for (dst, incoming) in graph.in_edges.iter().enumerate() {
        for &(src, t) in incoming {
            let x = ndarray::concatenate(
                ndarray::Axis(0),
                &[h.row(dst), h.row(src), edge_table.row(t)],
            )
            .unwrap();
            let msg = mlp.forward_vec(store, &x).unwrap();
            m.row_mut(dst).scaled_add(1.0, &msg);
        }
    }
    m
}
