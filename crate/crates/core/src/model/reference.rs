//! Scalar-loop reference implementations used as test oracles. They share no
//! code with the matrix implementations.

use super::Model;
use crate::nn::ops::sigmoid;
use crate::nn::params::ParamStore;

type Rows = Vec<Vec<f64>>;

pub(crate) fn set_hand_weights(store: &mut ParamStore) {
    for id in store.ids().collect::<Vec<_>>() {
        let offset = store.name(id).len() as f64 * 0.01;
        store
            .value_mut(id)
            .indexed_iter_mut()
            .for_each(|((r, c), v)| *v = ((r * 3 + c * 5) % 7) as f64 * 0.15 - 0.4 + offset);
    }
}

/// Summed messages for `(src, dst, type)` edges.
pub(crate) fn messages(store: &ParamStore, m: &Model, edges: &[(usize, usize, usize)], h: &Rows) -> Rows {
    let d = h[0].len();
    let w1 = store.value(m.message.layers[0].w);
    let b1 = store.value(m.message.layers[0].b);
    let w2 = store.value(m.message.layers[1].w);
    let b2 = store.value(m.message.layers[1].b);
    let e = store.value(m.tables.edge);
    let mut msg = vec![vec![0.0; d]; h.len()];
    for &(src, dst, t) in edges {
        let mut x = h[dst].clone();
        x.extend(&h[src]);
        x.extend(e.row(t).iter());
        let mut hidden = vec![0.0; d];
        for k in 0..d {
            let mut acc = b1[[0, k]];
            for (r, xr) in x.iter().enumerate() {
                acc += xr * w1[[r, k]];
            }
            hidden[k] = acc.max(0.0);
        }
        for k in 0..d {
            let mut acc = b2[[0, k]];
            for r in 0..d {
                acc += hidden[r] * w2[[r, k]];
            }
            msg[dst][k] += acc;
        }
    }
    msg
}

/// GRU update of every row of `h` with input rows `x`.
pub(crate) fn gru(store: &ParamStore, m: &Model, h: &Rows, x: &Rows) -> Rows {
    let d = h[0].len();
    let g = &m.gru;
    let affine = |w, u, b, x: &[f64], s: &[f64], k: usize| -> f64 {
        let (w, u, b) = (store.value(w), store.value(u), store.value(b));
        let mut acc = b[[0, k]];
        for r in 0..x.len() {
            acc += x[r] * w[[r, k]];
        }
        for r in 0..s.len() {
            acc += s[r] * u[[r, k]];
        }
        acc
    };
    h.iter()
        .zip(x)
        .map(|(hi, xi)| {
            let z: Vec<f64> = (0..d).map(|k| sigmoid(affine(g.wz, g.uz, g.bz, xi, hi, k))).collect();
            let r: Vec<f64> = (0..d).map(|k| sigmoid(affine(g.wr, g.ur, g.br, xi, hi, k))).collect();
            let rh: Vec<f64> = (0..d).map(|k| r[k] * hi[k]).collect();
            (0..d)
                .map(|k| {
                    let c = affine(g.wh, g.uh, g.bh, xi, &rh, k).tanh();
                    (1.0 - z[k]) * hi[k] + z[k] * c
                })
                .collect()
        })
        .collect()
}

pub(crate) fn ggnn_step(store: &ParamStore, m: &Model, edges: &[(usize, usize, usize)], h: &Rows) -> Rows {
    gru(store, m, h, &messages(store, m, edges, h))
}

/// `(attention rows, matching sums)` of queries `hq` over keys `hk`.
pub(crate) fn attention(hq: &Rows, hk: &Rows) -> (Rows, Rows) {
    let mut att = Vec::new();
    let mut mu = Vec::new();
    for qi in hq {
        let scores: Vec<f64> = hk
            .iter()
            .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum())
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let a: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
        let m = (0..qi.len())
            .map(|k| a.iter().zip(hk).map(|(w, kj)| w * (qi[k] - kj[k])).sum())
            .collect();
        att.push(a);
        mu.push(m);
    }
    (att, mu)
}

pub(crate) fn gmn_step(
    store: &ParamStore,
    m: &Model,
    e1: &[(usize, usize, usize)],
    e2: &[(usize, usize, usize)],
    h1: &Rows,
    h2: &Rows,
) -> (Rows, Rows) {
    let concat = |a: Rows, b: Rows| -> Rows {
        a.into_iter()
            .zip(b)
            .map(|(mut x, y)| {
                x.extend(y);
                x
            })
            .collect()
    };
    let x1 = concat(messages(store, m, e1, h1), attention(h1, h2).1);
    let x2 = concat(messages(store, m, e2, h2), attention(h2, h1).1);
    (gru(store, m, h1, &x1), gru(store, m, h2, &x2))
}
