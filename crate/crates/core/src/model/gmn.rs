//! Graph matching network: both graphs propagate jointly and every node
//! update also receives a cross-graph matching vector.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ggnn::check_states;
use super::message::{self, MessageCache};
use super::{CrossMode, Model, PreparedGraph};
use crate::error::{Error, Result};
use crate::flow::FlowGraph;
use crate::nn::gru::GruCache;
use crate::nn::ops::{canonical_order, softmax_ordered};
use crate::nn::params::{Gradients, ParamStore};
use crate::nn::readout::ReadoutCache;

/// Cross-graph attention of one propagation step.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossAttention {
    /// `a12[[i, j]]`: weight node `i` of the first graph gives node `j` of
    /// the second. Rows sum to 1.
    pub a12: Array2<f64>,
    /// `a21[[j, i]]`: the reverse direction.
    pub a21: Array2<f64>,
    /// `sum_j a12[[i, j]] (h1_i - h2_j)` per first-graph node.
    pub mu1: Array2<f64>,
    pub mu2: Array2<f64>,
    /// Number of (query, key) similarity evaluations performed.
    pub cells: usize,
}

/// Attention of queries `hq` over keys `hk`: returns the attention matrix
/// and `hq_i - sum_j a_ij hk_j`. Sums over keys run in canonical key order.
fn attend(hq: &Array2<f64>, hk: &Array2<f64>, cells: &mut usize) -> (Array2<f64>, Array2<f64>) {
    let (order, _) = canonical_order(hk);
    let mut att = Array2::zeros((hq.nrows(), hk.nrows()));
    let mut mu = hq.clone();
    let mut scores = Array1::zeros(hk.nrows());
    for (i, q) in hq.rows().into_iter().enumerate() {
        for (s, k) in scores.iter_mut().zip(hk.rows()) {
            *s = q.dot(&k);
            *cells += 1;
        }
        let a = softmax_ordered(scores.view(), &order);
        let mut row = mu.row_mut(i);
        for &j in &order {
            row.scaled_add(-a[j], &hk.row(j));
        }
        att.row_mut(i).assign(&a);
    }
    (att, mu)
}

/// Gradients of `mu = hq - a hk` (with `a` the softmax of `hq hk^T`) with
/// respect to `hq` and `hk`.
fn attend_backward(
    hq: &Array2<f64>,
    hk: &Array2<f64>,
    att: &Array2<f64>,
    dmu: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let da = -dmu.dot(&hk.t());
    let mut dhq = dmu.to_owned();
    let mut dhk = -att.t().dot(&dmu);
    let inner = (&da * att).sum_axis(Axis(1)).insert_axis(Axis(1));
    let ds = att * &(&da - &inner);
    dhq += &ds.dot(hk);
    dhk += &ds.t().dot(hq);
    (dhq, dhk)
}

pub fn cross_attention(h1: &Array2<f64>, h2: &Array2<f64>) -> Result<CrossAttention> {
    if h1.nrows() == 0 || h2.nrows() == 0 {
        return Err(Error::EmptyGraph);
    }
    if h1.ncols() != h2.ncols() {
        return Err(Error::ShapeMismatch {
            context: "cross attention",
            expected: format!("{} columns", h1.ncols()),
            found: format!("{} columns", h2.ncols()),
        });
    }
    let mut cells = 0;
    let (a12, mu1) = attend(h1, h2, &mut cells);
    let (a21, mu2) = attend(h2, h1, &mut cells);
    Ok(CrossAttention {
        a12,
        a21,
        mu1,
        mu2,
        cells,
    })
}

fn node_input(m: &Array2<f64>, mu: &Array2<f64>, mode: CrossMode) -> Array2<f64> {
    let cross = match mode {
        CrossMode::Standard => mu.clone(),
        CrossMode::Flipped => -mu,
        CrossMode::Zeroed => Array2::zeros(mu.raw_dim()),
    };
    concatenate(Axis(1), &[m.view(), cross.view()]).expect("rows agree")
}

/// One joint round: `h_i' = GRU(h_i, [sum_j m_{j->i} || sum_j mu_{j->i}])`
/// for the nodes of both graphs.
pub fn propagate_pair_once(
    model: &Model,
    store: &ParamStore,
    g1: &PreparedGraph,
    g2: &PreparedGraph,
    h1: &Array2<f64>,
    h2: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>, CrossAttention)> {
    check_states(model, g1, h1)?;
    check_states(model, g2, h2)?;
    let step = joint_step(model, store, g1, g2, h1, h2)?;
    Ok((step.0, step.1, step.2))
}

#[derive(Clone, Debug)]
struct JointStep {
    h1: Array2<f64>,
    h2: Array2<f64>,
    m1: MessageCache,
    m2: MessageCache,
    gru1: GruCache,
    gru2: GruCache,
    a12: Array2<f64>,
    a21: Array2<f64>,
}

fn joint_step(
    model: &Model,
    store: &ParamStore,
    g1: &PreparedGraph,
    g2: &PreparedGraph,
    h1: &Array2<f64>,
    h2: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>, CrossAttention, JointStep)> {
    let mode = model.config.cross_mode;
    let (m1, mc1) = message::forward(&model.message, &model.tables, store, g1, h1);
    let (m2, mc2) = message::forward(&model.message, &model.tables, store, g2, h2);
    let ca = cross_attention(h1, h2)?;
    let (n1, gc1) = model.gru.forward(store, h1, &node_input(&m1, &ca.mu1, mode))?;
    let (n2, gc2) = model.gru.forward(store, h2, &node_input(&m2, &ca.mu2, mode))?;
    let step = JointStep {
        h1: h1.clone(),
        h2: h2.clone(),
        m1: mc1,
        m2: mc2,
        gru1: gc1,
        gru2: gc2,
        a12: ca.a12.clone(),
        a21: ca.a21.clone(),
    };
    Ok((n1, n2, ca, step))
}

/// Activations of a joint forward pass.
#[derive(Clone, Debug)]
pub struct PairTapeJoint {
    labels1: Vec<usize>,
    labels2: Vec<usize>,
    steps: Vec<JointStep>,
    r1: ReadoutCache,
    r2: ReadoutCache,
    pub states1: Array2<f64>,
    pub states2: Array2<f64>,
    pub v1: Array1<f64>,
    pub v2: Array1<f64>,
    /// Final step only, unless the model keeps the attention history.
    pub attention: Vec<CrossAttention>,
}

pub(crate) fn forward(
    model: &Model,
    store: &ParamStore,
    g1: &PreparedGraph,
    g2: &PreparedGraph,
) -> Result<PairTapeJoint> {
    if g1.num_nodes() == 0 || g2.num_nodes() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut h1 = model.tables.encode(store, &g1.labels);
    let mut h2 = model.tables.encode(store, &g2.labels);
    let mut steps = Vec::with_capacity(model.config.steps);
    let mut attention = Vec::new();
    for _ in 0..model.config.steps {
        let (n1, n2, ca, step) = joint_step(model, store, g1, g2, &h1, &h2)?;
        if !model.config.keep_attention_history {
            attention.clear();
        }
        attention.push(ca);
        steps.push(step);
        h1 = n1;
        h2 = n2;
    }
    let (v1, r1) = model.readout.forward(store, &h1)?;
    let (v2, r2) = model.readout.forward(store, &h2)?;
    Ok(PairTapeJoint {
        labels1: g1.labels.clone(),
        labels2: g2.labels.clone(),
        steps,
        r1,
        r2,
        states1: h1,
        states2: h2,
        v1,
        v2,
        attention,
    })
}

pub(crate) fn backward(
    model: &Model,
    store: &ParamStore,
    tape: &PairTapeJoint,
    dv1: &Array1<f64>,
    dv2: &Array1<f64>,
    grads: &mut Gradients,
) {
    let d = model.config.dim;
    let sign = model.config.cross_mode.sign();
    let mut dh1 = model.readout.backward(store, &tape.r1, dv1, grads);
    let mut dh2 = model.readout.backward(store, &tape.r2, dv2, grads);
    for step in tape.steps.iter().rev() {
        let (mut p1, dx1) = model.gru.backward(store, &step.gru1, &dh1, grads);
        let (mut p2, dx2) = model.gru.backward(store, &step.gru2, &dh2, grads);
        let dm1 = dx1.slice(s![.., 0..d]).to_owned();
        let dm2 = dx2.slice(s![.., 0..d]).to_owned();
        p1 += &message::backward(&model.message, &model.tables, store, &step.m1, &dm1, grads);
        p2 += &message::backward(&model.message, &model.tables, store, &step.m2, &dm2, grads);
        if sign != 0.0 {
            let dmu1 = dx1.slice(s![.., d..]).mapv(|x| x * sign);
            let dmu2 = dx2.slice(s![.., d..]).mapv(|x| x * sign);
            let (q1, k2) = attend_backward(&step.h1, &step.h2, &step.a12, dmu1.view());
            let (q2, k1) = attend_backward(&step.h2, &step.h1, &step.a21, dmu2.view());
            p1 += &q1;
            p1 += &k1;
            p2 += &q2;
            p2 += &k2;
        }
        dh1 = p1;
        dh2 = p2;
    }
    model.tables.backward_nodes(&tape.labels1, &dh1, grads);
    model.tables.backward_nodes(&tape.labels2, &dh2, grads);
}

/// Result of [`embed_pair`].
#[derive(Clone, Debug)]
pub struct PairEmbedding {
    pub v1: Array1<f64>,
    pub v2: Array1<f64>,
    pub attention: Vec<CrossAttention>,
}

pub fn embed_pair(
    model: &Model,
    store: &ParamStore,
    g1: &PreparedGraph,
    g2: &PreparedGraph,
) -> Result<PairEmbedding> {
    let tape = forward(model, store, g1, g2)?;
    Ok(PairEmbedding {
        v1: tape.v1,
        v2: tape.v2,
        attention: tape.attention,
    })
}

/// One exported attention cell: node `i` attends to node `j` of the other
/// graph. `direction` is `"1->2"` when `i` is in the first graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub i: usize,
    pub j: usize,
    pub direction: String,
    pub score: f64,
    pub label_i: String,
    pub label_j: String,
    /// Source `[line, column]` of `i` and `j` when they are tokens.
    pub positions: [Option<[usize; 2]>; 2],
}

/// The `k` highest attention weights over both directions, highest first.
pub fn export_attention(
    attention: &CrossAttention,
    g1: &FlowGraph,
    g2: &FlowGraph,
    k: usize,
) -> Vec<AttentionRecord> {
    let mut cells: Vec<(f64, u8, usize, usize)> = Vec::new();
    for ((i, j), &a) in attention.a12.indexed_iter() {
        cells.push((a, 0, i, j));
    }
    for ((i, j), &a) in attention.a21.indexed_iter() {
        cells.push((a, 1, i, j));
    }
    cells.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2, x.3).cmp(&(y.1, y.2, y.3))));
    let pos = |g: &FlowGraph, n: usize| g.positions.get(n).copied().flatten();
    cells
        .into_iter()
        .take(k)
        .map(|(score, dir, i, j)| {
            let (gi, gj, direction) = if dir == 0 { (g1, g2, "1->2") } else { (g2, g1, "2->1") };
            AttentionRecord {
                i,
                j,
                direction: direction.to_string(),
                score,
                label_i: gi.node_labels[i].clone(),
                label_j: gj.node_labels[j].clone(),
                positions: [pos(gi, i), pos(gj, j)],
            }
        })
        .collect()
}
