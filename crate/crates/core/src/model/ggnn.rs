//! Per-graph embedding: `T` rounds of message passing with a shared GRU,
//! then the gated readout.

use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::message::{self, MessageCache};
use super::{Model, PreparedGraph};
use crate::error::{Error, Result};
use crate::nn::gru::GruCache;
use crate::nn::params::{Gradients, ParamStore};
use crate::nn::readout::ReadoutCache;

/// Activations of one graph's forward pass.
#[derive(Clone, Debug)]
pub struct GraphTape {
    labels: Vec<usize>,
    steps: Vec<(MessageCache, GruCache)>,
    readout: ReadoutCache,
    pub states: Array2<f64>,
    pub vector: Array1<f64>,
}

/// GRU input for a message block: the messages themselves, or the messages
/// followed by a zero block when the GRU was sized for matching vectors.
pub(crate) fn gru_input(model: &Model, m: Array2<f64>) -> Array2<f64> {
    if model.gru.spec.input == m.ncols() {
        m
    } else {
        let zeros = Array2::zeros((m.nrows(), model.gru.spec.input - m.ncols()));
        concatenate(Axis(1), &[m.view(), zeros.view()]).expect("rows agree")
    }
}

/// One propagation round: `h_i' = GRU(h_i, sum_j m_{j->i})`.
pub fn propagate_once(
    model: &Model,
    store: &ParamStore,
    graph: &PreparedGraph,
    h: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_states(model, graph, h)?;
    let (m, _) = message::forward(&model.message, &model.tables, store, graph, h);
    Ok(model.gru.forward(store, h, &gru_input(model, m))?.0)
}

pub(crate) fn check_states(model: &Model, graph: &PreparedGraph, h: &Array2<f64>) -> Result<()> {
    if h.dim() != (graph.num_nodes(), model.config.dim) {
        return Err(Error::ShapeMismatch {
            context: "node states",
            expected: format!("{} x {}", graph.num_nodes(), model.config.dim),
            found: format!("{} x {}", h.nrows(), h.ncols()),
        });
    }
    Ok(())
}

pub(crate) fn forward(model: &Model, store: &ParamStore, graph: &PreparedGraph) -> Result<GraphTape> {
    if graph.num_nodes() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut h = model.tables.encode(store, &graph.labels);
    let mut steps = Vec::with_capacity(model.config.steps);
    for _ in 0..model.config.steps {
        let (m, mc) = message::forward(&model.message, &model.tables, store, graph, &h);
        let (next, gc) = model.gru.forward(store, &h, &gru_input(model, m))?;
        steps.push((mc, gc));
        h = next;
    }
    let (vector, readout) = model.readout.forward(store, &h)?;
    Ok(GraphTape {
        labels: graph.labels.clone(),
        steps,
        readout,
        states: h,
        vector,
    })
}

pub(crate) fn backward(
    model: &Model,
    store: &ParamStore,
    tape: &GraphTape,
    dv: &Array1<f64>,
    grads: &mut Gradients,
) {
    let d = model.config.dim;
    let mut dh = model.readout.backward(store, &tape.readout, dv, grads);
    for (mc, gc) in tape.steps.iter().rev() {
        let (dh_prev, dx) = model.gru.backward(store, gc, &dh, grads);
        let dm = dx.slice(s![.., 0..d]).to_owned();
        dh = dh_prev + message::backward(&model.message, &model.tables, store, mc, &dm, grads);
    }
    model.tables.backward_nodes(&tape.labels, &dh, grads);
}

/// Graph vector `h_G` of a single graph.
pub fn embed_graph(model: &Model, store: &ParamStore, graph: &PreparedGraph) -> Result<Array1<f64>> {
    Ok(forward(model, store, graph)?.vector)
}
