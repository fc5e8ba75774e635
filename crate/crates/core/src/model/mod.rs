//! Graph embedding models: a gated graph neural network (one graph at a
//! time) and a graph matching network (two graphs jointly, with cross-graph
//! attention).

pub mod ggnn;
pub mod gmn;
pub mod message;
#[cfg(test)]
pub(crate) mod reference;

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowGraph;
use crate::nn::dense::{Activation, Mlp, MlpSpec};
use crate::nn::gru::{Gru, GruSpec};
use crate::nn::params::{Gradients, ParamStore};
use crate::nn::readout::GatedReadout;
use crate::vocab::{EmbeddingTables, Vocabulary};

pub use ggnn::{propagate_once, GraphTape};
pub use gmn::{cross_attention, export_attention, propagate_pair_once, AttentionRecord, CrossAttention};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ggnn,
    Gmn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ggnn => "ggnn",
            ModelKind::Gmn => "gmn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ggnn" => Ok(ModelKind::Ggnn),
            "gmn" => Ok(ModelKind::Gmn),
            other => Err(Error::InvalidArgument(format!(
                "unknown model `{other}` (expected ggnn or gmn)"
            ))),
        }
    }
}

/// How the cross-graph matching vector enters the GMN node update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossMode {
    /// `sum_j a_ji (h_i - h_j)`.
    #[default]
    Standard,
    /// `sum_j a_ji (h_j - h_i)`.
    Flipped,
    /// Replaced by zeros.
    Zeroed,
}

impl CrossMode {
    pub(crate) fn sign(self) -> f64 {
        match self {
            CrossMode::Standard => 1.0,
            CrossMode::Flipped => -1.0,
            CrossMode::Zeroed => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub steps: usize,
    #[serde(default)]
    pub cross_mode: CrossMode,
    /// Keep attention matrices of every propagation step, not only the last.
    #[serde(default)]
    pub keep_attention_history: bool,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, dim: usize, steps: usize) -> Self {
        ModelConfig {
            kind,
            dim,
            steps,
            cross_mode: CrossMode::Standard,
            keep_attention_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dim == 0 {
            problems.push("dim must be at least 1".to_string());
        }
        if self.steps == 0 {
            problems.push("steps must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// A flow graph reduced to what the models read: label indices and the
/// in-edges of every node as `(source, edge type index)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedGraph {
    pub labels: Vec<usize>,
    pub in_edges: Vec<Vec<(usize, usize)>>,
}

impl PreparedGraph {
    pub fn new(graph: &FlowGraph, vocab: &Vocabulary) -> PreparedGraph {
        let edges: Vec<_> = graph
            .edges
            .iter()
            .map(|e| (e.src(), e.dst(), e.etype().index()))
            .collect();
        PreparedGraph::from_parts(vocab.encode_labels(graph), &edges)
    }

    /// Builds from label indices and `(src, dst, type)` triples.
    pub fn from_parts(labels: Vec<usize>, edges: &[(usize, usize, usize)]) -> PreparedGraph {
        let mut in_edges = vec![Vec::new(); labels.len()];
        for &(src, dst, t) in edges {
            in_edges[dst].push((src, t));
        }
        PreparedGraph { labels, in_edges }
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.in_edges.iter().map(Vec::len).sum()
    }
}

/// Layer layout of either model; the parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub tables: EmbeddingTables,
    pub message: Mlp,
    pub gru: Gru,
    pub readout: GatedReadout,
}

impl Model {
    /// Registers every parameter in `store`, initialized from `seed`.
    pub fn register(
        store: &mut ParamStore,
        config: ModelConfig,
        vocab_size: usize,
        seed: u64,
    ) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let tables = EmbeddingTables::register(store, vocab_size, d, &mut rng);
        let message = Mlp::register(
            store,
            "message",
            MlpSpec {
                input: 3 * d,
                output: d,
                hidden: vec![d],
                activation: Activation::ReLU,
            },
            &mut rng,
        )?;
        let gru_input = match config.kind {
            ModelKind::Ggnn => d,
            ModelKind::Gmn => 2 * d,
        };
        let gru = Gru::register(
            store,
            "gru",
            GruSpec {
                input: gru_input,
                state: d,
            },
            &mut rng,
        )?;
        let readout = GatedReadout::register(store, "readout", d, &mut rng);
        Ok(Model {
            config,
            tables,
            message,
            gru,
            readout,
        })
    }

    /// Forward pass for a pair, keeping everything needed for backward.
    pub fn forward_pair(
        &self,
        store: &ParamStore,
        g1: &PreparedGraph,
        g2: &PreparedGraph,
    ) -> Result<PairTape> {
        match self.config.kind {
            ModelKind::Ggnn => {
                let t1 = ggnn::forward(self, store, g1)?;
                let t2 = ggnn::forward(self, store, g2)?;
                Ok(PairTape::Separate(Box::new((t1, t2))))
            }
            ModelKind::Gmn => Ok(PairTape::Joint(Box::new(gmn::forward(self, store, g1, g2)?))),
        }
    }

    pub fn backward_pair(
        &self,
        store: &ParamStore,
        tape: &PairTape,
        dv1: &Array1<f64>,
        dv2: &Array1<f64>,
        grads: &mut Gradients,
    ) {
        match tape {
            PairTape::Separate(t) => {
                ggnn::backward(self, store, &t.0, dv1, grads);
                ggnn::backward(self, store, &t.1, dv2, grads);
            }
            PairTape::Joint(t) => gmn::backward(self, store, t, dv1, dv2, grads),
        }
    }

    /// The two graph vectors of a pair.
    pub fn embed_both(
        &self,
        store: &ParamStore,
        g1: &PreparedGraph,
        g2: &PreparedGraph,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let tape = self.forward_pair(store, g1, g2)?;
        let (a, b) = tape.vectors();
        Ok((a.clone(), b.clone()))
    }
}

pub enum PairTape {
    Separate(Box<(GraphTape, GraphTape)>),
    Joint(Box<gmn::PairTapeJoint>),
}

impl PairTape {
    pub fn vectors(&self) -> (&Array1<f64>, &Array1<f64>) {
        match self {
            PairTape::Separate(t) => (&t.0.vector, &t.1.vector),
            PairTape::Joint(t) => (&t.v1, &t.v2),
        }
    }
}
