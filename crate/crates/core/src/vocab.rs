//! Node label vocabulary and the learned node/edge embedding tables.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{EdgeType, FlowGraph};
use crate::nn::params::{Gradients, ParamId, ParamStore};

pub const UNK: &str = "<unk>";
pub const UNK_INDEX: usize = 0;

/// Label to index map. Index 0 is always [`UNK`]; the remaining labels are
/// ordered by descending frequency, ties by label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    label: String,
    index: usize,
}

impl Vocabulary {
    pub fn build<'a, I>(graphs: I, min_count: usize) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = &'a FlowGraph>,
    {
        if min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be at least 1".into()));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut any = false;
        for g in graphs {
            any = true;
            for label in &g.node_labels {
                *counts.entry(label.as_str()).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(label, c)| c >= min_count && label != UNK)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let labels = std::iter::once(UNK.to_string())
            .chain(kept.into_iter().map(|(l, _)| l.to_string()))
            .collect();
        Ok(Self::from_labels(labels))
    }

    fn from_labels(labels: Vec<String>) -> Vocabulary {
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Vocabulary { labels, index }
    }

    /// Rebuilds a vocabulary from its label list (as stored in checkpoints).
    pub fn from_label_list(labels: Vec<String>) -> Result<Vocabulary> {
        if labels.first().map(String::as_str) != Some(UNK) {
            return Err(Error::InvalidArgument(format!(
                "vocabulary must start with {UNK}"
            )));
        }
        let vocab = Self::from_labels(labels);
        if vocab.index.len() != vocab.labels.len() {
            return Err(Error::InvalidArgument("vocabulary has duplicate labels".into()));
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    /// Index of `label`, falling back to [`UNK_INDEX`].
    pub fn lookup(&self, label: &str) -> usize {
        self.index.get(label).copied().unwrap_or(UNK_INDEX)
    }

    pub fn encode_labels(&self, graph: &FlowGraph) -> Vec<usize> {
        graph.node_labels.iter().map(|l| self.lookup(l)).collect()
    }

    /// One `{label, index}` JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (index, label) in self.labels.iter().enumerate() {
            let rec = VocabRecord {
                label: label.clone(),
                index,
            };
            out.push_str(&serde_json::to_string(&rec).expect("vocab record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vocabulary> {
        let mut labels = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: VocabRecord = serde_json::from_str(line)?;
            if rec.index != labels.len() {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary line {}: index {} out of sequence",
                    n + 1,
                    rec.index
                )));
            }
            labels.push(rec.label);
        }
        Self::from_label_list(labels)
    }
}

/// Node-label and edge-type embedding tables, registered in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct EmbeddingTables {
    pub node: ParamId,
    pub edge: ParamId,
    pub dim: usize,
}

pub const INIT_RANGE: f64 = 0.05;

impl EmbeddingTables {
    pub fn register(
        store: &mut ParamStore,
        vocab_size: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> EmbeddingTables {
        let mut uniform = |rows: usize| {
            Array2::from_shape_fn((rows, dim), |_| rng.random_range(-INIT_RANGE..INIT_RANGE))
        };
        let node = store.add("embedding.node", uniform(vocab_size));
        let edge = store.add("embedding.edge", uniform(EdgeType::COUNT));
        EmbeddingTables { node, edge, dim }
    }

    pub fn edge_table<'a>(&self, store: &'a ParamStore) -> ArrayView2<'a, f64> {
        store.value(self.edge).view()
    }

    /// Initial node states: row `i` is the table row of node `i`'s label.
    pub fn encode(&self, store: &ParamStore, indices: &[usize]) -> Array2<f64> {
        let table = store.value(self.node);
        let mut h = Array2::zeros((indices.len(), self.dim));
        for (mut row, &idx) in h.rows_mut().into_iter().zip(indices) {
            row.assign(&table.row(idx));
        }
        h
    }

    /// Scatters `dL/dh0` into the touched node-table rows.
    pub fn backward_nodes(&self, indices: &[usize], dh0: &Array2<f64>, grads: &mut Gradients) {
        for (row, &idx) in dh0.rows().into_iter().zip(indices) {
            grads.add_row(self.node, idx, row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(labels: &[&str]) -> FlowGraph {
        FlowGraph {
            fragment_id: "g".into(),
            num_nodes: labels.len(),
            node_labels: labels.iter().map(|s| s.to_string()).collect(),
            edges: vec![],
            positions: vec![],
        }
    }

    #[test]
    fn build_examples() {
        let g = graph(&["A", "A", "B"]);
        let v = Vocabulary::build([&g], 1).unwrap();
        assert_eq!(v.labels(), [UNK, "A", "B"]);
        let v = Vocabulary::build([&g], 2).unwrap();
        assert_eq!(v.labels(), [UNK, "A"]);
        assert_eq!(v.lookup("B"), UNK_INDEX);
        assert!(matches!(
            Vocabulary::build(std::iter::empty(), 1),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn ties_are_lexicographic() {
        let a = graph(&["z", "b", "a", "b", "z"]);
        let v1 = Vocabulary::build([&a], 1).unwrap();
        let v2 = Vocabulary::build([&a.clone()], 1).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.labels(), [UNK, "b", "z", "a"]);
    }

    #[test]
    fn jsonl_round_trip() {
        let v = Vocabulary::build([&graph(&["x", "\"q\"", "x"])], 1).unwrap();
        let text = v.to_jsonl();
        assert_eq!(text.lines().next().unwrap(), r#"{"label":"<unk>","index":0}"#);
        assert_eq!(Vocabulary::from_jsonl(&text).unwrap(), v);
    }

    #[test]
    fn encode_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let v = Vocabulary::build([&graph(&["A", "B"])], 1).unwrap();
        let t = EmbeddingTables::register(&mut store, v.len(), 4, &mut rng);
        assert!(store.value(t.node).iter().all(|x| x.abs() <= INIT_RANGE));

        let unk = graph(&["p", "q", "r"]);
        let h = t.encode(&store, &v.encode_labels(&unk));
        assert_eq!(h.dim(), (3, 4));
        assert!(h.rows().into_iter().all(|r| r == h.row(0)));

        let g = graph(&["A", "B", "A"]);
        let idx = v.encode_labels(&g);
        let h = t.encode(&store, &idx);
        assert_eq!(h.row(0), h.row(2));

        // perturbing B's row changes only the B node
        let b = v.lookup("B");
        store.value_mut(t.node)[[b, 1]] += 1.0;
        let h2 = t.encode(&store, &idx);
        assert_eq!(h2.row(0), h.row(0));
        assert_eq!(h2.row(2), h.row(2));
        assert_eq!(h2[[1, 1]] - h[[1, 1]], 1.0);
    }

    #[test]
    fn backward_accumulates_shared_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let t = EmbeddingTables::register(&mut store, 3, 2, &mut rng);
        let mut grads = Gradients::for_store(&store);
        let dh = ndarray::array![[1.0, 2.0], [0.5, 0.5], [3.0, -1.0]];
        t.backward_nodes(&[2, 0, 2], &dh, &mut grads);
        assert_eq!(
            grads.get(t.node),
            ndarray::array![[0.5, 0.5], [0.0, 0.0], [4.0, 1.0]]
        );
    }
}
