use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable matrices with gradient slots and Adam moments.
///
/// Vectors (biases) are stored as `1 x n` matrices.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    grads: Vec<Array2<f64>>,
    first_moment: Vec<Array2<f64>>,
    second_moment: Vec<Array2<f64>>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "parameter `{name}` registered twice"
        );
        let zeros = Array2::zeros(value.raw_dim());
        self.names.push(name);
        self.grads.push(zeros.clone());
        self.first_moment.push(zeros.clone());
        self.second_moment.push(zeros);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.grads[id.0]
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Adds `scale * grads` into the gradient slots.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (idx, slot) in grads.dense.iter().enumerate() {
            if let Some(g) = slot {
                self.grads[idx].scaled_add(scale, g);
            }
        }
        for (&(idx, row), g) in &grads.rows {
            self.grads[idx].row_mut(row).scaled_add(scale, g);
        }
    }

    /// Snapshot of `(name, value)` pairs in registration order.
    pub fn snapshot(&self) -> Vec<NamedTensor> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, v)| NamedTensor {
                name: name.clone(),
                rows: v.nrows(),
                cols: v.ncols(),
                data: v.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites values from a snapshot; every registered parameter must be
    /// present with a matching shape.
    pub fn restore(&mut self, tensors: &[NamedTensor]) -> Result<(), String> {
        if tensors.len() != self.values.len() {
            return Err(format!(
                "expected {} tensors, found {}",
                self.values.len(),
                tensors.len()
            ));
        }
        for t in tensors {
            let id = self
                .find(&t.name)
                .ok_or_else(|| format!("unknown parameter `{}`", t.name))?;
            let current = &self.values[id.0];
            if current.dim() != (t.rows, t.cols) || t.data.len() != t.rows * t.cols {
                return Err(format!(
                    "parameter `{}` has shape {:?}, checkpoint holds {}x{}",
                    t.name,
                    current.dim(),
                    t.rows,
                    t.cols
                ));
            }
            self.values[id.0] = Array2::from_shape_vec((t.rows, t.cols), t.data.clone())
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Gradient buffer for one forward/backward pass.
///
/// Slots are allocated on first touch. Embedding tables are updated through
/// [`Gradients::add_row`], which keeps only the rows that were looked up.
#[derive(Clone, Debug)]
pub struct Gradients {
    shapes: Vec<(usize, usize)>,
    dense: Vec<Option<Array2<f64>>>,
    rows: BTreeMap<(usize, usize), Array1<f64>>,
}

impl Gradients {
    pub fn for_store(store: &ParamStore) -> Self {
        Gradients {
            shapes: store.values.iter().map(|v| v.dim()).collect(),
            dense: vec![None; store.len()],
            rows: BTreeMap::new(),
        }
    }

    pub fn slot(&mut self, id: ParamId) -> &mut Array2<f64> {
        let shape = self.shapes[id.0];
        self.dense[id.0].get_or_insert_with(|| Array2::zeros(shape))
    }

    pub fn add_row(&mut self, id: ParamId, row: usize, values: ArrayView1<f64>) {
        match self.rows.get_mut(&(id.0, row)) {
            Some(acc) => *acc += &values,
            None => {
                self.rows.insert((id.0, row), values.to_owned());
            }
        }
    }

    /// Dense view of one parameter's gradient.
    pub fn get(&self, id: ParamId) -> Array2<f64> {
        let mut out = self.dense[id.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(self.shapes[id.0]));
        for (&(idx, row), g) in self.rows.range((id.0, 0)..(id.0 + 1, 0)) {
            debug_assert_eq!(idx, id.0);
            out.row_mut(row).scaled_add(1.0, g);
        }
        out
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (idx, slot) in other.dense.iter().enumerate() {
            if let Some(g) = slot {
                let shape = self.shapes[idx];
                self.dense[idx]
                    .get_or_insert_with(|| Array2::zeros(shape))
                    .scaled_add(1.0, g);
            }
        }
        for (key, g) in &other.rows {
            match self.rows.get_mut(key) {
                Some(acc) => *acc += g,
                None => {
                    self.rows.insert(*key, g.clone());
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.dense
            .iter()
            .flatten()
            .all(|g| g.iter().all(|x| x.is_finite()))
            && self.rows.values().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter; gradients are zeroed
/// afterwards.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) {
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for idx in 0..store.values.len() {
        let g = &store.grads[idx];
        let m = &mut store.first_moment[idx];
        let v = &mut store.second_moment[idx];
        let p = &mut store.values[idx];
        ndarray::Zip::from(p)
            .and(m)
            .and(v)
            .and(g)
            .for_each(|p, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            });
    }
    store.zero_grad();
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_store(x: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("x", array![[x]]);
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut store, id) = scalar_store(0.7);
        for _ in 0..3 {
            adam_step(&mut store, &AdamConfig::default());
        }
        assert_eq!(store.value(id)[[0, 0]], 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.5, -0.02] {
            let (mut store, id) = scalar_store(1.0);
            let mut grads = Gradients::for_store(&store);
            grads.slot(id)[[0, 0]] = g;
            store.accumulate(&grads, 1.0);
            let cfg = AdamConfig::default();
            adam_step(&mut store, &cfg);
            let delta = store.value(id)[[0, 0]] - 1.0;
            assert!((delta + cfg.lr * f64::signum(g)).abs() < 1e-9, "{delta}");
            assert_eq!(store.grad(id)[[0, 0]], 0.0);
        }
    }

    #[test]
    fn identical_stores_step_identically() {
        let make = || {
            let mut s = ParamStore::new();
            let id = s.add("w", array![[0.1, -0.2], [0.3, 0.4]]);
            let mut g = Gradients::for_store(&s);
            *g.slot(id) = array![[0.5, -1.0], [2.0, 0.0]];
            s.accumulate(&g, 1.0);
            adam_step(&mut s, &AdamConfig::default());
            s.value(id).clone()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn row_gradients_merge() {
        let mut store = ParamStore::new();
        let id = store.add("emb", Array2::zeros((4, 2)));
        let mut a = Gradients::for_store(&store);
        a.add_row(id, 1, array![1.0, 2.0].view());
        a.add_row(id, 1, array![1.0, 2.0].view());
        let mut b = Gradients::for_store(&store);
        b.add_row(id, 3, array![-1.0, 0.5].view());
        a.merge(&b);
        let dense = a.get(id);
        assert_eq!(dense, array![[0.0, 0.0], [2.0, 4.0], [0.0, 0.0], [-1.0, 0.5]]);
        store.accumulate(&a, 0.5);
        assert_eq!(store.grad(id)[[1, 1]], 2.0);
    }

    #[test]
    fn snapshot_restore() {
        let mut store = ParamStore::new();
        store.add("a", array![[1.0, 2.0]]);
        store.add("b", array![[3.0], [4.0]]);
        let snap = store.snapshot();
        let mut other = ParamStore::new();
        other.add("a", Array2::zeros((1, 2)));
        other.add("b", Array2::zeros((2, 1)));
        other.restore(&snap).unwrap();
        assert_eq!(other.snapshot(), snap);
        let mut wrong = ParamStore::new();
        wrong.add("a", Array2::zeros((2, 1)));
        wrong.add("b", Array2::zeros((2, 1)));
        assert!(wrong.restore(&snap).is_err());
    }
}
