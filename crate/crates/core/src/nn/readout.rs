use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use super::dense::Dense;
use super::ops::{canonical_order, ordered_column_sum, sigmoid};
use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Gated sum readout: `h_G = out( sum_i sigmoid(gate(h_i)) * inner(h_i) )`,
/// each of `gate`, `inner` and `out` a single affine layer.
#[derive(Clone, Debug)]
pub struct GatedReadout {
    pub gate: Dense,
    pub inner: Dense,
    pub out: Dense,
}

#[derive(Clone, Debug)]
pub struct ReadoutCache {
    h: Array2<f64>,
    gate: Array2<f64>,
    inner: Array2<f64>,
    pooled: Array2<f64>,
}

impl GatedReadout {
    pub fn register(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        GatedReadout {
            gate: Dense::register(store, &format!("{name}.gate"), dim, dim, rng),
            inner: Dense::register(store, &format!("{name}.inner"), dim, dim, rng),
            out: Dense::register(store, &format!("{name}.out"), dim, dim, rng),
        }
    }

    /// Pools node states into one graph vector.
    ///
    /// The node sum runs in canonical state order (see
    /// [`canonical_order`]), so the result is bitwise identical under any
    /// renumbering of the rows of `h`.
    pub fn forward(&self, store: &ParamStore, h: &Array2<f64>) -> Result<(Array1<f64>, ReadoutCache)> {
        if h.nrows() == 0 {
            return Err(Error::EmptyGraph);
        }
        let gate = self.gate.forward(store, h)?.mapv_into(sigmoid);
        let inner = self.inner.forward(store, h)?;
        let (order, _) = canonical_order(h);
        let pooled = ordered_column_sum(&(&gate * &inner), &order).insert_axis(Axis(0));
        let out = self.out.forward(store, &pooled)?;
        Ok((
            out.row(0).to_owned(),
            ReadoutCache {
                h: h.clone(),
                gate,
                inner,
                pooled,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &ReadoutCache,
        d_out: &Array1<f64>,
        grads: &mut Gradients,
    ) -> Array2<f64> {
        let d_out = d_out.clone().insert_axis(Axis(0));
        let d_pooled = self.out.backward(store, &cache.pooled, &d_out, grads);
        let n = cache.h.nrows();
        let d_prod = d_pooled.broadcast((n, d_pooled.ncols())).unwrap().to_owned();
        let d_inner = &d_prod * &cache.gate;
        let mut d_gate_pre = &d_prod * &cache.inner;
        Zip::from(&mut d_gate_pre)
            .and(&cache.gate)
            .for_each(|d, &g| *d *= g * (1.0 - g));
        let mut dh = self.inner.backward(store, &cache.h, &d_inner, grads);
        dh += &self.gate.backward(store, &cache.h, &d_gate_pre, grads);
        dh
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::glorot;
    use crate::nn::gradcheck::{grad_check, GradCheckConfig};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ParamStore, GatedReadout, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let r = GatedReadout::register(&mut store, "readout", 4, &mut rng);
        (store, r, rng)
    }

    #[test]
    fn permutation_invariant_bitwise() {
        let (store, readout, mut rng) = setup();
        let h = glorot(9, 4, &mut rng) * 3.0;
        let (base, _) = readout.forward(&store, &h).unwrap();
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..9).collect();
            perm.shuffle(&mut rng);
            let permuted = h.select(Axis(0), &perm);
            let (v, _) = readout.forward(&store, &permuted).unwrap();
            assert_eq!(v, base);
        }
    }

    #[test]
    fn single_node_definition() {
        let (store, readout, mut rng) = setup();
        let h = glorot(1, 4, &mut rng);
        let (v, _) = readout.forward(&store, &h).unwrap();
        let gate = readout.gate.forward(&store, &h).unwrap().mapv(sigmoid);
        let inner = readout.inner.forward(&store, &h).unwrap();
        let expected = readout.out.forward(&store, &(&gate * &inner)).unwrap();
        assert_eq!(v, expected.row(0));
    }

    #[test]
    fn empty_graph() {
        let (store, readout, _) = setup();
        assert!(matches!(
            readout.forward(&store, &Array2::zeros((0, 4))),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut store, readout, mut rng) = setup();
        let h = glorot(6, 4, &mut rng) * 2.0;
        let w = glorot(1, 4, &mut rng).row(0).to_owned();
        let loss = |s: &ParamStore, h: &Array2<f64>| readout.forward(s, h).unwrap().0.dot(&w);
        let (_, cache) = readout.forward(&store, &h).unwrap();
        let mut grads = Gradients::for_store(&store);
        let dh = readout.backward(&store, &cache, &w, &mut grads);
        let report = grad_check(&mut store, &grads, |s| loss(s, &h), &GradCheckConfig::default());
        assert!(report.passed, "{report:?}");
        let eps = 1e-4;
        for idx in ndarray::indices(h.raw_dim()) {
            let mut p = h.clone();
            p[idx] += eps;
            let mut m = h.clone();
            m[idx] -= eps;
            let num = (loss(&store, &p) - loss(&store, &m)) / (2.0 * eps);
            let rel = (num - dh[idx]).abs() / num.abs().max(dh[idx].abs()).max(1e-6);
            assert!(rel < 1e-4, "{idx:?}: {num} vs {}", dh[idx]);
        }
    }
}
