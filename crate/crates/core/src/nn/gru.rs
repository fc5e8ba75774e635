use ndarray::{Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::glorot;
use super::ops::sigmoid;
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruSpec {
    pub input: usize,
    pub state: usize,
}

/// Gated recurrent unit applied row-wise:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// h~ = tanh(x Wh + (r * h) Uh + bh)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Clone, Debug)]
pub struct Gru {
    pub spec: GruSpec,
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

#[derive(Clone, Debug)]
pub struct GruCache {
    x: Array2<f64>,
    h: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    cand: Array2<f64>,
}

impl Gru {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        spec: GruSpec,
        rng: &mut impl Rng,
    ) -> Result<Gru> {
        if spec.input == 0 || spec.state == 0 {
            return Err(Error::InvalidArgument(format!(
                "GRU `{name}` dimensions must be positive"
            )));
        }
        let (i, s) = (spec.input, spec.state);
        let mut add = |suffix: &str, rows: usize, rng: &mut dyn rand::RngCore| {
            let value = if suffix.starts_with('b') {
                Array2::zeros((1, s))
            } else {
                glorot(rows, s, rng)
            };
            store.add(format!("{name}.{suffix}"), value)
        };
        Ok(Gru {
            spec,
            wz: add("wz", i, rng),
            uz: add("uz", s, rng),
            bz: add("bz", 1, rng),
            wr: add("wr", i, rng),
            ur: add("ur", s, rng),
            br: add("br", 1, rng),
            wh: add("wh", i, rng),
            uh: add("uh", s, rng),
            bh: add("bh", 1, rng),
        })
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        h: &Array2<f64>,
        x: &Array2<f64>,
    ) -> Result<(Array2<f64>, GruCache)> {
        if h.ncols() != self.spec.state || x.ncols() != self.spec.input || h.nrows() != x.nrows()
        {
            return Err(Error::ShapeMismatch {
                context: "gru step",
                expected: format!("n x {} state, n x {} input", self.spec.state, self.spec.input),
                found: format!("{:?} state, {:?} input", h.dim(), x.dim()),
            });
        }
        let gate = |w: ParamId, u: ParamId, b: ParamId| {
            let mut pre = x.dot(store.value(w)) + h.dot(store.value(u));
            pre += &store.value(b).row(0);
            pre.mapv_into(sigmoid)
        };
        let z = gate(self.wz, self.uz, self.bz);
        let r = gate(self.wr, self.ur, self.br);
        let mut cand = x.dot(store.value(self.wh)) + (&r * h).dot(store.value(self.uh));
        cand += &store.value(self.bh).row(0);
        cand.mapv_inplace(f64::tanh);

        let mut out = Array2::zeros(h.raw_dim());
        Zip::from(&mut out)
            .and(h)
            .and(&z)
            .and(&cand)
            .for_each(|o, &h, &z, &c| *o = (1.0 - z) * h + z * c);
        Ok((
            out,
            GruCache {
                x: x.clone(),
                h: h.clone(),
                z,
                r,
                cand,
            },
        ))
    }

    /// Returns `(dL/dh, dL/dx)` and accumulates parameter gradients.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &GruCache,
        dout: &Array2<f64>,
        grads: &mut Gradients,
    ) -> (Array2<f64>, Array2<f64>) {
        let GruCache { x, h, z, r, cand } = cache;

        let mut dh = dout * &z.mapv(|z| 1.0 - z);
        let mut dz_pre = Array2::zeros(h.raw_dim());
        Zip::from(&mut dz_pre)
            .and(dout)
            .and(cand)
            .and(h)
            .and(z)
            .for_each(|d, &g, &c, &h, &z| *d = g * (c - h) * z * (1.0 - z));
        let mut dc_pre = Array2::zeros(h.raw_dim());
        Zip::from(&mut dc_pre)
            .and(dout)
            .and(z)
            .and(cand)
            .for_each(|d, &g, &z, &c| *d = g * z * (1.0 - c * c));

        // candidate path
        let rh = r * h;
        grads.slot(self.wh).scaled_add(1.0, &x.t().dot(&dc_pre));
        grads.slot(self.uh).scaled_add(1.0, &rh.t().dot(&dc_pre));
        grads
            .slot(self.bh)
            .row_mut(0)
            .scaled_add(1.0, &dc_pre.sum_axis(Axis(0)));
        let mut dx = dc_pre.dot(&store.value(self.wh).t());
        let drh = dc_pre.dot(&store.value(self.uh).t());
        dh += &(&drh * r);
        let mut dr_pre = &drh * h;
        Zip::from(&mut dr_pre).and(r).for_each(|d, &r| *d *= r * (1.0 - r));

        for (pre, w, u, b) in [
            (&dz_pre, self.wz, self.uz, self.bz),
            (&dr_pre, self.wr, self.ur, self.br),
        ] {
            grads.slot(w).scaled_add(1.0, &x.t().dot(pre));
            grads.slot(u).scaled_add(1.0, &h.t().dot(pre));
            grads
                .slot(b)
                .row_mut(0)
                .scaled_add(1.0, &pre.sum_axis(Axis(0)));
            dx += &pre.dot(&store.value(w).t());
            dh += &pre.dot(&store.value(u).t());
        }
        (dh, dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (ParamStore, Gru, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gru = Gru::register(&mut store, "gru", GruSpec { input: 4, state: 3 }, &mut rng).unwrap();
        (store, gru, rng)
    }

    #[test]
    fn saturated_update_gate() {
        let (mut store, gru, mut rng) = setup(1);
        let h = glorot(2, 3, &mut rng);
        let x = glorot(2, 4, &mut rng);

        store.value_mut(gru.bz).fill(-1e3);
        let (out, _) = gru.forward(&store, &h, &x).unwrap();
        assert_eq!(out, h);

        store.value_mut(gru.bz).fill(1e3);
        let (out, cache) = gru.forward(&store, &h, &x).unwrap();
        assert_eq!(out, cache.cand);
    }

    #[test]
    fn rejects_bad_shapes() {
        let (store, gru, _) = setup(1);
        let res = gru.forward(&store, &Array2::zeros((2, 3)), &Array2::zeros((2, 5)));
        assert!(matches!(res, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut store, gru, mut rng) = setup(3);
        let h = glorot(3, 3, &mut rng) * 2.0;
        let x = glorot(3, 4, &mut rng) * 2.0;
        let weights = glorot(3, 3, &mut rng);
        let loss = |s: &ParamStore, h: &Array2<f64>, x: &Array2<f64>| {
            let (out, _) = gru.forward(s, h, x).unwrap();
            (&out * &weights).sum()
        };
        let (_, cache) = gru.forward(&store, &h, &x).unwrap();
        let mut grads = Gradients::for_store(&store);
        let (dh, dx) = gru.backward(&store, &cache, &weights, &mut grads);

        let report = grad_check(&mut store, &grads, |s| loss(s, &h, &x), &GradCheckConfig::default());
        assert!(report.passed, "{report:?}");

        let eps = 1e-4;
        let check = |analytic: &Array2<f64>, which: usize| {
            let base = if which == 0 { &h } else { &x };
            for idx in ndarray::indices(base.raw_dim()) {
                let mut p = base.clone();
                p[idx] += eps;
                let mut m = base.clone();
                m[idx] -= eps;
                let num = if which == 0 {
                    (loss(&store, &p, &x) - loss(&store, &m, &x)) / (2.0 * eps)
                } else {
                    (loss(&store, &h, &p) - loss(&store, &h, &m)) / (2.0 * eps)
                };
                let a = analytic[idx];
                let rel = (num - a).abs() / num.abs().max(a.abs()).max(1e-6);
                assert!(rel < 1e-4, "input {which} {idx:?}: {num} vs {a}");
            }
        };
        check(&dh, 0);
        check(&dx, 1);
    }
}
