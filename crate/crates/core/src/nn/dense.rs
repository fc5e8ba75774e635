use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::sigmoid;
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ReLU => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Affine layer `y = x W + b` over row vectors.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

/// Glorot-uniform weight matrix.
pub fn glorot(rows: usize, cols: usize, rng: &mut (impl Rng + ?Sized)) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl Dense {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Dense {
        let w = store.add(format!("{name}.weight"), glorot(input, output, rng));
        let b = store.add(format!("{name}.bias"), Array2::zeros((1, output)));
        Dense {
            w,
            b,
            input,
            output,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input {
            return Err(Error::ShapeMismatch {
                context: "dense input",
                expected: format!("{} columns", self.input),
                found: format!("{} columns", x.ncols()),
            });
        }
        let mut y = x.dot(store.value(self.w));
        y += &store.value(self.b).row(0);
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        dy: &Array2<f64>,
        grads: &mut Gradients,
    ) -> Array2<f64> {
        grads.slot(self.w).scaled_add(1.0, &x.t().dot(dy));
        grads
            .slot(self.b)
            .row_mut(0)
            .scaled_add(1.0, &dy.sum_axis(Axis(0)));
        dy.dot(&store.value(self.w).t())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub output: usize,
    pub hidden: Vec<usize>,
    /// Applied after every hidden layer; the output layer is linear.
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

/// Inputs and pre-activations of every layer, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        spec: MlpSpec,
        rng: &mut impl Rng,
    ) -> Result<Mlp> {
        if spec.input == 0 || spec.output == 0 || spec.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "MLP `{name}` dimensions must be positive"
            )));
        }
        let mut dims = vec![spec.input];
        dims.extend(&spec.hidden);
        dims.push(spec.output);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::register(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Ok(Mlp { spec, layers })
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Identity
        } else {
            self.spec.activation
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(store, &cur)?;
            let act = self.activation_of(i);
            let out = pre.mapv(|v| act.apply(v));
            cache.inputs.push(cur);
            cache.pre.push(pre);
            cache.outputs.push(out.clone());
            cur = out;
        }
        Ok((cur, cache))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &MlpCache,
        dy: &Array2<f64>,
        grads: &mut Gradients,
    ) -> Array2<f64> {
        let mut d = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = self.activation_of(i);
            if act != Activation::Identity {
                ndarray::Zip::from(&mut d)
                    .and(&cache.pre[i])
                    .and(&cache.outputs[i])
                    .for_each(|d, &x, &y| *d *= act.derivative(x, y));
            }
            d = layer.backward(store, &cache.inputs[i], &d, grads);
        }
        d
    }

    pub fn forward_vec(&self, store: &ParamStore, x: &Array1<f64>) -> Result<Array1<f64>> {
        let row = x.clone().insert_axis(Axis(0));
        Ok(self.forward(store, &row)?.0.row(0).to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckConfig};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let spec = MlpSpec {
            input: 3,
            output: 2,
            hidden: vec![],
            activation: Activation::Identity,
        };
        let mlp = Mlp::register(&mut store, "m", spec, &mut rng).unwrap();
        store.value_mut(mlp.layers[0].w).fill(0.0);
        let y = mlp.forward_vec(&store, &array![1.0, -2.0, 5.0]).unwrap();
        assert_eq!(y, array![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let spec = MlpSpec {
            input: 3,
            output: 3,
            hidden: vec![],
            activation: Activation::ReLU,
        };
        let mlp = Mlp::register(&mut store, "m", spec, &mut rng).unwrap();
        *store.value_mut(mlp.layers[0].w) = Array2::eye(3);
        let x = array![0.25, -1.5, 3.0];
        assert_eq!(mlp.forward_vec(&store, &x).unwrap(), x);
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let spec = MlpSpec {
            input: 3,
            output: 3,
            hidden: vec![2],
            activation: Activation::ReLU,
        };
        let mlp = Mlp::register(&mut store, "m", spec, &mut rng).unwrap();
        assert!(matches!(
            mlp.forward(&store, &Array2::zeros((1, 4))),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        for activation in [Activation::ReLU, Activation::Tanh, Activation::Sigmoid] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut store = ParamStore::new();
            let spec = MlpSpec {
                input: 3,
                output: 2,
                hidden: vec![4],
                activation,
            };
            let mlp = Mlp::register(&mut store, "m", spec, &mut rng).unwrap();
            let x = glorot(5, 3, &mut rng) * 3.0;
            let target = glorot(5, 2, &mut rng);
            let loss = |s: &ParamStore, x: &Array2<f64>| {
                let (y, _) = mlp.forward(s, x).unwrap();
                (&y - &target).mapv(|v| v * v).sum()
            };
            let (y, cache) = mlp.forward(&store, &x).unwrap();
            let dy = (&y - &target) * 2.0;
            let mut grads = Gradients::for_store(&store);
            let dx = mlp.backward(&store, &cache, &dy, &mut grads);

            let report = grad_check(
                &mut store,
                &grads,
                |s| loss(s, &x),
                &GradCheckConfig::default(),
            );
            assert!(report.passed, "{activation:?}: {report:?}");

            // input Jacobian via central differences
            let eps = 1e-4;
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    let mut xp = x.clone();
                    xp[[i, j]] += eps;
                    let mut xm = x.clone();
                    xm[[i, j]] -= eps;
                    let num = (loss(&store, &xp) - loss(&store, &xm)) / (2.0 * eps);
                    let rel = (num - dx[[i, j]]).abs() / num.abs().max(dx[[i, j]].abs()).max(1e-6);
                    assert!(rel < 1e-4, "{activation:?} dx[{i},{j}]: {num} vs {}", dx[[i, j]]);
                }
            }
        }
    }
}
