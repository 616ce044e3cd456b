use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;

/// Negative-side slope of every leaky ReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Identity,
}

/// Fully connected layer `y = act(x Wᵀ + b)` with `W` stored out×in.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..limit));
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Array2::zeros((1, fan_out)));
        Self {
            weight,
            bias,
            activation,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        let h = g.matmul_t(x, w)?;
        let h = g.add_row(h, b)?;
        match self.activation {
            Activation::LeakyRelu => g.leaky_relu(h, LEAKY_SLOPE),
            Activation::Tanh => g.tanh(h),
            Activation::Identity => Ok(h),
        }
    }
}

/// Stack of dense layers; the last layer is linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `hidden` lists (width, activation) per hidden layer.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: &[(usize, Activation)],
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for (i, &(width, act)) in hidden.iter().enumerate() {
            layers.push(DenseLayer::new(store, &format!("{name}.{i}"), fan_in, width, act, rng));
            fan_in = width;
        }
        layers.push(DenseLayer::new(
            store,
            &format!("{name}.out"),
            fan_in,
            output,
            Activation::Identity,
            rng,
        ));
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.layers.iter().try_fold(x, |h, layer| layer.forward(g, h))
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = DenseLayer::new(&mut store, "l", 10, 6, Activation::Tanh, &mut rng);
        let limit = (6.0f64 / 16.0).sqrt();
        assert_eq!(store.value(layer.weight).dim(), (6, 10));
        assert!(store.value(layer.weight).iter().all(|w| w.abs() <= limit));
        assert!(store.value(layer.bias).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn mlp_output_shape() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::new(
            &mut store,
            "m",
            5,
            &[(7, Activation::LeakyRelu), (4, Activation::Tanh)],
            3,
            &mut rng,
        );
        let mut g = Graph::new(&store);
        let x = g.input(Array2::ones((9, 5))).unwrap();
        let y = mlp.forward(&mut g, x).unwrap();
        assert_eq!(g.shape(y), (9, 3));
        assert_eq!(mlp.output_dim(), 3);
    }
}
