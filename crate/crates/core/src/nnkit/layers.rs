use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::RandomStream;

pub const BN_MOMENTUM: f64 = 0.99;
/// Variance floor added before the square root.
pub const BN_EPS: f64 = 1e-5;

/// `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Fan-in scaled uniform weights (`U(-sqrt(6/in), sqrt(6/in))`), zero bias.
    pub fn init(input: usize, output: usize, rng: &mut RandomStream) -> Self {
        let limit = (6.0 / input.max(1) as f64).sqrt();
        let weight = Matrix::from_fn(input, output, |_, _| rng.uniform_range(-limit, limit));
        Self { weight, bias: vec![0.0; output] }
    }

    pub fn input_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Relu,
    BatchNorm(BatchNorm),
    Dropout { rate: f64 },
}

/// Compact description of a layer, used in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Relu,
    BatchNorm { width: usize },
    Dropout { rate: f64 },
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense { input: d.input_width(), output: d.output_width() },
            Layer::Relu => LayerSpec::Relu,
            Layer::BatchNorm(b) => LayerSpec::BatchNorm { width: b.width() },
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
        }
    }
}
