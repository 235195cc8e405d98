use super::layers::{BatchNorm, Dense, Layer};
use super::loss::LossFn;
use super::params::{Grads, Parameterized};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RandomStream;

/// Train mode normalizes with batch statistics and applies dropout; inference
/// mode uses running statistics and skips dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone)]
enum Cache {
    Dense { input: Matrix },
    Relu { active: Vec<bool> },
    BatchNorm { x_hat: Matrix, inv_std: Vec<f64>, batch_stats: Option<(Vec<f64>, Vec<f64>)> },
    Dropout { scale: Option<Vec<f64>> },
}

/// Per-layer intermediates recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    caches: Vec<Cache>,
}

impl Tape {
    /// Hash of every ReLU on/off pattern in the pass. Two parameter settings
    /// with equal signatures lie in the same linear region.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in &self.caches {
            if let Cache::Relu { active } = c {
                for &a in active {
                    h ^= u64::from(a);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
                h = h.rotate_left(7);
            }
        }
        h
    }
}

/// A feed-forward stack of dense, ReLU, batch-norm and dropout layers.
/// An empty stack is the identity map.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpStack {
    input_width: usize,
    layers: Vec<Layer>,
}

impl MlpStack {
    pub fn new(input_width: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut width = input_width;
        for (i, l) in layers.iter().enumerate() {
            match l {
                Layer::Dense(d) => {
                    if d.input_width() != width || d.bias.len() != d.output_width() {
                        return Err(Error::Shape(format!("layer {i}: dense expects {} inputs, got {width}", d.input_width())));
                    }
                    width = d.output_width();
                }
                Layer::BatchNorm(b) => {
                    if b.width() != width {
                        return Err(Error::Shape(format!("layer {i}: batch norm width {} vs {width}", b.width())));
                    }
                }
                Layer::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
                    }
                }
                Layer::Relu => {}
            }
        }
        Ok(Self { input_width, layers })
    }

    pub fn identity(width: usize) -> Self {
        Self { input_width: width, layers: Vec::new() }
    }

    /// Repeated `dense -> ReLU -> batch norm -> dropout` blocks.
    pub fn blocks(input_width: usize, widths: &[usize], dropout: f64, rng: &mut RandomStream) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len() * 4);
        let mut w = input_width;
        for &out in widths {
            layers.push(Layer::Dense(Dense::init(w, out, rng)));
            layers.push(Layer::Relu);
            layers.push(Layer::BatchNorm(BatchNorm::new(out)));
            layers.push(Layer::Dropout { rate: dropout });
            w = out;
        }
        Self::new(input_width, layers)
    }

    /// `dense -> ReLU -> dense`.
    pub fn mlp_head(input_width: usize, hidden: usize, output: usize, rng: &mut RandomStream) -> Result<Self> {
        Self::new(
            input_width,
            vec![
                Layer::Dense(Dense::init(input_width, hidden, rng)),
                Layer::Relu,
                Layer::Dense(Dense::init(hidden, output, rng)),
            ],
        )
    }

    pub fn linear(input_width: usize, output: usize, rng: &mut RandomStream) -> Result<Self> {
        Self::new(input_width, vec![Layer::Dense(Dense::init(input_width, output, rng))])
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.output_width()),
                _ => None,
            })
            .unwrap_or(self.input_width)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dropout_rate(&self) -> Option<f64> {
        self.layers.iter().find_map(|l| match l {
            Layer::Dropout { rate } => Some(*rate),
            _ => None,
        })
    }

    pub fn forward(&self, x: &Matrix, mode: Mode, rng: &mut RandomStream) -> Result<(Matrix, Tape)> {
        if x.cols() != self.input_width {
            return Err(Error::Shape(format!("stack expects {} columns, got {}", self.input_width, x.cols())));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (out, cache) = forward_layer(layer, h, mode, rng)?;
            caches.push(cache);
            h = out;
        }
        Ok((h, Tape { caches }))
    }

    /// Inference-mode forward without recording a tape.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width {
            return Err(Error::Shape(format!("stack expects {} columns, got {}", self.input_width, x.cols())));
        }
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => {
                    let mut y = h.matmul(&d.weight)?;
                    y.add_row_vector(&d.bias);
                    y
                }
                Layer::Relu => h.map(|v| v.max(0.0)),
                Layer::BatchNorm(b) => {
                    let mut y = h;
                    let scale: Vec<f64> = (0..b.width()).map(|j| b.gamma[j] / (b.running_var[j] + b.eps).sqrt()).collect();
                    for i in 0..y.rows() {
                        for (j, v) in y.row_mut(i).iter_mut().enumerate() {
                            *v = (*v - b.running_mean[j]) * scale[j] + b.beta[j];
                        }
                    }
                    y
                }
                Layer::Dropout { .. } => h,
            };
        }
        Ok(h)
    }

    /// Folds train-mode batch statistics from `tape` into the running
    /// averages.
    pub fn commit_batch_stats(&mut self, tape: &Tape) {
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches) {
            if let (Layer::BatchNorm(b), Cache::BatchNorm { batch_stats: Some((mean, var)), .. }) = (layer, cache) {
                for j in 0..b.width() {
                    b.running_mean[j] = b.momentum * b.running_mean[j] + (1.0 - b.momentum) * mean[j];
                    b.running_var[j] = b.momentum * b.running_var[j] + (1.0 - b.momentum) * var[j];
                }
            }
        }
    }

    /// Reverse pass: gradient w.r.t. the input and the parameter gradients.
    pub fn backward(&self, tape: &Tape, grad_out: &Matrix) -> Result<(Matrix, Grads)> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::Shape("tape does not belong to this stack".into()));
        }
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            g = match (layer, cache) {
                (Layer::Dense(d), Cache::Dense { input }) => {
                    let dw = input.t_matmul(&g)?;
                    let db = g.column_sums();
                    let dx = g.matmul_t(&d.weight)?;
                    grads_rev.push(db);
                    grads_rev.push(dw.into_vec());
                    dx
                }
                (Layer::Relu, Cache::Relu { active }) => {
                    let mut dx = g;
                    dx.as_mut_slice().iter_mut().zip(active).for_each(|(v, &a)| {
                        if !a {
                            *v = 0.0;
                        }
                    });
                    dx
                }
                (Layer::BatchNorm(b), Cache::BatchNorm { x_hat, inv_std, batch_stats }) => {
                    let (n, w) = g.shape();
                    let mut dgamma = vec![0.0; w];
                    let mut dbeta = vec![0.0; w];
                    for i in 0..n {
                        for j in 0..w {
                            dgamma[j] += g.get(i, j) * x_hat.get(i, j);
                            dbeta[j] += g.get(i, j);
                        }
                    }
                    let mut dx = Matrix::zeros(n, w);
                    if batch_stats.is_some() {
                        // d x_hat = g * gamma; dx = inv_std / n * (n dxh - sum dxh - x_hat sum(dxh x_hat))
                        let nf = n as f64;
                        for j in 0..w {
                            let sum_dxh = dbeta[j] * b.gamma[j];
                            let sum_dxh_xh = dgamma[j] * b.gamma[j];
                            for i in 0..n {
                                let dxh = g.get(i, j) * b.gamma[j];
                                let v = inv_std[j] / nf * (nf * dxh - sum_dxh - x_hat.get(i, j) * sum_dxh_xh);
                                dx.set(i, j, v);
                            }
                        }
                    } else {
                        for i in 0..n {
                            for (j, (gm, is)) in b.gamma.iter().zip(inv_std.iter()).enumerate() {
                                dx.set(i, j, g.get(i, j) * gm * is);
                            }
                        }
                    }
                    grads_rev.push(dbeta);
                    grads_rev.push(dgamma);
                    dx
                }
                (Layer::Dropout { .. }, Cache::Dropout { scale }) => {
                    let mut dx = g;
                    if let Some(s) = scale {
                        dx.as_mut_slice().iter_mut().zip(s).for_each(|(v, m)| *v *= m);
                    }
                    dx
                }
                _ => return Err(Error::Shape("tape layer kinds do not match the stack".into())),
            };
        }
        grads_rev.reverse();
        Ok((g, Grads(grads_rev)))
    }
}

fn forward_layer(layer: &Layer, h: Matrix, mode: Mode, rng: &mut RandomStream) -> Result<(Matrix, Cache)> {
    Ok(match layer {
        Layer::Dense(d) => {
            let mut y = h.matmul(&d.weight)?;
            y.add_row_vector(&d.bias);
            (y, Cache::Dense { input: h })
        }
        Layer::Relu => {
            let active: Vec<bool> = h.as_slice().iter().map(|&v| v > 0.0).collect();
            (h.map(|v| v.max(0.0)), Cache::Relu { active })
        }
        Layer::BatchNorm(b) => {
            let (n, w) = h.shape();
            let (mean, var, batch_stats) = match mode {
                Mode::Train => {
                    if n == 0 {
                        return Err(Error::Empty("batch norm on an empty batch".into()));
                    }
                    let mean = h.column_means();
                    let mut var = vec![0.0; w];
                    for i in 0..n {
                        for (j, v) in h.row(i).iter().enumerate() {
                            var[j] += (v - mean[j]).powi(2);
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= n as f64);
                    (mean.clone(), var.clone(), Some((mean, var)))
                }
                Mode::Inference => (b.running_mean.clone(), b.running_var.clone(), None),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + b.eps).sqrt()).collect();
            let mut x_hat = h;
            for i in 0..n {
                for (j, v) in x_hat.row_mut(i).iter_mut().enumerate() {
                    *v = (*v - mean[j]) * inv_std[j];
                }
            }
            let mut y = x_hat.clone();
            for i in 0..n {
                for (j, v) in y.row_mut(i).iter_mut().enumerate() {
                    *v = *v * b.gamma[j] + b.beta[j];
                }
            }
            (y, Cache::BatchNorm { x_hat, inv_std, batch_stats })
        }
        Layer::Dropout { rate } => {
            if mode == Mode::Train && *rate > 0.0 {
                let keep = 1.0 - rate;
                let scale: Vec<f64> =
                    (0..h.as_slice().len()).map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 }).collect();
                let mut y = h;
                y.as_mut_slice().iter_mut().zip(&scale).for_each(|(v, s)| *v *= s);
                (y, Cache::Dropout { scale: Some(scale) })
            } else {
                (h, Cache::Dropout { scale: None })
            }
        }
    })
}

impl Parameterized for MlpStack {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        for l in &self.layers {
            match l {
                Layer::Dense(d) => {
                    f(d.weight.as_slice());
                    f(&d.bias);
                }
                Layer::BatchNorm(b) => {
                    f(&b.gamma);
                    f(&b.beta);
                }
                Layer::Relu | Layer::Dropout { .. } => {}
            }
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            match l {
                Layer::Dense(d) => {
                    f(d.weight.as_mut_slice());
                    f(&mut d.bias);
                }
                Layer::BatchNorm(b) => {
                    f(&mut b.gamma);
                    f(&mut b.beta);
                }
                Layer::Relu | Layer::Dropout { .. } => {}
            }
        }
    }
}

/// Forward, loss and reverse pass in one call. Train-mode batch statistics
/// are not committed.
pub fn loss_and_grads(
    stack: &MlpStack,
    loss: &dyn LossFn,
    batch: &Matrix,
    mode: Mode,
    rng: &mut RandomStream,
) -> Result<(f64, Grads)> {
    let (out, tape) = stack.forward(batch, mode, rng)?;
    let (value, grad_out) = loss.evaluate(&out)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {value}")));
    }
    let (_, grads) = stack.backward(&tape, &grad_out)?;
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::Mse;

    fn rng() -> RandomStream {
        RandomStream::new(0, "test")
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let d = Dense { weight: Matrix::identity(3), bias: vec![0.0; 3] };
        let s = MlpStack::new(3, vec![Layer::Dense(d)]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(s.forward(&x, Mode::Train, &mut rng()).unwrap().0, x);
        assert_eq!(s.infer(&x).unwrap(), x);
    }

    #[test]
    fn relu_clamps_negatives() {
        let s = MlpStack::new(2, vec![Layer::Relu]).unwrap();
        let x = Matrix::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        assert_eq!(s.infer(&x).unwrap().as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn zero_dropout_train_equals_inference_with_frozen_bn() {
        let mut r = rng();
        let s = MlpStack::new(
            4,
            vec![Layer::Dense(Dense::init(4, 5, &mut r)), Layer::Relu, Layer::Dropout { rate: 0.0 }],
        )
        .unwrap();
        let x = Matrix::from_fn(6, 4, |i, j| (i as f64 - j as f64) * 0.3);
        assert_eq!(s.forward(&x, Mode::Train, &mut r).unwrap().0, s.infer(&x).unwrap());
    }

    #[test]
    fn inference_is_bitwise_repeatable() {
        let mut r = rng();
        let s = MlpStack::blocks(6, &[8, 4], 0.3, &mut r).unwrap();
        let x = Matrix::from_fn(5, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let a = s.infer(&x).unwrap();
        let b = s.forward(&x, Mode::Inference, &mut r).unwrap().0;
        assert_eq!(a, s.infer(&x).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn linear_mse_gradient_matches_closed_form() {
        let mut r = rng();
        let s = MlpStack::linear(3, 1, &mut r).unwrap();
        let x = Matrix::from_fn(10, 3, |i, j| ((i * 5 + j * 11) % 7) as f64 / 3.0 - 1.0);
        let y = Matrix::from_fn(10, 1, |i, _| (i as f64 * 0.37).sin());
        let (_, grads) = loss_and_grads(&s, &Mse::new(&y), &x, Mode::Train, &mut r).unwrap();
        let Layer::Dense(d) = &s.layers()[0] else { unreachable!() };
        let mut pred = x.matmul(&d.weight).unwrap();
        pred.add_row_vector(&d.bias);
        let mut resid = pred.clone();
        resid.as_mut_slice().iter_mut().zip(y.as_slice()).for_each(|(p, t)| *p -= t);
        let mut expected = x.t_matmul(&resid).unwrap();
        expected.scale(2.0 / 10.0);
        for (a, b) in grads.0[0].iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_input_kills_downstream_weight_gradients() {
        let mut r = rng();
        let s = MlpStack::new(
            3,
            vec![
                Layer::Dense(Dense::init(3, 4, &mut r)),
                Layer::Relu,
                Layer::Dense(Dense::init(4, 1, &mut r)),
            ],
        )
        .unwrap();
        let x = Matrix::zeros(5, 3);
        let y = Matrix::from_fn(5, 1, |i, _| i as f64);
        let (_, g) = loss_and_grads(&s, &Mse::new(&y), &x, Mode::Train, &mut r).unwrap();
        assert!(g.0[0].iter().all(|&v| v == 0.0));
        assert!(g.0[2].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = MlpStack::identity(3);
        assert!(s.forward(&Matrix::zeros(2, 4), Mode::Train, &mut rng()).is_err());
        assert!(MlpStack::new(3, vec![Layer::BatchNorm(BatchNorm::new(4))]).is_err());
        assert!(MlpStack::new(3, vec![Layer::Dropout { rate: 1.0 }]).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut r = rng();
        let s = MlpStack::new(1, vec![Layer::Dropout { rate: 0.3 }]).unwrap();
        let x = Matrix::from_fn(10_000, 1, |_, _| 2.0);
        let (y, _) = s.forward(&x, Mode::Train, &mut r).unwrap();
        let mean = y.as_slice().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "mean {mean}");
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut s = MlpStack::new(1, vec![Layer::BatchNorm(BatchNorm::new(1))]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let (_, tape) = s.forward(&x, Mode::Train, &mut rng()).unwrap();
        s.commit_batch_stats(&tape);
        let Layer::BatchNorm(b) = &s.layers()[0] else { unreachable!() };
        assert!((b.running_mean[0] - 0.02).abs() < 1e-15);
        assert!((b.running_var[0] - (0.99 + 0.01)).abs() < 1e-15);
    }
}
