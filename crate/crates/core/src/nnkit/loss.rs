use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A scalar loss of a network output together with its gradient.
pub trait LossFn {
    fn evaluate(&self, output: &Matrix) -> Result<(f64, Matrix)>;
}

/// Mean squared error over every output entry.
#[derive(Debug, Clone, Copy)]
pub struct Mse<'a> {
    target: &'a Matrix,
}

impl<'a> Mse<'a> {
    pub fn new(target: &'a Matrix) -> Self {
        Self { target }
    }
}

impl LossFn for Mse<'_> {
    fn evaluate(&self, output: &Matrix) -> Result<(f64, Matrix)> {
        if output.shape() != self.target.shape() {
            return Err(Error::Shape(format!("mse output {:?} vs target {:?}", output.shape(), self.target.shape())));
        }
        let count = output.as_slice().len();
        if count == 0 {
            return Err(Error::Empty("mse over an empty batch".into()));
        }
        let mut grad = output.clone();
        let mut sum = 0.0;
        for (g, t) in grad.as_mut_slice().iter_mut().zip(self.target.as_slice()) {
            let r = *g - t;
            sum += r * r;
            *g = 2.0 * r / count as f64;
        }
        Ok((sum / count as f64, grad))
    }
}

/// Squared error summed over entries where `weights` is non-zero, divided by
/// the number of such entries. With no selected entries the loss is zero.
#[derive(Debug, Clone, Copy)]
pub struct MaskedMse<'a> {
    target: &'a Matrix,
    weights: &'a Matrix,
}

impl<'a> MaskedMse<'a> {
    pub fn new(target: &'a Matrix, weights: &'a Matrix) -> Result<Self> {
        if target.shape() != weights.shape() {
            return Err(Error::Shape("masked mse target and mask shapes differ".into()));
        }
        Ok(Self { target, weights })
    }
}

impl LossFn for MaskedMse<'_> {
    fn evaluate(&self, output: &Matrix) -> Result<(f64, Matrix)> {
        if output.shape() != self.target.shape() {
            return Err(Error::Shape(format!("masked mse output {:?} vs target {:?}", output.shape(), self.target.shape())));
        }
        let selected = self.weights.as_slice().iter().filter(|&&w| w != 0.0).count();
        let mut grad = Matrix::zeros(output.rows(), output.cols());
        if selected == 0 {
            return Ok((0.0, grad));
        }
        let norm = selected as f64;
        let mut sum = 0.0;
        for (((g, o), t), w) in grad
            .as_mut_slice()
            .iter_mut()
            .zip(output.as_slice())
            .zip(self.target.as_slice())
            .zip(self.weights.as_slice())
        {
            if *w != 0.0 {
                let r = o - t;
                sum += r * r;
                *g = 2.0 * r / norm;
            }
        }
        Ok((sum / norm, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_value_and_gradient() {
        let t = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let o = Matrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let (v, g) = Mse::new(&t).evaluate(&o).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(g.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn masked_mse_ignores_unselected_entries() {
        let t = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![1.0, 0.0, 1.0]]).unwrap();
        let o = Matrix::from_rows(&[vec![2.0, 100.0, 3.0]]).unwrap();
        let (v, g) = MaskedMse::new(&t, &w).unwrap().evaluate(&o).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn masked_mse_with_empty_mask_is_zero() {
        let t = Matrix::zeros(2, 2);
        let w = Matrix::zeros(2, 2);
        let o = Matrix::from_fn(2, 2, |i, j| (i + j) as f64);
        let (v, g) = MaskedMse::new(&t, &w).unwrap().evaluate(&o).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }
}
