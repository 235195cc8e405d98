use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::EmbeddingBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VicregWeights {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for VicregWeights {
    fn default() -> Self {
        Self::office()
    }
}

impl VicregWeights {
    pub fn office() -> Self {
        Self { lambda: 5.4, mu: 34.0, nu: 1.4e-2, gamma: 1.0, epsilon: 1e-4 }
    }

    /// Equal invariance and variance weights with a unit covariance weight.
    pub fn standard() -> Self {
        Self { lambda: 25.0, mu: 25.0, nu: 1.0, gamma: 1.0, epsilon: 1e-4 }
    }

    pub fn factory() -> Self {
        Self { lambda: 69.0, mu: 1.2e-2, nu: 7.4e-3, gamma: 1.0, epsilon: 1e-4 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu), ("nu", self.nu), ("gamma", self.gamma), ("epsilon", self.epsilon)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("vicreg {name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// The three loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VicregTerms {
    pub variance: f64,
    pub invariance: f64,
    pub covariance: f64,
    pub total: f64,
}

fn centered(z: &Matrix) -> Matrix {
    let mean = z.column_means();
    let mut c = z.clone();
    for i in 0..c.rows() {
        c.row_mut(i).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    c
}

/// Unbiased column variances of a centered matrix.
fn column_vars(zc: &Matrix) -> Vec<f64> {
    let denom = (zc.rows() - 1) as f64;
    let mut var = vec![0.0; zc.cols()];
    for i in 0..zc.rows() {
        zc.row(i).iter().zip(var.iter_mut()).for_each(|(v, acc)| *acc += v * v);
    }
    var.iter_mut().for_each(|v| *v /= denom);
    var
}

/// Value, gradient and hinge activity pattern of the variance term.
fn variance_with_grad(z: &Matrix, gamma: f64, eps: f64) -> (f64, Matrix, Vec<bool>) {
    let (n, l) = z.shape();
    let zc = centered(z);
    let std: Vec<f64> = column_vars(&zc).iter().map(|v| (v + eps).sqrt()).collect();
    let active: Vec<bool> = std.iter().map(|&s| gamma - s > 0.0).collect();
    let value = std.iter().map(|&s| (gamma - s).max(0.0)).sum::<f64>() / l as f64;
    let mut grad = Matrix::zeros(n, l);
    for i in 0..n {
        for j in 0..l {
            if active[j] {
                grad.set(i, j, -zc.get(i, j) / (l as f64 * (n - 1) as f64 * std[j]));
            }
        }
    }
    (value, grad, active)
}

fn covariance_with_grad(z: &Matrix) -> (f64, Matrix) {
    let (n, l) = z.shape();
    let zc = centered(z);
    let mut c = zc.t_matmul(&zc).expect("square product");
    c.scale(1.0 / (n - 1) as f64);
    for j in 0..l {
        c.set(j, j, 0.0);
    }
    let value = c.frobenius_sq() / l as f64;
    let mut grad = zc.matmul(&c).expect("conformable");
    grad.scale(4.0 / (l as f64 * (n - 1) as f64));
    (value, grad)
}

fn check_pair(z: &EmbeddingBatch, z2: &EmbeddingBatch) -> Result<()> {
    if z.matrix().shape() != z2.matrix().shape() {
        return Err(Error::Shape(format!("view shapes differ: {:?} vs {:?}", z.matrix().shape(), z2.matrix().shape())));
    }
    Ok(())
}

pub fn vicreg_variance(z: &EmbeddingBatch, gamma: f64, epsilon: f64) -> f64 {
    variance_with_grad(z.matrix(), gamma, epsilon).0
}

pub fn vicreg_invariance(z: &EmbeddingBatch, z2: &EmbeddingBatch) -> Result<f64> {
    check_pair(z, z2)?;
    let sq: f64 = z.matrix().as_slice().iter().zip(z2.matrix().as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / z.n() as f64)
}

pub fn vicreg_covariance(z: &EmbeddingBatch) -> f64 {
    covariance_with_grad(z.matrix()).0
}

pub fn vicreg_loss(z: &EmbeddingBatch, z2: &EmbeddingBatch, w: &VicregWeights) -> Result<VicregTerms> {
    Ok(vicreg_loss_with_grad(z, z2, w)?.terms)
}

/// Loss, gradients with respect to both views, and the variance-hinge
/// activity pattern (for kink-aware gradient checking).
#[derive(Debug, Clone)]
pub struct VicregEval {
    pub terms: VicregTerms,
    pub grad_z: Matrix,
    pub grad_z2: Matrix,
    pub hinge_active: Vec<bool>,
}

pub fn vicreg_loss_with_grad(z: &EmbeddingBatch, z2: &EmbeddingBatch, w: &VicregWeights) -> Result<VicregEval> {
    check_pair(z, z2)?;
    w.validate()?;
    let (a, b) = (z.matrix(), z2.matrix());
    let n = a.rows() as f64;
    let (v1, gv1, act1) = variance_with_grad(a, w.gamma, w.epsilon);
    let (v2, gv2, act2) = variance_with_grad(b, w.gamma, w.epsilon);
    let (c1, gc1) = covariance_with_grad(a);
    let (c2, gc2) = covariance_with_grad(b);
    let s = vicreg_invariance(z, z2)?;

    let mut grad_z = Matrix::zeros(a.rows(), a.cols());
    let mut grad_z2 = Matrix::zeros(a.rows(), a.cols());
    let parts = grad_z.as_mut_slice().iter_mut().zip(grad_z2.as_mut_slice());
    for (idx, (g1, g2)) in parts.enumerate() {
        let diff = 2.0 * (a.as_slice()[idx] - b.as_slice()[idx]) / n;
        *g1 = w.lambda * gv1.as_slice()[idx] + w.mu * diff + w.nu * gc1.as_slice()[idx];
        *g2 = w.lambda * gv2.as_slice()[idx] - w.mu * diff + w.nu * gc2.as_slice()[idx];
    }
    let total = w.lambda * (v1 + v2) + w.mu * s + w.nu * (c1 + c2);
    let mut hinge_active = act1;
    hinge_active.extend(act2);
    Ok(VicregEval {
        terms: VicregTerms { variance: v1 + v2, invariance: s, covariance: c1 + c2, total },
        grad_z,
        grad_z2,
        hinge_active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[Vec<f64>]) -> EmbeddingBatch {
        EmbeddingBatch::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn variance_examples() {
        let unit = batch(&[vec![1.0], vec![-1.0], vec![0.0]]);
        assert_eq!(vicreg_variance(&unit, 1.0, 1e-4), 0.0);
        let same = batch(&[vec![3.0, 1.0], vec![3.0, 1.0]]);
        assert!((vicreg_variance(&same, 1.0, 1e-4) - 0.99).abs() < 1e-15);
        // Unbiased variance of {0, 2} is 2, so the hinge is inactive.
        assert_eq!(vicreg_variance(&batch(&[vec![0.0], vec![2.0]]), 1.0, 1e-4), 0.0);
    }

    #[test]
    fn invariance_examples() {
        let z = batch(&[vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert_eq!(vicreg_invariance(&z, &z).unwrap(), 0.0);
        let a = batch(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let b = batch(&[vec![0.0, 1.0], vec![-1.0, 1.0]]);
        assert_eq!(vicreg_invariance(&a, &b).unwrap(), 2.0);
        assert!(vicreg_invariance(&a, &batch(&[vec![0.0], vec![1.0]])).is_err());
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(vicreg_covariance(&batch(&[vec![1.0], vec![5.0], vec![2.0]])), 0.0);
        assert_eq!(vicreg_covariance(&batch(&[vec![1.0, 1.0], vec![-1.0, -1.0]])), 4.0);
        assert_eq!(vicreg_covariance(&batch(&[vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]])), 0.0);
    }

    #[test]
    fn loss_vanishes_on_whitened_identical_views() {
        let z = batch(&[vec![1.2, 1.2], vec![-1.2, 1.2], vec![1.2, -1.2], vec![-1.2, -1.2]]);
        let t = vicreg_loss(&z, &z, &VicregWeights::office()).unwrap();
        assert!(t.total.abs() < 1e-30, "{t:?}");
    }

    #[test]
    fn one_row_batches_rejected() {
        assert!(EmbeddingBatch::new(Matrix::zeros(1, 3)).is_err());
    }
}
