use super::loss::LossFn;
use super::params::Parameterized;
use super::stack::{MlpStack, Mode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Number of randomly chosen coordinates (all of them if fewer exist).
    pub n_coords: usize,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, n_coords: 200, abs_floor: 1e-6 }
    }
}

/// Loss, analytic flat gradient, and a hash of the piecewise-linear region
/// the evaluation landed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub kink_signature: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates where a central difference would straddle a ReLU or hinge
    /// kink and was therefore not compared.
    pub skipped_kinks: usize,
}

/// Compares analytic gradients against central differences on random
/// coordinates of `model`.
pub fn finite_diff_check<M: Parameterized + Clone>(
    model: &M,
    cfg: &GradCheckConfig,
    rng: &mut RandomStream,
    mut eval: impl FnMut(&M) -> Result<Evaluation>,
) -> Result<GradCheckReport> {
    let base = eval(model)?;
    let n = model.param_count();
    if base.grads.len() != n {
        return Err(Error::Shape(format!("evaluation returned {} gradients for {n} parameters", base.grads.len())));
    }
    if n == 0 {
        return Err(Error::Empty("model has no parameters".into()));
    }
    let mut coords: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut coords);
    coords.truncate(cfg.n_coords);
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped_kinks: 0 };
    for &c in &coords {
        let mut plus = model.clone();
        plus.nudge(c, cfg.step);
        let mut minus = model.clone();
        minus.nudge(c, -cfg.step);
        let (ep, em) = (eval(&plus)?, eval(&minus)?);
        if ep.kink_signature != base.kink_signature || em.kink_signature != base.kink_signature {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (ep.loss - em.loss) / (2.0 * cfg.step);
        let analytic = base.grads[c];
        let denom = analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
        report.max_rel_error = report.max_rel_error.max((analytic - numeric).abs() / denom);
        report.checked += 1;
    }
    Ok(report)
}

/// Deterministic evaluation of `loss(stack(x))`: dropout masks are drawn from
/// a stream rebuilt from `seed` on every call.
pub fn stack_loss_evaluation(stack: &MlpStack, loss: &dyn LossFn, x: &Matrix, mode: Mode, seed: u64) -> Result<Evaluation> {
    let mut rng = RandomStream::new(seed, "gradcheck");
    let (out, tape) = stack.forward(x, mode, &mut rng)?;
    let (value, grad_out) = loss.evaluate(&out)?;
    let (_, grads) = stack.backward(&tape, &grad_out)?;
    Ok(Evaluation { loss: value, grads: grads.flat(), kink_signature: tape.kink_signature() })
}
