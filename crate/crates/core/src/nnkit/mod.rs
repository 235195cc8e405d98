//! A small dense-network toolkit: layers with hand-written backward passes,
//! losses, Adam, an early-stopping training loop, a finite-difference
//! gradient checker and a binary checkpoint format.
//!
//! All arithmetic is `f64`. Forward passes never mutate a stack; train-mode
//! batch-norm statistics are returned in the [`Tape`] and folded into the
//! running averages by [`MlpStack::commit_batch_stats`], so one set of
//! parameters can be run on several views before any state changes.

mod adam;
mod checkpoint;
mod fit;
mod gradcheck;
mod layers;
mod loss;
mod params;
mod stack;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use fit::{fit, FitReport, TrainConfig};
pub use gradcheck::{finite_diff_check, stack_loss_evaluation, Evaluation, GradCheckConfig, GradCheckReport};
pub use layers::{BatchNorm, Dense, Layer, LayerSpec, BN_EPS, BN_MOMENTUM};
pub use loss::{MaskedMse, Mse, LossFn};
pub use params::{Grads, Parameterized};
pub use stack::{loss_and_grads, MlpStack, Mode, Tape};
