//! Supervised downstream training on top of the feature extractor, the
//! station-wise masking augmentation, and the comparison baselines.

mod augment;
mod baselines;
mod model;
#[cfg(test)]
mod tests;

pub use augment::{random_erase, sma_augment, AugStrategy, AugmentConfig, AugmentKind};
pub use baselines::{
    dae_evaluation, reconstruction_weights, train_dae, train_ensemble, Dae, InpaintingPredictor, OutputEnsemble,
};
pub use model::{
    constant_baseline, constant_rmse_uniform, load_model, model_checkpoint, model_from_checkpoint, save_model, ModelManifest, train_downstream, train_naive, train_on_set, ConstantPredictor, NaiveVariant,
    Predictor, SensingModel, TrainMode, TrainingSet, HEAD_HIDDEN,
};
