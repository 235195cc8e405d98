//! Self-supervised pre-training of the multi-station feature extractor with
//! two independently masked embedding views and a VICReg objective.

mod extractor;
mod pretrain;
mod vicreg;

pub use extractor::{sample_row, EncoderKind, ExtractorSpec, ExtractorTape, FeatureExtractor, StationEmbeddings};
pub use pretrain::{
    encoder_kind_name, extractor_checkpoint, extractor_from_checkpoint, load_extractor, pretrain, save_extractor,
    vicreg_evaluation, ExtractorManifest,
};
pub use vicreg::{
    vicreg_covariance, vicreg_invariance, vicreg_loss, vicreg_loss_with_grad, vicreg_variance, VicregEval, VicregTerms,
    VicregWeights,
};
