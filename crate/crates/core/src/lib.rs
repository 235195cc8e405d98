//! Multi-station WiFi CSI sensing that stays usable when stations drop out.
//!
//! The crate covers the whole experimental loop:
//!
//! * [`synth`] simulates asynchronous per-station CSI streams with outages,
//! * [`pipeline`] turns frame streams into windowed multi-station samples,
//! * [`nnkit`] is a small dense-network toolkit with exact backpropagation,
//! * [`crossl`] pre-trains a feature extractor with two masked embedding views
//!   and a variance/invariance/covariance objective,
//! * [`downstream`] trains regression heads with station-wise masking
//!   augmentation, plus the comparison baselines,
//! * [`harness`] runs availability and label-ratio sweeps and exports metrics.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.
//! Results are identical in both modes.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossl;
pub mod downstream;
pub mod error;
pub mod harness;
pub mod masking;
pub mod matrix;
pub mod nnkit;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use masking::{apply_embedding_mask, apply_input_mask, sample_mask_set};
pub use matrix::Matrix;
pub use rng::RandomStream;
pub use types::{
    AmplitudeVector, CsiFrame, EmbeddingBatch, LabeledSample, MaskSet, MultiStationSample,
    StationId, StationSample,
};
