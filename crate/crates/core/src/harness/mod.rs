//! Experiment orchestration: data assembly, method training, availability
//! sweeps, label-ratio sweeps, masking-rate grids and embedding exports.

mod analysis;
mod config;
mod data;
mod methods;
mod metrics;
mod sweep;

pub use data::{build_experiment_data, build_from_streams, simulate, DataConfig, ExperimentData, SizeCaps};
pub use methods::{
    pretrain_extractor, train_method, Method, MethodConfig, NaiveKind, PretrainCache, TrainInputs,
};
pub use metrics::{
    binomial, combinations, eval_at_availability, mask_rows, rmse, AvailabilityResult, CombinationPolicy,
    EXHAUSTIVE_LIMIT,
};
pub use analysis::{missingness_invariance, pca_export, pca_rows, write_pca_csv, Pca, PcaRow};
pub use sweep::{
    heatmap, label_count, label_ratio_subset, read_metrics_csv, run_grid, summarize, write_csv, HeatmapCell, MetricsRow,
    ModelCache, SummaryRow, SweepSpec,
};
pub use config::{file_digest, ExperimentConfig};
