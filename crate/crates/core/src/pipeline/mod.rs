//! From raw frame streams to labeled and unlabeled multi-station samples.
//!
//! Per frame: keep the data subcarriers, take magnitudes, normalize to unit
//! mean power. Per reference timestamp and station: average the frames inside
//! a centered window, or emit the missing placeholder when there are none.

mod dataset;
mod format;
mod preprocess;
mod window;

pub use dataset::{
    build_labeled_dataset, build_unlabeled_dataset, detect_missing, reference_grid, BuildStats, Dataset,
    DatasetMeta, LabeledSplits, Provenance, Split, SplitRatios,
};
pub use format::{export_csv, load_dataset, save_dataset, FORMAT_VERSION};
pub use preprocess::{
    default_keep_list, normalize_power, preprocess_stream, select_subcarriers, Normalized, PreprocessOrder,
    PreprocessedStream, Preprocessor, MIN_MEAN_POWER,
};
pub use window::{aggregate_window, WindowSpec};
