//! Synthetic multi-station CSI acquisition.
//!
//! A pedestrian walks back and forth in a room; one AP measures CSI from every
//! station's frames. Each station transmits at Poisson-distributed instants,
//! thinned by an exponential on/off outage process, so aggregation windows
//! are sometimes empty for a station.

mod channel;
mod io;
mod scenario;
mod streams;
mod trajectory;

pub use channel::{channel_response, channel_response_with, shadow_factor, static_paths, subcarrier_frequencies, StaticPath, SPEED_OF_LIGHT};
pub use io::{read_frames_csv, read_metadata, write_frames_csv, write_metadata, write_trajectory_csv, SimMetadata};
pub use scenario::{OutageSpec, Scenario, ShadowSpec};
pub use streams::{gen_csi_streams, outage_intervals, CsiStream};
pub use trajectory::{gen_trajectory, LabelSource, SampledLabels, Sinusoid, Trajectory};
