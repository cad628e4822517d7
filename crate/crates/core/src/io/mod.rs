//! Dataset format, synthetic scenes and exports.

mod dataset;
pub mod export;
mod simulate;

pub use dataset::{
    format_dataset, load_dataset, parse_dataset, save_dataset, DatasetMeta, FlowMeasurement, Keyframe, KeyframeDataset,
    PixelSample, HEADER,
};
pub use simulate::{default_intrinsics, registered, simulate_scenario, GroundTruth, ScenarioSpec, TrajectoryKind};
