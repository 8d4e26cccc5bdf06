//! Lane-detection benchmarks: TuSimple point accuracy and CULane mask-IoU F1.

mod culane;
mod tusimple;

pub use culane::{
    eval_culane, eval_culane_image, max_bipartite_matching, rasterize_lane, CulaneParams, CulaneReport, LaneMask,
    CULANE_NATIVE_WIDTH,
};
pub use tusimple::{eval_tusimple, eval_tusimple_image, TusimpleImageResult, TusimpleParams, TusimpleReport};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction and ground truth cover different image counts ({pred} vs {gt})")]
    ImageCount { pred: usize, gt: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
