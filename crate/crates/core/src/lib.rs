//! Bottom-up lane detection from keypoints.
//!
//! A lane is modeled locally: a heatmap scores where lane keypoints sit, and
//! three horizontal offsets per pixel point to the nearest lane one row
//! interval above, on the same row and one interval below. This crate holds
//! everything around the network that produces those maps:
//!
//! - [`geometry`] – lane curves, densification and row sampling.
//! - [`encoder`] – ground-truth heatmaps, offset targets and supervision masks.
//! - [`loss`] – the training objective as pure functions.
//! - [`decoder`] – greedy and efficient instance decoders.
//! - [`metrics`] – TuSimple and CULane evaluation.
//! - [`synth`] – seeded synthetic scenes and ideal/perturbed network outputs.
//! - [`io`] – tensor and lane file formats, dataset parsers, run configuration.
//! - [`cli`] – the `keylane` command line.

pub mod bench;
pub mod cli;
pub mod decoder;
pub mod encoder;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod plane;
pub mod synth;

pub use decoder::{efficient_decode, greedy_decode, DecodedLane, DecoderConfig};
pub use encoder::{encode, EncoderConfig, GroundTruthMaps};
pub use geometry::{ImagePoint, ImageSpec, LaneCurve};
pub use loss::{total_loss, LogitMaps, LossConfig, LossReport};
pub use plane::Plane;
