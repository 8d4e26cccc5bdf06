//! On-disk formats: tensors, lane documents, dataset annotations and run
//! configuration.

pub mod annotations;
pub mod config;
pub mod lanefile;
pub mod tensor;

use thiserror::Error;

pub use annotations::{parse_culane_annotation, parse_tusimple_line, parse_tusimple_record, TusimpleRecord};
pub use config::RunConfig;
pub use lanefile::{LaneFile, LaneRecord};
pub use tensor::{logits_to_tensor, tensor_to_logits, Tensor};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"LKT1\"")]
    Magic([u8; 4]),
    #[error("unsupported dtype code {0}")]
    DType(u8),
    #[error("unsupported rank {0}, expected 2 or 3")]
    Rank(u8),
    #[error("truncated: need {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("{0}")]
    Schema(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
