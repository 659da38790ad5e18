//! Encoder, task heads and the frozen-feature probe.

mod config;
mod network;
pub mod probe;

pub use config::{ModelConfig, StageConfig, Task, DEFAULT_POINTS};
pub use network::{
    build_model, count_parameters, estimate_flops, forward_classification, forward_segmentation,
    ClassificationHead, DecoderStage, Encoding, Head, Model, SegmentationDecoder, Stage,
};
pub use probe::{train_linear_probe, LinearProbe, ProbeFit, Standardizer};
