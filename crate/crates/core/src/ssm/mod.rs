//! State-space sequence kernels.

pub mod block;
pub mod lti;
pub mod selective;

pub use block::{bidirectional_mamba, mamba_block, BiMamba, BlockConfig, CausalConv, MambaBlock, MambaBranch};
pub use lti::{conv_form, conv_kernel, discretize, scan, scan_backward, DiscretizeMode, LtiSystem, ScanGrads, StepParams};
pub use selective::{default_dt_rank, selective_ssm, SelectiveSsm};
