//! Point cloud Mamba forward stack.
//!
//! The crate is organised bottom-up:
//!
//! - [`pointset`]: point containers, unit-cube normalization, canonical ordering
//! - [`serialize`]: grid quantization and the 1-D orderings (snake/CTS, Morton, Hilbert)
//! - [`sample`]: farthest point sampling, kNN, voxel sampling, feature interpolation
//! - [`nn`]: affine maps, RMS normalization, residual MLP blocks, parameter visiting
//! - [`local`]: geometric affine normalization and max-pooled local aggregation
//! - [`ssm`]: discretization, scan, convolution form, adjoint, selective SSM and Mamba blocks
//! - [`embed`]: coordinate positional maps and order prompts
//! - [`model`]: four-stage encoder, classification head, segmentation decoder, linear probe
//! - [`io`]: XYZ files, synthetic shapes, weight archives
//!
//! Geometry is handled in `f64`; network activations are `f32`.

pub mod embed;
pub mod error;
pub mod io;
pub mod local;
pub mod model;
pub mod nn;
pub mod pointset;
pub mod sample;
pub mod serialize;
pub mod ssm;

pub use error::{Error, Result};
pub use pointset::{NormalizedCloud, PointCloud};
pub use serialize::{
    AxisPerm, CodeMode, GridCoords, OrderKind, PermutationIndex, SerializationOrder,
};
