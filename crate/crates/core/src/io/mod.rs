//! Point files, synthetic shapes and weight archives.

mod shapes;
mod weights;
mod xyz;

pub use shapes::{generate_shape, synthetic_corpus, ShapeKind, TORUS_R, TORUS_TUBE};
pub use weights::{
    assign_tensors, decode_archive, encode_archive, load_weights, model_tensors, read_archive,
    save_weights, write_archive, Tensor, TensorData, FORMAT_VERSION, MAGIC,
};
pub use xyz::{format_xyz, parse_xyz, read_xyz, write_xyz};
