//! Light-field view synthesis from the four corner views of a camera array.
//!
//! The pipeline picks the three corners closest to a target position,
//! mirrors them into a canonical layout, extracts stereo features from the
//! horizontal, vertical and diagonal pairs, estimates one disparity map per
//! input view, backward-warps the inputs to the target, and refines their
//! average with a residual CBAM network.

pub mod autograd;
pub mod checkpoint;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod image_io;
pub mod lf_data;
pub mod networks;
pub mod parallel;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
