//! Reference-conditioned super-resolution for low-bitrate video calls.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod codec;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod keypoints;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod motion;
pub mod streaming;
pub mod synth;
pub mod tensor;
pub mod unet;
pub mod video;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::{Frame, Tensor};
