//! Deterministic CPU kernels underlying every network in the crate.
//!
//! All functions are pure: the same inputs always produce bit-identical
//! outputs, independent of thread count.

mod conv;
mod elementwise;
mod mat2;
mod resample;
mod softmax;
mod warp;

pub use conv::{conv2d, conv_output_len, ConvKernel};
pub use elementwise::{batchnorm_infer, relu, relu_inplace, sigmoid, sigmoid_scalar, BatchNormParams, BN_EPS};
pub use mat2::{mat2_apply, mat2_inverse, mat2_mul, Mat2, Mat2Inverse, DEFAULT_SINGULAR_EPS, MAT2_IDENTITY};
pub use resample::{avgpool2, box_downsample, resize_bilinear, upsample2, UpsampleMode};
pub use softmax::{softmax_channels, softmax_spatial};
pub use warp::{grid_sample, normalized_to_pixel, pixel_to_normalized, WarpField};
