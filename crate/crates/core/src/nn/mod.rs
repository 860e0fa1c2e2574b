//! Neural primitives: convolution, activations, normalization, resampling,
//! and the parameter registry. Every primitive has an explicit backward.

pub mod activation;
pub mod conv;
pub mod layers;
pub mod norm;
pub mod params;
pub mod resample;

pub use activation::{gelu, gelu_backward, softmax_pair, softmax_pair_backward};
pub use conv::{conv2d, ConvSpec};
pub use layers::{Conv2d, Downsample, LayerNorm, Upsample};
pub use norm::{layer_norm, LayerNormTrace};
pub use params::{ModuleParams, ParamBuilder, ParamId};
pub use resample::{depth_to_space, space_to_depth};
