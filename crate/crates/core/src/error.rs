use crate::tensor::Shape;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left} and {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("split sizes {sizes:?} do not sum to {channels} channels")]
    SplitSizes { sizes: Vec<usize>, channels: usize },
    #[error("concat: part {index} has shape {found}, expected N/H/W of {expected}")]
    ConcatMismatch {
        index: usize,
        expected: Shape,
        found: Shape,
    },
    #[error("concat of an empty list")]
    EmptyConcat,
    #[error("reflection pad of {pad} needs an extent larger than {extent}")]
    PadTooLarge { pad: usize, extent: usize },
    #[error("crop to {h}x{w} exceeds input {shape}")]
    CropTooLarge { h: usize, w: usize, shape: Shape },
    #[error("{op}: extents {h}x{w} are not multiples of {multiple}; pad the input first")]
    NotMultiple {
        op: &'static str,
        h: usize,
        w: usize,
        multiple: usize,
    },
    #[error("layer `{layer}`: {detail}")]
    Layer { layer: String, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("imaginary residue {residue:e} exceeds limit {limit:e}; spectrum is not that of a real signal")]
    ImaginaryResidue { residue: f64, limit: f64 },
    #[error("naive attention over {hw} positions refused: the attention map needs {hw}x{hw} floats (limit {limit} positions)")]
    QuadraticRefused { hw: usize, limit: usize },
    #[error("pixel value {value} outside [0, 1]; normalize the input first")]
    PixelRange { value: f64 },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("image {width}x{height} is smaller than the {required}x{required} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },
    #[error("not enough training images: {found} found, {required} required")]
    InsufficientData { found: usize, required: usize },
    #[error("parameter registry: {0}")]
    Params(String),
    #[error(transparent)]
    Checkpoint(#[from] crate::network::checkpoint::CheckpointError),
    #[error(transparent)]
    Image(#[from] crate::io::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn layer(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Layer {
            layer: layer.into(),
            detail: detail.into(),
        }
    }
}
