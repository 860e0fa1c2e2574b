//! The feature extraction module (FEM) and its parts: Fourier-domain global
//! attention ([`Fgfe`]), multi-scale depthwise branches ([`Mlfe`]), the
//! feed-forward network ([`Ffn`]) and the adaptive skip fusion ([`Afmm`]).
//!
//! Each block exposes an inference `forward`, a `forward_traced` that keeps
//! what the backward pass needs, and a `backward` that accumulates parameter
//! gradients and returns the input gradient. Backward takes the same input
//! tensor that was passed to `forward_traced`; blocks never copy their input.

mod afmm;
mod fem;
mod ffn;
mod fgfe;
mod mlfe;

pub use afmm::{Afmm, AfmmTrace};
pub use fem::{Fem, FemTrace};
pub use ffn::{Ffn, FfnTrace};
pub use fgfe::{ConvGroup, ConvGroupTrace, Fgfe, FgfeTrace};
pub use mlfe::{Mlfe, MlfeTrace};

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// How the Q/K/V projection group is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvGroupOrder {
    /// Depthwise 1x1 (a per-channel scale) followed by a full 3x3 conv.
    Literal,
    /// Full 1x1 conv followed by a depthwise 3x3 conv.
    PointwiseThenDepthwise,
}

impl fmt::Display for ConvGroupOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvGroupOrder::Literal => "literal",
            ConvGroupOrder::PointwiseThenDepthwise => "pointwise-then-dwconv",
        })
    }
}

impl FromStr for ConvGroupOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(ConvGroupOrder::Literal),
            "pointwise-then-dwconv" => Ok(ConvGroupOrder::PointwiseThenDepthwise),
            _ => Err(Error::Config(format!(
                "conv_group_order must be `literal` or `pointwise-then-dwconv`, got `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    LayerNorm,
    None,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::LayerNorm => "layernorm",
            NormKind::None => "none",
        })
    }
}

impl FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layernorm" => Ok(NormKind::LayerNorm),
            "none" => Ok(NormKind::None),
            _ => Err(Error::Config(format!("norm must be `layernorm` or `none`, got `{s}`"))),
        }
    }
}

/// Hyperparameters of one FEM.
#[derive(Clone, Debug, PartialEq)]
pub struct FemConfig {
    pub channels: usize,
    /// Side of the square frequency tiles.
    pub freq_patch: usize,
    /// Fraction of channels per convolution branch; `g = floor(r_g * C)`.
    pub branch_ratio: f64,
    pub square_kernel: usize,
    pub band_kernel: usize,
    /// FFN hidden width is `round(ffn_expand * C)`.
    pub ffn_expand: f64,
    pub norm: NormKind,
    pub conv_group_order: ConvGroupOrder,
}

impl Default for FemConfig {
    fn default() -> Self {
        FemConfig {
            channels: 24,
            freq_patch: 8,
            branch_ratio: 0.125,
            square_kernel: 5,
            band_kernel: 11,
            ffn_expand: 3.0,
            norm: NormKind::LayerNorm,
            conv_group_order: ConvGroupOrder::PointwiseThenDepthwise,
        }
    }
}

impl FemConfig {
    pub fn with_channels(&self, channels: usize) -> Self {
        FemConfig {
            channels,
            ..self.clone()
        }
    }

    /// Channels per convolution branch.
    pub fn branch_channels(&self) -> usize {
        // The epsilon keeps ratios like 1/3 from flooring one short.
        (self.branch_ratio * self.channels as f64 + 1e-9).floor() as usize
    }

    pub fn ffn_hidden(&self) -> usize {
        ((self.ffn_expand * self.channels as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if !(self.branch_ratio > 0.0 && self.branch_ratio <= 1.0 / 3.0 + 1e-12) {
            return bad(format!("r_g = {} must lie in (0, 1/3]", self.branch_ratio));
        }
        if 3 * self.branch_channels() > self.channels {
            return bad(format!(
                "3 * g = {} exceeds {} channels",
                3 * self.branch_channels(),
                self.channels
            ));
        }
        for (name, k) in [("k_s", self.square_kernel), ("k_b", self.band_kernel)] {
            if k == 0 || k % 2 == 0 {
                return bad(format!("{name} = {k} must be a positive odd integer"));
            }
        }
        if self.freq_patch < 2 {
            return bad(format!("freq_patch = {} must be at least 2", self.freq_patch));
        }
        if !(self.ffn_expand.is_finite() && self.ffn_expand > 0.0) {
            return bad(format!("ffn_expand = {} must be positive", self.ffn_expand));
        }
        Ok(())
    }
}
