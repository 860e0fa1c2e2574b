use crate::blocks::FemConfig;
use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Resolution of the deepest level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LatentAt {
    /// Three downsamples; channel ladder `[C, 2C, 4C, 8C]`.
    Eighth,
    /// Two downsamples; levels 3 and 4 share resolution and width:
    /// ladder `[C, 2C, 4C, 4C]`.
    Quarter,
}

impl LatentAt {
    pub fn downsamples(self) -> usize {
        match self {
            LatentAt::Eighth => 3,
            LatentAt::Quarter => 2,
        }
    }
}

impl fmt::Display for LatentAt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatentAt::Eighth => "eighth",
            LatentAt::Quarter => "quarter",
        })
    }
}

impl FromStr for LatentAt {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eighth" => Ok(LatentAt::Eighth),
            "quarter" => Ok(LatentAt::Quarter),
            _ => Err(Error::Config(format!("latent_at must be `eighth` or `quarter`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub base_channels: usize,
    /// FEMs per encoder level, level 1 to 4 (level 4 is the latent).
    pub level_depths: [usize; 4],
    /// FEMs per decoder level, level 3 to 1.
    pub decoder_depths: [usize; 3],
    pub refine_depth: usize,
    pub latent_at: LatentAt,
    /// Block hyperparameters; `fem.channels` is replaced per level.
    pub fem: FemConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            base_channels: 24,
            level_depths: [2, 4, 4, 6],
            decoder_depths: [4, 4, 2],
            refine_depth: 2,
            latent_at: LatentAt::Quarter,
            fem: FemConfig::default(),
        }
    }
}

fn parse_list<const K: usize>(key: &str, value: &str) -> Result<[usize; K]> {
    let items: Vec<usize> = value
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("{key}: expected {K} comma-separated integers, got `{value}`")))?;
    items
        .try_into()
        .map_err(|_| Error::Config(format!("{key}: expected {K} comma-separated integers, got `{value}`")))
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

impl NetworkConfig {
    /// A small configuration for gradient checks and desk-scale training.
    pub fn toy(channels: usize) -> Self {
        NetworkConfig {
            base_channels: channels,
            level_depths: [1, 1, 1, 1],
            decoder_depths: [1, 1, 1],
            refine_depth: 1,
            latent_at: LatentAt::Quarter,
            fem: FemConfig {
                branch_ratio: 0.25,
                ffn_expand: 2.0,
                ..FemConfig::default()
            },
        }
    }

    pub fn ladder(&self) -> [usize; 4] {
        let c = self.base_channels;
        match self.latent_at {
            LatentAt::Eighth => [c, 2 * c, 4 * c, 8 * c],
            LatentAt::Quarter => [c, 2 * c, 4 * c, 4 * c],
        }
    }

    /// Input extents must be multiples of this: every level runs frequency
    /// tiles, and the deepest one is `2^downsamples` times smaller.
    pub fn pad_multiple(&self) -> usize {
        self.fem.freq_patch << self.latent_at.downsamples()
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        for c in self.ladder() {
            self.fem.with_channels(c).validate()?;
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 12] = [
        "base_channels",
        "level_depths",
        "decoder_depths",
        "refine_depth",
        "latent_at",
        "freq_patch",
        "branch_ratio",
        "square_kernel",
        "band_kernel",
        "ffn_expand",
        "norm",
        "conv_group_order",
    ];

    /// Sets one field by name. Returns `Ok(false)` for keys this config does
    /// not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "base_channels" => self.base_channels = parse(key, value)?,
            "level_depths" => self.level_depths = parse_list(key, value)?,
            "decoder_depths" => self.decoder_depths = parse_list(key, value)?,
            "refine_depth" => self.refine_depth = parse(key, value)?,
            "latent_at" => self.latent_at = value.trim().parse()?,
            "freq_patch" => self.fem.freq_patch = parse(key, value)?,
            "branch_ratio" => self.fem.branch_ratio = parse(key, value)?,
            "square_kernel" => self.fem.square_kernel = parse(key, value)?,
            "band_kernel" => self.fem.band_kernel = parse(key, value)?,
            "ffn_expand" => self.fem.ffn_expand = parse(key, value)?,
            "norm" => self.fem.norm = value.trim().parse()?,
            "conv_group_order" => self.fem.conv_group_order = value.trim().parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// `(key, value)` pairs in [`Self::KEYS`] order, parseable by [`Self::set`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let f = &self.fem;
        let values = [
            self.base_channels.to_string(),
            join(&self.level_depths),
            join(&self.decoder_depths),
            self.refine_depth.to_string(),
            self.latent_at.to_string(),
            f.freq_patch.to_string(),
            f.branch_ratio.to_string(),
            f.square_kernel.to_string(),
            f.band_kernel.to_string(),
            f.ffn_expand.to_string(),
            f.norm.to_string(),
            f.conv_group_order.to_string(),
        ];
        Self::KEYS.into_iter().zip(values).collect()
    }
}
