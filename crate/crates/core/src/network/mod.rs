//! The full encoder-decoder: a 3x3 head conv, four levels of FEMs joined by
//! pixel-unshuffle downsampling, a decoder that upsamples and fuses the
//! matching encoder features through AFMM, a refinement stage, and a 3x3
//! tail conv predicting a residual `R`; the output is `x + R`.

pub mod checkpoint;
mod config;

pub use config::{LatentAt, NetworkConfig};

use crate::blocks::{Afmm, AfmmTrace, Fem, FemTrace};
use crate::error::{Error, Result};
use crate::memory;
use crate::nn::{ConvSpec, Conv2d, Downsample, ModuleParams, ParamBuilder, Upsample};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct D2Net {
    pub config: NetworkConfig,
    pub head: Conv2d,
    /// FEMs of encoder levels 1 to 4.
    pub encoder: [Vec<Fem>; 4],
    /// `downs[l]` maps level `l` to level `l + 1`; `latent_at = quarter` has
    /// no downsample before the latent level.
    pub downs: Vec<Downsample>,
    /// Decoder stages for levels 3, 2, 1.
    pub decoder: [DecoderLevel; 3],
    pub refine: Vec<Fem>,
    pub tail: Conv2d,
}

#[derive(Clone, Debug)]
pub struct DecoderLevel {
    pub up: Option<Upsample>,
    pub fuse: Afmm,
    pub fems: Vec<Fem>,
}

/// Inputs and traces of every layer, kept by [`D2Net::forward_traced`].
pub struct NetTrace<T: Scalar> {
    encoder: [Vec<(Tensor<T>, FemTrace<T>)>; 4],
    /// Encoder level outputs for levels 1 to 3 (skip connections).
    skips: Vec<Tensor<T>>,
    unshuffled: Vec<Tensor<T>>,
    decoder: Vec<DecoderTrace<T>>,
    refine: Vec<(Tensor<T>, FemTrace<T>)>,
    tail_in: Tensor<T>,
}

struct DecoderTrace<T: Scalar> {
    up_in: Option<Tensor<T>>,
    fuse_dec: Tensor<T>,
    fuse: AfmmTrace<T>,
    fems: Vec<(Tensor<T>, FemTrace<T>)>,
}

fn fems(b: &mut ParamBuilder, scope: &str, count: usize, cfg: &crate::blocks::FemConfig) -> Result<Vec<Fem>> {
    b.scope(scope, |b| (0..count).map(|i| Fem::build(b, &format!("fem{i}"), cfg)).collect())
}

fn fems_forward<T: Scalar>(blocks: &[Fem], p: &ModuleParams<T>, mut x: Tensor<T>) -> Result<Tensor<T>> {
    for fem in blocks {
        x = fem.forward(p, &x)?;
    }
    Ok(x)
}

#[allow(clippy::type_complexity)]
fn fems_traced<T: Scalar>(
    blocks: &[Fem],
    p: &ModuleParams<T>,
    mut x: Tensor<T>,
) -> Result<(Tensor<T>, Vec<(Tensor<T>, FemTrace<T>)>)> {
    let mut traces = Vec::with_capacity(blocks.len());
    for fem in blocks {
        let (y, t) = fem.forward_traced(p, &x)?;
        traces.push((x, t));
        x = y;
    }
    Ok((x, traces))
}

fn fems_backward<T: Scalar>(
    blocks: &[Fem],
    p: &ModuleParams<T>,
    traces: &[(Tensor<T>, FemTrace<T>)],
    mut g: Tensor<T>,
    grads: &mut ModuleParams<T>,
) -> Result<Tensor<T>> {
    for (fem, (x, t)) in blocks.iter().zip(traces).rev() {
        g = fem.backward(p, x, t, &g, grads)?;
    }
    Ok(g)
}

impl D2Net {
    /// Builds the graph and its seeded initial parameters.
    pub fn build<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<(D2Net, ModuleParams<T>)> {
        config.validate()?;
        let ladder = config.ladder();
        let fem_cfg = |l: usize| config.fem.with_channels(ladder[l]);
        let mut b = ParamBuilder::new(seed);
        let c = config.base_channels;
        let head = b.conv("head", ConvSpec::full(3, c, 3, 3), true)?;
        let mut encoder: [Vec<Fem>; 4] = Default::default();
        let mut downs = Vec::new();
        for l in 0..4 {
            encoder[l] = fems(&mut b, &format!("enc{l}"), config.level_depths[l], &fem_cfg(l))?;
            if l < config.latent_at.downsamples() {
                let conv = b.conv(&format!("down{l}"), ConvSpec::full(4 * ladder[l], 2 * ladder[l], 1, 1), true)?;
                downs.push(Downsample { conv });
            }
        }
        let mut decoder = Vec::with_capacity(3);
        for (d, depth) in config.decoder_depths.iter().enumerate() {
            let l = 2 - d;
            let level = b.scope(&format!("dec{l}"), |b| {
                let up = if ladder[l + 1] != ladder[l] {
                    let width = ladder[l + 1];
                    Some(Upsample {
                        conv: b.conv("up", ConvSpec::full(width, 2 * width, 1, 1), true)?,
                    })
                } else {
                    None
                };
                let fuse = Afmm::build(b, "fuse", ladder[l])?;
                let fems = (0..*depth)
                    .map(|i| Fem::build(b, &format!("fem{i}"), &fem_cfg(l)))
                    .collect::<Result<_>>()?;
                Ok(DecoderLevel { up, fuse, fems })
            })?;
            decoder.push(level);
        }
        let refine = fems(&mut b, "refine", config.refine_depth, &fem_cfg(0))?;
        let tail = b.conv("tail", ConvSpec::full(c, 3, 3, 3), true)?;
        let net = D2Net {
            config: config.clone(),
            head,
            encoder,
            downs,
            decoder: decoder.try_into().map_err(|_| Error::Config("decoder depth".into()))?,
            refine,
            tail,
        };
        Ok((net, b.finish()))
    }

    fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.c != 3 {
            return Err(Error::layer("head", format!("expected 3 input channels, got {}", s.c)));
        }
        let m = self.config.pad_multiple();
        if !s.h.is_multiple_of(m) || !s.w.is_multiple_of(m) {
            return Err(Error::NotMultiple {
                op: "network",
                h: s.h,
                w: s.w,
                multiple: m,
            });
        }
        Ok(())
    }

    /// Sets the tail conv to zero, which makes the network the identity.
    pub fn zero_tail<T: Scalar>(&self, p: &mut ModuleParams<T>) {
        for id in [Some(self.tail.weight), self.tail.bias].into_iter().flatten() {
            p.get_mut(id).data_mut().fill(T::zero());
        }
    }

    /// Predicted residual `R` for an input whose extents are multiples of
    /// [`NetworkConfig::pad_multiple`].
    pub fn residual<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let downs = self.downs.len();
        let mut f = memory::scope("head", || self.head.forward(p, x))?;
        let mut skips = Vec::with_capacity(3);
        for (l, blocks) in self.encoder.iter().enumerate() {
            f = memory::scope("encoder", || fems_forward(blocks, p, f))?;
            if l < 3 {
                if l < downs {
                    let down = memory::scope("down", || self.downs[l].forward(p, &f))?;
                    skips.push(std::mem::replace(&mut f, down));
                } else {
                    skips.push(f.clone());
                }
            }
        }
        for (d, level) in self.decoder.iter().enumerate() {
            let skip = skips.pop().expect("one skip per decoder level");
            debug_assert_eq!(skips.len(), 2 - d);
            if let Some(up) = &level.up {
                f = memory::scope("up", || up.forward(p, &f))?;
            }
            f = memory::scope("afmm", || level.fuse.forward(p, &skip, &f))?;
            drop(skip);
            f = memory::scope("decoder", || fems_forward(&level.fems, p, f))?;
        }
        f = memory::scope("refine", || fems_forward(&self.refine, p, f))?;
        memory::scope("tail", || self.tail.forward(p, &f))
    }

    /// `x + R` for an input whose extents are multiples of
    /// [`NetworkConfig::pad_multiple`]. Values are not range-checked.
    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut r = self.residual(p, x)?;
        r.add_assign(x)?;
        Ok(r)
    }

    /// Restores an image of any size with values in `[0, 1]`: pads each
    /// extent up to the next multiple of [`NetworkConfig::pad_multiple`] by
    /// mirror reflection, runs the network and crops back.
    pub fn forward_full_resolution<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if let Some(v) = x.data().iter().find(|v| !(v.to_f64() >= 0.0 && v.to_f64() <= 1.0)) {
            return Err(Error::PixelRange { value: v.to_f64() });
        }
        let s = x.shape();
        let m = self.config.pad_multiple();
        let (ph, pw) = (s.h.div_ceil(m) * m - s.h, s.w.div_ceil(m) * m - s.w);
        if ph == 0 && pw == 0 {
            return self.forward(p, x);
        }
        let padded = memory::scope("pad", || x.pad_mirror(0, ph, 0, pw));
        let y = self.forward(p, &padded)?;
        drop(padded);
        y.crop(s.h, s.w)
    }

    pub fn forward_traced<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, NetTrace<T>)> {
        self.check_input(x)?;
        let downs = self.downs.len();
        let mut f = self.head.forward(p, x)?;
        let mut encoder: [Vec<(Tensor<T>, FemTrace<T>)>; 4] = Default::default();
        let mut skips = Vec::with_capacity(3);
        let mut unshuffled = Vec::with_capacity(downs);
        for (l, blocks) in self.encoder.iter().enumerate() {
            let (y, traces) = fems_traced(blocks, p, f)?;
            encoder[l] = traces;
            f = y;
            if l < 3 {
                skips.push(f.clone());
                if l < downs {
                    let (y, u) = self.downs[l].forward_traced(p, &f)?;
                    unshuffled.push(u);
                    f = y;
                }
            }
        }
        let mut decoder = Vec::with_capacity(3);
        for (d, level) in self.decoder.iter().enumerate() {
            let skip = &skips[2 - d];
            let up_in = match &level.up {
                Some(up) => {
                    let y = up.forward(p, &f)?;
                    Some(std::mem::replace(&mut f, y))
                }
                None => None,
            };
            let (fused, fuse) = level.fuse.forward_traced(p, skip, &f)?;
            let fuse_dec = std::mem::replace(&mut f, fused);
            let (y, fems) = fems_traced(&level.fems, p, f)?;
            f = y;
            decoder.push(DecoderTrace {
                up_in,
                fuse_dec,
                fuse,
                fems,
            });
        }
        let (tail_in, refine) = fems_traced(&self.refine, p, f)?;
        let mut y = self.tail.forward(p, &tail_in)?;
        y.add_assign(x)?;
        Ok((
            y,
            NetTrace {
                encoder,
                skips,
                unshuffled,
                decoder,
                refine,
                tail_in,
            },
        ))
    }

    /// Accumulates parameter gradients and returns `dL/dx`, where `x` is the
    /// input given to [`Self::forward_traced`].
    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        x: &Tensor<T>,
        t: &NetTrace<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        let mut g = self.tail.backward(p, &t.tail_in, grad_out, grads, true)?.expect("input grad");
        g = fems_backward(&self.refine, p, &t.refine, g, grads)?;
        let mut g_skips: Vec<Option<Tensor<T>>> = vec![None, None, None];
        // Decoder levels run 3, 2, 1 forward, so backward visits them 1, 2, 3.
        for d in (0..3).rev() {
            let (level, lt) = (&self.decoder[d], &t.decoder[d]);
            let l = 2 - d;
            g = fems_backward(&level.fems, p, &lt.fems, g, grads)?;
            let (g_enc, g_dec) = level.fuse.backward(p, &t.skips[l], &lt.fuse_dec, &lt.fuse, &g, grads)?;
            g_skips[l] = Some(g_enc);
            g = match (&level.up, &lt.up_in) {
                (Some(up), Some(up_in)) => up.backward(p, up_in, &g_dec, grads)?,
                _ => g_dec,
            };
        }
        for l in (0..4).rev() {
            g = fems_backward(&self.encoder[l], p, &t.encoder[l], g, grads)?;
            if l > 0 {
                if l - 1 < self.downs.len() {
                    g = self.downs[l - 1].backward(p, &t.unshuffled[l - 1], &g, grads)?;
                }
                g.add_assign(g_skips[l - 1].as_ref().expect("skip gradient"))?;
            }
        }
        let mut gx = self.head.backward(p, x, &g, grads, true)?.expect("input grad");
        gx.add_assign(grad_out)?;
        Ok(gx)
    }
}

pub fn count_params<T: Scalar>(p: &ModuleParams<T>) -> usize {
    p.count()
}
