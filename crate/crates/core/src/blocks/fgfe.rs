//! Fourier-domain global attention.
//!
//! `Q`, `K`, `V` come from three convolution groups. Within every
//! `patch x patch` tile of every channel the attention map is
//! `M = idft2(dft2(Q) * dft2(K))`, i.e. the circular convolution of the two
//! tiles scaled by `1/patch`. The block returns `proj(V * M)`. No buffer is
//! larger than one feature map, so memory is linear in `H * W`.

use super::{ConvGroupOrder, FemConfig};
use crate::error::{Error, Result};
use crate::memory;
use crate::nn::{ConvSpec, Conv2d, ModuleParams, ParamBuilder};
use crate::scalar::Scalar;
use crate::spectral;
use crate::tensor::Tensor;

/// Two stacked convolutions producing one of `Q`, `K`, `V`.
#[derive(Clone, Debug)]
pub struct ConvGroup {
    pub first: Conv2d,
    pub second: Conv2d,
}

pub struct ConvGroupTrace<T: Scalar> {
    pub mid: Tensor<T>,
}

impl ConvGroup {
    pub fn build(b: &mut ParamBuilder, name: &str, channels: usize, order: ConvGroupOrder) -> Result<Self> {
        b.scope(name, |b| {
            let (s1, s2) = match order {
                ConvGroupOrder::Literal => (ConvSpec::depthwise(channels, 1, 1), ConvSpec::full(channels, channels, 3, 3)),
                ConvGroupOrder::PointwiseThenDepthwise => {
                    (ConvSpec::full(channels, channels, 1, 1), ConvSpec::depthwise(channels, 3, 3))
                }
            };
            Ok(ConvGroup {
                first: b.conv("first", s1, true)?,
                second: b.conv("second", s2, true)?,
            })
        })
    }

    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mid = self.first.forward(p, x)?;
        self.second.forward(p, &mid)
    }

    pub fn forward_traced<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, ConvGroupTrace<T>)> {
        let mid = self.first.forward(p, x)?;
        let out = self.second.forward(p, &mid)?;
        Ok((out, ConvGroupTrace { mid }))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        x: &Tensor<T>,
        trace: &ConvGroupTrace<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        let g_mid = self.second.backward(p, &trace.mid, grad_out, grads, true)?.expect("input grad");
        Ok(self.first.backward(p, x, &g_mid, grads, true)?.expect("input grad"))
    }
}

#[derive(Clone, Debug)]
pub struct Fgfe {
    pub channels: usize,
    pub patch: usize,
    pub q: ConvGroup,
    pub k: ConvGroup,
    pub v: ConvGroup,
    pub proj: Conv2d,
}

pub struct FgfeTrace<T: Scalar> {
    pub q_group: ConvGroupTrace<T>,
    pub k_group: ConvGroupTrace<T>,
    pub v_group: ConvGroupTrace<T>,
    pub q: Tensor<T>,
    pub k: Tensor<T>,
    pub v: Tensor<T>,
    /// Spatial attention map after the inverse transform.
    pub map: Tensor<T>,
    /// `v * map`, the input of the output projection.
    pub modulated: Tensor<T>,
}

impl Fgfe {
    pub fn build(b: &mut ParamBuilder, name: &str, cfg: &FemConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        b.scope(name, |b| {
            Ok(Fgfe {
                channels: c,
                patch: cfg.freq_patch,
                q: ConvGroup::build(b, "q", c, cfg.conv_group_order)?,
                k: ConvGroup::build(b, "k", c, cfg.conv_group_order)?,
                v: ConvGroup::build(b, "v", c, cfg.conv_group_order)?,
                proj: b.conv("proj", ConvSpec::full(c, c, 1, 1), true)?,
            })
        })
    }

    fn check(&self, x: &Tensor<impl Scalar>) -> Result<()> {
        let s = x.shape();
        if s.c != self.channels {
            return Err(Error::layer(
                &self.proj.name,
                format!("input has {} channels, block expects {}", s.c, self.channels),
            ));
        }
        if !s.h.is_multiple_of(self.patch) || !s.w.is_multiple_of(self.patch) {
            return Err(Error::NotMultiple {
                op: "fgfe",
                h: s.h,
                w: s.w,
                multiple: self.patch,
            });
        }
        Ok(())
    }

    /// Inference path. Peak transient memory is a small constant number of
    /// feature maps: the map overwrites `Q` in place and `V * M` overwrites
    /// the map.
    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        memory::scope("fgfe", || {
            let mut map = self.q.forward(p, x)?;
            let k = self.k.forward(p, x)?;
            spectral::spectral_product_into(&mut map, &k, self.patch)?;
            drop(k);
            let v = self.v.forward(p, x)?;
            map.mul_assign(&v)?;
            drop(v);
            self.proj.forward(p, &map)
        })
    }

    pub fn forward_traced<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, FgfeTrace<T>)> {
        self.check(x)?;
        let (q, q_group) = self.q.forward_traced(p, x)?;
        let (k, k_group) = self.k.forward_traced(p, x)?;
        let (v, v_group) = self.v.forward_traced(p, x)?;
        let map = spectral::spectral_product(&q, &k, self.patch)?;
        let modulated = v.mul(&map)?;
        let out = self.proj.forward(p, &modulated)?;
        Ok((
            out,
            FgfeTrace {
                q_group,
                k_group,
                v_group,
                q,
                k,
                v,
                map,
                modulated,
            },
        ))
    }

    /// The transform's adjoint is its inverse, so the map's gradient reaches
    /// `Q` as `idft2(conj(dft2(K)) * dft2(dM))` per tile, and symmetrically
    /// for `K`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        x: &Tensor<T>,
        t: &FgfeTrace<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        let g_mod = self.proj.backward(p, &t.modulated, grad_out, grads, true)?.expect("input grad");
        let g_v = g_mod.mul(&t.map)?;
        let g_map = g_mod.mul(&t.v)?;
        drop(g_mod);
        let g_q = spectral::spectral_product_adjoint(&g_map, &t.k, self.patch)?;
        let g_k = spectral::spectral_product_adjoint(&g_map, &t.q, self.patch)?;
        let mut gx = self.q.backward(p, x, &t.q_group, &g_q, grads)?;
        gx.add_assign(&self.k.backward(p, x, &t.k_group, &g_k, grads)?)?;
        gx.add_assign(&self.v.backward(p, x, &t.v_group, &g_v, grads)?)?;
        Ok(gx)
    }
}
