//! Softmax attention over flattened spatial positions, materializing every
//! `HW x HW` map. It exists only as the memory baseline for the
//! Fourier-domain block.

use crate::error::{Error, Result};
use crate::memory;
use crate::nn::{ConvSpec, Conv2d, ModuleParams, ParamBuilder};
use crate::par;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Largest `H * W` the reference will attempt.
pub const NAIVE_ATTENTION_MAX_POSITIONS: usize = 4096;

/// One head per channel (head dimension 1), matching the channel-separable
/// maps of the Fourier block: `proj(softmax(q k^T) v)` per channel.
#[derive(Clone, Debug)]
pub struct NaiveAttention {
    pub channels: usize,
    pub q: Conv2d,
    pub k: Conv2d,
    pub v: Conv2d,
    pub proj: Conv2d,
}

impl NaiveAttention {
    pub fn build(b: &mut ParamBuilder, name: &str, channels: usize) -> Result<Self> {
        b.scope(name, |b| {
            let pw = || ConvSpec::full(channels, channels, 1, 1);
            Ok(NaiveAttention {
                channels,
                q: b.conv("q", pw(), true)?,
                k: b.conv("k", pw(), true)?,
                v: b.conv("v", pw(), true)?,
                proj: b.conv("proj", pw(), true)?,
            })
        })
    }

    /// Output and the `(N, C, HW, HW)` row-stochastic attention maps.
    pub fn forward_with_maps<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let s = x.shape();
        let hw = s.h * s.w;
        if hw > NAIVE_ATTENTION_MAX_POSITIONS {
            return Err(Error::QuadraticRefused {
                hw,
                limit: NAIVE_ATTENTION_MAX_POSITIONS,
            });
        }
        memory::scope("naive_attention", || {
            let q = self.q.forward(p, x)?;
            let k = self.k.forward(p, x)?;
            let v = self.v.forward(p, x)?;
            let mut maps = Tensor::zeros(Shape::new(s.n, s.c, hw, hw));
            let (qd, kd) = (q.data(), k.data());
            par::for_each_chunk(maps.data_mut(), hw, |row, out| {
                let plane = row / hw;
                let i = row % hw;
                let qi = qd[plane * hw + i];
                let keys = &kd[plane * hw..][..hw];
                let mut m = T::from_f64(f64::NEG_INFINITY);
                for (o, &kj) in out.iter_mut().zip(keys) {
                    *o = qi * kj;
                    m = m.max(*o);
                }
                let mut z = T::zero();
                for o in out.iter_mut() {
                    *o = (*o - m).exp();
                    z += *o;
                }
                for o in out.iter_mut() {
                    *o /= z;
                }
            });
            drop(q);
            drop(k);
            let mut mixed = Tensor::zeros(s);
            let (md, vd) = (maps.data(), v.data());
            par::for_each_chunk(mixed.data_mut(), hw, |plane, out| {
                let vals = &vd[plane * hw..][..hw];
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &md[(plane * hw + i) * hw..][..hw];
                    *o = row.iter().zip(vals).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                }
            });
            drop(v);
            let out = self.proj.forward(p, &mixed)?;
            Ok((out, maps))
        })
    }

    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_with_maps(p, x).map(|(out, _)| out)
    }
}
