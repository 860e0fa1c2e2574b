//! Adaptive fusion of encoder and decoder features at one level:
//! `A = conv0(enc)`, `B = conv1(dec)`, `(M0, M1) = conv2([A, B])`,
//! `out = A * softmax0(M) + B * softmax1(M)` with a two-way softmax per
//! element, so the output is a per-element convex combination of `A` and `B`.

use crate::error::{Error, Result};
use crate::memory;
use crate::nn::{softmax_pair, softmax_pair_backward, ConvSpec, Conv2d, ModuleParams, ParamBuilder};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Afmm {
    pub channels: usize,
    pub enc: Conv2d,
    pub dec: Conv2d,
    pub mix: Conv2d,
}

pub struct AfmmTrace<T: Scalar> {
    pub a: Tensor<T>,
    pub b: Tensor<T>,
    pub joined: Tensor<T>,
    pub w0: Tensor<T>,
    pub w1: Tensor<T>,
}

impl Afmm {
    pub fn build(b: &mut ParamBuilder, name: &str, channels: usize) -> Result<Self> {
        b.scope(name, |b| {
            Ok(Afmm {
                channels,
                enc: b.conv("enc", ConvSpec::full(channels, channels, 1, 1), true)?,
                dec: b.conv("dec", ConvSpec::full(channels, channels, 1, 1), true)?,
                mix: b.conv("mix", ConvSpec::full(2 * channels, 2 * channels, 1, 1), true)?,
            })
        })
    }

    fn check<T: Scalar>(&self, enc: &Tensor<T>, dec: &Tensor<T>) -> Result<()> {
        if enc.shape() != dec.shape() {
            return Err(Error::ShapeMismatch {
                op: "afmm",
                left: enc.shape(),
                right: dec.shape(),
            });
        }
        Ok(())
    }

    /// Gating weights `(W0, W1)` along with the projected inputs.
    #[allow(clippy::type_complexity)]
    pub fn gates<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        enc: &Tensor<T>,
        dec: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>)> {
        self.check(enc, dec)?;
        let a = self.enc.forward(p, enc)?;
        let b = self.dec.forward(p, dec)?;
        let joined = Tensor::concat_channels(&[&a, &b])?;
        let m = self.mix.forward(p, &joined)?;
        let halves = m.split_channels(&[self.channels, self.channels])?;
        drop(m);
        let (w0, w1) = softmax_pair(&halves[0], &halves[1])?;
        Ok((a, b, joined, w0, w1))
    }

    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, enc: &Tensor<T>, dec: &Tensor<T>) -> Result<Tensor<T>> {
        memory::scope("afmm", || {
            let (mut a, mut b, joined, w0, w1) = self.gates(p, enc, dec)?;
            drop(joined);
            a.mul_assign(&w0)?;
            b.mul_assign(&w1)?;
            a.add_assign(&b)?;
            Ok(a)
        })
    }

    pub fn forward_traced<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        enc: &Tensor<T>,
        dec: &Tensor<T>,
    ) -> Result<(Tensor<T>, AfmmTrace<T>)> {
        let (a, b, joined, w0, w1) = self.gates(p, enc, dec)?;
        let mut out = a.mul(&w0)?;
        out.add_assign(&b.mul(&w1)?)?;
        Ok((out, AfmmTrace { a, b, joined, w0, w1 }))
    }

    /// Returns `(d/d enc, d/d dec)`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        enc: &Tensor<T>,
        dec: &Tensor<T>,
        t: &AfmmTrace<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut g_a = grad_out.mul(&t.w0)?;
        let mut g_b = grad_out.mul(&t.w1)?;
        let g_w0 = grad_out.mul(&t.a)?;
        let g_w1 = grad_out.mul(&t.b)?;
        let (g_m0, g_m1) = softmax_pair_backward(&t.w0, &t.w1, &g_w0, &g_w1)?;
        let g_m = Tensor::concat_channels(&[&g_m0, &g_m1])?;
        let g_joined = self.mix.backward(p, &t.joined, &g_m, grads, true)?.expect("input grad");
        let halves = g_joined.split_channels(&[self.channels, self.channels])?;
        g_a.add_assign(&halves[0])?;
        g_b.add_assign(&halves[1])?;
        let g_enc = self.enc.backward(p, enc, &g_a, grads, true)?.expect("input grad");
        let g_dec = self.dec.backward(p, dec, &g_b, grads, true)?.expect("input grad");
        Ok((g_enc, g_dec))
    }
}
