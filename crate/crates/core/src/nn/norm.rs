use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Saved values for [`layer_norm_backward`].
pub struct LayerNormTrace<T: Scalar> {
    pub normalized: Tensor<T>,
    /// One `1/sqrt(var + eps)` per `(n, y, x)` position.
    pub inv_std: Vec<T>,
}

fn check_affine(x: Shape, gain: &Tensor<impl Scalar>, offset: &Tensor<impl Scalar>) -> Result<()> {
    if gain.numel() != x.c || offset.numel() != x.c {
        return Err(Error::layer(
            "layer_norm",
            format!("gain/offset have {}/{} entries for {} channels", gain.numel(), offset.numel(), x.c),
        ));
    }
    Ok(())
}

/// Channel-wise normalization at every `(n, y, x)` position, then per-channel
/// scale and shift.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, offset: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(layer_norm_traced(x, gain, offset)?.0)
}

pub fn layer_norm_traced<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    offset: &Tensor<T>,
) -> Result<(Tensor<T>, LayerNormTrace<T>)> {
    let s = x.shape();
    check_affine(s, gain, offset)?;
    let p = s.plane();
    let cn = T::from_f64(s.c as f64);
    let eps = T::from_f64(LAYER_NORM_EPS);
    let mut normalized = x.zeros_like();
    let mut out = x.zeros_like();
    let mut inv_std = vec![T::zero(); s.n * p];
    let (xd, g, o) = (x.data(), gain.data(), offset.data());
    {
        let nd = normalized.data_mut();
        for n in 0..s.n {
            let base = n * s.c * p;
            for i in 0..p {
                let mut mean = T::zero();
                for c in 0..s.c {
                    mean += xd[base + c * p + i];
                }
                mean /= cn;
                let mut var = T::zero();
                for c in 0..s.c {
                    let d = xd[base + c * p + i] - mean;
                    var += d * d;
                }
                var /= cn;
                let inv = T::one() / (var + eps).sqrt();
                inv_std[n * p + i] = inv;
                for c in 0..s.c {
                    nd[base + c * p + i] = (xd[base + c * p + i] - mean) * inv;
                }
            }
        }
    }
    {
        let nd = normalized.data();
        let od = out.data_mut();
        for n in 0..s.n {
            for c in 0..s.c {
                let off = (n * s.c + c) * p;
                for i in 0..p {
                    od[off + i] = g[c] * nd[off + i] + o[c];
                }
            }
        }
    }
    out.guard_finite("layer_norm", &[x]);
    Ok((out, LayerNormTrace { normalized, inv_std }))
}

/// Returns `dL/dx`; accumulates gain/offset gradients into the given buffers.
pub fn layer_norm_backward<T: Scalar>(
    trace: &LayerNormTrace<T>,
    gain: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_gain: &mut [T],
    grad_offset: &mut [T],
) -> Result<Tensor<T>> {
    let s = trace.normalized.shape();
    if grad_out.shape() != s {
        return Err(Error::ShapeMismatch {
            op: "layer_norm_backward",
            left: s,
            right: grad_out.shape(),
        });
    }
    let p = s.plane();
    let cn = T::from_f64(s.c as f64);
    let (xh, g, gy) = (trace.normalized.data(), gain.data(), grad_out.data());
    for n in 0..s.n {
        for c in 0..s.c {
            let off = (n * s.c + c) * p;
            let (mut sg, mut sb) = (T::zero(), T::zero());
            for i in 0..p {
                sg += gy[off + i] * xh[off + i];
                sb += gy[off + i];
            }
            grad_gain[c] += sg;
            grad_offset[c] += sb;
        }
    }
    let mut gx = grad_out.zeros_like();
    let gxd = gx.data_mut();
    for n in 0..s.n {
        let base = n * s.c * p;
        for i in 0..p {
            let (mut m1, mut m2) = (T::zero(), T::zero());
            for c in 0..s.c {
                let gh = gy[base + c * p + i] * g[c];
                m1 += gh;
                m2 += gh * xh[base + c * p + i];
            }
            m1 /= cn;
            m2 /= cn;
            let inv = trace.inv_std[n * p + i];
            for (c, &gc) in g.iter().enumerate() {
                let k = base + c * p + i;
                gxd[k] = inv * (gy[k] * gc - m1 - xh[k] * m2);
            }
        }
    }
    Ok(gx)
}
