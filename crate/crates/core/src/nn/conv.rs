//! Stride-1 "same" 2-D cross-correlation with reflection padding, full or
//! depthwise, with separate weight/bias/input gradient kernels.

use crate::error::{Error, Result};
use crate::par;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub depthwise: bool,
}

impl ConvSpec {
    pub fn full(in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            depthwise: false,
        }
    }

    pub fn depthwise(channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel_h,
            kernel_w,
            depthwise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(Error::Config(format!("conv {self:?}: {d}")));
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return bad("extents must be positive");
        }
        if self.kernel_h.is_multiple_of(2) || self.kernel_w.is_multiple_of(2) {
            return bad("kernel extents must be odd for same padding");
        }
        if self.depthwise && self.in_channels != self.out_channels {
            return bad("depthwise conv needs out_channels == in_channels");
        }
        Ok(())
    }

    /// Input channels seen by each filter.
    pub fn in_per_filter(&self) -> usize {
        if self.depthwise {
            1
        } else {
            self.in_channels
        }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_per_filter(), self.kernel_h, self.kernel_w)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1, 1)
    }

    pub fn fan_in(&self) -> usize {
        self.in_per_filter() * self.kernel_h * self.kernel_w
    }

    fn pads(&self) -> (usize, usize) {
        ((self.kernel_h - 1) / 2, (self.kernel_w - 1) / 2)
    }
}

fn check(name: &str, x: Shape, spec: &ConvSpec, w: &Tensor<impl Scalar>, b: Option<Shape>) -> Result<()> {
    if x.c != spec.in_channels {
        return Err(Error::layer(
            name,
            format!("input has {} channels, layer expects {}", x.c, spec.in_channels),
        ));
    }
    if w.shape() != spec.weight_shape() {
        return Err(Error::layer(
            name,
            format!("weight shape {} does not match {}", w.shape(), spec.weight_shape()),
        ));
    }
    if let Some(bs) = b {
        if bs != spec.bias_shape() {
            return Err(Error::layer(name, format!("bias shape {bs} does not match {}", spec.bias_shape())));
        }
    }
    Ok(())
}

fn padded<T: Scalar>(x: &Tensor<T>, spec: &ConvSpec) -> Option<Tensor<T>> {
    let (ph, pw) = spec.pads();
    (ph > 0 || pw > 0).then(|| x.pad_mirror(ph, ph, pw, pw))
}

#[inline]
fn axpy<T: Scalar>(out: &mut [T], a: T, x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Dot product over eight independent accumulators so the loop vectorizes.
/// The summation order is fixed, so results do not depend on threading.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    let mut acc = T::zero();
    for (&x, &y) in ar.iter().zip(br) {
        acc += x * y;
    }
    lanes.iter().fold(acc, |s, &v| s + v)
}

/// Forward convolution. `name` identifies the layer in errors.
pub fn conv2d_named<T: Scalar>(
    name: &str,
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    spec.validate()?;
    let s = x.shape();
    check(name, s, spec, weight, bias.map(|b| b.shape()))?;
    let pad = padded(x, spec);
    let src = pad.as_ref().unwrap_or(x);
    let (hp, wp) = (src.shape().h, src.shape().w);
    let (h, w) = (s.h, s.w);
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let cin = s.c;
    let cout = spec.out_channels;
    let ipf = spec.in_per_filter();
    let wdata = weight.data();
    let bdata = bias.map(|b| b.data());
    let sdata = src.data();
    let mut out = Tensor::<T>::zeros(Shape::new(s.n, cout, h, w));
    par::for_each_chunk(out.data_mut(), h * w, |idx, plane| {
        let (n, oc) = (idx / cout, idx % cout);
        if let Some(b) = bdata {
            plane.fill(b[oc]);
        }
        for j in 0..ipf {
            let ic = if spec.depthwise { oc } else { j };
            let sp = &sdata[(n * cin + ic) * hp * wp..][..hp * wp];
            let wk = &wdata[(oc * ipf + j) * kh * kw..][..kh * kw];
            if kh == 1 && kw == 1 {
                axpy(plane, wk[0], sp);
                continue;
            }
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wk[ky * kw + kx];
                    for y in 0..h {
                        axpy(&mut plane[y * w..(y + 1) * w], wv, &sp[(y + ky) * wp + kx..][..w]);
                    }
                }
            }
        }
    });
    out.guard_finite(name, &[x, weight]);
    Ok(out)
}

/// Forward convolution (see [`conv2d_named`]).
pub fn conv2d<T: Scalar>(x: &Tensor<T>, spec: &ConvSpec, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    conv2d_named("conv2d", x, spec, weight, bias)
}

fn check_grad(name: &str, x: Shape, spec: &ConvSpec, g: Shape) -> Result<()> {
    let expect = Shape::new(x.n, spec.out_channels, x.h, x.w);
    if g != expect {
        return Err(Error::layer(name, format!("output gradient {g} does not match output shape {expect}")));
    }
    Ok(())
}

/// Accumulates `dL/dW` into `acc` (weight layout).
pub fn conv2d_grad_weight<T: Scalar>(
    name: &str,
    x: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
    acc: &mut [T],
) -> Result<()> {
    let s = x.shape();
    check_grad(name, s, spec, grad_out.shape())?;
    if acc.len() != spec.weight_shape().numel() {
        return Err(Error::layer(name, "weight gradient buffer has the wrong length"));
    }
    let pad = padded(x, spec);
    let src = pad.as_ref().unwrap_or(x);
    let (hp, wp) = (src.shape().h, src.shape().w);
    let (h, w) = (s.h, s.w);
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (cin, cout, ipf) = (s.c, spec.out_channels, spec.in_per_filter());
    let sdata = src.data();
    let gdata = grad_out.data();
    par::for_each_chunk(acc, ipf * kh * kw, |oc, wacc| {
        for n in 0..s.n {
            let gp = &gdata[(n * cout + oc) * h * w..][..h * w];
            for j in 0..ipf {
                let ic = if spec.depthwise { oc } else { j };
                let sp = &sdata[(n * cin + ic) * hp * wp..][..hp * wp];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut sum = T::zero();
                        if kh == 1 && kw == 1 {
                            sum = dot(gp, sp);
                        } else {
                            for y in 0..h {
                                sum += dot(&gp[y * w..(y + 1) * w], &sp[(y + ky) * wp + kx..][..w]);
                            }
                        }
                        wacc[(j * kh + ky) * kw + kx] += sum;
                    }
                }
            }
        }
    });
    Ok(())
}

/// Accumulates `dL/db` into `acc`.
pub fn conv2d_grad_bias<T: Scalar>(grad_out: &Tensor<T>, acc: &mut [T]) {
    let s = grad_out.shape();
    for n in 0..s.n {
        for (c, a) in acc.iter_mut().enumerate().take(s.c) {
            *a += grad_out.plane(n, c).iter().copied().sum::<T>();
        }
    }
}

/// `dL/dx` for input shape `x_shape`.
pub fn conv2d_grad_input<T: Scalar>(
    name: &str,
    x_shape: Shape,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_grad(name, x_shape, spec, grad_out.shape())?;
    let (ph, pw) = spec.pads();
    let (h, w) = (x_shape.h, x_shape.w);
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (cin, cout, ipf) = (x_shape.c, spec.out_channels, spec.in_per_filter());
    let wdata = weight.data();
    let gdata = grad_out.data();
    let mut gpad = Tensor::<T>::zeros(x_shape.with_hw(hp, wp));
    par::for_each_chunk(gpad.data_mut(), hp * wp, |idx, plane| {
        let (n, ic) = (idx / cin, idx % cin);
        let (lo, hi, j) = if spec.depthwise { (ic, ic + 1, 0) } else { (0, cout, ic) };
        for oc in lo..hi {
            let gp = &gdata[(n * cout + oc) * h * w..][..h * w];
            let wk = &wdata[(oc * ipf + j) * kh * kw..][..kh * kw];
            if kh == 1 && kw == 1 {
                axpy(plane, wk[0], gp);
                continue;
            }
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wk[ky * kw + kx];
                    for y in 0..h {
                        axpy(&mut plane[(y + ky) * wp + kx..][..w], wv, &gp[y * w..(y + 1) * w]);
                    }
                }
            }
        }
    });
    if ph == 0 && pw == 0 {
        return Ok(gpad);
    }
    Ok(gpad.unpad_mirror_adjoint(ph, ph, pw, pw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rng: &mut ChaCha8Rng, s: Shape) -> Tensor<f64> {
        Tensor::from_fn(s, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_t(&mut rng, Shape::new(2, 3, 4, 5));
        let spec = ConvSpec::full(3, 3, 1, 1);
        let w = Tensor::from_fn(spec.weight_shape(), |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let b = Tensor::zeros(spec.bias_shape());
        assert_eq!(conv2d(&x, &spec, &w, Some(&b)).unwrap(), x);
    }

    #[test]
    fn depthwise_delta_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_t(&mut rng, Shape::new(1, 4, 6, 7));
        let spec = ConvSpec::depthwise(4, 3, 3);
        let w = Tensor::from_fn(spec.weight_shape(), |i| if i % 9 == 4 { 1.0 } else { 0.0 });
        assert_eq!(conv2d(&x, &spec, &w, None).unwrap(), x);
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 2, 4, 4));
        let spec = ConvSpec::full(3, 3, 3, 3);
        let w = Tensor::zeros(spec.weight_shape());
        let err = conv2d_named("enc.head", &x, &spec, &w, None).unwrap_err().to_string();
        assert!(err.contains("enc.head"), "{err}");
        let spec2 = ConvSpec::full(2, 3, 3, 3);
        let err = conv2d_named("enc.head", &x, &spec2, &w, None).unwrap_err().to_string();
        assert!(err.contains("weight shape"), "{err}");
        assert!(ConvSpec::full(2, 2, 2, 3).validate().is_err());
        assert!(ConvSpec { depthwise: true, ..ConvSpec::full(2, 3, 3, 3) }.validate().is_err());
    }

    #[test]
    fn grad_shape_mismatch_is_error() {
        let spec = ConvSpec::full(2, 3, 1, 1);
        let w = Tensor::<f64>::zeros(spec.weight_shape());
        let g = Tensor::zeros(Shape::new(1, 2, 4, 4));
        assert!(conv2d_grad_input("c", Shape::new(1, 2, 4, 4), &spec, &w, &g).is_err());
    }
}
