use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::fmt;

/// Peak signal-to-noise ratio. Identical images have no finite PSNR and
/// are reported as [`Psnr::Identical`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Identical,
    Db(f64),
}

impl Psnr {
    /// Decibels, with `Identical` mapped to `+inf`.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Identical => f64::INFINITY,
            Psnr::Db(v) => v,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Identical => f.write_str("identical"),
            Psnr::Db(v) => write!(f, "{v:.6} dB"),
        }
    }
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)` with the MSE over every element.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<Psnr> {
    same_shape("psnr", a, b)?;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(Psnr::Identical);
    }
    let mse = sse / a.numel() as f64;
    Ok(Psnr::Db(10.0 * (peak * peak / mse).log10()))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - mid;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Valid-mode separable filtering of one `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity of images with values in `[0, 1]`: an 11x11
/// Gaussian window (sigma 1.5) over every fully contained position, per
/// channel, averaged over channels and batch.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape("ssim", a, b)?;
    let s = a.shape();
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: s.w,
            height: s.h,
            required: SSIM_WINDOW,
        });
    }
    let taps = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            let pa: Vec<f64> = a.plane(n, c).iter().map(|v| v.to_f64()).collect();
            let pb: Vec<f64> = b.plane(n, c).iter().map(|v| v.to_f64()).collect();
            let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
            let mu_a = filter_valid(&pa, s.h, s.w, &taps);
            let mu_b = filter_valid(&pb, s.h, s.w, &taps);
            let e_aa = filter_valid(&prod(&pa, &pa), s.h, s.w, &taps);
            let e_bb = filter_valid(&prod(&pb, &pb), s.h, s.w, &taps);
            let e_ab = filter_valid(&prod(&pa, &pb), s.h, s.w, &taps);
            let mut sum = 0.0;
            for i in 0..mu_a.len() {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = e_aa[i] - ma * ma;
                let vb = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            total += sum / mu_a.len() as f64;
        }
    }
    Ok(total / (s.n * s.c) as f64)
}
