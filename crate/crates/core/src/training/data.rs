use super::degrade::{degrade, DegradationSpec};
use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// A procedural clean image `(1, 3, h, w)`: a two-colour gradient overlaid
/// with random rectangles, discs and striped patches, all modulated by a
/// texture of random plane waves, values in `[0.05, 0.95]`.
///
/// The texture matters: on piecewise-flat images blur leaves most pixels
/// untouched and an L1-trained restorer settles on the identity.
pub fn synthetic_image<T: Scalar>(h: usize, w: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colour = |rng: &mut ChaCha8Rng| -> [f64; 3] { std::array::from_fn(|_| rng.random_range(0.05..0.95)) };
    let (c0, c1) = (colour(&mut rng), colour(&mut rng));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let span = (h.max(w)) as f64;
    let mut img = vec![[0.0f64; 3]; h * w];
    for y in 0..h {
        for x in 0..w {
            let t = (0.5 + (x as f64 * dx + y as f64 * dy) / (2.0 * span)).clamp(0.0, 1.0);
            img[y * w + x] = std::array::from_fn(|c| c0[c] * (1.0 - t) + c1[c] * t);
        }
    }
    let shapes = rng.random_range(6..=12);
    for _ in 0..shapes {
        let col = colour(&mut rng);
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let ry = rng.random_range(2.0..(h as f64 / 3.0).max(3.0));
        let rx = rng.random_range(2.0..(w as f64 / 3.0).max(3.0));
        let kind = rng.random_range(0..3);
        let period = rng.random_range(10.0..20.0);
        let alt = colour(&mut rng);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = ((y as f64 - cy) / ry, (x as f64 - cx) / rx);
                let inside = match kind {
                    0 => u.abs() <= 1.0 && v.abs() <= 1.0,
                    1 => u * u + v * v <= 1.0,
                    _ => u.abs() <= 1.0 && v.abs() <= 1.0,
                };
                if inside {
                    let striped = kind == 2 && ((x as f64 + y as f64) / period).floor() as i64 % 2 == 0;
                    img[y * w + x] = if striped { alt } else { col };
                }
            }
        }
    }
    let waves: Vec<(f64, f64, f64, f64)> = (0..8)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / rng.random_range(4.0..24.0);
            (k * theta.cos(), k * theta.sin(), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.01..0.04))
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let t: f64 = waves.iter().map(|&(kx, ky, phase, amp)| amp * (kx * x as f64 + ky * y as f64 + phase).sin()).sum();
            for v in &mut img[y * w + x] {
                *v = (*v + t).clamp(0.05, 0.95);
            }
        }
    }
    let plane = h * w;
    let mut out = Tensor::zeros(Shape::new(1, 3, h, w));
    let data = out.data_mut();
    for (i, px) in img.iter().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = T::from_f64(px[c]);
        }
    }
    out
}

pub fn synthetic_corpus<T: Scalar>(count: usize, h: usize, w: usize, seed: u64) -> Vec<Tensor<T>> {
    (0..count)
        .map(|i| synthetic_image(h, w, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
        .collect()
}

/// Every `.ppm` file in `dir`, in file-name order.
pub fn load_corpus<T: Scalar>(dir: &Path) -> Result<Vec<Tensor<T>>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")))
        .collect();
    paths.sort();
    paths.iter().map(|p| Ok(io::read_ppm(p)?.to_tensor())).collect()
}

fn crop_flip<T: Scalar>(img: &Tensor<T>, y0: usize, x0: usize, crop: usize, flip_h: bool, flip_v: bool) -> Tensor<T> {
    let s = img.shape();
    let mut out = Tensor::zeros(Shape::new(1, s.c, crop, crop));
    for c in 0..s.c {
        let src = img.plane(0, c);
        let dst = out.plane_mut(0, c);
        for y in 0..crop {
            let sy = y0 + if flip_v { crop - 1 - y } else { y };
            for x in 0..crop {
                let sx = x0 + if flip_h { crop - 1 - x } else { x };
                dst[y * crop + x] = src[sy * s.w + sx];
            }
        }
    }
    out
}

/// `(degraded, clean)` batches of `batch` random `crop x crop` windows with
/// independent horizontal and vertical flips. Both sides share the same
/// geometry; only the input side is degraded.
pub fn make_batch<T: Scalar>(
    images: &[Tensor<T>],
    spec: &DegradationSpec,
    crop: usize,
    batch: usize,
    seed: u64,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if images.is_empty() {
        return Err(Error::InsufficientData { found: 0, required: 1 });
    }
    if let Some(img) = images.iter().find(|i| i.shape().h < crop || i.shape().w < crop) {
        return Err(Error::ImageTooSmall {
            width: img.shape().w,
            height: img.shape().h,
            required: crop,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clean = Vec::with_capacity(batch);
    for _ in 0..batch {
        let img = &images[rng.random_range(0..images.len())];
        let s = img.shape();
        let y0 = rng.random_range(0..=s.h - crop);
        let x0 = rng.random_range(0..=s.w - crop);
        let (fh, fv) = (rng.random_bool(0.5), rng.random_bool(0.5));
        clean.push(crop_flip(img, y0, x0, crop, fh, fv));
    }
    let clean = Tensor::stack_batch(&clean)?;
    let degraded = degrade(&clean, spec, &mut rng);
    Ok((degraded, clean))
}
