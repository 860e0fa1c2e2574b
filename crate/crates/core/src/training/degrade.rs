//! Synthetic corruptions. Each application samples its parameters from the
//! spec's ranges; a range with `lo == hi` fixes the parameter.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{mirror, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn fixed(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo >= self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Lowlight,
    Haze,
    Blur,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Lowlight, Task::Haze, Task::Blur];

    pub fn default_spec(self) -> DegradationSpec {
        match self {
            Task::Lowlight => DegradationSpec::Lowlight {
                gamma: Range::new(2.0, 5.0),
                scale: Range::new(0.1, 0.5),
                noise: Range::new(0.0, 0.02),
            },
            Task::Haze => DegradationSpec::Haze {
                transmission: Range::new(0.3, 0.9),
                airlight: Range::new(0.7, 1.0),
            },
            Task::Blur => DegradationSpec::Blur {
                length: (3, 9),
                shape: BlurShape::Either,
            },
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Lowlight => "lowlight",
            Task::Haze => "haze",
            Task::Blur => "blur",
        })
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowlight" => Ok(Task::Lowlight),
            "haze" => Ok(Task::Haze),
            "blur" => Ok(Task::Blur),
            _ => Err(Error::Config(format!("task must be lowlight, haze or blur, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlurShape {
    /// Uniform `L x L` square.
    Box,
    /// Line of length `L` through the centre at a random angle.
    Motion,
    /// Box or motion with equal probability.
    Either,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DegradationSpec {
    /// `scale * x^gamma + N(0, noise^2)`.
    Lowlight { gamma: Range, scale: Range, noise: Range },
    /// Atmospheric scattering `x * t + A * (1 - t)` with gray airlight `A`.
    Haze { transmission: Range, airlight: Range },
    /// Convolution with a normalized kernel of odd length in `length`
    /// (inclusive), mirror-reflected at the borders.
    Blur { length: (usize, usize), shape: BlurShape },
}

impl DegradationSpec {
    pub fn task(&self) -> Task {
        match self {
            DegradationSpec::Lowlight { .. } => Task::Lowlight,
            DegradationSpec::Haze { .. } => Task::Haze,
            DegradationSpec::Blur { .. } => Task::Blur,
        }
    }
}

/// Normalized `len x len` blur kernel, row-major. `angle` (radians) only
/// matters for motion kernels.
pub fn blur_kernel(len: usize, motion: bool, angle: f64) -> Vec<f64> {
    let mut k = vec![0.0; len * len];
    if motion {
        let c = (len / 2) as f64;
        let half = (len - 1) as f64 / 2.0;
        let samples = 8 * len;
        for s in 0..=samples {
            let t = -half + 2.0 * half * s as f64 / samples as f64;
            let x = (c + t * angle.cos()).round() as usize;
            let y = (c + t * angle.sin()).round() as usize;
            k[y.min(len - 1) * len + x.min(len - 1)] = 1.0;
        }
    } else {
        k.fill(1.0);
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn convolve_planes<T: Scalar>(x: &Tensor<T>, kernel: &[f64], len: usize) -> Tensor<T> {
    let s = x.shape();
    let r = (len / 2) as isize;
    let mut out = x.zeros_like();
    for nc in 0..s.n * s.c {
        let src = &x.data()[nc * s.plane()..][..s.plane()];
        let dst = &mut out.data_mut()[nc * s.plane()..][..s.plane()];
        for y in 0..s.h {
            for xx in 0..s.w {
                let mut acc = 0.0;
                for ky in 0..len {
                    let sy = mirror(y as isize + ky as isize - r, s.h);
                    for kx in 0..len {
                        let wgt = kernel[ky * len + kx];
                        if wgt != 0.0 {
                            let sx = mirror(xx as isize + kx as isize - r, s.w);
                            acc += wgt * src[sy * s.w + sx].to_f64();
                        }
                    }
                }
                dst[y * s.w + xx] = T::from_f64(acc);
            }
        }
    }
    out
}

/// Applies one sampled corruption to every image in `clean`, clamping the
/// result to `[0, 1]`. Parameters are drawn once per batch element.
pub fn degrade<T: Scalar>(clean: &Tensor<T>, spec: &DegradationSpec, rng: &mut impl Rng) -> Tensor<T> {
    let parts: Vec<Tensor<T>> = (0..clean.shape().n)
        .map(|n| degrade_one(&clean.batch(n), spec, rng))
        .collect();
    Tensor::stack_batch(&parts).expect("same shapes")
}

fn degrade_one<T: Scalar>(x: &Tensor<T>, spec: &DegradationSpec, rng: &mut impl Rng) -> Tensor<T> {
    let clamp = |v: f64| T::from_f64(v.clamp(0.0, 1.0));
    match *spec {
        DegradationSpec::Lowlight { gamma, scale, noise } => {
            let (g, s, sigma) = (gamma.sample(rng), scale.sample(rng), noise.sample(rng));
            let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
            let mut out = x.zeros_like();
            for (o, &v) in out.data_mut().iter_mut().zip(x.data()) {
                let n = normal.as_ref().map_or(0.0, |d| d.sample(rng));
                *o = clamp(s * v.to_f64().powf(g) + n);
            }
            out
        }
        DegradationSpec::Haze { transmission, airlight } => {
            let (t, a) = (transmission.sample(rng), airlight.sample(rng));
            x.map(|v| clamp(v.to_f64() * t + a * (1.0 - t)))
        }
        DegradationSpec::Blur { length, shape } => {
            let (lo, hi) = (length.0 / 2, length.1 / 2);
            let len = 2 * rng.random_range(lo..=hi.max(lo)) + 1;
            let motion = match shape {
                BlurShape::Box => false,
                BlurShape::Motion => true,
                BlurShape::Either => rng.random_bool(0.5),
            };
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let k = blur_kernel(len, motion, angle);
            convolve_planes(x, &k, len).map(|v| clamp(v.to_f64()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image() -> Tensor<f64> {
        Tensor::from_fn(Shape::new(2, 3, 8, 8), |i| ((i * 13) % 97) as f64 / 96.0)
    }

    #[test]
    fn identity_lowlight() {
        let spec = DegradationSpec::Lowlight {
            gamma: Range::fixed(1.0),
            scale: Range::fixed(1.0),
            noise: Range::fixed(0.0),
        };
        let x = image();
        assert_eq!(degrade(&x, &spec, &mut ChaCha8Rng::seed_from_u64(0)), x);
    }

    #[test]
    fn haze_hand_value() {
        let spec = DegradationSpec::Haze {
            transmission: Range::fixed(0.5),
            airlight: Range::fixed(1.0),
        };
        let x = Tensor::<f64>::full(Shape::new(1, 3, 2, 2), 0.2);
        let y = degrade(&x, &spec, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(y.data().iter().all(|&v| (v - 0.6).abs() < 1e-15));
    }

    #[test]
    fn kernels_are_normalized_and_blur_keeps_constants() {
        for len in [3, 5, 9] {
            for (motion, angle) in [(false, 0.0), (true, 0.0), (true, 1.0), (true, 2.5)] {
                let k = blur_kernel(len, motion, angle);
                assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(k.iter().filter(|&&v| v > 0.0).count() >= len.min(if motion { len } else { len * len }));
            }
        }
        let horizontal = blur_kernel(3, true, 0.0);
        assert_eq!(horizontal, vec![0.0, 0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0]);
        let spec = Task::Blur.default_spec();
        let x = Tensor::<f64>::full(Shape::new(1, 3, 12, 12), 0.3);
        let y = degrade(&x, &spec, &mut ChaCha8Rng::seed_from_u64(4));
        assert!(y.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn seeded_and_clamped() {
        let x = image();
        for task in Task::ALL {
            let spec = task.default_spec();
            let a = degrade(&x, &spec, &mut ChaCha8Rng::seed_from_u64(9));
            let b = degrade(&x, &spec, &mut ChaCha8Rng::seed_from_u64(9));
            assert_eq!(a, b);
            assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_ne!(a, x, "{task}");
        }
    }
}
