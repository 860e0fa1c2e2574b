//! Pixel unshuffle / shuffle with factor 2. The two are exact inverse
//! permutations, so each is the other's backward.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// `(N, C, H, W) -> (N, 4C, H/2, W/2)`; output channel `4c + 2dy + dx` holds
/// input pixels `(2y + dy, 2x + dx)` of channel `c`.
pub fn space_to_depth<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::NotMultiple {
            op: "space_to_depth",
            h: s.h,
            w: s.w,
            multiple: 2,
        });
    }
    let (h2, w2) = (s.h / 2, s.w / 2);
    let os = Shape::new(s.n, 4 * s.c, h2, w2);
    let xd = x.data();
    let mut data = Vec::with_capacity(os.numel());
    for n in 0..s.n {
        for c in 0..s.c {
            for dy in 0..2 {
                for dx in 0..2 {
                    for y in 0..h2 {
                        let row = &xd[s.index(n, c, 2 * y + dy, 0)..][..s.w];
                        data.extend((0..w2).map(|x| row[2 * x + dx]));
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec_unchecked(os, data))
}

/// `(N, 4C, H, W) -> (N, C, 2H, 2W)`, the inverse of [`space_to_depth`].
pub fn depth_to_space<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if !s.c.is_multiple_of(4) {
        return Err(Error::layer(
            "depth_to_space",
            format!("{} channels are not divisible by 4", s.c),
        ));
    }
    let c4 = s.c / 4;
    let os = Shape::new(s.n, c4, 2 * s.h, 2 * s.w);
    let mut out = Tensor::<T>::zeros(os);
    let od = out.data_mut();
    for n in 0..s.n {
        for c in 0..c4 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let src = x.plane(n, 4 * c + 2 * dy + dx);
                    for y in 0..s.h {
                        let orow = os.index(n, c, 2 * y + dy, 0);
                        for xx in 0..s.w {
                            od[orow + 2 * xx + dx] = src[y * s.w + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn odd_extent_is_error() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 1, 3, 4));
        assert!(space_to_depth(&x).is_err());
    }

    #[test]
    fn channel_order() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 1, 2, 2), |i| i as f64);
        let y = space_to_depth(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 4, 1, 1));
        assert_eq!(y.data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(n in 1usize..3, c in 1usize..5, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
            let x = Tensor::<f64>::from_fn(Shape::new(n, c, 2 * h, 2 * w), |i| (i as u64 ^ seed) as f64 * 1e-3);
            let y = space_to_depth(&x).unwrap();
            prop_assert_eq!(y.numel(), x.numel());
            prop_assert_eq!(depth_to_space(&y).unwrap(), x.clone());
            let z = Tensor::<f64>::from_fn(Shape::new(n, 4 * c, h, w), |i| (i as u64 ^ seed) as f64);
            prop_assert_eq!(space_to_depth(&depth_to_space(&z).unwrap()).unwrap(), z);
        }
    }
}
