//! Dense `(N, C, H, W)` tensors, row-major with `W` fastest.

use crate::error::{Error, Result};
use crate::memory;
use crate::scalar::Scalar;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// Total element count. Panics if it overflows `usize`.
    pub fn numel(&self) -> usize {
        self.n
            .checked_mul(self.c)
            .and_then(|v| v.checked_mul(self.h))
            .and_then(|v| v.checked_mul(self.w))
            .expect("tensor shape exceeds addressable range")
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn with_c(self, c: usize) -> Self {
        Shape { c, ..self }
    }

    pub fn with_hw(self, h: usize, w: usize) -> Self {
        Shape { h, w, ..self }
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Owned element storage that reports its size to the activation ledger.
struct Buffer<T> {
    data: Vec<T>,
}

impl<T> Buffer<T> {
    fn new(data: Vec<T>) -> Self {
        memory::acquire(data.len());
        Buffer { data }
    }
}

impl<T: Clone> Clone for Buffer<T> {
    fn clone(&self) -> Self {
        Buffer::new(self.data.clone())
    }
}

impl<T> Drop for Buffer<T> {
    fn drop(&mut self) {
        memory::release(self.data.len());
    }
}

#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    shape: Shape,
    buf: Buffer<T>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.buf.data.len().min(8);
        write!(
            f,
            "Tensor<{}>{} {:?}{}",
            T::PRECISION,
            self.shape,
            &self.buf.data[..n],
            if self.buf.data.len() > n { " ..." } else { "" }
        )
    }
}

impl<T: Scalar> PartialEq for Tensor<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.buf.data == other.buf.data
    }
}

/// Reflection index without edge repeat, periodic for any offset: for
/// `n = 4`, indices `-2..6` map to `2 1 0 1 2 3 2 1`.
#[inline]
pub(crate) fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::Params(format!(
                "buffer of {} elements does not fit shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            buf: Buffer::new(data),
        })
    }

    pub(crate) fn from_vec_unchecked(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), shape.numel());
        Tensor {
            shape,
            buf: Buffer::new(data),
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Self::from_vec_unchecked(shape, vec![value; shape.numel()])
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        Self::from_vec_unchecked(shape, (0..shape.numel()).map(&mut f).collect())
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.buf.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.buf.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.buf.data
    }

    pub fn into_vec(mut self) -> Vec<T> {
        let v = std::mem::take(&mut self.buf.data);
        memory::release(v.len());
        // The emptied buffer releases zero on drop.
        v
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.buf.data[self.shape.index(n, c, h, w)]
    }

    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.buf.data[start..start + p]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.buf.data[start..start + p]
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_vec_unchecked(
            self.shape,
            self.buf.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.buf.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.buf
            .data
            .iter()
            .fold(T::zero(), |m, &v| Scalar::max(m, v.abs()))
    }

    pub fn sum(&self) -> T {
        self.buf.data.iter().copied().sum()
    }

    /// Sum accumulated in double precision.
    pub fn sum_f64(&self) -> f64 {
        self.buf.data.iter().map(|v| v.to_f64()).sum()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same(other, "dot")?;
        Ok(self
            .buf
            .data
            .iter()
            .zip(&other.buf.data)
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum())
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let out = Self::from_vec_unchecked(self.shape, self.buf.data.iter().map(|&v| f(v)).collect());
        out.guard_finite("map", &[self]);
        out
    }

    pub fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same(other, op)?;
        let data = self
            .buf
            .data
            .iter()
            .zip(&other.buf.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let out = Self::from_vec_unchecked(self.shape, data);
        out.guard_finite(op, &[self, other]);
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// `self += other` in place.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, &b) in self.buf.data.iter_mut().zip(&other.buf.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self *= other` in place.
    pub fn mul_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other, "mul_assign")?;
        for (a, &b) in self.buf.data.iter_mut().zip(&other.buf.data) {
            *a *= b;
        }
        Ok(())
    }

    /// Debug-build guard: a non-finite output from finite inputs is a bug.
    #[inline]
    pub(crate) fn guard_finite(&self, op: &str, inputs: &[&Tensor<T>]) {
        if cfg!(debug_assertions) && !self.is_finite() && inputs.iter().all(|t| t.is_finite()) {
            panic!("{op}: non-finite output from finite inputs");
        }
    }

    /// Splits along channels into contiguous slices of the given sizes.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        let total: usize = sizes.iter().sum();
        if total != self.shape.c || sizes.contains(&0) {
            return Err(Error::SplitSizes {
                sizes: sizes.to_vec(),
                channels: self.shape.c,
            });
        }
        let p = self.shape.plane();
        let mut parts = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            let shape = self.shape.with_c(s);
            let mut data = Vec::with_capacity(shape.numel());
            for n in 0..self.shape.n {
                let off = (n * self.shape.c + start) * p;
                data.extend_from_slice(&self.buf.data[off..off + s * p]);
            }
            parts.push(Self::from_vec_unchecked(shape, data));
            start += s;
        }
        Ok(parts)
    }

    /// Concatenates along channels.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyConcat)?.shape;
        for (i, t) in parts.iter().enumerate() {
            let s = t.shape;
            if s.n != first.n || s.h != first.h || s.w != first.w {
                return Err(Error::ConcatMismatch {
                    index: i,
                    expected: first,
                    found: s,
                });
            }
        }
        let c: usize = parts.iter().map(|t| t.shape.c).sum();
        let shape = first.with_c(c);
        let p = first.plane();
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..first.n {
            for t in parts {
                let block = t.shape.c * p;
                data.extend_from_slice(&t.buf.data[n * block..(n + 1) * block]);
            }
        }
        Ok(Self::from_vec_unchecked(shape, data))
    }

    /// Reflection padding at the bottom and right edges.
    pub fn pad_reflect(&self, bottom: usize, right: usize) -> Result<Self> {
        self.pad_reflect_sides(0, bottom, 0, right)
    }

    /// Reflection padding on all four sides; each pad must be smaller than
    /// the extent it reflects.
    pub fn pad_reflect_sides(&self, top: usize, bottom: usize, left: usize, right: usize) -> Result<Self> {
        for (pad, extent) in [(top, self.shape.h), (bottom, self.shape.h), (left, self.shape.w), (right, self.shape.w)] {
            if pad > 0 && pad >= extent {
                return Err(Error::PadTooLarge { pad, extent });
            }
        }
        Ok(self.pad_mirror(top, bottom, left, right))
    }

    /// Reflection padding that repeats periodically when a pad exceeds the
    /// extent. Agrees with [`pad_reflect_sides`](Self::pad_reflect_sides)
    /// wherever that is defined.
    pub fn pad_mirror(&self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        let s = self.shape;
        if top == 0 && bottom == 0 && left == 0 && right == 0 {
            return self.clone();
        }
        let (hp, wp) = (s.h + top + bottom, s.w + left + right);
        let out_shape = s.with_hw(hp, wp);
        let cols: Vec<usize> = (0..wp).map(|x| mirror(x as isize - left as isize, s.w)).collect();
        let mut out = Self::zeros(out_shape);
        let src = &self.buf.data;
        crate::par::for_each_chunk(out.data_mut(), hp * wp, |plane, dst| {
            let base = plane * s.plane();
            for y in 0..hp {
                let sy = mirror(y as isize - top as isize, s.h);
                let row = &src[base + sy * s.w..base + (sy + 1) * s.w];
                let drow = &mut dst[y * wp..(y + 1) * wp];
                drow[left..left + s.w].copy_from_slice(row);
                for x in (0..left).chain(left + s.w..wp) {
                    drow[x] = row[cols[x]];
                }
            }
        });
        out
    }

    /// Adjoint of [`pad_mirror`](Self::pad_mirror): folds gradients of the
    /// padded tensor back onto the source positions.
    pub fn unpad_mirror_adjoint(&self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        let sp = self.shape;
        let (h, w) = (sp.h - top - bottom, sp.w - left - right);
        if top == 0 && bottom == 0 && left == 0 && right == 0 {
            return self.clone();
        }
        let out_shape = sp.with_hw(h, w);
        let rows: Vec<usize> = (0..sp.h).map(|y| mirror(y as isize - top as isize, h)).collect();
        let cols: Vec<usize> = (0..sp.w).map(|x| mirror(x as isize - left as isize, w)).collect();
        let mut out = Self::zeros(out_shape);
        let src = &self.buf.data;
        crate::par::for_each_chunk(out.data_mut(), h * w, |plane, dst| {
            let base = plane * sp.plane();
            for (y, &ty) in rows.iter().enumerate() {
                let row = &src[base + y * sp.w..base + (y + 1) * sp.w];
                let drow = &mut dst[ty * w..(ty + 1) * w];
                for (x, &tx) in cols.iter().enumerate() {
                    drow[tx] += row[x];
                }
            }
        });
        out
    }

    /// Keeps the top-left `h x w` window.
    pub fn crop(&self, h: usize, w: usize) -> Result<Self> {
        let s = self.shape;
        if h > s.h || w > s.w {
            return Err(Error::CropTooLarge { h, w, shape: s });
        }
        if h == s.h && w == s.w {
            return Ok(self.clone());
        }
        Ok(self.window(0, 0, h, w))
    }

    /// Copies the `h x w` window whose top-left corner is `(y0, x0)`.
    pub(crate) fn window(&self, y0: usize, x0: usize, h: usize, w: usize) -> Self {
        let s = self.shape;
        let mut data = Vec::with_capacity(s.n * s.c * h * w);
        for nc in 0..s.n * s.c {
            let base = nc * s.plane();
            for y in y0..y0 + h {
                let off = base + y * s.w + x0;
                data.extend_from_slice(&self.buf.data[off..off + w]);
            }
        }
        Self::from_vec_unchecked(s.with_hw(h, w), data)
    }

    /// Zero-extends to `h x w` at the bottom/right; adjoint of [`crop`](Self::crop).
    pub fn uncrop_zero(&self, h: usize, w: usize) -> Self {
        let s = self.shape;
        let mut out = Self::zeros(s.with_hw(h, w));
        for nc in 0..s.n * s.c {
            for y in 0..s.h {
                let src = &self.buf.data[nc * s.plane() + y * s.w..][..s.w];
                out.buf.data[nc * h * w + y * w..][..s.w].copy_from_slice(src);
            }
        }
        out
    }

    /// Single batch element as an `N = 1` tensor.
    pub fn batch(&self, n: usize) -> Self {
        let block = self.shape.c * self.shape.plane();
        Self::from_vec_unchecked(
            Shape { n: 1, ..self.shape },
            self.buf.data[n * block..(n + 1) * block].to_vec(),
        )
    }

    /// Stacks `N = 1` (or larger) tensors along the batch axis.
    pub fn stack_batch(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyConcat)?.shape;
        let mut data = Vec::new();
        let mut n = 0;
        for (i, t) in parts.iter().enumerate() {
            if (Shape { n: first.n, ..t.shape }) != first {
                return Err(Error::ConcatMismatch {
                    index: i,
                    expected: first,
                    found: t.shape,
                });
            }
            n += t.shape.n;
            data.extend_from_slice(t.data());
        }
        Ok(Self::from_vec_unchecked(Shape { n, ..first }, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: Shape, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn add_closed_form() {
        let s = Shape::new(1, 1, 2, 2);
        let a = t(s, &[1., 2., 3., 4.]);
        let b = t(s, &[1., 1., 1., 1.]);
        assert_eq!(a.add(&b).unwrap().data(), &[2., 3., 4., 5.]);
    }

    #[test]
    fn mul_by_zeros_annihilates() {
        let a = Tensor::<f64>::from_fn(Shape::new(2, 3, 4, 5), |i| i as f64 * 0.37 - 4.0);
        let z = a.mul(&a.zeros_like()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scale_by_one_is_bitwise_identity() {
        let a = Tensor::<f32>::from_fn(Shape::new(1, 2, 3, 3), |i| (i as f32).sin() * 1e-3);
        assert_eq!(a.scale(1.0), a);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 2));
        let b = Tensor::<f64>::zeros(Shape::new(1, 2, 2, 2));
        let msg = a.add(&b).unwrap_err().to_string();
        assert!(msg.contains("(1, 1, 2, 2)") && msg.contains("(1, 2, 2, 2)"), "{msg}");
    }

    #[test]
    fn split_four_way() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 8, 2, 2), |i| i as f64);
        let parts = x.split_channels(&[1, 1, 1, 5]).unwrap();
        let cs: Vec<_> = parts.iter().map(|p| p.shape().c).collect();
        assert_eq!(cs, vec![1, 1, 1, 5]);
        assert_eq!(parts[3].data()[0], 12.0);
    }

    #[test]
    fn split_identity_and_errors() {
        let x = Tensor::<f64>::from_fn(Shape::new(2, 3, 2, 2), |i| i as f64);
        assert_eq!(x.split_channels(&[3]).unwrap()[0], x);
        let err = x.split_channels(&[1, 1]).unwrap_err().to_string();
        assert!(err.contains("[1, 1]") && err.contains('3'), "{err}");
    }

    #[test]
    fn concat_shapes_and_errors() {
        let a = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 2));
        let b = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 2));
        assert_eq!(Tensor::concat_channels(&[&a, &b]).unwrap().shape(), Shape::new(1, 2, 2, 2));
        assert_eq!(Tensor::concat_channels(&[&a]).unwrap(), a);
        let c = Tensor::<f64>::zeros(Shape::new(1, 1, 3, 2));
        match Tensor::concat_channels(&[&a, &b, &c]) {
            Err(Error::ConcatMismatch { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pad_reflect_hand_evaluated() {
        let x = t(Shape::new(1, 1, 2, 2), &[1., 2., 3., 4.]);
        assert_eq!(x.pad_reflect(0, 0).unwrap(), x);
        let p = x.pad_reflect(1, 0).unwrap();
        assert_eq!(p.shape(), Shape::new(1, 1, 3, 2));
        assert_eq!(p.data(), &[1., 2., 3., 4., 1., 2.]);
        assert!(matches!(x.pad_reflect(2, 0), Err(Error::PadTooLarge { .. })));
    }

    #[test]
    fn mirror_index_table() {
        let got: Vec<_> = (-2..6).map(|i| mirror(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 1, 2, 3, 2, 1]);
        assert_eq!(mirror(-7, 1), 0);
    }

    #[test]
    fn pad_adjoint_matches_dot_products() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 2, 3, 4), |i| ((i * 7919) % 13) as f64 - 6.0);
        let g = Tensor::<f64>::from_fn(Shape::new(1, 2, 3 + 5, 4 + 3), |i| ((i * 104729) % 17) as f64 - 8.0);
        let lhs = x.pad_mirror(2, 3, 1, 2).dot(&g).unwrap();
        let rhs = x.dot(&g.unpad_mirror_adjoint(2, 3, 1, 2)).unwrap();
        assert_eq!(lhs, rhs);
    }

    proptest! {
        #[test]
        fn split_concat_roundtrip(c in 1usize..9, h in 1usize..6, w in 1usize..6, seed in any::<u64>(), cut in 0usize..8) {
            let x = Tensor::<f64>::from_fn(Shape::new(2, c, h, w), |i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 7.0);
            let first = 1 + cut % c;
            let sizes: Vec<usize> = if first == c { vec![c] } else { vec![first, c - first] };
            let parts = x.split_channels(&sizes).unwrap();
            let refs: Vec<&Tensor<f64>> = parts.iter().collect();
            prop_assert_eq!(Tensor::concat_channels(&refs).unwrap(), x);
        }

        #[test]
        fn pad_crop_roundtrip(h in 2usize..9, w in 2usize..9, b in 0usize..8, r in 0usize..8, seed in any::<u64>()) {
            let x = Tensor::<f64>::from_fn(Shape::new(1, 2, h, w), |i| ((i as u64 ^ seed) % 997) as f64 * 0.01);
            let (b, r) = (b % h, r % w);
            let p = x.pad_reflect(b, r).unwrap();
            prop_assert_eq!(p.crop(h, w).unwrap(), x);
        }

        #[test]
        fn elementwise_matches_scalar_loop(v in proptest::collection::vec(-1e6f64..1e6, 12), u in proptest::collection::vec(-1e6f64..1e6, 12), s in -10f64..10.0) {
            let shape = Shape::new(1, 3, 2, 2);
            let a = Tensor::from_vec(shape, v.clone()).unwrap();
            let b = Tensor::from_vec(shape, u.clone()).unwrap();
            let (add, sub, mul, sc) = (a.add(&b).unwrap(), a.sub(&b).unwrap(), a.mul(&b).unwrap(), a.scale(s));
            for i in 0..12 {
                prop_assert_eq!(add.data()[i].to_bits(), (v[i] + u[i]).to_bits());
                prop_assert_eq!(sub.data()[i].to_bits(), (v[i] - u[i]).to_bits());
                prop_assert_eq!(mul.data()[i].to_bits(), (v[i] * u[i]).to_bits());
                prop_assert_eq!(sc.data()[i].to_bits(), (v[i] * s).to_bits());
            }
        }
    }
}
