//! Unitary 2-D discrete Fourier transform, amplitude/phase decomposition and
//! patchwise transforms over tensors.
//!
//! All transforms use the `1/sqrt(h*w)` normalization in both directions, so
//! the forward transform is unitary and its adjoint is the inverse. Spectra
//! are held in `f64` regardless of the tensor precision.

use crate::error::{Error, Result};
use crate::par;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use std::f64::consts::PI;

/// Real row-major grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), h * w, "grid data length");
        Grid { h, w, data }
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Grid::new(h, w, vec![0.0; h * w])
    }
}

/// Complex row-major grid stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    pub h: usize,
    pub w: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexGrid {
    pub fn zeros(h: usize, w: usize) -> Self {
        ComplexGrid {
            h,
            w,
            re: vec![0.0; h * w],
            im: vec![0.0; h * w],
        }
    }

    /// Elementwise complex product.
    pub fn hadamard(&self, other: &ComplexGrid) -> ComplexGrid {
        assert_eq!((self.h, self.w), (other.h, other.w));
        let mut out = ComplexGrid::zeros(self.h, self.w);
        for i in 0..self.re.len() {
            let (a, b, c, d) = (self.re[i], self.im[i], other.re[i], other.im[i]);
            out.re[i] = a * c - b * d;
            out.im[i] = a * d + b * c;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .fold(0.0f64, |m, (r, i)| m.max(r.hypot(*i)))
    }
}

/// One transform axis: an in-place radix-2 butterfly network when the
/// extent is a power of two, otherwise a dense precomputed DFT matrix.
#[derive(Clone, Debug)]
enum Axis {
    Radix2 {
        n: usize,
        bitrev: Vec<usize>,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    Dense {
        n: usize,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
}

impl Axis {
    fn new(n: usize) -> Self {
        let angle = |k: usize| 2.0 * PI * k as f64 / n as f64;
        if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            let bitrev = (0..n)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
                .collect();
            let (cos, sin) = (0..n / 2).map(|k| (angle(k).cos(), angle(k).sin())).unzip();
            Axis::Radix2 { n, bitrev, cos, sin }
        } else {
            let (cos, sin) = (0..n * n)
                .map(|i| {
                    let a = angle((i / n) * (i % n) % n);
                    (a.cos(), a.sin())
                })
                .unzip();
            Axis::Dense { n, cos, sin }
        }
    }

    /// Unscaled 1-D transform of the `n` elements at `off + i * stride`.
    fn apply(&self, sign: f64, re: &mut [f64], im: &mut [f64], off: usize, stride: usize, scratch: &mut [f64]) {
        match self {
            Axis::Radix2 { n, bitrev, cos, sin } => {
                let n = *n;
                for (i, &j) in bitrev.iter().enumerate() {
                    if j > i {
                        re.swap(off + i * stride, off + j * stride);
                        im.swap(off + i * stride, off + j * stride);
                    }
                }
                let mut len = 2;
                while len <= n {
                    let half = len / 2;
                    let step = n / len;
                    for start in (0..n).step_by(len) {
                        for k in 0..half {
                            let (c, s) = (cos[k * step], sign * sin[k * step]);
                            let a = off + (start + k) * stride;
                            let b = a + half * stride;
                            let br = re[b] * c - im[b] * s;
                            let bi = re[b] * s + im[b] * c;
                            re[b] = re[a] - br;
                            im[b] = im[a] - bi;
                            re[a] += br;
                            im[a] += bi;
                        }
                    }
                    len *= 2;
                }
            }
            Axis::Dense { n, cos, sin } => {
                let n = *n;
                let (sr, si) = scratch[..2 * n].split_at_mut(n);
                for v in 0..n {
                    let (mut ar, mut ai) = (0.0, 0.0);
                    for m in 0..n {
                        let (c, s) = (cos[v * n + m], sign * sin[v * n + m]);
                        let (xr, xi) = (re[off + m * stride], im[off + m * stride]);
                        ar += xr * c - xi * s;
                        ai += xr * s + xi * c;
                    }
                    sr[v] = ar;
                    si[v] = ai;
                }
                for v in 0..n {
                    re[off + v * stride] = sr[v];
                    im[off + v * stride] = si[v];
                }
            }
        }
    }
}

/// Precomputed kernels for separable `h x w` transforms.
#[derive(Clone, Debug)]
pub struct Dft2Plan {
    h: usize,
    w: usize,
    rows: Axis,
    cols: Axis,
    scale: f64,
}

impl Dft2Plan {
    pub fn new(h: usize, w: usize) -> Self {
        assert!(h >= 1 && w >= 1, "transform extents must be positive");
        Dft2Plan {
            h,
            w,
            rows: Axis::new(w),
            cols: Axis::new(h),
            scale: 1.0 / ((h * w) as f64).sqrt(),
        }
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Separable complex transform. `sign = -1` forward, `+1` inverse.
    /// `in_im = None` means a real input.
    pub fn transform(&self, sign: f64, in_re: &[f64], in_im: Option<&[f64]>, out_re: &mut [f64], out_im: &mut [f64]) {
        let (h, w) = (self.h, self.w);
        let len = h * w;
        out_re[..len].copy_from_slice(&in_re[..len]);
        match in_im {
            Some(im) => out_im[..len].copy_from_slice(&im[..len]),
            None => out_im[..len].fill(0.0),
        }
        let mut scratch = [0.0; 64];
        let mut heap;
        let scratch: &mut [f64] = if 2 * h.max(w) <= scratch.len() {
            &mut scratch
        } else {
            heap = vec![0.0; 2 * h.max(w)];
            &mut heap
        };
        for m in 0..h {
            self.rows.apply(sign, out_re, out_im, m * w, 1, scratch);
        }
        for v in 0..w {
            self.cols.apply(sign, out_re, out_im, v, w, scratch);
        }
        for v in out_re[..len].iter_mut().chain(out_im[..len].iter_mut()) {
            *v *= self.scale;
        }
    }

    pub fn forward(&self, x: &Grid) -> ComplexGrid {
        assert_eq!((x.h, x.w), (self.h, self.w));
        let mut out = ComplexGrid::zeros(self.h, self.w);
        self.transform(-1.0, &x.data, None, &mut out.re, &mut out.im);
        out
    }

    pub fn inverse_complex(&self, x: &ComplexGrid) -> ComplexGrid {
        assert_eq!((x.h, x.w), (self.h, self.w));
        let mut out = ComplexGrid::zeros(self.h, self.w);
        self.transform(1.0, &x.re, Some(&x.im), &mut out.re, &mut out.im);
        out
    }
}

/// Forward unitary 2-D DFT (separable fast path).
pub fn dft2(x: &Grid) -> ComplexGrid {
    Dft2Plan::new(x.h, x.w).forward(x)
}

/// Direct-sum reference transform, `O((h*w)^2)`. `sign = -1` is forward.
pub fn dft2_naive_complex(x: &ComplexGrid, sign: f64) -> ComplexGrid {
    let (h, w) = (x.h, x.w);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = ComplexGrid::zeros(h, w);
    for u in 0..h {
        for v in 0..w {
            let (mut ar, mut ai) = (0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let phase = 2.0 * PI * (((m * u) % h) as f64 / h as f64 + ((n * v) % w) as f64 / w as f64);
                    let (s, c) = (sign * phase).sin_cos();
                    let (xr, xi) = (x.re[m * w + n], x.im[m * w + n]);
                    ar += xr * c - xi * s;
                    ai += xr * s + xi * c;
                }
            }
            out.re[u * w + v] = ar * scale;
            out.im[u * w + v] = ai * scale;
        }
    }
    out
}

/// Direct-sum reference forward transform of a real grid.
pub fn dft2_naive(x: &Grid) -> ComplexGrid {
    let c = ComplexGrid {
        h: x.h,
        w: x.w,
        re: x.data.clone(),
        im: vec![0.0; x.data.len()],
    };
    dft2_naive_complex(&c, -1.0)
}

/// Inverse unitary transform back to a real grid. The imaginary part of the
/// result must be negligible (`<= 1e-9 * max|re|`); otherwise the spectrum is
/// not that of a real signal and an error is returned.
pub fn idft2(x: &ComplexGrid) -> Result<Grid> {
    let out = Dft2Plan::new(x.h, x.w).inverse_complex(x);
    let residue = out.im.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let limit = 1e-9 * out.re.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residue > limit {
        return Err(Error::ImaginaryResidue { residue, limit });
    }
    Ok(Grid::new(x.h, x.w, out.re))
}

/// Amplitude `sqrt(R^2 + I^2)` and four-quadrant phase in `(-pi, pi]`; a zero
/// bin has phase 0.
pub fn amp_phase(x: &ComplexGrid) -> (Grid, Grid) {
    let mut amp = Grid::zeros(x.h, x.w);
    let mut phase = Grid::zeros(x.h, x.w);
    for i in 0..x.re.len() {
        let (r, im) = (x.re[i], x.im[i]);
        amp.data[i] = r.hypot(im);
        phase.data[i] = if r == 0.0 && im == 0.0 {
            0.0
        } else {
            let p = im.atan2(r);
            if p <= -PI {
                PI
            } else {
                p
            }
        };
    }
    (amp, phase)
}

/// Rebuilds `A * exp(jP)`.
pub fn from_amp_phase(amp: &Grid, phase: &Grid) -> ComplexGrid {
    let mut out = ComplexGrid::zeros(amp.h, amp.w);
    for i in 0..amp.data.len() {
        let (s, c) = phase.data[i].sin_cos();
        out.re[i] = amp.data[i] * c;
        out.im[i] = amp.data[i] * s;
    }
    out
}

fn check_patch(op: &'static str, shape: Shape, patch: usize) -> Result<()> {
    if patch == 0 || !shape.h.is_multiple_of(patch) || !shape.w.is_multiple_of(patch) {
        return Err(Error::NotMultiple {
            op,
            h: shape.h,
            w: shape.w,
            multiple: patch,
        });
    }
    Ok(())
}

/// Spectra of every non-overlapping `patch x patch` tile, ordered by batch,
/// channel, tile row, tile column.
#[derive(Clone, Debug)]
pub struct PatchSpectra {
    pub shape: Shape,
    pub patch: usize,
    pub grids: Vec<ComplexGrid>,
}

impl PatchSpectra {
    pub fn tiles_per_plane(&self) -> usize {
        (self.shape.h / self.patch) * (self.shape.w / self.patch)
    }
}

fn read_tile<T: Scalar>(plane: &[T], w: usize, ty: usize, tx: usize, p: usize, out: &mut [f64]) {
    for y in 0..p {
        let row = &plane[(ty * p + y) * w + tx * p..][..p];
        for (o, v) in out[y * p..(y + 1) * p].iter_mut().zip(row) {
            *o = v.to_f64();
        }
    }
}

fn write_tile<T: Scalar>(plane: &mut [T], w: usize, ty: usize, tx: usize, p: usize, src: &[f64]) {
    for y in 0..p {
        let row = &mut plane[(ty * p + y) * w + tx * p..][..p];
        for (o, v) in row.iter_mut().zip(&src[y * p..(y + 1) * p]) {
            *o = T::from_f64(*v);
        }
    }
}

/// Forward transform of every tile of every `(n, c)` plane.
pub fn patchwise_dft<T: Scalar>(x: &Tensor<T>, patch: usize) -> Result<PatchSpectra> {
    let s = x.shape();
    check_patch("patchwise_dft", s, patch)?;
    let plan = Dft2Plan::new(patch, patch);
    let (th, tw) = (s.h / patch, s.w / patch);
    let per_plane = par::map_range(s.n * s.c, |nc| {
        let plane = &x.data()[nc * s.plane()..(nc + 1) * s.plane()];
        let mut tile = Grid::zeros(patch, patch);
        let mut grids = Vec::with_capacity(th * tw);
        for ty in 0..th {
            for tx in 0..tw {
                read_tile(plane, s.w, ty, tx, patch, &mut tile.data);
                grids.push(plan.forward(&tile));
            }
        }
        grids
    });
    Ok(PatchSpectra {
        shape: s,
        patch,
        grids: per_plane.into_iter().flatten().collect(),
    })
}

/// Inverse of [`patchwise_dft`]; reassembles tiles in index order.
pub fn patchwise_idft<T: Scalar>(spectra: &PatchSpectra) -> Result<Tensor<T>> {
    let s = spectra.shape;
    let p = spectra.patch;
    check_patch("patchwise_idft", s, p)?;
    let per = spectra.tiles_per_plane();
    if spectra.grids.len() != s.n * s.c * per {
        return Err(Error::Params(format!(
            "{} tiles do not cover shape {s} with patch {p}",
            spectra.grids.len()
        )));
    }
    let tw = s.w / p;
    let mut out = Tensor::<T>::zeros(s);
    let failures = std::sync::Mutex::new(None);
    par::for_each_chunk(out.data_mut(), s.plane(), |nc, plane| {
        for t in 0..per {
            match idft2(&spectra.grids[nc * per + t]) {
                Ok(g) => write_tile(plane, s.w, t / tw, t % tw, p, &g.data),
                Err(e) => {
                    failures.lock().unwrap().get_or_insert(e);
                }
            }
        }
    });
    match failures.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Per-thread scratch for the tile kernels.
struct TileScratch {
    a: Vec<f64>,
    b: Vec<f64>,
    z_re: Vec<f64>,
    z_im: Vec<f64>,
    out_re: Vec<f64>,
    out_im: Vec<f64>,
}

impl TileScratch {
    fn new(n: usize) -> Self {
        let v = || vec![0.0; n];
        TileScratch {
            a: v(),
            b: v(),
            z_re: v(),
            z_im: v(),
            out_re: v(),
            out_im: v(),
        }
    }
}

/// Per tile: `idft2(dft2(a) * op(dft2(b)))` where `op` is identity or
/// complex conjugation. Writes the real result over `a`.
fn spectral_product_in_place<T: Scalar>(
    a: &mut Tensor<T>,
    b: &Tensor<T>,
    patch: usize,
    conjugate_b: bool,
    op: &'static str,
) -> Result<()> {
    let s = a.shape();
    if s != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: s,
            right: b.shape(),
        });
    }
    check_patch(op, s, patch)?;
    let plan = Dft2Plan::new(patch, patch);
    let (th, tw) = (s.h / patch, s.w / patch);
    let n = patch * patch;
    let conj = if conjugate_b { -1.0 } else { 1.0 };
    let worst = std::sync::Mutex::new(None::<(f64, f64)>);
    let bdata = b.data();
    par::for_each_chunk(a.data_mut(), s.plane(), |nc, plane| {
        let bplane = &bdata[nc * s.plane()..(nc + 1) * s.plane()];
        let mut sc = TileScratch::new(n);
        for ty in 0..th {
            for tx in 0..tw {
                // Both tiles are real, so one complex transform of `a + j b`
                // yields both spectra via Hermitian symmetry.
                read_tile(plane, s.w, ty, tx, patch, &mut sc.a);
                read_tile(bplane, s.w, ty, tx, patch, &mut sc.b);
                let amax = sc.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let bmax = sc.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if amax == 0.0 || bmax == 0.0 {
                    sc.z_re.fill(0.0);
                    write_tile(plane, s.w, ty, tx, patch, &sc.z_re);
                    continue;
                }
                plan.transform(-1.0, &sc.a, Some(&sc.b), &mut sc.z_re, &mut sc.z_im);
                for u in 0..patch {
                    let um = (patch - u) % patch;
                    for v in 0..patch {
                        let i = u * patch + v;
                        let mi = um * patch + (patch - v) % patch;
                        let (zr, zi, mr, mim) = (sc.z_re[i], sc.z_im[i], sc.z_re[mi], sc.z_im[mi]);
                        let (ar, ai) = (0.5 * (zr + mr), 0.5 * (zi - mim));
                        let (br, bi) = (0.5 * (zi + mim), conj * 0.5 * (mr - zr));
                        sc.out_re[i] = ar * br - ai * bi;
                        sc.out_im[i] = ar * bi + ai * br;
                    }
                }
                plan.transform(1.0, &sc.out_re, Some(&sc.out_im), &mut sc.z_re, &mut sc.z_im);
                let residue = sc.z_im.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let limit = T::RESIDUE_TOL * amax * bmax;
                if residue > limit {
                    let mut w = worst.lock().unwrap();
                    if w.is_none_or(|(r, _)| residue > r) {
                        *w = Some((residue, limit));
                    }
                }
                write_tile(plane, s.w, ty, tx, patch, &sc.z_re);
            }
        }
    });
    match worst.into_inner().unwrap() {
        Some((residue, limit)) => Err(Error::ImaginaryResidue { residue, limit }),
        None => Ok(()),
    }
}

/// Patchwise `idft2(dft2(q) * dft2(k))`, i.e. per-tile circular convolution
/// of `q` and `k` scaled by `1/sqrt(patch^2)`.
pub fn spectral_product<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let mut out = q.clone();
    spectral_product_in_place(&mut out, k, patch, false, "spectral_product")?;
    Ok(out)
}

/// In-place variant of [`spectral_product`]: `q` is overwritten by the map.
pub fn spectral_product_into<T: Scalar>(q: &mut Tensor<T>, k: &Tensor<T>, patch: usize) -> Result<()> {
    spectral_product_in_place(q, k, patch, false, "spectral_product")
}

/// Adjoint of `q -> spectral_product(q, k)` applied to `g`:
/// `idft2(conj(dft2(k)) * dft2(g))` per tile.
pub fn spectral_product_adjoint<T: Scalar>(g: &Tensor<T>, k: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let mut out = g.clone();
    spectral_product_in_place(&mut out, k, patch, true, "spectral_product_adjoint")?;
    Ok(out)
}
