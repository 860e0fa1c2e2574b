//! Binary portable pixmap (P6, maxval 255) reading and writing, and
//! conversion between 8-bit images and `[0, 1]` tensors.

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not a binary PPM: expected magic `P6`")]
    BadMagic,
    #[error("malformed PPM header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}; only 255 is supported")]
    MaxVal(u32),
    #[error("pixel data truncated: {found} bytes, expected {expected}")]
    Truncated { found: usize, expected: usize },
    #[error("image tensor must have shape (1, 3, H, W), got {0}")]
    TensorShape(Shape),
}

/// An 8-bit RGB image, interleaved, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Rgb8 {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(ImageError::Truncated {
                found: pixels.len(),
                expected,
            });
        }
        Ok(Rgb8 { width, height, pixels })
    }

    /// Planar `(1, 3, H, W)` tensor with values `byte / 255`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let (w, h) = (self.width, self.height);
        let plane = w * h;
        let mut out = Tensor::zeros(Shape::new(1, 3, h, w));
        let data = out.data_mut();
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = T::from_f64(px[c] as f64 / 255.0);
            }
        }
        out
    }

    /// Quantizes with round-to-nearest after clamping to `[0, 1]`.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self, ImageError> {
        let s = t.shape();
        if s.n != 1 || s.c != 3 {
            return Err(ImageError::TensorShape(s));
        }
        let plane = s.h * s.w;
        let data = t.data();
        let mut pixels = vec![0u8; plane * 3];
        for i in 0..plane {
            for c in 0..3 {
                let v = data[c * plane + i].to_f64().clamp(0.0, 1.0);
                pixels[i * 3 + c] = (v * 255.0).round() as u8;
            }
        }
        Ok(Rgb8 {
            width: s.w,
            height: s.h,
            pixels,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&b) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
        text.parse()
            .map_err(|_| ImageError::Header(format!("missing or invalid {what}")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Rgb8, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(ImageError::BadMagic);
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::MaxVal(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(ImageError::Header("no whitespace after maxval".into())),
    }
    if width == 0 || height == 0 {
        return Err(ImageError::Header(format!("empty image {width}x{height}")));
    }
    let expected = width * height * 3;
    let raster = &bytes[cur.pos..];
    if raster.len() < expected {
        return Err(ImageError::Truncated {
            found: raster.len(),
            expected,
        });
    }
    Ok(Rgb8 {
        width,
        height,
        pixels: raster[..expected].to_vec(),
    })
}

pub fn encode_ppm(img: &Rgb8) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_ppm(path: &Path) -> crate::Result<Rgb8> {
    let bytes = fs::read(path)?;
    Ok(decode_ppm(&bytes)?)
}

pub fn write_ppm(path: &Path, img: &Rgb8) -> crate::Result<()> {
    fs::write(path, encode_ppm(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comment() {
        let mut bytes = b"P6 # made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixels, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n"), Err(ImageError::BadMagic)));
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n"), Err(ImageError::MaxVal(65535))));
        assert!(matches!(
            decode_ppm(b"P6\n2 2\n255\n\x01\x02"),
            Err(ImageError::Truncated { found: 2, expected: 12 })
        ));
        assert!(matches!(decode_ppm(b"P6\nx 2\n255\n"), Err(ImageError::Header(_))));
    }

    #[test]
    fn encode_decode_bitwise() {
        let pixels: Vec<u8> = (0..5 * 3 * 3).map(|i| (i * 37 % 256) as u8).collect();
        let img = Rgb8::new(5, 3, pixels).unwrap();
        let bytes = encode_ppm(&img);
        assert_eq!(decode_ppm(&bytes).unwrap(), img);
        assert_eq!(encode_ppm(&decode_ppm(&bytes).unwrap()), bytes);
    }

    #[test]
    fn tensor_round_trip_is_exact_for_bytes() {
        let pixels: Vec<u8> = (0..=255u8).cycle().take(4 * 7 * 3).collect();
        let img = Rgb8::new(7, 4, pixels).unwrap();
        let t32: Tensor<f32> = img.to_tensor();
        let t64: Tensor<f64> = img.to_tensor();
        assert_eq!(Rgb8::from_tensor(&t32).unwrap(), img);
        assert_eq!(Rgb8::from_tensor(&t64).unwrap(), img);
        assert_eq!(t64.at(0, 1, 0, 0), img.pixels[1] as f64 / 255.0);
    }
}
