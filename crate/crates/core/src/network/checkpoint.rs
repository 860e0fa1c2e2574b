//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "D2NT"            magic, 4 bytes
//! u32               version (1)
//! u32               tensor count
//! per tensor:
//!   u32, bytes      name length, UTF-8 name
//!   u8              dtype (0 = f32)
//!   u32, u32 * ndim rank, extents
//!   f32 * numel     payload
//! ```
//!
//! Values are stored as `f32` whatever the compute precision.

use crate::nn::ModuleParams;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use std::io::{Read, Write};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"D2NT";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}: not a checkpoint")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("unknown dtype tag {tag} for tensor `{name}`")]
    Dtype { name: String, tag: u8 },
    #[error("tensor name is not valid UTF-8 at offset {0}")]
    Name(usize),
    #[error("tensor `{name}` has rank {ndim}; expected 4")]
    Rank { name: String, ndim: u32 },
    #[error("{0} unexpected bytes after the last tensor")]
    Trailing(usize),
    #[error("checkpoint holds {found} tensors, network expects {expected}")]
    Count { expected: usize, found: usize },
    #[error("tensor {index} is `{found}`, network expects `{expected}`")]
    NameMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("tensor `{name}` has shape {found}, network expects {expected}")]
    ShapeMismatch { name: String, expected: Shape, found: Shape },
    #[error("tensor `{0}` contains non-finite values")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode<T: Scalar>(params: &ModuleParams<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + params.count() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.extend_from_slice(&4u32.to_le_bytes());
        for d in t.shape().dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn save<T: Scalar>(params: &ModuleParams<T>, sink: &mut impl Write) -> Result<(), CheckpointError> {
    sink.write_all(&encode(params))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint into named `f32` tensors without validating it
/// against any network.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 && !MAGIC.starts_with(bytes) {
        let mut m = [0u8; 4];
        m[..bytes.len()].copy_from_slice(bytes);
        return Err(CheckpointError::BadMagic(m));
    }
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CheckpointError::Name(at))?
            .to_string();
        let tag = r.take(1)?[0];
        if tag != DTYPE_F32 {
            return Err(CheckpointError::Dtype { name, tag });
        }
        let ndim = r.u32()?;
        if ndim != 4 {
            return Err(CheckpointError::Rank { name, ndim });
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
        let payload = r.take(numel.saturating_mul(4))?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::from_vec(shape, data).expect("payload length matches shape");
        if !t.is_finite() {
            return Err(CheckpointError::NonFinite(name));
        }
        out.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos));
    }
    Ok(out)
}

/// Decodes `bytes` and checks names, order and shapes against `template`
/// (a freshly built registry). Nothing is returned unless every check
/// passes.
pub fn load<T: Scalar>(bytes: &[u8], template: &ModuleParams<T>) -> Result<ModuleParams<T>, CheckpointError> {
    let tensors = decode(bytes)?;
    for (index, ((expected, want), (found, got))) in template.iter().zip(&tensors).enumerate() {
        if expected != found {
            return Err(CheckpointError::NameMismatch {
                index,
                expected: expected.to_string(),
                found: found.clone(),
            });
        }
        if want.shape() != got.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: found.clone(),
                expected: want.shape(),
                found: got.shape(),
            });
        }
    }
    if tensors.len() != template.len() {
        return Err(CheckpointError::Count {
            expected: template.len(),
            found: tensors.len(),
        });
    }
    let mut out = ModuleParams::new();
    for (name, t) in tensors {
        out.insert(name, t.cast()).expect("names are unique in the template");
    }
    Ok(out)
}

pub fn load_from<T: Scalar>(source: &mut impl Read, template: &ModuleParams<T>) -> Result<ModuleParams<T>, CheckpointError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    load(&bytes, template)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModuleParams<f32> {
        let mut p = ModuleParams::new();
        p.insert("a.weight", Tensor::from_fn(Shape::new(2, 1, 3, 3), |i| i as f32 * 0.25 - 1.0))
            .unwrap();
        p.insert("a.bias", Tensor::from_fn(Shape::new(1, 2, 1, 1), |i| i as f32)).unwrap();
        p
    }

    #[test]
    fn byte_layout() {
        let mut p = ModuleParams::new();
        p.insert("b", Tensor::<f32>::full(Shape::new(1, 1, 1, 1), 1.0)).unwrap();
        let bytes = encode(&p);
        let mut expect = b"D2NT".to_vec();
        expect.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, b'b', 0, 4, 0, 0, 0]);
        expect.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn round_trip_bitwise() {
        let p = sample();
        let back = load(&encode(&p), &p).unwrap();
        assert_eq!(back.flatten(), p.flatten());
        assert_eq!(encode(&back), encode(&p));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let p = sample();
        let bytes = encode(&p);
        for cut in 0..bytes.len() {
            let err = load(&bytes[..cut], &p).unwrap_err();
            assert!(matches!(err, CheckpointError::Truncated { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn distinct_errors() {
        let p = sample();
        let mut bytes = encode(&p);
        bytes[0] = b'X';
        assert!(matches!(load(&bytes, &p), Err(CheckpointError::BadMagic(_))));
        let mut bytes = encode(&p);
        bytes[4] = 2;
        assert!(matches!(load(&bytes, &p), Err(CheckpointError::Version(2))));
        let mut bytes = encode(&p);
        bytes.push(0);
        assert!(matches!(load(&bytes, &p), Err(CheckpointError::Trailing(1))));

        let mut other = ModuleParams::new();
        other.insert("a.weight", Tensor::<f32>::zeros(Shape::new(3, 1, 3, 3))).unwrap();
        other.insert("a.bias", Tensor::<f32>::zeros(Shape::new(1, 3, 1, 1))).unwrap();
        match load(&encode(&p), &other) {
            Err(CheckpointError::ShapeMismatch { name, .. }) => assert_eq!(name, "a.weight"),
            r => panic!("{r:?}"),
        }
        let mut renamed = ModuleParams::new();
        renamed.insert("a.weight", Tensor::<f32>::zeros(Shape::new(2, 1, 3, 3))).unwrap();
        renamed.insert("z.bias", Tensor::<f32>::zeros(Shape::new(1, 2, 1, 1))).unwrap();
        assert!(matches!(load(&encode(&p), &renamed), Err(CheckpointError::NameMismatch { index: 1, .. })));
    }
}
