//! CATP-ATTN v1 binary container.
//!
//! Layout, little-endian throughout:
//!
//! | bytes   | content                                             |
//! |---------|-----------------------------------------------------|
//! | 0..4    | magic `b"CATP"`                                     |
//! | 4..8    | version `u32` = 1                                   |
//! | 8..12   | kind `u32` (0 cross, 1 self, 2 embeddings)          |
//! | 12..28  | four `u32` dims                                     |
//! | 28..    | `f32` payload, row-major in declared axis order     |
//!
//! Cross-attention dims are `(L, h, L0, L1)`, self-attention `(L, h, N, N)`
//! and embeddings `(1, 1, n_tokens, d)`. There is no padding and no footer.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{CatpError, Result};
use crate::tensor::{
    check_finite, AnyTensor, AttnTensor, EmbeddingMatrix, SelfAttnTensor, TensorKind,
};

pub const MAGIC: [u8; 4] = *b"CATP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

/// Decoded file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: TensorKind,
    pub dims: [u32; 4],
}

impl Header {
    pub fn element_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn payload_len(&self) -> u64 {
        self.element_count() * 4
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8..12].copy_from_slice(&self.kind.code().to_le_bytes());
        for (i, d) in self.dims.iter().enumerate() {
            out[12 + 4 * i..16 + 4 * i].copy_from_slice(&d.to_le_bytes());
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[0..4] != MAGIC {
            let mut magic = [0u8; 4];
            let n = bytes.len().min(4);
            magic[..n].copy_from_slice(&bytes[..n]);
            return Err(CatpError::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(CatpError::TruncatedPayload {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(CatpError::UnsupportedVersion(version));
        }
        let kind = TensorKind::from_code(word(8))?;
        let dims = [word(12), word(16), word(20), word(24)];
        if dims.contains(&0) {
            return Err(CatpError::InvalidDims {
                dims: dims.iter().map(|&d| d as usize).collect(),
                reason: "every dimension must be at least 1",
            });
        }
        match kind {
            TensorKind::SelfAttention if dims[2] != dims[3] => Err(CatpError::InvalidDims {
                dims: dims.iter().map(|&d| d as usize).collect(),
                reason: "self-attention maps must be square",
            }),
            TensorKind::Embedding if dims[0] != 1 || dims[1] != 1 => Err(CatpError::InvalidDims {
                dims: dims.iter().map(|&d| d as usize).collect(),
                reason: "embedding dims must be (1, 1, n_tokens, d)",
            }),
            _ => Ok(Header { kind, dims }),
        }
    }
}

fn header_of(t: &AnyTensor) -> Header {
    let d = t.header_dims();
    Header {
        kind: t.kind(),
        dims: [d[0] as u32, d[1] as u32, d[2] as u32, d[3] as u32],
    }
}

/// Serializes a tensor to its exact on-disk bytes.
pub fn encode(t: &AnyTensor) -> Result<Vec<u8>> {
    let data = t.data();
    check_finite(data)?;
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(&header_of(t).to_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses a complete file image.
pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    let header = Header::parse(bytes)?;
    let expected = header.payload_len();
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual < expected {
        return Err(CatpError::TruncatedPayload { expected, actual });
    }
    if actual > expected {
        return Err(CatpError::TrailingData {
            extra: actual - expected,
        });
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    check_finite(&data)?;
    let [a, b, c, d] = header.dims.map(|x| x as usize);
    Ok(match header.kind {
        TensorKind::CrossAttention => AttnTensor::new(a, b, c, d, data)?.into(),
        TensorKind::SelfAttention => SelfAttnTensor::new(a, b, c, data)?.into(),
        TensorKind::Embedding => EmbeddingMatrix::new(c, d, data)?.into(),
    })
}

/// Reads only the 28-byte header.
pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    File::open(path)?
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)?;
    Header::parse(&buf)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<AnyTensor> {
    decode(&std::fs::read(path)?)
}

/// Reads a file and requires it to be of `kind`.
pub fn read_kind(path: impl AsRef<Path>, kind: TensorKind) -> Result<AnyTensor> {
    let t = read_tensor(path)?;
    if t.kind() != kind {
        return Err(CatpError::KindMismatch {
            expected: kind,
            found: t.kind(),
        });
    }
    Ok(t)
}

pub fn read_cross(path: impl AsRef<Path>) -> Result<AttnTensor> {
    read_tensor(path)?.into_cross()
}

pub fn read_self_attn(path: impl AsRef<Path>) -> Result<SelfAttnTensor> {
    read_tensor(path)?.into_self_attn()
}

pub fn read_embedding(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    read_tensor(path)?.into_embedding()
}

pub fn write_tensor(t: &AnyTensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(t)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> AnyTensor {
        AttnTensor::new(1, 1, 1, 1, vec![1.0]).unwrap().into()
    }

    fn file_bytes(kind: u32, dims: [u32; 4], payload: &[f32]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"CATP");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&kind.to_le_bytes());
        for d in dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        for v in payload {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn smallest_tensor_layout() {
        let bytes = encode(&tiny()).unwrap();
        assert_eq!(bytes.len(), 32);
        assert_eq!(bytes, file_bytes(0, [1, 1, 1, 1], &[1.0]));
    }

    #[test]
    fn decodes_hand_built_file() {
        let payload = [0.8, 0.1, 0.1, 0.5, 0.35, 0.15, 0.4, 0.3, 0.3];
        let t = decode(&file_bytes(0, [1, 1, 3, 3], &payload)).unwrap();
        let t = t.into_cross().unwrap();
        assert_eq!(t.dims(), [1, 1, 3, 3]);
        assert_eq!(t.data(), &payload);
    }

    #[test]
    fn embedding_header_dims() {
        let e: AnyTensor = EmbeddingMatrix::new(2, 3, vec![1.0; 6]).unwrap().into();
        let bytes = encode(&e).unwrap();
        let h = Header::parse(&bytes).unwrap();
        assert_eq!(h.kind, TensorKind::Embedding);
        assert_eq!(h.dims, [1, 1, 2, 3]);
    }

    #[test]
    fn header_errors() {
        let mut bad = file_bytes(0, [1, 1, 1, 1], &[1.0]);
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bad), Err(CatpError::BadMagic(m)) if &m == b"XXXX"));

        let mut v2 = file_bytes(0, [1, 1, 1, 1], &[1.0]);
        v2[4] = 2;
        assert!(matches!(decode(&v2), Err(CatpError::UnsupportedVersion(2))));

        let k9 = file_bytes(9, [1, 1, 1, 1], &[1.0]);
        assert!(matches!(decode(&k9), Err(CatpError::UnknownKind(9))));

        let short = file_bytes(0, [1, 1, 2, 2], &[0.5, 0.5, 0.5]);
        assert!(matches!(
            decode(&short),
            Err(CatpError::TruncatedPayload {
                expected: 16,
                actual: 12
            })
        ));

        let long = file_bytes(0, [1, 1, 1, 1], &[1.0, 0.0]);
        assert!(matches!(
            decode(&long),
            Err(CatpError::TrailingData { extra: 4 })
        ));

        let nan = file_bytes(0, [1, 1, 1, 2], &[f32::NAN, 1.0]);
        assert!(matches!(
            decode(&nan),
            Err(CatpError::NonFiniteValue { index: 0 })
        ));

        assert!(matches!(decode(b"CA"), Err(CatpError::BadMagic(_))));
        assert!(matches!(
            decode(&file_bytes(0, [1, 1, 1, 1], &[])[..20]),
            Err(CatpError::TruncatedPayload { .. })
        ));
        assert!(matches!(
            decode(&file_bytes(1, [1, 1, 2, 3], &[0.0; 6])),
            Err(CatpError::InvalidDims { .. })
        ));
    }

    #[test]
    fn write_twice_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.attn");
        let b = dir.path().join("b.attn");
        write_tensor(&tiny(), &a).unwrap();
        write_tensor(&tiny(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(read_tensor(&a).unwrap(), tiny());
        let h = read_header(&a).unwrap();
        assert_eq!(h.payload_len(), 4);
    }

    #[test]
    fn nan_is_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nan.attn");
        let t = AttnTensor::new_unchecked([1, 1, 1, 2], vec![0.5, f32::NAN]);
        assert!(matches!(
            write_tensor(&t.into(), &p),
            Err(CatpError::NonFiniteValue { index: 1 })
        ));
        assert!(!p.exists());
    }

    #[test]
    fn kind_request_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.attn");
        write_tensor(&tiny(), &p).unwrap();
        assert!(matches!(
            read_kind(&p, TensorKind::Embedding),
            Err(CatpError::KindMismatch { .. })
        ));
        assert!(read_embedding(&p).is_err());
        assert!(read_cross(&p).is_ok());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_tensor("/nonexistent/catp/file.attn"),
            Err(CatpError::Io(_))
        ));
    }
}
