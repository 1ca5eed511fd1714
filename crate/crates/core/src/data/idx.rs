//! IDX container format (the MNIST distribution format).
//!
//! Layout: two zero bytes, a type code, the number of dimensions `D`, then
//! `D` big-endian `u32` sizes, then the row-major payload. Only unsigned
//! byte payloads (`0x08`) are supported.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IDX_UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    read_idx_bytes(&fs::read(path)?)
}

pub fn read_idx_bytes(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::IdxTruncated {
            expected: 4,
            got: bytes.len(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::IdxBadMagic(bytes[0], bytes[1]));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(Error::IdxUnsupportedType(bytes[2]));
    }
    let ndims = usize::from(bytes[3]);
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::IdxTruncated {
            expected: header,
            got: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload: usize = dims.iter().product();
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::IdxTrailingBytes(bytes.len() - expected));
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn write_idx(tensor: &IdxTensor) -> Result<Vec<u8>> {
    let payload: usize = tensor.dims.iter().product();
    if payload != tensor.data.len() || tensor.dims.len() > usize::from(u8::MAX) {
        return Err(Error::InvalidArgument(format!(
            "idx dims {:?} do not describe {} bytes",
            tensor.dims,
            tensor.data.len()
        )));
    }
    let mut out = vec![0, 0, IDX_UBYTE, tensor.dims.len() as u8];
    for &d in &tensor.dims {
        let d = u32::try_from(d).map_err(|_| Error::InvalidArgument(format!("idx dim {d} too large")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture_2x2x2() -> Vec<u8> {
        let mut b = vec![0x00, 0x00, 0x08, 0x03];
        for _ in 0..3 {
            b.extend_from_slice(&[0, 0, 0, 2]);
        }
        b.extend(0u8..8);
        b
    }

    #[test]
    fn parses_hand_built_fixture() {
        let t = read_idx_bytes(&fixture_2x2x2()).unwrap();
        assert_eq!(t.dims, vec![2, 2, 2]);
        assert_eq!(t.data, (0u8..8).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_by_one_byte() {
        let mut b = fixture_2x2x2();
        b.pop();
        assert!(matches!(
            read_idx_bytes(&b),
            Err(Error::IdxTruncated { expected: 24, got: 23 })
        ));
        assert!(matches!(read_idx_bytes(&b[..6]), Err(Error::IdxTruncated { .. })));
    }

    #[test]
    fn rejects_magic_and_type() {
        let mut b = fixture_2x2x2();
        b[1] = 0x01;
        assert!(matches!(read_idx_bytes(&b), Err(Error::IdxBadMagic(0, 1))));
        let mut b = fixture_2x2x2();
        b[2] = 0x0D;
        assert!(matches!(read_idx_bytes(&b), Err(Error::IdxUnsupportedType(0x0D))));
        let mut b = fixture_2x2x2();
        b.push(9);
        assert!(matches!(read_idx_bytes(&b), Err(Error::IdxTrailingBytes(1))));
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u8>()) {
            let n: usize = dims.iter().product();
            let data: Vec<u8> = (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let t = IdxTensor { dims, data };
            let bytes = write_idx(&t).unwrap();
            prop_assert_eq!(read_idx_bytes(&bytes).unwrap(), t.clone());
            prop_assert_eq!(write_idx(&read_idx_bytes(&bytes).unwrap()).unwrap(), bytes);
        }
    }
}
