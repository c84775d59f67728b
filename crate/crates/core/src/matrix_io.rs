//! Binary matrix payloads.
//!
//! Layout (little-endian): magic `GHIM`, format version `u32`, rows `u64`, cols `u64`,
//! then `rows·cols` `f64` values in row-major order.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{GhiError, Result};

pub const MAGIC: &[u8; 4] = b"GHIM";
pub const MATRIX_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode(rows: usize, cols: usize, data: &[f64]) -> Vec<u8> {
    assert_eq!(rows * cols, data.len(), "matrix data does not match its shape");
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MATRIX_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a payload into `(rows, cols, data)`. `name` labels errors.
pub fn decode(bytes: &[u8], name: &str) -> Result<(usize, usize, Vec<f64>)> {
    let corrupt = |message: String| GhiError::Corrupt {
        file: name.to_string(),
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MATRIX_FORMAT_VERSION {
        return Err(GhiError::Incompatible(format!(
            "{name}: matrix format version {version}, expected {MATRIX_FORMAT_VERSION}"
        )));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| corrupt("shape overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(corrupt(format!(
            "{rows}×{cols} needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((rows, cols, data))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the payload and returns its SHA-256.
pub fn write(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<String> {
    let bytes = encode(rows, cols, data);
    fs::write(path, &bytes).map_err(|e| GhiError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Reads a payload, verifying it against `expected_sha256` before decoding.
pub fn read_checked(path: &Path, expected_sha256: &str) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| GhiError::io(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    if sha256_hex(&bytes) != expected_sha256 {
        return Err(GhiError::Checksum { file: name });
    }
    decode(&bytes, &name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = encode(1, 2, &[1.0, -2.5]);
        assert_eq!(&bytes[..4], b"GHIM");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..16], 1u64.to_le_bytes());
        assert_eq!(bytes[16..24], 2u64.to_le_bytes());
        assert_eq!(bytes[24..32], 1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 40);
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(decode(&bytes[..30], "m"), Err(GhiError::Corrupt { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, "m"), Err(GhiError::Corrupt { .. })));
        let mut newer = bytes;
        newer[4] = 9;
        assert!(matches!(decode(&newer, "m"), Err(GhiError::Incompatible(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|i| f64::from_bits(seed.rotate_left(i as u32) ^ (i as u64 * 0x9E37_79B9)))
                .map(|v| if v.is_nan() { 0.0 } else { v })
                .collect();
            let (r, c, back) = decode(&encode(rows, cols, &data), "m").unwrap();
            prop_assert_eq!((r, c), (rows, cols));
            prop_assert_eq!(
                back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
