//! `AVTRACE1` attention dump format.
//!
//! ```text
//! magic   8 bytes  "AVTRACE1"
//! L       u32 LE   layers
//! H       u32 LE   heads
//! n       u32 LE   tokens
//! data    L*H*n*n f32 LE, row-major, layer-major then head-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::AttentionTensor;
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"AVTRACE1";
pub const HEADER_LEN: u64 = 8 + 12;
/// Row-sum tolerance for float32 traces.
pub const ROW_SUM_TOL: f64 = 1e-4;

pub fn expected_len(layers: u32, heads: u32, n: u32) -> u64 {
    HEADER_LEN + 4 * layers as u64 * heads as u64 * n as u64 * n as u64
}

/// Serializes attention tensors (down-cast to `f32`).
pub fn encode_trace(attn: &[AttentionTensor]) -> Result<Vec<u8>> {
    let first = attn
        .first()
        .ok_or_else(|| Error::config("cannot encode an empty trace"))?;
    let heads = first.heads.len();
    let n = first.n();
    if attn.iter().any(|a| a.heads.len() != heads || a.n() != n) {
        return Err(Error::config(
            "all layers of a trace must share heads and size",
        ));
    }
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::config(format!("{what} {v} does not fit in u32")))
    };
    let (l32, h32, n32) = (
        to_u32(attn.len(), "layer count")?,
        to_u32(heads, "head count")?,
        to_u32(n, "token count")?,
    );
    let mut out = Vec::with_capacity(expected_len(l32, h32, n32) as usize);
    out.extend_from_slice(MAGIC);
    for v in [l32, h32, n32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for layer in attn {
        for head in &layer.heads {
            for v in head.data() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_trace(path: &Path, attn: &[AttentionTensor]) -> Result<()> {
    let bytes = encode_trace(attn)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses and validates a trace, upcasting to `f64`. `path` is only used
/// in error messages.
pub fn decode_trace(bytes: &[u8], path: &Path) -> Result<Vec<AttentionTensor>> {
    let found = bytes.len() as u64;
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncation {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found,
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "bad magic {:?}, expected \"AVTRACE1\"",
                String::from_utf8_lossy(&bytes[..8])
            ),
        });
    }
    if found < HEADER_LEN {
        return Err(Error::Truncation {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found,
        });
    }
    let field = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    let (layers, heads, n) = (field(0), field(1), field(2));
    if layers == 0 || heads == 0 || n == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("header has a zero dimension: L={layers}, H={heads}, n={n}"),
        });
    }
    let expected = expected_len(layers, heads, n);
    if found != expected {
        return Err(Error::Truncation {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    let (layers, heads, n) = (layers as usize, heads as usize, n as usize);
    let mut floats = bytes[HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut out = Vec::with_capacity(layers);
    let mut worst = (0usize, 0usize, 0usize, 0.0f64);
    for l in 0..layers {
        let mut hs = Vec::with_capacity(heads);
        for h in 0..heads {
            let data: Vec<f64> = floats.by_ref().take(n * n).collect();
            let m = Matrix::new(n, n, data)
                .map_err(|e| Error::Validation(format!("layer {} head {h}: {e}", l + 1)))?;
            if let Some(neg) = m.data().iter().position(|v| *v < 0.0) {
                return Err(Error::Validation(format!(
                    "layer {} head {h} row {}: negative attention weight",
                    l + 1,
                    neg / n
                )));
            }
            let (row, err) = m.worst_row_sum_error();
            if err > worst.3 {
                worst = (l + 1, h, row, err);
            }
            hs.push(m);
        }
        out.push(AttentionTensor::new(l + 1, hs)?);
    }
    if worst.3 > ROW_SUM_TOL {
        return Err(Error::Validation(format!(
            "worst row: layer {} head {} row {} deviates from 1 by {:.3e} (tolerance {ROW_SUM_TOL:e})",
            worst.0, worst.1, worst.2, worst.3
        )));
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<Vec<AttentionTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_trace(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.bin")
    }

    fn tiny() -> Vec<AttentionTensor> {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.25, 0.75]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        vec![
            AttentionTensor::new(1, vec![a.clone(), b.clone()]).unwrap(),
            AttentionTensor::new(2, vec![b, a]).unwrap(),
        ]
    }

    #[test]
    fn byte_layout() {
        let bytes = encode_trace(&tiny()).unwrap();
        assert_eq!(bytes.len() as u64, expected_len(2, 2, 2));
        assert_eq!(&bytes[..8], b"AVTRACE1");
        assert_eq!(&bytes[8..20], &[2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        // layer 1, head 0, row 1, col 0 = 0.25
        assert_eq!(&bytes[20 + 8..20 + 12], &0.25f32.to_le_bytes());
        // layer 2, head 0 is `b`: row 1 col 1 = 0.5
        assert_eq!(&bytes[20 + 32 + 12..20 + 32 + 16], &0.5f32.to_le_bytes());
    }

    #[test]
    fn round_trip_exact_for_representable_values() {
        let t = tiny();
        assert_eq!(decode_trace(&encode_trace(&t).unwrap(), p()).unwrap(), t);
    }

    #[test]
    fn truncated_and_padded() {
        let bytes = encode_trace(&tiny()).unwrap();
        assert!(matches!(
            decode_trace(&bytes[..bytes.len() - 1], p()),
            Err(Error::Truncation { .. })
        ));
        assert!(matches!(
            decode_trace(&bytes[..12], p()),
            Err(Error::Truncation { .. })
        ));
        assert!(matches!(
            decode_trace(&bytes[..3], p()),
            Err(Error::Truncation { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_trace(&long, p()),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_trace(&tiny()).unwrap();
        bytes[..8].copy_from_slice(b"XXTRACE1");
        assert!(matches!(
            decode_trace(&bytes, p()),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn row_sum_violation_names_worst_row() {
        let mut bytes = encode_trace(&tiny()).unwrap();
        // layer 2, head 1, row 1, col 1: 0.75 -> 0.9
        let off = 20 + 3 * 16 + 12;
        bytes[off..off + 4].copy_from_slice(&0.9f32.to_le_bytes());
        let err = decode_trace(&bytes, p()).unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("layer 2 head 1 row 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_dimension_header() {
        let mut bytes = b"AVTRACE1".to_vec();
        bytes.extend_from_slice(&[0; 12]);
        assert!(matches!(
            decode_trace(&bytes, p()),
            Err(Error::Format { .. })
        ));
    }
}
