//! Debug dumps of complex matrices, row-major, as `(re, im)` pairs.
//!
//! Text form:
//!
//! ```text
//! molmech-matrix 1 <rows> <cols>
//! <re> <im>          # entry (0,0)
//! <re> <im>          # entry (0,1)
//! ...
//! ```
//!
//! Binary form: the 4-byte magic `MMX1`, rows and cols as little-endian
//! `u32`, then `rows·cols` pairs of little-endian `f64`.
//!
//! Composite-space matrices use the emitter-major basis of [`crate::hilbert`].

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, C64};

const TEXT_TAG: &str = "molmech-matrix";
const BINARY_MAGIC: &[u8; 4] = b"MMX1";
/// Dumps larger than this are rejected on decode.
pub const MAX_ENTRIES: usize = 1 << 24;

pub fn encode_text(m: &CMatrix) -> String {
    let mut out = format!("{TEXT_TAG} 1 {} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push_str(&format!("{:e} {:e}\n", z.re, z.im));
        }
    }
    out
}

fn checked_len(rows: usize, cols: usize) -> Result<usize> {
    rows.checked_mul(cols)
        .filter(|&n| n <= MAX_ENTRIES)
        .ok_or_else(|| Error::Dump(format!("shape {rows}x{cols} too large")))
}

pub fn decode_text(input: &str) -> Result<CMatrix> {
    let mut lines = input
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Dump("empty input".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != TEXT_TAG || fields[1] != "1" {
        return Err(Error::Dump(format!("bad header `{header}`")));
    }
    let rows: usize = fields[2]
        .parse()
        .map_err(|_| Error::Dump(format!("bad row count `{}`", fields[2])))?;
    let cols: usize = fields[3]
        .parse()
        .map_err(|_| Error::Dump(format!("bad column count `{}`", fields[3])))?;
    let len = checked_len(rows, cols)?;
    let mut data = Vec::with_capacity(len.min(4096));
    for (k, line) in lines.enumerate() {
        if k >= len {
            return Err(Error::Dump("trailing entries after matrix".into()));
        }
        let mut it = line.split_whitespace();
        let (re, im) = match (it.next(), it.next(), it.next()) {
            (Some(re), Some(im), None) => (re, im),
            _ => return Err(Error::Dump(format!("entry {k}: expected `re im`"))),
        };
        let re: f64 = re
            .parse()
            .map_err(|_| Error::Dump(format!("entry {k}: bad real part")))?;
        let im: f64 = im
            .parse()
            .map_err(|_| Error::Dump(format!("entry {k}: bad imaginary part")))?;
        data.push(C64::new(re, im));
    }
    if data.len() != len {
        return Err(Error::Dump(format!(
            "expected {len} entries, found {}",
            data.len()
        )));
    }
    Ok(CMatrix::from_row_slice(rows, cols, &data))
}

pub fn encode_binary(m: &CMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 16 * m.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<CMatrix> {
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::Dump("missing MMX1 header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let len = checked_len(rows, cols)?;
    let body = &bytes[12..];
    if body.len() != 16 * len {
        return Err(Error::Dump(format!(
            "payload has {} bytes, expected {}",
            body.len(),
            16 * len
        )));
    }
    let data: Vec<C64> = body
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok(CMatrix::from_row_slice(rows, cols, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix_strategy() -> impl Strategy<Value = CMatrix> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), r * c).prop_map(move |v| {
                let data: Vec<C64> = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
                CMatrix::from_row_slice(r, c, &data)
            })
        })
    }

    proptest! {
        #[test]
        fn text_and_binary_roundtrip(m in matrix_strategy()) {
            prop_assert_eq!(decode_text(&encode_text(&m)).unwrap(), m.clone());
            prop_assert_eq!(decode_binary(&encode_binary(&m)).unwrap(), m);
        }
    }

    #[test]
    fn text_is_row_major() {
        let m = CMatrix::from_row_slice(1, 2, &[C64::new(1.0, 2.0), C64::new(3.0, 4.0)]);
        let s = encode_text(&m);
        assert_eq!(s, "molmech-matrix 1 1 2\n1e0 2e0\n3e0 4e0\n");
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode_text("").is_err());
        assert!(decode_text("molmech-matrix 1 2 2\n1 0\n").is_err());
        assert!(decode_text("molmech-matrix 1 1 1\n1 0\n2 0\n").is_err());
        assert!(decode_text("molmech-matrix 1 99999999 99999999\n").is_err());
        assert!(decode_binary(b"MMX1\x01\x00\x00\x00\x01\x00\x00\x00").is_err());
        assert!(decode_binary(b"XXXX").is_err());
    }
}
