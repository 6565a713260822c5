//! Text export of truncated operators: a JSON header plus a base64 payload of
//! little-endian column-major complex doubles (re, im interleaved).

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::core_model::strip::Lambda;
use crate::error::{PsidoError, Result};
use crate::jet::{CMatrix, C64};
use crate::quantize::TruncatedOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
    pub lambda: Lambda,
    #[serde(rename = "K")]
    pub k_max: usize,
    pub fibers: (usize, usize),
    pub layout: String,
}

#[derive(Serialize, Deserialize)]
struct Encoded {
    header: MatrixHeader,
    payload: String,
}

pub fn encode_operator(t: &TruncatedOperator) -> Result<String> {
    let (rows, cols) = t.matrix.shape();
    let mut bytes = Vec::with_capacity(rows * cols * 16);
    // nalgebra storage is column-major already
    for v in t.matrix.iter() {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    let enc = Encoded {
        header: MatrixHeader {
            rows,
            cols,
            lambda: t.lambda,
            k_max: t.k_max,
            fibers: t.fibers,
            layout: "column-major complex128 little-endian".into(),
        },
        payload: STANDARD.encode(bytes),
    };
    serde_json::to_string(&enc).map_err(|e| PsidoError::ConfigInvalid(e.to_string()))
}

pub fn decode_operator(s: &str) -> Result<TruncatedOperator> {
    let enc: Encoded = serde_json::from_str(s).map_err(|e| PsidoError::ConfigInvalid(e.to_string()))?;
    let bytes = STANDARD
        .decode(enc.payload)
        .map_err(|e| PsidoError::ConfigInvalid(format!("payload: {e}")))?;
    let h = enc.header;
    if bytes.len() != h.rows * h.cols * 16 {
        return Err(PsidoError::ConfigInvalid(format!(
            "payload holds {} bytes, header implies {}",
            bytes.len(),
            h.rows * h.cols * 16
        )));
    }
    let vals = bytes.chunks_exact(16).map(|c| {
        let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
        C64::new(re, im)
    });
    let m = CMatrix::from_iterator(h.rows, h.cols, vals);
    TruncatedOperator::new(m, h.lambda, h.k_max, h.fibers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = CMatrix::from_fn(6, 3, |i, j| C64::new(i as f64 / 3.0, -(j as f64).sqrt() * 1e-17));
        let t = TruncatedOperator::new(m, Lambda::new(2.5, 0.1), 1, (2, 1)).unwrap();
        let s = encode_operator(&t).unwrap();
        let back = decode_operator(&s).unwrap();
        assert_eq!(back.matrix, t.matrix);
        assert_eq!(back.lambda, t.lambda);
        assert!(s.contains("\"K\":1"));
    }
}
