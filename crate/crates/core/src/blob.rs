//! Base64 parameter blobs: little-endian `f32` values in layout order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use crate::error::{Error, Result};

pub fn encode(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode(blob: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(blob)
        .map_err(|e| Error::snapshot(None, format!("invalid base64 parameter blob: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::snapshot(
            None,
            format!(
                "parameter blob holds {} bytes, not a whole number of f32 values",
                bytes.len()
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
