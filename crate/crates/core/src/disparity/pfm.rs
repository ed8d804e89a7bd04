//! Single-channel Portable Float Map, Middlebury flavour: rows are stored
//! bottom to top and a negative scale means little-endian samples.

use std::path::Path;

use super::map::DisparityMap;
use crate::error::{Error, Result};

/// Decodes a grayscale PFM into `(width, height, values)` with rows in the
/// usual top-to-bottom order.
pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedPfm(format!("missing {what}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    match token("magic")?.as_str() {
        "Pf" => {}
        "PF" => {
            return Err(Error::MalformedPfm(
                "colour PFM is not a disparity map".into(),
            ))
        }
        other => return Err(Error::MalformedPfm(format!("bad magic `{other}`"))),
    }
    let parse_dim = |s: String| {
        s.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::MalformedPfm(format!("bad dimension `{s}`")))
    };
    let width = parse_dim(token("width")?)?;
    let height = parse_dim(token("height")?)?;
    let scale_tok = token("scale")?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::MalformedPfm(format!("bad scale `{scale_tok}`")))?;
    // Exactly one whitespace byte separates the header from the samples.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedPfm("truncated header".into()));
    }
    pos += 1;

    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::MalformedPfm("dimensions overflow".into()))?;
    let data = &bytes[pos..];
    if data.len() != expected {
        return Err(Error::MalformedPfm(format!(
            "expected {expected} bytes of samples, found {}",
            data.len()
        )));
    }
    let little = scale < 0.0;
    let mut values = vec![0f32; width * height];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (i / width, i % width);
        values[(height - 1 - file_row) * width + col] = x;
    }
    Ok((width, height, values))
}

/// Little-endian PFM; invalid pixels are written as `+inf`.
pub fn encode_pfm(map: &DisparityMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = format!("Pf\n{w} {h}\n-1\n").into_bytes();
    out.reserve(w * h * 4);
    for row in map.values().chunks_exact(w).rev() {
        for x in row {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(map: &DisparityMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pfm(map))?;
    Ok(())
}

/// Reads a disparity map produced by an external estimator. Non-finite and
/// non-positive samples become invalid.
pub fn import_disparity(
    path: impl AsRef<Path>,
    expected: Option<(usize, usize)>,
) -> Result<DisparityMap> {
    import_disparity_bytes(&std::fs::read(path)?, expected)
}

pub(crate) fn import_disparity_bytes(
    bytes: &[u8],
    expected: Option<(usize, usize)>,
) -> Result<DisparityMap> {
    let (w, h, values) = decode_pfm(bytes)?;
    if let Some(exp) = expected {
        if exp != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: exp,
                found: (w, h),
            });
        }
    }
    DisparityMap::new(w, h, values)
}

impl DisparityMap {
    pub fn from_pfm_bytes(bytes: &[u8], expected: Option<(usize, usize)>) -> Result<Self> {
        import_disparity_bytes(bytes, expected)
    }
}
