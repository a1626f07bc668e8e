//! Grayscale Portable FloatMap (`Pf`) rasters.
//!
//! Files hold °C as little-endian f32 with scale `-1.0`, rows stored bottom
//! to top. In memory images are row-major from the top row, in kelvin.

use std::fs;
use std::path::Path;

use thermosplat_core::image::ThermalImage;
use thermosplat_core::scene::{c_to_k, k_to_c};

use crate::error::{Error, Result};

/// A decoded raster in file units.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    /// Top row first.
    pub data: Vec<f32>,
}

pub fn encode(img: &Pfm) -> Vec<u8> {
    let header = format!("Pf\n{} {}\n-1.0\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for row in img.data.chunks(img.width).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Pfm, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    match token()?.as_str() {
        "Pf" => {}
        "PF" => return Err("color PFM is not supported; expected grayscale `Pf`".into()),
        other => return Err(format!("bad magic `{other}`")),
    }
    let width: usize = token()?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token()?.parse().map_err(|_| "bad height".to_string())?;
    let scale: f32 = token()?.parse().map_err(|_| "bad scale".to_string())?;
    if width == 0 || height == 0 {
        return Err("empty raster".into());
    }
    if !(scale.is_finite() && scale != 0.0) {
        return Err("scale must be finite and nonzero".into());
    }
    // Exactly one whitespace byte separates the header from the samples.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("truncated header".into());
    }
    let body = &bytes[pos + 1..];
    let n = width.checked_mul(height).ok_or("raster too large")?;
    if body.len() != n * 4 {
        return Err(format!("expected {} data bytes, found {}", n * 4, body.len()));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f32; n];
    for (i, b) in body.chunks_exact(4).enumerate() {
        let raw = [b[0], b[1], b[2], b[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // Sample i sits in file row i / width, counted from the bottom.
        let (r, c) = (i / width, i % width);
        data[(height - 1 - r) * width + c] = v;
    }
    Ok(Pfm { width, height, data })
}

pub fn write_image(path: &Path, img: &ThermalImage) -> Result<()> {
    let pfm = Pfm {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|k| k_to_c(*k) as f32).collect(),
    };
    fs::write(path, encode(&pfm)).map_err(Error::io(path))
}

/// Reads a °C raster back into kelvin at `timestamp`.
pub fn read_image(path: &Path, timestamp: f64) -> Result<ThermalImage> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let pfm = decode(&bytes).map_err(|m| Error::format(path, m))?;
    let data = pfm.data.iter().map(|c| c_to_k(*c as f64)).collect();
    Ok(ThermalImage::from_data(pfm.width, pfm.height, data, timestamp)?)
}
