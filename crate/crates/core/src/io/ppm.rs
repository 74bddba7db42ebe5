//! Binary PPM (P6, maxval 255). Colours encode as `round(c * 255)`.

use std::fs;
use std::path::Path;

use super::header_tokens;
use crate::error::{Error, Result};
use crate::field::{ColorImage, Grid};
use crate::Vec3;

#[inline]
pub fn encode_channel(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn decode_channel(b: u8) -> f64 {
    b as f64 / 255.0
}

pub fn encode(image: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    for c in image.iter() {
        out.extend([encode_channel(c.x), encode_channel(c.y), encode_channel(c.z)]);
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ColorImage> {
    let bad = |reason: String| Error::format(path, reason);
    let (tokens, offset) =
        header_tokens(bytes, 4).ok_or_else(|| bad("truncated PPM header".into()))?;
    if tokens[0] != "P6" {
        return Err(bad(format!("expected binary PPM magic P6, found {:?}", tokens[0])));
    }
    let w: usize = tokens[1].parse().map_err(|_| bad("bad PPM width".into()))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad PPM height".into()))?;
    if tokens[3] != "255" {
        return Err(bad(format!("unsupported PPM maxval {}", tokens[3])));
    }
    let payload = &bytes[offset..];
    if payload.len() < w * h * 3 {
        return Err(bad(format!(
            "truncated PPM payload: expected {} bytes, found {}",
            w * h * 3,
            payload.len()
        )));
    }
    let data = payload[..w * h * 3]
        .chunks_exact(3)
        .map(|p| Vec3::new(decode_channel(p[0]), decode_channel(p[1]), decode_channel(p[2])))
        .collect();
    Grid::from_vec(w, h, data)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_ppm(path: impl AsRef<Path>, image: &ColorImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(image)).map_err(|e| Error::io(path, e))
}

/// Rounds every channel to the nearest 8-bit level.
pub fn quantize(image: &ColorImage) -> ColorImage {
    image.map(|c| c.map(|x| decode_channel(encode_channel(x))))
}
