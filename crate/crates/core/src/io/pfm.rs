//! Portable Float Map: `Pf` (one channel) or `PF` (three channels), rows
//! stored bottom-to-top as little-endian 32-bit floats.

use std::fs;
use std::path::Path;

use super::header_tokens;
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::Vec3;

/// A decoded PFM image.
#[derive(Clone, Debug, PartialEq)]
pub enum Pfm {
    Gray(Grid<f32>),
    Color(Grid<[f32; 3]>),
}

pub fn encode_gray(field: &Grid<f32>) -> Vec<u8> {
    encode(b"Pf", field.width(), field.height(), |u, v| vec![field[(u, v)]])
}

pub fn encode_color(field: &Grid<[f32; 3]>) -> Vec<u8> {
    encode(b"PF", field.width(), field.height(), |u, v| field[(u, v)].to_vec())
}

fn encode(magic: &[u8], w: usize, h: usize, pixel: impl Fn(usize, usize) -> Vec<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(format!("\n{w} {h}\n-1.0\n").as_bytes());
    for v in (0..h).rev() {
        for u in 0..w {
            for value in pixel(u, v) {
                out.extend_from_slice(&value.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Pfm> {
    let bad = |reason: &str| Error::format(path, reason.to_string());
    let (tokens, offset) = header_tokens(bytes, 4).ok_or_else(|| bad("truncated PFM header"))?;
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(bad(&format!("bad PFM magic {other:?}"))),
    };
    let w: usize = tokens[1].parse().map_err(|_| bad("bad PFM width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad PFM scale"))?;
    if !(scale < 0.0) {
        return Err(bad("only little-endian PFM (negative scale) is supported"));
    }
    let needed = w * h * channels * 4;
    let payload = &bytes[offset..];
    if payload.len() < needed {
        return Err(bad(&format!(
            "truncated PFM payload: expected {needed} bytes, found {}",
            payload.len()
        )));
    }
    let value = |k: usize| f32::from_le_bytes(payload[4 * k..4 * k + 4].try_into().unwrap());
    // Row v of the image is stored at position h - 1 - v.
    let base = |u: usize, v: usize| ((h - 1 - v) * w + u) * channels;
    Ok(if channels == 1 {
        Pfm::Gray(Grid::from_fn(w, h, |u, v| value(base(u, v))))
    } else {
        Pfm::Color(Grid::from_fn(w, h, |u, v| {
            let b = base(u, v);
            [value(b), value(b + 1), value(b + 2)]
        }))
    })
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Pfm> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_gray(path: impl AsRef<Path>, field: &Grid<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_gray(field)).map_err(|e| Error::io(path, e))
}

pub fn write_color(path: impl AsRef<Path>, field: &Grid<[f32; 3]>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_color(field)).map_err(|e| Error::io(path, e))
}

/// Writes a scalar field as single-precision `Pf`.
pub fn write_scalar(path: impl AsRef<Path>, field: &Grid<f64>) -> Result<()> {
    write_gray(path, &field.map(|&x| x as f32))
}

/// Writes a vector field as single-precision `PF`.
pub fn write_vectors(path: impl AsRef<Path>, field: &Grid<Vec3>) -> Result<()> {
    write_color(path, &field.map(|v| [v.x as f32, v.y as f32, v.z as f32]))
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<Grid<f64>> {
    let path = path.as_ref();
    match read_pfm(path)? {
        Pfm::Gray(g) => Ok(g.map(|&x| x as f64)),
        Pfm::Color(_) => Err(Error::format(path, "expected a one-channel Pf file")),
    }
}

pub fn read_vectors(path: impl AsRef<Path>) -> Result<Grid<Vec3>> {
    let path = path.as_ref();
    match read_pfm(path)? {
        Pfm::Color(g) => Ok(g.map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))),
        Pfm::Gray(_) => Err(Error::format(path, "expected a three-channel PF file")),
    }
}
