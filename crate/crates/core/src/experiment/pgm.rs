//! 16-bit binary PGM export. The intensity window is stored in a TOML sidecar
//! so the grayscale levels can be mapped back to image values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sidecar;
use crate::tensor::RealGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub min: f64,
    pub max: f64,
}

pub fn encode_pgm16(f: &RealGrid) -> (Vec<u8>, Window) {
    let (min, max) = f.min_max();
    let span = max - min;
    let mut out = format!("P5\n{} {}\n65535\n", f.width(), f.height()).into_bytes();
    for &v in f.data() {
        let level = if span > 0.0 { ((v - min) / span * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&level.to_be_bytes());
    }
    (out, Window { min, max })
}

pub fn write_pgm16(path: &Path, f: &RealGrid) -> Result<()> {
    let (bytes, window) = encode_pgm16(f);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    sidecar::write_toml(&sidecar::sidecar_path(path), &window)
}

/// Raw levels of a 16-bit PGM as `(height, width, levels)`.
pub fn decode_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::parse(format!("not a binary PGM (magic {})", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(format!("bad PGM header field '{s}'")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 65535 {
        return Err(Error::parse(format!("expected a 16-bit PGM, maxval is {maxval}")));
    }
    let body = &bytes[pos.min(bytes.len())..];
    if body.len() != 2 * w * h {
        return Err(Error::parse(format!("PGM payload is {} bytes, expected {}", body.len(), 2 * w * h)));
    }
    let levels = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((h, w, levels))
}

/// Reads a PGM and its window back into approximate image values.
pub fn read_pgm16(path: &Path) -> Result<RealGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (h, w, levels) = decode_pgm16(&bytes).map_err(|e| e.at_path(path))?;
    let win: Window = sidecar::read_toml(&sidecar::sidecar_path(path))?;
    let data = levels
        .iter()
        .map(|&l| win.min + (win.max - win.min) * l as f64 / 65535.0)
        .collect();
    RealGrid::new(h, w, data)
}
