//! Portable float map (grayscale `Pf`) depth files, little-endian, meters.
//!
//! PFM stores scanlines bottom-to-top; [`DepthMap`] keeps them top-to-bottom
//! so that `get(u, v)` uses the usual image convention.

use std::fs;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PfmError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a grayscale PFM file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PfmHeader {
    pub width: u32,
    pub height: u32,
    pub little_endian: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), (width as usize) * (height as usize));
        Self { width, height, data }
    }

    pub fn get(&self, u: u32, v: u32) -> Option<f32> {
        (u < self.width && v < self.height).then(|| self.data[(v * self.width + u) as usize])
    }

    /// Depth at `(u, v)` if it is a usable positive finite value.
    pub fn valid(&self, u: u32, v: u32) -> Option<f64> {
        self.get(u, v).filter(|d| d.is_finite() && *d > 0.0).map(f64::from)
    }

    /// (min, max) over valid pixels.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        let mut it = self.data.iter().copied().filter(|d| d.is_finite() && *d > 0.0);
        let first = it.next()? as f64;
        Some(it.fold((first, first), |(lo, hi), d| (lo.min(d as f64), hi.max(d as f64))))
    }
}

fn read_token<R: BufRead>(r: &mut R) -> Result<String, PfmError> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
        if tok.len() > 32 {
            return Err(PfmError::Format("header token too long".into()));
        }
    }
    String::from_utf8(tok).map_err(|_| PfmError::Format("header is not ASCII".into()))
}

fn parse_header<R: BufRead>(r: &mut R) -> Result<PfmHeader, PfmError> {
    let magic = read_token(r)?;
    if magic != "Pf" {
        return Err(PfmError::Format(format!("magic `{magic}`")));
    }
    let width: u32 = read_token(r)?.parse().map_err(|_| PfmError::Format("width".into()))?;
    let height: u32 = read_token(r)?.parse().map_err(|_| PfmError::Format("height".into()))?;
    let scale: f64 = read_token(r)?.parse().map_err(|_| PfmError::Format("scale".into()))?;
    if width == 0 || height == 0 || scale == 0.0 {
        return Err(PfmError::Format("zero dimension or scale".into()));
    }
    Ok(PfmHeader { width, height, little_endian: scale < 0.0 })
}

pub fn read_header(path: &Path) -> Result<PfmHeader, PfmError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    parse_header(&mut r)
}

pub fn read(path: &Path) -> Result<DepthMap, PfmError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let h = parse_header(&mut r)?;
    let n = h.width as usize * h.height as usize;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    let mut data = vec![0f32; n];
    let w = h.width as usize;
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let val = if h.little_endian { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row_from_bottom, col) = (i / w, i % w);
        let row = h.height as usize - 1 - row_from_bottom;
        data[row * w + col] = val;
    }
    Ok(DepthMap { width: h.width, height: h.height, data })
}

pub fn encode(map: &DepthMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    let w = map.width as usize;
    for row in (0..map.height as usize).rev() {
        for v in &map.data[row * w..(row + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write(path: &Path, map: &DepthMap) -> io::Result<()> {
    fs::write(path, encode(map))
}
