//! Portable float map (PFM) reading and writing.
//!
//! A PFM file is a text header followed by raw 32-bit floats:
//!
//! ```text
//! Pf | PF          grayscale | RGB
//! <width> <height>
//! <scale>          negative: little-endian, positive: big-endian
//! <payload>        rows stored bottom-up
//! ```
//!
//! NaN samples are read as holes (`+inf`) with a warning. Files with bytes
//! after the payload are rejected.

use std::path::Path;

use pcfuse_core::{ColorImage, DepthMap, Grid};

use crate::error::{read_file, write_file, Error, FormatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PfmImage {
    Gray(DepthMap),
    Color(ColorImage),
}

impl PfmImage {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            PfmImage::Gray(g) => g.dims(),
            PfmImage::Color(c) => c.dims(),
        }
    }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    order: ByteOrder,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, FormatError> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::new("truncated PFM header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| FormatError::new("PFM header is not ASCII"))?;
        tokens.push(tok);
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FormatError::new("missing PFM payload"));
    }
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(FormatError::new(format!("bad PFM magic {other:?}"))),
    };
    let dim = |t: &str| t.parse::<usize>().map_err(|_| FormatError::new(format!("bad PFM dimension {t:?}")));
    let (width, height) = (dim(tokens[1])?, dim(tokens[2])?);
    if width == 0 || height == 0 {
        return Err(FormatError::new("PFM dimensions must be positive"));
    }
    let scale: f64 = tokens[3].parse().map_err(|_| FormatError::new(format!("bad PFM scale {:?}", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(FormatError::new("PFM scale must be finite and nonzero"));
    }
    let order = if scale < 0.0 { ByteOrder::Little } else { ByteOrder::Big };
    Ok(Header { channels, width, height, order, data_start: pos + 1 })
}

/// Parses a complete PFM file.
pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage, FormatError> {
    let h = parse_header(bytes)?;
    let count = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(h.channels))
        .ok_or_else(|| FormatError::new("PFM dimensions overflow"))?;
    let payload = &bytes[h.data_start..];
    let expected = count.checked_mul(4).ok_or_else(|| FormatError::new("PFM dimensions overflow"))?;
    if payload.len() < expected {
        return Err(FormatError::new(format!("truncated PFM payload: {} of {expected} bytes", payload.len())));
    }
    if payload.len() > expected {
        return Err(FormatError::new(format!("{} trailing bytes after PFM payload", payload.len() - expected)));
    }
    let mut nans = 0usize;
    let mut values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| {
            let b = [c[0], c[1], c[2], c[3]];
            let x = match h.order {
                ByteOrder::Little => f32::from_le_bytes(b),
                ByteOrder::Big => f32::from_be_bytes(b),
            };
            if x.is_nan() {
                nans += 1;
                f64::INFINITY
            } else {
                f64::from(x)
            }
        })
        .collect();
    if nans > 0 {
        log::warn!("PFM payload holds {nans} NaN samples; read as holes");
    }
    // Flip rows from bottom-up storage to top-down.
    let row = h.width * h.channels;
    let flipped: Vec<f64> = (0..h.height).rev().flat_map(|r| values[r * row..(r + 1) * row].iter().copied()).collect();
    values = flipped;
    if h.channels == 1 {
        Ok(PfmImage::Gray(Grid::from_vec(h.width, h.height, values).expect("length checked")))
    } else {
        let px = values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(PfmImage::Color(Grid::from_vec(h.width, h.height, px).expect("length checked")))
    }
}

/// Serializes an image; values are narrowed to `f32`.
pub fn encode_pfm(img: &PfmImage, order: ByteOrder) -> Vec<u8> {
    let (w, h) = img.dims();
    let (magic, channels) = match img {
        PfmImage::Gray(_) => ("Pf", 1),
        PfmImage::Color(_) => ("PF", 3),
    };
    let scale = match order {
        ByteOrder::Little => "-1.0",
        ByteOrder::Big => "1.0",
    };
    let mut out = format!("{magic}\n{w} {h}\n{scale}\n").into_bytes();
    out.reserve(w * h * channels * 4);
    for v in (0..h).rev() {
        for u in 0..w {
            let px: &[f64] = match img {
                PfmImage::Gray(g) => std::slice::from_ref(g.get(u, v)),
                PfmImage::Color(c) => c.get(u, v),
            };
            for &x in px {
                let x = x as f32;
                out.extend_from_slice(&match order {
                    ByteOrder::Little => x.to_le_bytes(),
                    ByteOrder::Big => x.to_be_bytes(),
                });
            }
        }
    }
    out
}

pub fn read_pfm(path: &Path) -> Result<PfmImage> {
    decode_pfm(&read_file(path)?).map_err(|e| Error::format(path, e))
}

pub fn write_pfm(path: &Path, img: &PfmImage, order: ByteOrder) -> Result<()> {
    write_file(path, &encode_pfm(img, order))
}

/// Reads a single-channel PFM as a depth map.
pub fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    match read_pfm(path)? {
        PfmImage::Gray(g) => Ok(g),
        PfmImage::Color(_) => Err(Error::format(path, FormatError::new("expected a 1-channel (Pf) file"))),
    }
}

/// Reads a three-channel PFM as a color image.
pub fn read_color_pfm(path: &Path) -> Result<ColorImage> {
    match read_pfm(path)? {
        PfmImage::Color(c) => Ok(c),
        PfmImage::Gray(_) => Err(Error::format(path, FormatError::new("expected a 3-channel (PF) file"))),
    }
}

pub fn write_depth_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    write_pfm(path, &PfmImage::Gray(depth.clone()), ByteOrder::Little)
}

pub fn write_color_pfm(path: &Path, color: &ColorImage) -> Result<()> {
    write_pfm(path, &PfmImage::Color(color.clone()), ByteOrder::Little)
}
