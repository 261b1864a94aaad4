//! Middlebury `.flo` optical flow files.
//!
//! Layout, all little-endian: the float magic `202021.25`, width and height as
//! `i32`, then interleaved `(u, v)` floats, rows top-down. Components whose
//! magnitude exceeds `1e9` mark unknown flow; they are read as holes and holes
//! are written back as `1e10`.

use std::path::Path;

use pcfuse_core::{FlowField, Grid, Pixel};

use crate::error::{read_file, write_file, Error, FormatError, Result};

pub const FLO_MAGIC: f32 = 202021.25;
pub const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;
pub const UNKNOWN_FLOW: f32 = 1e10;

fn read_i32(b: &[u8]) -> i32 {
    i32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn read_f32(b: &[u8]) -> f32 {
    f32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField, FormatError> {
    if bytes.len() < 12 {
        return Err(FormatError::new("truncated .flo header"));
    }
    let magic = read_f32(&bytes[0..4]);
    if magic != FLO_MAGIC {
        return Err(FormatError::new(format!("bad .flo magic {magic}")));
    }
    let (w, h) = (read_i32(&bytes[4..8]), read_i32(&bytes[8..12]));
    if w <= 0 || h <= 0 {
        return Err(FormatError::new(format!("bad .flo size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w * h * 8;
    let payload = &bytes[12..];
    if payload.len() != expected {
        return Err(FormatError::new(format!(
            ".flo payload holds {} bytes, {w}x{h} needs {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| {
            let (u, v) = (read_f32(&c[0..4]), read_f32(&c[4..8]));
            let known = |x: f32| x.is_finite() && x.abs() <= UNKNOWN_FLOW_THRESHOLD;
            if known(u) && known(v) {
                [f64::from(u), f64::from(v)]
            } else {
                <[f64; 2]>::HOLE
            }
        })
        .collect();
    Ok(Grid::from_vec(w, h, data).expect("length checked"))
}

/// Serializes a flow field; values are narrowed to `f32`.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(12 + w * h * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for f in flow.iter() {
        let (u, v) = if f.is_hole() { (UNKNOWN_FLOW, UNKNOWN_FLOW) } else { (f[0] as f32, f[1] as f32) };
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&read_file(path)?).map_err(|e| Error::format(path, e))
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    write_file(path, &encode_flo(flow))
}
