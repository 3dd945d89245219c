//! `MATF` feature files: magic, u32 rows, u32 cols, then row-major f32, all
//! little-endian.

use std::fmt::Write as _;

use ndarray::Array2;

use super::FeatureSequence;
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MATF";

pub fn write_matf(f: &FeatureSequence) -> Vec<u8> {
    let mut w = Writer::with_magic(MAGIC);
    w.len_u32(f.num_frames());
    w.len_u32(f.dim());
    for &v in f.frames.iter() {
        w.f32(v as f32);
    }
    w.buf
}

pub fn read_matf(bytes: &[u8], utterance_id: impl Into<String>) -> Result<FeatureSequence> {
    let mut r = Reader::new(bytes, "MATF");
    r.magic(MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let count = rows
        .checked_mul(cols)
        .filter(|c| c.checked_mul(4) == Some(r.remaining()))
        .ok_or_else(|| Error::format("MATF", format!("{rows}x{cols} does not match payload")))?;
    if rows == 0 || cols == 0 {
        return Err(Error::format("MATF", "empty matrix"));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from(r.f32()?));
    }
    r.finish()?;
    let frames = Array2::from_shape_vec((rows, cols), values).expect("shape checked");
    FeatureSequence::new(frames, utterance_id)
}

/// CSV with a header row of dimension indices.
pub fn features_to_csv(f: &FeatureSequence) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..f.dim()).map(|i| i.to_string()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in f.frames.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{}", *v as f32)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}
