//! `MATN` network files: magic, version, the number of layer widths followed
//! by the widths (input through bottleneck), the number of heads followed by
//! their sizes, the seed as u64, then every trunk layer and every head as
//! row-major weights followed by biases, all f64 little-endian.

use ndarray::{Array1, Array2};

use super::net::{Dense, MdnnModel};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MATN";
const VERSION: u32 = 1;
const FORMAT: &str = "MATN";

pub fn write_mdnn(model: &MdnnModel) -> Vec<u8> {
    let mut w = Writer::with_magic(MAGIC);
    w.u32(VERSION);
    w.len_u32(model.sizes.len());
    for &s in &model.sizes {
        w.len_u32(s);
    }
    w.len_u32(model.heads.len());
    for &h in &model.heads {
        w.len_u32(h);
    }
    w.u64(model.seed);
    for layer in model.trunk.iter().chain(&model.head_layers) {
        w.f64s(layer.w.as_slice().expect("standard layout"));
        w.f64s(layer.b.as_slice().expect("contiguous"));
    }
    w.buf
}

pub fn read_mdnn(bytes: &[u8]) -> Result<MdnnModel> {
    let mut r = Reader::new(bytes, FORMAT);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(FORMAT, format!("unsupported version {version}")));
    }
    let n_sizes = r.count(4)?;
    let sizes = (0..n_sizes).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let n_heads = r.count(4)?;
    let heads = (0..n_heads).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let seed = r.u64()?;
    if sizes.len() < 2 || sizes.contains(&0) || heads.is_empty() || heads.contains(&0) {
        return Err(Error::format(FORMAT, "invalid layer or head sizes"));
    }
    let bottleneck = sizes[sizes.len() - 1];
    let shapes: Vec<(usize, usize)> =
        sizes.windows(2).map(|w| (w[1], w[0])).chain(heads.iter().map(|&h| (h, bottleneck))).collect();
    let params = shapes
        .iter()
        .try_fold(0usize, |acc, &(o, i)| o.checked_mul(i)?.checked_add(o)?.checked_add(acc));
    if params.and_then(|p| p.checked_mul(8)) != Some(r.remaining()) {
        return Err(Error::format(FORMAT, "parameter block size does not match header"));
    }
    let mut layers = Vec::with_capacity(shapes.len());
    for &(o, i) in &shapes {
        let w = (0..o * i).map(|_| r.finite()).collect::<Result<Vec<_>>>()?;
        let b = (0..o).map(|_| r.finite()).collect::<Result<Vec<_>>>()?;
        layers.push(Dense { w: Array2::from_shape_vec((o, i), w).expect("shape"), b: Array1::from(b) });
    }
    r.finish()?;
    let head_layers = layers.split_off(sizes.len() - 1);
    Ok(MdnnModel { sizes, heads, trunk: layers, head_layers, seed })
}
