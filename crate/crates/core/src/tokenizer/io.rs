//! `MATM` level-model files: magic, version, `m`, `n`, `dim`, the `n` prior
//! probabilities, then per token and state the component count, self-loop
//! probability and per component weight, mean and variance. All values are
//! little-endian; floats are f64.

use super::model::{GaussState, Granularity, LevelModel, TokenHmm};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MATM";
const VERSION: u32 = 1;
const FORMAT: &str = "MATM";

pub fn write_level_model(model: &LevelModel) -> Vec<u8> {
    let mut w = Writer::with_magic(MAGIC);
    w.u32(VERSION);
    w.len_u32(model.granularity.m);
    w.len_u32(model.granularity.n);
    w.len_u32(model.dim());
    w.f64s(&model.prior);
    for h in &model.hmms {
        for (s, &p) in h.states.iter().zip(&h.self_loop) {
            w.len_u32(s.num_components());
            w.f64(p);
            for c in 0..s.num_components() {
                w.f64(s.weights[c]);
                w.f64s(&s.means[c]);
                w.f64s(&s.vars[c]);
            }
        }
    }
    w.buf
}

pub fn read_level_model(bytes: &[u8]) -> Result<LevelModel> {
    let mut r = Reader::new(bytes, FORMAT);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(FORMAT, format!("unsupported version {version}")));
    }
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if m == 0 || n == 0 || dim == 0 {
        return Err(Error::format(FORMAT, "zero-sized model"));
    }
    // every state needs at least a count, a self-loop and one component
    let min_state = 12 + 8 * (1 + 2 * dim);
    let need = m.checked_mul(n).and_then(|s| s.checked_mul(min_state)).and_then(|s| s.checked_add(8 * n));
    if need.is_none_or(|need| need > r.remaining()) {
        return Err(Error::format(FORMAT, "declared shape exceeds file size"));
    }
    let prior = (0..n).map(|_| r.finite()).collect::<Result<Vec<_>>>()?;
    let mut hmms = Vec::with_capacity(n);
    for id in 0..n {
        let mut states = Vec::with_capacity(m);
        let mut self_loop = Vec::with_capacity(m);
        for _ in 0..m {
            let comps = r.count(8 * (1 + 2 * dim))?;
            if comps == 0 {
                return Err(Error::format(FORMAT, "state without components"));
            }
            self_loop.push(r.finite()?);
            let mut st = GaussState { weights: Vec::new(), means: Vec::new(), vars: Vec::new() };
            for _ in 0..comps {
                st.weights.push(r.finite()?);
                st.means.push((0..dim).map(|_| r.finite()).collect::<Result<_>>()?);
                st.vars.push((0..dim).map(|_| r.finite()).collect::<Result<_>>()?);
            }
            states.push(st);
        }
        hmms.push(TokenHmm { id, states, self_loop });
    }
    r.finish()?;
    let granularity = Granularity::new(m, n)?;
    let model = LevelModel { granularity, hmms, prior };
    model.validate().map_err(|e| Error::format(FORMAT, e.to_string()))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> LevelModel {
        let hmms = (0..2)
            .map(|id| TokenHmm {
                id,
                states: vec![
                    GaussState::single(vec![id as f64, 0.5], vec![1.0, 2.0]),
                    GaussState::single(vec![-1.0, 0.25], vec![0.5, 0.1]).split(0.2),
                ],
                self_loop: vec![0.6, 0.3],
            })
            .collect();
        LevelModel { granularity: Granularity::new(2, 2).unwrap(), hmms, prior: vec![0.25, 0.75] }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        assert_eq!(read_level_model(&write_level_model(&m)).unwrap(), m);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = write_level_model(&model());
        for len in 0..bytes.len() {
            assert!(read_level_model(&bytes[..len]).is_err(), "prefix of {len} bytes");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_level_model(&long).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut m = model();
        m.hmms[1].states[0].vars[0][1] = -1.0;
        assert!(read_level_model(&write_level_model(&m)).is_err());
        let mut m = model();
        m.prior = vec![0.5, 0.6];
        assert!(read_level_model(&write_level_model(&m)).is_err());
    }
}
