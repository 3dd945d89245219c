//! `MATL` topic-model files: magic, version, topic count `K`, vocabulary size
//! `V`, document count `D`, then `alpha`, `beta` and the initial log posterior
//! as f64, the sampler seed as u64, and the `K x V` topic-word and `D x K`
//! document-topic counts as u32, row-major and little-endian.

use ndarray::Array2;

use super::documents::PseudoDocument;
use super::lda::LdaModel;
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MATL";
const VERSION: u32 = 1;
const FORMAT: &str = "MATL";

pub fn write_lda_model(model: &LdaModel) -> Vec<u8> {
    let mut w = Writer::with_magic(MAGIC);
    w.u32(VERSION);
    w.len_u32(model.num_topics());
    w.len_u32(model.vocab_size());
    w.len_u32(model.doc_topic.nrows());
    w.f64(model.alpha);
    w.f64(model.beta);
    w.f64(model.initial_log_posterior);
    w.u64(model.seed);
    for &c in model.topic_word.iter().chain(model.doc_topic.iter()) {
        w.u32(c);
    }
    w.buf
}

pub fn read_lda_model(bytes: &[u8]) -> Result<LdaModel> {
    let mut r = Reader::new(bytes, FORMAT);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(FORMAT, format!("unsupported version {version}")));
    }
    let k = r.u32()? as usize;
    let v = r.u32()? as usize;
    let d = r.u32()? as usize;
    if k == 0 || v == 0 {
        return Err(Error::format(FORMAT, "zero topics or empty vocabulary"));
    }
    let alpha = r.finite()?;
    let beta = r.finite()?;
    let initial_log_posterior = r.f64()?;
    let seed = r.u64()?;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::format(FORMAT, "hyperparameters must be positive"));
    }
    let cells = k.checked_mul(v).zip(d.checked_mul(k)).and_then(|(a, b)| a.checked_add(b));
    if cells.and_then(|c| c.checked_mul(4)) != Some(r.remaining()) {
        return Err(Error::format(FORMAT, "count block size does not match header"));
    }
    let mut read = |rows, cols| -> Result<Array2<u32>> {
        let data = (0..rows * cols).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
    };
    let topic_word = read(k, v)?;
    let doc_topic = read(d, k)?;
    r.finish()?;
    for t in 0..k {
        let a: u64 = topic_word.row(t).iter().map(|&c| c as u64).sum();
        let b: u64 = doc_topic.column(t).iter().map(|&c| c as u64).sum();
        if a != b {
            return Err(Error::format(FORMAT, format!("topic {t} counts disagree")));
        }
    }
    Ok(LdaModel { alpha, beta, seed, topic_word, doc_topic, initial_log_posterior })
}

#[derive(serde::Serialize)]
struct FusedRecord<'a> {
    utt: &'a str,
    boundaries: &'a [usize],
}

/// One `{"utt", "boundaries"}` record per utterance.
pub fn fused_to_jsonl(fused: &[(String, Vec<usize>)]) -> String {
    let mut out = String::new();
    for (utt, boundaries) in fused {
        out.push_str(&serde_json::to_string(&FusedRecord { utt, boundaries }).expect("serializable"));
        out.push('\n');
    }
    out
}

/// One `{"utt", "start", "end", "words"}` record per document.
pub fn documents_to_jsonl(docs: &[PseudoDocument]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("serializable"));
        out.push('\n');
    }
    out
}
