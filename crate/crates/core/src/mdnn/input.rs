use ndarray::{s, Array2, ArrayView2};

use super::net::MdnnModel;
use crate::corpus::{ContextFeatureSequence, Corpus, FeatureSequence};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::tokenizer::Granularity;

/// Per-frame input rows: MFCC context, optional BNF context, any further
/// per-frame blocks, then the utterance-level vector repeated on every frame.
pub fn make_iteration_input(
    mfcc: &ContextFeatureSequence,
    bnf: Option<&ContextFeatureSequence>,
    extras: &[ArrayView2<f64>],
    utterance: Option<&[f64]>,
) -> Result<Array2<f64>> {
    let t = mfcc.num_frames();
    let mut blocks: Vec<ArrayView2<f64>> = vec![mfcc.frames.view()];
    blocks.extend(bnf.map(|b| b.frames.view()));
    blocks.extend(extras.iter().cloned());
    for b in &blocks {
        if b.nrows() != t {
            return Err(Error::DimensionMismatch { expected: t, got: b.nrows() });
        }
    }
    let u = utterance.unwrap_or(&[]);
    let width = blocks.iter().map(|b| b.ncols()).sum::<usize>() + u.len();
    let mut out = Array2::zeros((t, width));
    let mut col = 0;
    for b in &blocks {
        out.slice_mut(s![.., col..col + b.ncols()]).assign(b);
        col += b.ncols();
    }
    for mut row in out.rows_mut() {
        row.slice_mut(s![col..]).iter_mut().zip(u).for_each(|(o, &v)| *o = v);
    }
    Ok(out)
}

/// Frame targets for every level: row `t` of the result (utterances stacked in
/// id order) holds, per level, the token whose segment contains frame `t`.
pub fn build_targets(corpus: &Corpus, levels: &[(Granularity, &LabelSet)]) -> Result<Array2<usize>> {
    let total = corpus.num_frames();
    let mut out = Array2::zeros((total, levels.len()));
    for (k, (g, labels)) in levels.iter().enumerate() {
        let mut row = 0;
        for u in corpus.canonical_order() {
            let f = &corpus.utterances[u];
            let seq = labels
                .get(&f.utterance_id)
                .ok_or_else(|| Error::Missing(format!("level {g} labels for {}", f.utterance_id)))?;
            seq.validate(f.num_frames(), g.n)?;
            for (t, tok) in seq.frame_labels().into_iter().enumerate() {
                out[[row + t, k]] = tok;
            }
            row += f.num_frames();
        }
    }
    Ok(out)
}

/// Bottleneck features for one utterance whose input rows are `inputs`.
pub fn extract_bnf(model: &MdnnModel, inputs: ArrayView2<f64>, like: &FeatureSequence) -> Result<FeatureSequence> {
    model.check_input(inputs)?;
    if inputs.nrows() != like.num_frames() {
        return Err(Error::DimensionMismatch { expected: like.num_frames(), got: inputs.nrows() });
    }
    FeatureSequence::with_timing(model.bottleneck(inputs), like.frame_shift, like.frame_length, like.utterance_id.clone())
}
