//! Token-label optimization: for a fixed model, the segmentation and token
//! assignment maximizing the summed span log likelihood plus scaled log prior.
//!
//! Every span is scored by its exact forward likelihood (summing over state
//! paths inside the token), so the result is the argmax of the same objective
//! the training step increases.

use rayon::prelude::*;

use super::model::LevelModel;
use crate::corpus::{Corpus, FeatureSequence};
use crate::labels::{LabelSet, Segment, TokenLabelSequence};

pub fn decode_utterance(model: &LevelModel, f: &FeatureSequence, lm_scale: f64) -> TokenLabelSequence {
    let t_len = f.num_frames();
    let m = model.granularity.m;
    let log_prior: Vec<f64> = model.log_prior().iter().map(|p| lm_scale * p).collect();
    let emissions: Vec<Vec<f64>> =
        model.hmms.iter().map(|h| h.emissions((0..t_len).map(|t| f.row(t)))).collect();

    // best[b]: best score of frames [0, b); back[b] = (start, token)
    let mut best = vec![f64::NEG_INFINITY; t_len + 1];
    let mut back = vec![(usize::MAX, usize::MAX); t_len + 1];
    best[0] = 0.0;
    for a in 0..t_len {
        if best[a] == f64::NEG_INFINITY {
            continue;
        }
        for (k, h) in model.hmms.iter().enumerate() {
            let base = best[a] + log_prior[k];
            if base == f64::NEG_INFINITY {
                continue;
            }
            let len = t_len - a;
            if len < m {
                continue;
            }
            let alpha = h.forward(&emissions[k][a * m..], len);
            let exit = h.exit_log_prob();
            for l in m..=len {
                let score = base + (alpha[(l - 1) * m + m - 1] + exit);
                if score > best[a + l] {
                    best[a + l] = score;
                    back[a + l] = (a, k);
                }
            }
        }
    }

    let id = f.utterance_id.clone();
    if back[t_len].0 == usize::MAX {
        // no admissible segmentation (utterance shorter than m frames)
        let token = (0..model.prior.len()).max_by(|&a, &b| model.prior[a].total_cmp(&model.prior[b]).then(b.cmp(&a)));
        return TokenLabelSequence::new(id, vec![Segment::new(token.unwrap_or(0), 0, t_len)]);
    }
    let mut segments = Vec::new();
    let mut end = t_len;
    while end > 0 {
        let (start, token) = back[end];
        segments.push(Segment::new(token, start, end));
        end = start;
    }
    segments.reverse();
    TokenLabelSequence::new(id, segments)
}

pub fn decode_level(model: &LevelModel, corpus: &Corpus, lm_scale: f64) -> LabelSet {
    let utterances = corpus.utterances.par_iter().map(|f| decode_utterance(model, f, lm_scale)).collect();
    LabelSet::new(model.granularity.n, utterances)
}
