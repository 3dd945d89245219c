//! Per-granularity token discovery: alternating HMM training and decoding,
//! run independently for each level of a granularity grid.

mod decode;
mod io;
mod model;
mod train;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::labels::LabelSet;

pub use crate::labels::TokenLabelSequence;
pub use decode::{decode_level, decode_utterance};
pub use io::{read_level_model, write_level_model};
pub use model::{GaussState, Granularity, GranularityGrid, LevelModel, TokenHmm};
pub use train::{flat_start, train_level_hmms, TokenizerConfig, DEAD_TOKEN_PRIOR};

/// `log P(X | model, labels)`: forward log likelihood of every labeled span under
/// its token HMM plus the log prior of each token, summed in utterance-id order.
pub fn corpus_log_likelihood(model: &LevelModel, corpus: &Corpus, labels: &LabelSet) -> Result<f64> {
    let index: HashMap<&str, usize> =
        labels.utterances.iter().enumerate().map(|(i, u)| (u.utterance_id.as_str(), i)).collect();
    let log_prior = model.log_prior();
    let mut total = 0.0;
    for u in corpus.canonical_order() {
        let f = &corpus.utterances[u];
        let seq = index
            .get(f.utterance_id.as_str())
            .map(|&i| &labels.utterances[i])
            .ok_or_else(|| Error::Missing(format!("labels for utterance {}", f.utterance_id)))?;
        seq.validate(f.num_frames(), model.granularity.n)?;
        for s in &seq.segments {
            let h = &model.hmms[s.token];
            let emis = h.emissions((s.start..s.end).map(|t| f.row(t)));
            total += h.span_log_likelihood(&emis, s.len()) + log_prior[s.token];
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfStep {
    FlatStart,
    Train,
    Decode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub outer: usize,
    pub step: HalfStep,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRun {
    pub model: LevelModel,
    pub labels: LabelSet,
    pub trace: Vec<TraceEntry>,
    pub outer_iters: usize,
}

/// Alternates token-model and token-label optimization from `init` labels until
/// the labels stop changing or `cfg.outer_iters` alternations have run.
pub fn run_level(corpus: &Corpus, init: &LabelSet, g: Granularity, cfg: &TokenizerConfig) -> Result<LevelRun> {
    if init.n != g.n {
        return Err(Error::Labels(format!("initial labels have {} tokens, level needs {}", init.n, g.n)));
    }
    let mut model = flat_start(corpus, init, g, cfg)?;
    let mut labels = init.clone();
    let mut trace = vec![TraceEntry {
        outer: 0,
        step: HalfStep::FlatStart,
        log_likelihood: corpus_log_likelihood(&model, corpus, &labels)?,
    }];
    let mut outer = 0;
    while outer < cfg.outer_iters.max(1) {
        outer += 1;
        model = train_level_hmms(corpus, &labels, g, cfg, Some(&model))?;
        trace.push(TraceEntry { outer, step: HalfStep::Train, log_likelihood: corpus_log_likelihood(&model, corpus, &labels)? });
        let decoded = decode_level(&model, corpus, cfg.lm_scale);
        trace.push(TraceEntry {
            outer,
            step: HalfStep::Decode,
            log_likelihood: corpus_log_likelihood(&model, corpus, &decoded)?,
        });
        let fixpoint = decoded == labels;
        labels = decoded;
        if fixpoint {
            break;
        }
    }
    Ok(LevelRun { model, labels, trace, outer_iters: outer })
}

/// Result of one level of the multi-granular tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub struct MatLevel {
    pub granularity: Granularity,
    pub run: LevelRun,
}

/// Runs every level of `grid` independently. `init` holds one label set per
/// phonetic granularity, in grid order; all temporal granularities with the same
/// `n` start from the same labels.
pub fn run_mat(corpus: &Corpus, grid: &GranularityGrid, init: &[LabelSet], cfg: &TokenizerConfig) -> Result<Vec<MatLevel>> {
    grid.validate()?;
    if init.len() != grid.phonetic.len() {
        return Err(Error::Labels(format!("{} initial label sets for {} phonetic granularities", init.len(), grid.phonetic.len())));
    }
    for (labels, &n) in init.iter().zip(&grid.phonetic) {
        if labels.n != n {
            return Err(Error::Labels(format!("initial labels for n={n} have {} tokens", labels.n)));
        }
    }
    grid.levels()
        .par_iter()
        .map(|&g| {
            let i = grid.phonetic.iter().position(|&n| n == g.n).expect("level from grid");
            Ok(MatLevel { granularity: g, run: run_level(corpus, &init[i], g, cfg)? })
        })
        .collect()
}

#[cfg(test)]
mod tests;
