//! Mutual reinforcement across levels: fused boundaries, pseudo-word documents,
//! topic modeling, and new initial labels for every phonetic granularity.

mod boundary;
mod documents;
mod io;
mod lda;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::labels::{LabelSet, Segment, TokenLabelSequence};
use crate::tokenizer::{Granularity, GranularityGrid};

pub use boundary::{boundary_function, BoundaryTrace};
pub use documents::{build_documents, PseudoDocument, Vocabulary};
pub use io::{documents_to_jsonl, fused_to_jsonl, read_lda_model, write_lda_model};
pub use lda::{lda_fit, LdaConfig, LdaModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReinforceConfig {
    /// Peak threshold on the second difference of the fused boundary function.
    /// An isolated peak of height `B` has second difference `-2B`.
    pub tau: f64,
    pub min_gap: usize,
    pub lda: LdaConfig,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        ReinforceConfig { tau: -0.8, min_gap: 2, lda: LdaConfig::default() }
    }
}

/// Labels every document's segment with its most probable topic. Documents of
/// one utterance must be consecutive and in time order.
pub fn relabel(docs: &[PseudoDocument], model: &LdaModel) -> Result<LabelSet> {
    if docs.len() != model.doc_topic.nrows() {
        return Err(Error::DimensionMismatch { expected: model.doc_topic.nrows(), got: docs.len() });
    }
    let mut utterances: Vec<TokenLabelSequence> = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        let seg = Segment::new(model.document_topic(d), doc.start, doc.end);
        match utterances.last_mut() {
            Some(u) if u.utterance_id == doc.utterance_id => u.segments.push(seg),
            _ => utterances.push(TokenLabelSequence::new(doc.utterance_id.clone(), vec![seg])),
        }
    }
    let labels = LabelSet::new(model.num_topics(), utterances);
    for u in &labels.utterances {
        u.validate(u.num_frames(), labels.n)?;
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceOutput {
    /// Selected boundaries per utterance, in utterance-id order.
    pub fused: Vec<(String, Vec<usize>)>,
    pub documents: Vec<PseudoDocument>,
    /// One topic model and label set per phonetic granularity, in grid order.
    pub models: Vec<LdaModel>,
    pub labels: Vec<LabelSet>,
}

/// Fuses the boundaries of every level in `grid`, builds one document per fused
/// segment, and relabels the segments with a `K = n` topic model for each
/// phonetic granularity `n`.
pub fn mutual_reinforce(
    corpus: &Corpus,
    grid: &GranularityGrid,
    levels: &[(Granularity, &LabelSet)],
    cfg: &ReinforceConfig,
    seed: u64,
) -> Result<ReinforceOutput> {
    grid.validate()?;
    for g in grid.levels() {
        let count = levels.iter().filter(|(h, _)| *h == g).count();
        if count != 1 {
            return Err(Error::Labels(format!("expected one label set for level {g}, got {count}")));
        }
    }
    if levels.len() != grid.len() {
        return Err(Error::Labels(format!("{} label sets for a grid of {} levels", levels.len(), grid.len())));
    }
    let vocab = Vocabulary::new(grid);
    let per_utt: Vec<(String, Vec<usize>, Vec<PseudoDocument>)> = corpus
        .canonical_order()
        .par_iter()
        .map(|&u| {
            let f = &corpus.utterances[u];
            let id = f.utterance_id.as_str();
            let seqs = levels
                .iter()
                .map(|(g, labels)| {
                    let seq = labels.get(id).ok_or_else(|| Error::Missing(format!("level {g} labels for {id}")))?;
                    seq.validate(f.num_frames(), g.n)?;
                    Ok((*g, seq))
                })
                .collect::<Result<Vec<_>>>()?;
            let fused = BoundaryTrace::fuse(id, &seqs).select(cfg.tau, cfg.min_gap);
            let docs = build_documents(id, &fused, &seqs, &vocab)?;
            Ok((id.to_string(), fused, docs))
        })
        .collect::<Result<_>>()?;

    let mut fused = Vec::with_capacity(per_utt.len());
    let mut documents = Vec::new();
    for (id, b, docs) in per_utt {
        fused.push((id, b));
        documents.extend(docs);
    }
    if documents.is_empty() {
        return Err(Error::Empty("corpus has no utterances".into()));
    }
    let words: Vec<Vec<u32>> = documents.iter().map(|d| d.words.clone()).collect();
    let fitted: Vec<(LdaModel, LabelSet)> = grid
        .phonetic
        .par_iter()
        .map(|&n| {
            let model = lda_fit(&words, vocab.size(), n, &cfg.lda, seed)?;
            let labels = relabel(&documents, &model)?;
            Ok((model, labels))
        })
        .collect::<Result<_>>()?;
    let (models, labels) = fitted.into_iter().unzip();
    Ok(ReinforceOutput { fused, documents, models, labels })
}
