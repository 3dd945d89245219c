use std::collections::BTreeMap;

use rayon::prelude::*;

use super::dtw::{frame_dtw, token_dtw};
use super::kl::{matching_matrix, DistanceMatrix};
use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};

/// A query or document: decoded token ids per level and any frame-level
/// feature streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchItem {
    pub id: String,
    pub tokens: Vec<Vec<usize>>,
    pub features: Vec<FeatureSequence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Token DTW summed over all levels.
    Token,
    /// Frame DTW on feature stream `i`.
    Frame(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RankMode {
    Token,
    Frame(usize),
    /// Mean of several streams, optionally weighted.
    Fusion { streams: Vec<Stream>, weights: Option<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    /// `(doc_id, score)`, ascending score, ties by document id.
    pub entries: Vec<(String, f64)>,
}

fn stream_score(stream: Stream, query: &SearchItem, doc: &SearchItem, levels: &[DistanceMatrix]) -> Result<f64> {
    match stream {
        Stream::Token => {
            if query.tokens.len() != levels.len() || doc.tokens.len() != levels.len() {
                return Err(Error::Missing(format!(
                    "token sequences for {} levels (query {} has {}, document {} has {})",
                    levels.len(),
                    query.id,
                    query.tokens.len(),
                    doc.id,
                    doc.tokens.len()
                )));
            }
            let mut total = 0.0;
            for ((s, d), q) in levels.iter().zip(&doc.tokens).zip(&query.tokens) {
                if d.is_empty() || q.is_empty() {
                    return Err(Error::Empty(format!("empty token sequence for {} or {}", doc.id, query.id)));
                }
                total += token_dtw(&matching_matrix(s, d, q)?);
            }
            Ok(total)
        }
        Stream::Frame(i) => {
            let (Some(q), Some(d)) = (query.features.get(i), doc.features.get(i)) else {
                return Err(Error::Missing(format!("feature stream {i} for {} or {}", query.id, doc.id)));
            };
            frame_dtw(q, d)
        }
    }
}

fn score(mode: &RankMode, query: &SearchItem, doc: &SearchItem, levels: &[DistanceMatrix]) -> Result<f64> {
    match mode {
        RankMode::Token => stream_score(Stream::Token, query, doc, levels),
        RankMode::Frame(i) => stream_score(Stream::Frame(*i), query, doc, levels),
        RankMode::Fusion { streams, weights } => {
            if streams.is_empty() {
                return Err(Error::Config("fusion needs at least one stream".into()));
            }
            let weights = match weights {
                Some(w) if w.len() != streams.len() => {
                    return Err(Error::DimensionMismatch { expected: streams.len(), got: w.len() })
                }
                Some(w) => w.clone(),
                None => vec![1.0; streams.len()],
            };
            let total: f64 = weights.iter().sum();
            let mut acc = 0.0;
            for (&s, w) in streams.iter().zip(&weights) {
                acc += w * stream_score(s, query, doc, levels)?;
            }
            Ok(acc / total)
        }
    }
}

/// Scores every document against `query` and sorts by ascending distance.
pub fn rank_documents(query: &SearchItem, docs: &[SearchItem], levels: &[DistanceMatrix], mode: &RankMode) -> Result<RankedList> {
    let mut entries = docs
        .par_iter()
        .map(|d| Ok((d.id.clone(), score(mode, query, d, levels)?)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(RankedList { query_id: query.id.clone(), entries })
}

/// `query_id  doc_id  rank  score`, ranks from 1.
pub fn rankings_to_tsv(lists: &[RankedList]) -> String {
    let mut out = String::from("query_id\tdoc_id\trank\tscore\n");
    for l in lists {
        for (r, (doc, s)) in l.entries.iter().enumerate() {
            out.push_str(&format!("{}\t{doc}\t{}\t{s}\n", l.query_id, r + 1));
        }
    }
    out
}

/// Binary relevance of documents to queries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelevanceTable {
    pub entries: BTreeMap<(String, String), bool>,
}

impl RelevanceTable {
    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, relevant: bool) {
        self.entries.insert((query.into(), doc.into()), relevant);
    }

    pub fn get(&self, query: &str, doc: &str) -> Option<bool> {
        self.entries.get(&(query.to_string(), doc.to_string())).copied()
    }

    fn relevant_count(&self, query: &str) -> usize {
        self.entries.iter().filter(|((q, _), &r)| q == query && r).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,doc_id,relevant\n");
        for ((q, d), &r) in &self.entries {
            out.push_str(&format!("{q},{d},{}\n", r as u8));
        }
        out
    }

    /// Parses `query_id,doc_id,relevant` rows (header required, relevance 0 or 1).
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, why: &str| Error::format("relevance CSV", format!("line {line}: {why}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "query_id,doc_id,relevant" => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut table = RelevanceTable::default();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 || f[0].is_empty() || f[1].is_empty() {
                return Err(bad(i + 1, "expected three fields"));
            }
            let r = match f[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad(i + 1, "relevance must be 0 or 1")),
            };
            if table.entries.insert((f[0].to_string(), f[1].to_string()), r).is_some() {
                return Err(bad(i + 1, "duplicate pair"));
            }
        }
        Ok(table)
    }
}

/// Average precision of one ranked list; `None` when the query has no relevant
/// documents.
pub fn average_precision(list: &RankedList, rel: &RelevanceTable) -> Result<Option<f64>> {
    let total = rel.relevant_count(&list.query_id);
    let mut hits = 0;
    let mut sum = 0.0;
    for (r, (doc, _)) in list.entries.iter().enumerate() {
        let relevant = rel
            .get(&list.query_id, doc)
            .ok_or_else(|| Error::Missing(format!("relevance of {doc} for {}", list.query_id)))?;
        if relevant {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok((total > 0).then(|| sum / total as f64))
}

pub fn mean_average_precision(lists: &[RankedList], rel: &RelevanceTable) -> Result<f64> {
    let mut aps = Vec::new();
    for l in lists {
        if let Some(ap) = average_precision(l, rel)? {
            aps.push(ap);
        }
    }
    if aps.is_empty() {
        return Err(Error::Empty("no query has a relevant document".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}
