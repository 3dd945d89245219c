//! Token label sequences: exhaustive segmentations of utterances into token spans.
//!
//! Spans are half-open `[start, end)` frame intervals. Label files are JSON lines
//! with one `{utt, token, start, end}` record per segment, or the equivalent CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub token: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(token: usize, start: usize, end: usize) -> Self {
        Segment { token, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Frame at the center of the span, `floor((start + end) / 2)`.
    pub fn center(&self) -> usize {
        (self.start + self.end) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLabelSequence {
    pub utterance_id: String,
    pub segments: Vec<Segment>,
}

impl TokenLabelSequence {
    pub fn new(utterance_id: impl Into<String>, segments: Vec<Segment>) -> Self {
        TokenLabelSequence { utterance_id: utterance_id.into(), segments }
    }

    /// Builds a sequence from interior boundaries and one token per resulting span.
    pub fn from_boundaries(
        utterance_id: impl Into<String>,
        boundaries: &[usize],
        tokens: &[usize],
        num_frames: usize,
    ) -> Result<Self> {
        if tokens.len() != boundaries.len() + 1 {
            return Err(Error::Labels(format!(
                "{} tokens for {} boundaries",
                tokens.len(),
                boundaries.len()
            )));
        }
        let mut edges = Vec::with_capacity(boundaries.len() + 2);
        edges.push(0);
        edges.extend_from_slice(boundaries);
        edges.push(num_frames);
        let segments = edges
            .windows(2)
            .zip(tokens)
            .map(|(w, &t)| Segment::new(t, w[0], w[1]))
            .collect();
        let seq = TokenLabelSequence::new(utterance_id, segments);
        seq.validate(num_frames, usize::MAX)?;
        Ok(seq)
    }

    pub fn num_frames(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    /// Interior boundaries: segment junctions excluding 0 and T.
    pub fn boundaries(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    pub fn token_ids(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.token).collect()
    }

    /// Per-frame token ids.
    pub fn frame_labels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_frames());
        for s in &self.segments {
            out.extend(std::iter::repeat_n(s.token, s.len()));
        }
        out
    }

    /// Checks that the segments tile `[0, num_frames)` and every id is below `n`.
    pub fn validate(&self, num_frames: usize, n: usize) -> Result<()> {
        let mut pos = 0;
        for s in &self.segments {
            if s.start != pos || s.end <= s.start {
                return Err(Error::Labels(format!(
                    "{}: segment [{}, {}) does not continue at frame {pos}",
                    self.utterance_id, s.start, s.end
                )));
            }
            if s.token >= n {
                return Err(Error::TokenOutOfRange { id: s.token, n });
            }
            pos = s.end;
        }
        if pos != num_frames {
            return Err(Error::Labels(format!(
                "{}: segments cover {pos} of {num_frames} frames",
                self.utterance_id
            )));
        }
        Ok(())
    }
}

/// Labels for every utterance of a corpus under one token inventory of size `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub n: usize,
    pub utterances: Vec<TokenLabelSequence>,
}

#[derive(Serialize, Deserialize)]
struct LabelRecord<'a> {
    utt: std::borrow::Cow<'a, str>,
    token: usize,
    start: usize,
    end: usize,
}

impl LabelSet {
    pub fn new(n: usize, utterances: Vec<TokenLabelSequence>) -> Self {
        LabelSet { n, utterances }
    }

    pub fn get(&self, utterance_id: &str) -> Option<&TokenLabelSequence> {
        self.utterances.iter().find(|u| u.utterance_id == utterance_id)
    }

    /// Number of frames assigned to each token id.
    pub fn token_frame_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        for seg in self.utterances.iter().flat_map(|u| &u.segments) {
            if seg.token < self.n {
                counts[seg.token] += seg.len();
            }
        }
        counts
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            for s in &u.segments {
                let rec = LabelRecord {
                    utt: u.utterance_id.as_str().into(),
                    token: s.token,
                    start: s.start,
                    end: s.end,
                };
                out.push_str(&serde_json::to_string(&rec).expect("label record serializes"));
                out.push('\n');
            }
        }
        out
    }

    /// Parses JSON-lines labels. Records of one utterance must be contiguous and in
    /// order; each utterance must tile from frame 0 and every token must be below `n`.
    pub fn from_jsonl(text: &str, n: usize) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: LabelRecord = serde_json::from_str(line)
                .map_err(|e| Error::format("labels", format!("line {}: {e}", i + 1)))?;
            records.push((rec.utt.into_owned(), Segment::new(rec.token, rec.start, rec.end)));
        }
        Self::from_records(records, n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("utt,token,start,end\n");
        for u in &self.utterances {
            for s in &u.segments {
                let _ = writeln!(out, "{},{},{},{}", u.utterance_id, s.token, s.start, s.end);
            }
        }
        out
    }

    pub fn from_csv(text: &str, n: usize) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "utt,token,start,end" => {}
            _ => return Err(Error::format("labels csv", "missing header")),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::format("labels csv", format!("line {}", i + 2));
            if fields.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
            records.push((
                fields[0].to_string(),
                Segment::new(num(fields[1])?, num(fields[2])?, num(fields[3])?),
            ));
        }
        Self::from_records(records, n)
    }

    fn from_records(records: Vec<(String, Segment)>, n: usize) -> Result<Self> {
        let mut utterances: Vec<TokenLabelSequence> = Vec::new();
        let mut seen = BTreeMap::new();
        for (utt, seg) in records {
            match utterances.last_mut() {
                Some(last) if last.utterance_id == utt => last.segments.push(seg),
                _ => {
                    if seen.insert(utt.clone(), ()).is_some() {
                        return Err(Error::Labels(format!("{utt}: records are not contiguous")));
                    }
                    utterances.push(TokenLabelSequence::new(utt, vec![seg]));
                }
            }
        }
        for u in &utterances {
            u.validate(u.num_frames(), n)?;
        }
        Ok(LabelSet { n, utterances })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LabelSet {
        LabelSet::new(
            3,
            vec![
                TokenLabelSequence::new("a", vec![Segment::new(0, 0, 4), Segment::new(2, 4, 9)]),
                TokenLabelSequence::new("b", vec![Segment::new(1, 0, 3)]),
            ],
        )
    }

    #[test]
    fn jsonl_and_csv_round_trip() {
        let set = sample();
        assert_eq!(LabelSet::from_jsonl(&set.to_jsonl(), 3).unwrap(), set);
        assert_eq!(LabelSet::from_csv(&set.to_csv(), 3).unwrap(), set);
    }

    #[test]
    fn jsonl_schema_fields() {
        let line = sample().to_jsonl().lines().next().unwrap().to_string();
        assert_eq!(line, r#"{"utt":"a","token":0,"start":0,"end":4}"#);
    }

    #[test]
    fn gaps_and_out_of_range_rejected() {
        let gap = "{\"utt\":\"a\",\"token\":0,\"start\":0,\"end\":4}\n{\"utt\":\"a\",\"token\":0,\"start\":5,\"end\":6}\n";
        assert!(LabelSet::from_jsonl(gap, 2).is_err());
        let oob = "{\"utt\":\"a\",\"token\":7,\"start\":0,\"end\":4}\n";
        assert!(matches!(LabelSet::from_jsonl(oob, 2), Err(Error::TokenOutOfRange { .. })));
    }

    #[test]
    fn frame_labels_follow_half_open_spans() {
        let set = sample();
        let f = set.utterances[0].frame_labels();
        assert_eq!(f.len(), 9);
        assert_eq!(f[3], 0);
        assert_eq!(f[4], 2);
        assert_eq!(set.utterances[0].boundaries(), vec![4]);
    }

    #[test]
    fn from_boundaries_tiles() {
        let s = TokenLabelSequence::from_boundaries("u", &[3, 5], &[1, 0, 1], 8).unwrap();
        assert_eq!(s.segments, vec![Segment::new(1, 0, 3), Segment::new(0, 3, 5), Segment::new(1, 5, 8)]);
        assert!(TokenLabelSequence::from_boundaries("u", &[3], &[1], 8).is_err());
    }
}
