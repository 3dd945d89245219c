use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::TokenLabelSequence;
use crate::tokenizer::{Granularity, GranularityGrid};

/// Shared pseudo-word vocabulary: every level's token ids shifted so that the
/// `M * sum(n)` ids of the whole grid are distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    grid: GranularityGrid,
    stride: usize,
}

impl Vocabulary {
    pub fn new(grid: &GranularityGrid) -> Self {
        Vocabulary { grid: grid.clone(), stride: grid.phonetic.iter().sum() }
    }

    pub fn size(&self) -> usize {
        self.grid.temporal.len() * self.stride
    }

    pub fn offset(&self, g: Granularity) -> Result<usize> {
        let mi = self.grid.temporal.iter().position(|&m| m == g.m);
        let ni = self.grid.phonetic.iter().position(|&n| n == g.n);
        match (mi, ni) {
            (Some(mi), Some(ni)) => Ok(mi * self.stride + self.grid.phonetic[..ni].iter().sum::<usize>()),
            _ => Err(Error::Config(format!("level {g} is not in the grid"))),
        }
    }
}

/// The pseudo-words of one fused segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoDocument {
    #[serde(rename = "utt")]
    pub utterance_id: String,
    pub start: usize,
    pub end: usize,
    pub words: Vec<u32>,
}

/// One document per fused segment of an utterance. A level token belongs to the
/// document when at least half of its span lies inside the segment; if no token
/// of any level qualifies, the tokens covering the segment midpoint are used.
pub fn build_documents(
    utterance_id: &str,
    fused: &[usize],
    levels: &[(Granularity, &TokenLabelSequence)],
    vocab: &Vocabulary,
) -> Result<Vec<PseudoDocument>> {
    let t = levels.first().map_or(0, |(_, s)| s.num_frames());
    let offsets = levels.iter().map(|(g, _)| vocab.offset(*g)).collect::<Result<Vec<_>>>()?;
    let mut edges = vec![0];
    edges.extend_from_slice(fused);
    edges.push(t);
    let mut docs = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let (s, e) = (w[0], w[1]);
        let mut words = Vec::new();
        for ((_, seq), &off) in levels.iter().zip(&offsets) {
            for tok in &seq.segments {
                let overlap = tok.end.min(e).saturating_sub(tok.start.max(s));
                if 2 * overlap >= tok.len() && overlap > 0 {
                    words.push((off + tok.token) as u32);
                }
            }
        }
        if words.is_empty() {
            let mid = (s + e) / 2;
            for ((_, seq), &off) in levels.iter().zip(&offsets) {
                if let Some(tok) = seq.segments.iter().find(|x| x.start <= mid && mid < x.end) {
                    words.push((off + tok.token) as u32);
                }
            }
        }
        if words.is_empty() {
            return Err(Error::Empty(format!("{utterance_id}: no tokens cover [{s}, {e})")));
        }
        docs.push(PseudoDocument { utterance_id: utterance_id.to_string(), start: s, end: e, words });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(cuts: &[usize], tokens: &[usize], t: usize) -> TokenLabelSequence {
        TokenLabelSequence::from_boundaries("u", cuts, tokens, t).unwrap()
    }

    #[test]
    fn vocabulary_layout() {
        let grid = GranularityGrid::new(vec![3, 5], vec![2, 3]).unwrap();
        let v = Vocabulary::new(&grid);
        assert_eq!(v.size(), 10);
        let g = |m, n| Granularity::new(m, n).unwrap();
        assert_eq!(v.offset(g(3, 2)).unwrap(), 0);
        assert_eq!(v.offset(g(3, 3)).unwrap(), 2);
        assert_eq!(v.offset(g(5, 2)).unwrap(), 5);
        assert_eq!(v.offset(g(5, 3)).unwrap(), 7);
        assert!(v.offset(g(7, 3)).is_err());
    }

    #[test]
    fn single_level_gives_one_word_per_document() {
        let grid = GranularityGrid::new(vec![3], vec![4]).unwrap();
        let s = seq(&[4, 9], &[2, 0, 3], 14);
        let g = Granularity::new(3, 4).unwrap();
        let docs = build_documents("u", &[4, 9], &[(g, &s)], &Vocabulary::new(&grid)).unwrap();
        let words: Vec<_> = docs.iter().map(|d| d.words.clone()).collect();
        assert_eq!(words, vec![vec![2], vec![0], vec![3]]);
    }

    #[test]
    fn half_overlap_rule_and_fallback() {
        let grid = GranularityGrid::new(vec![3, 5], vec![2, 3]).unwrap();
        let vocab = Vocabulary::new(&grid);
        let a = seq(&[6], &[1, 0], 12);
        let b = seq(&[2, 9], &[2, 1, 0], 12);
        let levels = [(Granularity::new(3, 2).unwrap(), &a), (Granularity::new(5, 3).unwrap(), &b)];
        let docs = build_documents("u", &[6], &levels, &vocab).unwrap();
        // [0,6): a token 1; b token 2 (fully) and token 1 [2,9) has 4 of 7 frames inside
        assert_eq!(docs[0].words, vec![1, 7 + 2, 7 + 1]);
        // [6,12): a token 0; b token 1 has 3 of 7 (no), token 0 fully
        assert_eq!(docs[1].words, vec![0, 7]);

        // a tiny segment inside one long token only gets words from the midpoint
        let long = seq(&[], &[1], 12);
        let docs = build_documents("u", &[5, 7], &[(Granularity::new(3, 2).unwrap(), &long)], &vocab).unwrap();
        assert!(docs.iter().all(|d| d.words == vec![1]));
    }
}
