use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::labels::TokenLabelSequence;

/// Counts of token realizations (rows) whose center frame falls inside a
/// reference unit (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    pub counts: Array2<u64>,
    /// Display order of rows: tokens grouped by their dominant reference unit.
    pub row_order: Vec<usize>,
    pub col_order: Vec<usize>,
}

impl CooccurrenceMatrix {
    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    /// Counts in display order.
    pub fn ordered(&self) -> Array2<u64> {
        Array2::from_shape_fn(self.counts.dim(), |(i, j)| self.counts[[self.row_order[i], self.col_order[j]]])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("token,reference,count\n");
        for ((t, r), &c) in self.counts.indexed_iter() {
            if c > 0 {
                out.push_str(&format!("{t},{r},{c}\n"));
            }
        }
        out
    }
}

/// `reference` may leave frames unannotated; realizations whose center is not
/// covered are not counted. Utterances are matched by id.
pub fn cooccurrence(
    labels: &[TokenLabelSequence],
    num_tokens: usize,
    reference: &[TokenLabelSequence],
    num_units: usize,
) -> Result<CooccurrenceMatrix> {
    let by_id: BTreeMap<&str, &TokenLabelSequence> = reference.iter().map(|r| (r.utterance_id.as_str(), r)).collect();
    let mut counts = Array2::<u64>::zeros((num_tokens, num_units));
    for seq in labels {
        let Some(r) = by_id.get(seq.utterance_id.as_str()) else { continue };
        for s in &seq.segments {
            if s.token >= num_tokens {
                return Err(Error::TokenOutOfRange { id: s.token, n: num_tokens });
            }
            let c = s.center();
            if let Some(u) = r.segments.iter().find(|u| u.start <= c && c < u.end) {
                if u.token >= num_units {
                    return Err(Error::TokenOutOfRange { id: u.token, n: num_units });
                }
                counts[[s.token, u.token]] += 1;
            }
        }
    }
    let dominant = |t: usize| {
        let row = counts.row(t);
        let (j, &c) = row.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).expect("non-empty row");
        // tokens never seen in an annotated region go last
        if c == 0 { (num_units, 0) } else { (j, c) }
    };
    let mut row_order: Vec<usize> = (0..num_tokens).collect();
    row_order.sort_by_key(|&t| {
        let (j, c) = dominant(t);
        (j, std::cmp::Reverse(c), t)
    });
    Ok(CooccurrenceMatrix { counts, row_order, col_order: (0..num_units).collect() })
}

/// Realization counts above which a token counts as frequently spoken by a speaker.
pub const FREQUENT_COUNT: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerTokenMap {
    pub speakers: Vec<String>,
    /// Speakers × tokens realization counts.
    pub counts: Array2<u64>,
    pub beta: f64,
    /// Display order of token columns.
    pub token_order: Vec<usize>,
}

impl SpeakerTokenMap {
    pub fn intensity(beta: f64, c: u64) -> f64 {
        1.0 - (-beta * c as f64).exp()
    }

    /// Intensities in display order.
    pub fn intensities(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.speakers.len(), self.token_order.len()), |(s, a)| {
            Self::intensity(self.beta, self.counts[[s, self.token_order[a]]])
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("speaker,column,token,count,intensity\n");
        for (s, spk) in self.speakers.iter().enumerate() {
            for (col, &a) in self.token_order.iter().enumerate() {
                let c = self.counts[[s, a]];
                out.push_str(&format!("{spk},{col},{a},{c},{:.6}\n", Self::intensity(self.beta, c)));
            }
        }
        out
    }
}

fn mean_nonzero_intensity(beta: f64, nonzero: &[u64]) -> f64 {
    nonzero.iter().map(|&c| SpeakerTokenMap::intensity(beta, c)).sum::<f64>() / nonzero.len() as f64
}

/// Speaker × token intensity map. `speaker_of` maps utterance ids to speakers;
/// speakers appear in sorted order. β is set by bisection so the mean intensity
/// over nonzero cells equals `target`.
pub fn speaker_token_map(
    labels: &[TokenLabelSequence],
    num_tokens: usize,
    speaker_of: &BTreeMap<String, String>,
    target: f64,
) -> Result<SpeakerTokenMap> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!("target intensity {target} outside (0, 1)")));
    }
    let speakers: Vec<String> = speaker_of.values().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut counts = Array2::<u64>::zeros((speakers.len(), num_tokens));
    for seq in labels {
        let spk = speaker_of
            .get(&seq.utterance_id)
            .ok_or_else(|| Error::Missing(format!("speaker of utterance {}", seq.utterance_id)))?;
        for s in &seq.segments {
            if s.token >= num_tokens {
                return Err(Error::TokenOutOfRange { id: s.token, n: num_tokens });
            }
            counts[[index[spk.as_str()], s.token]] += 1;
        }
    }
    let nonzero: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if nonzero.is_empty() {
        return Err(Error::Empty("all speaker/token counts are zero".into()));
    }

    let mut hi = 1.0;
    while mean_nonzero_intensity(hi, &nonzero) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_nonzero_intensity(mid, &nonzero) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);

    // sort by total count, then pull each speaker's new frequent tokens forward
    let totals: Vec<u64> = (0..num_tokens).map(|a| counts.column(a).sum()).collect();
    let mut by_total: Vec<usize> = (0..num_tokens).collect();
    by_total.sort_by_key(|&a| (std::cmp::Reverse(totals[a]), a));
    let mut placed = vec![false; num_tokens];
    let mut token_order = Vec::with_capacity(num_tokens);
    for s in 0..speakers.len() {
        for &a in &by_total {
            if !placed[a] && counts[[s, a]] >= FREQUENT_COUNT {
                placed[a] = true;
                token_order.push(a);
            }
        }
    }
    token_order.extend(by_total.into_iter().filter(|&a| !placed[a]));
    Ok(SpeakerTokenMap { speakers, counts, beta, token_order })
}

/// Binary greymap (P5, maxval 255) of values in `[0, 1]`, clamped.
pub fn write_pgm(values: &Array2<f64>) -> Vec<u8> {
    let (h, w) = values.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}
