use crate::labels::TokenLabelSequence;
use crate::tokenizer::Granularity;

/// `b(j)` for `j = 0..=T`: 1 where one segment ends and the next begins.
pub fn boundary_function(seq: &TokenLabelSequence) -> Vec<u8> {
    let mut b = vec![0u8; seq.num_frames() + 1];
    for j in seq.boundaries() {
        b[j] = 1;
    }
    b
}

/// Joint boundary function of one utterance: each level's `b` weighted by its
/// number of states, kept as an integer numerator over `denominator` so the
/// weights sum to one exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub utterance_id: String,
    pub numerator: Vec<u64>,
    pub denominator: u64,
}

impl BoundaryTrace {
    pub fn fuse(utterance_id: impl Into<String>, levels: &[(Granularity, &TokenLabelSequence)]) -> Self {
        let t = levels.first().map_or(0, |(_, s)| s.num_frames());
        let mut numerator = vec![0u64; t + 1];
        let mut denominator = 0;
        for (g, seq) in levels {
            debug_assert_eq!(seq.num_frames(), t);
            denominator += g.m as u64;
            for (j, &b) in boundary_function(seq).iter().enumerate() {
                numerator[j] += g.m as u64 * b as u64;
            }
        }
        BoundaryTrace { utterance_id: utterance_id.into(), numerator, denominator }
    }

    pub fn value(&self, j: usize) -> f64 {
        self.numerator[j] as f64 / self.denominator as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.numerator.len()).map(|j| self.value(j)).collect()
    }

    fn second_difference(&self, j: usize) -> f64 {
        let n = |i: usize| self.numerator[i] as i64;
        (n(j - 1) - 2 * n(j) + n(j + 1)) as f64 / self.denominator as f64
    }

    /// Interior positions that are local maxima of `B` with second difference at
    /// most `tau`, accepted strongest first so that no two are closer than `min_gap`.
    pub fn select(&self, tau: f64, min_gap: usize) -> Vec<usize> {
        let len = self.numerator.len();
        if len < 3 || self.denominator == 0 {
            return Vec::new();
        }
        let mut candidates: Vec<usize> = (1..len - 1)
            .filter(|&j| {
                let v = self.numerator[j];
                v > 0 && v >= self.numerator[j - 1] && v >= self.numerator[j + 1] && self.second_difference(j) <= tau
            })
            .collect();
        candidates.sort_by(|&a, &b| {
            self.numerator[b]
                .cmp(&self.numerator[a])
                .then(self.second_difference(a).total_cmp(&self.second_difference(b)))
                .then(a.cmp(&b))
        });
        let mut chosen: Vec<usize> = Vec::new();
        for j in candidates {
            if chosen.iter().all(|&c| c.abs_diff(j) >= min_gap) {
                chosen.push(j);
            }
        }
        chosen.sort_unstable();
        chosen
    }
}
