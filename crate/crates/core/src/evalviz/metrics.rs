use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::labels::TokenLabelSequence;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    fn from_counts(matched: usize, hyp: usize, reference: usize) -> Self {
        if hyp == 0 && reference == 0 {
            return Prf { precision: 1.0, recall: 1.0, f: 1.0 };
        }
        let precision = if hyp == 0 { 0.0 } else { matched as f64 / hyp as f64 };
        let recall = if reference == 0 { 0.0 } else { matched as f64 / reference as f64 };
        let f = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f }
    }
}

/// Number of one-to-one matches within `tol` frames, nearest pairs first.
fn matched_boundaries(hyp: &[usize], reference: &[usize], tol: usize) -> usize {
    let mut pairs = Vec::new();
    for (i, &h) in hyp.iter().enumerate() {
        for (j, &r) in reference.iter().enumerate() {
            let d = h.abs_diff(r);
            if d <= tol {
                pairs.push((d, h.min(r), h.max(r), i, j));
            }
        }
    }
    pairs.sort_unstable();
    let mut used_h = vec![false; hyp.len()];
    let mut used_r = vec![false; reference.len()];
    let mut matched = 0;
    for (_, _, _, i, j) in pairs {
        if !used_h[i] && !used_r[j] {
            used_h[i] = true;
            used_r[j] = true;
            matched += 1;
        }
    }
    matched
}

/// Boundary precision, recall and F-score under greedy nearest-first matching.
/// Two empty sets score 1; an empty side against a non-empty one scores 0.
pub fn boundary_prf(hyp: &[usize], reference: &[usize], tol: usize) -> Prf {
    Prf::from_counts(matched_boundaries(hyp, reference, tol), hyp.len(), reference.len())
}

/// Boundary scores pooled over utterances (matches counted per utterance).
pub fn corpus_boundary_prf(hyp: &[Vec<usize>], reference: &[Vec<usize>], tol: usize) -> Result<Prf> {
    if hyp.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: hyp.len() });
    }
    let (mut m, mut h, mut r) = (0, 0, 0);
    for (a, b) in hyp.iter().zip(reference) {
        m += matched_boundaries(a, b, tol);
        h += a.len();
        r += b.len();
    }
    Ok(Prf::from_counts(m, h, r))
}

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Frame purity and normalized mutual information (MI over the arithmetic mean
/// of the two entropies; two constant labelings have NMI 1).
pub fn cluster_purity_nmi(hyp: &[usize], reference: &[usize]) -> Result<(f64, f64)> {
    if hyp.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: hyp.len() });
    }
    if hyp.is_empty() {
        return Err(Error::Empty("no frames to score".into()));
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut hc: BTreeMap<usize, usize> = BTreeMap::new();
    let mut rc: BTreeMap<usize, usize> = BTreeMap::new();
    for (&h, &r) in hyp.iter().zip(reference) {
        *joint.entry((h, r)).or_default() += 1;
        *hc.entry(h).or_default() += 1;
        *rc.entry(r).or_default() += 1;
    }
    let total = hyp.len() as f64;
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(h, _), &c) in &joint {
        let b = best.entry(h).or_default();
        *b = (*b).max(c);
    }
    let purity = best.values().sum::<usize>() as f64 / total;

    let mi: f64 = joint
        .iter()
        .map(|(&(h, r), &c)| {
            let pxy = c as f64 / total;
            pxy * (pxy * total * total / (hc[&h] as f64 * rc[&r] as f64)).ln()
        })
        .sum();
    let mean_h = 0.5 * (entropy(hc.values().copied(), total) + entropy(rc.values().copied(), total));
    let nmi = if mean_h <= 0.0 { 1.0 } else { (mi / mean_h).clamp(0.0, 1.0) };
    Ok((purity, nmi))
}

/// Purity and NMI over the frames of every utterance, matched by utterance id.
pub fn corpus_purity_nmi(hyp: &[TokenLabelSequence], reference: &[TokenLabelSequence]) -> Result<(f64, f64)> {
    let (mut h, mut r) = (Vec::new(), Vec::new());
    for seq in reference {
        let other = hyp
            .iter()
            .find(|x| x.utterance_id == seq.utterance_id)
            .ok_or_else(|| Error::Missing(format!("labels for utterance {}", seq.utterance_id)))?;
        let (a, b) = (other.frame_labels(), seq.frame_labels());
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: b.len(), got: a.len() });
        }
        h.extend(a);
        r.extend(b);
    }
    cluster_purity_nmi(&h, &r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boundary_examples() {
        assert_eq!(boundary_prf(&[3, 9], &[3, 9], 2), Prf { precision: 1.0, recall: 1.0, f: 1.0 });
        assert_eq!(boundary_prf(&[10, 20], &[11, 30], 2), Prf { precision: 0.5, recall: 0.5, f: 0.5 });
        assert_eq!(boundary_prf(&[], &[4], 2).f, 0.0);
        assert_eq!(boundary_prf(&[], &[], 2).f, 1.0);
        // 5 is nearer to 6 than 4 is, so 4 stays unmatched
        assert_eq!(boundary_prf(&[4, 5], &[6], 2).precision, 0.5);
    }

    #[test]
    fn purity_nmi_examples() {
        let (p, n) = cluster_purity_nmi(&[2, 2, 7, 7, 5], &[0, 0, 1, 1, 3]).unwrap();
        assert_eq!((p, n), (1.0, 1.0));
        let (p, _) = cluster_purity_nmi(&[0; 4], &[0, 1, 0, 1]).unwrap();
        assert_eq!(p, 0.5);
        assert!(cluster_purity_nmi(&[], &[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hyp: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
        let reference: Vec<usize> = (0..10_000).map(|i| i % 2).collect();
        assert!(cluster_purity_nmi(&hyp, &reference).unwrap().1 < 0.02);
    }

    #[test]
    fn nmi_matches_hand_computation() {
        // joint counts [[2,1],[0,1]] over 4 frames
        let (_, nmi) = cluster_purity_nmi(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap();
        let p = |x: f64| -x * x.ln();
        let hh = p(0.75) + p(0.25);
        let hr = p(0.5) + p(0.5);
        let mi = 0.5 * (0.5f64 / (0.75 * 0.5)).ln() + 0.25 * (0.25f64 / (0.75 * 0.5)).ln() + 0.25 * (0.25f64 / (0.25 * 0.5)).ln();
        assert!((nmi - mi / (0.5 * (hh + hr))).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn boundary_scores_swap_roles(
            hyp in proptest::collection::btree_set(0usize..60, 0..12),
            r in proptest::collection::btree_set(0usize..60, 0..12),
            tol in 0usize..4,
        ) {
            let hyp: Vec<usize> = hyp.into_iter().collect();
            let r: Vec<usize> = r.into_iter().collect();
            let a = boundary_prf(&hyp, &r, tol);
            let b = boundary_prf(&r, &hyp, tol);
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert!((0.0..=1.0).contains(&a.f));
        }

        #[test]
        fn purity_nmi_ignore_renaming(
            pairs in proptest::collection::vec((0usize..4, 0usize..3), 1..80),
            perm in Just([3usize, 0, 2, 1]).prop_shuffle(),
        ) {
            let hyp: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let r: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let renamed: Vec<usize> = hyp.iter().map(|&h| perm[h] + 10).collect();
            let (p1, n1) = cluster_purity_nmi(&hyp, &r).unwrap();
            let (p2, n2) = cluster_purity_nmi(&renamed, &r).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-12 && (n1 - n2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&n1));
        }
    }
}
