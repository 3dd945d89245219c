//! Top-down initial labels: word-like segmentation, dotplot watershed inside each
//! word, then global k-means over segment mean vectors.

mod dotplot;
mod kmeans;
mod segment;
mod watershed;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FeatureSequence};
use crate::error::{Error, Result};
use crate::labels::{LabelSet, Segment, TokenLabelSequence};

pub use dotplot::{build_dotplot, cosine_dotplot, gaussian_smooth, SimilarityMatrix};
pub use kmeans::{kmeans, kmeans_restarts, KMeansResult};
pub use segment::{discontinuity, segment_words, SegmentBoundarySet, SegmentConfig};
pub use watershed::{watershed_boundaries, watershed_labels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub segment: SegmentConfig,
    /// Gaussian filter width for the dotplot, in frames.
    pub dotplot_sigma: f64,
    /// Subword pieces shorter than this are merged into their closer neighbor.
    pub min_subword_frames: usize,
    pub kmeans_max_iters: usize,
    /// Independent k-means++ runs; the lowest-objective one is kept.
    pub kmeans_restarts: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { segment: SegmentConfig::default(), dotplot_sigma: 1.0, min_subword_frames: 3, kmeans_max_iters: 100, kmeans_restarts: 8 }
    }
}

/// Subword boundaries inside one word-like span `[start, end)`, in utterance frames.
fn subword_boundaries(f: &FeatureSequence, start: usize, end: usize, cfg: &InitConfig) -> Vec<usize> {
    if end - start < 2 {
        return Vec::new();
    }
    let span = f.slice(start, end);
    let dotplot = build_dotplot(span, cfg.dotplot_sigma);
    let mut cuts: Vec<usize> = watershed_boundaries(&dotplot);
    merge_short_pieces(&mut cuts, end - start, cfg.min_subword_frames, |a, b| {
        span.slice(ndarray::s![a..b, ..]).mean_axis(Axis(0)).expect("non-empty").to_vec()
    });
    cuts.into_iter().map(|c| c + start).collect()
}

/// Removes cuts until every piece of `[0, len)` is at least `min_len` long; the
/// shortest piece is merged first, into the neighbor with the closer mean.
fn merge_short_pieces(cuts: &mut Vec<usize>, len: usize, min_len: usize, mean: impl Fn(usize, usize) -> Vec<f64>) {
    loop {
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(0);
        edges.extend_from_slice(cuts);
        edges.push(len);
        let shortest = (0..edges.len() - 1)
            .filter(|&p| edges[p + 1] - edges[p] < min_len)
            .min_by_key(|&p| (edges[p + 1] - edges[p], p));
        let Some(p) = shortest else { return };
        if cuts.is_empty() {
            return;
        }
        let pieces = edges.len() - 1;
        let remove = if p == 0 {
            0
        } else if p == pieces - 1 {
            p - 1
        } else {
            let here = mean(edges[p], edges[p + 1]);
            let left = mean(edges[p - 1], edges[p]);
            let right = mean(edges[p + 1], edges[p + 2]);
            let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            if dist(&here, &left) <= dist(&here, &right) { p - 1 } else { p }
        };
        cuts.remove(remove);
    }
}

/// Subword-like spans `(start, end)` for every utterance, in corpus order.
pub fn initial_segments(corpus: &Corpus, cfg: &InitConfig) -> Vec<Vec<(usize, usize)>> {
    corpus
        .utterances
        .par_iter()
        .map(|f| {
            let words = segment_words(f, &cfg.segment);
            let mut edges = vec![0];
            edges.extend(&words.boundaries);
            edges.push(f.num_frames());
            let mut cuts = Vec::new();
            for w in edges.windows(2) {
                if w[0] > 0 {
                    cuts.push(w[0]);
                }
                cuts.extend(subword_boundaries(f, w[0], w[1], cfg));
            }
            let mut spans = Vec::with_capacity(cuts.len() + 1);
            let mut prev = 0;
            for c in cuts.into_iter().chain(std::iter::once(f.num_frames())) {
                spans.push((prev, c));
                prev = c;
            }
            spans
        })
        .collect()
}

/// Global k-means over the mean vector of every span; each span is labeled with
/// its cluster id. Points enter the clustering in utterance-id order.
pub fn cluster_segments(
    corpus: &Corpus,
    spans: &[Vec<(usize, usize)>],
    n: usize,
    max_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<LabelSet> {
    if spans.len() != corpus.len() {
        return Err(Error::Labels(format!("{} span lists for {} utterances", spans.len(), corpus.len())));
    }
    let order = corpus.canonical_order();
    let mut points = Vec::new();
    for &u in &order {
        let f = &corpus.utterances[u];
        for &(a, b) in &spans[u] {
            if a >= b || b > f.num_frames() {
                return Err(Error::Labels(format!("{}: bad span [{a}, {b})", f.utterance_id)));
            }
            points.push(f.slice(a, b).mean_axis(Axis(0)).expect("non-empty").to_vec());
        }
    }
    let result = kmeans_restarts(&points, n, max_iters, restarts, seed)?;
    let mut utterances: Vec<Option<TokenLabelSequence>> = vec![None; corpus.len()];
    let mut next = 0;
    for &u in &order {
        let f = &corpus.utterances[u];
        let segments = spans[u]
            .iter()
            .map(|&(a, b)| {
                let s = Segment::new(result.assignments[next], a, b);
                next += 1;
                s
            })
            .collect();
        let seq = TokenLabelSequence::new(f.utterance_id.clone(), segments);
        seq.validate(f.num_frames(), n)?;
        utterances[u] = Some(seq);
    }
    Ok(LabelSet::new(n, utterances.into_iter().map(|u| u.expect("every utterance labeled")).collect()))
}

/// Joins adjacent segments that carry the same token into one realization.
pub fn merge_repeated_tokens(labels: &LabelSet) -> LabelSet {
    let utterances = labels
        .utterances
        .iter()
        .map(|u| {
            let mut segments: Vec<Segment> = Vec::with_capacity(u.segments.len());
            for s in &u.segments {
                match segments.last_mut() {
                    Some(last) if last.token == s.token => last.end = s.end,
                    _ => segments.push(*s),
                }
            }
            TokenLabelSequence::new(u.utterance_id.clone(), segments)
        })
        .collect();
    LabelSet::new(labels.n, utterances)
}

/// Initial label set for phonetic granularity `n`: clustered subword pieces,
/// with runs of the same cluster joined.
pub fn initialize(corpus: &Corpus, n: usize, cfg: &InitConfig, seed: u64) -> Result<LabelSet> {
    let spans = initial_segments(corpus, cfg);
    let labels = cluster_segments(corpus, &spans, n, cfg.kmeans_max_iters, cfg.kmeans_restarts, seed)?;
    Ok(merge_repeated_tokens(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, SynthSpec};

    #[test]
    fn merge_short_pieces_enforces_min() {
        let mut cuts = vec![1, 5, 6, 12];
        merge_short_pieces(&mut cuts, 15, 3, |a, b| vec![(a + b) as f64]);
        let mut edges = vec![0];
        edges.extend(&cuts);
        edges.push(15);
        assert!(edges.windows(2).all(|w| w[1] - w[0] >= 3), "{cuts:?}");
    }

    #[test]
    fn initial_labels_tile_synthetic_corpus() {
        let (corpus, _) = synthesize_corpus(&SynthSpec::default(), 4).unwrap();
        let cfg = InitConfig { segment: SegmentConfig { energy_dim: None, ..SegmentConfig::default() }, ..InitConfig::default() };
        let labels = initialize(&corpus, 5, &cfg, 0).unwrap();
        assert_eq!(labels.utterances.len(), corpus.len());
        for (u, f) in labels.utterances.iter().zip(&corpus.utterances) {
            u.validate(f.num_frames(), 5).unwrap();
            assert!(u.segments.iter().all(|s| s.len() >= cfg.min_subword_frames));
        }
        let again = initialize(&corpus, 5, &cfg, 0).unwrap();
        assert_eq!(labels, again);
    }

    #[test]
    fn repeated_tokens_are_joined() {
        let seq = |segs: &[(usize, usize, usize)]| {
            TokenLabelSequence::new("a", segs.iter().map(|&(k, a, b)| Segment::new(k, a, b)).collect())
        };
        let labels = LabelSet::new(3, vec![seq(&[(1, 0, 3), (1, 3, 5), (0, 5, 9), (1, 9, 10), (1, 10, 12)])]);
        let merged = merge_repeated_tokens(&labels);
        assert_eq!(merged.utterances[0], seq(&[(1, 0, 5), (0, 5, 9), (1, 9, 12)]));
    }

    #[test]
    fn single_cluster_labels() {
        let (corpus, _) = synthesize_corpus(&SynthSpec::default(), 4).unwrap();
        let labels = initialize(&corpus, 1, &InitConfig::default(), 0).unwrap();
        assert!(labels.utterances.iter().flat_map(|u| &u.segments).all(|s| s.token == 0));
    }

    #[test]
    fn insufficient_segments() {
        let (corpus, _) = synthesize_corpus(&SynthSpec { num_utterances: 1, ..SynthSpec::default() }, 4).unwrap();
        assert!(matches!(initialize(&corpus, 500, &InitConfig::default(), 0), Err(Error::InsufficientSegments { .. })));
    }
}
