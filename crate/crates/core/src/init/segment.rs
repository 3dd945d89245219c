use ndarray::{s, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Threshold is `mean + alpha * std` of the discontinuity curve.
    pub alpha: f64,
    pub min_segment_frames: usize,
    /// Frames averaged on each side of a candidate position.
    pub context_frames: usize,
    /// Feature column holding log energy, if any.
    pub energy_dim: Option<usize>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig { alpha: 1.0, min_segment_frames: 5, context_frames: 5, energy_dim: Some(0) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentBoundarySet {
    pub utterance_id: String,
    /// Inter-frame positions `0 < j < T`, strictly increasing.
    pub boundaries: Vec<usize>,
}

/// Discontinuity at every inter-frame position `j = 1..T-1` (index `j - 1`):
/// distance between the mean vectors left and right of `j`, scaled by
/// `1 + dip`, where `dip` is the normalized drop in energy at `j`.
pub fn discontinuity(f: &FeatureSequence, cfg: &SegmentConfig) -> Vec<f64> {
    let t = f.num_frames();
    if t < 2 {
        return Vec::new();
    }
    let w = cfg.context_frames.max(1);
    let energy = cfg.energy_dim.filter(|&d| d < f.dim()).map(|d| f.frames.column(d).to_vec());
    let range = energy.as_ref().map_or(0.0, |e| {
        let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        hi - lo
    });
    (1..t)
        .map(|j| {
            let (l0, r1) = (j.saturating_sub(w), (j + w).min(t));
            let left = f.frames.slice(s![l0..j, ..]).mean_axis(Axis(0)).expect("non-empty");
            let right = f.frames.slice(s![j..r1, ..]).mean_axis(Axis(0)).expect("non-empty");
            let dist = (&left - &right).map(|v| v * v).sum().sqrt();
            let dip = match &energy {
                Some(e) if range > 0.0 => {
                    let around = e[l0..r1].iter().sum::<f64>() / (r1 - l0) as f64;
                    let local = e[j - 1].min(e[j]);
                    ((around - local) / range).max(0.0)
                }
                _ => 0.0,
            };
            dist * (1.0 + dip)
        })
        .collect()
}

/// Word-like segmentation at peaks of the discontinuity curve above
/// `mean + alpha * std`, taken in decreasing order of strength while every
/// resulting segment stays at least `min_segment_frames` long.
pub fn segment_words(f: &FeatureSequence, cfg: &SegmentConfig) -> SegmentBoundarySet {
    let t = f.num_frames();
    let curve = discontinuity(f, cfg);
    let mut boundaries = Vec::new();
    if !curve.is_empty() {
        let n = curve.len() as f64;
        let mean = curve.iter().sum::<f64>() / n;
        let std = (curve.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let threshold = mean + cfg.alpha * std;
        let mut peaks: Vec<usize> = (0..curve.len())
            .filter(|&i| {
                let v = curve[i];
                v > threshold
                    && (i == 0 || v >= curve[i - 1])
                    && (i + 1 == curve.len() || v > curve[i + 1])
            })
            .map(|i| i + 1)
            .collect();
        peaks.sort_by(|&a, &b| curve[b - 1].total_cmp(&curve[a - 1]).then(a.cmp(&b)));
        let min_len = cfg.min_segment_frames.max(1);
        for j in peaks {
            let fits = j >= min_len
                && t - j >= min_len
                && boundaries.iter().all(|&b: &usize| b.abs_diff(j) >= min_len);
            if fits {
                boundaries.push(j);
            }
        }
        boundaries.sort_unstable();
    }
    SegmentBoundarySet { utterance_id: f.utterance_id.clone(), boundaries }
}
