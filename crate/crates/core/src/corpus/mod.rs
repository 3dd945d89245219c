//! Audio ingestion, acoustic front end, feature windowing and feature file I/O.

mod matf;
mod mfcc;
mod synth;
mod wav;

use std::collections::{BTreeMap, HashSet};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::labels::TokenLabelSequence;

pub use matf::{features_to_csv, read_matf, write_matf};
pub use mfcc::{extract_features, FeatureConfig};
pub use synth::{synthesize_corpus, SynthGenerator, SynthSpec};
pub use wav::{decode_wav, load_audio};

/// Mono audio normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub utterance_id: String,
    pub speaker_id: Option<String>,
}

/// A `T x d` matrix of frame feature vectors for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
    /// Seconds between frame starts.
    pub frame_shift: f64,
    /// Analysis window length in seconds.
    pub frame_length: f64,
    pub utterance_id: String,
}

pub const DEFAULT_FRAME_SHIFT: f64 = 0.010;
pub const DEFAULT_FRAME_LENGTH: f64 = 0.025;

impl FeatureSequence {
    pub fn new(frames: Array2<f64>, utterance_id: impl Into<String>) -> Result<Self> {
        Self::with_timing(frames, DEFAULT_FRAME_SHIFT, DEFAULT_FRAME_LENGTH, utterance_id)
    }

    pub fn with_timing(
        frames: Array2<f64>,
        frame_shift: f64,
        frame_length: f64,
        utterance_id: impl Into<String>,
    ) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::Empty("feature sequence has no frames".into()));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("features", "non-finite feature value"));
        }
        let frames = frames.as_standard_layout().into_owned();
        Ok(FeatureSequence { frames, frame_shift, frame_length, utterance_id: utterance_id.into() })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    /// Frame `t` as a contiguous slice.
    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.dim();
        &self.frames.as_slice().expect("standard layout")[t * d..(t + 1) * d]
    }

    pub fn slice(&self, start: usize, end: usize) -> ArrayView2<'_, f64> {
        self.frames.slice(s![start..end, ..])
    }

    fn with_frames(&self, frames: Array2<f64>) -> Self {
        FeatureSequence {
            frames: frames.as_standard_layout().into_owned(),
            frame_shift: self.frame_shift,
            frame_length: self.frame_length,
            utterance_id: self.utterance_id.clone(),
        }
    }
}

/// Frames stacked with `radius` neighbors on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatureSequence {
    pub frames: Array2<f64>,
    pub radius: usize,
}

impl ContextFeatureSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub utterances: Vec<FeatureSequence>,
    /// Utterance id to speaker id.
    pub speakers: BTreeMap<String, String>,
}

impl Corpus {
    pub fn new(utterances: Vec<FeatureSequence>) -> Result<Self> {
        let mut seen = HashSet::new();
        for u in &utterances {
            if !seen.insert(u.utterance_id.as_str()) {
                return Err(Error::Config(format!("duplicate utterance id {}", u.utterance_id)));
            }
        }
        if let Some(first) = utterances.first() {
            let d = first.dim();
            if let Some(bad) = utterances.iter().find(|u| u.dim() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: bad.dim() });
            }
        }
        Ok(Corpus { utterances, speakers: BTreeMap::new() })
    }

    pub fn with_speakers(mut self, speakers: BTreeMap<String, String>) -> Self {
        self.speakers = speakers;
        self
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.utterances.first().map(FeatureSequence::dim)
    }

    pub fn get(&self, utterance_id: &str) -> Option<&FeatureSequence> {
        self.utterances.iter().find(|u| u.utterance_id == utterance_id)
    }

    pub fn speaker(&self, utterance_id: &str) -> Option<&str> {
        self.speakers.get(utterance_id).map(String::as_str)
    }

    /// Utterance indices sorted by utterance id, the fixed order used for every
    /// corpus-wide reduction.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.utterances.len()).collect();
        idx.sort_by(|&a, &b| self.utterances[a].utterance_id.cmp(&self.utterances[b].utterance_id));
        idx
    }

    pub fn num_frames(&self) -> usize {
        self.utterances.iter().map(FeatureSequence::num_frames).sum()
    }
}

/// True token segmentation of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub num_tokens: usize,
    pub utterances: Vec<TokenLabelSequence>,
}

impl GroundTruth {
    pub fn boundaries(&self) -> Vec<Vec<usize>> {
        self.utterances.iter().map(TokenLabelSequence::boundaries).collect()
    }

    pub fn get(&self, utterance_id: &str) -> Option<&TokenLabelSequence> {
        self.utterances.iter().find(|u| u.utterance_id == utterance_id)
    }
}

const CMVN_VARIANCE_FLOOR: f64 = 1e-8;

/// Per-utterance mean and variance normalization of every feature column.
pub fn apply_cmvn(f: &FeatureSequence) -> FeatureSequence {
    let t = f.num_frames() as f64;
    let mean = f.frames.sum_axis(Axis(0)) / t;
    let mut out = &f.frames - &mean;
    let var = out.map(|v| v * v).sum_axis(Axis(0)) / t;
    let scale = var.mapv(|v| v.max(CMVN_VARIANCE_FLOOR).sqrt());
    out /= &scale;
    f.with_frames(out)
}

/// Row `t`, block `k` of the output is source row `clamp(t + k - r, 0, T - 1)`.
pub fn window_context(f: &FeatureSequence, radius: usize) -> ContextFeatureSequence {
    ContextFeatureSequence { frames: stack_context(f.frames.view(), radius), radius }
}

pub(crate) fn stack_context(frames: ArrayView2<f64>, radius: usize) -> Array2<f64> {
    let (t, d) = frames.dim();
    let width = 2 * radius + 1;
    let mut out = Array2::zeros((t, d * width));
    for row in 0..t {
        for k in 0..width {
            let src = (row + k).saturating_sub(radius).min(t - 1);
            out.slice_mut(s![row, k * d..(k + 1) * d]).assign(&frames.row(src));
        }
    }
    out
}

/// Per-dimension mean followed by per-dimension standard deviation.
pub fn utterance_stats(f: &FeatureSequence) -> Array1<f64> {
    let t = f.num_frames() as f64;
    let d = f.dim();
    let mean = f.frames.sum_axis(Axis(0)) / t;
    let var = (&f.frames - &mean).map(|v| v * v).sum_axis(Axis(0)) / t;
    let mut out = Array1::zeros(2 * d);
    out.slice_mut(s![..d]).assign(&mean);
    out.slice_mut(s![d..]).assign(&var.mapv(f64::sqrt));
    out
}
