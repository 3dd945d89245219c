//! Feature-space synthetic corpora drawn from Gaussian token states, with the
//! true segmentation kept as ground truth.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Corpus, FeatureSequence, GroundTruth};
use crate::error::{Error, Result};
use crate::labels::{Segment, TokenLabelSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Number of true tokens K.
    pub num_tokens: usize,
    pub dim: usize,
    /// Minimum distance between token means, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub states_per_token: usize,
    pub min_token_frames: usize,
    pub max_token_frames: usize,
    pub min_tokens_per_utterance: usize,
    pub max_tokens_per_utterance: usize,
    pub num_utterances: usize,
    pub num_speakers: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_tokens: 5,
            dim: 8,
            separation: 4.0,
            sigma: 1.0,
            states_per_token: 1,
            min_token_frames: 6,
            max_token_frames: 12,
            min_tokens_per_utterance: 6,
            max_tokens_per_utterance: 10,
            num_utterances: 20,
            num_speakers: 4,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.num_tokens < 1 {
            return bad("need at least one token (K >= 1)");
        }
        if self.dim < 1 || self.states_per_token < 1 {
            return bad("dim and states_per_token must be positive");
        }
        if !(self.sigma > 0.0) || !(self.separation >= 0.0) {
            return bad("sigma must be positive and separation non-negative");
        }
        if self.min_token_frames < self.states_per_token || self.max_token_frames < self.min_token_frames {
            return bad("token frame range must satisfy states <= min <= max");
        }
        if self.min_tokens_per_utterance < 1 || self.max_tokens_per_utterance < self.min_tokens_per_utterance {
            return bad("tokens-per-utterance range must satisfy 1 <= min <= max");
        }
        if self.num_speakers < 1 {
            return bad("need at least one speaker");
        }
        Ok(())
    }
}

/// A fixed set of true token models plus the RNG that renders utterances from them.
pub struct SynthGenerator {
    spec: SynthSpec,
    /// `[token][state]` mean vectors.
    means: Vec<Vec<Vec<f64>>>,
    rng: ChaCha8Rng,
}

impl SynthGenerator {
    pub fn new(spec: SynthSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let min_dist = spec.separation * spec.sigma;
        let half_range = (min_dist * 1.5).max(spec.sigma);
        let mut token_means: Vec<Vec<f64>> = Vec::with_capacity(spec.num_tokens);
        let mut attempts = 0usize;
        while token_means.len() < spec.num_tokens {
            let cand: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-half_range..half_range)).collect();
            let far = token_means.iter().all(|m| euclid(m, &cand) >= min_dist);
            attempts += 1;
            if far {
                token_means.push(cand);
            } else if attempts > 100_000 {
                return Err(Error::Config("cannot place token means with requested separation".into()));
            }
        }
        let means = token_means
            .into_iter()
            .map(|m| {
                (0..spec.states_per_token)
                    .map(|s| {
                        if s == 0 {
                            m.clone()
                        } else {
                            m.iter().map(|v| v + rng.random_range(-1.0..1.0) * spec.sigma).collect()
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(SynthGenerator { spec, means, rng })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    /// Mean of state `state` of true token `token`.
    pub fn mean(&self, token: usize, state: usize) -> &[f64] {
        &self.means[token][state]
    }

    /// Uniformly random token sequence whose consecutive tokens differ.
    pub fn sample_tokens(&mut self, len: usize) -> Vec<usize> {
        let k = self.spec.num_tokens;
        let mut out: Vec<usize> = Vec::with_capacity(len);
        for _ in 0..len {
            let tok = match out.last() {
                Some(&prev) if k > 1 => {
                    let t = self.rng.random_range(0..k - 1);
                    if t >= prev { t + 1 } else { t }
                }
                _ => self.rng.random_range(0..k),
            };
            out.push(tok);
        }
        out
    }

    /// Uniformly random token outside `avoid`.
    pub fn sample_token(&mut self, avoid: &[usize]) -> Result<usize> {
        let allowed: Vec<usize> = (0..self.spec.num_tokens).filter(|t| !avoid.contains(t)).collect();
        if allowed.is_empty() {
            return Err(Error::Config(format!("no token outside {avoid:?}")));
        }
        Ok(allowed[self.rng.random_range(0..allowed.len())])
    }

    /// `amount` distinct indices below `n`, ascending.
    pub fn choose_indices(&mut self, n: usize, amount: usize) -> Vec<usize> {
        let mut out = rand::seq::index::sample(&mut self.rng, n, amount.min(n)).into_vec();
        out.sort_unstable();
        out
    }

    pub fn sample_utterance_length(&mut self) -> usize {
        self.rng.random_range(self.spec.min_tokens_per_utterance..=self.spec.max_tokens_per_utterance)
    }

    /// Renders frames for a given token sequence.
    pub fn render(&mut self, utterance_id: &str, tokens: &[usize]) -> Result<(FeatureSequence, TokenLabelSequence)> {
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence".into()));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.spec.num_tokens) {
            return Err(Error::TokenOutOfRange { id: bad, n: self.spec.num_tokens });
        }
        let sp = &self.spec;
        let mut rows: Vec<f64> = Vec::new();
        let mut segments = Vec::with_capacity(tokens.len());
        let mut pos = 0;
        for &tok in tokens {
            let len = self.rng.random_range(sp.min_token_frames..=sp.max_token_frames);
            let m = sp.states_per_token;
            for f in 0..len {
                let state = f * m / len;
                for &mu in &self.means[tok][state] {
                    let z: f64 = self.rng.sample(StandardNormal);
                    rows.push(mu + sp.sigma * z);
                }
            }
            segments.push(Segment::new(tok, pos, pos + len));
            pos += len;
        }
        let frames = Array2::from_shape_vec((pos, sp.dim), rows).expect("row count matches");
        Ok((FeatureSequence::new(frames, utterance_id)?, TokenLabelSequence::new(utterance_id, segments)))
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn synthesize_corpus(spec: &SynthSpec, seed: u64) -> Result<(Corpus, GroundTruth)> {
    let mut generator = SynthGenerator::new(spec.clone(), seed)?;
    let mut utterances = Vec::with_capacity(spec.num_utterances);
    let mut truth = Vec::with_capacity(spec.num_utterances);
    let mut speakers = BTreeMap::new();
    for i in 0..spec.num_utterances {
        let id = format!("utt{i:04}");
        let len = generator.sample_utterance_length();
        let tokens = generator.sample_tokens(len);
        let (f, t) = generator.render(&id, &tokens)?;
        speakers.insert(id, format!("spk{:02}", i % spec.num_speakers));
        utterances.push(f);
        truth.push(t);
    }
    let corpus = Corpus::new(utterances)?.with_speakers(speakers);
    Ok((corpus, GroundTruth { num_tokens: spec.num_tokens, utterances: truth }))
}
