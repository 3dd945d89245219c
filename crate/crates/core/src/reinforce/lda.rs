use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaConfig {
    pub sweeps: usize,
    /// Document-topic concentration is `alpha_numerator / K`.
    pub alpha_numerator: f64,
    pub beta: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig { sweeps: 200, alpha_numerator: 50.0, beta: 0.01 }
    }
}

/// Count state of a collapsed Gibbs sampler after its final sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    /// Topics × vocabulary.
    pub topic_word: Array2<u32>,
    /// Documents × topics.
    pub doc_topic: Array2<u32>,
    /// Complete-data log posterior at the random initialization.
    pub initial_log_posterior: f64,
}

impl LdaModel {
    pub fn num_topics(&self) -> usize {
        self.topic_word.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.topic_word.ncols()
    }

    /// Smoothed word distribution of topic `k`.
    pub fn topic_word_distribution(&self, k: usize) -> Vec<f64> {
        let v = self.vocab_size() as f64;
        let row = self.topic_word.row(k);
        let total: f64 = row.iter().map(|&c| c as f64).sum();
        row.iter().map(|&c| (c as f64 + self.beta) / (total + v * self.beta)).collect()
    }

    /// Most probable topic of document `d` (lowest id on ties).
    pub fn document_topic(&self, d: usize) -> usize {
        let row = self.doc_topic.row(d);
        let mut best = 0;
        for k in 1..row.len() {
            if row[k] > row[best] {
                best = k;
            }
        }
        best
    }

    /// `log p(w, z)` with topic and document distributions integrated out.
    pub fn log_posterior(&self) -> f64 {
        complete_log_posterior(&self.topic_word, &self.doc_topic, self.alpha, self.beta)
    }
}

fn complete_log_posterior(topic_word: &Array2<u32>, doc_topic: &Array2<u32>, alpha: f64, beta: f64) -> f64 {
    let (k, v) = topic_word.dim();
    let (kf, vf) = (k as f64, v as f64);
    let mut lp = 0.0;
    for row in topic_word.rows() {
        let total: f64 = row.iter().map(|&c| c as f64).sum();
        lp += ln_gamma(vf * beta) - vf * ln_gamma(beta) - ln_gamma(total + vf * beta);
        lp += row.iter().map(|&c| ln_gamma(c as f64 + beta)).sum::<f64>();
    }
    for row in doc_topic.rows() {
        let total: f64 = row.iter().map(|&c| c as f64).sum();
        lp += ln_gamma(kf * alpha) - kf * ln_gamma(alpha) - ln_gamma(total + kf * alpha);
        lp += row.iter().map(|&c| ln_gamma(c as f64 + alpha)).sum::<f64>();
    }
    lp
}

/// Collapsed Gibbs sampling for `k` topics over documents of word ids below
/// `vocab_size`. Words are visited in document order on every sweep.
pub fn lda_fit(docs: &[Vec<u32>], vocab_size: usize, k: usize, cfg: &LdaConfig, seed: u64) -> Result<LdaModel> {
    if k == 0 {
        return Err(Error::Config("LDA needs at least one topic".into()));
    }
    if docs.is_empty() {
        return Err(Error::Empty("no documents".into()));
    }
    if let Some(&w) = docs.iter().flatten().find(|&&w| w as usize >= vocab_size) {
        return Err(Error::TokenOutOfRange { id: w as usize, n: vocab_size });
    }
    let alpha = cfg.alpha_numerator / k as f64;
    let beta = cfg.beta;
    let vb = vocab_size as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut topic_word = Array2::<u32>::zeros((k, vocab_size));
    let mut doc_topic = Array2::<u32>::zeros((docs.len(), k));
    let mut topic_total = vec![0u32; k];
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            doc.iter()
                .map(|&w| {
                    let t = rng.random_range(0..k);
                    topic_word[[t, w as usize]] += 1;
                    doc_topic[[d, t]] += 1;
                    topic_total[t] += 1;
                    t
                })
                .collect()
        })
        .collect();
    let initial_log_posterior = complete_log_posterior(&topic_word, &doc_topic, alpha, beta);

    let mut p = vec![0.0; k];
    for _ in 0..cfg.sweeps {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = z[d][i];
                topic_word[[old, w]] -= 1;
                doc_topic[[d, old]] -= 1;
                topic_total[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (doc_topic[[d, t]] as f64 + alpha) * (topic_word[[t, w]] as f64 + beta)
                        / (topic_total[t] as f64 + vb);
                    p[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = p.iter().position(|&c| u < c).unwrap_or(k - 1);
                topic_word[[new, w]] += 1;
                doc_topic[[d, new]] += 1;
                topic_total[new] += 1;
                z[d][i] = new;
            }
        }
    }
    Ok(LdaModel { alpha, beta, seed, topic_word, doc_topic, initial_log_posterior })
}
