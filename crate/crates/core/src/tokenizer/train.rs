//! Per-level token HMM estimation on a fixed label set: flat start, then
//! Baum-Welch restricted to each token's labeled spans.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{GaussState, Granularity, LevelModel, TokenHmm};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::math::log_add;

/// Prior mass given to a token with no realizations in the label set.
pub const DEAD_TOKEN_PRIOR: f64 = 1e-12;
const MIN_SELF_LOOP: f64 = 1e-3;
const MAX_SELF_LOOP: f64 = 1.0 - 1e-3;
const MIN_OCCUPANCY: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    /// Baum-Welch iterations per training call.
    pub em_iters: usize,
    /// Relative per-token log-likelihood gain below which EM stops.
    pub em_tol: f64,
    /// EM iterations at which every mixture doubles, while below `max_components`.
    pub split_at: Vec<usize>,
    pub max_components: usize,
    /// Mean offset for mixture splitting, in standard deviations.
    pub split_offset: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub var_floor_ratio: f64,
    /// Training / decoding alternations per level.
    pub outer_iters: usize,
    /// Exponent applied to the unigram prior during decoding.
    pub lm_scale: f64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            em_iters: 8,
            em_tol: 1e-4,
            split_at: vec![2, 4],
            max_components: 2,
            split_offset: 0.2,
            var_floor_ratio: 1e-4,
            outer_iters: 5,
            lm_scale: 1.0,
        }
    }
}

/// One labeled realization: utterance index and frame span.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Span {
    pub utt: usize,
    pub start: usize,
    pub end: usize,
}

impl Span {
    fn len(&self) -> usize {
        self.end - self.start
    }
}

/// Realizations of every token, gathered in utterance-id order.
pub(crate) fn spans_by_token(corpus: &Corpus, labels: &LabelSet, n: usize) -> Result<Vec<Vec<Span>>> {
    let index: HashMap<&str, usize> =
        labels.utterances.iter().enumerate().map(|(i, u)| (u.utterance_id.as_str(), i)).collect();
    let mut spans = vec![Vec::new(); n];
    for u in corpus.canonical_order() {
        let f = &corpus.utterances[u];
        let seq = index
            .get(f.utterance_id.as_str())
            .map(|&i| &labels.utterances[i])
            .ok_or_else(|| Error::Missing(format!("labels for utterance {}", f.utterance_id)))?;
        seq.validate(f.num_frames(), n)?;
        for s in &seq.segments {
            spans[s.token].push(Span { utt: u, start: s.start, end: s.end });
        }
    }
    Ok(spans)
}

/// Per-dimension variance floor from the whole corpus.
pub(crate) fn variance_floor(corpus: &Corpus, ratio: f64) -> Vec<f64> {
    let d = corpus.dim().unwrap_or(0);
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    let mut count = 0.0_f64;
    for u in corpus.canonical_order() {
        let f = &corpus.utterances[u];
        for t in 0..f.num_frames() {
            for (i, &x) in f.row(t).iter().enumerate() {
                sum[i] += x;
                sq[i] += x * x;
            }
            count += 1.0;
        }
    }
    (0..d)
        .map(|i| {
            let mean = sum[i] / count.max(1.0);
            let var = (sq[i] / count.max(1.0) - mean * mean).max(0.0);
            (ratio * var).max(1e-10)
        })
        .collect()
}

/// Uniform state alignment inside every span: frame `i` of a span of length `L`
/// goes to state `floor(i * m / L)`, so short spans leave trailing states empty.
pub(crate) fn flat_start_hmm(id: usize, corpus: &Corpus, spans: &[Span], m: usize, floor: &[f64]) -> Option<TokenHmm> {
    let d = floor.len();
    let mut sum = vec![vec![0.0; d]; m];
    let mut sq = vec![vec![0.0; d]; m];
    let mut frames = vec![0.0; m];
    let mut visits = vec![0.0; m];
    for sp in spans {
        let f = &corpus.utterances[sp.utt];
        let len = sp.len();
        let mut last_state = usize::MAX;
        for i in 0..len {
            let s = i * m / len;
            if s != last_state {
                visits[s] += 1.0;
                last_state = s;
            }
            frames[s] += 1.0;
            for (k, &x) in f.row(sp.start + i).iter().enumerate() {
                sum[s][k] += x;
                sq[s][k] += x * x;
            }
        }
    }
    if frames.iter().all(|&c| c == 0.0) {
        return None;
    }
    let mut states: Vec<Option<GaussState>> = (0..m)
        .map(|s| {
            (frames[s] > 0.0).then(|| {
                let mean: Vec<f64> = sum[s].iter().map(|v| v / frames[s]).collect();
                let var = sq[s]
                    .iter()
                    .zip(&mean)
                    .zip(floor)
                    .map(|((q, mu), fl)| (q / frames[s] - mu * mu).max(*fl))
                    .collect();
                GaussState::single(mean, var)
            })
        })
        .collect();
    // empty states copy the nearest earlier populated state (or the first populated one)
    let first = states.iter().position(Option::is_some).expect("some frames");
    for s in 0..m {
        if states[s].is_none() {
            let src = if s > first { s - 1 } else { first };
            states[s] = states[src].clone();
        }
    }
    let self_loop = (0..m)
        .map(|s| {
            if frames[s] > 0.0 {
                (1.0 - visits[s] / frames[s]).clamp(MIN_SELF_LOOP, MAX_SELF_LOOP)
            } else {
                0.5
            }
        })
        .collect();
    Some(TokenHmm { id, states: states.into_iter().map(|s| s.expect("filled")).collect(), self_loop })
}

struct StateAcc {
    occ: Vec<f64>,
    sum: Vec<Vec<f64>>,
    sq: Vec<Vec<f64>>,
    stay: f64,
    leave: f64,
}

/// One E-step over the token's spans; returns the accumulators and the total
/// log likelihood of the spans the topology can emit.
fn estep(hmm: &TokenHmm, corpus: &Corpus, spans: &[Span]) -> (Vec<StateAcc>, f64, usize) {
    let m = hmm.num_states();
    let d = hmm.states[0].dim();
    let mut acc: Vec<StateAcc> = hmm
        .states
        .iter()
        .map(|s| StateAcc {
            occ: vec![0.0; s.num_components()],
            sum: vec![vec![0.0; d]; s.num_components()],
            sq: vec![vec![0.0; d]; s.num_components()],
            stay: 0.0,
            leave: 0.0,
        })
        .collect();
    let stay: Vec<f64> = hmm.self_loop.iter().map(|p| p.ln()).collect();
    let go: Vec<f64> = hmm.self_loop.iter().map(|p| (1.0 - p).ln()).collect();
    let mut total = 0.0;
    let mut used = 0;
    for sp in spans {
        let len = sp.len();
        if len < m {
            continue;
        }
        let f = &corpus.utterances[sp.utt];
        let rows: Vec<&[f64]> = (sp.start..sp.end).map(|t| f.row(t)).collect();
        let comp: Vec<Vec<Vec<f64>>> = rows
            .iter()
            .map(|x| {
                hmm.states
                    .iter()
                    .map(|st| (0..st.num_components()).map(|c| st.component_log_density(c, x)).collect())
                    .collect()
            })
            .collect();
        let emis: Vec<f64> = comp
            .iter()
            .flat_map(|per_state| per_state.iter().map(|cs| cs.iter().fold(f64::NEG_INFINITY, |a, &b| log_add(a, b))))
            .collect();
        let alpha = hmm.forward(&emis, len);
        let ll = alpha[(len - 1) * m + m - 1] + go[m - 1];
        if !ll.is_finite() {
            continue;
        }
        let mut beta = vec![f64::NEG_INFINITY; len * m];
        beta[(len - 1) * m + m - 1] = go[m - 1];
        for t in (0..len - 1).rev() {
            for s in 0..m {
                let mut b = stay[s] + emis[(t + 1) * m + s] + beta[(t + 1) * m + s];
                if s + 1 < m {
                    b = log_add(b, go[s] + emis[(t + 1) * m + s + 1] + beta[(t + 1) * m + s + 1]);
                }
                beta[t * m + s] = b;
            }
        }
        total += ll;
        used += 1;
        for t in 0..len {
            for s in 0..m {
                let g = alpha[t * m + s] + beta[t * m + s] - ll;
                if g == f64::NEG_INFINITY {
                    continue;
                }
                let gamma = g.exp();
                let a = &mut acc[s];
                let state_ld = emis[t * m + s];
                for (c, &cl) in comp[t][s].iter().enumerate() {
                    let r = gamma * (cl - state_ld).exp();
                    if r == 0.0 {
                        continue;
                    }
                    a.occ[c] += r;
                    for (k, &x) in rows[t].iter().enumerate() {
                        a.sum[c][k] += r * x;
                        a.sq[c][k] += r * x * x;
                    }
                }
                if t + 1 < len {
                    let e_stay = alpha[t * m + s] + stay[s] + emis[(t + 1) * m + s] + beta[(t + 1) * m + s] - ll;
                    a.stay += e_stay.exp();
                    if s + 1 < m {
                        let e_go =
                            alpha[t * m + s] + go[s] + emis[(t + 1) * m + s + 1] + beta[(t + 1) * m + s + 1] - ll;
                        a.leave += e_go.exp();
                    }
                }
            }
        }
        acc[m - 1].leave += 1.0;
    }
    (acc, total, used)
}

fn mstep(hmm: &TokenHmm, acc: &[StateAcc], floor: &[f64]) -> TokenHmm {
    let mut out = hmm.clone();
    for (s, a) in acc.iter().enumerate() {
        let total: f64 = a.occ.iter().sum();
        if total < MIN_OCCUPANCY {
            continue;
        }
        let st = &mut out.states[s];
        for c in 0..st.num_components() {
            st.weights[c] = a.occ[c] / total;
            if a.occ[c] < MIN_OCCUPANCY {
                continue;
            }
            for k in 0..floor.len() {
                let mu = a.sum[c][k] / a.occ[c];
                st.means[c][k] = mu;
                st.vars[c][k] = (a.sq[c][k] / a.occ[c] - mu * mu).max(floor[k]);
            }
        }
        if a.stay + a.leave > 0.0 {
            out.self_loop[s] = (a.stay / (a.stay + a.leave)).clamp(MIN_SELF_LOOP, MAX_SELF_LOOP);
        }
    }
    out
}

pub(crate) fn token_log_likelihood(hmm: &TokenHmm, corpus: &Corpus, spans: &[Span]) -> f64 {
    let m = hmm.num_states();
    spans
        .iter()
        .map(|sp| {
            if sp.len() < m {
                return f64::NEG_INFINITY;
            }
            let f = &corpus.utterances[sp.utt];
            let emis = hmm.emissions((sp.start..sp.end).map(|t| f.row(t)));
            hmm.span_log_likelihood(&emis, sp.len())
        })
        .sum()
}

/// Baum-Welch from `start`; the result never has lower span likelihood than `start`.
fn train_token(start: TokenHmm, corpus: &Corpus, spans: &[Span], floor: &[f64], cfg: &TokenizerConfig) -> TokenHmm {
    let start_ll = token_log_likelihood(&start, corpus, spans);
    let mut hmm = start.clone();
    let mut prev_ll = f64::NEG_INFINITY;
    for it in 0..cfg.em_iters {
        let comps = hmm.states[0].num_components();
        if cfg.split_at.contains(&it) && comps * 2 <= cfg.max_components {
            for s in hmm.states.iter_mut() {
                *s = s.split(cfg.split_offset);
            }
        }
        let (acc, ll, used) = estep(&hmm, corpus, spans);
        if used == 0 {
            break;
        }
        let more_splits = cfg.split_at.iter().any(|&s| s > it) && hmm.states[0].num_components() * 2 <= cfg.max_components;
        if prev_ll.is_finite() && !more_splits && (ll - prev_ll) <= cfg.em_tol * prev_ll.abs() {
            break;
        }
        prev_ll = ll;
        hmm = mstep(&hmm, &acc, floor);
    }
    let final_ll = token_log_likelihood(&hmm, corpus, spans);
    if final_ll >= start_ll || !start_ll.is_finite() && final_ll.is_finite() {
        hmm
    } else {
        start
    }
}

/// Flat-start model for a label set; dead tokens are reseeded.
pub fn flat_start(corpus: &Corpus, labels: &LabelSet, g: Granularity, cfg: &TokenizerConfig) -> Result<LevelModel> {
    let spans = spans_by_token(corpus, labels, g.n)?;
    let floor = variance_floor(corpus, cfg.var_floor_ratio);
    let hmms: Vec<Option<TokenHmm>> =
        spans.par_iter().enumerate().map(|(k, sp)| flat_start_hmm(k, corpus, sp, g.m, &floor)).collect();
    finish_level(g, hmms, &spans)
}

/// One token-model optimization step: estimates every token HMM from its
/// labeled spans, continuing from `init` when given, else from a flat start.
pub fn train_level_hmms(
    corpus: &Corpus,
    labels: &LabelSet,
    g: Granularity,
    cfg: &TokenizerConfig,
    init: Option<&LevelModel>,
) -> Result<LevelModel> {
    if let Some(model) = init {
        if model.granularity != g {
            return Err(Error::Config(format!("initial model is {} but level is {g}", model.granularity)));
        }
    }
    let spans = spans_by_token(corpus, labels, g.n)?;
    let floor = variance_floor(corpus, cfg.var_floor_ratio);
    let hmms: Vec<Option<TokenHmm>> = spans
        .par_iter()
        .enumerate()
        .map(|(k, sp)| {
            if sp.is_empty() {
                return None;
            }
            let start = match init {
                Some(model) => Some(model.hmms[k].clone()),
                None => flat_start_hmm(k, corpus, sp, g.m, &floor),
            }?;
            Some(train_token(start, corpus, sp, &floor, cfg))
        })
        .collect();
    finish_level(g, hmms, &spans)
}

/// Fills dead tokens by cloning the most populous token with a small mean
/// shift and sets the unigram prior from realization counts.
fn finish_level(g: Granularity, hmms: Vec<Option<TokenHmm>>, spans: &[Vec<Span>]) -> Result<LevelModel> {
    let frames: Vec<usize> = spans.iter().map(|s| s.iter().map(Span::len).sum()).collect();
    let donor = (0..g.n)
        .filter(|&k| hmms[k].is_some())
        .max_by(|&a, &b| frames[a].cmp(&frames[b]).then(b.cmp(&a)))
        .ok_or_else(|| Error::Labels("no token has any labeled frames".into()))?;
    let mut dead_seen = 0usize;
    let mut out = Vec::with_capacity(g.n);
    for (k, h) in hmms.iter().enumerate() {
        match h {
            Some(h) => out.push(h.clone()),
            None => {
                let src = hmms[donor].as_ref().expect("donor alive");
                let sign = if dead_seen.is_multiple_of(2) { 1.0 } else { -1.0 };
                let delta = sign * 0.1 * (1 + dead_seen / 2) as f64;
                out.push(TokenHmm {
                    id: k,
                    states: src.states.iter().map(|s| s.shifted(delta)).collect(),
                    self_loop: src.self_loop.clone(),
                });
                dead_seen += 1;
            }
        }
    }
    let counts: Vec<usize> = spans.iter().map(Vec::len).collect();
    let total: usize = counts.iter().sum();
    let dead = counts.iter().filter(|&&c| c == 0).count();
    let alive_mass = 1.0 - DEAD_TOKEN_PRIOR * dead as f64;
    let prior = counts
        .iter()
        .map(|&c| if c == 0 { DEAD_TOKEN_PRIOR } else { alive_mass * c as f64 / total as f64 })
        .collect();
    Ok(LevelModel { granularity: g, hmms: out, prior })
}
