use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_add;

/// HMM configuration of one level: `m` states per token, `n` distinct tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Granularity {
    pub m: usize,
    pub n: usize,
}

impl Granularity {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m < 1 || n < 1 {
            return Err(Error::Config(format!("granularity ({m}, {n}) needs m >= 1 and n >= 1")));
        }
        Ok(Granularity { m, n })
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "m{}_n{}", self.m, self.n)
    }
}

/// Temporal granularities `m_1..m_M` crossed with phonetic granularities `n_1..n_N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GranularityGrid {
    pub temporal: Vec<usize>,
    pub phonetic: Vec<usize>,
}

impl Default for GranularityGrid {
    fn default() -> Self {
        GranularityGrid { temporal: vec![3, 5, 7, 9], phonetic: vec![50, 100, 300, 500] }
    }
}

impl GranularityGrid {
    pub fn new(temporal: Vec<usize>, phonetic: Vec<usize>) -> Result<Self> {
        let grid = GranularityGrid { temporal, phonetic };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |v: &[usize]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.temporal) || !increasing(&self.phonetic) {
            return Err(Error::Config("grid lists must be non-empty and strictly increasing".into()));
        }
        if self.temporal[0] < 1 || self.phonetic[0] < 1 {
            return Err(Error::Config("grid values must be positive".into()));
        }
        Ok(())
    }

    /// All `M x N` granularities, temporal-major.
    pub fn levels(&self) -> Vec<Granularity> {
        self.temporal
            .iter()
            .flat_map(|&m| self.phonetic.iter().map(move |&n| Granularity { m, n }))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.temporal.len() * self.phonetic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Diagonal-covariance Gaussian mixture emitting from one HMM state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussState {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

impl GaussState {
    pub fn single(mean: Vec<f64>, var: Vec<f64>) -> Self {
        GaussState { weights: vec![1.0], means: vec![mean], vars: vec![var] }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn component_log_density(&self, c: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&xi, &mu), &var) in x.iter().zip(&self.means[c]).zip(&self.vars[c]) {
            let d = xi - mu;
            acc += (2.0 * PI * var).ln() + d * d / var;
        }
        self.weights[c].ln() - 0.5 * acc
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if self.weights.len() == 1 {
            return self.component_log_density(0, x);
        }
        let mut acc = f64::NEG_INFINITY;
        for c in 0..self.weights.len() {
            acc = log_add(acc, self.component_log_density(c, x));
        }
        acc
    }

    /// Doubles the component count by moving each mean by `±delta` standard deviations.
    pub fn split(&self, delta: f64) -> GaussState {
        let mut out = GaussState { weights: Vec::new(), means: Vec::new(), vars: Vec::new() };
        for c in 0..self.weights.len() {
            for sign in [1.0, -1.0] {
                out.weights.push(self.weights[c] / 2.0);
                out.means.push(
                    self.means[c].iter().zip(&self.vars[c]).map(|(m, v)| m + sign * delta * v.sqrt()).collect(),
                );
                out.vars.push(self.vars[c].clone());
            }
        }
        out
    }

    pub fn shifted(&self, delta: f64) -> GaussState {
        let mut out = self.clone();
        for c in 0..out.weights.len() {
            for (m, v) in out.means[c].iter_mut().zip(&out.vars[c]) {
                *m += delta * v.sqrt();
            }
        }
        out
    }
}

/// Left-to-right token HMM without skips. State `s` either stays (probability
/// `self_loop[s]`) or advances; advancing from the last state exits the token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenHmm {
    pub id: usize,
    pub states: Vec<GaussState>,
    pub self_loop: Vec<f64>,
}

impl TokenHmm {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Log emission of each state for frames `x`, laid out `[t * m + s]`.
    pub fn emissions<'a>(&self, frames: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
        let mut out = Vec::new();
        for x in frames {
            out.extend(self.states.iter().map(|s| s.log_density(x)));
        }
        out
    }

    /// Forward pass over a span given its emissions. `alpha[t * m + s]` is the
    /// log probability of the first `t + 1` frames ending in state `s`.
    pub fn forward(&self, emis: &[f64], len: usize) -> Vec<f64> {
        let m = self.num_states();
        let stay: Vec<f64> = self.self_loop.iter().map(|p| p.ln()).collect();
        let go: Vec<f64> = self.self_loop.iter().map(|p| (1.0 - p).ln()).collect();
        let mut alpha = vec![f64::NEG_INFINITY; len * m];
        if len == 0 {
            return alpha;
        }
        alpha[0] = emis[0];
        for t in 1..len {
            for s in 0..m {
                let mut a = alpha[(t - 1) * m + s] + stay[s];
                if s > 0 {
                    a = log_add(a, alpha[(t - 1) * m + s - 1] + go[s - 1]);
                }
                alpha[t * m + s] = a + emis[t * m + s];
            }
        }
        alpha
    }

    pub fn exit_log_prob(&self) -> f64 {
        (1.0 - self.self_loop[self.num_states() - 1]).ln()
    }

    /// Log likelihood of a whole span emitted by this token, `-inf` when the span
    /// is shorter than the number of states.
    pub fn span_log_likelihood(&self, emis: &[f64], len: usize) -> f64 {
        let m = self.num_states();
        if len < m {
            return f64::NEG_INFINITY;
        }
        let alpha = self.forward(emis, len);
        alpha[(len - 1) * m + m - 1] + self.exit_log_prob()
    }
}

/// The `n` token HMMs of one level and their unigram prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelModel {
    pub granularity: Granularity,
    pub hmms: Vec<TokenHmm>,
    pub prior: Vec<f64>,
}

impl LevelModel {
    pub fn dim(&self) -> usize {
        self.hmms.first().and_then(|h| h.states.first()).map_or(0, GaussState::dim)
    }

    pub fn log_prior(&self) -> Vec<f64> {
        self.prior.iter().map(|p| p.ln()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.granularity;
        let bad = |m: String| Err(Error::format("level model", m));
        if self.hmms.len() != g.n || self.prior.len() != g.n {
            return bad(format!("expected {} tokens", g.n));
        }
        let prior_sum: f64 = self.prior.iter().sum();
        if (prior_sum - 1.0).abs() > 1e-6 || self.prior.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("prior is not a distribution".into());
        }
        let d = self.dim();
        for (i, h) in self.hmms.iter().enumerate() {
            if h.id != i || h.states.len() != g.m || h.self_loop.len() != g.m {
                return bad(format!("token {i} has wrong shape"));
            }
            if h.self_loop.iter().any(|p| !(0.0..1.0).contains(p)) {
                return bad(format!("token {i} has an invalid self-loop"));
            }
            for s in &h.states {
                let w: f64 = s.weights.iter().sum();
                if s.weights.is_empty() || (w - 1.0).abs() > 1e-6 || s.weights.iter().any(|&x| x < 0.0) {
                    return bad(format!("token {i} has invalid mixture weights"));
                }
                if s.means.len() != s.weights.len() || s.vars.len() != s.weights.len() {
                    return bad(format!("token {i} has mismatched mixture arrays"));
                }
                let dims_ok = s.means.iter().chain(&s.vars).all(|v| v.len() == d);
                if !dims_ok || s.vars.iter().flatten().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return bad(format!("token {i} has invalid means or variances"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_levels_and_validation() {
        let g = GranularityGrid::default();
        assert_eq!(g.levels().len(), 16);
        assert_eq!(g.levels()[1], Granularity { m: 3, n: 100 });
        assert!(GranularityGrid::new(vec![3, 3], vec![5]).is_err());
        assert!(GranularityGrid::new(vec![], vec![5]).is_err());
    }

    #[test]
    fn gaussian_log_density_closed_form() {
        let s = GaussState::single(vec![1.0, -2.0], vec![0.5, 2.0]);
        let x = [1.5, 0.0];
        let want = -0.5 * ((2.0 * PI * 0.5f64).ln() + 0.25 / 0.5 + (2.0 * PI * 2.0f64).ln() + 4.0 / 2.0);
        assert!((s.log_density(&x) - want).abs() < 1e-12);
    }

    #[test]
    fn split_preserves_weight_mass() {
        let s = GaussState::single(vec![0.0], vec![4.0]).split(0.2);
        assert_eq!(s.num_components(), 2);
        assert_eq!(s.weights.iter().sum::<f64>(), 1.0);
        assert!((s.means[0][0] - 0.4).abs() < 1e-12 && (s.means[1][0] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn forward_counts_paths() {
        // zero emissions and 0.5 transitions: a span of length L through m states
        // has C(L-1, m-1) paths each of probability 0.5^L (including exit).
        let h = TokenHmm {
            id: 0,
            states: vec![GaussState::single(vec![0.0], vec![1.0]); 2],
            self_loop: vec![0.5, 0.5],
        };
        let emis = vec![0.0; 5 * 2];
        let ll = h.span_log_likelihood(&emis, 5);
        let want = (4.0f64).ln() + 5.0 * 0.5f64.ln();
        assert!((ll - want).abs() < 1e-12);
        assert_eq!(h.span_log_likelihood(&emis, 1), f64::NEG_INFINITY);
    }
}
