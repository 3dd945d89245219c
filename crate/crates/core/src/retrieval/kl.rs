use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tokenizer::{GaussState, Granularity, LevelModel};

/// KL divergence between diagonal Gaussians `N(m1, v1)` and `N(m2, v2)`.
pub fn gaussian_kl(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..m1.len() {
        let d = m1[i] - m2[i];
        kl += (v2[i] / v1[i]).ln() + (v1[i] + d * d) / v2[i] - 1.0;
    }
    0.5 * kl
}

/// Variational approximation of `KL(f || g)` between two diagonal GMMs.
fn variational_kl(f: &GaussState, g: &GaussState) -> f64 {
    let mut total = 0.0;
    for a in 0..f.num_components() {
        let (ma, va) = (&f.means[a], &f.vars[a]);
        let own: f64 = (0..f.num_components())
            .map(|b| f.weights[b] * (-gaussian_kl(ma, va, &f.means[b], &f.vars[b])).exp())
            .sum();
        let other: f64 = (0..g.num_components())
            .map(|b| g.weights[b] * (-gaussian_kl(ma, va, &g.means[b], &g.vars[b])).exp())
            .sum();
        total += f.weights[a] * (own.ln() - other.ln());
    }
    total
}

/// Symmetric divergence `KL(a || b) + KL(b || a)` between two HMM states.
pub fn state_kl(a: &GaussState, b: &GaussState) -> f64 {
    variational_kl(a, b) + variational_kl(b, a)
}

/// Token-to-token distances of one level: per-state symmetric divergences
/// summed over aligned states.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub granularity: Granularity,
    pub values: Array2<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

pub fn token_distance_matrix(model: &LevelModel) -> Result<DistanceMatrix> {
    let n = model.hmms.len();
    let m = model.granularity.m;
    if model.hmms.iter().any(|h| h.states.len() != m) {
        return Err(Error::Config(format!("level {} has tokens with a different state count", model.granularity)));
    }
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..m).map(|s| state_kl(&model.hmms[i].states[s], &model.hmms[j].states[s])).sum();
            // the variational estimate can dip below zero for near-identical mixtures
            let d = d.max(0.0);
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    Ok(DistanceMatrix { granularity: model.granularity, values })
}

/// `W(i, j) = S(doc[i], query[j])`.
pub fn matching_matrix(s: &DistanceMatrix, doc: &[usize], query: &[usize]) -> Result<Array2<f64>> {
    let n = s.n();
    if let Some(&id) = doc.iter().chain(query).find(|&&id| id >= n) {
        return Err(Error::TokenOutOfRange { id, n });
    }
    Ok(Array2::from_shape_fn((doc.len(), query.len()), |(i, j)| s.values[[doc[i], query[j]]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::TokenHmm;

    fn single(mean: &[f64], var: &[f64]) -> GaussState {
        GaussState::single(mean.to_vec(), var.to_vec())
    }

    #[test]
    fn gaussian_examples() {
        let a = single(&[0.0], &[1.0]);
        let b = single(&[1.0], &[1.0]);
        assert!((state_kl(&a, &b) - 1.0).abs() < 1e-12);
        assert!(state_kl(&a, &a).abs() < 1e-12);
        let c = single(&[0.5, -1.0], &[2.0, 0.3]);
        let d = single(&[0.1, 0.4], &[0.7, 1.1]).split(0.3);
        assert_eq!(state_kl(&c, &d), state_kl(&d, &c));
        assert!(state_kl(&d, &d).abs() < 1e-12);
    }

    #[test]
    fn hand_summed_two_state_levels() {
        let hmm = |id, s: [(f64, f64); 2]| TokenHmm {
            id,
            states: s.iter().map(|&(m, v)| single(&[m], &[v])).collect(),
            self_loop: vec![0.5, 0.5],
        };
        let model = LevelModel {
            granularity: Granularity::new(2, 3).unwrap(),
            hmms: vec![hmm(0, [(0.0, 1.0), (2.0, 1.0)]), hmm(1, [(1.0, 1.0), (2.0, 4.0)]), hmm(2, [(0.0, 1.0), (2.0, 1.0)])],
            prior: vec![0.3, 0.3, 0.4],
        };
        let s = token_distance_matrix(&model).unwrap();
        // state 1: 1.0; state 2: N(2,1) vs N(2,4) gives 0.5(ln4 + 1/4 - 1) + 0.5(ln(1/4) + 4 - 1)
        let want = 1.0 + 0.5 * (4f64.ln() + 0.25 - 1.0) + 0.5 * (0.25f64.ln() + 3.0);
        assert!((s.values[[0, 1]] - want).abs() < 1e-12);
        assert_eq!(s.values[[0, 2]], 0.0);
        assert_eq!(s.values, s.values.t());
        assert!((0..3).all(|i| s.values[[i, i]] == 0.0));

        let w = matching_matrix(&s, &[0, 1, 2, 0, 1, 2], &[1, 1, 2]).unwrap();
        assert_eq!(w.dim(), (6, 3));
        assert_eq!(w[[1, 0]], 0.0);
        assert!(matching_matrix(&s, &[3], &[0]).is_err());
    }

    #[test]
    fn one_token_level() {
        let model = LevelModel {
            granularity: Granularity::new(1, 1).unwrap(),
            hmms: vec![TokenHmm { id: 0, states: vec![single(&[0.0], &[1.0])], self_loop: vec![0.5] }],
            prior: vec![1.0],
        };
        assert_eq!(token_distance_matrix(&model).unwrap().values, Array2::<f64>::zeros((1, 1)));
    }
}
