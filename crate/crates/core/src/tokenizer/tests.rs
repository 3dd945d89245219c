use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{synthesize_corpus, FeatureSequence, SynthSpec};
use crate::init::{initialize, InitConfig};
use crate::labels::Segment;

fn random_corpus(rng: &mut ChaCha8Rng, lens: &[usize], dim: usize) -> Corpus {
    let utts = lens
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let data = Array2::from_shape_fn((t, dim), |_| rng.random_range(-2.0..2.0));
            FeatureSequence::new(data, format!("u{i}")).unwrap()
        })
        .collect();
    Corpus::new(utts).unwrap()
}

fn random_model(rng: &mut ChaCha8Rng, m: usize, n: usize, dim: usize) -> LevelModel {
    let hmms = (0..n)
        .map(|id| TokenHmm {
            id,
            states: (0..m)
                .map(|_| {
                    GaussState::single(
                        (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect(),
                        (0..dim).map(|_| rng.random_range(0.3..2.0)).collect(),
                    )
                })
                .collect(),
            self_loop: (0..m).map(|_| rng.random_range(0.1..0.9)).collect(),
        })
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let z: f64 = raw.iter().sum();
    LevelModel { granularity: Granularity::new(m, n).unwrap(), hmms, prior: raw.iter().map(|p| p / z).collect() }
}

/// Span likelihood by summing over every monotone state path explicitly.
fn brute_span(h: &TokenHmm, f: &FeatureSequence, a: usize, b: usize) -> f64 {
    let m = h.num_states();
    let len = b - a;
    let mut total = 0.0;
    // a path is the number of frames spent in each state, each at least one
    fn durations(left: usize, states: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if states == 1 {
            if left >= 1 {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for d in 1..left {
            cur.push(d);
            durations(left - d, states - 1, cur, out);
            cur.pop();
        }
    }
    let mut paths = Vec::new();
    durations(len, m, &mut Vec::new(), &mut paths);
    for p in paths {
        let mut prob = 1.0;
        let mut t = a;
        for (s, &d) in p.iter().enumerate() {
            let g = &h.states[s];
            for _ in 0..d {
                prob *= g.log_density(f.row(t)).exp();
                t += 1;
            }
            prob *= h.self_loop[s].powi(d as i32 - 1) * (1.0 - h.self_loop[s]);
        }
        total += prob;
    }
    total.ln()
}

/// Best segmental score over every segmentation and token assignment.
fn brute_decode(model: &LevelModel, f: &FeatureSequence) -> f64 {
    let t = f.num_frames();
    let mut best = f64::NEG_INFINITY;
    // every subset of interior boundaries
    for mask in 0u32..(1 << (t - 1)) {
        let mut cuts = vec![0];
        cuts.extend((1..t).filter(|&j| mask & (1 << (j - 1)) != 0));
        cuts.push(t);
        let spans: Vec<(usize, usize)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
        let n = model.prior.len();
        for assign in 0..n.pow(spans.len() as u32) {
            let mut code = assign;
            let mut score = 0.0;
            for &(a, b) in &spans {
                let k = code % n;
                code /= n;
                score += brute_span(&model.hmms[k], f, a, b) + model.prior[k].ln();
            }
            if score > best {
                best = score;
            }
        }
    }
    best
}

#[test]
fn decode_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in 1..=2 {
        for n in 1..=2 {
            for t in 1..=8 {
                let corpus = random_corpus(&mut rng, &[t], 2);
                let model = random_model(&mut rng, m, n, 2);
                let f = &corpus.utterances[0];
                let labels = decode_level(&model, &corpus, 1.0);
                let got = corpus_log_likelihood(&model, &corpus, &labels).unwrap();
                let want = brute_decode(&model, f);
                if want == f64::NEG_INFINITY {
                    assert_eq!(got, f64::NEG_INFINITY);
                    assert_eq!(labels.utterances[0].segments.len(), 1);
                } else {
                    assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "m={m} n={n} t={t}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn forward_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let corpus = random_corpus(&mut rng, &[7], 3);
    let f = &corpus.utterances[0];
    let model = random_model(&mut rng, 3, 1, 3);
    let h = &model.hmms[0];
    for (a, b) in [(0, 3), (0, 7), (2, 6)] {
        let emis = h.emissions((a..b).map(|t| f.row(t)));
        let got = h.span_log_likelihood(&emis, b - a);
        assert!((got - brute_span(h, f, a, b)).abs() < 1e-9);
    }
}

#[test]
fn single_frame_likelihood_closed_form() {
    let x = [0.5, -1.0];
    let corpus = Corpus::new(vec![FeatureSequence::new(Array2::from_shape_vec((1, 2), x.to_vec()).unwrap(), "a").unwrap()]).unwrap();
    let (mu, var, a, p) = ([0.0, 1.0], [2.0, 0.5], 0.7, 0.4);
    let model = LevelModel {
        granularity: Granularity::new(1, 2).unwrap(),
        hmms: vec![
            TokenHmm { id: 0, states: vec![GaussState::single(mu.to_vec(), var.to_vec())], self_loop: vec![a] },
            TokenHmm { id: 1, states: vec![GaussState::single(vec![9.0, 9.0], vec![1.0, 1.0])], self_loop: vec![0.5] },
        ],
        prior: vec![p, 1.0 - p],
    };
    let labels = LabelSet::new(2, vec![TokenLabelSequence::new("a", vec![Segment::new(0, 0, 1)])]);
    let mut want = (1.0 - a).ln() + p.ln();
    for i in 0..2 {
        want += -0.5 * ((2.0 * std::f64::consts::PI * var[i]).ln() + (x[i] - mu[i]).powi(2) / var[i]);
    }
    let got = corpus_log_likelihood(&model, &corpus, &labels).unwrap();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn likelihood_is_additive_over_utterances() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpus = random_corpus(&mut rng, &[6, 9, 4], 2);
    let model = random_model(&mut rng, 2, 2, 2);
    let labels = decode_level(&model, &corpus, 1.0);
    let whole = corpus_log_likelihood(&model, &corpus, &labels).unwrap();
    let parts: f64 = corpus
        .utterances
        .iter()
        .zip(&labels.utterances)
        .map(|(f, l)| {
            let c = Corpus::new(vec![f.clone()]).unwrap();
            corpus_log_likelihood(&model, &c, &LabelSet::new(2, vec![l.clone()])).unwrap()
        })
        .sum();
    assert!((whole - parts).abs() < 1e-9 * whole.abs());
    assert!(corpus_log_likelihood(&model, &Corpus::new(vec![]).unwrap(), &LabelSet::new(2, vec![])).unwrap() == 0.0);
}

#[test]
fn one_state_one_token_learns_corpus_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let corpus = random_corpus(&mut rng, &[20, 15], 3);
    let labels = LabelSet::new(
        1,
        corpus.utterances.iter().map(|f| TokenLabelSequence::new(f.utterance_id.clone(), vec![Segment::new(0, 0, f.num_frames())])).collect(),
    );
    let cfg = TokenizerConfig { max_components: 1, ..TokenizerConfig::default() };
    let model = train_level_hmms(&corpus, &labels, Granularity::new(1, 1).unwrap(), &cfg, None).unwrap();
    let st = &model.hmms[0].states[0];
    for d in 0..3 {
        let mean: f64 = corpus.utterances.iter().flat_map(|f| (0..f.num_frames()).map(move |t| f.row(t)[d])).sum::<f64>() / 35.0;
        assert!((st.means[0][d] - mean).abs() < 1e-9);
    }
    assert_eq!(model.prior, vec![1.0]);
}

fn synth(seed: u64) -> (Corpus, crate::corpus::GroundTruth, SynthSpec) {
    let spec = SynthSpec { num_tokens: 3, dim: 4, num_utterances: 12, ..SynthSpec::default() };
    let (c, t) = synthesize_corpus(&spec, seed).unwrap();
    (c, t, spec)
}

#[test]
fn training_on_true_labels_recovers_token_means() {
    let spec = SynthSpec { num_utterances: 40, ..SynthSpec::default() };
    let (corpus, truth) = synthesize_corpus(&spec, 21).unwrap();
    let k_true = spec.num_tokens;
    let labels = LabelSet::new(k_true, truth.utterances.clone());
    let cfg = TokenizerConfig { max_components: 1, ..TokenizerConfig::default() };
    let model = train_level_hmms(&corpus, &labels, Granularity::new(1, k_true).unwrap(), &cfg, None).unwrap();
    let gen = crate::corpus::SynthGenerator::new(spec.clone(), 21).unwrap();
    for k in 0..k_true {
        let got = &model.hmms[k].states[0].means[0];
        // one state, one component: the estimate is the empirical mean of the labeled frames
        let mut sum = vec![0.0; spec.dim];
        let mut count = 0.0;
        for (f, l) in corpus.utterances.iter().zip(&labels.utterances) {
            for s in l.segments.iter().filter(|s| s.token == k) {
                for t in s.start..s.end {
                    sum.iter_mut().zip(f.row(t)).for_each(|(a, x)| *a += x);
                    count += 1.0;
                }
            }
        }
        for d in 0..spec.dim {
            assert!((got[d] - sum[d] / count).abs() < 1e-9);
            let err = (got[d] - gen.mean(k, 0)[d]).abs();
            assert!(err < 0.2 * spec.sigma, "token {k} dim {d}: error {err}");
        }
    }
}

#[test]
fn trained_model_beats_flat_start() {
    let (corpus, truth, _) = synth(4);
    let labels = LabelSet::new(3, truth.utterances.clone());
    let g = Granularity::new(3, 3).unwrap();
    let cfg = TokenizerConfig::default();
    let flat = flat_start(&corpus, &labels, g, &cfg).unwrap();
    let trained = train_level_hmms(&corpus, &labels, g, &cfg, Some(&flat)).unwrap();
    trained.validate().unwrap();
    let l0 = corpus_log_likelihood(&flat, &corpus, &labels).unwrap();
    let l1 = corpus_log_likelihood(&trained, &corpus, &labels).unwrap();
    assert!(l1 > l0, "{l1} <= {l0}");
}

fn init_cfg() -> InitConfig {
    let mut cfg = InitConfig::default();
    cfg.segment.energy_dim = None;
    cfg
}

#[test]
fn alternation_trace_never_decreases() {
    let (corpus, _, _) = synth(9);
    for (m, n) in [(1, 3), (3, 4), (5, 2)] {
        let init = initialize(&corpus, n, &init_cfg(), 1).unwrap();
        let run = run_level(&corpus, &init, Granularity::new(m, n).unwrap(), &TokenizerConfig::default()).unwrap();
        assert_eq!(run.trace[0].step, HalfStep::FlatStart);
        for w in run.trace.windows(2) {
            let (a, b) = (w[0].log_likelihood, w[1].log_likelihood);
            assert!(b >= a - 1e-9 * a.abs().max(1.0) || a == f64::NEG_INFINITY, "m={m} n={n}: {a} -> {b}");
        }
        run.model.validate().unwrap();
        for (f, l) in corpus.utterances.iter().zip(&run.labels.utterances) {
            l.validate(f.num_frames(), n).unwrap();
        }
    }
}

#[test]
fn result_does_not_depend_on_utterance_order() {
    let (corpus, _, _) = synth(13);
    let init = initialize(&corpus, 3, &init_cfg(), 2).unwrap();
    let g = Granularity::new(2, 3).unwrap();
    let cfg = TokenizerConfig { outer_iters: 2, ..TokenizerConfig::default() };
    let a = run_level(&corpus, &init, g, &cfg).unwrap();

    let mut utts = corpus.utterances.clone();
    utts.reverse();
    let mut seqs = init.utterances.clone();
    seqs.reverse();
    let b = run_level(&Corpus::new(utts).unwrap(), &LabelSet::new(3, seqs), g, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    for l in &a.labels.utterances {
        assert_eq!(Some(l), b.labels.get(&l.utterance_id));
    }
}

#[test]
fn mat_runs_every_level() {
    let (corpus, _, _) = synth(17);
    let grid = GranularityGrid::new(vec![1, 3], vec![2, 4]).unwrap();
    let init: Vec<LabelSet> = grid.phonetic.iter().map(|&n| initialize(&corpus, n, &init_cfg(), 0).unwrap()).collect();
    let cfg = TokenizerConfig { outer_iters: 1, ..TokenizerConfig::default() };
    let levels = run_mat(&corpus, &grid, &init, &cfg).unwrap();
    let got: Vec<_> = levels.iter().map(|l| (l.granularity.m, l.granularity.n)).collect();
    assert_eq!(got, vec![(1, 2), (1, 4), (3, 2), (3, 4)]);
    assert!(run_mat(&corpus, &grid, &init[..1], &cfg).is_err());
}
