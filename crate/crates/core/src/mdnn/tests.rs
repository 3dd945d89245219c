use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{window_context, ContextFeatureSequence, Corpus, FeatureSequence};
use crate::labels::{LabelSet, Segment, TokenLabelSequence};
use crate::tokenizer::Granularity;

fn random_batch(rows: usize, dim: usize, heads: &[usize], seed: u64) -> (Array2<f64>, Array2<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0));
    let t = Array2::from_shape_fn((rows, heads.len()), |(_, k)| rng.random_range(0..heads[k]));
    (x, t)
}

fn context(t: usize, d: usize, radius: usize, seed: u64) -> ContextFeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = FeatureSequence::new(Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0)), "u").unwrap();
    window_context(&f, radius)
}

#[test]
fn iteration_input_widths() {
    let mfcc = context(12, 39, 4, 0);
    let bnf = context(12, 39, 4, 1);
    let extra = context(12, 39, 4, 2);
    assert_eq!(mfcc.dim(), 351);
    let ivec = vec![0.0; 400];
    assert_eq!(make_iteration_input(&mfcc, None, &[], Some(&ivec)).unwrap().ncols(), 751);
    let two = make_iteration_input(&mfcc, Some(&bnf), &[extra.frames.view()], Some(&ivec)).unwrap();
    assert_eq!(two.ncols(), 1453);
    let stats = vec![0.5; 78];
    let x = make_iteration_input(&mfcc, Some(&bnf), &[], Some(&stats)).unwrap();
    assert_eq!(x.ncols(), 780);
    assert_eq!(x.row(3).slice(ndarray::s![351..702]), bnf.frames.row(3));
    assert!(x.column(779).iter().all(|&v| v == 0.5));
    assert_eq!(make_iteration_input(&mfcc, None, &[], None).unwrap(), mfcc.frames);
    let short = context(11, 39, 4, 3);
    assert!(make_iteration_input(&mfcc, Some(&short), &[], None).is_err());
    let mfcc4 = context(12, 39, 4, 0);
    assert_eq!(make_iteration_input(&mfcc4, None, &[], Some(&stats)).unwrap().ncols(), 429);
}

#[test]
fn gradients_match_finite_differences() {
    let heads = [3, 4, 2];
    let m = MdnnModel::new(&[12, 8, 6, 5], &heads, 4).unwrap();
    let (x, t) = random_batch(7, 12, &heads, 5);
    let r = gradient_check(&m, x.view(), t.view(), 500, 0).unwrap();
    assert_eq!(r.checked, m.num_params().min(500));
    assert!(r.max_relative_error < 1e-4, "{r:?}");
    assert_eq!(r, gradient_check(&m, x.view(), t.view(), 500, 0).unwrap());
}

#[test]
fn zero_weight_bias_gradients() {
    let heads = [2, 2];
    let mut m = MdnnModel::new(&[4, 3, 2], &heads, 0).unwrap();
    for layer in m.trunk.iter_mut().chain(m.head_layers.iter_mut()) {
        layer.w.fill(0.0);
    }
    let x = Array2::from_shape_fn((4, 4), |(i, j)| (i + j) as f64 * 0.1);
    let t = Array2::from_shape_fn((4, 2), |(i, _)| i % 2);
    let r = gradient_check(&m, x.view(), t.view(), 500, 1).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

/// 200 frames: first input dimension at +-5 decides both heads.
fn separable() -> (Array2<f64>, Array2<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
    let x = Array2::from_shape_fn((200, 4), |(i, j)| {
        let sign = if labels[i] == 1 { 5.0 } else { -5.0 };
        if j == 0 { sign } else { rng.random_range(-1.0..1.0) }
    });
    let t = Array2::from_shape_fn((200, 2), |(i, k)| if k == 0 { labels[i] } else { 1 - labels[i] });
    (x, t)
}

#[test]
fn separable_toy_is_learned() {
    let (x, t) = separable();
    let cfg = MdnnConfig { hidden: vec![16, 16], bottleneck: 3, batch_size: 20, epochs: 50, ..MdnnConfig::default() };
    let (model, log) = train_mdnn(x.view(), t.view(), &[2, 2], &cfg, 0).unwrap();
    assert_eq!(log.last().unwrap().head_accuracy, vec![1.0, 1.0]);
    for w in log[2..].windows(2) {
        assert!(w[1].loss <= w[0].loss + 1e-3, "epoch {}: {} -> {}", w[1].epoch, w[0].loss, w[1].loss);
    }
    for p in model.predict(x.view()).unwrap() {
        assert!(p.sum_axis(Axis(1)).iter().all(|s| (s - 1.0).abs() < 1e-6));
    }
    let (again, _) = train_mdnn(x.view(), t.view(), &[2, 2], &cfg, 0).unwrap();
    assert_eq!(write_mdnn(&model), write_mdnn(&again));
    let csv = training_log_csv(&log);
    assert!(csv.starts_with("epoch,loss,acc_0,acc_1\n1,"));
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn divergence_is_reported() {
    let (x, t) = separable();
    let cfg = MdnnConfig { hidden: vec![8], bottleneck: 2, learning_rate: f64::INFINITY, epochs: 3, ..MdnnConfig::default() };
    match train_mdnn(x.view(), t.view(), &[2, 2], &cfg, 0) {
        Err(crate::Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|r| r.1.last().cloned())),
    }
}

#[test]
fn bottleneck_width_and_determinism() {
    for width in [39, 64] {
        let m = MdnnModel::new(&[20, 16, width], &[3], 1).unwrap();
        let f = FeatureSequence::new(Array2::from_elem((5, 20), 0.3), "u").unwrap();
        let bnf = extract_bnf(&m, f.frames.view(), &f).unwrap();
        assert_eq!(bnf.dim(), width);
        assert_eq!(bnf.frames.row(0), bnf.frames.row(4));
        assert_eq!(bnf, extract_bnf(&m, f.frames.view(), &f).unwrap());
        assert!(extract_bnf(&m, Array2::zeros((5, 19)).view(), &f).is_err());
    }
}

#[test]
fn targets_follow_segments() {
    let corpus = Corpus::new(vec![
        FeatureSequence::new(Array2::zeros((6, 2)), "b").unwrap(),
        FeatureSequence::new(Array2::zeros((4, 2)), "a").unwrap(),
    ])
    .unwrap();
    let one = LabelSet::new(
        3,
        vec![
            TokenLabelSequence::new("a", vec![Segment::new(2, 0, 4)]),
            TokenLabelSequence::new("b", vec![Segment::new(1, 0, 3), Segment::new(0, 3, 6)]),
        ],
    );
    let levels: Vec<(Granularity, &LabelSet)> = (0..16).map(|_| (Granularity::new(3, 3).unwrap(), &one)).collect();
    let t = build_targets(&corpus, &levels).unwrap();
    assert_eq!(t.dim(), (10, 16));
    // utterance "a" first, then "b" with its boundary at frame 3
    let col: Vec<usize> = t.column(0).to_vec();
    assert_eq!(col, vec![2, 2, 2, 2, 1, 1, 1, 0, 0, 0]);
    let partial = LabelSet::new(3, vec![TokenLabelSequence::new("a", vec![Segment::new(2, 0, 4)])]);
    assert!(build_targets(&corpus, &[(Granularity::new(3, 3).unwrap(), &partial)]).is_err());
}
