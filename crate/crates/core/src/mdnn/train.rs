use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{Dense, MdnnModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdnnConfig {
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for MdnnConfig {
    fn default() -> Self {
        MdnnConfig { hidden: vec![256, 256], bottleneck: 39, batch_size: 256, learning_rate: 0.01, momentum: 0.9, epochs: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Training-set loss after the epoch.
    pub loss: f64,
    pub head_accuracy: Vec<f64>,
}

/// `epoch,loss,acc_0,acc_1,...`
pub fn training_log_csv(log: &[EpochLog]) -> String {
    let heads = log.first().map_or(0, |l| l.head_accuracy.len());
    let mut out = String::from("epoch,loss");
    for h in 0..heads {
        out.push_str(&format!(",acc_{h}"));
    }
    out.push('\n');
    for l in log {
        out.push_str(&format!("{},{}", l.epoch, l.loss));
        for a in &l.head_accuracy {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
    }
    out
}

/// Loss and per-head accuracy of `model` on a whole data set.
pub fn evaluate(model: &MdnnModel, x: ArrayView2<f64>, targets: ArrayView2<usize>) -> Result<(f64, Vec<f64>)> {
    model.check_input(x)?;
    model.check_targets(targets, x.nrows())?;
    let f = model.forward(x);
    let loss = model.loss_of(&f, targets);
    let acc = f
        .probs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let correct = p
                .rows()
                .into_iter()
                .zip(targets.column(k))
                .filter(|(row, &t)| {
                    let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
                    best == t
                })
                .count();
            correct as f64 / x.nrows() as f64
        })
        .collect();
    Ok((loss, acc))
}

fn zeros_like(layers: &[Dense]) -> Vec<Dense> {
    layers.iter().map(|l| Dense { w: Array2::zeros(l.w.raw_dim()), b: ndarray::Array1::zeros(l.b.len()) }).collect()
}

fn step(params: &mut [Dense], velocity: &mut [Dense], grads: &[Dense], lr: f64, mu: f64) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        v.w.zip_mut_with(&g.w, |v, &g| *v = mu * *v - lr * g);
        v.b.zip_mut_with(&g.b, |v, &g| *v = mu * *v - lr * g);
        p.w += &v.w;
        p.b += &v.b;
    }
}

/// Minibatch SGD with momentum on frames `x` with one target column per head.
/// Frame order is reshuffled every epoch from `seed`.
pub fn train_mdnn(
    x: ArrayView2<f64>,
    targets: ArrayView2<usize>,
    heads: &[usize],
    cfg: &MdnnConfig,
    seed: u64,
) -> Result<(MdnnModel, Vec<EpochLog>)> {
    if x.nrows() == 0 {
        return Err(Error::Empty("no training frames".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut sizes = vec![x.ncols()];
    sizes.extend(&cfg.hidden);
    sizes.push(cfg.bottleneck);
    let mut model = MdnnModel::new(&sizes, heads, seed)?;
    model.check_targets(targets, x.nrows())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let mut vt = zeros_like(&model.trunk);
    let mut vh = zeros_like(&model.head_layers);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let bx = x.select(Axis(0), idx);
            let bt = targets.select(Axis(0), idx);
            let f = model.forward(bx.view());
            let loss = model.loss_of(&f, bt.view());
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss });
            }
            let g = model.backward(&f, bt.view());
            step(&mut model.trunk, &mut vt, &g.trunk, cfg.learning_rate, cfg.momentum);
            step(&mut model.head_layers, &mut vh, &g.heads, cfg.learning_rate, cfg.momentum);
        }
        let (loss, head_accuracy) = evaluate(&model, x, targets)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: order.len().div_ceil(cfg.batch_size), loss });
        }
        log.push(EpochLog { epoch, loss, head_accuracy });
    }
    Ok((model, log))
}
