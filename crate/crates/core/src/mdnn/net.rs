use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fully connected layer, `y = x W^T + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn xavier(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        Dense { w: Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-a..a)), b: Array1::zeros(outputs) }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Sigmoid hidden layers, a linear bottleneck, and one softmax head per level
/// reading the bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct MdnnModel {
    /// Input, hidden and bottleneck widths.
    pub sizes: Vec<usize>,
    pub heads: Vec<usize>,
    pub trunk: Vec<Dense>,
    pub head_layers: Vec<Dense>,
    pub seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-wise log-softmax and softmax.
fn softmax_rows(z: Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mut logp = z;
    for mut row in logp.rows_mut() {
        let lse = crate::math::log_sum_exp(row.as_slice().expect("contiguous row"));
        row.mapv_inplace(|v| v - lse);
    }
    let p = logp.mapv(f64::exp);
    (logp, p)
}

pub(crate) struct Forward {
    /// Input followed by the activation of every trunk layer; the last is the bottleneck.
    pub acts: Vec<Array2<f64>>,
    pub probs: Vec<Array2<f64>>,
    pub log_probs: Vec<Array2<f64>>,
}

/// Parameter gradients in model layout.
pub(crate) struct Grads {
    pub trunk: Vec<Dense>,
    pub heads: Vec<Dense>,
}

impl MdnnModel {
    /// Random model: `sizes = [input, hidden.., bottleneck]`.
    pub fn new(sizes: &[usize], heads: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if heads.is_empty() || heads.contains(&0) {
            return Err(Error::Config(format!("invalid head sizes {heads:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = sizes.windows(2).map(|w| Dense::xavier(w[0], w[1], &mut rng)).collect();
        let bottleneck = sizes[sizes.len() - 1];
        let head_layers = heads.iter().map(|&n| Dense::xavier(bottleneck, n, &mut rng)).collect();
        Ok(MdnnModel { sizes: sizes.to_vec(), heads: heads.to_vec(), trunk, head_layers, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.trunk.iter().chain(&self.head_layers).map(Dense::num_params).sum()
    }

    pub(crate) fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(())
    }

    /// Bottleneck activations for every row of `x`.
    pub fn bottleneck(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.trunk.len() - 1;
        for (i, layer) in self.trunk.iter().enumerate() {
            a = layer.apply(a.view());
            if i < last {
                a.mapv_inplace(sigmoid);
            }
        }
        a
    }

    pub(crate) fn forward(&self, x: ArrayView2<f64>) -> Forward {
        let mut acts = vec![x.to_owned()];
        let last = self.trunk.len() - 1;
        for (i, layer) in self.trunk.iter().enumerate() {
            let mut a = layer.apply(acts[i].view());
            if i < last {
                a.mapv_inplace(sigmoid);
            }
            acts.push(a);
        }
        let e = acts.last().expect("bottleneck");
        let (log_probs, probs) = self.head_layers.iter().map(|h| softmax_rows(h.apply(e.view()))).unzip();
        Forward { acts, probs, log_probs }
    }

    /// Per-head softmax outputs.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_input(x)?;
        Ok(self.forward(x).probs)
    }

    /// Mean over heads of the mean cross-entropy over rows.
    pub(crate) fn loss_of(&self, f: &Forward, targets: ArrayView2<usize>) -> f64 {
        let b = targets.nrows() as f64;
        let h = self.heads.len() as f64;
        let mut total = 0.0;
        for (k, lp) in f.log_probs.iter().enumerate() {
            for (r, &t) in targets.column(k).iter().enumerate() {
                total -= lp[[r, t]];
            }
        }
        total / (b * h)
    }

    pub fn loss(&self, x: ArrayView2<f64>, targets: ArrayView2<usize>) -> Result<f64> {
        self.check_input(x)?;
        self.check_targets(targets, x.nrows())?;
        Ok(self.loss_of(&self.forward(x), targets))
    }

    pub(crate) fn check_targets(&self, targets: ArrayView2<usize>, rows: usize) -> Result<()> {
        if targets.nrows() != rows || targets.ncols() != self.heads.len() {
            return Err(Error::DimensionMismatch { expected: self.heads.len(), got: targets.ncols() });
        }
        for (k, col) in targets.columns().into_iter().enumerate() {
            if let Some(&t) = col.iter().find(|&&t| t >= self.heads[k]) {
                return Err(Error::TokenOutOfRange { id: t, n: self.heads[k] });
            }
        }
        Ok(())
    }

    pub(crate) fn backward(&self, f: &Forward, targets: ArrayView2<usize>) -> Grads {
        let scale = 1.0 / (targets.nrows() as f64 * self.heads.len() as f64);
        let e = f.acts.last().expect("bottleneck");
        let mut de = Array2::<f64>::zeros(e.raw_dim());
        let mut heads = Vec::with_capacity(self.heads.len());
        for (k, (layer, p)) in self.head_layers.iter().zip(&f.probs).enumerate() {
            let mut dz = p.clone();
            for (r, &t) in targets.column(k).iter().enumerate() {
                dz[[r, t]] -= 1.0;
            }
            dz *= scale;
            heads.push(Dense { w: dz.t().dot(e), b: dz.sum_axis(Axis(0)) });
            de += &dz.dot(&layer.w);
        }
        let mut trunk = Vec::with_capacity(self.trunk.len());
        let mut dz = de;
        for i in (0..self.trunk.len()).rev() {
            let input = &f.acts[i];
            trunk.push(Dense { w: dz.t().dot(input), b: dz.sum_axis(Axis(0)) });
            if i > 0 {
                let mut da = dz.dot(&self.trunk[i].w);
                Zip::from(&mut da).and(input).for_each(|g, &a| *g *= a * (1.0 - a));
                dz = da;
            }
        }
        trunk.reverse();
        Grads { trunk, heads }
    }

    /// Mutable access to parameter `i` of the flattened layout (trunk layers then
    /// heads; within a layer, weights row-major then biases).
    pub(crate) fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for layer in self.trunk.iter_mut().chain(self.head_layers.iter_mut()) {
            if i < layer.w.len() {
                let c = layer.w.ncols();
                return &mut layer.w[[i / c, i % c]];
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                return &mut layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("parameter index out of range")
    }
}

impl Grads {
    pub(crate) fn get(&self, mut i: usize) -> f64 {
        for layer in self.trunk.iter().chain(&self.heads) {
            if i < layer.w.len() {
                let c = layer.w.ncols();
                return layer.w[[i / c, i % c]];
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                return layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("gradient index out of range")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub checked: usize,
    pub max_relative_error: f64,
}

/// Compares backpropagated gradients with central differences (`h = 1e-4`) on
/// up to `max_params` parameters drawn with `seed`.
pub fn gradient_check(
    model: &MdnnModel,
    x: ArrayView2<f64>,
    targets: ArrayView2<usize>,
    max_params: usize,
    seed: u64,
) -> Result<GradientReport> {
    if x.nrows() == 0 {
        return Err(Error::Empty("gradient check needs at least one frame".into()));
    }
    model.check_input(x)?;
    model.check_targets(targets, x.nrows())?;
    let grads = model.backward(&model.forward(x), targets);
    let total = model.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if total <= max_params {
        (0..total).collect()
    } else {
        rand::seq::index::sample(&mut rng, total, max_params).into_vec()
    };
    let h = 1e-4;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for &i in &picks {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let up = probe.loss_of(&probe.forward(x), targets);
        *probe.param_mut(i) = orig - h;
        let down = probe.loss_of(&probe.forward(x), targets);
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(i);
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-10 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    Ok(GradientReport { checked: picks.len(), max_relative_error: worst })
}
