use ndarray::{Array2, ArrayView2};

/// Filtered self-similarity matrix of a segment's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Pairwise cosine similarity. Pairs involving a zero-norm frame are 0 except
/// on the diagonal, which is always 1.
pub fn cosine_dotplot(frames: ArrayView2<f64>) -> Array2<f64> {
    let l = frames.nrows();
    let norms: Vec<f64> = frames.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    Array2::from_shape_fn((l, l), |(i, j)| {
        if i == j {
            1.0
        } else if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            frames.row(i).dot(&frames.row(j)) / (norms[i] * norms[j])
        }
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian smoothing with edge replication, symmetrized so that
/// `(i, j)` and `(j, i)` are bit-identical.
pub fn gaussian_smooth(m: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return m.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (r, c) = m.dim();
    let clamp = |x: isize, n: usize| x.clamp(0, n as isize - 1) as usize;
    let rows = Array2::from_shape_fn((r, c), |(i, j)| {
        kernel.iter().enumerate().map(|(k, w)| w * m[[i, clamp(j as isize + k as isize - radius, c)]]).sum::<f64>()
    });
    let both = Array2::from_shape_fn((r, c), |(i, j)| {
        kernel.iter().enumerate().map(|(k, w)| w * rows[[clamp(i as isize + k as isize - radius, r), j]]).sum::<f64>()
    });
    if r == c {
        Array2::from_shape_fn((r, c), |(i, j)| 0.5 * (both[[i, j]] + both[[j, i]]))
    } else {
        both
    }
}

pub fn build_dotplot(frames: ArrayView2<f64>, sigma: f64) -> SimilarityMatrix {
    SimilarityMatrix { values: gaussian_smooth(&cosine_dotplot(frames), sigma) }
}
