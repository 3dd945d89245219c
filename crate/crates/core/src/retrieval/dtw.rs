use ndarray::Array2;

use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};

/// Subsequence DTW over a `D x Q` cost matrix: the query axis is covered from
/// first to last column, the document axis may start and end anywhere. Steps
/// are (1,1), (1,0) and (0,1); every visited cell adds its cost. Returns the
/// minimal path cost divided by `Q`.
pub fn subsequence_dtw(w: &Array2<f64>) -> f64 {
    let (d, q) = w.dim();
    if d == 0 || q == 0 {
        return f64::INFINITY;
    }
    let mut acc = Array2::from_elem((d, q), f64::INFINITY);
    for i in 0..d {
        acc[[i, 0]] = w[[i, 0]] + if i > 0 { acc[[i - 1, 0]].min(0.0) } else { 0.0 };
    }
    for j in 1..q {
        for i in 0..d {
            let mut best = acc[[i, j - 1]];
            if i > 0 {
                best = best.min(acc[[i - 1, j - 1]]).min(acc[[i - 1, j]]);
            }
            acc[[i, j]] = w[[i, j]] + best;
        }
    }
    let best = (0..d).map(|i| acc[[i, q - 1]]).fold(f64::INFINITY, f64::min);
    best / q as f64
}

/// Token-level DTW on a matching matrix.
pub fn token_dtw(w: &Array2<f64>) -> f64 {
    subsequence_dtw(w)
}

/// `1 - cos(x, y)`; a zero vector is at distance 1 from everything.
fn cosine_distance(x: &[f64], y: &[f64]) -> f64 {
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return 1.0;
    }
    1.0 - dot / (nx.sqrt() * ny.sqrt())
}

/// Frame-level subsequence DTW of `query` inside `doc` with cosine distance.
pub fn frame_dtw(query: &FeatureSequence, doc: &FeatureSequence) -> Result<f64> {
    if query.dim() != doc.dim() {
        return Err(Error::DimensionMismatch { expected: doc.dim(), got: query.dim() });
    }
    let w = Array2::from_shape_fn((doc.num_frames(), query.num_frames()), |(i, j)| {
        cosine_distance(doc.row(i), query.row(j))
    });
    Ok(subsequence_dtw(&w))
}
