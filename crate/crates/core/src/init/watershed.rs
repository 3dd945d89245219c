//! Marker-free watershed by ordered flooding from regional minima.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use ndarray::Array2;

use super::dotplot::SimilarityMatrix;

#[derive(PartialEq)]
struct Pending {
    height: f64,
    seq: u64,
    idx: usize,
    label: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    // BinaryHeap is a max-heap; lowest height, then earliest push, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.height.total_cmp(&self.height).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn neighbors(idx: usize, rows: usize, cols: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (idx / cols, idx % cols);
    let up = (r > 0).then(|| idx - cols);
    let down = (r + 1 < rows).then(|| idx + cols);
    let left = (c > 0).then(|| idx - 1);
    let right = (c + 1 < cols).then(|| idx + 1);
    [up, left, right, down].into_iter().flatten()
}

/// Region label for every cell of a height map (4-connectivity).
///
/// Regional minima (plateaus with no strictly lower neighbor) are numbered in
/// raster order of their first cell. Remaining cells are flooded in ascending
/// height; each cell joins the region that reached it first, with ties going
/// to the earlier push and hence the lower-numbered region.
pub fn watershed_labels(height: &Array2<f64>) -> Array2<usize> {
    let (rows, cols) = height.dim();
    let h = height.as_slice().map(<[f64]>::to_vec).unwrap_or_else(|| height.iter().copied().collect());
    let n = rows * cols;
    const UNSET: usize = usize::MAX;
    let mut label = vec![UNSET; n];

    // regional minima
    let mut plateau_of = vec![UNSET; n];
    let mut next_region = 0;
    for start in 0..n {
        if plateau_of[start] != UNSET {
            continue;
        }
        let mut members = vec![start];
        let mut queue = VecDeque::from([start]);
        plateau_of[start] = start;
        let mut is_min = true;
        while let Some(i) = queue.pop_front() {
            for j in neighbors(i, rows, cols) {
                if h[j] < h[i] {
                    is_min = false;
                } else if h[j] == h[i] && plateau_of[j] == UNSET {
                    plateau_of[j] = start;
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        if is_min {
            for &m in &members {
                label[m] = next_region;
            }
            next_region += 1;
        }
    }

    let mut heap = BinaryHeap::new();
    let mut queued = vec![false; n];
    let mut seq = 0u64;
    for i in 0..n {
        if label[i] != UNSET {
            queued[i] = true;
        }
    }
    for i in 0..n {
        if label[i] == UNSET {
            continue;
        }
        for j in neighbors(i, rows, cols) {
            if !queued[j] {
                queued[j] = true;
                heap.push(Pending { height: h[j], seq, idx: j, label: label[i] });
                seq += 1;
            }
        }
    }
    while let Some(p) = heap.pop() {
        label[p.idx] = p.label;
        for j in neighbors(p.idx, rows, cols) {
            if !queued[j] {
                queued[j] = true;
                heap.push(Pending { height: h[j], seq, idx: j, label: p.label });
                seq += 1;
            }
        }
    }
    Array2::from_shape_vec((rows, cols), label).expect("shape preserved")
}

/// Positions `j` where the main diagonal passes from one watershed region of the
/// inverted similarity `1 - s` into another.
pub fn watershed_boundaries(s: &SimilarityMatrix) -> Vec<usize> {
    let l = s.len();
    if l < 2 {
        return Vec::new();
    }
    let labels = watershed_labels(&s.values.mapv(|v| 1.0 - v));
    (1..l).filter(|&j| labels[[j - 1, j - 1]] != labels[[j, j]]).collect()
}
