use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` is reached. Empty clusters are moved onto the point
/// farthest from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || points.len() < k {
        return Err(Error::InsufficientSegments { segments: points.len(), clusters: k });
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignments: Vec<usize> = Vec::new();
    let mut objective = Vec::new();
    let mut iterations = 0;
    loop {
        let mut cost = 0.0;
        let mut next = Vec::with_capacity(points.len());
        let mut dists = Vec::with_capacity(points.len());
        for p in points {
            let (c, d) = nearest(p, &centroids);
            next.push(c);
            dists.push(d);
            cost += d;
        }
        objective.push(cost);
        let converged = next == assignments;
        assignments = next;
        if converged || iterations >= max_iters {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("at least k points");
                taken[far] = true;
                centroids[c] = points[far].clone();
            }
        }
    }
    Ok(KMeansResult { assignments, centroids, objective, iterations })
}

/// Best of `restarts` runs by final objective. The first run uses `seed`, the
/// others draw their seeds from it; ties keep the earlier run.
pub fn kmeans_restarts(points: &[Vec<f64>], k: usize, max_iters: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let mut seeds = vec![seed];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    seeds.extend((1..restarts.max(1)).map(|_| rng.random::<u64>()));
    let mut best: Option<KMeansResult> = None;
    for s in seeds {
        let r = kmeans(points, k, max_iters, s)?;
        let cost = |r: &KMeansResult| r.objective.last().copied().unwrap_or(0.0);
        if best.as_ref().is_none_or(|b| cost(&r) < cost(b)) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one run"))
}
