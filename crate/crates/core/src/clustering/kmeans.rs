use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::{check_k, restart_rng, sq_dist, to_i64, BackendConfig, ClusterAssignment};
use crate::distance::GlobalDistanceMatrix;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k x d`, row-major.
    pub centroids: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// k-means++ seeding over the `n x d` row-major matrix `x`.
pub(crate) fn plus_plus(x: &[f64], n: usize, d: usize, k: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let row = |i: usize| &x[i * d..(i + 1) * d];
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(row(pick));
        for (i, c) in closest.iter_mut().enumerate() {
            *c = c.min(sq_dist(row(i), row(pick)));
        }
    }
    centroids
}

/// Nearest centroid per row (ties to the lowest index) and the summed cost.
fn assign(x: &[f64], n: usize, d: usize, centroids: &[f64], labels: &mut [usize]) -> f64 {
    let k = centroids.len() / d;
    let mut cost = 0.0;
    for i in 0..n {
        let r = &x[i * d..(i + 1) * d];
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let dist = sq_dist(r, &centroids[c * d..(c + 1) * d]);
            if dist < best.0 {
                best = (dist, c);
            }
        }
        labels[i] = best.1;
        cost += best.0;
    }
    cost
}

fn objective(x: &[f64], n: usize, d: usize, centroids: &[f64], labels: &[usize]) -> f64 {
    (0..n).map(|i| sq_dist(&x[i * d..(i + 1) * d], &centroids[labels[i] * d..(labels[i] + 1) * d])).sum()
}

/// One Lloyd run from k-means++ seeds. Stops once assignments repeat.
pub(crate) fn lloyd(x: &[f64], n: usize, d: usize, k: usize, max_iter: usize, rng: &mut ChaCha20Rng) -> KMeansResult {
    let mut centroids = plus_plus(x, n, d, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut next = vec![0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        assign(x, n, d, &centroids, &mut next);
        iterations += 1;
        let stable = next == labels;
        labels.copy_from_slice(&next);
        if stable {
            break;
        }
        // Update step.
        let mut counts = vec![0usize; k];
        centroids.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let c = labels[i];
            counts[c] += 1;
            for (acc, v) in centroids[c * d..(c + 1) * d].iter_mut().zip(&x[i * d..(i + 1) * d]) {
                *acc += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c * d..(c + 1) * d].iter_mut().for_each(|v| *v /= counts[c] as f64);
            }
        }
        trace.push(objective(x, n, d, &centroids, &labels));
        // An empty cluster restarts at the point farthest from its centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = (f64::NEG_INFINITY, 0);
                for i in 0..n {
                    let dist = sq_dist(&x[i * d..(i + 1) * d], &centroids[labels[i] * d..(labels[i] + 1) * d]);
                    if dist > far.0 {
                        far = (dist, i);
                    }
                }
                let (src, dst) = (far.1 * d, c * d);
                let point = x[src..src + d].to_vec();
                centroids[dst..dst + d].copy_from_slice(&point);
                counts[c] = 1;
            }
        }
    }
    let objective = objective(x, n, d, &centroids, &labels);
    if trace.last() != Some(&objective) {
        trace.push(objective);
    }
    KMeansResult { labels, centroids, objective, iterations, trace }
}

/// Best of `n_init` Lloyd runs on `n x d` row-major data.
pub fn kmeans(x: &[f64], n: usize, d: usize, k: usize, max_iter: usize, n_init: usize, seed: u64) -> Result<KMeansResult> {
    check_k(k, n)?;
    let mut best: Option<KMeansResult> = None;
    for r in 0..n_init.max(1) {
        let res = lloyd(x, n, d, k, max_iter, &mut restart_rng(seed, r));
        if best.as_ref().is_none_or(|b| res.objective < b.objective) {
            best = Some(res);
        }
    }
    Ok(best.unwrap())
}

/// k-means with each sample's distance profile as its features.
pub fn kmeans_on_rows(dm: &GlobalDistanceMatrix, cfg: &BackendConfig) -> Result<ClusterAssignment> {
    let n = dm.n();
    let res = kmeans(dm.as_slice(), n, n, cfg.k, cfg.max_iter, cfg.n_init, cfg.seed)?;
    Ok(ClusterAssignment {
        backend: "km".into(),
        k: cfg.k,
        seed: cfg.seed,
        labels: to_i64(res.labels),
        objective: Some(res.objective),
        iterations: res.iterations,
        trace: res.trace,
    })
}
