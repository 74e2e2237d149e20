use rand_chacha::ChaCha20Rng;

use super::kmeans::plus_plus;
use super::{check_k, restart_rng, sq_dist, BackendConfig, ClusterAssignment};
use crate::distance::GlobalDistanceMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FcmResult {
    /// `n x k`, row-major; each row sums to 1.
    pub memberships: Vec<f64>,
    pub centers: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

impl FcmResult {
    pub fn hard_labels(&self, k: usize) -> Vec<usize> {
        self.memberships
            .chunks(k)
            .map(|u| u.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b }).0)
            .collect()
    }
}

/// Memberships for fixed centers; samples sitting on centers split evenly
/// among those centers.
fn update_memberships(x: &[f64], n: usize, d: usize, centers: &[f64], fuzz: f64, u: &mut [f64]) {
    let k = centers.len() / d;
    let power = 1.0 / (fuzz - 1.0);
    let mut dist = vec![0.0; k];
    for i in 0..n {
        let r = &x[i * d..(i + 1) * d];
        for c in 0..k {
            dist[c] = sq_dist(r, &centers[c * d..(c + 1) * d]);
        }
        let row = &mut u[i * k..(i + 1) * k];
        let zeros = dist.iter().filter(|&&v| v == 0.0).count();
        if zeros > 0 {
            for c in 0..k {
                row[c] = if dist[c] == 0.0 { 1.0 / zeros as f64 } else { 0.0 };
            }
            continue;
        }
        for c in 0..k {
            let s: f64 = dist.iter().map(|&o| (dist[c] / o).powf(power)).sum();
            row[c] = 1.0 / s;
        }
    }
}

fn update_centers(x: &[f64], n: usize, d: usize, u: &[f64], k: usize, fuzz: f64, centers: &mut [f64]) {
    centers.iter_mut().for_each(|v| *v = 0.0);
    let mut weight = vec![0.0; k];
    for i in 0..n {
        for c in 0..k {
            let w = u[i * k + c].powf(fuzz);
            weight[c] += w;
            for (acc, v) in centers[c * d..(c + 1) * d].iter_mut().zip(&x[i * d..(i + 1) * d]) {
                *acc += w * v;
            }
        }
    }
    for c in 0..k {
        if weight[c] > 0.0 {
            centers[c * d..(c + 1) * d].iter_mut().for_each(|v| *v /= weight[c]);
        }
    }
}

fn objective(x: &[f64], n: usize, d: usize, u: &[f64], centers: &[f64], fuzz: f64) -> f64 {
    let k = centers.len() / d;
    let mut j = 0.0;
    for i in 0..n {
        for c in 0..k {
            j += u[i * k + c].powf(fuzz) * sq_dist(&x[i * d..(i + 1) * d], &centers[c * d..(c + 1) * d]);
        }
    }
    j
}

fn run_once(x: &[f64], n: usize, d: usize, k: usize, cfg: &BackendConfig, rng: &mut ChaCha20Rng) -> FcmResult {
    let fuzz = cfg.fuzzifier;
    let mut centers = plus_plus(x, n, d, k, rng);
    let mut u = vec![0.0; n * k];
    update_memberships(x, n, d, &centers, fuzz, &mut u);
    let mut trace = vec![objective(x, n, d, &u, &centers, fuzz)];
    let mut next = vec![0.0; n * k];
    let mut iterations = 0;
    while iterations < cfg.max_iter.max(1) {
        iterations += 1;
        update_centers(x, n, d, &u, k, fuzz, &mut centers);
        update_memberships(x, n, d, &centers, fuzz, &mut next);
        let change = u.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut u, &mut next);
        trace.push(objective(x, n, d, &u, &centers, fuzz));
        if change < cfg.tolerance {
            break;
        }
    }
    FcmResult { memberships: u, centers, objective: *trace.last().unwrap(), iterations, trace }
}

/// Fuzzy c-means on `n x d` row-major data, best objective over restarts.
pub fn fuzzy_cmeans(x: &[f64], n: usize, d: usize, cfg: &BackendConfig) -> Result<FcmResult> {
    check_k(cfg.k, n)?;
    if !(cfg.fuzzifier > 1.0) {
        return Err(Error::Config(format!("fuzzifier must exceed 1, got {}", cfg.fuzzifier)));
    }
    let mut best: Option<FcmResult> = None;
    for r in 0..cfg.n_init.max(1) {
        let res = run_once(x, n, d, cfg.k, cfg, &mut restart_rng(cfg.seed, r));
        if best.as_ref().is_none_or(|b| res.objective < b.objective) {
            best = Some(res);
        }
    }
    Ok(best.unwrap())
}

/// Fuzzy c-means on the rows of `D`; hard labels by largest membership.
pub fn fuzzy_cmeans_on_rows(dm: &GlobalDistanceMatrix, cfg: &BackendConfig) -> Result<(ClusterAssignment, FcmResult)> {
    let n = dm.n();
    let res = fuzzy_cmeans(dm.as_slice(), n, n, cfg)?;
    let labels = res.hard_labels(cfg.k).into_iter().map(|l| l as i64).collect();
    let a = ClusterAssignment {
        backend: "fcm".into(),
        k: cfg.k,
        seed: cfg.seed,
        labels,
        objective: Some(res.objective),
        iterations: res.iterations,
        trace: res.trace.clone(),
    };
    Ok((a, res))
}
