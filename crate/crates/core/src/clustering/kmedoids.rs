//! Partitioning around medoids: greedy BUILD, then best-improvement SWAP.
//! Instances with at most `EXACT_SUBSETS` candidate medoid sets are solved
//! by enumeration instead, since SWAP can stall in a local optimum.

use super::{check_k, BackendConfig, ClusterAssignment};
use crate::distance::GlobalDistanceMatrix;
use crate::error::Result;

/// Total distance from every sample to its nearest medoid.
pub fn medoid_cost(d: &GlobalDistanceMatrix, medoids: &[usize]) -> f64 {
    (0..d.n()).map(|i| medoids.iter().map(|&m| d.get(i, m)).fold(f64::INFINITY, f64::min)).sum()
}

fn nearest_two(d: &GlobalDistanceMatrix, medoids: &[usize], i: usize) -> (usize, f64, f64) {
    let mut best = (0, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (slot, &m) in medoids.iter().enumerate() {
        let v = d.get(i, m);
        if v < best.1 {
            second = best.1;
            best = (slot, v);
        } else if v < second {
            second = v;
        }
    }
    (best.0, best.1, second)
}

const EXACT_SUBSETS: u128 = 20_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Lexicographically first medoid set of minimum cost.
fn exact(d: &GlobalDistanceMatrix, k: usize) -> Vec<usize> {
    let n = d.n();
    let mut set: Vec<usize> = (0..k).collect();
    let mut best = (medoid_cost(d, &set), set.clone());
    loop {
        // Advance to the next k-combination.
        let Some(pos) = (0..k).rev().find(|&p| set[p] < n - k + p) else { break };
        set[pos] += 1;
        for q in pos + 1..k {
            set[q] = set[q - 1] + 1;
        }
        let c = medoid_cost(d, &set);
        if c < best.0 {
            best = (c, set.clone());
        }
    }
    best.1
}

fn build(d: &GlobalDistanceMatrix, k: usize) -> Vec<usize> {
    let n = d.n();
    let mut medoids = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best = (f64::INFINITY, 0);
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let cost: f64 = (0..n).map(|i| nearest[i].min(d.get(i, c))).sum();
            if cost < best.0 {
                best = (cost, c);
            }
        }
        medoids.push(best.1);
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(d.get(i, best.1));
        }
    }
    medoids
}

pub fn kmedoids(d: &GlobalDistanceMatrix, cfg: &BackendConfig) -> Result<ClusterAssignment> {
    check_k(cfg.k, d.n())?;
    if binomial(d.n(), cfg.k) <= EXACT_SUBSETS {
        let medoids = exact(d, cfg.k);
        let cost = medoid_cost(d, &medoids);
        return Ok(finish(d, cfg, &medoids, cost, 1, vec![cost]));
    }
    pam(d, cfg)
}

fn finish(d: &GlobalDistanceMatrix, cfg: &BackendConfig, medoids: &[usize], cost: f64, iterations: usize, trace: Vec<f64>) -> ClusterAssignment {
    let labels = (0..d.n()).map(|i| nearest_two(d, medoids, i).0 as i64).collect();
    ClusterAssignment {
        backend: "kmed".into(),
        k: cfg.k,
        seed: cfg.seed,
        labels,
        objective: Some(cost),
        iterations,
        trace,
    }
}

/// BUILD then SWAP, without the small-instance shortcut.
pub fn pam(d: &GlobalDistanceMatrix, cfg: &BackendConfig) -> Result<ClusterAssignment> {
    let n = d.n();
    check_k(cfg.k, n)?;
    let mut medoids = build(d, cfg.k);
    let mut cost = medoid_cost(d, &medoids);
    let mut trace = vec![cost];
    let mut iterations = 0;
    while iterations < cfg.max_iter.max(1) {
        iterations += 1;
        let near: Vec<(usize, f64, f64)> = (0..n).map(|i| nearest_two(d, &medoids, i)).collect();
        // Best (slot, candidate) swap by exact cost change.
        let mut best = (0.0, 0, 0);
        for cand in (0..n).filter(|c| !medoids.contains(c)) {
            for slot in 0..cfg.k {
                let mut delta = 0.0;
                for (i, &(s, d1, d2)) in near.iter().enumerate() {
                    let dc = d.get(i, cand);
                    delta += if s == slot { dc.min(d2) - d1 } else { dc.min(d1) - d1 };
                }
                if delta < best.0 {
                    best = (delta, slot, cand);
                }
            }
        }
        // Guard against swaps that only shuffle rounding error.
        if best.0 >= -1e-12 * cost.max(1.0) {
            break;
        }
        medoids[best.1] = best.2;
        cost = medoid_cost(d, &medoids);
        trace.push(cost);
    }
    Ok(finish(d, cfg, &medoids, cost, iterations, trace))
}
