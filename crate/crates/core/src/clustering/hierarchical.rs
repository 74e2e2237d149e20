//! Agglomerative clustering through Lance–Williams updates on `D`.

use super::{check_k, BackendConfig, ClusterAssignment, Linkage};
use crate::distance::GlobalDistanceMatrix;
use crate::error::Result;

/// Merges until `k` clusters remain. Ties go to the lexicographically
/// smallest slot pair; a merged cluster keeps the smaller slot. With
/// `Linkage::Ward` the entries of `D` are read as squared Euclidean
/// distances, which is what the Ward recurrence expects.
pub fn hierarchical(d: &GlobalDistanceMatrix, cfg: &BackendConfig) -> Result<ClusterAssignment> {
    let n = d.n();
    check_k(cfg.k, n)?;
    let mut dist = d.as_slice().to_vec();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut slot_of: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    let mut clusters = n;
    while clusters > cfg.k {
        let mut best = (f64::INFINITY, 0, 0);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if dist[i * n + j] < best.0 {
                    best = (dist[i * n + j], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        trace.push(dij);
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for x in (0..n).filter(|&x| active[x] && x != i && x != j) {
            let (dxi, dxj) = (dist[x * n + i], dist[x * n + j]);
            let nx = size[x] as f64;
            let v = match cfg.linkage {
                Linkage::Single => dxi.min(dxj),
                Linkage::Complete => dxi.max(dxj),
                Linkage::Average => (ni * dxi + nj * dxj) / (ni + nj),
                Linkage::Ward => ((ni + nx) * dxi + (nj + nx) * dxj - nx * dij) / (ni + nj + nx),
            };
            dist[x * n + i] = v;
            dist[i * n + x] = v;
        }
        size[i] += size[j];
        active[j] = false;
        for s in slot_of.iter_mut() {
            if *s == j {
                *s = i;
            }
        }
        clusters -= 1;
    }
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    for (i, a) in active.iter().enumerate() {
        if *a {
            ids[i] = next;
            next += 1;
        }
    }
    let labels = slot_of.iter().map(|&s| ids[s] as i64).collect();
    Ok(ClusterAssignment {
        backend: "hc".into(),
        k: cfg.k,
        seed: cfg.seed,
        labels,
        objective: trace.last().copied(),
        iterations: trace.len(),
        trace,
    })
}
