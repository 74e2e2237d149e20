//! External clustering indices: NMI and matched Cohen's kappa.
//!
//! Predicted noise labels (negative) are expanded so that every noise point
//! forms its own singleton cluster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNorm {
    #[default]
    Geometric,
    Arithmetic,
}

/// `counts[r][c]`: samples in predicted cluster `r` and true class `c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &[i64], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch { expected: truth.len(), got: pred.len() });
        }
        let pred = expand_noise(pred);
        let rows = pred.iter().max().map_or(0, |&m| m + 1);
        let cols = truth.iter().max().map_or(0, |&m| m + 1);
        let mut counts = vec![vec![0u64; cols]; rows];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        // Drop empty predicted ids so gaps in labels do not matter.
        counts.retain(|r| r.iter().any(|&c| c > 0));
        Ok(ContingencyTable { counts, n: truth.len() as u64 })
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|c| self.counts.iter().map(|r| r[c]).sum()).collect()
    }
}

/// Relabels to dense ids, giving every negative label a fresh singleton id.
fn expand_noise(pred: &[i64]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    let mut next = 0usize;
    pred.iter()
        .map(|&l| {
            if l < 0 {
                next += 1;
                next - 1
            } else {
                *map.entry(l).or_insert_with(|| {
                    next += 1;
                    next - 1
                })
            }
        })
        .collect()
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum()
}

pub fn nmi(pred: &[i64], truth: &[usize], norm: NmiNorm) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.n == 0 {
        return Ok(0.0);
    }
    let n = t.n as f64;
    let (rs, cs) = (t.row_sums(), t.col_sums());
    let mut mi = 0.0;
    for (r, row) in t.counts.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v > 0 {
                let v = v as f64;
                mi += v / n * (n * v / (rs[r] as f64 * cs[c] as f64)).ln();
            }
        }
    }
    let (hu, hv) = (entropy(&rs, n), entropy(&cs, n));
    let denom = match norm {
        NmiNorm::Geometric => (hu * hv).sqrt(),
        NmiNorm::Arithmetic => 0.5 * (hu + hv),
    };
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Cohen's kappa after the cluster-to-class matching that maximizes the
/// number of agreeing samples; among equally good matchings the one with the
/// least chance agreement is used, which keeps the value independent of
/// label order. Clusters left unmatched (when there are more clusters than
/// classes) map to a null class that agrees with nothing.
pub fn kappa(pred: &[i64], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.n == 0 {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let rows = t.counts.len();
    let cols = t.counts.first().map_or(0, Vec::len);
    let (rs, cs) = (t.row_sums(), t.col_sums());
    // Integer agreement dominates; the chance term sums to less than one.
    let scale = (t.n * t.n + 1) as f64;
    let cost: Vec<Vec<f64>> = t
        .counts
        .iter()
        .enumerate()
        .map(|(r, row)| row.iter().enumerate().map(|(c, &v)| (rs[r] * cs[c]) as f64 / scale - v as f64).collect())
        .collect();
    let matching = hungarian(&cost);
    let mut agree = 0u64;
    // Predicted marginal per class after mapping; null class collects the rest.
    let mut pred_marg = vec![0u64; cols];
    for r in 0..rows {
        if let Some(c) = matching[r] {
            agree += t.counts[r][c];
            pred_marg[c] += rs[r];
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = (0..cols).map(|c| (pred_marg[c] as f64 / n) * (cs[c] as f64 / n)).sum();
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Minimum-cost assignment for a rectangular cost matrix. Returns, per row,
/// the assigned column, or `None` for rows left over when there are more rows
/// than columns. The matrix is padded to square with zeros.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let at = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { 0.0 };
    // Potentials-based O(n^3) Kuhn–Munkres, 1-indexed with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}
