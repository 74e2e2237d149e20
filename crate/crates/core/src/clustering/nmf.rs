//! Rank-k NMF by Lee–Seung multiplicative updates on the Frobenius loss.

use rand::Rng;

use super::{check_k, restart_rng, to_i64, BackendConfig, ClusterAssignment};
use crate::distance::GlobalDistanceMatrix;
use crate::error::{Error, Result};

const DENOM_GUARD: f64 = 1e-9;
/// Factor entries below this are set to zero; left alone they decay into
/// subnormals, which are very slow to multiply.
const FLUSH: f64 = 1e-150;

#[derive(Clone, Debug, PartialEq)]
pub struct NmfResult {
    /// `n x k` coefficients, row-major.
    pub w: Vec<f64>,
    /// `k x d` basis, row-major.
    pub h: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

impl NmfResult {
    /// Index of the largest coefficient per sample, lowest index on ties.
    pub fn labels(&self, k: usize) -> Vec<usize> {
        self.w
            .chunks(k)
            .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b }).0)
            .collect()
    }
}

/// `||X - W H||_F^2`.
fn loss(x: &[f64], n: usize, d: usize, k: usize, w: &[f64], h: &[f64]) -> f64 {
    let mut recon = vec![0.0; d];
    let mut s = 0.0;
    for i in 0..n {
        recon.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..k {
            let wic = w[i * k + c];
            for (r, hv) in recon.iter_mut().zip(&h[c * d..(c + 1) * d]) {
                *r += wic * hv;
            }
        }
        s += x[i * d..(i + 1) * d].iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    s
}

fn run_once(x: &[f64], n: usize, d: usize, k: usize, max_iter: usize, tol: f64, seed: u64, r: usize) -> NmfResult {
    let mut rng = restart_rng(seed, r);
    let mut w: Vec<f64> = (0..n * k).map(|_| 1.0 - rng.random::<f64>()).collect();
    let mut h: Vec<f64> = (0..k * d).map(|_| 1.0 - rng.random::<f64>()).collect();
    let mut trace = vec![loss(x, n, d, k, &w, &h)];
    let mut wtx = vec![0.0; k * d];
    let mut wtw = vec![0.0; k * k];
    let mut xht = vec![0.0; n * k];
    let mut hht = vec![0.0; k * k];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        // H <- H * (W^T X) / (W^T W H + eps)
        wtx.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            for c in 0..k {
                let wic = w[i * k + c];
                if wic != 0.0 {
                    let row = &mut wtx[c * d..(c + 1) * d];
                    for (acc, &xv) in row.iter_mut().zip(&x[i * d..(i + 1) * d]) {
                        *acc += wic * xv;
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..k {
                wtw[a * k + b] = (0..n).map(|i| w[i * k + a] * w[i * k + b]).sum();
            }
        }
        let mut wtwh = vec![DENOM_GUARD; k * d];
        for c in 0..k {
            for b in 0..k {
                let coef = wtw[c * k + b];
                for (acc, hv) in wtwh[c * d..(c + 1) * d].iter_mut().zip(&h[b * d..(b + 1) * d]) {
                    *acc += coef * hv;
                }
            }
        }
        for ((hv, num), den) in h.iter_mut().zip(&wtx).zip(&wtwh) {
            *hv *= num / den;
            if *hv < FLUSH {
                *hv = 0.0;
            }
        }
        // W <- W * (X H^T) / (W H H^T + eps)
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            for c in 0..k {
                xht[i * k + c] = xi.iter().zip(&h[c * d..(c + 1) * d]).map(|(a, b)| a * b).sum();
            }
        }
        for a in 0..k {
            for b in 0..k {
                hht[a * k + b] = h[a * d..(a + 1) * d].iter().zip(&h[b * d..(b + 1) * d]).map(|(p, q)| p * q).sum();
            }
        }
        for i in 0..n {
            for c in 0..k {
                let denom: f64 = (0..k).map(|b| w[i * k + b] * hht[b * k + c]).sum::<f64>() + DENOM_GUARD;
                w[i * k + c] *= xht[i * k + c] / denom;
                if w[i * k + c] < FLUSH {
                    w[i * k + c] = 0.0;
                }
            }
        }
        let cur = loss(x, n, d, k, &w, &h);
        let prev = *trace.last().unwrap();
        trace.push(cur);
        if prev - cur <= tol * prev {
            break;
        }
    }
    NmfResult { objective: *trace.last().unwrap(), w, h, iterations, trace }
}

/// Factorizes the non-negative `n x d` matrix `x`; best loss over restarts.
pub fn nmf(x: &[f64], n: usize, d: usize, cfg: &BackendConfig) -> Result<NmfResult> {
    check_k(cfg.k, n)?;
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Dataset(format!("NMF input has a negative or non-finite entry {v}")));
    }
    let mut best: Option<NmfResult> = None;
    for r in 0..cfg.n_init.max(1) {
        let res = run_once(x, n, d, cfg.k, cfg.max_iter, cfg.tolerance, cfg.seed, r);
        if best.as_ref().is_none_or(|b| res.objective < b.objective) {
            best = Some(res);
        }
    }
    Ok(best.unwrap())
}

pub fn nmf_on_rows(dm: &GlobalDistanceMatrix, cfg: &BackendConfig) -> Result<ClusterAssignment> {
    let n = dm.n();
    let res = nmf(dm.as_slice(), n, n, cfg)?;
    Ok(ClusterAssignment {
        backend: "nmf".into(),
        k: cfg.k,
        seed: cfg.seed,
        labels: to_i64(res.labels(cfg.k)),
        objective: Some(res.objective),
        iterations: res.iterations,
        trace: res.trace,
    })
}
