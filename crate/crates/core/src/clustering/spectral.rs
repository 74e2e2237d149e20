//! Normalized spectral clustering with a dense cyclic Jacobi eigensolver.

use super::kmeans::kmeans;
use super::{check_k, to_i64, BackendConfig, ClusterAssignment, SigmaMode};
use crate::distance::GlobalDistanceMatrix;
use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// `n x n` row-major; column `c` is the eigenvector of `values[c]`.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            s += 2.0 * a[p * n + q] * a[p * n + q];
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi. Converges when the off-diagonal Frobenius norm falls
/// below `1e-10` times the matrix norm.
pub fn jacobi_eigen(matrix: &[f64], n: usize) -> Result<Eigen> {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = JACOBI_TOL * norm.max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    loop {
        let off = off_norm(&a, n);
        if off <= target {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNonConvergence { sweeps, off_norm: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[p * n + p] -= t * apq;
                a[q * n + q] += t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        let np = c * akp - s * akq;
                        let nq = s * akp + c * akq;
                        a[k * n + p] = np;
                        a[p * n + k] = np;
                        a[k * n + q] = nq;
                        a[q * n + k] = nq;
                    }
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y * n + y].total_cmp(&a[x * n + x]).then(x.cmp(&y)));
    let values = order.iter().map(|&c| a[c * n + c]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + dst] = v[r * n + src];
        }
    }
    Ok(Eigen { values, vectors, sweeps })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Resolves the bandwidth; a degenerate zero falls back to the mean positive
/// distance, then to 1.
pub fn sigma_squared(d: &GlobalDistanceMatrix, mode: SigmaMode) -> f64 {
    let n = d.n();
    let s = match mode {
        SigmaMode::Fixed(s) => return s,
        SigmaMode::Median => median(d.upper_triangle()),
        SigmaMode::KnnMedian(k) => {
            let per_point = (0..n)
                .filter_map(|i| {
                    let mut r: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d.get(i, j)).collect();
                    r.sort_by(f64::total_cmp);
                    r.get(k.min(r.len()).saturating_sub(1)).copied()
                })
                .collect();
            median(per_point)
        }
    };
    if s > 0.0 {
        return s;
    }
    let pos: Vec<f64> = d.upper_triangle().into_iter().filter(|&x| x > 0.0).collect();
    if pos.is_empty() {
        1.0
    } else {
        pos.iter().sum::<f64>() / pos.len() as f64
    }
}

/// Gaussian affinity with zero diagonal, `n x n` row-major.
pub fn affinity(d: &GlobalDistanceMatrix, sigma2: f64) -> Vec<f64> {
    let n = d.n();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[i * n + j] = (-d.get(i, j) / (2.0 * sigma2)).exp();
            }
        }
    }
    a
}

/// Row-normalized top-`k` eigenvectors of `Deg^-1/2 A Deg^-1/2`, `n x k`.
pub fn spectral_embedding(d: &GlobalDistanceMatrix, k: usize, sigma: SigmaMode) -> Result<Vec<f64>> {
    let n = d.n();
    check_k(k, n)?;
    let mut a = affinity(d, sigma_squared(d, sigma));
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = a[i * n..(i + 1) * n].iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = jacobi_eigen(&a, n)?;
    let mut emb = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut emb[i * k..(i + 1) * k];
        row.copy_from_slice(&eig.vectors[i * n..i * n + k]);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(emb)
}

pub fn spectral(d: &GlobalDistanceMatrix, cfg: &BackendConfig) -> Result<ClusterAssignment> {
    let n = d.n();
    let emb = spectral_embedding(d, cfg.k, cfg.sigma)?;
    let res = kmeans(&emb, n, cfg.k, cfg.k, cfg.max_iter, cfg.n_init, cfg.seed)?;
    Ok(ClusterAssignment {
        backend: "sc".into(),
        k: cfg.k,
        seed: cfg.seed,
        labels: to_i64(res.labels),
        objective: Some(res.objective),
        iterations: res.iterations,
        trace: res.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{Backend, BackendConfig};
    use super::*;
    use crate::data::{synth, SynthKind};
    use crate::distance::{real_oracle, Provenance};
    use proptest::prelude::*;

    #[test]
    fn jacobi_small_known() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let e = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12 && (e.values[1] - 1.0).abs() < 1e-12);
        let v0 = [e.vectors[0], e.vectors[2]];
        assert!((v0[0].abs() - 0.5f64.sqrt()).abs() < 1e-12 && (v0[0] - v0[1]).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn jacobi_reconstructs(seed in any::<u64>(), n in 1usize..12) {
            let pts = random_points(n * n, 1, seed);
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    m[i * n + j] = pts[i * n + j][0];
                    m[j * n + i] = pts[i * n + j][0];
                }
            }
            let e = jacobi_eigen(&m, n).unwrap();
            // V diag(values) V^T == M and V orthonormal.
            for i in 0..n {
                for j in 0..n {
                    let rec: f64 = (0..n).map(|c| e.vectors[i * n + c] * e.values[c] * e.vectors[j * n + c]).sum();
                    prop_assert!((rec - m[i * n + j]).abs() < 1e-8);
                    let dot: f64 = (0..n).map(|r| e.vectors[r * n + i] * e.vectors[r * n + j]).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - expected).abs() < 1e-9);
                }
            }
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn block_diagonal_recovered_exactly() {
        let n = 10;
        let truth: Vec<i64> = (0..n).map(|i| (i >= 4) as i64).collect();
        let data = (0..n * n).map(|x| if truth[x / n] == truth[x % n] { 0.0 } else { 100.0 }).collect();
        let d = GlobalDistanceMatrix::from_dense(n, data, Provenance::Oracle).unwrap();
        let a = spectral(&d, &BackendConfig::new(Backend::Sc, 2, 0)).unwrap();
        assert!(same_partition(&a.labels, &truth));
    }

    #[test]
    fn rings_need_connectivity() {
        let ds = synth(SynthKind::Rings, 200, 2, 5, 0.05).unwrap();
        let d = real_oracle(&ds.features);
        let truth: Vec<i64> = ds.labels.unwrap().iter().map(|&l| l as i64).collect();
        let mut cfg = BackendConfig::new(Backend::Sc, 2, 0);
        cfg.sigma = SigmaMode::KnnMedian(5);
        let a = spectral(&d, &cfg).unwrap();
        assert!(same_partition(&a.labels, &truth));
    }

    #[test]
    fn sigma_modes() {
        let d = real_oracle(&[vec![0.0], vec![1.0], vec![3.0]]);
        // Off-diagonal entries 1, 9, 4.
        assert_eq!(sigma_squared(&d, SigmaMode::Median), 4.0);
        assert_eq!(sigma_squared(&d, SigmaMode::Fixed(0.5)), 0.5);
        // Nearest neighbor distances 1, 1, 4.
        assert_eq!(sigma_squared(&d, SigmaMode::KnnMedian(1)), 1.0);
        let zero = real_oracle(&[vec![0.0], vec![0.0]]);
        assert_eq!(sigma_squared(&zero, SigmaMode::Median), 1.0);
    }
}
