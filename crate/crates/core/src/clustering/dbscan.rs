use super::{BackendConfig, ClusterAssignment};
use crate::distance::GlobalDistanceMatrix;

/// Density clustering with `D[i][j] <= eps` as the neighborhood test. A point
/// counts itself toward `min_pts`. Noise is labeled -1.
pub fn dbscan(d: &GlobalDistanceMatrix, cfg: &BackendConfig) -> ClusterAssignment {
    let n = d.n();
    let eps = cfg.eps_squared();
    let neighbors = |i: usize| -> Vec<usize> { (0..n).filter(|&j| d.get(i, j) <= eps).collect() };
    let mut labels = vec![-1i64; n];
    let mut visited = vec![false; n];
    let mut k = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbors(i);
        if nb.len() < cfg.min_pts {
            continue;
        }
        let id = k as i64;
        k += 1;
        labels[i] = id;
        let mut queue = std::collections::VecDeque::from(nb);
        while let Some(j) = queue.pop_front() {
            if labels[j] < 0 {
                labels[j] = id;
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = neighbors(j);
            if nj.len() >= cfg.min_pts {
                queue.extend(nj.into_iter().filter(|&x| !visited[x] || labels[x] < 0));
            }
        }
    }
    ClusterAssignment {
        backend: "dbscan".into(),
        k,
        seed: cfg.seed,
        labels,
        objective: None,
        iterations: 1,
        trace: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::Backend;
    use super::*;
    use crate::distance::real_oracle;

    #[test]
    fn eps_extremes() {
        let d = real_oracle(&random_points(20, 2, 3));
        let mut cfg = BackendConfig::new(Backend::Dbscan, 0, 0);
        cfg.eps = 1e9;
        let a = dbscan(&d, &cfg);
        assert_eq!(a.k, 1);
        assert!(a.labels.iter().all(|&l| l == 0));
        cfg.eps = 1e-9;
        let a = dbscan(&d, &cfg);
        assert_eq!(a.k, 0);
        assert!(a.labels.iter().all(|&l| l == -1));
    }

    #[test]
    fn euclidean_eps_is_squared() {
        let d = real_oracle(&[vec![0.0], vec![1.5], vec![3.0], vec![10.0]]);
        let mut cfg = BackendConfig::new(Backend::Dbscan, 0, 0);
        cfg.min_pts = 2;
        cfg.eps = 2.0;
        // Squared radius 2: neighbors need |x - y| <= 1.414.
        assert_eq!(dbscan(&d, &cfg).labels, vec![-1, -1, -1, -1]);
        cfg.eps_is_euclidean = true;
        assert_eq!(dbscan(&d, &cfg).labels, vec![0, 0, 0, -1]);
    }

    #[test]
    fn border_points_join_first_cluster() {
        // Cores are 1, 2 and 6. Points 0 and 2.9 are border points of the first
        // cluster, 5 and 7 of the second, and 13.5 is isolated.
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 2.9, 5.0, 6.0, 7.0, 13.5].iter().map(|&x| vec![x]).collect();
        let d = real_oracle(&pts);
        let mut cfg = BackendConfig::new(Backend::Dbscan, 0, 0);
        cfg.eps = 1.0;
        cfg.eps_is_euclidean = true;
        cfg.min_pts = 3;
        assert_eq!(dbscan(&d, &cfg).labels, vec![0, 0, 0, 0, 1, 1, 1, -1]);
    }
}
