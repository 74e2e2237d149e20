//! Centralized clustering on the global distance matrix.
//!
//! Distance-native backends (spectral, k-medoids, DBSCAN, hierarchical) read
//! `D` directly. k-means, fuzzy c-means and NMF treat each row of `D` as the
//! sample's feature vector.

mod dbscan;
mod fcm;
mod hierarchical;
mod kmeans;
mod kmedoids;
mod nmf;
mod spectral;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::distance::GlobalDistanceMatrix;
use crate::error::{Error, Result};

pub use dbscan::dbscan;
pub use fcm::{fuzzy_cmeans, fuzzy_cmeans_on_rows, FcmResult};
pub use hierarchical::hierarchical;
pub use kmeans::{kmeans, kmeans_on_rows, KMeansResult};
pub use kmedoids::{kmedoids, medoid_cost};
pub use nmf::{nmf, nmf_on_rows, NmfResult};
pub use spectral::{affinity, jacobi_eigen, sigma_squared, spectral, spectral_embedding, Eigen};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Km,
    Kmed,
    Fcm,
    Sc,
    Nmf,
    Dbscan,
    Hc,
}

impl Backend {
    pub const ALL: [Backend; 7] = [Backend::Km, Backend::Kmed, Backend::Fcm, Backend::Sc, Backend::Nmf, Backend::Dbscan, Backend::Hc];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Km => "km",
            Backend::Kmed => "kmed",
            Backend::Fcm => "fcm",
            Backend::Sc => "sc",
            Backend::Nmf => "nmf",
            Backend::Dbscan => "dbscan",
            Backend::Hc => "hc",
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown backend '{s}' (expected km, kmed, fcm, sc, nmf, dbscan or hc)")))
    }
}

/// Bandwidth of the spectral affinity `exp(-D / (2 sigma^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum SigmaMode {
    /// `sigma^2` = median off-diagonal entry of `D`.
    Median,
    /// A fixed `sigma^2`.
    Fixed(f64),
    /// `sigma^2` = median over samples of the squared distance to the k-th nearest neighbor.
    KnnMedian(usize),
}

impl std::str::FromStr for SigmaMode {
    type Err = Error;

    /// `median`, `fixed:S2` or `knn:K`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("sigma must be median, fixed:SIGMA2 or knn:K, got '{s}'"));
        match s.split_once(':') {
            None if s == "median" => Ok(SigmaMode::Median),
            Some(("fixed", v)) => v.parse().ok().filter(|v: &f64| *v > 0.0).map(SigmaMode::Fixed).ok_or_else(bad),
            Some(("knn", v)) => v.parse().ok().filter(|&k: &usize| k > 0).map(SigmaMode::KnnMedian).ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigmaMode::Median => f.write_str("median"),
            SigmaMode::Fixed(v) => write!(f, "fixed:{v}"),
            SigmaMode::KnnMedian(k) => write!(f, "knn:{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    Average,
    Ward,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            "ward" => Ok(Linkage::Ward),
            _ => Err(Error::Config(format!("linkage must be single, complete, average or ward, got '{s}'"))),
        }
    }
}

impl std::fmt::Display for Linkage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Ward => "ward",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend: Backend,
    pub k: usize,
    pub max_iter: usize,
    /// Convergence threshold: max membership change for FCM, relative
    /// objective decrease for NMF. k-means stops when assignments are stable.
    pub tolerance: f64,
    pub seed: u64,
    /// Independent restarts for KM, FCM, NMF and the spectral embedding's
    /// k-means; the lowest objective wins.
    pub n_init: usize,
    pub sigma: SigmaMode,
    /// DBSCAN radius, compared against squared distances unless
    /// `eps_is_euclidean` is set.
    pub eps: f64,
    pub eps_is_euclidean: bool,
    pub min_pts: usize,
    pub linkage: Linkage,
    pub fuzzifier: f64,
}

impl BackendConfig {
    pub fn new(backend: Backend, k: usize, seed: u64) -> Self {
        let (max_iter, tolerance) = match backend {
            Backend::Km | Backend::Sc => (300, 0.0),
            Backend::Fcm => (300, 1e-6),
            Backend::Nmf => (5000, 1e-8),
            Backend::Kmed => (100, 0.0),
            Backend::Dbscan | Backend::Hc => (0, 0.0),
        };
        BackendConfig {
            backend,
            k,
            max_iter,
            tolerance,
            seed,
            n_init: 10,
            sigma: SigmaMode::Median,
            eps: 0.01,
            eps_is_euclidean: false,
            min_pts: 5,
            linkage: Linkage::Ward,
            fuzzifier: 2.0,
        }
    }

    pub const KEYS: [&'static str; 11] =
        ["k", "max_iter", "tolerance", "seed", "n_init", "sigma", "eps", "eps_is_euclidean", "min_pts", "linkage", "fuzzifier"];

    /// Sets one field from its textual form; keys are the field names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
        }
        let v = value.trim();
        match key {
            "k" => self.k = num(key, v)?,
            "max_iter" => self.max_iter = num(key, v)?,
            "tolerance" => self.tolerance = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "n_init" => self.n_init = num(key, v)?,
            "sigma" => self.sigma = v.parse()?,
            "eps" => self.eps = num(key, v)?,
            "eps_is_euclidean" => self.eps_is_euclidean = num(key, v)?,
            "min_pts" => self.min_pts = num(key, v)?,
            "linkage" => self.linkage = v.parse()?,
            "fuzzifier" => {
                self.fuzzifier = num(key, v)?;
                if !(self.fuzzifier > 1.0) {
                    return Err(Error::Config(format!("fuzzifier must exceed 1, got {v}")));
                }
            }
            _ => return Err(Error::Config(format!("unknown {} setting '{key}'", self.backend))),
        }
        Ok(())
    }

    /// The squared-distance radius DBSCAN compares against.
    pub fn eps_squared(&self) -> f64 {
        if self.eps_is_euclidean {
            self.eps * self.eps
        } else {
            self.eps
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub backend: String,
    pub k: usize,
    pub seed: u64,
    /// Cluster ids in `[0, k)`, or -1 for DBSCAN noise.
    pub labels: Vec<i64>,
    pub objective: Option<f64>,
    pub iterations: usize,
    /// Objective after each iteration of the winning restart.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl ClusterAssignment {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// One `label` column with a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("label\n");
        for l in &self.labels {
            out.push_str(&format!("{l}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Renumbers clusters in order of first appearance; -1 stays -1.
pub fn canonical_labels(labels: &[i64]) -> Vec<i64> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        Err(Error::KOutOfRange { k, n })
    } else {
        Ok(())
    }
}

/// Independent RNG for restart `r`.
pub(crate) fn restart_rng(seed: u64, r: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

pub(crate) fn to_i64(labels: Vec<usize>) -> Vec<i64> {
    labels.into_iter().map(|l| l as i64).collect()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs the configured backend.
pub fn cluster(d: &GlobalDistanceMatrix, cfg: &BackendConfig) -> Result<ClusterAssignment> {
    match cfg.backend {
        Backend::Km => kmeans_on_rows(d, cfg),
        Backend::Kmed => kmedoids(d, cfg),
        Backend::Fcm => fuzzy_cmeans_on_rows(d, cfg).map(|(a, _)| a),
        Backend::Sc => spectral(d, cfg),
        Backend::Nmf => nmf_on_rows(d, cfg),
        Backend::Dbscan => Ok(dbscan(d, cfg)),
        Backend::Hc => hierarchical(d, cfg),
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn parsing() {
        assert_eq!("sc".parse::<Backend>().unwrap(), Backend::Sc);
        assert!("xx".parse::<Backend>().is_err());
        assert_eq!("knn:7".parse::<SigmaMode>().unwrap(), SigmaMode::KnnMedian(7));
        assert_eq!("fixed:0.1".parse::<SigmaMode>().unwrap(), SigmaMode::Fixed(0.1));
        assert!("fixed:-1".parse::<SigmaMode>().is_err());
        assert_eq!("ward".parse::<Linkage>().unwrap(), Linkage::Ward);
    }

    #[test]
    fn canonical_relabeling() {
        assert_eq!(canonical_labels(&[2, 2, 0, -1, 1, 0]), vec![0, 0, 1, -1, 2, 1]);
    }

    #[test]
    fn every_backend_splits_two_blobs() {
        let (d, truth) = two_blobs(15, 10, 3);
        for b in Backend::ALL {
            let mut cfg = BackendConfig::new(b, 2, 1);
            cfg.eps = 10.0;
            cfg.min_pts = 3;
            let a = cluster(&d, &cfg).unwrap();
            assert!(same_partition(&a.labels, &truth), "{b}: {:?}", a.labels);
            assert_eq!(a.backend, b.name());
        }
    }

    #[test]
    fn k_out_of_range_rejected() {
        let (d, _) = two_blobs(3, 3, 1);
        for b in [Backend::Km, Backend::Kmed, Backend::Fcm, Backend::Sc, Backend::Nmf, Backend::Hc] {
            assert!(matches!(cluster(&d, &BackendConfig::new(b, 0, 1)), Err(Error::KOutOfRange { .. })), "{b}");
            assert!(matches!(cluster(&d, &BackendConfig::new(b, 7, 1)), Err(Error::KOutOfRange { .. })), "{b}");
        }
    }

    #[test]
    fn permutation_equivariance() {
        let rows = random_points(24, 3, 8);
        let d = crate::distance::real_oracle(&rows);
        let perm: Vec<usize> = (0..24).map(|i| (i * 7 + 3) % 24).collect();
        let dp = d.permuted(&perm);
        for b in [Backend::Kmed, Backend::Hc, Backend::Dbscan] {
            let mut cfg = BackendConfig::new(b, 3, 1);
            cfg.eps = 12.0;
            cfg.min_pts = 3;
            let a = cluster(&d, &cfg).unwrap();
            let ap = cluster(&dp, &cfg).unwrap();
            let mapped: Vec<i64> = perm.iter().map(|&i| a.labels[i]).collect();
            assert!(same_partition(&mapped, &ap.labels), "{b}");
        }
    }

    #[test]
    fn assignment_files_round_trip() {
        let (d, _) = two_blobs(4, 4, 2);
        let a = cluster(&d, &BackendConfig::new(Backend::Km, 2, 5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("a.json");
        a.write_json(&json).unwrap();
        let back = ClusterAssignment::read_json(&json).unwrap();
        assert_eq!(back.labels, a.labels);
        assert_eq!(back.seed, 5);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        for key in ["backend", "k", "seed", "labels", "objective", "iterations"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let csv = dir.path().join("a.csv");
        a.write_csv(&csv).unwrap();
        assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 9);
    }
}
