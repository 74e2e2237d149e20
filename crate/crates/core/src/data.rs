//! Datasets: CSV loading, normalization, synthetic generators and the
//! bundled Iris table.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IRIS_CSV: &str = include_str!("../data/iris.csv");

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Number of distinct ground-truth classes.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |&m| m + 1))
    }

    pub fn normalized(mut self, norm: Normalization) -> Self {
        normalize(&mut self.features, norm);
        self
    }

    /// Keeps `n` rows drawn without replacement, in their original order.
    pub fn subsample(&self, n: usize, seed: u64) -> Self {
        if n >= self.n() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        idx.truncate(n);
        idx.sort_unstable();
        Dataset {
            name: self.name.clone(),
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    /// Per-feature affine map onto [-1, 1].
    MinMax,
    /// Each sample scaled to unit Euclidean norm.
    Unit,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "minmax" => Ok(Normalization::MinMax),
            "unit" | "l2" => Ok(Normalization::Unit),
            _ => Err(Error::Config(format!("normalization must be none, minmax or unit, got '{s}'"))),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::MinMax => "minmax",
            Normalization::Unit => "unit",
        })
    }
}

pub fn normalize(rows: &mut [Vec<f64>], norm: Normalization) {
    match norm {
        Normalization::None => {}
        Normalization::MinMax => {
            let d = rows.first().map_or(0, Vec::len);
            for c in 0..d {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])));
                let span = hi - lo;
                for r in rows.iter_mut() {
                    r[c] = if span > 0.0 { 2.0 * (r[c] - lo) / span - 1.0 } else { 0.0 };
                }
            }
        }
        Normalization::Unit => {
            for r in rows.iter_mut() {
                let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    r.iter_mut().for_each(|v| *v /= norm);
                }
            }
        }
    }
}

/// Which column holds the ground-truth label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    None,
    Index(usize),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(LabelColumn::None),
            "last" => Ok(LabelColumn::Last),
            _ => s
                .parse()
                .map(LabelColumn::Index)
                .map_err(|_| Error::Config(format!("label column must be an index, 'last' or 'none', got '{s}'"))),
        }
    }
}

pub fn load_csv(path: &Path, label_col: LabelColumn, norm: Normalization) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned());
    let mut ds = parse_csv(&text, label_col)?;
    ds.name = name;
    Ok(ds.normalized(norm))
}

/// Parses a numeric table. A first row with any non-numeric feature cell is
/// taken as a header. Labels may be integers or strings; strings are numbered
/// in order of first appearance.
pub fn parse_csv(text: &str, label_col: LabelColumn) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut features = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut width = None;
    let mut first = true;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Data {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let cols = rec.len();
        let label_idx = match label_col {
            LabelColumn::None => None,
            LabelColumn::Last => Some(cols - 1),
            LabelColumn::Index(i) if i < cols => Some(i),
            LabelColumn::Index(i) => {
                return Err(Error::Data { line, msg: format!("label column {i} out of range for {cols} columns") })
            }
        };
        let is_header = first && rec.iter().enumerate().any(|(c, v)| Some(c) != label_idx && v.parse::<f64>().is_err());
        first = false;
        if is_header {
            continue;
        }
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(Error::Data { line, msg: format!("ragged row: {cols} columns, expected {w}") });
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(cols);
        for (c, v) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(v.to_string());
                continue;
            }
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => row.push(x),
                _ => return Err(Error::Data { line, msg: format!("non-numeric cell '{v}' in column {c}") }),
            }
        }
        features.push(row);
    }
    if features.is_empty() {
        return Err(Error::Dataset("no data rows".into()));
    }
    let labels = (label_col != LabelColumn::None).then(|| encode_labels(&raw_labels));
    Ok(Dataset { name: "csv".into(), features, labels })
}

fn encode_labels(raw: &[String]) -> Vec<usize> {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>() {
        // Compact integer labels so classes are 0..k.
        let mut distinct: Vec<usize> = ints.clone();
        distinct.sort_unstable();
        distinct.dedup();
        return ints.iter().map(|v| distinct.binary_search(v).unwrap()).collect();
    }
    let mut ids = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = ids.len();
            *ids.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// The 150-sample Iris table (4 features, 3 classes), unnormalized.
pub fn iris() -> Dataset {
    let mut ds = parse_csv(IRIS_CSV, LabelColumn::Last).expect("bundled iris parses");
    ds.name = "iris".into();
    ds
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Blobs,
    Rings,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(SynthKind::Blobs),
            "rings" => Ok(SynthKind::Rings),
            _ => Err(Error::Config(format!("unknown generator '{s}'"))),
        }
    }
}

/// Labeled 2-D synthetic data. Sample `i` belongs to class `i mod k`.
///
/// Blobs: isotropic Gaussians with standard deviation `noise` around centers
/// spaced on a circle of radius 10. Rings: concentric annuli of radius
/// `1..=k` with Gaussian radial jitter `noise`.
pub fn synth(kind: SynthKind, n: usize, k: usize, seed: u64, noise: f64) -> Result<Dataset> {
    if k == 0 || n < k {
        return Err(Error::Config(format!("synthetic data needs 1 <= k <= n, got n = {n}, k = {k}")));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::Config(format!("noise must be a non-negative number, got {noise}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut features = Vec::with_capacity(n);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    for &c in &labels {
        let row = match kind {
            SynthKind::Blobs => {
                let angle = std::f64::consts::TAU * c as f64 / k as f64;
                let (cx, cy) = if k == 1 { (0.0, 0.0) } else { (10.0 * angle.cos(), 10.0 * angle.sin()) };
                vec![cx + gauss.sample(&mut rng), cy + gauss.sample(&mut rng)]
            }
            SynthKind::Rings => {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (c + 1) as f64 + gauss.sample(&mut rng);
                vec![r * theta.cos(), r * theta.sin()]
            }
        };
        features.push(row);
    }
    let name = match kind {
        SynthKind::Blobs => "blobs",
        SynthKind::Rings => "rings",
    };
    Ok(Dataset { name: name.into(), features, labels: Some(labels) })
}

/// Unlabeled samples uniform in `[-1, 1]^d`, for timing runs.
pub fn uniform(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let features = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    Dataset { name: "uniform".into(), features, labels: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_iris_shape() {
        let ds = iris();
        assert_eq!(ds.n(), 150);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.num_classes(), Some(3));
        let labels = ds.labels.unwrap();
        for c in 0..3 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 50);
        }
    }

    #[test]
    fn csv_errors_carry_lines() {
        assert!(matches!(parse_csv("", LabelColumn::None), Err(Error::Dataset(_))));
        match parse_csv("1,2\n3,4\n5\n", LabelColumn::None) {
            Err(Error::Data { line: 3, msg }) => assert!(msg.contains("ragged")),
            other => panic!("{other:?}"),
        }
        match parse_csv("a,b\n1,2\n3,x\n", LabelColumn::None) {
            Err(Error::Data { line: 3, msg }) => assert!(msg.contains("non-numeric")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_header_and_labels() {
        let ds = parse_csv("x,y,class\n1,2,setosa\n3,4,virginica\n5,6,setosa\n", LabelColumn::Last).unwrap();
        assert_eq!(ds.features, vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(ds.labels, Some(vec![0, 1, 0]));

        let ds = parse_csv("7,1,2\n9,3,4\n", LabelColumn::Index(0)).unwrap();
        assert_eq!(ds.features, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(ds.labels, Some(vec![0, 1]));

        let ds = parse_csv("1,2\n3,4\n", LabelColumn::None).unwrap();
        assert_eq!(ds.n(), 2);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn normalizations() {
        let mut rows = vec![vec![0.0, 5.0], vec![10.0, 5.0], vec![5.0, 5.0]];
        normalize(&mut rows, Normalization::MinMax);
        assert_eq!(rows, vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]]);

        let mut rows = vec![vec![3.0, 4.0], vec![0.0, 0.0]];
        normalize(&mut rows, Normalization::Unit);
        assert_eq!(rows, vec![vec![0.6, 0.8], vec![0.0, 0.0]]);
    }

    #[test]
    fn synth_shapes() {
        let ds = synth(SynthKind::Blobs, 300, 3, 1, 1.0).unwrap();
        assert_eq!((ds.n(), ds.dim(), ds.num_classes()), (300, 2, Some(3)));
        let ds = synth(SynthKind::Rings, 3, 3, 1, 0.0).unwrap();
        assert_eq!(ds.labels, Some(vec![0, 1, 2]));
        for (i, r) in ds.features.iter().enumerate() {
            let radius = (r[0] * r[0] + r[1] * r[1]).sqrt();
            assert!((radius - (i + 1) as f64).abs() < 1e-12);
        }
        assert!(synth(SynthKind::Blobs, 2, 3, 1, 1.0).is_err());
        assert!(synth(SynthKind::Blobs, 2, 0, 1, 1.0).is_err());
        assert_eq!(synth(SynthKind::Rings, 50, 2, 9, 0.1).unwrap(), synth(SynthKind::Rings, 50, 2, 9, 0.1).unwrap());
    }

    #[test]
    fn subsample_keeps_order() {
        let ds = iris().subsample(20, 3);
        assert_eq!(ds.n(), 20);
        let full = iris();
        let labels = ds.labels.unwrap();
        assert!(labels.windows(2).all(|w| w[0] <= w[1]));
        assert!(ds.features.iter().all(|r| full.features.contains(r)));
    }
}
