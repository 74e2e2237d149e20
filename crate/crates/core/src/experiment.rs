//! End-to-end experiment runs behind the CLI: configuration resolution,
//! protocol execution, clustering, metrics and the files a run leaves behind.
//!
//! A run directory holds
//!
//! - `config.json`: the resolved configuration,
//! - `metrics.json`: the [`ResultRecord`], deterministic for a fixed config,
//! - `timings.json`: wall-clock seconds per phase,
//! - `assign_<backend>.json` / `.csv` (with a `p<value>_` prefix under `--sweep-p`),
//! - `sweep_p.csv` with columns `p,rmse,<backend>_kappa,<backend>_nmi,...`,
//! - `sweep_feasibility.csv` with columns `m,l,t,threshold,feasible,rmse,max_abs_error`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster, Backend, BackendConfig, ClusterAssignment};
use crate::config::ConfigFile;
use crate::data::{self, Dataset, LabelColumn, Normalization, SynthKind};
use crate::distance::{real_oracle, rmse, GlobalDistanceMatrix};
use crate::error::{Error, Result};
use crate::federation::{self, PartitionMode, PartitionSpec, PhaseTimings, ProtocolConfig, Transcript};
use crate::field::FieldParams;
use crate::lcc::{default_nodes, threshold, CodingScheme, NoiseMode};
use crate::metrics::{kappa, nmi, NmiNorm};
use crate::quantize::DequantExponent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Seeded,
    Entropy,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seeded" => Ok(NoiseKind::Seeded),
            "entropy" => Ok(NoiseKind::Entropy),
            _ => Err(Error::Config(format!("noise must be 'seeded' or 'entropy', got '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `iris`, `blobs`, `rings`, or a CSV path.
    pub dataset: String,
    pub label_col: String,
    /// Defaults to `unit` for Iris and `none` otherwise.
    pub normalize: Option<Normalization>,
    pub subsample: Option<usize>,
    pub synth_n: usize,
    pub synth_k: usize,
    pub synth_noise: f64,
    pub p: u64,
    pub q: u32,
    /// Defaults to the number of classes, and never below 3.
    pub m: Option<usize>,
    pub l: Option<usize>,
    pub t: Option<usize>,
    pub alpha: Option<Vec<u64>>,
    pub beta: Option<Vec<u64>>,
    pub partition: PartitionMode,
    pub backends: Vec<Backend>,
    /// Defaults to the number of classes.
    pub k: Option<usize>,
    /// Raw backend settings by section (`all` or a backend name).
    pub backend_settings: BTreeMap<String, BTreeMap<String, String>>,
    pub seed: u64,
    pub noise: NoiseKind,
    pub dequant: DequantExponent,
    pub out: PathBuf,
    pub dump_matrix: Option<PathBuf>,
    pub save_transcript: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub sweep_p: Vec<f64>,
    pub sweep_feasibility: bool,
    /// Also cluster the exact real-valued matrix and record agreement.
    pub compare_oracle: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let params = FieldParams::default();
        ExperimentConfig {
            dataset: "iris".into(),
            label_col: "last".into(),
            normalize: None,
            subsample: None,
            synth_n: 300,
            synth_k: 3,
            synth_noise: 0.5,
            p: params.p(),
            q: params.q(),
            m: None,
            l: None,
            t: None,
            alpha: None,
            beta: None,
            partition: PartitionMode::LabelSkew(0.0),
            backends: vec![Backend::Sc, Backend::Km, Backend::Fcm, Backend::Nmf],
            k: None,
            backend_settings: BTreeMap::new(),
            seed: 0,
            noise: NoiseKind::Seeded,
            dequant: DequantExponent::TwoQ,
            out: PathBuf::from("out"),
            dump_matrix: None,
            save_transcript: None,
            replay: None,
            sweep_p: Vec::new(),
            sweep_feasibility: false,
            compare_oracle: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn optional<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if matches!(v.trim(), "" | "auto" | "none") {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 27] = [
        "dataset",
        "label_col",
        "normalize",
        "subsample",
        "synth_n",
        "synth_k",
        "synth_noise",
        "p",
        "q",
        "m",
        "l",
        "t",
        "alpha",
        "beta",
        "partition",
        "backends",
        "k",
        "seed",
        "noise",
        "dequant",
        "out",
        "dump_matrix",
        "save_transcript",
        "replay",
        "sweep_p",
        "sweep_feasibility",
        "compare_oracle",
    ];

    /// Sets one top-level key from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "dataset" => self.dataset = v.to_string(),
            "label_col" => {
                v.parse::<LabelColumn>()?;
                self.label_col = v.to_string();
            }
            "normalize" => self.normalize = if v == "auto" { None } else { Some(v.parse()?) },
            "subsample" => self.subsample = optional(key, v)?,
            "synth_n" => self.synth_n = parse(key, v)?,
            "synth_k" => self.synth_k = parse(key, v)?,
            "synth_noise" => self.synth_noise = parse(key, v)?,
            "p" => self.p = parse(key, v)?,
            "q" => self.q = parse(key, v)?,
            "m" => self.m = optional(key, v)?,
            "l" => self.l = optional(key, v)?,
            "t" => self.t = optional(key, v)?,
            "alpha" => self.alpha = if v.is_empty() || v == "auto" { None } else { Some(parse_list(key, v)?) },
            "beta" => self.beta = if v.is_empty() || v == "auto" { None } else { Some(parse_list(key, v)?) },
            "partition" => self.partition = v.parse()?,
            "backends" => {
                self.backends = if v == "all" { Backend::ALL.to_vec() } else { parse_list(key, v)? };
                if self.backends.is_empty() {
                    return Err(Error::Config("backends: list is empty".into()));
                }
            }
            "k" => self.k = optional(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "noise" => self.noise = v.parse()?,
            "dequant" => self.dequant = v.parse()?,
            "out" => self.out = PathBuf::from(v),
            "dump_matrix" => self.dump_matrix = path(v),
            "save_transcript" => self.save_transcript = path(v),
            "replay" => self.replay = path(v),
            "sweep_p" => {
                self.sweep_p = parse_list(key, v)?;
                if let Some(p) = self.sweep_p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::Config(format!("sweep_p: {p} is not in [0, 1]")));
                }
            }
            "sweep_feasibility" => self.sweep_feasibility = parse(key, v)?,
            "compare_oracle" => self.compare_oracle = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }

    /// Sets a backend key for one backend, or for every backend when
    /// `section` is `all`. A later `all` setting replaces earlier
    /// backend-specific values of the same key.
    pub fn set_backend(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let probe_backend = if section == "all" { Backend::Km } else { section.parse()? };
        BackendConfig::new(probe_backend, 1, 0).set(key, value)?;
        if section == "all" {
            for (name, s) in self.backend_settings.iter_mut() {
                if name != "all" {
                    s.remove(key);
                }
            }
        }
        self.backend_settings.entry(section.to_string()).or_default().insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn apply_file(&mut self, file: &ConfigFile) -> Result<()> {
        for e in &file.entries {
            let r = match &e.section {
                None => self.set(&e.key, &e.value),
                Some(s) => self.set_backend(s, &e.key, &e.value),
            };
            r.map_err(|err| Error::Config(format!("line {}: {err}", e.line)))?;
        }
        Ok(())
    }

    /// Loads, normalizes and subsamples the dataset.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let (ds, default_norm) = match self.dataset.as_str() {
            "iris" => (data::iris(), Normalization::Unit),
            "blobs" | "rings" => {
                let kind: SynthKind = self.dataset.parse()?;
                (data::synth(kind, self.synth_n, self.synth_k, self.seed, self.synth_noise)?, Normalization::None)
            }
            path => (data::load_csv(Path::new(path), self.label_col.parse()?, Normalization::None)?, Normalization::None),
        };
        let ds = ds.normalized(self.normalize.unwrap_or(default_norm));
        Ok(match self.subsample {
            Some(n) => ds.subsample(n, self.seed),
            None => ds,
        })
    }

    /// Resolves `m`, `l` and `t` and builds the scheme. Unset `l` and `t`
    /// start at 2 and are lowered, `l` first, until the client count suffices.
    pub fn scheme(&self, classes: Option<usize>) -> Result<CodingScheme> {
        let m = self.m.unwrap_or_else(|| classes.unwrap_or(3).max(3));
        let (mut l, mut t) = (self.l.unwrap_or(2), self.t.unwrap_or(2));
        while m < threshold(l, t) && ((self.l.is_none() && l > 1) || (self.t.is_none() && t > 1)) {
            if self.l.is_none() && l > 1 {
                l -= 1;
            } else {
                t -= 1;
            }
        }
        if (self.l.is_none() && l != 2) || (self.t.is_none() && t != 2) {
            warn!("m = {m} clients cannot decode l = t = 2; using l = {l}, t = {t}");
        }
        let params = FieldParams::new(self.p, self.q)?;
        let (da, db) = default_nodes(m, l, t);
        let alpha = self.alpha.clone().unwrap_or(da);
        let beta = self.beta.clone().unwrap_or(db);
        CodingScheme::with_nodes(params, m, l, t, &alpha, &beta)
    }

    pub fn noise_mode(&self) -> NoiseMode {
        match self.noise {
            NoiseKind::Seeded => NoiseMode::Seeded(self.seed),
            NoiseKind::Entropy => NoiseMode::Entropy,
        }
    }

    /// Per-backend configurations: defaults, then `all`, then the backend's own section.
    pub fn backend_configs(&self, classes: Option<usize>) -> Result<Vec<BackendConfig>> {
        self.backends
            .iter()
            .map(|&b| {
                let k = match (self.k, classes) {
                    (Some(k), _) | (None, Some(k)) => k,
                    (None, None) if b == Backend::Dbscan => 0,
                    (None, None) => return Err(Error::Config(format!("{b} needs k; the dataset has no labels to infer it from"))),
                };
                let mut cfg = BackendConfig::new(b, k, self.seed);
                for section in ["all", b.name()] {
                    for (key, value) in self.backend_settings.get(section).into_iter().flatten() {
                        cfg.set(key, value)?;
                    }
                }
                Ok(cfg)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub classes: Option<usize>,
    pub normalize: Normalization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeInfo {
    pub p: u64,
    pub q: u32,
    pub m: usize,
    pub l: usize,
    pub t: usize,
    pub threshold: usize,
    pub alpha: Vec<u64>,
    pub beta: Vec<u64>,
}

impl SchemeInfo {
    pub fn of(s: &CodingScheme) -> Self {
        SchemeInfo {
            p: s.params().p(),
            q: s.params().q(),
            m: s.m(),
            l: s.l(),
            t: s.t(),
            threshold: s.threshold(),
            alpha: s.alpha().iter().map(|v| v.value()).collect(),
            beta: s.beta().iter().map(|v| v.value()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendRecord {
    pub backend: Backend,
    pub config: BackendConfig,
    /// Clusters found, excluding DBSCAN noise.
    pub clusters: usize,
    pub kappa: Option<f64>,
    pub nmi: Option<f64>,
    pub objective: Option<f64>,
    pub iterations: usize,
    /// Assignment file names, relative to the run directory.
    pub assignment_json: String,
    pub assignment_csv: String,
    pub oracle_kappa: Option<f64>,
    pub oracle_nmi: Option<f64>,
    /// Labels identical to the same backend on the exact matrix.
    pub matches_oracle: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub partition: Option<PartitionMode>,
    pub client_sizes: Vec<usize>,
    pub rmse: f64,
    pub max_abs_error: f64,
    pub backends: Vec<BackendRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCell {
    pub m: usize,
    pub l: usize,
    pub t: usize,
    pub threshold: usize,
    pub feasible: bool,
    pub rmse: Option<f64>,
    pub max_abs_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub dataset: DatasetInfo,
    pub scheme: SchemeInfo,
    pub runs: Vec<RunRecord>,
    pub feasibility: Vec<FeasibilityCell>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub partition: Option<PartitionMode>,
    pub protocol: PhaseTimings,
    pub clustering_s: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub runs: Vec<RunTimings>,
    pub feasibility_s: f64,
    pub total_s: f64,
}

fn max_abs_error(a: &GlobalDistanceMatrix, b: &GlobalDistanceMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Adds `tag` before the extension: `m.csv` -> `m_p0.5.csv`.
fn tagged(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{tag}"),
    };
    path.with_file_name(name)
}

/// The distance matrix of one run, with where it came from.
pub struct Reconstruction {
    pub matrix: GlobalDistanceMatrix,
    pub transcript: Option<Transcript>,
    pub client_sizes: Vec<usize>,
}

/// Runs the protocol, or decodes a saved transcript when `replay` is set.
pub fn obtain_matrix(cfg: &ExperimentConfig, ds: &Dataset, scheme: &CodingScheme, mode: PartitionMode) -> Result<Reconstruction> {
    if let Some(path) = &cfg.replay {
        let transcript = Transcript::load(path)?;
        let recorded = transcript.scheme()?;
        if SchemeInfo::of(&recorded) != SchemeInfo::of(scheme) {
            warn!("replayed transcript uses its own scheme (m = {}, l = {}, t = {})", recorded.m(), recorded.l(), recorded.t());
        }
        let matrix = federation::replay_decode(&transcript, &recorded, cfg.dequant)?;
        if matrix.n() != ds.n() {
            return Err(Error::Dataset(format!("transcript covers {} samples but the dataset has {}", matrix.n(), ds.n())));
        }
        return Ok(Reconstruction { matrix, transcript: None, client_sizes: Vec::new() });
    }
    let spec = PartitionSpec { mode, m: scheme.m(), seed: cfg.seed };
    let proto = ProtocolConfig { scheme: scheme.clone(), noise: cfg.noise_mode(), dequant: cfg.dequant };
    let out = federation::reconstruct(&ds.features, ds.labels.as_deref(), &spec, &proto)?;
    let client_sizes = out.partition.clients.iter().map(Vec::len).collect();
    Ok(Reconstruction { matrix: out.matrix, transcript: Some(out.transcript), client_sizes })
}

struct Clustered {
    assignment: ClusterAssignment,
    seconds: f64,
    oracle: Option<ClusterAssignment>,
}

fn cluster_all(d: &GlobalDistanceMatrix, oracle: Option<&GlobalDistanceMatrix>, configs: &[BackendConfig]) -> Result<Vec<Clustered>> {
    configs
        .par_iter()
        .map(|c| {
            let t = Instant::now();
            let assignment = cluster(d, c)?;
            let seconds = t.elapsed().as_secs_f64();
            let oracle = oracle.map(|o| cluster(o, c)).transpose()?;
            Ok(Clustered { assignment, seconds, oracle })
        })
        .collect()
}

fn score(labels: &[i64], truth: Option<&[usize]>) -> Result<(Option<f64>, Option<f64>)> {
    match truth {
        Some(t) => Ok((Some(kappa(labels, t)?), Some(nmi(labels, t, NmiNorm::Geometric)?))),
        None => Ok((None, None)),
    }
}

/// Executes a full run and writes its directory. Configuration problems
/// surface before any protocol message is produced.
pub fn run(cfg: &ExperimentConfig) -> Result<(ResultRecord, Timings)> {
    let start = Instant::now();
    let ds = cfg.load_dataset()?;
    let classes = ds.num_classes();
    let scheme = cfg.scheme(classes)?;
    federation::preflight(&ds.features, &scheme)?;
    let configs = cfg.backend_configs(classes)?;
    if cfg.replay.is_some() && !cfg.sweep_p.is_empty() {
        return Err(Error::Config("--replay decodes one recorded run and cannot be combined with --sweep-p".into()));
    }
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;

    let modes: Vec<Option<f64>> = if cfg.sweep_p.is_empty() { vec![None] } else { cfg.sweep_p.iter().map(|&p| Some(p)).collect() };
    let oracle = real_oracle(&ds.features);
    let mut runs = Vec::new();
    let mut timings = Timings::default();
    for sweep in modes {
        let mode = sweep.map_or(cfg.partition, PartitionMode::LabelSkew);
        let tag = sweep.map(|p| format!("p{p}"));
        info!("running protocol, partition {mode:?}");
        let rec = obtain_matrix(cfg, &ds, &scheme, mode)?;
        if let (Some(path), Some(t)) = (&cfg.save_transcript, &rec.transcript) {
            t.save(&tag.as_ref().map_or_else(|| path.clone(), |tag| tagged(path, tag)))?;
        }
        if let Some(path) = &cfg.dump_matrix {
            rec.matrix.dump(&tag.as_ref().map_or_else(|| path.clone(), |tag| tagged(path, tag)))?;
        }
        let clustered = cluster_all(&rec.matrix, cfg.compare_oracle.then_some(&oracle), &configs)?;
        let mut backends = Vec::new();
        let mut clustering_s = BTreeMap::new();
        for (c, res) in configs.iter().zip(clustered) {
            let prefix = tag.as_ref().map_or_else(String::new, |t| format!("{t}_"));
            let json = format!("assign_{prefix}{}.json", c.backend);
            let csv = format!("assign_{prefix}{}.csv", c.backend);
            res.assignment.write_json(&cfg.out.join(&json))?;
            res.assignment.write_csv(&cfg.out.join(&csv))?;
            let (kp, nm) = score(&res.assignment.labels, ds.labels.as_deref())?;
            let (okp, onm) = match &res.oracle {
                Some(o) => score(&o.labels, ds.labels.as_deref())?,
                None => (None, None),
            };
            clustering_s.insert(c.backend.name().to_string(), res.seconds);
            backends.push(BackendRecord {
                backend: c.backend,
                config: c.clone(),
                clusters: res.assignment.k,
                kappa: kp,
                nmi: nm,
                objective: res.assignment.objective,
                iterations: res.assignment.iterations,
                assignment_json: json,
                assignment_csv: csv,
                oracle_kappa: okp,
                oracle_nmi: onm,
                matches_oracle: res.oracle.as_ref().map(|o| o.labels == res.assignment.labels),
            });
        }
        timings.runs.push(RunTimings {
            partition: cfg.replay.is_none().then_some(mode),
            protocol: rec.transcript.as_ref().map(|t| t.timings).unwrap_or_default(),
            clustering_s,
        });
        runs.push(RunRecord {
            partition: cfg.replay.is_none().then_some(mode),
            client_sizes: rec.client_sizes,
            rmse: rmse(&rec.matrix, &oracle)?,
            max_abs_error: max_abs_error(&rec.matrix, &oracle),
            backends,
        });
    }
    if !cfg.sweep_p.is_empty() {
        std::fs::write(cfg.out.join("sweep_p.csv"), sweep_p_csv(&cfg.sweep_p, &runs))?;
    }
    let mut feasibility = Vec::new();
    if cfg.sweep_feasibility {
        let t = Instant::now();
        feasibility = feasibility_sweep(cfg, &ds, &oracle)?;
        timings.feasibility_s = t.elapsed().as_secs_f64();
        std::fs::write(cfg.out.join("sweep_feasibility.csv"), feasibility_csv(&feasibility))?;
    }
    let record = ResultRecord {
        config: cfg.clone(),
        dataset: DatasetInfo {
            name: ds.name.clone(),
            n: ds.n(),
            d: ds.dim(),
            classes,
            normalize: cfg.normalize.unwrap_or(if cfg.dataset == "iris" { Normalization::Unit } else { Normalization::None }),
        },
        scheme: SchemeInfo::of(&scheme),
        runs,
        feasibility,
    };
    write_json(&cfg.out.join("metrics.json"), &record)?;
    timings.total_s = start.elapsed().as_secs_f64();
    write_json(&cfg.out.join("timings.json"), &timings)?;
    Ok((record, timings))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn sweep_p_csv(ps: &[f64], runs: &[RunRecord]) -> String {
    let mut out = String::from("p,rmse");
    for b in runs.first().map(|r| r.backends.as_slice()).unwrap_or_default() {
        let _ = write!(out, ",{0}_kappa,{0}_nmi", b.backend);
    }
    out.push('\n');
    for (p, r) in ps.iter().zip(runs) {
        let _ = write!(out, "{p},{}", r.rmse);
        for b in &r.backends {
            let _ = write!(out, ",{},{}", fmt_opt(b.kappa), fmt_opt(b.nmi));
        }
        out.push('\n');
    }
    out
}

fn feasibility_csv(cells: &[FeasibilityCell]) -> String {
    let mut out = String::from("m,l,t,threshold,feasible,rmse,max_abs_error\n");
    for c in cells {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", c.m, c.l, c.t, c.threshold, c.feasible, fmt_opt(c.rmse), fmt_opt(c.max_abs_error));
    }
    out
}

/// RMSE over the grid m in 3..=15, l and t in 1..=4. Cells below the
/// decoding threshold are refused before any encoding. Reconstruction does
/// not depend on the partition, so the grid uses an even IID split.
pub fn feasibility_sweep(cfg: &ExperimentConfig, ds: &Dataset, oracle: &GlobalDistanceMatrix) -> Result<Vec<FeasibilityCell>> {
    let params = FieldParams::new(cfg.p, cfg.q)?;
    let grid: Vec<(usize, usize, usize)> =
        (3..=15).flat_map(|m| (1..=4).flat_map(move |l| (1..=4).map(move |t| (m, l, t)))).collect();
    grid.into_par_iter()
        .map(|(m, l, t)| {
            let mut cell = FeasibilityCell { m, l, t, threshold: threshold(l, t), feasible: false, rmse: None, max_abs_error: None };
            let scheme = match CodingScheme::new(params, m, l, t) {
                Ok(s) => s,
                Err(Error::InfeasibleScheme { .. }) => return Ok(cell),
                Err(e) => return Err(e),
            };
            cell.feasible = true;
            let spec = PartitionSpec { mode: PartitionMode::EvenIid, m, seed: cfg.seed };
            let proto = ProtocolConfig { scheme, noise: cfg.noise_mode(), dequant: cfg.dequant };
            let out = federation::reconstruct(&ds.features, None, &spec, &proto)?;
            cell.rmse = Some(rmse(&out.matrix, oracle)?);
            cell.max_abs_error = Some(max_abs_error(&out.matrix, oracle));
            Ok(cell)
        })
        .collect()
}

/// Protocol-only run: the matrix, optionally dumped and its transcript saved.
pub fn reconstruct_only(cfg: &ExperimentConfig) -> Result<(GlobalDistanceMatrix, f64, PhaseTimings)> {
    let ds = cfg.load_dataset()?;
    let scheme = cfg.scheme(ds.num_classes())?;
    federation::preflight(&ds.features, &scheme)?;
    let rec = obtain_matrix(cfg, &ds, &scheme, cfg.partition)?;
    if let (Some(path), Some(t)) = (&cfg.save_transcript, &rec.transcript) {
        t.save(path)?;
    }
    if let Some(path) = &cfg.dump_matrix {
        rec.matrix.dump(path)?;
    }
    let err = rmse(&rec.matrix, &real_oracle(&ds.features))?;
    Ok((rec.matrix, err, rec.transcript.map(|t| t.timings).unwrap_or_default()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub ls: Vec<usize>,
    pub t: usize,
    pub m: usize,
    pub d: usize,
    pub p: u64,
    pub q: u32,
    pub seed: u64,
    /// Each cell runs this many times and keeps the fastest time per phase.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let params = FieldParams::default();
        BenchConfig { ns: vec![2000], ls: vec![2, 4, 8], t: 2, m: 19, d: 64, p: params.p(), q: params.q(), seed: 0, repeats: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub l: usize,
    pub t: usize,
    pub encode_s: f64,
    pub client_distance_s: f64,
    pub decode_s: f64,
    pub total_s: f64,
}

pub const BENCH_CSV_HEADER: &str = "n,d,m,l,t,encode_s,client_distance_s,decode_s,total_s";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.n, self.d, self.m, self.l, self.t, self.encode_s, self.client_distance_s, self.decode_s, self.total_s
        )
    }
}

/// Per-phase wall-clock times over the `(n, l)` grid on uniform data.
pub fn bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let params = FieldParams::new(cfg.p, cfg.q)?;
    let schemes = cfg.ls.iter().map(|&l| CodingScheme::new(params, cfg.m, l, cfg.t)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let ds = data::uniform(n, cfg.d, cfg.seed);
        federation::preflight(&ds.features, &schemes[0])?;
        for scheme in &schemes {
            let spec = PartitionSpec { mode: PartitionMode::EvenIid, m: cfg.m, seed: cfg.seed };
            let proto = ProtocolConfig { scheme: scheme.clone(), noise: NoiseMode::Seeded(cfg.seed), dequant: DequantExponent::TwoQ };
            let mut best: Option<PhaseTimings> = None;
            for _ in 0..cfg.repeats.max(1) {
                let t = federation::reconstruct(&ds.features, None, &spec, &proto)?.transcript.timings;
                best = Some(match best {
                    None => t,
                    Some(b) => PhaseTimings {
                        encode_s: b.encode_s.min(t.encode_s),
                        client_distance_s: b.client_distance_s.min(t.client_distance_s),
                        decode_s: b.decode_s.min(t.decode_s),
                        total_s: b.total_s.min(t.total_s),
                    },
                });
            }
            let b = best.unwrap();
            info!("bench n = {n}, l = {}: distance phase {:.3} s", scheme.l(), b.client_distance_s);
            rows.push(BenchRow {
                n,
                d: cfg.d,
                m: cfg.m,
                l: scheme.l(),
                t: cfg.t,
                encode_s: b.encode_s,
                client_distance_s: b.client_distance_s,
                decode_s: b.decode_s,
                total_s: b.total_s,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(out: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig { out: out.to_path_buf(), ..Default::default() };
        c.set("backends", "km,kmed,dbscan").unwrap();
        c
    }

    #[test]
    fn iris_defaults_fit_three_clients() {
        let c = ExperimentConfig::default();
        let s = c.scheme(Some(3)).unwrap();
        assert_eq!((s.m(), s.l(), s.t()), (3, 1, 1));
        let s = c.scheme(Some(10)).unwrap();
        assert_eq!((s.m(), s.l(), s.t()), (10, 2, 2));
    }

    #[test]
    fn explicit_infeasible_scheme_is_refused() {
        let mut c = ExperimentConfig::default();
        c.set("m", "4").unwrap();
        c.set("l", "2").unwrap();
        assert!(matches!(c.scheme(Some(3)), Err(Error::InfeasibleScheme { .. })));
    }

    #[test]
    fn backend_setting_precedence() {
        let mut c = ExperimentConfig::default();
        c.apply_file(&ConfigFile::parse("[nmf]\nmax_iter = 10\n[sc]\nsigma = knn:5").unwrap()).unwrap();
        let cfgs = c.backend_configs(Some(3)).unwrap();
        assert_eq!(cfgs[3].max_iter, 10);
        assert_eq!(cfgs[0].sigma, crate::clustering::SigmaMode::KnnMedian(5));
        // A later all-backend value wins over the file's specific one.
        c.set_backend("all", "max_iter", "20").unwrap();
        assert!(c.backend_configs(Some(3)).unwrap().iter().all(|b| b.max_iter == 20));
        assert!(c.set_backend("sc", "bogus", "1").is_err());
        assert!(c.set_backend("xx", "k", "1").is_err());
        assert!(c.apply_file(&ConfigFile::parse("nonsense = 1").unwrap()).is_err());
    }

    #[test]
    fn unlabeled_data_needs_k() {
        let c = ExperimentConfig::default();
        assert!(c.backend_configs(None).is_err());
    }

    #[test]
    fn run_is_deterministic_and_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let a = quick(dir.path());
        let (ra, _) = run(&a).unwrap();
        let first = std::fs::read(a.out.join("metrics.json")).unwrap();
        run(&a).unwrap();
        assert_eq!(first, std::fs::read(a.out.join("metrics.json")).unwrap());
        assert!(ra.runs[0].rmse < 1e-3);
        for f in ["config.json", "timings.json", "assign_km.json", "assign_km.csv", "assign_dbscan.csv"] {
            assert!(a.out.join(f).exists(), "{f}");
        }
        let back = ClusterAssignment::read_json(&a.out.join("assign_km.json")).unwrap();
        assert_eq!(back.labels.len(), 150);
    }

    #[test]
    fn sweep_p_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = quick(dir.path());
        c.set("backends", "km").unwrap();
        c.set("sweep_p", "0,1").unwrap();
        let (r, _) = run(&c).unwrap();
        assert_eq!(r.runs.len(), 2);
        let csv = std::fs::read_to_string(dir.path().join("sweep_p.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "p,rmse,km_kappa,km_nmi");
        assert_eq!(lines.len(), 3);
        assert!(dir.path().join("assign_p1_km.csv").exists());
    }

    #[test]
    fn tagged_paths() {
        assert_eq!(tagged(Path::new("x/d.csv"), "p0.5"), PathBuf::from("x/d_p0.5.csv"));
        assert_eq!(tagged(Path::new("d"), "p1"), PathBuf::from("d_p1"));
    }
}
