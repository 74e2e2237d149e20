//! Deterministic simulation of the one-shot protocol.
//!
//! Clients quantize and encode their local samples, deliver one batch of
//! shares to every client (themselves included), compute encoded squared
//! distances on the `n` shares they end up holding, and upload them. The
//! server interpolates the reports into the global distance matrix.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{assemble, GlobalDistanceMatrix};
use crate::error::{Error, Result};
use crate::field::FieldElement;
use crate::lcc::{decode_reports, encode, segment, CodingScheme, Decoder, DistanceReport, NoiseMode, Share, ShareMatrix};
use crate::quantize::{check_feasibility, real_to_field, DataStats, DequantExponent};
use crate::wire::{self, BlockKind, WireHeader};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum PartitionMode {
    /// Fraction `p` of each client's data comes from its designated class.
    LabelSkew(f64),
    /// Per-class client proportions drawn from a symmetric Dirichlet.
    Dirichlet(f64),
    EvenIid,
}

impl std::str::FromStr for PartitionMode {
    type Err = Error;

    /// `iid`, `skew:P` or `dirichlet:ALPHA`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("partition must be iid, skew:P or dirichlet:ALPHA, got '{s}'"));
        let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
        let value = arg.map(|a| a.parse::<f64>().map_err(|_| bad())).transpose()?;
        match (kind, value) {
            ("iid", None) => Ok(PartitionMode::EvenIid),
            ("skew", Some(p)) => Ok(PartitionMode::LabelSkew(p)),
            ("dirichlet", Some(a)) => Ok(PartitionMode::Dirichlet(a)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub m: usize,
    pub seed: u64,
}

/// Global sample indices held by each client, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub clients: Vec<Vec<usize>>,
}

impl Partition {
    pub fn m(&self) -> usize {
        self.clients.len()
    }

    pub fn n(&self) -> usize {
        self.clients.iter().map(Vec::len).sum()
    }

    /// Owner of every sample.
    pub fn owners(&self) -> Vec<usize> {
        let mut owner = vec![0; self.n()];
        for (j, c) in self.clients.iter().enumerate() {
            for &i in c {
                owner[i] = j;
            }
        }
        owner
    }
}

pub fn partition(n: usize, labels: Option<&[usize]>, spec: &PartitionSpec) -> Result<Partition> {
    let m = spec.m;
    if m == 0 || m > n {
        return Err(Error::InvalidPartition(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: l.len() });
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut owner = vec![usize::MAX; n];
    match spec.mode {
        PartitionMode::EvenIid => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            for (pos, i) in idx.into_iter().enumerate() {
                owner[i] = pos % m;
            }
        }
        PartitionMode::LabelSkew(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidPartition(format!("skew level must lie in [0, 1], got {p}")));
            }
            let labels = labels.ok_or_else(|| Error::InvalidPartition("label skew needs labels".into()))?;
            let k = labels.iter().max().map_or(1, |&c| c + 1);
            // Client j's designated class is j mod k.
            let mut designated: Vec<Vec<usize>> = vec![Vec::new(); k];
            for j in 0..m {
                designated[j % k].push(j);
            }
            let mut skewed: Vec<Vec<usize>> = vec![Vec::new(); k];
            let mut rest = Vec::new();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            for i in idx {
                let c = labels[i];
                if !designated[c].is_empty() && rng.random::<f64>() < p {
                    skewed[c].push(i);
                } else {
                    rest.push(i);
                }
            }
            for (c, members) in skewed.iter().enumerate() {
                for (pos, &i) in members.iter().enumerate() {
                    owner[i] = designated[c][pos % designated[c].len()];
                }
            }
            for (pos, i) in rest.into_iter().enumerate() {
                owner[i] = pos % m;
            }
        }
        PartitionMode::Dirichlet(alpha) => {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::InvalidPartition(format!("Dirichlet concentration must be positive, got {alpha}")));
            }
            let labels = labels.ok_or_else(|| Error::InvalidPartition("Dirichlet partition needs labels".into()))?;
            let k = labels.iter().max().map_or(1, |&c| c + 1);
            let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidPartition(e.to_string()))?;
            for c in 0..k {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                members.shuffle(&mut rng);
                let mut w: Vec<f64> = (0..m).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = w.iter().sum();
                if total > 0.0 && total.is_finite() {
                    w.iter_mut().for_each(|x| *x /= total);
                } else {
                    // Every draw underflowed: all mass on one client.
                    let j = rng.random_range(0..m);
                    w = (0..m).map(|x| if x == j { 1.0 } else { 0.0 }).collect();
                }
                let len = members.len();
                let mut start = 0;
                let mut cum = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    cum += wj;
                    let end = if j + 1 == m { len } else { ((cum * len as f64).round() as usize).clamp(start, len) };
                    for &i in &members[start..end] {
                        owner[i] = j;
                    }
                    start = end;
                }
            }
        }
    }
    let mut clients = vec![Vec::new(); m];
    for (i, &j) in owner.iter().enumerate() {
        clients[j].push(i);
    }
    if let Some(client) = clients.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClient { client, m });
    }
    Ok(Partition { clients })
}

/// A protocol participant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    Client(usize),
    Server,
}

impl Party {
    fn to_u32(self) -> u32 {
        match self {
            Party::Client(j) => j as u32,
            Party::Server => u32::MAX,
        }
    }

    fn from_u32(v: u32) -> Self {
        if v == u32::MAX {
            Party::Server
        } else {
            Party::Client(v as usize)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    ShareDelivery,
    DistanceReport,
}

/// A serialized block in flight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub sender: Party,
    pub receiver: Party,
    pub payload: Arc<[u8]>,
}

/// Delivery seam between participants.
pub trait Transport {
    fn send(&mut self, msg: ProtocolMessage) -> Result<()>;
    /// Removes and returns every pending message for `receiver`, in send order.
    fn receive(&mut self, receiver: Party) -> Vec<ProtocolMessage>;
}

/// Ordered, reliable, synchronous delivery within one process.
#[derive(Debug, Default)]
pub struct InProcessTransport {
    queues: BTreeMap<Party, Vec<ProtocolMessage>>,
}

impl Transport for InProcessTransport {
    fn send(&mut self, msg: ProtocolMessage) -> Result<()> {
        self.queues.entry(msg.receiver).or_default().push(msg);
        Ok(())
    }

    fn receive(&mut self, receiver: Party) -> Vec<ProtocolMessage> {
        self.queues.remove(&receiver).unwrap_or_default()
    }
}

/// Client-side state during a run.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    pub local: Vec<usize>,
    pub shares: Option<ShareMatrix>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub encode_s: f64,
    pub client_distance_s: f64,
    pub decode_s: f64,
    pub total_s: f64,
}

/// Everything that crossed the wire in one run, plus phase timings and the
/// evaluation nodes needed to decode it again.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub alpha: Vec<u64>,
    pub beta: Vec<u64>,
    pub messages: Vec<ProtocolMessage>,
    pub timings: PhaseTimings,
}

const TRANSCRIPT_MAGIC: &[u8; 4] = b"LCTR";
const TRANSCRIPT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct TimingsSidecar {
    timings: PhaseTimings,
    messages: usize,
    share_deliveries: usize,
    distance_reports: usize,
}

impl Transcript {
    pub fn reports(&self) -> impl Iterator<Item = &ProtocolMessage> {
        self.messages.iter().filter(|m| m.kind == MessageKind::DistanceReport)
    }

    pub fn share_deliveries(&self) -> impl Iterator<Item = &ProtocolMessage> {
        self.messages.iter().filter(|m| m.kind == MessageKind::ShareDelivery)
    }

    /// Rebuilds the coding scheme from the nodes and the first block header.
    pub fn scheme(&self) -> Result<CodingScheme> {
        let first = self.messages.first().ok_or_else(|| Error::Wire("empty transcript".into()))?;
        let h = WireHeader::parse(&first.payload)?;
        CodingScheme::with_nodes(wire::header_params(&h)?, h.m as usize, h.l as usize, h.t as usize, &self.alpha, &self.beta)
    }

    /// Drops the report uploaded by `client`, as if it never arrived.
    pub fn without_report(&self, client: usize) -> Transcript {
        let mut t = self.clone();
        t.messages.retain(|m| !(m.kind == MessageKind::DistanceReport && m.sender == Party::Client(client)));
        t
    }

    /// Binary layout: magic "LCTR", version u16, reserved u16, node counts
    /// (u32 alpha, u32 beta), the nodes as u64, message count u64, then per
    /// message kind u8, sender u32, receiver u32 (u32::MAX for the server),
    /// payload length u64 and the payload block.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(TRANSCRIPT_MAGIC);
        out.extend_from_slice(&TRANSCRIPT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.alpha.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.beta.len() as u32).to_le_bytes());
        for v in self.alpha.iter().chain(&self.beta) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.messages.len() as u64).to_le_bytes());
        for m in &self.messages {
            out.push(match m.kind {
                MessageKind::ShareDelivery => 1,
                MessageKind::DistanceReport => 2,
            });
            out.extend_from_slice(&m.sender.to_u32().to_le_bytes());
            out.extend_from_slice(&m.receiver.to_u32().to_le_bytes());
            out.extend_from_slice(&(m.payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&m.payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |k: usize| -> Result<&[u8]> {
            let end = pos.checked_add(k).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Wire("truncated transcript".into()))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != TRANSCRIPT_MAGIC {
            return Err(Error::Wire("not a transcript file".into()));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != TRANSCRIPT_VERSION {
            return Err(Error::Wire(format!("unsupported transcript version {version}")));
        }
        take(2)?;
        let na = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let nb = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut nodes = Vec::with_capacity(na + nb);
        for _ in 0..na + nb {
            nodes.push(u64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        let beta = nodes.split_off(na);
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut messages = Vec::new();
        for _ in 0..count {
            let kind = match take(1)?[0] {
                1 => MessageKind::ShareDelivery,
                2 => MessageKind::DistanceReport,
                k => return Err(Error::Wire(format!("unknown message kind {k}"))),
            };
            let sender = Party::from_u32(u32::from_le_bytes(take(4)?.try_into().unwrap()));
            let receiver = Party::from_u32(u32::from_le_bytes(take(4)?.try_into().unwrap()));
            let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let payload = Arc::from(take(len)?);
            messages.push(ProtocolMessage { kind, sender, receiver, payload });
        }
        if pos != bytes.len() {
            return Err(Error::Wire("trailing bytes after transcript".into()));
        }
        Ok(Transcript { alpha: nodes, beta, messages, timings: PhaseTimings::default() })
    }

    /// `PATH.timings.json`.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".timings.json");
        PathBuf::from(s)
    }

    /// Writes the binary transcript and its JSON timings sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        let sidecar = TimingsSidecar {
            timings: self.timings,
            messages: self.messages.len(),
            share_deliveries: self.share_deliveries().count(),
            distance_reports: self.reports().count(),
        };
        std::fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Loads a transcript; the sidecar is optional.
    pub fn load(path: &Path) -> Result<Self> {
        let mut t = Self::from_bytes(&std::fs::read(path)?)?;
        let side = Self::sidecar_path(path);
        if side.exists() {
            let s: TimingsSidecar = serde_json::from_str(&std::fs::read_to_string(side)?)?;
            t.timings = s.timings;
        }
        Ok(t)
    }
}

#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub scheme: CodingScheme,
    pub noise: NoiseMode,
    pub dequant: DequantExponent,
}

#[derive(Clone, Debug)]
pub struct ProtocolOutput {
    pub matrix: GlobalDistanceMatrix,
    /// Decoded field distances, condensed upper triangle.
    pub decoded: Vec<FieldElement>,
    pub transcript: Transcript,
    pub partition: Partition,
}

/// Rejects a configuration before any message is produced.
pub fn preflight(rows: &[Vec<f64>], scheme: &CodingScheme) -> Result<()> {
    scheme.ensure_decodable()?;
    let d = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::Dataset(format!("sample {i} has {} features, expected {d}", r.len())));
    }
    check_feasibility(&DataStats::from_rows(rows), scheme.params())?;
    Ok(())
}

/// Runs sharing, client distance computation and server decoding.
pub fn reconstruct(rows: &[Vec<f64>], labels: Option<&[usize]>, spec: &PartitionSpec, cfg: &ProtocolConfig) -> Result<ProtocolOutput> {
    let scheme = &cfg.scheme;
    preflight(rows, scheme)?;
    if spec.m != scheme.m() {
        return Err(Error::Config(format!("partition has {} clients but the scheme has m = {}", spec.m, scheme.m())));
    }
    let partition = partition(rows.len(), labels, spec)?;
    let mut transport = InProcessTransport::default();
    run_phases(rows, &partition, cfg, &mut transport).map(|(matrix, decoded, transcript)| ProtocolOutput {
        matrix,
        decoded,
        transcript,
        partition,
    })
}

fn run_phases(
    rows: &[Vec<f64>],
    partition: &Partition,
    cfg: &ProtocolConfig,
    transport: &mut dyn Transport,
) -> Result<(GlobalDistanceMatrix, Vec<FieldElement>, Transcript)> {
    let scheme = &cfg.scheme;
    let params = scheme.params();
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let m = scheme.m();
    let width = scheme.segment_len(d);
    let mut clients: Vec<ClientState> =
        partition.clients.iter().enumerate().map(|(id, local)| ClientState { id, local: local.clone(), shares: None }).collect();
    let mut log = Vec::new();
    let start = Instant::now();

    // Sharing: each client encodes its own samples and batches shares per receiver.
    let t0 = Instant::now();
    let batches: Vec<Vec<ProtocolMessage>> = clients
        .par_iter()
        .map(|c| -> Result<Vec<ProtocolMessage>> {
            let mut per_receiver: Vec<Vec<Share>> = vec![Vec::with_capacity(c.local.len()); m];
            for &i in &c.local {
                let q = real_to_field(&rows[i], params)?;
                for share in encode(&segment(&q, scheme, i, cfg.noise), scheme)? {
                    per_receiver[share.owner_client].push(share);
                }
            }
            Ok(per_receiver
                .into_iter()
                .enumerate()
                .map(|(r, shares)| {
                    let header = WireHeader::for_scheme(BlockKind::Shares, scheme, n, d, r);
                    ProtocolMessage {
                        kind: MessageKind::ShareDelivery,
                        sender: Party::Client(c.id),
                        receiver: Party::Client(r),
                        payload: wire::encode_shares(&header, width, &shares).into(),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    for msg in batches.into_iter().flatten() {
        log.push(msg.clone());
        transport.send(msg)?;
    }
    let encode_s = t0.elapsed().as_secs_f64();

    // Each client assembles its n shares and computes encoded distances.
    let t1 = Instant::now();
    let inboxes: Vec<Vec<ProtocolMessage>> = clients.iter().map(|c| transport.receive(Party::Client(c.id))).collect();
    let reports: Vec<(ShareMatrix, ProtocolMessage)> = clients
        .par_iter()
        .zip(inboxes)
        .map(|(c, inbox)| -> Result<(ShareMatrix, ProtocolMessage)> {
            let mut shares = Vec::with_capacity(n);
            for msg in inbox {
                let (h, s) = wire::decode_shares(&msg.payload)?;
                h.check_scheme(scheme)?;
                shares.extend(s);
            }
            let matrix = ShareMatrix::from_shares(c.id, n, width, shares)?;
            let report = matrix.pairwise_distances(params);
            let header = WireHeader::for_scheme(BlockKind::Report, scheme, n, d, c.id);
            let msg = ProtocolMessage {
                kind: MessageKind::DistanceReport,
                sender: Party::Client(c.id),
                receiver: Party::Server,
                payload: wire::encode_report(&header, &report).into(),
            };
            Ok((matrix, msg))
        })
        .collect::<Result<_>>()?;
    for (c, (matrix, msg)) in clients.iter_mut().zip(reports) {
        c.shares = Some(matrix);
        log.push(msg.clone());
        transport.send(msg)?;
    }
    let client_distance_s = t1.elapsed().as_secs_f64();

    // Server decode.
    let t2 = Instant::now();
    let uploads = transport.receive(Party::Server);
    let (decoded, matrix) = server_decode(&uploads, scheme, cfg.dequant)?;
    let decode_s = t2.elapsed().as_secs_f64();

    let transcript = Transcript {
        alpha: scheme.alpha().iter().map(|v| v.value()).collect(),
        beta: scheme.beta().iter().map(|v| v.value()).collect(),
        messages: log,
        timings: PhaseTimings { encode_s, client_distance_s, decode_s, total_s: start.elapsed().as_secs_f64() },
    };
    Ok((matrix, decoded, transcript))
}

/// Decodes whatever reports arrived, provided at least `2l + 2t - 1` distinct
/// clients are represented.
fn server_decode(
    uploads: &[ProtocolMessage],
    scheme: &CodingScheme,
    dequant: DequantExponent,
) -> Result<(Vec<FieldElement>, GlobalDistanceMatrix)> {
    let mut by_client: BTreeMap<usize, DistanceReport> = BTreeMap::new();
    let mut n = None;
    for msg in uploads.iter().filter(|m| m.kind == MessageKind::DistanceReport) {
        let (h, report) = wire::decode_report(&msg.payload)?;
        h.check_scheme(scheme)?;
        if msg.sender != Party::Client(report.client) || report.client >= scheme.m() {
            return Err(Error::Wire(format!("report from {:?} claims client {}", msg.sender, report.client)));
        }
        if *n.get_or_insert(report.n) != report.n {
            return Err(Error::Wire("reports disagree on n".into()));
        }
        by_client.insert(report.client, report);
    }
    let required = scheme.threshold();
    if by_client.len() < required {
        let missing = (0..scheme.m()).filter(|j| !by_client.contains_key(j)).collect();
        return Err(Error::IncompleteTranscript { present: by_client.len(), required, missing });
    }
    let clients: Vec<usize> = by_client.keys().copied().collect();
    let decoder = Decoder::new(scheme, &clients)?;
    let refs: Vec<&DistanceReport> = by_client.values().collect();
    let decoded = decode_reports(&decoder, &refs)?;
    let matrix = assemble(n.unwrap_or(0), &decoded, scheme.params(), dequant)?;
    Ok((decoded, matrix))
}

/// Re-runs the server decode from a recorded transcript.
pub fn replay_decode(transcript: &Transcript, scheme: &CodingScheme, dequant: DequantExponent) -> Result<GlobalDistanceMatrix> {
    let reports: Vec<ProtocolMessage> = transcript.reports().cloned().collect();
    server_decode(&reports, scheme, dequant).map(|(_, m)| m)
}
