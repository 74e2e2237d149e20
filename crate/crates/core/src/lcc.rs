//! Lagrange coded sharing of quantized samples and decoding of the squared
//! distances computed on the shares.
//!
//! A sample is cut into `l` segments, padded with `t` uniformly random
//! segments, and the unique degree `l + t - 1` polynomial through
//! `(alpha_o, segment_o)` is evaluated at each client's node `beta_j`. The
//! squared distance between two encoded samples is then a degree
//! `2(l + t - 1)` polynomial in the evaluation point, so any
//! `2l + 2t - 1` client reports pin it down, and summing it over the data
//! nodes `alpha_1..alpha_l` gives the field squared distance of the samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{decode_weights, FieldElement, FieldParams, InterpolationNodes};
use crate::quantize::QuantizedSample;

/// Source of the random noise segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// ChaCha20 keyed by the run seed, with one stream per global sample index.
    Seeded(u64),
    /// Fresh OS-seeded randomness per sample, as an independent data owner would draw.
    Entropy,
}

/// The public agreement: client count, segment and noise counts, and the
/// evaluation nodes.
#[derive(Clone, Debug)]
pub struct CodingScheme {
    params: FieldParams,
    m: usize,
    l: usize,
    t: usize,
    alpha_nodes: InterpolationNodes,
    beta_nodes: InterpolationNodes,
    /// `encode[j][o] = L_o(beta_j)` over the alpha nodes.
    encode: Vec<Vec<FieldElement>>,
    audit: bool,
}

/// `2l + 2t - 1`, the number of evaluations that determine a squared distance.
pub fn threshold(l: usize, t: usize) -> usize {
    (2 * l + 2 * t).saturating_sub(1)
}

/// Alpha nodes 1, 3, 5, ... and beta nodes 0, 2, 4, ...
pub fn default_nodes(m: usize, l: usize, t: usize) -> (Vec<u64>, Vec<u64>) {
    let alpha = (0..l + t).map(|o| 2 * o as u64 + 1).collect();
    let beta = (0..m).map(|j| 2 * j as u64).collect();
    (alpha, beta)
}

impl CodingScheme {
    /// Scheme with the default odd/even nodes.
    pub fn new(params: FieldParams, m: usize, l: usize, t: usize) -> Result<Self> {
        let (alpha, beta) = default_nodes(m, l, t);
        Self::with_nodes(params, m, l, t, &alpha, &beta)
    }

    pub fn with_nodes(params: FieldParams, m: usize, l: usize, t: usize, alpha: &[u64], beta: &[u64]) -> Result<Self> {
        Self::build(params, m, l, t, alpha, beta, false)
    }

    /// Like [`CodingScheme::with_nodes`] but allows `m < 2l + 2t - 1`.
    /// Such schemes encode normally and refuse to decode.
    pub fn audit(params: FieldParams, m: usize, l: usize, t: usize, alpha: &[u64], beta: &[u64]) -> Result<Self> {
        Self::build(params, m, l, t, alpha, beta, true)
    }

    fn build(
        params: FieldParams,
        m: usize,
        l: usize,
        t: usize,
        alpha: &[u64],
        beta: &[u64],
        audit: bool,
    ) -> Result<Self> {
        if l == 0 || m == 0 {
            return Err(Error::InvalidScheme(format!("need l >= 1 and m >= 1 (l = {l}, m = {m})")));
        }
        if alpha.len() != l + t {
            return Err(Error::InvalidScheme(format!("expected {} alpha nodes, got {}", l + t, alpha.len())));
        }
        if beta.len() != m {
            return Err(Error::InvalidScheme(format!("expected {m} beta nodes, got {}", beta.len())));
        }
        if !audit && m < threshold(l, t) {
            return Err(Error::InfeasibleScheme { m, l, t, required: threshold(l, t) });
        }
        let to_elems = |xs: &[u64]| xs.iter().map(|&x| params.element(x)).collect::<Result<Vec<_>>>();
        let alpha_nodes = InterpolationNodes::new(&params, to_elems(alpha)?)?;
        let beta_nodes = InterpolationNodes::new(&params, to_elems(beta)?)?;
        if let Some(b) = beta_nodes.xs().iter().find(|b| alpha_nodes.xs().contains(b)) {
            return Err(Error::InvalidScheme(format!("node {b} appears in both alpha and beta")));
        }
        let encode = beta_nodes.xs().iter().map(|&b| alpha_nodes.basis_at(&params, b)).collect();
        Ok(CodingScheme { params, m, l, t, alpha_nodes, beta_nodes, encode, audit })
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn alpha(&self) -> &[FieldElement] {
        self.alpha_nodes.xs()
    }
    pub fn beta(&self) -> &[FieldElement] {
        self.beta_nodes.xs()
    }
    pub fn is_audit(&self) -> bool {
        self.audit
    }
    pub fn threshold(&self) -> usize {
        threshold(self.l, self.t)
    }
    pub fn is_decodable(&self) -> bool {
        self.m >= self.threshold()
    }

    pub fn ensure_decodable(&self) -> Result<()> {
        if self.is_decodable() {
            Ok(())
        } else {
            Err(Error::InfeasibleScheme { m: self.m, l: self.l, t: self.t, required: self.threshold() })
        }
    }

    /// Segment width `ceil(d / l)`.
    pub fn segment_len(&self, d: usize) -> usize {
        d.div_ceil(self.l)
    }

    /// Row `j` of the encoding matrix: the alpha-basis values at `beta_j`.
    pub fn encoding_row(&self, j: usize) -> &[FieldElement] {
        &self.encode[j]
    }

    /// Decoder using every client's report.
    pub fn decoder(&self) -> Result<Decoder> {
        Decoder::new(self, &(0..self.m).collect::<Vec<_>>())
    }
}

/// Precomputed weights turning a set of client reports into one decoded
/// distance with a single dot product.
#[derive(Clone, Debug)]
pub struct Decoder {
    params: FieldParams,
    clients: Vec<usize>,
    weights: Vec<FieldElement>,
}

impl Decoder {
    /// Weights for the reports of `clients` (indices into the beta nodes).
    /// Needs at least `2l + 2t - 1` distinct clients.
    pub fn new(scheme: &CodingScheme, clients: &[usize]) -> Result<Self> {
        let mut sorted = clients.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != clients.len() {
            return Err(Error::InvalidScheme("duplicate client in decoder set".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&j| j >= scheme.m) {
            return Err(Error::InvalidScheme(format!("client {bad} out of range for m = {}", scheme.m)));
        }
        if clients.len() < scheme.threshold() {
            return Err(Error::InfeasibleScheme {
                m: clients.len(),
                l: scheme.l,
                t: scheme.t,
                required: scheme.threshold(),
            });
        }
        let xs = clients.iter().map(|&j| scheme.beta()[j]).collect();
        let nodes = InterpolationNodes::new(&scheme.params, xs)?;
        let weights = decode_weights(&scheme.params, &nodes, &scheme.alpha()[..scheme.l])?;
        Ok(Decoder { params: scheme.params, clients: clients.to_vec(), weights })
    }

    pub fn clients(&self) -> &[usize] {
        &self.clients
    }

    pub fn weights(&self) -> &[FieldElement] {
        &self.weights
    }

    /// `reports[k]` must come from client `clients()[k]`.
    #[inline]
    pub fn decode(&self, reports: &[FieldElement]) -> FieldElement {
        debug_assert_eq!(reports.len(), self.weights.len());
        self.params.dot(&self.weights, reports)
    }
}

/// A sample cut into `l` data segments plus `t` noise segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentedSample {
    pub sample_index: usize,
    pub segments: Vec<Vec<FieldElement>>,
    pub noise: Vec<Vec<FieldElement>>,
    pub pad_len: usize,
}

impl SegmentedSample {
    /// The data coordinates with padding removed.
    pub fn data(&self) -> Vec<FieldElement> {
        let mut out: Vec<FieldElement> = self.segments.concat();
        out.truncate(out.len() - self.pad_len);
        out
    }
}

/// Splits `sample` into segments and draws the noise from `rng`.
pub fn segment_with_rng<R: Rng + ?Sized>(
    sample: &QuantizedSample,
    scheme: &CodingScheme,
    sample_index: usize,
    rng: &mut R,
) -> SegmentedSample {
    let width = scheme.segment_len(sample.dim());
    let pad_len = width * scheme.l - sample.dim();
    let mut padded = sample.coords.clone();
    padded.resize(width * scheme.l, FieldElement::ZERO);
    let segments = if width == 0 {
        vec![Vec::new(); scheme.l]
    } else {
        padded.chunks(width).map(<[_]>::to_vec).collect()
    };
    let p = scheme.params.p();
    let noise = (0..scheme.t)
        .map(|_| (0..width).map(|_| FieldElement(rng.random_range(0..p))).collect())
        .collect();
    SegmentedSample { sample_index, segments, noise, pad_len }
}

/// Deterministic RNG for the noise of one sample.
pub fn sample_rng(seed: u64, sample_index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(sample_index as u64);
    rng
}

pub fn segment(sample: &QuantizedSample, scheme: &CodingScheme, sample_index: usize, noise: NoiseMode) -> SegmentedSample {
    match noise {
        NoiseMode::Seeded(seed) => segment_with_rng(sample, scheme, sample_index, &mut sample_rng(seed, sample_index)),
        NoiseMode::Entropy => segment_with_rng(sample, scheme, sample_index, &mut rand::rng()),
    }
}

/// One client's share of one sample: `f_i(beta_j)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Share {
    pub owner_client: usize,
    pub sample_index: usize,
    pub payload: Vec<FieldElement>,
}

/// Evaluates the sample polynomial at every beta node; entry `j` goes to client `j`.
pub fn encode(seg: &SegmentedSample, scheme: &CodingScheme) -> Result<Vec<Share>> {
    if seg.segments.len() != scheme.l || seg.noise.len() != scheme.t {
        return Err(Error::InvalidScheme(format!(
            "sample has {} data and {} noise segments, scheme expects {} and {}",
            seg.segments.len(),
            seg.noise.len(),
            scheme.l,
            scheme.t
        )));
    }
    let width = seg.segments[0].len();
    if seg.segments.iter().chain(&seg.noise).any(|s| s.len() != width) {
        return Err(Error::InvalidScheme("segments differ in length".into()));
    }
    let all: Vec<&Vec<FieldElement>> = seg.segments.iter().chain(&seg.noise).collect();
    let p = &scheme.params;
    Ok((0..scheme.m)
        .map(|j| {
            let row = &scheme.encode[j];
            let mut payload = vec![FieldElement::ZERO; width];
            let mut column = Vec::with_capacity(all.len());
            for (k, out) in payload.iter_mut().enumerate() {
                column.clear();
                column.extend(all.iter().map(|s| s[k]));
                *out = p.dot(row, &column);
            }
            Share { owner_client: j, sample_index: seg.sample_index, payload }
        })
        .collect())
}

/// Squared distance between two payloads held by the same client.
pub fn encoded_distance(a: &[FieldElement], b: &[FieldElement], params: &FieldParams) -> Result<FieldElement> {
    params.squared_distance(a, b)
}

/// Recovers the field squared distance of two samples from all `m` client
/// reports (ordered by client index).
pub fn decode_distance(reports: &[FieldElement], scheme: &CodingScheme) -> Result<FieldElement> {
    scheme.ensure_decodable()?;
    if reports.len() != scheme.m {
        return Err(Error::LengthMismatch { expected: scheme.m, got: reports.len() });
    }
    for r in reports {
        scheme.params.element(r.value())?;
    }
    Ok(scheme.decoder()?.decode(reports))
}

/// All `n` shares held by one client, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareMatrix {
    pub client: usize,
    pub n: usize,
    pub width: usize,
    pub data: Vec<FieldElement>,
}

impl ShareMatrix {
    /// Assembles a client's matrix from shares it received, which may
    /// arrive in any order.
    pub fn from_shares(client: usize, n: usize, width: usize, shares: impl IntoIterator<Item = Share>) -> Result<Self> {
        let mut data = vec![FieldElement::ZERO; n * width];
        let mut seen = vec![false; n];
        let mut got = 0;
        for s in shares {
            if s.owner_client != client || s.sample_index >= n || s.payload.len() != width || seen[s.sample_index] {
                return Err(Error::Wire(format!(
                    "client {client}: unexpected share for sample {} (owner {}, width {})",
                    s.sample_index,
                    s.owner_client,
                    s.payload.len()
                )));
            }
            seen[s.sample_index] = true;
            got += 1;
            data[s.sample_index * width..(s.sample_index + 1) * width].copy_from_slice(&s.payload);
        }
        if got != n {
            return Err(Error::IncompleteShares { client, expected: n, got });
        }
        Ok(ShareMatrix { client, n, width, data })
    }

    pub fn row(&self, i: usize) -> &[FieldElement] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    /// The client's distance report: encoded distances of all pairs `i < i'`.
    pub fn pairwise_distances(&self, params: &FieldParams) -> DistanceReport {
        let mut values = Vec::with_capacity(condensed_len(self.n));
        for i in 0..self.n {
            let a = self.row(i);
            for k in i + 1..self.n {
                values.push(params.squared_distance_unchecked(a, self.row(k)));
            }
        }
        DistanceReport { client: self.client, n: self.n, values }
    }
}

/// Number of unordered pairs among `n` items.
pub fn condensed_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of pair `(i, k)`, `i < k`, in a condensed upper triangle.
#[inline]
pub fn condensed_index(n: usize, i: usize, k: usize) -> usize {
    debug_assert!(i < k && k < n);
    i * (2 * n - i - 1) / 2 + (k - i - 1)
}

/// One client's encoded distances for every pair `i < i'`, row-major over
/// the upper triangle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceReport {
    pub client: usize,
    pub n: usize,
    pub values: Vec<FieldElement>,
}

impl DistanceReport {
    pub fn get(&self, i: usize, k: usize) -> FieldElement {
        match i.cmp(&k) {
            std::cmp::Ordering::Equal => FieldElement::ZERO,
            std::cmp::Ordering::Less => self.values[condensed_index(self.n, i, k)],
            std::cmp::Ordering::Greater => self.values[condensed_index(self.n, k, i)],
        }
    }
}

/// Decodes every pair from a set of reports, one per client in `decoder.clients()` order.
pub fn decode_reports(decoder: &Decoder, reports: &[&DistanceReport]) -> Result<Vec<FieldElement>> {
    use rayon::prelude::*;

    if reports.len() != decoder.clients().len() {
        return Err(Error::LengthMismatch { expected: decoder.clients().len(), got: reports.len() });
    }
    let n = reports.first().map_or(0, |r| r.n);
    let len = condensed_len(n);
    for r in reports {
        if r.n != n || r.values.len() != len {
            return Err(Error::MissingPairs { expected: len, got: r.values.len() });
        }
    }
    const CHUNK: usize = 4096;
    let mut out = vec![FieldElement::ZERO; len];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut col = vec![FieldElement::ZERO; reports.len()];
        for (off, slot) in chunk.iter_mut().enumerate() {
            let idx = c * CHUNK + off;
            for (v, r) in col.iter_mut().zip(reports) {
                *v = r.values[idx];
            }
            *slot = decoder.decode(&col);
        }
    });
    Ok(out)
}
