//! Binary layout shared by the in-process transport and on-disk dumps.
//!
//! Every block starts with a fixed 56-byte little-endian header:
//!
//! ```text
//! offset size field
//!      0    4 magic "LCCS"
//!      4    2 version (1)
//!      6    1 kind (1 = share block, 2 = distance report)
//!      7    1 reserved (0)
//!      8    8 p
//!     16    4 q
//!     20    4 l
//!     24    4 t
//!     28    4 m
//!     32    8 n (global sample count)
//!     40    8 d (sample dimension)
//!     48    4 client id (the share holder / report author)
//!     52    4 reserved (0)
//! ```
//!
//! A share block follows with `rows: u64`, `width: u64`, then per row the
//! `u64` global sample index and `width` field values. A distance report
//! follows with `count: u64` and `count = n(n-1)/2` values for pairs `i < k`
//! in row-major upper-triangle order. All field values are `u64` residues.

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldParams};
use crate::lcc::{condensed_len, CodingScheme, DistanceReport, Share, ShareMatrix};

pub const MAGIC: &[u8; 4] = b"LCCS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 56;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum BlockKind {
    Shares = 1,
    Report = 2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireHeader {
    pub kind: BlockKind,
    pub p: u64,
    pub q: u32,
    pub l: u32,
    pub t: u32,
    pub m: u32,
    pub n: u64,
    pub d: u64,
    pub client: u32,
}

impl WireHeader {
    pub fn for_scheme(kind: BlockKind, scheme: &CodingScheme, n: usize, d: usize, client: usize) -> Self {
        WireHeader {
            kind,
            p: scheme.params().p(),
            q: scheme.params().q(),
            l: scheme.l() as u32,
            t: scheme.t() as u32,
            m: scheme.m() as u32,
            n: n as u64,
            d: d as u64,
            client: client as u32,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.push(0);
        out.extend_from_slice(&self.p.to_le_bytes());
        out.extend_from_slice(&self.q.to_le_bytes());
        out.extend_from_slice(&self.l.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        out.extend_from_slice(&self.client.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Wire(format!("block of {} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Wire("bad magic".into()));
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Wire(format!("unsupported version {version}")));
        }
        let kind = match r.u8()? {
            1 => BlockKind::Shares,
            2 => BlockKind::Report,
            k => return Err(Error::Wire(format!("unknown block kind {k}"))),
        };
        r.u8()?;
        let h = WireHeader {
            kind,
            p: r.u64()?,
            q: r.u32()?,
            l: r.u32()?,
            t: r.u32()?,
            m: r.u32()?,
            n: r.u64()?,
            d: r.u64()?,
            client: r.u32()?,
        };
        Ok(h)
    }

    /// Rejects blocks produced under a different agreement.
    pub fn check_scheme(&self, scheme: &CodingScheme) -> Result<()> {
        let ok = self.p == scheme.params().p()
            && self.q == scheme.params().q()
            && self.l as usize == scheme.l()
            && self.t as usize == scheme.t()
            && self.m as usize == scheme.m();
        if ok {
            Ok(())
        } else {
            Err(Error::Wire(format!(
                "block was produced for p={} q={} l={} t={} m={}, expected p={} q={} l={} t={} m={}",
                self.p,
                self.q,
                self.l,
                self.t,
                self.m,
                scheme.params().p(),
                scheme.params().q(),
                scheme.l(),
                scheme.t(),
                scheme.m()
            )))
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Wire("truncated block".into())),
        }
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn elem(&mut self, p: u64) -> Result<FieldElement> {
        let v = self.u64()?;
        if v >= p {
            return Err(Error::Wire(format!("value {v} is not reduced mod {p}")));
        }
        Ok(FieldElement(v))
    }
    fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Wire(format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

/// Serializes shares all destined for `header.client`.
pub fn encode_shares(header: &WireHeader, width: usize, shares: &[Share]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 + shares.len() * (8 + 8 * width));
    header.write(&mut out);
    out.extend_from_slice(&(shares.len() as u64).to_le_bytes());
    out.extend_from_slice(&(width as u64).to_le_bytes());
    for s in shares {
        debug_assert_eq!(s.payload.len(), width);
        out.extend_from_slice(&(s.sample_index as u64).to_le_bytes());
        for v in &s.payload {
            out.extend_from_slice(&v.value().to_le_bytes());
        }
    }
    out
}

pub fn decode_shares(bytes: &[u8]) -> Result<(WireHeader, Vec<Share>)> {
    let header = WireHeader::parse(bytes)?;
    if header.kind != BlockKind::Shares {
        return Err(Error::Wire("expected a share block".into()));
    }
    let mut r = Reader { bytes, pos: HEADER_LEN };
    let rows = r.u64()? as usize;
    let width = r.u64()? as usize;
    let expected = rows.checked_mul(8 + 8 * width).ok_or_else(|| Error::Wire("row count overflow".into()))?;
    if bytes.len() - r.pos != expected {
        return Err(Error::Wire(format!("share block body is {} bytes, expected {expected}", bytes.len() - r.pos)));
    }
    let mut shares = Vec::with_capacity(rows);
    for _ in 0..rows {
        let sample_index = r.u64()? as usize;
        if sample_index as u64 >= header.n {
            return Err(Error::Wire(format!("sample index {sample_index} out of range for n = {}", header.n)));
        }
        let payload = (0..width).map(|_| r.elem(header.p)).collect::<Result<Vec<_>>>()?;
        shares.push(Share { owner_client: header.client as usize, sample_index, payload });
    }
    r.finish()?;
    Ok((header, shares))
}

pub fn encode_report(header: &WireHeader, report: &DistanceReport) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 + 8 * report.values.len());
    header.write(&mut out);
    out.extend_from_slice(&(report.values.len() as u64).to_le_bytes());
    for v in &report.values {
        out.extend_from_slice(&v.value().to_le_bytes());
    }
    out
}

pub fn decode_report(bytes: &[u8]) -> Result<(WireHeader, DistanceReport)> {
    let header = WireHeader::parse(bytes)?;
    if header.kind != BlockKind::Report {
        return Err(Error::Wire("expected a distance report".into()));
    }
    let mut r = Reader { bytes, pos: HEADER_LEN };
    let count = r.u64()? as usize;
    let n = header.n as usize;
    if count != condensed_len(n) {
        return Err(Error::MissingPairs { expected: condensed_len(n), got: count });
    }
    if bytes.len() - r.pos != count * 8 {
        return Err(Error::Wire("truncated report".into()));
    }
    let values = (0..count).map(|_| r.elem(header.p)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok((header, DistanceReport { client: header.client as usize, n, values }))
}

/// Dumps a client's full share matrix in the share-block layout.
pub fn encode_share_matrix(scheme: &CodingScheme, d: usize, matrix: &ShareMatrix) -> Vec<u8> {
    let header = WireHeader::for_scheme(BlockKind::Shares, scheme, matrix.n, d, matrix.client);
    let shares: Vec<Share> = (0..matrix.n)
        .map(|i| Share { owner_client: matrix.client, sample_index: i, payload: matrix.row(i).to_vec() })
        .collect();
    encode_shares(&header, matrix.width, &shares)
}

pub fn decode_share_matrix(bytes: &[u8]) -> Result<(WireHeader, ShareMatrix)> {
    let (header, shares) = decode_shares(bytes)?;
    let width = shares.first().map_or(0, |s| s.payload.len());
    let m = ShareMatrix::from_shares(header.client as usize, header.n as usize, width, shares)?;
    Ok((header, m))
}

/// Parameters recorded in a header, validated.
pub fn header_params(header: &WireHeader) -> Result<FieldParams> {
    FieldParams::new(header.p, header.q)
}
