//! The server's global squared-distance matrix and its on-disk formats.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldParams};
use crate::lcc::{condensed_index, condensed_len};
use crate::quantize::{field_distance_to_real, is_wrapped, DequantExponent, QuantizedSample};

const MATRIX_MAGIC: &[u8; 4] = b"LCDM";
const MATRIX_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Reconstructed,
    Oracle,
}

/// Dense symmetric `n x n` matrix of squared distances, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalDistanceMatrix {
    n: usize,
    data: Vec<f64>,
    provenance: Provenance,
}

impl GlobalDistanceMatrix {
    /// Builds a matrix from a condensed upper triangle of real distances.
    pub fn from_condensed(n: usize, condensed: &[f64], provenance: Provenance) -> Result<Self> {
        if condensed.len() != condensed_len(n) {
            return Err(Error::MissingPairs { expected: condensed_len(n), got: condensed.len() });
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in i + 1..n {
                let v = condensed[condensed_index(n, i, k)];
                data[i * n + k] = v;
                data[k * n + i] = v;
            }
        }
        Ok(GlobalDistanceMatrix { n, data, provenance })
    }

    /// Builds from a full row-major matrix, checking symmetry and the zero diagonal.
    pub fn from_dense(n: usize, data: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, got: data.len() });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::Dataset(format!("diagonal entry {i} is {}", data[i * n + i])));
            }
            for k in i + 1..n {
                if data[i * n + k] != data[k * n + i] {
                    return Err(Error::Dataset(format!("matrix not symmetric at ({i}, {k})")));
                }
            }
        }
        Ok(GlobalDistanceMatrix { n, data, provenance })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.n + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Off-diagonal entries `i < k`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(condensed_len(self.n));
        for i in 0..self.n {
            out.extend_from_slice(&self.row(i)[i + 1..]);
        }
        out
    }

    /// Permutes rows and columns: entry `(a, b)` of the result is `(perm[a], perm[b])` here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                data[a * n + b] = self.get(perm[a], perm[b]);
            }
        }
        GlobalDistanceMatrix { n, data, provenance: self.provenance }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, provenance: Provenance) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut data = Vec::new();
        let mut n = None;
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data { line: lineno + 1, msg: e.to_string() })?;
            if *n.get_or_insert(row.len()) != row.len() {
                return Err(Error::Data { line: lineno + 1, msg: "ragged row".into() });
            }
            data.extend(row);
        }
        let n = n.unwrap_or(0);
        Self::from_dense(n, data, provenance)
    }

    /// Header (magic, version u16, reserved u16, n u64) then `n*n` little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.data.len());
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], provenance: Provenance) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MATRIX_MAGIC {
            return Err(Error::Wire("not a distance matrix file".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MATRIX_VERSION {
            return Err(Error::Wire(format!("unsupported matrix version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != n.checked_mul(n).and_then(|x| x.checked_mul(8)).unwrap_or(usize::MAX) {
            return Err(Error::Wire("matrix body length does not match header".into()));
        }
        let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_dense(n, data, provenance)
    }

    pub fn write_bin(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_bin(path: &Path, provenance: Provenance) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, provenance)
    }

    /// Writes CSV or binary depending on the extension (`.csv` / `.bin`).
    pub fn dump(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => self.write_csv(path),
            Some("bin") => self.write_bin(path),
            _ => Err(Error::Config(format!("matrix dump path must end in .csv or .bin: {}", path.display()))),
        }
    }
}

/// Converts decoded field distances (condensed, `i < k`) into the real matrix.
pub fn assemble(
    n: usize,
    field: &[FieldElement],
    params: &FieldParams,
    exponent: DequantExponent,
) -> Result<GlobalDistanceMatrix> {
    if field.len() != condensed_len(n) {
        return Err(Error::MissingPairs { expected: condensed_len(n), got: field.len() });
    }
    let wrapped = field.iter().filter(|&&d| is_wrapped(d, params)).count();
    if wrapped > 0 {
        log::warn!("{wrapped} decoded distances fell in the negative half of the field");
    }
    let real: Vec<f64> = field.iter().map(|&d| field_distance_to_real(d, params, exponent)).collect();
    GlobalDistanceMatrix::from_condensed(n, &real, Provenance::Reconstructed)
}

/// Direct field squared distances between quantized samples.
pub fn field_oracle(samples: &[QuantizedSample], params: &FieldParams) -> Vec<FieldElement> {
    let n = samples.len();
    let mut out = Vec::with_capacity(condensed_len(n));
    for i in 0..n {
        for k in i + 1..n {
            out.push(params.squared_distance_unchecked(&samples[i].coords, &samples[k].coords));
        }
    }
    out
}

/// Double-precision squared distances of the raw data.
pub fn real_oracle<R: AsRef<[f64]>>(rows: &[R]) -> GlobalDistanceMatrix {
    let n = rows.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for k in i + 1..n {
            let d: f64 = rows[i].as_ref().iter().zip(rows[k].as_ref()).map(|(a, b)| (a - b) * (a - b)).sum();
            data[i * n + k] = d;
            data[k * n + i] = d;
        }
    }
    GlobalDistanceMatrix { n, data, provenance: Provenance::Oracle }
}

/// Root mean square difference over all `n^2` entries.
pub fn rmse(a: &GlobalDistanceMatrix, b: &GlobalDistanceMatrix) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::LengthMismatch { expected: a.n, got: b.n });
    }
    if a.n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.data.len() as f64).sqrt())
}
