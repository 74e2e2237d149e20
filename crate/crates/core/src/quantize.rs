//! Real ↔ field conversion.
//!
//! Samples are scaled by `2^q`, rounded half away from zero, and negative
//! integers are stored as `p - |v|`. A field squared distance is mapped back
//! by reading residues above `(p-1)/2` as negative and dividing by `2^(2q)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{next_prime, FieldElement, FieldParams};

/// Scaling applied when a field distance returns to the reals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DequantExponent {
    /// Divide by `2^q`.
    #[serde(rename = "q")]
    Q,
    /// Divide by `2^(2q)`, consistent with squaring `2^q`-scaled integers.
    #[default]
    #[serde(rename = "2q")]
    TwoQ,
}

impl std::str::FromStr for DequantExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q" => Ok(DequantExponent::Q),
            "2q" => Ok(DequantExponent::TwoQ),
            _ => Err(Error::Config(format!("dequant exponent must be 'q' or '2q', got '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedSample {
    pub coords: Vec<FieldElement>,
}

impl QuantizedSample {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// `round(2^q x)` with ties away from zero, as an exact integer.
pub fn quantize_scalar(x: f64, q: u32) -> Option<i128> {
    let v = (x * (1u64 << q) as f64).round();
    if v.is_finite() && v.abs() < 1e36 {
        Some(v as i128)
    } else {
        None
    }
}

pub fn real_to_field(x: &[f64], params: &FieldParams) -> Result<QuantizedSample> {
    let limit = params.half();
    let coords = x
        .iter()
        .enumerate()
        .map(|(index, &value)| match quantize_scalar(value, params.q()) {
            Some(v) if v.unsigned_abs() < limit as u128 => Ok(params.from_i128(v)),
            _ => Err(Error::OutOfRange { index, value, limit }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedSample { coords })
}

/// Lifts a residue to the signed integer it represents.
pub fn field_to_signed(d: FieldElement, params: &FieldParams) -> i128 {
    if d.value() < params.half() {
        d.value() as i128
    } else {
        d.value() as i128 - params.p() as i128
    }
}

/// True when the residue falls in the negative half, which a genuine squared
/// distance never does.
pub fn is_wrapped(d: FieldElement, params: &FieldParams) -> bool {
    d.value() >= params.half()
}

pub fn field_distance_to_real(d: FieldElement, params: &FieldParams, exponent: DequantExponent) -> f64 {
    if is_wrapped(d, params) {
        log::warn!(
            "field distance {} lies in the negative half of F_{}; quantization range is infeasible",
            d,
            params.p()
        );
    }
    let scale = match exponent {
        DequantExponent::Q => (1u64 << params.q()) as f64,
        DequantExponent::TwoQ => 2f64.powi(2 * params.q() as i32),
    };
    field_to_signed(d, params) as f64 / scale
}

/// Summary statistics the feasibility check needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataStats {
    pub dim: usize,
    pub max_abs: f64,
}

impl DataStats {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let max_abs = rows
            .iter()
            .flat_map(|r| r.as_ref().iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        DataStats { dim, max_abs }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeasibilityBound {
    pub max_abs_value: f64,
    /// Upper bound on any field squared distance, `4 d M^2` with
    /// `M = round(2^q max|x|)`.
    pub max_sq_distance_field: u128,
    /// `(p-1)/2 - max_sq_distance_field`.
    pub headroom: i128,
}

impl FeasibilityBound {
    pub fn is_feasible(&self) -> bool {
        self.headroom > 0
    }
}

fn distance_bound(stats: &DataStats, q: u32) -> Option<u128> {
    let m = quantize_scalar(stats.max_abs, q)?.unsigned_abs();
    m.checked_mul(m)?.checked_mul(4 * stats.dim as u128)
}

/// Computes the worst-case field squared distance for the data range and
/// rejects configurations where it could wrap past `(p-1)/2`.
pub fn check_feasibility(stats: &DataStats, params: &FieldParams) -> Result<FeasibilityBound> {
    let half = params.half();
    let bound = distance_bound(stats, params.q()).unwrap_or(u128::MAX);
    let headroom = half as i128 - bound.min(i128::MAX as u128) as i128;
    let fb = FeasibilityBound {
        max_abs_value: stats.max_abs,
        max_sq_distance_field: bound,
        headroom,
    };
    if fb.is_feasible() {
        return Ok(fb);
    }
    let min_p = bound
        .checked_mul(2)
        .and_then(|b| b.checked_add(2))
        .filter(|&b| b < u64::MAX as u128)
        .and_then(|b| next_prime(b as u64));
    let max_q = (0..params.q()).rev().find(|&q| {
        distance_bound(stats, q).is_some_and(|b| b < half as u128) && (1u128 << (2 * q)) < half as u128
    });
    let mut hint = String::new();
    if let Some(p) = min_p {
        hint.push_str(&format!("; smallest workable p is {p}"));
    }
    if let Some(q) = max_q {
        hint.push_str(&format!("; largest workable q for this p is {q}"));
    }
    Err(Error::InfeasibleQuantization { bound, half, hint })
}
