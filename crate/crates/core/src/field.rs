//! Arithmetic in the prime field F_p and Lagrange interpolation over it.
//!
//! Elements are plain `u64` residues; the modulus travels separately in
//! [`FieldParams`]. Every product is formed in 128 bits and reduced, so any
//! prime below 2^62 is safe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The Mersenne prime 2^61 - 1, the default modulus.
pub const MERSENNE_61: u64 = (1u64 << 61) - 1;

/// Largest modulus accepted. Keeps `p^2 * 16` inside a `u128` accumulator.
pub const MAX_MODULUS: u64 = 1u64 << 62;

/// A residue in `[0, p)`. Carries no modulus of its own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(transparent)]
pub struct FieldElement(pub(crate) u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }
}

impl std::fmt::Display for FieldElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Prime modulus `p` and quantization exponent `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldParams {
    p: u64,
    q: u32,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams { p: MERSENNE_61, q: 16 }
    }
}

impl FieldParams {
    pub fn new(p: u64, q: u32) -> Result<Self> {
        if p < 3 {
            return Err(Error::InvalidParams(format!("p = {p} must be at least 3")));
        }
        if p >= MAX_MODULUS {
            return Err(Error::InvalidParams(format!("p = {p} must be below 2^62")));
        }
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        let half = (p - 1) / 2;
        if 2 * q as u64 >= 63 || (1u64 << (2 * q)) >= half {
            return Err(Error::InvalidParams(format!(
                "2^(2q) = 2^{} must be below (p-1)/2 = {half}",
                2 * q
            )));
        }
        Ok(FieldParams { p, q })
    }

    #[inline]
    pub fn p(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn q(&self) -> u32 {
        self.q
    }

    /// `(p - 1) / 2`, the boundary between the positive and negative halves.
    #[inline]
    pub fn half(&self) -> u64 {
        (self.p - 1) / 2
    }

    /// Validates that `v` is a canonical residue for this modulus.
    pub fn element(&self, v: u64) -> Result<FieldElement> {
        if v < self.p {
            Ok(FieldElement(v))
        } else {
            Err(Error::MismatchedField { value: v, p: self.p })
        }
    }

    /// Reduces an arbitrary integer into the field.
    #[inline]
    pub fn reduce(&self, v: u64) -> FieldElement {
        FieldElement(v % self.p)
    }

    /// Maps a signed integer to its residue.
    pub fn from_i128(&self, v: i128) -> FieldElement {
        let r = v.rem_euclid(self.p as i128);
        FieldElement(r as u64)
    }

    #[inline]
    pub(crate) fn reduce_u128(&self, x: u128) -> u64 {
        if self.p == MERSENNE_61 {
            // x < 2^128; fold twice then a final conditional subtract.
            let m = MERSENNE_61 as u128;
            let x = (x & m) + (x >> 61);
            let x = (x & m) + (x >> 61);
            let mut r = x as u64;
            if r >= MERSENNE_61 {
                r -= MERSENNE_61;
            }
            r
        } else {
            (x % self.p as u128) as u64
        }
    }

    #[inline]
    fn check(&self, a: FieldElement) {
        debug_assert!(a.0 < self.p, "element {} not reduced mod {}", a.0, self.p);
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.check(a);
        self.check(b);
        let s = a.0 + b.0;
        FieldElement(if s >= self.p { s - self.p } else { s })
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.check(a);
        self.check(b);
        FieldElement(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.p - b.0 })
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        self.check(a);
        FieldElement(if a.0 == 0 { 0 } else { self.p - a.0 })
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.check(a);
        self.check(b);
        FieldElement(self.reduce_u128(a.0 as u128 * b.0 as u128))
    }

    pub fn pow(&self, a: FieldElement, mut e: u64) -> FieldElement {
        let mut base = a;
        let mut acc = FieldElement::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        self.check(a);
        if a.0 == 0 {
            return Err(Error::InverseOfZero);
        }
        Ok(self.pow(a, self.p - 2))
    }

    /// Sum of squared coordinate differences, with lazy 128-bit reduction.
    pub fn squared_distance(&self, a: &[FieldElement], b: &[FieldElement]) -> Result<FieldElement> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch { expected: a.len(), got: b.len() });
        }
        Ok(self.squared_distance_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn squared_distance_unchecked(&self, a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
        // Each square is < p^2 < 2^124, so eight fit in a u128 with room left.
        let mut total: u64 = 0;
        for (ca, cb) in a.chunks(8).zip(b.chunks(8)) {
            let mut acc: u128 = 0;
            for (x, y) in ca.iter().zip(cb) {
                let d = self.sub(*x, *y).0 as u128;
                acc += d * d;
            }
            total = self.add(FieldElement(total), FieldElement(self.reduce_u128(acc))).0;
        }
        FieldElement(total)
    }

    /// Inner product `sum_j w_j * y_j`.
    #[inline]
    pub fn dot(&self, w: &[FieldElement], y: &[FieldElement]) -> FieldElement {
        let mut total: u64 = 0;
        for (cw, cy) in w.chunks(8).zip(y.chunks(8)) {
            let mut acc: u128 = 0;
            for (a, b) in cw.iter().zip(cy) {
                acc += a.0 as u128 * b.0 as u128;
            }
            total = self.add(FieldElement(total), FieldElement(self.reduce_u128(acc))).0;
        }
        FieldElement(total)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    r
}

/// Miller–Rabin with the first twelve prime bases, which is exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `>= n`, if one exists below [`MAX_MODULUS`].
pub fn next_prime(n: u64) -> Option<u64> {
    let mut c = n.max(2);
    while c < MAX_MODULUS {
        if is_prime(c) {
            return Some(c);
        }
        c += 1;
    }
    None
}

/// A set of distinct abscissae with precomputed barycentric weights
/// `w_j = 1 / prod_{k != j} (x_j - x_k)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterpolationNodes {
    xs: Vec<FieldElement>,
    bary: Vec<FieldElement>,
}

impl InterpolationNodes {
    pub fn new(params: &FieldParams, xs: Vec<FieldElement>) -> Result<Self> {
        for &x in &xs {
            params.element(x.0)?;
        }
        let mut sorted: Vec<u64> = xs.iter().map(|x| x.0).collect();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateNode(w[0]));
        }
        let bary = xs
            .iter()
            .enumerate()
            .map(|(j, &xj)| {
                let prod = xs
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .fold(FieldElement::ONE, |acc, (_, &xk)| params.mul(acc, params.sub(xj, xk)));
                params.inv(prod)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InterpolationNodes { xs, bary })
    }

    pub fn xs(&self) -> &[FieldElement] {
        &self.xs
    }

    pub fn barycentric(&self) -> &[FieldElement] {
        &self.bary
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Values `L_j(target)` of every Lagrange basis polynomial at `target`.
    pub fn basis_at(&self, params: &FieldParams, target: FieldElement) -> Vec<FieldElement> {
        if let Some(hit) = self.xs.iter().position(|&x| x == target) {
            let mut out = vec![FieldElement::ZERO; self.xs.len()];
            out[hit] = FieldElement::ONE;
            return out;
        }
        // L_j(x) = l(x) * w_j / (x - x_j), l(x) = prod_k (x - x_k).
        let diffs: Vec<FieldElement> = self.xs.iter().map(|&x| params.sub(target, x)).collect();
        let ell = diffs.iter().fold(FieldElement::ONE, |acc, &d| params.mul(acc, d));
        let inv_diffs = batch_inverse(params, &diffs);
        self.bary
            .iter()
            .zip(&inv_diffs)
            .map(|(&w, &id)| params.mul(ell, params.mul(w, id)))
            .collect()
    }
}

/// Montgomery's trick: inverts every (nonzero) entry with one field inversion.
fn batch_inverse(params: &FieldParams, xs: &[FieldElement]) -> Vec<FieldElement> {
    let mut prefix = Vec::with_capacity(xs.len());
    let mut acc = FieldElement::ONE;
    for &x in xs {
        prefix.push(acc);
        acc = params.mul(acc, x);
    }
    let mut inv = params.inv(acc).expect("batch_inverse called with a zero entry");
    let mut out = vec![FieldElement::ZERO; xs.len()];
    for i in (0..xs.len()).rev() {
        out[i] = params.mul(inv, prefix[i]);
        inv = params.mul(inv, xs[i]);
    }
    out
}

/// Evaluates at `target` the unique polynomial of degree `< nodes.len()`
/// passing through `(x_j, ys[j])`.
pub fn lagrange_eval(
    params: &FieldParams,
    nodes: &InterpolationNodes,
    ys: &[FieldElement],
    target: FieldElement,
) -> Result<FieldElement> {
    if ys.len() != nodes.len() {
        return Err(Error::LengthMismatch { expected: nodes.len(), got: ys.len() });
    }
    Ok(params.dot(&nodes.basis_at(params, target), ys))
}

/// Weight vector `w` with `sum_j w_j g(x_j) = sum_o g(alpha_o)` for every
/// polynomial `g` of degree below `nodes.len()`.
pub fn decode_weights(
    params: &FieldParams,
    nodes: &InterpolationNodes,
    targets: &[FieldElement],
) -> Result<Vec<FieldElement>> {
    let mut w = vec![FieldElement::ZERO; nodes.len()];
    for &a in targets {
        params.element(a.0)?;
        if nodes.xs().contains(&a) {
            return Err(Error::TargetCollision(a.0));
        }
        for (acc, b) in w.iter_mut().zip(nodes.basis_at(params, a)) {
            *acc = params.add(*acc, b);
        }
    }
    Ok(w)
}
