//! Exhaustive secrecy check of the share encoding over a small field.
//!
//! For every secret and every assignment of the noise segments, the shares
//! seen by a colluding set of clients are tallied. If the per-secret tallies
//! are identical the colluders learn nothing, and the mutual information is
//! exactly zero.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldParams};
use crate::lcc::{default_nodes, CodingScheme};

pub const DEFAULT_AUDIT_PRIME: u64 = 31;
pub const DEFAULT_BUDGET: u64 = 10_000_000;
/// Heuristic verdicts call the shares independent of the secret above this p-value.
pub const HEURISTIC_ALPHA: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub p: u64,
    pub l: usize,
    pub t: usize,
    pub m: usize,
    /// Client indices whose shares are pooled.
    pub colluders: Vec<usize>,
    /// Secrets to compare, each of length `l`. `None` means all of `F_p^l`.
    pub secrets: Option<Vec<Vec<u64>>>,
    pub budget: u64,
    /// Fall back to a chi-square test when enumeration exceeds the budget.
    pub heuristic: bool,
    pub heuristic_samples: usize,
    pub seed: u64,
}

impl AuditConfig {
    /// First `colluders` clients collude.
    pub fn new(p: u64, l: usize, t: usize, m: usize, colluders: usize) -> Self {
        AuditConfig {
            p,
            l,
            t,
            m,
            colluders: (0..colluders).collect(),
            secrets: None,
            budget: DEFAULT_BUDGET,
            heuristic: false,
            heuristic_samples: 20_000,
            seed: 0,
        }
    }

    /// Scheme with the default nodes. Decodability is not required here.
    pub fn scheme(&self) -> Result<CodingScheme> {
        let params = FieldParams::new(self.p, 1)?;
        let (alpha, beta) = default_nodes(self.m, self.l, self.t);
        if let Some(&x) = alpha.iter().chain(&beta).find(|&&x| x >= self.p) {
            return Err(Error::InvalidScheme(format!("node {x} does not fit in F_{}; use fewer clients or a larger p", self.p)));
        }
        CodingScheme::audit(params, self.m, self.l, self.t, &alpha, &beta)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.m];
        for &c in &self.colluders {
            if c >= self.m {
                return Err(Error::InvalidScheme(format!("colluder {c} is not a client (m = {})", self.m)));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidScheme(format!("colluder {c} listed twice")));
            }
        }
        if let Some(s) = self.secrets.as_ref().and_then(|ss| ss.iter().find(|s| s.len() != self.l || s.iter().any(|&v| v >= self.p))) {
            return Err(Error::InvalidScheme(format!("secret {s:?} is not an element of F_{}^{}", self.p, self.l)));
        }
        Ok(())
    }

    pub fn secret_list(&self) -> Result<Vec<Vec<u64>>> {
        if let Some(s) = &self.secrets {
            return Ok(s.clone());
        }
        let count = checked_pow(self.p, self.l).filter(|&c| c <= self.budget as u128).ok_or(Error::BudgetExceeded {
            cases: checked_pow(self.p, self.l).unwrap_or(u128::MAX),
            budget: self.budget,
        })?;
        Ok((0..count as u64).map(|i| digits(i, self.p, self.l)).collect())
    }

    /// Secrets times noise assignments.
    pub fn cases(&self) -> u128 {
        let secrets = match &self.secrets {
            Some(s) => Some(s.len() as u128),
            None => checked_pow(self.p, self.l),
        };
        secrets.zip(checked_pow(self.p, self.t)).and_then(|(a, b)| a.checked_mul(b)).unwrap_or(u128::MAX)
    }
}

fn checked_pow(base: u64, exp: usize) -> Option<u128> {
    (0..exp).try_fold(1u128, |acc, _| acc.checked_mul(base as u128))
}

/// Base-`p` digits of `i`, least significant first.
fn digits(mut i: u64, p: u64, len: usize) -> Vec<u64> {
    (0..len)
        .map(|_| {
            let d = i % p;
            i /= p;
            d
        })
        .collect()
}

/// Counts of each colluder share tuple, keyed by the tuple read as a base-`p` number.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareHistogram {
    pub counts: BTreeMap<u64, u64>,
    pub total: u64,
}

impl ShareHistogram {
    fn add(&mut self, key: u64) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.total += 1;
    }
}

fn colluder_key(scheme: &CodingScheme, colluders: &[usize], coeffs: &[FieldElement]) -> u64 {
    let params = scheme.params();
    colluders.iter().rev().fold(0u64, |acc, &j| acc * params.p() + params.dot(scheme.encoding_row(j), coeffs).value())
}

/// Every noise assignment for one secret, tallied by the colluders' view.
pub fn share_distribution(secret: &[u64], cfg: &AuditConfig) -> Result<ShareHistogram> {
    cfg.validate()?;
    let scheme = cfg.scheme()?;
    let noise_cases = checked_pow(cfg.p, cfg.t).filter(|&c| c <= cfg.budget as u128).ok_or(Error::BudgetExceeded {
        cases: checked_pow(cfg.p, cfg.t).unwrap_or(u128::MAX),
        budget: cfg.budget,
    })?;
    if checked_pow(cfg.p, cfg.colluders.len()).is_none_or(|c| c > u64::MAX as u128) {
        return Err(Error::InvalidScheme("too many colluders to key share tuples".into()));
    }
    distribution(&scheme, secret, &cfg.colluders, noise_cases as u64)
}

fn distribution(scheme: &CodingScheme, secret: &[u64], colluders: &[usize], noise_cases: u64) -> Result<ShareHistogram> {
    let params = scheme.params();
    let mut coeffs: Vec<FieldElement> = secret.iter().map(|&v| params.element(v)).collect::<Result<_>>()?;
    let l = coeffs.len();
    coeffs.resize(l + scheme.t(), FieldElement::ZERO);
    let mut hist = ShareHistogram::default();
    for r in 0..noise_cases {
        for (slot, d) in coeffs[l..].iter_mut().zip(digits(r, params.p(), scheme.t())) {
            *slot = params.reduce(d);
        }
        hist.add(colluder_key(scheme, colluders, &coeffs));
    }
    Ok(hist)
}

/// Mutual information in bits between a uniformly drawn secret and the
/// colluders' view, from per-secret histograms of equal totals. Exactly zero
/// when all histograms agree count for count.
pub fn mutual_information(hists: &[ShareHistogram]) -> f64 {
    let Some(first) = hists.first() else { return 0.0 };
    if hists.iter().all(|h| h == first) {
        return 0.0;
    }
    let mut marginal: BTreeMap<u64, u64> = BTreeMap::new();
    let mut total = 0u64;
    for h in hists {
        for (&k, &c) in &h.counts {
            *marginal.entry(k).or_insert(0) += c;
        }
        total += h.total;
    }
    let entropy = |counts: &mut dyn Iterator<Item = u64>, n: u64| -> f64 {
        counts.filter(|&c| c > 0).map(|c| c as f64 / n as f64).map(|q| -q * q.log2()).sum()
    };
    let h_y = entropy(&mut marginal.values().copied(), total);
    let h_y_given_s: f64 = hists.iter().map(|h| h.total as f64 / total as f64 * entropy(&mut h.counts.values().copied(), h.total)).sum();
    (h_y - h_y_given_s).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditMethod {
    Exhaustive,
    ChiSquare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Private,
    Leaks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub p: u64,
    pub l: usize,
    pub t: usize,
    pub m: usize,
    pub colluders: Vec<usize>,
    pub method: AuditMethod,
    pub mi_bits: f64,
    pub cases_enumerated: u64,
    /// Chi-square p-value for heuristic audits.
    pub p_value: Option<f64>,
    pub verdict: Verdict,
    /// Whether the colluding set is small enough that privacy is expected.
    pub within_threshold: bool,
}

pub fn audit(cfg: &AuditConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let scheme = cfg.scheme()?;
    let cases = cfg.cases();
    let report = |method, mi_bits, cases_enumerated, p_value, verdict| AuditReport {
        p: cfg.p,
        l: cfg.l,
        t: cfg.t,
        m: cfg.m,
        colluders: cfg.colluders.clone(),
        method,
        mi_bits,
        cases_enumerated,
        p_value,
        verdict,
        within_threshold: cfg.colluders.len() <= cfg.t,
    };
    if cases > cfg.budget as u128 {
        if !cfg.heuristic {
            return Err(Error::BudgetExceeded { cases, budget: cfg.budget });
        }
        let (mi, drawn, p_value) = chi_square(&scheme, cfg)?;
        let verdict = if p_value >= HEURISTIC_ALPHA { Verdict::Private } else { Verdict::Leaks };
        return Ok(report(AuditMethod::ChiSquare, mi, drawn, Some(p_value), verdict));
    }
    let secrets = cfg.secret_list()?;
    let noise_cases = checked_pow(cfg.p, cfg.t).unwrap() as u64;
    let hists = secrets
        .par_iter()
        .map(|s| distribution(&scheme, s, &cfg.colluders, noise_cases))
        .collect::<Result<Vec<_>>>()?;
    let mi = mutual_information(&hists);
    let verdict = if mi == 0.0 { Verdict::Private } else { Verdict::Leaks };
    Ok(report(AuditMethod::Exhaustive, mi, cases as u64, None, verdict))
}

/// Homogeneity test of binned colluder views across a handful of secrets,
/// with noise drawn at random instead of enumerated.
fn chi_square(scheme: &CodingScheme, cfg: &AuditConfig) -> Result<(f64, u64, f64)> {
    let p = cfg.p;
    let secrets = match &cfg.secrets {
        Some(s) => s.clone(),
        None => {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5ec7);
            let mut s = vec![vec![0; cfg.l], vec![1; cfg.l], vec![p - 1; cfg.l]];
            s.push((0..cfg.l).map(|_| rng.random_range(0..p)).collect());
            s
        }
    };
    let c = cfg.colluders.len();
    // Keep the table at most 256 cells wide.
    let bins = if c == 0 { 1 } else { ((256f64).powf(1.0 / c as f64).floor() as u64).clamp(2, p) };
    let params = scheme.params();
    let mut table = vec![vec![0u64; (bins as usize).pow(c as u32)]; secrets.len()];
    for (si, secret) in secrets.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(si as u64);
        let mut coeffs: Vec<FieldElement> = secret.iter().map(|&v| params.element(v)).collect::<Result<_>>()?;
        coeffs.resize(cfg.l + cfg.t, FieldElement::ZERO);
        for _ in 0..cfg.heuristic_samples {
            for slot in coeffs[cfg.l..].iter_mut() {
                *slot = params.reduce(rng.random_range(0..p));
            }
            let cell = cfg.colluders.iter().fold(0usize, |acc, &j| {
                let v = params.dot(scheme.encoding_row(j), &coeffs).value();
                acc * bins as usize + (v as u128 * bins as u128 / p as u128) as usize
            });
            table[si][cell] += 1;
        }
    }
    let cols: Vec<usize> = (0..table[0].len()).filter(|&k| table.iter().any(|r| r[k] > 0)).collect();
    let n: f64 = (secrets.len() * cfg.heuristic_samples) as f64;
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let mut stat = 0.0;
    for &k in &cols {
        let col: f64 = table.iter().map(|r| r[k] as f64).sum();
        for (r, rt) in table.iter().zip(&row_tot) {
            let e = rt * col / n;
            stat += (r[k] as f64 - e).powi(2) / e;
        }
    }
    let dof = (secrets.len().saturating_sub(1) * cols.len().saturating_sub(1)) as f64;
    let p_value = if dof == 0.0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof).map_err(|e| Error::InvalidParams(e.to_string()))?.cdf(stat)
    };
    let hists: Vec<ShareHistogram> = table
        .iter()
        .map(|r| ShareHistogram {
            counts: r.iter().enumerate().filter(|(_, &c)| c > 0).map(|(k, &c)| (k as u64, c)).collect(),
            total: r.iter().sum(),
        })
        .collect();
    Ok((mutual_information(&hists), n as u64, p_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn one_noise_segment_hides_scalar_secret() {
        let cfg = AuditConfig::new(31, 1, 1, 3, 1);
        for s in 0..31 {
            let h = share_distribution(&[s], &cfg).unwrap();
            assert_eq!(h.counts.len(), 31);
            assert!(h.counts.values().all(|&c| c == 1));
        }
        let r = audit(&cfg).unwrap();
        assert_eq!(r.mi_bits, 0.0);
        assert_eq!(r.cases_enumerated, 31 * 31);
        assert_eq!(r.verdict, Verdict::Private);
    }

    #[test]
    fn no_colluders_see_one_empty_tuple() {
        let cfg = AuditConfig::new(31, 1, 1, 3, 0);
        let h = share_distribution(&[7], &cfg).unwrap();
        assert_eq!(h.counts.len(), 1);
        assert_eq!(h.total, 31);
        assert_eq!(audit(&cfg).unwrap().mi_bits, 0.0);
    }

    #[test]
    fn without_noise_the_share_reveals_the_secret() {
        let cfg = AuditConfig::new(31, 1, 0, 2, 1);
        let h = share_distribution(&[5], &cfg).unwrap();
        assert_eq!(h.total, 1);
        let r = audit(&cfg).unwrap();
        assert!((r.mi_bits - 31f64.log2()).abs() < 1e-12, "{}", r.mi_bits);
        assert_eq!(r.verdict, Verdict::Leaks);
    }

    #[test]
    fn one_colluder_too_many_leaks() {
        let r = audit(&AuditConfig::new(31, 1, 1, 3, 2)).unwrap();
        assert!(r.mi_bits > 0.0);
        assert!(!r.within_threshold);
        // Two evaluations of a line pin down the secret.
        assert!((r.mi_bits - 31f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_mutual_information() {
        // Secret 0 always shows 0, secret 1 shows 0 or 1 evenly.
        // H(Y) = H(3/4, 1/4), H(Y|S) = 1/2.
        let a = ShareHistogram { counts: [(0, 2)].into(), total: 2 };
        let b = ShareHistogram { counts: [(0, 1), (1, 1)].into(), total: 2 };
        let h_y = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((mutual_information(&[a, b]) - (h_y - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn budget_is_enforced() {
        let mut cfg = AuditConfig::new(31, 2, 3, 11, 1);
        cfg.budget = 1000;
        assert!(matches!(audit(&cfg), Err(Error::BudgetExceeded { .. })));
        assert!(matches!(share_distribution(&[0, 0], &cfg), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn chi_square_fallback() {
        let mut cfg = AuditConfig::new(1_000_003, 1, 1, 3, 1);
        cfg.heuristic = true;
        let r = audit(&cfg).unwrap();
        assert_eq!(r.method, AuditMethod::ChiSquare);
        assert_eq!(r.verdict, Verdict::Private);
        cfg.t = 0;
        let r = audit(&cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Leaks);
    }

    #[test]
    fn bad_colluders_rejected() {
        let mut cfg = AuditConfig::new(31, 1, 1, 3, 0);
        cfg.colluders = vec![3];
        assert!(audit(&cfg).is_err());
        cfg.colluders = vec![1, 1];
        assert!(audit(&cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn any_t_colluders_learn_nothing(l in 1usize..3, t in 1usize..3, extra in 0usize..3, pick in any::<u64>()) {
            let m = 2 * l + 2 * t - 1 + extra;
            let mut cfg = AuditConfig::new(31, l, t, m, 0);
            // A pseudo-random colluding set of size t.
            let mut clients: Vec<usize> = (0..m).collect();
            let mut rng = ChaCha20Rng::seed_from_u64(pick);
            for i in 0..t {
                let j = rng.random_range(i..m);
                clients.swap(i, j);
            }
            cfg.colluders = clients[..t].to_vec();
            if l + t > 3 {
                cfg.secrets = Some((0..5u64).map(|s| (0..l as u64).map(|c| (s * 7 + c * 3) % 31).collect()).collect());
            }
            let r = audit(&cfg).unwrap();
            prop_assert_eq!(r.mi_bits, 0.0);
            prop_assert_eq!(r.verdict, Verdict::Private);
        }
    }
}
