//! Exact enumeration of Rabi resonances and the sector structure they induce.
//!
//! A level `n >= 1` is resonant when `xi*n + eta = k^2` for a positive integer
//! `k`. Resonance decisions are made in exact integer arithmetic only; float
//! parameters are refused because a tolerance-based near-resonance is a
//! different object. At a resonance the `n-1 <-> n` transition amplitude
//! vanishes and the chain of Fock levels splits into invariant sectors.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{MaserError, Result};
use crate::fock_ops::alpha_raw;
use crate::params::{is_zero_rational, ratio, DimensionlessParams, Exactness};

/// One certified resonance: `xi*n + eta = k^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Resonance {
    pub n: u64,
    /// Integer root of `xi*n + eta`.
    pub k: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum Regime {
    NonResonant,
    FullyResonant,
    /// User-supplied resonance levels; treated as simply resonant downstream.
    Injected(Vec<u64>),
}

/// All resonances up to an enumeration bound.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResonanceSet {
    /// Sorted by level, no duplicates.
    pub entries: Vec<Resonance>,
    pub n_max: u64,
    pub regime: Regime,
}

impl ResonanceSet {
    pub fn levels(&self) -> Vec<u64> {
        self.entries.iter().map(|r| r.n).collect()
    }

    pub fn contains(&self, n: u64) -> bool {
        self.entries.binary_search_by_key(&n, |r| r.n).is_ok()
    }

    /// Build a set from user-certified levels. `k` is recovered by rounding
    /// `sqrt(xi*n + eta)`; the float parameters are taken on trust.
    pub fn from_injected(params: &DimensionlessParams, n_max: u64) -> Result<Self> {
        let levels = params.injected.clone().ok_or_else(|| {
            MaserError::InvalidParams("no injected resonance levels present".into())
        })?;
        let entries = levels
            .iter()
            .copied()
            .filter(|&n| n >= 1 && n <= n_max)
            .map(|n| Resonance {
                n,
                k: (params.xi * n as f64 + params.eta).sqrt().round() as u64,
            })
            .collect();
        Ok(ResonanceSet {
            entries,
            n_max,
            regime: Regime::Injected(levels),
        })
    }
}

/// Exact enumeration of all resonances `n` in `[1, n_max]`.
///
/// Rejects float-mode parameters.
pub fn find_resonances(params: &DimensionlessParams, n_max: u64) -> Result<ResonanceSet> {
    let (xi, eta) = match &params.exactness {
        Exactness::ExactRational { xi, eta } => (xi, eta),
        Exactness::Float => return Err(MaserError::ExactnessRequired),
    };
    if n_max < 1 {
        return Err(MaserError::InvalidParams("n_max must be >= 1".into()));
    }
    let entries = enumerate_over_n(xi, eta, n_max);
    let regime = if entries.is_empty() {
        Regime::NonResonant
    } else {
        Regime::FullyResonant
    };
    Ok(ResonanceSet {
        entries,
        n_max,
        regime,
    })
}

/// Rational `(xi, eta)` admit zero or infinitely many resonances, so an
/// exact-rational set is classified on emptiness alone.
pub fn classify_regime(rs: &ResonanceSet) -> Regime {
    match &rs.regime {
        Regime::Injected(v) => Regime::Injected(v.clone()),
        _ if rs.entries.is_empty() => Regime::NonResonant,
        _ => Regime::FullyResonant,
    }
}

/// Loop over levels, testing `xi*n + eta` for integrality and squareness.
/// Uses an i128 fast path and falls back to big integers on overflow.
fn enumerate_over_n(xi: &BigRational, eta: &BigRational, n_max: u64) -> Vec<Resonance> {
    let mut out = Vec::new();
    // xi = a/b, eta = c/e in lowest terms; xi*n + eta = (a*e*n + c*b)/(b*e)
    let (a, b) = (xi.numer(), xi.denom());
    let (c, e) = (eta.numer(), eta.denom());
    let small = [a, b, c, e]
        .iter()
        .all(|v| v.to_i128().is_some_and(|x| x.unsigned_abs() < 1 << 40));
    if small {
        let a = a.to_i128().unwrap();
        let b = b.to_i128().unwrap();
        let c = c.to_i128().unwrap();
        let e = e.to_i128().unwrap();
        let den = b * e;
        for n in 1..=n_max {
            let num = a * e * n as i128 + c * b;
            if num >= den && num % den == 0 {
                if let Some(k) = exact_sqrt_i128(num / den) {
                    out.push(Resonance { n, k });
                }
            }
        }
    } else {
        let den = b * e;
        for n in 1..=n_max {
            let num = a * e * BigInt::from(n) + c * b;
            if num >= den && (&num % &den).is_zero() {
                if let Some(k) = exact_sqrt_big(&(num / &den)) {
                    out.push(Resonance { n, k });
                }
            }
        }
    }
    out
}

/// Independent enumeration for cross-checks: iterate over the root `k`,
/// solve `n = (k^2 - eta)/xi`, keep integral solutions in `[1, n_max]`.
pub fn enumerate_over_roots(params: &DimensionlessParams, n_max: u64) -> Result<Vec<Resonance>> {
    let (xi, eta) = params
        .exact_pair()
        .ok_or(MaserError::ExactnessRequired)?;
    let mut out = Vec::new();
    if is_zero_rational(xi) {
        // constant xi*n + eta: every level resonates iff eta is a square
        if eta.is_integer() {
            if let Some(k) = exact_sqrt_big(&eta.to_integer()) {
                if k >= 1 {
                    out = (1..=n_max).map(|n| Resonance { n, k }).collect();
                }
            }
        }
        return Ok(out);
    }
    let bound = xi * BigRational::from(BigInt::from(n_max)) + eta;
    let mut k = BigInt::one();
    loop {
        let k2 = BigRational::from(&k * &k);
        if k2 > bound {
            break;
        }
        let n = (&k2 - eta) / xi;
        if n.is_integer() && n >= BigRational::one() {
            let n = n.to_integer().to_u64().expect("bounded by n_max");
            out.push(Resonance {
                n,
                k: k.to_u64().expect("root bounded"),
            });
        }
        k += 1;
    }
    out.sort_by_key(|r| r.n);
    Ok(out)
}

fn exact_sqrt_i128(v: i128) -> Option<u64> {
    if v < 1 {
        return None;
    }
    let r = (v as f64).sqrt().round() as i128;
    for k in [r - 1, r, r + 1] {
        if k >= 1 && k * k == v {
            return Some(k as u64);
        }
    }
    None
}

fn exact_sqrt_big(v: &BigInt) -> Option<u64> {
    if v < &BigInt::one() {
        return None;
    }
    let r = v.sqrt();
    if &(&r * &r) == v {
        r.to_u64()
    } else {
        None
    }
}

/// One maximal run of levels between consecutive resonances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Sector {
    pub start: u64,
    /// Inclusive end, clamped to the partition bound.
    pub end: u64,
    /// True when no further resonance is known past this sector.
    pub open_ended: bool,
}

impl Sector {
    /// Number of levels in the sector (always at least one).
    pub fn dim(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn contains(&self, n: u64) -> bool {
        n >= self.start && n <= self.end
    }
}

/// Contiguous partition of `{0, ..., n_max}` with cuts exactly at resonances.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SectorPartition {
    pub sectors: Vec<Sector>,
    pub n_max: u64,
}

impl SectorPartition {
    pub fn sector_of(&self, n: u64) -> Option<usize> {
        self.sectors.iter().position(|s| s.contains(n))
    }
}

pub fn sector_partition(rs: &ResonanceSet, n_max: u64) -> SectorPartition {
    let cuts: Vec<u64> = rs
        .entries
        .iter()
        .map(|r| r.n)
        .filter(|&n| n >= 1 && n <= n_max)
        .collect();
    let fully = matches!(rs.regime, Regime::FullyResonant);
    let mut sectors = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0u64;
    for &cut in &cuts {
        if cut > start {
            sectors.push(Sector {
                start,
                end: cut - 1,
                open_ended: false,
            });
        }
        start = cut;
    }
    sectors.push(Sector {
        start,
        end: n_max,
        // a fully resonant system always has another cut beyond the bound
        open_ended: !fully,
    });
    SectorPartition { sectors, n_max }
}

/// Degeneracy data: the set `N = {n in {0} u R : n+1 in R}` and, when at
/// least two sectors have equal length, the pairs whose transition
/// probabilities agree level by level.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DegeneracyReport {
    pub n_set: Vec<u64>,
    pub degenerate: bool,
    /// Pairs of sector indices (into the induced partition) with equal length
    /// and matching alpha profiles within `1e-12`.
    pub matched_sector_pairs: Vec<(usize, usize)>,
}

pub fn degenerate_set(params: &DimensionlessParams, rs: &ResonanceSet) -> DegeneracyReport {
    let mut n_set = Vec::new();
    if rs.contains(1) {
        n_set.push(0);
    }
    for r in &rs.entries {
        if r.n < rs.n_max && rs.contains(r.n + 1) {
            n_set.push(r.n);
        }
    }
    n_set.sort_unstable();
    n_set.dedup();
    let degenerate = n_set.len() >= 2;

    // compare alpha profiles of same-length bounded sectors
    let part = sector_partition(rs, rs.n_max);
    let alpha = |n: u64| -> f64 {
        if n == 0 || rs.contains(n) {
            0.0
        } else {
            alpha_raw(params.xi, params.eta, n)
        }
    };
    let mut matched = Vec::new();
    let bounded: Vec<(usize, &Sector)> = part
        .sectors
        .iter()
        .enumerate()
        .filter(|(i, s)| !s.open_ended && *i + 1 < part.sectors.len())
        .collect();
    for (ai, &(i, si)) in bounded.iter().enumerate() {
        for &(j, sj) in bounded.iter().skip(ai + 1) {
            if si.dim() != sj.dim() {
                continue;
            }
            let dim = si.dim();
            let agree = (0..=dim)
                .all(|o| (alpha(si.start + o) - alpha(sj.start + o)).abs() <= 1e-12);
            if agree {
                matched.push((i, j));
            }
        }
    }

    DegeneracyReport {
        n_set,
        degenerate,
        matched_sector_pairs: matched,
    }
}

/// Brute-force search for degenerate parameter pairs over the integer grid
/// `xi in [1, xi_max]`, `eta in [0, eta_max]`, enumerating resonances up to
/// `n_max`. Returns every pair with `|N(xi, eta)| >= 2` together with its
/// degeneracy set, in scan order.
pub fn search_degenerate(xi_max: u64, eta_max: u64, n_max: u64) -> Vec<(u64, u64, Vec<u64>)> {
    (1..=xi_max)
        .into_par_iter()
        .flat_map_iter(|xi| {
            let mut hits = Vec::new();
            for eta in 0..=eta_max {
                let params = DimensionlessParams::from_rationals(
                    ratio(xi as i64, 1),
                    ratio(eta as i64, 1),
                    1.0,
                    0.0,
                )
                .expect("grid parameters are valid");
                let rs = find_resonances(&params, n_max).expect("exact mode");
                let report = degenerate_set(&params, &rs);
                if report.degenerate {
                    hits.push((xi, eta, report.n_set));
                }
            }
            hits
        })
        .collect()
}
