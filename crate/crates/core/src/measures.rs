//! Exact finite-horizon outcome distributions, total-variation distances,
//! the invariant state-measure, and exact Wasserstein-1 between finitely
//! supported measures on states (trace-norm ground cost, primal optimal
//! transport).


use crate::birth_death::gibbs_measure;
use crate::channel::apply_channel;
use crate::error::{MaserError, Result};
use crate::fock_ops::{trace_norm, DensityMatrix, FactoredOperator, KrausSet, Outcome};

pub mod ot;

/// Hard cap on enumeration horizons: `4^s` words.
pub const MAX_HORIZON: usize = 10;

/// Probabilities of all outcome words of a fixed length, indexed
/// lexicographically with the first letter most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    horizon: usize,
    probs: Vec<f64>,
    /// `1 - sum(probs)`: mass lost through the truncation boundary.
    pub leakage: f64,
}

impl OutcomeDistribution {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn word_index(word: &[Outcome]) -> usize {
        word.iter().fold(0, |acc, y| acc * 4 + y.index())
    }

    pub fn prob(&self, word: &[Outcome]) -> f64 {
        assert_eq!(word.len(), self.horizon);
        self.probs[Self::word_index(word)]
    }

    pub fn word_at(&self, mut index: usize) -> Vec<Outcome> {
        let mut word = vec![Outcome::MinusMinus; self.horizon];
        for slot in word.iter_mut().rev() {
            *slot = Outcome::from_index(index % 4);
            index /= 4;
        }
        word
    }

    /// Words as compact labels, `"-+,+-"` style.
    pub fn word_label(&self, index: usize) -> String {
        self.word_at(index)
            .iter()
            .map(|y| y.label())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Law of the first `s` outcomes starting from `rho`: the probability of a
/// word is `sum_n rho_nn * ||W |n>||^2` for the accumulated factored product
/// `W` of that word (only the diagonal of `rho` enters, because `W*W` is
/// diagonal). The four first-letter subtrees enumerate in parallel and are
/// concatenated in letter order.
pub fn exact_outcome_distribution(
    rho: &DensityMatrix,
    kraus: &KrausSet,
    s: usize,
) -> Result<OutcomeDistribution> {
    if s > MAX_HORIZON {
        return Err(MaserError::HorizonTooLarge(s, MAX_HORIZON));
    }
    let diag = rho.diagonal();
    let identity = FactoredOperator::identity(kraus.d);
    let probs: Vec<f64> = if s == 0 {
        let mut out = Vec::with_capacity(1);
        dfs_words(&identity, 0, kraus, &diag, &mut out);
        out
    } else {
        use rayon::prelude::*;
        Outcome::ALL
            .par_iter()
            .map(|y| {
                let mut out = Vec::with_capacity(4usize.pow(s as u32 - 1));
                dfs_words(&identity.then(kraus.op(*y)), s - 1, kraus, &diag, &mut out);
                out
            })
            .flatten()
            .collect()
    };
    let total: f64 = probs.iter().sum();
    let trace = rho.trace();
    Ok(OutcomeDistribution {
        horizon: s,
        probs,
        leakage: (trace - total).max(0.0),
    })
}

fn dfs_words(
    w: &FactoredOperator,
    remaining: usize,
    kraus: &KrausSet,
    diag: &[f64],
    out: &mut Vec<f64>,
) {
    if remaining == 0 {
        let scale = (2.0 * w.scale_exp as f64).exp2();
        let p: f64 = diag
            .iter()
            .enumerate()
            .map(|(n, &r)| r * w.norm2_at(n))
            .sum();
        out.push(p * scale);
        return;
    }
    for y in Outcome::ALL {
        let next = w.then(kraus.op(y));
        dfs_words(&next, remaining - 1, kraus, diag, out);
    }
}

/// Law of outcomes `t+1, ..., t+s`: the horizon-`s` distribution of the
/// channel-evolved state.
pub fn shifted_distribution(
    rho: &DensityMatrix,
    kraus: &KrausSet,
    t: usize,
    s: usize,
) -> Result<OutcomeDistribution> {
    let mut evolved = rho.clone();
    for _ in 0..t {
        evolved = apply_channel(&evolved, kraus);
    }
    exact_outcome_distribution(&evolved, kraus, s)
}

/// Total variation as half the l1 distance on atoms. Under this convention
/// the outcome laws of two states differ by at most half their trace
/// distance (see the Lipschitz checks in the verification suite).
pub fn tv_distance(d1: &OutcomeDistribution, d2: &OutcomeDistribution) -> Result<f64> {
    if d1.horizon != d2.horizon {
        return Err(MaserError::HorizonMismatch(d1.horizon, d2.horizon));
    }
    Ok(d1
        .probs
        .iter()
        .zip(&d2.probs)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0)
}

/// One atom of a state measure.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportPoint {
    /// Symbolic Fock projector `|n><n|`.
    Fock(usize),
    State(DensityMatrix),
}

impl SupportPoint {
    fn is_diagonal(rho: &DensityMatrix) -> bool {
        rho.band() == 0
    }
}

/// Trace-norm distance between two support points, with closed forms for
/// Fock labels and diagonal states; dense pairs go through the eigensolve.
pub fn support_distance(a: &SupportPoint, b: &SupportPoint) -> f64 {
    use SupportPoint::*;
    match (a, b) {
        (Fock(n), Fock(m)) => {
            if n == m {
                0.0
            } else {
                2.0
            }
        }
        (Fock(n), State(rho)) | (State(rho), Fock(n)) => {
            if *n > rho.dim() {
                // orthogonal supports
                return 1.0 + rho.trace();
            }
            if SupportPoint::is_diagonal(rho) {
                let diag = rho.diagonal();
                diag.iter()
                    .enumerate()
                    .map(|(k, &p)| if k == *n { (p - 1.0).abs() } else { p.abs() })
                    .sum()
            } else {
                let proj = DensityMatrix::fock(*n, rho.dim());
                trace_norm(&(&rho.mat - &proj.mat)).expect("Hermitian difference")
            }
        }
        (State(x), State(y)) => {
            if SupportPoint::is_diagonal(x) && SupportPoint::is_diagonal(y) {
                x.diagonal()
                    .iter()
                    .zip(y.diagonal())
                    .map(|(p, q)| (p - q).abs())
                    .sum()
            } else {
                trace_norm(&(&x.mat - &y.mat)).expect("Hermitian difference")
            }
        }
    }
}

/// Finitely supported probability measure on states.
#[derive(Debug, Clone)]
pub struct StateMeasure {
    pub points: Vec<SupportPoint>,
    pub weights: Vec<f64>,
    /// Mass dropped at construction (e.g. the thermal tail above the
    /// truncation); transport distances add `2 * tail_mass` as a
    /// conservative penalty.
    pub tail_mass: f64,
}

impl StateMeasure {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Merge support points that are exactly equal (Fock labels or
    /// bit-identical matrices), summing weights.
    pub fn merge_duplicates(&mut self) {
        let mut points: Vec<SupportPoint> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (p, &w) in self.points.iter().zip(&self.weights) {
            if let Some(k) = points.iter().position(|q| q == p) {
                weights[k] += w;
            } else {
                points.push(p.clone());
                weights.push(w);
            }
        }
        self.points = points;
        self.weights = weights;
    }
}

/// The invariant measure of the trajectory kernel: Fock atoms carrying the
/// thermal weights (truncated and renormalized, dropped mass recorded).
pub fn nu_inv_measure(theta: f64, d: usize) -> Result<StateMeasure> {
    let gibbs = gibbs_measure(theta, d)?;
    Ok(StateMeasure {
        points: (0..=d).map(SupportPoint::Fock).collect(),
        weights: gibbs.renormalized_weights(),
        tail_mass: gibbs.tail_mass,
    })
}

/// Uniform empirical measure over an ensemble of state snapshots.
pub fn empirical_state_measure(states: &[DensityMatrix]) -> StateMeasure {
    let n = states.len();
    StateMeasure {
        points: states
            .iter()
            .map(|s| SupportPoint::State(s.clone()))
            .collect(),
        weights: vec![1.0 / n as f64; n],
        tail_mass: 0.0,
    }
}

/// Exact Wasserstein-1 distance between two finitely supported state
/// measures under the trace-norm ground cost.
///
/// Weights are scaled to integers (total `10^12`, largest-remainder
/// rounding) and the transportation problem is solved exactly by the
/// network simplex; `2 * tail_mass` of each side is added on top.
pub fn wasserstein1(m1: &StateMeasure, m2: &StateMeasure) -> Result<f64> {
    let s1: f64 = m1.weights.iter().sum();
    let s2: f64 = m2.weights.iter().sum();
    if (s1 - s2).abs() > 1e-9 {
        return Err(MaserError::WeightMismatch(s1, s2));
    }
    if m1.is_empty() || m2.is_empty() {
        return Err(MaserError::InvalidParams("empty measure".into()));
    }
    const SCALE: u64 = 1_000_000_000_000;
    let supply = ot::integer_weights(&m1.weights, SCALE);
    let demand = ot::integer_weights(&m2.weights, SCALE);
    let cost = |i: usize, j: usize| support_distance(&m1.points[i], &m2.points[j]);
    let total = ot::transportation_simplex(&supply, &demand, &cost)?;
    Ok(total / SCALE as f64 + 2.0 * (m1.tail_mass + m2.tail_mass))
}
