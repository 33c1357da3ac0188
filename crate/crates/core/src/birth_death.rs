//! The classical birth-death chain on Fock levels: the trajectory restricted
//! to Fock states moves down with probability `p_- alpha_k`, up with
//! `p_+ alpha_{k+1}`, and stays put otherwise. Resonances split the level set
//! into closed sectors; for `theta > 0` the geometric Gibbs weights are the
//! unique stationary distribution.

use rand::Rng;

use crate::error::{MaserError, Result};
use crate::fock_ops::{KrausSet, Model, Outcome};

/// Per-level outcome weights of the four measurement results, in the fixed
/// sampling order `(-,-), (-,+), (+,-), (+,+)`.
///
/// The weights are exactly the squared Kraus norms on Fock states, so the
/// classical sampler and the full engine draw from bit-identical
/// distributions. `up` at the top level is truncated to zero.
#[derive(Debug, Clone)]
pub struct BDKernel {
    weights: [Vec<f64>; 4],
    d: usize,
}

/// Kernel of the classical chain at truncation `d`.
pub fn build_kernel(model: &Model, d: usize) -> BDKernel {
    BDKernel {
        weights: model.outcome_norms(d),
        d,
    }
}

impl BDKernel {
    pub fn from_kraus(ks: &KrausSet) -> BDKernel {
        BDKernel {
            weights: ks.norms2.clone(),
            d: ks.d,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `p(k, k-1) = p_- alpha_k`.
    pub fn down(&self, k: usize) -> f64 {
        self.weights[1][k]
    }

    /// `p(k, k+1) = p_+ alpha_{k+1}`.
    pub fn up(&self, k: usize) -> f64 {
        self.weights[2][k]
    }

    /// Complement of the single-rounded sum, so `down + up + stay` evaluates
    /// to one exactly.
    pub fn stay(&self, k: usize) -> f64 {
        1.0 - (self.down(k) + self.up(k))
    }

    pub fn outcome_weights(&self, k: usize) -> [f64; 4] {
        [
            self.weights[0][k],
            self.weights[1][k],
            self.weights[2][k],
            self.weights[3][k],
        ]
    }
}

/// Inverse-CDF draw over the four outcome weights. Zero-weight outcomes are
/// never selected: their cumulative interval is empty.
pub(crate) fn sample_outcome(weights: &[f64; 4], rng: &mut impl Rng) -> Outcome {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "no admissible outcome");
    let x = rng.gen::<f64>() * total;
    let mut cum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        if x < cum {
            return Outcome::from_index(i);
        }
    }
    // rounding pushed x past the last cumulative step; take the last
    // outcome that carries weight
    for i in (0..4).rev() {
        if weights[i] > 0.0 {
            return Outcome::from_index(i);
        }
    }
    unreachable!("total > 0 guarantees a positive weight");
}

/// Level of the classical chain; `-1` is the absorbing cemetery reached only
/// by deterministic word evaluation, never by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ChainState {
    pub level: i64,
}

pub const CEMETERY: ChainState = ChainState { level: -1 };

impl ChainState {
    pub fn at(level: usize) -> Self {
        ChainState {
            level: level as i64,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.level < 0
    }
}

/// A finite outcome record.
pub type OutcomeWord = Vec<Outcome>;

/// One sampled step from a live level.
pub fn step_chain(
    state: ChainState,
    kernel: &BDKernel,
    rng: &mut impl Rng,
) -> Result<(ChainState, Outcome)> {
    if state.is_dead() {
        return Err(MaserError::InvalidParams(
            "cannot step from the cemetery state".into(),
        ));
    }
    let k = state.level as usize;
    let y = sample_outcome(&kernel.outcome_weights(k), rng);
    Ok((
        ChainState {
            level: state.level + y.shift(),
        },
        y,
    ))
}

/// Deterministic evaluation of a word on a starting level: apply the shifts
/// letter by letter, dropping to the cemetery as soon as a letter carries
/// zero weight at the current level (annihilation at level 0, either move at
/// a resonance bottom/top, or the truncated upward move at the top level).
pub fn evolve_fock_word(k: usize, word: &[Outcome], kernel: &BDKernel) -> ChainState {
    let mut state = ChainState::at(k);
    for &y in word {
        if state.is_dead() {
            return CEMETERY;
        }
        let w = kernel.outcome_weights(state.level as usize)[y.index()];
        if w == 0.0 {
            return CEMETERY;
        }
        state.level += y.shift();
    }
    state
}

/// Truncated geometric stationary weights `(1 - e^-theta) e^{-k theta}` with
/// the analytic tail mass above `d` recorded.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GibbsMeasure {
    pub weights: Vec<f64>,
    pub theta: f64,
    pub tail_mass: f64,
}

pub fn gibbs_measure(theta: f64, d: usize) -> Result<GibbsMeasure> {
    if theta <= 0.0 {
        return Err(MaserError::NoInvariantMeasure);
    }
    let norm = 1.0 - (-theta).exp();
    let weights = (0..=d).map(|k| norm * (-theta * k as f64).exp()).collect();
    Ok(GibbsMeasure {
        weights,
        theta,
        tail_mass: (-theta * (d + 1) as f64).exp(),
    })
}

impl GibbsMeasure {
    /// Weights rescaled to sum to one on the truncated space.
    pub fn renormalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }
}

/// `max_k |(mu P)(k) - mu(k)|` over interior levels (the top level misses its
/// inflow from above and is excluded).
pub fn stationarity_residual(measure: &GibbsMeasure, kernel: &BDKernel) -> f64 {
    let d = kernel.dim();
    let mu = &measure.weights;
    let mut worst = 0.0_f64;
    for k in 0..d {
        let mut flow = mu[k] * kernel.stay(k);
        if k > 0 {
            flow += mu[k - 1] * kernel.up(k - 1);
        }
        if k < d {
            flow += mu[k + 1] * kernel.down(k + 1);
        }
        worst = worst.max((flow - mu[k]).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock_ops::build_kraus;
    use crate::params::{ratio, DimensionlessParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(xi: (i64, i64), eta: (i64, i64), theta: f64, bound: u64) -> Model {
        let p =
            DimensionlessParams::from_rationals(ratio(xi.0, xi.1), ratio(eta.0, eta.1), theta, 0.4)
                .unwrap();
        Model::new(&p, bound).unwrap()
    }

    fn baseline(d: usize) -> (Model, BDKernel) {
        let m = model((1, 2), (1, 3), 2.0_f64.ln(), d as u64 + 2);
        let k = build_kernel(&m, d);
        (m, k)
    }

    #[test]
    fn kernel_formulas_and_row_sums() {
        let (m, kernel) = baseline(24);
        for k in 0..=24 {
            assert_eq!(
                kernel.down(k) + kernel.up(k) + kernel.stay(k),
                1.0,
                "row {k} must sum to one exactly"
            );
            if k < 24 {
                let a_k = m.eval_alpha(k as u64);
                let a_k1 = m.eval_alpha(k as u64 + 1);
                assert!((kernel.down(k) - m.probs.p_minus * a_k).abs() < 1e-14);
                assert!((kernel.up(k) - m.probs.p_plus * a_k1).abs() < 1e-14);
            }
        }
        assert_eq!(kernel.down(0), 0.0, "alpha_0 = 0");
    }

    #[test]
    fn resonance_zeros_are_exact() {
        let m = model((24, 1), (1, 1), 0.7, 40);
        let kernel = build_kernel(&m, 32);
        // resonances at 1, 2, 5, 7, 12, 15, 22, 26
        for n in [1usize, 2, 5, 7, 12, 15, 22, 26] {
            assert_eq!(kernel.down(n), 0.0);
            assert_eq!(kernel.up(n - 1), 0.0);
        }
    }

    #[test]
    fn injected_resonances_zero_amplitudes_exactly() {
        // float parameters with a user-certified resonance at level 3
        let p = crate::params::DimensionlessParams::from_floats(0.37, 0.11, 0.8, 0.2)
            .unwrap()
            .with_injected(vec![3]);
        let m = Model::new(&p, 20).unwrap();
        let kernel = build_kernel(&m, 16);
        assert_eq!(kernel.down(3), 0.0);
        assert_eq!(kernel.up(2), 0.0);
        assert_eq!(m.eval_alpha(3), 0.0);
        // neighbors keep generic transition weights
        assert!(kernel.down(4) > 0.0);
        assert!(kernel.up(3) > 0.0);
    }

    #[test]
    fn kernel_matches_kraus_norms() {
        let m = model((1, 2), (1, 3), 0.9, 18);
        let ks = build_kraus(m.clone(), 16);
        let a = build_kernel(&m, 16);
        let b = BDKernel::from_kraus(&ks);
        for k in 0..=16 {
            assert_eq!(a.outcome_weights(k), b.outcome_weights(k));
        }
    }

    #[test]
    fn gibbs_geometry_and_tail() {
        let theta = 2.0_f64.ln();
        let g = gibbs_measure(theta, 40).unwrap();
        assert!((g.weights[0] - 0.5).abs() < 1e-15);
        assert!((g.weights[1] - 0.25).abs() < 1e-15);
        for k in 0..40 {
            let ratio = g.weights[k + 1] / g.weights[k];
            assert!(((ratio - (-theta).exp()) / (-theta).exp()).abs() < 1e-14);
        }
        let sum: f64 = g.weights.iter().sum();
        assert!((sum + g.tail_mass - 1.0).abs() < 1e-13);
        assert!(gibbs_measure(0.0, 8).is_err());
        assert!(gibbs_measure(-0.3, 8).is_err());
    }

    #[test]
    fn detailed_balance() {
        let theta = 2.0_f64.ln();
        let (_, kernel) = baseline(48);
        let g = gibbs_measure(theta, 48).unwrap();
        for k in 0..48 {
            let lhs = g.weights[k] * kernel.up(k);
            let rhs = g.weights[k + 1] * kernel.down(k + 1);
            assert!((lhs - rhs).abs() <= 1e-13, "level {k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn gibbs_is_stationary_but_point_mass_is_not() {
        let (_, kernel) = baseline(48);
        let g = gibbs_measure(2.0_f64.ln(), 48).unwrap();
        assert!(stationarity_residual(&g, &kernel) <= 1e-13);

        let mut delta = g.clone();
        delta.weights.iter_mut().for_each(|w| *w = 0.0);
        delta.weights[0] = 1.0;
        assert!(stationarity_residual(&delta, &kernel) > 1e-3);
    }

    #[test]
    fn sampler_never_draws_zero_weight_outcomes() {
        let m = model((24, 1), (1, 1), 0.7, 40);
        let kernel = build_kernel(&m, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // level 0 of the degenerate pair: only (-,-) and (+,+) are open
        let mut state = ChainState::at(0);
        for _ in 0..20_000 {
            let (next, y) = step_chain(state, &kernel, &mut rng).unwrap();
            assert!(matches!(y, Outcome::MinusMinus | Outcome::PlusPlus));
            assert_eq!(next.level, 0);
            state = next;
        }
        assert!(step_chain(CEMETERY, &kernel, &mut rng).is_err());
    }

    #[test]
    fn sector_confinement() {
        // xi = 1, eta = 0: sectors {0}, {1..3}, {4..8}, {9..15}, ...
        let m = model((1, 1), (0, 1), 0.5, 40);
        let kernel = build_kernel(&m, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut state = ChainState::at(6);
        for _ in 0..50_000 {
            let (next, _) = step_chain(state, &kernel, &mut rng).unwrap();
            assert!(
                (4..=8).contains(&next.level),
                "escaped sector: {}",
                next.level
            );
            state = next;
        }
    }

    #[test]
    fn empirical_frequencies_match_kernel_row() {
        let (_, kernel) = baseline(32);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let start = 5usize;
        let n = 1_000_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (_, y) = step_chain(ChainState::at(start), &kernel, &mut rng).unwrap();
            counts[y.index()] += 1;
        }
        let w = kernel.outcome_weights(start);
        let total: f64 = w.iter().sum();
        for i in 0..4 {
            let p = w[i] / total;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let err = (counts[i] as f64 / n as f64 - p).abs();
            assert!(
                err <= 4.0 * sigma + 1e-9,
                "outcome {i}: err {err:.2e} sigma {sigma:.2e}"
            );
        }
    }

    #[test]
    fn ergodic_occupation_matches_gibbs() {
        let theta = 2.0_f64.ln();
        let (_, kernel) = baseline(32);
        let g = gibbs_measure(theta, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut state = ChainState::at(0);
        let burn = 2_000usize;
        let t = 100_000usize;
        let mut occ = vec![0usize; 33];
        for i in 0..burn + t {
            let (next, y) = step_chain(state, &kernel, &mut rng).unwrap();
            assert!(kernel.outcome_weights(state.level as usize)[y.index()] > 0.0);
            state = next;
            if i >= burn {
                occ[state.level as usize] += 1;
            }
        }
        // correlated samples: use a generous multiple of the iid band
        for k in 0..=10 {
            let p = g.weights[k];
            let sigma = (p * (1.0 - p) / t as f64).sqrt();
            let err = (occ[k] as f64 / t as f64 - p).abs();
            assert!(err <= 30.0 * sigma, "level {k}: err {err:.3e} sigma {sigma:.3e}");
        }
    }

    #[test]
    fn word_evaluation_and_extinction() {
        let (_, kernel) = baseline(16);
        // shifts 0, +1 from level 3
        let w = vec![Outcome::MinusMinus, Outcome::PlusMinus];
        assert_eq!(evolve_fock_word(3, &w, &kernel).level, 4);
        // annihilation kills the vacuum
        let w = vec![Outcome::MinusPlus];
        assert_eq!(evolve_fock_word(0, &w, &kernel), CEMETERY);
        // cemetery is absorbing
        let w = vec![Outcome::MinusPlus, Outcome::PlusMinus, Outcome::PlusMinus];
        assert_eq!(evolve_fock_word(0, &w, &kernel), CEMETERY);

        // xi = 24, eta = 1: level 2 is resonant (49 = 7^2), so (-,+) kills it
        let m = model((24, 1), (1, 1), 0.7, 40);
        let kernel = build_kernel(&m, 32);
        assert_eq!(evolve_fock_word(2, &[Outcome::MinusPlus], &kernel), CEMETERY);
    }

    #[test]
    fn translation_property_on_surviving_words() {
        let (_, kernel) = baseline(24);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0usize;
        while checked < 200 {
            use rand::Rng;
            let len = rng.gen_range(1..=12);
            let word: Vec<Outcome> = (0..len)
                .map(|_| Outcome::from_index(rng.gen_range(0..4)))
                .collect();
            let k = rng.gen_range(0usize..6);
            let base = evolve_fock_word(k, &word, &kernel);
            if base.is_dead() {
                continue;
            }
            for m in 1..=3usize {
                let lifted = evolve_fock_word(k + m, &word, &kernel);
                assert_eq!(lifted.level, base.level + m as i64);
            }
            checked += 1;
        }
    }
}
