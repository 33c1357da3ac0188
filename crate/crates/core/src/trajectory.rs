//! The outcome-conditioned quantum trajectory: sampling, the accumulated
//! factored word, the diagonal martingale that filters the starting Fock
//! level, and purification diagnostics.
//!
//! The martingale is kept as a probability vector `m` over starting levels:
//! `m(n)` is the posterior probability of having started in `|n>` given the
//! outcomes so far, when the start is drawn from the thermal weights. One
//! outcome multiplies `m(n)` by the squared Kraus norm at the level the
//! `n`-trajectory currently occupies; renormalization absorbs the common
//! denominator. `m(n)` hits exactly zero precisely when the accumulated word
//! has annihilated `|n>`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::birth_death::{gibbs_measure, sample_outcome};
use crate::error::{MaserError, Result};
use crate::fock_ops::{
    apply_to_density, trace_norm, DensityMatrix, FactoredOperator, KrausSet, Outcome,
};

/// Posterior over starting Fock levels; non-negative, sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleVector {
    m: Vec<f64>,
}

impl MartingaleVector {
    pub fn from_weights(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        MartingaleVector {
            m: weights.iter().map(|w| w / total).collect(),
        }
    }

    pub fn entries(&self) -> &[f64] {
        &self.m
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Largest entry and its level; ties resolve to the smaller level.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = 0usize;
        let mut best_val = self.m.first().copied().unwrap_or(0.0);
        for (n, &v) in self.m.iter().enumerate().skip(1) {
            if v > best_val {
                best = n;
                best_val = v;
            }
        }
        (best, best_val)
    }

    fn renormalize(&mut self) {
        let total: f64 = self.m.iter().sum();
        if total > 0.0 {
            for v in self.m.iter_mut() {
                *v /= total;
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn corrupt(&mut self, n: usize, value: f64) {
        self.m[n] = value;
    }
}

/// Estimator of the limiting Fock label: the argmax of the martingale vector
/// with its confidence (ties break toward the smaller level).
pub fn estimate_n_infinity(m: &MartingaleVector) -> (usize, f64) {
    m.argmax()
}

/// Full state of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub t: usize,
    /// Normalized posterior state of the cavity.
    pub rho: DensityMatrix,
    /// Accumulated outcome word as a factored operator (rescaled).
    pub w: FactoredOperator,
    pub m: MartingaleVector,
    /// Outcome record, when requested at init.
    pub history: Option<Vec<Outcome>>,
    rng: ChaCha8Rng,
}

/// Start a trajectory. The martingale opens at the truncated, renormalized
/// thermal weights (requires `theta > 0`); the RNG is seeded from
/// `(master_seed, stream)` so ensemble members are independent and
/// reproducible in any execution order.
pub fn init_trajectory(
    rho0: &DensityMatrix,
    kraus: &KrausSet,
    master_seed: u64,
    stream: u64,
    keep_history: bool,
) -> Result<TrajectoryState> {
    let d = kraus.d;
    if rho0.dim() != d {
        return Err(MaserError::InvalidParams(format!(
            "initial state dimension {} does not match truncation {}",
            rho0.dim(),
            d
        )));
    }
    let support = rho0.support_max();
    if support > d {
        return Err(MaserError::GuardViolation {
            support,
            guard: 0,
            d,
        });
    }
    let gibbs = gibbs_measure(kraus.model.theta, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    Ok(TrajectoryState {
        t: 0,
        rho: rho0.clone(),
        w: FactoredOperator::identity(d),
        m: MartingaleVector::from_weights(&gibbs.weights),
        history: keep_history.then(Vec::new),
        rng,
    })
}

impl TrajectoryState {
    /// Outcome weights at the current state: `sum_n ||V_y|n>||^2 rho_nn`.
    ///
    /// On a pure Fock state these are bit-identical to the classical kernel
    /// row, so the engine and the birth-death sampler driven by the same RNG
    /// stream produce the same outcome sequence.
    pub fn outcome_weights(&self, kraus: &KrausSet) -> [f64; 4] {
        let diag = self.rho.diagonal();
        let mut w = [0.0; 4];
        for (y, slot) in w.iter_mut().enumerate() {
            let norms = &kraus.norms2[y];
            let mut acc = 0.0;
            for (n, &p) in diag.iter().enumerate() {
                acc += norms[n] * p;
            }
            *slot = acc;
        }
        w
    }
}

/// Draw one outcome, update the state, the factored word and the martingale.
/// Aborts with `TruncationOverflow` once the cumulative leakage passes the
/// budget.
pub fn sample_step(
    state: &mut TrajectoryState,
    kraus: &KrausSet,
    leakage_budget: f64,
) -> Result<Outcome> {
    let weights = state.outcome_weights(kraus);
    let total: f64 = weights.iter().sum();
    state.rho.leakage += (1.0 - total).max(0.0);
    if state.rho.leakage > leakage_budget {
        return Err(MaserError::TruncationOverflow {
            step: state.t + 1,
            leakage: state.rho.leakage,
            budget: leakage_budget,
        });
    }
    let y = sample_outcome(&weights, &mut state.rng);
    apply_outcome(state, kraus, y);
    Ok(y)
}

/// Deterministic variant of [`sample_step`]: force a given outcome.
pub fn apply_outcome(state: &mut TrajectoryState, kraus: &KrausSet, y: Outcome) {
    let op = kraus.op(y);
    let (out, _) = apply_to_density(op, &state.rho);
    let tr = out.trace();
    debug_assert!(tr > 0.0, "outcome {y} has zero weight at this state");
    let mut rho = out;
    if tr > 0.0 {
        rho.mat /= Complex64::new(tr, 0.0);
    }
    state.rho = rho;

    // likelihood update at the level each starting candidate occupies now
    let s_before = state.w.shift;
    let d = kraus.d as i64;
    let norms = &kraus.norms2[y.index()];
    for (n, v) in state.m.m.iter_mut().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let here = n as i64 + s_before;
        debug_assert!((0..=d).contains(&here), "live level left the truncation");
        *v *= norms[here as usize];
    }
    state.m.renormalize();

    state.w = state.w.then(op);
    state.t += 1;
    if let Some(h) = state.history.as_mut() {
        h.push(y);
    }
}

/// One-step martingale defect: `l1` distance between `m` and the mixture of
/// its four possible successors weighted by the exact conditional outcome
/// probabilities under the thermal reference (computed independently from the
/// accumulated word's amplitudes).
pub fn martingale_residual(state: &TrajectoryState, kraus: &KrausSet) -> Result<f64> {
    let d = kraus.d;
    let gibbs = gibbs_measure(kraus.model.theta, d)?;
    let den: f64 = (0..=d)
        .map(|n| gibbs.weights[n] * state.w.norm2_at(n))
        .sum();
    if den == 0.0 {
        return Err(MaserError::InvalidParams(
            "accumulated word has zero weight under the thermal reference".into(),
        ));
    }
    let s_before = state.w.shift;
    let mut mixed = vec![0.0; d + 1];
    let mut lost = 0.0;
    for y in Outcome::ALL {
        let composed = state.w.then(kraus.op(y));
        let num: f64 = (0..=d)
            .map(|n| gibbs.weights[n] * composed.norm2_at(n))
            .sum();
        let rescale = (2.0 * (composed.scale_exp - state.w.scale_exp) as f64).exp2();
        let w_y = num / den * rescale;
        if w_y == 0.0 {
            continue;
        }
        // successor posterior under outcome y
        let norms = &kraus.norms2[y.index()];
        let mut succ = vec![0.0; d + 1];
        let mut r = 0.0;
        for (n, &v) in state.m.entries().iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let here = n as i64 + s_before;
            if !(0..=d as i64).contains(&here) {
                continue;
            }
            let q = v * norms[here as usize];
            succ[n] = q;
            r += q;
        }
        if r == 0.0 {
            lost += w_y;
            continue;
        }
        for (slot, q) in mixed.iter_mut().zip(succ) {
            *slot += w_y * q / r;
        }
    }
    let residual: f64 = state
        .m
        .entries()
        .iter()
        .zip(&mixed)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(residual + lost)
}

/// Checkpoint diagnostics for one trajectory.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PurificationDiagnostics {
    pub t: usize,
    /// Argmax of the martingale vector.
    pub n_hat: usize,
    /// Its confidence; tends to one when the filter has locked on.
    pub m_max: f64,
    /// Exact trace-norm distance between the state and the evolved Fock
    /// projector at the estimated label.
    pub gap: f64,
    /// Cheap upper bound `2 sqrt(1 - <l|rho|l>)`, available without an
    /// eigensolve.
    pub gap_bound: f64,
    pub purity: f64,
}

/// Trace-norm distance from the state to the evolved Fock projector at the
/// current estimate (the cemetery branch reports the diameter 2; it is
/// unreachable from Fock-supported starts).
pub fn purification_gap(state: &TrajectoryState) -> f64 {
    match target_level(state) {
        Some(level) => {
            let proj = DensityMatrix::fock(level, state.rho.dim());
            trace_norm(&(&state.rho.mat - &proj.mat))
                .expect("difference of Hermitian matrices is Hermitian")
        }
        None => 2.0,
    }
}

fn target_level(state: &TrajectoryState) -> Option<usize> {
    let (n_hat, conf) = state.m.argmax();
    if conf <= 0.0 {
        return None;
    }
    let level = n_hat as i64 + state.w.shift;
    (0..=state.rho.dim() as i64)
        .contains(&level)
        .then_some(level as usize)
}

pub fn diagnostics(state: &TrajectoryState) -> PurificationDiagnostics {
    let (n_hat, m_max) = state.m.argmax();
    let gap_bound = match target_level(state) {
        Some(level) => {
            let occ = state.rho.mat[(level, level)].re;
            2.0 * (1.0 - occ).max(0.0).sqrt()
        }
        None => 2.0,
    };
    PurificationDiagnostics {
        t: state.t,
        n_hat,
        m_max,
        gap: purification_gap(state),
        gap_bound,
        purity: state.rho.purity(),
    }
}

/// Run `horizon` sampled steps, collecting diagnostics every
/// `checkpoint_every` steps and at the final time.
pub fn run_trajectory(
    rho0: &DensityMatrix,
    kraus: &KrausSet,
    horizon: usize,
    master_seed: u64,
    stream: u64,
    checkpoint_every: usize,
    leakage_budget: f64,
) -> Result<(Vec<PurificationDiagnostics>, TrajectoryState)> {
    let mut state = init_trajectory(rho0, kraus, master_seed, stream, false)?;
    let stride = checkpoint_every.max(1);
    let mut out = Vec::new();
    for t in 1..=horizon {
        sample_step(&mut state, kraus, leakage_budget)?;
        if t % stride == 0 || t == horizon {
            out.push(diagnostics(&state));
        }
    }
    if horizon == 0 {
        out.push(diagnostics(&state));
    }
    Ok((out, state))
}

/// Ensemble runner: trajectory `i` draws from the RNG stream
/// `(master_seed, i)`, so results are reproducible and independent of thread
/// count and execution order.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub horizon: usize,
    pub checkpoint_every: usize,
    pub master_seed: u64,
    pub leakage_budget: f64,
    /// Times at which full state snapshots are retained (for transport
    /// distances); memory scales with `n_traj * snapshots`.
    pub snapshot_times: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub traj_id: usize,
    pub diagnostics: Vec<PurificationDiagnostics>,
    pub snapshots: Vec<(usize, DensityMatrix)>,
    pub final_n_hat: usize,
    pub final_m_max: f64,
}

pub fn run_ensemble(
    rho0: &DensityMatrix,
    kraus: &KrausSet,
    spec: &EnsembleSpec,
) -> Result<Vec<TrajectoryRecord>> {
    (0..spec.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut state = init_trajectory(rho0, kraus, spec.master_seed, i as u64, false)?;
            let stride = spec.checkpoint_every.max(1);
            let mut diag = Vec::new();
            let mut snaps = Vec::new();
            if spec.snapshot_times.contains(&0) {
                snaps.push((0usize, state.rho.clone()));
            }
            for t in 1..=spec.horizon {
                sample_step(&mut state, kraus, spec.leakage_budget)?;
                if t % stride == 0 || t == spec.horizon {
                    diag.push(diagnostics(&state));
                }
                if spec.snapshot_times.contains(&t) {
                    snaps.push((t, state.rho.clone()));
                }
            }
            let (n_hat, m_max) = state.m.argmax();
            Ok(TrajectoryRecord {
                traj_id: i,
                diagnostics: diag,
                snapshots: snaps,
                final_n_hat: n_hat,
                final_m_max: m_max,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birth_death::{build_kernel, step_chain, ChainState};
    use crate::fock_ops::{build_kraus, Model};
    use crate::params::{ratio, DimensionlessParams};

    fn kraus(xi: (i64, i64), eta: (i64, i64), theta: f64, phi: f64, d: usize) -> KrausSet {
        let p =
            DimensionlessParams::from_rationals(ratio(xi.0, xi.1), ratio(eta.0, eta.1), theta, phi)
                .unwrap();
        build_kraus(Model::new(&p, d as u64 + 2).unwrap(), d)
    }

    fn baseline(d: usize) -> KrausSet {
        kraus((1, 2), (1, 3), 2.0_f64.ln(), 0.4, d)
    }

    const BUDGET: f64 = 1e-3;

    #[test]
    fn init_opens_at_gibbs_weights() {
        let ks = baseline(32);
        let rho0 = DensityMatrix::fock(5, 32);
        let state = init_trajectory(&rho0, &ks, 1, 0, false).unwrap();
        let g = gibbs_measure(ks.model.theta, 32).unwrap();
        let norm: f64 = g.weights.iter().sum();
        for (n, &m) in state.m.entries().iter().enumerate() {
            assert!((m - g.weights[n] / norm).abs() < 1e-15);
        }
        assert_eq!(state.t, 0);
        assert_eq!(state.rho.mat[(5, 5)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn seed_determinism_is_byte_level() {
        let ks = baseline(24);
        let rho0 = DensityMatrix::thermal(ks.model.theta, 24)
            .unwrap()
            .renormalized();
        let run = |seed: u64| {
            let mut s = init_trajectory(&rho0, &ks, seed, 7, true).unwrap();
            for _ in 0..200 {
                sample_step(&mut s, &ks, BUDGET).unwrap();
            }
            s
        };
        let a = run(99);
        let b = run(99);
        // the accumulated shift agrees with the outcome record
        let s: i64 = a.history.as_ref().unwrap().iter().map(|y| y.shift()).sum();
        assert_eq!(a.w.shift, s);
        assert_eq!(a.history, b.history);
        assert_eq!(a.rho.mat, b.rho.mat);
        assert_eq!(a.m.entries(), b.m.entries());
        assert_eq!(a.w.amp, b.w.amp);
        let c = run(100);
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn fock_start_reproduces_classical_chain_bitwise() {
        let ks = baseline(32);
        let kernel = build_kernel(&ks.model, 32);
        let rho0 = DensityMatrix::fock(4, 32);
        let mut engine = init_trajectory(&rho0, &ks, 5, 3, true).unwrap();
        let mut chain_rng = ChaCha8Rng::seed_from_u64(5);
        chain_rng.set_stream(3);
        let mut level = ChainState::at(4);
        for _ in 0..2000 {
            let y_engine = sample_step(&mut engine, &ks, BUDGET).unwrap();
            let (next, y_chain) = step_chain(level, &kernel, &mut chain_rng).unwrap();
            assert_eq!(y_engine, y_chain);
            level = next;
            // the engine state stays the exact Fock projector at the level
            let l = level.level as usize;
            assert_eq!(engine.rho.mat[(l, l)], Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn martingale_residual_small_along_trajectories() {
        let ks = baseline(48);
        let rho0 = DensityMatrix::thermal(ks.model.theta, 48)
            .unwrap()
            .renormalized();
        let mut state = init_trajectory(&rho0, &ks, 11, 0, false).unwrap();
        assert!(martingale_residual(&state, &ks).unwrap() <= 1e-12);
        for _ in 0..300 {
            sample_step(&mut state, &ks, BUDGET).unwrap();
            let r = martingale_residual(&state, &ks).unwrap();
            assert!(r <= 1e-12, "t = {}: residual {r:.3e}", state.t);
        }
    }

    #[test]
    fn corrupted_martingale_is_detected() {
        let ks = baseline(24);
        let rho0 = DensityMatrix::fock(2, 24);
        let mut state = init_trajectory(&rho0, &ks, 3, 0, false).unwrap();
        for _ in 0..10 {
            sample_step(&mut state, &ks, BUDGET).unwrap();
        }
        state.m.corrupt(3, 0.5);
        assert!(martingale_residual(&state, &ks).unwrap() > 1e-6);
    }

    #[test]
    fn factored_and_dense_evolution_agree() {
        let d = 20usize;
        let ks = baseline(d);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rho0 = crate::fock_ops::random_density(d, &mut rng);
        let mut state = init_trajectory(&rho0, &ks, 19, 0, false).unwrap();
        let mut dense = rho0.mat.clone();
        for _ in 0..50 {
            let y = sample_step(&mut state, &ks, f64::INFINITY).unwrap();
            let v = ks.dense_op(y);
            dense = &v * dense * v.adjoint();
            let tr: Complex64 = (0..=d).map(|i| dense[(i, i)]).sum();
            dense /= tr;
            let err = (&state.rho.mat - &dense)
                .iter()
                .map(|z| z.norm())
                .fold(0.0_f64, f64::max);
            assert!(err <= 1e-10, "t = {}: err {err:.3e}", state.t);
        }
    }

    #[test]
    fn martingale_zeros_match_word_extinction() {
        let ks = kraus((24, 1), (1, 1), 0.7, 0.3, 32);
        let kernel = build_kernel(&ks.model, 32);
        let rho0 = DensityMatrix::fock(3, 32);
        let mut state = init_trajectory(&rho0, &ks, 13, 1, true).unwrap();
        for _ in 0..60 {
            sample_step(&mut state, &ks, BUDGET).unwrap();
            let word = state.history.as_ref().unwrap();
            for n in 0..=32usize {
                let dead = crate::birth_death::evolve_fock_word(n, word, &kernel).is_dead();
                let m_zero = state.m.entries()[n] == 0.0;
                assert_eq!(dead, m_zero, "level {n} at t {}", state.t);
            }
        }
    }

    #[test]
    fn estimator_basics() {
        let m = MartingaleVector::from_weights(&[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(estimate_n_infinity(&m), (2, 1.0));
        let m = MartingaleVector::from_weights(&[1.0; 8]);
        let (n, c) = estimate_n_infinity(&m);
        assert_eq!(n, 0, "ties break toward the smaller level");
        assert!((c - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn gap_values_on_known_states() {
        let ks = baseline(16);
        // pure Fock trajectory: the filter locks on and the gap is zero
        let rho0 = DensityMatrix::fock(3, 16);
        let (diags, state) = run_trajectory(&rho0, &ks, 800, 21, 0, 200, BUDGET).unwrap();
        for d in &diags {
            assert!(d.gap <= d.gap_bound + 1e-12, "bound must dominate the gap");
            assert!((0.0..=2.0).contains(&d.gap));
            assert!(d.m_max >= 1.0 / 17.0 && d.m_max <= 1.0);
            assert!(d.purity > 0.0 && d.purity <= 1.0 + 1e-12);
        }
        let last = diags.last().unwrap();
        assert!(last.gap <= 1e-12, "gap {}", last.gap);
        assert!(last.m_max > 0.99);
        assert!((state.rho.purity() - 1.0).abs() < 1e-12);

        // equal two-level mixture vs either projector: distance one
        let half = DensityMatrix::mixture(&[(2, 0.5), (6, 0.5)], 16);
        let proj = DensityMatrix::fock(2, 16);
        let dist = trace_norm(&(&half.mat - &proj.mat)).unwrap();
        assert!((dist - 1.0).abs() < 1e-12);

        // orthogonal supports: the diameter
        let a = DensityMatrix::mixture(&[(1, 0.5), (2, 0.5)], 16);
        let b = DensityMatrix::fock(9, 16);
        let dist = trace_norm(&(&a.mat - &b.mat)).unwrap();
        assert!((dist - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pair_never_purifies() {
        // both starting levels live in one-dimensional sectors: the state is
        // frozen and stays at distance one from every projector
        let ks = kraus((24, 1), (1, 1), 0.7, 0.3, 8);
        let rho0 = DensityMatrix::mixture(&[(0, 0.5), (1, 0.5)], 8);
        let mut state = init_trajectory(&rho0, &ks, 4, 0, false).unwrap();
        for _ in 0..2000 {
            let y = sample_step(&mut state, &ks, BUDGET).unwrap();
            assert!(matches!(y, Outcome::MinusMinus | Outcome::PlusPlus));
            assert_eq!(state.rho.mat[(0, 0)], Complex64::new(0.5, 0.0));
            assert_eq!(state.rho.mat[(1, 1)], Complex64::new(0.5, 0.0));
        }
        let gap = purification_gap(&state);
        assert!((gap - 1.0).abs() <= 1e-12, "gap {gap}");
    }

    #[test]
    fn degenerate_coherence_phase_advances_uniformly() {
        // (|0> + |1>)/sqrt(2) under the degenerate pair: the off-diagonal
        // entry <1|rho|0> rotates by exactly -(phi + pi*xi) each step
        let phi = 0.3;
        let xi = 24.0;
        let ks = kraus((24, 1), (1, 1), 0.7, phi, 8);
        let amps = [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
        let rho0 = DensityMatrix::pure_state(&amps, 8);
        let mut state = init_trajectory(&rho0, &ks, 6, 0, false).unwrap();
        let step_phase = Complex64::from_polar(1.0, -(phi + std::f64::consts::PI * xi));
        let mut dense = rho0.mat.clone();
        for _ in 0..300 {
            let prev = state.rho.mat[(1, 0)];
            let y = sample_step(&mut state, &ks, BUDGET).unwrap();
            let cur = state.rho.mat[(1, 0)];
            assert!((cur.norm() - 0.5).abs() < 1e-12, "modulus must stay 1/2");
            assert!((cur - prev * step_phase).norm() < 1e-10);
            // against the direct dense Kraus product
            let v = ks.dense_op(y);
            dense = &v * dense * v.adjoint();
            let tr: Complex64 = (0..=8).map(|i| dense[(i, i)]).sum();
            dense /= tr;
            assert!((dense[(1, 0)] - cur).norm() < 1e-10);
        }
    }

    #[test]
    fn scale_freeness_of_diagnostics() {
        let ks = baseline(24);
        let rho0 = DensityMatrix::thermal(ks.model.theta, 24)
            .unwrap()
            .renormalized();
        let mut state = init_trajectory(&rho0, &ks, 77, 2, false).unwrap();
        for _ in 0..100 {
            sample_step(&mut state, &ks, BUDGET).unwrap();
        }
        let mut rescaled = state.clone();
        rescaled.w.scale_exp -= 300; // pretend an extra booked factor
        let a = diagnostics(&state);
        let b = diagnostics(&rescaled);
        assert_eq!(a.gap, b.gap);
        assert_eq!(a.n_hat, b.n_hat);
        assert_eq!(a.m_max, b.m_max);
        assert_eq!(
            martingale_residual(&state, &ks).unwrap(),
            martingale_residual(&rescaled, &ks).unwrap()
        );
    }

    #[test]
    fn long_runs_trigger_rescale_but_stay_finite() {
        let ks = baseline(24);
        let rho0 = DensityMatrix::fock(2, 24);
        let mut state = init_trajectory(&rho0, &ks, 15, 0, false).unwrap();
        for _ in 0..20_000 {
            sample_step(&mut state, &ks, BUDGET).unwrap();
        }
        assert_ne!(state.w.scale_exp, 0, "rescaling must have triggered");
        let max = state
            .w
            .amp
            .iter()
            .map(|a| a.norm())
            .fold(0.0_f64, f64::max);
        assert!(max.is_finite() && max > 0.0);
        let r = martingale_residual(&state, &ks).unwrap();
        assert!(r <= 1e-12, "residual {r:.3e}");
    }

    #[test]
    fn ensemble_is_order_independent_and_reproducible() {
        let ks = baseline(16);
        let rho0 = DensityMatrix::thermal(ks.model.theta, 16)
            .unwrap()
            .renormalized();
        let spec = EnsembleSpec {
            n_traj: 8,
            horizon: 120,
            checkpoint_every: 40,
            master_seed: 42,
            leakage_budget: BUDGET,
            snapshot_times: vec![120],
        };
        let a = run_ensemble(&rho0, &ks, &spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| run_ensemble(&rho0, &ks, &spec)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.traj_id, y.traj_id);
            assert_eq!(x.final_n_hat, y.final_n_hat);
            assert_eq!(x.snapshots[0].1.mat, y.snapshots[0].1.mat);
        }
        // single trajectory run matches its ensemble member
        let (_, solo) = run_trajectory(&rho0, &ks, 120, 42, 3, 40, BUDGET).unwrap();
        assert_eq!(solo.rho.mat, a[3].snapshots[0].1.mat);
    }

    #[test]
    fn empirical_law_of_estimate_matches_diagonal() {
        // the estimator's law approaches the diagonal of rho0
        let d = 24usize;
        let ks = baseline(d);
        let rho0 = DensityMatrix::mixture(&[(0, 0.5), (1, 0.3), (3, 0.2)], d);
        let spec = EnsembleSpec {
            n_traj: 150,
            horizon: 600,
            checkpoint_every: 600,
            master_seed: 7,
            leakage_budget: BUDGET,
            snapshot_times: vec![],
        };
        let recs = run_ensemble(&rho0, &ks, &spec).unwrap();
        let mut counts = [0usize; 4];
        for r in &recs {
            match r.final_n_hat {
                0 => counts[0] += 1,
                1 => counts[1] += 1,
                3 => counts[2] += 1,
                _ => counts[3] += 1,
            }
        }
        let n = recs.len() as f64;
        for (got, want) in counts.iter().zip([0.5, 0.3, 0.2, 0.0]) {
            let sigma = (want * (1.0 - want) / n).sqrt().max(0.02);
            assert!(
                ((*got as f64 / n) - want).abs() <= 4.0 * sigma,
                "law mismatch: {counts:?}"
            );
        }
    }

    #[test]
    fn truncation_overflow_aborts_with_step_index() {
        // tiny space, state at the top: upward leakage accumulates fast
        let ks = kraus((1, 2), (1, 3), 0.05, 0.4, 3);
        let rho0 = DensityMatrix::fock(3, 3);
        let mut state = init_trajectory(&rho0, &ks, 1, 0, false).unwrap();
        let mut hit = None;
        for _ in 0..10_000 {
            match sample_step(&mut state, &ks, 1e-6) {
                Ok(_) => {}
                Err(MaserError::TruncationOverflow { step, .. }) => {
                    hit = Some(step);
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(hit.is_some(), "leakage budget never tripped");
    }

    #[test]
    fn state_updates_keep_exact_hermiticity() {
        let ks = baseline(12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho0 = crate::fock_ops::random_density(12, &mut rng);
        let mut state = init_trajectory(&rho0, &ks, 3, 0, false).unwrap();
        for _ in 0..500 {
            sample_step(&mut state, &ks, f64::INFINITY).unwrap();
        }
        let m = &state.rho.mat;
        let mut asym: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        assert_eq!(asym, 0.0, "mirror update keeps the matrix Hermitian");
    }
}
