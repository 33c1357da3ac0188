//! The verification suite: fourteen numbered checks covering stochasticity,
//! the Fock-state identities, factored-vs-dense agreement, Gibbs
//! stationarity, the martingale property, purification and its degenerate
//! failure, outcome-law mixing, the transport-metric convergence proxy, and
//! exact resonance arithmetic.
//!
//! Stochastic checks run at pinned seeds so the suite is deterministic; the
//! regression thresholds are fixed here, not configurable.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::birth_death::{build_kernel, gibbs_measure, stationarity_residual};
use crate::channel::{invariant_state, iterate_channel, resonant_limit};
use crate::fock_ops::{
    alpha_raw, apply_to_density, build_kraus, trace_norm, DensityMatrix, FactoredOperator,
    KrausSet, Model, Outcome,
};
use crate::measures::{
    empirical_state_measure, exact_outcome_distribution, nu_inv_measure, ot, shifted_distribution,
    support_distance, tv_distance, wasserstein1, StateMeasure, SupportPoint,
};
use crate::params::{ratio, DimensionlessParams};
use crate::trajectory::{
    init_trajectory, martingale_residual, purification_gap, run_ensemble, sample_step,
    EnsembleSpec, TrajectoryRecord,
};

#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub millis: u128,
}

impl CriterionResult {
    pub fn render(&self) -> String {
        format!(
            "{} [{:02}] {:<28} {:>7} ms  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.millis,
            self.detail
        )
    }
}

fn finish(
    id: usize,
    name: &'static str,
    start: Instant,
    pass: bool,
    detail: String,
) -> CriterionResult {
    CriterionResult {
        id,
        name,
        pass,
        detail,
        millis: start.elapsed().as_millis(),
    }
}

/// Baseline non-resonant parameters used by the regression anchors.
fn baseline_params() -> DimensionlessParams {
    DimensionlessParams::from_rationals(ratio(1, 2), ratio(1, 3), 2.0_f64.ln(), 0.4)
        .expect("baseline parameters are valid")
}

fn baseline_kraus(d: usize) -> KrausSet {
    let model = Model::new(&baseline_params(), d as u64 + 2).expect("baseline model");
    build_kraus(model, d)
}

fn degenerate_kraus(d: usize) -> KrausSet {
    let p = DimensionlessParams::from_rationals(ratio(24, 1), ratio(1, 1), 0.7, 0.3)
        .expect("degenerate parameters are valid");
    build_kraus(Model::new(&p, d as u64 + 2).expect("model"), d)
}

const ENSEMBLE_SEED: u64 = 8;

/// Shared 200-trajectory baseline ensemble (thermal start, d = 64,
/// T = 5000) used by the purification and transport criteria.
fn shared_baseline_ensemble() -> (KrausSet, Vec<TrajectoryRecord>) {
    let d = 64usize;
    let ks = baseline_kraus(d);
    let rho0 = DensityMatrix::thermal(ks.model.theta, d)
        .expect("theta > 0")
        .renormalized();
    let spec = EnsembleSpec {
        n_traj: 200,
        horizon: 5000,
        checkpoint_every: 2500,
        master_seed: ENSEMBLE_SEED,
        leakage_budget: 1e-9,
        snapshot_times: vec![0, 5000],
    };
    let records = run_ensemble(&rho0, &ks, &spec).expect("baseline ensemble runs");
    (ks, records)
}

pub fn run_all() -> Vec<CriterionResult> {
    let mut out = Vec::with_capacity(14);
    out.push(stochasticity());
    out.push(kraus_fock_identities());
    out.push(factored_vs_dense());
    out.push(gibbs_invariance());
    out.push(martingale_identity());
    let (ks, records) = shared_baseline_ensemble();
    out.push(purification_baseline(&records));
    out.push(law_of_limit_label());
    out.push(outcome_law_mixing());
    out.push(tv_lipschitz_bound());
    out.push(wasserstein_convergence(&ks, &records));
    out.push(degenerate_non_purification());
    out.push(resonant_sector_limit());
    out.push(degenerate_coherence_phase());
    out.push(resonance_arithmetic());
    out.sort_by_key(|r| r.id);
    out
}

/// Criterion 1: Trace preservation: the four Kraus norms sum to one at every interior
/// level, for random parameter sets.
pub fn stochasticity() -> CriterionResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let d = 48usize;
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let xi = rng.gen_range(0.05..8.0);
        let eta = rng.gen_range(0.0..4.0);
        let theta = rng.gen_range(-1.0..2.0);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let params = DimensionlessParams::from_floats(xi, eta, theta, phi).expect("valid");
        let ks = build_kraus(Model::new(&params, d as u64 + 2).expect("model"), d);
        let rep = crate::fock_ops::verify_stochasticity(&ks);
        worst = worst.max(rep.max_deviation);
    }
    finish(
        1,
        "stochasticity",
        start,
        worst <= 1e-12,
        format!("max |sum_y ||V_y|n>||^2 - 1| = {worst:.3e} (tol 1e-12)"),
    )
}

/// Criterion 2: Fock-state norms of the Kraus operators against the closed forms
/// `p_- (1-a_k)`, `p_- a_k`, `p_+ a_(k+1)`, `p_+ (1-a_(k+1))`.
pub fn kraus_fock_identities() -> CriterionResult {
    let start = Instant::now();
    let d = 48usize;
    let grid = [
        DimensionlessParams::from_rationals(ratio(1, 2), ratio(1, 3), 2.0_f64.ln(), 0.4),
        DimensionlessParams::from_rationals(ratio(24, 1), ratio(1, 1), 0.7, 0.3),
        DimensionlessParams::from_rationals(ratio(1, 1), ratio(0, 1), 0.5, 0.0),
        DimensionlessParams::from_floats(0.37, 0.11, 1.1, 2.2),
        DimensionlessParams::from_floats(2.5, 0.75, -0.4, 5.0),
    ];
    let mut worst = 0.0_f64;
    for params in grid {
        let params = params.expect("grid parameters are valid");
        let model = Model::new(&params, d as u64 + 2).expect("model");
        let probs = params.probs();
        let ks = build_kraus(model, d);
        let alpha = |k: u64| {
            if k == 0 || ks.model.is_resonant(k) {
                0.0
            } else {
                alpha_raw(params.xi, params.eta, k)
            }
        };
        for k in 0..d {
            let a_k = alpha(k as u64);
            let a_k1 = alpha(k as u64 + 1);
            let expect = [
                probs.p_minus * (1.0 - a_k),
                probs.p_minus * a_k,
                probs.p_plus * a_k1,
                probs.p_plus * (1.0 - a_k1),
            ];
            for y in Outcome::ALL {
                let got = ks.op(y).norm2_at(k);
                worst = worst.max((got - expect[y.index()]).abs());
            }
        }
    }
    finish(
        2,
        "kraus-fock identities",
        start,
        worst <= 1e-12,
        format!("max norm deviation {worst:.3e} over 5 parameter sets, k < 48 (tol 1e-12)"),
    )
}

/// Criterion 3: Factored words against dense matrix products on random states.
pub fn factored_vs_dense() -> CriterionResult {
    let start = Instant::now();
    let d = 32usize;
    let ks = baseline_kraus(d);
    let dense_ops: Vec<_> = Outcome::ALL.iter().map(|y| ks.dense_op(*y)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let len = rng.gen_range(1..=8usize);
        let word: Vec<Outcome> = (0..len)
            .map(|_| Outcome::from_index(rng.gen_range(0..4)))
            .collect();
        let rho = crate::fock_ops::random_density(d, &mut rng);
        let mut w = FactoredOperator::identity(d);
        let mut dense = nalgebra::DMatrix::<num_complex::Complex64>::identity(d + 1, d + 1);
        for y in &word {
            w = w.then(ks.op(*y));
            dense = &dense_ops[y.index()] * dense;
        }
        let (evolved, _) = apply_to_density(&w, &rho);
        let scale = (2.0 * w.scale_exp as f64).exp2();
        let expected = &dense * &rho.mat * dense.adjoint();
        let norm = expected.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        let err = expected
            .iter()
            .zip(evolved.mat.iter())
            .map(|(e, g)| (e - g * scale).norm())
            .fold(0.0_f64, f64::max);
        worst = worst.max(err / norm.max(1e-300));
    }
    finish(
        3,
        "factored vs dense oracle",
        start,
        worst <= 1e-10,
        format!("max relative error {worst:.3e} over 100 words <= 8 letters (tol 1e-10)"),
    )
}

/// Criterion 4: Detailed balance and stationarity of the geometric weights.
pub fn gibbs_invariance() -> CriterionResult {
    let start = Instant::now();
    let d = 48usize;
    let theta = 2.0_f64.ln();
    let ks = baseline_kraus(d);
    let kernel = build_kernel(&ks.model, d);
    let gibbs = gibbs_measure(theta, d).expect("theta > 0");
    let mut balance = 0.0_f64;
    for k in 0..d {
        balance = balance
            .max((gibbs.weights[k] * kernel.up(k) - gibbs.weights[k + 1] * kernel.down(k + 1)).abs());
    }
    let residual = stationarity_residual(&gibbs, &kernel);
    let pass = balance <= 1e-13 && residual <= 1e-13;
    finish(
        4,
        "gibbs invariance",
        start,
        pass,
        format!("detailed balance {balance:.3e}, stationarity residual {residual:.3e} (tol 1e-13)"),
    )
}

/// Criterion 5: One-step martingale identity along sampled trajectories.
pub fn martingale_identity() -> CriterionResult {
    let start = Instant::now();
    let d = 48usize;
    let ks = baseline_kraus(d);
    let rho0 = DensityMatrix::thermal(ks.model.theta, d)
        .expect("theta > 0")
        .renormalized();
    let mut worst = 0.0_f64;
    for traj in 0..100u64 {
        let mut state = init_trajectory(&rho0, &ks, 505, traj, false).expect("init");
        for _ in 0..1000 {
            sample_step(&mut state, &ks, 1e-6).expect("step");
            worst = worst.max(martingale_residual(&state, &ks).expect("residual"));
        }
    }
    finish(
        5,
        "martingale identity",
        start,
        worst <= 1e-12,
        format!("max one-step residual {worst:.3e} over 100x1000 steps (tol 1e-12)"),
    )
}

/// Criterion 6: Purification regression at the non-resonant baseline: median gap and
/// filter confidence at T = 5000 over 200 trajectories.
pub fn purification_baseline(records: &[TrajectoryRecord]) -> CriterionResult {
    let start = Instant::now();
    let mut gaps: Vec<f64> = records
        .iter()
        .map(|r| r.diagnostics.last().expect("checkpoints").gap)
        .collect();
    let mut confs: Vec<f64> = records.iter().map(|r| r.final_m_max).collect();
    gaps.sort_by(f64::total_cmp);
    confs.sort_by(f64::total_cmp);
    let med_gap = gaps[gaps.len() / 2];
    let med_conf = confs[confs.len() / 2];
    let pass = med_gap <= 0.05 && med_conf >= 0.95;
    finish(
        6,
        "purification baseline",
        start,
        pass,
        format!("median gap {med_gap:.4} (<= 0.05), median m_max {med_conf:.4} (>= 0.95) at T=5000"),
    )
}

/// Criterion 7: Law of the limiting label: the estimator's empirical law at T = 5000
/// matches the diagonal of the initial state within 3-sigma bands.
pub fn law_of_limit_label() -> CriterionResult {
    let start = Instant::now();
    let d = 32usize;
    let ks = baseline_kraus(d);
    let rho0 = DensityMatrix::mixture(&[(0, 0.5), (1, 0.3), (3, 0.2)], d);
    let spec = EnsembleSpec {
        n_traj: 500,
        horizon: 5000,
        checkpoint_every: 5000,
        master_seed: ENSEMBLE_SEED + 1,
        leakage_budget: 1e-9,
        snapshot_times: vec![],
    };
    let records = run_ensemble(&rho0, &ks, &spec).expect("ensemble runs");
    let n = records.len() as f64;
    let mut detail = String::new();
    let mut pass = true;
    for (level, p) in [(0usize, 0.5), (1, 0.3), (3, 0.2)] {
        let hits = records.iter().filter(|r| r.final_n_hat == level).count() as f64;
        let sigma = (p * (1.0 - p) / n).sqrt();
        let dev = (hits / n - p).abs();
        if dev > 3.0 * sigma {
            pass = false;
        }
        detail.push_str(&format!("n={level}: {:.3} vs {p} ({:.1} sigma); ", hits / n, dev / sigma));
    }
    finish(7, "law of the limit label", start, pass, detail)
}

/// Criterion 8: Outcome-law mixing: total variation to the invariant law decreases
/// along t in {0, 10, 100, 1000} and ends below 0.02.
pub fn outcome_law_mixing() -> CriterionResult {
    let start = Instant::now();
    let d = 64usize;
    let ks = baseline_kraus(d);
    let rho0 = DensityMatrix::fock(10, d);
    let inv = invariant_state(ks.model.theta, d)
        .expect("theta > 0")
        .renormalized();
    let reference = exact_outcome_distribution(&inv, &ks, 4).expect("enumeration");
    let mut tvs = Vec::new();
    for t in [0usize, 10, 100, 1000] {
        let shifted = shifted_distribution(&rho0, &ks, t, 4).expect("enumeration");
        tvs.push(tv_distance(&shifted, &reference).expect("same horizon"));
    }
    let decreasing = tvs.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let last = *tvs.last().expect("grid");
    let pass = decreasing && last <= 0.02;
    finish(
        8,
        "outcome-law mixing",
        start,
        pass,
        format!(
            "TV at t=0,10,100,1000: {} (final <= 0.02, non-increasing)",
            tvs.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Criterion 9: Lipschitz continuity of outcome laws in the state: TV bounded by half
/// the trace distance, all horizons up to 6.
pub fn tv_lipschitz_bound() -> CriterionResult {
    let start = Instant::now();
    let d = 24usize;
    let ks = baseline_kraus(d);
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..100 {
        let rho = crate::fock_ops::random_density(d, &mut rng);
        let sigma = crate::fock_ops::random_density(d, &mut rng);
        let bound = trace_norm(&(&rho.mat - &sigma.mat)).expect("Hermitian") / 2.0;
        for s in 1..=6usize {
            let a = exact_outcome_distribution(&rho, &ks, s).expect("enumeration");
            let b = exact_outcome_distribution(&sigma, &ks, s).expect("enumeration");
            let tv = tv_distance(&a, &b).expect("same horizon");
            worst_excess = worst_excess.max(tv - bound);
        }
    }
    finish(
        9,
        "tv lipschitz bound",
        start,
        worst_excess <= 1e-12,
        format!("max (TV - ||rho-sigma||_1/2) = {worst_excess:.3e} over 100 pairs, s <= 6"),
    )
}

/// Criterion 10: Transport-metric convergence proxy: the empirical ensemble measure at
/// T = 5000 is much closer to the invariant measure than at t = 0, and the
/// simplex solver agrees with the dense LP on small instances.
pub fn wasserstein_convergence(ks: &KrausSet, records: &[TrajectoryRecord]) -> CriterionResult {
    let start = Instant::now();
    let d = ks.d;
    let nu = nu_inv_measure(ks.model.theta, d).expect("theta > 0");
    let at = |idx: usize| -> StateMeasure {
        let states: Vec<DensityMatrix> =
            records.iter().map(|r| r.snapshots[idx].1.clone()).collect();
        empirical_state_measure(&states)
    };
    let w_start = wasserstein1(&at(0), &nu).expect("transport");
    let w_end = wasserstein1(&at(1), &nu).expect("transport");

    // independent cross-check of the solver on random instances
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut solver_err = 0.0_f64;
    for _ in 0..5 {
        let n1 = rng.gen_range(10..=30usize);
        let n2 = rng.gen_range(10..=30usize);
        let w1: Vec<f64> = (0..n1).map(|_| rng.gen::<f64>() + 0.01).collect();
        let w2: Vec<f64> = (0..n2).map(|_| rng.gen::<f64>() + 0.01).collect();
        let t1: f64 = w1.iter().sum();
        let t2: f64 = w2.iter().sum();
        let w1: Vec<f64> = w1.iter().map(|w| w / t1).collect();
        let w2: Vec<f64> = w2.iter().map(|w| w / t2).collect();
        let m1 = StateMeasure {
            points: (0..n1).map(SupportPoint::Fock).collect(),
            weights: w1.clone(),
            tail_mass: 0.0,
        };
        let m2 = StateMeasure {
            points: (0..n2).map(|j| SupportPoint::Fock(j + (j % 3))).collect(),
            weights: w2.clone(),
            tail_mass: 0.0,
        };
        let cost = |i: usize, j: usize| support_distance(&m1.points[i], &m2.points[j]);
        let lp = ot::dense_lp_reference(&w1, &w2, &cost).expect("LP solves");
        let ws = wasserstein1(&m1, &m2).expect("simplex solves");
        solver_err = solver_err.max((lp - ws).abs());
    }

    let pass = w_end <= 0.1 && w_end < w_start && solver_err <= 1e-9;
    finish(
        10,
        "wasserstein convergence",
        start,
        pass,
        format!(
            "W1 at t=0: {w_start:.4}, at T=5000: {w_end:.4} (<= 0.1); solver vs LP {solver_err:.2e}"
        ),
    )
}

/// Criterion 11: Degenerate pair: the equal mixture of the two one-dimensional sectors
/// never purifies (gap pinned at 1, only diagonal outcomes occur).
pub fn degenerate_non_purification() -> CriterionResult {
    let start = Instant::now();
    let d = 8usize;
    let ks = degenerate_kraus(d);
    let rho0 = DensityMatrix::mixture(&[(0, 0.5), (1, 0.5)], d);
    let mut state = init_trajectory(&rho0, &ks, ENSEMBLE_SEED + 2, 0, false).expect("init");
    let mut outcomes_ok = true;
    let mut entries_exact = true;
    let mut max_gap_dev = 0.0_f64;
    for t in 1..=10_000usize {
        let y = sample_step(&mut state, &ks, 1e-9).expect("step");
        outcomes_ok &= matches!(y, Outcome::MinusMinus | Outcome::PlusPlus);
        entries_exact &= state.rho.mat[(0, 0)] == num_complex::Complex64::new(0.5, 0.0)
            && state.rho.mat[(1, 1)] == num_complex::Complex64::new(0.5, 0.0);
        if t % 500 == 0 {
            max_gap_dev = max_gap_dev.max((purification_gap(&state) - 1.0).abs());
        }
    }
    max_gap_dev = max_gap_dev.max((purification_gap(&state) - 1.0).abs());
    let pass = outcomes_ok && entries_exact && max_gap_dev <= 1e-12;
    finish(
        11,
        "degenerate non-purification",
        start,
        pass,
        format!(
            "outcomes diagonal: {outcomes_ok}, state frozen exactly: {entries_exact}, \
             max |gap - 1| = {max_gap_dev:.2e} over 10^4 steps"
        ),
    )
}

/// Criterion 12: Resonant sector limit: the channel drives a mixed-sector state to the
/// weighted mixture of local Gibbs states.
pub fn resonant_sector_limit() -> CriterionResult {
    let start = Instant::now();
    // perfect tuning; d = 24 ends just below the resonance at 25 so the top
    // sector is complete and the truncation does not leak
    let d = 24usize;
    let params = DimensionlessParams::from_rationals(ratio(1, 1), ratio(0, 1), 2.0_f64.ln(), 0.4)
        .expect("valid");
    let ks = build_kraus(Model::new(&params, d as u64 + 2).expect("model"), d);
    let rs = crate::resonance::find_resonances(&params, d as u64 + 1).expect("exact");
    let part = crate::resonance::sector_partition(&rs, d as u64);
    let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); d + 1];
    amps[0] = num_complex::Complex64::new(1.0, 0.0);
    amps[2] = num_complex::Complex64::new(1.0, 0.0);
    amps[5] = num_complex::Complex64::new(1.0, 0.0);
    let rho0 = DensityMatrix::pure_state(&amps, d);
    let target = resonant_limit(&rho0, &part, params.theta).expect("normalizable");
    let report = iterate_channel(&rho0, &ks, &target, 1e-3, 50_000).expect("iterates");
    let last = report.distances.last().copied().unwrap_or(f64::NAN);
    finish(
        12,
        "resonant sector limit",
        start,
        report.converged,
        format!(
            "distance to sector mixture {last:.2e} after {} iterations (tol 1e-3)",
            report.iterations
        ),
    )
}

/// Criterion 13: Degenerate coherence phase: the surviving off-diagonal entry rotates
/// by exactly -(tau*eps + pi*xi) per step.
pub fn degenerate_coherence_phase() -> CriterionResult {
    let start = Instant::now();
    let d = 8usize;
    let phi = 0.3_f64;
    let xi = 24.0_f64;
    let ks = degenerate_kraus(d);
    let amps = [
        num_complex::Complex64::new(1.0, 0.0),
        num_complex::Complex64::new(1.0, 0.0),
    ];
    let rho0 = DensityMatrix::pure_state(&amps, d);
    let mut state = init_trajectory(&rho0, &ks, ENSEMBLE_SEED + 3, 0, false).expect("init");
    let step_phase = num_complex::Complex64::from_polar(1.0, -(phi + std::f64::consts::PI * xi));
    let mut worst = 0.0_f64;
    for _ in 0..2000 {
        let prev = state.rho.mat[(1, 0)];
        sample_step(&mut state, &ks, 1e-9).expect("step");
        let cur = state.rho.mat[(1, 0)];
        worst = worst.max((cur - prev * step_phase).norm());
        worst = worst.max((cur.norm() - 0.5).abs());
    }
    finish(
        13,
        "degenerate coherence phase",
        start,
        worst <= 1e-10,
        format!("max per-step phase deviation {worst:.3e} over 2000 steps (tol 1e-10)"),
    )
}

/// Criterion 14: Exact resonance arithmetic: the reference set at (24, 1), its
/// degeneracy set, and the tuned-cavity no-consecutive-resonances property.
pub fn resonance_arithmetic() -> CriterionResult {
    let start = Instant::now();
    let params = DimensionlessParams::from_rationals(ratio(24, 1), ratio(1, 1), 0.7, 0.3)
        .expect("valid");
    let rs = crate::resonance::find_resonances(&params, 30).expect("exact");
    let set_ok = rs.levels() == vec![1, 2, 5, 7, 12, 15, 22, 26];
    let report = crate::resonance::degenerate_set(&params, &rs);
    let n_ok = report.n_set == vec![0, 1] && report.degenerate;

    let mut tuned_ok = true;
    for num in 1..=12i64 {
        for den in 1..=12i64 {
            let p = DimensionlessParams::from_rationals(ratio(num, den), ratio(0, 1), 0.7, 0.0)
                .expect("valid");
            let rs = crate::resonance::find_resonances(&p, 400).expect("exact");
            for r in &rs.entries {
                if rs.contains(r.n + 1) {
                    tuned_ok = false;
                }
            }
        }
    }
    let pass = set_ok && n_ok && tuned_ok;
    finish(
        14,
        "resonance arithmetic",
        start,
        pass,
        format!(
            "R(24,1)|30 correct: {set_ok}, N = {{0,1}}: {n_ok}, \
             tuned cavity never consecutive over 12x12 grid: {tuned_ok}"
        ),
    )
}
