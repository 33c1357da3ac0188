//! Cross-check of the sampler against the exact word enumeration: empirical
//! frequencies of short outcome words over a large ensemble must match the
//! enumerated law within multinomial bounds.

use maser::fock_ops::{build_kraus, DensityMatrix, Model};
use maser::measures::{exact_outcome_distribution, OutcomeDistribution};
use maser::params::{ratio, DimensionlessParams};
use maser::trajectory::{init_trajectory, sample_step};

#[test]
fn sampled_word_frequencies_match_enumeration() {
    let d = 24usize;
    let params =
        DimensionlessParams::from_rationals(ratio(1, 2), ratio(1, 3), 2.0_f64.ln(), 0.4).unwrap();
    let ks = build_kraus(Model::new(&params, d as u64 + 2).unwrap(), d);
    let s = 3usize;
    let n_traj = 100_000usize;

    // a state with coherences, so the full engine (not only its diagonal
    // restriction) is exercised
    let amps: Vec<num_complex::Complex64> = (0..=4)
        .map(|k| num_complex::Complex64::new(1.0 / (k + 1) as f64, 0.2 * k as f64))
        .collect();
    let rho0 = DensityMatrix::pure_state(&amps, d);
    let exact = exact_outcome_distribution(&rho0, &ks, s).unwrap();

    let mut counts = vec![0u64; 4usize.pow(s as u32)];
    for i in 0..n_traj {
        let mut state = init_trajectory(&rho0, &ks, 4242, i as u64, true).unwrap();
        for _ in 0..s {
            sample_step(&mut state, &ks, 1e-6).unwrap();
        }
        let word = state.history.as_ref().unwrap();
        counts[OutcomeDistribution::word_index(word)] += 1;
    }

    let n = n_traj as f64;
    for (idx, &c) in counts.iter().enumerate() {
        let p = exact.probs()[idx];
        let sigma = (p * (1.0 - p) / n).sqrt();
        let dev = (c as f64 / n - p).abs();
        assert!(
            dev <= 4.0 * sigma + 2.0 / n,
            "word {}: freq {:.5} vs exact {:.5} ({:.1} sigma)",
            exact.word_label(idx),
            c as f64 / n,
            p,
            dev / sigma.max(1e-12)
        );
    }
}
