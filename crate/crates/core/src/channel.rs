//! The averaged one-interaction channel: `L(rho) = sum_y V_y rho V_y*`, its
//! iteration toward the thermal fixed point, and the sector-resolved limits
//! of the resonant cases.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{MaserError, Result};
use crate::fock_ops::{apply_to_density, trace_norm, DensityMatrix, KrausSet, Outcome};
use crate::resonance::SectorPartition;

/// Distance-to-target log of one channel iteration run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ChannelReport {
    /// `|| L^t(rho) - target ||_1` for `t = 1, 2, ...` (one entry per
    /// applied iteration; stops once within `tol` or at `t_max`).
    pub distances: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// One application of the averaged channel. Trace lost through the top level
/// is added to the leakage account.
pub fn apply_channel(rho: &DensityMatrix, kraus: &KrausSet) -> DensityMatrix {
    let d = rho.dim();
    let mut mat = DMatrix::<Complex64>::zeros(d + 1, d + 1);
    let trace_in = rho.trace();
    let mut trace_out = 0.0;
    for y in Outcome::ALL {
        let (part, w) = apply_to_density(kraus.op(y), rho);
        trace_out += w;
        mat += part.mat;
    }
    DensityMatrix {
        mat,
        leakage: rho.leakage + (trace_in - trace_out).max(0.0),
        band: rho.band(),
    }
}

/// The truncated thermal state `e^{-theta N} (1 - e^{-theta})`, the unique
/// fixed point in the non-resonant case. Requires `theta > 0`; there is no
/// invariant state otherwise.
pub fn invariant_state(theta: f64, d: usize) -> Result<DensityMatrix> {
    DensityMatrix::thermal(theta, d)
}

/// Iterate the channel, recording the trace-norm distance to `target` after
/// every application. Non-convergence within `t_max` is reported in the
/// `converged` flag, not as an error.
pub fn iterate_channel(
    rho0: &DensityMatrix,
    kraus: &KrausSet,
    target: &DensityMatrix,
    tol: f64,
    t_max: usize,
) -> Result<ChannelReport> {
    let mut rho = rho0.clone();
    let mut distances = Vec::new();
    let initial = trace_norm(&(&rho.mat - &target.mat))?;
    if initial <= tol {
        return Ok(ChannelReport {
            distances,
            iterations: 0,
            converged: true,
        });
    }
    let mut converged = false;
    for _ in 0..t_max {
        rho = apply_channel(&rho, kraus);
        let dist = trace_norm(&(&rho.mat - &target.mat))?;
        distances.push(dist);
        if dist <= tol {
            converged = true;
            break;
        }
    }
    Ok(ChannelReport {
        iterations: distances.len(),
        distances,
        converged,
    })
}

/// The long-time limit in the resonant case: the mixture of per-sector Gibbs
/// states weighted by the initial sector populations,
/// `sum_j Tr(rho P_j) e^{-theta N} P_j / Tr(e^{-theta N} P_j)`.
///
/// Sectors that extend past the truncation require `theta > 0` for a
/// normalizable local state.
pub fn resonant_limit(
    rho0: &DensityMatrix,
    sectors: &SectorPartition,
    theta: f64,
) -> Result<DensityMatrix> {
    let d = rho0.dim();
    let diag = rho0.diagonal();
    let mut weights = vec![0.0; d + 1];
    for sector in &sectors.sectors {
        if sector.open_ended && theta <= 0.0 {
            return Err(MaserError::UnnormalizableSector);
        }
        let lo = sector.start as usize;
        let hi = (sector.end as usize).min(d);
        if lo > d {
            continue;
        }
        let population: f64 = diag[lo..=hi].iter().sum();
        if population == 0.0 {
            continue;
        }
        // local Gibbs weights on the sector
        let mut local: Vec<f64> = (lo..=hi)
            .map(|k| (-theta * (k - lo) as f64).exp())
            .collect();
        let norm: f64 = local.iter().sum();
        for w in local.iter_mut() {
            *w *= population / norm;
        }
        for (off, w) in local.into_iter().enumerate() {
            weights[lo + off] = w;
        }
    }
    let mut out = DensityMatrix::from_diagonal(&weights);
    out.leakage = rho0.leakage;
    Ok(out)
}
