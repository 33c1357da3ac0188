//! Model parameters: physical inputs, their dimensionless reduction, and the
//! thermal occupation probabilities of the incoming atoms.
//!
//! The dynamics depends on the dimensionless coupling `xi`, detuning `eta` and
//! `theta = beta * epsilon` for all transition probabilities; the phase
//! `phi = tau * epsilon (mod 2pi)` enters only through coherences.

use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{MaserError, Result};

/// Physical parameters, all rates in angular-frequency units.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysicalParams {
    /// Atomic Bohr frequency, > 0.
    pub epsilon: f64,
    /// Cavity mode frequency, > 0.
    pub epsilon0: f64,
    /// Atom-field coupling (half the Rabi frequency).
    pub lambda: f64,
    /// Interaction time of each atom with the cavity, > 0.
    pub tau: f64,
    /// Inverse temperature of the atom beam; any sign.
    pub beta: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.epsilon > 0.0) {
            bad.push("epsilon must be > 0");
        }
        if !(self.epsilon0 > 0.0) {
            bad.push("epsilon0 must be > 0");
        }
        if !(self.tau > 0.0) {
            bad.push("tau must be > 0");
        }
        if !self.lambda.is_finite() || !self.beta.is_finite() {
            bad.push("lambda and beta must be finite");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(MaserError::InvalidParams(bad.join("; ")))
        }
    }

    /// Detuning between the atom and the cavity mode.
    pub fn detuning(&self) -> f64 {
        self.epsilon - self.epsilon0
    }
}

/// How precisely the pair `(xi, eta)` is known.
#[derive(Debug, Clone, PartialEq)]
pub enum Exactness {
    /// `xi` and `eta` as exact rationals in lowest terms; resonance decisions
    /// are made in integer arithmetic.
    ExactRational { xi: BigRational, eta: BigRational },
    /// Floats only; resonance detection is refused rather than approximated.
    Float,
}

/// Dimensionless model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionlessParams {
    /// Dimensionless coupling, >= 0.
    pub xi: f64,
    /// Dimensionless detuning, >= 0.
    pub eta: f64,
    /// theta = beta * epsilon.
    pub theta: f64,
    /// phi = tau * epsilon, reduced mod 2pi.
    pub phi: f64,
    pub exactness: Exactness,
    /// Resonance levels supplied by the user for simply-resonant systems
    /// (irrational parameters with a single known resonance).
    pub injected: Option<Vec<u64>>,
}

impl DimensionlessParams {
    /// Float-mode parameters.
    pub fn from_floats(xi: f64, eta: f64, theta: f64, phi: f64) -> Result<Self> {
        check_xi_eta(xi, eta, theta)?;
        Ok(Self {
            xi,
            eta,
            theta,
            phi: phi.rem_euclid(TAU),
            exactness: Exactness::Float,
            injected: None,
        })
    }

    /// Exact-rational parameters; `xi` and `eta` are reduced to lowest terms.
    pub fn from_rationals(xi: BigRational, eta: BigRational, theta: f64, phi: f64) -> Result<Self> {
        if xi.is_negative() || eta.is_negative() {
            return Err(MaserError::InvalidParams(
                "xi and eta must be non-negative".into(),
            ));
        }
        let xi_f = rational_to_f64(&xi);
        let eta_f = rational_to_f64(&eta);
        check_xi_eta(xi_f, eta_f, theta)?;
        Ok(Self {
            xi: xi_f,
            eta: eta_f,
            theta,
            phi: phi.rem_euclid(TAU),
            exactness: Exactness::ExactRational { xi, eta },
            injected: None,
        })
    }

    /// Declare externally certified resonance levels (simply-resonant case).
    pub fn with_injected(mut self, mut levels: Vec<u64>) -> Self {
        levels.sort_unstable();
        levels.dedup();
        self.injected = Some(levels);
        self
    }

    pub fn probs(&self) -> AtomProbabilities {
        atomic_probabilities(self.theta)
    }

    pub fn exact_pair(&self) -> Option<(&BigRational, &BigRational)> {
        match &self.exactness {
            Exactness::ExactRational { xi, eta } => Some((xi, eta)),
            Exactness::Float => None,
        }
    }
}

fn check_xi_eta(xi: f64, eta: f64, theta: f64) -> Result<()> {
    if !(xi >= 0.0) || !(eta >= 0.0) || !xi.is_finite() || !eta.is_finite() {
        return Err(MaserError::InvalidParams(
            "xi and eta must be finite and non-negative".into(),
        ));
    }
    if !theta.is_finite() {
        return Err(MaserError::InvalidParams("theta must be finite".into()));
    }
    Ok(())
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::MAX);
        let d = r.denom().to_f64().unwrap_or(f64::MAX);
        n / d
    })
}

/// Convenience constructor for small integer rationals.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Probabilities that an atom enters the cavity in its ground (`p_minus`)
/// or excited (`p_plus`) state.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AtomProbabilities {
    pub p_minus: f64,
    pub p_plus: f64,
}

/// `p_minus = 1/(1+e^{-theta})`, `p_plus = 1 - p_minus`.
///
/// The complement form makes the two probabilities sum to 1 bit-exactly.
pub fn atomic_probabilities(theta: f64) -> AtomProbabilities {
    let p_minus = 1.0 / (1.0 + (-theta).exp());
    AtomProbabilities {
        p_minus,
        p_plus: 1.0 - p_minus,
    }
}

/// Dimensionless reduction of physical parameters:
/// `eta = (Delta*tau/2pi)^2`, `xi = (lambda*tau/pi)^2`, `theta = beta*epsilon`,
/// `phi = tau*epsilon mod 2pi`. The result is in float mode.
pub fn derive_dimensionless(phys: &PhysicalParams) -> Result<DimensionlessParams> {
    phys.validate()?;
    let delta = phys.detuning();
    let eta = (delta * phys.tau / TAU).powi(2);
    let xi = (phys.lambda * phys.tau / std::f64::consts::PI).powi(2);
    DimensionlessParams::from_floats(xi, eta, phys.beta * phys.epsilon, phys.tau * phys.epsilon)
}

pub(crate) fn is_zero_rational(r: &BigRational) -> bool {
    r.numer().is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_detuning_gives_zero_eta() {
        let phys = PhysicalParams {
            epsilon: 2.0,
            epsilon0: 2.0,
            lambda: 0.7,
            tau: 1.3,
            beta: 0.4,
        };
        let p = derive_dimensionless(&phys).unwrap();
        assert_eq!(p.eta, 0.0);
    }

    #[test]
    fn unit_coupling_when_lambda_tau_is_pi() {
        let phys = PhysicalParams {
            epsilon: 1.0,
            epsilon0: 0.5,
            lambda: std::f64::consts::PI / 2.0,
            tau: 2.0,
            beta: 0.0,
        };
        let p = derive_dimensionless(&phys).unwrap();
        assert!((p.xi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_detuning_when_delta_tau_is_two_pi() {
        let phys = PhysicalParams {
            epsilon: 1.0 + TAU / 1.5,
            epsilon0: 1.0,
            lambda: 0.1,
            tau: 1.5,
            beta: 0.2,
        };
        let p = derive_dimensionless(&phys).unwrap();
        assert!((p.eta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one_exactly() {
        for theta in [-3.0, -0.1, 0.0, 1e-8, 0.7, 2.0, 50.0] {
            let p = atomic_probabilities(theta);
            assert_eq!(p.p_minus + p.p_plus, 1.0);
            assert!((0.0..=1.0).contains(&p.p_minus));
            assert_eq!(p.p_minus >= p.p_plus, theta >= 0.0);
        }
    }

    #[test]
    fn probabilities_known_values() {
        let p = atomic_probabilities(0.0);
        assert_eq!(p.p_minus, 0.5);
        let p = atomic_probabilities(1e4); // effectively theta -> +inf
        assert_eq!(p.p_minus, 1.0);
        assert_eq!(p.p_plus, 0.0);
        let p = atomic_probabilities(2.0_f64.ln());
        assert!((p.p_minus - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.p_plus - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dimensionless_is_scale_consistent() {
        // scale (lambda, Delta, 1/tau) jointly: lambda*tau and Delta*tau fixed
        let base = PhysicalParams {
            epsilon: 2.0,
            epsilon0: 1.4,
            lambda: 0.9,
            tau: 0.8,
            beta: 0.3,
        };
        let s = 10.0;
        let scaled = PhysicalParams {
            epsilon: base.epsilon * s,
            epsilon0: base.epsilon * s - base.detuning() * s,
            lambda: base.lambda * s,
            tau: base.tau / s,
            beta: base.beta,
        };
        let a = derive_dimensionless(&base).unwrap();
        let b = derive_dimensionless(&scaled).unwrap();
        assert!((a.xi - b.xi).abs() <= 1e-14 * a.xi.max(1.0));
        assert!((a.eta - b.eta).abs() <= 1e-14 * a.eta.max(1.0));
    }

    #[test]
    fn rejects_bad_physicals() {
        let phys = PhysicalParams {
            epsilon: -1.0,
            epsilon0: 1.0,
            lambda: 0.1,
            tau: 1.0,
            beta: 0.0,
        };
        assert!(derive_dimensionless(&phys).is_err());
    }

    #[test]
    fn rational_entry_reduces() {
        let p = DimensionlessParams::from_rationals(ratio(6, 4), ratio(0, 1), 0.5, 0.1).unwrap();
        let (xi, _) = p.exact_pair().unwrap();
        assert_eq!(xi, &ratio(3, 2));
        assert!((p.xi - 1.5).abs() < 1e-15);
    }
}
