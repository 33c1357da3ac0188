//! Truncated Fock-space linear algebra: the scalar functions C, S, alpha, the
//! four Kraus operators in factored form, their action on density matrices,
//! and trace norms.
//!
//! Every operator that appears along a trajectory is of the shape
//! "diagonal function of the number operator composed with a pure level
//! shift". [`FactoredOperator`] stores exactly that, so products and density
//! updates cost O(d) and O(d^2) instead of dense matrix algebra.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{MaserError, Result};
use crate::params::{AtomProbabilities, DimensionlessParams, Exactness};
use crate::resonance::{find_resonances, ResonanceSet};

/// `sin(pi x)/x`, with the series form below `|x| < 1e-4` to avoid
/// cancellation; the limit at `x = 0` is `pi`.
pub(crate) fn sin_pi_over(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let u = PI * x;
        let u2 = u * u;
        PI * (1.0 - u2 / 6.0 + u2 * u2 / 120.0)
    } else {
        (PI * x).sin() / x
    }
}

/// Raw `alpha_k = sin^2(pi sqrt(xi k + eta)) * xi k / (xi k + eta)` with no
/// resonance snapping.
pub(crate) fn alpha_raw(xi: f64, eta: f64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let x2 = xi * k as f64 + eta;
    if x2 <= 0.0 {
        return 0.0;
    }
    let g = sin_pi_over(x2.sqrt());
    (g * g) * xi * k as f64
}

/// Scalar model data shared by every operator construction: float parameters,
/// atom probabilities, and the certified resonance levels at which transition
/// amplitudes are zeroed exactly.
#[derive(Debug, Clone)]
pub struct Model {
    pub xi: f64,
    pub eta: f64,
    pub theta: f64,
    pub phi: f64,
    pub probs: AtomProbabilities,
    /// Certified resonance level -> integer root of `xi*n + eta`.
    resonant: BTreeMap<u64, u64>,
    level_bound: u64,
}

impl Model {
    /// Certify resonances up to `level_bound` (exact enumeration in
    /// exact-rational mode, the injected list otherwise) and snapshot the
    /// float parameters.
    pub fn new(params: &DimensionlessParams, level_bound: u64) -> Result<Self> {
        let resonant: BTreeMap<u64, u64> = match (&params.exactness, &params.injected) {
            (Exactness::ExactRational { .. }, _) => find_resonances(params, level_bound.max(1))?
                .entries
                .iter()
                .map(|r| (r.n, r.k))
                .collect(),
            (Exactness::Float, Some(_)) => ResonanceSet::from_injected(params, level_bound)?
                .entries
                .iter()
                .map(|r| (r.n, r.k))
                .collect(),
            (Exactness::Float, None) => BTreeMap::new(),
        };
        Ok(Model {
            xi: params.xi,
            eta: params.eta,
            theta: params.theta,
            phi: params.phi,
            probs: params.probs(),
            resonant,
            level_bound,
        })
    }

    pub fn is_resonant(&self, n: u64) -> bool {
        self.resonant.contains_key(&n)
    }

    pub fn level_bound(&self) -> u64 {
        self.level_bound
    }

    /// `C(n) = cos(pi x) + i sqrt(eta) sin(pi x)/x` and
    /// `S(n) = sqrt(xi) sin(pi x)/x` with `x = sqrt(xi n + eta)`.
    ///
    /// At a certified resonance `x` is the integer root `k`, so the pair is
    /// snapped to exactly `((-1)^k, 0)`.
    pub fn eval_cs(&self, n: u64) -> (Complex64, f64) {
        if let Some(&k) = self.resonant.get(&n) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            return (Complex64::new(sign, 0.0), 0.0);
        }
        let x2 = self.xi * n as f64 + self.eta;
        let x = x2.sqrt();
        let g = sin_pi_over(x);
        let c = Complex64::new((PI * x).cos(), self.eta.sqrt() * g);
        (c, self.xi.sqrt() * g)
    }

    /// `alpha_k in [0, 1]`; exactly 0 at `k = 0` and at certified resonances.
    pub fn eval_alpha(&self, k: u64) -> f64 {
        if k == 0 || self.is_resonant(k) {
            return 0.0;
        }
        let (_, s) = self.eval_cs(k);
        (s * s * k as f64).clamp(0.0, 1.0)
    }

    /// `||V_y |k>||^2` for the four outcomes in the fixed order
    /// `(-,-), (-,+), (+,-), (+,+)`, truncated at level `d` (the upward
    /// amplitude at the top level is booked as leakage, not as a weight).
    pub fn outcome_norms(&self, d: usize) -> [Vec<f64>; 4] {
        let pm = self.probs.p_minus;
        let pp = self.probs.p_plus;
        let cs: Vec<(Complex64, f64)> = (0..=d as u64 + 1).map(|n| self.eval_cs(n)).collect();
        let mut w = [
            Vec::with_capacity(d + 1),
            Vec::with_capacity(d + 1),
            Vec::with_capacity(d + 1),
            Vec::with_capacity(d + 1),
        ];
        for k in 0..=d {
            let (c_k, s_k) = cs[k];
            let (c_k1, s_k1) = cs[k + 1];
            w[0].push(pm * c_k.norm_sqr());
            w[1].push(pm * s_k * s_k * k as f64);
            w[2].push(if k == d {
                0.0
            } else {
                pp * s_k1 * s_k1 * (k + 1) as f64
            });
            w[3].push(pp * c_k1.norm_sqr());
        }
        w
    }
}

/// Measurement outcome for one atom: entry state then exit state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum Outcome {
    MinusMinus,
    MinusPlus,
    PlusMinus,
    PlusPlus,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::MinusMinus,
        Outcome::MinusPlus,
        Outcome::PlusMinus,
        Outcome::PlusPlus,
    ];

    pub fn index(self) -> usize {
        match self {
            Outcome::MinusMinus => 0,
            Outcome::MinusPlus => 1,
            Outcome::PlusMinus => 2,
            Outcome::PlusPlus => 3,
        }
    }

    pub fn from_index(i: usize) -> Outcome {
        Outcome::ALL[i]
    }

    /// Level shift on Fock states: `(+,-) -> +1`, `(-,+) -> -1`, else 0.
    pub fn shift(self) -> i64 {
        match self {
            Outcome::PlusMinus => 1,
            Outcome::MinusPlus => -1,
            _ => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::MinusMinus => "--",
            Outcome::MinusPlus => "-+",
            Outcome::PlusMinus => "+-",
            Outcome::PlusPlus => "++",
        }
    }

    pub fn from_label(s: &str) -> Option<Outcome> {
        match s {
            "--" => Some(Outcome::MinusMinus),
            "-+" => Some(Outcome::MinusPlus),
            "+-" => Some(Outcome::PlusMinus),
            "++" => Some(Outcome::PlusPlus),
            _ => None,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A complex diagonal in the Fock basis, `values[n] = f(n)`; the closed class
/// containing `C(N)`, `S(N)` and the free phase `e^{-i phi N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalFunction {
    pub values: Vec<Complex64>,
}

impl DiagonalFunction {
    pub fn from_fn(d: usize, f: impl Fn(u64) -> Complex64) -> Self {
        DiagonalFunction {
            values: (0..=d as u64).map(f).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.values.len(), self.values.len(), |i, j| {
            if i == j {
                self.values[i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

impl Model {
    /// `C(N + offset)` on levels `0..=d`.
    pub fn c_diagonal(&self, d: usize, offset: u64) -> DiagonalFunction {
        DiagonalFunction::from_fn(d, |n| self.eval_cs(n + offset).0)
    }

    /// `S(N + offset)` on levels `0..=d`.
    pub fn s_diagonal(&self, d: usize, offset: u64) -> DiagonalFunction {
        DiagonalFunction::from_fn(d, |n| Complex64::new(self.eval_cs(n + offset).1, 0.0))
    }

    /// The free-evolution phase `e^{-i phi N}` on levels `0..=d`.
    pub fn phase_diagonal(&self, d: usize) -> DiagonalFunction {
        DiagonalFunction::from_fn(d, |n| Complex64::from_polar(1.0, -self.phi * n as f64))
    }
}

/// `Op |n> = amp[n] * 2^scale_exp * |n + shift>`, with `amp[n] = 0` whenever
/// the target level leaves the truncated space.
///
/// The power-of-two rescale keeps amplitudes representable over long products;
/// rescaling is exact, so every ratio formed from a factored operator is
/// independent of `scale_exp`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredOperator {
    pub shift: i64,
    pub amp: Vec<Complex64>,
    pub scale_exp: i64,
}

impl FactoredOperator {
    pub fn identity(d: usize) -> Self {
        FactoredOperator {
            shift: 0,
            amp: vec![Complex64::new(1.0, 0.0); d + 1],
            scale_exp: 0,
        }
    }

    /// Truncation level (levels run 0..=d).
    pub fn dim(&self) -> usize {
        self.amp.len() - 1
    }

    /// Apply `later` after `self`: returns `later ∘ self`.
    pub fn then(&self, later: &FactoredOperator) -> FactoredOperator {
        let d = self.dim();
        debug_assert_eq!(d, later.dim());
        let shift = self.shift + later.shift;
        let mut amp = vec![Complex64::new(0.0, 0.0); d + 1];
        for n in 0..=d {
            let mid = n as i64 + self.shift;
            if mid < 0 || mid > d as i64 {
                continue;
            }
            amp[n] = later.amp[mid as usize] * self.amp[n];
        }
        let mut out = FactoredOperator {
            shift,
            amp,
            scale_exp: self.scale_exp + later.scale_exp,
        };
        out.rescale();
        out
    }

    /// Bring `max |amp|` back into `[2^-512, 2^512]` by an exact power-of-two
    /// factor booked in `scale_exp`.
    fn rescale(&mut self) {
        // l-infinity magnitude; norm_sqr would underflow first
        let max = self
            .amp
            .iter()
            .map(|a| a.re.abs().max(a.im.abs()))
            .fold(0.0_f64, f64::max);
        if max == 0.0 {
            return;
        }
        let e = max.log2().floor() as i64;
        if e.abs() > 512 {
            let f = (-(e as f64)).exp2();
            for a in self.amp.iter_mut() {
                *a *= f;
            }
            self.scale_exp += e;
        }
    }

    /// `||Op |n>||^2`, without the booked scale.
    pub fn norm2_at(&self, n: usize) -> f64 {
        self.amp[n].norm_sqr()
    }

    /// Dense matrix of the mantissa part (the booked `2^scale_exp` is not
    /// applied).
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d + 1, d + 1);
        for n in 0..=d {
            let t = n as i64 + self.shift;
            if t >= 0 && t <= d as i64 {
                m[(t as usize, n)] = self.amp[n];
            }
        }
        m
    }
}

/// The four Kraus operators at truncation `d`, their per-level norms, and the
/// boundary defect of the truncated upward amplitude.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub ops: [FactoredOperator; 4],
    /// `norms2[y][k] = ||V_y |k>||^2` (identical zeros to `ops[y].amp`).
    pub norms2: [Vec<f64>; 4],
    /// `p_plus * alpha_{d+1}`: probability mass the top level would send past
    /// the truncation in one step.
    pub boundary_defect: f64,
    pub d: usize,
    pub model: Model,
}

/// Build the Kraus operators:
/// `V_--`: shift 0,  `amp(n) = sqrt(p-) e^{-i phi n} C(n)`;
/// `V_-+`: shift -1, `amp(n) = sqrt(p-) e^{-i phi (n-1)} S(n) sqrt(n)`;
/// `V_+-`: shift +1, `amp(n) = sqrt(p+) e^{-i phi (n+1)} S(n+1) sqrt(n+1)`;
/// `V_++`: shift 0,  `amp(n) = sqrt(p+) e^{-i phi n} conj(C(n+1))`.
///
/// The top-level amplitude of `V_+-` is set to zero and booked as the
/// boundary defect.
pub fn build_kraus(model: Model, d: usize) -> KrausSet {
    assert!(d >= 1, "truncation must allow at least two levels");
    let pm = model.probs.p_minus.sqrt();
    let pp = model.probs.p_plus.sqrt();
    let phi = model.phi;
    let cs: Vec<(Complex64, f64)> = (0..=d as u64 + 1).map(|n| model.eval_cs(n)).collect();
    let phase = |level: i64| Complex64::from_polar(1.0, -phi * level as f64);

    let mut amp_mm = Vec::with_capacity(d + 1);
    let mut amp_mp = Vec::with_capacity(d + 1);
    let mut amp_pm = Vec::with_capacity(d + 1);
    let mut amp_pp = Vec::with_capacity(d + 1);
    for n in 0..=d {
        let (c_n, s_n) = cs[n];
        let (c_n1, s_n1) = cs[n + 1];
        amp_mm.push(phase(n as i64) * c_n * pm);
        amp_mp.push(if n == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            phase(n as i64 - 1) * pm * s_n * (n as f64).sqrt()
        });
        amp_pm.push(if n == d {
            Complex64::new(0.0, 0.0)
        } else {
            phase(n as i64 + 1) * pp * s_n1 * ((n + 1) as f64).sqrt()
        });
        amp_pp.push(phase(n as i64) * c_n1.conj() * pp);
    }

    let norms2 = model.outcome_norms(d);
    let (_, s_top) = cs[d + 1];
    let boundary_defect = model.probs.p_plus * s_top * s_top * (d + 1) as f64;

    KrausSet {
        ops: [
            FactoredOperator {
                shift: 0,
                amp: amp_mm,
                scale_exp: 0,
            },
            FactoredOperator {
                shift: -1,
                amp: amp_mp,
                scale_exp: 0,
            },
            FactoredOperator {
                shift: 1,
                amp: amp_pm,
                scale_exp: 0,
            },
            FactoredOperator {
                shift: 0,
                amp: amp_pp,
                scale_exp: 0,
            },
        ],
        norms2,
        boundary_defect,
        d,
        model,
    }
}

impl KrausSet {
    pub fn op(&self, y: Outcome) -> &FactoredOperator {
        &self.ops[y.index()]
    }

    /// Dense reconstruction of one Kraus operator.
    pub fn dense_op(&self, y: Outcome) -> DMatrix<Complex64> {
        self.op(y).to_dense()
    }
}

/// Truncated density matrix with a running account of the trace mass lost
/// through the top of the space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub mat: DMatrix<Complex64>,
    pub leakage: f64,
    /// All entries with `|i - j| > band` are exactly zero.
    pub(crate) band: usize,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.mat.nrows() - 1
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// Pure Fock state `|k><k|`.
    pub fn fock(k: usize, d: usize) -> Self {
        assert!(k <= d);
        let mut mat = DMatrix::zeros(d + 1, d + 1);
        mat[(k, k)] = Complex64::new(1.0, 0.0);
        DensityMatrix {
            mat,
            leakage: 0.0,
            band: 0,
        }
    }

    /// Diagonal state from non-negative weights (not renormalized).
    pub fn from_diagonal(weights: &[f64]) -> Self {
        let d = weights.len() - 1;
        let mut mat = DMatrix::zeros(d + 1, d + 1);
        for (k, &w) in weights.iter().enumerate() {
            mat[(k, k)] = Complex64::new(w, 0.0);
        }
        DensityMatrix {
            mat,
            leakage: 0.0,
            band: 0,
        }
    }

    /// Statistical mixture of Fock states; weights are renormalized.
    pub fn mixture(components: &[(usize, f64)], d: usize) -> Self {
        let total: f64 = components.iter().map(|&(_, w)| w).sum();
        let mut weights = vec![0.0; d + 1];
        for &(k, w) in components {
            assert!(k <= d, "mixture component above truncation");
            weights[k] += w / total;
        }
        Self::from_diagonal(&weights)
    }

    /// Pure state with the given Fock amplitudes (normalized; padded to d).
    pub fn pure_state(amps: &[Complex64], d: usize) -> Self {
        assert!(amps.len() <= d + 1, "amplitudes above truncation");
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let mut mat = DMatrix::zeros(d + 1, d + 1);
        let support: Vec<usize> = (0..amps.len()).filter(|&i| amps[i].norm_sqr() > 0.0).collect();
        for &i in &support {
            for &j in &support {
                mat[(i, j)] = (amps[i] / norm) * (amps[j] / norm).conj();
            }
        }
        let band = match (support.first(), support.last()) {
            (Some(&a), Some(&b)) => b - a,
            _ => 0,
        };
        DensityMatrix {
            mat,
            leakage: 0.0,
            band,
        }
    }

    /// Truncated thermal state: geometric diagonal with the dropped tail
    /// recorded as leakage. Requires `theta > 0`.
    pub fn thermal(theta: f64, d: usize) -> Result<Self> {
        if theta <= 0.0 {
            return Err(MaserError::NoInvariantMeasure);
        }
        let norm = 1.0 - (-theta).exp();
        let weights: Vec<f64> = (0..=d).map(|k| norm * (-theta * k as f64).exp()).collect();
        let mut rho = Self::from_diagonal(&weights);
        rho.leakage = (-theta * (d + 1) as f64).exp();
        Ok(rho)
    }

    /// Rescale to unit trace (leakage record kept).
    pub fn renormalized(mut self) -> Self {
        let tr = self.trace();
        if tr > 0.0 {
            self.mat /= Complex64::new(tr, 0.0);
        }
        self
    }

    pub fn trace(&self) -> f64 {
        (0..self.mat.nrows()).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.mat.nrows()).map(|i| self.mat[(i, i)].re).collect()
    }

    pub fn purity(&self) -> f64 {
        let n = self.mat.nrows();
        let b = self.band;
        let mut acc = 0.0;
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(n - 1);
            for j in lo..=hi {
                acc += self.mat[(i, j)].norm_sqr();
            }
        }
        acc
    }

    /// Largest level carrying any weight (by row support).
    pub fn support_max(&self) -> usize {
        let n = self.mat.nrows();
        for i in (0..n).rev() {
            for j in 0..n {
                if self.mat[(i, j)].norm_sqr() > 0.0 {
                    return i;
                }
            }
        }
        0
    }

    /// Structural checks: Hermiticity to 1e-12, eigenvalue floor -1e-10,
    /// trace within the leakage window.
    pub fn validate(&self) -> Result<()> {
        let n = self.mat.nrows();
        let mut asym = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                asym = asym.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        if asym > 1e-12 {
            return Err(MaserError::NonHermitian(asym));
        }
        let floor = min_eigenvalue(&self.mat);
        if floor < -1e-10 {
            return Err(MaserError::InvalidParams(format!(
                "negative eigenvalue {floor:.3e}"
            )));
        }
        let tr = self.trace();
        if tr > 1.0 + 1e-10 || tr < 1.0 - self.leakage - 1e-10 {
            return Err(MaserError::InvalidParams(format!(
                "trace {tr} outside [1 - leakage, 1]"
            )));
        }
        Ok(())
    }
}

/// `V rho V*` in O(d * band) using the factored form, together with its trace
/// (the outcome probability when `V` is a Kraus element). The booked
/// power-of-two scale of `V` is not applied.
///
/// Only the upper triangle is computed; the lower one is its mirror, so the
/// output is Hermitian bit-exactly.
pub fn apply_to_density(v: &FactoredOperator, rho: &DensityMatrix) -> (DensityMatrix, f64) {
    let d = rho.dim();
    debug_assert_eq!(d, v.dim());
    let s = v.shift;
    let b = rho.band;
    let mut mat = DMatrix::zeros(d + 1, d + 1);
    for i in 0..=d {
        let ti = i as i64 + s;
        if ti < 0 || ti > d as i64 {
            continue;
        }
        let ai = v.amp[i];
        if ai.norm_sqr() == 0.0 {
            continue;
        }
        // diagonal entries are real: |a_i|^2 rho_ii
        mat[(ti as usize, ti as usize)] = Complex64::new(ai.norm_sqr() * rho.mat[(i, i)].re, 0.0);
        let hi = (i + b).min(d);
        for j in i + 1..=hi {
            let tj = j as i64 + s;
            if tj < 0 || tj > d as i64 {
                continue;
            }
            let z = ai * rho.mat[(i, j)] * v.amp[j].conj();
            mat[(ti as usize, tj as usize)] = z;
            mat[(tj as usize, ti as usize)] = z.conj();
        }
    }
    let out = DensityMatrix {
        mat,
        leakage: rho.leakage,
        band: b,
    };
    let w = out.trace();
    (out, w)
}

/// Trace norm of a Hermitian matrix: sum of absolute eigenvalues.
///
/// Inputs with asymmetry above 1e-8 are rejected. Diagonal matrices short
/// circuit to the absolute row sum; the general case runs a symmetric
/// eigensolve on the real 2m x 2m embedding of the Hermitian matrix.
pub fn trace_norm(a: &DMatrix<Complex64>) -> Result<f64> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(MaserError::InvalidParams("matrix must be square".into()));
    }
    let mut asym = 0.0_f64;
    let mut diagonal = true;
    for i in 0..n {
        asym = asym.max(a[(i, i)].im.abs());
        for j in i + 1..n {
            asym = asym.max((a[(i, j)] - a[(j, i)].conj()).norm());
            if a[(i, j)].norm_sqr() != 0.0 || a[(j, i)].norm_sqr() != 0.0 {
                diagonal = false;
            }
        }
    }
    if asym > 1e-8 {
        return Err(MaserError::NonHermitian(asym));
    }
    if diagonal {
        return Ok((0..n).map(|i| a[(i, i)].re.abs()).sum());
    }
    let eig = hermitian_eigenvalues(a);
    Ok(eig.iter().map(|l| l.abs()).sum::<f64>() / 2.0)
}

/// Eigenvalues of the real symmetric embedding `[[Re, -Im], [Im, Re]]`;
/// each eigenvalue of the Hermitian input appears twice.
fn hermitian_eigenvalues(a: &DMatrix<Complex64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            m[(i, j)] = z.re;
            m[(i + n, j + n)] = z.re;
            m[(i, j + n)] = -z.im;
            m[(i + n, j)] = z.im;
        }
    }
    m.symmetric_eigen().eigenvalues.iter().cloned().collect()
}

/// Smallest eigenvalue of a Hermitian matrix (positivity witness).
pub fn min_eigenvalue(a: &DMatrix<Complex64>) -> f64 {
    hermitian_eigenvalues(a).into_iter().fold(f64::MAX, f64::min)
}

/// Max over levels `n < d` of `|sum_y ||V_y|n>||^2 - 1|`, plus the defect at
/// the truncated top level (which should match `p_plus * alpha_{d+1}`).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StochasticityReport {
    pub max_deviation: f64,
    pub top_level_defect: f64,
}

pub fn verify_stochasticity(ks: &KrausSet) -> StochasticityReport {
    let d = ks.d;
    let mut max_dev = 0.0_f64;
    for n in 0..d {
        let sum: f64 = (0..4).map(|y| ks.norms2[y][n]).sum();
        max_dev = max_dev.max((sum - 1.0).abs());
    }
    let top: f64 = (0..4).map(|y| ks.norms2[y][d]).sum();
    StochasticityReport {
        max_deviation: max_dev,
        top_level_defect: 1.0 - top,
    }
}

/// Random full-band density matrix (`G G*` normalized to unit trace);
/// test and verification input generator.
pub fn random_density(d: usize, rng: &mut impl rand::Rng) -> DensityMatrix {
    let g = DMatrix::from_fn(d + 1, d + 1, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let mut m = &g * g.adjoint();
    let tr: f64 = (0..=d).map(|i| m[(i, i)].re).sum();
    // force the diagonal exactly real so the matrix is Hermitian bit-exactly
    for i in 0..=d {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
    }
    m /= Complex64::new(tr, 0.0);
    DensityMatrix {
        mat: m,
        leakage: 0.0,
        band: d,
    }
}
