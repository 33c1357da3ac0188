//! Configuration, orchestration and machine-readable outputs.
//!
//! Subcommands: `resonances`, `simulate`, `channel`, `outcomes`,
//! `wasserstein`, `verify`. Exit codes: 0 success, 1 validation error,
//! 2 runtime abort (e.g. truncation overflow), 3 verification-suite failure.
//! All files are written atomically (temp file + rename); time series go to
//! CSV with a header row, summaries to JSON embedding the resolved config and
//! a format version.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::birth_death::{build_kernel, step_chain, ChainState};
use crate::channel::{invariant_state, iterate_channel, resonant_limit};
use crate::error::{ConfigViolation, MaserError, Result};
use crate::fock_ops::{build_kraus, DensityMatrix, KrausSet, Model};
use crate::measures::{
    empirical_state_measure, exact_outcome_distribution, nu_inv_measure, shifted_distribution,
    tv_distance, wasserstein1,
};
use crate::params::{derive_dimensionless, DimensionlessParams, PhysicalParams};
use crate::resonance::{
    classify_regime, degenerate_set, find_resonances, sector_partition,
};
use crate::trajectory::{run_ensemble, EnsembleSpec};
use crate::verify;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_LEAKAGE_BUDGET: f64 = 1e-9;
pub const DEFAULT_GUARD: usize = 16;

/// Raw configuration as read from JSON; every field is validated in
/// [`parse_config`], which reports all violations rather than the first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawConfig {
    pub params: Option<ParamsBlock>,
    pub truncation: Option<usize>,
    pub initial_state: Option<String>,
    pub horizon: Option<usize>,
    pub ensemble: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoint_every: Option<usize>,
    pub output_dir: Option<String>,
    pub leakage_budget: Option<f64>,
    pub truncation_guard: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsBlock {
    pub physical: Option<PhysicalParams>,
    pub dimensionless: Option<DimensionlessBlock>,
}

/// Dimensionless parameters; `xi` and `eta` accept JSON numbers (float mode)
/// or strings like `"24"` and `"1/2"` (exact rationals).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionlessBlock {
    pub xi: serde_json::Value,
    pub eta: serde_json::Value,
    pub theta: f64,
    pub phi: f64,
    #[serde(default)]
    pub injected_resonances: Option<Vec<u64>>,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub params: DimensionlessParams,
    /// Serialized form of the resolved parameters for summaries.
    pub resolved_params: ResolvedParams,
    pub truncation: usize,
    pub initial_state: InitialState,
    pub horizon: usize,
    pub ensemble: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
    pub leakage_budget: f64,
    pub truncation_guard: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedParams {
    pub xi: f64,
    pub eta: f64,
    pub theta: f64,
    pub phi: f64,
    pub exact: bool,
    pub xi_rational: Option<String>,
    pub eta_rational: Option<String>,
    pub injected_resonances: Option<Vec<u64>>,
}

impl ResolvedParams {
    fn from(params: &DimensionlessParams) -> Self {
        let (xr, er) = match params.exact_pair() {
            Some((x, e)) => (Some(x.to_string()), Some(e.to_string())),
            None => (None, None),
        };
        ResolvedParams {
            xi: params.xi,
            eta: params.eta,
            theta: params.theta,
            phi: params.phi,
            exact: params.exact_pair().is_some(),
            xi_rational: xr,
            eta_rational: er,
            injected_resonances: params.injected.clone(),
        }
    }
}

/// Initial-state grammar: `fock:K`, `thermal:THETA`, `mixture:K=W,K=W,...`,
/// `coherentlike:A0,A1,...` (real amplitudes, normalized).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InitialState {
    Fock(usize),
    Thermal(f64),
    Mixture(Vec<(usize, f64)>),
    CoherentLike(Vec<f64>),
}

impl FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("expected KIND:ARGS, got {s:?}"))?;
        match kind {
            "fock" => rest
                .parse::<usize>()
                .map(InitialState::Fock)
                .map_err(|e| format!("fock level: {e}")),
            "thermal" => rest
                .parse::<f64>()
                .map(InitialState::Thermal)
                .map_err(|e| format!("thermal theta: {e}")),
            "mixture" => {
                let mut parts = Vec::new();
                for item in rest.split(',') {
                    let (k, w) = item
                        .split_once('=')
                        .ok_or_else(|| format!("mixture needs K=W entries, got {item:?}"))?;
                    let k = k.parse::<usize>().map_err(|e| format!("level: {e}"))?;
                    let w = w.parse::<f64>().map_err(|e| format!("weight: {e}"))?;
                    if !(w > 0.0) {
                        return Err(format!("weight must be positive, got {w}"));
                    }
                    parts.push((k, w));
                }
                if parts.is_empty() {
                    return Err("mixture needs at least one component".into());
                }
                Ok(InitialState::Mixture(parts))
            }
            "coherentlike" => {
                let amps: std::result::Result<Vec<f64>, _> =
                    rest.split(',').map(|a| a.parse::<f64>()).collect();
                let amps = amps.map_err(|e| format!("amplitude: {e}"))?;
                if amps.iter().all(|a| *a == 0.0) {
                    return Err("at least one amplitude must be nonzero".into());
                }
                Ok(InitialState::CoherentLike(amps))
            }
            other => Err(format!(
                "unknown state kind {other:?} (fock|thermal|mixture|coherentlike)"
            )),
        }
    }
}

impl InitialState {
    pub fn support_max(&self) -> usize {
        match self {
            InitialState::Fock(k) => *k,
            InitialState::Thermal(_) => 0, // full support; guarded by budget
            InitialState::Mixture(parts) => parts.iter().map(|(k, _)| *k).max().unwrap_or(0),
            InitialState::CoherentLike(amps) => amps
                .iter()
                .enumerate()
                .rev()
                .find(|(_, a)| **a != 0.0)
                .map(|(i, _)| i)
                .unwrap_or(0),
        }
    }

    pub fn build(&self, d: usize) -> Result<DensityMatrix> {
        Ok(match self {
            InitialState::Fock(k) => DensityMatrix::fock(*k, d),
            InitialState::Thermal(theta) => DensityMatrix::thermal(*theta, d)?.renormalized(),
            InitialState::Mixture(parts) => DensityMatrix::mixture(parts, d),
            InitialState::CoherentLike(amps) => {
                let amps: Vec<Complex64> =
                    amps.iter().map(|a| Complex64::new(*a, 0.0)).collect();
                DensityMatrix::pure_state(&amps, d)
            }
        })
    }
}

fn parse_rational(v: &serde_json::Value) -> std::result::Result<Option<BigRational>, String> {
    match v {
        serde_json::Value::String(s) => {
            let r = if let Some((num, den)) = s.split_once('/') {
                let num = num.trim().parse::<BigInt>().map_err(|e| e.to_string())?;
                let den = den.trim().parse::<BigInt>().map_err(|e| e.to_string())?;
                if den == BigInt::from(0) {
                    return Err("zero denominator".into());
                }
                BigRational::new(num, den)
            } else {
                BigRational::from(s.trim().parse::<BigInt>().map_err(|e| e.to_string())?)
            };
            Ok(Some(r))
        }
        serde_json::Value::Number(_) => Ok(None),
        other => Err(format!("expected number or rational string, got {other}")),
    }
}

/// Validate a raw JSON config, collecting every violation with its JSON
/// pointer.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text)?;
    let mut bad: Vec<ConfigViolation> = Vec::new();
    let mut push = |pointer: &str, message: String| {
        bad.push(ConfigViolation {
            pointer: pointer.to_string(),
            message,
        })
    };

    let params = match &raw.params {
        None => {
            push("/params", "missing parameter block".into());
            None
        }
        Some(block) => match (&block.physical, &block.dimensionless) {
            (Some(_), Some(_)) => {
                push(
                    "/params",
                    "physical and dimensionless blocks are mutually exclusive".into(),
                );
                None
            }
            (None, None) => {
                push(
                    "/params",
                    "one of physical or dimensionless is required".into(),
                );
                None
            }
            (Some(phys), None) => match derive_dimensionless(phys) {
                Ok(p) => Some(p),
                Err(e) => {
                    push("/params/physical", e.to_string());
                    None
                }
            },
            (None, Some(dl)) => {
                let xi = parse_rational(&dl.xi);
                let eta = parse_rational(&dl.eta);
                match (xi, eta) {
                    (Err(e), _) => {
                        push("/params/dimensionless/xi", e);
                        None
                    }
                    (_, Err(e)) => {
                        push("/params/dimensionless/eta", e);
                        None
                    }
                    (Ok(xi), Ok(eta)) => {
                        let built = match (xi, eta) {
                            (Some(x), Some(e)) => {
                                DimensionlessParams::from_rationals(x, e, dl.theta, dl.phi)
                            }
                            (x, e) => {
                                // any float component forces float mode
                                let xf = x
                                    .map(|r| crate::params::rational_to_f64(&r))
                                    .unwrap_or_else(|| dl.xi.as_f64().unwrap_or(f64::NAN));
                                let ef = e
                                    .map(|r| crate::params::rational_to_f64(&r))
                                    .unwrap_or_else(|| dl.eta.as_f64().unwrap_or(f64::NAN));
                                DimensionlessParams::from_floats(xf, ef, dl.theta, dl.phi)
                            }
                        };
                        match built {
                            Ok(p) => Some(match &dl.injected_resonances {
                                Some(levels) => p.with_injected(levels.clone()),
                                None => p,
                            }),
                            Err(e) => {
                                push("/params/dimensionless", e.to_string());
                                None
                            }
                        }
                    }
                }
            }
        },
    };

    let truncation = raw.truncation.unwrap_or(0);
    if truncation < 1 {
        push("/truncation", "truncation must be at least 1".into());
    }
    let initial_state = match raw.initial_state.as_deref() {
        None => {
            push("/initial_state", "missing initial state".into());
            None
        }
        Some(s) => match InitialState::from_str(s) {
            Ok(st) => Some(st),
            Err(e) => {
                push("/initial_state", e);
                None
            }
        },
    };
    if raw.seed.is_none() {
        push("/seed", "seed is required for reproducible runs".into());
    }
    let guard = raw.truncation_guard.unwrap_or(DEFAULT_GUARD);
    if let Some(st) = &initial_state {
        let support = st.support_max();
        if truncation >= 1 && support + guard > truncation {
            push(
                "/truncation",
                format!(
                    "guard rule violated: initial support {support} + guard {guard} \
                     exceeds truncation {truncation}"
                ),
            );
        }
    }
    let leakage_budget = raw.leakage_budget.unwrap_or(DEFAULT_LEAKAGE_BUDGET);
    if !(leakage_budget > 0.0) {
        push("/leakage_budget", "leakage budget must be positive".into());
    }

    let (Some(params), Some(initial_state)) = (params, initial_state) else {
        return Err(MaserError::Config(bad));
    };
    if !bad.is_empty() {
        return Err(MaserError::Config(bad));
    }
    Ok(RunConfig {
        resolved_params: ResolvedParams::from(&params),
        params,
        truncation,
        initial_state,
        horizon: raw.horizon.unwrap_or(1000),
        ensemble: raw.ensemble.unwrap_or(1),
        seed: raw.seed.unwrap_or(0),
        checkpoint_every: raw.checkpoint_every.unwrap_or(100),
        output_dir: PathBuf::from(raw.output_dir.unwrap_or_else(|| "out".into())),
        leakage_budget,
        truncation_guard: guard,
    })
}

/// Write atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Parser, Debug)]
#[command(
    name = "maser",
    about = "Repeated-interaction maser trajectory simulator and verifier",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate Rabi resonances, sectors and degeneracies (exact arithmetic)
    Resonances(ResonancesArgs),
    /// Run trajectory ensembles (quantum engine or classical chain)
    Simulate(ConfigArgs),
    /// Iterate the averaged channel toward its limit state
    Channel(ChannelArgs),
    /// Exact outcome distributions and total-variation tables
    Outcomes(OutcomesArgs),
    /// Wasserstein-1 curve of an ensemble against the invariant measure
    Wasserstein(ConfigArgs),
    /// Run the full verification suite
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct ResonancesArgs {
    /// Coupling as an exact rational, e.g. "24" or "1/2"
    #[arg(long)]
    xi: String,
    /// Detuning as an exact rational
    #[arg(long)]
    eta: String,
    #[arg(long, default_value_t = 100)]
    n_max: u64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Simulate the classical birth-death reduction instead of the full
    /// engine (per-step CSV)
    #[arg(long, default_value_t = false)]
    classical: bool,
}

#[derive(Args, Debug)]
struct ChannelArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Convergence tolerance in trace norm
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Iteration cap
    #[arg(long, default_value_t = 100_000)]
    t_max: usize,
}

#[derive(Args, Debug)]
struct OutcomesArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Word length for the exact enumeration
    #[arg(long, default_value_t = 4)]
    horizon: usize,
    /// Comma-separated shifts t for the TV table
    #[arg(long, default_value = "0,10,100,1000")]
    shifts: String,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Write the per-criterion report to this JSON file
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Entry point used by the binary and by tests; returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap prints help/version through the error path with status 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Resonances(args) => cmd_resonances(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Channel(args) => cmd_channel(args),
        Command::Outcomes(args) => cmd_outcomes(args),
        Command::Wasserstein(args) => cmd_wasserstein(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                MaserError::TruncationOverflow { step, .. } => {
                    let record = serde_json::json!({
                        "format_version": FORMAT_VERSION,
                        "error": "truncation_overflow",
                        "step": step,
                    });
                    eprintln!("{record}");
                    2
                }
                MaserError::Io(_) | MaserError::Json(_) => 2,
                _ => 1,
            }
        }
    }
}

fn load_config(args_config: &Path, out_dir: Option<PathBuf>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(args_config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = out_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn build_model(cfg: &RunConfig) -> Result<(Model, KrausSet)> {
    let model = Model::new(&cfg.params, cfg.truncation as u64 + 2)?;
    let ks = build_kraus(model.clone(), cfg.truncation);
    Ok((model, ks))
}

fn cmd_resonances(args: ResonancesArgs) -> Result<i32> {
    let xi = parse_rational(&serde_json::Value::String(args.xi.clone()))
        .map_err(MaserError::InvalidParams)?
        .expect("string input yields a rational");
    let eta = parse_rational(&serde_json::Value::String(args.eta.clone()))
        .map_err(MaserError::InvalidParams)?
        .expect("string input yields a rational");
    let params = DimensionlessParams::from_rationals(xi, eta, 1.0, 0.0)?;
    let rs = find_resonances(&params, args.n_max)?;
    let partition = sector_partition(&rs, args.n_max);
    let report = degenerate_set(&params, &rs);
    let out = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "xi": args.xi,
        "eta": args.eta,
        "n_max": args.n_max,
        "resonances": rs.entries,
        "regime": classify_regime(&rs),
        "sectors": partition.sectors,
        "degeneracy": report,
    });
    let text = serde_json::to_string_pretty(&out)?;
    match args.out {
        Some(path) => write_atomic(&path, &text)?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn cmd_simulate(args: ConfigArgs) -> Result<i32> {
    let cfg = load_config(&args.config, args.out_dir)?;
    if args.classical {
        return cmd_simulate_classical(&cfg);
    }
    let (_, ks) = build_model(&cfg)?;
    let rho0 = cfg.initial_state.build(cfg.truncation)?;
    let spec = EnsembleSpec {
        n_traj: cfg.ensemble,
        horizon: cfg.horizon,
        checkpoint_every: cfg.checkpoint_every,
        master_seed: cfg.seed,
        leakage_budget: cfg.leakage_budget,
        snapshot_times: vec![],
    };
    let records = run_ensemble(&rho0, &ks, &spec)?;

    let mut csv = String::from("traj_id,t,n_hat,m_max,gap,gap_bound,purity\n");
    for rec in &records {
        for d in &rec.diagnostics {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                rec.traj_id, d.t, d.n_hat, d.m_max, d.gap, d.gap_bound, d.purity
            )
            .expect("write to string");
        }
    }
    write_atomic(&cfg.output_dir.join("trajectories.csv"), &csv)?;

    let finals: Vec<_> = records
        .iter()
        .map(|r| r.diagnostics.last().expect("at least one checkpoint"))
        .collect();
    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(f64::total_cmp);
        xs[xs.len() / 2]
    };
    let summary = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "n_trajectories": records.len(),
        "median_final_gap": median(finals.iter().map(|d| d.gap).collect()),
        "median_final_m_max": median(finals.iter().map(|d| d.m_max).collect()),
        "final_n_hat_histogram": histogram(records.iter().map(|r| r.final_n_hat)),
    });
    write_atomic(
        &cfg.output_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(0)
}

fn cmd_simulate_classical(cfg: &RunConfig) -> Result<i32> {
    let (model, _) = build_model(cfg)?;
    let kernel = build_kernel(&model, cfg.truncation);
    let start = match cfg.initial_state {
        InitialState::Fock(k) => k,
        _ => {
            return Err(MaserError::InvalidParams(
                "classical simulation starts from a Fock level (fock:K)".into(),
            ))
        }
    };
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = ChainState::at(start);
    let mut csv = String::from("t,level,outcome\n");
    let mut occupation = vec![0u64; cfg.truncation + 1];
    for t in 1..=cfg.horizon {
        let (next, y) = step_chain(state, &kernel, &mut rng)?;
        state = next;
        occupation[state.level as usize] += 1;
        writeln!(csv, "{},{},{}", t, state.level, y.label()).expect("write to string");
    }
    write_atomic(&cfg.output_dir.join("classical.csv"), &csv)?;
    let summary = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "occupation_histogram": occupation,
    });
    write_atomic(
        &cfg.output_dir.join("classical_summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(0)
}

fn cmd_channel(args: ChannelArgs) -> Result<i32> {
    let cfg = load_config(&args.config, args.out_dir)?;
    let (model, ks) = build_model(&cfg)?;
    let rho0 = cfg.initial_state.build(cfg.truncation)?;
    // target: thermal fixed point in the non-resonant case, the
    // sector-resolved limit otherwise
    let target = match cfg.params.exact_pair() {
        Some(_) => {
            let rs = find_resonances(&cfg.params, cfg.truncation as u64 + 1)?;
            if rs.entries.is_empty() {
                invariant_state(model.theta, cfg.truncation)?
            } else {
                let part = sector_partition(&rs, cfg.truncation as u64);
                resonant_limit(&rho0, &part, model.theta)?
            }
        }
        None => invariant_state(model.theta, cfg.truncation)?,
    };
    let report = iterate_channel(&rho0, &ks, &target, args.tol, args.t_max)?;
    let mut csv = String::from("t,distance\n");
    for (t, dist) in report.distances.iter().enumerate() {
        writeln!(csv, "{},{}", t + 1, dist).expect("write to string");
    }
    write_atomic(&cfg.output_dir.join("channel.csv"), &csv)?;
    let summary = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "tol": args.tol,
        "t_max": args.t_max,
        "iterations": report.iterations,
        "converged": report.converged,
        "final_distance": report.distances.last(),
    });
    write_atomic(
        &cfg.output_dir.join("channel_summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(0)
}

fn cmd_outcomes(args: OutcomesArgs) -> Result<i32> {
    let cfg = load_config(&args.config, args.out_dir)?;
    let (model, ks) = build_model(&cfg)?;
    let rho0 = cfg.initial_state.build(cfg.truncation)?;
    let dist = exact_outcome_distribution(&rho0, &ks, args.horizon)?;
    let mut words = serde_json::Map::new();
    for (i, &p) in dist.probs().iter().enumerate() {
        words.insert(dist.word_label(i), serde_json::json!(p));
    }
    let summary = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "horizon": args.horizon,
        "leakage": dist.leakage,
        "distribution": words,
    });
    write_atomic(
        &cfg.output_dir.join("outcomes.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;

    // TV against the invariant state's law along the requested shifts
    let shifts: std::result::Result<Vec<usize>, _> =
        args.shifts.split(',').map(|s| s.trim().parse()).collect();
    let shifts = shifts.map_err(|e| MaserError::InvalidParams(format!("bad shift list: {e}")))?;
    let inv = invariant_state(model.theta, cfg.truncation)?;
    let reference = exact_outcome_distribution(&inv, &ks, args.horizon)?;
    let mut csv = String::from("t,tv_to_invariant\n");
    for t in shifts {
        let shifted = shifted_distribution(&rho0, &ks, t, args.horizon)?;
        writeln!(csv, "{},{}", t, tv_distance(&shifted, &reference)?).expect("write to string");
    }
    write_atomic(&cfg.output_dir.join("outcomes_tv.csv"), &csv)?;
    Ok(0)
}

fn cmd_wasserstein(args: ConfigArgs) -> Result<i32> {
    let cfg = load_config(&args.config, args.out_dir)?;
    let (model, ks) = build_model(&cfg)?;
    let rho0 = cfg.initial_state.build(cfg.truncation)?;
    let stride = cfg.checkpoint_every.max(1);
    let mut snapshot_times: Vec<usize> = (0..=cfg.horizon).step_by(stride).collect();
    if !snapshot_times.contains(&cfg.horizon) {
        snapshot_times.push(cfg.horizon);
    }
    let spec = EnsembleSpec {
        n_traj: cfg.ensemble,
        horizon: cfg.horizon,
        checkpoint_every: stride,
        master_seed: cfg.seed,
        leakage_budget: cfg.leakage_budget,
        snapshot_times: snapshot_times.clone(),
    };
    let records = run_ensemble(&rho0, &ks, &spec)?;
    let nu = nu_inv_measure(model.theta, cfg.truncation)?;
    // transport problems solve in parallel across checkpoints, collected in
    // time order
    use rayon::prelude::*;
    let curve: Vec<(usize, f64)> = snapshot_times
        .par_iter()
        .enumerate()
        .map(|(idx, &t)| {
            let states: Vec<DensityMatrix> = records
                .iter()
                .map(|r| r.snapshots[idx].1.clone())
                .collect();
            let empirical = empirical_state_measure(&states);
            wasserstein1(&empirical, &nu).map(|w1| (t, w1))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("t,w1_to_invariant\n");
    for (t, w1) in &curve {
        writeln!(csv, "{},{}", t, w1).expect("write to string");
    }
    write_atomic(&cfg.output_dir.join("wasserstein.csv"), &csv)?;
    let summary = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "curve": curve,
    });
    write_atomic(
        &cfg.output_dir.join("wasserstein_summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let results = verify::run_all();
    for r in &results {
        println!("{}", r.render());
    }
    if let Some(path) = args.out {
        let report = serde_json::json!({
            "format_version": FORMAT_VERSION,
            "criteria": results,
            "passed": results.iter().all(|r| r.pass),
        });
        write_atomic(&path, &serde_json::to_string_pretty(&report)?)?;
    }
    if results.iter().all(|r| r.pass) {
        Ok(0)
    } else {
        Ok(3)
    }
}

fn histogram(values: impl Iterator<Item = usize>) -> serde_json::Map<String, serde_json::Value> {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0u64) += 1;
    }
    counts
        .into_iter()
        .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"{
        "params": {"dimensionless": {"xi": "1/2", "eta": "1/3", "theta": 0.6931, "phi": 0.4}},
        "truncation": 32,
        "initial_state": "fock:3",
        "horizon": 50,
        "ensemble": 2,
        "seed": 7,
        "checkpoint_every": 25,
        "output_dir": "out"
    }"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_config(VALID).unwrap();
        assert_eq!(cfg.truncation, 32);
        assert_eq!(cfg.initial_state, InitialState::Fock(3));
        assert!(cfg.params.exact_pair().is_some());
        assert!((cfg.params.xi - 0.5).abs() < 1e-15);
        // canonical serialization keeps the resolved parameters
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"xi_rational\":\"1/2\""));
    }

    #[test]
    fn physical_block_derives_dimensionless() {
        let text = r#"{
            "params": {"physical": {"epsilon": 2.0, "epsilon0": 2.0,
                                     "lambda": 0.7, "tau": 1.3, "beta": 0.4}},
            "truncation": 32, "initial_state": "fock:3", "seed": 1
        }"#;
        let cfg = parse_config(text).unwrap();
        assert!(cfg.params.exact_pair().is_none(), "physical input is float mode");
        assert_eq!(cfg.params.eta, 0.0, "tuned cavity has zero detuning");
        assert!((cfg.params.theta - 0.8).abs() < 1e-15);
        let expect_xi = (0.7 * 1.3 / std::f64::consts::PI).powi(2);
        assert!((cfg.params.xi - expect_xi).abs() < 1e-15);
    }

    #[test]
    fn both_param_blocks_rejected_at_pointer() {
        let text = r#"{
            "params": {
                "physical": {"epsilon": 1.0, "epsilon0": 1.0, "lambda": 0.1, "tau": 1.0, "beta": 0.5},
                "dimensionless": {"xi": 1.0, "eta": 0.0, "theta": 0.5, "phi": 0.0}
            },
            "truncation": 32, "initial_state": "fock:3", "seed": 1
        }"#;
        match parse_config(text) {
            Err(MaserError::Config(violations)) => {
                assert!(violations.iter().any(|v| v.pointer == "/params"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn guard_rule_violation_is_named() {
        let text = VALID.replace("\"truncation\": 32", "\"truncation\": 10");
        match parse_config(&text) {
            Err(MaserError::Config(violations)) => {
                let v = violations
                    .iter()
                    .find(|v| v.pointer == "/truncation")
                    .expect("guard violation reported");
                assert!(v.message.contains("guard"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_seed_and_bad_state_collected_together() {
        let text = r#"{
            "params": {"dimensionless": {"xi": 1.0, "eta": 0.0, "theta": 0.5, "phi": 0.0}},
            "truncation": 32,
            "initial_state": "squeezed:3"
        }"#;
        match parse_config(text) {
            Err(MaserError::Config(violations)) => {
                assert!(violations.iter().any(|v| v.pointer == "/seed"));
                assert!(violations.iter().any(|v| v.pointer == "/initial_state"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn initial_state_grammar() {
        assert_eq!(
            InitialState::from_str("mixture:0=0.5,1=0.3,3=0.2").unwrap(),
            InitialState::Mixture(vec![(0, 0.5), (1, 0.3), (3, 0.2)])
        );
        assert_eq!(
            InitialState::from_str("coherentlike:1,1").unwrap(),
            InitialState::CoherentLike(vec![1.0, 1.0])
        );
        assert_eq!(
            InitialState::from_str("thermal:0.693").unwrap(),
            InitialState::Thermal(0.693)
        );
        assert!(InitialState::from_str("fock:").is_err());
        assert!(InitialState::from_str("mixture:0=0").is_err());
        // support levels feed the guard rule
        assert_eq!(
            InitialState::from_str("mixture:0=0.5,9=0.5")
                .unwrap()
                .support_max(),
            9
        );
    }

    #[test]
    fn unknown_subcommand_fails_with_usage() {
        let code = run_command(["maser", "frobnicate"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn atomic_write_creates_parents() {
        let dir = std::env::temp_dir().join(format!("maser-test-{}", std::process::id()));
        let path = dir.join("a/b/file.json");
        write_atomic(&path, "{}").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{}");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
