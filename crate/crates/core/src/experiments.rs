//! Commands behind the CLI. Each one writes plain CSV files that start with
//! `#` comment lines carrying the config hash and seed, so that a file can
//! be traced back to the run that produced it.
//!
//! Schemas:
//!
//! * `iteration_convergence.csv`: `k,t,c0,c1,delta_sup`, one block per
//!   recorded iterate.
//! * `default_curve.csv`: `t,D`.
//! * `compare.csv`: `t,D_tilde,D_particle,D_fixedpoint,se_tilde,se_particle`.
//! * `simulate.csv`: `t,survival,D,se,c1` (plus `mollified_mass` for the
//!   smoothed system).
//! * `trajectories.csv`: `t,x_0,...` when `record_paths` is set.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{analytic_survival_bm, holder_constant, loglog_slope, wasserstein1};
use crate::coefficients::{
    equilibrium_coefficients, equilibrium_strategy, holding_coefficients, holding_residual, solve_c1,
    Drift, DriftVolSpec, SignRegime, Volatility, WeightedMeasure, C1_TOLERANCE,
};
use crate::config::ExperimentConfig;
use crate::curve::{sup_gap, uniform_grid};
use crate::error::{Error, Result};
use crate::fixed_point::{
    fixed_point_default_curve, initial_guess, iterate_with, restart_correction_inverse,
    restart_correction_stieltjes, BankConfig, CHECKPOINTS,
};
use crate::particles::{simulate, simulate_smoothed, AbsorptionScheme, InitialLaw, PathRecord, StepMode};

/// Wall-clock budget for the validation suite.
pub const VALIDATION_BUDGET: Duration = Duration::from_secs(300);

fn header(config: &ExperimentConfig, command: &str) -> Vec<String> {
    vec![
        format!("# command = {command}"),
        format!("# config_hash = {}", config.hash()),
        format!("# seed = {}", config.seed),
    ]
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn row(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub files: Vec<PathBuf>,
    /// Iterates written to `iteration_convergence.csv`.
    pub recorded: Vec<usize>,
    pub deltas: Vec<f64>,
    pub converged: bool,
    pub default: Vec<f64>,
}

/// Runs the fixed-point iteration and writes the convergence and default
/// curve files.
pub fn cmd_fixed_point(config: &ExperimentConfig) -> Result<FixedPointReport> {
    config.validate()?;
    ensure_dir(&config.output_dir)?;
    let spec = &config.model;
    let bank_config = BankConfig::from_experiment(config);
    let initial = initial_guess(&bank_config, spec)?;
    let k_max = config.max_iterations;
    let mut blocks = Vec::new();
    let mut last = None;
    let outcome = iterate_with(&initial, k_max, config.stop_tol, &bank_config, spec, |k, curve, delta| {
        if CHECKPOINTS.contains(&k) {
            blocks.push((k, curve.clone(), delta));
        }
        last = Some((k, curve.clone(), delta));
    })?;
    if let Some(final_block) = last {
        if blocks.last().map(|b| b.0) != Some(final_block.0) {
            blocks.push(final_block);
        }
    }

    let mut lines = header(config, "fixed-point");
    lines.push("k,t,c0,c1,delta_sup".into());
    for (k, curve, delta) in &blocks {
        for ((t, c0), c1) in curve.grid().iter().zip(curve.c0()).zip(curve.c1()) {
            lines.push(format!("{k},{}", row(&[*t, *c0, *c1, *delta])));
        }
    }
    let convergence = config.output_dir.join("iteration_convergence.csv");
    write_lines(&convergence, lines)?;

    let default = outcome.curve.default_probability();
    let mut lines = header(config, "fixed-point");
    lines.push("t,D".into());
    lines.extend(outcome.curve.grid().iter().zip(&default).map(|(t, d)| row(&[*t, *d])));
    let curve_path = config.output_dir.join("default_curve.csv");
    write_lines(&curve_path, lines)?;

    let mut files = vec![convergence, curve_path];
    if config.stop_tol > 0.0 && !outcome.converged {
        let path = config.output_dir.join("diagnostics.txt");
        let mut lines = header(config, "fixed-point");
        lines.push(format!(
            "not converged: {} iterates, last sup delta {:.6e}, tolerance {:.6e}",
            outcome.iterations(),
            outcome.deltas.last().copied().unwrap_or(f64::NAN),
            config.stop_tol
        ));
        lines.push(format!("smallest raw c1 estimate {:.6e}", outcome.min_raw_c1));
        lines.extend(
            outcome
                .deltas
                .iter()
                .enumerate()
                .map(|(i, d)| format!("delta[{}] = {d:.6e}", i + 1)),
        );
        write_lines(&path, lines)?;
        files.push(path);
    }
    Ok(FixedPointReport {
        files,
        recorded: blocks.iter().map(|b| b.0).collect(),
        deltas: outcome.deltas,
        converged: outcome.converged,
        default,
    })
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub file: PathBuf,
    pub times: Vec<f64>,
    pub d_tilde: Vec<f64>,
    pub d_particle: Vec<f64>,
    pub d_fixed_point: Vec<f64>,
    pub se_tilde: Vec<f64>,
    pub se_particle: Vec<f64>,
    /// `min_t (D_tilde + 3 se - D)` over both equilibrium estimators.
    pub margin: f64,
    /// Grid times where an equilibrium curve exceeds `D_tilde + 3 se`.
    pub violations: Vec<f64>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// `D_tilde(T) - D_particle(T)`, the reduction in defaults at the horizon.
    pub fn holding_gap_at_horizon(&self) -> f64 {
        self.d_tilde.last().unwrap() - self.d_particle.last().unwrap()
    }
}

/// Default curves with and without holding.
///
/// The baseline and the particle system share their random draws. The bound
/// `D <= D_tilde + 3 se` uses the standard error of the difference of
/// independent estimates, which is conservative under this coupling.
pub fn cmd_compare(config: &ExperimentConfig) -> Result<CompareReport> {
    config.validate()?;
    ensure_dir(&config.output_dir)?;
    let baseline = simulate(config, StepMode::Baseline)?;
    let particle = simulate(config, StepMode::Equilibrium)?;
    let fixed = fixed_point_default_curve(config, &config.model)?;

    let times = baseline.times.clone();
    let d_tilde = baseline.default_probability();
    let se_tilde = baseline.stderr();
    let d_particle = particle.default_probability();
    let se_particle = particle.stderr();
    let d_fixed_point = fixed.default;
    let se_fixed = fixed.stderr;

    let mut margin = f64::INFINITY;
    let mut violations = Vec::new();
    for i in 0..times.len() {
        let se_p = se_tilde[i].hypot(se_particle[i]);
        let se_f = se_tilde[i].hypot(se_fixed[i]);
        let m = (d_tilde[i] + 3.0 * se_p - d_particle[i]).min(d_tilde[i] + 3.0 * se_f - d_fixed_point[i]);
        margin = margin.min(m);
        if m < 0.0 {
            violations.push(times[i]);
        }
    }

    let mut lines = header(config, "compare");
    lines.push(format!("# margin = {margin:.6}"));
    lines.push(format!("# violations = {}", violations.len()));
    lines.push("t,D_tilde,D_particle,D_fixedpoint,se_tilde,se_particle".into());
    for i in 0..times.len() {
        lines.push(row(&[
            times[i],
            d_tilde[i],
            d_particle[i],
            d_fixed_point[i],
            se_tilde[i],
            se_particle[i],
        ]));
    }
    let file = config.output_dir.join("compare.csv");
    write_lines(&file, lines)?;
    for t in &violations {
        log::error!("equilibrium default curve above D_tilde + 3 se at t = {t:.6}");
    }
    Ok(CompareReport {
        file,
        times,
        d_tilde,
        d_particle,
        d_fixed_point,
        se_tilde,
        se_particle,
        margin,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulateMode {
    Equilibrium,
    Baseline,
    Smoothed(u32),
}

impl FromStr for SimulateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equilibrium" => Ok(SimulateMode::Equilibrium),
            "baseline" => Ok(SimulateMode::Baseline),
            _ => {
                let n = s
                    .strip_prefix("smoothed:")
                    .and_then(|n| n.parse::<u32>().ok())
                    .filter(|n| *n >= 1);
                n.map(SimulateMode::Smoothed).ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "mode `{s}`: expected equilibrium, baseline or smoothed:<n>"
                    ))
                })
            }
        }
    }
}

impl fmt::Display for SimulateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimulateMode::Equilibrium => write!(f, "equilibrium"),
            SimulateMode::Baseline => write!(f, "baseline"),
            SimulateMode::Smoothed(n) => write!(f, "smoothed:{n}"),
        }
    }
}

/// Runs one particle system and writes its survival summary.
pub fn cmd_simulate(config: &ExperimentConfig, mode: SimulateMode) -> Result<(PathRecord, Vec<PathBuf>)> {
    config.validate()?;
    ensure_dir(&config.output_dir)?;
    let record = match mode {
        SimulateMode::Equilibrium => simulate(config, StepMode::Equilibrium)?,
        SimulateMode::Baseline => simulate(config, StepMode::Baseline)?,
        SimulateMode::Smoothed(n) => simulate_smoothed(config, n)?,
    };
    let command = format!("simulate {mode}");
    let mut lines = header(config, &command);
    let default = record.default_probability();
    let stderr = record.stderr();
    match &record.mollified_mass {
        Some(_) => lines.push("t,survival,D,se,c1,mollified_mass".into()),
        None => lines.push("t,survival,D,se,c1".into()),
    }
    for i in 0..record.times.len() {
        let mut values = vec![
            record.times[i],
            record.survival_fraction[i],
            default[i],
            stderr[i],
            record.empirical_c1[i],
        ];
        if let Some(mass) = &record.mollified_mass {
            values.push(mass[i]);
        }
        lines.push(row(&values));
    }
    let path = config.output_dir.join("simulate.csv");
    write_lines(&path, lines)?;
    let mut files = vec![path];

    if let Some(paths) = &record.trajectories {
        let mut lines = header(config, &command);
        let names: Vec<String> = (0..record.particles).map(|i| format!("x_{i}")).collect();
        lines.push(format!("t,{}", names.join(",")));
        for (t, positions) in record.times.iter().zip(paths) {
            lines.push(format!("{t:.6},{}", row(positions)));
        }
        let path = config.output_dir.join("trajectories.csv");
        write_lines(&path, lines)?;
        files.push(path);
    }
    Ok((record, files))
}

/// Fault injection for the validation suite.
#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateHooks {
    /// Negates the equilibrium drift seen by the identity check.
    pub flip_drift_sign: bool,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub elapsed: Duration,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for c in &self.checks {
            writeln!(
                f,
                "{}  {:width$}  {:>7.2}s  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.elapsed.as_secs_f64(),
                c.detail
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(
            f,
            "{} checks, {} failed, {:.1}s",
            self.checks.len(),
            failed,
            self.elapsed.as_secs_f64()
        )
    }
}

type CheckFn<'a> = Box<dyn FnOnce() -> Result<(bool, String)> + 'a>;

/// Runs the invariant and oracle checks at desk scale.
///
/// The model, initial law, horizon, grid and particle count of `config` are
/// used by the particle checks; the remaining checks draw their own inputs
/// from `config.seed`.
pub fn cmd_validate(config: &ExperimentConfig, hooks: ValidateHooks) -> Result<ValidationReport> {
    config.validate()?;
    let start = Instant::now();
    let seed = config.seed;
    let checks: Vec<(&'static str, CheckFn)> = vec![
        ("c1_solver", Box::new(|| check_c1_solver(seed))),
        ("holding_identities", Box::new(|| check_holding_identities(seed, hooks))),
        ("vol_bounds_and_strategy", Box::new(|| check_vol_and_strategy(seed))),
        ("absorption_permanence", Box::new(|| check_absorption(config))),
        ("wasserstein_axioms", Box::new(|| check_wasserstein(seed))),
        ("oracle_vs_fine_mc", Box::new(|| check_oracle_vs_fine_mc(seed))),
        ("kernel_vs_oracle", Box::new(|| check_kernel_vs_oracle(seed))),
        ("smoothed_convergence", Box::new(|| check_smoothed(config))),
        ("propagation_of_chaos", Box::new(|| check_chaos(config))),
        ("stieltjes_vs_inverse", Box::new(|| check_stieltjes(seed))),
    ];
    let mut out = Vec::with_capacity(checks.len() + 1);
    for (name, run) in checks {
        let t0 = Instant::now();
        let (passed, detail) = run()?;
        log::info!("{name}: {} ({detail})", if passed { "pass" } else { "fail" });
        out.push(Check {
            name,
            passed,
            detail,
            elapsed: t0.elapsed(),
        });
    }
    let elapsed = start.elapsed();
    out.push(Check {
        name: "runtime_budget",
        passed: elapsed < VALIDATION_BUDGET,
        detail: format!("{:.1}s of {}s", elapsed.as_secs_f64(), VALIDATION_BUDGET.as_secs()),
        elapsed: Duration::ZERO,
    });
    Ok(ValidationReport {
        checks: out,
        warnings: config.warnings(),
        elapsed,
    })
}

fn random_measure(rng: &mut ChaCha8Rng) -> WeightedMeasure {
    let atoms = rng.random_range(1..30);
    let raw: Vec<(f64, f64)> = (0..atoms)
        .map(|_| {
            let x = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..5.0) };
            (x, rng.random_range(0.01..1.0))
        })
        .collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    WeightedMeasure::new(raw.into_iter().map(|(x, w)| (x, w / total)).collect())
        .expect("atoms are non-negative with positive weights")
}

fn affine(slope: f64, intercept: f64, sigma: f64, regime: SignRegime) -> DriftVolSpec {
    DriftVolSpec::new(
        Drift::Affine { slope, intercept },
        Volatility::Constant { value: sigma },
        regime,
    )
    .expect("finite affine coefficients")
}

/// Bisection on `[0, hi]` written independently of the library solver.
fn bisect(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, hi.max(1e-300));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_c1_solver(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_residual: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut bound_ok = true;
    for _ in 0..100 {
        let m = random_measure(&mut rng);
        let spec = affine(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            1.0,
            SignRegime::SignChanging,
        );
        let c1 = solve_c1(0.0, &m, &spec, C1_TOLERANCE);
        let bound: f64 = m.alive_atoms().map(|(x, w)| w * spec.b(0.0, x).max(0.0)).sum();
        bound_ok &= (0.0..=bound).contains(&c1);
        worst_residual = worst_residual.max(holding_residual(c1, 0.0, &m, &spec).abs());
        let oracle = bisect(|y| holding_residual(y, 0.0, &m, &spec), bound);
        worst_oracle = worst_oracle.max((c1 - oracle).abs());
    }
    let identity = affine(1.0, 0.0, 1.0, SignRegime::SignChanging);
    let dirac = solve_c1(0.0, &WeightedMeasure::dirac(2.0)?, &identity, C1_TOLERANCE);
    let two = WeightedMeasure::new(vec![(1.0, 0.5), (3.0, 0.5)])?;
    let shifted = affine(1.0, -2.0, 1.0, SignRegime::SignChanging);
    let pair = solve_c1(0.0, &two, &shifted, C1_TOLERANCE);
    let examples_ok = (dirac - 2.0).abs() <= 1e-10 && (pair - 1.0 / 3.0).abs() <= 1e-10;
    let passed = bound_ok && worst_residual <= C1_TOLERANCE && worst_oracle <= 1e-10 && examples_ok;
    Ok((
        passed,
        format!(
            "max |F| {worst_residual:.1e}, max oracle gap {worst_oracle:.1e}, dirac {dirac:.12}, pair {pair:.12}"
        ),
    ))
}

fn check_holding_identities(seed: u64, hooks: ValidateHooks) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let mut mismatches = 0usize;
    let total = 10_000;
    for i in 0..total {
        let m = random_measure(&mut rng);
        let x = rng.random_range(0.0..6.0);
        let sigma = rng.random_range(0.1..2.0);
        let non_positive = i % 2 == 0;
        let spec = if non_positive {
            affine(
                -rng.random_range(0.0..3.0),
                -rng.random_range(0.0..3.0),
                sigma,
                SignRegime::NonPositive,
            )
        } else {
            affine(
                rng.random_range(0.0..3.0),
                rng.random_range(0.01..3.0),
                sigma,
                SignRegime::Positive,
            )
        };
        let (mut drift, vol) = equilibrium_coefficients(0.0, x, &m, &spec);
        if hooks.flip_drift_sign {
            drift = -drift;
        }
        let b = spec.b(0.0, x);
        let expected = if non_positive {
            (b, sigma)
        } else {
            let alive = m.alive_mass();
            let shared: f64 = m.alive_atoms().map(|(y, w)| w * spec.b(0.0, y)).sum();
            ((b + shared) / (1.0 + alive), sigma / (1.0 + alive))
        };
        if (drift, vol) != expected {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} of {total} inputs differ from the closed forms")))
}

fn check_vol_and_strategy(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let mut bad_vol = 0usize;
    let mut bad_strategy = 0usize;
    let total = 10_000;
    for _ in 0..total {
        let m = random_measure(&mut rng);
        let sigma = rng.random_range(0.1..2.0);
        let spec = affine(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            sigma,
            SignRegime::SignChanging,
        );
        let x = rng.random_range(-2.0..6.0);
        let (drift, vol) = equilibrium_coefficients(0.0, x, &m, &spec);
        if !(vol >= sigma / 2.0 && vol <= sigma) {
            bad_vol += 1;
        }
        if equilibrium_strategy(0.0, 1.0, x, &m, &spec) != (drift > 0.0) {
            bad_strategy += 1;
        }
        // the tie B = 0 takes the unshared branch
        let (tie_drift, tie_vol) = holding_coefficients(-0.5, sigma, 0.5, m.alive_mass());
        if tie_drift != 0.0 || tie_vol != sigma {
            bad_strategy += 1;
        }
    }
    Ok((
        bad_vol == 0 && bad_strategy == 0,
        format!("{bad_vol} vol bound failures, {bad_strategy} strategy mismatches in {total} draws"),
    ))
}

fn check_absorption(config: &ExperimentConfig) -> Result<(bool, String)> {
    let mut cfg = config.clone();
    cfg.particles = config.particles.min(1000);
    cfg.record_paths = true;
    let record = simulate(&cfg, StepMode::Equilibrium)?;
    let paths = record.trajectories.as_ref().expect("paths were requested");
    let mut revived = 0usize;
    for i in 0..record.particles {
        let mut dead = false;
        for step in paths {
            if dead && step[i] != 0.0 {
                revived += 1;
                break;
            }
            dead |= step[i] <= 0.0;
        }
    }
    let increases = record
        .survival_fraction
        .windows(2)
        .filter(|w| w[1] > w[0])
        .count();
    let holder = holder_constant(&record.times, &record.survival_fraction);
    Ok((
        revived == 0 && increases == 0 && holder.is_finite(),
        format!(
            "{revived} revived particles, {increases} survival increases, Holder-1/6 constant {holder:.3}"
        ),
    ))
}

fn check_wasserstein(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    let mut failures = 0usize;
    let trials = 200;
    for _ in 0..trials {
        let n = rng.random_range(1..40);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
        };
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let ab = wasserstein1(&a, &b)?;
        let ba = wasserstein1(&b, &a)?;
        let bc = wasserstein1(&b, &c)?;
        let ac = wasserstein1(&a, &c)?;
        let mut shuffled = a.clone();
        shuffled.reverse();
        let same = wasserstein1(&a, &shuffled)?;
        let tol = 1e-12 * (1.0 + ab + bc);
        if (ab - ba).abs() > tol || same != 0.0 || ac > ab + bc + tol || (a != b && ab <= 0.0) {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("{failures} of {trials} random triples violate an axiom")))
}

fn constant_config(drift: f64, x0: f64, horizon: f64, steps: usize, particles: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        horizon,
        steps,
        particles,
        model: DriftVolSpec::inferred(Drift::Constant { value: drift }, Volatility::Constant { value: 1.0 })
            .expect("constant coefficients"),
        initial_law: InitialLaw::PointMass { x0 },
        seed,
        absorption: AbsorptionScheme::Bridge,
        ..ExperimentConfig::default()
    }
}

/// Survival fractions at `times`, read off a record on a uniform grid.
fn survival_at(record: &PathRecord, times: &[f64]) -> Vec<f64> {
    let dt = record.times[1] - record.times[0];
    times
        .iter()
        .map(|t| record.survival_fraction[(t / dt).round() as usize])
        .collect()
}

/// The reflection formula against a fine-grid Monte Carlo, within three
/// standard errors.
fn check_oracle_vs_fine_mc(seed: u64) -> Result<(bool, String)> {
    let times = [0.5, 1.0, 2.0];
    let cfg = constant_config(-0.5, 1.0, 2.0, 400, 200_000, seed ^ 4);
    let record = simulate(&cfg, StepMode::Baseline)?;
    let mc = survival_at(&record, &times);
    let n = cfg.particles as f64;
    let mut worst: f64 = 0.0;
    for (t, p) in times.iter().zip(&mc) {
        let exact = analytic_survival_bm(1.0, -0.5, 1.0, *t);
        let se = (exact * (1.0 - exact) / n).sqrt();
        worst = worst.max((p - exact).abs() / se);
    }
    Ok((worst <= 3.0, format!("largest gap {worst:.2} standard errors")))
}

/// Bridge-absorbed Euler scheme at `M = 1e5`, `N = 100`.
fn check_kernel_vs_oracle(seed: u64) -> Result<(bool, String)> {
    let times = [0.5, 1.0, 2.0];
    let cfg = constant_config(-0.5, 1.0, 2.0, 100, 100_000, seed ^ 5);
    let record = simulate(&cfg, StepMode::Equilibrium)?;
    let mc = survival_at(&record, &times);
    let worst = times
        .iter()
        .zip(&mc)
        .map(|(t, p)| (p - analytic_survival_bm(1.0, -0.5, 1.0, *t)).abs())
        .fold(0.0, f64::max);
    Ok((worst <= 0.01, format!("largest survival gap {worst:.4} (tolerance 0.01)")))
}

/// Smoothed system against the absorbed particle system on shared draws.
pub fn smoothed_gaps(config: &ExperimentConfig, indices: &[u32]) -> Result<Vec<f64>> {
    let reference = simulate(config, StepMode::Equilibrium)?;
    indices
        .iter()
        .map(|&n| {
            let smoothed = simulate_smoothed(config, n)?;
            Ok(sup_gap(&smoothed.survival_fraction, &reference.survival_fraction))
        })
        .collect()
}

fn check_smoothed(config: &ExperimentConfig) -> Result<(bool, String)> {
    let gaps = smoothed_gaps(config, &[1, 10, 100])?;
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        monotone && gaps[2] < 0.05,
        format!("sup gaps for n = 1, 10, 100: {:.4}, {:.4}, {:.4}", gaps[0], gaps[1], gaps[2]),
    ))
}

/// `W1` between the horizon laws of two independent systems of size `n`,
/// one entry per seed and size.
pub fn chaos_distances(config: &ExperimentConfig, sizes: &[usize], seeds: usize) -> Result<Vec<Vec<f64>>> {
    (0..seeds as u64)
        .map(|s| {
            sizes
                .iter()
                .map(|&n| {
                    let mut a = config.clone();
                    a.particles = n;
                    a.record_paths = false;
                    a.seed = config.seed.wrapping_add(2 * s + 1);
                    let mut b = a.clone();
                    b.seed = config.seed.wrapping_add(2 * s + 2);
                    let pa = simulate(&a, StepMode::Equilibrium)?;
                    let pb = simulate(&b, StepMode::Equilibrium)?;
                    wasserstein1(&pa.final_positions, &pb.final_positions)
                })
                .collect()
        })
        .collect()
}

fn check_chaos(config: &ExperimentConfig) -> Result<(bool, String)> {
    let sizes = [500usize, 5000];
    let distances = chaos_distances(config, &sizes, 5)?;
    let xs: Vec<f64> = distances.iter().flat_map(|_| sizes.iter().map(|n| *n as f64)).collect();
    let ys: Vec<f64> = distances.iter().flatten().copied().collect();
    let slope = loglog_slope(&xs, &ys);
    let mean = |j: usize| distances.iter().map(|d| d[j]).sum::<f64>() / distances.len() as f64;
    let (small, large) = (mean(0), mean(1));
    let per_seed_negative = distances.iter().filter(|d| d[1] < d[0]).count();
    Ok((
        large < small && slope < 0.0,
        format!(
            "mean W1 {small:.4} at N=500, {large:.4} at N=5000, slope {slope:.3}, {per_seed_negative}/5 seeds decreasing"
        ),
    ))
}

/// Both forms of the restart correction on random piecewise-linear curves
/// with flat stretches, sampled on a fine grid.
fn check_stieltjes(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let horizon = rng.random_range(1.0..3.0);
        let steps = 4000;
        let grid = uniform_grid(horizon, steps);
        let knots = 6;
        let slopes: Vec<f64> = (0..knots)
            .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.0..0.4) })
            .collect();
        let mut c0 = Vec::with_capacity(grid.len());
        let mut level = 1.0;
        let mut prev_t = 0.0;
        for &t in &grid {
            let piece = ((prev_t / horizon) * knots as f64).min(knots as f64 - 1.0) as usize;
            level = f64::max(level - slopes[piece] * (t - prev_t), 0.0);
            c0.push(level);
            prev_t = t;
        }
        let rate = rng.random_range(0.1..2.0);
        let g = |t: f64| (-rate * t).exp() * (1.0 + t).sqrt();
        for n in [1, steps / 3, steps / 2, steps] {
            let stieltjes = restart_correction_stieltjes(&grid, &c0, n, g);
            let inverse = restart_correction_inverse(&grid, &c0, n, g, 20_000);
            worst = worst.max((stieltjes - inverse).abs());
        }
    }
    Ok((worst <= 1e-3, format!("largest difference {worst:.2e} over 20 curves")))
}
