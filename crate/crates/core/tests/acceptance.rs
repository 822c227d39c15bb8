//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any
//! criterion fails.
//!
//! Set `ACCEPTANCE_SKIP_FULL_SCALE=1` to skip the full-scale variants of
//! criteria 4 and 5 (about ten minutes on a single core).

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mutual_holding::analysis::{analytic_survival_bm, loglog_slope};
use mutual_holding::coefficients::{
    equilibrium_coefficients, holding_residual, solve_c1, C1_TOLERANCE,
};
use mutual_holding::experiments::{
    chaos_distances, cmd_compare, cmd_validate, smoothed_gaps, ValidateHooks,
};
use mutual_holding::fixed_point::{initial_guess, iterate_with, BankConfig};
use mutual_holding::particles::simulate;
use mutual_holding::{
    AbsorptionScheme, Drift, DriftVolSpec, ExperimentConfig, InitialLaw, SignRegime, StepMode,
    SurvivalCurve, Volatility, WeightedMeasure,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed <= budget
}

fn affine(slope: f64, intercept: f64, sigma: f64, regime: SignRegime) -> DriftVolSpec {
    DriftVolSpec::new(Drift::Affine { slope, intercept }, Volatility::Constant { value: sigma }, regime)
        .unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng) -> WeightedMeasure {
    let n = rng.random_range(1..25);
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let x = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..5.0) };
            (x, rng.random_range(0.05..1.0))
        })
        .collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    WeightedMeasure::new(raw.into_iter().map(|(x, w)| (x, w / total)).collect()).unwrap()
}

/// Root of `(1 + m) y = sum w (b + y)^+` over alive atoms by plain bisection.
fn bisection_c1(atoms: &[(f64, f64)], b: impl Fn(f64) -> f64) -> f64 {
    let alive: Vec<(f64, f64)> = atoms.iter().copied().filter(|a| a.0 > 0.0).collect();
    let mass: f64 = alive.iter().map(|a| a.1).sum();
    let f = |y: f64| (1.0 + mass) * y - alive.iter().map(|&(x, w)| w * (b(x) + y).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, alive.iter().map(|&(x, w)| w * b(x).max(0.0)).sum::<f64>());
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c1_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_f, mut worst_gap, mut bounds) = (0.0f64, 0.0f64, true);
    for _ in 0..100 {
        let m = random_measure(&mut rng);
        let (slope, intercept) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let spec = affine(slope, intercept, 1.0, SignRegime::SignChanging);
        let c1 = solve_c1(0.0, &m, &spec, C1_TOLERANCE);
        let bound: f64 = m.alive_atoms().map(|(x, w)| w * spec.b(0.0, x).max(0.0)).sum();
        bounds &= c1 >= 0.0 && c1 <= bound;
        worst_f = worst_f.max(holding_residual(c1, 0.0, &m, &spec).abs());
        let oracle = bisection_c1(m.atoms(), |x| slope * x + intercept);
        worst_gap = worst_gap.max((c1 - oracle).abs());
    }
    let identity = affine(1.0, 0.0, 1.0, SignRegime::SignChanging);
    let dirac = solve_c1(0.0, &WeightedMeasure::dirac(2.0).unwrap(), &identity, C1_TOLERANCE);
    let dirac_oracle = bisection_c1(&[(2.0, 1.0)], |x| x);
    let shifted = affine(1.0, -2.0, 1.0, SignRegime::SignChanging);
    let two = WeightedMeasure::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap();
    let pair = solve_c1(0.0, &two, &shifted, C1_TOLERANCE);
    let pair_oracle = bisection_c1(&[(1.0, 0.5), (3.0, 0.5)], |x| x - 2.0);
    let examples = (dirac - 2.0).abs() <= 1e-10
        && (dirac_oracle - 2.0).abs() <= 1e-10
        && (pair - 1.0 / 3.0).abs() <= 1e-10
        && (pair_oracle - 1.0 / 3.0).abs() <= 1e-10;
    let elapsed = start.elapsed();
    outcome(
        worst_f <= 1e-12 && bounds && worst_gap <= 1e-10 && examples && within(elapsed, Duration::from_secs(1)),
        format!(
            "max |F| {worst_f:.1e}, max gap to bisection {worst_gap:.1e}, dirac {dirac:.12}, pair {pair:.12}, {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn holding_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mismatches = 0;
    for i in 0..10_000 {
        let m = random_measure(&mut rng);
        let x = rng.random_range(0.0..6.0);
        let sigma = rng.random_range(0.1..2.0);
        if i % 2 == 0 {
            let spec = affine(-rng.random_range(0.0..3.0), -rng.random_range(0.0..3.0), sigma, SignRegime::NonPositive);
            if equilibrium_coefficients(0.0, x, &m, &spec) != (spec.b(0.0, x), sigma) {
                mismatches += 1;
            }
        } else {
            let spec = affine(rng.random_range(0.0..3.0), rng.random_range(0.01..3.0), sigma, SignRegime::Positive);
            let alive = m.alive_mass();
            let shared: f64 = m.alive_atoms().map(|(y, w)| w * spec.b(0.0, y)).sum();
            let closed = ((spec.b(0.0, x) + shared) / (1.0 + alive), sigma / (1.0 + alive));
            if equilibrium_coefficients(0.0, x, &m, &spec) != closed {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, Duration::from_secs(1)),
        format!("{mismatches} of 10000 inputs differ, {:.3}s", elapsed.as_secs_f64()),
    )
}

/// Survival of `1 - 0.5 t + W_t` by an independent Monte Carlo: Euler on a
/// fine grid with the Brownian-bridge crossing probability per step.
fn fine_grid_survival(paths: usize, steps: usize, horizon: f64, times: &[f64]) -> Vec<f64> {
    let dt = horizon / steps as f64;
    let marks: Vec<usize> = times.iter().map(|t| (t / dt).round() as usize).collect();
    let mut alive = vec![0usize; times.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..paths {
        let mut x: f64 = 1.0;
        let mut dead = false;
        for i in 1..=steps {
            if !dead {
                let g: f64 = rng.sample(StandardNormal);
                let y = x - 0.5 * dt + dt.sqrt() * g;
                let u: f64 = rng.random();
                dead = y <= 0.0 || u < (-2.0 * x * y / dt).exp();
                x = y;
            }
            for (j, &mk) in marks.iter().enumerate() {
                if mk == i && !dead {
                    alive[j] += 1;
                }
            }
        }
    }
    alive.iter().map(|a| *a as f64 / paths as f64).collect()
}

fn kernel_vs_oracle() -> Outcome {
    let start = Instant::now();
    let times = [0.5, 1.0, 2.0];
    let oracle: Vec<f64> = times.iter().map(|t| analytic_survival_bm(1.0, -0.5, 1.0, *t)).collect();
    // the oracle itself against 1e6 independent fine-grid paths
    let fine = fine_grid_survival(1_000_000, 400, 2.0, &times);
    let oracle_ok = fine
        .iter()
        .zip(&oracle)
        .all(|(p, q)| (p - q).abs() <= 3.0 * (q * (1.0 - q) / 1e6).sqrt());
    let sim_start = Instant::now();
    let cfg = ExperimentConfig {
        horizon: 2.0,
        steps: 100,
        particles: 100_000,
        model: DriftVolSpec::inferred(Drift::Constant { value: -0.5 }, Volatility::Constant { value: 1.0 }).unwrap(),
        initial_law: InitialLaw::PointMass { x0: 1.0 },
        absorption: AbsorptionScheme::Bridge,
        seed: 2024,
        ..ExperimentConfig::default()
    };
    let record = simulate(&cfg, StepMode::Equilibrium).unwrap();
    let gaps: Vec<f64> = times
        .iter()
        .zip(&oracle)
        .map(|(t, q)| (record.survival_fraction[(t / cfg.dt()).round() as usize] - q).abs())
        .collect();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let sim_elapsed = sim_start.elapsed();
    outcome(
        oracle_ok && worst <= 0.01 && within(sim_elapsed, Duration::from_secs(60)),
        format!(
            "oracle {:.4} {:.4} {:.4}, fine-grid MC {:.4} {:.4} {:.4}, max simulation gap {worst:.4}, simulation {:.1}s (total {:.1}s)",
            oracle[0], oracle[1], oracle[2], fine[0], fine[1], fine[2],
            sim_elapsed.as_secs_f64(), start.elapsed().as_secs_f64()
        ),
    )
}

fn ou_config(full: bool) -> ExperimentConfig {
    let base = ExperimentConfig::default();
    if full {
        base.full_scale()
    } else {
        base
    }
}

struct FixedPointTrace {
    final_curve: SurvivalCurve,
    snapshots: Vec<(usize, SurvivalCurve)>,
}

fn trace_fixed_point(cfg: &ExperimentConfig, keep: &[usize]) -> FixedPointTrace {
    let bank = BankConfig::from_experiment(cfg);
    let initial = initial_guess(&bank, &cfg.model).unwrap();
    let mut snapshots = Vec::new();
    let out = iterate_with(&initial, cfg.max_iterations, 0.0, &bank, &cfg.model, |k, c, _| {
        if keep.contains(&k) {
            snapshots.push((k, c.clone()));
        }
    })
    .unwrap();
    FixedPointTrace {
        final_curve: out.curve,
        snapshots,
    }
}

/// Criteria 4 and 5 share one fixed-point run per scale.
fn cross_consistency_and_stability(full: bool) -> (Outcome, Outcome) {
    let cfg = ou_config(full);
    let (pair, tol4, tol5, budget) = if full {
        ((100, 200), 0.03, 0.01, Duration::from_secs(15 * 60))
    } else {
        ((25, 50), 0.05, 0.02, Duration::from_secs(2 * 60))
    };
    let start = Instant::now();
    let trace = trace_fixed_point(&cfg, &[pair.0, pair.1]);
    let fp_elapsed = start.elapsed();
    let record = simulate(&cfg, StepMode::Equilibrium).unwrap();
    let elapsed = start.elapsed();
    let d_fp = trace.final_curve.default_probability();
    let d_particle = record.default_probability();
    let (mut sup, mut at) = (0.0f64, 0.0);
    for (i, (a, b)) in d_fp.iter().zip(&d_particle).enumerate() {
        if (a - b).abs() > sup {
            sup = (a - b).abs();
            at = record.times[i];
        }
    }
    let criterion4 = outcome(
        sup <= tol4 && within(elapsed, budget),
        format!(
            "M = particles = {}, N = {}: sup |D_fp - D_particle| = {sup:.4} at t = {at:.2} (tolerance {tol4}), {:.1}s",
            cfg.paths,
            cfg.steps,
            elapsed.as_secs_f64()
        ),
    );
    let curve_at = |k: usize| &trace.snapshots.iter().find(|s| s.0 == k).unwrap().1;
    let delta = curve_at(pair.0).sup_distance(curve_at(pair.1)).unwrap();
    let criterion5 = outcome(
        delta < tol5,
        format!(
            "M = {}, N = {}: sup delta between iterates {} and {} = {delta:.4} (tolerance {tol5}), {:.1}s",
            cfg.paths,
            cfg.steps,
            pair.0,
            pair.1,
            fp_elapsed.as_secs_f64()
        ),
    );
    (criterion4, criterion5)
}

fn holding_effect() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut gaps = Vec::new();
    let mut ok = true;
    let mut margins = Vec::new();
    for (name, lambda) in [("1", 1.0), ("0.1", 0.1)] {
        let cfg = ExperimentConfig {
            model: DriftVolSpec::ornstein_uhlenbeck(lambda).unwrap(),
            output_dir: dir.path().join(name),
            ..ExperimentConfig::default()
        };
        let report = cmd_compare(&cfg).unwrap();
        ok &= report.passed();
        margins.push(report.margin);
        gaps.push(report.holding_gap_at_horizon());
    }
    let elapsed = start.elapsed();
    outcome(
        ok && gaps[0] > gaps[1] && within(elapsed, Duration::from_secs(300)),
        format!(
            "D <= D_tilde + 3 se margins {:.4} (lambda 1), {:.4} (lambda 0.1); D_tilde(T) - D(T) = {:.4} vs {:.4}, {:.1}s",
            margins[0], margins[1], gaps[0], gaps[1], elapsed.as_secs_f64()
        ),
    )
}

fn smoothed_convergence() -> Outcome {
    let start = Instant::now();
    let gaps = smoothed_gaps(&ExperimentConfig::default(), &[1, 10, 100]).unwrap();
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && gaps[2] < 0.05,
        format!(
            "sup |c0^n - c0| for n = 1, 10, 100: {:.4}, {:.4}, {:.4}, {:.1}s",
            gaps[0], gaps[1], gaps[2], start.elapsed().as_secs_f64()
        ),
    )
}

fn propagation_of_chaos() -> Outcome {
    let start = Instant::now();
    let sizes = [500usize, 5000];
    let distances = chaos_distances(&ExperimentConfig::default(), &sizes, 5).unwrap();
    let xs: Vec<f64> = distances.iter().flat_map(|_| sizes.map(|n| n as f64)).collect();
    let ys: Vec<f64> = distances.iter().flatten().copied().collect();
    let slope = loglog_slope(&xs, &ys);
    let mean = |j: usize| distances.iter().map(|d| d[j]).sum::<f64>() / 5.0;
    outcome(
        mean(1) < mean(0) && slope < 0.0,
        format!(
            "mean W1 {:.4} (N = 500) -> {:.4} (N = 5000), log-log slope {slope:.3}, {:.1}s",
            mean(0),
            mean(1),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn invariant_suite() -> Outcome {
    let start = Instant::now();
    let report = cmd_validate(&ExperimentConfig::default(), ValidateHooks::default()).unwrap();
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let elapsed = start.elapsed();
    outcome(
        report.passed() && within(elapsed, Duration::from_secs(300)),
        format!(
            "{} checks, failed: [{}], {:.1}s",
            report.checks.len(),
            failed.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn report(id: &str, name: &str, o: &Outcome) -> bool {
    println!("{} [{id}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    o.passed
}

fn main() -> ExitCode {
    let skip_full = std::env::var("ACCEPTANCE_SKIP_FULL_SCALE").is_ok_and(|v| v == "1");
    let mut all = true;
    all &= report("1", "c1 solver exactness", &c1_exactness());
    all &= report("2", "holding identities", &holding_identities());
    all &= report("3", "absorbed kernel vs first-passage oracle", &kernel_vs_oracle());
    let (c4, c5) = cross_consistency_and_stability(false);
    all &= report("4", "fixed point vs particles, desk scale", &c4);
    all &= report("5", "iteration stability, desk scale", &c5);
    if skip_full {
        println!("SKIP [4] fixed point vs particles, full scale");
        println!("SKIP [5] iteration stability, full scale");
    } else {
        let (c4, c5) = cross_consistency_and_stability(true);
        all &= report("4", "fixed point vs particles, full scale", &c4);
        all &= report("5", "iteration stability, full scale", &c5);
    }
    all &= report("6", "holding lowers defaults, stronger at larger mean level", &holding_effect());
    all &= report("7", "smoothed system convergence", &smoothed_convergence());
    all &= report("8", "propagation of chaos", &propagation_of_chaos());
    all &= report("9", "invariant suite", &invariant_suite());
    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
