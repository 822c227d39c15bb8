//! Autonomous fixed-point equation for the survival curve `c = (c0, c1)`.
//!
//! For a candidate curve `c`, let `R^{t,x}` be the diffusion (not absorbed)
//! with frozen coefficients `(B^c, Sigma^c)` started from `x` at time `t`.
//! The map `Lambda` sends `c` to
//!
//! ```text
//! Lambda_0[c](s) = P[R^{0,Z}_s > 0] + int_0^s P[R^{t,0}_s > 0] dc0(t)
//! Lambda_1[c](s) = E[1{R^{0,Z}_s > 0} B^c(s, R^{0,Z}_s)^+]
//!                  + int_0^s E[1{R^{t,0}_s > 0} B^c(s, R^{t,0}_s)^+] dc0(t)
//! ```
//!
//! with `Z` drawn from the initial law. The second terms remove the paths
//! that already touched zero: each default at time `t` restarts a copy of
//! the diffusion at the origin. On the grid `t_n = n T / N` the integrals
//! become sums over forward differences `c0(t_{k+1}) - c0(t_k)`, and all
//! restarts of Monte Carlo draw `m` share its Gaussian increments.

use rayon::prelude::*;

use crate::coefficients::{frozen_from_values, DriftVolSpec, WeightedMeasure, C1_TOLERANCE};
use crate::coefficients::solve_c1;
use crate::config::ExperimentConfig;
use crate::curve::{project_non_increasing, uniform_grid, SurvivalCurve};
use crate::error::{Error, Result};
use crate::particles::InitialLaw;
use crate::rng::{derive_seed, gaussian, Purpose, Substreams};

/// Draws per parallel work item; fixed so that reductions are bit-stable.
const CHUNK: usize = 64;

/// Iterates recorded by default for convergence plots.
pub const CHECKPOINTS: &[usize] = &[1, 10, 50, 100, 200];

#[derive(Debug, Clone, PartialEq)]
pub struct BankConfig {
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub initial_law: InitialLaw,
    pub seed: u64,
    pub crn: bool,
    pub projection: bool,
}

impl BankConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        Self {
            horizon: cfg.horizon,
            steps: cfg.steps,
            paths: cfg.paths,
            initial_law: cfg.initial_law.clone(),
            seed: cfg.seed,
            crn: cfg.crn,
            projection: cfg.projection,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.horizon, self.steps)
    }
}

fn initial_seed(cfg: &BankConfig, epoch: u64) -> u64 {
    derive_seed(cfg.seed, Purpose::BankInitial, epoch)
}

/// Gaussian increments `G[m][i]`, `i = 1..=N`, and initial draws `Z_m`.
///
/// Restart paths depend on the curve being mapped, so they are rebuilt from
/// this table at every application of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartPathBank {
    horizon: f64,
    steps: usize,
    gaussians: Vec<f64>,
    initial: Vec<f64>,
}

impl RestartPathBank {
    /// Draws the bank; `epoch` selects an independent table.
    pub fn generate(cfg: &BankConfig, epoch: u64) -> Result<Self> {
        if cfg.steps == 0 || cfg.paths == 0 {
            return Err(Error::InvalidConfig("bank needs at least one step and one path".into()));
        }
        let initial = cfg.initial_law.sample(cfg.paths, initial_seed(cfg, epoch))?;
        let streams = Substreams::with_epoch(cfg.seed, Purpose::BankGaussians, epoch);
        let mut gaussians = vec![0.0; cfg.paths * cfg.steps];
        gaussians
            .par_chunks_mut(cfg.steps)
            .enumerate()
            .for_each(|(m, row)| {
                let mut rng = streams.stream(m as u64);
                for g in row {
                    *g = gaussian(&mut rng);
                }
            });
        Ok(Self {
            horizon: cfg.horizon,
            steps: cfg.steps,
            gaussians,
            initial,
        })
    }

    /// Bank from explicit increments (`paths * steps`, row-major) and draws.
    pub fn from_parts(horizon: f64, steps: usize, gaussians: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        if steps == 0 || initial.is_empty() || gaussians.len() != steps * initial.len() {
            return Err(Error::InvalidConfig(format!(
                "bank shape mismatch: {} increments for {} paths and {steps} steps",
                gaussians.len(),
                initial.len()
            )));
        }
        Ok(Self {
            horizon,
            steps,
            gaussians,
            initial,
        })
    }

    pub fn paths(&self) -> usize {
        self.initial.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.horizon, self.steps)
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    fn row(&self, m: usize) -> &[f64] {
        &self.gaussians[m * self.steps..(m + 1) * self.steps]
    }

    /// Values `R^{t_k, x}_{t_n}` for `n = k..=N` along draw `m`.
    pub fn restart_path(
        &self,
        curve: &SurvivalCurve,
        spec: &DriftVolSpec,
        m: usize,
        k: usize,
        x: f64,
    ) -> Vec<f64> {
        let frozen = FrozenGrid::new(curve, spec, self.horizon / self.steps as f64);
        let row = self.row(m);
        let mut out = Vec::with_capacity(self.steps + 1 - k);
        let mut r = x;
        out.push(r);
        for i in k..self.steps {
            let (drift, vol) = frozen.at(i, r);
            r = frozen.advance(r, drift, vol, row[i]);
            out.push(r);
        }
        out
    }
}

/// Curve values and step constants needed along a restart path.
struct FrozenGrid<'a> {
    spec: &'a DriftVolSpec,
    times: &'a [f64],
    c0: &'a [f64],
    c1: &'a [f64],
    dt: f64,
    sqrt_dt: f64,
}

impl<'a> FrozenGrid<'a> {
    fn new(curve: &'a SurvivalCurve, spec: &'a DriftVolSpec, dt: f64) -> Self {
        Self {
            spec,
            times: curve.grid(),
            c0: curve.c0(),
            c1: curve.c1(),
            dt,
            sqrt_dt: dt.sqrt(),
        }
    }

    /// `(B^c, Sigma^c)(t_i, r)`.
    #[inline(always)]
    fn at(&self, i: usize, r: f64) -> (f64, f64) {
        let t = self.times[i];
        frozen_from_values(self.spec.b(t, r), self.spec.sigma(t, r), self.c0[i], self.c1[i])
    }

    #[inline(always)]
    fn advance(&self, r: f64, drift: f64, vol: f64, g: f64) -> f64 {
        r + self.dt * drift + self.sqrt_dt * vol * g
    }
}

/// Output of one application of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaEstimate {
    pub curve: SurvivalCurve,
    /// Estimates before clamping and projection.
    pub raw_c0: Vec<f64>,
    pub raw_c1: Vec<f64>,
    /// Monte Carlo standard error of `raw_c0`.
    pub stderr_c0: Vec<f64>,
}

#[derive(Clone)]
struct Partial {
    sum0: Vec<f64>,
    sum1: Vec<f64>,
    sq0: Vec<f64>,
}

impl Partial {
    fn zeros(n: usize) -> Self {
        Self {
            sum0: vec![0.0; n],
            sum1: vec![0.0; n],
            sq0: vec![0.0; n],
        }
    }

    fn absorb(&mut self, other: &Partial) {
        for (a, b) in self.sum0.iter_mut().zip(&other.sum0) {
            *a += b;
        }
        for (a, b) in self.sum1.iter_mut().zip(&other.sum1) {
            *a += b;
        }
        for (a, b) in self.sq0.iter_mut().zip(&other.sq0) {
            *a += b;
        }
    }
}

/// Monte Carlo estimate of `Lambda[curve]` on the bank's grid.
pub fn apply_lambda(
    curve: &SurvivalCurve,
    bank: &RestartPathBank,
    spec: &DriftVolSpec,
    projection: bool,
) -> Result<LambdaEstimate> {
    let grid = bank.grid();
    if curve.len() != grid.len()
        || curve
            .grid()
            .iter()
            .zip(&grid)
            .any(|(a, b)| (a - b).abs() > 1e-12 * bank.horizon.max(1.0))
    {
        return Err(Error::GridMismatch(format!(
            "curve has {} points, bank grid has {}",
            curve.len(),
            grid.len()
        )));
    }
    let steps = bank.steps;
    let points = steps + 1;
    let kernel = Kernel::new(curve, spec, bank.horizon / steps as f64);
    let c0 = curve.c0();
    // slot 0 carries R^{0,Z}; slot j > 0 the restart at starts[j] with weight
    // dc0 over (t_k, t_{k+1}]. Restarts with zero weight contribute nothing.
    let mut starts = vec![0usize];
    let mut weights = vec![1.0];
    for k in 0..steps {
        let w = c0[k + 1] - c0[k];
        if w != 0.0 {
            starts.push(k);
            weights.push(w);
        }
    }
    // slots alive at time index i are a prefix, as starts are sorted
    let active: Vec<usize> = (0..points).map(|i| starts.partition_point(|&k| k <= i)).collect();

    let partials: Vec<Partial> = (0..bank.paths())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Partial::zeros(points);
            let mut x = vec![0.0; starts.len()];
            for &m in chunk {
                x.iter_mut().for_each(|v| *v = 0.0);
                x[0] = bank.initial[m];
                let row = bank.row(m);
                for i in 0..points {
                    let g = if i < steps { row[i] } else { 0.0 };
                    let a = active[i];
                    let (v0, v1) = kernel.sweep(i, &mut x[..a], &weights[..a], g);
                    acc.sum0[i] += v0;
                    acc.sum1[i] += v1;
                    acc.sq0[i] += v0 * v0;
                }
            }
            acc
        })
        .collect();
    let mut total = Partial::zeros(points);
    for p in &partials {
        total.absorb(p);
    }

    let paths = bank.paths() as f64;
    let raw_c0: Vec<f64> = total.sum0.iter().map(|s| s / paths).collect();
    let raw_c1: Vec<f64> = total.sum1.iter().map(|s| s / paths).collect();
    let stderr_c0 = raw_c0
        .iter()
        .zip(&total.sq0)
        .map(|(mean, sq)| {
            let var = (sq / paths - mean * mean).max(0.0);
            (var / (paths - 1.0).max(1.0)).sqrt()
        })
        .collect();

    let mut c0_next: Vec<f64> = raw_c0.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    if projection {
        c0_next = project_non_increasing(&c0_next)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
    }
    let c1_next: Vec<f64> = raw_c1.iter().map(|v| v.max(0.0)).collect();
    let next = if projection {
        SurvivalCurve::new(grid, c0_next, c1_next)?
    } else {
        SurvivalCurve::from_parts_unchecked(grid, c0_next, c1_next)
    };
    Ok(LambdaEstimate {
        curve: next,
        raw_c0,
        raw_c1,
        stderr_c0,
    })
}

const LANES: usize = 4;

/// Frozen coefficients in affine form, with the curve folded into per-time
/// constants. Same arithmetic as [`frozen_from_values`].
struct Kernel {
    drift: (f64, f64),
    vol: (f64, f64, f64),
    c1: Vec<f64>,
    denom: Vec<f64>,
    dt: f64,
    sqrt_dt: f64,
}

impl Kernel {
    fn new(curve: &SurvivalCurve, spec: &DriftVolSpec, dt: f64) -> Self {
        Self {
            drift: spec.drift().affine_parts(),
            vol: spec.volatility().affine_parts(),
            c1: curve.c1().to_vec(),
            denom: curve.c0().iter().map(|c| 1.0 + c).collect(),
            dt,
            sqrt_dt: dt.sqrt(),
        }
    }

    /// Adds up `w (1{R > 0}, 1{R > 0} B^c(t_i, R)^+)` over the slots, then
    /// moves every slot one step with the Gaussian `g`.
    #[inline(always)]
    fn sweep(&self, i: usize, x: &mut [f64], w: &[f64], g: f64) -> (f64, f64) {
        let (slope, intercept) = self.drift;
        let (vslope, vintercept, floor) = self.vol;
        let (c1, denom) = (self.c1[i], self.denom[i]);
        let (dt, sqrt_dt) = (self.dt, self.sqrt_dt);
        let step = |r: &mut f64, weight: f64, s0: &mut f64, s1: &mut f64| {
            let shifted = (slope * *r + intercept) + c1;
            let sigma = (vslope * *r + vintercept).max(floor);
            let held = shifted > 0.0;
            let drift = if held { shifted / denom } else { shifted };
            let vol = if held { sigma / denom } else { sigma };
            let alive = *r > 0.0;
            *s0 += if alive { weight } else { 0.0 };
            *s1 += if alive { weight * drift.max(0.0) } else { 0.0 };
            *r = *r + dt * drift + sqrt_dt * vol * g;
        };
        // four independent partial sums so that the loop vectorizes
        let (mut a0, mut a1) = ([0.0f64; LANES], [0.0f64; LANES]);
        let mut xs = x.chunks_exact_mut(LANES);
        let mut ws = w.chunks_exact(LANES);
        for (xc, wc) in (&mut xs).zip(&mut ws) {
            for l in 0..LANES {
                step(&mut xc[l], wc[l], &mut a0[l], &mut a1[l]);
            }
        }
        let (mut s0, mut s1) = (0.0, 0.0);
        for (r, &weight) in xs.into_remainder().iter_mut().zip(ws.remainder()) {
            step(r, weight, &mut s0, &mut s1);
        }
        let s0 = (a0[0] + a0[1]) + (a0[2] + a0[3]) + s0;
        let s1 = (a1[0] + a1[1]) + (a1[2] + a1[3]) + s1;
        (s0, s1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub curve: SurvivalCurve,
    /// Sup-norm change between consecutive iterates, one per iterate.
    pub deltas: Vec<f64>,
    pub converged: bool,
    /// Standard error of the last `c0` estimate.
    pub stderr_c0: Vec<f64>,
    /// Smallest raw `c1` estimate seen before clamping.
    pub min_raw_c1: f64,
}

impl IterationOutcome {
    pub fn iterations(&self) -> usize {
        self.deltas.len()
    }
}

/// Applies the map until the sup-norm change drops below `stop_tol` (when
/// positive) or `k_max` iterates have been computed. `observe` sees every
/// iterate `k >= 1` with its delta.
pub fn iterate_with(
    initial: &SurvivalCurve,
    k_max: usize,
    stop_tol: f64,
    bank_config: &BankConfig,
    spec: &DriftVolSpec,
    mut observe: impl FnMut(usize, &SurvivalCurve, f64),
) -> Result<IterationOutcome> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be at least 1".into()));
    }
    let mut bank = RestartPathBank::generate(bank_config, 0)?;
    let mut current = initial.clone();
    let mut deltas = Vec::with_capacity(k_max);
    let mut converged = false;
    let mut stderr_c0 = Vec::new();
    let mut min_raw_c1 = f64::INFINITY;
    for k in 1..=k_max {
        if !bank_config.crn && k > 1 {
            bank = RestartPathBank::generate(bank_config, k as u64)?;
        }
        let estimate = apply_lambda(&current, &bank, spec, bank_config.projection)?;
        let delta = estimate.curve.sup_distance(&current)?;
        min_raw_c1 = estimate.raw_c1.iter().copied().fold(min_raw_c1, f64::min);
        stderr_c0 = estimate.stderr_c0;
        current = estimate.curve;
        deltas.push(delta);
        observe(k, &current, delta);
        log::debug!("iterate {k}: sup delta {delta:.3e}");
        if stop_tol > 0.0 && delta < stop_tol {
            converged = true;
            break;
        }
    }
    if !converged && stop_tol > 0.0 {
        log::warn!(
            "fixed point not reached after {k_max} iterates (last delta {:.3e}, tolerance {stop_tol:.3e})",
            deltas.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(IterationOutcome {
        curve: current,
        deltas,
        converged,
        stderr_c0,
        min_raw_c1,
    })
}

pub fn iterate(
    initial: &SurvivalCurve,
    k_max: usize,
    stop_tol: f64,
    bank_config: &BankConfig,
    spec: &DriftVolSpec,
) -> Result<IterationOutcome> {
    iterate_with(initial, k_max, stop_tol, bank_config, spec, |_, _, _| {})
}

/// No-default prior: `c0 = rho(0, inf)` and `c1` frozen at the holding
/// constant of the sampled initial law.
pub fn initial_guess(bank_config: &BankConfig, spec: &DriftVolSpec) -> Result<SurvivalCurve> {
    let sample = bank_config
        .initial_law
        .sample(bank_config.paths, initial_seed(bank_config, 0))?;
    let alive = sample.iter().filter(|x| **x > 0.0).count() as f64 / sample.len() as f64;
    let measure = WeightedMeasure::empirical(&sample)?;
    let c1 = solve_c1(0.0, &measure, spec, C1_TOLERANCE);
    SurvivalCurve::constant(bank_config.horizon, bank_config.steps, alive, c1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRun {
    pub times: Vec<f64>,
    /// `1 - c0` of the final iterate.
    pub default: Vec<f64>,
    pub stderr: Vec<f64>,
    pub outcome: IterationOutcome,
}

/// Default probability from the iterated fixed-point map.
pub fn fixed_point_default_curve(config: &ExperimentConfig, spec: &DriftVolSpec) -> Result<FixedPointRun> {
    config.validate()?;
    let bank_config = BankConfig::from_experiment(config);
    let initial = initial_guess(&bank_config, spec)?;
    let outcome = iterate(&initial, config.max_iterations, config.stop_tol, &bank_config, spec)?;
    Ok(FixedPointRun {
        times: outcome.curve.grid().to_vec(),
        default: outcome.curve.default_probability(),
        stderr: outcome.stderr_c0.clone(),
        outcome,
    })
}

/// Restart correction `sum_{k<n} g(t_k) (c0(t_{k+1}) - c0(t_k))`.
pub fn restart_correction_stieltjes(grid: &[f64], c0: &[f64], n: usize, g: impl Fn(f64) -> f64) -> f64 {
    (0..n).map(|k| g(grid[k]) * (c0[k + 1] - c0[k])).sum()
}

/// The same correction in inverse form,
/// `-int_{c0(t_n)}^{c0(0)} g(c0^{-1}(u)) du`, with `c0` interpolated
/// linearly, `c0^{-1}(u) = inf{t : c0(t) <= u}` and a midpoint rule over
/// `quadrature` cells.
pub fn restart_correction_inverse(
    grid: &[f64],
    c0: &[f64],
    n: usize,
    g: impl Fn(f64) -> f64,
    quadrature: usize,
) -> f64 {
    let (lo, hi) = (c0[n], c0[0]);
    if hi <= lo {
        return 0.0;
    }
    let du = (hi - lo) / quadrature as f64;
    let integral: f64 = (0..quadrature)
        .map(|j| {
            let u = lo + (j as f64 + 0.5) * du;
            g(generalized_inverse(grid, c0, u))
        })
        .sum::<f64>()
        * du;
    -integral
}

fn generalized_inverse(grid: &[f64], c0: &[f64], u: f64) -> f64 {
    // first knot at or below u; c0 is non-increasing
    let j = c0.partition_point(|&v| v > u);
    if j == 0 {
        return grid[0];
    }
    if j == c0.len() {
        return *grid.last().unwrap();
    }
    let (t0, t1) = (grid[j - 1], grid[j]);
    let (v0, v1) = (c0[j - 1], c0[j]);
    if v0 == v1 {
        return t1;
    }
    t0 + (v0 - u) / (v0 - v1) * (t1 - t0)
}
