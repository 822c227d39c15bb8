//! Euler-Maruyama simulation of interacting particles absorbed at the origin.
//!
//! Three dynamics share one kernel:
//! * `Equilibrium`: coefficients `(B, Sigma)` against the current empirical
//!   measure, with `c1` re-solved at every step;
//! * `Frozen`: coefficients `(B^c, Sigma^c)` read off a survival curve;
//! * `Baseline`: the idiosyncratic `(b, sigma)` without holding.
//!
//! The smoothed system replaces absorption by the mollified weights
//! `H^n(running min)` and is simulated by [`simulate_smoothed`].

use rand::Rng;
use rayon::prelude::*;

use crate::coefficients::{
    frozen_from_values, holding_coefficients, smoothed_heaviside, smoothed_holding_coefficients,
    DriftVolSpec, HoldingTerms, C1_TOLERANCE,
};
use crate::config::ExperimentConfig;
use crate::curve::{uniform_grid, SurvivalCurve};
use crate::error::{Error, Result};
use crate::rng::{gaussian, open_uniform, Purpose, Substreams};

/// Positions are capped here to keep pathological configurations finite.
pub const POSITION_CAP: f64 = 1e9;

/// Law of the initial equity values, supported in `(0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Exponential { rate: f64 },
    PointMass { x0: f64 },
    /// `|Z| / n + max(X0, 1 / n)` with `X0` drawn from `base` and `Z`
    /// standard Gaussian.
    Mollified { base: Box<InitialLaw>, n: u32 },
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Exponential { rate } if !(*rate > 0.0) || !rate.is_finite() => {
                Err(Error::InvalidLaw(format!("exponential rate {rate} must be positive")))
            }
            InitialLaw::PointMass { x0 } if !(*x0 > 0.0) || !x0.is_finite() => Err(
                Error::InvalidLaw(format!("point mass at {x0} puts mass on (-inf, 0]")),
            ),
            InitialLaw::Mollified { n: 0, .. } => {
                Err(Error::InvalidLaw("mollification index must be at least 1".into()))
            }
            InitialLaw::Mollified { base, .. } => match **base {
                InitialLaw::Mollified { .. } => {
                    Err(Error::InvalidLaw("nested mollification is not supported".into()))
                }
                ref inner => inner.validate(),
            },
            _ => Ok(()),
        }
    }

    /// Mean of the law, where available in closed form.
    pub fn mean(&self) -> Option<f64> {
        match self {
            InitialLaw::Exponential { rate } => Some(1.0 / rate),
            InitialLaw::PointMass { x0 } => Some(*x0),
            InitialLaw::Mollified { .. } => None,
        }
    }

    fn draw_base(&self, rng: &mut impl Rng) -> f64 {
        match self {
            InitialLaw::Exponential { rate } => -open_uniform(rng).ln() / rate,
            InitialLaw::PointMass { x0 } => *x0,
            InitialLaw::Mollified { base, .. } => base.draw_base(rng),
        }
    }

    /// Draw for sample `index`. The base draw uses the same substream with or
    /// without mollification, so mollified and plain samples are coupled.
    pub(crate) fn draw(&self, seed: u64, index: u64) -> f64 {
        let base = self.draw_base(&mut Substreams::new(seed, Purpose::InitialLaw).stream(index));
        match self {
            InitialLaw::Mollified { n, .. } => {
                let inv_n = 1.0 / *n as f64;
                let z = gaussian(&mut Substreams::new(seed, Purpose::Mollifier).stream(index));
                z.abs() * inv_n + base.max(inv_n)
            }
            _ => base,
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        Ok((0..count as u64).map(|i| self.draw(seed, i)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbsorptionScheme {
    /// Absorb when the Brownian bridge between two grid values crosses zero.
    Bridge,
    /// Absorb only when a grid value is non-positive.
    Discrete,
}

#[derive(Debug, Clone, Copy)]
pub enum StepMode<'a> {
    Equilibrium,
    Frozen(&'a SurvivalCurve),
    Baseline,
}

/// Random inputs of one Euler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDraw {
    pub gaussian: f64,
    /// Uniform on `(0, 1]` driving the bridge minimum.
    pub uniform: f64,
}

impl StepDraw {
    pub(crate) fn for_particle(streams: &Substreams, particle: usize, step: u64) -> Self {
        let mut rng = streams.at(particle as u64, step);
        let gaussian = gaussian(&mut rng);
        let uniform = open_uniform(&mut rng);
        Self { gaussian, uniform }
    }
}

/// One explicit Euler step from `x` with frozen coefficients. Returns the
/// new value and the minimum of the path over the step, sampled from the
/// Brownian bridge for [`AbsorptionScheme::Bridge`].
#[inline]
pub fn euler_step(
    x: f64,
    drift: f64,
    vol: f64,
    dt: f64,
    draw: StepDraw,
    scheme: AbsorptionScheme,
) -> (f64, f64) {
    let next = x + drift * dt + vol * dt.sqrt() * draw.gaussian;
    let path_min = match scheme {
        AbsorptionScheme::Discrete => x.min(next),
        AbsorptionScheme::Bridge => {
            let gap = next - x;
            let spread = (gap * gap - 2.0 * vol * vol * dt * draw.uniform.ln()).sqrt();
            (0.5 * (x + next - spread)).min(x).min(next)
        }
    };
    (next, path_min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub running_min: Vec<f64>,
    pub absorbed: Vec<bool>,
    pub time: f64,
    pub step_index: u64,
    pub master_seed: u64,
}

impl ParticleEnsemble {
    pub fn from_positions(positions: Vec<f64>, master_seed: u64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidConfig("an ensemble needs at least one particle".into()));
        }
        let absorbed: Vec<bool> = positions.iter().map(|&x| !(x > 0.0)).collect();
        let positions: Vec<f64> = positions.iter().map(|&x| x.max(0.0)).collect();
        Ok(Self {
            running_min: positions.clone(),
            positions,
            absorbed,
            time: 0.0,
            step_index: 0,
            master_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.absorbed.iter().filter(|a| !**a).count()
    }

    pub fn alive_fraction(&self) -> f64 {
        self.alive_count() as f64 / self.len() as f64
    }

    /// Holding terms of the empirical measure: equal weights, absorbed
    /// particles sitting at the origin.
    fn holding_terms(&self, spec: &DriftVolSpec, terms: &mut HoldingTerms) {
        terms.clear();
        let w = 1.0 / self.len() as f64;
        for (&x, &dead) in self.positions.iter().zip(&self.absorbed) {
            if !dead {
                terms.push(w, spec.b(self.time, x));
            }
        }
    }

    /// `c1` of the current empirical measure.
    pub fn empirical_c1(&self, spec: &DriftVolSpec) -> f64 {
        let mut terms = HoldingTerms::with_capacity(self.len());
        self.holding_terms(spec, &mut terms);
        terms.solve(C1_TOLERANCE)
    }
}

/// I.i.d. initial positions from `law`, deterministic in `seed`.
pub fn sample_initial(law: &InitialLaw, count: usize, seed: u64) -> Result<ParticleEnsemble> {
    if count == 0 {
        return Err(Error::InvalidConfig("particle count must be at least 1".into()));
    }
    ParticleEnsemble::from_positions(law.sample(count, seed)?, seed)
}

fn clip(x: f64, clipped: &mut bool) -> f64 {
    if x > POSITION_CAP {
        *clipped = true;
        POSITION_CAP
    } else {
        x
    }
}

/// Advances every alive particle by `dt`; absorbed particles stay at zero.
pub fn step_absorbed(
    ens: &mut ParticleEnsemble,
    dt: f64,
    spec: &DriftVolSpec,
    mode: StepMode<'_>,
    scheme: AbsorptionScheme,
) -> Result<()> {
    let mut terms = HoldingTerms::with_capacity(ens.len());
    step_absorbed_with(ens, dt, spec, mode, scheme, &mut terms)
}

fn step_absorbed_with(
    ens: &mut ParticleEnsemble,
    dt: f64,
    spec: &DriftVolSpec,
    mode: StepMode<'_>,
    scheme: AbsorptionScheme,
    terms: &mut HoldingTerms,
) -> Result<()> {
    assert!(dt > 0.0, "time step must be positive");
    let t = ens.time;
    // frozen summary of the previous step: (c0 or alive mass, c1)
    let summary = match mode {
        StepMode::Equilibrium => {
            ens.holding_terms(spec, terms);
            Some((terms.mass(), terms.solve(C1_TOLERANCE)))
        }
        StepMode::Frozen(curve) => {
            let (c0, c1) = curve.value_at(t)?;
            Some((c0, c1))
        }
        StepMode::Baseline => None,
    };
    let streams = Substreams::new(ens.master_seed, Purpose::ParticleStep);
    let step = ens.step_index;
    let clipped = ens
        .positions
        .par_iter_mut()
        .zip(ens.running_min.par_iter_mut())
        .zip(ens.absorbed.par_iter_mut())
        .enumerate()
        .map(|(i, ((x, running), dead))| {
            if *dead {
                return false;
            }
            let b = spec.b(t, *x);
            let sigma = spec.sigma(t, *x);
            let (drift, vol) = match summary {
                None => (b, sigma),
                Some((mass, c1)) => match mode {
                    StepMode::Frozen(_) => frozen_from_values(b, sigma, mass, c1),
                    _ => holding_coefficients(b, sigma, c1, mass),
                },
            };
            let draw = StepDraw::for_particle(&streams, i, step);
            let (next, path_min) = euler_step(*x, drift, vol, dt, draw, scheme);
            let mut clipped = false;
            if path_min <= 0.0 {
                *dead = true;
                *x = 0.0;
                *running = running.min(path_min);
            } else {
                *x = clip(next, &mut clipped);
                *running = running.min(path_min);
            }
            clipped
        })
        .reduce(|| false, |a, b| a || b);
    if clipped {
        log::warn!("positions capped at {POSITION_CAP:e} at t = {t}");
    }
    ens.time = t + dt;
    ens.step_index += 1;
    Ok(())
}

/// Empirical summaries of a particle run on the uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub particles: usize,
    /// Fraction of particles not yet absorbed, `c0` of the empirical law.
    pub survival_fraction: Vec<f64>,
    /// `c1` of the empirical law at each grid time.
    pub empirical_c1: Vec<f64>,
    /// Smoothed runs only: `mean H^n(X^n)`, the mollified alive mass.
    pub mollified_mass: Option<Vec<f64>>,
    /// Per-time particle positions when requested by the configuration.
    pub trajectories: Option<Vec<Vec<f64>>>,
    /// Positions at the horizon (zero for absorbed particles).
    pub final_positions: Vec<f64>,
}

impl PathRecord {
    pub fn default_probability(&self) -> Vec<f64> {
        self.survival_fraction.iter().map(|s| 1.0 - s).collect()
    }

    /// Binomial standard error of the survival fraction.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.particles as f64;
        self.survival_fraction
            .iter()
            .map(|p| (p * (1.0 - p) / n).sqrt())
            .collect()
    }
}

/// Runs the absorbed particle system over the configured grid.
pub fn simulate(config: &ExperimentConfig, mode: StepMode<'_>) -> Result<PathRecord> {
    config.validate()?;
    let spec = &config.model;
    let dt = config.dt();
    let times = uniform_grid(config.horizon, config.steps);
    let mut ens = sample_initial(&config.initial_law, config.particles, config.seed)?;
    let mut terms = HoldingTerms::with_capacity(ens.len());

    let mut survival = Vec::with_capacity(times.len());
    let mut c1 = Vec::with_capacity(times.len());
    let mut trajectories = config.record_paths.then(Vec::new);
    for k in 0..=config.steps {
        // keep the grid time exact rather than accumulated
        ens.time = times[k];
        survival.push(ens.alive_fraction());
        ens.holding_terms(spec, &mut terms);
        c1.push(terms.solve(C1_TOLERANCE));
        if let Some(paths) = trajectories.as_mut() {
            paths.push(ens.positions.clone());
        }
        if k < config.steps {
            step_absorbed_with(&mut ens, dt, spec, mode, config.absorption, &mut terms)?;
        }
    }
    Ok(PathRecord {
        times,
        particles: ens.len(),
        survival_fraction: survival,
        empirical_c1: c1,
        mollified_mass: None,
        trajectories,
        final_positions: ens.positions,
    })
}

/// Runs the smoothed system of index `n`: particles are never absorbed, the
/// interaction uses the atoms `Y H^n(I)` and coefficients `(B^n, Sigma^n)`,
/// and the record reports the induced absorbed process `Y 1{I > 0}`.
pub fn simulate_smoothed(config: &ExperimentConfig, n: u32) -> Result<PathRecord> {
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("smoothing index must be at least 1".into()));
    }
    let spec = &config.model;
    let dt = config.dt();
    let times = uniform_grid(config.horizon, config.steps);
    let law = match &config.initial_law {
        InitialLaw::Mollified { base, .. } => InitialLaw::Mollified {
            base: base.clone(),
            n,
        },
        base => InitialLaw::Mollified {
            base: Box::new(base.clone()),
            n,
        },
    };
    let count = config.particles;
    let mut positions = law.sample(count, config.seed)?;
    let mut running_min = positions.clone();
    let streams = Substreams::new(config.seed, Purpose::ParticleStep);
    let w = 1.0 / count as f64;
    let mut terms = HoldingTerms::with_capacity(count);

    let mut survival = Vec::with_capacity(times.len());
    let mut c1_record = Vec::with_capacity(times.len());
    let mut mollified = Vec::with_capacity(times.len());
    let mut trajectories = config.record_paths.then(Vec::new);
    let induced = |y: f64, i: f64| if i > 0.0 { y } else { 0.0 };
    for (k, &t) in times.iter().enumerate() {
        terms.clear();
        let mut alive = 0usize;
        let mut mollified_mass = 0.0;
        for (&y, &i) in positions.iter().zip(&running_min) {
            let atom = y * smoothed_heaviside(n, i);
            let h = smoothed_heaviside(n, atom);
            if h > 0.0 {
                terms.push(w * h, spec.b(t, atom));
            }
            if i > 0.0 {
                alive += 1;
                mollified_mass += smoothed_heaviside(n, y);
            }
        }
        let c1 = terms.solve(C1_TOLERANCE);
        let mass = terms.mass();
        survival.push(alive as f64 * w);
        c1_record.push(c1);
        mollified.push(mollified_mass * w);
        if let Some(paths) = trajectories.as_mut() {
            paths.push(positions.iter().zip(&running_min).map(|(&y, &i)| induced(y, i)).collect());
        }
        if k == config.steps {
            break;
        }
        let clipped = positions
            .par_iter_mut()
            .zip(running_min.par_iter_mut())
            .enumerate()
            .map(|(idx, (y, running))| {
                let (drift, vol) =
                    smoothed_holding_coefficients(n, spec.b(t, *y), spec.sigma(t, *y), c1, mass);
                let draw = StepDraw::for_particle(&streams, idx, k as u64);
                let (next, path_min) = euler_step(*y, drift, vol, dt, draw, config.absorption);
                let mut clipped = false;
                *y = clip(next, &mut clipped);
                *running = running.min(path_min);
                clipped
            })
            .reduce(|| false, |a, b| a || b);
        if clipped {
            log::warn!("smoothed positions capped at {POSITION_CAP:e} at t = {t}");
        }
    }
    let final_positions = positions
        .iter()
        .zip(&running_min)
        .map(|(&y, &i)| induced(y, i))
        .collect();
    Ok(PathRecord {
        times,
        particles: count,
        survival_fraction: survival,
        empirical_c1: c1_record,
        mollified_mass: Some(mollified),
        trajectories,
        final_positions,
    })
}

/// Default probability curve of the system without holding.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultCurve {
    pub times: Vec<f64>,
    pub default: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub fn baseline_default_curve(config: &ExperimentConfig) -> Result<DefaultCurve> {
    let record = simulate(config, StepMode::Baseline)?;
    Ok(DefaultCurve {
        default: record.default_probability(),
        stderr: record.stderr(),
        times: record.times,
    })
}
