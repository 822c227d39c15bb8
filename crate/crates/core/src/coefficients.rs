//! Idiosyncratic coefficients `b`, `sigma` and the equilibrium coefficients
//! `B`, `Sigma` of the mutual holding game.
//!
//! Given a law `m` of equity values on `[0, inf)` (mass at the origin is
//! defaulted), the holding constant `c1(t, m)` is the unique root of
//!
//! ```text
//! F(y) = (1 + m(0,inf)) y - int (b(t,x) + y)^+ 1{x > 0} m(dx)
//! ```
//!
//! and the equilibrium coefficients read
//!
//! ```text
//! B     = (b + c1)^+ / (1 + m(0,inf)) - (b + c1)^-
//! Sigma = sigma / (1 + m(0,inf) 1{B > 0})
//! ```
//!
//! The smoothed variants replace `1{x > 0}` by the mollifier `H^n`.

use std::fmt;

use crate::curve::SurvivalCurve;
use crate::error::{Error, Result};

/// Absolute tolerance on the holding-constant residual `F`.
pub const C1_TOLERANCE: f64 = 1e-12;

/// Idiosyncratic drift `b(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drift {
    /// `b = lambda - x`.
    OrnsteinUhlenbeck { mean_level: f64 },
    Constant { value: f64 },
    /// `b = slope * x + intercept`.
    Affine { slope: f64, intercept: f64 },
}

/// Idiosyncratic volatility `sigma(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Volatility {
    Constant { value: f64 },
    /// `sigma = max(slope * x + intercept, floor)`.
    Affine { slope: f64, intercept: f64, floor: f64 },
}

/// Declared sign of the drift on the alive states `(0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignRegime {
    NonPositive,
    Positive,
    SignChanging,
}

impl Drift {
    #[inline]
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            Drift::OrnsteinUhlenbeck { mean_level } => mean_level - x,
            Drift::Constant { value } => value,
            Drift::Affine { slope, intercept } => slope * x + intercept,
        }
    }

    /// `(slope, intercept)` of the drift seen as an affine function of `x`.
    pub(crate) fn affine_parts(&self) -> (f64, f64) {
        match *self {
            Drift::OrnsteinUhlenbeck { mean_level } => (-1.0, mean_level),
            Drift::Constant { value } => (0.0, value),
            Drift::Affine { slope, intercept } => (slope, intercept),
        }
    }

    /// Sign regime that holds on `(0, inf)`.
    pub fn regime_on_alive_states(&self) -> SignRegime {
        let (slope, intercept) = self.affine_parts();
        if slope <= 0.0 && intercept <= 0.0 {
            SignRegime::NonPositive
        } else if slope >= 0.0 && intercept >= 0.0 {
            SignRegime::Positive
        } else {
            SignRegime::SignChanging
        }
    }
}

impl Volatility {
    #[inline]
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            Volatility::Constant { value } => value,
            Volatility::Affine {
                slope,
                intercept,
                floor,
            } => (slope * x + intercept).max(floor),
        }
    }

    /// `(slope, intercept, floor)` with `sigma = max(slope * x + intercept, floor)`.
    pub(crate) fn affine_parts(&self) -> (f64, f64, f64) {
        match *self {
            Volatility::Constant { value } => (0.0, value, value),
            Volatility::Affine {
                slope,
                intercept,
                floor,
            } => (slope, intercept, floor),
        }
    }

    /// Strictly positive lower bound of `sigma` over the whole state space.
    pub fn floor(&self) -> f64 {
        match *self {
            Volatility::Constant { value } => value,
            Volatility::Affine { floor, .. } => floor,
        }
    }
}

/// Measure-free idiosyncratic coefficients with a declared sign regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftVolSpec {
    drift: Drift,
    vol: Volatility,
    regime: SignRegime,
}

impl DriftVolSpec {
    /// Validates the volatility floor and, where the drift family allows it,
    /// the declared sign regime on `(0, inf)`.
    pub fn new(drift: Drift, vol: Volatility, regime: SignRegime) -> Result<Self> {
        let params: &[f64] = &match drift {
            Drift::OrnsteinUhlenbeck { mean_level } => [mean_level, 0.0],
            Drift::Constant { value } => [value, 0.0],
            Drift::Affine { slope, intercept } => [slope, intercept],
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite drift parameter in {drift:?}")));
        }
        let floor = vol.floor();
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::InvalidModel(format!(
                "volatility must be bounded below by a positive floor, got {floor}"
            )));
        }
        if let Volatility::Affine { slope, intercept, .. } = vol {
            if !slope.is_finite() || !intercept.is_finite() {
                return Err(Error::InvalidModel("non-finite volatility parameter".into()));
            }
        }
        let actual = drift.regime_on_alive_states();
        let consistent = match regime {
            SignRegime::SignChanging => true,
            SignRegime::NonPositive => actual == SignRegime::NonPositive,
            SignRegime::Positive => actual == SignRegime::Positive,
        };
        if !consistent {
            return Err(Error::InvalidModel(format!(
                "drift {drift:?} is not {regime:?} on (0, inf)"
            )));
        }
        Ok(Self { drift, vol, regime })
    }

    /// Model with the regime inferred from the drift.
    pub fn inferred(drift: Drift, vol: Volatility) -> Result<Self> {
        Self::new(drift, vol, drift.regime_on_alive_states())
    }

    /// The Ornstein-Uhlenbeck model `b = lambda - x`, `sigma = 1`.
    pub fn ornstein_uhlenbeck(mean_level: f64) -> Result<Self> {
        Self::new(
            Drift::OrnsteinUhlenbeck { mean_level },
            Volatility::Constant { value: 1.0 },
            SignRegime::SignChanging,
        )
    }

    pub fn drift(&self) -> Drift {
        self.drift
    }

    pub fn volatility(&self) -> Volatility {
        self.vol
    }

    pub fn regime(&self) -> SignRegime {
        self.regime
    }

    #[inline]
    pub fn b(&self, t: f64, x: f64) -> f64 {
        self.drift.eval(t, x)
    }

    #[inline]
    pub fn sigma(&self, t: f64, x: f64) -> f64 {
        self.vol.eval(t, x)
    }
}

impl fmt::Display for SignRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignRegime::NonPositive => "non_positive",
            SignRegime::Positive => "positive",
            SignRegime::SignChanging => "sign_changing",
        })
    }
}

/// Finite measure on `[0, inf)` stored as weighted atoms. Atoms at exactly
/// zero carry defaulted mass.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMeasure {
    atoms: Vec<(f64, f64)>,
    total_mass: f64,
}

impl WeightedMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, w) in &atoms {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom position {x} is not in [0, inf)")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom weight {w} is not positive")));
            }
        }
        let total_mass = atoms.iter().map(|a| a.1).sum();
        Ok(Self { atoms, total_mass })
    }

    pub fn dirac(x: f64) -> Result<Self> {
        Self::new(vec![(x, 1.0)])
    }

    /// Empirical probability measure with equal weights; negative entries
    /// are treated as defaulted and placed at the origin.
    pub fn empirical(positions: &[f64]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidMeasure("empirical measure of no samples".into()));
        }
        let w = 1.0 / positions.len() as f64;
        Self::new(positions.iter().map(|&x| (x.max(0.0), w)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// `m((0, inf))`, capped at the total mass and at one so that rounding in
    /// the weight sum cannot push `1 + m` above two.
    pub fn alive_mass(&self) -> f64 {
        self.alive_atoms().map(|(_, w)| w).sum::<f64>().min(self.total_mass).min(1.0)
    }

    pub fn alive_atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().filter(|&(x, _)| x > 0.0)
    }
}

#[inline]
fn pos(v: f64) -> f64 {
    v.max(0.0)
}

#[inline]
fn neg(v: f64) -> f64 {
    (-v).max(0.0)
}

/// Weighted drift samples `(w_i, b_i)` entering the holding-constant equation.
///
/// The effective alive mass is the sum of the term weights, capped at one.
#[derive(Debug, Clone, Default)]
pub struct HoldingTerms {
    weights: Vec<f64>,
    drifts: Vec<f64>,
}

impl HoldingTerms {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            weights: Vec::with_capacity(n),
            drifts: Vec::with_capacity(n),
        }
    }

    pub fn clear(&mut self) {
        self.weights.clear();
        self.drifts.clear();
    }

    pub fn push(&mut self, weight: f64, drift: f64) {
        self.weights.push(weight);
        self.drifts.push(drift);
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum::<f64>().min(1.0)
    }

    pub fn positive_drift_mass(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.drifts)
            .map(|(w, b)| w * pos(*b))
            .sum()
    }

    /// `F(y) = (1 + mass) y - sum w (b + y)^+`.
    pub fn residual(&self, y: f64) -> f64 {
        let shared: f64 = self
            .weights
            .iter()
            .zip(&self.drifts)
            .map(|(w, b)| w * pos(b + y))
            .sum();
        (1.0 + self.mass()) * y - shared
    }

    /// Root of the residual by bisection on `[0, sum w b^+]`, finished by an
    /// exact solve on the active set `{b + y > 0}` of the final bracket.
    pub fn solve(&self, tol: f64) -> f64 {
        assert!(tol > 0.0, "tolerance must be positive");
        let upper = self.positive_drift_mass();
        if upper <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0_f64, upper);
        let mut best = (lo, self.residual(lo).abs());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f = self.residual(mid);
            if f.abs() < best.1 {
                best = (mid, f.abs());
            }
            if f.abs() <= tol {
                break;
            }
            if f < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let polished = self.active_set_solve(best.0);
        if (0.0..=upper).contains(&polished)
            && self.residual(polished).abs() <= tol.max(best.1)
        {
            return polished;
        }
        best.0
    }

    /// On the set where `b_i + y > 0` the equation is linear:
    /// `y (1 + sum_{inactive} w) = sum_{active} w b`.
    fn active_set_solve(&self, y: f64) -> f64 {
        let mut numerator = 0.0;
        let mut inactive = 0.0;
        for (w, b) in self.weights.iter().zip(&self.drifts) {
            if b + y > 0.0 {
                numerator += w * b;
            } else {
                inactive += w;
            }
        }
        numerator / (1.0 + inactive)
    }
}

fn alive_terms(t: f64, m: &WeightedMeasure, spec: &DriftVolSpec) -> HoldingTerms {
    let mut terms = HoldingTerms::with_capacity(m.atoms().len());
    for (x, w) in m.alive_atoms() {
        terms.push(w, spec.b(t, x));
    }
    terms
}

/// `F(y)` of the holding-constant equation for the measure `m`.
pub fn holding_residual(y: f64, t: f64, m: &WeightedMeasure, spec: &DriftVolSpec) -> f64 {
    alive_terms(t, m, spec).residual(y)
}

/// The holding constant `c1(t, m) >= 0` with `|F(c1)| <= tol`.
pub fn solve_c1(t: f64, m: &WeightedMeasure, spec: &DriftVolSpec, tol: f64) -> f64 {
    alive_terms(t, m, spec).solve(tol)
}

/// `(B, Sigma)` from the idiosyncratic values `b`, `sigma`, the holding
/// constant and the alive mass. Ties `B = 0` take the unshared branch.
#[inline]
pub fn holding_coefficients(b: f64, sigma: f64, c1: f64, alive_mass: f64) -> (f64, f64) {
    let shifted = b + c1;
    let drift = pos(shifted) / (1.0 + alive_mass) - neg(shifted);
    let vol = if drift > 0.0 {
        sigma / (1.0 + alive_mass)
    } else {
        sigma
    };
    (drift, vol)
}

/// Equilibrium drift and volatility, solving for `c1` once.
pub fn equilibrium_coefficients(
    t: f64,
    x: f64,
    m: &WeightedMeasure,
    spec: &DriftVolSpec,
) -> (f64, f64) {
    let terms = alive_terms(t, m, spec);
    let c1 = terms.solve(C1_TOLERANCE);
    holding_coefficients(spec.b(t, x), spec.sigma(t, x), c1, terms.mass())
}

pub fn equilibrium_drift(t: f64, x: f64, m: &WeightedMeasure, spec: &DriftVolSpec) -> f64 {
    equilibrium_coefficients(t, x, m, spec).0
}

pub fn equilibrium_vol(t: f64, x: f64, m: &WeightedMeasure, spec: &DriftVolSpec) -> f64 {
    equilibrium_coefficients(t, x, m, spec).1
}

/// Equilibrium holding decision of any agent towards agent `y_target`:
/// hold it iff its equilibrium drift is strictly positive.
pub fn equilibrium_strategy(
    t: f64,
    _x_holder: f64,
    y_target: f64,
    m: &WeightedMeasure,
    spec: &DriftVolSpec,
) -> bool {
    equilibrium_drift(t, y_target, m, spec) > 0.0
}

/// Mollified Heaviside `H^n(x) = 1{x > 0} exp(-1 / (n x))`.
#[inline]
pub fn smoothed_heaviside(n: u32, x: f64) -> f64 {
    assert!(n >= 1, "smoothing index starts at 1");
    if x > 0.0 {
        (-1.0 / (n as f64 * x)).exp()
    } else {
        0.0
    }
}

pub(crate) fn smoothed_terms(
    n: u32,
    t: f64,
    m: &WeightedMeasure,
    spec: &DriftVolSpec,
) -> HoldingTerms {
    let mut terms = HoldingTerms::with_capacity(m.atoms().len());
    for &(x, w) in m.atoms() {
        let h = smoothed_heaviside(n, x);
        if h > 0.0 {
            terms.push(w * h, spec.b(t, x));
        }
    }
    terms
}

/// Smoothed holding constant `c1^n(t, m)`, the root of
/// `(1 + m(H^n)) y = int (y + b)^+ H^n dm`.
pub fn smoothed_c1(n: u32, t: f64, m: &WeightedMeasure, spec: &DriftVolSpec, tol: f64) -> f64 {
    smoothed_terms(n, t, m, spec).solve(tol)
}

/// `(B^n, Sigma^n)` given the smoothed holding constant and `m(H^n)`.
#[inline]
pub fn smoothed_holding_coefficients(
    n: u32,
    b: f64,
    sigma: f64,
    c1: f64,
    smoothed_mass: f64,
) -> (f64, f64) {
    let shifted = b + c1;
    let drift = pos(shifted) / (1.0 + smoothed_mass) - neg(shifted);
    let vol = sigma / (1.0 + smoothed_mass * smoothed_heaviside(n, drift));
    (drift, vol)
}

/// Smoothed equilibrium coefficients `(B^n, Sigma^n)` with `b^n = b` and
/// `sigma^n = sigma`.
pub fn smoothed_coefficients(
    n: u32,
    t: f64,
    x: f64,
    m: &WeightedMeasure,
    spec: &DriftVolSpec,
) -> (f64, f64) {
    let terms = smoothed_terms(n, t, m, spec);
    let c1 = terms.solve(C1_TOLERANCE);
    smoothed_holding_coefficients(n, spec.b(t, x), spec.sigma(t, x), c1, terms.mass())
}

/// Coefficients with the law dependence frozen through a survival curve.
#[inline]
pub fn frozen_from_values(b: f64, sigma: f64, c0: f64, c1: f64) -> (f64, f64) {
    holding_coefficients(b, sigma, c1, c0)
}

/// `(B^c, Sigma^c)` at `(t, x)` with `c` read left-continuously off `curve`.
pub fn frozen_coefficients(
    t: f64,
    x: f64,
    curve: &SurvivalCurve,
    spec: &DriftVolSpec,
) -> Result<(f64, f64)> {
    let (c0, c1) = curve.value_at(t)?;
    Ok(frozen_from_values(spec.b(t, x), spec.sigma(t, x), c0, c1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::uniform_grid;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Plain bisection on the residual, independent of the solver.
    fn bisection_oracle(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn identity_drift() -> DriftVolSpec {
        DriftVolSpec::new(
            Drift::Affine {
                slope: 1.0,
                intercept: 0.0,
            },
            Volatility::Constant { value: 1.0 },
            SignRegime::SignChanging,
        )
        .unwrap()
    }

    fn constant_drift(value: f64) -> DriftVolSpec {
        DriftVolSpec::inferred(Drift::Constant { value }, Volatility::Constant { value: 1.0 })
            .unwrap()
    }

    #[test]
    fn c1_vanishes_without_alive_mass() {
        let m = WeightedMeasure::new(vec![(0.0, 0.5), (0.0, 0.5)]).unwrap();
        assert_eq!(solve_c1(0.0, &m, &identity_drift(), C1_TOLERANCE), 0.0);
        assert_eq!(solve_c1(0.0, &m, &constant_drift(3.0), C1_TOLERANCE), 0.0);
    }

    #[test]
    fn c1_for_dirac_at_two() {
        let m = WeightedMeasure::dirac(2.0).unwrap();
        let oracle = bisection_oracle(|y| y - (y + 2.0) / 2.0, 0.0, 10.0);
        assert_abs_diff_eq!(oracle, 2.0, epsilon = 1e-12);
        let c1 = solve_c1(0.0, &m, &identity_drift(), C1_TOLERANCE);
        assert_abs_diff_eq!(c1, oracle, epsilon = 1e-10);
    }

    #[test]
    fn c1_for_two_atoms() {
        let m = WeightedMeasure::new(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap();
        let spec = DriftVolSpec::new(
            Drift::Affine {
                slope: 1.0,
                intercept: -2.0,
            },
            Volatility::Constant { value: 1.0 },
            SignRegime::SignChanging,
        )
        .unwrap();
        let oracle =
            bisection_oracle(|y| y - 0.25 * ((y - 1.0).max(0.0) + (y + 1.0).max(0.0)), 0.0, 10.0);
        assert_abs_diff_eq!(oracle, 1.0 / 3.0, epsilon = 1e-12);
        let c1 = solve_c1(0.0, &m, &spec, C1_TOLERANCE);
        assert_abs_diff_eq!(c1, oracle, epsilon = 1e-10);
        assert!(holding_residual(c1, 0.0, &m, &spec).abs() <= C1_TOLERANCE);
    }

    #[test]
    fn non_positive_drift_is_unchanged() {
        let spec = constant_drift(-1.0);
        let m = WeightedMeasure::new(vec![(0.5, 0.3), (2.0, 0.7)]).unwrap();
        assert_eq!(equilibrium_drift(0.0, 1.0, &m, &spec), -1.0);
        assert_eq!(equilibrium_vol(0.0, 1.0, &m, &spec), 1.0);
        assert!(!equilibrium_strategy(0.0, 0.3, 1.0, &m, &spec));
    }

    #[test]
    fn dead_measure_leaves_coefficients_idiosyncratic() {
        let m = WeightedMeasure::new(vec![(0.0, 1.0)]).unwrap();
        let spec = identity_drift();
        assert_eq!(equilibrium_coefficients(0.0, 1.5, &m, &spec), (1.5, 1.0));
        assert_eq!(equilibrium_coefficients(0.0, -0.5, &m, &spec), (-0.5, 1.0));
        assert!(equilibrium_strategy(0.0, 0.0, 1.0, &m, &spec));
    }

    #[test]
    fn coefficients_for_dirac_at_two() {
        let m = WeightedMeasure::dirac(2.0).unwrap();
        let c1 = bisection_oracle(|y| y - (y + 2.0) / 2.0, 0.0, 10.0);
        // plug the oracle value into the closed formulas
        let expected_b = (1.0 + c1) / 2.0;
        let expected_sigma = 1.0 / 2.0;
        let (b, s) = equilibrium_coefficients(0.0, 1.0, &m, &identity_drift());
        assert_abs_diff_eq!(b, expected_b, epsilon = 1e-10);
        assert_abs_diff_eq!(b, 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(s, expected_sigma, epsilon = 1e-15);
    }

    #[test]
    fn strategy_boundary_takes_zero_branch() {
        let m = WeightedMeasure::dirac(2.0).unwrap();
        let spec = identity_drift();
        // b(-2) + c1 = 0 exactly
        assert_eq!(equilibrium_drift(0.0, -2.0, &m, &spec), 0.0);
        assert!(!equilibrium_strategy(0.0, 5.0, -2.0, &m, &spec));
        assert_eq!(equilibrium_vol(0.0, -2.0, &m, &spec), 1.0);
    }

    #[test]
    fn mollifier_values() {
        assert_eq!(smoothed_heaviside(7, -1.0), 0.0);
        assert_eq!(smoothed_heaviside(7, 0.0), 0.0);
        assert_abs_diff_eq!(smoothed_heaviside(1, 1.0), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(smoothed_heaviside(1, 1.0), 0.3679, epsilon = 1e-4);
        assert_abs_diff_eq!(smoothed_heaviside(100, 1.0), 0.9900, epsilon = 1e-4);
    }

    #[test]
    fn smoothed_c1_at_first_index() {
        let m = WeightedMeasure::dirac(2.0).unwrap();
        let h = (-0.5f64).exp();
        let oracle = bisection_oracle(|y| y - (y + 2.0) * h / (1.0 + h), 0.0, 10.0);
        let c1 = smoothed_c1(1, 0.0, &m, &identity_drift(), C1_TOLERANCE);
        assert_abs_diff_eq!(c1, oracle, epsilon = 1e-10);
    }

    #[test]
    fn smoothed_dead_measure_is_idiosyncratic() {
        let m = WeightedMeasure::new(vec![(0.0, 1.0)]).unwrap();
        let spec = identity_drift();
        assert_eq!(smoothed_coefficients(5, 0.0, 0.7, &m, &spec), (0.7, 1.0));
    }

    #[test]
    fn smoothed_converges_to_equilibrium() {
        let m = WeightedMeasure::dirac(2.0).unwrap();
        let spec = identity_drift();
        let (b, s) = equilibrium_coefficients(0.0, 1.0, &m, &spec);
        let gaps: Vec<f64> = [1u32, 10, 100, 10_000, 1_000_000]
            .iter()
            .map(|&n| {
                let (bn, sn) = smoothed_coefficients(n, 0.0, 1.0, &m, &spec);
                (bn - b).abs().max((sn - s).abs())
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
        assert!(gaps[4] < 1e-5, "{gaps:?}");
    }

    #[test]
    fn frozen_coefficient_examples() {
        let grid = uniform_grid(1.0, 4);
        let ones = SurvivalCurve::new(grid.clone(), vec![1.0; 5], vec![1.0; 5]).unwrap();
        let ou = DriftVolSpec::ornstein_uhlenbeck(1.0).unwrap();
        assert_eq!(frozen_coefficients(0.5, 0.0, &ones, &ou).unwrap(), (1.0, 0.5));
        assert_eq!(frozen_coefficients(0.5, 3.0, &ones, &ou).unwrap(), (-1.0, 1.0));

        let flat = SurvivalCurve::new(grid, vec![1.0; 5], vec![0.0; 5]).unwrap();
        let neg = constant_drift(-1.0);
        assert_eq!(frozen_coefficients(0.2, 4.0, &flat, &neg).unwrap(), (-1.0, 1.0));
        assert!(frozen_coefficients(1.5, 4.0, &flat, &neg).is_err());
    }

    #[test]
    fn frozen_ou_matches_explicit_form() {
        let lambda = 0.8;
        let ou = DriftVolSpec::ornstein_uhlenbeck(lambda).unwrap();
        for &(c0, c1) in &[(1.0, 0.3), (0.6, 0.0), (0.2, 1.4)] {
            for k in 0..50 {
                let x = -1.0 + 0.1 * k as f64;
                let (b, s) = frozen_from_values(ou.b(0.0, x), 1.0, c0, c1);
                let explicit_b = pos(lambda - x + c1) / (1.0 + c0) - neg(lambda - x + c1);
                let explicit_s = 1.0 / (1.0 + c0 * if x < lambda + c1 { 1.0 } else { 0.0 });
                assert_eq!(b, explicit_b);
                assert_eq!(s, explicit_s);
            }
        }
    }

    #[test]
    fn declared_regime_is_checked() {
        let vol = Volatility::Constant { value: 1.0 };
        assert!(DriftVolSpec::new(Drift::Constant { value: 1.0 }, vol, SignRegime::NonPositive)
            .is_err());
        assert!(DriftVolSpec::new(
            Drift::OrnsteinUhlenbeck { mean_level: 1.0 },
            vol,
            SignRegime::Positive
        )
        .is_err());
        assert!(DriftVolSpec::new(
            Drift::Affine {
                slope: 0.5,
                intercept: 0.1
            },
            vol,
            SignRegime::Positive
        )
        .is_ok());
        assert!(DriftVolSpec::new(
            Drift::Constant { value: -1.0 },
            Volatility::Affine {
                slope: 1.0,
                intercept: 0.0,
                floor: 0.0
            },
            SignRegime::NonPositive
        )
        .is_err());
    }

    #[test]
    fn measure_rejects_bad_atoms() {
        assert!(WeightedMeasure::new(vec![(-0.1, 1.0)]).is_err());
        assert!(WeightedMeasure::new(vec![(1.0, 0.0)]).is_err());
        let m = WeightedMeasure::new(vec![(0.0, 0.25), (1e-300, 0.25), (2.0, 0.5)]).unwrap();
        assert_eq!(m.alive_mass(), 0.75);
        assert_eq!(m.total_mass(), 1.0);
    }

    fn measure_strategy() -> impl Strategy<Value = WeightedMeasure> {
        prop::collection::vec((prop_oneof![Just(0.0), 0.0f64..5.0], 0.01f64..1.0), 1..30)
            .prop_map(|atoms| {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                WeightedMeasure::new(atoms.into_iter().map(|(x, w)| (x, w / total)).collect())
                    .unwrap()
            })
    }

    fn affine_spec() -> impl Strategy<Value = DriftVolSpec> {
        (-3.0f64..3.0, -3.0f64..3.0, 0.1f64..2.0).prop_map(|(slope, intercept, sigma)| {
            DriftVolSpec::new(
                Drift::Affine { slope, intercept },
                Volatility::Constant { value: sigma },
                SignRegime::SignChanging,
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn c1_is_a_bounded_root(m in measure_strategy(), spec in affine_spec()) {
            let c1 = solve_c1(0.0, &m, &spec, C1_TOLERANCE);
            let bound: f64 = m.alive_atoms().map(|(x, w)| w * spec.b(0.0, x).max(0.0)).sum();
            prop_assert!(c1 >= 0.0 && c1 <= bound + 1e-15);
            prop_assert!(holding_residual(c1, 0.0, &m, &spec).abs() <= C1_TOLERANCE);
        }

        #[test]
        fn vol_between_half_and_full(m in measure_strategy(), spec in affine_spec(), x in -2.0f64..6.0) {
            let (b, s) = equilibrium_coefficients(0.0, x, &m, &spec);
            let sigma = spec.sigma(0.0, x);
            prop_assert!(s > 0.0 && s >= sigma / 2.0 && s <= sigma);
            prop_assert_eq!(equilibrium_strategy(0.0, 1.0, x, &m, &spec), b > 0.0);
        }

        #[test]
        fn positive_regime_closed_form(
            m in measure_strategy(),
            slope in 0.0f64..3.0,
            intercept in 0.01f64..3.0,
            x in 0.0f64..6.0,
        ) {
            let spec = DriftVolSpec::new(
                Drift::Affine { slope, intercept },
                Volatility::Constant { value: 0.7 },
                SignRegime::Positive,
            ).unwrap();
            let alive = m.alive_mass();
            let shared: f64 = m.alive_atoms().map(|(y, w)| w * spec.b(0.0, y)).sum();
            let (b, s) = equilibrium_coefficients(0.0, x, &m, &spec);
            prop_assert_eq!(b, (spec.b(0.0, x) + shared) / (1.0 + alive));
            prop_assert_eq!(s, 0.7 / (1.0 + alive));
        }
    }
}
