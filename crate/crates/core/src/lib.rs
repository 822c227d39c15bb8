//! Mean field game of mutual holding with defaultable agents.
//!
//! * [`coefficients`]: equilibrium drift and volatility, the holding constant
//!   `c1`, smoothed and curve-frozen variants.
//! * [`particles`]: absorbed interacting particle systems.
//! * [`fixed_point`]: the autonomous fixed-point map for the survival curve.
//! * [`analysis`]: Wasserstein distance, first-passage oracle, curve metrics.
//! * [`experiments`]: the command implementations behind the CLI.

pub mod analysis;
pub mod coefficients;
pub mod config;
pub mod curve;
pub mod error;
pub mod experiments;
pub mod fixed_point;
pub mod particles;
pub mod rng;

pub use coefficients::{Drift, DriftVolSpec, SignRegime, Volatility, WeightedMeasure};
pub use config::ExperimentConfig;
pub use curve::SurvivalCurve;
pub use error::{Error, Result};
pub use particles::{AbsorptionScheme, InitialLaw, PathRecord, StepMode};
