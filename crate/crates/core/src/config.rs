//! Experiment configuration as a flat `key = value` file.
//!
//! Resolution order: built-in defaults, then the config file, then command
//! line overrides. Unknown keys are rejected. Lines starting with `#` are
//! comments.
//!
//! | key              | example                      |
//! |------------------|------------------------------|
//! | `horizon`        | `10`                         |
//! | `steps`          | `100`                        |
//! | `paths`          | `2000`                       |
//! | `particles`      | `2000`                       |
//! | `drift`          | `ou:1`, `constant:-0.5`, `affine:1,0` |
//! | `vol`            | `constant:1`, `affine:0.1,1,0.5` |
//! | `sign_regime`    | `auto`, `non_positive`, `positive`, `sign_changing` |
//! | `initial_law`    | `exponential:1`, `point:1`, `mollified:10:exponential:1` |
//! | `moment_q`       | `2`                          |
//! | `seed`           | `12345`                      |
//! | `absorption`     | `bridge`, `discrete`         |
//! | `crn`            | `true`                       |
//! | `projection`     | `true`                       |
//! | `max_iterations` | `50`                         |
//! | `stop_tol`       | `0`                          |
//! | `record_paths`   | `false`                      |
//! | `output_dir`     | `out`                        |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::coefficients::{Drift, DriftVolSpec, SignRegime, Volatility};
use crate::error::{Error, Result};
use crate::particles::{AbsorptionScheme, InitialLaw};

pub const KEYS: &[&str] = &[
    "horizon",
    "steps",
    "paths",
    "particles",
    "drift",
    "vol",
    "sign_regime",
    "initial_law",
    "moment_q",
    "seed",
    "absorption",
    "crn",
    "projection",
    "max_iterations",
    "stop_tol",
    "record_paths",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub horizon: f64,
    pub steps: usize,
    /// Monte Carlo draws per restart in the fixed-point estimator.
    pub paths: usize,
    pub particles: usize,
    pub model: DriftVolSpec,
    pub initial_law: InitialLaw,
    /// Moment exponent of the initial law; informational only.
    pub moment_q: f64,
    pub seed: u64,
    pub absorption: AbsorptionScheme,
    /// Share one Gaussian table across fixed-point iterates.
    pub crn: bool,
    /// Project each `c0` iterate onto non-increasing sequences.
    pub projection: bool,
    pub max_iterations: usize,
    /// Stop iterating once the sup-norm change drops below this; 0 disables.
    pub stop_tol: f64,
    pub record_paths: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            steps: 100,
            paths: 2000,
            particles: 2000,
            model: DriftVolSpec::ornstein_uhlenbeck(1.0).expect("valid default model"),
            initial_law: InitialLaw::Exponential { rate: 1.0 },
            moment_q: 2.0,
            seed: 12345,
            absorption: AbsorptionScheme::Bridge,
            crn: true,
            projection: true,
            max_iterations: 50,
            stop_tol: 0.0,
            record_paths: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Full-scale grid, path and particle counts.
    pub fn full_scale(mut self) -> Self {
        self.paths = 10_000;
        self.steps = 200;
        self.particles = 10_000;
        self.max_iterations = 200;
        self
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfig(format!("horizon {} must be positive", self.horizon)));
        }
        for (name, value) in [
            ("steps", self.steps),
            ("paths", self.paths),
            ("particles", self.particles),
            ("max_iterations", self.max_iterations),
        ] {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidConfig("stop_tol must be non-negative".into()));
        }
        self.initial_law.validate()
    }

    /// Warnings that do not prevent a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.moment_q > 1.0) {
            out.push(format!(
                "moment_q = {} is not > 1: the initial law is assumed to have a finite moment of order q > 1",
                self.moment_q
            ));
        }
        out
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_with_overrides(&text, &[])
    }

    /// Parses file contents and applies `overrides` on top.
    pub fn from_str_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut values = parse_pairs(text)?;
        for (k, v) in overrides {
            check_key(k)?;
            values.insert(k.clone(), v.clone());
        }
        Self::from_values(&values)
    }

    fn from_values(values: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        let get = |k: &str| values.get(k).map(String::as_str);
        if let Some(v) = get("horizon") {
            cfg.horizon = parse_num(v, "horizon")?;
        }
        if let Some(v) = get("steps") {
            cfg.steps = parse_num(v, "steps")?;
        }
        if let Some(v) = get("paths") {
            cfg.paths = parse_num(v, "paths")?;
        }
        if let Some(v) = get("particles") {
            cfg.particles = parse_num(v, "particles")?;
        }
        let drift = get("drift")
            .map(parse_drift)
            .transpose()?
            .unwrap_or(cfg.model.drift());
        let vol = get("vol")
            .map(parse_vol)
            .transpose()?
            .unwrap_or(cfg.model.volatility());
        cfg.model = match get("sign_regime").unwrap_or("auto") {
            "auto" => DriftVolSpec::inferred(drift, vol)?,
            other => DriftVolSpec::new(drift, vol, parse_regime(other)?)?,
        };
        if let Some(v) = get("initial_law") {
            cfg.initial_law = parse_law(v)?;
        }
        if let Some(v) = get("moment_q") {
            cfg.moment_q = parse_num(v, "moment_q")?;
        }
        if let Some(v) = get("seed") {
            cfg.seed = parse_num(v, "seed")?;
        }
        if let Some(v) = get("absorption") {
            cfg.absorption = parse_absorption(v)?;
        }
        if let Some(v) = get("crn") {
            cfg.crn = parse_bool(v, "crn")?;
        }
        if let Some(v) = get("projection") {
            cfg.projection = parse_bool(v, "projection")?;
        }
        if let Some(v) = get("max_iterations") {
            cfg.max_iterations = parse_num(v, "max_iterations")?;
        }
        if let Some(v) = get("stop_tol") {
            cfg.stop_tol = parse_num(v, "stop_tol")?;
        }
        if let Some(v) = get("record_paths") {
            cfg.record_paths = parse_bool(v, "record_paths")?;
        }
        if let Some(v) = get("output_dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` rendering of every field that influences
    /// results (the output directory is excluded).
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.canonical_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn canonical_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("horizon", format_num(self.horizon)),
            ("steps", self.steps.to_string()),
            ("paths", self.paths.to_string()),
            ("particles", self.particles.to_string()),
            ("drift", format_drift(&self.model.drift())),
            ("vol", format_vol(&self.model.volatility())),
            ("sign_regime", self.model.regime().to_string()),
            ("initial_law", format_law(&self.initial_law)),
            ("moment_q", format_num(self.moment_q)),
            ("seed", self.seed.to_string()),
            (
                "absorption",
                match self.absorption {
                    AbsorptionScheme::Bridge => "bridge".into(),
                    AbsorptionScheme::Discrete => "discrete".into(),
                },
            ),
            ("crn", self.crn.to_string()),
            ("projection", self.projection.to_string()),
            ("max_iterations", self.max_iterations.to_string()),
            ("stop_tol", format_num(self.stop_tol)),
            ("record_paths", self.record_paths.to_string()),
        ]
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("unknown key `{key}`")))
    }
}

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        check_key(k)?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

/// Splits `key=value` from the command line.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{arg}` is not key=value")))?;
    let k = k.trim().to_string();
    check_key(&k)?;
    Ok((k, v.trim().to_string()))
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidConfig(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(v: &str, key: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn parse_list(v: &str, key: &str, expected: usize) -> Result<Vec<f64>> {
    let out: Vec<f64> = v
        .split(',')
        .map(|p| parse_num(p.trim(), key))
        .collect::<Result<_>>()?;
    if out.len() != expected {
        return Err(Error::InvalidConfig(format!(
            "`{key}`: expected {expected} comma-separated numbers, got `{v}`"
        )));
    }
    Ok(out)
}

pub fn parse_drift(v: &str) -> Result<Drift> {
    let (family, params) = v.split_once(':').unwrap_or((v, ""));
    match family.trim() {
        "ou" => Ok(Drift::OrnsteinUhlenbeck {
            mean_level: parse_num(params.trim(), "drift")?,
        }),
        "constant" => Ok(Drift::Constant {
            value: parse_num(params.trim(), "drift")?,
        }),
        "affine" => {
            let p = parse_list(params, "drift", 2)?;
            Ok(Drift::Affine {
                slope: p[0],
                intercept: p[1],
            })
        }
        other => Err(Error::InvalidConfig(format!("unknown drift family `{other}`"))),
    }
}

pub fn parse_vol(v: &str) -> Result<Volatility> {
    let (family, params) = v.split_once(':').unwrap_or((v, ""));
    match family.trim() {
        "constant" => Ok(Volatility::Constant {
            value: parse_num(params.trim(), "vol")?,
        }),
        "affine" => {
            let p = parse_list(params, "vol", 3)?;
            Ok(Volatility::Affine {
                slope: p[0],
                intercept: p[1],
                floor: p[2],
            })
        }
        other => Err(Error::InvalidConfig(format!("unknown volatility family `{other}`"))),
    }
}

fn parse_regime(v: &str) -> Result<SignRegime> {
    match v {
        "non_positive" => Ok(SignRegime::NonPositive),
        "positive" => Ok(SignRegime::Positive),
        "sign_changing" => Ok(SignRegime::SignChanging),
        _ => Err(Error::InvalidConfig(format!("unknown sign regime `{v}`"))),
    }
}

pub fn parse_law(v: &str) -> Result<InitialLaw> {
    let (family, params) = v.split_once(':').unwrap_or((v, ""));
    let law = match family.trim() {
        "exponential" => InitialLaw::Exponential {
            rate: parse_num(params.trim(), "initial_law")?,
        },
        "point" => InitialLaw::PointMass {
            x0: parse_num(params.trim(), "initial_law")?,
        },
        "mollified" => {
            let (n, base) = params.split_once(':').ok_or_else(|| {
                Error::InvalidConfig("`initial_law`: expected mollified:<n>:<base law>".into())
            })?;
            InitialLaw::Mollified {
                base: Box::new(parse_law(base)?),
                n: parse_num(n.trim(), "initial_law")?,
            }
        }
        other => return Err(Error::InvalidConfig(format!("unknown initial law `{other}`"))),
    };
    law.validate()?;
    Ok(law)
}

pub fn parse_absorption(v: &str) -> Result<AbsorptionScheme> {
    match v {
        "bridge" => Ok(AbsorptionScheme::Bridge),
        "discrete" => Ok(AbsorptionScheme::Discrete),
        _ => Err(Error::InvalidConfig(format!("unknown absorption scheme `{v}`"))),
    }
}

/// Shortest round-tripping decimal form.
fn format_num(x: f64) -> String {
    format!("{x:?}")
}

fn format_drift(d: &Drift) -> String {
    match *d {
        Drift::OrnsteinUhlenbeck { mean_level } => format!("ou:{}", format_num(mean_level)),
        Drift::Constant { value } => format!("constant:{}", format_num(value)),
        Drift::Affine { slope, intercept } => {
            format!("affine:{},{}", format_num(slope), format_num(intercept))
        }
    }
}

fn format_vol(v: &Volatility) -> String {
    match *v {
        Volatility::Constant { value } => format!("constant:{}", format_num(value)),
        Volatility::Affine {
            slope,
            intercept,
            floor,
        } => format!(
            "affine:{},{},{}",
            format_num(slope),
            format_num(intercept),
            format_num(floor)
        ),
    }
}

fn format_law(l: &InitialLaw) -> String {
    match l {
        InitialLaw::Exponential { rate } => format!("exponential:{}", format_num(*rate)),
        InitialLaw::PointMass { x0 } => format!("point:{}", format_num(*x0)),
        InitialLaw::Mollified { base, n } => format!("mollified:{n}:{}", format_law(base)),
    }
}
