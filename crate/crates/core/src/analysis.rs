//! Oracles and comparison metrics.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF (absolute error below 1e-9).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P[min_{s <= t} (x0 + b s + sigma W_s) > 0]` by the reflection principle.
pub fn analytic_survival_bm(x0: f64, drift: f64, vol: f64, t: f64) -> f64 {
    assert!(vol > 0.0, "volatility must be positive");
    if !(x0 > 0.0) {
        return 0.0;
    }
    if t <= 0.0 {
        return 1.0;
    }
    let scale = vol * t.sqrt();
    let direct = normal_cdf((x0 + drift * t) / scale);
    let reflected = normal_cdf((-x0 + drift * t) / scale);
    let weight = -2.0 * drift * x0 / (vol * vol);
    let correction = if reflected > 0.0 {
        (weight + reflected.ln()).exp()
    } else {
        0.0
    };
    (direct - correction).clamp(0.0, 1.0)
}

/// `W1` between two empirical measures on the line.
///
/// Equal sizes use the mean absolute difference of order statistics; unequal
/// sizes integrate `|F_a - F_b|` exactly.
pub fn wasserstein1(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let a = sorted(samples_a);
    let b = sorted(samples_b);
    if a.len() == b.len() {
        let total: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(total / a.len() as f64);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut last = a[0].min(b[0]);
    let mut area = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        area += (i as f64 / na - j as f64 / nb).abs() * (next - last);
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
        last = next;
    }
    Ok(area)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let a = sorted(samples_a);
    let b = sorted(samples_b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut stat: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        stat = stat.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(stat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveComparison {
    pub grid: Vec<f64>,
    pub gaps: Vec<f64>,
    pub sup_norm_gap: f64,
    pub mc_stderr: Vec<f64>,
    /// Grid points where the gap exceeds three standard errors.
    pub flagged: Vec<bool>,
}

impl CurveComparison {
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }
}

pub fn compare_curves(grid: &[f64], a: &[f64], b: &[f64], stderr: &[f64]) -> Result<CurveComparison> {
    let n = grid.len();
    if a.len() != n || b.len() != n || stderr.len() != n {
        return Err(Error::GridMismatch(format!(
            "grid {n}, a {}, b {}, stderr {}",
            a.len(),
            b.len(),
            stderr.len()
        )));
    }
    let gaps: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let flagged = gaps.iter().zip(stderr).map(|(g, s)| *g > 3.0 * s).collect();
    Ok(CurveComparison {
        grid: grid.to_vec(),
        sup_norm_gap: gaps.iter().copied().fold(0.0, f64::max),
        gaps,
        mc_stderr: stderr.to_vec(),
        flagged,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points");
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Smallest `C` with `|c0(t_{k+1}) - c0(t_k)| <= C dt^{1/6}` along the grid.
pub fn holder_constant(grid: &[f64], c0: &[f64]) -> f64 {
    grid.windows(2)
        .zip(c0.windows(2))
        .map(|(t, c)| (c[1] - c[0]).abs() / (t[1] - t[0]).powf(1.0 / 6.0))
        .fold(0.0, f64::max)
}
