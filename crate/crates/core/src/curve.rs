//! Survival curves `c = (c0, c1)` on a time grid.
//!
//! `c0(t)` is the alive mass of the equity law at time `t` (one minus the
//! default probability) and `c1(t)` the aggregate positive drift shared
//! through the holding strategy.

use crate::error::{Error, Result};

/// Slack allowed when checking that `c0` does not increase.
pub const MONOTONE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    grid: Vec<f64>,
    c0: Vec<f64>,
    c1: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(grid: Vec<f64>, c0: Vec<f64>, c1: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidCurve("empty grid".into()));
        }
        if grid.len() != c0.len() || grid.len() != c1.len() {
            return Err(Error::InvalidCurve(format!(
                "length mismatch: grid {}, c0 {}, c1 {}",
                grid.len(),
                c0.len(),
                c1.len()
            )));
        }
        if grid[0] != 0.0 {
            return Err(Error::InvalidCurve(format!("grid starts at {} instead of 0", grid[0])));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidCurve("grid is not strictly increasing".into()));
        }
        if let Some(v) = c0.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidCurve(format!("c0 value {v} outside [0, 1]")));
        }
        if let Some(k) = c0
            .windows(2)
            .position(|w| w[1] > w[0] + MONOTONE_TOLERANCE)
        {
            return Err(Error::InvalidCurve(format!(
                "c0 increases between grid points {} and {}",
                k,
                k + 1
            )));
        }
        if let Some(v) = c1.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("c1 value {v} is negative or not finite")));
        }
        Ok(Self { grid, c0, c1 })
    }

    /// Constant curve on the uniform grid `t_k = k T / steps`.
    pub fn constant(horizon: f64, steps: usize, c0: f64, c1: f64) -> Result<Self> {
        let grid = uniform_grid(horizon, steps);
        let n = grid.len();
        Self::new(grid, vec![c0; n], vec![c1; n])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn c0(&self) -> &[f64] {
        &self.c0
    }

    pub fn c1(&self) -> &[f64] {
        &self.c1
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    /// Index of the grid value used at time `t`.
    ///
    /// Values are piecewise constant and left-continuous: on `(t_k, t_{k+1}]`
    /// the curve takes its value at `t_{k+1}`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        let slack = 1e-12 * horizon.max(1.0);
        if !(t >= -slack) || t > horizon + slack {
            return Err(Error::OutsideHorizon { t, horizon });
        }
        Ok(self.grid.partition_point(|&g| g < t - slack).min(self.grid.len() - 1))
    }

    pub fn value_at(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.index_at(t)?;
        Ok((self.c0[k], self.c1[k]))
    }

    /// Default probability `1 - c0` on the grid.
    pub fn default_probability(&self) -> Vec<f64> {
        self.c0.iter().map(|c| 1.0 - c).collect()
    }

    /// Largest pointwise gap over both components.
    pub fn sup_distance(&self, other: &SurvivalCurve) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("survival curves live on different grids".into()));
        }
        let gap0 = sup_gap(&self.c0, &other.c0);
        let gap1 = sup_gap(&self.c1, &other.c1);
        Ok(gap0.max(gap1))
    }

    pub(crate) fn from_parts_unchecked(grid: Vec<f64>, c0: Vec<f64>, c1: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), c0.len());
        debug_assert_eq!(grid.len(), c1.len());
        Self { grid, c0, c1 }
    }
}

pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    let dt = horizon / steps as f64;
    (0..=steps).map(|k| k as f64 * dt).collect()
}

pub(crate) fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Least-squares projection onto non-increasing sequences (pool adjacent violators).
pub fn project_non_increasing(values: &[f64]) -> Vec<f64> {
    // blocks of (mean, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        let mut mean = v;
        let mut count = 1usize;
        while let Some(&(prev_mean, prev_count)) = blocks.last() {
            if prev_mean >= mean {
                break;
            }
            blocks.pop();
            let total = prev_count + count;
            mean = (prev_mean * prev_count as f64 + mean * count as f64) / total as f64;
            count = total;
        }
        blocks.push((mean, count));
    }
    blocks
        .into_iter()
        .flat_map(|(mean, count)| std::iter::repeat(mean).take(count))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_increasing_c0() {
        let grid = uniform_grid(1.0, 2);
        let err = SurvivalCurve::new(grid, vec![1.0, 0.8, 0.9], vec![0.0; 3]);
        assert!(matches!(err, Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn rejects_negative_c1() {
        let grid = uniform_grid(1.0, 1);
        assert!(SurvivalCurve::new(grid, vec![1.0, 1.0], vec![0.0, -0.1]).is_err());
    }

    #[test]
    fn left_continuous_lookup() {
        let curve =
            SurvivalCurve::new(uniform_grid(2.0, 2), vec![1.0, 0.9, 0.7], vec![0.0, 0.1, 0.2])
                .unwrap();
        assert_eq!(curve.value_at(0.0).unwrap(), (1.0, 0.0));
        assert_eq!(curve.value_at(0.5).unwrap(), (0.9, 0.1));
        assert_eq!(curve.value_at(1.0).unwrap(), (0.9, 0.1));
        assert_eq!(curve.value_at(1.0001).unwrap(), (0.7, 0.2));
        assert_eq!(curve.value_at(2.0).unwrap(), (0.7, 0.2));
        assert!(matches!(curve.value_at(2.5), Err(Error::OutsideHorizon { .. })));
    }

    #[test]
    fn pav_pools_violators() {
        let projected = project_non_increasing(&[1.0, 0.8, 0.9, 0.5]);
        let expected = [1.0, 0.85, 0.85, 0.5];
        assert!(projected.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn pav_output_is_non_increasing_and_mass_preserving(
            values in prop::collection::vec(0.0f64..1.0, 1..60)
        ) {
            let projected = project_non_increasing(&values);
            prop_assert_eq!(projected.len(), values.len());
            prop_assert!(projected.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            let before: f64 = values.iter().sum();
            let after: f64 = projected.iter().sum();
            prop_assert!((before - after).abs() < 1e-9);
        }
    }
}
