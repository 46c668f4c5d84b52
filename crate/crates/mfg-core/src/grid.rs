//! Shared time grids on `[0, T]`.

use std::sync::Arc;

use crate::error::{MfgError, Result};

/// Strictly increasing time grid starting at 0. Shared by flows, trajectories
/// and ensembles; cloning is cheap.
#[derive(Clone, Debug)]
pub struct TimeGrid {
    times: Arc<Vec<f64>>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(MfgError::EmptyInput("time grid".into()));
        }
        if times[0] != 0.0 {
            return Err(MfgError::InvalidParameter("time grid must start at 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MfgError::InvalidParameter("time grid must be strictly increasing".into()));
        }
        Ok(Self { times: Arc::new(times) })
    }

    /// Uniform grid with `steps` intervals over `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if horizon <= 0.0 || steps == 0 {
            return Err(MfgError::InvalidParameter("horizon and steps must be positive".into()));
        }
        let dt = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
        // pin the endpoint so that horizon() is exact
        *times.last_mut().unwrap() = horizon;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index of the grid node nearest to `t`. Errors if `t` lies outside
    /// `[0, T]` by more than a rounding slack.
    pub fn nearest(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        let slack = 1e-9 * horizon.max(1.0);
        if t < -slack || t > horizon + slack {
            return Err(MfgError::OutsideHorizon(t, horizon));
        }
        let i = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= self.times.len() {
                    self.times.len() - 1
                } else if (t - self.times[i - 1]).abs() <= (self.times[i] - t).abs() {
                    i - 1
                } else {
                    i
                }
            }
        };
        Ok(i)
    }

    pub fn same_grid(&self, other: &TimeGrid) -> bool {
        Arc::ptr_eq(&self.times, &other.times) || *self.times == *other.times
    }
}
