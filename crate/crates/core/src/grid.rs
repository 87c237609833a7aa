//! Uniform spatial grids and sampled profiles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("profile is not a monotone-map velocity: x - w(x) decreases at node {0}")]
    NotMonotone(usize),
}

/// Uniform grid `x_i = x_min + i h`, `i = 0..count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub h: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, h: f64, count: usize) -> Result<Self, GridError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::Invalid(format!("step {h} must be positive")));
        }
        if count < 2 {
            return Err(GridError::Invalid(format!("node count {count} must be >= 2")));
        }
        if !x_min.is_finite() {
            return Err(GridError::Invalid("x_min not finite".into()));
        }
        Ok(GridSpec { x_min, h, count })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.count - 1)
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = ((x - self.x_min) / self.h).round();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.count - 1)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max()
    }
}

/// Domain sizing policy: a run over `horizon` steps gets half-width
/// `r_width * horizon + margin` around the region of interest, aligned to
/// whole grid steps. Minimizers wandering further than that are exponentially
/// unlikely; if they do reach the edge the run is flagged, not clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPolicy {
    pub h: f64,
    pub r_width: f64,
    pub margin: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            h: 1.0 / 64.0,
            r_width: 4.0,
            margin: 2.0,
        }
    }
}

impl GridPolicy {
    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(GridError::Invalid(format!("step {} must be positive", self.h)));
        }
        if !(self.r_width > 0.0) || !(self.margin >= 0.0) {
            return Err(GridError::Invalid("r_width must be > 0, margin >= 0".into()));
        }
        Ok(())
    }

    /// Grid covering `[lo - half, hi + half]` where `half = r_width * horizon + margin`.
    pub fn build(&self, lo: f64, hi: f64, horizon: u32) -> Result<GridSpec, GridError> {
        self.validate()?;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(GridError::Invalid(format!("bad span [{lo}, {hi}]")));
        }
        let half = self.r_width * horizon as f64 + self.margin;
        let lo_idx = ((lo - half) / self.h).floor();
        let hi_idx = ((hi + half) / self.h).ceil();
        let count = (hi_idx - lo_idx) as usize + 1;
        GridSpec::new(lo_idx * self.h, self.h, count)
    }
}

/// A potential `W` or velocity `w` sampled on a grid at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridProfile {
    pub grid: GridSpec,
    pub time: i64,
    pub values: Vec<f64>,
}

impl GridProfile {
    pub fn new(grid: GridSpec, time: i64, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.count {
            return Err(GridError::Invalid(format!(
                "value count {} != node count {}",
                values.len(),
                grid.count
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::Invalid(format!("non-finite value at node {i}")));
        }
        Ok(GridProfile { grid, time, values })
    }

    pub fn from_fn(grid: GridSpec, time: i64, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.count).map(|i| f(grid.x(i))).collect();
        GridProfile::new(grid, time, values)
    }

    /// Piecewise-linear evaluation, clamped to the boundary values.
    pub fn interp(&self, x: f64) -> f64 {
        if x <= self.grid.x_min {
            return self.values[0];
        }
        if x >= self.grid.x_max() {
            return self.values[self.grid.count - 1];
        }
        let s = (x - self.grid.x_min) / self.grid.h;
        let i = (s.floor() as usize).min(self.grid.count - 2);
        let frac = s - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Restriction to the node range `[lo, hi]` (inclusive).
    pub fn slice(&self, lo: usize, hi: usize) -> Result<GridProfile, GridError> {
        if lo >= hi || hi >= self.grid.count {
            return Err(GridError::Invalid(format!(
                "bad slice [{lo}, {hi}] of {} nodes",
                self.grid.count
            )));
        }
        Ok(GridProfile {
            grid: GridSpec {
                x_min: self.grid.x(lo),
                h: self.grid.h,
                count: hi - lo + 1,
            },
            time: self.time,
            values: self.values[lo..=hi].to_vec(),
        })
    }

    /// For a velocity profile, check the monotone-map property:
    /// `x_i - w_i` nondecreasing in `i`.
    pub fn check_monotone_map(&self) -> Result<(), GridError> {
        for i in 1..self.grid.count {
            let prev = self.grid.x(i - 1) - self.values[i - 1];
            let cur = self.grid.x(i) - self.values[i];
            if cur < prev {
                return Err(GridError::NotMonotone(i));
            }
        }
        Ok(())
    }
}
