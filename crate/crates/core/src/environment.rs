//! Shot-noise kick forcing over unbounded space-time.
//!
//! The forcing potential at integer time `n` is a sum of scaled bumps centered
//! at the points of a marked Poisson process. Realizations are generated
//! lazily, one unit cell `{n} x [i, i+1)` at a time, from a counter-based
//! keyed stream, so any window can be regenerated bit-for-bit in any query
//! order. Shear and shift views relabel queries without resampling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bump::Bump;
use crate::grid::GridSpec;
use crate::rng::KeyedRng;

/// One marked Poisson point: a kick of amplitude `xi` and width `kappa`
/// centered at `(tau, eta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KickPoint {
    pub tau: i64,
    pub eta: f64,
    pub xi: f64,
    pub kappa: f64,
}

impl KickPoint {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.xi.is_finite() && self.xi.abs() <= 1.0) {
            return Err(EnvError::InvalidPoint(format!("xi {} outside [-1, 1]", self.xi)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(EnvError::InvalidPoint(format!(
                "kappa {} outside (0, 1]",
                self.kappa
            )));
        }
        if !self.eta.is_finite() {
            return Err(EnvError::InvalidPoint("eta not finite".into()));
        }
        Ok(())
    }
}

/// Amplitude distribution, supported in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiDist {
    /// Uniform on `[-1, 1]`.
    #[default]
    Uniform,
    /// `+1` with probability `p`, `-1` with probability `1 - p`.
    TwoPoint { p: f64 },
}

impl XiDist {
    fn sample(self, rng: &mut KeyedRng) -> f64 {
        match self {
            XiDist::Uniform => 2.0 * rng.next_f64() - 1.0,
            XiDist::TwoPoint { p } => {
                if rng.next_f64() < p {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    fn validate(self) -> Result<(), EnvError> {
        match self {
            XiDist::Uniform => Ok(()),
            XiDist::TwoPoint { p } => {
                // Both signs must be reachable.
                if p > 0.0 && p < 1.0 {
                    Ok(())
                } else {
                    Err(EnvError::InvalidConfig(format!(
                        "two_point p {p} must lie strictly inside (0, 1)"
                    )))
                }
            }
        }
    }
}

/// Scale distribution, supported in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KappaDist {
    /// Uniform on `(0, 1]`.
    #[default]
    Uniform,
    /// A single fixed scale.
    Fixed { value: f64 },
}

impl KappaDist {
    fn sample(self, rng: &mut KeyedRng) -> f64 {
        match self {
            KappaDist::Uniform => rng.next_open_closed(0.0, 1.0),
            KappaDist::Fixed { value } => value,
        }
    }

    fn validate(self) -> Result<(), EnvError> {
        match self {
            KappaDist::Uniform => Ok(()),
            KappaDist::Fixed { value } => {
                if value > 0.0 && value <= 1.0 {
                    Ok(())
                } else {
                    Err(EnvError::InvalidConfig(format!(
                        "fixed kappa {value} outside (0, 1]"
                    )))
                }
            }
        }
    }
}

/// Full description of a forcing realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub master_seed: u64,
    /// Expected number of kick centers per unit length per time step.
    pub intensity: f64,
    pub xi_dist: XiDist,
    pub kappa_dist: KappaDist,
    pub bump: Bump,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            master_seed: 0,
            intensity: 1.0,
            xi_dist: XiDist::Uniform,
            kappa_dist: KappaDist::Uniform,
            bump: Bump::Quartic,
        }
    }
}

impl EnvironmentConfig {
    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(EnvError::InvalidConfig(format!(
                "intensity {} must be finite and >= 0",
                self.intensity
            )));
        }
        self.xi_dist.validate()?;
        self.kappa_dist.validate()
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("invalid kick point: {0}")]
    InvalidPoint(String),
}

/// Composed query relabeling: a query at `(n, x)` is answered by the base
/// realization at `(n + dn, x + off + slope * n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
struct AffineView {
    dn: i64,
    off: f64,
    slope: f64,
}

impl AffineView {
    #[inline]
    fn x_offset(&self, n: i64) -> f64 {
        self.off + self.slope * n as f64
    }
}

#[derive(Clone, Debug)]
enum Source {
    Poisson(EnvironmentConfig),
    /// Explicit point list, for hand-built cases.
    Explicit(Arc<Vec<KickPoint>>),
}

/// Lazily evaluated forcing realization with optional shear/shift relabeling.
///
/// Cheap to clone; safe to share across threads. All queries are pure.
#[derive(Clone, Debug)]
pub struct Environment {
    source: Source,
    view: AffineView,
}

/// Sampling resolution for [`Environment::potential_max`]. The reported
/// maximum is a lower bound tight to the modulus of continuity of the
/// realization over one step of this size.
pub const POTENTIAL_MAX_RESOLUTION: f64 = 1.0 / 1024.0;

impl Environment {
    pub fn new(config: EnvironmentConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Environment {
            source: Source::Poisson(config),
            view: AffineView::default(),
        })
    }

    /// Environment with no forcing at all.
    pub fn zero() -> Self {
        Environment {
            source: Source::Explicit(Arc::new(Vec::new())),
            view: AffineView::default(),
        }
    }

    /// Environment carrying exactly the given kicks.
    pub fn from_points(points: Vec<KickPoint>) -> Result<Self, EnvError> {
        for p in &points {
            p.validate()?;
        }
        Ok(Environment {
            source: Source::Explicit(Arc::new(points)),
            view: AffineView::default(),
        })
    }

    /// Same source with a different master seed (replica construction).
    pub fn reseeded(&self, master_seed: u64) -> Self {
        match &self.source {
            Source::Poisson(cfg) => Environment {
                source: Source::Poisson(cfg.with_seed(master_seed)),
                view: self.view,
            },
            Source::Explicit(_) => self.clone(),
        }
    }

    pub fn config(&self) -> Option<&EnvironmentConfig> {
        match &self.source {
            Source::Poisson(cfg) => Some(cfg),
            Source::Explicit(_) => None,
        }
    }

    fn bump(&self) -> Bump {
        match &self.source {
            Source::Poisson(cfg) => cfg.bump,
            Source::Explicit(_) => Bump::Quartic,
        }
    }

    /// Sheared view: `potential(shear(a, v), n, x + a + v n) == potential(env, n, x)`.
    ///
    /// Pure relabeling; exact whenever the affine arithmetic is exact.
    pub fn shear(&self, a: f64, v: f64) -> Self {
        let mut view = self.view;
        view.off -= a;
        view.slope -= v;
        Environment {
            source: self.source.clone(),
            view,
        }
    }

    /// Shifted view: queries at `(n, x)` see the base field at `(n + dn, x + dx)`.
    pub fn shift(&self, dn: i64, dx: f64) -> Self {
        let mut view = self.view;
        view.off += dx + view.slope * dn as f64;
        view.dn += dn;
        Environment {
            source: self.source.clone(),
            view,
        }
    }

    /// Kick points of the base realization in cell `{n} x [i, i+1)`, base coordinates.
    fn base_cell_points(&self, n: i64, i: i64) -> Vec<KickPoint> {
        match &self.source {
            Source::Poisson(cfg) => {
                if cfg.intensity == 0.0 {
                    return Vec::new();
                }
                let mut rng = KeyedRng::for_cell(cfg.master_seed, n, i);
                let count = rng.poisson(cfg.intensity);
                let mut pts = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let eta = i as f64 + rng.next_f64();
                    let xi = cfg.xi_dist.sample(&mut rng);
                    let kappa = cfg.kappa_dist.sample(&mut rng);
                    pts.push(KickPoint { tau: n, eta, xi, kappa });
                }
                pts.sort_by(|a, b| a.eta.total_cmp(&b.eta));
                pts
            }
            Source::Explicit(points) => {
                let lo = i as f64;
                let mut pts: Vec<KickPoint> = points
                    .iter()
                    .copied()
                    .filter(|p| p.tau == n && p.eta >= lo && p.eta < lo + 1.0)
                    .collect();
                pts.sort_by(|a, b| a.eta.total_cmp(&b.eta));
                pts
            }
        }
    }

    /// Kick points of this view in cell `{n} x [i, i+1)`, view coordinates,
    /// sorted by center.
    pub fn cell_points(&self, n: i64, i: i64) -> Vec<KickPoint> {
        let t = self.view.x_offset(n);
        let nb = n + self.view.dn;
        let lo = i as f64 + t;
        let jb = lo.floor() as i64;
        let mut pts = Vec::new();
        for j in jb..=jb + 1 {
            for p in self.base_cell_points(nb, j) {
                if p.eta >= lo && p.eta < lo + 1.0 {
                    pts.push(KickPoint {
                        tau: n,
                        eta: p.eta - t,
                        xi: p.xi,
                        kappa: p.kappa,
                    });
                }
            }
        }
        pts
    }

    /// `F(n, x)`: sum of bump contributions from kicks at time `n` within
    /// distance `kappa <= 1` of `x`.
    pub fn potential(&self, n: i64, x: f64) -> f64 {
        self.eval(n, x, Bump::eval, 0)
    }

    /// `f(n, x) = dF/dx`, from the bump's closed-form derivative.
    pub fn force(&self, n: i64, x: f64) -> f64 {
        self.eval(n, x, Bump::d1, 1)
    }

    /// `d^2F/dx^2`, used by the Newton refinement of minimizers.
    pub fn force_derivative(&self, n: i64, x: f64) -> f64 {
        self.eval(n, x, Bump::d2, 2)
    }

    fn eval(&self, n: i64, x: f64, shape: fn(Bump, f64) -> f64, kappa_pow: i32) -> f64 {
        let bump = self.bump();
        let t = self.view.x_offset(n);
        let nb = n + self.view.dn;
        let xb = x + t;
        let ib = xb.floor() as i64;
        let mut sum = 0.0;
        for j in ib - 1..=ib + 1 {
            for p in self.base_cell_points(nb, j) {
                let y = (xb - p.eta) / p.kappa;
                if y.abs() < 1.0 {
                    sum += p.xi * shape(bump, y) / p.kappa.powi(kappa_pow);
                }
            }
        }
        sum
    }

    /// `F*(n, x)`: maximum of `|F(n, .)|` over `[x, x+1]`, computed by dense
    /// sampling at [`POTENTIAL_MAX_RESOLUTION`] plus evaluation at every kick
    /// center in range. A lower bound tight to the sampling modulus.
    pub fn potential_max(&self, n: i64, x: f64) -> f64 {
        let steps = (1.0 / POTENTIAL_MAX_RESOLUTION) as usize;
        let mut best = 0.0f64;
        for k in 0..=steps {
            let u = x + k as f64 * POTENTIAL_MAX_RESOLUTION;
            best = best.max(self.potential(n, u.min(x + 1.0)).abs());
        }
        let lo_cell = x.floor() as i64;
        let hi_cell = (x + 1.0).floor() as i64;
        for i in lo_cell..=hi_cell {
            for p in self.cell_points(n, i) {
                if p.eta >= x && p.eta <= x + 1.0 {
                    best = best.max(self.potential(n, p.eta).abs());
                }
            }
        }
        best
    }

    /// `F(n, x_i)` for every node of `grid`, bit-identical to node-wise
    /// [`Environment::potential`] calls but gathered in one pass over the
    /// kick points covering the grid.
    pub fn potential_row(&self, n: i64, grid: &GridSpec) -> Vec<f64> {
        self.row(n, grid, Bump::eval, 0)
    }

    /// `f(n, x_i)` for every node of `grid`.
    pub fn force_row(&self, n: i64, grid: &GridSpec) -> Vec<f64> {
        self.row(n, grid, Bump::d1, 1)
    }

    fn row(&self, n: i64, grid: &GridSpec, shape: fn(Bump, f64) -> f64, kappa_pow: i32) -> Vec<f64> {
        let bump = self.bump();
        let t = self.view.x_offset(n);
        let nb = n + self.view.dn;
        let mut out = vec![0.0f64; grid.count];
        let xb0 = grid.x(0) + t;
        let xb_last = grid.x(grid.count - 1) + t;
        let lo_cell = xb0.floor() as i64 - 1;
        let hi_cell = xb_last.floor() as i64 + 1;
        for j in lo_cell..=hi_cell {
            for p in self.base_cell_points(nb, j) {
                // Nodes with |xb - eta| < kappa; conservative index range,
                // exact support test per node.
                let lo_i = ((p.eta - p.kappa - t - grid.x_min) / grid.h).floor() as i64;
                let hi_i = ((p.eta + p.kappa - t - grid.x_min) / grid.h).ceil() as i64;
                let lo_i = lo_i.max(0) as usize;
                let hi_i = (hi_i.max(0) as usize).min(grid.count.saturating_sub(1));
                for idx in lo_i..=hi_i {
                    let xb = grid.x(idx) + t;
                    let y = (xb - p.eta) / p.kappa;
                    if y.abs() < 1.0 {
                        out[idx] += p.xi * shape(bump, y) / p.kappa.powi(kappa_pow);
                    }
                }
            }
        }
        out
    }
}
