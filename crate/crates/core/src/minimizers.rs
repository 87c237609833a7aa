//! Action minimizers: tracing grid-optimal paths from backpointers, Newton
//! refinement to Euler-Lagrange stationarity, one-sided (backward) minimizer
//! approximants of a given slope, and the straightness / crossing / width
//! diagnostics built on them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionParams, Path};
use crate::environment::Environment;
use crate::grid::{GridError, GridPolicy, GridProfile, GridSpec};
use crate::hopf_lax::{evolve, BackpointerStack, EvolveError, EvolveFlags, EvolveRun};

#[derive(Debug, Error)]
pub enum MinimizerError {
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("terminal time {0} outside the traced range")]
    TimeOutOfRange(i64),
    #[error("paths share no interior time interval")]
    NoCommonSupport,
    #[error("paths are not ordered at time {time}: {left} > {right}")]
    NotOrdered { time: i64, left: f64, right: f64 },
    #[error("horizon {horizon} must precede the endpoint time {endpoint}")]
    BadHorizon { horizon: i64, endpoint: i64 },
    #[error("cone apex time must be nonzero")]
    ZeroApexTime,
}

/// How a trace was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    PointToPoint,
    LinearInitialV,
}

/// A traced (and possibly refined) minimizer candidate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizerTrace {
    pub path: Path,
    pub refined: bool,
    pub el_res: f64,
    pub source: TraceSource,
    pub boundary_contact: bool,
}

/// Follow the argmin maps from `terminal` (a node index at the stack's end
/// time) back to the start time. The result is the optimal grid path for its
/// endpoints.
pub fn trace_back(stack: &BackpointerStack, terminal: usize) -> Path {
    let idx = index_trace(stack, terminal);
    let positions = idx.iter().map(|&j| stack.grid.x(j as usize)).collect();
    Path::new(stack.start_time, positions)
}

/// Index trace ending at `terminal`; entry `s` is the node index at time
/// `start_time + s`.
pub fn index_trace(stack: &BackpointerStack, terminal: usize) -> Vec<u32> {
    let steps = stack.steps();
    let mut idx = vec![0u32; steps + 1];
    let mut cur = terminal as u32;
    idx[steps] = cur;
    for s in (0..steps).rev() {
        cur = stack
            .predecessor(stack.start_time + s as i64 + 1, cur as usize)
            .expect("time in range") as u32;
        idx[s] = cur;
    }
    idx
}

/// Whether the dependency cone of terminal nodes `[lo, hi]` reaches the grid
/// boundary at any time. Traces of the window extremes bound the cone because
/// argmin maps are monotone.
pub fn window_touches_boundary(stack: &BackpointerStack, lo: usize, hi: usize) -> bool {
    let last = (stack.grid.count - 1) as u32;
    index_trace(stack, lo).iter().any(|&j| j == 0)
        || index_trace(stack, hi).iter().any(|&j| j == last)
}

/// Newton refinement controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    pub el_tol: f64,
    pub max_iters: u32,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            el_tol: 1e-8,
            max_iters: 100,
        }
    }
}

/// Kinetic action plus interior forcing terms; endpoint forcing terms are
/// constant under refinement and omitted.
fn interior_objective(env: &Environment, t0: i64, xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for w in xs.windows(2) {
        let d = w[1] - w[0];
        s += 0.5 * d * d;
    }
    for j in 1..xs.len() - 1 {
        s += env.potential(t0 + j as i64, xs[j]);
    }
    s
}

/// Minus the action gradient at the interior points: the Euler-Lagrange
/// defect `gamma_{j+1} - 2 gamma_j + gamma_{j-1} - f(j, gamma_j)`.
fn el_defects(env: &Environment, t0: i64, xs: &[f64], out: &mut [f64]) {
    for j in 1..xs.len() - 1 {
        out[j - 1] =
            xs[j + 1] - 2.0 * xs[j] + xs[j - 1] - env.force(t0 + j as i64, xs[j]);
    }
}

/// Solve the tridiagonal system `(diag, -1 off-diagonals) step = rhs` in place.
/// Returns false when a pivot degenerates.
fn thomas_solve(diag: &[f64], rhs: &mut [f64]) -> bool {
    let n = diag.len();
    let mut d = diag.to_vec();
    for i in 0..n {
        if i > 0 {
            // eliminate the -1 sub-diagonal
            let m = -1.0 / d[i - 1];
            d[i] -= m * -1.0;
            rhs[i] -= m * rhs[i - 1];
        }
        if d[i].abs() < 1e-12 {
            return false;
        }
    }
    rhs[n - 1] /= d[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] + rhs[i + 1]) / d[i];
    }
    true
}

/// Damped Newton descent of the action over the interior coordinates of
/// `path`, endpoints fixed. Terminates at `el_tol` stationarity or after
/// `max_iters`; the action never increases. `refined` is false when the
/// tolerance was not reached.
pub fn refine(env: &Environment, path: &Path, params: RefineParams) -> MinimizerTrace {
    let t0 = path.start_time;
    let mut xs = path.positions.clone();
    let interior = xs.len().saturating_sub(2);
    let residual = |env: &Environment, xs: &[f64]| -> f64 {
        let mut worst = 0.0f64;
        for j in 1..xs.len() - 1 {
            let d = xs[j + 1] - 2.0 * xs[j] + xs[j - 1] - env.force(t0 + j as i64, xs[j]);
            worst = worst.max(d.abs());
        }
        worst
    };
    if interior == 0 {
        return MinimizerTrace {
            path: path.clone(),
            refined: true,
            el_res: 0.0,
            source: TraceSource::PointToPoint,
            boundary_contact: false,
        };
    }
    let mut defect = vec![0.0f64; interior];
    let mut action = interior_objective(env, t0, &xs);
    let mut el_res = residual(env, &xs);
    let mut iters = 0;
    while el_res > params.el_tol && iters < params.max_iters {
        iters += 1;
        el_defects(env, t0, &xs, &mut defect);
        // Newton direction: H step = defect, H = tridiag(-1, 2 + F'', -1).
        let diag: Vec<f64> = (1..xs.len() - 1)
            .map(|j| 2.0 + env.force_derivative(t0 + j as i64, xs[j]))
            .collect();
        let mut step = defect.clone();
        let solved = thomas_solve(&diag, &mut step);
        if !solved {
            step.copy_from_slice(&defect);
        }
        // Ascent-direction guard: the defect is minus the gradient, so a
        // descent direction must have positive inner product with it.
        let dot: f64 = step.iter().zip(&defect).map(|(s, d)| s * d).sum();
        if dot <= 0.0 {
            step.copy_from_slice(&defect);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = xs.clone();
            for j in 0..interior {
                trial[j + 1] += t * step[j];
            }
            let trial_action = interior_objective(env, t0, &trial);
            if trial_action <= action {
                xs = trial;
                action = trial_action;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        el_res = residual(env, &xs);
    }
    MinimizerTrace {
        path: Path::new(t0, xs),
        refined: el_res <= params.el_tol,
        el_res,
        source: TraceSource::PointToPoint,
        boundary_contact: false,
    }
}

/// Construction mode for one-sided approximants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OneSidedMode {
    /// Linear initial potential `W(y) = v y` at the horizon (the invariant
    /// class for slope `v`).
    #[default]
    LinearInitial,
    /// Point constraint at the horizon near `y = v * m`.
    PointToPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneSidedParams {
    pub horizon: i64,
    pub policy: GridPolicy,
    pub action: ActionParams,
    pub refine: RefineParams,
    pub mode: OneSidedMode,
    pub do_refine: bool,
}

impl OneSidedParams {
    pub fn new(horizon: i64) -> Self {
        OneSidedParams {
            horizon,
            policy: GridPolicy::default(),
            action: ActionParams::default(),
            refine: RefineParams::default(),
            mode: OneSidedMode::LinearInitial,
            do_refine: true,
        }
    }
}

const POINT_PENALTY: f64 = 1e9;

/// Finite-horizon approximant of the backward one-sided minimizer with slope
/// `v` and endpoint `(n, x)`.
///
/// The problem is solved in a sheared frame in which the target slope is zero
/// and the endpoint sits at the origin; the relabeling is exact, so shear
/// equivariance holds by construction. In the frame: evolve the zero
/// potential (or a point constraint) from the horizon to `n`, trace back from
/// the endpoint node, refine, and map out.
pub fn one_sided_approx(
    env: &Environment,
    endpoint: (i64, f64),
    v: f64,
    params: &OneSidedParams,
) -> Result<MinimizerTrace, MinimizerError> {
    let (n, x) = endpoint;
    let m = params.horizon;
    if m >= n {
        return Err(MinimizerError::BadHorizon {
            horizon: m,
            endpoint: n,
        });
    }
    // Frame: query (k, y) of the framed environment reads the base field at
    // y + x + v (k - n); framed minimizers beta relate to originals by
    // gamma_k = beta_k + x + v (k - n).
    let framed = env.shear(v * n as f64 - x, -v);
    let steps = (n - m) as u32;
    let span = match params.mode {
        OneSidedMode::LinearInitial => (0.0, 0.0),
        OneSidedMode::PointToPoint => {
            let target = v * n as f64 - x;
            (target.min(0.0), target.max(0.0))
        }
    };
    let grid = params.policy.build(span.0, span.1, steps)?;
    let w0 = match params.mode {
        OneSidedMode::LinearInitial => GridProfile::from_fn(grid, m, |_| 0.0)?,
        OneSidedMode::PointToPoint => {
            let target_idx = grid.nearest_index(v * n as f64 - x);
            GridProfile::new(
                grid,
                m,
                (0..grid.count)
                    .map(|i| if i == target_idx { 0.0 } else { POINT_PENALTY })
                    .collect(),
            )?
        }
    };
    let run = evolve(&framed, &w0, n, params.action)?;
    let terminal = grid.nearest_index(0.0);
    let idx = index_trace(&run.stack, terminal);
    let last = (grid.count - 1) as u32;
    let contact = idx.iter().any(|&j| j == 0 || j == last);
    let mut beta = trace_back(&run.stack, terminal);
    // Pin the endpoint to the exact requested coordinate (frame origin).
    *beta.positions.last_mut().unwrap() = 0.0;
    let mut trace = if params.do_refine {
        refine(&framed, &beta, params.refine)
    } else {
        let el_res = crate::action::el_residual(&framed, &beta);
        MinimizerTrace {
            path: beta,
            refined: false,
            el_res,
            source: TraceSource::PointToPoint,
            boundary_contact: false,
        }
    };
    trace.source = match params.mode {
        OneSidedMode::LinearInitial => TraceSource::LinearInitialV,
        OneSidedMode::PointToPoint => TraceSource::PointToPoint,
    };
    trace.boundary_contact = contact;
    // Map out of the frame.
    for (j, pos) in trace.path.positions.iter_mut().enumerate() {
        let k = m + j as i64;
        *pos += x + v * (k - n) as f64;
    }
    Ok(trace)
}

/// Shared backward DP for all one-sided approximants with slope `v` and
/// endpoints at times in `(horizon, n]` on one realization. Tracing an
/// endpoint reuses the stack prefix, so a whole field of minimizers costs one
/// evolution.
pub struct OneSidedField {
    framed: Environment,
    pub v: f64,
    pub n: i64,
    pub horizon: i64,
    pub grid: GridSpec,
    run: EvolveRun,
    refine: RefineParams,
}

impl OneSidedField {
    pub fn compute(
        env: &Environment,
        v: f64,
        n: i64,
        params: &OneSidedParams,
    ) -> Result<Self, MinimizerError> {
        let m = params.horizon;
        if m >= n {
            return Err(MinimizerError::BadHorizon {
                horizon: m,
                endpoint: n,
            });
        }
        // Frame anchored at x = 0: gamma_k = beta_k + v (k - n).
        let framed = env.shear(v * n as f64, -v);
        let grid = params.policy.build(0.0, 0.0, (n - m) as u32)?;
        let w0 = GridProfile::from_fn(grid, m, |_| 0.0)?;
        let run = evolve(&framed, &w0, n, params.action)?;
        Ok(OneSidedField {
            framed,
            v,
            n,
            horizon: m,
            grid,
            run,
            refine: params.refine,
        })
    }

    pub fn flags(&self) -> EvolveFlags {
        self.run.flags
    }

    pub fn stack(&self) -> &BackpointerStack {
        &self.run.stack
    }

    fn frame_offset(&self, time: i64) -> f64 {
        self.v * (time - self.n) as f64
    }

    /// Reduced-frame node index of the endpoint `(time, x)`.
    fn endpoint_index(&self, time: i64, x: f64) -> Result<usize, MinimizerError> {
        if time <= self.horizon || time > self.n {
            return Err(MinimizerError::TimeOutOfRange(time));
        }
        Ok(self.grid.nearest_index(x - self.frame_offset(time)))
    }

    /// One-sided approximant for endpoint `(time, x)`, `horizon < time <= n`.
    pub fn trace(
        &self,
        time: i64,
        x: f64,
        do_refine: bool,
    ) -> Result<MinimizerTrace, MinimizerError> {
        let terminal = self.endpoint_index(time, x)?;
        let steps = (time - self.horizon) as usize;
        let mut idx = vec![0u32; steps + 1];
        let mut cur = terminal as u32;
        idx[steps] = cur;
        for s in (0..steps).rev() {
            cur = self
                .run
                .stack
                .predecessor(self.horizon + s as i64 + 1, cur as usize)
                .expect("prefix in range") as u32;
            idx[s] = cur;
        }
        let last = (self.grid.count - 1) as u32;
        let contact = idx.iter().any(|&j| j == 0 || j == last);
        let mut beta = Path::new(
            self.horizon,
            idx.iter().map(|&j| self.grid.x(j as usize)).collect(),
        );
        *beta.positions.last_mut().unwrap() = x - self.frame_offset(time);
        let mut trace = if do_refine {
            refine(&self.framed, &beta, self.refine)
        } else {
            let el_res = crate::action::el_residual(&self.framed, &beta);
            MinimizerTrace {
                path: beta,
                refined: false,
                el_res,
                source: TraceSource::LinearInitialV,
                boundary_contact: false,
            }
        };
        trace.source = TraceSource::LinearInitialV;
        trace.boundary_contact = contact;
        for (j, pos) in trace.path.positions.iter_mut().enumerate() {
            let k = self.horizon + j as i64;
            *pos += self.frame_offset(k);
        }
        Ok(trace)
    }

    /// Velocity profile `u(time, .) = gamma(time) - gamma(time - 1)` of the
    /// one-sided field, sampled on the frame grid shifted to original
    /// coordinates.
    pub fn velocity(&self, time: i64) -> Result<GridProfile, MinimizerError> {
        if time <= self.horizon || time > self.n {
            return Err(MinimizerError::TimeOutOfRange(time));
        }
        let map = self
            .run
            .stack
            .map_into(time)
            .expect("checked range");
        let offset = self.frame_offset(time);
        let values: Vec<f64> = (0..self.grid.count)
            .map(|i| self.grid.x(i) - self.grid.x(map[i] as usize) + self.v)
            .collect();
        let grid = GridSpec {
            x_min: self.grid.x_min + offset,
            h: self.grid.h,
            count: self.grid.count,
        };
        Ok(GridProfile {
            grid,
            time,
            values,
        })
    }
}

/// Crossing structure of two paths on their common time interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossingReport {
    pub common_start: i64,
    pub common_end: i64,
    /// Every common position identical (to the bit).
    pub coincide: bool,
    /// Times `k` such that the sign of `p2 - p1` flips between `k` and the
    /// next nonzero-gap time.
    pub crossing_times: Vec<i64>,
    pub min_gap: f64,
    pub max_gap: f64,
}

pub fn crossing_check(p1: &Path, p2: &Path) -> Result<CrossingReport, MinimizerError> {
    let t0 = p1.start_time.max(p2.start_time);
    let t1 = p1.end_time().min(p2.end_time());
    if t0 > t1 {
        return Err(MinimizerError::NoCommonSupport);
    }
    let mut coincide = true;
    let mut crossing_times = Vec::new();
    let mut last_sign = 0i8;
    let mut last_sign_time = t0;
    let mut min_gap = f64::INFINITY;
    let mut max_gap = f64::NEG_INFINITY;
    for t in t0..=t1 {
        let d = p2.at(t).unwrap() - p1.at(t).unwrap();
        min_gap = min_gap.min(d);
        max_gap = max_gap.max(d);
        if d != 0.0 {
            coincide = false;
            let sign = if d > 0.0 { 1 } else { -1 };
            if last_sign != 0 && sign != last_sign {
                crossing_times.push(last_sign_time);
            }
            last_sign = sign;
            last_sign_time = t;
        }
    }
    Ok(CrossingReport {
        common_start: t0,
        common_end: t1,
        coincide,
        crossing_times,
        min_gap,
        max_gap,
    })
}

/// Cone width specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConeWidth {
    Fixed(f64),
    /// `eta = q * |apex time|^{-delta}`, `0 < delta < 1/4`.
    PowerLaw { q: f64, delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub apex: (i64, f64),
    pub width: ConeWidth,
}

impl ConeSpec {
    pub fn eta(&self) -> Result<f64, MinimizerError> {
        match self.width {
            ConeWidth::Fixed(eta) => {
                assert!(eta > 0.0, "cone half-width must be positive");
                Ok(eta)
            }
            ConeWidth::PowerLaw { q, delta } => {
                assert!(q > 0.0, "cone scale must be positive");
                assert!(
                    delta > 0.0 && delta < 0.25,
                    "cone exponent must lie in (0, 1/4)"
                );
                if self.apex.0 == 0 {
                    return Err(MinimizerError::ZeroApexTime);
                }
                Ok(q * (self.apex.0.unsigned_abs() as f64).powf(-delta))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StraightnessReport {
    pub inside: bool,
    pub worst_violation: f64,
    pub checked_times: usize,
}

/// How far the path strays from the cone of slopes around the apex ray:
/// `max_k |gamma_k / k - x / n| - eta`, over nonzero times of the trace.
pub fn straightness_check(
    trace: &Path,
    cone: &ConeSpec,
) -> Result<StraightnessReport, MinimizerError> {
    let (n, x) = cone.apex;
    if n == 0 {
        return Err(MinimizerError::ZeroApexTime);
    }
    let eta = cone.eta()?;
    let ray = x / n as f64;
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for (j, &pos) in trace.positions.iter().enumerate() {
        let k = trace.start_time + j as i64;
        if k == 0 {
            continue;
        }
        let dev = (pos / k as f64 - ray).abs() - eta;
        worst = worst.max(dev);
        checked += 1;
    }
    Ok(StraightnessReport {
        inside: worst <= 0.0,
        worst_violation: worst,
        checked_times: checked,
    })
}

/// Triple-gap width series `W_k = sum_{i=0..2} (p2_{k-i} - p1_{k-i})` for
/// ordered paths `p1 <= p2`, over times with three common samples, ascending.
pub fn width_wk(p1: &Path, p2: &Path, n: i64) -> Result<Vec<(i64, f64)>, MinimizerError> {
    let t0 = p1.start_time.max(p2.start_time);
    let t1 = p1.end_time().min(p2.end_time()).min(n);
    if t0 > t1 {
        return Err(MinimizerError::NoCommonSupport);
    }
    for t in t0..=t1 {
        let (a, b) = (p1.at(t).unwrap(), p2.at(t).unwrap());
        if b < a {
            return Err(MinimizerError::NotOrdered {
                time: t,
                left: a,
                right: b,
            });
        }
    }
    let mut out = Vec::new();
    for k in t0 + 2..=t1 {
        let w: f64 = (0..3)
            .map(|i| p2.at(k - i).unwrap() - p1.at(k - i).unwrap())
            .sum();
        out.push((k, w));
    }
    Ok(out)
}

/// Times `k` (descending) at which the width criterion `W_k < c / (n - k)`
/// holds; at `k = n` the bound is vacuous and always counts.
pub fn pairing_times(
    p1: &Path,
    p2: &Path,
    n: i64,
    c: f64,
) -> Result<Vec<i64>, MinimizerError> {
    let widths = width_wk(p1, p2, n)?;
    let mut out: Vec<i64> = widths
        .into_iter()
        .filter(|&(k, w)| {
            let bound = if k == n { f64::INFINITY } else { c / (n - k) as f64 };
            w < bound
        })
        .map(|(k, _)| k)
        .collect();
    out.reverse();
    Ok(out)
}

/// Successive-difference stabilization diagnostics: positions at the time
/// after the endpoint's predecessor as the horizon deepens. Reported, not
/// asserted; no convergence rate is claimed.
pub fn stabilization_series(
    env: &Environment,
    endpoint: (i64, f64),
    v: f64,
    horizons: &[i64],
    base: &OneSidedParams,
) -> Result<Vec<(i64, f64)>, MinimizerError> {
    let mut prev: Option<MinimizerTrace> = None;
    let mut out = Vec::new();
    for &m in horizons {
        let params = OneSidedParams { horizon: m, ..*base };
        let trace = one_sided_approx(env, endpoint, v, &params)?;
        if let Some(p) = &prev {
            let t = endpoint.0 - 1;
            let d = (trace.path.at(t).unwrap() - p.path.at(t).unwrap()).abs();
            out.push((m, d));
        }
        prev = Some(trace);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvironmentConfig, KickPoint};

    fn zero_grid(h: f64, half_units: usize, time: i64) -> GridProfile {
        let grid = GridSpec::new(-(half_units as f64) * h, h, 2 * half_units + 1).unwrap();
        GridProfile::from_fn(grid, time, |_| 0.0).unwrap()
    }

    #[test]
    fn trace_back_constant_in_zero_env() {
        let env = Environment::zero();
        let w = zero_grid(0.25, 16, 0);
        let run = evolve(&env, &w, 5, ActionParams::default()).unwrap();
        let p = trace_back(&run.stack, 10);
        assert_eq!(p.start_time, 0);
        assert!(p.positions.iter().all(|&x| x == w.grid.x(10)));
    }

    #[test]
    fn point_constrained_trace_is_straight() {
        let env = Environment::zero();
        let h = 1.0 / 32.0;
        let grid = GridSpec::new(-4.0, h, 257).unwrap();
        let start_idx = grid.nearest_index(0.0);
        let w0 = GridProfile::new(
            grid,
            0,
            (0..grid.count)
                .map(|i| if i == start_idx { 0.0 } else { POINT_PENALTY })
                .collect(),
        )
        .unwrap();
        let run = evolve(&env, &w0, 4, ActionParams::default()).unwrap();
        let target = grid.nearest_index(2.0);
        let p = trace_back(&run.stack, target);
        for (j, &pos) in p.positions.iter().enumerate() {
            let line = 2.0 * j as f64 / 4.0;
            assert!((pos - line).abs() <= h, "node {j}: {pos} vs {line}");
        }
    }

    #[test]
    fn refine_keeps_straight_line() {
        let env = Environment::zero();
        let line = Path::new(0, (0..6).map(|k| 0.3 * k as f64).collect());
        let t = refine(&env, &line, RefineParams::default());
        assert!(t.refined);
        // second differences of 0.3 k carry one rounding each
        assert!(t.el_res <= 1e-15);
        assert_eq!(t.path, line);
    }

    #[test]
    fn refine_never_increases_action_and_hits_tolerance() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(3)).unwrap();
        let params = RefineParams::default();
        let start = Path::new(0, vec![0.0, 0.42, -0.17, 0.35, 0.8, 0.1, -0.3, 0.0]);
        let before = interior_objective(&env, 0, &start.positions);
        let t = refine(&env, &start, params);
        let after = interior_objective(&env, 0, &t.path.positions);
        assert!(after <= before + 1e-15);
        assert!(t.refined, "el_res {}", t.el_res);
        assert!(t.el_res <= params.el_tol);
        // endpoints pinned
        assert_eq!(t.path.positions[0], start.positions[0]);
        assert_eq!(
            t.path.positions.last().unwrap(),
            start.positions.last().unwrap()
        );
        // the refined interior solves the EL recursion: re-running el_step
        // from the first two points reproduces it
        let xs = &t.path.positions;
        for j in 1..xs.len() - 1 {
            let pred = crate::action::el_step(&env, j as i64, xs[j - 1], xs[j]);
            assert!((pred - xs[j + 1]).abs() <= 10.0 * params.el_tol);
        }
    }

    #[test]
    fn refine_single_bump_matches_bisection_oracle() {
        // One interior point gamma_0 between fixed endpoints a, b with a
        // single kick at time 0: stationarity reads
        // 2 g - a - b - f(0, g) = 0 (f enters with the opposite sign of the
        // gradient convention). Solve independently by bisection.
        let env = Environment::from_points(vec![KickPoint {
            tau: 0,
            eta: 0.3,
            xi: -0.8,
            kappa: 0.9,
        }])
        .unwrap();
        let (a, b) = (0.1, 0.4);
        let grad = |g: f64| 2.0 * g - a - b + env.force(0, g);
        let (mut lo, mut hi) = (-1.0, 1.5);
        assert!(grad(lo) < 0.0 && grad(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if grad(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let t = refine(
            &env,
            &Path::new(-1, vec![a, 0.25, b]),
            RefineParams::default(),
        );
        assert!(t.refined);
        assert!(
            (t.path.positions[1] - oracle).abs() <= 1e-8,
            "{} vs {oracle}",
            t.path.positions[1]
        );
    }

    #[test]
    fn one_sided_zero_env_is_exact_line() {
        let env = Environment::zero();
        let mut params = OneSidedParams::new(-8);
        params.policy.r_width = 1.0;
        let v = 0.25; // multiple of h: the line lives on grid nodes
        let t = one_sided_approx(&env, (0, 0.5), v, &params).unwrap();
        assert!(t.refined);
        assert!(!t.boundary_contact);
        for (j, &pos) in t.path.positions.iter().enumerate() {
            let k = -8 + j as i64;
            let line = 0.5 + v * k as f64;
            assert_eq!(pos, line, "time {k}");
        }
    }

    #[test]
    fn one_sided_shear_equivariance() {
        // With dyadic shear parameters the sheared call solves a
        // bit-identical problem in the reduced frame; only the final affine
        // read-out can round, so the mapped positions agree to ulp scale.
        let env = Environment::new(EnvironmentConfig::default().with_seed(21)).unwrap();
        let mut params = OneSidedParams::new(-12);
        params.policy.r_width = 2.0;
        let (n, x, v) = (0i64, 0.25, 0.0);
        let (a, w) = (0.5, 0.125);
        let base = one_sided_approx(&env, (n, x), v, &params).unwrap();
        let sheared_env = env.shear(a, w);
        let mapped_endpoint = x + a + w * n as f64;
        let eq = one_sided_approx(&sheared_env, (n, mapped_endpoint), v + w, &params).unwrap();
        for (j, &pos) in eq.path.positions.iter().enumerate() {
            let k = params.horizon + j as i64;
            let want = base.path.positions[j] + a + w * k as f64;
            assert!((pos - want).abs() <= 1e-13, "time {k}: {pos} vs {want}");
        }
    }

    #[test]
    fn field_traces_match_single_endpoint_runs() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(33)).unwrap();
        let mut params = OneSidedParams::new(-16);
        params.policy.r_width = 2.0;
        let field = OneSidedField::compute(&env, 0.0, 0, &params).unwrap();
        let t = field.trace(0, 0.0, true).unwrap();
        let single = one_sided_approx(&env, (0, 0.0), 0.0, &params).unwrap();
        for j in 0..t.path.positions.len() {
            assert_eq!(t.path.positions[j], single.path.positions[j]);
        }
    }

    #[test]
    fn field_velocity_is_monotone_map() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(14)).unwrap();
        let mut params = OneSidedParams::new(-24);
        params.policy.r_width = 2.0;
        let field = OneSidedField::compute(&env, 0.5, 0, &params).unwrap();
        let u = field.velocity(0).unwrap();
        u.check_monotone_map().unwrap();
    }

    #[test]
    fn ordered_endpoints_give_ordered_traces() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(55)).unwrap();
        let mut params = OneSidedParams::new(-20);
        params.policy.r_width = 2.0;
        let field = OneSidedField::compute(&env, 0.0, 0, &params).unwrap();
        let mut prev: Option<MinimizerTrace> = None;
        for k in -4..=4 {
            let t = field.trace(0, 0.25 * k as f64, false).unwrap();
            if let Some(p) = &prev {
                for j in 0..t.path.positions.len() {
                    assert!(
                        p.path.positions[j] <= t.path.positions[j] + 1e-12,
                        "order violated at {j}"
                    );
                }
            }
            prev = Some(t);
        }
    }

    #[test]
    fn crossing_report_basics() {
        let a = Path::new(0, vec![0.0, 1.0, 2.0]);
        let b = Path::new(0, vec![0.0, 1.0, 2.0]);
        let r = crossing_check(&a, &b).unwrap();
        assert!(r.coincide);
        assert!(r.crossing_times.is_empty());

        let c = Path::new(0, vec![0.5, 1.5, 2.5]);
        let r = crossing_check(&a, &c).unwrap();
        assert!(!r.coincide);
        assert!(r.crossing_times.is_empty());

        let d = Path::new(0, vec![-1.0, 0.0, 1.0]);
        let e = Path::new(0, vec![1.0, 0.5, -1.0]);
        let r = crossing_check(&d, &e).unwrap();
        assert_eq!(r.crossing_times, vec![1]);
    }

    #[test]
    fn straightness_of_lines() {
        let apex = (8i64, 4.0);
        let cone = ConeSpec {
            apex,
            width: ConeWidth::Fixed(0.05),
        };
        let on_ray = Path::new(1, (1..=16).map(|k| 0.5 * k as f64).collect());
        let r = straightness_check(&on_ray, &cone).unwrap();
        assert!(r.inside);
        assert!(r.worst_violation <= 0.0);

        let off_ray = Path::new(1, (1..=16).map(|k| 0.75 * k as f64).collect());
        let r = straightness_check(&off_ray, &cone).unwrap();
        assert!(!r.inside);
        assert!((r.worst_violation - (0.25 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn width_and_pairing_arithmetic() {
        let p1 = Path::new(-10, vec![0.0; 11]);
        let p2 = Path::new(-10, vec![0.0; 11]);
        let ks = pairing_times(&p1, &p2, 0, 1.0).unwrap();
        assert_eq!(ks, (-8..=0).rev().collect::<Vec<_>>());

        let g = 0.01;
        let q2 = Path::new(-10, vec![g; 11]);
        let w = width_wk(&p1, &q2, 0).unwrap();
        assert!(w.iter().all(|&(_, wk)| (wk - 3.0 * g).abs() < 1e-15));
        // 3 g < 1 / (0 - k)  <=>  n - k < 1 / (3 g) = 33.3: all k > -34
        let ks = pairing_times(&p1, &q2, 0, 1.0).unwrap();
        assert_eq!(ks, (-8..=0).rev().collect::<Vec<_>>());

        let far = Path::new(-10, vec![1.0; 11]);
        let ks = pairing_times(&p1, &far, 0, 1.0).unwrap();
        assert_eq!(ks, vec![0]); // only the vacuous k = n survives

        let bad = width_wk(&far, &p1, 0);
        assert!(matches!(bad, Err(MinimizerError::NotOrdered { .. })));
    }

    #[test]
    fn window_boundary_detection() {
        let env = Environment::zero();
        let w = zero_grid(0.25, 8, 0);
        let run = evolve(&env, &w, 3, ActionParams::default()).unwrap();
        // Zero env: traces are constant, so the extreme terminals touch the
        // boundary exactly when the window includes the boundary nodes.
        assert!(window_touches_boundary(&run.stack, 0, 16));
        assert!(!window_touches_boundary(&run.stack, 1, 15));
    }
}
