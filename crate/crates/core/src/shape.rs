//! Growth-rate experiments: point-to-point optimal actions, the shape
//! constant `alpha(v)`, its quadratic law and shear identities, and the
//! concentration / excursion tail diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{
    kinetic_action, max_excursion, potential_action, ActionParams, Path,
};
use crate::environment::{Environment, EnvironmentConfig};
use crate::grid::{GridError, GridPolicy, GridProfile};
use crate::hopf_lax::{evolve, BackpointerStack, EvolveError};
use crate::minimizers::{refine, MinimizerTrace, RefineParams, TraceSource};
use crate::stats::{self, SlopeFit};

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(i64),
    #[error("optimum selected a penalized start node")]
    PenaltyLeak,
    #[error("need at least 2 replicas, got {0}")]
    TooFewReplicas(usize),
    #[error("no estimate at v = 0 to anchor the quadratic law")]
    MissingAnchor,
}

/// Penalty charged to every start node except the constrained one; far above
/// any reachable action on policy-sized domains.
pub const POINT_PENALTY: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointActionParams {
    pub action: ActionParams,
    pub policy: GridPolicy,
    pub refine: RefineParams,
}

impl Default for PointActionParams {
    fn default() -> Self {
        PointActionParams {
            action: ActionParams::default(),
            policy: GridPolicy::default(),
            refine: RefineParams::default(),
        }
    }
}

/// One solved point-to-point problem.
#[derive(Clone, Debug)]
pub struct PointActionResult {
    /// Action of the refined path (the returned optimum).
    pub value: f64,
    /// Raw grid read-off, for bias diagnostics.
    pub grid_value: f64,
    pub trace: MinimizerTrace,
    pub excursion: f64,
    pub boundary_contact: bool,
}

fn index_trace_to(stack: &BackpointerStack, time: i64, terminal: usize) -> Vec<u32> {
    let steps = (time - stack.start_time) as usize;
    let mut idx = vec![0u32; steps + 1];
    let mut cur = terminal as u32;
    idx[steps] = cur;
    for s in (0..steps).rev() {
        cur = stack
            .predecessor(stack.start_time + s as i64 + 1, cur as usize)
            .expect("prefix in range") as u32;
        idx[s] = cur;
    }
    idx
}

/// Optimal action `A^{n0,n1}(x0, x1)`: grid dynamic program with a
/// point-constrained start, traced and Newton-refined with the endpoints
/// pinned to the exact coordinates.
pub fn point_action_between(
    env: &Environment,
    from: (i64, f64),
    to: (i64, f64),
    params: &PointActionParams,
) -> Result<PointActionResult, ShapeError> {
    let (n0, x0) = from;
    let (n1, x1) = to;
    if n1 <= n0 {
        return Err(ShapeError::BadHorizon(n1 - n0));
    }
    let steps = (n1 - n0) as u32;
    let grid = params
        .policy
        .build(x0.min(x1), x0.max(x1), steps)?;
    let start_idx = grid.nearest_index(x0);
    let w0 = GridProfile::new(
        grid,
        n0,
        (0..grid.count)
            .map(|i| if i == start_idx { 0.0 } else { POINT_PENALTY })
            .collect(),
    )?;
    let run = evolve(env, &w0, n1, params.action)?;
    let terminal = grid.nearest_index(x1);
    finish_point_problem(env, &run.stack, n1, terminal, start_idx, (x0, x1), params)
}

fn finish_point_problem(
    env: &Environment,
    stack: &BackpointerStack,
    time: i64,
    terminal: usize,
    start_idx: usize,
    exact: (f64, f64),
    params: &PointActionParams,
) -> Result<PointActionResult, ShapeError> {
    let grid = stack.grid;
    let idx = index_trace_to(stack, time, terminal);
    if idx[0] as usize != start_idx {
        return Err(ShapeError::PenaltyLeak);
    }
    let last = (grid.count - 1) as u32;
    let contact = idx.iter().any(|&j| j == 0 || j == last);
    let mut path = Path::new(
        stack.start_time,
        idx.iter().map(|&j| grid.x(j as usize)).collect(),
    );
    let grid_value = kinetic_action(&path)
        .expect("at least one step")
        + potential_action(env, &path, params.action).expect("at least one step");
    path.positions[0] = exact.0;
    let n = path.positions.len();
    path.positions[n - 1] = exact.1;
    let mut trace = refine(env, &path, params.refine);
    trace.source = TraceSource::PointToPoint;
    trace.boundary_contact = contact;
    let value = kinetic_action(&trace.path).expect("at least one step")
        + potential_action(env, &trace.path, params.action).expect("at least one step");
    let excursion = max_excursion(&trace.path);
    Ok(PointActionResult {
        value,
        grid_value,
        trace,
        excursion,
        boundary_contact: contact,
    })
}

/// `A^{0,n}(0, v n)`, the optimal action along slope `v`.
pub fn point_action(
    env: &Environment,
    n: i64,
    v: f64,
    params: &PointActionParams,
) -> Result<PointActionResult, ShapeError> {
    point_action_between(env, (0, 0.0), (n, v * n as f64), params)
}

/// Per-replica record of one slope-`v` action sample with its dyadic
/// sub-horizon checkpoints (one dynamic program serves all three).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaReplica {
    pub seed: u64,
    pub action_full: f64,
    pub action_half: f64,
    pub action_quarter: f64,
    pub excursion: f64,
    pub boundary_contact: bool,
}

pub fn alpha_replica(
    env: &Environment,
    seed: u64,
    n: i64,
    v: f64,
    params: &PointActionParams,
) -> Result<AlphaReplica, ShapeError> {
    if n < 4 {
        return Err(ShapeError::BadHorizon(n));
    }
    let grid = params.policy.build(
        (v * n as f64).min(0.0),
        (v * n as f64).max(0.0),
        n as u32,
    )?;
    let start_idx = grid.nearest_index(0.0);
    let w0 = GridProfile::new(
        grid,
        0,
        (0..grid.count)
            .map(|i| if i == start_idx { 0.0 } else { POINT_PENALTY })
            .collect(),
    )?;
    let run = evolve(env, &w0, n, params.action)?;
    let solve_at = |t: i64| -> Result<PointActionResult, ShapeError> {
        let x_t = v * t as f64;
        let terminal = grid.nearest_index(x_t);
        finish_point_problem(env, &run.stack, t, terminal, start_idx, (0.0, x_t), params)
    };
    let full = solve_at(n)?;
    let half = solve_at(n / 2)?;
    let quarter = solve_at(n / 4)?;
    Ok(AlphaReplica {
        seed,
        action_full: full.value,
        action_half: half.value,
        action_quarter: quarter.value,
        excursion: full.excursion,
        boundary_contact: full.boundary_contact || half.boundary_contact || quarter.boundary_contact,
    })
}

/// Monte Carlo estimate of the shape constant `alpha(v)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShapeEstimate {
    pub v: f64,
    pub n: i64,
    pub replicas: usize,
    /// Mean of `A^{0,n}(0, vn) / n` over replicas.
    pub mean: f64,
    pub stderr: f64,
    /// Per-replica normalized samples, in seed order.
    pub samples: Vec<f64>,
    /// Subadditive diagnostic: means of `A/t` at `t = n/4, n/2, n`.
    /// Nonincreasing in expectation.
    pub sub_means: [(i64, f64); 3],
    /// Richardson-style extrapolation from `n/2` and `n`; the finite-n mean
    /// is biased up since `alpha = inf_n E A^n / n`. Reported, never used to
    /// correct the estimate silently.
    pub richardson: f64,
    pub boundary_flags: u32,
}

pub fn estimate_alpha(
    cfg: &EnvironmentConfig,
    seeds: &[u64],
    v: f64,
    n: i64,
    params: &PointActionParams,
) -> Result<ShapeEstimate, ShapeError> {
    if seeds.len() < 2 {
        return Err(ShapeError::TooFewReplicas(seeds.len()));
    }
    let replicas: Vec<AlphaReplica> = seeds
        .par_iter()
        .map(|&seed| {
            let env = Environment::new(cfg.with_seed(seed)).expect("validated config");
            alpha_replica(&env, seed, n, v, params)
        })
        .collect::<Result<_, _>>()?;
    Ok(summarize_alpha(v, n, &replicas))
}

pub fn summarize_alpha(v: f64, n: i64, replicas: &[AlphaReplica]) -> ShapeEstimate {
    let samples: Vec<f64> = replicas.iter().map(|r| r.action_full / n as f64).collect();
    let half: Vec<f64> = replicas
        .iter()
        .map(|r| r.action_half / (n / 2) as f64)
        .collect();
    let quarter: Vec<f64> = replicas
        .iter()
        .map(|r| r.action_quarter / (n / 4) as f64)
        .collect();
    let mean = stats::mean(&samples);
    let mean_half = stats::mean(&half);
    let mean_quarter = stats::mean(&quarter);
    ShapeEstimate {
        v,
        n,
        replicas: replicas.len(),
        mean,
        stderr: stats::stderr(&samples),
        samples,
        sub_means: [(n / 4, mean_quarter), (n / 2, mean_half), (n, mean)],
        richardson: 2.0 * mean - mean_half,
        boundary_flags: replicas.iter().filter(|r| r.boundary_contact).count() as u32,
    }
}

/// Residuals of the quadratic law `alpha(v) = alpha(0) + v^2/2` against the
/// anchor estimate at `v = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticLawReport {
    pub grid_bias_coeff: f64,
    pub rows: Vec<QuadraticLawRow>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticLawRow {
    pub v: f64,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub fn quadratic_law_check(
    estimates: &[ShapeEstimate],
    h: f64,
    grid_bias_coeff: f64,
) -> Result<QuadraticLawReport, ShapeError> {
    let anchor = estimates
        .iter()
        .find(|e| e.v == 0.0)
        .ok_or(ShapeError::MissingAnchor)?;
    let mut rows = Vec::new();
    let mut pass = true;
    for e in estimates {
        if e.v == 0.0 {
            continue;
        }
        let residual = e.mean - anchor.mean - e.v * e.v / 2.0;
        let threshold = 3.0 * (e.stderr + anchor.stderr) + grid_bias_coeff * h;
        let row_pass = residual.abs() <= threshold;
        pass &= row_pass;
        rows.push(QuadraticLawRow {
            v: e.v,
            residual,
            threshold,
            pass: row_pass,
        });
    }
    Ok(QuadraticLawReport {
        grid_bias_coeff,
        rows,
        pass,
    })
}

/// Paired-seed comparison of the `p = 0` and `p = 1` action conventions;
/// the shape constant must not depend on `p`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PIndependenceReport {
    pub v: f64,
    pub n: i64,
    pub mean_diff: f64,
    pub paired_stderr: f64,
    pub pass: bool,
}

pub fn p_independence_check(
    cfg: &EnvironmentConfig,
    seeds: &[u64],
    v: f64,
    n: i64,
    params: &PointActionParams,
) -> Result<PIndependenceReport, ShapeError> {
    if seeds.len() < 2 {
        return Err(ShapeError::TooFewReplicas(seeds.len()));
    }
    let diffs: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| -> Result<f64, ShapeError> {
            let env = Environment::new(cfg.with_seed(seed)).expect("validated config");
            let mut p1 = *params;
            p1.action = ActionParams::new(1.0);
            let mut p0 = *params;
            p0.action = ActionParams::new(0.0);
            let a1 = point_action(&env, n, v, &p1)?.value;
            let a0 = point_action(&env, n, v, &p0)?.value;
            Ok((a0 - a1) / n as f64)
        })
        .collect::<Result<_, _>>()?;
    let mean_diff = stats::mean(&diffs);
    let paired_stderr = stats::stderr(&diffs);
    Ok(PIndependenceReport {
        v,
        n,
        mean_diff,
        paired_stderr,
        pass: mean_diff.abs() <= 3.0 * paired_stderr,
    })
}

/// Both sides of the shear identity
/// `A_{L omega}(x0 + a, x1 + a + w n) = A_omega(x0, x1) + (x1 - x0) w + n w^2 / 2`,
/// on the paired (relabeled) environment.
///
/// `lhs` evaluates the mapped minimizer in the sheared view: the map sends
/// stationary paths to stationary paths exactly, so `lhs - rhs` probes only
/// the relabeling and the kinetic algebra. `dp_value` re-optimizes on the
/// sheared view from scratch; it is reported, not part of the identity,
/// because near-tied minimizer basins resolve differently under the two
/// discretizations and their action gap dominates every refinement
/// tolerance.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShearIdentityResult {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    /// Independent optimum of the sheared problem.
    pub dp_value: f64,
    /// `dp_value - lhs`: basin-selection discrepancy of the two programs.
    pub dp_gap: f64,
    pub boundary_contact: bool,
}

pub fn shear_action_identity(
    env: &Environment,
    n: i64,
    x0: f64,
    x1: f64,
    a: f64,
    w: f64,
    params: &PointActionParams,
) -> Result<ShearIdentityResult, ShapeError> {
    let base = point_action_between(env, (0, x0), (n, x1), params)?;
    let sheared_env = env.shear(a, w);
    let mapped = Path::new(
        0,
        base.trace
            .path
            .positions
            .iter()
            .enumerate()
            .map(|(k, &x)| x + a + w * k as f64)
            .collect(),
    );
    let lhs = kinetic_action(&mapped).expect("at least one step")
        + potential_action(&sheared_env, &mapped, params.action).expect("at least one step");
    let rhs = base.value + (x1 - x0) * w + n as f64 * w * w / 2.0;
    let sheared = point_action_between(
        &sheared_env,
        (0, x0 + a),
        (n, x1 + a + w * n as f64),
        params,
    )?;
    Ok(ShearIdentityResult {
        lhs,
        rhs,
        diff: lhs - rhs,
        dp_value: sheared.value,
        dp_gap: sheared.value - lhs,
        boundary_contact: base.boundary_contact || sheared.boundary_contact,
    })
}

/// One action/excursion sample per seed, shared by both tail diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointSample {
    pub seed: u64,
    pub action: f64,
    pub excursion: f64,
    pub boundary_contact: bool,
}

pub fn sample_point_actions(
    cfg: &EnvironmentConfig,
    seeds: &[u64],
    v: f64,
    n: i64,
    params: &PointActionParams,
) -> Result<Vec<PointSample>, ShapeError> {
    seeds
        .par_iter()
        .map(|&seed| -> Result<PointSample, ShapeError> {
            let env = Environment::new(cfg.with_seed(seed)).expect("validated config");
            let r = point_action(&env, n, v, params)?;
            Ok(PointSample {
                seed,
                action: r.value,
                excursion: r.excursion,
                boundary_contact: r.boundary_contact,
            })
        })
        .collect()
}

/// Empirical exceedance curve with a fitted log-linear slope against the
/// stated scaling variable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailReport {
    /// Scaling denominator: `sqrt(n) ln n` for action deviations, `n` for
    /// squared excursions.
    pub scale: f64,
    pub center: f64,
    pub rows: Vec<TailRow>,
    pub fit: Option<FitSummary>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TailRow {
    pub u: f64,
    pub p_hat: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub slope_se: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub points: usize,
}

impl From<SlopeFit> for FitSummary {
    fn from(f: SlopeFit) -> Self {
        FitSummary {
            slope: f.slope,
            slope_se: f.slope_se,
            ci95_lo: f.slope_ci95.0,
            ci95_hi: f.slope_ci95.1,
            points: f.points,
        }
    }
}

const TAIL_QUANTILES: [f64; 7] = [0.50, 0.60, 0.70, 0.80, 0.88, 0.94, 0.97];

fn tail_curve(
    devs: &[f64],
    u_grid: Option<&[f64]>,
    transform: impl Fn(f64) -> f64,
) -> (Vec<TailRow>, Option<FitSummary>) {
    let mut sorted = devs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let us: Vec<f64> = match u_grid {
        Some(g) => g.to_vec(),
        None => {
            let mut us: Vec<f64> = TAIL_QUANTILES
                .iter()
                .map(|&q| stats::quantile(&sorted, q))
                .collect();
            us.dedup_by(|a, b| *a <= *b);
            us
        }
    };
    let n = devs.len() as f64;
    let rows: Vec<TailRow> = us
        .iter()
        .map(|&u| TailRow {
            u,
            p_hat: devs.iter().filter(|&&d| d > u).count() as f64 / n,
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.p_hat > 0.0)
        .map(|r| (transform(r.u), r.p_hat.ln()))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = stats::fit_slope(&xs, &ys).map(FitSummary::from);
    (rows, fit)
}

/// `P(|A - alpha_hat n| > u)` against `u / (sqrt(n) ln n)`. The center is
/// the sample mean of the actions (the finite-replica stand-in for
/// `alpha(v) n`).
pub fn concentration_tail(samples: &[PointSample], n: i64, u_grid: Option<&[f64]>) -> TailReport {
    let actions: Vec<f64> = samples.iter().map(|s| s.action).collect();
    let center = stats::mean(&actions);
    let devs: Vec<f64> = actions.iter().map(|a| (a - center).abs()).collect();
    let nf = n as f64;
    let scale = nf.sqrt() * nf.ln();
    let (rows, fit) = tail_curve(&devs, u_grid, |u| u / scale);
    TailReport {
        scale,
        center,
        rows,
        fit,
    }
}

/// `P(max excursion > u)` against `u^2 / n`.
pub fn excursion_tail(samples: &[PointSample], n: i64, u_grid: Option<&[f64]>) -> TailReport {
    let devs: Vec<f64> = samples.iter().map(|s| s.excursion).collect();
    let nf = n as f64;
    let (rows, fit) = tail_curve(&devs, u_grid, |u| u * u / nf);
    TailReport {
        scale: nf,
        center: 0.0,
        rows,
        fit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> PointActionParams {
        let mut p = PointActionParams::default();
        p.policy.r_width = 2.0;
        p
    }

    #[test]
    fn zero_env_point_action_is_kinetic_line() {
        let env = Environment::zero();
        let params = small_params();
        let n = 8;
        for &v in &[0.0, 0.25, 0.5] {
            let r = point_action(&env, n, v, &params).unwrap();
            assert_eq!(r.value, n as f64 * v * v / 2.0, "v = {v}");
            assert!(!r.boundary_contact);
            assert!(r.trace.refined);
        }
    }

    #[test]
    fn zero_env_alpha_is_half_v_squared_exactly() {
        let cfg = EnvironmentConfig {
            intensity: 0.0,
            ..Default::default()
        };
        let params = small_params();
        let est = estimate_alpha(&cfg, &[1, 2, 3, 4], 0.5, 16, &params).unwrap();
        assert_eq!(est.mean, 0.125);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.sub_means[0].1, 0.125);
        assert_eq!(est.sub_means[1].1, 0.125);
    }

    #[test]
    fn grid_value_bounds_refined_value() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(12)).unwrap();
        let params = small_params();
        let r = point_action(&env, 12, 0.5, &params).unwrap();
        // refinement only ever lowers the action of the traced path
        assert!(r.value <= r.grid_value + 1e-12);
    }

    #[test]
    fn quadratic_law_trivial_on_zero_env() {
        let cfg = EnvironmentConfig {
            intensity: 0.0,
            ..Default::default()
        };
        let params = small_params();
        let ests: Vec<ShapeEstimate> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&v| estimate_alpha(&cfg, &[1, 2], v, 16, &params).unwrap())
            .collect();
        let report = quadratic_law_check(&ests, params.policy.h, 1.0).unwrap();
        assert!(report.pass);
        for row in &report.rows {
            assert_eq!(row.residual, 0.0);
        }
    }

    #[test]
    fn shear_identity_zero_env_is_algebraic() {
        let env = Environment::zero();
        let params = small_params();
        let r = shear_action_identity(&env, 8, 0.0, 1.0, 0.75, 0.5, &params).unwrap();
        assert!(r.diff.abs() <= 1e-9, "diff {}", r.diff);
        let r = shear_action_identity(&env, 8, -0.5, 0.25, 0.0, 0.0, &params).unwrap();
        assert_eq!(r.diff, 0.0);
    }

    #[test]
    fn tail_reports_on_synthetic_data() {
        let samples: Vec<PointSample> = (0..200)
            .map(|i| PointSample {
                seed: i,
                // spread of |A - mean| decaying exponentially in rank
                action: (i as f64 * 0.01) * if i % 2 == 0 { 1.0 } else { -1.0 },
                excursion: 0.5 + (i as f64 % 17.0) * 0.1,
                boundary_contact: false,
            })
            .collect();
        let conc = concentration_tail(&samples, 64, None);
        assert!(!conc.rows.is_empty());
        for w in conc.rows.windows(2) {
            assert!(w[1].p_hat <= w[0].p_hat, "exceedance must be nonincreasing");
        }
        let exc = excursion_tail(&samples, 64, None);
        let fit = exc.fit.expect("enough points");
        assert!(fit.slope < 0.0);
    }

    #[test]
    fn zero_env_tails_vanish() {
        let cfg = EnvironmentConfig {
            intensity: 0.0,
            ..Default::default()
        };
        let params = small_params();
        let seeds: Vec<u64> = (0..8).collect();
        let samples = sample_point_actions(&cfg, &seeds, 0.0, 8, &params).unwrap();
        for s in &samples {
            assert_eq!(s.action, 0.0);
            assert_eq!(s.excursion, 0.0);
        }
        let conc = concentration_tail(&samples, 8, Some(&[0.1, 0.2]));
        assert!(conc.rows.iter().all(|r| r.p_hat == 0.0));
    }

    #[test]
    fn p_independence_on_zero_env_is_exact() {
        let cfg = EnvironmentConfig {
            intensity: 0.0,
            ..Default::default()
        };
        let params = small_params();
        let rep = p_independence_check(&cfg, &[1, 2, 3], 0.5, 8, &params).unwrap();
        assert_eq!(rep.mean_diff, 0.0);
        assert!(rep.pass);
    }
}
