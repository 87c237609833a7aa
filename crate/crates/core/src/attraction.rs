//! Basins of pullback attraction: classification of initial potentials by
//! their asymptotic slopes, the metric of locally uniform convergence of
//! inverse monotone maps, and the pullback experiment itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionParams;
use crate::environment::Environment;
use crate::grid::{GridError, GridPolicy, GridProfile, GridSpec};
use crate::hopf_lax::{evolve, slope_probe, velocity_from, EvolveError};
use crate::minimizers::{index_trace, window_touches_boundary, MinimizerError, OneSidedField, OneSidedParams};

#[derive(Debug, Error)]
pub enum AttractionError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Minimizer(#[from] MinimizerError),
    #[error("profile is not in G: x - w(x) decreases at node {0}")]
    NotInG(usize),
    #[error("start time {0} must be negative")]
    BadStartTime(i64),
    #[error("reference horizon {reference} must precede every start time (deepest {deepest})")]
    ShallowReference { reference: i64, deepest: i64 },
}

/// Analytic initial potential with declared asymptotic slope data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    Linear { v: f64 },
    /// Continuous wedge: slope `v_minus` left of `x0`, `v_plus` right of it.
    TwoSlope { x0: f64, v_minus: f64, v_plus: f64 },
    /// Linear plus a bounded smooth ripple.
    PerturbedLinear { v: f64, amplitude: f64, wavelength: f64 },
    /// Arbitrary sampled potential; slope data comes from probes and the
    /// classification is flagged approximate.
    Profile { potential: GridProfile },
}

/// Lower and upper limits of `W(x)/x` in one direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeLimits {
    pub liminf: f64,
    pub limsup: f64,
}

impl SlopeLimits {
    fn exact(v: f64) -> Self {
        SlopeLimits { liminf: v, limsup: v }
    }

    pub fn is_limit(&self) -> bool {
        self.liminf == self.limsup
    }
}

/// Asymptotic slope data of an initial potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeData {
    pub minus: SlopeLimits,
    pub plus: SlopeLimits,
    /// True when the data comes from finite-window probes rather than the
    /// analytic form.
    pub approximate: bool,
}

impl InitialData {
    pub fn potential(&self, x: f64) -> f64 {
        match self {
            InitialData::Zero => 0.0,
            InitialData::Linear { v } => v * x,
            InitialData::TwoSlope { x0, v_minus, v_plus } => {
                if x < *x0 {
                    v_minus * (x - x0)
                } else {
                    v_plus * (x - x0)
                }
            }
            InitialData::PerturbedLinear {
                v,
                amplitude,
                wavelength,
            } => v * x + amplitude * (std::f64::consts::TAU * x / wavelength).sin(),
            InitialData::Profile { potential } => potential.interp(x),
        }
    }

    pub fn slope_data(&self) -> SlopeData {
        match self {
            InitialData::Zero => SlopeData {
                minus: SlopeLimits::exact(0.0),
                plus: SlopeLimits::exact(0.0),
                approximate: false,
            },
            InitialData::Linear { v } => SlopeData {
                minus: SlopeLimits::exact(*v),
                plus: SlopeLimits::exact(*v),
                approximate: false,
            },
            InitialData::TwoSlope { v_minus, v_plus, .. } => SlopeData {
                minus: SlopeLimits::exact(*v_minus),
                plus: SlopeLimits::exact(*v_plus),
                approximate: false,
            },
            InitialData::PerturbedLinear { v, .. } => SlopeData {
                minus: SlopeLimits::exact(*v),
                plus: SlopeLimits::exact(*v),
                approximate: false,
            },
            InitialData::Profile { potential } => {
                let (vm, vp) = slope_probe(potential);
                SlopeData {
                    minus: SlopeLimits::exact(vm),
                    plus: SlopeLimits::exact(vp),
                    approximate: true,
                }
            }
        }
    }

    pub fn sample(&self, grid: GridSpec, time: i64) -> Result<GridProfile, GridError> {
        GridProfile::from_fn(grid, time, |x| self.potential(x))
    }
}

/// Predicted attractor per the basin conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    /// No macroscopic flux from infinity; the rarefaction fan pulls to `v = 0`.
    FanV0,
    /// Influx from the left dominates: attractor slope `v > 0`.
    LeftWins { v: f64 },
    /// Influx from the right dominates: attractor slope `v < 0`.
    RightWins { v: f64 },
    /// The declared slopes sit on or outside the condition boundaries.
    Unclassified,
}

/// Apply the three basin condition sets to declared slope data.
pub fn classify_initial(spec: &InitialData) -> Classification {
    classify_slopes(&spec.slope_data())
}

pub fn classify_slopes(s: &SlopeData) -> Classification {
    // No flux from infinity: liminf_{+inf} W/x >= 0 and limsup_{-inf} <= 0.
    if s.plus.liminf >= 0.0 && s.minus.limsup <= 0.0 {
        return Classification::FanV0;
    }
    // Left influx wins: exact limit v > 0 at -inf, liminf at +inf > -v.
    if s.minus.is_limit() && s.minus.liminf > 0.0 && s.plus.liminf > -s.minus.liminf {
        return Classification::LeftWins { v: s.minus.liminf };
    }
    // Right influx wins: exact limit v < 0 at +inf, limsup at -inf < -v.
    if s.plus.is_limit() && s.plus.liminf < 0.0 && s.minus.limsup < -s.plus.liminf {
        return Classification::RightWins { v: s.plus.liminf };
    }
    Classification::Unclassified
}

/// Monotone map values `M_i = x_i - w_i` of a velocity profile, checked
/// nondecreasing.
fn monotone_map(w: &GridProfile) -> Result<Vec<f64>, AttractionError> {
    let mut m = Vec::with_capacity(w.grid.count);
    for i in 0..w.grid.count {
        let v = w.grid.x(i) - w.values[i];
        if let Some(&prev) = m.last() {
            if v < prev {
                return Err(AttractionError::NotInG(i));
            }
        }
        m.push(v);
    }
    Ok(m)
}

/// `M^{-1}(y) = inf{x : M(x) >= y}` for the piecewise-linear extension of the
/// node values, with unit-slope extrapolation beyond the grid.
fn inverse_map(grid: &GridSpec, m: &[f64], y: f64) -> f64 {
    let n = m.len();
    if y <= m[0] {
        return grid.x(0) - (m[0] - y);
    }
    if y > m[n - 1] {
        return grid.x(n - 1) + (y - m[n - 1]);
    }
    // first index with m[i] >= y; the early return above guarantees i >= 1
    // and m[i-1] < y <= m[i], so the segment has positive slope.
    let mut lo = 0usize;
    let mut hi = n - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if m[mid] >= y {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let i = lo;
    grid.x(i - 1) + grid.h * (y - m[i - 1]) / (m[i] - m[i - 1])
}

/// Metric of locally uniform convergence of inverse monotone maps:
/// `d = sum_{N=1..n_max} 2^{-N} sup_{[-N,N]} |M_u^{-1} - M_w^{-1}| ^ 1`.
/// Truncation error is below `2^{-n_max}`.
pub fn metric_d(u: &GridProfile, w: &GridProfile, n_max: u32) -> Result<f64, AttractionError> {
    let mu = monotone_map(u)?;
    let mw = monotone_map(w)?;
    // |difference| is piecewise linear in y; its sup over [-N, N] is attained
    // at node images or interval ends.
    let mut breaks: Vec<f64> = mu.iter().chain(mw.iter()).copied().collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let diff_at = |y: f64| -> f64 {
        (inverse_map(&u.grid, &mu, y) - inverse_map(&w.grid, &mw, y)).abs()
    };
    let mut d = 0.0f64;
    for big_n in 1..=n_max {
        let r = big_n as f64;
        let mut sup = diff_at(-r).max(diff_at(r));
        let lo = breaks.partition_point(|&b| b < -r);
        let hi = breaks.partition_point(|&b| b <= r);
        for &b in &breaks[lo..hi] {
            sup = sup.max(diff_at(b));
        }
        d += 2f64.powi(-(big_n as i32)) * sup.min(1.0);
    }
    Ok(d)
}

/// Potential profile of a velocity profile: cumulative trapezoid integral
/// pinned to zero at the left edge.
pub fn integrate_velocity(u: &GridProfile) -> GridProfile {
    let mut values = Vec::with_capacity(u.grid.count);
    let mut acc = 0.0;
    values.push(0.0);
    for i in 1..u.grid.count {
        acc += 0.5 * (u.values[i - 1] + u.values[i]) * u.grid.h;
        values.push(acc);
    }
    GridProfile {
        grid: u.grid,
        time: u.time,
        values,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackParams {
    pub policy: GridPolicy,
    pub action: ActionParams,
    /// Horizon for the reference global velocity; must be deeper than every
    /// start time.
    pub reference_horizon: i64,
    pub metric_n_max: u32,
}

impl Default for PullbackParams {
    fn default() -> Self {
        PullbackParams {
            policy: GridPolicy::default(),
            action: ActionParams::default(),
            reference_horizon: -256,
            metric_n_max: 16,
        }
    }
}

/// One pullback measurement: distance at time 0 between the evolved initial
/// data started at `m` and the reference global solution.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PullbackPoint {
    pub m: i64,
    pub d: f64,
    /// Probe slopes of the evolved potential at time 0.
    pub slope_minus: f64,
    pub slope_plus: f64,
    /// Optimizing preimage diagnostic: `y*(m) / m` for the observation point
    /// `x = 0`.
    pub y_star_over_m: f64,
    pub boundary_contact: bool,
}

/// Evolve `spec` from each start time `m` to 0 on the same realization and
/// measure the distance to `u_v(0, .)`.
pub fn pullback_experiment(
    env: &Environment,
    spec: &InitialData,
    v: f64,
    m_list: &[i64],
    params: &PullbackParams,
) -> Result<Vec<PullbackPoint>, AttractionError> {
    let deepest = *m_list.iter().min().ok_or(AttractionError::BadStartTime(0))?;
    if m_list.iter().any(|&m| m >= 0) {
        return Err(AttractionError::BadStartTime(
            *m_list.iter().find(|&&m| m >= 0).unwrap(),
        ));
    }
    if params.reference_horizon >= deepest {
        return Err(AttractionError::ShallowReference {
            reference: params.reference_horizon,
            deepest,
        });
    }
    let mut one_sided = OneSidedParams::new(params.reference_horizon);
    one_sided.policy = params.policy;
    one_sided.action = params.action;
    let reference = OneSidedField::compute(env, v, 0, &one_sided)?;
    let u_ref = reference.velocity(0)?;
    // The metric reads inverse maps on [-n_max, n_max]; the grid must cover
    // that window plus slack for the arriving particles.
    let span = params.metric_n_max as f64 + 4.0;
    let mut out = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let grid = params.policy.build(-span, span, (-m) as u32)?;
        let w_m = spec.sample(grid, m)?;
        let run = evolve(env, &w_m, 0, params.action)?;
        let last_map = run
            .stack
            .map_into(0)
            .expect("at least one step");
        let u0 = velocity_from(&run.profile, last_map);
        let d = metric_d(&u0, &u_ref, params.metric_n_max)?;
        let (slope_minus, slope_plus) = slope_probe(&run.profile);
        let obs_idx = grid.nearest_index(0.0);
        let idx = index_trace(&run.stack, obs_idx);
        let y_star = grid.x(idx[0] as usize);
        // Trust the metric window: its dependency cone must stay interior.
        let lo = grid.nearest_index(-span);
        let hi = grid.nearest_index(span);
        let boundary_contact = window_touches_boundary(&run.stack, lo, hi);
        out.push(PullbackPoint {
            m,
            d,
            slope_minus,
            slope_plus,
            y_star_over_m: y_star / m as f64,
            boundary_contact,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    pub d_tol: f64,
    pub pointwise_tol: f64,
    /// Velocity gap between neighbor nodes above which the limit is treated
    /// as discontinuous there.
    pub discontinuity_gap: f64,
    /// Pointwise probes keep this distance from every limit discontinuity;
    /// a finite sequence cannot be asked to converge arbitrarily close to a
    /// shock that the tail terms still straddle.
    pub probe_margin: f64,
    pub metric_n_max: u32,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        ConvergenceParams {
            d_tol: 0.05,
            pointwise_tol: 1e-2,
            discontinuity_gap: 0.1,
            probe_margin: 0.25,
            metric_n_max: 16,
        }
    }
}

/// Joint record of metric and pointwise convergence of a profile sequence,
/// for checking that the two notions agree. Convergence verdicts look at the
/// trailing quarter of the series, so alternating sequences cannot pass on a
/// lucky last term.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub d_series: Vec<f64>,
    pub pointwise_series: Vec<f64>,
    pub d_converged: bool,
    pub pointwise_converged: bool,
    pub consistent: bool,
}

fn trailing_max(series: &[f64]) -> f64 {
    let tail = (series.len() / 4).max(1);
    series[series.len() - tail..]
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn convergence_equivalence_check(
    sequence: &[GridProfile],
    limit: &GridProfile,
    params: &ConvergenceParams,
) -> Result<ConvergenceReport, AttractionError> {
    monotone_map(limit)?;
    let g = limit.grid;
    let jump_nodes: Vec<usize> = (1..g.count)
        .filter(|&i| (limit.values[i] - limit.values[i - 1]).abs() > params.discontinuity_gap)
        .collect();
    let probes: Vec<usize> = (0..g.count)
        .filter(|&i| {
            jump_nodes
                .iter()
                .all(|&j| (g.x(i) - g.x(j)).abs() > params.probe_margin)
        })
        .collect();
    let mut d_series = Vec::with_capacity(sequence.len());
    let mut pointwise_series = Vec::with_capacity(sequence.len());
    for w in sequence {
        d_series.push(metric_d(w, limit, params.metric_n_max)?);
        let worst = probes
            .iter()
            .map(|&i| (w.interp(g.x(i)) - limit.values[i]).abs())
            .fold(0.0, f64::max);
        pointwise_series.push(worst);
    }
    let d_converged = !d_series.is_empty() && trailing_max(&d_series) <= params.d_tol;
    let pointwise_converged =
        !pointwise_series.is_empty() && trailing_max(&pointwise_series) <= params.pointwise_tol;
    Ok(ConvergenceReport {
        d_series,
        pointwise_series,
        d_converged,
        pointwise_converged,
        consistent: d_converged == pointwise_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::KeyedRng;

    fn velocity(grid: GridSpec, f: impl Fn(f64) -> f64) -> GridProfile {
        GridProfile::from_fn(grid, 0, f).unwrap()
    }

    fn g() -> GridSpec {
        GridSpec::new(-40.0, 1.0 / 32.0, 2561).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_initial(&InitialData::Zero), Classification::FanV0);
        assert_eq!(
            classify_initial(&InitialData::Linear { v: 0.7 }),
            Classification::LeftWins { v: 0.7 }
        );
        assert_eq!(
            classify_initial(&InitialData::Linear { v: -0.4 }),
            Classification::RightWins { v: -0.4 }
        );
        assert_eq!(
            classify_initial(&InitialData::TwoSlope {
                x0: 0.0,
                v_minus: -1.0,
                v_plus: 1.0
            }),
            Classification::FanV0
        );
        // converging tails with positive left slope: left influx wins
        assert_eq!(
            classify_initial(&InitialData::TwoSlope {
                x0: 2.0,
                v_minus: 0.5,
                v_plus: -0.25
            }),
            Classification::LeftWins { v: 0.5 }
        );
        // boundary of condition (10): liminf at +inf equals -v exactly
        assert_eq!(
            classify_initial(&InitialData::TwoSlope {
                x0: 0.0,
                v_minus: 0.5,
                v_plus: -0.5
            }),
            Classification::Unclassified
        );
    }

    #[test]
    fn metric_identity_and_shift() {
        let w = velocity(g(), |x| 0.2 * (x * 0.1).sin());
        assert_eq!(metric_d(&w, &w, 16).unwrap(), 0.0);

        let u = velocity(g(), |_| 0.0);
        let c = 0.4;
        let wc = velocity(g(), move |_| c);
        // M differ by the constant shift c: d_N = |c| ^ 1 for every N
        let d = metric_d(&u, &wc, 16).unwrap();
        let want = c * (1.0 - 2f64.powi(-16));
        assert!((d - want).abs() < 1e-10, "{d} vs {want}");
    }

    #[test]
    fn metric_axioms_on_random_g_profiles() {
        let mut rng = KeyedRng::for_stream(8, 1);
        let grid = GridSpec::new(-30.0, 1.0 / 16.0, 961).unwrap();
        let mut random_g = |rng: &mut KeyedRng| -> GridProfile {
            // build a monotone map with increments in (0, 2h] and recover u
            let mut m = Vec::with_capacity(grid.count);
            let mut acc = grid.x(0) - 0.5 + rng.next_f64();
            for _ in 0..grid.count {
                acc += 2.0 * grid.h * rng.next_f64();
                m.push(acc);
            }
            let values = (0..grid.count).map(|i| grid.x(i) - m[i]).collect();
            GridProfile {
                grid,
                time: 0,
                values,
            }
        };
        for _ in 0..10 {
            let a = random_g(&mut rng);
            let b = random_g(&mut rng);
            let c = random_g(&mut rng);
            let dab = metric_d(&a, &b, 12).unwrap();
            let dba = metric_d(&b, &a, 12).unwrap();
            assert_eq!(dab.to_bits(), dba.to_bits(), "symmetry");
            assert!(dab >= 0.0);
            let dac = metric_d(&a, &c, 12).unwrap();
            let dcb = metric_d(&c, &b, 12).unwrap();
            assert!(dab <= dac + dcb + 1e-12, "triangle");
        }
    }

    #[test]
    fn metric_rejects_non_monotone() {
        let grid = GridSpec::new(0.0, 1.0, 3).unwrap();
        let bad = GridProfile::new(grid, 0, vec![0.0, 0.0, 1.5]).unwrap();
        let ok = GridProfile::new(grid, 0, vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            metric_d(&bad, &ok, 4),
            Err(AttractionError::NotInG(_))
        ));
    }

    #[test]
    fn moving_step_converges_in_d_but_not_at_the_shock() {
        // steps at 1/k approach the step at 0: pointwise at every x != 0,
        // hence in d; the shock node itself never converges.
        let grid = GridSpec::new(-20.0, 1.0 / 64.0, 2561).unwrap();
        let limit = velocity(grid, |x| if x < 0.0 { 0.5 } else { -0.5 });
        let seq: Vec<GridProfile> = (1..=64)
            .map(|k| {
                let s = 1.0 / k as f64;
                velocity(grid, move |x| if x < s { 0.5 } else { -0.5 })
            })
            .collect();
        let report =
            convergence_equivalence_check(&seq, &limit, &ConvergenceParams::default()).unwrap();
        assert!(
            report.d_converged,
            "d tail {:?}",
            &report.d_series[60..]
        );
        assert!(report.pointwise_converged);
        assert!(report.consistent);
        // d decreases roughly like the step location
        assert!(report.d_series[63] < report.d_series[0] / 4.0);
    }

    #[test]
    fn oscillating_heights_stay_apart() {
        let grid = GridSpec::new(-20.0, 1.0 / 64.0, 2561).unwrap();
        let limit = velocity(grid, |x| if x < 0.0 { 0.5 } else { -0.5 });
        let seq: Vec<GridProfile> = (1..=16)
            .map(|k| {
                let hi = if k % 2 == 0 { 0.5 } else { 0.25 };
                velocity(grid, move |x| if x < 0.0 { hi } else { -hi })
            })
            .collect();
        let report =
            convergence_equivalence_check(&seq, &limit, &ConvergenceParams::default()).unwrap();
        assert!(!report.d_converged);
        assert!(!report.pointwise_converged);
        assert!(report.consistent);
        // the odd terms keep a fixed distance
        assert!(report.d_series[14] > 0.05);
    }

    #[test]
    fn small_monotone_perturbations_bound_d() {
        let grid = GridSpec::new(-20.0, 1.0 / 32.0, 1281).unwrap();
        let limit = velocity(grid, |x| 0.3 * (0.2 * x).sin());
        let mut rng = KeyedRng::for_stream(4, 9);
        for k in 1..=6 {
            let eps = 0.5f64.powi(k);
            // perturb the monotone map by at most eps, keeping monotonicity:
            // shift M by a slowly varying bounded field
            let phase = rng.next_f64() * 10.0;
            let w = velocity(grid, |x| {
                limit.interp(x) + eps * (0.05 * x + phase).sin()
            });
            let d = metric_d(&w, &limit, 16).unwrap();
            // |M^-1| shifts by at most eps / min-slope; slopes here are ~1
            assert!(d <= 3.0 * eps, "eps {eps}: d {d}");
        }
    }

    #[test]
    fn integrate_velocity_recovers_linear_potential() {
        let grid = GridSpec::new(0.0, 0.25, 9).unwrap();
        let u = velocity(grid, |_| 0.5);
        let w = integrate_velocity(&u);
        for i in 0..grid.count {
            assert!((w.values[i] - 0.5 * (grid.x(i) - grid.x(0))).abs() < 1e-12);
        }
    }

    #[test]
    fn pullback_zero_env_is_exact_fixed_point() {
        let env = Environment::zero();
        let mut params = PullbackParams::default();
        params.policy.r_width = 1.0;
        params.reference_horizon = -64;
        let pts =
            pullback_experiment(&env, &InitialData::Zero, 0.0, &[-4, -8, -16], &params).unwrap();
        for p in &pts {
            assert_eq!(p.d, 0.0, "m = {}", p.m);
            assert_eq!(p.y_star_over_m, 0.0);
            assert!(!p.boundary_contact);
        }
    }

    #[test]
    fn pullback_rejects_bad_times() {
        let env = Environment::zero();
        let params = PullbackParams::default();
        assert!(pullback_experiment(&env, &InitialData::Zero, 0.0, &[4], &params).is_err());
        let mut shallow = params;
        shallow.reference_horizon = -8;
        assert!(
            pullback_experiment(&env, &InitialData::Zero, 0.0, &[-16], &shallow).is_err()
        );
    }
}
