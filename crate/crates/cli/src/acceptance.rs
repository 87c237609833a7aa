//! Acceptance battery: one callable check per release criterion, with every
//! tolerance pinned here. The `verify` subcommand and the `acceptance`
//! integration suite both run these.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use kickwave_core::action::ActionParams;
use kickwave_core::attraction::{pullback_experiment, InitialData, PullbackParams};
use kickwave_core::busemann::{BusemannCtx, BusemannParams};
use kickwave_core::environment::{Environment, EnvironmentConfig};
use kickwave_core::grid::{GridPolicy, GridProfile, GridSpec};
use kickwave_core::hopf_lax::{evolve, evolve_one, quadratic_envelope, slope_probe};
use kickwave_core::minimizers::{
    crossing_check, index_trace, one_sided_approx, window_touches_boundary, OneSidedField,
    OneSidedParams,
};
use kickwave_core::rng::KeyedRng;
use kickwave_core::shape::{
    concentration_tail, estimate_alpha, excursion_tail, p_independence_check,
    point_action, point_action_between, quadratic_law_check, sample_point_actions,
    shear_action_identity, PointActionParams,
};
use kickwave_core::stats;

use crate::config::{derive_seeds, RunConfig};
use crate::experiments::{fixed_point_gap, metric_battery, run};

pub const CRITERIA: [(u32, &str); 13] = [
    (1, "envelope oracle"),
    (2, "exhaustive path oracle"),
    (3, "zero-forcing analytics"),
    (4, "shear identities"),
    (5, "quadratic shape law"),
    (6, "cocycle and slope invariance"),
    (7, "minimizer properties"),
    (8, "concentration and excursion tails"),
    (9, "busemann algebra"),
    (10, "global solution fixed point"),
    (11, "pullback attraction"),
    (12, "metric module"),
    (13, "reproducibility across workers"),
];

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "ACCEPTANCE {:>2} {:<34} {}  ({:.1}s) {}",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

/// Run one criterion. `scratch` is only used by the reproducibility check,
/// which writes real experiment outputs.
pub fn run_criterion(id: u32, scratch: &Path) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, n)| *n)
        .unwrap_or("unknown");
    let start = Instant::now();
    let (pass, detail) = match id {
        1 => c1_envelope_oracle(),
        2 => c2_exhaustive_oracle(),
        3 => c3_zero_forcing(),
        4 => c4_shear_identities(),
        5 => c5_quadratic_law(),
        6 => c6_cocycle_and_slopes(),
        7 => c7_minimizers(),
        8 => c8_tails(),
        9 => c9_busemann_algebra(),
        10 => c10_fixed_point(),
        11 => c11_pullback(),
        12 => c12_metric(),
        13 => c13_reproducibility(scratch),
        _ => (false, format!("unknown criterion {id}")),
    };
    let seconds = start.elapsed().as_secs_f64();
    // stated runtime budgets are part of the gate
    let budget = match id {
        1 => Some(10.0),
        2 => Some(30.0),
        3 => Some(5.0),
        4 => Some(120.0),
        5 => Some(1800.0),
        8 => Some(3600.0),
        _ => None,
    };
    let (pass, detail) = match budget {
        Some(b) if seconds >= b => (false, format!("{detail}; exceeded {b}s budget")),
        _ => (pass, detail),
    };
    CriterionResult {
        id,
        name,
        pass,
        detail,
        seconds,
    }
}

fn default_point_params() -> PointActionParams {
    PointActionParams::default()
}

// 1. quadratic_envelope equals the naive O(N^2) minimum within 1e-12
//    relative on 200 random inputs at N = 4096; argmin nondecreasing.
fn c1_envelope_oracle() -> (bool, String) {
    let n = 4096usize;
    let grid = GridSpec::new(-32.0, 1.0 / 64.0, n).unwrap();
    let results: Vec<(f64, bool)> = (0..200u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = KeyedRng::for_stream(0xace0 + trial, 1);
            let v: Vec<f64> = (0..n).map(|_| 50.0 * rng.next_f64() - 25.0).collect();
            let (u, a) = quadratic_envelope(&v, &grid);
            let monotone = a.windows(2).all(|w| w[0] <= w[1]);
            let mut worst = 0.0f64;
            for i in 0..n {
                let x = grid.x(i);
                let mut best = f64::INFINITY;
                for (j, &vj) in v.iter().enumerate() {
                    let d = x - grid.x(j);
                    let c = vj + 0.5 * d * d;
                    if c < best {
                        best = c;
                    }
                }
                worst = worst.max((u[i] - best).abs() / (1.0 + best.abs()));
            }
            (worst, monotone)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let monotone = results.iter().all(|r| r.1);
    (
        worst <= 1e-12 && monotone,
        format!("worst relative gap {worst:.2e}, argmin monotone: {monotone}"),
    )
}

// 2. evolve + trace_back equals brute-force enumeration over all grid paths
//    (<= 15 nodes, <= 4 steps, 50 random environments) within 1e-12.
fn c2_exhaustive_oracle() -> (bool, String) {
    let grid = GridSpec::new(-1.5, 0.25, 13).unwrap();
    let steps = 4usize;
    let failures: Vec<String> = (0..50u64)
        .into_par_iter()
        .filter_map(|trial| {
            let seed = KeyedRng::for_stream(0xbead, trial).next_u64();
            let env = Environment::new(EnvironmentConfig::default().with_seed(seed)).unwrap();
            let p = if trial % 2 == 0 { 1.0 } else { 0.5 };
            let mut vrng = KeyedRng::for_stream(seed, 3);
            let w0 = GridProfile::new(
                grid,
                0,
                (0..grid.count).map(|_| 2.0 * vrng.next_f64() - 1.0).collect(),
            )
            .unwrap();
            let run = evolve(&env, &w0, steps as i64, ActionParams::new(p)).unwrap();
            let f: Vec<Vec<f64>> = (0..=steps)
                .map(|k| (0..grid.count).map(|j| env.potential(k as i64, grid.x(j))).collect())
                .collect();
            let cost_of = |path: &[usize]| -> f64 {
                let mut cost = w0.values[path[0]];
                for k in 0..steps {
                    let d = grid.x(path[k + 1]) - grid.x(path[k]);
                    cost += 0.5 * d * d + p * f[k][path[k]] + (1.0 - p) * f[k + 1][path[k + 1]];
                }
                cost
            };
            for terminal in [0usize, 4, 6, 8, 12] {
                let mut best = f64::INFINITY;
                let mut runner_up = f64::INFINITY;
                let mut best_path = vec![0usize; steps + 1];
                let mut counters = vec![0usize; steps];
                let mut path = vec![0usize; steps + 1];
                path[steps] = terminal;
                'outer: loop {
                    path[..steps].copy_from_slice(&counters);
                    let cost = cost_of(&path);
                    if cost < best {
                        runner_up = best;
                        best = cost;
                        best_path.copy_from_slice(&path);
                    } else if cost < runner_up {
                        runner_up = cost;
                    }
                    let mut i = steps;
                    loop {
                        if i == 0 {
                            break 'outer;
                        }
                        i -= 1;
                        counters[i] += 1;
                        if counters[i] < grid.count {
                            break;
                        }
                        counters[i] = 0;
                    }
                }
                let tol = 1e-12 * (1.0 + best.abs());
                let got = run.profile.values[terminal];
                if (got - best).abs() > tol {
                    return Some(format!("trial {trial} terminal {terminal}: value gap"));
                }
                // The traced path must realize the optimum. Node-for-node
                // equality is only demanded when the optimum is isolated:
                // exact cost ties (forcing vanishing at all differing nodes)
                // are broken by convention, legitimately differently.
                let traced: Vec<usize> = index_trace(&run.stack, terminal)
                    .iter()
                    .map(|&j| j as usize)
                    .collect();
                if (cost_of(&traced) - best).abs() > tol {
                    return Some(format!("trial {trial} terminal {terminal}: traced suboptimal"));
                }
                if runner_up - best > 1e-9 && traced != best_path {
                    return Some(format!("trial {trial} terminal {terminal}: path gap"));
                }
            }
            None
        })
        .collect();
    (
        failures.is_empty(),
        if failures.is_empty() {
            "50 environments, values and paths exact".into()
        } else {
            failures.join("; ")
        },
    )
}

// 3. Zero forcing: one-step transform of x^2/2 equals x^2/4 within h^2/4 on
//    the interior; alpha(v) = v^2/2 with zero spread; u_v identically v.
fn c3_zero_forcing() -> (bool, String) {
    let env = Environment::zero();
    let h = 1.0 / 64.0;
    let grid = GridSpec::new(-4.0, h, 513).unwrap();
    let w = GridProfile::from_fn(grid, 0, |x| 0.5 * x * x).unwrap();
    let (u, _, _) = evolve_one(&env, &w, ActionParams::default()).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut below = false;
    for i in 0..grid.count {
        let x = grid.x(i);
        if x.abs() > 2.0 {
            continue;
        }
        let err = u.values[i] - 0.25 * x * x;
        below |= err < -1e-12;
        worst = worst.max(err);
    }
    let envelope_ok = !below && worst <= 0.25 * h * h + 1e-12;

    let cfg = EnvironmentConfig {
        intensity: 0.0,
        ..Default::default()
    };
    let params = default_point_params();
    let mut alpha_ok = true;
    for &v in &[0.0, 0.5, 1.0] {
        let est = estimate_alpha(&cfg, &[1, 2, 3, 4], v, 16, &params).unwrap();
        alpha_ok &= est.mean == v * v / 2.0 && est.stderr == 0.0;
    }

    let mut u_ok = true;
    for &v in &[0.0, 0.5] {
        let field = OneSidedField::compute(&env, v, 0, &OneSidedParams::new(-16)).unwrap();
        let uv = field.velocity(0).unwrap();
        u_ok &= uv.values.iter().all(|&x| x == v);
    }
    (
        envelope_ok && alpha_ok && u_ok,
        format!(
            "envelope excess {worst:.2e} (cap {:.2e}), alpha exact: {alpha_ok}, u_v exact: {u_ok}",
            0.25 * h * h
        ),
    )
}

// 4. Environment shear is bit-exact on dyadic relabelings; the action shear
//    identity holds to 1e-6 over 20 random (a, w) at n = 64.
fn c4_shear_identities() -> (bool, String) {
    let mut bit_exact = true;
    for seed in 0..5u64 {
        let env = Environment::new(EnvironmentConfig::default().with_seed(seed)).unwrap();
        let (a, v) = (1.5, -0.25);
        let sheared = env.shear(a, v);
        for n in -3i64..4 {
            for k in -8..8 {
                let x = k as f64 * 0.375;
                let lhs = sheared.potential(n, x + a + v * n as f64);
                let rhs = env.potential(n, x);
                bit_exact &= lhs.to_bits() == rhs.to_bits();
            }
        }
    }
    let params = default_point_params();
    let diffs: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = KeyedRng::for_stream(0x54ea4, trial);
            let env = Environment::new(
                EnvironmentConfig::default().with_seed(rng.next_u64()),
            )
            .unwrap();
            let a = 2.0 * rng.next_f64() - 1.0;
            let w = 2.0 * rng.next_f64() - 1.0;
            let x0 = rng.next_f64() - 0.5;
            let x1 = rng.next_f64() - 0.5;
            let r = shear_action_identity(&env, 64, x0, x1, a, w, &params).unwrap();
            (r.diff.abs(), r.dp_gap.abs())
        })
        .collect();
    let worst = diffs.iter().map(|d| d.0).fold(0.0, f64::max);
    let worst_dp = diffs.iter().map(|d| d.1).fold(0.0, f64::max);
    (
        bit_exact && worst <= 1e-6,
        format!(
            "relabeling bit-exact: {bit_exact}, worst identity gap {worst:.2e}, worst independent-DP basin gap {worst_dp:.2e}"
        ),
    )
}

// 5. Quadratic shape law at v in {0, 0.5, 1}, n = 128, 200 replicas,
//    h = 2^-6: |alpha(v) - alpha(0) - v^2/2| <= 3 (stderr_v + stderr_0) + h,
//    and the p = 0 / p = 1 estimators agree within 3 paired standard errors.
fn c5_quadratic_law() -> (bool, String) {
    let cfg = EnvironmentConfig::default().with_seed(0x20250809);
    let seeds = derive_seeds(cfg.master_seed, 200);
    let params = default_point_params();
    let n = 128;
    let ests: Vec<_> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&v| estimate_alpha(&cfg, &seeds, v, n, &params).unwrap())
        .collect();
    let report = quadratic_law_check(&ests, params.policy.h, 1.0).unwrap();
    let mut detail = String::new();
    for row in &report.rows {
        let _ = write!(
            detail,
            "v={}: residual {:+.4e} (cap {:.2e}); ",
            row.v, row.residual, row.threshold
        );
    }
    let mut p_ok = true;
    for &v in &[0.0, 0.5, 1.0] {
        let rep = p_independence_check(&cfg, &seeds, v, n, &params).unwrap();
        p_ok &= rep.pass;
        let _ = write!(
            detail,
            "p-diff v={v}: {:+.3e} (3se {:.2e}); ",
            rep.mean_diff,
            3.0 * rep.paired_stderr
        );
    }
    let flagged: u32 = ests.iter().map(|e| e.boundary_flags).sum();
    let _ = write!(detail, "boundary flags {flagged}");
    (report.pass && p_ok && flagged == 0, detail)
}

// 6. Cocycle split equality to 1e-10 and slope-probe invariance within
//    2h + 1e-3 over 50 random runs at horizon 32, absent boundary flags.
fn c6_cocycle_and_slopes() -> (bool, String) {
    let horizon = 32i64;
    // The probes estimate slopes at infinity; the accumulated forcing noise
    // in a least-squares slope falls off like window^(-3/2), so the domain
    // is sized well beyond the default policy.
    let policy = GridPolicy {
        h: 1.0 / 64.0,
        r_width: 60.0,
        margin: 2.0,
    };
    // contamination from the open boundary travels at most a few units per
    // step; probes live on a window inset by 4 units per step
    let cut = 4.0 * horizon as f64;
    let tol = 2.0 * policy.h + 1e-3;

    let mut worst_cocycle = 0.0f64;
    for seed in 0..10u64 {
        let env = Environment::new(EnvironmentConfig::default().with_seed(seed)).unwrap();
        let grid = policy.build(0.0, 0.0, horizon as u32).unwrap();
        let w0 = GridProfile::from_fn(grid, 0, |x| 0.25 * x.abs()).unwrap();
        let full = evolve(&env, &w0, horizon, ActionParams::default()).unwrap();
        let first = evolve(&env, &w0, horizon / 2, ActionParams::default()).unwrap();
        let second = evolve(&env, &first.profile, horizon, ActionParams::default()).unwrap();
        for i in 0..grid.count {
            worst_cocycle =
                worst_cocycle.max((full.profile.values[i] - second.profile.values[i]).abs());
        }
    }

    let runs: Vec<(bool, f64)> = (0..50u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = KeyedRng::for_stream(0x510be, trial);
            let env = Environment::new(
                EnvironmentConfig::default().with_seed(rng.next_u64()),
            )
            .unwrap();
            // inward-flowing dyadic tails keep minimizers inside the domain
            let v_minus = -((rng.next_u64() % 17) as f64) / 16.0;
            let v_plus = ((rng.next_u64() % 17) as f64) / 16.0;
            let grid = policy.build(0.0, 0.0, horizon as u32).unwrap();
            let w0 = GridProfile::from_fn(grid, 0, |x| {
                if x < 0.0 {
                    v_minus * x
                } else {
                    v_plus * x
                }
            })
            .unwrap();
            let run = evolve(&env, &w0, horizon, ActionParams::default()).unwrap();
            let lo = grid.nearest_index(grid.x_min + cut);
            let hi = grid.nearest_index(grid.x_max() - cut);
            let flagged = window_touches_boundary(&run.stack, lo, hi);
            let before = slope_probe(&w0.slice(lo, hi).unwrap());
            let after = slope_probe(&run.profile.slice(lo, hi).unwrap());
            let dev = (before.0 - after.0).abs().max((before.1 - after.1).abs());
            (flagged, dev)
        })
        .collect();
    let flagged = runs.iter().filter(|r| r.0).count();
    let worst_slope = runs
        .iter()
        .filter(|r| !r.0)
        .map(|r| r.1)
        .fold(0.0, f64::max);
    let pass = worst_cocycle <= 1e-10 && flagged <= 10 && worst_slope <= tol;
    (
        pass,
        format!(
            "cocycle gap {worst_cocycle:.2e}, slope drift {worst_slope:.4} (cap {tol:.4}), {flagged}/50 flagged"
        ),
    )
}

// 7. Refinement reaches 1e-8 stationarity on >= 99% of grid-optimal traces;
//    ordered endpoints give ordered traces; refined distinct minimizers
//    sharing an endpoint never cross (100 seeds).
fn c7_minimizers() -> (bool, String) {
    let params = default_point_params();
    let refined: usize = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let env =
                Environment::new(EnvironmentConfig::default().with_seed(0xabc + seed)).unwrap();
            let r = point_action(&env, 32, 0.25, &params).unwrap();
            (r.trace.refined && r.trace.el_res <= 1e-8) as usize
        })
        .sum();

    let order_violations: usize = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let env =
                Environment::new(EnvironmentConfig::default().with_seed(0xde0 + seed)).unwrap();
            let field =
                OneSidedField::compute(&env, 0.0, 0, &OneSidedParams::new(-32)).unwrap();
            let mut violations = 0usize;
            let mut prev: Option<Vec<f64>> = None;
            for k in -4..=4 {
                let t = field.trace(0, 0.25 * k as f64, false).unwrap();
                if let Some(p) = &prev {
                    violations += p
                        .iter()
                        .zip(&t.path.positions)
                        .filter(|(a, b)| a > b)
                        .count();
                }
                prev = Some(t.path.positions.clone());
            }
            violations
        })
        .sum();

    // Two refined minimizers of the same problem sharing their start
    // endpoint must not cross in the interior. Minimizers may coincide along
    // a shared early segment, where refinement noise flips the sign of a
    // ~1e-12 gap; a crossing only counts when the gap traverses the 2h
    // distinctness floor.
    let floor = 2.0 * params.policy.h;
    let crossings: usize = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let env =
                Environment::new(EnvironmentConfig::default().with_seed(0xc0a + seed)).unwrap();
            let left = point_action_between(&env, (0, 0.0), (32, -0.5), &params).unwrap();
            let right = point_action_between(&env, (0, 0.0), (32, 0.5), &params).unwrap();
            let mut sign = 0i8;
            let mut flips = 0usize;
            for t in 1..32i64 {
                let d = right.trace.path.at(t).unwrap() - left.trace.path.at(t).unwrap();
                if d.abs() <= floor {
                    continue;
                }
                let s = if d > 0.0 { 1 } else { -1 };
                if sign != 0 && s != sign {
                    flips += 1;
                }
                sign = s;
            }
            flips
        })
        .sum();

    let pass = refined >= 99 && order_violations == 0 && crossings == 0;
    (
        pass,
        format!(
            "refined {refined}/100, order violations {order_violations}, crossings {crossings}"
        ),
    )
}

// 8. At n = 256 with 500 replicas, the fitted slope of the log action tail
//    against u / (sqrt(n) ln n) is negative with the 95% CI excluding zero,
//    and likewise for the excursion tail against u^2 / n.
fn c8_tails() -> (bool, String) {
    let cfg = EnvironmentConfig::default().with_seed(0x7a11);
    let seeds = derive_seeds(cfg.master_seed, 500);
    let n = 256;
    let params = default_point_params();
    let samples = sample_point_actions(&cfg, &seeds, 0.0, n, &params).unwrap();
    let conc = concentration_tail(&samples, n, None);
    let exc = excursion_tail(&samples, n, None);
    let conc_fit = conc.fit.expect("enough tail points");
    let exc_fit = exc.fit.expect("enough tail points");
    let flagged = samples.iter().filter(|s| s.boundary_contact).count();
    let pass = conc_fit.ci95_hi < 0.0 && exc_fit.ci95_hi < 0.0 && flagged == 0;
    (
        pass,
        format!(
            "action slope {:.3} (CI hi {:.3}), excursion slope {:.3} (CI hi {:.3}), flagged {flagged}",
            conc_fit.slope, conc_fit.ci95_hi, exc_fit.slope, exc_fit.ci95_hi
        ),
    )
}

// 9. Busemann algebra at horizon 256, h = 2^-6, 50 seeds: anti-symmetry and
//    additivity within 2e-2 on paired (same-field) estimates, and
//    B <= A + 1e-2 on every reliable sample. Seeds whose traces never meet
//    the pairing criterion within the horizon are flagged unreliable and
//    excluded, per the estimator's own contract; horizon stability across
//    -256 vs -224 is reported but not gated (branch selection at shocks may
//    legitimately flip between horizons).
fn c9_busemann_algebra() -> (bool, String) {
    struct SeedOut {
        reliable: bool,
        anti: f64,
        addi: f64,
        ub: f64,
        horizon_shift: f64,
    }
    let results: Vec<SeedOut> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let env =
                Environment::new(EnvironmentConfig::default().with_seed(0xb5e + seed)).unwrap();
            let deep = BusemannCtx::new(&env, 0.0, 4, BusemannParams::new(-256)).unwrap();
            let p1 = (0i64, -0.5);
            let p2 = (1i64, 0.25);
            let p3 = (2i64, 0.5);
            let b13 = deep.estimate(p1, p3).unwrap();
            let b31 = deep.estimate(p3, p1).unwrap();
            let b12 = deep.estimate(p1, p2).unwrap();
            let b23 = deep.estimate(p2, p3).unwrap();
            let reliable =
                b13.reliable && b31.reliable && b12.reliable && b23.reliable;
            let a = point_action_between(&env, p1, p3, &default_point_params())
                .unwrap()
                .value;
            let shallow = BusemannCtx::new(&env, 0.0, 4, BusemannParams::new(-224)).unwrap();
            let b13_shallow = shallow.estimate(p1, p3).unwrap();
            SeedOut {
                reliable,
                anti: (b13.value + b31.value).abs(),
                addi: (b13.value - b12.value - b23.value).abs(),
                ub: b13.value - a,
                horizon_shift: (b13.value - b13_shallow.value).abs(),
            }
        })
        .collect();
    let reliable: Vec<&SeedOut> = results.iter().filter(|r| r.reliable).collect();
    let n_reliable = reliable.len();
    let worst_anti = reliable.iter().map(|r| r.anti).fold(0.0, f64::max);
    let worst_addi = reliable.iter().map(|r| r.addi).fold(0.0, f64::max);
    let worst_ub = reliable
        .iter()
        .map(|r| r.ub)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut shifts: Vec<f64> = reliable.iter().map(|r| r.horizon_shift).collect();
    shifts.sort_by(f64::total_cmp);
    let shift_median = stats::quantile(&shifts, 0.5);
    let pass =
        n_reliable >= 45 && worst_anti <= 2e-2 && worst_addi <= 2e-2 && worst_ub <= 1e-2;
    (
        pass,
        format!(
            "{n_reliable}/50 reliable; antisymmetry {worst_anti:.2e}, additivity {worst_addi:.2e}, B - A max {worst_ub:+.2e}; horizon-shift median {shift_median:.2e} (reported)"
        ),
    )
}

// 10. The global potential is a fixed point of the one-step evolution to
//     1e-2 over a window of 8 times (20 seeds), and the mean spatial
//     increment of u_v is within 3 SE of v for v in {0, 0.5}.
fn c10_fixed_point() -> (bool, String) {
    let h = 1.0f64 / 64.0;
    let window = (-2.0f64, 2.0f64);
    let pad = 6.0f64;
    let lo = ((window.0 - pad) / h).floor() * h;
    let count = ((window.1 + pad - lo) / h).ceil() as usize + 1;
    let ugrid = GridSpec::new(lo, h, count).unwrap();
    let gaps: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let env =
                Environment::new(EnvironmentConfig::default().with_seed(0xf1f + seed)).unwrap();
            let ctx = BusemannCtx::new(&env, 0.0, 8, BusemannParams::new(-256)).unwrap();
            let mut potentials = Vec::new();
            for t in 0..=8i64 {
                potentials.push(ctx.global_potential(t, &ugrid).unwrap().0);
            }
            let mut worst = 0.0f64;
            for w in potentials.windows(2) {
                let gap =
                    fixed_point_gap(&env, &w[0], &w[1], window, ActionParams::default()).unwrap();
                worst = worst.max(gap);
            }
            worst
        })
        .collect();
    let worst_gap = gaps.iter().copied().fold(0.0, f64::max);

    let mut increment_ok = true;
    let mut incr_detail = String::new();
    for &v in &[0.0, 0.5] {
        let means: Vec<f64> = (0..20u64)
            .into_par_iter()
            .map(|seed| {
                let env = Environment::new(
                    EnvironmentConfig::default().with_seed(0x111 + seed),
                )
                .unwrap();
                let field =
                    OneSidedField::compute(&env, v, 0, &OneSidedParams::new(-128)).unwrap();
                let u = field.velocity(0).unwrap();
                let lo = u.grid.nearest_index(-2.0);
                let hi = u.grid.nearest_index(2.0);
                stats::mean(&u.values[lo..=hi])
            })
            .collect();
        let mean = stats::mean(&means);
        let se = stats::stderr(&means);
        increment_ok &= (mean - v).abs() <= 3.0 * se;
        let _ = write!(incr_detail, "v={v}: mean {mean:.4} (3se {:.4}); ", 3.0 * se);
    }
    let pass = worst_gap <= 1e-2 && increment_ok;
    (
        pass,
        format!("worst fixed-point gap {worst_gap:.3e} (cap 1e-2); {incr_detail}"),
    )
}

// 11. Pullback attraction of w = 0 toward u_0: the median distance over 30
//     seeds is nonincreasing over m in {-16,-32,-64,-128}, the final median
//     is at most half the first, and the preimage slope at m = -128 has
//     median magnitude <= 0.1.
fn c11_pullback() -> (bool, String) {
    let m_list = [-16i64, -32, -64, -128];
    let params = PullbackParams {
        policy: GridPolicy::default(),
        action: ActionParams::default(),
        reference_horizon: -256,
        metric_n_max: 16,
    };
    let per_seed: Vec<_> = (0..30u64)
        .into_par_iter()
        .map(|seed| {
            let env =
                Environment::new(EnvironmentConfig::default().with_seed(0x9c + seed)).unwrap();
            pullback_experiment(&env, &InitialData::Zero, 0.0, &m_list, &params).unwrap()
        })
        .collect();
    let mut medians = Vec::new();
    let mut y_meds = Vec::new();
    for idx in 0..m_list.len() {
        let mut ds: Vec<f64> = per_seed.iter().map(|pts| pts[idx].d).collect();
        ds.sort_by(f64::total_cmp);
        medians.push(stats::quantile(&ds, 0.5));
        let mut ys: Vec<f64> = per_seed.iter().map(|pts| pts[idx].y_star_over_m).collect();
        ys.sort_by(f64::total_cmp);
        y_meds.push(stats::quantile(&ys, 0.5));
    }
    let nonincreasing = medians.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let halved = medians[3] <= 0.5 * medians[0];
    let slope_ok = y_meds[3].abs() <= 0.1;
    let pass = nonincreasing && halved && slope_ok;
    (
        pass,
        format!(
            "median d {:?}, median y*/m at -128: {:+.3}",
            medians
                .iter()
                .map(|d| format!("{d:.4}"))
                .collect::<Vec<_>>(),
            y_meds[3]
        ),
    )
}

// 12. Metric axioms to 1e-12 on random G-valid triples; the equivalence
//     families behave as the convergence lemma demands.
fn c12_metric() -> (bool, String) {
    let b = metric_battery(0xd157, 50, 16).unwrap();
    let pass = b.axioms_pass
        && b.moving.d_converged
        && b.moving.pointwise_converged
        && b.moving.consistent
        && !b.oscillating.d_converged
        && !b.oscillating.pointwise_converged
        && b.oscillating.consistent;
    (
        pass,
        format!(
            "{}; moving steps converge: {}, oscillating heights converge: {}",
            b.detail, b.moving.d_converged, b.oscillating.d_converged
        ),
    )
}

// 13. The shape experiment produces identical seeds and output digests on
//     1, 2, and 8 workers.
fn c13_reproducibility(scratch: &Path) -> (bool, String) {
    let cfg = RunConfig::parse(
        r#"
        [environment]
        master_seed = 7
        [experiment]
        kind = "shape"
        v_list = [0.0, 0.5]
        n = 32
        seed_spec = { replicas = 16 }
        "#,
    )
    .unwrap();
    let mut identities = Vec::new();
    for workers in [1usize, 2, 8] {
        let dir = scratch.join(format!("repro_w{workers}"));
        let outcome = run(&cfg, &dir, workers).unwrap();
        identities.push(outcome.manifest.reproducible_identity());
    }
    let all_equal = identities.windows(2).all(|w| w[0] == w[1]);
    (
        all_equal,
        format!(
            "result digest {} on 1/2/8 workers, identical: {all_equal}",
            &identities[0].3[..16]
        ),
    )
}
