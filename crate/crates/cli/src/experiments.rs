//! Experiment drivers behind the CLI subcommands. Every run writes its
//! outputs plus a manifest binding them to the config and seeds; all
//! cross-replica reductions run in a fixed order so the digests do not
//! depend on the worker count.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::json;

use kickwave_core::action::ActionParams;
use kickwave_core::attraction::{
    convergence_equivalence_check, metric_d, pullback_experiment, ConvergenceParams, InitialData,
    PullbackParams,
};
use kickwave_core::busemann::{
    align_at_mid, shock_genealogy, BusemannCtx, BusemannParams,
};
use kickwave_core::environment::Environment;
use kickwave_core::grid::{GridProfile, GridSpec};
use kickwave_core::hopf_lax::{evolve, evolve_one, slope_probe, velocity_from};
use kickwave_core::minimizers::{one_sided_approx, stabilization_series, OneSidedField, OneSidedParams};
use kickwave_core::rng::KeyedRng;
use kickwave_core::shape::{
    concentration_tail, estimate_alpha, excursion_tail, p_independence_check,
    quadratic_law_check, sample_point_actions, PointActionParams,
};
use kickwave_core::stats;

use crate::config::{Experiment, RunConfig};
use crate::manifest::{
    digest_file, result_digest, sha256_hex, ExperimentManifest, OutputDigest, RunFlags,
};
use crate::out::{csv, OutDir};

pub struct RunOutcome {
    pub manifest: ExperimentManifest,
}

impl RunOutcome {
    pub fn flagged(&self) -> bool {
        self.manifest.flags.any()
    }
}

/// Execute the configured experiment into `out_dir` on `workers` threads.
pub fn run(cfg: &RunConfig, out_dir: &Path, workers: usize) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut out = OutDir::create(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("building worker pool")?;
    let (seeds, flags) = pool.install(|| dispatch(cfg, &mut out))?;
    let mut outputs: Vec<OutputDigest> = out
        .files()
        .iter()
        .map(|p| digest_file(p))
        .collect::<std::io::Result<_>>()
        .context("digesting outputs")?;
    outputs.sort_by(|a, b| a.file.cmp(&b.file));
    let config_text = cfg.canonical_toml();
    let manifest = ExperimentManifest {
        schema: crate::config::SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment.kind().to_string(),
        config_hash: sha256_hex(config_text.as_bytes()),
        config: config_text,
        master_seed: cfg.environment.master_seed,
        seeds,
        result_digest: result_digest(&outputs),
        outputs,
        flags,
        workers: workers.max(1),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    manifest.write(out.path()).context("writing manifest")?;
    Ok(RunOutcome { manifest })
}

fn dispatch(cfg: &RunConfig, out: &mut OutDir) -> Result<(Vec<u64>, RunFlags)> {
    match &cfg.experiment {
        Experiment::EnvSample { times, cells } => env_sample(cfg, out, *times, *cells),
        Experiment::Evolve {
            initial,
            steps,
            start_time,
        } => evolve_experiment(cfg, out, initial, *steps, *start_time),
        Experiment::Minimizer {
            endpoint_time,
            endpoint_x,
            v,
            horizon,
            mode,
            stabilization_horizons,
        } => minimizer_experiment(
            cfg,
            out,
            (*endpoint_time, *endpoint_x),
            *v,
            *horizon,
            *mode,
            stabilization_horizons,
        ),
        Experiment::Shape {
            v_list,
            n,
            seed_spec,
            check_p_independence,
            grid_bias_coeff,
        } => shape_experiment(
            cfg,
            out,
            v_list,
            *n,
            seed_spec,
            *check_p_independence,
            *grid_bias_coeff,
        ),
        Experiment::Concentration {
            v,
            n,
            seed_spec,
            u_grid,
        } => concentration_experiment(cfg, out, *v, *n, seed_spec, u_grid),
        Experiment::Busemann {
            v,
            horizon,
            times,
            window,
            window_step,
            pairing_c,
        } => busemann_experiment(cfg, out, *v, *horizon, times, *window, *window_step, *pairing_c),
        Experiment::Shocks {
            v,
            horizon,
            times,
            jump_tol,
        } => shocks_experiment(cfg, out, *v, *horizon, *times, *jump_tol),
        Experiment::Pullback {
            initial,
            v,
            m_list,
            reference_horizon,
            seed_spec,
            metric_n_max,
        } => pullback_run(cfg, out, initial, *v, m_list, *reference_horizon, seed_spec, *metric_n_max),
        Experiment::MetricCheck {
            trials,
            metric_n_max,
        } => metric_check(cfg, out, *trials, *metric_n_max),
    }
}

fn base_env(cfg: &RunConfig) -> Result<Environment> {
    Ok(Environment::new(cfg.environment)?)
}

fn one_sided_params(cfg: &RunConfig, horizon: i64) -> OneSidedParams {
    let mut p = OneSidedParams::new(horizon);
    p.policy = cfg.grid;
    p.action = cfg.action.params();
    p.refine = cfg.action.refine();
    p
}

fn point_params(cfg: &RunConfig) -> PointActionParams {
    PointActionParams {
        action: cfg.action.params(),
        policy: cfg.grid,
        refine: cfg.action.refine(),
    }
}

fn env_sample(
    cfg: &RunConfig,
    out: &mut OutDir,
    times: [i64; 2],
    cells: [i64; 2],
) -> Result<(Vec<u64>, RunFlags)> {
    let env = base_env(cfg)?;
    let mut rows = Vec::new();
    for n in times[0]..=times[1] {
        for i in cells[0]..=cells[1] {
            for p in env.cell_points(n, i) {
                rows.push(format!("{n},{i},{},{},{}", p.eta, p.xi, p.kappa));
            }
        }
    }
    out.write_text("points.csv", &csv("n,i,eta,xi,kappa", rows))?;
    Ok((vec![cfg.environment.master_seed], RunFlags::default()))
}

fn evolve_experiment(
    cfg: &RunConfig,
    out: &mut OutDir,
    initial: &InitialData,
    steps: u32,
    start_time: i64,
) -> Result<(Vec<u64>, RunFlags)> {
    let env = base_env(cfg)?;
    let grid = cfg.grid.build(0.0, 0.0, steps)?;
    let w0 = initial.sample(grid, start_time)?;
    let run = evolve(&env, &w0, start_time + steps as i64, cfg.action.params())?;
    let probes_before = slope_probe(&w0);
    let probes_after = slope_probe(&run.profile);
    let flag_names: Vec<&str> = if run.flags.boundary_contact {
        vec!["boundary_contact"]
    } else {
        vec![]
    };
    let seed = cfg.environment.master_seed;
    out.write_profile("initial.csv", &w0, seed, &flag_names)?;
    out.write_profile("final.csv", &run.profile, seed, &flag_names)?;
    if run.stack.steps() > 0 {
        let u = velocity_from(&run.profile, run.stack.map_into(run.profile.time).unwrap());
        out.write_profile("velocity.csv", &u, seed, &flag_names)?;
    }
    out.write_json(
        "probes.json",
        &json!({
            "slope_before": probes_before,
            "slope_after": probes_after,
            "contact_steps": run.flags.contact_steps,
        }),
    )?;
    Ok((
        vec![seed],
        RunFlags {
            boundary_contact: run.flags.boundary_contact as u32,
            ..Default::default()
        },
    ))
}

fn minimizer_experiment(
    cfg: &RunConfig,
    out: &mut OutDir,
    endpoint: (i64, f64),
    v: f64,
    horizon: i64,
    mode: kickwave_core::minimizers::OneSidedMode,
    stabilization_horizons: &[i64],
) -> Result<(Vec<u64>, RunFlags)> {
    let env = base_env(cfg)?;
    let mut params = one_sided_params(cfg, horizon);
    params.mode = mode;
    let trace = one_sided_approx(&env, endpoint, v, &params)?;
    out.write_trace("trace", &trace, &[])?;
    if stabilization_horizons.len() >= 2 {
        let series = stabilization_series(&env, endpoint, v, stabilization_horizons, &params)?;
        let rows = series
            .iter()
            .map(|(m, d)| format!("{m},{d}"))
            .collect::<Vec<_>>();
        out.write_text("stabilization.csv", &csv("horizon,delta_prev", rows))?;
    }
    Ok((
        vec![cfg.environment.master_seed],
        RunFlags {
            boundary_contact: trace.boundary_contact as u32,
            ..Default::default()
        },
    ))
}

fn shape_experiment(
    cfg: &RunConfig,
    out: &mut OutDir,
    v_list: &[f64],
    n: i64,
    seed_spec: &crate::config::SeedSpec,
    check_p_independence: bool,
    grid_bias_coeff: f64,
) -> Result<(Vec<u64>, RunFlags)> {
    let seeds = seed_spec.resolve(cfg.environment.master_seed);
    let params = point_params(cfg);
    let mut flags = RunFlags::default();
    let mut estimates = Vec::with_capacity(v_list.len());
    for &v in v_list {
        let est = estimate_alpha(&cfg.environment, &seeds, v, n, &params)?;
        flags.boundary_contact += est.boundary_flags;
        estimates.push(est);
    }
    let rows = estimates
        .iter()
        .map(|e| format!("{},{},{},{},{}", e.v, e.n, e.mean, e.stderr, e.replicas))
        .collect::<Vec<_>>();
    out.write_text("estimates.csv", &csv("v,n,mean,stderr,replicas", rows))?;
    let mut sample_rows = Vec::new();
    for e in &estimates {
        for (seed, sample) in seeds.iter().zip(&e.samples) {
            sample_rows.push(format!("{},{seed},{sample}", e.v));
        }
    }
    out.write_text("samples.csv", &csv("v,seed,action_over_n", sample_rows))?;
    let mut sub_rows = Vec::new();
    for e in &estimates {
        for (t, mean) in e.sub_means {
            sub_rows.push(format!("{},{t},{mean}", e.v));
        }
    }
    out.write_text("subadditive.csv", &csv("v,n,mean", sub_rows))?;
    if estimates.iter().any(|e| e.v == 0.0) && estimates.len() > 1 {
        let report = quadratic_law_check(&estimates, cfg.grid.h, grid_bias_coeff)?;
        out.write_json("quadratic_law.json", &report)?;
    }
    if check_p_independence {
        let reports = v_list
            .iter()
            .map(|&v| p_independence_check(&cfg.environment, &seeds, v, n, &params))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        out.write_json("p_independence.json", &reports)?;
    }
    Ok((seeds, flags))
}

fn concentration_experiment(
    cfg: &RunConfig,
    out: &mut OutDir,
    v: f64,
    n: i64,
    seed_spec: &crate::config::SeedSpec,
    u_grid: &[f64],
) -> Result<(Vec<u64>, RunFlags)> {
    let seeds = seed_spec.resolve(cfg.environment.master_seed);
    let params = point_params(cfg);
    let samples = sample_point_actions(&cfg.environment, &seeds, v, n, &params)?;
    let grid_opt = if u_grid.is_empty() { None } else { Some(u_grid) };
    let conc = concentration_tail(&samples, n, grid_opt);
    let exc = excursion_tail(&samples, n, grid_opt);
    let rows = samples
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{}",
                s.seed, s.action, s.excursion, s.boundary_contact as u8
            )
        })
        .collect::<Vec<_>>();
    out.write_text("samples.csv", &csv("seed,action,excursion,boundary", rows))?;
    let tail_rows = |rep: &kickwave_core::shape::TailReport| {
        rep.rows
            .iter()
            .map(|r| format!("{},{}", r.u, r.p_hat))
            .collect::<Vec<_>>()
    };
    out.write_text("action_tail.csv", &csv("u,p_hat", tail_rows(&conc)))?;
    out.write_text("excursion_tail.csv", &csv("u,p_hat", tail_rows(&exc)))?;
    out.write_json(
        "fits.json",
        &json!({
            "action_center": conc.center,
            "action_scale": conc.scale,
            "action_fit": conc.fit,
            "excursion_fit": exc.fit,
        }),
    )?;
    let flags = RunFlags {
        boundary_contact: samples.iter().filter(|s| s.boundary_contact).count() as u32,
        ..Default::default()
    };
    Ok((seeds, flags))
}

/// Node-wise gap between the one-step evolution of `u_t` and the next-time
/// potential, after pinning both to zero at the window midpoint. Compared on
/// the inner `[window.0, window.1]` only: the padding nodes feed the
/// minimization but their own values are edge-distorted.
pub fn fixed_point_gap(
    env: &Environment,
    u_t: &GridProfile,
    u_next: &GridProfile,
    window: (f64, f64),
    action: ActionParams,
) -> Result<f64> {
    let (evolved, _, _) = evolve_one(env, u_t, action)?;
    let lo = evolved.grid.nearest_index(window.0);
    let hi = evolved.grid.nearest_index(window.1);
    let a = align_at_mid(&evolved.slice(lo, hi)?);
    let b = align_at_mid(&u_next.slice(lo, hi)?);
    let gap = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(gap)
}

#[allow(clippy::too_many_arguments)]
fn busemann_experiment(
    cfg: &RunConfig,
    out: &mut OutDir,
    v: f64,
    horizon: i64,
    times: &[i64],
    window: [f64; 2],
    window_step: f64,
    pairing_c: f64,
) -> Result<(Vec<u64>, RunFlags)> {
    let env = base_env(cfg)?;
    let n_max = *times.iter().max().context("times must be nonempty")? + 1;
    let params = BusemannParams {
        pairing_c,
        one_sided: one_sided_params(cfg, horizon),
    };
    let ctx = BusemannCtx::new(&env, v, n_max, params)?;
    let mut flags = RunFlags::default();

    // anchored estimates on the coarse window
    let mut rows = Vec::new();
    for &t in times {
        let mut x = window[0];
        while x <= window[1] + 1e-12 {
            let est = ctx.estimate((0, 0.0), (t, x))?;
            if !est.reliable {
                flags.unreliable_estimates += 1;
            }
            if est.boundary_contact {
                flags.boundary_contact += 1;
            }
            let last_residual = if est.residuals.len() >= 2 {
                (est.residuals[est.residuals.len() - 1].1
                    - est.residuals[est.residuals.len() - 2].1)
                    .abs()
            } else {
                0.0
            };
            rows.push(format!(
                "0,0,{t},{x},{},{},{last_residual}",
                est.value,
                est.pairing_ks.len()
            ));
            x += window_step;
        }
    }
    out.write_text(
        "busemann.csv",
        &csv("n1,x1,n2,x2,value,n_pairings,last_residual", rows),
    )?;

    // global potential profiles and the fixed-point gaps between them
    let pad = 6.0;
    let h = cfg.grid.h;
    let lo = ((window[0] - pad) / h).floor() * h;
    let count = (((window[1] + pad) - lo) / h).ceil() as usize + 1;
    let ugrid = GridSpec::new(lo, h, count)?;
    let mut potentials = Vec::new();
    for &t in times {
        let (u, unreliable) = ctx.global_potential(t, &ugrid)?;
        flags.unreliable_estimates += unreliable;
        out.write_profile(
            &format!("u_potential_t{t}.csv"),
            &align_at_mid(&u),
            cfg.environment.master_seed,
            &[],
        )?;
        potentials.push((t, u));
    }
    let mut gaps = Vec::new();
    for w in potentials.windows(2) {
        if w[1].0 == w[0].0 + 1 {
            let gap = fixed_point_gap(
                &env,
                &w[0].1,
                &w[1].1,
                (window[0], window[1]),
                cfg.action.params(),
            )?;
            gaps.push(json!({ "from": w[0].0, "to": w[1].0, "gap": gap }));
        }
    }

    // velocity profile at the last requested time with its spatial mean
    let t_last = *times.last().unwrap();
    let u = ctx.global_velocity(t_last)?;
    out.write_profile("velocity.csv", &u, cfg.environment.master_seed, &[])?;
    let lo_i = u.grid.nearest_index(window[0]);
    let hi_i = u.grid.nearest_index(window[1]);
    let window_mean = stats::mean(&u.values[lo_i..=hi_i]);
    out.write_json(
        "summary.json",
        &json!({
            "v": v,
            "horizon": horizon,
            "fixed_point_gaps": gaps,
            "velocity_window_mean": window_mean,
            "unreliable_estimates": flags.unreliable_estimates,
        }),
    )?;
    Ok((vec![cfg.environment.master_seed], flags))
}

fn shocks_experiment(
    cfg: &RunConfig,
    out: &mut OutDir,
    v: f64,
    horizon: i64,
    times: [i64; 2],
    jump_tol: Option<f64>,
) -> Result<(Vec<u64>, RunFlags)> {
    let env = base_env(cfg)?;
    let params = one_sided_params(cfg, horizon);
    let field = OneSidedField::compute(&env, v, times[1], &params)?;
    let mut velocities = Vec::new();
    for t in times[0]..=times[1] {
        velocities.push(field.velocity(t)?);
    }
    let tol = jump_tol.unwrap_or(4.0 * cfg.grid.h);
    let forest = shock_genealogy(&velocities, tol)?;
    let rows = forest
        .times
        .iter()
        .zip(&forest.frames)
        .map(|(t, frame)| format!("{t},{}", frame.len()))
        .collect::<Vec<_>>();
    out.write_text("shock_counts.csv", &csv("time,count", rows))?;
    out.write_json("forest.json", &forest)?;
    Ok((
        vec![cfg.environment.master_seed],
        RunFlags {
            boundary_contact: field.flags().boundary_contact as u32,
            ..Default::default()
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn pullback_run(
    cfg: &RunConfig,
    out: &mut OutDir,
    initial: &InitialData,
    v: f64,
    m_list: &[i64],
    reference_horizon: i64,
    seed_spec: &crate::config::SeedSpec,
    metric_n_max: u32,
) -> Result<(Vec<u64>, RunFlags)> {
    let seeds = seed_spec.resolve(cfg.environment.master_seed);
    let params = PullbackParams {
        policy: cfg.grid,
        action: cfg.action.params(),
        reference_horizon,
        metric_n_max,
    };
    let base = base_env(cfg)?;
    let per_seed: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let env = base.reseeded(seed);
            pullback_experiment(&env, initial, v, m_list, &params).map(|pts| (seed, pts))
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut flags = RunFlags::default();
    for (seed, pts) in &per_seed {
        for p in pts {
            if p.boundary_contact {
                flags.boundary_contact += 1;
            }
            rows.push(format!(
                "{seed},{},{},{},{},{},{}",
                p.m,
                p.d,
                p.slope_minus,
                p.slope_plus,
                p.y_star_over_m,
                p.boundary_contact as u8
            ));
        }
    }
    out.write_text(
        "pullback.csv",
        &csv("seed,m,d,slope_minus,slope_plus,y_star_over_m,boundary_flag", rows),
    )?;
    // medians per start time, in the order given
    let mut medians = Vec::new();
    for (idx, &m) in m_list.iter().enumerate() {
        let mut ds: Vec<f64> = per_seed.iter().map(|(_, pts)| pts[idx].d).collect();
        ds.sort_by(f64::total_cmp);
        let mut ys: Vec<f64> = per_seed
            .iter()
            .map(|(_, pts)| pts[idx].y_star_over_m)
            .collect();
        ys.sort_by(f64::total_cmp);
        medians.push(json!({
            "m": m,
            "median_d": stats::quantile(&ds, 0.5),
            "median_y_star_over_m": stats::quantile(&ys, 0.5),
        }));
    }
    out.write_json("summary.json", &json!({ "v": v, "medians": medians }))?;
    Ok((seeds, flags))
}

/// Metric axioms on random G-valid profiles plus the two hand-built families
/// of the convergence-equivalence lemma.
pub struct MetricBattery {
    pub axioms_pass: bool,
    pub detail: String,
    pub worst_symmetry: f64,
    pub worst_triangle_excess: f64,
    pub worst_identity: f64,
    pub moving: kickwave_core::attraction::ConvergenceReport,
    pub oscillating: kickwave_core::attraction::ConvergenceReport,
}

pub fn metric_battery(seed: u64, trials: u32, metric_n_max: u32) -> Result<MetricBattery> {
    let h = 1.0 / 64.0;
    let grid = GridSpec::new(-24.0, h, (48.0 / h) as usize + 1)?;
    let mut rng = KeyedRng::for_stream(seed, 0xd157);
    let random_g = |rng: &mut KeyedRng| {
        let mut m = grid.x(0) - 0.5 + rng.next_f64();
        let values: Vec<f64> = (0..grid.count)
            .map(|i| {
                m += 2.0 * grid.h * rng.next_f64();
                grid.x(i) - m
            })
            .collect();
        GridProfile::new(grid, 0, values).expect("finite values")
    };
    let mut worst_symmetry = 0.0f64;
    let mut worst_triangle = 0.0f64;
    let mut worst_identity = 0.0f64;
    for _ in 0..trials {
        let a = random_g(&mut rng);
        let b = random_g(&mut rng);
        let c = random_g(&mut rng);
        let dab = metric_d(&a, &b, metric_n_max)?;
        let dba = metric_d(&b, &a, metric_n_max)?;
        worst_symmetry = worst_symmetry.max((dab - dba).abs());
        let dac = metric_d(&a, &c, metric_n_max)?;
        let dcb = metric_d(&c, &b, metric_n_max)?;
        worst_triangle = worst_triangle.max(dab - dac - dcb);
        worst_identity = worst_identity.max(metric_d(&a, &a, metric_n_max)?);
    }

    let fam_grid = GridSpec::new(-20.0, 1.0 / 64.0, 2561)?;
    let limit = GridProfile::from_fn(fam_grid, 0, |x| if x < 0.0 { 0.5 } else { -0.5 })?;
    let moving: Vec<GridProfile> = (1..=64)
        .map(|k| {
            let s = 1.0 / k as f64;
            GridProfile::from_fn(fam_grid, 0, move |x| if x < s { 0.5 } else { -0.5 })
        })
        .collect::<std::result::Result<_, _>>()?;
    let moving_report =
        convergence_equivalence_check(&moving, &limit, &ConvergenceParams::default())?;
    let oscillating: Vec<GridProfile> = (1..=16)
        .map(|k| {
            let hi = if k % 2 == 0 { 0.5 } else { 0.25 };
            GridProfile::from_fn(fam_grid, 0, move |x| if x < 0.0 { hi } else { -hi })
        })
        .collect::<std::result::Result<_, _>>()?;
    let oscillating_report =
        convergence_equivalence_check(&oscillating, &limit, &ConvergenceParams::default())?;

    let axioms_pass =
        worst_symmetry == 0.0 && worst_triangle <= 1e-12 && worst_identity == 0.0;
    let mut detail = String::new();
    let _ = write!(
        detail,
        "symmetry {worst_symmetry:.2e}, triangle excess {worst_triangle:.2e}, identity {worst_identity:.2e}"
    );
    Ok(MetricBattery {
        axioms_pass,
        detail,
        worst_symmetry,
        worst_triangle_excess: worst_triangle,
        worst_identity,
        moving: moving_report,
        oscillating: oscillating_report,
    })
}

fn metric_check(
    cfg: &RunConfig,
    out: &mut OutDir,
    trials: u32,
    metric_n_max: u32,
) -> Result<(Vec<u64>, RunFlags)> {
    let b = metric_battery(cfg.environment.master_seed, trials, metric_n_max)?;
    out.write_json(
        "metric_report.json",
        &json!({
            "trials": trials,
            "axioms_pass": b.axioms_pass,
            "detail": b.detail,
            "worst_symmetry": b.worst_symmetry,
            "worst_triangle_excess": b.worst_triangle_excess,
            "worst_identity": b.worst_identity,
            "moving_steps": b.moving,
            "oscillating_heights": b.oscillating,
        }),
    )?;
    Ok((vec![cfg.environment.master_seed], RunFlags::default()))
}
