//! Busemann increments along pairing times of one-sided minimizers, the
//! global potential and velocity they generate, and shock bookkeeping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{kinetic_action, potential_action, Path};
use crate::environment::Environment;
use crate::grid::{GridError, GridProfile, GridSpec};
use crate::minimizers::{MinimizerError, MinimizerTrace, OneSidedField, OneSidedParams};

#[derive(Debug, Error)]
pub enum BusemannError {
    #[error(transparent)]
    Minimizer(#[from] MinimizerError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("endpoint time {0} outside (horizon, n_max]")]
    TimeOutOfRange(i64),
    #[error("velocity frames must cover consecutive times, got {0} then {1}")]
    NonConsecutiveFrames(i64, i64),
    #[error("genealogy needs at least two frames")]
    TooFewFrames,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusemannParams {
    /// Pairing criterion constant: accept `k` with `W_k < c / (n - k)`.
    pub pairing_c: f64,
    pub one_sided: OneSidedParams,
}

impl BusemannParams {
    pub fn new(horizon: i64) -> Self {
        BusemannParams {
            pairing_c: 1.0,
            one_sided: OneSidedParams::new(horizon),
        }
    }
}

/// Finite-horizon Busemann estimate between two space-time points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BusemannEstimate {
    pub from: (i64, f64),
    pub to: (i64, f64),
    pub v: f64,
    /// Action difference at the deepest pairing time.
    pub value: f64,
    /// Pairing times used, descending; `value` comes from the last.
    pub pairing_ks: Vec<i64>,
    /// `(k, Delta_k)` record at every pairing time, descending in `k`.
    pub residuals: Vec<(i64, f64)>,
    /// False when no pairing time met the width criterion and the fallback
    /// (the `k` minimizing `W_k (n - k)`) was used instead.
    pub reliable: bool,
    pub boundary_contact: bool,
}

/// Shared machinery for Busemann estimates on one realization and slope:
/// one backward field serves every endpoint.
pub struct BusemannCtx {
    env: Environment,
    pub v: f64,
    pub field: OneSidedField,
    pub params: BusemannParams,
}

impl BusemannCtx {
    pub fn new(
        env: &Environment,
        v: f64,
        n_max: i64,
        params: BusemannParams,
    ) -> Result<Self, BusemannError> {
        let field = OneSidedField::compute(env, v, n_max, &params.one_sided)?;
        Ok(BusemannCtx {
            env: env.clone(),
            v,
            field,
            params,
        })
    }

    pub fn horizon(&self) -> i64 {
        self.params.one_sided.horizon
    }

    /// Refined one-sided approximant for endpoint `(n, x)`.
    pub fn trace(&self, n: i64, x: f64) -> Result<MinimizerTrace, BusemannError> {
        Ok(self.field.trace(n, x, self.params.one_sided.do_refine)?)
    }

    /// Action of a trace restricted to `[k0, t1]`, with the generalized
    /// endpoint weighting.
    fn restricted_action(&self, trace: &Path, k0: i64, t1: i64) -> f64 {
        let part = trace.restrict(k0, t1).expect("restriction in range");
        kinetic_action(&part).expect("at least one step")
            + potential_action(&self.env, &part, self.params.one_sided.action)
                .expect("at least one step")
    }

    fn pairing_ks(
        &self,
        g1: &MinimizerTrace,
        g2: &MinimizerTrace,
        n_min: i64,
        record_all: bool,
    ) -> Result<(Vec<i64>, bool), BusemannError> {
        let lo = self.horizon();
        // Nonsimultaneous width: triple sum of (max - min) gaps.
        let width_at = |k: i64| -> f64 {
            (0..3)
                .map(|i| {
                    let a1 = g1.path.at(k - i).unwrap();
                    let a2 = g2.path.at(k - i).unwrap();
                    a1.max(a2) - a1.min(a2)
                })
                .sum()
        };
        // A pairing time must lie strictly in the past of the endpoints: at
        // k = n_min the width bound degenerates to 1/0 and certifies nothing.
        let mut pairing: Vec<i64> = Vec::new();
        for k in (lo + 2..n_min).rev() {
            if width_at(k) < self.params.pairing_c / (n_min - k) as f64 {
                pairing.push(k);
            }
        }
        if pairing.is_empty() {
            // Fallback: the tightest place by the product criterion.
            let best = (lo + 2..=n_min)
                .min_by(|&a, &b| {
                    let wa = width_at(a) * (n_min - a + 1) as f64;
                    let wb = width_at(b) * (n_min - b + 1) as f64;
                    wa.total_cmp(&wb)
                })
                .ok_or(BusemannError::TimeOutOfRange(n_min))?;
            return Ok((vec![best], false));
        }
        if !record_all {
            // only the deepest pairing time feeds the value
            pairing.drain(..pairing.len() - 1);
        }
        Ok((pairing, true))
    }

    fn estimate_from_traces(
        &self,
        g1: &MinimizerTrace,
        from: (i64, f64),
        g2: &MinimizerTrace,
        to: (i64, f64),
        record_all: bool,
    ) -> Result<BusemannEstimate, BusemannError> {
        let n_min = from.0.min(to.0);
        let (ks, reliable) = self.pairing_ks(g1, g2, n_min, record_all)?;
        let mut residuals = Vec::with_capacity(ks.len());
        for &k in &ks {
            let delta = self.restricted_action(&g2.path, k - 1, to.0)
                - self.restricted_action(&g1.path, k - 1, from.0);
            residuals.push((k, delta));
        }
        let value = residuals.last().expect("nonempty").1;
        Ok(BusemannEstimate {
            from,
            to,
            v: self.v,
            value,
            pairing_ks: ks,
            residuals,
            reliable,
            boundary_contact: g1.boundary_contact || g2.boundary_contact,
        })
    }

    /// `B((n1,x1),(n2,x2))`: the action difference of the two one-sided
    /// approximants evaluated along their pairing times, deepest last.
    pub fn estimate(
        &self,
        from: (i64, f64),
        to: (i64, f64),
    ) -> Result<BusemannEstimate, BusemannError> {
        let g1 = self.trace(from.0, from.1)?;
        let g2 = self.trace(to.0, to.1)?;
        self.estimate_from_traces(&g1, from, &g2, to, true)
    }

    /// Same estimate against a pre-traced anchor, recording only the deepest
    /// pairing value. Batch callers trace the anchor once.
    pub fn estimate_anchored(
        &self,
        anchor: &MinimizerTrace,
        anchor_point: (i64, f64),
        to: (i64, f64),
    ) -> Result<BusemannEstimate, BusemannError> {
        let g2 = self.trace(to.0, to.1)?;
        self.estimate_from_traces(anchor, anchor_point, &g2, to, false)
    }

    /// Global potential `U(n, x) = B((0,0), (n, x))` sampled on `window`,
    /// with a per-node reliability mask (false where the pairing criterion
    /// was never met and the fallback value stands).
    ///
    /// Built from the raw grid traces: a trace to `(n+1, x)` restricted to
    /// earlier times IS the trace to its own predecessor, so the family
    /// satisfies the one-step evolution identity exactly. Refining each
    /// node's trace independently would break that nesting.
    pub fn global_potential(
        &self,
        time: i64,
        window: &GridSpec,
    ) -> Result<GlobalPotential, BusemannError> {
        let anchor = self.field.trace(0, 0.0, false)?;
        let mut values = Vec::with_capacity(window.count);
        let mut reliable = Vec::with_capacity(window.count);
        for i in 0..window.count {
            let node = self.field.trace(time, window.x(i), false)?;
            let est = self.estimate_from_traces(
                &anchor,
                (0, 0.0),
                &node,
                (time, window.x(i)),
                false,
            )?;
            reliable.push(est.reliable && !est.boundary_contact);
            values.push(est.value);
        }
        Ok(GlobalPotential {
            profile: GridProfile::new(*window, time, values)?,
            reliable,
        })
    }

    /// Global velocity `u_v(n, .) = last-step increment of the one-sided
    /// field`, on the field grid.
    pub fn global_velocity(&self, time: i64) -> Result<GridProfile, BusemannError> {
        Ok(self.field.velocity(time)?)
    }
}

/// Pin a profile to zero at its middle node (additive-constant alignment).
pub fn align_at_mid(profile: &GridProfile) -> GridProfile {
    let mid = profile.grid.count / 2;
    let c = profile.values[mid];
    GridProfile {
        grid: profile.grid,
        time: profile.time,
        values: profile.values.iter().map(|v| v - c).collect(),
    }
}

/// A velocity discontinuity: a maximal run of grid gaps where the monotone
/// map `M(x) = x - u(x)` jumps by more than the tolerance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShockRecord {
    pub time: i64,
    /// Midpoint of the jump run.
    pub x: f64,
    pub left_velocity: f64,
    pub right_velocity: f64,
    /// Pre-image interval of the shock: particle positions one step earlier.
    pub m_interval: (f64, f64),
    /// Node index of the left edge of the run.
    pub node: usize,
}

impl ShockRecord {
    /// Entropy condition at a shock: faster particles on the left.
    pub fn is_entropic(&self) -> bool {
        self.left_velocity > self.right_velocity
    }
}

/// Scan a velocity profile for jumps of the monotone map larger than
/// `jump_tol` (default `4 h`): each maximal run of jumping gaps is one shock.
pub fn detect_shocks(u: &GridProfile, jump_tol: f64) -> Vec<ShockRecord> {
    let g = u.grid;
    let m = |i: usize| g.x(i) - u.values[i];
    let mut out = Vec::new();
    let mut i = 0usize;
    while i + 1 < g.count {
        if m(i + 1) - m(i) > jump_tol {
            let start = i;
            let mut end = i + 1;
            while end + 1 < g.count && m(end + 1) - m(end) > jump_tol {
                end += 1;
            }
            out.push(ShockRecord {
                time: u.time,
                x: 0.5 * (g.x(start) + g.x(end)),
                left_velocity: u.values[start],
                right_velocity: u.values[end],
                m_interval: (m(start), m(end)),
                node: start,
            });
            i = end;
        } else {
            i += 1;
        }
    }
    out
}

/// Shock genealogy over consecutive-time velocity frames: each shock links to
/// the successor at the next time whose pre-image interval straddles it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShockForest {
    pub times: Vec<i64>,
    pub frames: Vec<Vec<ShockRecord>>,
    /// `links[t][s]` is the index of the successor of shock `s` of frame `t`
    /// within frame `t + 1`.
    pub links: Vec<Vec<Option<usize>>>,
    /// Pairs of shocks sharing a successor.
    pub merges: usize,
    /// Shocks whose successor left the window (or dissolved below tolerance).
    pub lost: usize,
}

pub fn shock_genealogy(
    velocities: &[GridProfile],
    jump_tol: f64,
) -> Result<ShockForest, BusemannError> {
    if velocities.len() < 2 {
        return Err(BusemannError::TooFewFrames);
    }
    for w in velocities.windows(2) {
        if w[1].time != w[0].time + 1 {
            return Err(BusemannError::NonConsecutiveFrames(w[0].time, w[1].time));
        }
    }
    let frames: Vec<Vec<ShockRecord>> = velocities
        .iter()
        .map(|u| detect_shocks(u, jump_tol))
        .collect();
    let mut links = Vec::with_capacity(frames.len() - 1);
    let mut merges = 0usize;
    let mut lost = 0usize;
    for t in 0..frames.len() - 1 {
        let next = &frames[t + 1];
        let mut frame_links = Vec::with_capacity(frames[t].len());
        let mut used = vec![0usize; next.len()];
        for shock in &frames[t] {
            // successor: the next-time shock absorbing this one's location
            let mut successor = None;
            let mut best_dist = f64::INFINITY;
            for (j, cand) in next.iter().enumerate() {
                let (lo, hi) = cand.m_interval;
                if shock.x >= lo && shock.x <= hi {
                    let d = (cand.x - shock.x).abs();
                    if d < best_dist {
                        best_dist = d;
                        successor = Some(j);
                    }
                }
            }
            if let Some(j) = successor {
                used[j] += 1;
            } else {
                lost += 1;
            }
            frame_links.push(successor);
        }
        merges += used.iter().filter(|&&c| c >= 2).map(|&c| c - 1).sum::<usize>();
        links.push(frame_links);
    }
    Ok(ShockForest {
        times: velocities.iter().map(|u| u.time).collect(),
        frames,
        links,
        merges,
        lost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionParams;
    use crate::environment::EnvironmentConfig;
    use crate::grid::GridSpec;
    use crate::hopf_lax::{evolve_one, velocity_from};

    fn ctx_for(seed: u64, v: f64, horizon: i64, n_max: i64) -> BusemannCtx {
        let env = Environment::new(EnvironmentConfig::default().with_seed(seed)).unwrap();
        let mut params = BusemannParams::new(horizon);
        params.one_sided.policy.r_width = 2.0;
        BusemannCtx::new(&env, v, n_max, params).unwrap()
    }

    #[test]
    fn zero_env_busemann_vanishes() {
        let env = Environment::zero();
        let mut params = BusemannParams::new(-12);
        params.one_sided.policy.r_width = 1.0;
        let ctx = BusemannCtx::new(&env, 0.0, 0, params).unwrap();
        for &x in &[0.0, 0.5, -1.25] {
            let est = ctx.estimate((0, 0.0), (0, x)).unwrap();
            assert_eq!(est.value, 0.0, "x = {x}");
            assert!(est.reliable);
        }
    }

    #[test]
    fn diagonal_estimate_is_exactly_zero() {
        let ctx = ctx_for(2, 0.0, -16, 0);
        let est = ctx.estimate((0, 0.25), (0, 0.25)).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(est.reliable);
        assert_eq!(est.pairing_ks.first(), Some(&-1));
    }

    #[test]
    fn same_context_antisymmetry_is_exact() {
        let ctx = ctx_for(7, 0.0, -24, 0);
        let ab = ctx.estimate((0, -0.5), (0, 0.5)).unwrap();
        let ba = ctx.estimate((0, 0.5), (0, -0.5)).unwrap();
        assert_eq!(ab.pairing_ks, ba.pairing_ks);
        assert!((ab.value + ba.value).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_by_point_action() {
        let ctx = ctx_for(11, 0.0, -32, 4);
        let mut params = crate::shape::PointActionParams::default();
        params.policy.r_width = 2.0;
        for &(x1, x2) in &[(0.0, 0.5), (-0.75, 0.25)] {
            let est = ctx.estimate((0, x1), (4, x2)).unwrap();
            let a = crate::shape::point_action_between(
                &ctx.env,
                (0, x1),
                (4, x2),
                &params,
            )
            .unwrap();
            assert!(
                est.value <= a.value + 1e-2,
                "B = {} vs A = {}",
                est.value,
                a.value
            );
        }
    }

    #[test]
    fn global_potential_zero_env_flat() {
        let env = Environment::zero();
        let mut params = BusemannParams::new(-8);
        params.one_sided.policy.r_width = 1.0;
        let ctx = BusemannCtx::new(&env, 0.0, 2, params).unwrap();
        let window = GridSpec::new(-1.0, 0.25, 9).unwrap();
        let (u, unreliable) = ctx.global_potential(1, &window).unwrap();
        assert_eq!(unreliable, 0);
        let aligned = align_at_mid(&u);
        assert!(aligned.values.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn global_velocity_zero_env_is_constant_v() {
        let env = Environment::zero();
        let mut params = BusemannParams::new(-8);
        params.one_sided.policy.r_width = 1.0;
        for &v in &[0.0, 0.25] {
            let ctx = BusemannCtx::new(&env, v, 0, params).unwrap();
            let u = ctx.global_velocity(0).unwrap();
            assert!(u.values.iter().all(|&ui| ui == v), "v = {v}");
            u.check_monotone_map().unwrap();
        }
    }

    #[test]
    fn detect_shocks_on_flat_and_step() {
        let g = GridSpec::new(-2.0, 0.125, 33).unwrap();
        let flat = GridProfile::from_fn(g, 0, |_| 0.3).unwrap();
        assert!(detect_shocks(&flat, 0.5).is_empty());
        // single down-step of height 2 at x = 0
        let step = GridProfile::from_fn(g, 0, |x| if x < 0.0 { 1.0 } else { -1.0 }).unwrap();
        let shocks = detect_shocks(&step, 0.5);
        assert_eq!(shocks.len(), 1);
        let s = &shocks[0];
        assert!(s.is_entropic());
        assert!((s.x - (-0.0625)).abs() < 1e-12); // midpoint of the jump gap
        assert_eq!(s.left_velocity, 1.0);
        assert_eq!(s.right_velocity, -1.0);
    }

    #[test]
    fn riemann_merge_has_known_time() {
        // Zero forcing; tent potential = two approaching shocks at +-1 with
        // speeds -+1/2 that merge at x = 0 at time 2.
        let env = Environment::zero();
        let g = GridSpec::new(-16.0, 1.0 / 64.0, 2049).unwrap();
        let w0 = GridProfile::from_fn(g, 0, |x| {
            if x <= -1.0 {
                x + 1.0
            } else if x < 1.0 {
                0.0
            } else {
                1.0 - x
            }
        })
        .unwrap();
        let mut frames = Vec::new();
        let mut cur = w0;
        for _ in 0..3 {
            let (next, args, _) = evolve_one(&env, &cur, ActionParams::default()).unwrap();
            frames.push(velocity_from(&next, &args));
            cur = next;
        }
        let forest = shock_genealogy(&frames, 4.0 * g.h).unwrap();
        assert_eq!(forest.frames[0].len(), 2, "two shocks after one step");
        assert_eq!(forest.frames[1].len(), 1, "merged at time 2");
        assert_eq!(forest.merges, 1);
        assert_eq!(forest.lost, 0);
        assert!((forest.frames[1][0].x).abs() <= 2.0 * g.h);
        // chain persists
        assert_eq!(forest.frames[2].len(), 1);
        assert_eq!(forest.links[1][0], Some(0));
    }

    #[test]
    fn successor_uniqueness_on_random_frames() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(60)).unwrap();
        let mut params = BusemannParams::new(-40);
        params.one_sided.policy.r_width = 2.0;
        let ctx = BusemannCtx::new(&env, 0.0, 0, params).unwrap();
        let mut frames = Vec::new();
        for t in -3..=0 {
            frames.push(ctx.global_velocity(t).unwrap());
        }
        let forest = shock_genealogy(&frames, 4.0 / 64.0).unwrap();
        // every link either exists or the shock is counted as lost
        let linked: usize = forest
            .links
            .iter()
            .map(|f| f.iter().filter(|l| l.is_some()).count())
            .sum();
        let total: usize = forest.links.iter().map(|f| f.len()).sum();
        assert_eq!(linked + forest.lost, total);
    }
}
