//! Grid evolution of velocity potentials by the kicked min-plus transform.
//!
//! One step from time `n` to `n+1` adds the kick `p F(n, .)`, applies the
//! quadratic min-plus transform `U(x) = min_y [V(y) + (x-y)^2/2]` by the
//! linear-time lower-envelope-of-parabolas sweep, then adds the arrival share
//! `(1-p) F(n+1, .)`. Composition over steps telescopes to the full
//! variational problem with the generalized endpoint weighting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionParams;
use crate::environment::Environment;
use crate::grid::{GridError, GridProfile, GridSpec};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("evolution target {target} precedes profile time {start}")]
    BackwardsInTime { start: i64, target: i64 },
}

/// Per-step argmin maps: `map(k)[i]` is the grid index of the optimal
/// predecessor at time `k` of node `i` at time `k+1`. Each map is
/// nondecreasing.
#[derive(Clone, Debug)]
pub struct BackpointerStack {
    pub grid: GridSpec,
    pub start_time: i64,
    maps: Vec<Vec<u32>>,
}

impl BackpointerStack {
    pub fn new(grid: GridSpec, start_time: i64) -> Self {
        BackpointerStack {
            grid,
            start_time,
            maps: Vec::new(),
        }
    }

    pub fn push(&mut self, map: Vec<u32>) {
        debug_assert_eq!(map.len(), self.grid.count);
        debug_assert!(map.windows(2).all(|w| w[0] <= w[1]), "argmin not monotone");
        self.maps.push(map);
    }

    pub fn steps(&self) -> usize {
        self.maps.len()
    }

    pub fn end_time(&self) -> i64 {
        self.start_time + self.maps.len() as i64
    }

    /// Argmin map for the step arriving at `time`.
    pub fn map_into(&self, time: i64) -> Option<&[u32]> {
        if time <= self.start_time || time > self.end_time() {
            return None;
        }
        Some(&self.maps[(time - self.start_time - 1) as usize])
    }

    /// Predecessor of node `i` at `time` (the argmin at `time - 1`).
    pub fn predecessor(&self, time: i64, i: usize) -> Option<usize> {
        self.map_into(time).map(|m| m[i] as usize)
    }
}

/// Warnings produced by an evolution run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolveFlags {
    /// Some argmin landed on grid index 0 or N-1: a minimizer may have left
    /// the domain and every value depending on it is untrusted.
    pub boundary_contact: bool,
    /// Number of steps in which a contact happened.
    pub contact_steps: u32,
}

impl EvolveFlags {
    pub fn merge(&mut self, other: EvolveFlags) {
        self.boundary_contact |= other.boundary_contact;
        self.contact_steps += other.contact_steps;
    }
}

/// Result of evolving a potential profile over one or more kicks.
#[derive(Clone, Debug)]
pub struct EvolveRun {
    pub profile: GridProfile,
    pub stack: BackpointerStack,
    pub flags: EvolveFlags,
}

/// `U_i = min_j [V_j + (x_i - x_j)^2 / 2]`, with the argmin index.
///
/// Linear-time sweep over the lower envelope of the parabolas centered at the
/// nodes. Ties go to the largest `j` (the rightmost minimizer convention).
/// The returned argmin sequence is nondecreasing.
pub fn quadratic_envelope(values: &[f64], grid: &GridSpec) -> (Vec<f64>, Vec<u32>) {
    let n = values.len();
    assert_eq!(n, grid.count, "value count must match grid");
    assert!(n >= 1);
    let mut centers = vec![0u32; n];
    let mut bounds = vec![0.0f64; n + 1];

    // Intersection abscissa of the parabolas centered at nodes p < q:
    // V_p + (s - x_p)^2/2 = V_q + (s - x_q)^2/2.
    let intersect = |p: usize, q: usize| -> f64 {
        let xp = grid.x(p);
        let xq = grid.x(q);
        (values[q] - values[p]) / (xq - xp) + 0.5 * (xp + xq)
    };

    let mut k = 0usize;
    centers[0] = 0;
    bounds[0] = f64::NEG_INFINITY;
    bounds[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(centers[k] as usize, q);
        // Popping at equality keeps the rightmost parabola on ties.
        while s <= bounds[k] {
            k -= 1;
            s = intersect(centers[k] as usize, q);
        }
        k += 1;
        centers[k] = q as u32;
        bounds[k] = s;
        bounds[k + 1] = f64::INFINITY;
    }

    let mut out = vec![0.0f64; n];
    let mut argmin = vec![0u32; n];
    let mut k = 0usize;
    for i in 0..n {
        let x = grid.x(i);
        // Advancing at equality keeps the rightmost parabola on ties.
        while bounds[k + 1] <= x {
            k += 1;
        }
        let j = centers[k];
        let d = x - grid.x(j as usize);
        out[i] = values[j as usize] + 0.5 * d * d;
        argmin[i] = j;
    }
    (out, argmin)
}

/// One kick-and-transport step from `W.time` to `W.time + 1`.
pub fn evolve_one(
    env: &Environment,
    w: &GridProfile,
    params: ActionParams,
) -> Result<(GridProfile, Vec<u32>, EvolveFlags), EvolveError> {
    let n = w.time;
    let grid = w.grid;
    let mut v = w.values.clone();
    if params.p != 0.0 {
        let f = env.potential_row(n, &grid);
        for (vi, fi) in v.iter_mut().zip(&f) {
            *vi += params.p * fi;
        }
    }
    let (mut u, argmin) = quadratic_envelope(&v, &grid);
    if params.p != 1.0 {
        let f = env.potential_row(n + 1, &grid);
        for (ui, fi) in u.iter_mut().zip(&f) {
            *ui += (1.0 - params.p) * fi;
        }
    }
    // Contact = some interior node is fed from a boundary node beyond which
    // the minimization was truncated. A boundary node mapping to itself is
    // the normal resting state and does not count.
    let last = (grid.count - 1) as u32;
    let contact = argmin[1..grid.count - 1]
        .iter()
        .any(|&j| j == 0 || j == last);
    let flags = EvolveFlags {
        boundary_contact: contact,
        contact_steps: contact as u32,
    };
    let profile = GridProfile::new(grid, n + 1, u)?;
    Ok((profile, argmin, flags))
}

/// Composition of one-kick steps from `w.time` up to `n1`, recording the
/// argmin map of every step.
pub fn evolve(
    env: &Environment,
    w: &GridProfile,
    n1: i64,
    params: ActionParams,
) -> Result<EvolveRun, EvolveError> {
    if n1 < w.time {
        return Err(EvolveError::BackwardsInTime {
            start: w.time,
            target: n1,
        });
    }
    let mut stack = BackpointerStack::new(w.grid, w.time);
    let mut flags = EvolveFlags::default();
    let mut cur = w.clone();
    while cur.time < n1 {
        let (next, argmin, step_flags) = evolve_one(env, &cur, params)?;
        stack.push(argmin);
        flags.merge(step_flags);
        cur = next;
    }
    Ok(EvolveRun {
        profile: cur,
        stack,
        flags,
    })
}

/// Velocity read-off after a step: `u_i = x_i - x_{bp(i)}`, the last-step
/// displacement of the arriving particle. The induced map
/// `M_i = x_{bp(i)}` is nondecreasing because the argmin is.
pub fn velocity_from(w_next: &GridProfile, argmin: &[u32]) -> GridProfile {
    let grid = w_next.grid;
    let values = (0..grid.count)
        .map(|i| grid.x(i) - grid.x(argmin[i] as usize))
        .collect();
    GridProfile {
        grid,
        time: w_next.time,
        values,
    }
}

/// Least-squares slopes of a potential over the leftmost and rightmost 10%
/// of its nodes: estimates of the asymptotic slopes `(v-, v+)`.
pub fn slope_probe(w: &GridProfile) -> (f64, f64) {
    let n = w.grid.count;
    let m = (n / 10).max(2);
    let fit = |idx: std::ops::Range<usize>| -> f64 {
        let count = idx.len() as f64;
        let mean_x = idx.clone().map(|i| w.grid.x(i)).sum::<f64>() / count;
        let mean_y = idx.clone().map(|i| w.values[i]).sum::<f64>() / count;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        for i in idx {
            let dx = w.grid.x(i) - mean_x;
            sxy += dx * (w.values[i] - mean_y);
            sxx += dx * dx;
        }
        sxy / sxx
    };
    (fit(0..m), fit(n - m..n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvironmentConfig, KickPoint};
    use crate::rng::KeyedRng;

    fn grid(n: usize, h: f64) -> GridSpec {
        let half = (n - 1) as f64 / 2.0 * h;
        GridSpec::new(-half, h, n).unwrap()
    }

    fn naive_envelope(values: &[f64], g: &GridSpec) -> (Vec<f64>, Vec<u32>) {
        let mut out = vec![0.0; values.len()];
        let mut arg = vec![0u32; values.len()];
        for i in 0..values.len() {
            let x = g.x(i);
            let mut best = f64::INFINITY;
            let mut best_j = 0u32;
            for j in 0..values.len() {
                let d = x - g.x(j);
                let c = values[j] + 0.5 * d * d;
                if c <= best {
                    best = c;
                    best_j = j as u32;
                }
            }
            out[i] = best;
            arg[i] = best_j;
        }
        (out, arg)
    }

    #[test]
    fn envelope_of_zero_is_identity() {
        let g = grid(33, 0.25);
        let (u, a) = quadratic_envelope(&vec![0.0; 33], &g);
        assert!(u.iter().all(|&x| x == 0.0));
        assert!(a.iter().enumerate().all(|(i, &j)| j as usize == i));
    }

    #[test]
    fn envelope_of_half_square_is_quarter_square() {
        let g = grid(257, 1.0 / 64.0);
        let v: Vec<f64> = (0..g.count).map(|i| 0.5 * g.x(i) * g.x(i)).collect();
        let (u, _) = quadratic_envelope(&v, &g);
        for i in 64..193 {
            let x = g.x(i);
            let err = u[i] - 0.25 * x * x;
            assert!(err >= -1e-12, "below analytic envelope at {x}");
            assert!(err <= g.h * g.h, "err {err} at {x}");
        }
    }

    #[test]
    fn envelope_matches_naive_scan() {
        let mut rng = KeyedRng::for_stream(42, 0);
        let g = grid(512, 1.0 / 32.0);
        for _ in 0..20 {
            let v: Vec<f64> = (0..g.count).map(|_| 10.0 * rng.next_f64() - 5.0).collect();
            let (u, a) = quadratic_envelope(&v, &g);
            let (nu, na) = naive_envelope(&v, &g);
            for i in 0..g.count {
                assert!(
                    (u[i] - nu[i]).abs() <= 1e-12 * (1.0 + nu[i].abs()),
                    "value mismatch at {i}"
                );
                assert_eq!(a[i], na[i], "argmin mismatch at {i}");
            }
            assert!(a.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn envelope_handles_penalty_plateaus() {
        // A point constraint: huge penalty everywhere except one node.
        let g = grid(101, 0.125);
        let mut v = vec![1e9; 101];
        v[50] = 0.0;
        let (u, a) = quadratic_envelope(&v, &g);
        for i in 0..101 {
            let d = g.x(i) - g.x(50);
            assert_eq!(a[i], 50);
            assert!((u[i] - 0.5 * d * d).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_env_keeps_zero_profile() {
        let env = Environment::zero();
        let g = grid(65, 0.25);
        let w = GridProfile::from_fn(g, 0, |_| 0.0).unwrap();
        let (next, _, flags) = evolve_one(&env, &w, ActionParams::default()).unwrap();
        assert!(next.values.iter().all(|&x| x == 0.0));
        assert_eq!(next.time, 1);
        assert!(!flags.boundary_contact);
    }

    #[test]
    fn single_downward_kick_matches_naive() {
        let env = Environment::from_points(vec![KickPoint {
            tau: 0,
            eta: 0.0,
            xi: -1.0,
            kappa: 1.0,
        }])
        .unwrap();
        let g = grid(257, 1.0 / 32.0);
        let w = GridProfile::from_fn(g, 0, |_| 0.0).unwrap();
        let (next, args, _) = evolve_one(&env, &w, ActionParams::default()).unwrap();
        let v: Vec<f64> = (0..g.count).map(|i| env.potential(0, g.x(i))).collect();
        let (nu, na) = naive_envelope(&v, &g);
        for i in 0..g.count {
            assert!((next.values[i] - nu[i]).abs() <= 1e-12);
            assert_eq!(args[i], na[i]);
        }
    }

    #[test]
    fn evolve_to_same_time_is_identity() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(1)).unwrap();
        let g = grid(65, 0.25);
        let w = GridProfile::from_fn(g, 3, |x| x.abs()).unwrap();
        let run = evolve(&env, &w, 3, ActionParams::default()).unwrap();
        assert_eq!(run.profile, w);
        assert_eq!(run.stack.steps(), 0);
    }

    #[test]
    fn cocycle_split_matches() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(9)).unwrap();
        let g = grid(513, 1.0 / 64.0);
        let w = GridProfile::from_fn(g, 0, |x| 0.3 * x).unwrap();
        let full = evolve(&env, &w, 6, ActionParams::default()).unwrap();
        for mid in 1..6 {
            let first = evolve(&env, &w, mid, ActionParams::default()).unwrap();
            let second = evolve(&env, &first.profile, 6, ActionParams::default()).unwrap();
            for i in 0..g.count {
                assert!(
                    (full.profile.values[i] - second.profile.values[i]).abs() <= 1e-10,
                    "split at {mid}, node {i}"
                );
            }
        }
    }

    #[test]
    fn contraction_ordering() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(15)).unwrap();
        let g = grid(257, 1.0 / 16.0);
        let w1 = GridProfile::from_fn(g, 0, |x| 0.1 * x * x.sin()).unwrap();
        let w2 = GridProfile::from_fn(g, 0, |x| 0.1 * x * x.sin() + 0.7).unwrap();
        let (u1, _, _) = evolve_one(&env, &w1, ActionParams::default()).unwrap();
        let (u2, _, _) = evolve_one(&env, &w2, ActionParams::default()).unwrap();
        for i in 0..g.count {
            assert!(u1.values[i] <= u2.values[i] + 1e-12);
        }
    }

    #[test]
    fn velocity_of_parabola_is_half_slope() {
        let env = Environment::zero();
        let g = grid(513, 1.0 / 64.0);
        let w = GridProfile::from_fn(g, 0, |x| 0.5 * x * x).unwrap();
        let (next, args, _) = evolve_one(&env, &w, ActionParams::default()).unwrap();
        let u = velocity_from(&next, &args);
        for i in 200..313 {
            let x = g.x(i);
            assert!((u.values[i] - 0.5 * x).abs() <= g.h, "u({x}) = {}", u.values[i]);
        }
        u.check_monotone_map().unwrap();
    }

    #[test]
    fn slope_probe_reads_tails() {
        let g = grid(401, 0.05);
        let linear = GridProfile::from_fn(g, 0, |x| -0.7 * x).unwrap();
        let (vm, vp) = slope_probe(&linear);
        assert!((vm + 0.7).abs() < 1e-12);
        assert!((vp + 0.7).abs() < 1e-12);
        let vee = GridProfile::from_fn(g, 0, |x| x.abs()).unwrap();
        let (vm, vp) = slope_probe(&vee);
        assert!((vm + 1.0).abs() < 1e-12);
        assert!((vp - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_argmin_on_random_inputs() {
        let mut rng = KeyedRng::for_stream(5, 5);
        let g = grid(256, 1.0 / 16.0);
        for _ in 0..100 {
            let v: Vec<f64> = (0..g.count).map(|_| rng.next_f64() * 4.0).collect();
            let (_, a) = quadratic_envelope(&v, &g);
            assert!(a.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
