//! Path actions: kinetic and potential parts, Euler-Lagrange stepping and
//! residuals, and the path statistics used by the growth estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Environment;

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("degenerate path: needs at least two points")]
    DegeneratePath,
}

/// A particle trajectory: positions at consecutive integer times starting at
/// `start_time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub start_time: i64,
    pub positions: Vec<f64>,
}

impl Path {
    pub fn new(start_time: i64, positions: Vec<f64>) -> Self {
        assert!(!positions.is_empty(), "path must hold at least one point");
        Path { start_time, positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end_time(&self) -> i64 {
        self.start_time + self.positions.len() as i64 - 1
    }

    /// Position at integer time `t`, if the path covers it.
    pub fn at(&self, t: i64) -> Option<f64> {
        if t < self.start_time || t > self.end_time() {
            return None;
        }
        Some(self.positions[(t - self.start_time) as usize])
    }

    /// Restriction to `[t0, t1]` (inclusive); both must lie in range.
    pub fn restrict(&self, t0: i64, t1: i64) -> Option<Path> {
        if t0 < self.start_time || t1 > self.end_time() || t0 > t1 {
            return None;
        }
        let a = (t0 - self.start_time) as usize;
        let b = (t1 - self.start_time) as usize;
        Some(Path::new(t0, self.positions[a..=b].to_vec()))
    }
}

/// Endpoint weighting of the potential action. `p = 1` charges the departure
/// kick of every step, `p = 0` the arrival kick; intermediate values blend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionParams {
    pub p: f64,
}

impl Default for ActionParams {
    fn default() -> Self {
        ActionParams { p: 1.0 }
    }
}

impl ActionParams {
    pub fn new(p: f64) -> Self {
        assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1]");
        ActionParams { p }
    }
}

/// `S(gamma) = 1/2 sum (gamma_{k+1} - gamma_k)^2`.
pub fn kinetic_action(path: &Path) -> Result<f64, ActionError> {
    if path.len() < 2 {
        return Err(ActionError::DegeneratePath);
    }
    let mut s = 0.0;
    for w in path.positions.windows(2) {
        let d = w[1] - w[0];
        s += 0.5 * d * d;
    }
    Ok(s)
}

/// `p F(n0, gamma_{n0}) + sum_{interior} F(k, gamma_k) + (1-p) F(n1, gamma_{n1})`.
pub fn potential_action(
    env: &Environment,
    path: &Path,
    params: ActionParams,
) -> Result<f64, ActionError> {
    if path.len() < 2 {
        return Err(ActionError::DegeneratePath);
    }
    let n0 = path.start_time;
    let n1 = path.end_time();
    let mut s = params.p * env.potential(n0, path.positions[0]);
    for k in n0 + 1..n1 {
        s += env.potential(k, path.positions[(k - n0) as usize]);
    }
    s += (1.0 - params.p) * env.potential(n1, path.positions[path.len() - 1]);
    Ok(s)
}

/// Full action: initial potential (if any) plus kinetic plus forcing terms.
pub fn total_action(
    env: &Environment,
    path: &Path,
    params: ActionParams,
    initial: Option<&dyn Fn(f64) -> f64>,
) -> Result<f64, ActionError> {
    let w = initial.map_or(0.0, |f| f(path.positions[0]));
    Ok(w + kinetic_action(path)? + potential_action(env, path, params)?)
}

/// One Euler-Lagrange step: `gamma_{k+1} = 2 gamma_k - gamma_{k-1} + f(k, gamma_k)`.
pub fn el_step(env: &Environment, k: i64, gamma_km1: f64, gamma_k: f64) -> f64 {
    2.0 * gamma_k - gamma_km1 + env.force(k, gamma_k)
}

/// Max over interior times of the Euler-Lagrange defect
/// `|gamma_{k+1} - 2 gamma_k + gamma_{k-1} - f(k, gamma_k)|`. Zero exactly on
/// stationary paths.
pub fn el_residual(env: &Environment, path: &Path) -> f64 {
    let n0 = path.start_time;
    let mut worst = 0.0f64;
    for j in 1..path.len().saturating_sub(1) {
        let k = n0 + j as i64;
        let defect = path.positions[j + 1] - 2.0 * path.positions[j] + path.positions[j - 1]
            - env.force(k, path.positions[j]);
        worst = worst.max(defect.abs());
    }
    worst
}

/// Cell-crossing count `Sigma(gamma) = sum_j (|floor(gamma_{j+1}) - floor(gamma_j)| + 1)`.
///
/// The floor convention for the integer part is deliberate and fixed here.
pub fn sigma_statistic(path: &Path) -> u64 {
    path.positions
        .windows(2)
        .map(|w| (w[1].floor() as i64 - w[0].floor() as i64).unsigned_abs() + 1)
        .sum()
}

/// `max_k |gamma_k - gamma_{n0}|`.
pub fn max_excursion(path: &Path) -> f64 {
    let origin = path.positions[0];
    path.positions
        .iter()
        .map(|&x| (x - origin).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvironmentConfig, KickPoint};

    fn path(t0: i64, xs: &[f64]) -> Path {
        Path::new(t0, xs.to_vec())
    }

    #[test]
    fn kinetic_examples() {
        assert_eq!(kinetic_action(&path(0, &[0.0, 1.0])).unwrap(), 0.5);
        assert_eq!(kinetic_action(&path(0, &[0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(kinetic_action(&path(0, &[0.0, 1.0, 3.0])).unwrap(), 2.5);
    }

    #[test]
    fn degenerate_path_is_an_error() {
        assert!(matches!(
            kinetic_action(&path(0, &[1.0])),
            Err(ActionError::DegeneratePath)
        ));
        let env = Environment::zero();
        assert!(potential_action(&env, &path(0, &[1.0]), ActionParams::default()).is_err());
    }

    #[test]
    fn potential_action_zero_env() {
        let env = Environment::zero();
        assert_eq!(
            potential_action(&env, &path(0, &[0.3, -0.7, 2.0]), ActionParams::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn potential_action_two_step_p1() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(3)).unwrap();
        let g = path(2, &[0.1, 0.4, 0.9]);
        let got = potential_action(&env, &g, ActionParams::new(1.0)).unwrap();
        let want = env.potential(2, 0.1) + env.potential(3, 0.4);
        assert_eq!(got, want);
    }

    #[test]
    fn p_zero_vs_p_one_differ_by_endpoint_terms() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(7)).unwrap();
        let g = path(-1, &[0.25, -0.5, 1.75, 0.0]);
        let a1 = potential_action(&env, &g, ActionParams::new(1.0)).unwrap();
        let a0 = potential_action(&env, &g, ActionParams::new(0.0)).unwrap();
        let want = env.potential(-1, 0.25) - env.potential(2, 0.0);
        assert!((a1 - a0 - want).abs() < 1e-15);
    }

    #[test]
    fn total_action_zero_env_line() {
        let env = Environment::zero();
        let a = total_action(&env, &path(0, &[0.0, 1.0]), ActionParams::default(), None).unwrap();
        assert_eq!(a, 0.5);
        let w = |x: f64| x;
        let a = total_action(
            &env,
            &path(0, &[2.0, 2.0]),
            ActionParams::default(),
            Some(&w),
        )
        .unwrap();
        assert_eq!(a, 2.0);
    }

    #[test]
    fn total_action_matches_termwise_recount() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(17)).unwrap();
        let params = ActionParams::new(0.5);
        let g = path(1, &[0.0, 0.7, -0.4, 0.3, 1.1]);
        let w = |x: f64| 0.5 * x * x;
        let got = total_action(&env, &g, params, Some(&w)).unwrap();
        // independent term-by-term recount
        let mut want = w(g.positions[0]);
        for j in 0..g.len() - 1 {
            let d = g.positions[j + 1] - g.positions[j];
            want += 0.5 * d * d;
            let k = g.start_time + j as i64;
            want += params.p * env.potential(k, g.positions[j]);
            want += (1.0 - params.p) * env.potential(k + 1, g.positions[j + 1]);
        }
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn el_step_straight_line_in_zero_env() {
        let env = Environment::zero();
        assert_eq!(el_step(&env, 0, 0.0, 1.0), 2.0);
    }

    #[test]
    fn el_step_single_bump_hand_value() {
        let env = Environment::from_points(vec![KickPoint {
            tau: 0,
            eta: 0.0,
            xi: 1.0,
            kappa: 1.0,
        }])
        .unwrap();
        // f(0, 0.5) = phi'(0.5) = -4 * 0.5 * 0.75 = -1.5
        let got = el_step(&env, 0, 0.0, 0.5);
        assert!((got - (2.0 * 0.5 - 0.0 - 1.5)).abs() < 1e-15);
    }

    #[test]
    fn el_residual_detects_perturbations() {
        let env = Environment::zero();
        let line = path(0, &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(el_residual(&env, &line), 0.0);
        let mut bent = line.clone();
        let eps = 1e-3;
        bent.positions[2] += eps;
        assert!(el_residual(&env, &bent) >= eps);
    }

    #[test]
    fn iterated_el_step_has_zero_residual() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(5)).unwrap();
        let mut xs = vec![0.0, 0.3];
        for j in 1..10 {
            let k = j as i64;
            let next = el_step(&env, k, xs[j - 1], xs[j]);
            xs.push(next);
        }
        let g = path(0, &xs);
        assert!(el_residual(&env, &g) <= 1e-12);
    }

    #[test]
    fn sigma_and_excursion_examples() {
        assert_eq!(sigma_statistic(&path(0, &[0.0, 0.0, 0.0])), 2);
        assert_eq!(max_excursion(&path(0, &[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(sigma_statistic(&path(0, &[0.0, 2.5])), 3);
        // negative coordinates use floor, not truncation
        assert_eq!(sigma_statistic(&path(0, &[0.0, -0.5])), 2);
    }

    #[test]
    fn kinetic_shear_identity_is_exact() {
        // S(gamma + a + v n) - S(gamma) = (gamma_end - gamma_start) v + (n1-n0) v^2 / 2
        let g = path(2, &[0.4, -1.3, 0.9, 2.2, 1.7]);
        let (a, v) = (0.75, -0.5);
        let sheared = Path::new(
            g.start_time,
            g.positions
                .iter()
                .enumerate()
                .map(|(j, &x)| x + a + v * (g.start_time + j as i64) as f64)
                .collect(),
        );
        let lhs = kinetic_action(&sheared).unwrap() - kinetic_action(&g).unwrap();
        let steps = (g.len() - 1) as f64;
        let rhs = (g.positions[g.len() - 1] - g.positions[0]) * v + steps * v * v / 2.0;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn action_splits_across_midpoint() {
        let env = Environment::new(EnvironmentConfig::default().with_seed(23)).unwrap();
        let params = ActionParams::new(0.3);
        let g = path(0, &[0.0, 0.4, -0.2, 0.9, 1.4, 0.3, -0.8]);
        let whole = kinetic_action(&g).unwrap() + potential_action(&env, &g, params).unwrap();
        for mid in 1..g.len() - 1 {
            let t = g.start_time + mid as i64;
            let left = g.restrict(g.start_time, t).unwrap();
            let right = g.restrict(t, g.end_time()).unwrap();
            let sum = kinetic_action(&left).unwrap()
                + potential_action(&env, &left, params).unwrap()
                + kinetic_action(&right).unwrap()
                + potential_action(&env, &right, params).unwrap();
            assert!((whole - sum).abs() < 1e-12, "split at {t}");
        }
    }
}
