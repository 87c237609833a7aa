//! Kick profile shapes.

use serde::{Deserialize, Serialize};

/// Shape of a single kick, as a function of the scaled offset `y = (x-eta)/kappa`.
///
/// Required properties: even, differentiable, support contained in `(-1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bump {
    /// `(1 - y^2)^2` on `|y| < 1`, zero outside. Closed-form derivatives.
    #[default]
    Quartic,
}

impl Bump {
    #[inline]
    pub fn eval(self, y: f64) -> f64 {
        match self {
            Bump::Quartic => {
                if y.abs() < 1.0 {
                    let t = 1.0 - y * y;
                    t * t
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn d1(self, y: f64) -> f64 {
        match self {
            Bump::Quartic => {
                if y.abs() < 1.0 {
                    -4.0 * y * (1.0 - y * y)
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn d2(self, y: f64) -> f64 {
        match self {
            Bump::Quartic => {
                if y.abs() < 1.0 {
                    12.0 * y * y - 4.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_values() {
        let b = Bump::Quartic;
        assert_eq!(b.eval(0.0), 1.0);
        assert_eq!(b.eval(1.0), 0.0);
        assert_eq!(b.eval(-1.0), 0.0);
        assert_eq!(b.eval(2.0), 0.0);
        assert_eq!(b.eval(0.5), 0.5625);
        assert_eq!(b.d1(0.0), 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = Bump::Quartic;
        let h = 1e-6;
        for k in -9..=9 {
            let y = k as f64 * 0.1 + 0.013;
            let fd1 = (b.eval(y + h) - b.eval(y - h)) / (2.0 * h);
            let fd2 = (b.d1(y + h) - b.d1(y - h)) / (2.0 * h);
            assert!((b.d1(y) - fd1).abs() < 1e-8, "d1 at {y}");
            assert!((b.d2(y) - fd2).abs() < 1e-7, "d2 at {y}");
        }
    }

    #[test]
    fn even_symmetry() {
        let b = Bump::Quartic;
        for k in 0..20 {
            let y = k as f64 * 0.07;
            assert_eq!(b.eval(y), b.eval(-y));
            assert_eq!(b.d1(y), -b.d1(-y));
        }
    }
}
