//! Derivative-free coordinate descent with step halving, used by the plane
//! and cone fits.

use crate::geom::{complement_basis, Point};

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct DescentStats {
    pub evaluations: usize,
    pub accepted: usize,
    pub final_step: f64,
}

/// Minimizes `f` starting from `x0` (with known value `f0`). `moves(x, k, d)`
/// returns the state moved by `d` along direction `k < ndirs`. The step is
/// halved whenever no direction improves, until it drops below `tol` or
/// `max_evals` evaluations are spent.
#[allow(clippy::too_many_arguments)]
pub fn coordinate_descent<S: Clone>(
    x0: S,
    f0: f64,
    ndirs: usize,
    step0: f64,
    tol: f64,
    max_evals: usize,
    moves: impl Fn(&S, usize, f64) -> S,
    mut f: impl FnMut(&S) -> f64,
) -> (S, f64, DescentStats) {
    let mut x = x0;
    let mut fx = f0;
    let mut step = step0;
    let mut stats = DescentStats::default();
    while step >= tol && stats.evaluations < max_evals {
        let mut improved = false;
        'dirs: for k in 0..ndirs {
            for sgn in [1.0, -1.0] {
                let c = moves(&x, k, sgn * step);
                let fc = f(&c);
                stats.evaluations += 1;
                if fc < fx {
                    x = c;
                    fx = fc;
                    stats.accepted += 1;
                    improved = true;
                    break 'dirs;
                }
                if stats.evaluations >= max_evals {
                    break 'dirs;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    stats.final_step = step;
    (x, fx, stats)
}

/// Moves a unit vector by angle `d` along the k-th vector of the
/// deterministic tangent basis at `v`.
pub fn sphere_move(v: &Point, k: usize, d: f64) -> Point {
    let t = complement_basis(&[*v]);
    (v * d.cos() + t[k] * d.sin()).normalize()
}
