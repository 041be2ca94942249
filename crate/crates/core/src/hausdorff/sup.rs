//! Lipschitz branch-and-bound over the parametrization of an analytic set
//! intersected with a closed ball.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::index::in_ball;

use super::shape::Shape;

/// Outcome of a bounded search: `value` is attained at `arg`, the true
/// optimum lies between `value` and `bound`.
#[derive(Clone, Debug)]
pub struct Search {
    pub value: f64,
    pub bound: f64,
    pub arg: Point,
    pub evals: usize,
}

impl Search {
    pub fn gap(&self) -> f64 {
        (self.bound - self.value).abs()
    }
}

struct Cell {
    key: f64,
    patch: usize,
    lo: [f64; 4],
    hi: [f64; 4],
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cell {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.total_cmp(&o.key)
    }
}

/// sup (or inf, when `maximize` is false) of a 1-Lipschitz function `f`
/// over shape ∩ B(x, r). Stops when the certified gap is at most `tol` or
/// after `budget` evaluations. `seeds` are extra points of the shape tried
/// first (ignored when outside the ball).
#[allow(clippy::too_many_arguments)]
pub fn optimize_on_shape(
    shape: &Shape,
    x: &Point,
    r: f64,
    f: &(dyn Fn(&Point) -> f64 + Sync),
    maximize: bool,
    tol: f64,
    budget: usize,
    seeds: &[Point],
) -> Result<Search> {
    optimize_in_balls(shape, &[(*x, r)], f, maximize, tol, budget, seeds)
}

/// As [`optimize_on_shape`] over shape ∩ ⋂ B(cᵢ, rᵢ). The parameter boxes
/// cover the smallest ball.
pub fn optimize_in_balls(
    shape: &Shape,
    balls: &[(Point, f64)],
    f: &(dyn Fn(&Point) -> f64 + Sync),
    maximize: bool,
    tol: f64,
    budget: usize,
    seeds: &[Point],
) -> Result<Search> {
    let (x, r) = *balls.iter().min_by(|a, b| a.1.total_cmp(&b.1)).ok_or_else(|| Error::Invalid("no constraint ball".into()))?;
    let x = &x;
    let feasible = |p: &Point| balls.iter().all(|(c, rad)| in_ball(p, c, *rad));
    let anchor = std::iter::once(shape.nearest(x))
        .chain(seeds.iter().copied())
        .find(|p| feasible(p))
        .ok_or_else(|| Error::empty_intersection(x, r))?;
    let sgn = if maximize { 1.0 } else { -1.0 };
    let mut best = sgn * f(&anchor);
    let mut arg = anchor;
    let mut evals = 1usize;
    for p in seeds {
        if feasible(p) {
            let v = sgn * f(p);
            evals += 1;
            if v > best {
                best = v;
                arg = *p;
            }
        }
    }
    let patches = shape.patches(x, r)?;
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Cell>, best: &mut f64, arg: &mut Point, evals: &mut usize, pi: usize, lo: [f64; 4], hi: [f64; 4]| {
        let p = &patches[pi];
        let mut c = [0.0; 4];
        let mut hd2 = 0.0;
        for i in 0..p.dim {
            c[i] = 0.5 * (lo[i] + hi[i]);
            hd2 += (0.5 * (hi[i] - lo[i])).powi(2);
        }
        let rho = p.lip * hd2.sqrt();
        let img = shape.eval(x, p.id, &c);
        *evals += 1;
        if balls.iter().any(|(c, rad)| (img - c).norm() > rad + rho) {
            return;
        }
        let v = sgn * f(&img);
        if feasible(&img) && v > *best {
            *best = v;
            *arg = img;
        }
        heap.push(Cell { key: v + rho, patch: pi, lo, hi });
    };
    for (pi, p) in patches.iter().enumerate() {
        push(&mut heap, &mut best, &mut arg, &mut evals, pi, p.lo, p.hi);
    }
    let mut bound = best;
    while let Some(cell) = heap.pop() {
        if cell.key <= best + tol {
            bound = bound.max(cell.key);
            break;
        }
        if evals >= budget {
            bound = bound.max(cell.key);
            break;
        }
        let dim = patches[cell.patch].dim;
        let k = (0..dim).max_by(|&a, &b| (cell.hi[a] - cell.lo[a]).total_cmp(&(cell.hi[b] - cell.lo[b]))).unwrap_or(0);
        let mid = 0.5 * (cell.lo[k] + cell.hi[k]);
        let mut h1 = cell.hi;
        h1[k] = mid;
        let mut l2 = cell.lo;
        l2[k] = mid;
        push(&mut heap, &mut best, &mut arg, &mut evals, cell.patch, cell.lo, h1);
        push(&mut heap, &mut best, &mut arg, &mut evals, cell.patch, l2, cell.hi);
    }
    bound = bound.max(best);
    Ok(Search { value: sgn * best, bound: sgn * bound, arg, evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::e;
    use crate::kpcone::KpCone;
    use crate::planes::AffinePlane;

    #[test]
    fn sup_of_height_on_disk() {
        // plane x1 = 0 in B(0, 1): sup of |x4| is 1
        let s = Shape::Plane(AffinePlane::hyperplane(Point::zeros(), e(0)).unwrap());
        let f = |p: &Point| p[3].abs();
        let out = optimize_on_shape(&s, &Point::zeros(), 1.0, &f, true, 1e-4, 100_000, &[]).unwrap();
        assert!(out.value <= 1.0 && out.value > 1.0 - 1e-3, "{out:?}");
        assert!(out.bound >= 1.0);
    }

    #[test]
    fn sup_on_cone_matches_closed_form() {
        // distance to the plane {x4 = 0} over C ∩ B(0, 1) is max |x4| = 1/√2
        let s = Shape::Cone(KpCone::canonical());
        let f = |p: &Point| p[3].abs();
        let out = optimize_on_shape(&s, &Point::zeros(), 1.0, &f, true, 1e-4, 200_000, &[]).unwrap();
        let want = std::f64::consts::FRAC_1_SQRT_2;
        assert!(out.value <= want + 1e-12 && out.value > want - 2e-4, "{out:?}");
        assert!(out.bound >= want - 1e-12);
    }

    #[test]
    fn inf_finds_constrained_minimum() {
        // min of |p − q| over the plane x4 = 0 within B(0, 1), q = (3, 0, 0, 1)
        let s = Shape::Plane(AffinePlane::hyperplane(Point::zeros(), e(3)).unwrap());
        let q = Point::new(3.0, 0.0, 0.0, 1.0);
        let f = move |p: &Point| (p - q).norm();
        let out = optimize_on_shape(&s, &Point::zeros(), 1.0, &f, false, 1e-6, 100_000, &[]).unwrap();
        let want = (4.0f64 + 1.0).sqrt();
        // the budget runs out before 1e-6; the certificate must still bracket the optimum
        assert!(out.value >= want - 1e-12 && out.value < want + 2e-4, "{out:?}");
        assert!(out.bound <= want + 1e-12);
        // seeded with the minimizer, as the clipped-distance callers do
        let out = optimize_on_shape(&s, &Point::zeros(), 1.0, &f, false, 1e-6, 100_000, &[e(0)]).unwrap();
        assert!((out.value - want).abs() < 1e-12 && out.bound <= want + 1e-12, "{out:?}");
    }

    #[test]
    fn disjoint_ball_is_error() {
        let s = Shape::Cone(KpCone::canonical());
        let f = |p: &Point| p.norm();
        let err = optimize_on_shape(&s, &e(3), 0.1, &f, true, 1e-3, 1000, &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyIntersection { .. }));
    }
}
