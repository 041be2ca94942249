//! Directed and relative Hausdorff-type distances between point clouds and
//! analytic sets.
//!
//! For clouds every sup and inf is exact. Sups over analytic sets are
//! computed by Lipschitz branch-and-bound ([`sup`]): the returned value is
//! attained at an evaluated point of the set and `error` bounds how far the
//! true sup can lie above it.

pub mod shape;
pub mod sup;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::index::in_ball;
use crate::measure::PointCloud;

pub use shape::{NormalGraph, QuadricSurface, Shape, ShapeDescriptor};

/// A set argument: a finite point set or an analytic shape.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum SetHandle {
    Cloud(Arc<PointCloud>),
    Shape(Shape),
}

impl SetHandle {
    pub fn cloud(points: Vec<Point>) -> Self {
        SetHandle::Cloud(Arc::new(PointCloud::new(points)))
    }

    pub fn shape(s: Shape) -> Self {
        SetHandle::Shape(s)
    }

    pub fn is_empty(&self) -> bool {
        match self {
            SetHandle::Cloud(c) => c.is_empty(),
            SetHandle::Shape(_) => false,
        }
    }

    /// Distance from `p` to the set.
    pub fn distance(&self, p: &Point) -> f64 {
        match self {
            SetHandle::Cloud(c) => c.distance(p),
            SetHandle::Shape(s) => s.distance(p),
        }
    }

    /// Whether the set meets the closed ball B(x, r).
    pub fn meets_ball(&self, x: &Point, r: f64) -> bool {
        match self {
            SetHandle::Cloud(c) => c.tree().nearest(x).is_some_and(|(_, d)| d <= r),
            SetHandle::Shape(s) => in_ball(&s.nearest(x), x, r),
        }
    }
}

/// A value together with a bound on its discretization error: the true
/// quantity lies in [value, value + error] up to the stated tolerances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, error: 0.0 }
    }

    fn scaled(self, c: f64) -> Self {
        Estimate { value: self.value * c, error: self.error * c }
    }

    fn max(self, o: Estimate) -> Self {
        Estimate { value: self.value.max(o.value), error: self.error.max(o.error) }
    }

    pub fn upper(&self) -> f64 {
        self.value + self.error
    }
}

/// Resolution controls for searches over analytic sets.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DistanceOptions {
    /// Target resolution relative to the query radius (h = resolution·r).
    pub resolution: f64,
    /// Maximum number of function evaluations per search.
    pub budget: usize,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions { resolution: 1.0 / 200.0, budget: 40_000 }
    }
}

impl DistanceOptions {
    pub fn coarse() -> Self {
        DistanceOptions { resolution: 1.0 / 50.0, budget: 6_000 }
    }
}

/// Distance-to-set oracle for the second argument of a directed distance,
/// optionally restricted to a closed ball.
enum Target<'a> {
    Cloud(Arc<PointCloud>),
    /// `worst` holds the bits of the largest uncertified gap left by a
    /// clipped nearest-point search.
    Shape {
        shape: &'a Shape,
        ball: Option<(Point, f64)>,
        tol: f64,
        budget: usize,
        worst: AtomicU64,
    },
}

/// Evaluation budget of one clipped nearest-point search.
const NESTED_BUDGET: usize = 200;

impl Target<'_> {
    fn prepare<'a>(set: &'a SetHandle, ball: Option<(Point, f64)>, opts: &DistanceOptions) -> Result<Target<'a>> {
        match set {
            SetHandle::Cloud(c) => {
                if c.is_empty() {
                    return Err(Error::EmptySet);
                }
                match ball {
                    None => Ok(Target::Cloud(c.clone())),
                    Some((x, r)) => {
                        let ids = c.tree().in_ball(&x, r);
                        if ids.is_empty() {
                            Err(Error::empty_intersection(&x, r))
                        } else if ids.len() == c.len() {
                            Ok(Target::Cloud(c.clone()))
                        } else {
                            Ok(Target::Cloud(Arc::new(PointCloud::new(ids.into_iter().map(|i| c.points()[i]).collect()))))
                        }
                    }
                }
            }
            SetHandle::Shape(s) => {
                let (tol, budget) = match ball {
                    Some((x, r)) => {
                        if !in_ball(&s.nearest(&x), &x, r) {
                            return Err(Error::empty_intersection(&x, r));
                        }
                        (opts.resolution * r * 0.25, opts.budget.min(NESTED_BUDGET))
                    }
                    None => (0.0, 0),
                };
                Ok(Target::Shape { shape: s, ball, tol, budget, worst: AtomicU64::new(0) })
            }
        }
    }

    /// Distance to the target; for clipped non-planar shapes whose
    /// nearest point leaves the ball, an attained value within
    /// [`Target::tolerance`] of the true distance.
    fn dist(&self, p: &Point) -> f64 {
        match self {
            Target::Cloud(c) => c.distance(p),
            Target::Shape { shape, ball: None, .. } => shape.distance(p),
            Target::Shape { shape, ball: Some((x, r)), tol, budget, worst } => {
                if let Shape::Plane(pl) = shape {
                    let q = pl.nearest_in_ball(p, x, *r).expect("checked at preparation");
                    return (p - q).norm();
                }
                let q = shape.nearest(p);
                if in_ball(&q, x, *r) {
                    return (p - q).norm();
                }
                let f = |s: &Point| (s - p).norm();
                let seeds = clipped_seeds(shape, &q, x, *r);
                // a feasible seed at distance d confines the minimizer to B(p, d)
                let mut balls = vec![(*x, *r)];
                if let Some(d) = seeds.iter().filter(|s| in_ball(s, x, *r)).map(f).min_by(f64::total_cmp) {
                    balls.push((*p, d * (1.0 + 1e-12) + 1e-300));
                }
                match sup::optimize_in_balls(shape, &balls, &f, false, *tol, *budget, &seeds) {
                    Ok(s) => {
                        worst.fetch_max(s.gap().to_bits(), Ordering::Relaxed);
                        s.value
                    }
                    Err(_) => f64::INFINITY,
                }
            }
        }
    }

    /// How far [`Target::dist`] may overestimate the distance.
    fn tolerance(&self) -> f64 {
        match self {
            Target::Shape { ball: Some(_), tol, shape, worst, .. } if !matches!(shape, Shape::Plane(_)) => {
                tol.max(f64::from_bits(worst.load(Ordering::Relaxed)))
            }
            _ => 0.0,
        }
    }
}

/// Points of shape ∩ B(x, r) near the unconstrained nearest point `q`,
/// used as incumbents for the constrained search.
fn clipped_seeds(shape: &Shape, q: &Point, x: &Point, r: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(2);
    let d = q - x;
    let n = d.norm();
    if n > 0.0 {
        out.push(shape.nearest(&(x + d * (r / n))));
    }
    if let Shape::Cone(c) = shape {
        // the cone ray through q, clipped to the ball: points y + λ(q − y)
        let y = c.base();
        let v = q - y;
        let vv = v.norm_squared();
        if vv > 0.0 {
            // |y + λv − x|² ≤ r² is an interval in λ; take the end nearest 1
            let w = y - x;
            let bq = 2.0 * v.dot(&w);
            let cq = w.norm_squared() - r * r;
            let disc = bq * bq - 4.0 * vv * cq;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let lo = (-bq - sq) / (2.0 * vv);
                let hi = (-bq + sq) / (2.0 * vv);
                let lam = 1.0f64.clamp(lo, hi);
                let mut p = y + v * lam;
                if !in_ball(&p, x, r) {
                    let e = p - x;
                    p = x + e * (r / e.norm()) * (1.0 - 1e-15);
                    p = c.nearest(&p);
                }
                out.push(p);
            }
        }
    }
    out
}

/// sup over source ∩ ball (or all of source) of the target distance.
fn directed_sup(source: &SetHandle, ball: Option<(Point, f64)>, target: &Target, opts: &DistanceOptions) -> Result<Estimate> {
    match source {
        SetHandle::Cloud(c) => {
            if c.is_empty() {
                return Err(Error::EmptySet);
            }
            let ids: Vec<usize> = match ball {
                None => (0..c.len()).collect(),
                Some((x, r)) => {
                    let ids = c.tree().in_ball(&x, r);
                    if ids.is_empty() {
                        return Err(Error::empty_intersection(&x, r));
                    }
                    ids
                }
            };
            let pts = c.points();
            let v = ids.par_iter().map(|&i| target.dist(&pts[i])).reduce(|| f64::NEG_INFINITY, f64::max);
            Ok(Estimate { value: v, error: target.tolerance() })
        }
        SetHandle::Shape(s) => {
            let (x, r) = ball.ok_or(Error::UnboundedSet)?;
            let f = |p: &Point| target.dist(p);
            let tol = opts.resolution * r;
            let out = sup::optimize_on_shape(s, &x, r, &f, true, tol, opts.budget, &[])?;
            Ok(Estimate { value: out.value, error: out.gap() + target.tolerance() })
        }
    }
}

/// d(A, B) = sup_{a∈A} dist(a, B). Analytic A must be bounded, which none
/// of the supported shapes is.
pub fn directed_distance(a: &SetHandle, b: &SetHandle) -> Result<Estimate> {
    let opts = DistanceOptions::default();
    if b.is_empty() || a.is_empty() {
        return Err(Error::EmptySet);
    }
    let t = Target::prepare(b, None, &opts)?;
    directed_sup(a, None, &t, &opts)
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("radius must be positive and finite, got {r}")))
    }
}

/// d^{x,r}(A, B) = d(A ∩ B(x,r), B ∩ B(x,r)) / r.
pub fn relative_directed(x: &Point, r: f64, a: &SetHandle, b: &SetHandle) -> Result<Estimate> {
    relative_directed_with(x, r, a, b, &DistanceOptions::default())
}

pub fn relative_directed_with(x: &Point, r: f64, a: &SetHandle, b: &SetHandle, opts: &DistanceOptions) -> Result<Estimate> {
    check_radius(r)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let t = Target::prepare(b, Some((*x, r)), opts)?;
    Ok(directed_sup(a, Some((*x, r)), &t, opts)?.scaled(1.0 / r))
}

/// D^{x,r}(A, B) = max(d^{x,r}(A, B), d^{x,r}(B, A)).
pub fn relative_hausdorff(x: &Point, r: f64, a: &SetHandle, b: &SetHandle) -> Result<Estimate> {
    relative_hausdorff_with(x, r, a, b, &DistanceOptions::default())
}

pub fn relative_hausdorff_with(x: &Point, r: f64, a: &SetHandle, b: &SetHandle, opts: &DistanceOptions) -> Result<Estimate> {
    let ab = relative_directed_with(x, r, a, b, opts)?;
    let ba = relative_directed_with(x, r, b, a, opts)?;
    Ok(ab.max(ba))
}

/// d̃^{x,r}(A, B) = d(A ∩ B(x,r), B) / r, with B unclipped.
pub fn modified_directed(x: &Point, r: f64, a: &SetHandle, b: &SetHandle) -> Result<Estimate> {
    modified_directed_with(x, r, a, b, &DistanceOptions::default())
}

pub fn modified_directed_with(x: &Point, r: f64, a: &SetHandle, b: &SetHandle, opts: &DistanceOptions) -> Result<Estimate> {
    check_radius(r)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let t = Target::prepare(b, None, opts)?;
    Ok(directed_sup(a, Some((*x, r)), &t, opts)?.scaled(1.0 / r))
}

/// D̃^{x,r}(A, B) = max(d̃^{x,r}(A, B), d̃^{x,r}(B, A)).
pub fn modified_hausdorff(x: &Point, r: f64, a: &SetHandle, b: &SetHandle) -> Result<Estimate> {
    modified_hausdorff_with(x, r, a, b, &DistanceOptions::default())
}

pub fn modified_hausdorff_with(x: &Point, r: f64, a: &SetHandle, b: &SetHandle, opts: &DistanceOptions) -> Result<Estimate> {
    let ab = modified_directed_with(x, r, a, b, opts)?;
    let ba = modified_directed_with(x, r, b, a, opts)?;
    Ok(ab.max(ba))
}

/// Nearest-in-tube ray search on a cloud: among points within `tube` of
/// the segment {a + t·dir : |t| ≤ window}, the one with the smallest
/// perpendicular offset (ties by smaller |t|). Returns (point, t).
pub fn ray_intersect_cloud(cloud: &PointCloud, a: &Point, dir: &Point, window: f64, tube: f64) -> Option<(Point, f64)> {
    if cloud.is_empty() {
        return None;
    }
    let u = dir.normalize();
    let ids = cloud.tree().in_ball(a, (window * window + tube * tube).sqrt());
    let mut best: Option<(f64, f64, usize)> = None;
    for i in ids {
        let p = cloud.points()[i];
        let t = (p - a).dot(&u);
        if t.abs() > window {
            continue;
        }
        let off = (p - a - u * t).norm();
        if off > tube {
            continue;
        }
        let better = match best {
            None => true,
            Some((bo, bt, bi)) => off < bo || (off == bo && (t.abs() < bt.abs() || (t.abs() == bt.abs() && i < bi))),
        };
        if better {
            best = Some((off, t, i));
        }
    }
    best.map(|(_, t, i)| (cloud.points()[i], t))
}

/// Ray search on any set: exact root for analytic shapes, tube search for
/// clouds.
pub fn ray_intersect(set: &SetHandle, a: &Point, dir: &Point, window: f64, tube: f64) -> Option<(Point, f64)> {
    match set {
        SetHandle::Cloud(c) => ray_intersect_cloud(c, a, dir, window, tube),
        SetHandle::Shape(s) => {
            let u = dir.normalize();
            s.ray_hit(a, &u, window).map(|t| (a + u * t, t))
        }
    }
}
