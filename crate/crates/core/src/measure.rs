//! Discrete measures: weighted point clouds, ball masses, doubling and
//! uniformity deviations, density normalization.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{omega, pairwise_sum, Mat4, Point};
use crate::index::KdTree;

/// Immutable point set with its spatial index.
#[derive(Clone, Debug)]
pub struct PointCloud {
    points: Vec<Point>,
    tree: KdTree,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        let tree = KdTree::new(&points);
        PointCloud { points, tree }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `q` to the nearest cloud point (infinite when empty).
    pub fn distance(&self, q: &Point) -> f64 {
        self.tree.nearest(q).map_or(f64::INFINITY, |(_, d)| d)
    }

    /// The subset lying in the closed ball B(x, r), in original order.
    pub fn clip(&self, x: &Point, r: f64) -> PointCloud {
        let ids = self.tree.in_ball(x, r);
        PointCloud::new(ids.into_iter().map(|i| self.points[i]).collect())
    }

    /// Median nearest-neighbour spacing (subsampled); zero for < 2 points.
    pub fn spacing(&self) -> f64 {
        self.tree.median_spacing(512).unwrap_or(0.0)
    }
}

/// Anything that can report μ(B(x, r)).
pub trait BallMass: Sync {
    fn ball_mass(&self, x: &Point, r: f64) -> f64;
    /// Comparison dimension m.
    fn dimension(&self) -> usize;
    /// μ(B(x, τr))/μ(B(x, r)) given the denominator.
    fn mass_ratio(&self, x: &Point, r: f64, tau: f64, denom: f64) -> f64 {
        self.ball_mass(x, tau * r) / denom
    }
}

/// Closed-form m-uniform measure: μ(B(x, r)) = ω_m r^m for every x on its
/// support. For the KP cone (m = 3) this is the exact ball mass of H³⌞C.
#[derive(Clone, Copy, Debug)]
pub struct ExactUniformMass {
    pub dimension: usize,
}

impl BallMass for ExactUniformMass {
    fn ball_mass(&self, _x: &Point, r: f64) -> f64 {
        omega(self.dimension) * r.powi(self.dimension as i32)
    }
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn mass_ratio(&self, _x: &Point, _r: f64, tau: f64, _denom: f64) -> f64 {
        tau.powi(self.dimension as i32)
    }
}

/// Weighted point cloud representing μ; the support Σ is the set of points
/// with positive weight.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    cloud: Arc<PointCloud>,
    weights: Vec<f64>,
    dimension: usize,
}

/// Options for rescaling a measure so that μ(B(anchor, r_ref)) = ω_m r_ref^m.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Calibration {
    /// Defaults to the support point nearest the weighted centroid.
    pub anchor: Option<Point>,
    /// Defaults to a quarter of the cloud radius about the centroid.
    pub r_ref: Option<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Point>, weights: Vec<f64>, dimension: usize) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Invalid(format!("{} points but {} weights", points.len(), weights.len())));
        }
        if !(1..=4).contains(&dimension) {
            return Err(Error::Invalid(format!("comparison dimension {dimension} not in 1..=4")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Invalid(format!("weights must be finite and nonnegative, got {w}")));
        }
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Invalid("non-finite coordinate".into()));
        }
        let total = pairwise_sum(&weights);
        if total <= 0.0 {
            return Err(Error::ZeroMass { center: "total".into(), radius: f64::INFINITY });
        }
        Ok(DiscreteMeasure { cloud: Arc::new(PointCloud::new(points)), weights, dimension })
    }

    /// Unit weights, m = 3.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w, 3)
    }

    pub fn points(&self) -> &[Point] {
        self.cloud.points()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cloud(&self) -> &Arc<PointCloud> {
        &self.cloud
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Points with positive weight.
    pub fn support(&self) -> Vec<Point> {
        self.points().iter().zip(&self.weights).filter(|(_, w)| **w > 0.0).map(|(p, _)| *p).collect()
    }

    /// Σ as a point-cloud set handle (shares the index when all weights are
    /// positive).
    pub fn support_set(&self) -> crate::hausdorff::SetHandle {
        if self.weights.iter().all(|w| *w > 0.0) {
            crate::hausdorff::SetHandle::Cloud(self.cloud.clone())
        } else {
            crate::hausdorff::SetHandle::cloud(self.support())
        }
    }

    /// Indices of points in the closed ball, sorted.
    pub fn indices_in_ball(&self, x: &Point, r: f64) -> Vec<usize> {
        self.cloud.tree().in_ball(x, r)
    }

    /// Same points, weights multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Invalid(format!("scale factor must be positive, got {c}")));
        }
        Ok(DiscreteMeasure { cloud: self.cloud.clone(), weights: self.weights.iter().map(|w| w * c).collect(), dimension: self.dimension })
    }

    /// Push-forward under the isometry p ↦ O p + v.
    pub fn transformed(&self, o: &Mat4, v: &Point) -> Self {
        let pts = self.points().iter().map(|p| o * p + v).collect();
        DiscreteMeasure { cloud: Arc::new(PointCloud::new(pts)), weights: self.weights.clone(), dimension: self.dimension }
    }

    /// Weighted centroid.
    pub fn centroid(&self) -> Point {
        let terms: Vec<Point> = self.points().iter().zip(&self.weights).map(|(p, w)| p * *w).collect();
        crate::geom::pairwise_reduce(&terms, Point::zeros()) / self.total_mass()
    }

    /// Rescales all weights so that μ(B(anchor, r_ref)) = ω_m r_ref^m.
    pub fn calibrated(&self, cal: &Calibration) -> Result<Self> {
        let c = self.centroid();
        let anchor = match cal.anchor {
            Some(a) => a,
            None => {
                let support = self.support();
                let tree = KdTree::new(&support);
                let (i, _) = tree.nearest(&c).ok_or(Error::EmptySet)?;
                support[i]
            }
        };
        let r_ref = match cal.r_ref {
            Some(r) => r,
            None => {
                let radius = self.support().iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
                radius / 4.0
            }
        };
        if !(r_ref.is_finite() && r_ref > 0.0) {
            return Err(Error::Invalid(format!("reference radius must be positive, got {r_ref}")));
        }
        let m = self.ball_mass(&anchor, r_ref);
        if m <= 0.0 {
            return Err(Error::zero_mass(&anchor, r_ref));
        }
        let target = omega(self.dimension) * r_ref.powi(self.dimension as i32);
        self.scaled(target / m)
    }

    /// μ⌞(1/f̂) with the finite-scale density proxy
    /// f̂(p) = μ(B(p, r_density)) / (ω_m r_density^m).
    pub fn normalize_density(&self, r_density: f64) -> Result<Self> {
        if !(r_density.is_finite() && r_density > 0.0) {
            return Err(Error::Invalid(format!("r_density must be positive, got {r_density}")));
        }
        let denom = omega(self.dimension) * r_density.powi(self.dimension as i32);
        let new_w: Vec<Result<f64>> = self
            .points()
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(p, &w)| {
                if w == 0.0 {
                    return Ok(0.0);
                }
                let f = self.ball_mass(p, r_density) / denom;
                if f <= 0.0 {
                    Err(Error::zero_mass(p, r_density))
                } else {
                    Ok(w / f)
                }
            })
            .collect();
        let weights = new_w.into_iter().collect::<Result<Vec<f64>>>()?;
        Ok(DiscreteMeasure { cloud: self.cloud.clone(), weights, dimension: self.dimension })
    }
}

impl BallMass for DiscreteMeasure {
    /// Sum of weights of points in the closed ball, summed in index order by
    /// a fixed pairwise tree.
    fn ball_mass(&self, x: &Point, r: f64) -> f64 {
        let ids = self.cloud.tree().in_ball(x, r);
        let ws: Vec<f64> = ids.iter().map(|&i| self.weights[i]).collect();
        pairwise_sum(&ws)
    }
    fn dimension(&self) -> usize {
        self.dimension
    }
}

/// 33 equispaced points in [1/2, 1].
pub fn default_tau_grid() -> Vec<f64> {
    (0..33).map(|k| 0.5 + 0.5 * k as f64 / 32.0).collect()
}

/// 16 log-spaced radii r·16^{-k/16}, k = 0..15, all in (r/16, r].
pub fn default_radius_mesh(r: f64) -> Vec<f64> {
    (0..16).map(|k| r * 16f64.powf(-(k as f64) / 16.0)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingRow {
    pub r_prime: f64,
    pub tau: f64,
    pub ratio: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingReport {
    pub center: Point,
    pub radius: f64,
    pub tau_grid: Vec<f64>,
    pub radius_mesh: Vec<f64>,
    pub deviation: f64,
    pub table: Vec<DoublingRow>,
}

/// max over the mesh × grid of |μ(B(x,τr'))/μ(B(x,r')) − τ^m|.
pub fn doubling_deviation<M: BallMass + ?Sized>(mu: &M, x: &Point, r: f64, mesh: &[f64], tau_grid: &[f64]) -> Result<DoublingReport> {
    if !(r > 0.0) {
        return Err(Error::Invalid(format!("radius must be positive, got {r}")));
    }
    if mesh.is_empty() || mesh.iter().any(|&s| !(s > 0.0 && s <= r)) {
        return Err(Error::Invalid("radius mesh must be nonempty and inside (0, r]".into()));
    }
    if tau_grid.is_empty() || tau_grid.iter().any(|&t| !(0.5..=1.0).contains(&t)) {
        return Err(Error::Invalid("tau grid must be nonempty and inside [1/2, 1]".into()));
    }
    let m = mu.dimension() as i32;
    let rows: Vec<Result<Vec<DoublingRow>>> = mesh
        .par_iter()
        .map(|&rp| {
            let denom = mu.ball_mass(x, rp);
            if denom <= 0.0 {
                return Err(Error::zero_mass(x, rp));
            }
            Ok(tau_grid
                .iter()
                .map(|&tau| {
                    let ratio = mu.mass_ratio(x, rp, tau, denom);
                    DoublingRow { r_prime: rp, tau, ratio, deviation: (ratio - tau.powi(m)).abs() }
                })
                .collect())
        })
        .collect();
    let mut table = Vec::with_capacity(mesh.len() * tau_grid.len());
    for r in rows {
        table.extend(r?);
    }
    let deviation = table.iter().map(|row| row.deviation).fold(0.0, f64::max);
    Ok(DoublingReport { center: *x, radius: r, tau_grid: tau_grid.to_vec(), radius_mesh: mesh.to_vec(), deviation, table })
}

/// Signed deviation μ(B(x,r))/(ω_m r^m) − 1.
pub fn signed_uniformity_deviation<M: BallMass + ?Sized>(mu: &M, x: &Point, r: f64) -> f64 {
    let m = mu.dimension();
    mu.ball_mass(x, r) / (omega(m) * r.powi(m as i32)) - 1.0
}

/// |μ(B(x,r))/(ω_m r^m) − 1|.
pub fn uniformity_deviation<M: BallMass + ?Sized>(mu: &M, x: &Point, r: f64) -> f64 {
    signed_uniformity_deviation(mu, x, r).abs()
}
