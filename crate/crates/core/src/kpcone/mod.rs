//! KP cone geometry: C = y + O{x₄² = x₁² + x₂² + x₃²}, both nappes.
//!
//! Cone-aligned coordinates translate by the base y and apply the
//! reflection taking the axis u to e₄; τ(x) denotes the first three aligned
//! coordinates.

mod fit;

pub use fit::{fit_cone_based, fit_cone_free, ConeFit, ConeFitConfig};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{canonical_sign, complement_basis, e, reflect_to_e4, Mat4, Point};
use crate::planes::AffinePlane;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Debug)]
pub struct KpCone {
    base: Point,
    axis: Point,
    h: Mat4,
}

/// JSON descriptor `{"base": [..], "axis": [..]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeDescriptor {
    pub base: Vec<f64>,
    pub axis: Vec<f64>,
}

impl Serialize for KpCone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConeDescriptor { base: self.base.iter().copied().collect(), axis: self.axis.iter().copied().collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for KpCone {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let desc = ConeDescriptor::deserialize(d)?;
        KpCone::from_descriptor(&desc).map_err(serde::de::Error::custom)
    }
}

/// Local frame at a cone point a ≠ base.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeFrame {
    pub point: Point,
    /// r_a = (a − y)/|a − y|
    pub radial: Point,
    /// ν_a, unit normal
    pub normal: Point,
    /// η_a, unit inward cross-section normal
    pub eta: Point,
    /// two orthonormal type-θ vectors
    pub theta: [Point; 2],
}

impl ConeFrame {
    /// Orthonormal basis (r_a, ν_a, θ₁, θ₂).
    pub fn basis(&self) -> [Point; 4] {
        [self.radial, self.normal, self.theta[0], self.theta[1]]
    }
}

impl KpCone {
    pub fn new(base: Point, axis: Point) -> Result<Self> {
        let n = axis.norm();
        if !(n.is_finite() && n > 1e-12) || base.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("cone axis must be a finite nonzero vector".into()));
        }
        let axis = canonical_sign(axis / n);
        Ok(KpCone { base, axis, h: reflect_to_e4(&axis) })
    }

    /// Base at the origin, axis e₄.
    pub fn canonical() -> Self {
        KpCone::new(Point::zeros(), e(3)).unwrap()
    }

    pub fn from_descriptor(d: &ConeDescriptor) -> Result<Self> {
        KpCone::new(crate::geom::point_from_slice(&d.base)?, crate::geom::point_from_slice(&d.axis)?)
    }

    pub fn descriptor(&self) -> ConeDescriptor {
        ConeDescriptor { base: self.base.iter().copied().collect(), axis: self.axis.iter().copied().collect() }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn axis(&self) -> &Point {
        &self.axis
    }

    /// Image under p ↦ O p + v.
    pub fn transformed(&self, o: &Mat4, v: &Point) -> Self {
        KpCone::new(o * self.base + v, o * self.axis).unwrap()
    }

    pub fn aligned(&self, x: &Point) -> Point {
        self.h * (x - self.base)
    }

    pub fn aligned_vec(&self, v: &Point) -> Point {
        self.h * v
    }

    pub fn to_world(&self, v: &Point) -> Point {
        self.h * v + self.base
    }

    pub fn world_vec(&self, v: &Point) -> Point {
        self.h * v
    }

    /// |τ(x)| in aligned coordinates.
    pub fn tau_norm(&self, x: &Point) -> f64 {
        let z = self.aligned(x);
        Vector3::new(z[0], z[1], z[2]).norm()
    }

    /// Fourth aligned coordinate (signed height along the axis).
    pub fn height(&self, x: &Point) -> f64 {
        self.aligned(x)[3]
    }

    /// d(x, C) = ||x₄| − |τ(x)||/√2 in aligned coordinates.
    pub fn distance(&self, x: &Point) -> f64 {
        let z = self.aligned(x);
        let t = Vector3::new(z[0], z[1], z[2]).norm();
        (z[3].abs() - t).abs() / SQRT2
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// Nearest point of C to x. On the axis the choice of cross-section
    /// direction is the first aligned axis.
    pub fn nearest(&self, x: &Point) -> Point {
        let z = self.aligned(x);
        let tau = Vector3::new(z[0], z[1], z[2]);
        let rho = tau.norm();
        let dir = if rho > 0.0 { tau / rho } else { Vector3::x() };
        let s = if z[3] >= 0.0 { 1.0 } else { -1.0 };
        let k = (rho + z[3].abs()) / 2.0;
        self.to_world(&Point::new(k * dir[0], k * dir[1], k * dir[2], s * k))
    }

    /// Cone point with aligned coordinates (τ, nappe·|τ|).
    pub fn point_from_tau(&self, tau: &Vector3<f64>, nappe: f64) -> Point {
        self.to_world(&Point::new(tau[0], tau[1], tau[2], nappe.signum() * tau.norm()))
    }

    /// Cross-section projection π(x) = ((|x₄|/|τ|)τ, x₄).
    pub fn project_cross_section(&self, x: &Point) -> Result<Point> {
        let z = self.aligned(x);
        let tau = Vector3::new(z[0], z[1], z[2]);
        let t = tau.norm();
        if t < 1e-12 {
            return Err(Error::OnAxis(t));
        }
        let s = z[3].abs() / t;
        Ok(self.to_world(&Point::new(s * tau[0], s * tau[1], s * tau[2], z[3])))
    }

    /// η_x = (−τ/|τ|, 0) in aligned coordinates, as a world vector.
    pub fn eta(&self, x: &Point) -> Result<Point> {
        let z = self.aligned(x);
        let tau = Vector3::new(z[0], z[1], z[2]);
        let t = tau.norm();
        if t < 1e-12 {
            return Err(Error::OnAxis(t));
        }
        Ok(self.world_vec(&Point::new(-z[0] / t, -z[1] / t, -z[2] / t, 0.0)))
    }

    /// ν_a = (−τ(a), a₄)/|a| in aligned coordinates (a taken relative to the
    /// base), as a world vector.
    pub fn normal(&self, a: &Point) -> Result<Point> {
        let z = self.aligned(a);
        let n = z.norm();
        if n < 1e-12 {
            return Err(Error::AtApex);
        }
        Ok(self.world_vec(&Point::new(-z[0] / n, -z[1] / n, -z[2] / n, z[3] / n)))
    }

    pub fn frame_at(&self, a: &Point) -> Result<ConeFrame> {
        let rel = a - self.base;
        let n = rel.norm();
        if n < 1e-12 {
            return Err(Error::AtApex);
        }
        let d = self.distance(a);
        if d > 1e-9 * n.max(1.0) {
            return Err(Error::NotOnCone(d));
        }
        let radial = rel / n;
        let normal = self.normal(a)?;
        let eta = self.eta(a)?;
        let th = complement_basis(&[radial, normal]);
        Ok(ConeFrame { point: *a, radial, normal, eta, theta: [th[0], th[1]] })
    }

    /// Tangent plane T_aC as an affine hyperplane with normal ν_a.
    pub fn tangent_plane(&self, a: &Point) -> Result<AffinePlane> {
        AffinePlane::hyperplane(*a, self.normal(a)?)
    }

    /// Parameter t of the intersection of {a + t·dir} with C of smallest
    /// |t| ≤ window.
    pub fn ray_hit(&self, a: &Point, dir: &Point, window: f64) -> Option<f64> {
        let z = self.aligned(a);
        let d = self.aligned_vec(dir);
        // |τ + t dτ|² − (z₄ + t d₄)² = 0
        let qa = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - d[3] * d[3];
        let qb = 2.0 * (z[0] * d[0] + z[1] * d[1] + z[2] * d[2] - z[3] * d[3]);
        let qc = z[0] * z[0] + z[1] * z[1] + z[2] * z[2] - z[3] * z[3];
        smallest_root(qa, qb, qc, window)
    }

    /// Upper bound r/|a − y| on D^{a,r}(C, T_aC) at a smooth point,
    /// with constant 1.
    pub fn flatness_bound(&self, a: &Point, r: f64) -> f64 {
        r / (a - self.base).norm()
    }
}

/// Root of qa t² + qb t + qc = 0 with smallest |t| inside [−window, window].
pub(crate) fn smallest_root(qa: f64, qb: f64, qc: f64, window: f64) -> Option<f64> {
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    if scale == 0.0 {
        return Some(0.0);
    }
    let mut roots = Vec::with_capacity(2);
    if qa.abs() <= 1e-14 * scale {
        if qb != 0.0 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            if disc > -1e-14 * qb * qb {
                roots.push(-qb / (2.0 * qa));
            }
        } else {
            let sq = disc.sqrt();
            // numerically stable pair
            let q = -0.5 * (qb + qb.signum() * sq);
            if q != 0.0 {
                roots.push(q / qa);
                roots.push(qc / q);
            } else {
                roots.push(0.0);
            }
        }
    }
    roots.into_iter().filter(|t| t.is_finite() && t.abs() <= window).min_by(|a, b| a.abs().total_cmp(&b.abs()))
}
