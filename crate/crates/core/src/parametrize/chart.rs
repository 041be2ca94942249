//! Coordinate charts ψ^a straightening C near a cone point, and the
//! push-forward flatness check for C² maps.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{random_unit, stream_rng, Mat4, Point};
use crate::hausdorff::{relative_hausdorff, Estimate, SetHandle, Shape};
use crate::index::in_ball;
use crate::kpcone::{smallest_root, ConeFrame, KpCone};
use crate::planes::AffinePlane;

/// A bi-Lipschitz C² map with known constants λ ≤ |ψx − ψy|/|x − y| ≤ Λ on
/// its certified domain.
pub trait CoordinateMap: Sync {
    fn forward(&self, x: &Point) -> Result<Point>;
    /// (λ, Λ)
    fn lipschitz_bounds(&self) -> (f64, f64);
    /// Whether B(z, r) lies in the certified domain.
    fn contains_ball(&self, z: &Point, r: f64) -> bool;
}

/// ψ^a: x ↦ (p(π(x)), ⟨x − π(x), η_{π(x)}⟩), where p is the orthogonal
/// projection of C onto T_aC in the coordinates (r_a, θ₁, θ₂) centred at a.
/// Its inverse is (z, t) ↦ p⁻¹(z) + t·η_{p⁻¹(z)}.
#[derive(Clone, Debug)]
pub struct Chart {
    cone: KpCone,
    frame: ConeFrame,
    /// |a − y|
    scale: f64,
    a_const: f64,
}

impl Chart {
    pub fn new(cone: &KpCone, a: &Point, a_const: f64) -> Result<Self> {
        if !(a_const >= 16.0) {
            return Err(Error::Invalid(format!("chart needs A >= 16, got {a_const}")));
        }
        let frame = cone.frame_at(a)?;
        Ok(Chart { cone: cone.clone(), scale: (a - cone.base()).norm(), frame, a_const })
    }

    pub fn base_point(&self) -> &Point {
        &self.frame.point
    }

    fn tangent_basis(&self) -> [Point; 3] {
        [self.frame.radial, self.frame.theta[0], self.frame.theta[1]]
    }

    /// Half-width of V and of I: 8|a|/A.
    pub fn coordinate_extent(&self) -> f64 {
        8.0 * self.scale / self.a_const
    }

    /// Radius of the certified ball U ⊇ B(a, 2|a|/A).
    pub fn domain_radius(&self) -> f64 {
        2.0 * self.scale / self.a_const
    }

    fn same_nappe(&self, x: &Point) -> bool {
        self.cone.height(x) * self.cone.height(&self.frame.point) > 0.0
    }

    /// p⁻¹(z): the cone point over a + Σ zᵢeᵢ along ν_a.
    fn lift(&self, z: &Vector3<f64>) -> Result<Point> {
        let e = self.tangent_basis();
        let w = self.frame.point + e[0] * z[0] + e[1] * z[1] + e[2] * z[2];
        let wa = self.cone.aligned(&w);
        let n = self.cone.aligned_vec(&self.frame.normal);
        // |τ(w) + sτ(ν)|² − (w₄ + sν₄)² = 0
        let qa = n[0] * n[0] + n[1] * n[1] + n[2] * n[2] - n[3] * n[3];
        let qb = 2.0 * (wa[0] * n[0] + wa[1] * n[1] + wa[2] * n[2] - wa[3] * n[3]);
        let qc = wa[0] * wa[0] + wa[1] * wa[1] + wa[2] * wa[2] - wa[3] * wa[3];
        let s = smallest_root(qa, qb, qc, self.scale).ok_or(Error::OutsideChartDomain)?;
        let q = w + self.frame.normal * s;
        if !self.same_nappe(&q) || self.cone.tau_norm(&q) < 1e-12 {
            return Err(Error::OutsideChartDomain);
        }
        Ok(q)
    }

    /// (ψ^a)⁻¹(z, t), with the last coordinate of `zt` as t.
    pub fn inverse(&self, zt: &Point) -> Result<Point> {
        let ext = self.coordinate_extent();
        let z = Vector3::new(zt[0], zt[1], zt[2]);
        if z.norm() > ext || zt[3].abs() > ext {
            return Err(Error::OutsideChartDomain);
        }
        let q = self.lift(&z)?;
        // the η-flow reaches the axis at t = |τ(q)|
        if zt[3] >= self.cone.tau_norm(&q) {
            return Err(Error::OutsideChartDomain);
        }
        Ok(q + self.cone.eta(&q)? * zt[3])
    }

    pub fn psi(&self, x: &Point) -> Result<Point> {
        if !self.same_nappe(x) {
            return Err(Error::OutsideChartDomain);
        }
        let c = self.cone.project_cross_section(x).map_err(|_| Error::OutsideChartDomain)?;
        let e = self.tangent_basis();
        let d = c - self.frame.point;
        let t = (x - c).dot(&self.cone.eta(&c)?);
        let out = Point::new(d.dot(&e[0]), d.dot(&e[1]), d.dot(&e[2]), t);
        let ext = self.coordinate_extent();
        if Vector3::new(out[0], out[1], out[2]).norm() > ext || t.abs() > ext {
            return Err(Error::OutsideChartDomain);
        }
        Ok(out)
    }

    /// Extreme ratios |ψx − ψy|/|x − y| over `n` random pairs in the
    /// certified ball.
    pub fn bilipschitz_ratios(&self, n: usize, seed: u64) -> Result<(f64, f64)> {
        use rand::Rng;
        let rad = self.domain_radius();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let mut rng = stream_rng(seed, i as u64);
            let mut pick = || self.frame.point + random_unit(&mut rng) * (rad * rng.random::<f64>().powf(0.25));
            let (x, y) = (pick(), pick());
            let d = (x - y).norm();
            if d == 0.0 {
                continue;
            }
            let q = (self.psi(&x)? - self.psi(&y)?).norm() / d;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        Ok((lo, hi))
    }
}

impl CoordinateMap for Chart {
    fn forward(&self, x: &Point) -> Result<Point> {
        self.psi(x)
    }

    fn lipschitz_bounds(&self) -> (f64, f64) {
        (0.5, 2.0)
    }

    fn contains_ball(&self, z: &Point, r: f64) -> bool {
        (z - self.frame.point).norm() + r <= self.domain_radius()
    }
}

/// x ↦ Mx + b.
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub m: Mat4,
    pub b: Point,
}

impl CoordinateMap for AffineMap {
    fn forward(&self, x: &Point) -> Result<Point> {
        Ok(self.m * x + self.b)
    }

    fn lipschitz_bounds(&self) -> (f64, f64) {
        let sv = self.m.singular_values();
        (sv.min(), sv.max())
    }

    fn contains_ball(&self, _: &Point, _: f64) -> bool {
        true
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct C2Report {
    /// D^{ψ(z),λr}(ψΓ, P̃)
    pub lhs: Estimate,
    /// (‖D²ψ‖/(2λ))r + (Λ/λ)·D^{z,r}(Γ, P)
    pub rhs: f64,
    /// D^{z,r}(Γ, P)
    pub flatness: Estimate,
    pub d2_norm: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    /// rhs − lhs at the point estimates.
    pub margin: f64,
    pub holds: bool,
    /// Holds with lhs at the top of its error bar.
    pub certified: bool,
}

/// sup over a grid in B(z, r) and a fixed direction set of the second
/// difference |ψ(x+hv) − 2ψ(x) + ψ(x−hv)|/h².
fn second_derivative_norm(psi: &dyn CoordinateMap, z: &Point, r: f64) -> Result<f64> {
    let mut dirs: Vec<Point> = (0..4).map(crate::geom::e).collect();
    let mut rng = stream_rng(0x00c2, 0);
    dirs.extend((0..12).map(|_| random_unit(&mut rng)));
    let h = 1e-3 * r;
    let g = [-0.5, 0.0, 0.5];
    let mut best = 0.0f64;
    for i in 0..81 {
        let off = Point::new(g[i % 3], g[(i / 3) % 3], g[(i / 9) % 3], g[(i / 27) % 3]) * r;
        if off.norm() + h > r {
            continue;
        }
        let x = z + off;
        let fx = psi.forward(&x)?;
        for v in &dirs {
            let d2 = (psi.forward(&(x + v * h))? - fx * 2.0 + psi.forward(&(x - v * h))?) / (h * h);
            best = best.max(d2.norm());
        }
    }
    Ok(best)
}

/// Checks D^{ψ(z),λr}(ψΓ, P̃) ≤ (‖D²ψ‖∞/(2λ))r + (Λ/λ)D^{z,r}(Γ, P) with
/// P̃ = D_zψ(P − z) + ψ(z). Analytic Γ is meshed at spacing `h`.
pub fn c2_pushforward_flatness(
    psi: &dyn CoordinateMap,
    gamma: &SetHandle,
    z: &Point,
    r: f64,
    plane: &AffinePlane,
    h: f64,
) -> Result<C2Report> {
    if !psi.contains_ball(z, r) {
        return Err(Error::OutsideChartDomain);
    }
    if !plane.contains(z, 1e-9) {
        return Err(Error::Invalid("plane must pass through z".into()));
    }
    let (lam, big) = psi.lipschitz_bounds();
    let d2 = second_derivative_norm(psi, z, r)?;
    let fz = psi.forward(z)?;
    let hd = 1e-6 * r;
    let mut dirs = Vec::new();
    for v in plane.basis() {
        dirs.push((psi.forward(&(z + v * hd))? - psi.forward(&(z - v * hd))?) / (2.0 * hd));
    }
    let pushed = AffinePlane::new(fz, &dirs)?;
    let pts: Vec<Point> = match gamma {
        SetHandle::Cloud(c) => c.tree().in_ball(z, r).into_iter().map(|i| c.points()[i]).collect(),
        SetHandle::Shape(s) => s.sample_mesh(z, r, h)?,
    };
    let img = pts.iter().filter(|p| in_ball(p, z, r)).map(|p| psi.forward(p)).collect::<Result<Vec<_>>>()?;
    let lhs = relative_hausdorff(&fz, lam * r, &SetHandle::cloud(img), &SetHandle::Shape(Shape::Plane(pushed)))?;
    let flat = relative_hausdorff(z, r, gamma, &SetHandle::Shape(Shape::Plane(plane.clone())))?;
    let rhs = d2 / (2.0 * lam) * r + big / lam * flat.value;
    let margin = rhs - lhs.value;
    Ok(C2Report {
        certified: lhs.upper() <= rhs,
        lhs,
        rhs,
        flatness: flat,
        d2_norm: d2,
        lambda: lam,
        big_lambda: big,
        margin,
        holds: margin >= -1e-12,
    })
}
