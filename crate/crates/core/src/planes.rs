//! Affine planes, the Γ pseudometric between planes, angles, and the
//! θ^P plane fit.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{canonical_sign, complement_basis, Mat4, Point};

/// Affine m-plane p + span(basis) in R^4, m = 0..=4, with an orthonormal
/// basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffinePlane {
    base: Point,
    basis: Vec<Point>,
}

impl AffinePlane {
    /// Orthonormalizes `directions` (Gram-Schmidt, twice).
    pub fn new(base: Point, directions: &[Point]) -> Result<Self> {
        if directions.len() > 4 {
            return Err(Error::DimensionMismatch(format!("{} directions in R^4", directions.len())));
        }
        let mut basis: Vec<Point> = Vec::with_capacity(directions.len());
        for d in directions {
            let mut v = *d;
            for _ in 0..2 {
                for b in &basis {
                    v -= b * b.dot(&v);
                }
            }
            let n = v.norm();
            if !(n > 1e-12 * d.norm().max(1e-300)) || !n.is_finite() {
                return Err(Error::Invalid("plane directions are linearly dependent".into()));
            }
            basis.push(v / n);
        }
        Ok(AffinePlane { base, basis })
    }

    /// Hyperplane through `base` with the given normal.
    pub fn hyperplane(base: Point, normal: Point) -> Result<Self> {
        let n = normal.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(Error::Invalid("hyperplane normal must be nonzero".into()));
        }
        let nu = normal / n;
        Ok(AffinePlane { base, basis: complement_basis(&[nu]) })
    }

    /// Linear subspace spanned by the given directions.
    pub fn through_origin(directions: &[Point]) -> Result<Self> {
        AffinePlane::new(Point::zeros(), directions)
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn basis(&self) -> &[Point] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthogonal projector onto the direction space.
    pub fn projector(&self) -> Mat4 {
        self.basis.iter().fold(Mat4::zeros(), |acc, b| acc + b * b.transpose())
    }

    /// Unit normal for a hyperplane, sign fixed by the last nonzero
    /// coordinate being positive.
    pub fn normal(&self) -> Result<Point> {
        if self.dim() != 3 {
            return Err(Error::DimensionMismatch(format!("normal of a {}-plane", self.dim())));
        }
        Ok(canonical_sign(complement_basis(&self.basis)[0]))
    }

    pub fn nearest(&self, p: &Point) -> Point {
        let v = p - self.base;
        self.base + self.projector() * v
    }

    pub fn distance(&self, p: &Point) -> f64 {
        (p - self.nearest(p)).norm()
    }

    /// Nearest point of P ∩ B(x, r), or `None` if the intersection is empty.
    pub fn nearest_in_ball(&self, p: &Point, x: &Point, r: f64) -> Option<Point> {
        let c = self.nearest(x);
        let h2 = r * r - (x - c).norm_squared();
        if h2 < 0.0 {
            return None;
        }
        let rho = h2.sqrt();
        let q = self.nearest(p);
        let d = q - c;
        let n = d.norm();
        Some(if n <= rho { q } else { c + d * (rho / n) })
    }

    /// The complementary plane through the same base point.
    pub fn orthogonal_complement(&self) -> AffinePlane {
        AffinePlane { base: self.base, basis: complement_basis(&self.basis) }
    }

    /// Image under p ↦ O p + v.
    pub fn transformed(&self, o: &Mat4, v: &Point) -> AffinePlane {
        AffinePlane { base: o * self.base + v, basis: self.basis.iter().map(|b| o * b).collect() }
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        self.distance(p) <= tol
    }
}

/// Γ(P₁, P₂): sine of the largest principal angle of P₁'s directions against
/// P₂'s, i.e. ‖(I − Π₂) B₁‖₂ for an orthonormal basis B₁ of P₁.
pub fn gamma(p1: &AffinePlane, p2: &AffinePlane) -> Result<f64> {
    if p1.dim() > p2.dim() {
        return Err(Error::DimensionMismatch(format!("gamma needs dim P1 <= dim P2, got {} > {}", p1.dim(), p2.dim())));
    }
    if p1.dim() == 0 {
        return Ok(0.0);
    }
    let pi2 = p2.projector();
    let m = p1.dim();
    let mut res = DMatrix::<f64>::zeros(4, m);
    for (j, b) in p1.basis().iter().enumerate() {
        let r = b - pi2 * b;
        for i in 0..4 {
            res[(i, j)] = r[i];
        }
    }
    let s = res.singular_values().max();
    Ok(s.clamp(0.0, 1.0))
}

/// ∠(P₁, P₂) = arcsin Γ(P₁, P₂) ∈ [0, π/2].
pub fn angle(p1: &AffinePlane, p2: &AffinePlane) -> Result<f64> {
    Ok(gamma(p1, p2)?.asin())
}

/// Eigenvector of the smallest eigenvalue of the centered second-moment
/// matrix of `pts` (PCA normal).
pub fn pca_normal(pts: &[Point]) -> Option<Point> {
    if pts.is_empty() {
        return None;
    }
    let c = crate::geom::pairwise_reduce(pts, Point::zeros()) / pts.len() as f64;
    let terms: Vec<Mat4> = pts.iter().map(|p| (p - c) * (p - c).transpose()).collect();
    let m = crate::geom::pairwise_reduce(&terms, Mat4::zeros());
    let eig = SymmetricEigen::new(m);
    let i = eig.eigenvalues.imin();
    Some(canonical_sign(eig.eigenvectors.column(i).into_owned()))
}

pub(crate) mod fit;
pub use fit::{fit_plane, PlaneFit, PlaneFitConfig, PlaneFitJson};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{e, gaussian_vector, random_rotation, stream_rng};
    use proptest::prelude::*;

    fn random_plane(rng: &mut rand_chacha::ChaCha8Rng, m: usize) -> AffinePlane {
        let dirs: Vec<Point> = (0..m).map(|_| gaussian_vector(rng)).collect();
        AffinePlane::new(gaussian_vector(rng), &dirs).unwrap()
    }

    #[test]
    fn gamma_examples() {
        let l1 = AffinePlane::through_origin(&[e(0)]).unwrap();
        let p12 = AffinePlane::through_origin(&[e(0), e(1)]).unwrap();
        let l2 = AffinePlane::through_origin(&[e(1)]).unwrap();
        assert_eq!(gamma(&l1, &p12).unwrap(), 0.0);
        assert!((gamma(&l1, &l2).unwrap() - 1.0).abs() < 1e-15);
        assert!((angle(&l1, &l2).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-7);
        assert_eq!(angle(&l1, &l1).unwrap(), 0.0);
        assert!(matches!(gamma(&p12, &l1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn gamma_of_rotated_hyperplane_matches_sphere_mesh() {
        // P1 = {x4 = 0}; P2 = its rotation by φ in the (e3, e4) plane, which
        // is the rotation "about" the e1-e2 plane.
        let phi: f64 = 0.37;
        let rot = |v: Point| Point::new(v[0], v[1], v[2] * phi.cos() - v[3] * phi.sin(), v[2] * phi.sin() + v[3] * phi.cos());
        let p1 = AffinePlane::through_origin(&[e(0), e(1), e(2)]).unwrap();
        let p2 = AffinePlane::through_origin(&[rot(e(0)), rot(e(1)), rot(e(2))]).unwrap();
        let g = gamma(&p1, &p2).unwrap();
        assert!((g - phi.sin()).abs() < 1e-14);
        // brute-force sup over a mesh of the unit sphere of P1 of dist to P2
        let pi2 = p2.projector();
        let mut best: f64 = 0.0;
        let n = 200;
        for i in 0..=n {
            let th = std::f64::consts::PI * i as f64 / n as f64;
            for j in 0..n {
                let ph = std::f64::consts::TAU * j as f64 / n as f64;
                let v = Point::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos(), 0.0);
                best = best.max((v - pi2 * v).norm());
            }
        }
        assert!((best - g).abs() < 1e-4, "{best} vs {g}");
    }

    #[test]
    fn nearest_in_ball_clamps_to_disk() {
        let p = AffinePlane::hyperplane(Point::zeros(), e(3)).unwrap();
        let q = p.nearest_in_ball(&Point::new(3.0, 0.0, 0.0, 1.0), &Point::new(0.0, 0.0, 0.0, 0.6), 1.0).unwrap();
        assert!((q - Point::new(0.8, 0.0, 0.0, 0.0)).norm() < 1e-15);
        assert!(p.nearest_in_ball(&Point::zeros(), &(2.0 * e(3)), 1.0).is_none());
    }

    #[test]
    fn normal_sign_convention() {
        let p = AffinePlane::hyperplane(Point::zeros(), -e(3)).unwrap();
        assert!((p.normal().unwrap() - e(3)).norm() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn gamma_rotation_invariant(seed in 0u64..100_000, m1 in 1usize..4, extra in 0usize..2) {
            let mut rng = stream_rng(seed, 0);
            let m2 = (m1 + extra).min(4);
            let p1 = random_plane(&mut rng, m1);
            let p2 = random_plane(&mut rng, m2);
            let o = random_rotation(&mut rng);
            let v = gaussian_vector(&mut rng);
            let g = gamma(&p1, &p2).unwrap();
            let go = gamma(&p1.transformed(&o, &v), &p2.transformed(&o, &v)).unwrap();
            prop_assert!((g - go).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&g));
        }

        #[test]
        fn gamma_of_complements(seed in 0u64..100_000, m in 1usize..4) {
            let mut rng = stream_rng(seed, 1);
            let p1 = random_plane(&mut rng, m);
            let p2 = random_plane(&mut rng, m);
            let a = gamma(&p1, &p2).unwrap();
            let b = gamma(&p2.orthogonal_complement(), &p1.orthogonal_complement()).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn angle_subadditive(seed in 0u64..100_000) {
            let mut rng = stream_rng(seed, 2);
            let p1 = random_plane(&mut rng, 1);
            let p2 = random_plane(&mut rng, 2);
            let p3 = random_plane(&mut rng, 3);
            let lhs = angle(&p1, &p3).unwrap();
            let rhs = angle(&p1, &p2).unwrap() + angle(&p2, &p3).unwrap();
            prop_assert!(lhs <= rhs + 1e-10);
        }

        #[test]
        fn normals_close_when_planes_close(seed in 0u64..100_000) {
            let mut rng = stream_rng(seed, 3);
            let n1 = gaussian_vector(&mut rng).normalize();
            let mut n2 = gaussian_vector(&mut rng).normalize();
            if n1.dot(&n2) < 0.0 { n2 = -n2; }
            let p1 = AffinePlane::hyperplane(Point::zeros(), n1).unwrap();
            let p2 = AffinePlane::hyperplane(Point::zeros(), n2).unwrap();
            prop_assert!((n1 - n2).norm() <= angle(&p1, &p2).unwrap() + 1e-10);
        }
    }
}
