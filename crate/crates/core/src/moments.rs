//! First and second moments of a measure on a ball, the centered quadratic
//! Q̃(z) = zᵀQz − |z|², moment-based cone recovery, and the constructive
//! distance bound for zero sets of diagonal quadrics.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{canonical_sign, mat_to_rows, pairwise_reduce, to_vec, Mat4, Point, OMEGA3};
use crate::hausdorff::{QuadricSurface, Shape};
use crate::kpcone::KpCone;
use crate::measure::DiscreteMeasure;

#[derive(Clone, Debug)]
pub struct MomentSummary {
    pub center: Point,
    pub r: f64,
    pub b: Point,
    pub q: Mat4,
    pub trace: f64,
    /// Ascending.
    pub eigenvalues: [f64; 4],
    /// Column k is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Mat4,
}

/// JSON form of a [`MomentSummary`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentJson {
    pub x: Vec<f64>,
    pub r: f64,
    pub b: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub trace: f64,
    pub eigenvalues: Vec<f64>,
    pub axis: Vec<f64>,
}

impl MomentSummary {
    /// Eigenvector of the largest eigenvalue.
    pub fn axis(&self) -> Point {
        self.eigenvectors.column(3).into_owned()
    }

    pub fn to_json(&self) -> MomentJson {
        MomentJson {
            x: to_vec(&self.center),
            r: self.r,
            b: to_vec(&self.b),
            q: mat_to_rows(&self.q),
            trace: self.trace,
            eigenvalues: self.eigenvalues.to_vec(),
            axis: to_vec(&self.axis()),
        }
    }
}

/// Symmetric eigen-decomposition with ascending eigenvalues, eigenvectors
/// signed by a positive last nonzero coordinate, ties ordered
/// lexicographically by eigenvector.
pub fn sorted_eigen(q: &Mat4) -> ([f64; 4], Mat4) {
    let eig = SymmetricEigen::new(*q);
    let mut pairs: Vec<(f64, Point)> =
        (0..4).map(|k| (eig.eigenvalues[k], canonical_sign(eig.eigenvectors.column(k).into_owned()))).collect();
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| (0..4).map(|i| a.1[i].total_cmp(&b.1[i])).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut vals = [0.0; 4];
    let mut vecs = Mat4::zeros();
    for (k, (v, u)) in pairs.into_iter().enumerate() {
        vals[k] = v;
        vecs.set_column(k, &u);
    }
    (vals, vecs)
}

/// b = 5/(2ω₃r⁵) Σ w (r² − |p−x|²)(p−x) and Q = 5/(ω₃r⁵) Σ w (p−x)(p−x)ᵀ
/// over the points of B(x, r).
pub fn compute_moments(mu: &DiscreteMeasure, x: &Point, r: f64) -> Result<MomentSummary> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Invalid(format!("radius must be positive, got {r}")));
    }
    let ids = mu.indices_in_ball(x, r);
    let pts = mu.points();
    let w = mu.weights();
    let r2 = r * r;
    let firsts: Vec<Point> = ids
        .iter()
        .map(|&i| {
            let d = pts[i] - x;
            d * (w[i] * (r2 - d.norm_squared()))
        })
        .collect();
    let seconds: Vec<Mat4> = ids
        .iter()
        .map(|&i| {
            let d = pts[i] - x;
            d * d.transpose() * w[i]
        })
        .collect();
    let r5 = r2 * r2 * r;
    let b = pairwise_reduce(&firsts, Point::zeros()) * (5.0 / (2.0 * OMEGA3 * r5));
    let mut q = pairwise_reduce(&seconds, Mat4::zeros()) * (5.0 / (OMEGA3 * r5));
    q = (q + q.transpose()) * 0.5;
    let trace = q.trace();
    let (eigenvalues, eigenvectors) = sorted_eigen(&q);
    Ok(MomentSummary { center: *x, r, b, q, trace, eigenvalues, eigenvectors })
}

/// Q̃(z) = zᵀQz − |z|².
pub fn centered_quadratic(ms: &MomentSummary, z: &Point) -> f64 {
    quadratic_form(&ms.q, z) - z.norm_squared()
}

pub fn quadratic_form(q: &Mat4, z: &Point) -> f64 {
    (z.transpose() * q * z)[(0, 0)]
}

/// The KP-cone Gram matrix: 3/2 on the axis, 1/2 on its complement.
pub fn k_matrix(axis: &Point) -> Mat4 {
    let u = axis.normalize();
    Mat4::identity() * 0.5 + u * u.transpose()
}

/// Coefficients of P(x) = Σ η_i x_i² in some orthonormal coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadric {
    pub eta: [f64; 4],
}

impl Quadric {
    pub fn eval(&self, x: &Point) -> f64 {
        (0..4).map(|i| self.eta[i] * x[i] * x[i]).sum()
    }

    /// |η_i + ½| < 1/8 for i = 1..3 and |η₄ − ½| < 1/8.
    pub fn check_window(&self) -> Result<()> {
        for i in 0..3 {
            if !((self.eta[i] + 0.5).abs() < 0.125) {
                return Err(Error::CoefficientWindow(format!("eta{} = {}", i + 1, self.eta[i])));
            }
        }
        if !((self.eta[3] - 0.5).abs() < 0.125) {
            return Err(Error::CoefficientWindow(format!("eta4 = {}", self.eta[3])));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ConeFromMoments {
    pub cone: KpCone,
    pub moments: MomentSummary,
    pub gap: f64,
    /// max(|λ_i − ½| for i ≤ 3, |λ₄ − 3/2|)
    pub spectrum_deviation: f64,
    /// Scale ρ = r^{1+γ₀} the estimate is attached to.
    pub scale: f64,
    /// Zero set of Q̃ in the eigenbasis: Σ (λ_i − 1) y_i² = 0.
    pub zero_set: QuadricSurface,
}

/// Axis = top eigenvector of Q at (x, r), base x. Fails when λ₄ − λ₃ is
/// below `gap_min`.
pub fn cone_from_moments(mu: &DiscreteMeasure, x: &Point, r: f64, gamma0: f64, gap_min: f64) -> Result<ConeFromMoments> {
    let ms = compute_moments(mu, x, r)?;
    cone_from_summary(ms, gamma0, gap_min)
}

pub fn cone_from_summary(ms: MomentSummary, gamma0: f64, gap_min: f64) -> Result<ConeFromMoments> {
    let l = ms.eigenvalues;
    let gap = l[3] - l[2];
    if !(gap > gap_min) {
        return Err(Error::DegenerateSpectrum { gap, threshold: gap_min });
    }
    let cone = KpCone::new(ms.center, ms.axis())?;
    let spectrum_deviation = (0..3).map(|i| (l[i] - 0.5).abs()).fold((l[3] - 1.5).abs(), f64::max);
    let zero_set = QuadricSurface {
        center: ms.center,
        frame: ms.eigenvectors.transpose(),
        quadric: Quadric { eta: [l[0] - 1.0, l[1] - 1.0, l[2] - 1.0, l[3] - 1.0] },
    };
    let scale = ms.r.powf(1.0 + gamma0);
    Ok(ConeFromMoments { cone, moments: ms, gap, spectrum_deviation, scale, zero_set })
}

impl ConeFromMoments {
    pub fn zero_set_shape(&self) -> Shape {
        Shape::Quadric(self.zero_set.clone())
    }
}

/// Which construction produced a witness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessKind {
    /// τ stretched radially (P ≥ 0).
    Radial,
    /// x₄ stretched along the axis (P < 0).
    Axis,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub zero: Vec<f64>,
    pub kind: WitnessKind,
    pub distance: f64,
    /// 1/sqrt(|η_e|) or 1/sqrt(η₄) times sqrt(eps).
    pub local_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadricBoundReport {
    pub eta: [f64; 4],
    pub eps: f64,
    /// sqrt(8/3)·sqrt(eps).
    pub bound: f64,
    pub max_distance: f64,
    pub holds: bool,
    pub witnesses: Vec<Witness>,
}

/// Witness zero of P for a point with |P(x)| small: for P(x) ≥ 0 the
/// point (r̂e, x₄) with r̂ ≥ r, otherwise (τ, x̂₄) with |x̂₄| ≥ |x₄|.
pub fn quadric_witness(q: &Quadric, x: &Point, eps: f64) -> Witness {
    let p = q.eval(x);
    let tau = nalgebra::Vector3::new(x[0], x[1], x[2]);
    let r = tau.norm();
    let (zero, kind, coeff) = if p >= 0.0 {
        // direction e: τ/|τ|, or the axis with the most negative η on the axis
        let e = if r > 0.0 {
            tau / r
        } else {
            let k = (0..3).min_by(|&a, &b| q.eta[a].total_cmp(&q.eta[b])).unwrap();
            let mut v = nalgebra::Vector3::zeros();
            v[k] = 1.0;
            v
        };
        let eta_e: f64 = (0..3).map(|i| q.eta[i] * e[i] * e[i]).sum();
        // η_e r̂² + η₄ x₄² = 0
        let rhat = (q.eta[3] * x[3] * x[3] / -eta_e).sqrt();
        (Point::new(rhat * e[0], rhat * e[1], rhat * e[2], x[3]), WitnessKind::Radial, eta_e.abs())
    } else {
        let s: f64 = (0..3).map(|i| q.eta[i] * x[i] * x[i]).sum();
        let h = (-s / q.eta[3]).sqrt();
        let sign = if x[3] >= 0.0 { 1.0 } else { -1.0 };
        (Point::new(x[0], x[1], x[2], sign * h), WitnessKind::Axis, q.eta[3])
    };
    Witness { point: to_vec(x), zero: to_vec(&zero), kind, distance: (zero - x).norm(), local_bound: eps.sqrt() / coeff.sqrt() }
}

/// Constructive zero-set distance bound for points of B(0, 1) with
/// |P(x)| ≤ eps, in the coefficient window.
pub fn quadric_zero_distance_bound(q: &Quadric, points: &[Point], eps: f64) -> Result<QuadricBoundReport> {
    q.check_window()?;
    if !(eps >= 0.0) {
        return Err(Error::Invalid(format!("eps must be nonnegative, got {eps}")));
    }
    for (i, x) in points.iter().enumerate() {
        if x.norm() > 1.0 {
            return Err(Error::Invalid(format!("point {i} lies outside B(0,1)")));
        }
        let v = q.eval(x);
        if v.abs() > eps {
            return Err(Error::ValueWindow { index: i, value: v, eps });
        }
    }
    let witnesses: Vec<Witness> = points.iter().map(|x| quadric_witness(q, x, eps)).collect();
    let bound = (8.0f64 / 3.0).sqrt() * eps.sqrt();
    let max_distance = witnesses.iter().map(|w| w.distance).fold(0.0, f64::max);
    Ok(QuadricBoundReport { eta: q.eta, eps, bound, max_distance, holds: max_distance <= bound * (1.0 + 1e-12), witnesses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{e, gaussian_vector, random_rotation, stream_rng};
    use crate::hausdorff::shape::nearest_on_diagonal_quadric;
    use crate::synth::{sample_cone, sample_plane};
    use proptest::prelude::*;
    use rand::Rng;

    fn k_world() -> Mat4 {
        k_matrix(&e(3))
    }

    #[test]
    fn cone_moments_match_k() {
        let mu = sample_cone(&KpCone::canonical(), 1.0, 100_000, 7);
        let ms = compute_moments(&mu, &Point::zeros(), 1.0).unwrap();
        let dev = (ms.q - k_world()).abs().max();
        assert!(dev < 0.02, "max |q - K| = {dev}");
        assert!(ms.b.norm() < 0.01, "|b| = {}", ms.b.norm());
        assert!((ms.trace - 3.0).abs() < 0.05);
    }

    #[test]
    fn plane_moments() {
        let mu = sample_plane(&crate::planes::AffinePlane::hyperplane(Point::zeros(), e(3)).unwrap(), 1.0, 100_000, 3).unwrap();
        let ms = compute_moments(&mu, &Point::zeros(), 1.0).unwrap();
        let want = Mat4::from_diagonal(&Point::new(1.0, 1.0, 1.0, 0.0));
        assert!((ms.q - want).abs().max() < 0.02, "{}", ms.q);
        assert!((ms.trace - 3.0).abs() < 0.02);
    }

    #[test]
    fn empty_ball_gives_zero_moments() {
        let mu = DiscreteMeasure::uniform(vec![Point::new(5.0, 0.0, 0.0, 0.0)]).unwrap();
        let ms = compute_moments(&mu, &Point::zeros(), 1.0).unwrap();
        assert_eq!(ms.q, Mat4::zeros());
        assert_eq!(ms.b, Point::zeros());
    }

    #[test]
    fn moments_of_a_single_point_by_hand() {
        let p = Point::new(0.5, 0.0, 0.0, 0.0);
        let mu = DiscreteMeasure::new(vec![p], vec![2.0], 3).unwrap();
        let ms = compute_moments(&mu, &Point::zeros(), 1.0).unwrap();
        let c = 5.0 / OMEGA3;
        assert!((ms.q[(0, 0)] - c * 2.0 * 0.25).abs() < 1e-15);
        assert!((ms.b[0] - c / 2.0 * 2.0 * 0.75 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn centered_quadratic_examples() {
        let mut ms = compute_moments(&DiscreteMeasure::uniform(vec![Point::zeros()]).unwrap(), &Point::zeros(), 1.0).unwrap();
        ms.q = Mat4::identity();
        assert_eq!(centered_quadratic(&ms, &Point::new(0.3, -1.0, 2.0, 0.5)), 0.0);
        ms.q = k_world();
        let z = Point::new(1.0, 0.0, 0.0, 1.0) / 2f64.sqrt();
        assert!(centered_quadratic(&ms, &z).abs() < 1e-15);
        assert!((centered_quadratic(&ms, &e(3)) - 0.5).abs() < 1e-15);
        // zeros on sampled cone points
        let mu = sample_cone(&KpCone::canonical(), 1.0, 500, 1);
        for p in mu.points() {
            assert!(centered_quadratic(&ms, p).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_recovery_and_degenerate_plane() {
        let mu = sample_cone(&KpCone::canonical(), 1.0, 50_000, 2);
        let est = cone_from_moments(&mu, &Point::zeros(), 1.0, 0.25, 0.25).unwrap();
        assert!(crate::geom::line_angle(est.cone.axis(), &e(3)).to_degrees() < 1.0);
        assert!(est.spectrum_deviation < 0.05);
        let mut rng = stream_rng(3, 0);
        let o = random_rotation(&mut rng);
        let rc = KpCone::canonical().transformed(&o, &Point::zeros());
        let mu = sample_cone(&rc, 1.0, 20_000, 4);
        let est = cone_from_moments(&mu, &Point::zeros(), 1.0, 0.25, 0.25).unwrap();
        assert!(crate::geom::line_angle(est.cone.axis(), &(o * e(3))).to_degrees() < 2.0);
        let pl = sample_plane(&crate::planes::AffinePlane::hyperplane(Point::zeros(), o * e(0)).unwrap(), 1.0, 20_000, 5).unwrap();
        assert!(matches!(cone_from_moments(&pl, &Point::zeros(), 1.0, 0.25, 0.25), Err(Error::DegenerateSpectrum { .. })));
    }

    #[test]
    fn recovered_zero_set_contains_cone_points() {
        let mu = sample_cone(&KpCone::canonical(), 1.0, 100_000, 9);
        let est = cone_from_moments(&mu, &Point::zeros(), 1.0, 0.25, 0.25).unwrap();
        let shape = est.zero_set_shape();
        let probe = sample_cone(&KpCone::canonical(), 1.0, 200, 10);
        for p in probe.points() {
            assert!(shape.distance(p) < 0.03 * p.norm().max(0.1));
        }
    }

    #[test]
    fn witness_on_axis_point() {
        let q = Quadric { eta: [-0.5, -0.5, -0.5, 0.5] };
        let eps: f64 = 1e-4;
        let t = eps.sqrt();
        let w = quadric_witness(&q, &Point::new(0.0, 0.0, 0.0, t), eps);
        assert_eq!(w.kind, WitnessKind::Radial);
        assert!((w.distance - t).abs() < 1e-15);
        assert!(w.distance <= 2f64.sqrt() * eps.sqrt());
        let z = point_of(&w.zero);
        assert!(q.eval(&z).abs() < 1e-18);
        let zero = quadric_witness(&q, &Point::new(0.3, 0.0, 0.0, 0.3), eps);
        assert!(zero.distance < 1e-15);
    }

    fn point_of(v: &[f64]) -> Point {
        Point::new(v[0], v[1], v[2], v[3])
    }

    #[test]
    fn window_errors() {
        let bad = Quadric { eta: [-0.5, -0.5, -0.3, 0.5] };
        assert!(matches!(quadric_zero_distance_bound(&bad, &[], 1e-4), Err(Error::CoefficientWindow(_))));
        let q = Quadric { eta: [-0.5, -0.5, -0.5, 0.5] };
        assert!(matches!(
            quadric_zero_distance_bound(&q, &[Point::new(0.0, 0.0, 0.0, 0.5)], 1e-4),
            Err(Error::ValueWindow { index: 0, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn rotation_equivariance(seed in 0u64..10_000) {
            let mut rng = stream_rng(seed, 0);
            let pts: Vec<Point> = (0..300).map(|_| gaussian_vector(&mut rng) * 0.5).collect();
            let mu = DiscreteMeasure::uniform(pts).unwrap();
            let o = random_rotation(&mut rng);
            let x = gaussian_vector(&mut rng) * 0.1;
            let a = compute_moments(&mu, &x, 0.8).unwrap();
            let b = compute_moments(&mu.transformed(&o, &Point::zeros()), &(o * x), 0.8).unwrap();
            prop_assert!((b.q - o * a.q * o.transpose()).abs().max() < 1e-10);
            prop_assert!((b.b - o * a.b).norm() < 1e-10);
        }

        #[test]
        fn weight_scaling_scales_moments(seed in 0u64..10_000, c in 0.1f64..10.0) {
            let mut rng = stream_rng(seed, 1);
            let pts: Vec<Point> = (0..100).map(|_| gaussian_vector(&mut rng) * 0.5).collect();
            let mu = DiscreteMeasure::uniform(pts).unwrap();
            let a = compute_moments(&mu, &Point::zeros(), 1.0).unwrap();
            let b = compute_moments(&mu.scaled(c).unwrap(), &Point::zeros(), 1.0).unwrap();
            prop_assert!((b.q - a.q * c).abs().max() <= 1e-12 * c.max(1.0));
            prop_assert!((a.q - a.q.transpose()).abs().max() == 0.0);
            prop_assert!(a.eigenvalues[0] >= -1e-12);
            prop_assert!((a.trace - a.eigenvalues.iter().sum::<f64>()).abs() < 1e-12);
            prop_assert!((a.eigenvectors.transpose() * a.eigenvectors - Mat4::identity()).abs().max() < 1e-10);
        }

        #[test]
        fn witness_bounds_hold(seed in 0u64..100_000) {
            let mut rng = stream_rng(seed, 2);
            let q = Quadric { eta: [
                -0.5 + rng.random_range(-0.12..0.12),
                -0.5 + rng.random_range(-0.12..0.12),
                -0.5 + rng.random_range(-0.12..0.12),
                0.5 + rng.random_range(-0.12..0.12),
            ] };
            let eps = 1e-4;
            // a point on the zero set, moved along the axis to a prescribed value
            let g = gaussian_vector(&mut rng);
            let base = nearest_on_diagonal_quadric(&q.eta, &[g[0], g[1], g[2], g[3]]);
            let mut x = point_of(&base);
            x *= rng.random_range(0.0..0.9) / x.norm().max(1e-12);
            let v = rng.random_range(-0.9 * eps..0.9 * eps);
            let h2 = x[3] * x[3] + v / q.eta[3];
            prop_assume!(h2 >= 0.0);
            x[3] = if x[3] < 0.0 { -h2.sqrt() } else { h2.sqrt() };
            prop_assume!(x.norm() <= 1.0 && q.eval(&x).abs() <= eps);
            let rep = quadric_zero_distance_bound(&q, &[x], eps).unwrap();
            prop_assert!(rep.holds);
            let w = &rep.witnesses[0];
            prop_assert!(w.distance <= w.local_bound * (1.0 + 1e-9) + 1e-15);
            let exact = nearest_on_diagonal_quadric(&q.eta, &[x[0], x[1], x[2], x[3]]);
            let d = (point_of(&exact) - x).norm();
            prop_assert!(w.distance >= d - 1e-12);
        }
    }
}
