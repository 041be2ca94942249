//! Ground-truth scenes: uniform samples of cones and planes, and normal
//! perturbations a ↦ a + ε|a|^{1+β} g(a/|a|) ν_a of cones.

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{point_from_slice, stream_rng, Point, OMEGA3};
use crate::hausdorff::{NormalGraph, Shape};
use crate::kpcone::KpCone;
use crate::measure::{BallMass, DiscreteMeasure};
use crate::planes::AffinePlane;

/// One term amplitude·cos(k·w + phase) of a modulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub k: [f64; 4],
    pub amplitude: f64,
    pub phase: f64,
}

/// Smooth function on the unit sphere (in cone-aligned coordinates):
/// g(w) = mean + Σ amplitude·cos(k·w + phase).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub mean: f64,
    pub modes: Vec<FourierMode>,
}

impl Modulation {
    pub fn constant(c: f64) -> Self {
        Modulation { mean: c, modes: Vec::new() }
    }

    /// Mean 1 and `n_modes` modes with integer frequencies |k_i| ≤ 2 whose
    /// amplitudes sum to `amplitude`.
    pub fn random(seed: u64, n_modes: usize, amplitude: f64) -> Self {
        let mut rng = stream_rng(seed, u64::MAX);
        let modes = (0..n_modes)
            .map(|_| {
                let mut k = [0.0; 4];
                while k.iter().all(|c| *c == 0.0) {
                    for c in k.iter_mut() {
                        *c = rng.random_range(-2i32..=2) as f64;
                    }
                }
                FourierMode { k, amplitude: amplitude / n_modes as f64, phase: rng.random_range(0.0..std::f64::consts::TAU) }
            })
            .collect();
        Modulation { mean: 1.0, modes }
    }

    pub fn eval(&self, w: &Point) -> f64 {
        self.mean
            + self
                .modes
                .iter()
                .map(|m| m.amplitude * (m.k.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() + m.phase).cos())
                .sum::<f64>()
    }

    /// Upper bound on sup |g|.
    pub fn sup_bound(&self) -> f64 {
        self.mean.abs() + self.modes.iter().map(|m| m.amplitude.abs()).sum::<f64>()
    }

    /// Upper bound on the Lipschitz constant of g on R⁴.
    pub fn lipschitz_bound(&self) -> f64 {
        self.modes.iter().map(|m| m.amplitude.abs() * m.k.iter().map(|c| c * c).sum::<f64>().sqrt()).sum()
    }
}

/// Displacement magnitude s(a) = eps·|a − y|^{1+β}·g(w) along ν_a, with w
/// the aligned unit direction of a − y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderField {
    pub eps: f64,
    pub beta: f64,
    pub g: Modulation,
}

impl HolderField {
    pub fn magnitude(&self, cone: &KpCone, a: &Point) -> f64 {
        let z = cone.aligned(a);
        let rho = z.norm();
        if rho == 0.0 || self.eps == 0.0 {
            return 0.0;
        }
        self.eps * rho.powf(1.0 + self.beta) * self.g.eval(&(z / rho))
    }

    pub fn displace(&self, cone: &KpCone, a: &Point) -> Point {
        let s = self.magnitude(cone, a);
        if s == 0.0 {
            return *a;
        }
        match cone.normal(a) {
            Ok(nu) => a + nu * s,
            Err(_) => *a,
        }
    }

    /// Upper bound on the displacement over |a − y| ≤ radius.
    pub fn max_displacement(&self, radius: f64) -> f64 {
        self.eps.abs() * radius.powf(1.0 + self.beta) * self.g.sup_bound()
    }

    /// Upper bound on the Lipschitz constant of a ↦ a + s(a)ν_a on cone
    /// points with |a − y| ≤ radius.
    pub fn lipschitz_bound(&self, radius: f64) -> f64 {
        let g = &self.g;
        1.0 + self.eps.abs() * radius.max(0.0).powf(self.beta) * ((3.0 + self.beta) * g.sup_bound() + g.lipschitz_bound())
    }
}

/// Generator input.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Extent R: samples lie in B(base, R).
    pub extent: f64,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    /// Cone axis or plane normal; defaults to e₄.
    #[serde(default)]
    pub axis: Option<Vec<f64>>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub eps: f64,
    /// Number of Fourier modes of g (0 gives g ≡ 1).
    #[serde(default)]
    pub modes: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_beta() -> f64 {
    0.5
}

fn default_amplitude() -> f64 {
    0.25
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Plane,
    Cone,
    PerturbedCone,
}

/// A generated cloud with the analytic set it was drawn from.
#[derive(Clone, Debug)]
pub struct Scene {
    pub measure: DiscreteMeasure,
    pub truth: Shape,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Invalid("scene needs at least one sample".into()));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::Invalid("scene extent must be positive".into()));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Invalid("eps must be nonnegative".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Invalid("beta must be positive".into()));
        }
        Ok(())
    }

    fn base(&self) -> Result<Point> {
        self.base.as_deref().map_or(Ok(Point::zeros()), point_from_slice)
    }

    fn axis(&self) -> Result<Point> {
        self.axis.as_deref().map_or(Ok(crate::geom::e(3)), point_from_slice)
    }

    pub fn field(&self) -> HolderField {
        let g = if self.modes == 0 { Modulation::constant(1.0) } else { Modulation::random(self.seed, self.modes, self.amplitude) };
        HolderField { eps: self.eps, beta: self.beta, g }
    }

    pub fn generate(&self) -> Result<Scene> {
        self.validate()?;
        match self.kind {
            SceneKind::Plane => {
                let plane = AffinePlane::hyperplane(self.base()?, self.axis()?)?;
                Ok(Scene { measure: sample_plane(&plane, self.extent, self.n, self.seed)?, truth: Shape::Plane(plane) })
            }
            SceneKind::Cone => {
                let cone = KpCone::new(self.base()?, self.axis()?)?;
                Ok(Scene { measure: sample_cone(&cone, self.extent, self.n, self.seed), truth: Shape::Cone(cone) })
            }
            SceneKind::PerturbedCone => {
                let cone = KpCone::new(self.base()?, self.axis()?)?;
                let field = self.field();
                let mu = perturb_holder(&sample_cone(&cone, self.extent, self.n, self.seed), &cone, &field)?;
                Ok(Scene { measure: mu, truth: Shape::NormalGraph(NormalGraph { cone, field }) })
            }
        }
    }
}

/// N points H³-uniform on C ∩ B(y, R), weights ω₃R³/N.
///
/// τ is uniform in the 3-ball of radius R/√2 (the area element on each
/// nappe is √2 dτ). The radial coordinate is stratified, point i drawing
/// u ∈ [i/N, (i+1)/N) and |τ| = (R/√2)u^{1/3}, so ball masses about the
/// apex carry no binomial noise. The direction is uniform on S² and the
/// nappe is a fair coin. Point i uses its own counter-based stream.
pub fn sample_cone(cone: &KpCone, r: f64, n: usize, seed: u64) -> DiscreteMeasure {
    assert!(r > 0.0 && n > 0, "sample_cone needs R > 0 and N > 0");
    let rmax = r / std::f64::consts::SQRT_2;
    let pts: Vec<Point> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let u = (i as f64 + rng.random::<f64>()) / n as f64;
            let rho = rmax * u.cbrt();
            let dir = unit3(&mut rng);
            let nappe = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut p = cone.point_from_tau(&(dir * rho), nappe);
            // keep the sample on the cone's sphere of radius ≤ R after rounding
            if (p - cone.base()).norm() > r {
                p = cone.base() + (p - cone.base()) * (r / (p - cone.base()).norm());
            }
            p
        })
        .collect();
    let w = OMEGA3 * r.powi(3) / n as f64;
    DiscreteMeasure::new(pts, vec![w; n], 3).expect("positive weights")
}

/// N points uniform on the 3-disk P ∩ B(p, R) of a hyperplane, with the
/// same radial stratification as [`sample_cone`]; weights ω₃R³/N.
pub fn sample_plane(plane: &AffinePlane, r: f64, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    if plane.dim() != 3 {
        return Err(Error::DimensionMismatch(format!("sample_plane needs a 3-plane, got {}", plane.dim())));
    }
    if !(r > 0.0) || n == 0 {
        return Err(Error::Invalid("sample_plane needs R > 0 and N > 0".into()));
    }
    let b = plane.basis().to_vec();
    let pts: Vec<Point> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let u = (i as f64 + rng.random::<f64>()) / n as f64;
            let rho = r * u.cbrt();
            let d = unit3(&mut rng) * rho;
            plane.base() + b[0] * d[0] + b[1] * d[1] + b[2] * d[2]
        })
        .collect();
    DiscreteMeasure::new(pts, vec![OMEGA3 * r.powi(3) / n as f64; n], 3)
}

pub(crate) fn unit3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(rand_distr::StandardNormal),
            rng.sample::<f64, _>(rand_distr::StandardNormal),
            rng.sample::<f64, _>(rand_distr::StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Moves every point a of a cloud on `cone` to a + s(a)ν_a; weights are
/// kept.
pub fn perturb_holder(mu: &DiscreteMeasure, cone: &KpCone, field: &HolderField) -> Result<DiscreteMeasure> {
    for (i, p) in mu.points().iter().enumerate() {
        let d = cone.distance(p);
        if d > 1e-9 * (p - cone.base()).norm().max(1.0) {
            return Err(Error::Invalid(format!("point {i} is not on the cone (distance {d:e})")));
        }
    }
    let pts: Vec<Point> = mu.points().par_iter().map(|a| field.displace(cone, a)).collect();
    DiscreteMeasure::new(pts, mu.weights().to_vec(), mu.dimension())
}
