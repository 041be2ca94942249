//! Parametrization of Σ near a cone point: the inverse φ of the
//! cross-section projection, multiscale tangent planes, Whitney jets
//! (φ(a), M_a) and their moduli, and the ψ^a coordinate charts.

mod chart;

pub use chart::{c2_pushforward_flatness, AffineMap, C2Report, Chart, CoordinateMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{mat_to_rows, mix64, operator_norm, stream_rng, to_vec, Mat4, Point};
use crate::hausdorff::{ray_intersect, DistanceOptions, SetHandle};
use crate::kpcone::{ConeFrame, KpCone};
use crate::planes::{angle, fit_plane, AffinePlane, PlaneFitConfig};
use crate::rates::{loglog_fit, Slope};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// O(r₀, δ) in cone-aligned coordinates: |x₄| ≤ r₀/√2 and
/// ||τ(x)| − |x₄|| ≤ 2δ|x₄|.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RegionO {
    pub r0: f64,
    pub delta: f64,
}

impl RegionO {
    pub fn contains(&self, cone: &KpCone, x: &Point) -> bool {
        let h = cone.height(x).abs();
        h <= self.r0 / SQRT2 && (cone.tau_norm(x) - h).abs() <= 2.0 * self.delta * h
    }
}

/// Exponents threaded through the moment and parametrization stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentConfig {
    pub alpha: f64,
    /// Hölder exponent of the flat parts (an input, not derived).
    pub beta: f64,
    /// γ < θ < α/2 of the moment stage.
    pub gamma_moment: f64,
    pub theta: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// γ < β₁ of the parametrization stage.
    pub gamma: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl ExponentConfig {
    /// Defaults: γ_m = α/4, θ = 3α/8, γ₀ = α/4, γ₁ = β₁/2, γ = β₁/2.
    pub fn from_alpha(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0) {
            return Err(Error::Invalid(format!("need 0 < alpha <= 1 and beta > 0, got {alpha}, {beta}")));
        }
        let gm = alpha / 4.0;
        let theta = 3.0 * alpha / 8.0;
        let gamma0 = alpha / 4.0;
        let beta0 = (theta - gm).min(gm).min(alpha - 2.0 * gm);
        let beta1 = beta0 / (2.0 * (1.0 + gamma0));
        Self::with(alpha, beta, gm, theta, gamma0, beta1 / 2.0, beta1 / 2.0)
    }

    pub fn with(alpha: f64, beta: f64, gamma_moment: f64, theta: f64, gamma0: f64, gamma1: f64, gamma: f64) -> Result<Self> {
        let beta0 = (theta - gamma_moment).min(gamma_moment).min(alpha - 2.0 * gamma_moment);
        let beta1 = beta0 / (2.0 * (1.0 + gamma0));
        let beta2 = gamma1 * beta / (1.0 + gamma1);
        let beta3 = (beta1 - gamma).min(beta2 * (1.0 + gamma)).min(gamma);
        let e = ExponentConfig { alpha, beta, gamma_moment, theta, gamma0, gamma1, gamma, beta0, beta1, beta2, beta3 };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.gamma_moment
            && self.gamma_moment < self.theta
            && self.theta < self.alpha / 2.0
            && self.gamma0 > 0.0
            && 0.0 < self.gamma1
            && self.gamma1 < self.beta1
            && 0.0 < self.gamma
            && self.gamma < self.beta1;
        if !ok {
            return Err(Error::Invalid(format!("exponents out of range: {self:?}")));
        }
        let b3 = (self.beta1 - self.gamma).min(self.beta2 * (1.0 + self.gamma)).min(self.gamma);
        if b3 != self.beta3 || !(self.beta3 > 0.0) {
            return Err(Error::Invalid("beta3 must equal min(beta1 - gamma, beta2 (1 + gamma), gamma)".into()));
        }
        Ok(())
    }

    /// ρ₁ modulus exponent β₃/(1+γ).
    pub fn rho1_exponent(&self) -> f64 {
        self.beta3 / (1.0 + self.gamma)
    }
}

impl Default for ExponentConfig {
    fn default() -> Self {
        ExponentConfig::from_alpha(0.5, 0.5).expect("valid defaults")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamConfig {
    /// Scale constant A of the admissible radii 16|x|^{1+γ}/A.
    pub a_const: f64,
    pub eps: f64,
    pub eta: f64,
    pub delta: f64,
    pub sigma: f64,
    pub r0: f64,
    /// Ray-search tube radius; `None` uses 3× the cloud spacing.
    pub tube: Option<f64>,
    /// Smallest plane-fit radius, in units of the tube.
    pub min_fit_tubes: f64,
    /// Number of dyadic radii in a tangent-plane field.
    pub fit_levels: usize,
    /// Pairs kept per (separation bucket, class).
    pub pairs_per_bucket: usize,
    pub seed: u64,
    pub exponents: ExponentConfig,
    pub plane_fit: PlaneFitConfig,
}

impl Default for ParamConfig {
    fn default() -> Self {
        ParamConfig {
            a_const: 16.0,
            eps: 0.05,
            eta: 0.05,
            delta: 0.05,
            sigma: 0.05,
            r0: 1.0,
            tube: None,
            min_fit_tubes: 2.0,
            fit_levels: 4,
            pairs_per_bucket: 64,
            seed: 0,
            exponents: ExponentConfig::default(),
            plane_fit: PlaneFitConfig { multistart: 2, distance: DistanceOptions::coarse(), ..PlaneFitConfig::default() },
        }
    }
}

impl ParamConfig {
    pub fn region(&self) -> RegionO {
        RegionO { r0: self.r0, delta: self.delta }
    }

    pub fn tube_for(&self, sigma: &SetHandle) -> f64 {
        match (self.tube, sigma) {
            (Some(t), _) => t,
            (None, SetHandle::Cloud(c)) => 3.0 * c.spacing(),
            (None, SetHandle::Shape(_)) => 1e-9,
        }
    }

    /// Largest admissible plane-fit radius at x: 16|x|^{1+γ}/A.
    pub fn max_fit_radius(&self, x_norm: f64) -> f64 {
        16.0 * x_norm.powf(1.0 + self.exponents.gamma) / self.a_const
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhiPoint {
    pub a: Point,
    pub point: Point,
    /// Signed ray parameter along η_a.
    pub t: f64,
    /// |π(φ(a)) − a|
    pub residual: f64,
    pub tube: f64,
    /// True for the apex branch (nearest Σ point to the base).
    pub apex: bool,
}

/// φ(a) = π|_Σ⁻¹(a), found as the intersection of Σ with the line a + tη_a,
/// |t| ≤ δ|a|.
pub fn phi(sigma: &SetHandle, cone: &KpCone, a: &Point, cfg: &ParamConfig) -> Result<PhiPoint> {
    let tube = cfg.tube_for(sigma);
    let rel = (a - cone.base()).norm();
    if rel < tube.max(1e-12) {
        return Err(Error::AtApex);
    }
    let d = cone.distance(a);
    if d > 1e-9 * rel.max(1.0) {
        return Err(Error::NotOnCone(d));
    }
    if !cfg.region().contains(cone, a) {
        return Err(Error::OutsideChartDomain);
    }
    let eta = cone.eta(a)?;
    let (z, t) = ray_intersect(sigma, a, &eta, cfg.delta * rel, tube).ok_or(Error::NoIntersection)?;
    let residual = match cone.project_cross_section(&z) {
        Ok(p) => (p - a).norm(),
        Err(_) => f64::INFINITY,
    };
    Ok(PhiPoint { a: *a, point: z, t, residual, tube, apex: false })
}

/// φ with the apex branch: the base maps to the Σ point nearest to it.
pub fn phi_or_apex(sigma: &SetHandle, cone: &KpCone, a: &Point, cfg: &ParamConfig) -> Result<PhiPoint> {
    match phi(sigma, cone, a, cfg) {
        Err(Error::AtApex) => {
            let y = cone.base();
            let z = match sigma {
                SetHandle::Cloud(c) => c.points()[c.tree().nearest(y).ok_or(Error::EmptySet)?.0],
                SetHandle::Shape(s) => s.nearest(y),
            };
            Ok(PhiPoint { a: *a, point: z, t: 0.0, residual: (z - y).norm(), tube: cfg.tube_for(sigma), apex: true })
        }
        other => other,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TangentField {
    pub x: Point,
    pub radii: Vec<f64>,
    pub normals: Vec<Point>,
    pub thetas: Vec<f64>,
    /// ∠(P(x, r_k), P(x, r_{k+1}))
    pub angles: Vec<f64>,
    /// Normal of P(x), the smallest-radius fit.
    pub limit: Point,
}

/// Plane fits P(x, r) over a decreasing radius list.
pub fn tangent_plane_field(sigma: &SetHandle, x: &Point, radii: &[f64], cfg: &ParamConfig) -> Result<TangentField> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Invalid("radii must be positive and strictly decreasing".into()));
    }
    let fits: Vec<_> = radii.par_iter().map(|&r| fit_plane(sigma, x, r, &cfg.plane_fit)).collect::<Result<Vec<_>>>()?;
    let normals: Vec<Point> = fits.iter().map(|f| f.plane.normal().expect("hyperplane")).collect();
    let mut angles = Vec::with_capacity(fits.len().saturating_sub(1));
    for w in fits.windows(2) {
        angles.push(angle(&w[0].plane, &w[1].plane)?);
    }
    Ok(TangentField {
        x: *x,
        radii: radii.to_vec(),
        thetas: fits.iter().map(|f| f.theta_upper.value).collect(),
        limit: *normals.last().expect("nonempty"),
        normals,
        angles,
    })
}

/// Dyadic radii from the admissible maximum at x down to the resolution
/// floor of the set.
pub fn admissible_radii(sigma: &SetHandle, x: &Point, cone: &KpCone, cfg: &ParamConfig) -> Vec<f64> {
    let rmax = cfg.max_fit_radius((x - cone.base()).norm());
    let floor = match sigma {
        SetHandle::Cloud(_) => cfg.min_fit_tubes * cfg.tube_for(sigma),
        SetHandle::Shape(_) => 0.0,
    };
    let mut out = vec![rmax];
    while out.len() < cfg.fit_levels.max(1) && out.last().unwrap() / 2.0 >= floor {
        let r = out.last().unwrap() / 2.0;
        out.push(r);
    }
    out
}

/// Unit normal of P(x): exact for analytic shapes, otherwise the fit at the
/// smallest admissible radius.
fn limit_normal(sigma: &SetHandle, x: &Point, cone: &KpCone, cfg: &ParamConfig) -> Result<Point> {
    match sigma {
        SetHandle::Shape(s) => s
            .tangent_plane(x)
            .and_then(|p| p.normal().ok())
            .ok_or_else(|| Error::Invalid("shape has no tangent plane at this point".into())),
        SetHandle::Cloud(_) => {
            let radii = admissible_radii(sigma, x, cone, cfg);
            let r = *radii.last().unwrap();
            Ok(fit_plane(sigma, x, r, &cfg.plane_fit)?.plane.normal()?)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyDatum {
    pub a: Point,
    pub phi: Point,
    /// None at the apex.
    pub frame: Option<ConeFrame>,
    /// λ_a, unit normal of L(φ(a)).
    pub lambda: Option<Point>,
    /// M_a in world coordinates.
    pub m: Mat4,
    /// R(a) = |τ(φ(a))|/|τ(a)|
    pub ratio: f64,
    pub residual: f64,
    pub apex: bool,
}

impl WhitneyDatum {
    /// P_a(x) = φ(a) + M_a(x − a)
    pub fn poly(&self, x: &Point) -> Point {
        self.phi + self.m * (x - self.a)
    }

    /// M_a applied to the frame basis (r_a, ν_a, θ₁, θ₂).
    pub fn frame_action(&self) -> Option<[Point; 4]> {
        self.frame.as_ref().map(|f| f.basis().map(|b| self.m * b))
    }
}

/// Projection along η onto the hyperplane with normal λ.
fn project_along(v: &Point, eta: &Point, lambda: &Point) -> Point {
    v - eta * (v.dot(lambda) / eta.dot(lambda))
}

/// The jet (φ(a), M_a) with M_a(r_a) = φ_a(r_a), M_a(ν_a) = ν_a and
/// M_a(θ) = R(a)φ_a(θ), φ_a the projection along η_a onto L(φ(a)).
pub fn whitney_datum(sigma: &SetHandle, cone: &KpCone, a: &Point, cfg: &ParamConfig) -> Result<WhitneyDatum> {
    let ph = phi_or_apex(sigma, cone, a, cfg)?;
    if ph.apex {
        return Ok(WhitneyDatum {
            a: *a,
            phi: ph.point,
            frame: None,
            lambda: None,
            m: Mat4::identity(),
            ratio: 1.0,
            residual: ph.residual,
            apex: true,
        });
    }
    let frame = cone.frame_at(a)?;
    let lambda = limit_normal(sigma, &ph.point, cone, cfg)?;
    let c = frame.eta.dot(&lambda).abs().min(1.0);
    let ang = c.acos();
    let limit = 5.0 * std::f64::consts::PI / 12.0;
    if ang > limit {
        return Err(Error::ProjectionIllConditioned { angle: ang, limit });
    }
    let ratio = cone.tau_norm(&ph.point) / cone.tau_norm(a);
    let images = [
        project_along(&frame.radial, &frame.eta, &lambda),
        frame.normal,
        project_along(&frame.theta[0], &frame.eta, &lambda) * ratio,
        project_along(&frame.theta[1], &frame.eta, &lambda) * ratio,
    ];
    let mut m = Mat4::zeros();
    for (b, img) in frame.basis().iter().zip(images.iter()) {
        m += img * b.transpose();
    }
    Ok(WhitneyDatum { a: *a, phi: ph.point, frame: Some(frame), lambda: Some(lambda), m, ratio, residual: ph.residual, apex: false })
}

/// Cone points in O with |a − y| log-uniform in [r_min, r₀]; both nappes.
pub fn sample_base_points(cone: &KpCone, r_min: f64, r0: f64, n: usize, seed: u64) -> Vec<Point> {
    use rand::Rng;
    (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed ^ 0x6261_7365, i as u64);
            let s = r_min * (r0 / r_min).powf(rng.random::<f64>());
            let w = crate::synth::unit3(&mut rng);
            let nappe = if rng.random::<bool>() { 1.0 } else { -1.0 };
            cone.point_from_tau(&(w * (s / SQRT2)), nappe)
        })
        .collect()
}

/// How b − a sits relative to the radial direction at a.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    Radial,
    Theta,
    Mixed,
}

impl PairClass {
    pub fn of(a: &WhitneyDatum, b: &WhitneyDatum) -> PairClass {
        let d = b.a - a.a;
        let n = d.norm();
        let r = match &a.frame {
            Some(f) => f.radial,
            None => return PairClass::Radial,
        };
        let c = (d.dot(&r) / n).abs();
        if c >= (std::f64::consts::PI / 8.0).cos() {
            PairClass::Radial
        } else if c <= (std::f64::consts::PI / 8.0).sin() {
            PairClass::Theta
        } else {
            PairClass::Mixed
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PairClass::Radial => "radial",
            PairClass::Theta => "theta",
            PairClass::Mixed => "mixed",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModulusRow {
    /// Upper edge of the dyadic separation bucket.
    pub separation_bucket: f64,
    pub class: PairClass,
    pub separation: f64,
    /// |P_b(b) − P_a(b)|/|b − a|
    pub rho0: f64,
    /// ‖M_a − M_b‖
    pub rho1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModuliReport {
    pub rows: Vec<ModulusRow>,
    pub rho0_slope: Option<Slope>,
    pub rho1_slope: Option<Slope>,
    /// Slope of ρ₀ restricted to radially separated pairs.
    pub rho0_radial_slope: Option<Slope>,
    pub max_rho0: f64,
    pub max_rho1: f64,
}

impl ModuliReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("separation_bucket,class,rho0,rho1\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:e},{:e}\n", r.separation_bucket, r.class.name(), r.rho0, r.rho1));
        }
        s
    }
}

/// Sup-type regression: per separation bucket the largest value, then a
/// log-log fit against the bucket edge.
fn bucket_slope<F: Fn(&ModulusRow) -> f64>(rows: &[&ModulusRow], f: F) -> Option<Slope> {
    let mut buckets: std::collections::BTreeMap<i64, f64> = Default::default();
    for r in rows {
        let k = r.separation_bucket.log2().round() as i64;
        let v = f(r);
        let e = buckets.entry(k).or_insert(0.0);
        *e = e.max(v);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = buckets.iter().filter(|(_, v)| **v > 0.0).map(|(k, v)| ((*k as f64).exp2(), *v)).unzip();
    loglog_fit(&xs, &ys).ok()
}

/// ρ₀ and ρ₁ tables over sampled pairs.
pub fn whitney_moduli(data: &[WhitneyDatum], cfg: &ParamConfig) -> Result<ModuliReport> {
    if data.len() < 30 {
        return Err(Error::InsufficientPairs(format!("need at least 30 data, got {}", data.len())));
    }
    type Bucket = Vec<(u64, usize, usize)>;
    let mut groups: std::collections::BTreeMap<(i64, PairClass), Bucket> = Default::default();
    for i in 0..data.len() {
        for j in (i + 1)..data.len() {
            let sep = (data[i].a - data[j].a).norm();
            if !(sep > 0.0) {
                continue;
            }
            let k = sep.log2().ceil() as i64;
            let class = PairClass::of(&data[i], &data[j]);
            let key = mix64(cfg.seed ^ mix64(((i as u64) << 32) | j as u64));
            groups.entry((k, class)).or_default().push((key, i, j));
        }
    }
    let mut rows = Vec::new();
    for ((k, class), mut pairs) in groups {
        pairs.sort_unstable();
        for &(_, i, j) in pairs.iter().take(cfg.pairs_per_bucket) {
            let (a, b) = (&data[i], &data[j]);
            let sep = (a.a - b.a).norm();
            rows.push(ModulusRow {
                separation_bucket: (k as f64).exp2(),
                class,
                separation: sep,
                rho0: (b.poly(&b.a) - a.poly(&b.a)).norm() / sep,
                rho1: operator_norm(&(a.m - b.m)),
            });
        }
    }
    if rows.len() < 3 {
        return Err(Error::InsufficientPairs(format!("only {} usable pairs", rows.len())));
    }
    let all: Vec<&ModulusRow> = rows.iter().collect();
    let radial: Vec<&ModulusRow> = rows.iter().filter(|r| r.class == PairClass::Radial).collect();
    Ok(ModuliReport {
        rho0_slope: bucket_slope(&all, |r| r.rho0),
        rho1_slope: bucket_slope(&all, |r| r.rho1),
        rho0_radial_slope: bucket_slope(&radial, |r| r.rho0),
        max_rho0: rows.iter().map(|r| r.rho0).fold(0.0, f64::max),
        max_rho1: rows.iter().map(|r| r.rho1).fold(0.0, f64::max),
        rows,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamRecord {
    pub a: Vec<f64>,
    pub phi: Vec<f64>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub ratio: f64,
    pub residual: f64,
    pub apex: bool,
}

impl From<&WhitneyDatum> for ParamRecord {
    fn from(w: &WhitneyDatum) -> Self {
        ParamRecord { a: to_vec(&w.a), phi: to_vec(&w.phi), m: mat_to_rows(&w.m), ratio: w.ratio, residual: w.residual, apex: w.apex }
    }
}

/// Outcome of the datum construction over a set of base points. Failures
/// are kept with their error text.
#[derive(Clone, Debug)]
pub struct ParamRun {
    pub data: Vec<WhitneyDatum>,
    pub failures: Vec<(Point, String)>,
}

pub fn build_data(sigma: &SetHandle, cone: &KpCone, points: &[Point], cfg: &ParamConfig) -> ParamRun {
    let out: Vec<(Point, Result<WhitneyDatum>)> = points.par_iter().map(|a| (*a, whitney_datum(sigma, cone, a, cfg))).collect();
    let mut run = ParamRun { data: Vec::new(), failures: Vec::new() };
    for (a, r) in out {
        match r {
            Ok(d) => run.data.push(d),
            Err(e) => run.failures.push((a, e.to_string())),
        }
    }
    run
}

/// Lower-Lipschitz check of φ on a grid: the worst value of
/// |φ(a) − φ(a′)| − (½|a − a′| − 2·tube) over pairs with |a − a′| > 2·tube.
pub fn lower_lipschitz_margin(phis: &[PhiPoint]) -> f64 {
    let mut worst = f64::INFINITY;
    for i in 0..phis.len() {
        for j in (i + 1)..phis.len() {
            let (p, q) = (&phis[i], &phis[j]);
            let tube = p.tube.max(q.tube);
            let da = (p.a - q.a).norm();
            if da <= 2.0 * tube {
                continue;
            }
            worst = worst.min((p.point - q.point).norm() - (0.5 * da - 2.0 * tube));
        }
    }
    worst
}

/// Plane through φ(a) with normal λ_a, for reports.
pub fn whitney_plane(w: &WhitneyDatum) -> Option<AffinePlane> {
    AffinePlane::hyperplane(w.phi, w.lambda?).ok()
}
