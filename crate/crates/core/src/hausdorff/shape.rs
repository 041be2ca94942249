//! Analytic sets: exact distance oracles, parametrizations by boxes (used
//! for Lipschitz sups and mesh sampling) and ray intersections.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{point_from_slice, Mat4, Point};
use crate::index::in_ball;
use crate::kpcone::{smallest_root, KpCone};
use crate::moments::Quadric;
use crate::planes::AffinePlane;
use crate::synth::HolderField;

/// Zero set of a diagonal quadric in an orthonormal frame:
/// {x : Σ η_i y_i² = 0, y = F (x − c)}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadricSurface {
    pub center: Point,
    /// Rows are the orthonormal coordinate directions.
    pub frame: Mat4,
    pub quadric: Quadric,
}

/// Normal graph a ↦ a + s(a) ν_a over a KP cone (a Hölder perturbation).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalGraph {
    pub cone: KpCone,
    pub field: HolderField,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Shape {
    Plane(AffinePlane),
    Cone(KpCone),
    Quadric(QuadricSurface),
    NormalGraph(NormalGraph),
}

/// A box of parameters mapped into the shape by [`Shape::eval`], with a
/// Lipschitz constant of the map (Euclidean norms).
#[derive(Clone, Debug)]
pub struct Patch {
    pub id: usize,
    pub dim: usize,
    pub lo: [f64; 4],
    pub hi: [f64; 4],
    pub lip: f64,
}

/// JSON shape descriptor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ShapeDescriptor {
    Plane { point: Vec<f64>, normal: Vec<f64> },
    Kpcone { base: Vec<f64>, axis: Vec<f64> },
    Quadric { center: Vec<f64>, frame: Vec<Vec<f64>>, eta: Vec<f64> },
}

impl ShapeDescriptor {
    pub fn build(&self) -> Result<Shape> {
        match self {
            ShapeDescriptor::Plane { point, normal } => {
                Ok(Shape::Plane(AffinePlane::hyperplane(point_from_slice(point)?, point_from_slice(normal)?)?))
            }
            ShapeDescriptor::Kpcone { base, axis } => Ok(Shape::Cone(KpCone::new(point_from_slice(base)?, point_from_slice(axis)?)?)),
            ShapeDescriptor::Quadric { center, frame, eta } => {
                if frame.len() != 4 {
                    return Err(Error::DimensionMismatch("quadric frame must be 4x4".into()));
                }
                let mut f = Mat4::zeros();
                for (i, row) in frame.iter().enumerate() {
                    let r = point_from_slice(row)?;
                    for j in 0..4 {
                        f[(i, j)] = r[j];
                    }
                }
                if (f * f.transpose() - Mat4::identity()).norm() > 1e-9 {
                    return Err(Error::Invalid("quadric frame must be orthogonal".into()));
                }
                let e = point_from_slice(eta)?;
                Ok(Shape::Quadric(QuadricSurface {
                    center: point_from_slice(center)?,
                    frame: f,
                    quadric: Quadric { eta: [e[0], e[1], e[2], e[3]] },
                }))
            }
        }
    }
}

impl QuadricSurface {
    pub fn aligned(&self, x: &Point) -> Point {
        self.frame * (x - self.center)
    }

    pub fn to_world(&self, y: &Point) -> Point {
        self.frame.transpose() * y + self.center
    }

    /// Graph form: requires η₁, η₂, η₃ < 0 < η₄, giving
    /// y₄ = ±sqrt(Σ a_i y_i²) with a_i = −η_i/η₄.
    fn graph_coeffs(&self) -> Result<[f64; 3]> {
        let e = self.quadric.eta;
        if !(e[0] < 0.0 && e[1] < 0.0 && e[2] < 0.0 && e[3] > 0.0) {
            return Err(Error::Invalid("only quadrics with signature (-,-,-,+) can be parametrized".into()));
        }
        Ok([-e[0] / e[3], -e[1] / e[3], -e[2] / e[3]])
    }

    pub fn nearest(&self, x: &Point) -> Point {
        let y = self.aligned(x);
        let z = nearest_on_diagonal_quadric(&self.quadric.eta, &[y[0], y[1], y[2], y[3]]);
        self.to_world(&Point::new(z[0], z[1], z[2], z[3]))
    }
}

/// Nearest point of {Σ η_i y_i² = 0} to p. The minimizer satisfies
/// y_i = p_i/(1 + λη_i) with I + λ diag(η) ⪰ 0 (S-lemma), so candidates are
/// the unique root of the secular function on that interval and the
/// degenerate endpoint solutions; the origin is always admissible.
pub fn nearest_on_diagonal_quadric(eta: &[f64; 4], p: &[f64; 4]) -> [f64; 4] {
    let value = |y: &[f64; 4]| (0..4).map(|i| eta[i] * y[i] * y[i]).sum::<f64>();
    if value(p) == 0.0 {
        return *p;
    }
    let dist2 = |y: &[f64; 4]| (0..4).map(|i| (y[i] - p[i]).powi(2)).sum::<f64>();
    let scale = eta.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    if scale == 0.0 {
        return *p;
    }
    let max_pos = eta.iter().copied().filter(|e| *e > 0.0).fold(0.0, f64::max);
    let max_neg = eta.iter().copied().filter(|e| *e < 0.0).fold(0.0, |a: f64, e| a.max(-e));
    let lo = if max_pos > 0.0 { -1.0 / max_pos } else { f64::NEG_INFINITY };
    let hi = if max_neg > 0.0 { 1.0 / max_neg } else { f64::INFINITY };
    let at = |l: f64| -> [f64; 4] {
        let mut y = [0.0; 4];
        for i in 0..4 {
            y[i] = p[i] / (1.0 + l * eta[i]);
        }
        y
    };
    let g = |l: f64| value(&at(l));

    let mut cands: Vec<[f64; 4]> = vec![[0.0; 4]];
    // secular root: g is decreasing on (lo, hi)
    let mut a = if lo.is_finite() { lo } else { -1.0 / scale };
    let mut b = if hi.is_finite() { hi } else { 1.0 / scale };
    let inside = |l: f64| l > lo && l < hi;
    // move brackets strictly inside
    let mut ga;
    let mut gb;
    {
        let mut step = (b - a) * 1e-3;
        let mut aa = if lo.is_finite() { lo + step } else { a };
        while lo.is_infinite() && g(aa) <= 0.0 && aa > -1e300 {
            aa *= 2.0;
        }
        while lo.is_finite() && g(aa) <= 0.0 && step > (b - a) * 1e-300 {
            step *= 1e-3;
            aa = lo + step;
        }
        a = aa;
        ga = g(a);
        let mut step = (b - a) * 1e-3;
        let mut bb = if hi.is_finite() { hi - step } else { b };
        while hi.is_infinite() && g(bb) >= 0.0 && bb < 1e300 {
            bb *= 2.0;
        }
        while hi.is_finite() && g(bb) >= 0.0 && step > (b - a) * 1e-300 {
            step *= 1e-3;
            bb = hi - step;
        }
        b = bb;
        gb = g(b);
    }
    if ga > 0.0 && gb < 0.0 && inside(a) && inside(b) {
        for _ in 0..400 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let gm = g(m);
            if gm > 0.0 {
                a = m;
                ga = gm;
            } else {
                b = m;
                gb = gm;
            }
        }
        let _ = (ga, gb);
        cands.push(at(0.5 * (a + b)));
    }
    // degenerate endpoints: coordinates sharing the extreme coefficient are free
    for (lam, ek) in [(lo, max_pos), (hi, -max_neg)] {
        if !lam.is_finite() || ek == 0.0 {
            continue;
        }
        let free: Vec<usize> = (0..4).filter(|&i| (eta[i] - ek).abs() <= 1e-15 * scale).collect();
        let mut y = [0.0; 4];
        let mut rest = 0.0;
        for i in 0..4 {
            if !free.contains(&i) {
                y[i] = p[i] / (1.0 + lam * eta[i]);
                rest += eta[i] * y[i] * y[i];
            }
        }
        let need = -rest / ek;
        if need < 0.0 {
            continue;
        }
        let pf: f64 = free.iter().map(|&i| p[i] * p[i]).sum::<f64>().sqrt();
        for &i in &free {
            y[i] = if pf > 0.0 {
                need.sqrt() * p[i] / pf
            } else if i == free[0] {
                need.sqrt()
            } else {
                0.0
            };
        }
        cands.push(y);
    }
    let tol = 1e-9 * (1.0 + dist2(p));
    cands.into_iter().filter(|y| value(y).abs() <= tol * scale.max(1.0)).min_by(|u, v| dist2(u).total_cmp(&dist2(v))).unwrap_or([0.0; 4])
}

impl NormalGraph {
    pub fn eval_tau(&self, tau: &Vector3<f64>, nappe: f64) -> Point {
        self.field.displace(&self.cone, &self.cone.point_from_tau(tau, nappe))
    }

    /// Lipschitz bound of τ ↦ F(c(τ)) for |c − base| ≤ radius.
    fn lip(&self, radius: f64) -> f64 {
        std::f64::consts::SQRT_2 * self.field.lipschitz_bound(radius)
    }

    /// Signed residual along the cone normal: zero exactly on the graph.
    fn graph_residual(&self, q: &Point) -> f64 {
        let c = self.cone.nearest(q);
        match self.cone.normal(&c) {
            Ok(nu) => (q - c).dot(&nu) - self.field.magnitude(&self.cone, &c),
            Err(_) => (q - c).norm(),
        }
    }

    pub fn nearest(&self, p: &Point) -> Point {
        let c0 = self.cone.nearest(p);
        let z = self.cone.aligned(&c0);
        let tau0 = Vector3::new(z[0], z[1], z[2]);
        let nappe = if z[3] >= 0.0 { 1.0 } else { -1.0 };
        let mut best = self.field.displace(&self.cone, &c0);
        let mut best_d = (best - p).norm();
        for sg in [nappe, -nappe] {
            let (q, d) = self.gauss_newton(p, tau0, sg);
            if d < best_d {
                best = q;
                best_d = d;
            }
            if tau0.norm() > 4.0 * best_d {
                break;
            }
        }
        best
    }

    fn gauss_newton(&self, p: &Point, tau0: Vector3<f64>, nappe: f64) -> (Point, f64) {
        let mut tau = tau0;
        let mut q = self.eval_tau(&tau, nappe);
        let mut d = (q - p).norm();
        let mut mu = 1e-6;
        for _ in 0..40 {
            let h = 1e-7 * (1.0 + tau.norm());
            let mut jac = nalgebra::Matrix4x3::<f64>::zeros();
            for k in 0..3 {
                let mut tp = tau;
                let mut tm = tau;
                tp[k] += h;
                tm[k] -= h;
                let col = (self.eval_tau(&tp, nappe) - self.eval_tau(&tm, nappe)) / (2.0 * h);
                jac.set_column(k, &col);
            }
            let res = q - p;
            let jtj = jac.transpose() * jac + nalgebra::Matrix3::identity() * mu;
            let step = match jtj.lu().solve(&(jac.transpose() * res)) {
                Some(s) => s,
                None => break,
            };
            let cand = tau - step;
            let qc = self.eval_tau(&cand, nappe);
            let dc = (qc - p).norm();
            if dc < d {
                let done = d - dc < 1e-15 * (1.0 + d);
                tau = cand;
                q = qc;
                d = dc;
                mu = (mu * 0.1).max(1e-12);
                if done || step.norm() < 1e-14 * (1.0 + tau.norm()) {
                    break;
                }
            } else {
                mu *= 10.0;
                if mu > 1e6 {
                    break;
                }
            }
        }
        (q, d)
    }
}

impl Shape {
    pub fn from_json(s: &str) -> Result<Shape> {
        let d: ShapeDescriptor = serde_json::from_str(s)?;
        d.build()
    }

    /// Unconstrained nearest point.
    pub fn nearest(&self, p: &Point) -> Point {
        match self {
            Shape::Plane(pl) => pl.nearest(p),
            Shape::Cone(c) => c.nearest(p),
            Shape::Quadric(q) => q.nearest(p),
            Shape::NormalGraph(g) => g.nearest(p),
        }
    }

    pub fn distance(&self, p: &Point) -> f64 {
        match self {
            Shape::Plane(pl) => pl.distance(p),
            Shape::Cone(c) => c.distance(p),
            _ => (p - self.nearest(p)).norm(),
        }
    }

    /// Dimension of the parameter space of the shape.
    pub fn param_dim(&self) -> usize {
        match self {
            Shape::Plane(pl) => pl.dim(),
            _ => 3,
        }
    }

    /// Parameter boxes whose images cover the shape inside B(x, r).
    pub fn patches(&self, x: &Point, r: f64) -> Result<Vec<Patch>> {
        let sq2 = std::f64::consts::SQRT_2;
        let cube = |c: [f64; 3], h: f64, id: usize, lip: f64| Patch {
            id,
            dim: 3,
            lo: [c[0] - h, c[1] - h, c[2] - h, 0.0],
            hi: [c[0] + h, c[1] + h, c[2] + h, 0.0],
            lip,
        };
        match self {
            Shape::Plane(pl) => {
                let m = pl.dim();
                let mut lo = [0.0; 4];
                let mut hi = [0.0; 4];
                for i in 0..m {
                    lo[i] = -r;
                    hi[i] = r;
                }
                Ok(vec![Patch { id: 0, dim: m, lo, hi, lip: 1.0 }])
            }
            Shape::Cone(c) => {
                let z = c.aligned(x);
                let t = [z[0], z[1], z[2]];
                Ok(vec![cube(t, r, 0, sq2), cube(t, r, 1, sq2)])
            }
            Shape::Quadric(q) => {
                let a = q.graph_coeffs()?;
                let z = q.aligned(x);
                let t = [z[0], z[1], z[2]];
                let lip = (1.0 + a.iter().fold(0.0f64, |m, v| m.max(*v))).sqrt();
                Ok(vec![cube(t, r, 0, lip), cube(t, r, 1, lip)])
            }
            Shape::NormalGraph(g) => {
                let reach = (x - g.cone.base()).norm() + 2.0 * r;
                let slack = g.field.max_displacement(reach);
                let z = g.cone.aligned(x);
                let t = [z[0], z[1], z[2]];
                let lip = g.lip(reach + slack);
                Ok(vec![cube(t, r + slack, 0, lip), cube(t, r + slack, 1, lip)])
            }
        }
    }

    /// Image of parameter `u` on the patch `id` (relative to the query
    /// centre used to build the patches).
    pub fn eval(&self, x: &Point, id: usize, u: &[f64; 4]) -> Point {
        let nappe = if id == 0 { 1.0 } else { -1.0 };
        match self {
            Shape::Plane(pl) => {
                let c = pl.nearest(x);
                pl.basis().iter().enumerate().fold(c, |acc, (i, b)| acc + b * u[i])
            }
            Shape::Cone(c) => c.point_from_tau(&Vector3::new(u[0], u[1], u[2]), nappe),
            Shape::Quadric(q) => {
                let a = q.graph_coeffs().expect("patches checked the signature");
                let h = (a[0] * u[0] * u[0] + a[1] * u[1] * u[1] + a[2] * u[2] * u[2]).sqrt();
                q.to_world(&Point::new(u[0], u[1], u[2], nappe * h))
            }
            Shape::NormalGraph(g) => g.eval_tau(&Vector3::new(u[0], u[1], u[2]), nappe),
        }
    }

    /// Lattice sample of the shape inside B(x, r) with spacing at most `h`
    /// on the set.
    pub fn sample_mesh(&self, x: &Point, r: f64, h: f64) -> Result<Vec<Point>> {
        if !(h > 0.0 && r > 0.0) {
            return Err(Error::Invalid("mesh resolution and radius must be positive".into()));
        }
        let mut out = Vec::new();
        for patch in self.patches(x, r)? {
            let step = h / patch.lip;
            let counts: Vec<usize> = (0..patch.dim).map(|i| (((patch.hi[i] - patch.lo[i]) / step).ceil() as usize).max(1)).collect();
            let total: usize = counts.iter().product();
            if total > 50_000_000 {
                return Err(Error::Invalid(format!("mesh too fine: {total} lattice points")));
            }
            let mut idx = vec![0usize; patch.dim];
            for _ in 0..total {
                let mut u = [0.0; 4];
                for i in 0..patch.dim {
                    let w = patch.hi[i] - patch.lo[i];
                    u[i] = patch.lo[i] + w * idx[i] as f64 / counts[i] as f64;
                }
                let p = self.eval(x, patch.id, &u);
                if in_ball(&p, x, r)
                    && !(patch.id == 1 && u[..3].iter().all(|v| *v == 0.0) && patch.dim == 3 && !matches!(self, Shape::Plane(_)))
                {
                    out.push(p);
                }
                for i in 0..patch.dim {
                    idx[i] += 1;
                    if idx[i] <= counts[i] {
                        break;
                    }
                    idx[i] = 0;
                }
            }
        }
        Ok(out)
    }

    /// Smallest-|t| intersection of {a + t·dir, |t| ≤ window} with the
    /// shape.
    pub fn ray_hit(&self, a: &Point, dir: &Point, window: f64) -> Option<f64> {
        match self {
            Shape::Plane(pl) => {
                if pl.dim() != 3 {
                    return None;
                }
                let n = pl.normal().ok()?;
                let s = (a - pl.base()).dot(&n);
                let d = dir.dot(&n);
                if d.abs() < 1e-15 {
                    return if s.abs() < 1e-15 { Some(0.0) } else { None };
                }
                let t = -s / d;
                (t.abs() <= window).then_some(t)
            }
            Shape::Cone(c) => c.ray_hit(a, dir, window),
            Shape::Quadric(q) => {
                let z = q.aligned(a);
                let d = q.frame * dir;
                let e = q.quadric.eta;
                let qa = (0..4).map(|i| e[i] * d[i] * d[i]).sum();
                let qb = (0..4).map(|i| 2.0 * e[i] * z[i] * d[i]).sum();
                let qc = (0..4).map(|i| e[i] * z[i] * z[i]).sum();
                smallest_root(qa, qb, qc, window)
            }
            Shape::NormalGraph(g) => {
                let f = |t: f64| g.graph_residual(&(a + dir * t));
                bracketed_root(&f, window)
            }
        }
    }

    /// Tangent hyperplane at a smooth point of the shape, if defined.
    pub fn tangent_plane(&self, x: &Point) -> Option<AffinePlane> {
        match self {
            Shape::Plane(pl) => Some(pl.clone()),
            Shape::Cone(c) => c.tangent_plane(&c.nearest(x)).ok(),
            Shape::Quadric(q) => {
                let y = q.aligned(&q.nearest(x));
                let e = q.quadric.eta;
                let grad = Point::new(e[0] * y[0], e[1] * y[1], e[2] * y[2], e[3] * y[3]);
                if grad.norm() < 1e-12 {
                    return None;
                }
                AffinePlane::hyperplane(q.to_world(&y), q.frame.transpose() * grad).ok()
            }
            Shape::NormalGraph(g) => {
                let p = g.nearest(x);
                let c = g.cone.nearest(&p);
                let z = g.cone.aligned(&c);
                let tau = Vector3::new(z[0], z[1], z[2]);
                if tau.norm() < 1e-9 {
                    return None;
                }
                let nappe = z[3].signum();
                let h = 1e-6 * tau.norm();
                let mut cols = Vec::new();
                for k in 0..3 {
                    let mut tp = tau;
                    let mut tm = tau;
                    tp[k] += h;
                    tm[k] -= h;
                    cols.push((g.eval_tau(&tp, nappe) - g.eval_tau(&tm, nappe)) / (2.0 * h));
                }
                AffinePlane::new(p, &cols).ok()
            }
        }
    }
}

/// Root of a continuous function on [−window, window] of smallest |t|,
/// located by sign scanning outward from 0 and bisection.
fn bracketed_root(f: &dyn Fn(f64) -> f64, window: f64) -> Option<f64> {
    let f0 = f(0.0);
    if f0 == 0.0 {
        return Some(0.0);
    }
    let n = 256;
    let mut best: Option<f64> = None;
    for dir in [1.0, -1.0] {
        let mut prev_t = 0.0;
        let mut prev_f = f0;
        for k in 1..=n {
            let t = dir * window * k as f64 / n as f64;
            let ft = f(t);
            if ft == 0.0 || ft.signum() != prev_f.signum() {
                let (mut a, mut b, mut fa) = (prev_t, t, prev_f);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    let fm = f(m);
                    if fm == 0.0 {
                        a = m;
                        b = m;
                        break;
                    }
                    if fm.signum() == fa.signum() {
                        a = m;
                        fa = fm;
                    } else {
                        b = m;
                    }
                }
                let root = 0.5 * (a + b);
                if best.is_none_or(|bt: f64| root.abs() < bt.abs()) {
                    best = Some(root);
                }
                break;
            }
            prev_t = t;
            prev_f = ft;
        }
    }
    best
}
