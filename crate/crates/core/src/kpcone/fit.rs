//! θ^C and ϑ^C fits: minimize D^{x,r}(Σ, C) over KP cones based at x, or
//! over KP cones containing x.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::KpCone;
use crate::error::Result;
use crate::geom::{canonical_sign, complement_basis, pairwise_reduce, perturb_direction, stream_rng, Mat4, Point};
use crate::hausdorff::{relative_hausdorff_with, DistanceOptions, Estimate, SetHandle, Shape};
use crate::moments::sorted_eigen;
use crate::optim::{coordinate_descent, sphere_move};
use crate::planes::fit::{localize, sample_points};
use crate::planes::pca_normal;

/// Points of Σ ∩ B(x, r) used by the surrogate.
const SURROGATE_POINTS: usize = 4000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeFitConfig {
    /// Perturbed restarts around each deterministic start.
    pub multistart: usize,
    /// Largest perturbation angle of a restart, degrees.
    pub perturb_deg: f64,
    pub tol: f64,
    pub seed: u64,
    /// Free fit: the base is searched within distance factor·r of x.
    pub base_radius_factor: f64,
    /// Eigen-gap below which the moment start is replaced by the PCA start.
    pub gap_min: f64,
    pub distance: DistanceOptions,
    /// Evaluation cap of each surrogate descent.
    pub descent_evals: usize,
}

impl Default for ConeFitConfig {
    fn default() -> Self {
        ConeFitConfig {
            multistart: 16,
            perturb_deg: 15.0,
            tol: 1e-6,
            seed: 0,
            base_radius_factor: 4.0,
            gap_min: 0.25,
            distance: DistanceOptions::default(),
            descent_evals: 800,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeFitTrace {
    pub starts: usize,
    pub evaluations: usize,
    /// Value of the initial (moment or PCA) cone at full resolution.
    pub initial_value: f64,
    /// Whether the moment spectrum had a usable gap.
    pub moment_start: bool,
    pub local_values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ConeFit {
    pub cone: KpCone,
    /// D^{x,r}(Σ, cone) with its mesh error.
    pub value: Estimate,
    pub trace: ConeFitTrace,
}

/// Unnormalized second-moment eigen-structure of the sample about x.
fn moment_axis(pts: &[Point], x: &Point, gap_min: f64) -> (Point, bool) {
    if pts.is_empty() {
        return (crate::geom::e(3), false);
    }
    let terms: Vec<Mat4> = pts.iter().map(|p| (p - x) * (p - x).transpose()).collect();
    let q = pairwise_reduce(&terms, Mat4::zeros());
    let tr = q.trace();
    if !(tr > 0.0) {
        return (crate::geom::e(3), false);
    }
    // normalize so that an exact cone has spectrum (1/2, 1/2, 1/2, 3/2)
    let (vals, vecs) = sorted_eigen(&(q * (3.0 / tr)));
    (vecs.column(3).into_owned(), vals[3] - vals[2] > gap_min)
}

fn objective(x: &Point, r: f64, sigma: &SetHandle, cone: &KpCone, opts: &DistanceOptions) -> Estimate {
    relative_hausdorff_with(x, r, sigma, &SetHandle::Shape(Shape::Cone(cone.clone())), opts)
        .unwrap_or(Estimate { value: f64::INFINITY, error: 0.0 })
}

/// Cheap surrogate: one-sided d̃^{x,r}(Σ, C) over representative points.
fn surrogate(pts: &[Point], r: f64, cone: &KpCone) -> f64 {
    pts.iter().map(|p| cone.distance(p)).fold(0.0, f64::max) / r
}

/// Cheap two-sided surrogate D̃^{x,r}(Σ, C): the representative points
/// against C, and a coarse mesh of C ∩ B(x, r) against Σ.
fn surrogate2(pts: &[Point], local: &SetHandle, x: &Point, r: f64, cone: &KpCone) -> f64 {
    let back = Shape::Cone(cone.clone())
        .sample_mesh(x, r, r / 6.0)
        .map_or(f64::INFINITY, |m| m.iter().map(|p| local.distance(p)).fold(0.0, f64::max) / r);
    surrogate(pts, r, cone).max(back)
}

/// At most `n` of the points, evenly strided.
fn thin(pts: Vec<Point>, n: usize) -> Vec<Point> {
    if pts.len() <= n {
        return pts;
    }
    let step = pts.len() as f64 / n as f64;
    (0..n).map(|i| pts[(i as f64 * step) as usize]).collect()
}

fn cone_key(c: &KpCone) -> [f64; 8] {
    let mut k = [0.0; 8];
    for i in 0..4 {
        k[i] = c.axis()[i];
        k[4 + i] = c.base()[i];
    }
    k
}

fn better(a: &(KpCone, Estimate), b: &(KpCone, Estimate)) -> bool {
    a.1.value < b.1.value
        || (a.1.value == b.1.value && cone_key(&a.0).iter().zip(cone_key(&b.0).iter()).find(|(p, q)| p != q).is_some_and(|(p, q)| p < q))
}

/// Best KP cone based at x: optimizes the axis on S³.
pub fn fit_cone_based(sigma: &SetHandle, x: &Point, r: f64, cfg: &ConeFitConfig) -> Result<ConeFit> {
    let local = localize(sigma, x, r)?;
    let pts = sample_points(&local, x, r)?;
    let (u0, moment_start) = moment_axis(&pts, x, cfg.gap_min);
    let probe = thin(pts, SURROGATE_POINTS);
    let mut starts = vec![canonical_sign(u0)];
    for k in 0..cfg.multistart {
        let mut rng = stream_rng(cfg.seed, k as u64);
        starts.push(perturb_direction(&mut rng, &u0, cfg.perturb_deg.to_radians()));
    }
    let mk = |u: &Point| KpCone::new(*x, *u).expect("unit axis");
    let phase_a: Vec<(Point, f64)> = starts
        .par_iter()
        .map(|u| {
            let f0 = surrogate(&probe, r, &mk(u));
            let (u, f, _) =
                coordinate_descent(*u, f0, 3, 0.1, cfg.tol.max(1e-9), cfg.descent_evals, sphere_move, |u| surrogate(&probe, r, &mk(u)));
            (u, f)
        })
        .collect();
    let mut evaluations = 0usize;
    let mut ranked: Vec<(Point, f64)> = phase_a.iter().map(|(u, _)| (*u, surrogate2(&probe, &local, x, r, &mk(u)))).collect();
    evaluations += ranked.len();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    let refined: Vec<Point> = ranked
        .iter()
        .take(2)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(u0, f0)| {
            coordinate_descent(*u0, *f0, 3, 0.01, cfg.tol.max(1e-4), 100, sphere_move, |u| surrogate2(&probe, &local, x, r, &mk(u))).0
        })
        .collect();
    evaluations += 200;
    let initial = objective(x, r, &local, &mk(&starts[0]), &cfg.distance);
    let mut best = (mk(&starts[0]), initial);
    for u in refined {
        let c = mk(&u);
        let v = objective(x, r, &local, &c, &cfg.distance);
        if better(&(c.clone(), v), &best) {
            best = (c, v);
        }
    }
    Ok(ConeFit {
        cone: best.0,
        value: best.1,
        trace: ConeFitTrace {
            starts: starts.len(),
            evaluations,
            initial_value: initial.value,
            moment_start,
            local_values: phase_a.iter().map(|p| p.1).collect(),
        },
    })
}

/// Free-cone state: x = y + s·t with t a ray of the cone, axis
/// u = (t + n)/√2 for a unit n ⟂ t.
#[derive(Clone, Copy, Debug)]
struct FreeState {
    t: Point,
    n: Point,
    s: f64,
}

impl FreeState {
    fn cone(&self, x: &Point) -> KpCone {
        KpCone::new(x - self.t * self.s, (self.t + self.n) / std::f64::consts::SQRT_2).expect("unit axis")
    }

    fn moved(&self, k: usize, d: f64, smax: f64, r: f64) -> FreeState {
        match k {
            0..=2 => {
                let t = sphere_move(&self.t, k, d);
                let mut n = self.n - t * t.dot(&self.n);
                let nn = n.norm();
                n = if nn > 1e-9 { n / nn } else { complement_basis(&[t])[0] };
                FreeState { t, n, ..*self }
            }
            3 | 4 => {
                let b = complement_basis(&[self.t, self.n]);
                let n = (self.n * d.cos() + b[k - 3] * d.sin()).normalize();
                FreeState { n, ..*self }
            }
            _ => FreeState { s: (self.s + d * r * 4.0).clamp(0.0, smax), ..*self },
        }
    }

    /// Cone based at x with axis u (t is any ray of that cone).
    fn apex_at_x(u: &Point) -> FreeState {
        let w = complement_basis(&[*u])[0];
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        FreeState { t: (u + w) * s2, n: (u - w) * s2, s: 0.0 }
    }

    /// Cone through x whose tangent hyperplane at x has normal ν, with the
    /// ray direction `t ⟂ ν` and base at distance s.
    fn tangent_to(nu: &Point, t: &Point, s: f64) -> FreeState {
        FreeState { t: *t, n: *nu, s }
    }
}

/// Best KP cone containing x, base within `base_radius_factor·r` of x.
pub fn fit_cone_free(sigma: &SetHandle, x: &Point, r: f64, cfg: &ConeFitConfig) -> Result<ConeFit> {
    let local = localize(sigma, x, r)?;
    let pts = sample_points(&local, x, r)?;
    let smax = cfg.base_radius_factor * r;
    let (u0, moment_start) = moment_axis(&pts, x, cfg.gap_min);
    let nu = pca_normal(&pts).unwrap_or(crate::geom::e(3));
    let probe = thin(pts, SURROGATE_POINTS);
    let mut seeds = Vec::new();
    if moment_start {
        seeds.push(FreeState::apex_at_x(&canonical_sign(u0)));
    }
    for t in complement_basis(&[nu]) {
        seeds.push(FreeState::tangent_to(&nu, &t, smax));
    }
    if !moment_start {
        seeds.push(FreeState::apex_at_x(&canonical_sign(u0)));
    }
    let mut starts = seeds.clone();
    for k in 0..cfg.multistart {
        let mut rng = stream_rng(cfg.seed, k as u64);
        let base = seeds[k % seeds.len()];
        let t = perturb_direction(&mut rng, &base.t, cfg.perturb_deg.to_radians());
        let n = perturb_direction(&mut rng, &base.n, cfg.perturb_deg.to_radians());
        let n = n - t * t.dot(&n);
        if n.norm() < 1e-6 {
            continue;
        }
        let s = if base.s == 0.0 { 0.0 } else { smax * (0.25 + 0.75 * rand::Rng::random::<f64>(&mut rng)) };
        starts.push(FreeState { t, n: n.normalize(), s });
    }

    let sur = |st: &FreeState| surrogate(&probe, r, &st.cone(x));
    let full = |st: &FreeState, o: &DistanceOptions| objective(x, r, &local, &st.cone(x), o);
    let phase_a: Vec<(FreeState, f64)> = starts
        .par_iter()
        .map(|st| {
            let (st, f, _) =
                coordinate_descent(*st, sur(st), 6, 0.1, cfg.tol.max(1e-9), cfg.descent_evals, |s, k, d| s.moved(k, d, smax, r), sur);
            (st, f)
        })
        .collect();
    let sur2 = |st: &FreeState| surrogate2(&probe, &local, x, r, &st.cone(x));
    let mut ranked: Vec<(FreeState, f64)> = phase_a.iter().map(|(s, _)| (*s, sur2(s))).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    let refined: Vec<FreeState> = ranked
        .iter()
        .take(2)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(s0, f0)| coordinate_descent(*s0, *f0, 6, 0.01, cfg.tol.max(1e-4), 120, |s, k, d| s.moved(k, d, smax, r), sur2).0)
        .collect();
    let initial = full(&seeds[0], &cfg.distance);
    let mut best = (seeds[0].cone(x), initial);
    for st in refined.iter().chain(seeds.iter().skip(1)) {
        let c = st.cone(x);
        let v = full(st, &cfg.distance);
        if better(&(c.clone(), v), &best) {
            best = (c, v);
        }
    }
    Ok(ConeFit {
        cone: best.0,
        value: best.1,
        trace: ConeFitTrace {
            starts: starts.len(),
            evaluations: ranked.len() + 240 + seeds.len(),
            initial_value: initial.value,
            moment_start,
            local_values: phase_a.iter().map(|p| p.1).collect(),
        },
    })
}
