//! θ^P fit: minimize D^{x,r}(Σ, P) over hyperplanes P through x.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pca_normal, AffinePlane};
use crate::error::Result;
use crate::geom::{canonical_sign, random_unit, stream_rng, to_vec, Point};
use crate::hausdorff::{relative_directed_with, relative_hausdorff_with, DistanceOptions, Estimate, SetHandle, Shape};
use crate::optim::{coordinate_descent, sphere_move, DescentStats};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaneFitConfig {
    /// Random restarts in addition to the PCA start.
    pub multistart: usize,
    /// Final angular step of the descent (radians on the normal sphere).
    pub tol: f64,
    pub seed: u64,
    /// Resolution of the reported value.
    pub distance: DistanceOptions,
    /// Resolution used inside the descent.
    pub search: DistanceOptions,
}

impl Default for PlaneFitConfig {
    fn default() -> Self {
        PlaneFitConfig { multistart: 8, tol: 1e-6, seed: 0, distance: DistanceOptions::default(), search: DistanceOptions::coarse() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaneFitTrace {
    pub starts: usize,
    pub evaluations: usize,
    /// Two-sided value of the PCA plane at full resolution.
    pub pca_value: f64,
    /// (normal, one-sided value) of each local search.
    pub local_optima: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug)]
pub struct PlaneFit {
    pub plane: AffinePlane,
    /// D^{x,r}(Σ, plane) with its mesh error.
    pub theta_upper: Estimate,
    pub trace: PlaneFitTrace,
}

/// `{"normal": [..], "theta": .., "r": .., "x": [..]}`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaneFitJson {
    pub normal: Vec<f64>,
    pub theta: f64,
    pub theta_error: f64,
    pub r: f64,
    pub x: Vec<f64>,
}

impl PlaneFit {
    pub fn to_json(&self, x: &Point, r: f64) -> PlaneFitJson {
        PlaneFitJson {
            normal: to_vec(&self.plane.normal().expect("hyperplane")),
            theta: self.theta_upper.value,
            theta_error: self.theta_upper.error,
            r,
            x: to_vec(x),
        }
    }
}

/// Σ restricted to the ball, so repeated objective calls skip the clip.
pub(crate) fn localize(sigma: &SetHandle, x: &Point, r: f64) -> Result<SetHandle> {
    match sigma {
        SetHandle::Cloud(c) => {
            let ids = c.tree().in_ball(x, r);
            if ids.is_empty() {
                return Err(crate::error::Error::empty_intersection(x, r));
            }
            Ok(SetHandle::cloud(ids.into_iter().map(|i| c.points()[i]).collect()))
        }
        SetHandle::Shape(s) => {
            if !sigma.meets_ball(x, r) {
                return Err(crate::error::Error::empty_intersection(x, r));
            }
            Ok(SetHandle::Shape(s.clone()))
        }
    }
}

/// Representative points of Σ ∩ B(x, r) for initializations.
pub(crate) fn sample_points(sigma: &SetHandle, x: &Point, r: f64) -> Result<Vec<Point>> {
    match sigma {
        SetHandle::Cloud(c) => Ok(c.points().to_vec()),
        SetHandle::Shape(s) => s.sample_mesh(x, r, r / 12.0),
    }
}

fn plane_set(x: &Point, n: &Point) -> SetHandle {
    SetHandle::Shape(Shape::Plane(AffinePlane::hyperplane(*x, *n).expect("unit normal")))
}

fn lex_less(a: &Point, b: &Point) -> bool {
    for i in 0..4 {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

pub fn fit_plane(sigma: &SetHandle, x: &Point, r: f64, cfg: &PlaneFitConfig) -> Result<PlaneFit> {
    let local = localize(sigma, x, r)?;
    let pts = sample_points(&local, x, r)?;
    let pca = pca_normal(&pts).unwrap_or(crate::geom::e(3));

    let one_sided =
        |n: &Point| -> f64 { relative_directed_with(x, r, &local, &plane_set(x, n), &cfg.search).map_or(f64::INFINITY, |e| e.value) };
    let two_sided = |n: &Point, opts: &DistanceOptions| -> Estimate {
        relative_hausdorff_with(x, r, &local, &plane_set(x, n), opts).unwrap_or(Estimate { value: f64::INFINITY, error: 0.0 })
    };

    let mut starts = vec![pca];
    for k in 0..cfg.multistart {
        let mut rng = stream_rng(cfg.seed, k as u64);
        starts.push(random_unit(&mut rng));
    }

    // phase A: one-sided Σ → P descent from every start
    let phase_a: Vec<(Point, f64, DescentStats)> = starts
        .par_iter()
        .map(|n0| {
            let f0 = one_sided(n0);
            let tol = cfg.tol.max(1e-9);
            coordinate_descent(*n0, f0, 3, 0.25, tol, 4000, sphere_move, |n| one_sided(n))
        })
        .collect();
    let mut evaluations: usize = phase_a.iter().map(|p| p.2.evaluations + 1).sum();

    // phase B: two-sided refinement of the best candidates
    let mut cands: Vec<(Point, f64)> = phase_a.iter().map(|(n, _, _)| (canonical_sign(*n), two_sided(n, &cfg.search).value)).collect();
    evaluations += cands.len();
    cands.sort_by(|a, b| {
        a.1.total_cmp(&b.1).then_with(|| if lex_less(&a.0, &b.0) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater })
    });
    let refined: Vec<(Point, DescentStats)> = cands
        .iter()
        .take(2)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(n0, f0)| {
            let (n, _, st) =
                coordinate_descent(*n0, *f0, 3, 0.02, cfg.tol.max(1e-4), 120, sphere_move, |n| two_sided(n, &cfg.search).value);
            (n, st)
        })
        .collect();
    evaluations += refined.iter().map(|r| r.1.evaluations).sum::<usize>();

    let pca_value = two_sided(&pca, &cfg.distance);
    let mut best = (canonical_sign(pca), pca_value);
    for (n, _) in &refined {
        let n = canonical_sign(*n);
        let v = two_sided(&n, &cfg.distance);
        evaluations += 1;
        if v.value < best.1.value || (v.value == best.1.value && lex_less(&n, &best.0)) {
            best = (n, v);
        }
    }
    let trace = PlaneFitTrace {
        starts: starts.len(),
        evaluations: evaluations + 1,
        pca_value: pca_value.value,
        local_optima: phase_a.iter().map(|(n, v, _)| (to_vec(&canonical_sign(*n)), *v)).collect(),
    };
    Ok(PlaneFit { plane: AffinePlane::hyperplane(*x, best.0)?, theta_upper: best.1, trace })
}
