//! Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
//! numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 1 5`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use kpgeom::geom::{e, gaussian_vector, line_angle, random_rotation, random_unit, stream_rng, Mat4};
use kpgeom::hausdorff::shape::nearest_on_diagonal_quadric;
use kpgeom::hausdorff::{
    directed_distance, modified_directed_with, relative_directed, relative_directed_with, DistanceOptions, SetHandle, Shape,
};
use kpgeom::kpcone::KpCone;
use kpgeom::measure::{default_radius_mesh, default_tau_grid, doubling_deviation, ExactUniformMass};
use kpgeom::moments::{compute_moments, cone_from_moments, quadric_zero_distance_bound, Quadric};
use kpgeom::parametrize::{build_data, lower_lipschitz_margin, phi, sample_base_points, whitney_moduli, ParamConfig};
use kpgeom::planes::{fit_plane, AffinePlane, PlaneFitConfig};
use kpgeom::rates::{rate_experiment, RateConfig};
use kpgeom::synth::{sample_cone, sample_plane, SceneKind, SceneSpec};
use kpgeom::{Error, Point};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn moment_k_matrix() -> Outcome {
    let t = Instant::now();
    let mu = sample_cone(&KpCone::canonical(), 1.0, 100_000, 1);
    let ms = compute_moments(&mu, &Point::zeros(), 1.0).expect("moments");
    // express Q in the orthonormal basis (e4, e1, e2, e3)
    let p = Mat4::from_columns(&[e(3), e(0), e(1), e(2)]);
    let q = p.transpose() * ms.q * p;
    let k = Mat4::from_diagonal(&Point::new(1.5, 0.5, 0.5, 0.5));
    let dev = (q - k).abs().max();
    let secs = t.elapsed().as_secs_f64();
    outcome(dev < 0.02 && secs < 10.0, format!("max|q_ij - K_ij| = {dev:.4} (< 0.02), {secs:.1} s (< 10 s)"))
}

fn plane_cfg(seed: u64) -> PlaneFitConfig {
    PlaneFitConfig { seed, ..PlaneFitConfig::default() }
}

fn apex_flatness() -> Outcome {
    let s = SetHandle::Shape(Shape::Cone(KpCone::canonical()));
    let mut worst = 0.0f64;
    let mut vals = Vec::new();
    for (i, r) in [0.25, 0.5, 1.0].into_iter().enumerate() {
        let v = fit_plane(&s, &Point::zeros(), r, &plane_cfg(i as u64)).expect("fit").theta_upper.value;
        worst = worst.max((v - FRAC_1_SQRT_2).abs());
        vals.push(format!("{v:.4}"));
    }
    outcome(worst < 0.05, format!("theta = [{}], max |theta - 1/sqrt2| = {worst:.4} (< 0.05)", vals.join(", ")))
}

fn smooth_point_flatness() -> Outcome {
    let c = KpCone::canonical();
    let s = SetHandle::Shape(Shape::Cone(c.clone()));
    let mut rng = stream_rng(3, 0);
    let mut worst_margin = f64::INFINITY;
    let mut n = 0;
    for k in 0..4 {
        let w = random_unit(&mut rng);
        let tau = nalgebra::Vector3::new(w[0], w[1], w[2]).normalize() * FRAC_1_SQRT_2;
        let a = c.point_from_tau(&tau, if k % 2 == 0 { 1.0 } else { -1.0 });
        for r in [0.5, 0.25, 0.125] {
            let cfg = PlaneFitConfig { multistart: 2, ..plane_cfg(k) };
            let v = fit_plane(&s, &a, r, &cfg).expect("fit").theta_upper.value;
            worst_margin = worst_margin.min(r / a.norm() + 0.02 - v);
            n += 1;
        }
    }
    outcome(worst_margin >= 0.0, format!("{n} fits at |a| = 1, min (r/|a| + 0.02 - theta) = {worst_margin:.4} (>= 0)"))
}

fn axis_recovery() -> Outcome {
    let mut rng = stream_rng(4, 0);
    let (mut hits, mut degenerate) = (0, 0);
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let o = random_rotation(&mut rng);
        let axis = o * e(3);
        let cone = KpCone::new(Point::zeros(), axis).expect("cone");
        let mu = sample_cone(&cone, 1.0, 10_000, 100 + k);
        if let Ok(fit) = cone_from_moments(&mu, &Point::zeros(), 1.0, 0.0, 0.5) {
            let ang = line_angle(fit.cone.axis(), &axis).to_degrees();
            worst = worst.max(ang);
            if ang <= 2.0 {
                hits += 1;
            }
        }
        let plane = AffinePlane::hyperplane(Point::zeros(), axis).expect("plane");
        let pm = sample_plane(&plane, 1.0, 10_000, 200 + k).expect("plane samples");
        if matches!(cone_from_moments(&pm, &Point::zeros(), 1.0, 0.0, 0.5), Err(Error::DegenerateSpectrum { .. })) {
            degenerate += 1;
        }
    }
    outcome(
        hits >= 48 && degenerate == 50,
        format!("axis within 2 deg in {hits}/50 (>= 48, worst {worst:.3} deg); plane degenerate in {degenerate}/50"),
    )
}

fn rate_recovery() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for beta in [0.3, 0.5] {
        let t = Instant::now();
        let rep = rate_experiment(&RateConfig { beta, eps: 0.05, levels: 7, ..RateConfig::default() }).expect("rates");
        let secs = t.elapsed().as_secs_f64();
        let ok = (rep.slope.slope - beta).abs() <= 0.1 && secs < 60.0;
        pass &= ok;
        parts.push(format!("beta {beta}: slope {:.4} [{:.4}, {:.4}], {secs:.1} s", rep.slope.slope, rep.slope.ci_low, rep.slope.ci_high));
    }
    outcome(pass, format!("{} (|slope - beta| <= 0.1, < 60 s each)", parts.join("; ")))
}

fn parametrization_identity() -> Outcome {
    let c = KpCone::canonical();
    let s = SetHandle::Shape(Shape::Cone(c.clone()));
    // every pair enters the moduli tables
    let cfg = ParamConfig { pairs_per_bucket: usize::MAX, ..ParamConfig::default() };
    let h = DistanceOptions::default().resolution;
    let pts = sample_base_points(&c, 0.02, 1.0, 200, 6);
    let run = build_data(&s, &c, &pts, &cfg);
    let (mut phi_dev, mut m_dev) = (0.0f64, 0.0f64);
    let mut phi_ok = true;
    for w in &run.data {
        let d = (w.phi - w.a).norm();
        phi_dev = phi_dev.max(d);
        phi_ok &= d <= h * w.a.norm();
        if let (Some(f), Some(img)) = (&w.frame, w.frame_action()) {
            for (b, mb) in f.basis().iter().zip(img.iter()) {
                m_dev = m_dev.max((b - mb).norm());
            }
        }
    }
    let moduli = whitney_moduli(&run.data, &cfg).expect("moduli");
    let pass = run.failures.is_empty() && phi_ok && m_dev <= 1e-6 && moduli.max_rho0 < 1e-5 && moduli.max_rho1 < 1e-5;
    outcome(
        pass,
        format!(
            "{} points, {} failures, max|phi(a) - a| = {phi_dev:.1e}, max|M_a b - b| = {m_dev:.1e}, {} pairs: rho0 {:.1e}, rho1 {:.1e}",
            pts.len(),
            run.failures.len(),
            moduli.rows.len(),
            moduli.max_rho0,
            moduli.max_rho1
        ),
    )
}

fn round_trip() -> Outcome {
    let c = KpCone::canonical();
    let spec = SceneSpec {
        kind: SceneKind::PerturbedCone,
        extent: 1.25,
        n: 100_000,
        seed: 7,
        base: None,
        axis: None,
        beta: 0.5,
        eps: 0.02,
        modes: 3,
        amplitude: 0.25,
    };
    let s = spec.generate().expect("scene").measure.support_set();
    let cfg = ParamConfig::default();
    let tube = cfg.tube_for(&s);
    let pts = sample_base_points(&c, 0.1, 1.0, 500, 7);
    let mut phis = Vec::new();
    let mut within = 0;
    for a in &pts {
        if let Ok(p) = phi(&s, &c, a, &cfg) {
            if p.residual <= tube {
                within += 1;
            }
            phis.push(p);
        }
    }
    let margin = lower_lipschitz_margin(&phis);
    let frac = within as f64 / pts.len() as f64;
    outcome(
        frac >= 0.99 && margin >= 0.0,
        format!(
            "round trip within tube {tube:.4} for {within}/500 ({:.1}% >= 99%), lower-Lipschitz margin {margin:.4} (>= 0)",
            100.0 * frac
        ),
    )
}

fn cloud(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Point> {
    (0..n).map(|_| gaussian_vector(rng) * 0.5).collect()
}

fn hausdorff_algebra() -> Outcome {
    let mut rng = stream_rng(8, 0);
    let opts = DistanceOptions::coarse();
    let (mut tri, mut rel_tri, mut cone_checks, mut bad) = (0, 0, 0, Vec::new());
    for k in 0..1000 {
        let (a, b, c) = (cloud(&mut rng, 40), cloud(&mut rng, 40), cloud(&mut rng, 40));
        let (a, b, c) = (SetHandle::cloud(a), SetHandle::cloud(b), SetHandle::cloud(c));
        let ab = directed_distance(&a, &b).unwrap().value;
        let bc = directed_distance(&b, &c).unwrap().value;
        let ac = directed_distance(&a, &c).unwrap().value;
        tri += 1;
        if ac > ab + bc + 1e-10 {
            bad.push(format!("d triangle #{k}"));
        }
        let x = gaussian_vector(&mut rng) * 0.1;
        let r = 0.6 + rng.random::<f64>();
        if let (Ok(ab), Ok(bc), Ok(ac)) =
            (relative_directed(&x, r, &a, &b), relative_directed(&x, r, &b, &c), relative_directed(&x, r, &a, &c))
        {
            rel_tri += 1;
            if ac.value > ab.value + bc.value + 1e-10 {
                bad.push(format!("d^(x,r) triangle #{k}"));
            }
        }
        // a cone based at y and a noisy sample of it, balls centred at y
        let y = gaussian_vector(&mut rng) * 0.2;
        let cone = KpCone::new(y, random_unit(&mut rng)).unwrap();
        let cs = SetHandle::Shape(Shape::Cone(cone.clone()));
        let noise = 0.01 + 0.05 * rng.random::<f64>();
        let sigma: Vec<Point> =
            Shape::Cone(cone).sample_mesh(&y, 1.0, 0.2).unwrap().iter().map(|p| p + gaussian_vector(&mut rng) * noise).collect();
        let sigma = SetHandle::cloud(sigma);
        let r = 0.5 + 0.5 * rng.random::<f64>();
        let d = relative_directed_with(&y, r, &sigma, &cs, &opts).unwrap();
        let dt = modified_directed_with(&y, r, &sigma, &cs, &opts).unwrap();
        if (d.value - dt.value).abs() > 1e-10 + d.error + dt.error {
            bad.push(format!("cone d = d~ (sample to cone) #{k}"));
        }
        let d = relative_directed_with(&y, r, &cs, &sigma, &opts).unwrap();
        let dt = modified_directed_with(&y, r, &cs, &sigma, &opts).unwrap();
        if dt.value > d.upper() + 1e-10 || d.value > 2.0 * dt.upper() + 1e-10 {
            bad.push(format!("cone d~ <= d <= 2 d~ #{k}"));
        }
        cone_checks += 1;
    }
    outcome(
        bad.is_empty(),
        format!(
            "{tri} d triangles, {rel_tri} d^(x,r) triangles, {cone_checks} cone comparisons; {} violations{}",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

fn quadric_bound() -> Outcome {
    let mut rng = stream_rng(9, 0);
    let eps = 1e-4;
    let bound = (8.0f64 / 3.0).sqrt() * 1e-2;
    let (mut n, mut worst, mut below_exact) = (0, 0.0f64, 0);
    while n < 1000 {
        let q = Quadric {
            eta: [
                -0.5 + rng.random_range(-0.12..0.12),
                -0.5 + rng.random_range(-0.12..0.12),
                -0.5 + rng.random_range(-0.12..0.12),
                0.5 + rng.random_range(-0.12..0.12),
            ],
        };
        // a zero of P inside the ball, moved along x4 to a value in [-eps, eps]
        let g = gaussian_vector(&mut rng);
        let z = nearest_on_diagonal_quadric(&q.eta, &[g[0], g[1], g[2], g[3]]);
        let mut x = Point::new(z[0], z[1], z[2], z[3]);
        x *= rng.random_range(0.0..0.95) / x.norm().max(1e-12);
        let v = rng.random_range(-eps..eps);
        let h2 = x[3] * x[3] + v / q.eta[3];
        if h2 < 0.0 {
            continue;
        }
        x[3] = x[3].signum() * h2.sqrt();
        if x.norm() > 1.0 || q.eval(&x).abs() > eps {
            continue;
        }
        let rep = quadric_zero_distance_bound(&q, &[x], eps).expect("in window");
        let w = &rep.witnesses[0];
        worst = worst.max(w.distance);
        let exact = nearest_on_diagonal_quadric(&q.eta, &[x[0], x[1], x[2], x[3]]);
        let d = (Point::new(exact[0], exact[1], exact[2], exact[3]) - x).norm();
        if w.distance < d - 1e-12 {
            below_exact += 1;
        }
        n += 1;
    }
    outcome(
        worst <= bound && below_exact == 0,
        format!("{n} cases, max witness distance {worst:.3e} (<= {bound:.3e}), {below_exact} below the nearest-zero distance"),
    )
}

fn doubling_oracle() -> Outcome {
    let exact = ExactUniformMass { dimension: 3 };
    let c = KpCone::canonical();
    let mut exact_dev = 0.0f64;
    for x in [Point::zeros(), Point::new(1.0, 0.0, 0.0, 1.0), c.point_from_tau(&nalgebra::Vector3::new(0.3, -0.4, 0.0), -0.5 * SQRT_2)] {
        let rep = doubling_deviation(&exact, &x, 0.7, &default_radius_mesh(0.7), &default_tau_grid()).unwrap();
        exact_dev = exact_dev.max(rep.deviation);
    }
    let mu = sample_cone(&c, 1.0, 100_000, 10);
    let sampled = doubling_deviation(&mu, &Point::zeros(), 1.0, &default_radius_mesh(1.0), &default_tau_grid()).unwrap().deviation;
    outcome(exact_dev == 0.0 && sampled < 0.03, format!("closed form {exact_dev:e} (= 0), sampled at 1e5 points {sampled:.4} (< 0.03)"))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "moment K-matrix", moment_k_matrix),
        (2, "apex flatness constant", apex_flatness),
        (3, "smooth-point flatness", smooth_point_flatness),
        (4, "axis recovery", axis_recovery),
        (5, "rate recovery", rate_recovery),
        (6, "parametrization identity", parametrization_identity),
        (7, "round trip", round_trip),
        (8, "Hausdorff algebra", hausdorff_algebra),
        (9, "quadric bound", quadric_bound),
        (10, "doubling oracle", doubling_oracle),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut total = Duration::ZERO;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let dt = t.elapsed();
        total += dt;
        println!("{} {id:>2} {name}: {} [{:.1} s]", if res.pass { "PASS" } else { "FAIL" }, res.detail, dt.as_secs_f64());
        if !res.pass {
            failed += 1;
        }
    }
    println!("acceptance: {failed} failed, {:.1} s", total.as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
