//! Shared linear-algebra helpers for R^4: point type, reflections onto a
//! coordinate axis, sign conventions, deterministic reductions and the
//! counter-based random streams.

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Point = Vector4<f64>;
pub type Mat4 = Matrix4<f64>;

/// Volume of the unit 3-ball.
pub const OMEGA3: f64 = 4.0 * std::f64::consts::PI / 3.0;

/// Volume of the unit m-ball for m = 0..=4.
pub fn omega(m: usize) -> f64 {
    use std::f64::consts::PI;
    match m {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        3 => OMEGA3,
        4 => PI * PI / 2.0,
        _ => panic!("omega: dimension {m} not supported"),
    }
}

pub fn e(i: usize) -> Point {
    let mut v = Point::zeros();
    v[i] = 1.0;
    v
}

pub fn fmt_point(p: &Point) -> String {
    format!("({}, {}, {}, {})", p[0], p[1], p[2], p[3])
}

/// Parses `"a,b,c,d"` into a point.
pub fn parse_point(s: &str) -> Result<Point> {
    let parts: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if parts.len() != 4 {
        return Err(Error::Invalid(format!("expected 4 comma-separated coordinates, got {s:?}")));
    }
    let mut p = Point::zeros();
    for (i, t) in parts.iter().enumerate() {
        p[i] = t.parse::<f64>().map_err(|_| Error::Invalid(format!("bad coordinate {t:?} in {s:?}")))?;
        if !p[i].is_finite() {
            return Err(Error::Invalid(format!("non-finite coordinate in {s:?}")));
        }
    }
    Ok(p)
}

pub fn point_from_slice(v: &[f64]) -> Result<Point> {
    if v.len() != 4 {
        return Err(Error::DimensionMismatch(format!("expected 4 coordinates, got {}", v.len())));
    }
    Ok(Point::new(v[0], v[1], v[2], v[3]))
}

/// Flips `v` so that its last nonzero coordinate is positive.
pub fn canonical_sign(v: Point) -> Point {
    for i in (0..4).rev() {
        if v[i] != 0.0 {
            return if v[i] < 0.0 { -v } else { v };
        }
    }
    v
}

/// Householder reflection `H` (symmetric, orthogonal) with `H u = e4` for
/// a unit vector `u`.
pub fn reflect_to_e4(u: &Point) -> Mat4 {
    let w = u - e(3);
    let n2 = w.norm_squared();
    if n2 < 1e-30 {
        return Mat4::identity();
    }
    Mat4::identity() - w * w.transpose() * (2.0 / n2)
}

/// Orthonormal basis of the orthogonal complement of the span of `vs`
/// (assumed orthonormal), built by Gram-Schmidt over the canonical axes.
pub fn complement_basis(vs: &[Point]) -> Vec<Point> {
    let mut basis: Vec<Point> = vs.to_vec();
    let mut out = Vec::new();
    for i in 0..4 {
        let mut c = e(i);
        for b in &basis {
            c -= b * b.dot(&c);
        }
        // second pass for numerical orthogonality
        for b in &basis {
            c -= b * b.dot(&c);
        }
        let n = c.norm();
        if n > 1e-6 {
            let c = c / n;
            basis.push(c);
            out.push(c);
        }
        if basis.len() == 4 {
            break;
        }
    }
    out
}

/// Pairwise (fixed tree) summation. The tree shape only depends on the
/// length of the slice, so results do not depend on scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise reduction for vector- or matrix-valued terms.
pub fn pairwise_reduce<T>(xs: &[T], zero: T) -> T
where
    T: Copy + std::ops::Add<Output = T>,
{
    match xs.len() {
        0 => zero,
        1 => xs[0],
        n if n <= 8 => xs[1..].iter().fold(xs[0], |acc, &v| acc + v),
        n => {
            let mid = n / 2;
            pairwise_reduce(&xs[..mid], zero) + pairwise_reduce(&xs[mid..], zero)
        }
    }
}

/// Splits a 64-bit key with the SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream keyed by `(seed, index)`: ChaCha8 with the key
/// derived from the seed and the stream id set to the index.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (k, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&mix64(seed ^ mix64(k as u64 + 1)).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

pub fn gaussian_vector<R: rand::Rng + ?Sized>(rng: &mut R) -> Point {
    Point::from_fn(|_, _| StandardNormal.sample(rng))
}

pub fn random_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> Point {
    loop {
        let g = gaussian_vector(rng);
        let n = g.norm();
        if n > 1e-9 {
            return g / n;
        }
    }
}

/// Haar-distributed rotation (determinant +1).
pub fn random_rotation<R: rand::Rng + ?Sized>(rng: &mut R) -> Mat4 {
    let g = Mat4::from_fn(|_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..4 {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    if q.determinant() < 0.0 {
        let col = -q.column(0);
        q.set_column(0, &col);
    }
    q
}

/// Rotates `v` towards the unit vector `w ⟂ v` by `angle`.
pub fn rotate_towards(v: &Point, w: &Point, angle: f64) -> Point {
    v * angle.cos() + w * angle.sin()
}

/// Unit vector at angle at most `max_angle` from `v`, with a uniformly
/// random tangent direction.
pub fn perturb_direction<R: rand::Rng + ?Sized>(rng: &mut R, v: &Point, max_angle: f64) -> Point {
    let mut w = gaussian_vector(rng);
    w -= v * v.dot(&w);
    let n = w.norm();
    if n < 1e-12 {
        return *v;
    }
    let angle = max_angle * rng.random::<f64>();
    rotate_towards(v, &(w / n), angle).normalize()
}

/// Angle between the lines spanned by two nonzero vectors, in [0, π/2].
pub fn line_angle(a: &Point, b: &Point) -> f64 {
    let c = (a.dot(b).abs() / (a.norm() * b.norm())).min(1.0);
    c.acos()
}

/// Operator 2-norm of a 4x4 matrix.
pub fn operator_norm(m: &Mat4) -> f64 {
    m.singular_values().max()
}

pub fn to_vec(p: &Point) -> Vec<f64> {
    p.iter().copied().collect()
}

pub fn mat_to_rows(m: &Mat4) -> Vec<Vec<f64>> {
    (0..4).map(|i| (0..4).map(|j| m[(i, j)]).collect()).collect()
}
