//! Static k-d tree over points of R^4 with exact nearest-neighbour and
//! closed-ball queries.

use crate::geom::Point;

const LEAF: usize = 12;

#[derive(Clone, Debug)]
struct Node {
    lo: Point,
    hi: Point,
    start: usize,
    end: usize,
    // children indices; usize::MAX for leaves
    left: usize,
    right: usize,
}

#[derive(Clone, Debug)]
pub struct KdTree {
    pts: Vec<Point>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

/// Closed-ball membership used consistently across the crate.
#[inline]
pub fn in_ball(p: &Point, x: &Point, r: f64) -> bool {
    (p - x).norm_squared() <= r * r
}

fn box_dist2(lo: &Point, hi: &Point, q: &Point) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        let d = if q[i] < lo[i] {
            lo[i] - q[i]
        } else if q[i] > hi[i] {
            q[i] - hi[i]
        } else {
            0.0
        };
        s += d * d;
    }
    s
}

fn box_far2(lo: &Point, hi: &Point, q: &Point) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        let d = (q[i] - lo[i]).abs().max((q[i] - hi[i]).abs());
        s += d * d;
    }
    s
}

impl KdTree {
    pub fn new(points: &[Point]) -> Self {
        let mut ids: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(points, &mut ids, 0, points.len(), &mut nodes);
        }
        let pts = ids.iter().map(|&i| points[i]).collect();
        KdTree { pts, ids, nodes }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Nearest point to `q` as (original index, distance). Ties go to the
    /// smaller original index.
    pub fn nearest(&self, q: &Point) -> Option<(usize, f64)> {
        self.nearest_excluding(q, usize::MAX)
    }

    /// Nearest point other than the one with original index `skip`.
    pub fn nearest_excluding(&self, q: &Point, skip: usize) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nn_rec(0, q, skip, &mut best);
        if best.0 == usize::MAX {
            None
        } else {
            Some((best.0, best.1.sqrt()))
        }
    }

    fn nn_rec(&self, ni: usize, q: &Point, skip: usize, best: &mut (usize, f64)) {
        let node = &self.nodes[ni];
        if box_dist2(&node.lo, &node.hi, q) > best.1 {
            return;
        }
        if node.left == usize::MAX {
            for k in node.start..node.end {
                let id = self.ids[k];
                if id == skip {
                    continue;
                }
                let d2 = (self.pts[k] - q).norm_squared();
                if d2 < best.1 || (d2 == best.1 && id < best.0) {
                    *best = (id, d2);
                }
            }
            return;
        }
        let (a, b) = (node.left, node.right);
        let da = box_dist2(&self.nodes[a].lo, &self.nodes[a].hi, q);
        let db = box_dist2(&self.nodes[b].lo, &self.nodes[b].hi, q);
        if da <= db {
            self.nn_rec(a, q, skip, best);
            self.nn_rec(b, q, skip, best);
        } else {
            self.nn_rec(b, q, skip, best);
            self.nn_rec(a, q, skip, best);
        }
    }

    /// Original indices of all points in the closed ball B(x, r), sorted.
    pub fn in_ball(&self, x: &Point, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() && r >= 0.0 {
            self.ball_rec(0, x, r, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn ball_rec(&self, ni: usize, x: &Point, r: f64, out: &mut Vec<usize>) {
        let node = &self.nodes[ni];
        let r2 = r * r;
        if box_dist2(&node.lo, &node.hi, x) > r2 {
            return;
        }
        if box_far2(&node.lo, &node.hi, x) <= r2 {
            // whole box inside; still test points so the closed-ball
            // predicate is applied identically everywhere
            for k in node.start..node.end {
                if in_ball(&self.pts[k], x, r) {
                    out.push(self.ids[k]);
                }
            }
            return;
        }
        if node.left == usize::MAX {
            for k in node.start..node.end {
                if in_ball(&self.pts[k], x, r) {
                    out.push(self.ids[k]);
                }
            }
            return;
        }
        self.ball_rec(node.left, x, r, out);
        self.ball_rec(node.right, x, r, out);
    }

    /// Median nearest-neighbour distance over an evenly strided subsample of
    /// at most `max_samples` points. `None` for fewer than two points.
    pub fn median_spacing(&self, max_samples: usize) -> Option<f64> {
        let n = self.pts.len();
        if n < 2 {
            return None;
        }
        let step = (n / max_samples.max(1)).max(1);
        let mut ds: Vec<f64> =
            (0..n).step_by(step).filter_map(|k| self.nearest_excluding(&self.pts[k], self.ids[k]).map(|(_, d)| d)).collect();
        ds.sort_by(|a, b| a.total_cmp(b));
        Some(ds[ds.len() / 2])
    }
}

fn build(points: &[Point], ids: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for &i in &ids[start..end] {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let ni = nodes.len();
    nodes.push(Node { lo, hi, start, end, left: usize::MAX, right: usize::MAX });
    if end - start <= LEAF {
        return ni;
    }
    let spread = hi - lo;
    let dim = spread.imax();
    if spread[dim] <= 0.0 {
        return ni;
    }
    let mid = (start + end) / 2;
    ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b)));
    let left = build(points, ids, start, mid, nodes);
    let right = build(points, ids, mid, end, nodes);
    nodes[ni].left = left;
    nodes[ni].right = right;
    ni
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{gaussian_vector, stream_rng};

    fn cloud(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| gaussian_vector(&mut rng)).collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = cloud(2000, 1);
        let tree = KdTree::new(&pts);
        let qs = cloud(200, 2);
        for q in &qs {
            let (i, d) = tree.nearest(q).unwrap();
            let (bi, bd) =
                pts.iter().enumerate().map(|(k, p)| (k, (p - q).norm())).min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))).unwrap();
            assert_eq!(i, bi);
            assert_eq!(d, bd);
        }
    }

    #[test]
    fn far_queries_are_exact() {
        let pts = cloud(500, 3);
        let tree = KdTree::new(&pts);
        let q = Point::new(50.0, -20.0, 3.0, 8.0);
        let bd = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
        assert_eq!(tree.nearest(&q).unwrap().1, bd);
    }

    #[test]
    fn ball_matches_brute_force() {
        let pts = cloud(3000, 4);
        let tree = KdTree::new(&pts);
        for (k, q) in cloud(50, 5).iter().enumerate() {
            let r = 0.3 + 0.05 * k as f64;
            let got = tree.in_ball(q, r);
            let want: Vec<usize> = (0..pts.len()).filter(|&i| in_ball(&pts[i], q, r)).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn closed_ball_includes_boundary() {
        let pts = vec![Point::new(1.0, 0.0, 0.0, 0.0)];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.in_ball(&Point::zeros(), 1.0), vec![0]);
    }

    #[test]
    fn duplicates_and_empty() {
        let empty = KdTree::new(&[]);
        assert!(empty.nearest(&Point::zeros()).is_none());
        assert!(empty.in_ball(&Point::zeros(), 1.0).is_empty());
        let pts = vec![Point::zeros(); 40];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Point::zeros()).unwrap().0, 0);
        assert_eq!(tree.in_ball(&Point::zeros(), 0.0).len(), 40);
        assert_eq!(tree.median_spacing(10), Some(0.0));
    }
}
