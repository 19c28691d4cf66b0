//! Static 3-d tree for nearest-neighbour lookups over point sets.

use crate::mesh::Vec3;

#[derive(Clone, Debug)]
pub struct KdTree3 {
    points: Vec<Vec3>,
    /// Point indices arranged as an implicit balanced tree.
    order: Vec<usize>,
    axes: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

fn closer(a: &Neighbor, b: &Neighbor) -> bool {
    a.distance < b.distance || (a.distance == b.distance && a.index < b.index)
}

impl KdTree3 {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(&points, &mut order, &mut axes, 0);
        Self { points, order, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Nearest point; ties go to the smaller index.
    pub fn nearest(&self, q: &Vec3) -> Option<Neighbor> {
        self.k_nearest(q, 1).into_iter().next()
    }

    /// The `k` nearest points sorted by `(distance, index)`.
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(q, k, 0, self.points.len(), &mut best);
        }
        best
    }

    fn search(&self, q: &Vec3, k: usize, lo: usize, hi: usize, best: &mut Vec<Neighbor>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let cand = Neighbor {
            index: idx,
            distance: (p - q).norm(),
        };
        if best.len() < k || closer(&cand, best.last().unwrap()) {
            let pos = best.partition_point(|b| closer(b, &cand));
            best.insert(pos, cand);
            best.truncate(k);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, k, near.0, near.1, best);
        // `<=` keeps equal-distance candidates reachable for index tie-breaks.
        if best.len() < k || diff.abs() <= best.last().unwrap().distance {
            self.search(q, k, far.0, far.1, best);
        }
    }

    /// All points within `radius` of `q`, ascending by index.
    pub fn within_radius(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_radius(q, radius, 0, self.points.len(), &mut out);
        out.sort_unstable();
        out
    }

    fn collect_radius(&self, q: &Vec3, r: f64, lo: usize, hi: usize, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        if (p - q).norm() <= r {
            out.push(idx);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        if diff - r <= 0.0 {
            self.collect_radius(q, r, lo, mid, out);
        }
        if diff + r >= 0.0 {
            self.collect_radius(q, r, mid + 1, hi, out);
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], axes: &mut [u8], depth: usize) {
    if order.is_empty() {
        return;
    }
    let (lo, hi) = order.iter().fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), &i| (lo.inf(&points[i]), hi.sup(&points[i])),
    );
    let axis = if order.len() > 1 { (hi - lo).imax() } else { depth % 3 };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    axes[mid] = axis as u8;
    let (left, rest) = order.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(points, left, left_axes, depth + 1);
    build(points, &mut rest[1..], &mut rest_axes[1..], depth + 1);
}
