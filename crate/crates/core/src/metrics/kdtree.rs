//! Static 3-d tree answering exact nearest-neighbour queries in the L1
//! norm.

use crate::Point3;

pub struct KdTree {
    /// Points permuted into implicit-tree order: the median of every range
    /// sits at its midpoint.
    points: Vec<Point3>,
    axes: Vec<u8>,
}

fn l1(a: &Point3, b: &Point3) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs()
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut pts = points.to_vec();
        let mut axes = vec![0u8; pts.len()];
        Self::build(&mut pts, &mut axes, 0, points.len());
        Self { points: pts, axes }
    }

    fn build(pts: &mut [Point3], axes: &mut [u8], lo: usize, hi: usize) {
        if hi - lo <= 1 {
            return;
        }
        let mut min = Point3::repeat(f64::INFINITY);
        let mut max = Point3::repeat(f64::NEG_INFINITY);
        for p in &pts[lo..hi] {
            min = min.inf(p);
            max = max.sup(p);
        }
        let axis = (max - min).imax();
        let mid = (lo + hi) / 2;
        pts[lo..hi].select_nth_unstable_by(mid - lo, |a, b| a[axis].total_cmp(&b[axis]));
        axes[mid] = axis as u8;
        Self::build(pts, axes, lo, mid);
        Self::build(pts, axes, mid + 1, hi);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// L1 distance from `q` to its nearest point; infinite for an empty
    /// tree.
    pub fn nearest_l1(&self, q: &Point3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(q, 0, self.points.len(), &mut best);
        best
    }

    fn search(&self, q: &Point3, lo: usize, hi: usize, best: &mut f64) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let p = &self.points[mid];
        *best = best.min(l1(p, q));
        if hi - lo == 1 {
            return;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        // every point across the plane is at least |diff| away in L1
        if diff.abs() < *best {
            self.search(q, far.0, far.1, best);
        }
    }
}
