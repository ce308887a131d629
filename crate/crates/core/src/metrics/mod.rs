//! Shape-abstraction scores: Chamfer-L1 between surface samples and
//! volumetric IoU on a regular lattice.

mod kdtree;

pub use kdtree::KdTree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::TriangleMesh;
use crate::{par, Error, Point3, Result, Superquadric, VoxelGrid};

/// Upper bound on the size of a sampled surface.
pub const MAX_POINTS: usize = 60_000;

pub const DEFAULT_GRID_N: usize = 100;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    pub points: Vec<Point3>,
}

impl PointSet {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Uniform random subset of at most `max` points, original order kept.
    pub fn downsample(mut self, max: usize, seed: u64) -> Self {
        if self.points.len() > max {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = rand::seq::index::sample(&mut rng, self.points.len(), max).into_vec();
            keep.sort_unstable();
            self.points = keep.into_iter().map(|i| self.points[i]).collect();
        }
        self
    }

    /// One `x y z` line per point.
    pub fn to_xyz(&self) -> String {
        let mut s = String::with_capacity(self.points.len() * 48);
        for p in &self.points {
            s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
        }
        s
    }
}

fn aabb_contains((lo, hi): &(Point3, Point3), p: &Point3) -> bool {
    (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
}

/// Surface samples of a primitive union with points strictly inside
/// another primitive dropped, downsampled to [`MAX_POINTS`].
pub fn predicted_surface_points(prims: &[Superquadric], spacing: f64, seed: u64) -> Result<PointSet> {
    if prims.is_empty() {
        return Err(Error::Empty("no primitives".into()));
    }
    let boxes: Vec<_> = prims.iter().map(Superquadric::world_aabb).collect();
    let per_prim = par::map_range(prims.len(), |k| {
        prims[k]
            .sample_surface(spacing)
            .into_iter()
            .filter(|p| {
                !(0..prims.len())
                    .any(|l| l != k && aabb_contains(&boxes[l], p) && prims[l].implicit_value(p) < 1.0)
            })
            .collect::<Vec<_>>()
    });
    let points: Vec<Point3> = per_prim.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::Empty("every surface sample lies inside another primitive".into()));
    }
    Ok(PointSet::new(points).downsample(MAX_POINTS, seed))
}

/// Linear-interpolated zero crossings of the grid along its axis-aligned
/// edges.
pub fn sdf_surface_points(grid: &VoxelGrid) -> PointSet {
    let [nx, ny, nz] = grid.dims();
    let per_slice = par::map_range(nz, |k| {
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let a = grid.linear_index([i, j, k]);
                let da = grid.value(a);
                let pa = grid.world_of(a);
                for (step, ok) in [([1, 0, 0], i + 1 < nx), ([0, 1, 0], j + 1 < ny), ([0, 0, 1], k + 1 < nz)] {
                    if !ok {
                        continue;
                    }
                    let b = grid.linear_index([i + step[0], j + step[1], k + step[2]]);
                    let db = grid.value(b);
                    if (da <= 0.0) != (db <= 0.0) {
                        let s = da / (da - db);
                        out.push(pa + (grid.world_of(b) - pa) * s);
                    }
                }
            }
        }
        out
    });
    PointSet::new(per_slice.into_iter().flatten().collect())
}

/// `n` area-weighted uniform samples of a mesh surface.
pub fn mesh_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointSet> {
    use rand::distributions::{Distribution, WeightedIndex};
    use rand::Rng;
    let areas: Vec<f64> = (0..mesh.triangles().len()).map(|t| mesh.triangle_area(t)).collect();
    let dist = WeightedIndex::new(&areas).map_err(|_| Error::Empty("mesh has no area".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let [a, b, c] = mesh.corners(dist.sample(&mut rng));
            let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            a + (b - a) * u + (c - a) * v
        })
        .collect();
    Ok(PointSet::new(points))
}

fn mean_nearest(from: &[Point3], to: &KdTree) -> f64 {
    // fixed chunks keep the summation order independent of the pool size
    const CHUNK: usize = 1024;
    let sums = par::map_range(from.len().div_ceil(CHUNK), |c| {
        from[c * CHUNK..((c + 1) * CHUNK).min(from.len())]
            .iter()
            .map(|p| to.nearest_l1(p))
            .sum::<f64>()
    });
    sums.into_iter().sum::<f64>() / from.len() as f64
}

/// Symmetric Chamfer distance with the L1 norm:
/// `mean_y min_x |y - x|_1 + mean_x min_y |x - y|_1`.
pub fn chamfer_l1(x: &PointSet, y: &PointSet) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("chamfer distance of an empty point set".into()));
    }
    let tx = KdTree::new(&x.points);
    let ty = KdTree::new(&y.points);
    Ok(mean_nearest(&y.points, &tx) + mean_nearest(&x.points, &ty))
}

/// Cubic lattice of `n^3` cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub origin: Point3,
    pub spacing: f64,
    pub n: usize,
}

impl Lattice {
    /// Smallest cube containing `(lo, hi)`, split into `n` cells per axis;
    /// samples sit at the cell centers.
    pub fn covering((lo, hi): (Point3, Point3), n: usize) -> Self {
        let side = (hi - lo).max();
        let center = (lo + hi) * 0.5;
        let spacing = side / n as f64;
        Self {
            origin: center - Point3::repeat(0.5 * side) + Point3::repeat(0.5 * spacing),
            spacing,
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, idx: usize) -> Point3 {
        let n = self.n;
        let ijk = Point3::new((idx % n) as f64, ((idx / n) % n) as f64, (idx / (n * n)) as f64);
        self.origin + ijk * self.spacing
    }
}

/// Containment predicate used by the IoU estimate.
pub trait OccupancyOracle: Sync {
    fn contains(&self, p: &Point3) -> bool;

    /// Box enclosing everything the oracle reports as inside.
    fn bounds(&self) -> (Point3, Point3);

    /// Containment of every lattice point, x fastest.
    fn occupancy(&self, lattice: &Lattice) -> Vec<bool> {
        par::map_range(lattice.len(), |i| self.contains(&lattice.point(i)))
    }
}

pub struct PrimitiveUnion<'a> {
    prims: &'a [Superquadric],
    boxes: Vec<(Point3, Point3)>,
}

impl<'a> PrimitiveUnion<'a> {
    pub fn new(prims: &'a [Superquadric]) -> Self {
        Self {
            prims,
            boxes: prims.iter().map(Superquadric::world_aabb).collect(),
        }
    }
}

impl OccupancyOracle for PrimitiveUnion<'_> {
    fn contains(&self, p: &Point3) -> bool {
        self.prims
            .iter()
            .zip(&self.boxes)
            .any(|(s, b)| aabb_contains(b, p) && s.contains(p))
    }

    fn bounds(&self) -> (Point3, Point3) {
        self.boxes.iter().fold(
            (Point3::repeat(f64::INFINITY), Point3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), (a, b)| (lo.inf(a), hi.sup(b)),
        )
    }
}

/// Inside where the trilinear interpolant of the grid is `<= 0`; outside
/// the grid everything is exterior.
pub struct SdfOccupancy<'a>(pub &'a VoxelGrid);

impl OccupancyOracle for SdfOccupancy<'_> {
    fn contains(&self, p: &Point3) -> bool {
        self.0.sample_trilinear(p).is_some_and(|d| d <= 0.0)
    }

    fn bounds(&self) -> (Point3, Point3) {
        self.0.world_bounds()
    }
}

/// Ray-parity containment of a closed mesh.
pub struct MeshOccupancy<'a>(pub &'a TriangleMesh);

impl OccupancyOracle for MeshOccupancy<'_> {
    fn contains(&self, p: &Point3) -> bool {
        // a 1-node lattice at p
        self.0.lattice_inside([1; 3], *p, 1.0).0[0]
    }

    fn bounds(&self) -> (Point3, Point3) {
        self.0.vertices().iter().fold(
            (Point3::repeat(f64::INFINITY), Point3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.inf(v), hi.sup(v)),
        )
    }

    fn occupancy(&self, lattice: &Lattice) -> Vec<bool> {
        self.0.lattice_inside([lattice.n; 3], lattice.origin, lattice.spacing).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub iou: f64,
    pub grid_n: usize,
    pub n_intersection: usize,
    pub n_union: usize,
    /// Neither shape occupied any lattice point; `iou` is then 0.
    pub empty_union: bool,
}

/// Lattice IoU over the cube covering both oracles' bounds.
pub fn iou(pred: &dyn OccupancyOracle, truth: &dyn OccupancyOracle, grid_n: usize) -> Result<IouReport> {
    let (a, b) = (pred.bounds(), truth.bounds());
    iou_in(pred, truth, (a.0.inf(&b.0), a.1.sup(&b.1)), grid_n)
}

pub fn iou_in(
    pred: &dyn OccupancyOracle,
    truth: &dyn OccupancyOracle,
    bounds: (Point3, Point3),
    grid_n: usize,
) -> Result<IouReport> {
    if grid_n < 16 {
        return Err(Error::InvalidArgument(format!("grid_n = {grid_n} must be at least 16")));
    }
    let (lo, hi) = bounds;
    if !(lo.iter().chain(hi.iter()).all(|v| v.is_finite()) && (0..3).all(|a| hi[a] >= lo[a])) {
        return Err(Error::InvalidArgument("IoU bounds are empty or not finite".into()));
    }
    // guard against a zero-extent box
    let pad = Point3::repeat(1e-9 * (1.0 + (hi - lo).max()));
    let lattice = Lattice::covering((lo - pad, hi + pad), grid_n);
    let a = pred.occupancy(&lattice);
    let b = truth.occupancy(&lattice);
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.iter().zip(&b) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(IouReport {
        iou: if union == 0 { 0.0 } else { inter as f64 / union as f64 },
        grid_n,
        n_intersection: inter,
        n_union: union,
        empty_union: union == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub chamfer_l1: f64,
    pub iou: f64,
    pub n_pred_points: usize,
    pub n_gt_points: usize,
    pub grid_n: usize,
}

/// What a prediction is scored against.
#[derive(Clone, Copy)]
pub enum Reference<'a> {
    Sdf(&'a VoxelGrid),
    Mesh(&'a TriangleMesh),
    Primitives(&'a [Superquadric]),
}

/// Chamfer-L1 and IoU of `pred` against `truth`. Predicted surfaces are
/// sampled at `spacing`; the reference surface comes from grid zero
/// crossings, area-weighted mesh samples or primitive samples.
pub fn evaluate(pred: &[Superquadric], truth: Reference, spacing: f64, grid_n: usize, seed: u64) -> Result<MetricsReport> {
    let pred_points = predicted_surface_points(pred, spacing, seed)?;
    let pred_occ = PrimitiveUnion::new(pred);
    let (gt_points, iou) = match truth {
        Reference::Sdf(g) => (
            sdf_surface_points(g).downsample(MAX_POINTS, seed),
            iou(&pred_occ, &SdfOccupancy(g), grid_n)?,
        ),
        Reference::Mesh(m) => (
            mesh_surface_points(m, MAX_POINTS, seed)?,
            iou(&pred_occ, &MeshOccupancy(m), grid_n)?,
        ),
        Reference::Primitives(p) => (
            predicted_surface_points(p, spacing, seed)?,
            iou(&pred_occ, &PrimitiveUnion::new(p), grid_n)?,
        ),
    };
    Ok(MetricsReport {
        chamfer_l1: chamfer_l1(&pred_points, &gt_points)?,
        iou: iou.iou,
        n_pred_points: pred_points.len(),
        n_gt_points: gt_points.len(),
        grid_n,
    })
}
