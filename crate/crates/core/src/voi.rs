//! Connectivity marching on the signed-distance domain.
//!
//! A geometric sequence of negative isolevels is swept from the deepest
//! active voxel toward zero; at each level the active sub-threshold voxels
//! are split into 26-connected components, and components with at least
//! `N_c` voxels become volumes of interest that seed a primitive.

use std::collections::VecDeque;

use crate::{par, Error, Point3, Result, Superquadric, VoxelGrid};

/// Geometric sequence of isolevels `t1, alpha*t1, alpha^2*t1, ...` that
/// stops once a level rises above `termination`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSchedule {
    t1: f64,
    alpha: f64,
    termination: f64,
}

impl ThresholdSchedule {
    pub fn new(t1: f64, alpha: f64, termination: f64) -> Result<Self> {
        if t1.is_nan() || t1 >= 0.0 {
            return Err(Error::InvalidArgument(format!("first threshold {t1} must be < 0")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} must lie in (0, 1)")));
        }
        if !(termination > t1 && termination < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "termination {termination} must lie in ({t1}, 0)"
            )));
        }
        Ok(Self {
            t1,
            alpha,
            termination,
        })
    }

    pub fn first(&self) -> f64 {
        self.t1
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn termination(&self) -> f64 {
        self.termination
    }

    /// The thresholds that do not exceed the termination level.
    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::successors(Some(self.t1), move |t| Some(t * self.alpha))
            .take_while(move |t| *t <= self.termination)
    }

    /// Index (0-based) of the first level that exceeds `termination`.
    pub fn crossing_index(&self) -> usize {
        self.thresholds().count()
    }
}

/// Builds the schedule for the current mask: starts at the minimum active
/// SDF and stops at `termination_ratio * (-t)`.
///
/// Returns `None` when there is no active interior voxel, or when even the
/// deepest one lies above the termination level.
pub fn schedule(grid: &VoxelGrid, alpha: f64, termination_ratio: f64) -> Result<Option<ThresholdSchedule>> {
    let t = grid
        .truncation()
        .ok_or_else(|| Error::InvalidArgument("grid must be truncated before marching".into()))?;
    let Some(t1) = grid.min_active_sdf() else {
        return Ok(None);
    };
    let termination = -termination_ratio * t;
    if t1 >= termination {
        return Ok(None);
    }
    ThresholdSchedule::new(t1, alpha, termination).map(Some)
}

/// A 26-connected set of active voxels below an isolevel.
#[derive(Debug, Clone, PartialEq)]
pub struct Voi {
    /// Member voxels, increasing linear index.
    pub voxels: Vec<usize>,
    /// World-space bounding box: member centers expanded by half a voxel on
    /// each side.
    pub bbox_min: Point3,
    pub bbox_max: Point3,
    /// Unweighted mean of member voxel centers.
    pub centroid: Point3,
}

impl Voi {
    fn from_voxels(grid: &VoxelGrid, mut voxels: Vec<usize>) -> Self {
        voxels.sort_unstable();
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        let mut sum = Point3::zeros();
        for &v in &voxels {
            let p = grid.world_of(v);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
            sum += p;
        }
        let half = Point3::repeat(0.5 * grid.spacing());
        Self {
            centroid: sum / voxels.len() as f64,
            bbox_min: lo - half,
            bbox_max: hi + half,
            voxels,
        }
    }

    pub fn size(&self) -> usize {
        self.voxels.len()
    }

    /// Bounding-box side lengths `(l_x, l_y, l_z)`.
    pub fn extent(&self) -> Point3 {
        self.bbox_max - self.bbox_min
    }

    /// Smallest member index; stable identifier together with the size.
    pub fn signature(&self) -> (usize, usize) {
        (self.voxels[0], self.voxels.len())
    }
}

/// Splits the active voxels with `d <= threshold` into maximal
/// 26-connected components, ordered by their smallest linear index.
pub fn connected_components(grid: &VoxelGrid, threshold: f64) -> Vec<Voi> {
    let member = |i: usize| grid.is_active(i) && grid.value(i) <= threshold;
    let mut seen = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    let mut out = Vec::new();
    for seed in 0..grid.len() {
        if seen[seed] || !member(seed) {
            continue;
        }
        seen[seed] = true;
        queue.push_back(seed);
        let mut comp = Vec::new();
        while let Some(v) = queue.pop_front() {
            comp.push(v);
            for n in grid.neighbors26(v) {
                if !seen[n] && member(n) {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        out.push(Voi::from_voxels(grid, comp));
    }
    out
}

/// Keeps components with at least `n_c` voxels, order preserved.
pub fn filter_vois(comps: Vec<Voi>, n_c: usize) -> Vec<Voi> {
    comps.into_iter().filter(|c| c.size() >= n_c).collect()
}

/// Initial ellipsoid for a VOI: scales `gamma * l` (floored at
/// `scale_min`), identity rotation, centered at the centroid when that
/// coincides with an active interior voxel, otherwise at the nearest active
/// interior voxel.
pub fn init_primitive(voi: &Voi, grid: &VoxelGrid, gamma: f64, scale_min: f64) -> Result<Superquadric> {
    if voi.voxels.is_empty() {
        return Err(Error::Initialization("empty VOI".into()));
    }
    let l = voi.extent();
    let scale = [0, 1, 2].map(|a| (gamma * l[a]).max(scale_min));
    let center = interior_center(grid, &voi.centroid)?;
    Superquadric::new([1.0, 1.0], scale, [0.0; 3], center)
}

/// Nearest active voxel with `d <= 0` to `target` (ties broken by lowest
/// index). Returns `target` itself when it sits on such a voxel.
fn interior_center(grid: &VoxelGrid, target: &Point3) -> Result<Point3> {
    let h = grid.spacing();
    let on_grid = [0, 1, 2].map(|a| ((target[a] - grid.origin()[a]) / h).round());
    let dims = grid.dims();
    if (0..3).all(|a| on_grid[a] >= 0.0 && (on_grid[a] as usize) < dims[a]) {
        let idx = grid.linear_index(on_grid.map(|v| v as usize));
        if (grid.world_of(idx) - target).norm() <= 1e-9 * h
            && grid.is_active(idx)
            && grid.value(idx) <= 0.0
        {
            return Ok(*target);
        }
    }
    // Per z-slice minima, reduced in slice order for determinism.
    let slice = dims[0] * dims[1];
    let best = par::map_range(dims[2], |k| {
        let mut best: Option<(f64, usize)> = None;
        for idx in k * slice..(k + 1) * slice {
            if grid.is_active(idx) && grid.value(idx) <= 0.0 {
                let d2 = (grid.world_of(idx) - target).norm_squared();
                if best.is_none_or(|(b, _)| d2 < b) {
                    best = Some((d2, idx));
                }
            }
        }
        best
    })
    .into_iter()
    .flatten()
    .fold(None, |acc: Option<(f64, usize)>, cand| match acc {
        Some(a) if a.0 <= cand.0 => Some(a),
        _ => Some(cand),
    });
    best.map(|(_, idx)| grid.world_of(idx))
        .ok_or_else(|| Error::Initialization("no active interior voxel in grid".into()))
}
