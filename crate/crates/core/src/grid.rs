//! Regular voxel grid holding a (truncated) target SDF and an activity mask.

use crate::{par, Error, Point3, Result, Superquadric};

/// Dense SDF samples on a uniform grid, x-fastest.
///
/// The activity mask is the only mutable state during marching; the signed
/// distances themselves are never modified after truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    origin: Point3,
    spacing: f64,
    values: Vec<f64>,
    active: Vec<bool>,
    truncation: Option<f64>,
}

/// Offsets of the 26-neighbourhood.
pub const NEIGHBORS_26: [[i32; 3]; 26] = {
    let mut out = [[0i32; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

impl VoxelGrid {
    /// Wraps sampled values; every voxel starts active.
    pub fn new(dims: [usize; 3], origin: Point3, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("grid dims {dims:?} must be positive")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!("spacing {spacing} must be > 0")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} values for dims {dims:?} (expected {n})",
                values.len()
            )));
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            values,
            active: vec![true; n],
            truncation: None,
        })
    }

    /// Samples `sdf` at every voxel center (in parallel when enabled).
    pub fn from_fn<F>(dims: [usize; 3], origin: Point3, spacing: f64, sdf: F) -> Result<Self>
    where
        F: Fn(&Point3) -> f64 + Sync + Send,
    {
        let probe = Self::new(dims, origin, spacing, vec![0.0; dims.iter().product()])?;
        let values = par::map_range(probe.len(), |i| sdf(&probe.world_of(i)));
        Ok(Self { values, ..probe })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.active[idx]
    }

    /// Truncation threshold, if the grid has been truncated.
    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    /// Marks every voxel active again.
    pub fn reset_mask(&mut self) {
        self.active.iter_mut().for_each(|a| *a = true);
    }

    #[inline]
    pub fn linear_index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    #[inline]
    pub fn ijk_of(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// World position of a voxel given by its integer coordinates.
    pub fn index_to_world(&self, ijk: [usize; 3]) -> Result<Point3> {
        if (0..3).any(|a| ijk[a] >= self.dims[a]) {
            return Err(Error::OutOfRange {
                index: ijk,
                dims: self.dims,
            });
        }
        Ok(self.world_of(self.linear_index(ijk)))
    }

    /// World position of a voxel given by its linear index.
    #[inline]
    pub fn world_of(&self, idx: usize) -> Point3 {
        let [i, j, k] = self.ijk_of(idx);
        self.origin + Point3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    /// Corners of the grid (centers of the first and last voxels).
    pub fn world_bounds(&self) -> (Point3, Point3) {
        let max = self.origin
            + Point3::new(
                (self.dims[0] - 1) as f64,
                (self.dims[1] - 1) as f64,
                (self.dims[2] - 1) as f64,
            ) * self.spacing;
        (self.origin, max)
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.world_bounds();
        (hi - lo).norm()
    }

    /// Clamps every value into `[-t, t]` and records `t`.
    pub fn truncate(&mut self, t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("truncation {t} must be > 0")));
        }
        self.values.iter_mut().for_each(|v| *v = v.clamp(-t, t));
        self.truncation = Some(t);
        Ok(())
    }

    pub fn truncated(mut self, t: f64) -> Result<Self> {
        self.truncate(t)?;
        Ok(self)
    }

    /// Minimum SDF over active voxels, or `None` if no active voxel is
    /// interior (negative).
    pub fn min_active_sdf(&self) -> Option<f64> {
        self.values
            .iter()
            .zip(&self.active)
            .filter(|(v, a)| **a && **v < 0.0)
            .map(|(v, _)| *v)
            .reduce(f64::min)
    }

    /// Number of active voxels with `d <= 0`.
    pub fn active_interior_count(&self) -> usize {
        self.values
            .iter()
            .zip(&self.active)
            .filter(|(v, a)| **a && **v <= 0.0)
            .count()
    }

    /// Deactivates active voxels that are interior to both the target SDF
    /// and `prim` (`d <= 0` and `d_theta <= 0`). Returns how many flipped.
    pub fn deactivate_fitted(&mut self, prim: &Superquadric) -> usize {
        let candidates = self.indices_in_box(prim.world_aabb());
        let flip: Vec<bool> = par::map_slice(&candidates, |&i| {
            self.active[i] && self.values[i] <= 0.0 && prim.approx_sdf(&self.world_of(i)) <= 0.0
        });
        let mut n = 0;
        for (i, f) in candidates.iter().zip(flip) {
            if f {
                self.active[*i] = false;
                n += 1;
            }
        }
        n
    }

    /// Inclusive voxel index range covering a world-space box, clipped to
    /// the grid. `None` if the box misses the grid entirely.
    pub fn index_range(&self, (lo, hi): (Point3, Point3)) -> Option<([usize; 3], [usize; 3])> {
        let mut a = [0usize; 3];
        let mut b = [0usize; 3];
        for axis in 0..3 {
            let l = ((lo[axis] - self.origin[axis]) / self.spacing).ceil();
            let h = ((hi[axis] - self.origin[axis]) / self.spacing).floor();
            let max = (self.dims[axis] - 1) as f64;
            if h < 0.0 || l > max || l > h {
                return None;
            }
            a[axis] = l.max(0.0) as usize;
            b[axis] = h.min(max) as usize;
        }
        Some((a, b))
    }

    /// Linear indices of all voxels whose centers lie in the world box,
    /// in increasing order.
    pub fn indices_in_box(&self, bounds: (Point3, Point3)) -> Vec<usize> {
        let Some((a, b)) = self.index_range(bounds) else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity((b[0] - a[0] + 1) * (b[1] - a[1] + 1) * (b[2] - a[2] + 1));
        for k in a[2]..=b[2] {
            for j in a[1]..=b[1] {
                let row = self.linear_index([0, j, k]);
                out.extend((a[0]..=b[0]).map(|i| row + i));
            }
        }
        out
    }

    /// In-grid 26-neighbours of a voxel.
    pub fn neighbors26(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let [i, j, k] = self.ijk_of(idx);
        let dims = self.dims;
        NEIGHBORS_26.iter().filter_map(move |d| {
            let ni = i as i64 + d[0] as i64;
            let nj = j as i64 + d[1] as i64;
            let nk = k as i64 + d[2] as i64;
            if ni < 0
                || nj < 0
                || nk < 0
                || ni >= dims[0] as i64
                || nj >= dims[1] as i64
                || nk >= dims[2] as i64
            {
                None
            } else {
                Some(ni as usize + dims[0] * (nj as usize + dims[1] * nk as usize))
            }
        })
    }

    /// Trilinear interpolation of the stored SDF; `None` outside the grid.
    pub fn sample_trilinear(&self, p: &Point3) -> Option<f64> {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for axis in 0..3 {
            let g = (p[axis] - self.origin[axis]) / self.spacing;
            let max = (self.dims[axis] - 1) as f64;
            if !(0.0..=max).contains(&g) {
                return None;
            }
            let f = g.floor().min((max - 1.0).max(0.0));
            base[axis] = f as usize;
            frac[axis] = g - f;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            let mut ijk = [0usize; 3];
            for axis in 0..3 {
                ijk[axis] = (base[axis] + off[axis]).min(self.dims[axis] - 1);
                w *= if off[axis] == 1 { frac[axis] } else { 1.0 - frac[axis] };
            }
            if w != 0.0 {
                acc += w * self.values[self.linear_index(ijk)];
            }
        }
        Some(acc)
    }
}
