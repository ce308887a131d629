//! The outer loop: march down the isolevels of the active SDF, seed a
//! primitive in every prominent interior volume, fit, keep or drop, and
//! deactivate what the kept primitives explain.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::fitting::{self, FitOptions};
use crate::voi::{self, Voi};
use crate::{par, Error, RemovalStats, Result, Superquadric, VoxelGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarchingConfig {
    /// Truncation threshold as a multiple of the grid spacing.
    pub truncation_ratio: f64,
    /// Common ratio of the isolevel sequence.
    pub alpha: f64,
    /// Minimum VOI size in voxels.
    pub n_c: usize,
    /// Initial scale as a fraction of the VOI bounding box.
    pub gamma: f64,
    /// Marching stops once the isolevel rises above `-termination_ratio * t`.
    pub termination_ratio: f64,
    pub p0: f64,
    /// Activation distance as a multiple of the truncation threshold.
    pub activation_ratio: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restart_iters: usize,
    pub axis_restarts: bool,
    pub dual_restarts: bool,
    pub sigma2_floor_ratio: f64,
    pub lm_max_iters: usize,
    /// Seed for every randomized step downstream (sampling for metrics).
    pub seed: u64,
}

impl Default for MarchingConfig {
    fn default() -> Self {
        Self {
            truncation_ratio: 1.3,
            alpha: 0.8,
            n_c: 5,
            gamma: 0.1,
            termination_ratio: 0.01,
            p0: 0.01,
            activation_ratio: 3.5,
            max_iters: 40,
            rel_tol: 1e-3,
            restart_iters: 10,
            axis_restarts: true,
            dual_restarts: true,
            sigma2_floor_ratio: 0.05,
            lm_max_iters: 60,
            seed: 0,
        }
    }
}

impl MarchingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("truncation_ratio", self.truncation_ratio),
            ("gamma", self.gamma),
            ("activation_ratio", self.activation_ratio),
            ("rel_tol", self.rel_tol),
            ("sigma2_floor_ratio", self.sigma2_floor_ratio),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        let unit = [
            ("alpha", self.alpha),
            ("termination_ratio", self.termination_ratio),
            ("p0", self.p0),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Validation(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.n_c == 0 {
            return Err(Error::Validation("n_c must be at least 1".into()));
        }
        Ok(())
    }

    pub fn truncation(&self, spacing: f64) -> f64 {
        self.truncation_ratio * spacing
    }

    pub fn fit_options(&self, grid: &VoxelGrid) -> FitOptions {
        let h = grid.spacing();
        let t = self.truncation(h);
        FitOptions {
            truncation: t,
            p0: self.p0,
            activation_distance: self.activation_ratio * t,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            sigma2_floor_ratio: self.sigma2_floor_ratio,
            restart_iters: self.restart_iters,
            axis_restarts: self.axis_restarts,
            dual_restarts: self.dual_restarts,
            scale_min: 0.5 * h,
            lm_max_iters: self.lm_max_iters,
        }
    }

    /// Copy of `grid` truncated at this configuration's threshold, with a
    /// fresh mask.
    pub fn prepare(&self, grid: &VoxelGrid) -> Result<VoxelGrid> {
        let mut g = grid.clone();
        g.reset_mask();
        g.truncate(self.truncation(grid.spacing()))?;
        Ok(g)
    }
}

/// Per-primitive record of how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveDiagnostics {
    pub round: usize,
    pub threshold: f64,
    pub voi_size: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub sigma2: f64,
    pub removal: RemovalStats,
    /// Voxels this primitive deactivated.
    pub deactivated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionResult {
    pub primitives: Vec<Superquadric>,
    pub diagnostics: Vec<PrimitiveDiagnostics>,
    pub rounds: usize,
    /// Fitted primitives that failed the removal test.
    pub removed: usize,
    /// Marching stopped because every remaining VOI had been blocked by the
    /// zero-progress rule.
    pub stalled: bool,
    /// Active interior voxels left when marching stopped.
    pub remaining_interior: usize,
    /// Excluded from serialization so that results compare byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

struct Fitted {
    primitive: Superquadric,
    outcome: Option<fitting::FitOutcome>,
}

fn fit_voi(grid: &VoxelGrid, voi: &Voi, config: &MarchingConfig, opts: &FitOptions) -> Option<Fitted> {
    let init = voi::init_primitive(voi, grid, config.gamma, opts.scale_min).ok()?;
    match fitting::fit(grid, &init, opts) {
        Ok(out) => Some(Fitted {
            primitive: out.primitive.clone(),
            outcome: Some(out),
        }),
        // the last valid estimate still goes through the removal test
        Err(Error::Solver { last_valid, .. }) => Some(Fitted {
            primitive: *last_valid,
            outcome: None,
        }),
        Err(_) => None,
    }
}

/// Next batch of VOIs: the first isolevel of the current schedule that
/// yields unblocked components of at least `n_c` voxels. The flag reports
/// whether blocked components were skipped along the way.
type Batch = Option<(f64, Vec<Voi>)>;

fn next_vois(grid: &VoxelGrid, config: &MarchingConfig, blocked: &BTreeSet<(usize, usize)>) -> Result<(Batch, bool)> {
    let mut skipped = false;
    let Some(schedule) = voi::schedule(grid, config.alpha, config.termination_ratio)? else {
        return Ok((None, false));
    };
    for thr in schedule.thresholds() {
        let comps = voi::filter_vois(voi::connected_components(grid, thr), config.n_c);
        let n = comps.len();
        let open: Vec<Voi> = comps
            .into_iter()
            .filter(|v| !blocked.contains(&v.signature()))
            .collect();
        skipped |= open.len() < n;
        if !open.is_empty() {
            return Ok((Some((thr, open)), skipped));
        }
    }
    Ok((None, skipped))
}

/// Runs the abstraction on `grid`. An untruncated grid is truncated at the
/// configured threshold; a truncated one must match it.
pub fn march(grid: &VoxelGrid, config: &MarchingConfig) -> Result<AbstractionResult> {
    let start = Instant::now();
    config.validate()?;
    let t = config.truncation(grid.spacing());
    let mut work = match grid.truncation() {
        None => config.prepare(grid)?,
        Some(gt) if (gt - t).abs() <= 1e-9 * t => grid.clone(),
        Some(gt) => {
            return Err(Error::InvalidArgument(format!(
                "grid truncated at {gt}, configuration expects {t}"
            )))
        }
    };
    let opts = config.fit_options(&work);

    let mut result = AbstractionResult {
        primitives: Vec::new(),
        diagnostics: Vec::new(),
        rounds: 0,
        removed: 0,
        stalled: false,
        remaining_interior: 0,
        wall_time: Duration::ZERO,
    };
    let mut blocked = BTreeSet::new();
    // Every productive round removes an interior voxel and every idle round
    // blocks a new signature; this cap only guards against bugs.
    let max_rounds = 4 * work.active_interior_count() + 64;

    while work.active_interior_count() > 0 && result.rounds < max_rounds {
        let (batch, skipped) = next_vois(&work, config, &blocked)?;
        let Some((threshold, vois)) = batch else {
            result.stalled = skipped;
            break;
        };
        result.rounds += 1;

        let snapshot = &work;
        let fitted = par::map_slice(&vois, |v| fit_voi(snapshot, v, config, &opts));

        let mut progress = 0;
        for (v, f) in vois.iter().zip(fitted) {
            let Some(f) = f else {
                continue;
            };
            let stats = fitting::removal_stats(&work, &f.primitive);
            if fitting::should_remove(&stats) {
                result.removed += 1;
                continue;
            }
            let deactivated = work.deactivate_fitted(&f.primitive);
            progress += deactivated;
            let (iterations, converged, final_cost, sigma2) = match &f.outcome {
                Some(o) => (o.iterations, o.converged, o.cost, o.sigma2),
                None => (0, false, f64::NAN, f64::NAN),
            };
            result.diagnostics.push(PrimitiveDiagnostics {
                round: result.rounds,
                threshold,
                voi_size: v.size(),
                iterations,
                converged,
                final_cost,
                sigma2,
                removal: stats,
                deactivated,
            });
            result.primitives.push(f.primitive);
        }
        if progress == 0 {
            blocked.extend(vois.iter().map(Voi::signature));
        }
    }
    result.remaining_interior = work.active_interior_count();
    result.wall_time = start.elapsed();
    Ok(result)
}
