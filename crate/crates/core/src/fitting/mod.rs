//! Probabilistic primitive fitting on the voxel domain.
//!
//! Each target value `d_i` is modelled as drawn either from a Gaussian
//! centred on the primitive's signed distance, or (for interior voxels
//! only) from a uniform outlier density on `[-t, 0)`. The EM loop
//! alternates the posterior of that latent choice with a weighted
//! least-squares update of the primitive and a closed-form variance update.

pub mod lm;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::superquadric::{wrap_angle, EPS_MAX, EPS_MIN, N_PARAMS};
use crate::{par, Error, Point3, Result, Superquadric, VoxelGrid};
use lm::{LeastSquaresProblem, Linearization, LmOptions};

/// Voxels per work item in the parallel residual/Jacobian passes. Fixed so
/// that floating-point reductions do not depend on the thread count.
const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Truncation `t` of both SDFs.
    pub truncation: f64,
    /// Bernoulli prior `p0` of a voxel belonging to the primitive.
    pub p0: f64,
    /// Half-width `a` of the band around the primitive that enters the
    /// update.
    pub activation_distance: f64,
    /// Outer EM iterations.
    pub max_iters: usize,
    /// Convergence threshold on the normalized parameter change.
    pub rel_tol: f64,
    /// Variance floor as a fraction of `t` (the floor is `(ratio * t)^2`).
    pub sigma2_floor_ratio: f64,
    /// EM iterations spent on each restart candidate; 0 disables restarts.
    pub restart_iters: usize,
    /// Restart from the two cyclic relabellings of the body axes.
    pub axis_restarts: bool,
    /// Restart from the planar duals of the base fit and its relabellings.
    pub dual_restarts: bool,
    /// Lower bound on the scales.
    pub scale_min: f64,
    pub lm_max_iters: usize,
}

impl FitOptions {
    /// Options matching the default configuration for a grid truncated at
    /// `t` with voxel spacing `h`.
    pub fn with_defaults(t: f64, h: f64) -> Self {
        Self {
            truncation: t,
            p0: 0.01,
            activation_distance: 3.5 * t,
            max_iters: 40,
            rel_tol: 1e-3,
            sigma2_floor_ratio: 0.05,
            restart_iters: 10,
            axis_restarts: true,
            dual_restarts: true,
            scale_min: 0.5 * h,
            lm_max_iters: LmOptions::default().max_iters,
        }
    }

    fn sigma2_floor(&self) -> f64 {
        (self.sigma2_floor_ratio * self.truncation).powi(2)
    }
}

/// Box constraints on the 11 parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBounds {
    pub lo: [f64; N_PARAMS],
    pub hi: [f64; N_PARAMS],
}

impl ParamBounds {
    /// Exponents in `[EPS_MIN, EPS_MAX]`, scales in `[scale_min, 1.5 *
    /// diagonal]`, free angles, translation inside the grid expanded by `t`.
    pub fn for_grid(grid: &VoxelGrid, scale_min: f64, t: f64) -> Self {
        let (lo_w, hi_w) = grid.world_bounds();
        let smax = (1.5 * grid.diagonal()).max(scale_min);
        let inf = f64::INFINITY;
        Self {
            lo: [
                EPS_MIN, EPS_MIN, scale_min, scale_min, scale_min, -inf, -inf, -inf,
                lo_w.x - t, lo_w.y - t, lo_w.z - t,
            ],
            hi: [
                EPS_MAX, EPS_MAX, smax, smax, smax, inf, inf, inf,
                hi_w.x + t, hi_w.y + t, hi_w.z + t,
            ],
        }
    }

    fn clamp(&self, p: &mut [f64; N_PARAMS]) {
        for ((v, lo), hi) in p.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Posterior probability that a voxel with target `d` is explained by a
/// primitive predicting `d_theta`.
///
/// Exterior voxels (`d >= 0`) always belong (`P = 1`); interior voxels
/// compete against the uniform density `(1 - p0) / t` on `[-t, 0)`. If
/// both terms underflow the voxel is treated as an outlier (`P = 0`).
pub fn posterior(d: f64, d_theta: f64, sigma2: f64, p0: f64, t: f64) -> f64 {
    if d >= 0.0 {
        return 1.0;
    }
    let r = d - d_theta;
    let gauss = (-(r * r) / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt();
    let inlier = p0 * gauss;
    let outlier = if d >= -t { (1.0 - p0) / t } else { 0.0 };
    let den = inlier + outlier;
    if den == 0.0 || !den.is_finite() {
        return if inlier.is_infinite() { 1.0 } else { 0.0 };
    }
    inlier / den
}

/// Active voxels whose signed distance to `theta` lies within `[-a, a]`,
/// increasing index order.
pub fn active_set(grid: &VoxelGrid, theta: &Superquadric, a: f64) -> Vec<usize> {
    let (lo, hi) = theta.world_aabb();
    let pad = Point3::repeat(a);
    let candidates = grid.indices_in_box((lo - pad, hi + pad));
    let keep = par::map_slice(&candidates, |&i| {
        grid.is_active(i) && theta.approx_sdf(&grid.world_of(i)).abs() <= a
    });
    candidates
        .into_iter()
        .zip(keep)
        .filter_map(|(i, k)| k.then_some(i))
        .collect()
}

/// Closed-form variance: `sum P r^2 / sum P`. `None` when all weights are
/// zero.
pub fn update_sigma2(pairs: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let (num, den) = pairs
        .into_iter()
        .fold((0.0, 0.0), |(n, d), (p, r)| (n + p * r * r, d + p));
    (den > 0.0).then(|| num / den)
}

/// Weighted truncated-SDF residuals over a fixed voxel set:
/// `r_i = sqrt(P_i) * (clamp(d_theta(x_i)) - clamp(d_i))`.
#[derive(Debug, Clone)]
pub struct WeightedSdfProblem {
    points: Vec<Point3>,
    targets: Vec<f64>,
    sqrt_w: Vec<f64>,
    truncation: f64,
}

impl WeightedSdfProblem {
    /// Residual set over `voxels` with per-voxel weights (zero weights are
    /// dropped).
    pub fn new(grid: &VoxelGrid, voxels: &[usize], weights: &[f64], truncation: f64) -> Self {
        assert_eq!(voxels.len(), weights.len());
        let mut points = Vec::with_capacity(voxels.len());
        let mut targets = Vec::with_capacity(voxels.len());
        let mut sqrt_w = Vec::with_capacity(voxels.len());
        for (&v, &w) in voxels.iter().zip(weights) {
            if w > 0.0 {
                points.push(grid.world_of(v));
                targets.push(grid.value(v).clamp(-truncation, truncation));
                sqrt_w.push(w.sqrt());
            }
        }
        Self {
            points,
            targets,
            sqrt_w,
            truncation,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Primitive from a raw parameter vector without range validation.
    fn primitive(x: &[f64; N_PARAMS]) -> Option<Superquadric> {
        Superquadric::from_params(x).ok()
    }

    /// `sum_i P_i (clamp(d_theta) - clamp(d))^2`.
    pub fn cost_of(&self, theta: &Superquadric) -> f64 {
        let t = self.truncation;
        let n_chunks = self.points.len().div_ceil(CHUNK);
        par::map_range(n_chunks, |c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(self.points.len());
            range
                .map(|i| {
                    let r = self.sqrt_w[i] * (theta.truncated_sdf(&self.points[i], t) - self.targets[i]);
                    r * r
                })
                .sum::<f64>()
        })
        .into_iter()
        .sum()
    }

    /// Gradient of [`Self::cost_of`] with respect to the 11 parameters.
    pub fn gradient(&self, x: &[f64; N_PARAMS]) -> Option<[f64; N_PARAMS]> {
        let lin = self.linearize(x);
        lin.cost.is_finite().then(|| std::array::from_fn(|j| 2.0 * lin.jtr[j]))
    }
}

impl LeastSquaresProblem<N_PARAMS> for WeightedSdfProblem {
    fn cost(&self, x: &[f64; N_PARAMS]) -> f64 {
        match Self::primitive(x) {
            Some(theta) => self.cost_of(&theta),
            None => f64::INFINITY,
        }
    }

    fn linearize(&self, x: &[f64; N_PARAMS]) -> Linearization<N_PARAMS> {
        let Some(theta) = Self::primitive(x) else {
            return Linearization {
                cost: f64::INFINITY,
                jtj: SMatrix::zeros(),
                jtr: SVector::zeros(),
            };
        };
        let t = self.truncation;
        let n_chunks = self.points.len().div_ceil(CHUNK);
        let partials = par::map_range(n_chunks, |c| {
            let mut jtj = SMatrix::<f64, N_PARAMS, N_PARAMS>::zeros();
            let mut jtr = SVector::<f64, N_PARAMS>::zeros();
            let mut cost = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(self.points.len()) {
                let (d, g) = theta.approx_sdf_with_gradient(&self.points[i]);
                let w = self.sqrt_w[i];
                let r = w * (d.clamp(-t, t) - self.targets[i]);
                cost += r * r;
                // derivative vanishes where the clamp is active
                if d.abs() < t {
                    let row = SVector::<f64, N_PARAMS>::from_fn(|j, _| w * g[j]);
                    jtj.syger(1.0, &row, &row, 1.0);
                    jtr.axpy(r, &row, 1.0);
                }
            }
            (cost, jtj, jtr)
        });
        let mut out = Linearization {
            cost: 0.0,
            jtj: SMatrix::zeros(),
            jtr: SVector::zeros(),
        };
        for (c, a, b) in partials {
            out.cost += c;
            out.jtj += a;
            out.jtr += b;
        }
        out.jtj.fill_upper_triangle_with_lower_triangle();
        out
    }

    fn normalize(&self, x: &mut [f64; N_PARAMS]) {
        for a in &mut x[5..8] {
            *a = wrap_angle(*a);
        }
    }
}

/// Snapshot of one EM iteration.
#[derive(Debug, Clone)]
pub struct FittingState {
    pub theta: Superquadric,
    pub sigma2: f64,
    pub p0: f64,
    pub active_set: Vec<usize>,
    pub correspondences: Vec<f64>,
    pub iteration: usize,
}

impl FittingState {
    pub fn new(theta: Superquadric, sigma2: f64, p0: f64) -> Self {
        Self {
            theta,
            sigma2,
            p0,
            active_set: Vec::new(),
            correspondences: Vec::new(),
            iteration: 0,
        }
    }

    /// Recomputes the active set and posterior weights against the current
    /// primitive. Returns `false` if the active set is empty.
    pub fn march_correspondences(&mut self, grid: &VoxelGrid, opts: &FitOptions) -> bool {
        let t = opts.truncation;
        self.active_set = active_set(grid, &self.theta, opts.activation_distance);
        let theta = &self.theta;
        let (sigma2, p0) = (self.sigma2, self.p0);
        self.correspondences = par::map_slice(&self.active_set, |&i| {
            let d = grid.value(i).clamp(-t, t);
            let dt = theta.truncated_sdf(&grid.world_of(i), t);
            posterior(d, dt, sigma2, p0, t)
        });
        !self.active_set.is_empty()
    }

    fn problem(&self, grid: &VoxelGrid, t: f64) -> WeightedSdfProblem {
        WeightedSdfProblem::new(grid, &self.active_set, &self.correspondences, t)
    }
}

/// Weighted least-squares update of the primitive with the correspondences
/// frozen. Returns the new primitive and its cost; the previous primitive
/// is returned when no step lowers the cost.
pub fn update_primitive(
    grid: &VoxelGrid,
    state: &FittingState,
    opts: &FitOptions,
) -> Result<(Superquadric, f64)> {
    let t = opts.truncation;
    if state.active_set.is_empty() {
        return Err(Error::Empty("active set".into()));
    }
    let problem = state.problem(grid, t);
    let bounds = ParamBounds::for_grid(grid, opts.scale_min, t);
    let mut x0 = state.theta.params();
    bounds.clamp(&mut x0);
    let lm_opts = LmOptions {
        max_iters: opts.lm_max_iters,
        ..LmOptions::default()
    };
    let prev_cost = problem.cost_of(&state.theta);
    let report = lm::minimize(&problem, x0, &bounds.lo, &bounds.hi, &lm_opts).map_err(|_| Error::Solver {
        message: "non-finite residuals at the current primitive".into(),
        last_valid: Box::new(state.theta.clone()),
    })?;
    match Superquadric::from_params(&report.x) {
        Ok(theta) if report.cost <= prev_cost => Ok((theta, report.cost)),
        Ok(_) => Ok((state.theta.clone(), prev_cost)),
        Err(e) => Err(Error::Solver {
            message: e.to_string(),
            last_valid: Box::new(state.theta.clone()),
        }),
    }
}

/// Result of [`fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub primitive: Superquadric,
    pub converged: bool,
    /// The primitive collapsed (empty active set or all scales at the lower
    /// bound).
    pub degenerate: bool,
    pub iterations: usize,
    /// Weighted cost of the returned primitive on its final active set.
    pub cost: f64,
    pub sigma2: f64,
}

/// Normalized max-abs parameter change: scales and translation by the grid
/// diagonal, exponents by 2, angles by pi.
fn relative_change(a: &Superquadric, b: &Superquadric, diag: f64) -> f64 {
    let pa = a.params();
    let pb = b.params();
    (0..N_PARAMS)
        .map(|j| {
            let diff = pb[j] - pa[j];
            match j {
                0 | 1 => diff.abs() / 2.0,
                5..=7 => wrap_angle(diff).abs() / std::f64::consts::PI,
                _ => diff.abs() / diag,
            }
        })
        .fold(0.0, f64::max)
}

struct EmRun {
    state: FittingState,
    converged: bool,
    degenerate: bool,
    iterations: usize,
}

fn run_em(grid: &VoxelGrid, init: Superquadric, sigma2: f64, max_iters: usize, opts: &FitOptions) -> Result<EmRun> {
    let diag = grid.diagonal();
    let mut state = FittingState::new(init, sigma2, opts.p0);
    let mut converged = false;
    let mut degenerate = false;
    let floor = opts.sigma2_floor();
    while state.iteration < max_iters {
        state.iteration += 1;
        if !state.march_correspondences(grid, opts) {
            degenerate = true;
            break;
        }
        let (theta, _) = update_primitive(grid, &state, opts)?;
        let t = opts.truncation;
        let residuals = par::map_slice(&state.active_set, |&i| {
            grid.value(i).clamp(-t, t) - theta.truncated_sdf(&grid.world_of(i), t)
        });
        if let Some(s2) = update_sigma2(state.correspondences.iter().copied().zip(residuals)) {
            state.sigma2 = s2.max(floor);
        }
        let change = relative_change(&state.theta, &theta, diag);
        state.theta = theta;
        if state.theta.max_scale() <= opts.scale_min * (1.0 + 1e-9) {
            degenerate = true;
            break;
        }
        if change < opts.rel_tol {
            converged = true;
            break;
        }
    }
    let iterations = state.iteration;
    Ok(EmRun {
        state,
        converged,
        degenerate,
        iterations,
    })
}

/// Relabels the primitive's axes cyclically: the returned candidates have
/// their z-axis along the original x- and y-axis respectively, with scales
/// permuted to match and the exponents swapped.
pub fn axis_permutations(theta: &Superquadric) -> Vec<Superquadric> {
    let r = theta.rotation();
    let [e1, e2] = theta.eps();
    let [ax, ay, az] = theta.scale();
    let (c0, c1, c2) = (r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned());
    let layouts = [
        // new (x, y, z) = old (y, z, x)
        ([c1, c2, c0], [ay, az, ax]),
        // new (x, y, z) = old (z, x, y)
        ([c2, c0, c1], [az, ax, ay]),
    ];
    layouts
        .into_iter()
        .filter_map(|(cols, scale)| {
            let rot = nalgebra::Matrix3::from_columns(&cols);
            let euler = crate::superquadric::euler_zyx_from_rotation(&rot);
            Superquadric::new([e2, e1], scale, euler, theta.translation()).ok()
        })
        .collect()
}

/// Rotates the cross-section by 45 degrees about the body z-axis and
/// replaces `eps2` by `2 - eps2`, keeping the extent along the diagonals.
/// The two shapes nearly coincide, which makes each a local minimum when
/// the other is the target. `None` when `eps2` is close to 1 (the dual is
/// then the primitive itself).
pub fn planar_dual(theta: &Superquadric) -> Option<Superquadric> {
    let [e1, e2] = theta.eps();
    if (e2 - 1.0).abs() < 0.1 {
        return None;
    }
    let [ax, ay, az] = theta.scale();
    // radius of the cross-section along the diagonal x = y
    let r = std::f64::consts::SQRT_2 * (ax.powf(-2.0 / e2) + ay.powf(-2.0 / e2)).powf(-e2 / 2.0);
    let turn = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), std::f64::consts::FRAC_PI_4);
    let rot = theta.rotation() * turn.matrix();
    let euler = crate::superquadric::euler_zyx_from_rotation(&rot);
    Superquadric::new([e1, 2.0 - e2], [r, r, az], euler, theta.translation()).ok()
}

fn restart_candidates(theta: &Superquadric, opts: &FitOptions) -> Vec<Superquadric> {
    let mut out = Vec::new();
    let mut bases = vec![theta.clone()];
    if opts.axis_restarts {
        let perms = axis_permutations(theta);
        out.extend(perms.iter().cloned());
        bases.extend(perms);
    }
    if opts.dual_restarts {
        out.extend(bases.iter().filter_map(planar_dual));
    }
    out
}

/// Bound on how many times the restart stage expands a new best candidate.
const RESTART_PASSES: usize = 3;

/// Negative log-likelihood of the two-component model over `voxels` at a
/// fixed variance: exterior voxels are Gaussian, interior voxels mix the
/// Gaussian with the uniform outlier density.
pub fn mixture_cost(grid: &VoxelGrid, voxels: &[usize], theta: &Superquadric, sigma2: f64, opts: &FitOptions) -> f64 {
    let t = opts.truncation;
    let p0 = opts.p0;
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    let n_chunks = voxels.len().div_ceil(CHUNK);
    par::map_range(n_chunks, |c| {
        voxels[c * CHUNK..((c + 1) * CHUNK).min(voxels.len())]
            .iter()
            .map(|&i| {
                let d = grid.value(i).clamp(-t, t);
                let r = d - theta.truncated_sdf(&grid.world_of(i), t);
                let log_gauss = log_norm - r * r / (2.0 * sigma2);
                if d >= 0.0 {
                    -log_gauss
                } else {
                    // log(p0 g + (1 - p0) / t) without underflow
                    let a = p0.ln() + log_gauss;
                    let b = ((1.0 - p0) / t).ln();
                    let m = a.max(b);
                    -(m + ((a - m).exp() + (b - m).exp()).ln())
                }
            })
            .sum::<f64>()
    })
    .into_iter()
    .sum()
}

/// Grows a primitive from `theta_init` by EM, then refits a few relabelled
/// candidates (axis permutations and planar duals) and keeps the one with
/// the lowest model likelihood cost over the union of their bands.
pub fn fit(grid: &VoxelGrid, theta_init: &Superquadric, opts: &FitOptions) -> Result<FitOutcome> {
    let t = opts.truncation;
    let base = run_em(grid, theta_init.clone(), t, opts.max_iters, opts)?;
    let mut iterations = base.iterations;
    if base.degenerate {
        return Ok(FitOutcome {
            primitive: base.state.theta,
            converged: base.converged,
            degenerate: true,
            iterations,
            cost: 0.0,
            sigma2: base.state.sigma2,
        });
    }

    let sigma2 = base.state.sigma2;
    let mut runs = vec![base];
    // Expand the current best until it is a candidate that was already
    // expanded. Scores are recomputed over the union band of every run so
    // that all candidates are compared on the same voxels.
    let mut k = 0;
    let mut expanded = Vec::new();
    for _ in 0..RESTART_PASSES {
        if opts.restart_iters == 0 || expanded.contains(&k) {
            break;
        }
        expanded.push(k);
        for cand in restart_candidates(&runs[k].state.theta, opts) {
            let run = run_em(grid, cand, sigma2, opts.restart_iters, opts)?;
            iterations += run.iterations;
            if !run.degenerate {
                runs.push(run);
            }
        }
        let mut voxels: Vec<usize> = runs
            .iter()
            .flat_map(|r| active_set(grid, &r.state.theta, opts.activation_distance))
            .collect();
        voxels.sort_unstable();
        voxels.dedup();
        let scores = par::map_slice(&runs, |r| mixture_cost(grid, &voxels, &r.state.theta, sigma2, opts));
        // first minimum, so earlier runs win ties
        k = (0..runs.len()).fold(0, |k, j| if scores[j] < scores[k] { j } else { k });
    }
    let best = runs.swap_remove(k);

    let mut state = best.state;
    let cost = if state.march_correspondences(grid, opts) {
        state.problem(grid, t).cost_of(&state.theta)
    } else {
        0.0
    };
    Ok(FitOutcome {
        primitive: state.theta,
        converged: best.converged,
        degenerate: false,
        iterations,
        cost,
        sigma2: state.sigma2,
    })
}

/// Voxel counts inside a primitive, used by the removal test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalStats {
    /// Active exterior voxels (`d > 0`).
    pub n_plus: usize,
    /// Active interior voxels (`d <= 0`).
    pub n_minus: usize,
    /// Inactive (already explained) voxels.
    pub n_zero: usize,
}

impl RemovalStats {
    pub fn total(&self) -> usize {
        self.n_plus + self.n_minus + self.n_zero
    }
}

pub fn removal_stats(grid: &VoxelGrid, theta: &Superquadric) -> RemovalStats {
    let candidates = grid.indices_in_box(theta.world_aabb());
    let class = par::map_slice(&candidates, |&i| {
        if !theta.contains(&grid.world_of(i)) {
            0u8
        } else if !grid.is_active(i) {
            3
        } else if grid.value(i) > 0.0 {
            1
        } else {
            2
        }
    });
    let mut s = RemovalStats::default();
    for c in class {
        match c {
            1 => s.n_plus += 1,
            2 => s.n_minus += 1,
            3 => s.n_zero += 1,
            _ => {}
        }
    }
    s
}

/// A primitive is dropped when it holds no active interior voxel, or when
/// at least half of what it holds is exterior.
pub fn should_remove(stats: &RemovalStats) -> bool {
    stats.n_minus < 1 || stats.n_plus as f64 / stats.total() as f64 >= 0.5
}
