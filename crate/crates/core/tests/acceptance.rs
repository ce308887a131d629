//! Acceptance runner. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. An optional argument selects criteria whose id
//! contains it (`cargo test --test acceptance -- ac03`).

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use primsdf::fitting::{self, posterior, update_sigma2, FitOptions, RemovalStats, WeightedSdfProblem};
use primsdf::io::gen_superquadric_sdf;
use primsdf::marching::{march, MarchingConfig};
use primsdf::metrics::{self, chamfer_l1, iou, OccupancyOracle, PointSet, PrimitiveUnion};
use primsdf::superquadric::{euler_zyx_from_rotation, N_PARAMS};
use primsdf::{par, Point3, Superquadric, VoxelGrid};

const SPHERE_EXACT_TOL: f64 = 1e-10;
const SPHERE_RUNTIME: Duration = Duration::from_secs(1);
const NEAR_SURFACE_BAND: f64 = 0.02;
const NEAR_SURFACE_REL_TOL: f64 = 0.05;
const NEAR_SURFACE_RUNTIME: Duration = Duration::from_secs(30);
const ROUND_TRIP_IOU: f64 = 0.90;
const ROUND_TRIP_MIN_PASS: usize = 45;
const ROUND_TRIP_CHAMFER_SPACINGS: f64 = 2.0;
const ROUND_TRIP_RUNTIME: Duration = Duration::from_secs(600);
const PAIR_IOU: f64 = 0.85;
const PAIR_MIN_PASS: usize = 18;
const POSTERIOR_WORKED: f64 = 4.58e-4;
const POSTERIOR_REL_TOL: f64 = 1e-3;
const SIGMA2_TOL: f64 = 1e-6;
const GRADIENT_REL_TOL: f64 = 1e-4;
const TREND_SLACK: f64 = 0.02;
const TREND_RUNTIME: Duration = Duration::from_secs(300);
const CHAMFER_ORACLE_TOL: f64 = 1e-12;
const CONCENTRIC_IOU: f64 = 0.125;
const CONCENTRIC_TOL: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    // uniform on SO(3) via a normalized Gaussian quaternion
    let q: [f64; 4] = std::array::from_fn(|_| {
        let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    });
    let q = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

fn random_convex(rng: &mut ChaCha8Rng, scale: (f64, f64), center_jitter: f64) -> Superquadric {
    let eps = [uniform(rng, 0.3, 1.7), uniform(rng, 0.3, 1.7)];
    let a = [0; 3].map(|_| uniform(rng, scale.0, scale.1));
    let euler = euler_zyx_from_rotation(&random_rotation(rng));
    let t = Point3::from_fn(|_, _| uniform(rng, -center_jitter, center_jitter));
    Superquadric::new(eps, a, euler, t).unwrap()
}

fn unit_cube_grid(n: usize) -> ([usize; 3], Point3, f64) {
    ([n; 3], Point3::repeat(-1.0), 2.0 / (n - 1) as f64)
}

// ---------------------------------------------------------------------------

fn ac01_sphere_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c = Point3::from_fn(|_, _| uniform(&mut rng, -5.0, 5.0));
        let r = uniform(&mut rng, 0.01, 3.0);
        let euler = euler_zyx_from_rotation(&random_rotation(&mut rng));
        let s = Superquadric::new([1.0, 1.0], [r; 3], euler, c).unwrap();
        for _ in 0..1000 {
            let x = c + Point3::from_fn(|_, _| uniform(&mut rng, -3.0, 3.0)) * r;
            worst = worst.max((s.approx_sdf(&x) - ((x - c).norm() - r)).abs());
        }
    }
    let took = start.elapsed();
    outcome(
        worst < SPHERE_EXACT_TOL && took < SPHERE_RUNTIME,
        format!("max |err| = {worst:.2e} (< {SPHERE_EXACT_TOL:.0e}), {took:.2?} (< {SPHERE_RUNTIME:?})"),
    )
}

/// Distance from body-frame point `x` to the surface, found by a shrinking
/// window search over directions: the surface point in direction `u` is
/// `rho(u) u` with `rho` from the implicit function's homogeneity.
fn projected_distance(s: &Superquadric, x: &Point3) -> f64 {
    let surface = |u: &Point3| {
        let u = u.normalize();
        let w = s.to_world(&u);
        let f = s.implicit_value(&w);
        u * f.powf(-s.eps()[0] / 2.0)
    };
    let u0 = x.normalize();
    let helper = if u0.x.abs() < 0.9 { Point3::x() } else { Point3::y() };
    let e1 = u0.cross(&helper).normalize();
    let e2 = u0.cross(&e1);
    let (mut ca, mut cb, mut win) = (0.0, 0.0, 1.0);
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let (mut ba, mut bb) = (ca, cb);
        for i in -10..=10 {
            for j in -10..=10 {
                let a = ca + win * i as f64 / 10.0;
                let b = cb + win * j as f64 / 10.0;
                let d = (surface(&(u0 + e1 * a + e2 * b)) - x).norm();
                if d < best {
                    best = d;
                    ba = a;
                    bb = b;
                }
            }
        }
        ca = ba;
        cb = bb;
        win *= 0.35;
        if win < 1e-13 {
            break;
        }
    }
    best
}

fn ac02_near_surface() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let start = Instant::now();
    let cases: Vec<(Superquadric, Point3)> = (0..10_000)
        .map(|_| {
            let s = random_convex(&mut rng, (0.2, 1.0), 0.0);
            let u = Point3::from_fn(|_, _| uniform(&mut rng, -1.0, 1.0)).normalize();
            let rho = s.implicit_value(&s.to_world(&u)).powf(-s.eps()[0] / 2.0);
            let d = uniform(&mut rng, -NEAR_SURFACE_BAND, NEAR_SURFACE_BAND) * s.min_scale();
            (s, u * (rho + d))
        })
        .collect();
    let errs = par::map_slice(&cases, |(s, body)| {
        let x = s.to_world(body);
        let approx = s.approx_sdf(&x);
        let exact = projected_distance(s, body).copysign(approx);
        if exact.abs() < 1e-12 {
            (approx - exact).abs()
        } else {
            ((approx - exact) / exact).abs()
        }
    });
    let took = start.elapsed();
    let mut sorted = errs.clone();
    sorted.sort_by(f64::total_cmp);
    let within = errs.iter().filter(|e| **e < NEAR_SURFACE_REL_TOL).count();
    outcome(
        within == errs.len() && took < NEAR_SURFACE_RUNTIME,
        format!(
            "{within}/{} under {:.0}% relative error; median {:.2}%, p90 {:.2}%, max {:.2}%; {took:.2?}",
            errs.len(),
            100.0 * NEAR_SURFACE_REL_TOL,
            100.0 * sorted[sorted.len() / 2],
            100.0 * sorted[sorted.len() * 9 / 10],
            100.0 * sorted[sorted.len() - 1],
        ),
    )
}

fn ac03_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let start = Instant::now();
    let (dims, origin, h) = unit_cube_grid(64);
    let config = MarchingConfig::default();
    let mut passing = 0;
    let mut single = 0;
    let mut chamfers = Vec::new();
    let mut worst = (1.0, 0);
    for case in 0..50 {
        let truth = random_convex(&mut rng, (0.2, 0.45), 0.1);
        let grid = gen_superquadric_sdf(std::slice::from_ref(&truth), dims, origin, h).unwrap();
        let result = march(&grid, &config).unwrap();
        let truth_set = [truth.clone()];
        let score = iou(
            &PrimitiveUnion::new(&result.primitives),
            &PrimitiveUnion::new(&truth_set),
            metrics::DEFAULT_GRID_N,
        )
        .unwrap()
        .iou;
        if result.primitives.len() == 1 {
            single += 1;
        }
        if result.primitives.len() == 1 && score >= ROUND_TRIP_IOU {
            passing += 1;
        }
        if score < worst.0 {
            worst = (score, case);
        }
        if !result.primitives.is_empty() {
            let pred = metrics::predicted_surface_points(&result.primitives, h, config.seed).unwrap();
            let gt = PointSet::new(truth.sample_surface(h)).downsample(metrics::MAX_POINTS, config.seed);
            chamfers.push(chamfer_l1(&pred, &gt).unwrap());
        }
    }
    let took = start.elapsed();
    let mean_chamfer = chamfers.iter().sum::<f64>() / chamfers.len().max(1) as f64;
    outcome(
        passing >= ROUND_TRIP_MIN_PASS
            && mean_chamfer <= ROUND_TRIP_CHAMFER_SPACINGS * h
            && chamfers.len() == 50
            && took < ROUND_TRIP_RUNTIME,
        format!(
            "{passing}/50 single-primitive with IoU >= {ROUND_TRIP_IOU} (need {ROUND_TRIP_MIN_PASS}); \
             {single}/50 single; worst IoU {:.3} (case {}); mean Chamfer-L1 {:.4} = {:.2} spacings; {took:.1?}",
            worst.0,
            worst.1,
            mean_chamfer,
            mean_chamfer / h
        ),
    )
}

fn separated(a: &Superquadric, b: &Superquadric, gap: f64) -> bool {
    let (alo, ahi) = a.world_aabb();
    let (blo, bhi) = b.world_aabb();
    (0..3).any(|k| alo[k] > bhi[k] + gap || blo[k] > ahi[k] + gap)
}

fn ac04_disjoint_pairs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (dims, origin, h) = unit_cube_grid(64);
    let config = MarchingConfig::default();
    let mut passing = 0;
    let mut notes = Vec::new();
    for case in 0..20 {
        let (a, b) = loop {
            let mut a = random_convex(&mut rng, (0.12, 0.3), 0.05);
            let mut b = random_convex(&mut rng, (0.12, 0.3), 0.05);
            a = a.transformed(&Matrix3::identity(), &Point3::new(-0.5, 0.0, 0.0)).unwrap();
            b = b.transformed(&Matrix3::identity(), &Point3::new(0.5, 0.0, 0.0)).unwrap();
            if separated(&a, &b, 4.0 * h) {
                break (a, b);
            }
        };
        let grid = gen_superquadric_sdf(&[a.clone(), b.clone()], dims, origin, h).unwrap();
        let result = march(&grid, &config).unwrap();
        let mut ok = result.primitives.len() == 2;
        let mut scores = Vec::new();
        if ok {
            for truth in [&a, &b] {
                let nearest = result
                    .primitives
                    .iter()
                    .min_by(|p, q| {
                        let dp = (p.translation() - truth.translation()).norm();
                        let dq = (q.translation() - truth.translation()).norm();
                        dp.total_cmp(&dq)
                    })
                    .unwrap();
                let s = iou(
                    &PrimitiveUnion::new(std::slice::from_ref(nearest)),
                    &PrimitiveUnion::new(std::slice::from_ref(truth)),
                    metrics::DEFAULT_GRID_N,
                )
                .unwrap()
                .iou;
                scores.push(s);
                ok &= s >= PAIR_IOU;
            }
        }
        if ok {
            passing += 1;
        } else {
            notes.push(format!("case {case}: {} prims, IoU {scores:.3?}", result.primitives.len()));
        }
    }
    outcome(
        passing >= PAIR_MIN_PASS,
        format!("{passing}/20 pairs separated with IoU >= {PAIR_IOU} (need {PAIR_MIN_PASS}) {}", notes.join("; ")),
    )
}

fn ac05_degeneration_and_removal() -> Outcome {
    // all-exterior volume: every voxel at +t
    let (dims, origin, h) = unit_cube_grid(32);
    let t = 1.3 * h;
    let grid = VoxelGrid::new(dims, origin, h, vec![t; dims.iter().product()])
        .unwrap()
        .truncated(t)
        .unwrap();
    let opts = FitOptions::with_defaults(t, h);
    let seed = Superquadric::new([1.0, 1.0], [0.1, 0.15, 0.08], [0.0; 3], Point3::new(0.1, -0.2, 0.0)).unwrap();
    let fitted = fitting::fit(&grid, &seed, &opts).unwrap();
    let stats = fitting::removal_stats(&grid, &fitted.primitive);
    let by_minus = stats.n_minus < 1 && fitting::should_remove(&stats);
    let contradiction = RemovalStats {
        n_plus: 60,
        n_minus: 30,
        n_zero: 10,
    };
    let ratio = contradiction.n_plus as f64 / contradiction.total() as f64;
    let by_ratio = contradiction.n_minus >= 1 && ratio >= 0.5 && fitting::should_remove(&contradiction);
    outcome(
        by_minus && by_ratio,
        format!(
            "exterior seed -> {stats:?} (degenerate: {}), removed: {by_minus}; (60,30,10) ratio {ratio} removed: {by_ratio}",
            fitted.degenerate
        ),
    )
}

fn ac06_posterior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut exterior_ok = true;
    let mut interior_ok = true;
    for _ in 0..100_000 {
        let t = uniform(&mut rng, 1e-3, 0.1);
        let sigma2 = uniform(&mut rng, (0.05 * t).powi(2), t);
        let p0 = uniform(&mut rng, 1e-3, 0.999);
        let dt = uniform(&mut rng, -t, t);
        let ext = uniform(&mut rng, 0.0, t);
        exterior_ok &= posterior(ext, dt, sigma2, p0, t) == 1.0;
        // interior values within a few sigma, so both densities are finite
        let d = (dt + uniform(&mut rng, -3.0, 3.0) * sigma2.sqrt()).clamp(-t, -1e-12);
        let p = posterior(d, dt, sigma2, p0, t);
        interior_ok &= p > 0.0 && p < 1.0;
    }
    // worked value: zero residual, so the Gaussian is at its peak
    let (s2, p0, t) = (0.013f64, 0.01f64, 0.013f64);
    let peak = 1.0 / (2.0 * PI * s2).sqrt();
    let independent = p0 * peak / (p0 * peak + (1.0 - p0) / t);
    let got = posterior(-0.005, -0.005, s2, p0, t);
    let matches = ((got - independent) / independent).abs() < POSTERIOR_REL_TOL;
    let literal = ((got - POSTERIOR_WORKED) / POSTERIOR_WORKED).abs();
    outcome(
        exterior_ok && interior_ok && matches,
        format!(
            "P=1 on exterior: {exterior_ok}; P in (0,1) on interior: {interior_ok}; worked value {got:.5e} vs \
             independent {independent:.5e} (quoted {POSTERIOR_WORKED:.2e}, rel diff {literal:.1e})"
        ),
    )
}

fn ac07_sigma2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = 0.04;
        let n = rng.gen_range(5..200);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (uniform(&mut rng, 0.0, 1.0), uniform(&mut rng, -t, t)))
            .collect();
        let closed = update_sigma2(pairs.iter().copied()).unwrap();
        // sigma^2-dependent part of the negative log likelihood
        let l = |s2: f64| {
            pairs
                .iter()
                .map(|(p, r)| p * (r * r / (2.0 * s2) + 0.5 * (2.0 * PI * s2).ln()))
                .sum::<f64>()
        };
        let hi = t * t;
        let scan = (1..=10_000)
            .map(|k| hi * k as f64 / 10_000.0)
            .min_by(|a, b| l(*a).total_cmp(&l(*b)))
            .unwrap();
        worst = worst.max((closed - scan).abs());
    }
    outcome(worst <= SIGMA2_TOL, format!("max |closed form - scan| = {worst:.2e} (<= {SIGMA2_TOL:.0e})"))
}

fn ac08_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (dims, origin, h) = unit_cube_grid(24);
    let target = random_convex(&mut rng, (0.3, 0.5), 0.1);
    let grid = gen_superquadric_sdf(&[target], dims, origin, h).unwrap();
    let t = 1.3 * h;
    let voxels: Vec<usize> = (0..grid.len()).collect();
    let weights: Vec<f64> = voxels.iter().map(|_| uniform(&mut rng, 0.0, 1.0)).collect();
    let problem = WeightedSdfProblem::new(&grid, &voxels, &weights, t);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let theta = random_convex(&mut rng, (0.25, 0.5), 0.1);
        let x = theta.params();
        let analytic = problem.gradient(&x).unwrap();
        let fd: [f64; N_PARAMS] = std::array::from_fn(|j| {
            let step = 1e-6 * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[j] += step;
            xm[j] -= step;
            let c = |p: &[f64; N_PARAMS]| problem.cost_of(&Superquadric::from_params(p).unwrap());
            (c(&xp) - c(&xm)) / (2.0 * step)
        });
        let diff: f64 = (0..N_PARAMS).map(|j| (analytic[j] - fd[j]).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(diff / norm.max(1e-300));
    }
    outcome(
        worst < GRADIENT_REL_TOL,
        format!("max relative gradient error {worst:.2e} (< {GRADIENT_REL_TOL:.0e})"),
    )
}

/// Box, sphere and capped cylinder, joined by exact min-union.
struct Composite;

impl Composite {
    fn sdf(p: &Point3) -> f64 {
        let b = {
            let q = (p - Point3::new(-0.3, 0.0, -0.15)).abs() - Point3::new(0.4, 0.22, 0.22);
            q.sup(&Point3::zeros()).norm() + q.max().min(0.0)
        };
        let s = (p - Point3::new(0.35, 0.05, 0.1)).norm() - 0.32;
        let c = {
            let l = p - Point3::new(-0.45, 0.0, 0.35);
            let q = nalgebra::Vector2::new((l.x * l.x + l.y * l.y).sqrt() - 0.16, l.z.abs() - 0.3);
            q.sup(&nalgebra::Vector2::zeros()).norm() + q.max().min(0.0)
        };
        b.min(s).min(c)
    }
}

impl OccupancyOracle for Composite {
    fn contains(&self, p: &Point3) -> bool {
        Self::sdf(p) <= 0.0
    }

    fn bounds(&self) -> (Point3, Point3) {
        (Point3::new(-0.7, -0.27, -0.37), Point3::new(0.67, 0.37, 0.65))
    }
}

fn composite_iou(n: usize, ratio: f64) -> (f64, usize) {
    let (dims, origin, h) = unit_cube_grid(n);
    let grid = VoxelGrid::from_fn(dims, origin, h, Composite::sdf).unwrap();
    let config = MarchingConfig {
        truncation_ratio: ratio,
        ..Default::default()
    };
    let result = march(&grid, &config).unwrap();
    let score = iou(&PrimitiveUnion::new(&result.primitives), &Composite, metrics::DEFAULT_GRID_N)
        .unwrap()
        .iou;
    (score, result.primitives.len())
}

fn ac09_resolution_trend() -> Outcome {
    let start = Instant::now();
    let (i32_, k32) = composite_iou(32, 1.3);
    let (i64_, k64) = composite_iou(64, 1.3);
    let (i128_, k128) = composite_iou(128, 1.3);
    let took = start.elapsed();
    outcome(
        i32_ <= i64_ + TREND_SLACK && i64_ <= i128_ + TREND_SLACK && took < TREND_RUNTIME,
        format!(
            "IoU 32^3 {i32_:.3} ({k32} prims), 64^3 {i64_:.3} ({k64}), 128^3 {i128_:.3} ({k128}); {took:.1?}"
        ),
    )
}

fn ac10_truncation_sweep() -> Outcome {
    let (mid, km) = composite_iou(64, 1.3);
    let (wide, kw) = composite_iou(64, 4.0);
    let (narrow, kn) = composite_iou(64, 0.1);
    outcome(
        mid >= wide && mid >= narrow,
        format!("IoU at ratio 0.1 {narrow:.3} ({kn} prims), 1.3 {mid:.3} ({km}), 4.0 {wide:.3} ({kw})"),
    )
}

fn ac11_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mut set = |n| PointSet::new((0..n).map(|_| Point3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect());
        let x = set(100);
        let y = set(100);
        let l1 = |a: &Point3, b: &Point3| (a - b).abs().sum();
        let term = |from: &PointSet, to: &PointSet| {
            from.points
                .iter()
                .map(|p| to.points.iter().map(|q| l1(p, q)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / from.len() as f64
        };
        let brute = term(&y, &x) + term(&x, &y);
        worst = worst.max((chamfer_l1(&x, &y).unwrap() - brute).abs());
    }
    let small = [Superquadric::sphere(Point3::zeros(), 0.5).unwrap()];
    let big = [Superquadric::sphere(Point3::zeros(), 1.0).unwrap()];
    let ratio = iou(&PrimitiveUnion::new(&small), &PrimitiveUnion::new(&big), 100).unwrap().iou;
    outcome(
        worst <= CHAMFER_ORACLE_TOL && (ratio - CONCENTRIC_IOU).abs() <= CONCENTRIC_TOL,
        format!("chamfer vs brute force max diff {worst:.1e}; concentric IoU {ratio:.4}"),
    )
}

fn ac12_determinism() -> Outcome {
    let (dims, origin, h) = unit_cube_grid(40);
    let grid = VoxelGrid::from_fn(dims, origin, h, Composite::sdf).unwrap();
    let config = MarchingConfig::default();
    let run = |threads| {
        par::with_threads(threads, || {
            serde_json::to_string(&march(&grid, &config).unwrap()).unwrap()
        })
    };
    let one = run(1);
    let again = run(1);
    let four = run(4);
    let three = run(3);
    outcome(
        one == again && one == four && one == three,
        format!("threads 1/1/3/4 byte-identical: {}, {} bytes", one == again && one == four && one == three, one.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 12] = [
        ("ac01", "sphere SDF exactness", ac01_sphere_exactness),
        ("ac02", "near-surface convergence", ac02_near_surface),
        ("ac03", "single-primitive round trip", ac03_round_trip),
        ("ac04", "disjoint-pair separation", ac04_disjoint_pairs),
        ("ac05", "degeneration and removal", ac05_degeneration_and_removal),
        ("ac06", "posterior properties", ac06_posterior),
        ("ac07", "variance closed form", ac07_sigma2),
        ("ac08", "gradient check", ac08_gradient),
        ("ac09", "resolution trend", ac09_resolution_trend),
        ("ac10", "truncation sweep", ac10_truncation_sweep),
        ("ac11", "metric oracles", ac11_metric_oracles),
        ("ac12", "determinism", ac12_determinism),
    ];
    // cargo passes harness flags such as --nocapture; ignore them
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let out = check();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {id} {name}: {} [{:.1?}]", out.detail, start.elapsed());
        failed += usize::from(!out.pass);
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
