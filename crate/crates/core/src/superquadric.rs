//! Superquadric primitive: implicit function, radial-distance SDF and its
//! parameter gradient, surface sampling.
//!
//! A primitive is the 11-vector `[eps1, eps2, ax, ay, az, yaw, pitch, roll,
//! tx, ty, tz]`. The rotation is `R = Rz(yaw) * Ry(pitch) * Rx(roll)` and maps
//! body coordinates to world coordinates: `x_world = R * x_body + t`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::{Error, Point3, Result};

/// Lower clamp on both shape exponents.
pub const EPS_MIN: f64 = 0.05;
/// Upper bound on both shape exponents (convex family).
pub const EPS_MAX: f64 = 2.0;
/// Number of scalar parameters.
pub const N_PARAMS: usize = 11;

/// Distance from the center below which the radial formula is treated as
/// singular.
const CENTER_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Superquadric {
    eps: [f64; 2],
    scale: [f64; 3],
    euler_zyx: [f64; 3],
    translation: Point3,
    rotation: Matrix3<f64>,
}

/// JSON form of a primitive.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SuperquadricRecord {
    pub eps: [f64; 2],
    pub scale: [f64; 3],
    pub euler_zyx: [f64; 3],
    pub translation: [f64; 3],
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_y(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_x(c_: f64) -> Matrix3<f64> {
    let (s, c) = c_.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn d_rot_y(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_x(c_: f64) -> Matrix3<f64> {
    let (s, c) = c_.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

/// Rotation matrix for Z-Y-X Euler angles `[yaw, pitch, roll]`.
pub fn rotation_from_euler_zyx(e: [f64; 3]) -> Matrix3<f64> {
    rot_z(e[0]) * rot_y(e[1]) * rot_x(e[2])
}

/// Inverse of [`rotation_from_euler_zyx`]; at gimbal lock roll is set to 0.
pub fn euler_zyx_from_rotation(r: &Matrix3<f64>) -> [f64; 3] {
    let sp = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    if sp.abs() > 1.0 - 1e-12 {
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        [yaw, pitch, 0.0]
    } else {
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        [yaw, pitch, roll]
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Sign-preserving power: `sign(v) * |v|^p`.
#[inline]
fn sgnpow(v: f64, p: f64) -> f64 {
    v.signum() * v.abs().powf(p)
}

/// Terms of the implicit function evaluated at a body-frame point.
struct ImplicitTerms {
    /// `|x/ax|^(2/e2)`, `|y/ay|^(2/e2)`, `|z/az|^(2/e1)`.
    a: f64,
    b: f64,
    c: f64,
    /// `a + b` and `(a + b)^(e2/e1)`.
    s: f64,
    p: f64,
    /// Natural logs of `|x/ax|`, `|y/ay|`, `|z/az|` (-inf on the planes).
    lx: f64,
    ly: f64,
    lz: f64,
}

impl ImplicitTerms {
    #[inline]
    fn new(x: &Point3, eps: [f64; 2], scale: [f64; 3]) -> Self {
        let [e1, e2] = eps;
        let lx = (x.x.abs() / scale[0]).ln();
        let ly = (x.y.abs() / scale[1]).ln();
        let lz = (x.z.abs() / scale[2]).ln();
        let a = (2.0 / e2 * lx).exp();
        let b = (2.0 / e2 * ly).exp();
        let c = (2.0 / e1 * lz).exp();
        let s = a + b;
        let p = if s > 0.0 { (e2 / e1 * s.ln()).exp() } else { 0.0 };
        Self {
            a,
            b,
            c,
            s,
            p,
            lx,
            ly,
            lz,
        }
    }

    #[inline]
    fn value(&self) -> f64 {
        self.p + self.c
    }
}

impl Superquadric {
    /// Builds a validated primitive.
    pub fn new(
        eps: [f64; 2],
        scale: [f64; 3],
        euler_zyx: [f64; 3],
        translation: Point3,
    ) -> Result<Self> {
        for (i, e) in eps.iter().enumerate() {
            if !e.is_finite() || *e < EPS_MIN || *e > EPS_MAX {
                return Err(Error::Validation(format!(
                    "eps{} = {e} outside [{EPS_MIN}, {EPS_MAX}]",
                    i + 1
                )));
            }
        }
        for (i, a) in scale.iter().enumerate() {
            if !a.is_finite() || *a <= 0.0 {
                return Err(Error::Validation(format!("scale[{i}] = {a} must be > 0")));
            }
        }
        if euler_zyx.iter().any(|v| !v.is_finite()) || translation.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Validation("non-finite pose".into()));
        }
        Ok(Self {
            eps,
            scale,
            euler_zyx,
            translation,
            rotation: rotation_from_euler_zyx(euler_zyx),
        })
    }

    /// Sphere of the given radius (all exponents 1).
    pub fn sphere(center: Point3, radius: f64) -> Result<Self> {
        Self::new([1.0, 1.0], [radius; 3], [0.0; 3], center)
    }

    /// Builds from the 11-vector layout used by the solver.
    pub fn from_params(p: &[f64; N_PARAMS]) -> Result<Self> {
        Self::new(
            [p[0], p[1]],
            [p[2], p[3], p[4]],
            [p[5], p[6], p[7]],
            Point3::new(p[8], p[9], p[10]),
        )
    }

    pub fn params(&self) -> [f64; N_PARAMS] {
        let [e1, e2] = self.eps;
        let [ax, ay, az] = self.scale;
        let [yaw, pitch, roll] = self.euler_zyx;
        let t = self.translation;
        [e1, e2, ax, ay, az, yaw, pitch, roll, t.x, t.y, t.z]
    }

    pub fn eps(&self) -> [f64; 2] {
        self.eps
    }

    pub fn scale(&self) -> [f64; 3] {
        self.scale
    }

    pub fn euler_zyx(&self) -> [f64; 3] {
        self.euler_zyx
    }

    pub fn translation(&self) -> Point3 {
        self.translation
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn min_scale(&self) -> f64 {
        self.scale[0].min(self.scale[1]).min(self.scale[2])
    }

    pub fn max_scale(&self) -> f64 {
        self.scale[0].max(self.scale[1]).max(self.scale[2])
    }

    /// Applies a rigid motion `x -> rot * x + shift` to the primitive pose.
    pub fn transformed(&self, rot: &Matrix3<f64>, shift: &Point3) -> Result<Self> {
        let r = rot * self.rotation;
        let t = rot * self.translation + shift;
        Self::new(self.eps, self.scale, euler_zyx_from_rotation(&r), t)
    }

    /// World point to body frame: `g^-1 o x`.
    #[inline]
    pub fn to_body(&self, x: &Point3) -> Point3 {
        self.rotation.tr_mul(&(x - self.translation))
    }

    #[inline]
    pub fn to_world(&self, body: &Point3) -> Point3 {
        self.rotation * body + self.translation
    }

    /// Implicit function `f`: 1 on the surface, < 1 inside, > 1 outside.
    pub fn implicit_value(&self, x: &Point3) -> f64 {
        ImplicitTerms::new(&self.to_body(x), self.eps, self.scale).value()
    }

    /// Boundary counts as inside.
    pub fn contains(&self, x: &Point3) -> bool {
        self.implicit_value(x) <= 1.0
    }

    /// Radial distance from the center along `dir` (unit, body frame) to
    /// the surface.
    #[inline]
    fn surface_radius(&self, dir: &Point3) -> f64 {
        let f = ImplicitTerms::new(dir, self.eps, self.scale).value();
        (-0.5 * self.eps[0] * f.ln()).exp()
    }

    /// Signed radial distance `(1 - f^(-e1/2)) * |g^-1 o x|`.
    ///
    /// Written as `r - rho(u)` with `u` the unit body direction, which is the
    /// same quantity (the implicit function is homogeneous of degree
    /// `2/e1`) but cannot overflow for distant points. Within `1e-12` of the
    /// center the formula is singular and `-min(a)` is returned instead.
    pub fn approx_sdf(&self, x: &Point3) -> f64 {
        let body = self.to_body(x);
        let r = body.norm();
        if r < CENTER_EPS {
            return -self.min_scale();
        }
        r - self.surface_radius(&(body / r))
    }

    pub fn truncated_sdf(&self, x: &Point3, t: f64) -> f64 {
        self.approx_sdf(x).clamp(-t, t)
    }

    /// Radial distance together with its gradient with respect to the 11
    /// parameters (same layout as [`Self::params`]).
    pub fn approx_sdf_with_gradient(&self, x: &Point3) -> (f64, [f64; N_PARAMS]) {
        let mut grad = [0.0; N_PARAMS];
        let rel = x - self.translation;
        let body = self.rotation.tr_mul(&rel);
        let r = body.norm();
        if r < CENTER_EPS {
            return (-self.min_scale(), grad);
        }
        let [e1, e2] = self.eps;
        let [ax, ay, az] = self.scale;
        let u = body / r;
        let k = ImplicitTerms::new(&u, self.eps, self.scale);
        let f = k.value();
        let rho = (-0.5 * e1 * f.ln()).exp();
        let d = r - rho;

        // shape: d = r - F^(-e1/2), with F evaluated at the unit direction
        let (p_a, p_b) = if k.s > 0.0 {
            (k.p * k.a / k.s, k.p * k.b / k.s)
        } else {
            (0.0, 0.0)
        };
        let ln_s = if k.s > 0.0 { k.s.ln() } else { 0.0 };
        let a_lx = if k.a > 0.0 { k.a * k.lx } else { 0.0 };
        let b_ly = if k.b > 0.0 { k.b * k.ly } else { 0.0 };
        let c_lz = if k.c > 0.0 { k.c * k.lz } else { 0.0 };

        let df_de1 = -k.p * e2 / (e1 * e1) * ln_s - 2.0 / (e1 * e1) * c_lz;
        let df_de2 = if k.s > 0.0 {
            k.p / e1 * (ln_s - 2.0 / e2 * (a_lx + b_ly) / k.s)
        } else {
            0.0
        };
        grad[0] = rho * (0.5 * f.ln() + 0.5 * e1 * df_de1 / f);
        grad[1] = rho * 0.5 * e1 * df_de2 / f;
        grad[2] = -rho * p_a / (ax * f);
        grad[3] = -rho * p_b / (ay * f);
        grad[4] = -rho * k.c / (az * f);

        // body point: grad_X d = u (1 - rho/r) + (rho/r) h / F
        let h = Point3::new(
            if u.x != 0.0 { p_a / u.x } else { 0.0 },
            if u.y != 0.0 { p_b / u.y } else { 0.0 },
            if u.z != 0.0 { k.c / u.z } else { 0.0 },
        );
        let g = rho / r;
        let grad_body = u * (1.0 - g) + h * (g / f);

        let [yaw, pitch, roll] = self.euler_zyx;
        let (rz, ry, rx) = (rot_z(yaw), rot_y(pitch), rot_x(roll));
        let dr = [
            d_rot_z(yaw) * ry * rx,
            rz * d_rot_y(pitch) * rx,
            rz * ry * d_rot_x(roll),
        ];
        for (i, m) in dr.iter().enumerate() {
            grad[5 + i] = grad_body.dot(&m.tr_mul(&rel));
        }
        let grad_t = -(self.rotation * grad_body);
        grad[8] = grad_t.x;
        grad[9] = grad_t.y;
        grad[10] = grad_t.z;
        (d, grad)
    }

    /// World-space axis-aligned bounds (of the oriented box enclosing the
    /// primitive).
    pub fn world_aabb(&self) -> (Point3, Point3) {
        let mut half = Point3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                half[i] += self.rotation[(i, j)].abs() * self.scale[j];
            }
        }
        (self.translation - half, self.translation + half)
    }

    /// Body-frame surface point in the direction `(phi, psi)` (latitude,
    /// longitude).
    fn surface_point_polar(&self, phi: f64, psi: f64) -> Point3 {
        let (sphi, cphi) = phi.sin_cos();
        let (spsi, cpsi) = psi.sin_cos();
        let dir = Point3::new(cphi * cpsi, cphi * spsi, sphi);
        dir * self.surface_radius(&dir)
    }

    /// Point from the classic `(eta, omega)` parametrization, body frame.
    pub fn parametric_point(&self, eta: f64, omega: f64) -> Point3 {
        let [e1, e2] = self.eps;
        let [ax, ay, az] = self.scale;
        let ce = sgnpow(eta.cos(), e1);
        Point3::new(
            ax * ce * sgnpow(omega.cos(), e2),
            ay * ce * sgnpow(omega.sin(), e2),
            az * sgnpow(eta.sin(), e1),
        )
    }

    /// Samples the surface so that consecutive samples along either sampling
    /// direction are at most `target_spacing / 2` apart (and therefore within
    /// `target_spacing`).
    ///
    /// Samples follow rays from the center (a polar parametrization) rather
    /// than the `(eta, omega)` one, which bunches points at the poles and
    /// corners for small exponents. Rows and per-row longitudes are placed at
    /// equal arc length using dense lookup tables.
    pub fn sample_surface(&self, target_spacing: f64) -> Vec<Point3> {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
        assert!(target_spacing > 0.0, "target_spacing must be positive");
        let step = 0.5 * target_spacing;
        const TABLE: usize = 2048;

        // Row placement: worst meridian speed over a few longitudes.
        let probes = [0.0, FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4, PI, -FRAC_PI_4, -FRAC_PI_2, -3.0 * FRAC_PI_4];
        let phis: Vec<f64> = (0..=TABLE)
            .map(|i| -FRAC_PI_2 + PI * i as f64 / TABLE as f64)
            .collect();
        let mut arc = vec![0.0; TABLE + 1];
        let mut prev: Vec<Point3> = probes
            .iter()
            .map(|&psi| self.surface_point_polar(phis[0], psi))
            .collect();
        for i in 1..=TABLE {
            let mut worst: f64 = 0.0;
            for (k, &psi) in probes.iter().enumerate() {
                let p = self.surface_point_polar(phis[i], psi);
                worst = worst.max((p - prev[k]).norm());
                prev[k] = p;
            }
            arc[i] = arc[i - 1] + worst;
        }
        let rows = equal_arc_params(&phis, &arc, step);

        let psis: Vec<f64> = (0..=TABLE)
            .map(|i| -PI + 2.0 * PI * i as f64 / TABLE as f64)
            .collect();
        let mut out = Vec::new();
        for &phi in &rows {
            if (FRAC_PI_2 - phi.abs()) < 1e-12 {
                out.push(self.to_world(&self.surface_point_polar(phi, 0.0)));
                continue;
            }
            let pts: Vec<Point3> = psis.iter().map(|&psi| self.surface_point_polar(phi, psi)).collect();
            let mut row_arc = vec![0.0; TABLE + 1];
            for i in 1..=TABLE {
                row_arc[i] = row_arc[i - 1] + (pts[i] - pts[i - 1]).norm();
            }
            let mut lons = equal_arc_params(&psis, &row_arc, step);
            // closed loop: the last longitude duplicates the first
            lons.pop();
            if lons.is_empty() {
                lons.push(0.0);
            }
            out.extend(
                lons.iter()
                    .map(|&psi| self.to_world(&self.surface_point_polar(phi, psi))),
            );
        }
        out
    }

    pub fn to_record(&self) -> SuperquadricRecord {
        let t = self.translation;
        SuperquadricRecord {
            eps: self.eps,
            scale: self.scale,
            euler_zyx: self.euler_zyx,
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn from_record(rec: &SuperquadricRecord) -> Result<Self> {
        let [x, y, z] = rec.translation;
        Self::new(rec.eps, rec.scale, rec.euler_zyx, Point3::new(x, y, z))
    }
}

/// Picks parameter values at equal arc-length spacing (at most `step`)
/// from a monotone cumulative arc-length table, endpoints included.
fn equal_arc_params(params: &[f64], arc: &[f64], step: f64) -> Vec<f64> {
    let total = *arc.last().unwrap();
    let n = ((total / step).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(n + 1);
    let mut j = 0;
    for k in 0..=n {
        let s = total * k as f64 / n as f64;
        while j + 1 < arc.len() - 1 && arc[j + 1] < s {
            j += 1;
        }
        let (s0, s1) = (arc[j], arc[j + 1]);
        let w = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        out.push(params[j] + w * (params[j + 1] - params[j]));
    }
    out
}

impl Serialize for Superquadric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Superquadric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = SuperquadricRecord::deserialize(d)?;
        Superquadric::from_record(&rec).map_err(serde::de::Error::custom)
    }
}
