//! Projection of a bubble onto `H¹₀` of a three-dimensional annulus:
//! `PU = U - h` with `h` harmonic in the annulus and `h = U` on both spheres.
//!
//! `h` is expanded in solid harmonics. Each degree `l` contributes
//! `(A (ρ/b)^l + B (a/ρ)^{l+1}) Y_lm`, a scaling that keeps the per-mode
//! 2×2 systems well conditioned for large `l`. The unscaled coefficients
//! `α = A b^{-l}`, `β = B a^{l+1}` are available on each mode.
//!
//! Two routes compute the same `h`:
//! * the full real spherical-harmonic expansion in the standard frame, and
//! * a zonal expansion about the axis through the bubble center, exact
//!   because the boundary data of a single bubble is axially symmetric.
//!   It carries `L+1` instead of `(L+1)²` terms and has an analytic
//!   gradient, so evaluation loops use it.

use std::f64::consts::PI;

use serde::Serialize;

use crate::bubble::Bubble;
use crate::error::{LabError, Result};
use crate::geometry::{norm, rotate_plane, AnnulusGeometry};
use crate::numerics::linear_fit;
use crate::numerics::quadrature::GaussLegendre;

pub const DEFAULT_L_MAX: usize = 48;
pub const DEFAULT_QUADRATURE: usize = 96;
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionOptions {
    pub l_max: usize,
    /// Gauss–Legendre nodes in `cos θ`.
    pub quad_polar: usize,
    /// Uniform azimuthal nodes (full route only).
    pub quad_azimuth: usize,
    /// Largest accepted boundary sup-residual.
    pub tol: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            l_max: DEFAULT_L_MAX,
            quad_polar: DEFAULT_QUADRATURE,
            quad_azimuth: DEFAULT_QUADRATURE,
            tol: DEFAULT_BOUNDARY_TOL,
        }
    }
}

impl ProjectionOptions {
    pub fn with_l_max(l_max: usize) -> Self {
        let q = (2 * l_max).max(DEFAULT_QUADRATURE);
        Self {
            l_max,
            quad_polar: q,
            quad_azimuth: q,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.quad_polar < self.l_max + 1 || self.quad_azimuth < 2 * self.l_max {
            return Err(LabError::Config(format!(
                "quadrature {}x{} too coarse for degree {}",
                self.quad_polar, self.quad_azimuth, self.l_max
            )));
        }
        Ok(())
    }
}

/// Coefficients of one real harmonic `Y_lm` (`m < 0` selects `sin |m|φ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeCoefficient {
    pub l: usize,
    pub m: i64,
    /// Coefficient of `(ρ/b)^l`.
    pub scaled_a: f64,
    /// Coefficient of `(a/ρ)^{l+1}`.
    pub scaled_b: f64,
    /// Projections of the boundary data on `|y| = a` and `|y| = b`.
    pub inner_data: f64,
    pub outer_data: f64,
}

impl ModeCoefficient {
    /// `(α, β)` for the basis `ρ^l Y_lm`, `ρ^{-(l+1)} Y_lm`.
    pub fn alpha_beta(&self, a: f64, b: f64) -> (f64, f64) {
        let l = self.l as i32;
        (self.scaled_a * b.powi(-l), self.scaled_b * a.powi(l + 1))
    }

    fn solve(l: usize, m: i64, q: f64, inner: f64, outer: f64) -> Self {
        let ql = q.powi(l as i32);
        let ql1 = ql * q;
        let det = 1.0 - ql * ql1;
        Self {
            l,
            m,
            scaled_a: (outer - inner * ql1) / det,
            scaled_b: (inner - outer * ql) / det,
            inner_data: inner,
            outer_data: outer,
        }
    }

    /// Residual of the 2×2 boundary system relative to the data.
    fn system_residual(&self, q: f64) -> f64 {
        let ql = q.powi(self.l as i32);
        let r_in = self.scaled_a * ql + self.scaled_b - self.inner_data;
        let r_out = self.scaled_a + self.scaled_b * ql * q - self.outer_data;
        let scale = self.inner_data.abs().max(self.outer_data.abs()).max(f64::MIN_POSITIVE);
        r_in.abs().max(r_out.abs()) / scale
    }
}

/// Fully normalized associated Legendre functions `P̄_l^m(x)` for
/// `0 ≤ m ≤ l ≤ L`, stored at `l(l+1)/2 + m`, with `∫ P̄² dω = 1` once the
/// azimuthal factor `1` or `√2 cos/sin mφ` is attached.
fn normalized_legendre(l_max: usize, x: f64, out: &mut Vec<f64>) {
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    out.clear();
    out.resize((l_max + 1) * (l_max + 2) / 2, 0.0);
    let s = (1.0 - x * x).max(0.0).sqrt();
    out[0] = (0.25 / PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            let mf = m as f64;
            out[idx(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * out[idx(m - 1, m - 1)];
        }
        if m < l_max {
            out[idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * out[idx(m, m)];
        }
        for l in m + 2..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            out[idx(l, m)] = a * (x * out[idx(l - 1, m)] - b * out[idx(l - 2, m)]);
        }
    }
}

/// Right-handed orthonormal frame whose third vector is `axis`.
fn frame_about(axis: [f64; 3]) -> [[f64; 3]; 3] {
    let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d: f64 = (0..3).map(|i| helper[i] * axis[i]).sum();
    let mut e1 = [0.0; 3];
    for i in 0..3 {
        e1[i] = helper[i] - d * axis[i];
    }
    let n1 = norm(&e1);
    e1.iter_mut().for_each(|v| *v /= n1);
    let e2 = [
        axis[1] * e1[2] - axis[2] * e1[1],
        axis[2] * e1[0] - axis[0] * e1[2],
        axis[0] * e1[1] - axis[1] * e1[0],
    ];
    [e1, e2, axis]
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicCorrection {
    pub l_max: usize,
    pub a: f64,
    pub b: f64,
    /// Frame `(e₁, e₂, axis)`; polar angle measured from `axis`, azimuth
    /// from `e₁`.
    pub frame: [[f64; 3]; 3],
    /// Only `m = 0` modes about `axis`.
    pub zonal: bool,
    pub coefficients: Vec<ModeCoefficient>,
    pub inner_residual: f64,
    pub outer_residual: f64,
    #[serde(skip)]
    zonal_a: Vec<f64>,
    #[serde(skip)]
    zonal_b: Vec<f64>,
}

impl HarmonicCorrection {
    fn new(geom: &AnnulusGeometry, l_max: usize, frame: [[f64; 3]; 3], zonal: bool, coefficients: Vec<ModeCoefficient>) -> Self {
        let (zonal_a, zonal_b) = if zonal {
            // fold the Y_l0 normalization into the zonal coefficients
            coefficients
                .iter()
                .map(|c| {
                    let s = ((2.0 * c.l as f64 + 1.0) / (4.0 * PI)).sqrt();
                    (c.scaled_a * s, c.scaled_b * s)
                })
                .unzip()
        } else {
            (Vec::new(), Vec::new())
        };
        Self {
            l_max,
            a: geom.a,
            b: geom.b,
            frame,
            zonal,
            coefficients,
            inner_residual: 0.0,
            outer_residual: 0.0,
            zonal_a,
            zonal_b,
        }
    }

    /// The same correction for a bubble rotated by `angle` in the
    /// `(x1, x2)` plane.
    pub fn rotated(&self, angle: f64) -> Self {
        let (sn, cs) = angle.sin_cos();
        let mut out = self.clone();
        for row in out.frame.iter_mut() {
            let (x, y) = (row[0], row[1]);
            row[0] = cs * x - sn * y;
            row[1] = sn * x + cs * y;
        }
        out
    }

    pub fn boundary_residual(&self) -> f64 {
        self.inner_residual.max(self.outer_residual)
    }

    /// Largest relative residual of the per-mode 2×2 systems.
    pub fn system_residual(&self) -> f64 {
        let q = self.a / self.b;
        self.coefficients.iter().map(|c| c.system_residual(q)).fold(0.0, f64::max)
    }

    pub fn coefficient(&self, l: usize, m: i64) -> Option<&ModeCoefficient> {
        self.coefficients.iter().find(|c| c.l == l && c.m == m)
    }

    fn local(&self, y: &[f64]) -> [f64; 3] {
        let f = &self.frame;
        [
            f[0][0] * y[0] + f[0][1] * y[1] + f[0][2] * y[2],
            f[1][0] * y[0] + f[1][1] * y[1] + f[1][2] * y[2],
            f[2][0] * y[0] + f[2][1] * y[1] + f[2][2] * y[2],
        ]
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        if self.zonal {
            self.zonal_value_gradient(y, false).0
        } else {
            self.full_value(y)
        }
    }

    /// Value and gradient; the gradient is analytic on the zonal route and
    /// unavailable (`None`) on the full route.
    pub fn value_gradient(&self, y: &[f64]) -> (f64, Option<[f64; 3]>) {
        if self.zonal {
            let (v, g) = self.zonal_value_gradient(y, true);
            (v, Some(g))
        } else {
            (self.full_value(y), None)
        }
    }

    fn zonal_value_gradient(&self, y: &[f64], with_gradient: bool) -> (f64, [f64; 3]) {
        let rho = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let axis = self.frame[2];
        let t = if rho > 0.0 {
            ((axis[0] * y[0] + axis[1] * y[1] + axis[2] * y[2]) / rho).clamp(-1.0, 1.0)
        } else {
            1.0
        };
        let p = rho / self.b;
        let q = self.a / rho;
        let mut pl = 1.0;
        let mut ql = q;
        let (mut leg_prev, mut leg) = (0.0, 1.0);
        let (mut dleg_prev, mut dleg) = (0.0, 0.0);
        let mut value = 0.0;
        let mut d_rho = 0.0;
        let mut d_t = 0.0;
        for l in 0..=self.l_max {
            if l > 0 {
                let lf = l as f64;
                let next = ((2.0 * lf - 1.0) * t * leg - (lf - 1.0) * leg_prev) / lf;
                leg_prev = leg;
                leg = next;
                // P'_l = P'_{l-2} + (2l-1) P_{l-1}
                let dnext = dleg_prev + (2.0 * lf - 1.0) * leg_prev;
                dleg_prev = dleg;
                dleg = dnext;
                pl *= p;
                ql *= q;
            }
            let radial = self.zonal_a[l] * pl + self.zonal_b[l] * ql;
            value += radial * leg;
            if with_gradient {
                let lf = l as f64;
                d_rho += (self.zonal_a[l] * lf * pl - self.zonal_b[l] * (lf + 1.0) * ql) * leg;
                d_t += radial * dleg;
            }
        }
        let mut grad = [0.0; 3];
        if with_gradient && rho > 0.0 {
            for i in 0..3 {
                let yh = y[i] / rho;
                grad[i] = d_rho / rho * yh + d_t * (axis[i] - t * yh) / rho;
            }
        }
        (value, grad)
    }

    fn full_value(&self, y: &[f64]) -> f64 {
        let z = self.local(y);
        let rho = norm(&z);
        let x = if rho > 0.0 { (z[2] / rho).clamp(-1.0, 1.0) } else { 1.0 };
        let phi = z[1].atan2(z[0]);
        let mut leg = Vec::new();
        normalized_legendre(self.l_max, x, &mut leg);
        let p = rho / self.b;
        let q = self.a / rho;
        let mut value = 0.0;
        for c in &self.coefficients {
            let l = c.l as i32;
            let am = c.m.unsigned_abs() as usize;
            let radial = c.scaled_a * p.powi(l) + c.scaled_b * q.powi(l + 1);
            let ang = match c.m {
                0 => 1.0,
                m if m > 0 => 2f64.sqrt() * (am as f64 * phi).cos(),
                _ => 2f64.sqrt() * (am as f64 * phi).sin(),
            };
            value += radial * leg[c.l * (c.l + 1) / 2 + am] * ang;
        }
        value
    }
}

fn check_inputs(bub: &Bubble, geom: &AnnulusGeometry, opts: &ProjectionOptions) -> Result<()> {
    if geom.dim != 3 || bub.dim() != 3 {
        return Err(LabError::UnsupportedDimension(geom.dim.max(bub.dim())));
    }
    opts.validate()?;
    let r = norm(&bub.center);
    if r != 0.0 && !(r > geom.a && r < geom.b) {
        return Err(LabError::Geometry(format!(
            "bubble center at radius {r} is not strictly inside ({}, {})",
            geom.a, geom.b
        )));
    }
    Ok(())
}

/// Full real spherical-harmonic correction with the default quadrature.
pub fn harmonic_coeffs(bub: &Bubble, geom: &AnnulusGeometry, l_max: usize) -> Result<HarmonicCorrection> {
    harmonic_coeffs_with(bub, geom, &ProjectionOptions::with_l_max(l_max))
}

pub fn harmonic_coeffs_with(bub: &Bubble, geom: &AnnulusGeometry, opts: &ProjectionOptions) -> Result<HarmonicCorrection> {
    check_inputs(bub, geom, opts)?;
    let l_max = opts.l_max;
    let gl = GaussLegendre::new(opts.quad_polar);
    let nphi = opts.quad_azimuth;
    let dphi = 2.0 * PI / nphi as f64;
    let nmodes = (l_max + 1) * (l_max + 1);
    let project = |rho: f64| -> Vec<f64> {
        // c[l² + l + m]
        let mut c = vec![0.0; nmodes];
        let mut leg = Vec::new();
        let mut cos_m = vec![0.0; l_max + 1];
        let mut sin_m = vec![0.0; l_max + 1];
        for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
            let s = (1.0 - x * x).sqrt();
            cos_m.iter_mut().for_each(|v| *v = 0.0);
            sin_m.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..nphi {
                let phi = j as f64 * dphi;
                let u = bub.value(&[rho * s * phi.cos(), rho * s * phi.sin(), rho * x]);
                for m in 0..=l_max {
                    let (sn, cs) = (m as f64 * phi).sin_cos();
                    cos_m[m] += u * cs;
                    sin_m[m] += u * sn;
                }
            }
            normalized_legendre(l_max, x, &mut leg);
            for l in 0..=l_max {
                for m in 0..=l {
                    let pw = w * dphi * leg[l * (l + 1) / 2 + m];
                    if m == 0 {
                        c[l * l + l] += pw * cos_m[0];
                    } else {
                        c[l * l + l + m] += pw * 2f64.sqrt() * cos_m[m];
                        c[l * l + l - m] += pw * 2f64.sqrt() * sin_m[m];
                    }
                }
            }
        }
        c
    };
    let inner = project(geom.a);
    let outer = project(geom.b);
    let q = geom.a / geom.b;
    let mut coefficients = Vec::with_capacity(nmodes);
    for l in 0..=l_max {
        for m in -(l as i64)..=(l as i64) {
            let i = (l * l + l) as i64 + m;
            coefficients.push(ModeCoefficient::solve(l, m, q, inner[i as usize], outer[i as usize]));
        }
    }
    let frame = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut corr = HarmonicCorrection::new(geom, l_max, frame, false, coefficients);
    let check = GaussLegendre::new(opts.quad_polar + 1);
    let sphere_residual = |rho: f64| {
        let mut worst = 0.0_f64;
        let mut probes: Vec<[f64; 3]> = Vec::new();
        for &x in &check.nodes {
            let s = (1.0 - x * x).sqrt();
            for j in 0..nphi {
                let phi = (j as f64 + 0.5) * dphi;
                probes.push([rho * s * phi.cos(), rho * s * phi.sin(), rho * x]);
            }
        }
        probes.push(nearest_on_sphere(&bub.center, rho));
        for y in probes {
            worst = worst.max((bub.value(&y) - corr.full_value(&y)).abs());
        }
        worst
    };
    let (inner_residual, outer_residual) = (sphere_residual(geom.a), sphere_residual(geom.b));
    corr.inner_residual = inner_residual;
    corr.outer_residual = outer_residual;
    finish(corr, opts)
}

fn nearest_on_sphere(center: &[f64], rho: f64) -> [f64; 3] {
    let r = norm(center);
    if r == 0.0 {
        [0.0, 0.0, rho]
    } else {
        [rho * center[0] / r, rho * center[1] / r, rho * center[2] / r]
    }
}

fn finish(corr: HarmonicCorrection, opts: &ProjectionOptions) -> Result<HarmonicCorrection> {
    let residual = corr.boundary_residual();
    if !residual.is_finite() || residual > opts.tol {
        return Err(LabError::Truncation { residual, tol: opts.tol });
    }
    Ok(corr)
}

/// Zonal correction about the axis through the bubble center.
pub fn zonal_coeffs(bub: &Bubble, geom: &AnnulusGeometry, opts: &ProjectionOptions) -> Result<HarmonicCorrection> {
    check_inputs(bub, geom, opts)?;
    let r = norm(&bub.center);
    let axis = if r == 0.0 {
        [0.0, 0.0, 1.0]
    } else {
        [bub.center[0] / r, bub.center[1] / r, bub.center[2] / r]
    };
    let l_max = opts.l_max;
    let gl = GaussLegendre::new(opts.quad_polar);
    // data on |y| = ρ depends on t = cos γ only
    let data = |rho: f64, t: f64| bub.profile(rho * rho + r * r - 2.0 * rho * r * t);
    let project = |rho: f64| -> Vec<f64> {
        let mut c = vec![0.0; l_max + 1];
        for (&t, &w) in gl.nodes.iter().zip(&gl.weights) {
            let u = 2.0 * PI * w * data(rho, t);
            let (mut prev, mut cur) = (0.0, 1.0);
            for (l, cl) in c.iter_mut().enumerate() {
                if l > 0 {
                    let lf = l as f64;
                    let next = ((2.0 * lf - 1.0) * t * cur - (lf - 1.0) * prev) / lf;
                    prev = cur;
                    cur = next;
                }
                *cl += u * cur * ((2.0 * l as f64 + 1.0) / (4.0 * PI)).sqrt();
            }
        }
        c
    };
    let inner = project(geom.a);
    let outer = project(geom.b);
    let q = geom.a / geom.b;
    let coefficients = (0..=l_max)
        .map(|l| ModeCoefficient::solve(l, 0, q, inner[l], outer[l]))
        .collect();
    let mut corr = HarmonicCorrection::new(geom, l_max, frame_about(axis), true, coefficients);
    let sphere_residual = |rho: f64| {
        let probes = 4 * opts.quad_polar;
        (0..=probes)
            .map(|i| {
                let t = (PI * i as f64 / probes as f64).cos();
                let s = (1.0 - t * t).max(0.0).sqrt();
                let f = &corr.frame;
                let y: Vec<f64> = (0..3).map(|c| rho * (t * f[2][c] + s * f[0][c])).collect();
                (data(rho, t) - corr.value(&y)).abs()
            })
            .fold(0.0, f64::max)
    };
    let (inner_residual, outer_residual) = (sphere_residual(geom.a), sphere_residual(geom.b));
    corr.inner_residual = inner_residual;
    corr.outer_residual = outer_residual;
    finish(corr, opts)
}

/// `PU = U - h` on a three-dimensional annulus.
#[derive(Debug, Clone)]
pub struct ProjectedBubble {
    pub bubble: Bubble,
    pub correction: HarmonicCorrection,
    geom: AnnulusGeometry,
    opts: ProjectionOptions,
}

impl ProjectedBubble {
    pub fn new(bubble: Bubble, geom: &AnnulusGeometry) -> Result<Self> {
        Self::with_options(bubble, geom, &ProjectionOptions::default())
    }

    pub fn with_options(bubble: Bubble, geom: &AnnulusGeometry, opts: &ProjectionOptions) -> Result<Self> {
        let correction = zonal_coeffs(&bubble, geom, opts)?;
        Ok(Self {
            bubble,
            correction,
            geom: *geom,
            opts: *opts,
        })
    }

    /// Same geometry and options, different bubble.
    pub fn reproject(&self, bubble: Bubble) -> Result<Self> {
        Self::with_options(bubble, &self.geom, &self.opts)
    }

    /// Rotation by `angle` in the `(x1, x2)` plane, reusing the correction.
    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            bubble: Bubble {
                center: rotate_plane(&self.bubble.center, angle),
                lambda: self.bubble.lambda,
            },
            correction: self.correction.rotated(angle),
            geom: self.geom,
            opts: self.opts,
        }
    }

    pub fn geometry(&self) -> &AnnulusGeometry {
        &self.geom
    }

    pub fn options(&self) -> &ProjectionOptions {
        &self.opts
    }

    /// Harmonic part `h = U - PU`.
    pub fn correction_value(&self, y: &[f64]) -> f64 {
        self.correction.value(y)
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.bubble.value(y) - self.correction.value(y)
    }

    pub fn eval(&self, y: &[f64]) -> (f64, [f64; 3]) {
        let e = self.bubble.eval(y);
        let (h, gh) = self.correction.value_gradient(y);
        let gh = gh.expect("zonal correction has a gradient");
        (e.value - h, [e.gradient[0] - gh[0], e.gradient[1] - gh[1], e.gradient[2] - gh[2]])
    }
}

pub fn projected_bubble_eval(pb: &ProjectedBubble, y: &[f64]) -> (f64, [f64; 3]) {
    pb.eval(y)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionDefect {
    /// `sup h` over the samples.
    pub sup_h: f64,
    pub argmax: Vec<f64>,
    pub min_h: f64,
    /// `U` at the boundary point nearest the center, where `sup_∂Ω U` sits.
    pub boundary_sup_u: f64,
}

pub fn projection_defect(pb: &ProjectedBubble, samples: &[Vec<f64>]) -> ProjectionDefect {
    let mut sup_h = f64::NEG_INFINITY;
    let mut min_h = f64::INFINITY;
    let mut argmax = Vec::new();
    for y in samples {
        let h = pb.correction_value(y);
        if h > sup_h {
            sup_h = h;
            argmax = y.clone();
        }
        min_h = min_h.min(h);
    }
    let g = pb.geometry();
    let r = norm(&pb.bubble.center);
    let rho = if r - g.a <= g.b - r { g.a } else { g.b };
    ProjectionDefect {
        sup_h,
        argmax,
        min_h,
        boundary_sup_u: pb.bubble.value(&nearest_on_sphere(&pb.bubble.center, rho)),
    }
}

/// Samples on the ray through the center plus two tilted rays; the
/// maximum of `h` sits at the end of the central ray.
pub fn defect_samples(center: &[f64], geom: &AnnulusGeometry, per_ray: usize) -> Vec<Vec<f64>> {
    let r = norm(center);
    let axis = if r == 0.0 { [0.0, 0.0, 1.0] } else { [center[0] / r, center[1] / r, center[2] / r] };
    let f = frame_about(axis);
    let mut out = Vec::new();
    for tilt in [0.0f64, 0.2, 0.6] {
        let (s, c) = tilt.sin_cos();
        let dir: Vec<f64> = (0..3).map(|i| c * f[2][i] + s * f[0][i]).collect();
        for i in 0..per_ray {
            let rho = geom.a + geom.width() * i as f64 / (per_ray - 1) as f64;
            out.push(dir.iter().map(|d| rho * d).collect());
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DefectFit {
    pub lambdas: Vec<f64>,
    pub sup_h: Vec<f64>,
    /// Fitted exponent of `sup h ∝ λ^slope`.
    pub slope: f64,
    pub slope_stderr: f64,
}

/// Log-log regression of `sup h` against `λ` at a fixed center.
pub fn defect_exponent(center: &[f64], geom: &AnnulusGeometry, lambdas: &[f64], opts: &ProjectionOptions) -> Result<DefectFit> {
    let samples = defect_samples(center, geom, 65);
    let mut sups = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let pb = ProjectedBubble::with_options(Bubble::new(center.to_vec(), lambda)?, geom, opts)?;
        sups.push(projection_defect(&pb, &samples).sup_h);
    }
    let lx: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let ly: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    let (slope, _, se) = linear_fit(&lx, &ly);
    Ok(DefectFit {
        lambdas: lambdas.to_vec(),
        sup_h: sups,
        slope,
        slope_stderr: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> AnnulusGeometry {
        AnnulusGeometry::new(1.0, 2.0, 3).unwrap()
    }

    #[test]
    fn spherical_harmonics_are_orthonormal() {
        let l_max = 6;
        let gl = GaussLegendre::new(16);
        let nphi = 16;
        let mut leg = Vec::new();
        let n = (l_max + 1) * (l_max + 1);
        let mut gram = vec![vec![0.0; n]; n];
        for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
            normalized_legendre(l_max, x, &mut leg);
            for j in 0..nphi {
                let phi = 2.0 * PI * j as f64 / nphi as f64;
                let mut y = vec![0.0; n];
                for l in 0..=l_max {
                    for m in -(l as i64)..=(l as i64) {
                        let am = m.unsigned_abs() as usize;
                        let ang = match m {
                            0 => 1.0,
                            m if m > 0 => 2f64.sqrt() * (am as f64 * phi).cos(),
                            _ => 2f64.sqrt() * (am as f64 * phi).sin(),
                        };
                        y[((l * l + l) as i64 + m) as usize] = leg[l * (l + 1) / 2 + am] * ang;
                    }
                }
                for a in 0..n {
                    for b in 0..n {
                        gram[a][b] += w * 2.0 * PI / nphi as f64 * y[a] * y[b];
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a][b] - e).abs() < 1e-12, "({a},{b}) {}", gram[a][b]);
            }
        }
    }

    #[test]
    fn centered_bubble_only_has_the_constant_mode() {
        let g = geom();
        let bub = Bubble::new(vec![0.0; 3], 3.0).unwrap();
        let full = harmonic_coeffs(&bub, &g, 8).unwrap();
        let ua = bub.value(&[1.0, 0.0, 0.0]);
        let ub = bub.value(&[2.0, 0.0, 0.0]);
        // h = α + β/ρ with h(1) = ua, h(2) = ub
        let beta = 2.0 * (ua - ub);
        let alpha = ua - beta;
        let y00 = (0.25 / PI).sqrt();
        let c = full.coefficient(0, 0).unwrap();
        let (al, be) = c.alpha_beta(g.a, g.b);
        assert!((al * y00 - alpha).abs() < 1e-12);
        assert!((be * y00 - beta).abs() < 1e-12);
        for c in full.coefficients.iter().skip(1) {
            assert!(c.scaled_a.abs() < 1e-12 && c.scaled_b.abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn reflection_symmetry_kills_sine_modes() {
        let bub = Bubble::new(vec![1.5, 0.0, 0.0], 10.0).unwrap();
        let opts = ProjectionOptions {
            tol: f64::INFINITY,
            ..ProjectionOptions::with_l_max(16)
        };
        let full = harmonic_coeffs_with(&bub, &geom(), &opts).unwrap();
        for c in full.coefficients.iter().filter(|c| c.m < 0) {
            assert!(c.scaled_a.abs() < 1e-13 && c.scaled_b.abs() < 1e-13, "{c:?}");
        }
        assert!(full.coefficients.iter().any(|c| c.m > 0 && c.scaled_a.abs() > 1e-3));
    }

    #[test]
    fn desk_scale_boundary_residual() {
        let bub = Bubble::new(vec![1.5, 0.0, 0.0], 50.0).unwrap();
        let full = harmonic_coeffs(&bub, &geom(), 48).unwrap();
        assert!(full.boundary_residual() < 1e-6, "{}", full.boundary_residual());
        assert!(full.system_residual() < 1e-14);
    }

    #[test]
    fn zonal_and_full_routes_agree() {
        let g = geom();
        let bub = Bubble::new(vec![1.0, 0.9, -0.5], 20.0).unwrap();
        let full = harmonic_coeffs(&bub, &g, 48).unwrap();
        let zonal = zonal_coeffs(&bub, &g, &ProjectionOptions::default()).unwrap();
        for y in [[1.2, 0.1, 0.3], [-1.0, 0.9, 0.2], [0.3, 0.4, 1.7], [1.0, 0.9, -0.5]] {
            let (a, b) = (full.value(&y), zonal.value(&y));
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn truncation_converges_when_degree_doubles() {
        let g = geom();
        let bub = Bubble::new(vec![0.0, 1.3, 0.0], 20.0).unwrap();
        let loose = ProjectionOptions {
            tol: f64::INFINITY,
            ..ProjectionOptions::with_l_max(8)
        };
        let r8 = zonal_coeffs(&bub, &g, &loose).unwrap().boundary_residual();
        let r16 = zonal_coeffs(&bub, &g, &ProjectionOptions { l_max: 16, ..loose }).unwrap().boundary_residual();
        assert!(r8 >= 4.0 * r16, "{r8} {r16}");
    }

    #[test]
    fn too_small_degree_is_rejected() {
        let bub = Bubble::new(vec![1.1, 0.0, 0.0], 20.0).unwrap();
        let opts = ProjectionOptions::with_l_max(4);
        assert!(matches!(zonal_coeffs(&bub, &geom(), &opts), Err(LabError::Truncation { .. })));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let g4 = AnnulusGeometry::new(1.0, 2.0, 4).unwrap();
        let bub = Bubble::new(vec![1.5, 0.0, 0.0, 0.0], 10.0).unwrap();
        assert!(matches!(harmonic_coeffs(&bub, &g4, 8), Err(LabError::UnsupportedDimension(4))));
    }

    #[test]
    fn boundary_values_vanish_and_interior_is_positive() {
        let g = geom();
        let bub = Bubble::new(vec![0.0, 0.0, 1.5], 50.0).unwrap();
        let pb = ProjectedBubble::new(bub.clone(), &g).unwrap();
        // PU is tiny near the far side of the boundary, so strict positivity
        // is checked with a truncation error well below those values
        let fine = ProjectedBubble::with_options(bub, &g, &ProjectionOptions::with_l_max(96)).unwrap();
        let eps = pb.correction.boundary_residual();
        let mut s = 88172645463325252u64;
        let mut rnd = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut interior = 0;
        while interior < 1000 {
            let v = [4.0 * rnd() - 2.0, 4.0 * rnd() - 2.0, 4.0 * rnd() - 2.0];
            let rho = norm(&v);
            if rho <= 1.0 || rho >= 2.0 {
                continue;
            }
            interior += 1;
            for r in [1.0, 2.0] {
                let y = [r * v[0] / rho, r * v[1] / rho, r * v[2] / rho];
                assert!(pb.value(&y).abs() < 1e-6);
            }
            assert!(fine.value(&v) > 0.0, "PU({v:?}) = {}", fine.value(&v));
            let h = pb.correction_value(&v);
            assert!(h >= -eps && pb.value(&v) >= -eps);
            assert!(pb.value(&v) <= pb.bubble.value(&v) + eps);
        }
    }

    #[test]
    fn projected_bubble_solves_the_equation() {
        let g = geom();
        let pb = ProjectedBubble::new(Bubble::new(vec![1.5, 0.0, 0.0], 50.0).unwrap(), &g).unwrap();
        let h = 1e-4;
        for y in [[1.5, 0.0, 0.0], [1.51, 0.01, 0.0], [1.49, -0.005, 0.01]] {
            let mut lap = -6.0 * pb.value(&y);
            for i in 0..3 {
                let mut z = y;
                z[i] += h;
                lap += pb.value(&z);
                z[i] -= 2.0 * h;
                lap += pb.value(&z);
            }
            lap /= h * h;
            let rhs = pb.bubble.value(&y).powi(5);
            assert!((lap + rhs).abs() < 1e-4 * rhs, "{lap} vs {rhs}");
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let g = geom();
        let pb = ProjectedBubble::new(Bubble::new(vec![0.4, 1.4, 0.3], 15.0).unwrap(), &g).unwrap();
        for y in [[1.2, 0.5, 0.1], [0.3, -1.4, 0.6], [0.4, 1.4, 0.3]] {
            let (_, grad) = pb.eval(&y);
            let (_, gh) = pb.correction.value_gradient(&y);
            let gh = gh.unwrap();
            for i in 0..3 {
                let d = 1e-6;
                let mut p = y;
                let mut m = y;
                p[i] += d;
                m[i] -= d;
                let fd = (pb.correction_value(&p) - pb.correction_value(&m)) / (2.0 * d);
                assert!((fd - gh[i]).abs() < 1e-7, "{fd} vs {}", gh[i]);
                let fdu = (pb.value(&p) - pb.value(&m)) / (2.0 * d);
                assert!((fdu - grad[i]).abs() < 1e-5 * grad.iter().map(|v| v.abs()).fold(1.0, f64::max));
            }
        }
    }

    #[test]
    fn rotated_copy_matches_a_fresh_projection() {
        let g = geom();
        let pb = ProjectedBubble::new(Bubble::new(vec![1.45, 0.0, 0.0], 30.0).unwrap(), &g).unwrap();
        let angle = 2.0 * PI / 7.0;
        let rot = pb.rotated(angle);
        let fresh = pb.reproject(Bubble::new(rot.bubble.center.clone(), 30.0).unwrap()).unwrap();
        for y in [[0.2, 1.3, 0.4], [-1.1, 0.9, -0.2], [1.0, 1.0, 0.7]] {
            let (a, b) = (rot.correction_value(&y), fresh.correction_value(&y));
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn defect_peaks_on_the_nearest_sphere() {
        let g = geom();
        let pb = ProjectedBubble::new(Bubble::new(vec![1.4, 0.0, 0.0], 40.0).unwrap(), &g).unwrap();
        let d = projection_defect(&pb, &defect_samples(&[1.4, 0.0, 0.0], &g, 65));
        assert!((d.sup_h - d.boundary_sup_u).abs() < 1e-6);
        assert!((d.argmax[0] - 1.0).abs() < 1e-12);
        assert!(d.min_h >= 0.0);
    }

    #[test]
    fn defect_decays_like_inverse_square_root() {
        let fit = defect_exponent(&[1.5, 0.0, 0.0], &geom(), &[25.0, 50.0, 100.0, 200.0], &ProjectionOptions::default()).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.05, "{fit:?}");
    }
}
