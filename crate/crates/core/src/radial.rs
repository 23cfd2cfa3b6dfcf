//! Positive radial solution of `-Δu = u^p` on the annulus, `u = 0` on both
//! spheres, computed by shooting on the initial slope `u'(a)`.

use std::io::Write;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::AnnulusGeometry;
use crate::numerics::ode::{integrate, Control, Step, StepControl};
use crate::numerics::quadrature::simpson_uniform;
use crate::numerics::{golden_max, hermite, hermite5};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ShotClass {
    CrossesZeroBeforeB,
    PositiveAtB,
    HitsZeroAtB,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialShot {
    pub slope: f64,
    pub class: ShotClass,
    /// Accepted integrator states `(r, u, u')`, starting at `(a, 0, s)`.
    pub trace: Vec<[f64; 3]>,
    /// First interior zero, if the trajectory crossed before `b`.
    pub crossing: Option<f64>,
}

impl RadialShot {
    pub fn end(&self) -> [f64; 3] {
        *self.trace.last().expect("trace is never empty")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    pub ctrl: StepControl,
    /// `|u(b)|` below this counts as hitting zero at `b`.
    pub zero_tol: f64,
    /// Drop the `|u|^{p-1}u` term (harmonic sanity checks).
    pub linear_only: bool,
    /// Keep integrating through sign changes instead of stopping.
    pub through_zeros: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            ctrl: StepControl::default(),
            zero_tol: 1e-10,
            linear_only: false,
            through_zeros: false,
        }
    }
}

fn rhs(geom: &AnnulusGeometry, linear_only: bool) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] {
    let nm1 = geom.n() - 1.0;
    let p = geom.p();
    move |r, y| {
        let force = if linear_only { 0.0 } else { y[0].abs().powf(p - 1.0) * y[0] };
        [y[1], -nm1 / r * y[1] - force]
    }
}

fn locate_zero(step: &Step<2>) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t1);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if step.interpolate(mid)[0] > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn shoot(geom: &AnnulusGeometry, slope: f64) -> Result<RadialShot> {
    shoot_with(geom, slope, &ShootOptions::default(), &[])
}

/// Integrates `u'' = -(N-1)/r u' - |u|^{p-1}u` from `(a, 0, s)`. Stops at
/// the first sign change of `u` or at `r = b`; `stops` are abscissae the
/// integrator must land on (they appear in the trace).
pub fn shoot_with(geom: &AnnulusGeometry, slope: f64, opts: &ShootOptions, stops: &[f64]) -> Result<RadialShot> {
    if !(slope > 0.0) || !slope.is_finite() {
        return Err(LabError::Config(format!("shooting slope must be positive, got {slope}")));
    }
    let f = rhs(geom, opts.linear_only);
    let mut trace = vec![[geom.a, 0.0, slope]];
    let mut crossing = None;
    let b = geom.b;
    let through = opts.through_zeros;
    integrate(f, geom.a, [0.0, slope], b, stops, opts.ctrl, |step| {
        if !through && step.y0[0] > 0.0 && step.y1[0] <= 0.0 {
            let at_end = step.t1 >= b && step.y1[0].abs() < opts.zero_tol;
            if !at_end {
                let rz = locate_zero(step);
                crossing = Some(rz);
                trace.push([step.t1, step.y1[0], step.y1[1]]);
                return Control::Stop;
            }
        }
        trace.push([step.t1, step.y1[0], step.y1[1]]);
        Control::Continue
    })?;
    let last = *trace.last().unwrap();
    let class = if crossing.is_some() {
        ShotClass::CrossesZeroBeforeB
    } else if last[1].abs() < opts.zero_tol {
        ShotClass::HitsZeroAtB
    } else if last[1] > 0.0 {
        ShotClass::PositiveAtB
    } else {
        ShotClass::CrossesZeroBeforeB
    };
    Ok(RadialShot {
        slope,
        class,
        trace,
        crossing,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RadialOptions {
    /// Bisection target for `|u(b)|`. An exhausted bracket is accepted below `tol * max(1, sup u)`.
    pub tol: f64,
    /// Intervals of the uniform output grid.
    pub intervals: usize,
    pub ctrl: StepControl,
    /// Bracket sweep uses slopes `2^m`, `m` in this range.
    pub slope_exponents: (i32, i32),
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            intervals: 4096,
            ctrl: StepControl {
                rtol: 1e-11,
                atol: 1e-12,
                ..StepControl::default()
            },
            slope_exponents: (-20, 60),
        }
    }
}

/// Sampled `u₀` on a uniform grid with cubic Hermite evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct RadialSolution {
    pub geom: AnnulusGeometry,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub slope: f64,
    /// `max |u'' + (N-1)/r u' + u^p|` on the grid, divided by `max u^p`.
    pub ode_residual: f64,
    /// `|u(b)|` of the accepted shot.
    pub boundary_residual: f64,
}

impl RadialSolution {
    pub fn spacing(&self) -> f64 {
        self.r[1] - self.r[0]
    }

    /// `(u₀(r), u₀'(r))`; zero outside `[a, b]`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let a = self.geom.a;
        let b = self.geom.b;
        if r < a || r > b {
            return (0.0, 0.0);
        }
        let h = self.spacing();
        let n = self.r.len() - 1;
        let i = (((r - a) / h).floor() as usize).min(n - 1);
        hermite(self.r[i], self.r[i + 1], self.u[i], self.u[i + 1], self.du[i], self.du[i + 1], r)
    }

    /// `(u₀, u₀', u₀'')` from a quintic Hermite interpolant whose knot
    /// second derivatives come from the equation itself. C² across knots,
    /// which finite-difference Laplacians and Hessians need.
    pub fn eval2(&self, r: f64) -> [f64; 3] {
        let a = self.geom.a;
        let b = self.geom.b;
        if r < a || r > b {
            return [0.0; 3];
        }
        let h = self.spacing();
        let n = self.r.len() - 1;
        let i = (((r - a) / h).floor() as usize).min(n - 1);
        let nm1 = self.geom.n() - 1.0;
        let p = self.geom.p();
        let dd = |j: usize| -nm1 / self.r[j] * self.du[j] - self.u[j].abs().powf(p - 1.0) * self.u[j];
        hermite5(
            self.r[i],
            self.r[i + 1],
            [self.u[i], self.u[i + 1]],
            [self.du[i], self.du[i + 1]],
            [dd(i), dd(i + 1)],
            r,
        )
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn max_value(&self) -> f64 {
        self.u.iter().cloned().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,u,du")?;
        for i in 0..self.r.len() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.r[i], self.u[i], self.du[i])?;
        }
        Ok(())
    }
}

/// Geometric sweep `s = 2^m` for a (positive, crossing) slope bracket.
pub fn bracket_slope(geom: &AnnulusGeometry, opts: &RadialOptions) -> Result<(f64, f64)> {
    let sopts = ShootOptions {
        ctrl: opts.ctrl,
        zero_tol: opts.tol,
        ..ShootOptions::default()
    };
    let mut last_positive = None;
    for m in opts.slope_exponents.0..=opts.slope_exponents.1 {
        let s = 2f64.powi(m);
        match shoot_with(geom, s, &sopts, &[])?.class {
            ShotClass::PositiveAtB | ShotClass::HitsZeroAtB => last_positive = Some(s),
            ShotClass::CrossesZeroBeforeB => {
                if let Some(lo) = last_positive {
                    return Ok((lo, s));
                }
                return Err(LabError::NoSolution(format!(
                    "smallest slope 2^{m} already crosses zero before b"
                )));
            }
        }
    }
    Err(LabError::NoSolution(
        "no crossing slope found in the configured sweep".into(),
    ))
}

pub fn solve_u0(geom: &AnnulusGeometry, tol: f64) -> Result<RadialSolution> {
    solve_u0_with(
        geom,
        &RadialOptions {
            tol,
            ..RadialOptions::default()
        },
    )
}

/// Bisection on the slope between a positive and a crossing shot, then one
/// dense shot on the uniform output grid.
pub fn solve_u0_with(geom: &AnnulusGeometry, opts: &RadialOptions) -> Result<RadialSolution> {
    if !(opts.tol > 0.0) {
        return Err(LabError::Config(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if opts.intervals < 8 {
        return Err(LabError::Config("radial grid needs at least 8 intervals".into()));
    }
    let (mut lo, mut hi) = bracket_slope(geom, opts)?;
    let sopts = ShootOptions {
        ctrl: opts.ctrl,
        zero_tol: opts.tol,
        ..ShootOptions::default()
    };
    let mut best = lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let shot = shoot_with(geom, mid, &sopts, &[])?;
        match shot.class {
            ShotClass::CrossesZeroBeforeB => hi = mid,
            ShotClass::PositiveAtB => {
                lo = mid;
                best = mid;
                if shot.end()[1] < opts.tol {
                    break;
                }
            }
            ShotClass::HitsZeroAtB => {
                best = mid;
                break;
            }
        }
    }

    let n = opts.intervals;
    let h = geom.width() / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| geom.a + i as f64 * h).collect();
    let mut u = vec![0.0; n + 1];
    let mut du = vec![0.0; n + 1];
    u[0] = 0.0;
    du[0] = best;
    let dense = ShootOptions {
        through_zeros: true,
        ..sopts
    };
    let shot = shoot_with(geom, best, &dense, &grid[1..])?;
    let mut filled = vec![false; n + 1];
    filled[0] = true;
    for s in &shot.trace {
        let idx = ((s[0] - geom.a) / h).round() as usize;
        if idx <= n && (grid[idx] - s[0]).abs() <= 1e-12 * s[0].abs().max(1.0) {
            u[idx] = s[1];
            du[idx] = s[2];
            filled[idx] = true;
        }
    }
    if let Some(i) = filled.iter().position(|f| !f) {
        return Err(LabError::Integration(format!("dense output missed grid node {i}")));
    }
    let boundary_residual = u[n].abs();
    let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if boundary_residual >= opts.tol * scale {
        return Err(LabError::NoSolution(format!(
            "bisection stalled with |u(b)| = {boundary_residual:.3e}"
        )));
    }
    if u[1..n].iter().any(|&v| v <= 0.0) {
        return Err(LabError::NoSolution("shot is not positive inside the annulus".into()));
    }

    let ode_residual = ode_residual(geom, &grid, &u, &du);
    Ok(RadialSolution {
        geom: *geom,
        r: grid,
        u,
        du,
        slope: best,
        ode_residual,
        boundary_residual,
    })
}

/// Scaled residual of the radial ODE with `u''` from fourth-order
/// differences of the stored `u'`.
fn ode_residual(geom: &AnnulusGeometry, r: &[f64], u: &[f64], du: &[f64]) -> f64 {
    let n = r.len();
    let h = r[1] - r[0];
    let p = geom.p();
    let nm1 = geom.n() - 1.0;
    let d2 = |i: usize| -> f64 {
        if i >= 2 && i + 2 < n {
            (-du[i + 2] + 8.0 * du[i + 1] - 8.0 * du[i - 1] + du[i - 2]) / (12.0 * h)
        } else if i < 2 {
            let f = |j: usize| du[j];
            if i == 0 {
                (-25.0 * f(0) + 48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4)) / (12.0 * h)
            } else {
                (-3.0 * f(0) - 10.0 * f(1) + 18.0 * f(2) - 6.0 * f(3) + f(4)) / (12.0 * h)
            }
        } else {
            let f = |j: usize| du[n - 1 - j];
            if i == n - 1 {
                -(-25.0 * f(0) + 48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4)) / (12.0 * h)
            } else {
                -(-3.0 * f(0) - 10.0 * f(1) + 18.0 * f(2) - 6.0 * f(3) + f(4)) / (12.0 * h)
            }
        }
    };
    let scale = u.iter().map(|v| v.abs().powf(p)).fold(0.0, f64::max).max(1e-300);
    (0..n)
        .map(|i| (d2(i) + nm1 / r[i] * du[i] + u[i].abs().powf(p - 1.0) * u[i]).abs())
        .fold(0.0, f64::max)
        / scale
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PeakReport {
    /// Maximizer of `r^{(N-2)/2} u₀(r)`.
    pub r0: f64,
    /// Maximum value `r₀^{(N-2)/2} u₀(r₀)`.
    pub m0: f64,
    /// Set when the maximum is flat over several grid nodes.
    pub flat: bool,
}

pub fn find_r0(sol: &RadialSolution) -> PeakReport {
    let half = 0.5 * (sol.geom.n() - 2.0);
    let g = |r: f64| r.powf(half) * sol.value(r);
    let vals: Vec<f64> = sol.r.iter().zip(&sol.u).map(|(r, u)| r.powf(half) * u).collect();
    let (imax, &vmax) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    let thresh = vmax * (1.0 - 1e-12);
    let mut first = imax;
    while first > 0 && vals[first - 1] >= thresh {
        first -= 1;
    }
    let mut last = imax;
    while last + 1 < vals.len() && vals[last + 1] >= thresh {
        last += 1;
    }
    if last - first > 2 {
        let mid = 0.5 * (sol.r[first] + sol.r[last]);
        return PeakReport {
            r0: mid,
            m0: g(mid),
            flat: true,
        };
    }
    let lo = sol.r[imax.saturating_sub(1)];
    let hi = sol.r[(imax + 1).min(sol.r.len() - 1)];
    let r0 = golden_max(g, lo, hi, 1e-13);
    PeakReport {
        r0,
        m0: g(r0),
        flat: false,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RadialEnergy {
    /// `I(u₀)`.
    pub energy: f64,
    /// `∫_Ω |∇u₀|²`.
    pub dirichlet: f64,
    /// `∫_Ω u₀^{2*}`.
    pub power: f64,
}

/// `I(u₀) = ω_{N-1} [½∫u₀'² r^{N-1} - (1/2*)∫u₀^{2*} r^{N-1}]`.
pub fn radial_energy(sol: &RadialSolution) -> RadialEnergy {
    let g = &sol.geom;
    let nm1 = g.n() - 1.0;
    let q = g.critical_exponent();
    let w = g.sphere_area();
    let grad: Vec<f64> = sol.r.iter().zip(&sol.du).map(|(r, d)| d * d * r.powf(nm1)).collect();
    let pow: Vec<f64> = sol.r.iter().zip(&sol.u).map(|(r, u)| u.abs().powf(q) * r.powf(nm1)).collect();
    let dirichlet = w * simpson_uniform(&grad, sol.spacing());
    let power = w * simpson_uniform(&pow, sol.spacing());
    RadialEnergy {
        energy: 0.5 * dirichlet - power / q,
        dirichlet,
        power,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> AnnulusGeometry {
        AnnulusGeometry::new(1.0, 2.0, 3).unwrap()
    }

    #[test]
    fn zero_slope_is_rejected() {
        assert!(shoot(&geom(), 0.0).is_err());
        assert!(shoot(&geom(), -1.0).is_err());
    }

    #[test]
    fn small_and_large_slopes_classify() {
        let g = geom();
        assert_eq!(shoot(&g, 1e-3).unwrap().class, ShotClass::PositiveAtB);
        let big = shoot(&g, 1e3).unwrap();
        assert_eq!(big.class, ShotClass::CrossesZeroBeforeB);
        assert!(big.crossing.unwrap() < g.b);
    }

    #[test]
    fn harmonic_trace_matches_closed_form() {
        let g = geom();
        let s = 0.7;
        let opts = ShootOptions {
            linear_only: true,
            ..Default::default()
        };
        let shot = shoot_with(&g, s, &opts, &[]).unwrap();
        for t in &shot.trace {
            let exact = s * g.a * g.a * (1.0 / g.a - 1.0 / t[0]);
            assert!((t[1] - exact).abs() < 1e-10, "r = {} u = {} exact {exact}", t[0], t[1]);
        }
    }

    #[test]
    fn solution_vanishes_at_both_ends_and_is_positive() {
        let sol = solve_u0(&geom(), 1e-10).unwrap();
        assert_eq!(sol.u[0], 0.0);
        assert!(sol.u.last().unwrap().abs() < 1e-10);
        assert!(sol.u[1..sol.u.len() - 1].iter().all(|&v| v > 0.0));
        assert!(sol.ode_residual < 1e-8, "residual {}", sol.ode_residual);
    }

    #[test]
    fn peak_is_interior() {
        let sol = solve_u0(&geom(), 1e-10).unwrap();
        let pk = find_r0(&sol);
        assert!(pk.r0 > 1.0 && pk.r0 < 2.0 && !pk.flat);
        assert!(pk.m0 > 0.0);
    }

    #[test]
    fn weak_form_energy_identity() {
        let sol = solve_u0(&geom(), 1e-10).unwrap();
        let e = radial_energy(&sol);
        assert!(((e.dirichlet - e.power) / e.power).abs() < 1e-6);
        assert!((e.energy - e.power / 3.0).abs() / e.energy < 1e-6);
    }

    #[test]
    fn quintic_evaluation_is_consistent() {
        let sol = solve_u0(&geom(), 1e-10).unwrap();
        let h = 1e-4;
        for i in 1..50 {
            let r = 1.0 + i as f64 / 50.0 + 1.3e-3;
            let [u, du, ddu] = sol.eval2(r);
            let (uc, duc) = sol.eval(r);
            assert!((u - uc).abs() < 1e-10 && (du - duc).abs() < 1e-8, "{} {}", u - uc, du - duc);
            let fd = (sol.eval2(r + h)[0] - 2.0 * u + sol.eval2(r - h)[0]) / (h * h);
            assert!((fd - ddu).abs() < 1e-5 * (1.0 + ddu.abs()), "{fd} {ddu}");
            assert!((ddu + 2.0 / r * du + u.powi(5)).abs() < 1e-8 * (1.0 + u.powi(5)), "{} at {r}", ddu + 2.0 / r * du + u.powi(5));
        }
    }

    #[test]
    fn csv_has_header_and_all_nodes() {
        let sol = solve_u0_with(
            &geom(),
            &RadialOptions {
                intervals: 64,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,u,du\n"));
        assert_eq!(text.lines().count(), 66);
    }
}
