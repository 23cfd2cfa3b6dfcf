//! Reduced energy: bubble constants, the landscape `F(ℓ, r)`, its critical
//! point, and the energy of the full ansatz by sector cubature.
//!
//! ```text
//! F(ℓ, r) = B u₀(r) / ℓ^{(N-2)/2} - C / (r^{N-2} ℓ^{N-2})
//! ```

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::checked_beta;

use crate::ansatz::{assemble_ansatz_with, odd_power, Ansatz, AnsatzHooks, AnsatzOptions, AnsatzPoint};
use crate::bubble::{bubble_constant, far_field_coefficient};
use crate::error::{LabError, Result};
use crate::geometry::{distance, unit_sphere_area, AnnulusGeometry};
use crate::numerics::linear_fit;
use crate::numerics::quadrature::{hcubature, Box3, GaussLegendre, HcubatureOptions};
use crate::radial::{radial_energy, RadialSolution};

/// Relative accuracy demanded of the bubble constants.
pub const CONSTANT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReducedEnergyConstants {
    pub dim: usize,
    /// `(1/N) ∫ U_{0,1}^{2*}`.
    pub a: f64,
    /// `∫ U_{0,1}^{p}`.
    pub b: f64,
    /// Pair interaction coefficient `c∞ B / 2`.
    pub c: f64,
    pub a_closed: f64,
    pub b_closed: f64,
    pub c_closed: f64,
    /// Relative quadrature error estimates.
    pub a_error: f64,
    pub b_error: f64,
    pub c_error: f64,
    /// `c∞` in `U_{0,1}(y) ~ c∞ |y|^{2-N}`.
    pub far_field: f64,
}

/// `∫_0^∞ ρ^{N-1} (1+ρ²)^{-s} dρ` after `ρ = tan θ`, with a relative error
/// estimate from doubling the panel count.
fn radial_power_integral(dim: usize, s: f64) -> (f64, f64) {
    let n = dim as f64;
    let e_sin = n - 1.0;
    let e_cos = 2.0 * s - n - 1.0;
    let gl = GaussLegendre::new(20);
    let composite = |panels: usize| {
        let w = 0.5 * PI / panels as f64;
        (0..panels)
            .map(|i| {
                gl.integrate(i as f64 * w, (i + 1) as f64 * w, |t| t.sin().powf(e_sin) * t.cos().powf(e_cos))
            })
            .sum::<f64>()
    };
    let coarse = composite(16);
    let fine = composite(32);
    (fine, ((fine - coarse) / fine).abs())
}

/// `∫_{ℝ^N} U_{0,1}^q` by radial quadrature and in closed form.
pub fn bubble_power_integral(dim: usize, q: f64) -> Result<(f64, f64, f64)> {
    let n = dim as f64;
    let s = (n - 2.0) * q / 2.0;
    if !(s > n / 2.0) {
        return Err(LabError::Quadrature(format!("U^{q} is not integrable in dimension {dim}")));
    }
    let pref = unit_sphere_area(dim) * bubble_constant(dim).powf(q);
    let (val, err) = radial_power_integral(dim, s);
    let beta = checked_beta(n / 2.0, s - n / 2.0).map_err(|e| LabError::Quadrature(e.to_string()))?;
    Ok((pref * val, pref * 0.5 * beta, err))
}

pub fn compute_constants(geom: &AnnulusGeometry) -> Result<ReducedEnergyConstants> {
    let dim = geom.dim;
    let n = geom.n();
    let (s2, s2_closed, e2) = bubble_power_integral(dim, geom.critical_exponent())?;
    let (sp, sp_closed, ep) = bubble_power_integral(dim, geom.p())?;
    let worst = e2.max(ep);
    if worst > CONSTANT_TOL {
        return Err(LabError::Quadrature(format!(
            "bubble constants resolved only to {worst:.2e} relative"
        )));
    }
    let cinf = far_field_coefficient(dim);
    Ok(ReducedEnergyConstants {
        dim,
        a: s2 / n,
        b: sp,
        c: 0.5 * cinf * sp,
        a_closed: s2_closed / n,
        b_closed: sp_closed,
        c_closed: 0.5 * cinf * sp_closed,
        a_error: e2,
        b_error: ep,
        c_error: ep,
        far_field: cinf,
    })
}

pub fn reduced_f(ell: f64, r: f64, consts: &ReducedEnergyConstants, radial: &RadialSolution) -> f64 {
    let m = (consts.dim as f64 - 2.0) / 2.0;
    let u = radial.eval2(r)[0];
    consts.b * u / ell.powf(m) - consts.c / (r.powf(2.0 * m) * ell.powf(2.0 * m))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LandscapeOptions {
    /// Log-spaced `ℓ` grid bounds.
    pub ell_range: [f64; 2],
    /// `r` grid bounds; `None` means `[a + 0.05 w, b - 0.05 w]` for width `w`.
    pub r_range: Option<[f64; 2]>,
    pub ell_points: usize,
    pub r_points: usize,
    /// Central-difference steps, relative in `ℓ` and absolute in `r`.
    pub fd_ell: f64,
    pub fd_r: f64,
    pub grad_tol: f64,
    pub max_newton: usize,
}

impl Default for LandscapeOptions {
    fn default() -> Self {
        Self {
            ell_range: [1e-2, 1e2],
            r_range: None,
            ell_points: 201,
            r_points: 201,
            fd_ell: 1e-4,
            fd_r: 1e-4,
            grad_tol: 1e-6,
            max_newton: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyLandscape {
    /// Log-spaced.
    pub ells: Vec<f64>,
    pub rs: Vec<f64>,
    /// `values[i * rs.len() + j] = F(ells[i], rs[j])`.
    pub values: Vec<f64>,
    pub argmax: (usize, usize),
    pub on_boundary: bool,
}

impl EnergyLandscape {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.rs.len() + j]
    }

    /// Three columns `ℓ r F`, blank line between `ℓ` rows.
    pub fn write_plot_data<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# ell r F")?;
        for (i, ell) in self.ells.iter().enumerate() {
            for (j, r) in self.rs.iter().enumerate() {
                writeln!(w, "{:.17e} {:.17e} {:.17e}", ell, r, self.value(i, j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn energy_landscape(consts: &ReducedEnergyConstants, radial: &RadialSolution, opts: &LandscapeOptions) -> Result<EnergyLandscape> {
    let g = &radial.geom;
    let [e_lo, e_hi] = opts.ell_range;
    if !(e_lo > 0.0 && e_lo < e_hi) || opts.ell_points < 3 || opts.r_points < 3 {
        return Err(LabError::Config("landscape needs 0 < ell_min < ell_max and at least 3 points per axis".into()));
    }
    let [r_lo, r_hi] = opts.r_range.unwrap_or([g.a + 0.05 * g.width(), g.b - 0.05 * g.width()]);
    if !(r_lo > g.a && r_lo < r_hi && r_hi < g.b) {
        return Err(LabError::Config(format!("r range [{r_lo}, {r_hi}] must be a nonempty subinterval of (a, b)")));
    }
    let (l_lo, l_hi) = (e_lo.ln(), e_hi.ln());
    let ells: Vec<f64> = (0..opts.ell_points)
        .map(|i| (l_lo + (l_hi - l_lo) * i as f64 / (opts.ell_points - 1) as f64).exp())
        .collect();
    let rs: Vec<f64> = (0..opts.r_points)
        .map(|j| r_lo + (r_hi - r_lo) * j as f64 / (opts.r_points - 1) as f64)
        .collect();
    let values: Vec<f64> = ells
        .par_iter()
        .flat_map_iter(|&ell| rs.iter().map(move |&r| reduced_f(ell, r, consts, radial)))
        .collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });
    let argmax = (best / rs.len(), best % rs.len());
    let on_boundary = argmax.0 == 0 || argmax.0 == ells.len() - 1 || argmax.1 == 0 || argmax.1 == rs.len() - 1;
    Ok(EnergyLandscape {
        ells,
        rs,
        values,
        argmax,
        on_boundary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub ell: f64,
    pub r: f64,
    pub value: f64,
    /// Central-difference gradient `(∂_ℓ F, ∂_r F)`.
    pub gradient: [f64; 2],
    pub grad_norm: f64,
    pub hessian: [[f64; 2]; 2],
    pub hessian_eigenvalues: [f64; 2],
    pub newton_iterations: usize,
    /// `ℓ` from solving `∂_ℓ F = 0` by hand: `(2C / (B u₀ r^{N-2}))^{2/(N-2)}`.
    pub ell_stationary: f64,
    /// The same expression with `B` and `C` exchanged.
    pub ell_swapped: f64,
    pub stationary_discrepancy: f64,
    pub swapped_discrepancy: f64,
    /// `"stationary"` or `"swapped"`, whichever lies closer to `ell`.
    pub matching_form: String,
}

fn gradient_fd(f: &dyn Fn(f64, f64) -> f64, ell: f64, r: f64, hl: f64, hr: f64) -> [f64; 2] {
    [
        (f(ell + hl, r) - f(ell - hl, r)) / (2.0 * hl),
        (f(ell, r + hr) - f(ell, r - hr)) / (2.0 * hr),
    ]
}

fn hessian_fd(f: &dyn Fn(f64, f64) -> f64, ell: f64, r: f64, hl: f64, hr: f64) -> [[f64; 2]; 2] {
    let c = f(ell, r);
    let fll = (f(ell + hl, r) - 2.0 * c + f(ell - hl, r)) / (hl * hl);
    let frr = (f(ell, r + hr) - 2.0 * c + f(ell, r - hr)) / (hr * hr);
    let flr = (f(ell + hl, r + hr) - f(ell + hl, r - hr) - f(ell - hl, r + hr) + f(ell - hl, r - hr)) / (4.0 * hl * hr);
    [[fll, flr], [flr, frr]]
}

fn sym_eigenvalues(h: [[f64; 2]; 2]) -> [f64; 2] {
    let m = 0.5 * (h[0][0] + h[1][1]);
    let d = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[0][1]).sqrt();
    [m - d, m + d]
}

/// Grid search over the landscape, then Newton on the central-difference
/// gradient.
pub fn critical_point(consts: &ReducedEnergyConstants, radial: &RadialSolution, opts: &LandscapeOptions) -> Result<CriticalPoint> {
    let land = energy_landscape(consts, radial, opts)?;
    let (i, j) = land.argmax;
    if land.on_boundary {
        return Err(LabError::LandscapeBoundary {
            ell: land.ells[i],
            r: land.rs[j],
        });
    }
    let f = |ell: f64, r: f64| reduced_f(ell, r, consts, radial);
    let (mut ell, mut r) = (land.ells[i], land.rs[j]);
    let (l_lo, l_hi) = (land.ells[0], *land.ells.last().unwrap());
    let (r_lo, r_hi) = (land.rs[0], *land.rs.last().unwrap());
    let mut iterations = 0;
    loop {
        let hl = opts.fd_ell * ell;
        let g = gradient_fd(&f, ell, r, hl, opts.fd_r);
        if g[0].hypot(g[1]) < 1e-3 * opts.grad_tol || iterations == opts.max_newton {
            break;
        }
        let h = hessian_fd(&f, ell, r, hl, opts.fd_r);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if det == 0.0 {
            break;
        }
        let dl = (h[1][1] * g[0] - h[0][1] * g[1]) / det;
        let dr = (-h[1][0] * g[0] + h[0][0] * g[1]) / det;
        // keep ℓ positive
        let mut t = 1.0;
        while ell - t * dl <= 0.0 {
            t *= 0.5;
        }
        let (nl, nr) = (ell - t * dl, r - t * dr);
        iterations += 1;
        if (nl - ell).abs() <= 1e-15 * ell && (nr - r).abs() <= 1e-15 * r {
            break;
        }
        ell = nl;
        r = nr;
        if !(ell > l_lo && ell < l_hi && r > r_lo && r < r_hi) {
            return Err(LabError::LandscapeBoundary { ell, r });
        }
    }
    let hl = opts.fd_ell * ell;
    let gradient = gradient_fd(&f, ell, r, hl, opts.fd_r);
    let hessian = hessian_fd(&f, ell, r, 1e2 * hl, 1e2 * opts.fd_r);
    let n = consts.dim as f64;
    let u = radial.eval2(r)[0];
    let rn = r.powf(n - 2.0);
    let e = 2.0 / (n - 2.0);
    let ell_stationary = (2.0 * consts.c / (consts.b * u * rn)).powf(e);
    let ell_swapped = (2.0 * consts.b / (consts.c * u * rn)).powf(e);
    let stationary_discrepancy = ((ell_stationary - ell) / ell).abs();
    let swapped_discrepancy = ((ell_swapped - ell) / ell).abs();
    Ok(CriticalPoint {
        ell,
        r,
        value: f(ell, r),
        gradient,
        grad_norm: gradient[0].hypot(gradient[1]),
        hessian,
        hessian_eigenvalues: sym_eigenvalues(hessian),
        newton_iterations: iterations,
        ell_stationary,
        ell_swapped,
        stationary_discrepancy,
        swapped_discrepancy,
        matching_form: if stationary_discrepancy <= swapped_discrepancy { "stationary" } else { "swapped" }.into(),
    })
}

/// Cubature settings for the three-dimensional energy integrals.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyQuadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evals: usize,
}

impl Default for EnergyQuadrature {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1e-7,
            max_evals: 8_000_000,
        }
    }
}

impl EnergyQuadrature {
    fn options(&self) -> HcubatureOptions {
        HcubatureOptions {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            max_evals: self.max_evals,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SectorIntegral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// `∫ f` over the sector `a < |y| < b`, `φ ∈ [φ₀, φ₀ + π/k]`, `y₃ ≥ 0`, in
/// coordinates `(ρ, cos θ, φ)`. Boxes are split at `ρ = r` so the bubble of
/// an adjacent vertex sits on a box corner.
pub fn sector_integral<F>(f: F, geom: &AnnulusGeometry, k: usize, r: f64, phi0: f64, quad: &EnergyQuadrature) -> Result<SectorIntegral>
where
    F: Fn(&[f64; 3]) -> f64 + Sync,
{
    let width = PI / k.max(1) as f64;
    let g = |p: [f64; 3]| {
        let (rho, mu, phi) = (p[0], p[1], p[2]);
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        let y = [rho * s * phi.cos(), rho * s * phi.sin(), rho * mu];
        rho * rho * f(&y)
    };
    let mut boxes = Vec::new();
    for (lo, hi) in [(geom.a, r), (r, geom.b)] {
        if hi > lo {
            boxes.push(Box3::new([lo, 0.0, phi0], [hi, 1.0, phi0 + width]));
        }
    }
    let res = hcubature(&g, &boxes, quad.options());
    if !res.converged {
        return Err(LabError::Quadrature(format!(
            "sector cubature stopped at error {:.3e} after {} evaluations",
            res.error_estimate, res.evaluations
        )));
    }
    Ok(SectorIntegral {
        value: res.value,
        error: res.error_estimate,
        evaluations: res.evaluations,
    })
}

/// `∫_{ℝ³∖Ω} f(|y - ξ|²)` for a center at radius `r`, by axial symmetry.
fn exterior_integral<F>(f: F, geom: &AnnulusGeometry, r: f64, quad: &EnergyQuadrature) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    let (a, b) = (geom.a, geom.b);
    let d2 = |rho: f64, t: f64| (rho * rho + r * r - 2.0 * rho * r * t).max(0.0);
    let inner = |p: [f64; 3]| {
        let (rho, t) = (p[0], p[1]);
        2.0 * PI * rho * rho * f(d2(rho, t))
    };
    // ρ = b / s
    let outer = |p: [f64; 3]| {
        let (s, t) = (p[0], p[1]);
        if s <= 0.0 {
            return 0.0;
        }
        let rho = b / s;
        2.0 * PI * b.powi(3) / s.powi(4) * f(d2(rho, t))
    };
    let opts = HcubatureOptions {
        abs_tol: 1e-3 * quad.abs_tol,
        rel_tol: 1e-3 * quad.rel_tol,
        ..quad.options()
    };
    let split = |lo: f64, hi: f64| {
        [
            Box3::new([lo, -1.0, 0.0], [hi, 0.9, 1.0]),
            Box3::new([lo, 0.9, 0.0], [hi, 1.0, 1.0]),
        ]
    };
    let ri = hcubature(&inner, &split(0.0, a), opts);
    let ro = hcubature(&outer, &split(0.0, 1.0), opts);
    if !(ri.converged && ro.converged) {
        return Err(LabError::Quadrature("exterior bubble integral did not converge".into()));
    }
    Ok(ri.value + ro.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyRoute {
    /// `∫|∇U*|²` rewritten with `-ΔV = Σ U_j^p`; needs `V ∈ H₀¹`.
    ByParts,
    /// Gradients integrated directly.
    Direct,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnsatzEnergy {
    pub k: usize,
    pub lambda: Option<f64>,
    pub route: EnergyRoute,
    /// `I(u₀)`.
    pub i_u0: f64,
    /// `D = I(U*) - I(u₀) - kA`.
    pub d: f64,
    pub d_error: f64,
    /// `I(U*)`.
    pub i_ustar: f64,
    pub evaluations: usize,
}

fn check_energy_ansatz(ans: &Ansatz) -> Result<()> {
    if ans.hooks.perturb.is_some() {
        return Err(LabError::Config("sector energies need the symmetric ansatz".into()));
    }
    if ans.geom.dim != 3 {
        return Err(LabError::UnsupportedDimension(ans.geom.dim));
    }
    Ok(())
}

fn by_parts_density(q: &AnsatzPoint) -> f64 {
    let (u0, v) = (q.u0, q.v);
    let u5 = u0.powi(5);
    -u5 * v + 0.5 * v * q.sum_up - ((u0 - v).powi(6) - u0.powi(6)) / 6.0 - q.sum_u2s / 3.0
}

fn direct_density(q: &AnsatzPoint) -> f64 {
    let g = q.gradient();
    let e_star = 0.5 * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) - q.value().powi(6) / 6.0;
    let gu = q.grad_u0;
    let e_u0 = 0.5 * (gu[0] * gu[0] + gu[1] * gu[1] + gu[2] * gu[2]) - q.u0.powi(6) / 6.0;
    e_star - e_u0 - q.sum_free
}

/// `I(U*)` over `Ω`. Bubble-dependent parts are integrated over one
/// sector and multiplied by `4k`; the bubble self-energy outside `Ω` enters
/// through an axisymmetric exterior integral.
pub fn ansatz_energy(ans: &Ansatz, route: EnergyRoute, quad: &EnergyQuadrature) -> Result<AnsatzEnergy> {
    check_energy_ansatz(ans)?;
    let i_u0 = if ans.hooks.without_u0 { 0.0 } else { radial_energy(&ans.radial).energy };
    let k = ans.k();
    let Some(cfg) = ans.config else {
        return Ok(AnsatzEnergy {
            k: 0,
            lambda: None,
            route,
            i_u0,
            d: 0.0,
            d_error: 0.0,
            i_ustar: i_u0,
            evaluations: 0,
        });
    };
    if route == EnergyRoute::ByParts && ans.hooks.unprojected {
        return Err(LabError::Config("the by-parts route needs projected bubbles".into()));
    }
    let consts = compute_constants(&ans.geom)?;
    let lambda = cfg.lambda;
    let c3 = bubble_constant(3);
    let sector = match route {
        EnergyRoute::ByParts => sector_integral(|y| by_parts_density(&ans.parts(y, false)), &ans.geom, k, cfg.r, 0.0, quad)?,
        EnergyRoute::Direct => sector_integral(|y| direct_density(&ans.parts(y, true)), &ans.geom, k, cfg.r, 0.0, quad)?,
    };
    let exterior = match route {
        EnergyRoute::ByParts => exterior_integral(|d2| (c3 * (lambda / (1.0 + lambda * lambda * d2)).sqrt()).powi(6) / 3.0, &ans.geom, cfg.r, quad)?,
        EnergyRoute::Direct => exterior_integral(
            |d2| {
                let t = 1.0 + lambda * lambda * d2;
                let u = c3 * (lambda / t).sqrt();
                let grad2 = (lambda * lambda * u / t).powi(2) * d2;
                0.5 * grad2 - u.powi(6) / 6.0
            },
            &ans.geom,
            cfg.r,
            quad,
        )?,
    };
    let kf = k as f64;
    let d = 4.0 * kf * sector.value - kf * exterior;
    Ok(AnsatzEnergy {
        k,
        lambda: Some(lambda),
        route,
        i_u0,
        d,
        d_error: 4.0 * kf * sector.error,
        i_ustar: i_u0 + d + kf * consts.a,
        evaluations: sector.evaluations,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyIdentity {
    /// `∫_Ω |∇U*|²` from gradients.
    pub direct: f64,
    /// `∫_Ω U* (u₀^p - Σ_j U_j^p)`.
    pub by_parts: f64,
    pub relative_difference: f64,
}

pub fn dirichlet_identity(ans: &Ansatz, quad: &EnergyQuadrature) -> Result<EnergyIdentity> {
    check_energy_ansatz(ans)?;
    let (k, r) = match ans.config {
        Some(c) => (c.k, c.r),
        None => (1, 0.5 * (ans.geom.a + ans.geom.b)),
    };
    let p = ans.geom.p();
    let direct = sector_integral(
        |y| {
            let g = ans.gradient(y);
            g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
        },
        &ans.geom,
        k,
        r,
        0.0,
        quad,
    )?;
    let parts = sector_integral(
        |y| {
            let q = ans.parts(y, false);
            q.value() * (odd_power(q.u0, p) - q.sum_up)
        },
        &ans.geom,
        k,
        r,
        0.0,
        quad,
    )?;
    let scale = 4.0 * k as f64;
    let (direct, by_parts) = (scale * direct.value, scale * parts.value);
    Ok(EnergyIdentity {
        direct,
        by_parts,
        relative_difference: ((direct - by_parts) / by_parts).abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionRow {
    pub k: usize,
    pub lambda: f64,
    pub d: f64,
    pub d_error: f64,
    /// `k B u₀(r) λ^{-(N-2)/2}`.
    pub coupling_term: f64,
    /// `k Σ_{j≥2} C / (λ^{N-2} |ξ_j - ξ_1|^{N-2})`.
    pub interaction_term: f64,
    /// `coupling_term - interaction_term`.
    pub model: f64,
    pub relative_error: f64,
    /// `D` with every `PU_j` replaced by `U_j`.
    pub d_unprojected: Option<f64>,
    /// `|D_unprojected - D| / |D - model|`.
    pub ablation_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub ell: f64,
    pub r: f64,
    pub rows: Vec<ExpansionRow>,
    pub errors_decreasing: bool,
    pub final_relative_error: f64,
    /// `D - coupling_term < 0` for every `k`.
    pub interaction_negative: bool,
    /// Slope of `log |D|` against `log k`.
    pub fitted_power: f64,
    pub fitted_power_stderr: f64,
}

impl ExpansionReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,lambda,D,D_error,coupling,interaction,model,relative_error,D_unprojected,ablation_ratio")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        for row in &self.rows {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
                row.k,
                row.lambda,
                row.d,
                row.d_error,
                row.coupling_term,
                row.interaction_term,
                row.model,
                row.relative_error,
                opt(row.d_unprojected),
                opt(row.ablation_ratio)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpansionOptions {
    pub quadrature: EnergyQuadrature,
    pub ansatz: AnsatzOptions,
    /// Also run the unprojected ablation.
    pub ablation: bool,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self {
            quadrature: EnergyQuadrature::default(),
            ansatz: AnsatzOptions::default(),
            ablation: true,
        }
    }
}

/// `D(k)` against the leading-order model with the exact pair sum.
pub fn expansion_check(
    k_list: &[usize],
    ell: f64,
    r: f64,
    geom: &AnnulusGeometry,
    radial: &RadialSolution,
    opts: &ExpansionOptions,
) -> Result<ExpansionReport> {
    if k_list.len() < 2 {
        return Err(LabError::Config("expansion check needs at least two values of k".into()));
    }
    let consts = compute_constants(geom)?;
    let n = geom.n();
    let mut rows = Vec::new();
    for &k in k_list {
        let ans = assemble_ansatz_with(k, ell, r, geom, radial, &opts.ansatz)?;
        let lambda = ans.lambda().unwrap_or(0.0);
        let e = ansatz_energy(&ans, EnergyRoute::ByParts, &opts.quadrature)?;
        let kf = k as f64;
        let centers = ans.centers();
        let first = &centers[0];
        let pair_sum: f64 = centers[1..].iter().map(|c| distance(c, first).powf(2.0 - n)).sum();
        let coupling_term = kf * consts.b * radial.eval2(r)[0] * lambda.powf(-(n - 2.0) / 2.0);
        let interaction_term = kf * consts.c * lambda.powf(2.0 - n) * pair_sum;
        let model = coupling_term - interaction_term;
        let d_unprojected = if opts.ablation {
            let hooks = AnsatzHooks {
                unprojected: true,
                ..opts.ansatz.hooks
            };
            let un = assemble_ansatz_with(k, ell, r, geom, radial, &AnsatzOptions { hooks, ..opts.ansatz })?;
            Some(ansatz_energy(&un, EnergyRoute::Direct, &opts.quadrature)?.d)
        } else {
            None
        };
        let err = (e.d - model).abs();
        rows.push(ExpansionRow {
            k,
            lambda,
            d: e.d,
            d_error: e.d_error,
            coupling_term,
            interaction_term,
            model,
            relative_error: err / e.d.abs(),
            d_unprojected,
            ablation_ratio: d_unprojected.map(|du| (du - e.d).abs() / err),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.k as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.d.abs().ln()).collect();
    let (fitted_power, _, fitted_power_stderr) = linear_fit(&x, &y);
    Ok(ExpansionReport {
        ell,
        r,
        errors_decreasing: rows.windows(2).all(|w| w[1].relative_error < w[0].relative_error),
        final_relative_error: rows.last().map(|r| r.relative_error).unwrap_or(f64::NAN),
        interaction_negative: rows.iter().all(|r| r.d - r.coupling_term < 0.0),
        rows,
        fitted_power,
        fitted_power_stderr,
    })
}
