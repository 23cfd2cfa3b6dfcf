//! Linearization around `u₀` split into spherical-harmonic modes.
//!
//! Mode `k` carries the spherical eigenvalue `λ_k = k(k+N-2)` and leads to
//! the Dirichlet Sturm–Liouville problem
//!
//! ```text
//! -(r^{N-1} φ')' - r^{N-1} (p u₀^{p-1} - λ_k / r²) φ = μ r^{N-1} φ   on (a, b)
//! ```
//!
//! discretized by central differences on a uniform grid. The weighted
//! problem is symmetrized with `W^{-1/2}` so that the spectrum comes from a
//! symmetric tridiagonal matrix.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::AnnulusGeometry;
use crate::numerics::tridiag::{sign_changes, SymTridiagonal};
use crate::radial::{solve_u0_with, RadialOptions, RadialSolution};

pub const DEFAULT_NODES: usize = 2000;
pub const RICHARDSON_TOL: f64 = 1e-4;

/// Spherical Laplacian eigenvalue `k(k+N-2)`.
pub fn spherical_eigenvalue(k: usize, dim: usize) -> f64 {
    (k * (k + dim - 2)) as f64
}

/// Discrete mode operator on `m` interior nodes.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub r: Vec<f64>,
    pub h: f64,
    /// Stiffness minus potential, `K - diag(r^{N-1} V)`.
    pub stiffness: SymTridiagonal,
    /// Diagonal mass `r_i^{N-1}`.
    pub mass: Vec<f64>,
}

impl ModeOperator {
    /// `W^{-1/2} A W^{-1/2}`, same spectrum as the pencil `(A, W)`.
    pub fn symmetrized(&self) -> SymTridiagonal {
        let s: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let diag = self.stiffness.diag.iter().zip(&s).map(|(d, si)| d * si * si).collect();
        let off = self
            .stiffness
            .off
            .iter()
            .enumerate()
            .map(|(i, o)| o * s[i] * s[i + 1])
            .collect();
        SymTridiagonal::new(diag, off)
    }

    /// Discrete quadratic form `vᵀ A v` of nodal values.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let a = &self.stiffness;
        let mut q = 0.0;
        for i in 0..v.len() {
            q += a.diag[i] * v[i] * v[i];
            if i + 1 < v.len() {
                q += 2.0 * a.off[i] * v[i] * v[i + 1];
            }
        }
        q * self.h
    }
}

/// Assembles the mode-`k` operator with the potential `V(r) = w(r) - λ_k/r²`.
pub fn assemble_mode_operator<F: Fn(f64) -> f64>(
    geom: &AnnulusGeometry,
    m: usize,
    k: usize,
    weight_potential: F,
) -> ModeOperator {
    let h = geom.width() / (m + 1) as f64;
    let nm1 = geom.n() - 1.0;
    let lk = spherical_eigenvalue(k, geom.dim);
    let r: Vec<f64> = (1..=m).map(|i| geom.a + i as f64 * h).collect();
    let flux = |x: f64| x.powf(nm1) / (h * h);
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m.saturating_sub(1));
    let mut mass = Vec::with_capacity(m);
    for (i, &ri) in r.iter().enumerate() {
        let w = ri.powf(nm1);
        let v = weight_potential(ri) - lk / (ri * ri);
        diag.push(flux(ri - 0.5 * h) + flux(ri + 0.5 * h) - w * v);
        if i + 1 < m {
            off.push(-flux(ri + 0.5 * h));
        }
        mass.push(w);
    }
    ModeOperator {
        r,
        h,
        stiffness: SymTridiagonal::new(diag, off),
        mass,
    }
}

/// Lowest `n` eigenvalues with an arbitrary potential weight `w(r)`.
pub fn eigenvalues_with_potential<F: Fn(f64) -> f64>(
    geom: &AnnulusGeometry,
    m: usize,
    k: usize,
    n: usize,
    w: F,
) -> Vec<f64> {
    assemble_mode_operator(geom, m, k, w).symmetrized().lowest(n)
}

/// `p u₀^{p-1}` as a closure.
pub fn linearized_weight(sol: &RadialSolution) -> impl Fn(f64) -> f64 + '_ {
    let p = sol.geom.p();
    move |r| p * sol.value(r).abs().powf(p - 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSpectrum {
    pub mode: usize,
    /// `λ_k = k(k+N-2)`.
    pub spherical_eigenvalue: f64,
    pub eigenvalues: Vec<f64>,
    pub nodes: usize,
    /// Eigenvalues recomputed with `2M` nodes, when checked.
    pub refined: Option<Vec<f64>>,
    /// Largest relative change between `M` and `2M`.
    pub richardson_change: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    pub nodes: usize,
    pub richardson: bool,
    pub richardson_tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            richardson: true,
            richardson_tol: RICHARDSON_TOL,
        }
    }
}

/// Relative change with a unit floor, so eigenvalues that sit near zero are
/// compared on the scale of the operator rather than on their own size.
fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn mode_eigenvalues(sol: &RadialSolution, k: usize, n_eigs: usize) -> Result<ModeSpectrum> {
    mode_eigenvalues_with(sol, k, n_eigs, &SpectrumOptions::default())
}

pub fn mode_eigenvalues_with(
    sol: &RadialSolution,
    k: usize,
    n_eigs: usize,
    opts: &SpectrumOptions,
) -> Result<ModeSpectrum> {
    if n_eigs == 0 {
        return Err(LabError::Config("need at least one eigenvalue".into()));
    }
    if opts.nodes < n_eigs + 2 {
        return Err(LabError::Config(format!("{} nodes cannot resolve {n_eigs} eigenvalues", opts.nodes)));
    }
    let geom = &sol.geom;
    let w = linearized_weight(sol);
    let eigenvalues = eigenvalues_with_potential(geom, opts.nodes, k, n_eigs, &w);
    check_ordering(&eigenvalues)?;
    let (refined, change) = if opts.richardson {
        let fine = eigenvalues_with_potential(geom, 2 * opts.nodes, k, n_eigs, &w);
        let change = eigenvalues
            .iter()
            .zip(&fine)
            .map(|(a, b)| relative_change(*a, *b))
            .fold(0.0, f64::max);
        if change >= opts.richardson_tol {
            return Err(LabError::Eigen(format!(
                "mode {k}: doubling M = {} moves eigenvalues by {change:.3e} (relative), discretization too coarse",
                opts.nodes
            )));
        }
        (Some(fine), Some(change))
    } else {
        (None, None)
    };
    Ok(ModeSpectrum {
        mode: k,
        spherical_eigenvalue: spherical_eigenvalue(k, geom.dim),
        eigenvalues,
        nodes: opts.nodes,
        refined,
        richardson_change: change,
    })
}

fn check_ordering(ev: &[f64]) -> Result<()> {
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Eigen("non-finite eigenvalue".into()));
    }
    if ev.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::Eigen(format!("eigenvalues not strictly increasing: {ev:?}")));
    }
    Ok(())
}

/// Sign changes of the discrete eigenfunctions of mode `k` (expected `i-1`
/// for the `i`-th eigenfunction).
pub fn eigenfunction_nodes(sol: &RadialSolution, k: usize, n_eigs: usize, m: usize) -> Vec<usize> {
    let t = assemble_mode_operator(&sol.geom, m, k, linearized_weight(sol)).symmetrized();
    t.lowest(n_eigs)
        .into_iter()
        .map(|mu| sign_changes(&t.eigenvector(mu)))
        .collect()
}

/// Smallest `k` for which `λ_k / b²` exceeds `max p u₀^{p-1}`; from there on
/// every mode operator is positive definite.
pub fn dominating_mode(sol: &RadialSolution) -> usize {
    let g = &sol.geom;
    let vmax = g.p() * sol.max_value().powf(g.p() - 1.0);
    let mut k = 0;
    while spherical_eigenvalue(k, g.dim) / (g.b * g.b) <= vmax {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Serialize)]
pub struct NondegeneracyReport {
    pub k_max: usize,
    pub n_eigs: usize,
    pub spectra: Vec<ModeSpectrum>,
    /// `min |μ_{k,i}|` over the computed table.
    pub min_abs: f64,
    pub argmin: (usize, usize),
    /// Every computed `|μ_{k,i}|` exceeds the margin.
    pub certified: bool,
    /// `μ_{1,1} < 0` and `μ_{k,i} > 0` for `k ≥ 1`, `i ≥ 2`.
    pub sign_pattern: bool,
    /// Modes above `k_max` are positive: either `k_max` reaches the
    /// potential-domination cutoff or `μ_{k_max,1} > 0` (eigenvalues grow
    /// with `λ_k`).
    pub tail_positive: bool,
    pub dominating_mode: usize,
    pub largest_richardson_change: f64,
}

impl NondegeneracyReport {
    pub fn mu(&self, k: usize, i: usize) -> f64 {
        self.spectra[k].eigenvalues[i - 1]
    }
}

pub fn nondegeneracy_certificate(
    sol: &RadialSolution,
    k_max: usize,
    n_eigs: usize,
    margin_tol: f64,
    opts: &SpectrumOptions,
) -> Result<NondegeneracyReport> {
    let spectra: Vec<ModeSpectrum> = (0..=k_max)
        .into_par_iter()
        .map(|k| mode_eigenvalues_with(sol, k, n_eigs, opts))
        .collect::<Result<_>>()?;
    let mut min_abs = f64::INFINITY;
    let mut argmin = (0, 1);
    for s in &spectra {
        for (i, mu) in s.eigenvalues.iter().enumerate() {
            if mu.abs() < min_abs {
                min_abs = mu.abs();
                argmin = (s.mode, i + 1);
            }
        }
    }
    let mut sign_pattern = true;
    if k_max >= 1 {
        sign_pattern &= spectra[1].eigenvalues[0] < 0.0;
    }
    for s in spectra.iter().skip(1) {
        sign_pattern &= s.eigenvalues.iter().skip(1).all(|&mu| mu > 0.0);
    }
    let dom = dominating_mode(sol);
    let tail_positive = k_max >= dom || spectra[k_max].eigenvalues[0] > 0.0;
    let largest_richardson_change = spectra
        .iter()
        .filter_map(|s| s.richardson_change)
        .fold(0.0, f64::max);
    Ok(NondegeneracyReport {
        k_max,
        n_eigs,
        spectra,
        min_abs,
        argmin,
        certified: min_abs > margin_tol,
        sign_pattern,
        tail_positive,
        dominating_mode: dom,
        largest_richardson_change,
    })
}

/// Turns a failed certificate into the near-degenerate error.
pub fn require_certified(report: &NondegeneracyReport) -> Result<()> {
    if report.certified {
        Ok(())
    } else {
        Err(LabError::NearDegenerate {
            mode: report.argmin.0,
            index: report.argmin.1,
            value: report.min_abs,
        })
    }
}

/// Sign change of `μ_{k,1}(R)` on the normalized annulus `(R, 1)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DegeneracyCrossing {
    pub mode: usize,
    pub r_lo: f64,
    pub r_hi: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    /// Midpoint of the refined bracket.
    pub root: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub inner_radius: f64,
    /// `μ_{k,1}` for each mode of the sweep, in mode order.
    pub first_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub dim: usize,
    pub modes: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub crossings: Vec<DegeneracyCrossing>,
    /// Grid radii whose radial solve failed, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl SweepReport {
    /// One row per `(R, k)` pair.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "R,k,mu_1")?;
        for row in &self.rows {
            for (k, mu) in self.modes.iter().zip(&row.first_eigenvalues) {
                writeln!(w, "{:.17e},{k},{mu:.17e}", row.inner_radius)?;
            }
        }
        Ok(())
    }

    /// `μ_{k,1}` along the grid for one mode.
    pub fn series(&self, mode: usize) -> Vec<(f64, f64)> {
        let idx = self.modes.iter().position(|&k| k == mode).expect("mode in sweep");
        self.rows
            .iter()
            .map(|r| (r.inner_radius, r.first_eigenvalues[idx]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub nodes: usize,
    pub radial: RadialOptions,
    /// Bisection stops once the bracket is narrower than this.
    pub bracket_width: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            radial: RadialOptions::default(),
            bracket_width: 1e-4,
        }
    }
}

/// `μ_{k,1}` on the annulus `(R, 1)` for each mode.
pub fn first_eigenvalues_at(inner: f64, dim: usize, modes: &[usize], opts: &SweepOptions) -> Result<Vec<f64>> {
    let geom = AnnulusGeometry::new(inner, 1.0, dim)?;
    let sol = solve_u0_with(&geom, &opts.radial)?;
    let w = linearized_weight(&sol);
    Ok(modes
        .iter()
        .map(|&k| eigenvalues_with_potential(&geom, opts.nodes, k, 1, &w)[0])
        .collect())
}

fn first_eigenvalue(inner: f64, dim: usize, mode: usize, opts: &SweepOptions) -> Result<f64> {
    Ok(first_eigenvalues_at(inner, dim, &[mode], opts)?[0])
}

/// Scans `μ_{k,1}(R)` over `inner_radii` and refines every sign change by
/// bisection in `R`.
pub fn degeneracy_sweep(
    inner_radii: &[f64],
    dim: usize,
    modes: &[usize],
    opts: &SweepOptions,
) -> Result<SweepReport> {
    if inner_radii.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(LabError::Config("sweep radii must lie in (0, 1)".into()));
    }
    let mut grid = inner_radii.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let evaluated: Vec<(f64, Result<Vec<f64>>)> = grid
        .par_iter()
        .map(|&r| (r, first_eigenvalues_at(r, dim, modes, opts)))
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (r, res) in evaluated {
        match res {
            Ok(v) => rows.push(SweepRow {
                inner_radius: r,
                first_eigenvalues: v,
            }),
            Err(e) => skipped.push((r, e.to_string())),
        }
    }

    let mut brackets = Vec::new();
    for (mi, &k) in modes.iter().enumerate() {
        for w in rows.windows(2) {
            let (a, b) = (w[0].first_eigenvalues[mi], w[1].first_eigenvalues[mi]);
            if a * b < 0.0 {
                brackets.push((k, w[0].inner_radius, w[1].inner_radius, a, b));
            }
        }
    }
    let crossings: Vec<DegeneracyCrossing> = brackets
        .par_iter()
        .map(|&(k, lo, hi, flo, fhi)| refine_crossing(dim, k, lo, hi, flo, fhi, opts))
        .collect::<Result<_>>()?;

    Ok(SweepReport {
        dim,
        modes: modes.to_vec(),
        rows,
        crossings,
        skipped,
    })
}

fn refine_crossing(
    dim: usize,
    mode: usize,
    mut lo: f64,
    mut hi: f64,
    mut flo: f64,
    mut fhi: f64,
    opts: &SweepOptions,
) -> Result<DegeneracyCrossing> {
    while hi - lo > opts.bracket_width {
        let mid = 0.5 * (lo + hi);
        let fm = first_eigenvalue(mid, dim, mode, opts)?;
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            flo = fm;
            fhi = fm;
            break;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Ok(DegeneracyCrossing {
        mode,
        r_lo: lo,
        r_hi: hi,
        mu_lo: flo,
        mu_hi: fhi,
        root: 0.5 * (lo + hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::solve_u0;
    use std::f64::consts::PI;

    fn sol() -> RadialSolution {
        solve_u0(&AnnulusGeometry::new(1.0, 2.0, 3).unwrap(), 1e-10).unwrap()
    }

    #[test]
    fn spherical_eigenvalues_are_exact() {
        assert_eq!(spherical_eigenvalue(0, 3), 0.0);
        assert_eq!(spherical_eigenvalue(1, 3), 2.0);
        assert_eq!(spherical_eigenvalue(4, 5), 28.0);
    }

    #[test]
    fn free_laplacian_spectrum() {
        // φ = w/r turns the N = 3 radial Laplacian into -w'' on (1, 2)
        let g = AnnulusGeometry::new(1.0, 2.0, 3).unwrap();
        let ev = eigenvalues_with_potential(&g, 2000, 0, 4, |_| 0.0);
        for (i, mu) in ev.iter().enumerate() {
            let exact = ((i + 1) as f64 * PI).powi(2);
            assert!(((mu - exact) / exact).abs() < 1e-5, "{mu} vs {exact}");
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let s = sol();
        let op = assemble_mode_operator(&s.geom, 50, 3, linearized_weight(&s));
        let d = op.stiffness.to_dense();
        for i in 0..d.len() {
            for j in 0..d.len() {
                assert_eq!(d[i][j], d[j][i]);
            }
        }
    }

    #[test]
    fn eigenvalues_grow_with_mode() {
        let s = sol();
        let opts = SpectrumOptions {
            nodes: 800,
            richardson: false,
            ..Default::default()
        };
        let table: Vec<Vec<f64>> = (0..=10)
            .map(|k| mode_eigenvalues_with(&s, k, 3, &opts).unwrap().eigenvalues)
            .collect();
        for k in 1..table.len() {
            for i in 0..3 {
                assert!(table[k][i] >= table[k - 1][i]);
            }
        }
    }

    #[test]
    fn first_mode_one_eigenvalue_is_negative() {
        let spec = mode_eigenvalues(&sol(), 1, 3).unwrap();
        assert!(spec.eigenvalues[0] < 0.0);
        assert!(spec.richardson_change.unwrap() < RICHARDSON_TOL);
    }

    #[test]
    fn sturm_oscillation_counts() {
        let s = sol();
        assert_eq!(eigenfunction_nodes(&s, 0, 4, 1000), vec![0, 1, 2, 3]);
        assert_eq!(eigenfunction_nodes(&s, 2, 3, 1000), vec![0, 1, 2]);
    }

    #[test]
    fn domination_cutoff_is_positive_definite() {
        let s = sol();
        let k = dominating_mode(&s);
        let mu = mode_eigenvalues_with(
            &s,
            k,
            1,
            &SpectrumOptions {
                richardson: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(mu.eigenvalues[0] > 0.0);
    }

    #[test]
    fn zero_eigs_rejected() {
        assert!(mode_eigenvalues(&sol(), 0, 0).is_err());
    }
}
