//! The polygonal ansatz `U* = u₀ - Σ_j PU_{ξ_j,λ}` on a three-dimensional
//! annulus, its error term `l_k`, and checks on both.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bubble::{bubble_constant, Bubble};
use crate::error::{LabError, Result};
use crate::geometry::{distance, norm, symmetry_orbit, AnnulusGeometry, PolygonConfig, SymmetryProbe};
use crate::norms::{fibonacci_sphere, weighted_norm, NormKind, NormSampleSet, SampleDensity, DEFAULT_TAU};
use crate::numerics::linear_fit;
use crate::projection::{ProjectedBubble, ProjectionOptions};
use crate::radial::RadialSolution;

/// Smallest accepted `λ · dist(ξ, ∂Ω)`.
pub const QUALITY_GATE: f64 = 5.0;

/// Test hooks that deliberately break one ingredient of the ansatz.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AnsatzHooks {
    /// Use `U_j` instead of `PU_j`.
    pub unprojected: bool,
    /// Drop `u₀`.
    pub without_u0: bool,
    /// Move center `index` by `offset`.
    pub perturb: Option<(usize, [f64; 3])>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AnsatzOptions {
    pub projection: ProjectionOptions,
    pub hooks: AnsatzHooks,
    pub gate: f64,
}

impl Default for AnsatzOptions {
    fn default() -> Self {
        Self {
            projection: ProjectionOptions::default(),
            hooks: AnsatzHooks::default(),
            gate: QUALITY_GATE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ansatz {
    /// `None` for the bubble-free ansatz `U* = u₀`.
    pub config: Option<PolygonConfig>,
    pub geom: AnnulusGeometry,
    pub radial: RadialSolution,
    pub bubbles: Vec<ProjectedBubble>,
    pub hooks: AnsatzHooks,
    /// `λ · dist(ξ, ∂Ω)`.
    pub quality: f64,
}

/// Everything the energy and residual integrands need at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnsatzPoint {
    pub u0: f64,
    pub grad_u0: [f64; 3],
    /// `V = Σ_j PU_j`.
    pub v: f64,
    pub grad_v: [f64; 3],
    /// `Σ_j U_j^p`.
    pub sum_up: f64,
    /// `Σ_j U_j^{2*}`.
    pub sum_u2s: f64,
    /// `Σ_j (½|∇U_j|² - U_j^{2*}/2*)`.
    pub sum_free: f64,
}

impl AnsatzPoint {
    pub fn value(&self) -> f64 {
        self.u0 - self.v
    }

    pub fn gradient(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.grad_u0[i] - self.grad_v[i])
    }
}

pub fn assemble_ansatz(k: usize, ell: f64, r: f64, geom: &AnnulusGeometry, radial: &RadialSolution) -> Result<Ansatz> {
    assemble_ansatz_with(k, ell, r, geom, radial, &AnsatzOptions::default())
}

/// Builds the `k` projected bubbles from one harmonic correction, rotated
/// onto every vertex.
pub fn assemble_ansatz_with(
    k: usize,
    ell: f64,
    r: f64,
    geom: &AnnulusGeometry,
    radial: &RadialSolution,
    opts: &AnsatzOptions,
) -> Result<Ansatz> {
    if geom.dim != 3 {
        return Err(LabError::UnsupportedDimension(geom.dim));
    }
    if radial.geom != *geom {
        return Err(LabError::Config("radial solution belongs to a different annulus".into()));
    }
    let cfg = PolygonConfig::new(geom, k, r, ell)?;
    let quality = cfg.lambda * (r - geom.a).min(geom.b - r);
    if quality < opts.gate {
        return Err(LabError::Rejected(format!(
            "lambda * dist(xi, boundary) = {quality:.3} is below the gate {}",
            opts.gate
        )));
    }
    let reference = ProjectedBubble::with_options(Bubble::new(vec![r, 0.0, 0.0], cfg.lambda)?, geom, &opts.projection)?;
    let mut bubbles: Vec<ProjectedBubble> = (1..=k)
        .map(|j| reference.rotated(cfg.vertex_angle(j)))
        .collect();
    if let Some((i, off)) = opts.hooks.perturb {
        let pb = bubbles
            .get(i)
            .ok_or_else(|| LabError::Config(format!("perturbed index {i} out of range for k = {k}")))?;
        let center: Vec<f64> = pb.bubble.center.iter().zip(off).map(|(c, d)| c + d).collect();
        bubbles[i] = pb.reproject(Bubble::new(center, cfg.lambda)?)?;
    }
    Ok(Ansatz {
        config: Some(cfg),
        geom: *geom,
        radial: radial.clone(),
        bubbles,
        hooks: opts.hooks,
        quality,
    })
}

impl Ansatz {
    /// `U* = u₀`.
    pub fn radial_only(geom: &AnnulusGeometry, radial: &RadialSolution) -> Self {
        Self {
            config: None,
            geom: *geom,
            radial: radial.clone(),
            bubbles: Vec::new(),
            hooks: AnsatzHooks::default(),
            quality: f64::INFINITY,
        }
    }

    pub fn k(&self) -> usize {
        self.bubbles.len()
    }

    pub fn lambda(&self) -> Option<f64> {
        self.config.map(|c| c.lambda)
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        self.bubbles.iter().map(|b| b.bubble.center.clone()).collect()
    }

    pub fn parts(&self, y: &[f64], with_gradient: bool) -> AnsatzPoint {
        let mut out = AnsatzPoint::default();
        let rho = norm(y);
        if !self.hooks.without_u0 {
            let [u, du, _] = self.radial.eval2(rho);
            out.u0 = u;
            if with_gradient && rho > 0.0 {
                out.grad_u0 = std::array::from_fn(|i| du * y[i] / rho);
            }
        }
        let c3 = bubble_constant(3);
        for pb in &self.bubbles {
            let b = &pb.bubble;
            let l = b.lambda;
            let d = [y[0] - b.center[0], y[1] - b.center[1], y[2] - b.center[2]];
            let t = 1.0 + l * l * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            let u = c3 * (l / t).sqrt();
            let u2 = u * u;
            let u4 = u2 * u2;
            out.sum_up += u4 * u;
            out.sum_u2s += u4 * u2;
            let f = -l * l * u / t;
            let gu = [f * d[0], f * d[1], f * d[2]];
            out.sum_free += 0.5 * (gu[0] * gu[0] + gu[1] * gu[1] + gu[2] * gu[2]) - u4 * u2 / 6.0;
            out.v += u;
            if with_gradient {
                for i in 0..3 {
                    out.grad_v[i] += gu[i];
                }
            }
            if !self.hooks.unprojected {
                if with_gradient {
                    let (h, gh) = pb.correction.value_gradient(y);
                    let gh = gh.unwrap_or([0.0; 3]);
                    out.v -= h;
                    for i in 0..3 {
                        out.grad_v[i] -= gh[i];
                    }
                } else {
                    out.v -= pb.correction.value(y);
                }
            }
        }
        out
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.parts(y, false).value()
    }

    pub fn gradient(&self, y: &[f64]) -> [f64; 3] {
        self.parts(y, true).gradient()
    }

    /// `l_k = |U*|^{p-1} U* - u₀^p + Σ_j U_j^p`.
    pub fn lk_residual(&self, y: &[f64]) -> f64 {
        let p = self.geom.p();
        let q = self.parts(y, false);
        odd_power(q.value(), p) - odd_power(q.u0, p) + q.sum_up
    }

    /// Largest `|U*|` over quasi-uniform samples of both spheres.
    pub fn boundary_check(&self, samples: usize) -> BoundaryReport {
        let dirs = fibonacci_sphere(samples.div_ceil(2).max(1));
        let mut report = BoundaryReport {
            max_abs: 0.0,
            argmax: Vec::new(),
            samples: 0,
        };
        for rho in [self.geom.a, self.geom.b] {
            for d in &dirs {
                let y = vec![rho * d[0], rho * d[1], rho * d[2]];
                let v = self.value(&y).abs();
                report.samples += 1;
                if v > report.max_abs || report.argmax.is_empty() {
                    report.max_abs = v;
                    report.argmax = y;
                }
            }
        }
        report
    }

    /// Largest spread of `U*` over each symmetry orbit.
    pub fn symmetry_residual(&self, probes: &[SymmetryProbe]) -> SymmetryReport {
        let mut rep = SymmetryReport {
            max_deviation: 0.0,
            max_relative: 0.0,
            worst: None,
            probes: probes.len(),
        };
        let per: Vec<(f64, f64)> = probes
            .par_iter()
            .map(|pr| {
                let vals: Vec<f64> = pr.orbit.iter().map(|y| self.value(y)).collect();
                let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
                let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (hi - lo, (hi - lo) / (1.0 + sup))
            })
            .collect();
        for (i, (dev, rel)) in per.into_iter().enumerate() {
            rep.max_deviation = rep.max_deviation.max(dev);
            if rel > rep.max_relative || rep.worst.is_none() {
                rep.max_relative = rel;
                rep.worst = Some(i);
            }
        }
        rep
    }

    /// `R_h = -Δ_h U* - u₀^p + Σ_j U_j^p` with the 7-point Laplacian.
    pub fn stencil_residual(&self, y: &[f64], h: f64) -> Result<f64> {
        if self.geom.boundary_distance(y) < 2.0 * h {
            return Err(LabError::Evaluation {
                point: y.to_vec(),
                message: format!("stencil of step {h} leaves the domain"),
            });
        }
        let centre = self.parts(y, false);
        let mut lap = -6.0 * centre.value();
        for i in 0..3 {
            for s in [-1.0, 1.0] {
                let mut q = y.to_vec();
                q[i] += s * h;
                lap += self.value(&q);
            }
        }
        lap /= h * h;
        Ok(-lap - odd_power(centre.u0, self.geom.p()) + centre.sum_up)
    }

    /// Length scale of `U*` at `y`: the distance to the nearest center,
    /// clamped to `[1/λ, 1]`.
    pub fn local_scale(&self, y: &[f64]) -> f64 {
        let Some(lambda) = self.lambda() else {
            return 1.0;
        };
        let d = self
            .bubbles
            .iter()
            .map(|pb| distance(y, &pb.bubble.center))
            .fold(f64::INFINITY, f64::min);
        d.clamp(1.0 / lambda, 1.0)
    }

    /// The stencil residual at `h` and `h/2` over `points`, with
    /// `h = factor · local_scale(y)` capped at a quarter of the distance to
    /// the boundary.
    pub fn pde_residual_probe(&self, points: &[Vec<f64>], factor: f64) -> Result<PdeResidualReport> {
        let pairs: Vec<(f64, f64)> = points
            .par_iter()
            .map(|y| {
                let h = (factor * self.local_scale(y)).min(0.25 * self.geom.boundary_distance(y));
                Ok((self.stencil_residual(y, h)?, self.stencil_residual(y, 0.5 * h)?))
            })
            .collect::<Result<_>>()?;
        let rms = |f: &dyn Fn(&(f64, f64)) -> f64| (pairs.iter().map(|p| f(p).powi(2)).sum::<f64>() / pairs.len().max(1) as f64).sqrt();
        let rms_h = rms(&|p| p.0);
        let rms_half = rms(&|p| p.1);
        let mut ratios: Vec<f64> = pairs.iter().filter(|p| p.1 != 0.0).map(|p| (p.0 / p.1).abs()).collect();
        ratios.sort_by(f64::total_cmp);
        let median = ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN);
        Ok(PdeResidualReport {
            factor,
            points: points.len(),
            rms_h,
            rms_half,
            max_h: pairs.iter().fold(0.0, |m, p| m.max(p.0.abs())),
            max_half: pairs.iter().fold(0.0, |m, p| m.max(p.1.abs())),
            ratio: rms_h / rms_half,
            median_point_ratio: median,
        })
    }

    /// `(x, y, U*, l_k)` on an `n × n` grid of the equatorial plane, for
    /// points of the closed annulus.
    pub fn field_slice(&self, n: usize) -> Vec<[f64; 4]> {
        let b = self.geom.b;
        let pts: Vec<[f64; 2]> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| {
                let s = |m: usize| -b + 2.0 * b * m as f64 / (n - 1).max(1) as f64;
                [s(i), s(j)]
            })
            .filter(|p| self.geom.contains_closure(&[p[0], p[1], 0.0]))
            .collect();
        pts.par_iter()
            .map(|p| {
                let y = [p[0], p[1], 0.0];
                [p[0], p[1], self.value(&y), self.lk_residual(&y)]
            })
            .collect()
    }
}

pub fn write_field_slice<W: Write>(rows: &[[f64; 4]], mut w: W) -> std::io::Result<()> {
    writeln!(w, "# x y U_star l_k")?;
    for r in rows {
        writeln!(w, "{:.17e} {:.17e} {:.17e} {:.17e}", r[0], r[1], r[2], r[3])?;
    }
    Ok(())
}

/// `sign(t) |t|^p`.
pub fn odd_power(t: f64, p: f64) -> f64 {
    t.signum() * t.abs().powf(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub max_abs: f64,
    pub argmax: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub max_deviation: f64,
    /// Largest `(max - min) / (1 + sup |U*|)` over an orbit.
    pub max_relative: f64,
    pub worst: Option<usize>,
    pub probes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeResidualReport {
    /// Step as a fraction of the local length scale.
    pub factor: f64,
    pub points: usize,
    pub rms_h: f64,
    pub rms_half: f64,
    pub max_h: f64,
    pub max_half: f64,
    /// `rms_h / rms_half`; 4 for a second-order stencil.
    pub ratio: f64,
    pub median_point_ratio: f64,
}

/// Uniform points of the annulus at distance at least `margin` from the
/// boundary.
pub fn interior_samples(geom: &AnnulusGeometry, count: usize, margin: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let b = geom.b;
    while out.len() < count {
        let y: Vec<f64> = (0..geom.dim).map(|_| rng.random_range(-b..b)).collect();
        if geom.contains_closure(&y) && geom.boundary_distance(&y) >= margin {
            out.push(y);
        }
    }
    out
}

/// Orbits of `count` random interior points.
pub fn random_probes(geom: &AnnulusGeometry, k: usize, count: usize, seed: u64) -> Result<Vec<SymmetryProbe>> {
    interior_samples(geom, count, 0.0, seed)
        .iter()
        .map(|y| symmetry_orbit(y, geom, k))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayOptions {
    pub density: SampleDensity,
    /// Also evaluate every norm on the doubled sample set.
    pub check_density: bool,
    pub ansatz: AnsatzOptions,
    pub tau: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            density: SampleDensity::default(),
            check_density: true,
            ansatz: AnsatzOptions::default(),
            tau: DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub k: usize,
    pub lambda: f64,
    pub norm: f64,
    pub argmax: Vec<f64>,
    pub samples: usize,
    pub norm_doubled: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub ell: f64,
    pub r: f64,
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `log ‖l_k‖_**` against `log λ`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// `-(N-2)/4`.
    pub target: f64,
    pub meets_target: bool,
    /// Largest relative change of a norm under doubled sampling.
    pub sampling_change: Option<f64>,
    pub warnings: Vec<String>,
}

impl DecayReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,lambda,norm,argmax_x,argmax_y,argmax_z,norm_doubled,slope,slope_stderr")?;
        for row in &self.rows {
            let a = |i: usize| row.argmax.get(i).copied().unwrap_or(f64::NAN);
            let d = row.norm_doubled.map(|v| format!("{v:.17e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e},{:.17e}",
                row.k,
                row.lambda,
                row.norm,
                a(0),
                a(1),
                a(2),
                d,
                self.slope,
                self.slope_stderr
            )?;
        }
        Ok(())
    }
}

/// `‖l_k‖_**` for every `k` at fixed `(ℓ, r)` and the fitted decay rate in
/// `λ = ℓ k²`.
pub fn decay_fit(
    k_list: &[usize],
    ell: f64,
    r: f64,
    geom: &AnnulusGeometry,
    radial: &RadialSolution,
    opts: &DecayOptions,
) -> Result<DecayReport> {
    if k_list.len() < 2 {
        return Err(LabError::Config("decay fit needs at least two values of k".into()));
    }
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let ans = assemble_ansatz_with(k, ell, r, geom, radial, &opts.ansatz)?;
        let lambda = ans.lambda().unwrap_or(0.0);
        let centers = ans.centers();
        let norm_on = |density: &SampleDensity| -> Result<(f64, Vec<f64>, usize)> {
            let set = NormSampleSet::build(geom, &centers, lambda, density)?;
            let rep = weighted_norm(|y| Ok(ans.lk_residual(y)), &centers, lambda, NormKind::StarStar, opts.tau, &set)?;
            Ok((rep.value, rep.argmax, rep.samples))
        };
        let (norm, argmax, samples) = norm_on(&opts.density)?;
        let norm_doubled = if opts.check_density {
            Some(norm_on(&opts.density.doubled())?.0)
        } else {
            None
        };
        rows.push(DecayRow {
            k,
            lambda,
            norm,
            argmax,
            samples,
            norm_doubled,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.lambda.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.norm.ln()).collect();
    let (slope, _, slope_stderr) = linear_fit(&x, &y);
    let target = -(geom.n() - 2.0) / 4.0;
    let mut warnings = Vec::new();
    if rows.windows(2).any(|w| w[1].norm > w[0].norm) {
        warnings.push("norms are not monotone in k; the fitted slope is unreliable".into());
    }
    let sampling_change = if opts.check_density {
        Some(
            rows.iter()
                .filter_map(|r| r.norm_doubled.map(|d| ((d - r.norm) / r.norm).abs()))
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    Ok(DecayReport {
        ell,
        r,
        rows,
        slope,
        slope_stderr,
        target,
        meets_target: slope <= target,
        sampling_change,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_centers;
    use crate::radial::{find_r0, solve_u0};
    use std::f64::consts::PI;

    fn setup() -> (AnnulusGeometry, RadialSolution) {
        let g = AnnulusGeometry::new(1.0, 2.0, 3).unwrap();
        let sol = solve_u0(&g, 1e-10).unwrap();
        (g, sol)
    }

    #[test]
    fn centers_follow_the_polygon() {
        let (g, sol) = setup();
        let ans = assemble_ansatz(8, 0.5, 1.45, &g, &sol).unwrap();
        let cfg = ans.config.unwrap();
        assert_eq!(ans.centers(), polygon_centers(&cfg));
        assert!(ans.bubbles.iter().all(|b| b.bubble.lambda == cfg.lambda));
    }

    #[test]
    fn single_bubble_dominates_its_center() {
        let (g, sol) = setup();
        let ans = assemble_ansatz(1, 100.0, 1.45, &g, &sol).unwrap();
        assert!(ans.value(&[1.45, 0.0, 0.0]) < 0.0);
    }

    #[test]
    fn sign_changes_between_bubbles() {
        let (g, sol) = setup();
        let r = find_r0(&sol).r0;
        for k in [8, 16] {
            let ans = assemble_ansatz(k, 0.2, r, &g, &sol).unwrap();
            let mid = PI / k as f64;
            assert!(ans.value(&[r * mid.cos(), r * mid.sin(), 0.0]) > 0.0);
            assert!(ans.value(&[r, 0.0, 0.0]) < 0.0);
        }
    }

    #[test]
    fn vanishes_on_the_boundary() {
        let (g, sol) = setup();
        let r = find_r0(&sol).r0;
        let ans = assemble_ansatz(16, 0.2, r, &g, &sol).unwrap();
        let rep = ans.boundary_check(1000);
        assert!(rep.max_abs < 1e-6, "{rep:?}");
    }

    #[test]
    fn quality_gate_rejects_crowded_bubbles() {
        let (g, sol) = setup();
        match assemble_ansatz(2, 0.2, 1.45, &g, &sol) {
            Err(LabError::Rejected(_)) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn symmetric_under_the_group_and_the_check_has_power() {
        let (g, sol) = setup();
        let r = find_r0(&sol).r0;
        let probes = random_probes(&g, 8, 100, 7).unwrap();
        let ans = assemble_ansatz(8, 0.2, r, &g, &sol).unwrap();
        let rep = ans.symmetry_residual(&probes);
        assert!(rep.max_relative < 1e-8, "{rep:?}");
        let centers = symmetry_orbit(&ans.centers()[0], &g, 8).unwrap();
        assert!(ans.symmetry_residual(&[centers]).max_relative < 1e-8);
        let bent = assemble_ansatz_with(
            8,
            0.2,
            r,
            &g,
            &sol,
            &AnsatzOptions {
                hooks: AnsatzHooks {
                    perturb: Some((2, [1e-3, 0.0, 0.0])),
                    ..Default::default()
                },
                ..Default::default()
            },
        )
        .unwrap();
        assert!(bent.symmetry_residual(&probes).max_relative > 1e-5);
    }

    #[test]
    fn no_bubbles_no_error_term() {
        let (g, sol) = setup();
        let ans = Ansatz::radial_only(&g, &sol);
        for y in interior_samples(&g, 50, 0.0, 3) {
            assert_eq!(ans.lk_residual(&y), 0.0);
        }
    }

    #[test]
    fn projection_lowers_the_bubble_power_in_a_controlled_way() {
        let (g, sol) = setup();
        let lambda_ell = 30.0;
        let hooks = AnsatzHooks {
            without_u0: true,
            ..Default::default()
        };
        let ans = assemble_ansatz_with(1, lambda_ell, 1.45, &g, &sol, &AnsatzOptions { hooks, ..Default::default() }).unwrap();
        let lambda = ans.lambda().unwrap();
        let pb = &ans.bubbles[0];
        for y in interior_samples(&g, 200, 0.0, 11) {
            let l = ans.lk_residual(&y);
            let u = pb.bubble.value(&y);
            assert!(l >= -1e-12 * u.powi(5));
            assert!(l <= 20.0 * u.powi(4) * lambda.powf(-0.5), "{l} at {y:?}");
        }
    }

    #[test]
    fn linear_identity_at_second_order() {
        let (g, sol) = setup();
        let r = find_r0(&sol).r0;
        let ans = assemble_ansatz(8, 0.2, r, &g, &sol).unwrap();
        let pts = interior_samples(&g, 200, 0.01, 5);
        let rep = ans.pde_residual_probe(&pts, 0.1).unwrap();
        assert!(rep.ratio > 3.6 && rep.ratio < 4.4, "{rep:?}");
        let h = 0.01;
        assert!(ans.stencil_residual(&[1.0 + h, 0.0, 0.0], h).is_err());
        let c = &ans.centers()[0];
        let lambda = ans.lambda().unwrap();
        assert_eq!(ans.local_scale(c), 1.0 / lambda);
        assert_eq!(ans.local_scale(&[0.0, 0.0, 1.9]), 1.0);
    }

    #[test]
    fn nonlinear_residual_matches_lk_near_a_bubble() {
        let (g, sol) = setup();
        let r = find_r0(&sol).r0;
        let ans = assemble_ansatz(32, 0.2, r, &g, &sol).unwrap();
        let lambda = ans.lambda().unwrap();
        let h = 0.02 / lambda;
        for s in [2.0, 4.0, 8.0] {
            let y = [r, 0.0, s / lambda];
            let q = ans.parts(&y, false);
            let lap_res = ans.stencil_residual(&y, h).unwrap();
            // -ΔU* - f(U*) = R_h + u0^p - Σ U_j^p - f(U*)
            let nl = lap_res + q.u0.powi(5) - q.sum_up - odd_power(q.value(), 5.0);
            let lk = ans.lk_residual(&y);
            assert!((nl.abs() - lk.abs()).abs() < 0.1 * lk.abs(), "{nl} vs {lk}");
        }
    }
}
