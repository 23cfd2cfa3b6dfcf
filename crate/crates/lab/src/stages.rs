use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bubble_core::ansatz::{
    assemble_ansatz_with, decay_fit, interior_samples, random_probes, write_field_slice, AnsatzHooks, AnsatzOptions,
    DecayOptions,
};
use bubble_core::energy::{
    compute_constants, critical_point, energy_landscape, expansion_check, CriticalPoint, EnergyQuadrature,
    ExpansionOptions, LandscapeOptions,
};
use bubble_core::projection::ProjectionOptions;
use bubble_core::radial::{find_r0, radial_energy, solve_u0_with, RadialOptions, RadialSolution};
use bubble_core::spectrum::{degeneracy_sweep, nondegeneracy_certificate, SpectrumOptions, SweepOptions};
use bubble_core::{AnnulusGeometry, LabError};
use thiserror::Error;

use crate::config::RunConfig;
use crate::manifest::{StageRecord, StageStatus};
use crate::Stage;

#[derive(Debug, Error)]
enum StageError {
    #[error(transparent)]
    Core(#[from] LabError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Missing(&'static str),
}

type StageResult = Result<(), StageError>;

/// Distance from the boundary below which no stencil probe is placed.
const PDE_MARGIN: f64 = 0.01;

fn e17(v: f64) -> String {
    format!("{v:.17e}")
}

/// Shared state between stages of one run.
pub struct Pipeline<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    geom: Option<AnnulusGeometry>,
    radial: Option<RadialSolution>,
    r0: Option<f64>,
    critical: Option<CriticalPoint>,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig, out: &'a Path) -> Self {
        Self {
            cfg,
            out,
            geom: None,
            radial: None,
            r0: None,
            critical: None,
        }
    }

    pub fn run(mut self, stages: &[Stage]) -> Vec<StageRecord> {
        stages
            .iter()
            .map(|&stage| {
                let mut rec = StageRecord::new(stage.name());
                let result = match stage {
                    Stage::Radial => self.radial_stage(&mut rec),
                    Stage::Spectrum => self.spectrum_stage(&mut rec),
                    Stage::Sweep => self.sweep_stage(&mut rec),
                    Stage::Landscape => self.landscape_stage(&mut rec),
                    Stage::Construct => self.construct_stage(&mut rec),
                    Stage::Verify => self.verify_stage(&mut rec),
                };
                match result {
                    Ok(()) => {}
                    Err(StageError::Missing(what)) => {
                        rec.status = StageStatus::Skipped;
                        rec.error = Some(format!("prerequisite missing: {what}"));
                    }
                    Err(e) => {
                        rec.status = StageStatus::Failed;
                        rec.error = Some(e.to_string());
                    }
                }
                rec
            })
            .collect()
    }

    fn write_file(
        &self,
        rec: &mut StageRecord,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(self.out.join(name))?);
        body(&mut w)?;
        w.flush()?;
        rec.files.push(name.into());
        Ok(())
    }

    fn radial_options(&self) -> RadialOptions {
        RadialOptions {
            tol: self.cfg.radial.tol,
            intervals: self.cfg.radial.intervals,
            ..RadialOptions::default()
        }
    }

    fn solution(&self) -> Result<(&AnnulusGeometry, &RadialSolution), StageError> {
        match (&self.geom, &self.radial) {
            (Some(g), Some(s)) => Ok((g, s)),
            _ => Err(StageError::Missing("radial solution")),
        }
    }

    /// `(ℓ, r)` for the polygon stages: config overrides, else the maximizer.
    fn polygon_point(&self) -> Result<(f64, f64), StageError> {
        let p = &self.cfg.polygon;
        let ell = p.ell.or(self.critical.as_ref().map(|c| c.ell));
        let r = p.r.or(self.critical.as_ref().map(|c| c.r));
        match (ell, r) {
            (Some(ell), Some(r)) => Ok((ell, r)),
            _ => Err(StageError::Missing("critical point of the reduced energy")),
        }
    }

    fn ansatz_options(&self) -> AnsatzOptions {
        AnsatzOptions {
            projection: ProjectionOptions::with_l_max(self.cfg.polygon.l_max),
            ..AnsatzOptions::default()
        }
    }

    fn radial_stage(&mut self, rec: &mut StageRecord) -> StageResult {
        let c = self.cfg;
        let g = &c.geometry;
        let geom = AnnulusGeometry::new(g.a, g.b, g.dim)?;
        let sol = solve_u0_with(&geom, &self.radial_options())?;
        let peak = find_r0(&sol);
        let en = radial_energy(&sol);
        self.write_file(rec, "radial.csv", |w| sol.write_csv(w))?;
        self.write_file(rec, "radial_summary.csv", |w| {
            writeln!(w, "r0,m0,max_u0,slope,energy,dirichlet,power,ode_residual,boundary_residual")?;
            let row = [
                peak.r0,
                peak.m0,
                sol.max_value(),
                sol.slope,
                en.energy,
                en.dirichlet,
                en.power,
                sol.ode_residual,
                sol.boundary_residual,
            ];
            writeln!(w, "{}", row.map(e17).join(","))
        })?;
        rec.scalar("r0", peak.r0);
        rec.scalar("m0", peak.m0);
        rec.scalar("max_u0", sol.max_value());
        rec.scalar("slope", sol.slope);
        rec.scalar("energy", en.energy);
        rec.scalar("ode_residual", sol.ode_residual);
        let identity = (en.dirichlet - en.power).abs() / en.power;
        rec.scalar("energy_identity_gap", identity);
        rec.check(sol.ode_residual < c.radial.ode_residual_tol, || {
            format!("ODE residual {:.3e} exceeds {:.1e}", sol.ode_residual, c.radial.ode_residual_tol)
        });
        rec.check(identity < c.radial.identity_tol, || {
            format!("energy identity gap {identity:.3e} exceeds {:.1e}", c.radial.identity_tol)
        });
        rec.check(!peak.flat, || "maximum of r^((N-2)/2) u0 is flat; r0 is not isolated".into());
        self.geom = Some(geom);
        self.r0 = Some(peak.r0);
        self.radial = Some(sol);
        Ok(())
    }

    fn spectrum_stage(&mut self, rec: &mut StageRecord) -> StageResult {
        let s = &self.cfg.spectrum;
        let (_, sol) = self.solution()?;
        let opts = SpectrumOptions {
            nodes: s.nodes,
            richardson: true,
            richardson_tol: s.richardson_tol,
        };
        let rep = nondegeneracy_certificate(sol, s.k_max, s.n_eigs, s.margin, &opts)?;
        self.write_file(rec, "spectrum.csv", |w| {
            writeln!(w, "k,i,lambda_k,mu,mu_refined")?;
            for sp in &rep.spectra {
                for (i, mu) in sp.eigenvalues.iter().enumerate() {
                    let fine = sp.refined.as_ref().map(|f| e17(f[i])).unwrap_or_default();
                    writeln!(w, "{},{},{},{},{}", sp.mode, i + 1, sp.spherical_eigenvalue, e17(*mu), fine)?;
                }
            }
            Ok(())
        })?;
        rec.scalar("min_abs_mu", rep.min_abs);
        if s.k_max >= 1 {
            rec.scalar("mu_11", rep.mu(1, 1));
        }
        rec.scalar("largest_richardson_change", rep.largest_richardson_change);
        rec.scalar("dominating_mode", rep.dominating_mode as f64);
        rec.check(rep.certified, || {
            format!(
                "|mu_{{{},{}}}| = {:.3e} is below the margin {:.1e}",
                rep.argmin.0, rep.argmin.1, rep.min_abs, s.margin
            )
        });
        rec.check(rep.sign_pattern, || "sign pattern mu_11 < 0, mu_ki > 0 (i >= 2) not reproduced".into());
        rec.check(rep.tail_positive, || {
            format!("modes above k_max = {} are not shown positive", s.k_max)
        });
        Ok(())
    }

    fn sweep_stage(&mut self, rec: &mut StageRecord) -> StageResult {
        let w = &self.cfg.sweep;
        let grid: Vec<f64> = (0..w.points)
            .map(|i| w.r_min + (w.r_max - w.r_min) * i as f64 / (w.points - 1) as f64)
            .collect();
        let opts = SweepOptions {
            nodes: w.nodes,
            radial: self.radial_options(),
            bracket_width: w.bracket_width,
        };
        let rep = degeneracy_sweep(&grid, self.cfg.geometry.dim, &w.modes, &opts)?;
        self.write_file(rec, "sweep.csv", |f| rep.write_csv(f))?;
        self.write_file(rec, "crossings.csv", |f| {
            writeln!(f, "k,r_lo,r_hi,root,mu_lo,mu_hi")?;
            for c in &rep.crossings {
                writeln!(f, "{},{},{},{},{},{}", c.mode, e17(c.r_lo), e17(c.r_hi), e17(c.root), e17(c.mu_lo), e17(c.mu_hi))?;
            }
            Ok(())
        })?;
        for (r, why) in &rep.skipped {
            rec.notes.push(format!("R = {r}: {why}"));
        }
        for &k in &w.modes {
            let found: Vec<_> = rep.crossings.iter().filter(|c| c.mode == k).collect();
            if let Some(first) = found.first() {
                rec.scalar(&format!("crossing_k{k}"), first.root);
            }
            if k == 1 {
                rec.check(found.is_empty(), || format!("mu_11(R) changes sign near R = {}", found[0].root));
            } else if found.is_empty() {
                rec.notes.push(format!("no sign change of mu_{k},1 on [{}, {}]", w.r_min, w.r_max));
            }
        }
        rec.scalar("crossings", rep.crossings.len() as f64);
        Ok(())
    }

    fn landscape_stage(&mut self, rec: &mut StageRecord) -> StageResult {
        let l = &self.cfg.landscape;
        let (geom, sol) = self.solution()?;
        let consts = compute_constants(geom)?;
        let opts = LandscapeOptions {
            ell_range: l.ell_range,
            r_range: l.r_range,
            ell_points: l.ell_points,
            r_points: l.r_points,
            grad_tol: l.grad_tol,
            ..LandscapeOptions::default()
        };
        let land = energy_landscape(&consts, sol, &opts)?;
        self.write_file(rec, "landscape.dat", |w| land.write_plot_data(w))?;
        self.write_file(rec, "constants.csv", |w| {
            writeln!(w, "A,B,C,A_closed,B_closed,C_closed,A_error,B_error,C_error,far_field")?;
            let row = [
                consts.a,
                consts.b,
                consts.c,
                consts.a_closed,
                consts.b_closed,
                consts.c_closed,
                consts.a_error,
                consts.b_error,
                consts.c_error,
                consts.far_field,
            ];
            writeln!(w, "{}", row.map(e17).join(","))
        })?;
        let a_rel = ((consts.a - consts.a_closed) / consts.a_closed).abs();
        let b_rel = ((consts.b - consts.b_closed) / consts.b_closed).abs();
        rec.scalar("A", consts.a);
        rec.scalar("B", consts.b);
        rec.scalar("C", consts.c);
        rec.scalar("A_closed_form_gap", a_rel);
        rec.scalar("B_closed_form_gap", b_rel);
        rec.check(a_rel.max(b_rel) < l.constant_tol, || {
            format!("A or B differs from its closed form by {:.3e}", a_rel.max(b_rel))
        });
        let cp = critical_point(&consts, sol, &opts)?;
        self.write_file(rec, "critical_point.csv", |w| {
            writeln!(
                w,
                "ell,r,F,grad_ell,grad_r,grad_norm,hess_min,hess_max,ell_stationary,ell_swapped,stationary_discrepancy,swapped_discrepancy,matching_form,newton_iterations"
            )?;
            let row = [
                cp.ell,
                cp.r,
                cp.value,
                cp.gradient[0],
                cp.gradient[1],
                cp.grad_norm,
                cp.hessian_eigenvalues[0],
                cp.hessian_eigenvalues[1],
                cp.ell_stationary,
                cp.ell_swapped,
                cp.stationary_discrepancy,
                cp.swapped_discrepancy,
            ];
            writeln!(w, "{},{},{}", row.map(e17).join(","), cp.matching_form, cp.newton_iterations)
        })?;
        rec.scalar("ell", cp.ell);
        rec.scalar("r", cp.r);
        rec.scalar("F", cp.value);
        rec.scalar("grad_norm", cp.grad_norm);
        rec.scalar("hessian_max_eigenvalue", cp.hessian_eigenvalues[1]);
        rec.scalar("ell_stationary", cp.ell_stationary);
        rec.scalar("ell_swapped", cp.ell_swapped);
        rec.notes.push(format!("closed form matching the maximizer: {}", cp.matching_form));
        rec.check(cp.grad_norm < l.grad_tol, || {
            format!("|grad F| = {:.3e} at the maximizer exceeds {:.1e}", cp.grad_norm, l.grad_tol)
        });
        rec.check(cp.hessian_eigenvalues[1] < 0.0, || {
            format!("Hessian eigenvalues {:?} are not both negative", cp.hessian_eigenvalues)
        });
        if let Some(r0) = self.r0 {
            let gap = (cp.r - r0).abs();
            rec.scalar("r_minus_r0", cp.r - r0);
            rec.check(gap < l.r0_tol, || format!("maximizer r = {} is {gap:.3e} away from r0 = {r0}", cp.r));
        }
        self.critical = Some(cp);
        Ok(())
    }

    fn construct_stage(&mut self, rec: &mut StageRecord) -> StageResult {
        let c = &self.cfg.construct;
        let (ell, r) = self.polygon_point()?;
        let (geom, sol) = self.solution()?;
        let opts = self.ansatz_options();
        let mut rows = Vec::new();
        for &k in &self.cfg.polygon.k_list {
            let ans = assemble_ansatz_with(k, ell, r, geom, sol, &opts)?;
            let slice = ans.field_slice(c.slice_points);
            self.write_file(rec, &format!("slice_k{k}.dat"), |w| write_field_slice(&slice, w))?;
            let boundary = ans.boundary_check(c.boundary_samples);
            let probes = random_probes(geom, k, self.cfg.verify.symmetry_probes, self.cfg.verify.seed)?;
            let sym = ans.symmetry_residual(&probes);
            rec.check(boundary.max_abs < c.boundary_tol, || {
                format!("k = {k}: boundary value {:.3e} exceeds {:.1e}", boundary.max_abs, c.boundary_tol)
            });
            rec.check(sym.max_relative < self.cfg.verify.symmetry_tol, || {
                format!("k = {k}: symmetry deviation {:.3e}", sym.max_relative)
            });
            rows.push([k as f64, ans.lambda().unwrap_or(0.0), ans.quality, boundary.max_abs, sym.max_relative]);
        }
        self.write_file(rec, "construct.csv", |w| {
            writeln!(w, "k,lambda,quality,boundary_max,symmetry_max_relative")?;
            for row in &rows {
                writeln!(w, "{},{}", row[0], row[1..].iter().map(|v| e17(*v)).collect::<Vec<_>>().join(","))?;
            }
            Ok(())
        })?;
        rec.scalar("ell", ell);
        rec.scalar("r", r);
        Ok(())
    }

    fn verify_stage(&mut self, rec: &mut StageRecord) -> StageResult {
        let v = &self.cfg.verify;
        let k_list = &self.cfg.polygon.k_list;
        let (ell, r) = self.polygon_point()?;
        let (geom, sol) = self.solution()?;
        let ansatz = self.ansatz_options();
        rec.scalar("ell", ell);
        rec.scalar("r", r);

        let decay = decay_fit(
            k_list,
            ell,
            r,
            geom,
            sol,
            &DecayOptions {
                density: v.density,
                check_density: v.check_density,
                ansatz,
                tau: v.tau,
            },
        )?;
        self.write_file(rec, "decay.csv", |w| decay.write_csv(w))?;
        rec.scalar("decay_slope", decay.slope);
        rec.scalar("decay_slope_stderr", decay.slope_stderr);
        rec.scalar("decay_target", decay.target);
        for row in &decay.rows {
            rec.scalar(&format!("lk_norm_k{}", row.k), row.norm);
        }
        rec.notes.extend(decay.warnings.iter().cloned());
        rec.check(decay.meets_target, || {
            format!(
                "fitted decay slope {:.4} (stderr {:.4}) is above the target {}",
                decay.slope, decay.slope_stderr, decay.target
            )
        });
        if let Some(change) = decay.sampling_change {
            rec.scalar("sampling_change", change);
            rec.check(change < v.sampling_tol, || {
                format!("doubling the sample density moves a norm by {:.1}%", 100.0 * change)
            });
        }

        if v.expansion {
            let exp = expansion_check(
                k_list,
                ell,
                r,
                geom,
                sol,
                &ExpansionOptions {
                    quadrature: EnergyQuadrature {
                        rel_tol: v.quad_rel_tol,
                        abs_tol: v.quad_abs_tol,
                        max_evals: v.quad_max_evals,
                    },
                    ansatz,
                    ablation: v.ablation,
                },
            )?;
            self.write_file(rec, "expansion.csv", |w| exp.write_csv(w))?;
            rec.scalar("expansion_final_error", exp.final_relative_error);
            rec.scalar("expansion_fitted_power", exp.fitted_power);
            rec.scalar("expansion_fitted_power_stderr", exp.fitted_power_stderr);
            rec.check(exp.errors_decreasing, || "expansion model error does not decrease in k".into());
            rec.check(exp.final_relative_error < v.expansion_tol, || {
                format!(
                    "final expansion error {:.3} exceeds {}",
                    exp.final_relative_error, v.expansion_tol
                )
            });
            rec.check(exp.interaction_negative, || "interaction part of D(k) is not negative for every k".into());
            for row in &exp.rows {
                if let Some(ratio) = row.ablation_ratio {
                    rec.check(ratio >= v.ablation_factor, || {
                        format!("k = {}: unprojected shift is only {ratio:.2}x the model error", row.k)
                    });
                }
            }
        }

        let mut checks: Vec<(String, usize, f64, f64, bool)> = Vec::new();
        for &k in k_list {
            let ans = assemble_ansatz_with(k, ell, r, geom, sol, &ansatz)?;
            let boundary = ans.boundary_check(self.cfg.construct.boundary_samples).max_abs;
            let tol = self.cfg.construct.boundary_tol;
            checks.push(("boundary".into(), k, boundary, tol, boundary < tol));

            let probes = random_probes(geom, k, v.symmetry_probes, v.seed)?;
            let sym = ans.symmetry_residual(&probes).max_relative;
            checks.push(("symmetry".into(), k, sym, v.symmetry_tol, sym < v.symmetry_tol));

            let pts = interior_samples(geom, v.pde_points, PDE_MARGIN, v.seed);
            let pde = ans.pde_residual_probe(&pts, v.pde_step)?;
            let [lo, hi] = v.pde_ratio;
            checks.push(("stencil_ratio".into(), k, pde.ratio, lo, pde.ratio > lo && pde.ratio < hi));

            if k == k_list[0] {
                let bent = assemble_ansatz_with(
                    k,
                    ell,
                    r,
                    geom,
                    sol,
                    &AnsatzOptions {
                        hooks: AnsatzHooks {
                            perturb: Some((1, [v.perturbation, 0.0, 0.0])),
                            ..AnsatzHooks::default()
                        },
                        ..ansatz
                    },
                )?;
                let dev = bent.symmetry_residual(&probes).max_relative;
                checks.push(("perturbed_symmetry".into(), k, dev, v.perturbation_floor, dev > v.perturbation_floor));
            }
        }
        self.write_file(rec, "invariants.csv", |w| {
            writeln!(w, "check,k,value,threshold,pass")?;
            for (name, k, value, threshold, pass) in &checks {
                writeln!(w, "{name},{k},{},{},{pass}", e17(*value), e17(*threshold))?;
            }
            Ok(())
        })?;
        for (name, k, value, threshold, pass) in &checks {
            rec.check(*pass, || format!("{name} check failed at k = {k}: {value:.3e} (threshold {threshold:.1e})"));
        }
        Ok(())
    }
}
