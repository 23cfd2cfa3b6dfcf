use std::path::{Path, PathBuf};

use bubble_core::norms::SampleDensity;
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { a: 1.0, b: 2.0, dim: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialSection {
    /// Target for `|u(b)|` in the shooting bisection.
    pub tol: f64,
    pub intervals: usize,
    /// Largest accepted scaled ODE residual on the output grid.
    pub ode_residual_tol: f64,
    /// Largest accepted relative gap between `∫|∇u₀|²` and `∫u₀^{2*}`.
    pub identity_tol: f64,
}

impl Default for RadialSection {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            intervals: 4096,
            ode_residual_tol: 1e-8,
            identity_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub k_max: usize,
    pub n_eigs: usize,
    pub nodes: usize,
    /// Certificate threshold on `min |μ_{k,i}|`.
    pub margin: f64,
    pub richardson_tol: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            k_max: 12,
            n_eigs: 3,
            nodes: 2000,
            margin: 1e-3,
            richardson_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub modes: Vec<usize>,
    /// Inner radius grid on the normalized annulus `(R, 1)`.
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    pub nodes: usize,
    pub bracket_width: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            modes: vec![1, 2, 3, 4],
            r_min: 0.02,
            r_max: 0.95,
            points: 94,
            nodes: 2000,
            bracket_width: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeSection {
    pub ell_range: [f64; 2],
    /// Defaults to the middle 90% of `(a, b)`.
    pub r_range: Option<[f64; 2]>,
    pub ell_points: usize,
    pub r_points: usize,
    pub grad_tol: f64,
    /// Largest accepted distance between the maximizer's `r` and `r₀`.
    pub r0_tol: f64,
    /// Relative agreement of `A`, `B` with their closed forms.
    pub constant_tol: f64,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        Self {
            ell_range: [1e-2, 1e2],
            r_range: None,
            ell_points: 201,
            r_points: 201,
            grad_tol: 1e-6,
            r0_tol: 1e-3,
            constant_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolygonSection {
    pub k_list: Vec<usize>,
    /// Overrides the landscape maximizer when set.
    pub ell: Option<f64>,
    pub r: Option<f64>,
    pub l_max: usize,
}

impl Default for PolygonSection {
    fn default() -> Self {
        Self {
            k_list: vec![8, 16, 32, 64],
            ell: None,
            r: None,
            l_max: 48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructSection {
    /// Grid points per side of the `x₃ = 0` slice.
    pub slice_points: usize,
    pub boundary_samples: usize,
    pub boundary_tol: f64,
}

impl Default for ConstructSection {
    fn default() -> Self {
        Self {
            slice_points: 201,
            boundary_samples: 1000,
            boundary_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub tau: f64,
    pub density: SampleDensity,
    pub check_density: bool,
    /// Largest accepted relative change of a norm under doubled sampling.
    pub sampling_tol: f64,
    pub expansion: bool,
    pub ablation: bool,
    /// Largest accepted final relative error of the expansion model.
    pub expansion_tol: f64,
    /// Smallest accepted unprojected shift, in units of the model error.
    pub ablation_factor: f64,
    pub quad_rel_tol: f64,
    pub quad_abs_tol: f64,
    pub quad_max_evals: usize,
    pub symmetry_probes: usize,
    pub symmetry_tol: f64,
    /// Displacement of one center in the symmetry ablation.
    pub perturbation: f64,
    /// The perturbed ansatz must deviate by more than this.
    pub perturbation_floor: f64,
    pub pde_points: usize,
    /// Stencil step as a fraction of the local length scale of `U*`.
    pub pde_step: f64,
    pub pde_ratio: [f64; 2],
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            tau: 0.5,
            density: SampleDensity::default(),
            check_density: true,
            sampling_tol: 0.05,
            expansion: true,
            ablation: true,
            expansion_tol: 0.2,
            ablation_factor: 3.0,
            quad_rel_tol: 1e-7,
            quad_abs_tol: 1e-7,
            quad_max_evals: 8_000_000,
            symmetry_probes: 100,
            symmetry_tol: 1e-8,
            perturbation: 1e-3,
            perturbation_floor: 1e-5,
            pde_points: 200,
            pde_step: 0.1,
            pde_ratio: [3.6, 4.4],
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub radial: RadialSection,
    pub spectrum: SpectrumSection,
    pub sweep: SweepSection,
    pub landscape: LandscapeSection,
    pub polygon: PolygonSection,
    pub construct: ConstructSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

fn positive(name: &str, v: f64) -> Result<(), RunError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RunError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<(), RunError> {
    if v >= min {
        Ok(())
    } else {
        Err(RunError::Config(format!("{name} must be at least {min}, got {v}")))
    }
}

fn ascending(name: &str, v: &[usize]) -> Result<(), RunError> {
    if v.is_empty() {
        return Err(RunError::Config(format!("{name} must not be empty")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RunError::Config(format!("{name} must be sorted strictly ascending, got {v:?}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let cfg: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let g = &self.geometry;
        positive("geometry.a", g.a)?;
        if g.b <= g.a || !g.b.is_finite() {
            return Err(RunError::Config(format!(
                "geometry.b must exceed geometry.a (invariant a < b), got a = {}, b = {}",
                g.a, g.b
            )));
        }
        at_least("geometry.dim", g.dim, 3)?;

        positive("radial.tol", self.radial.tol)?;
        positive("radial.ode_residual_tol", self.radial.ode_residual_tol)?;
        positive("radial.identity_tol", self.radial.identity_tol)?;
        at_least("radial.intervals", self.radial.intervals, 16)?;

        let s = &self.spectrum;
        positive("spectrum.margin", s.margin)?;
        positive("spectrum.richardson_tol", s.richardson_tol)?;
        at_least("spectrum.n_eigs", s.n_eigs, 1)?;
        at_least("spectrum.nodes", s.nodes, s.n_eigs + 2)?;

        let w = &self.sweep;
        ascending("sweep.modes", &w.modes)?;
        if !(w.r_min > 0.0 && w.r_min < w.r_max && w.r_max < 1.0) {
            return Err(RunError::Config(format!(
                "sweep radii must satisfy 0 < r_min < r_max < 1, got [{}, {}]",
                w.r_min, w.r_max
            )));
        }
        at_least("sweep.points", w.points, 2)?;
        at_least("sweep.nodes", w.nodes, 3)?;
        positive("sweep.bracket_width", w.bracket_width)?;

        let l = &self.landscape;
        if !(l.ell_range[0] > 0.0 && l.ell_range[0] < l.ell_range[1]) {
            return Err(RunError::Config(format!(
                "landscape.ell_range must satisfy 0 < min < max, got {:?}",
                l.ell_range
            )));
        }
        if let Some([lo, hi]) = l.r_range {
            if !(lo > g.a && lo < hi && hi < g.b) {
                return Err(RunError::Config(format!(
                    "landscape.r_range must lie inside (a, b), got [{lo}, {hi}]"
                )));
            }
        }
        at_least("landscape.ell_points", l.ell_points, 3)?;
        at_least("landscape.r_points", l.r_points, 3)?;
        positive("landscape.grad_tol", l.grad_tol)?;
        positive("landscape.r0_tol", l.r0_tol)?;
        positive("landscape.constant_tol", l.constant_tol)?;

        let p = &self.polygon;
        ascending("polygon.k_list", &p.k_list)?;
        if p.k_list[0] == 0 {
            return Err(RunError::Config("polygon.k_list entries must be at least 1".into()));
        }
        if let Some(ell) = p.ell {
            positive("polygon.ell", ell)?;
        }
        if let Some(r) = p.r {
            if !(r > g.a && r < g.b) {
                return Err(RunError::Config(format!("polygon.r = {r} must lie in (a, b)")));
            }
        }
        at_least("polygon.l_max", p.l_max, 1)?;

        let c = &self.construct;
        at_least("construct.slice_points", c.slice_points, 2)?;
        at_least("construct.boundary_samples", c.boundary_samples, 1)?;
        positive("construct.boundary_tol", c.boundary_tol)?;

        let v = &self.verify;
        positive("verify.tau", v.tau)?;
        positive("verify.density.innermost", v.density.innermost)?;
        positive("verify.sampling_tol", v.sampling_tol)?;
        positive("verify.expansion_tol", v.expansion_tol)?;
        positive("verify.ablation_factor", v.ablation_factor)?;
        positive("verify.quad_rel_tol", v.quad_rel_tol)?;
        positive("verify.quad_abs_tol", v.quad_abs_tol)?;
        positive("verify.symmetry_tol", v.symmetry_tol)?;
        positive("verify.perturbation", v.perturbation)?;
        positive("verify.perturbation_floor", v.perturbation_floor)?;
        positive("verify.pde_step", v.pde_step)?;
        at_least("verify.pde_points", v.pde_points, 1)?;
        at_least("verify.symmetry_probes", v.symmetry_probes, 1)?;
        if !(v.pde_ratio[0] > 0.0 && v.pde_ratio[0] < v.pde_ratio[1]) {
            return Err(RunError::Config(format!("verify.pde_ratio must be an interval, got {:?}", v.pde_ratio)));
        }
        if (v.expansion || v.check_density) && p.k_list.len() < 2 {
            return Err(RunError::Config("polygon.k_list needs at least two entries for the fits".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_the_default_run() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.polygon.k_list, vec![8, 16, 32, 64]);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn inverted_radii_name_the_invariant() {
        let err = RunConfig::from_toml("[geometry]\na = 2.0\nb = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("a < b"), "{err}");
    }

    #[test]
    fn rejects_unsorted_k_and_bad_tolerances() {
        assert!(RunConfig::from_toml("[polygon]\nk_list = [16, 8]\n").is_err());
        assert!(RunConfig::from_toml("[radial]\ntol = 0.0\n").is_err());
        assert!(RunConfig::from_toml("[verify]\nsymmetry_tol = -1.0\n").is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(RunConfig::from_toml("[geometry]\nc = 3.0\n").is_err());
        assert!(RunConfig::from_toml("[nonsense]\n").is_err());
    }
}
