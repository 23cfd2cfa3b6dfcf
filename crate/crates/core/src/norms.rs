//! Bubble-adapted weighted sup-norms, realized as maxima over structured
//! sample sets inside the annulus.
//!
//! With `d_j = |y - ξ_j|`:
//!
//! ```text
//! ‖u‖_*  = sup (Σ_j (1 + λ d_j)^{-(N-2)/2-τ})^{-1} λ^{-(N-2)/2} |u(y)|
//! ‖f‖_** = sup (Σ_j (1 + λ d_j)^{-(N+2)/2-τ})^{-1} λ^{-(N+2)/2} |f(y)|
//! ```

use std::cmp::Ordering;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{distance, AnnulusGeometry};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Star,
    StarStar,
}

impl NormKind {
    fn exponent(self, dim: usize, tau: f64) -> f64 {
        let n = dim as f64;
        match self {
            NormKind::Star => (n - 2.0) / 2.0 + tau,
            NormKind::StarStar => (n + 2.0) / 2.0 + tau,
        }
    }

    fn lambda_power(self, dim: usize) -> f64 {
        let n = dim as f64;
        match self {
            NormKind::Star => (n - 2.0) / 2.0,
            NormKind::StarStar => (n + 2.0) / 2.0,
        }
    }
}

/// `|f(y)|` divided by the weight of the chosen norm at `y`.
pub fn weighted_value(value: f64, y: &[f64], centers: &[Vec<f64>], lambda: f64, kind: NormKind, tau: f64) -> f64 {
    let dim = y.len();
    let e = kind.exponent(dim, tau);
    let w: f64 = centers
        .iter()
        .map(|c| (1.0 + lambda * distance(y, c)).powf(-e))
        .sum();
    value.abs() * lambda.powf(-kind.lambda_power(dim)) / w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDensity {
    /// Directions per shell around each center.
    pub shell_directions: usize,
    /// Shells per factor two in radius.
    pub shells_per_octave: usize,
    /// Innermost shell radius, in units of `1/λ`.
    pub innermost: f64,
    /// Points on the arc between adjacent centers.
    pub neck_points: usize,
    /// Quasi-uniform points over the whole annulus.
    pub background: usize,
}

impl Default for SampleDensity {
    fn default() -> Self {
        Self {
            shell_directions: 48,
            shells_per_octave: 1,
            innermost: 1.0 / 16.0,
            neck_points: 16,
            background: 4000,
        }
    }
}

impl SampleDensity {
    /// Twice as many points of every family.
    pub fn doubled(&self) -> Self {
        Self {
            shell_directions: 2 * self.shell_directions,
            shells_per_octave: 2 * self.shells_per_octave,
            innermost: self.innermost,
            neck_points: 2 * self.neck_points,
            background: 2 * self.background,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormSampleSet {
    pub points: Vec<Vec<f64>>,
}

/// Quasi-uniform directions on `S²` (Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let s = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [s * phi.cos(), s * phi.sin(), z]
        })
        .collect()
}

impl NormSampleSet {
    /// Dyadic shells around every center, points along the polygon between
    /// neighbors, and a quasi-uniform background. Three-dimensional only.
    pub fn build(geom: &AnnulusGeometry, centers: &[Vec<f64>], lambda: f64, density: &SampleDensity) -> Result<Self> {
        if geom.dim != 3 {
            return Err(LabError::UnsupportedDimension(geom.dim));
        }
        if centers.is_empty() || !(lambda > 0.0) {
            return Err(LabError::Config("weighted norms need centers and a positive scale".into()));
        }
        let inside = |y: &[f64]| geom.contains_closure(y);
        let mut points = Vec::new();
        let dirs = fibonacci_sphere(density.shell_directions);
        let mut radii = Vec::new();
        let mut rho = density.innermost / lambda;
        let factor = 2f64.powf(1.0 / density.shells_per_octave as f64);
        while rho <= geom.width() {
            radii.push(rho);
            rho *= factor;
        }
        for c in centers {
            points.push(c.clone());
            for &rho in &radii {
                for d in &dirs {
                    let y = vec![c[0] + rho * d[0], c[1] + rho * d[1], c[2] + rho * d[2]];
                    if inside(&y) {
                        points.push(y);
                    }
                }
            }
        }
        if centers.len() > 1 {
            for (i, c) in centers.iter().enumerate() {
                let next = &centers[(i + 1) % centers.len()];
                let (r0, r1) = (c[..2].iter().map(|v| v * v).sum::<f64>().sqrt(), next[..2].iter().map(|v| v * v).sum::<f64>().sqrt());
                let (a0, mut a1) = (c[1].atan2(c[0]), next[1].atan2(next[0]));
                if a1 < a0 {
                    a1 += 2.0 * PI;
                }
                for s in 1..=density.neck_points {
                    let t = s as f64 / (density.neck_points + 1) as f64;
                    let ang = a0 + t * (a1 - a0);
                    let r = r0 + t * (r1 - r0);
                    let y = vec![r * ang.cos(), r * ang.sin(), c[2] + t * (next[2] - c[2])];
                    if inside(&y) {
                        points.push(y);
                    }
                }
            }
        }
        // background: radial levels times Fibonacci directions
        let levels = ((density.background as f64).cbrt().ceil() as usize).max(2);
        let per_level = density.background.div_ceil(levels);
        let bg_dirs = fibonacci_sphere(per_level);
        for l in 0..levels {
            let rho = geom.a + geom.width() * (l as f64 + 0.5) / levels as f64;
            for d in &bg_dirs {
                points.push(vec![rho * d[0], rho * d[1], rho * d[2]]);
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn within(&self, center: &[f64], radius: f64) -> usize {
        self.points.iter().filter(|p| distance(p, center) <= radius).count()
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = Vec<f64>>) {
        self.points.extend(more);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightedNormReport {
    pub kind: NormKind,
    pub value: f64,
    pub argmax: Vec<f64>,
    pub tau: f64,
    pub samples: usize,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Maximum over the samples of the weighted value of `f`. Ties go to the
/// lexicographically smallest point, so the result does not depend on the
/// thread schedule.
pub fn weighted_norm<F>(
    f: F,
    centers: &[Vec<f64>],
    lambda: f64,
    kind: NormKind,
    tau: f64,
    samples: &NormSampleSet,
) -> Result<WeightedNormReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if centers.is_empty() || !(lambda > 0.0) {
        return Err(LabError::Config("weighted norms need centers and a positive scale".into()));
    }
    let values: Vec<(f64, usize)> = samples
        .points
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let v = f(y).map_err(|e| LabError::Evaluation {
                point: y.clone(),
                message: e.to_string(),
            })?;
            if !v.is_finite() {
                return Err(LabError::Evaluation {
                    point: y.clone(),
                    message: format!("non-finite value {v}"),
                });
            }
            Ok((weighted_value(v, y, centers, lambda, kind, tau), i))
        })
        .collect::<Result<_>>()?;
    let best = values.iter().copied().fold(None::<(f64, usize)>, |acc, (v, i)| match acc {
        None => Some((v, i)),
        Some((bv, bi)) => {
            let better = v > bv || (v == bv && lexicographic(&samples.points[i], &samples.points[bi]) == Ordering::Less);
            Some(if better { (v, i) } else { (bv, bi) })
        }
    });
    let (value, argmax) = match best {
        Some((v, i)) => (v, samples.points[i].clone()),
        None => (0.0, Vec::new()),
    };
    Ok(WeightedNormReport {
        kind,
        value,
        argmax,
        tau,
        samples: samples.len(),
    })
}

/// `Σ_{j≥2} (λ |ξ_j - ξ_1|)^{-τ}`.
pub fn weight_tail_sum(centers: &[Vec<f64>], lambda: f64, tau: f64) -> f64 {
    match centers.split_first() {
        None => 0.0,
        Some((first, rest)) => rest.iter().map(|c| (lambda * distance(c, first)).powf(-tau)).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::{bubble_constant, Bubble};
    use crate::geometry::{polygon_centers, PolygonConfig};

    fn geom() -> AnnulusGeometry {
        AnnulusGeometry::new(1.0, 2.0, 3).unwrap()
    }

    #[test]
    fn shells_resolve_every_center() {
        let g = geom();
        let cfg = PolygonConfig::new(&g, 8, 1.5, 0.5).unwrap();
        let centers = polygon_centers(&cfg);
        let set = NormSampleSet::build(&g, &centers, cfg.lambda, &SampleDensity::default()).unwrap();
        for c in &centers {
            assert!(set.within(c, 10.0 / cfg.lambda) >= 200);
        }
        assert!(set.points.iter().all(|p| g.contains_closure(p)));
    }

    #[test]
    fn single_bubble_star_norm() {
        let g = geom();
        let lambda = 40.0;
        let c = vec![1.5, 0.0, 0.0];
        let bub = Bubble::new(c.clone(), lambda).unwrap();
        let centers = vec![c.clone()];
        let set = NormSampleSet::build(&g, &centers, lambda, &SampleDensity::default()).unwrap();
        let nearest = set
            .points
            .iter()
            .min_by(|a, b| distance(a, &c).total_cmp(&distance(b, &c)))
            .unwrap();
        let cn = bubble_constant(3);
        let at_center = weighted_value(bub.value(nearest), nearest, &centers, lambda, NormKind::Star, DEFAULT_TAU);
        assert!(at_center <= cn + 1e-12 && at_center >= cn / 2.0);
        let rep = weighted_norm(|y| Ok(bub.value(y)), &centers, lambda, NormKind::Star, DEFAULT_TAU, &set).unwrap();
        assert!(rep.value >= at_center);
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let g = geom();
        let centers = vec![vec![1.5, 0.0, 0.0]];
        let set = NormSampleSet::build(&g, &centers, 10.0, &SampleDensity::default()).unwrap();
        let rep = weighted_norm(|_| Ok(0.0), &centers, 10.0, NormKind::StarStar, DEFAULT_TAU, &set).unwrap();
        assert_eq!(rep.value, 0.0);
    }

    #[test]
    fn starstar_norm_of_power_is_scale_free() {
        let g = geom();
        let c = vec![1.5, 0.0, 0.0];
        let centers = vec![c.clone()];
        let vals: Vec<f64> = [25.0, 50.0, 100.0]
            .iter()
            .map(|&lambda| {
                let bub = Bubble::new(c.clone(), lambda).unwrap();
                let set = NormSampleSet::build(&g, &centers, lambda, &SampleDensity::default()).unwrap();
                weighted_norm(|y| Ok(bub.value(y).powi(5)), &centers, lambda, NormKind::StarStar, DEFAULT_TAU, &set)
                    .unwrap()
                    .value
            })
            .collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        assert!(hi / lo < 1.05, "{vals:?}");
    }

    #[test]
    fn homogeneous_and_monotone_in_samples() {
        let g = geom();
        let cfg = PolygonConfig::new(&g, 4, 1.4, 1.0).unwrap();
        let centers = polygon_centers(&cfg);
        let f = |y: &[f64]| Ok((3.0 * y[0]).sin() + y[2] * y[1]);
        let mut set = NormSampleSet::build(&g, &centers, cfg.lambda, &SampleDensity::default()).unwrap();
        let base = weighted_norm(f, &centers, cfg.lambda, NormKind::Star, DEFAULT_TAU, &set).unwrap();
        let scaled = weighted_norm(|y| f(y).map(|v| -2.5 * v), &centers, cfg.lambda, NormKind::Star, DEFAULT_TAU, &set).unwrap();
        assert!((scaled.value - 2.5 * base.value).abs() < 1e-12 * scaled.value);
        set.extend(fibonacci_sphere(50).into_iter().map(|d| vec![1.7 * d[0], 1.7 * d[1], 1.7 * d[2]]));
        let more = weighted_norm(f, &centers, cfg.lambda, NormKind::Star, DEFAULT_TAU, &set).unwrap();
        assert!(more.value >= base.value);
    }

    #[test]
    fn evaluator_errors_name_the_point() {
        let g = geom();
        let centers = vec![vec![1.5, 0.0, 0.0]];
        let set = NormSampleSet::build(&g, &centers, 10.0, &SampleDensity::default()).unwrap();
        let err = weighted_norm(
            |y| if y[2] > 0.5 { Err(LabError::Config("boom".into())) } else { Ok(1.0) },
            &centers,
            10.0,
            NormKind::Star,
            DEFAULT_TAU,
            &set,
        )
        .unwrap_err();
        match err {
            LabError::Evaluation { point, .. } => assert!(point[2] > 0.5),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn tail_sum_cases() {
        let g = geom();
        let two = polygon_centers(&PolygonConfig::new(&g, 2, 1.5, 1.0).unwrap());
        assert!((weight_tail_sum(&two, 4.0, 0.5) - (2.0 * 1.5 * 4.0f64).powf(-0.5)).abs() < 1e-14);
        let many = polygon_centers(&PolygonConfig::new(&g, 9, 1.5, 1.0).unwrap());
        assert!((weight_tail_sum(&many, 81.0, 1e-12) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn tail_sum_stays_bounded_in_k() {
        let g = geom();
        let vals: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&k| {
                let cfg = PolygonConfig::new(&g, k, 1.5, 0.5).unwrap();
                weight_tail_sum(&polygon_centers(&cfg), cfg.lambda, DEFAULT_TAU)
            })
            .collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        assert!(hi / lo < 3.0, "{vals:?}");
    }
}
