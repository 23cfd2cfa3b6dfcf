//! Annulus geometry, critical exponents, the regular-polygon bubble layout
//! and the finite symmetry group (rotations by `2π/k` in the `(x1, x2)`
//! plane, sign flips of `x2, …, xN`).

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{LabError, Result};

/// Default lower bound on the scaled concentration `ℓ`; `ℓ ∈ [η, 1/η]`.
pub const DEFAULT_ETA: f64 = 1e-2;

/// Coordinate tolerance used when deduplicating orbit points.
pub const ORBIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusGeometry {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
}

impl AnnulusGeometry {
    pub fn new(a: f64, b: f64, dim: usize) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(LabError::Geometry(format!("inner radius a = {a} must be positive")));
        }
        if !(b > a) || !b.is_finite() {
            return Err(LabError::Geometry(format!("outer radius b = {b} must exceed a = {a}")));
        }
        if dim < 3 {
            return Err(LabError::Geometry(format!("dimension N = {dim} must be at least 3")));
        }
        Ok(Self { a, b, dim })
    }

    pub fn n(&self) -> f64 {
        self.dim as f64
    }

    /// Nonlinearity power `p = (N+2)/(N-2)`.
    pub fn p(&self) -> f64 {
        (self.n() + 2.0) / (self.n() - 2.0)
    }

    /// Critical Sobolev exponent `2* = 2N/(N-2) = p + 1`.
    pub fn critical_exponent(&self) -> f64 {
        2.0 * self.n() / (self.n() - 2.0)
    }

    /// Area of the unit sphere `S^{N-1}`.
    pub fn sphere_area(&self) -> f64 {
        unit_sphere_area(self.dim)
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// The same annulus scaled by `1/t`.
    pub fn rescaled(&self, t: f64) -> Self {
        Self {
            a: self.a / t,
            b: self.b / t,
            dim: self.dim,
        }
    }

    pub fn contains_closure(&self, y: &[f64]) -> bool {
        let r = norm(y);
        r >= self.a * (1.0 - 1e-12) && r <= self.b * (1.0 + 1e-12)
    }

    /// Distance from a point of the annulus to its boundary.
    pub fn boundary_distance(&self, y: &[f64]) -> f64 {
        let r = norm(y);
        (r - self.a).min(self.b - r)
    }
}

pub fn unit_sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(0.5 * n) / statrs::function::gamma::gamma(0.5 * n)
}

pub fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `k` bubbles on a regular polygon of radius `r` with `λ = ℓ k²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolygonConfig {
    pub k: usize,
    pub r: f64,
    pub ell: f64,
    pub lambda: f64,
    pub dim: usize,
}

impl PolygonConfig {
    pub fn new(geom: &AnnulusGeometry, k: usize, r: f64, ell: f64) -> Result<Self> {
        Self::with_eta(geom, k, r, ell, DEFAULT_ETA)
    }

    pub fn with_eta(geom: &AnnulusGeometry, k: usize, r: f64, ell: f64, eta: f64) -> Result<Self> {
        if k == 0 {
            return Err(LabError::Config("polygon needs k >= 1".into()));
        }
        if !(r > geom.a && r < geom.b) {
            return Err(LabError::Config(format!(
                "polygon radius r = {r} must lie in ({}, {})",
                geom.a, geom.b
            )));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(LabError::Config(format!("eta = {eta} must lie in (0, 1]")));
        }
        if !(ell >= eta && ell <= 1.0 / eta) {
            return Err(LabError::Config(format!(
                "scaled concentration ell = {ell} outside [{eta}, {}]",
                1.0 / eta
            )));
        }
        let kf = k as f64;
        Ok(Self {
            k,
            r,
            ell,
            lambda: ell * kf * kf,
            dim: geom.dim,
        })
    }

    /// Angle of the `j`-th vertex (`j = 1..=k`).
    pub fn vertex_angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.k as f64
    }
}

/// Vertices `ξ_j = r (cos 2πj/k, sin 2πj/k, 0, …, 0)`, `j = 1..=k`.
pub fn polygon_centers(cfg: &PolygonConfig) -> Vec<Vec<f64>> {
    (1..=cfg.k)
        .map(|j| {
            let th = cfg.vertex_angle(j);
            let mut x = vec![0.0; cfg.dim];
            x[0] = cfg.r * th.cos();
            x[1] = cfg.r * th.sin();
            x
        })
        .collect()
}

/// Rotation by `angle` in the `(x1, x2)` plane.
pub fn rotate_plane(y: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let mut out = y.to_vec();
    out[0] = c * y[0] - s * y[1];
    out[1] = s * y[0] + c * y[1];
    out
}

/// Flips the sign of every coordinate `x_{i+2}` whose bit `i` is set in `mask`.
pub fn flip_coordinates(y: &[f64], mask: usize) -> Vec<f64> {
    let mut out = y.to_vec();
    for (i, v) in out.iter_mut().enumerate().skip(1) {
        if mask >> (i - 1) & 1 == 1 {
            *v = -*v;
        }
    }
    out
}

/// Orbit of a point under the discrete symmetry group.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetryProbe {
    pub base: Vec<f64>,
    pub orbit: Vec<Vec<f64>>,
}

impl SymmetryProbe {
    pub fn len(&self) -> usize {
        self.orbit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbit.is_empty()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.orbit.iter().any(|q| same_point(q, y))
    }
}

fn same_point(x: &[f64], y: &[f64]) -> bool {
    x.iter().zip(y).all(|(a, b)| (a - b).abs() <= ORBIT_TOL * (1.0 + a.abs().max(b.abs())))
}

/// Full orbit of `y`: every rotation `2πj/k` composed with every subset of
/// the sign flips of `x2, …, xN`.
pub fn symmetry_orbit(y: &[f64], geom: &AnnulusGeometry, k: usize) -> Result<SymmetryProbe> {
    if y.len() != geom.dim {
        return Err(LabError::Geometry(format!(
            "point has {} coordinates, annulus is {}-dimensional",
            y.len(),
            geom.dim
        )));
    }
    if !geom.contains_closure(y) {
        return Err(LabError::Geometry(format!(
            "|y| = {} outside [{}, {}]",
            norm(y),
            geom.a,
            geom.b
        )));
    }
    if k == 0 {
        return Err(LabError::Config("symmetry group needs k >= 1".into()));
    }
    let masks = 1usize << (geom.dim - 1);
    let mut orbit: Vec<Vec<f64>> = Vec::with_capacity(masks * k);
    for j in 0..k {
        let angle = 2.0 * PI * j as f64 / k as f64;
        for mask in 0..masks {
            let q = rotate_plane(&flip_coordinates(y, mask), angle);
            if !orbit.iter().any(|o| same_point(o, &q)) {
                orbit.push(q);
            }
        }
    }
    Ok(SymmetryProbe {
        base: y.to_vec(),
        orbit,
    })
}
