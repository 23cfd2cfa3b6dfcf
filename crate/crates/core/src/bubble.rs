//! Standard bubbles `U_{ξ,λ}(y) = C_N λ^{(N-2)/2} (1 + λ²|y-ξ|²)^{-(N-2)/2}`,
//! the positive entire solutions of `-ΔU = U^{(N+2)/(N-2)}` in `ℝ^N`.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::norm;
use crate::projection::ProjectedBubble;

/// `C_N = (N(N-2))^{(N-2)/4}`.
pub fn bubble_constant(dim: usize) -> f64 {
    let n = dim as f64;
    (n * (n - 2.0)).powf((n - 2.0) / 4.0)
}

/// `c∞` with `U_{0,1}(y) |y|^{N-2} → c∞` as `|y| → ∞`.
pub fn far_field_coefficient(dim: usize) -> f64 {
    bubble_constant(dim)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bubble {
    pub center: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BubbleEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub laplacian: f64,
}

impl Bubble {
    pub fn new(center: Vec<f64>, lambda: f64) -> Result<Self> {
        if center.len() < 3 {
            return Err(LabError::UnsupportedDimension(center.len()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(LabError::Config(format!("bubble scale must be positive, got {lambda}")));
        }
        Ok(Self { center, lambda })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn dist2(&self, y: &[f64]) -> f64 {
        self.center.iter().zip(y).map(|(c, v)| (v - c) * (v - c)).sum()
    }

    /// Value at a squared distance from the center.
    pub fn profile(&self, dist2: f64) -> f64 {
        let m = (self.dim() as f64 - 2.0) / 2.0;
        let l = self.lambda;
        bubble_constant(self.dim()) * l.powf(m) * (1.0 + l * l * dist2).powf(-m)
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.profile(self.dist2(y))
    }

    pub fn eval(&self, y: &[f64]) -> BubbleEval {
        let n = self.dim() as f64;
        let l2 = self.lambda * self.lambda;
        let d2 = self.dist2(y);
        let value = self.profile(d2);
        let f = -(n - 2.0) * l2 * value / (1.0 + l2 * d2);
        let gradient = y.iter().zip(&self.center).map(|(v, c)| f * (v - c)).collect();
        BubbleEval {
            value,
            gradient,
            laplacian: -value.powf((n + 2.0) / (n - 2.0)),
        }
    }

    /// `∂U/∂λ` at fixed center.
    pub fn d_lambda(&self, y: &[f64]) -> f64 {
        let n = self.dim() as f64;
        let t = self.lambda * self.lambda * self.dist2(y);
        0.5 * (n - 2.0) * self.value(y) / self.lambda * (1.0 - t) / (1.0 + t)
    }

    /// `∂U/∂s` when the center moves as `ξ(s) = s ξ/|ξ|`.
    pub fn d_radius(&self, y: &[f64]) -> f64 {
        let r = norm(&self.center);
        if r == 0.0 {
            return 0.0;
        }
        let g = self.eval(y).gradient;
        -g.iter().zip(&self.center).map(|(gi, c)| gi * c / r).sum::<f64>()
    }

    /// Same bubble with the center rescaled radially to `|ξ| = s`.
    pub fn with_radius(&self, s: f64) -> Self {
        let r = norm(&self.center);
        Self {
            center: self.center.iter().map(|c| c * s / r).collect(),
            lambda: self.lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            center: self.center.clone(),
            lambda,
        }
    }
}

pub fn bubble_eval(bub: &Bubble, y: &[f64]) -> BubbleEval {
    bub.eval(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parameter {
    Lambda,
    Radius,
}

pub const LAMBDA_STEP: f64 = 1e-4;
pub const RADIUS_STEP: f64 = 1e-5;
pub const HALVING_TOL: f64 = 1e-3;

/// Finite-difference derivative `∂PU/∂λ` or `∂PU/∂r`, realized as four
/// shifted projected bubbles so that many points can reuse them.
#[derive(Debug, Clone)]
pub struct ParamDerivative {
    pub which: Parameter,
    pub step: f64,
    base: Bubble,
    plus: ProjectedBubble,
    minus: ProjectedBubble,
    plus_half: ProjectedBubble,
    minus_half: ProjectedBubble,
}

impl ParamDerivative {
    pub fn new(pb: &ProjectedBubble, which: Parameter) -> Result<Self> {
        let bub = &pb.bubble;
        let geom = pb.geometry();
        let (step, shift): (f64, Box<dyn Fn(f64) -> Bubble>) = match which {
            Parameter::Lambda => (
                LAMBDA_STEP * bub.lambda,
                Box::new(|d| bub.with_lambda(bub.lambda + d)),
            ),
            Parameter::Radius => {
                let r = norm(&bub.center);
                if r == 0.0 {
                    return Err(LabError::Config("radial derivative needs a center away from the origin".into()));
                }
                (RADIUS_STEP * geom.width(), Box::new(move |d| bub.with_radius(r + d)))
            }
        };
        let build = |d: f64| pb.reproject(shift(d));
        Ok(Self {
            which,
            step,
            base: bub.clone(),
            plus: build(step)?,
            minus: build(-step)?,
            plus_half: build(0.5 * step)?,
            minus_half: build(-0.5 * step)?,
        })
    }

    /// Derivative at `y`; fails when halving the step changes it by more
    /// than `HALVING_TOL` relative to the unprojected derivative scale.
    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        let full = (self.plus.value(y) - self.minus.value(y)) / (2.0 * self.step);
        let half = (self.plus_half.value(y) - self.minus_half.value(y)) / self.step;
        let raw = match self.which {
            Parameter::Lambda => self.base.d_lambda(y),
            Parameter::Radius => self.base.d_radius(y),
        };
        let scale = half.abs().max(raw.abs()).max(f64::MIN_POSITIVE);
        let change = (full - half).abs() / scale;
        if change > HALVING_TOL {
            return Err(LabError::DerivativeUnreliable(change));
        }
        Ok(half)
    }
}

/// `Z = ∂PU/∂λ` or `∂PU/∂r` at a single point.
pub fn bubble_param_derivs(pb: &ProjectedBubble, which: Parameter, y: &[f64]) -> Result<f64> {
    ParamDerivative::new(pb, which)?.eval(y)
}
