//! Dormand–Prince 5(4) integrator for small first-order systems.

use crate::error::LabError;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h_min: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

/// One accepted step, with enough data for cubic Hermite interpolation.
#[derive(Debug, Clone, Copy)]
pub struct Step<const D: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; D],
    pub y1: [f64; D],
    pub f0: [f64; D],
    pub f1: [f64; D],
}

impl<const D: usize> Step<D> {
    pub fn interpolate(&self, t: f64) -> [f64; D] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i];
        }
        out
    }
}

/// What the driver should do after an accepted step.
pub enum Control {
    Continue,
    Stop,
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`, calling `on_step` after
/// every accepted step. Steps never jump over any of the `stops`, which
/// lets callers collect values exactly at prescribed abscissae.
pub fn integrate<const D: usize, F, S>(
    f: F,
    t0: f64,
    y0: [f64; D],
    t1: f64,
    stops: &[f64],
    ctrl: StepControl,
    mut on_step: S,
) -> Result<(f64, [f64; D]), LabError>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
    S: FnMut(&Step<D>) -> Control,
{
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let span = t1 - t0;
    let mut h = (span * 1e-3).max(ctrl.h_min * 10.0);
    let mut next_stop = stops.iter().position(|&s| s > t0).unwrap_or(stops.len());

    for _ in 0..ctrl.max_steps {
        if t >= t1 {
            return Ok((t, y));
        }
        let target = stops.get(next_stop).copied().unwrap_or(t1).min(t1);
        let mut hit = false;
        if t + h >= target - 1e-15 * target.abs().max(1.0) {
            h = target - t;
            hit = true;
        }

        let mut tmp = [0.0; D];
        let stage = |tmp: &mut [f64; D], coeffs: &[(f64, &[f64; D])]| {
            for i in 0..D {
                tmp[i] = y[i] + h * coeffs.iter().map(|(c, k)| c * k[i]).sum::<f64>();
            }
        };
        stage(&mut tmp, &[(A21, &k1)]);
        let k2 = f(t + C2 * h, &tmp);
        stage(&mut tmp, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(t + C3 * h, &tmp);
        stage(&mut tmp, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(t + C4 * h, &tmp);
        stage(&mut tmp, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(t + C5 * h, &tmp);
        stage(&mut tmp, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(t + h, &tmp);
        let mut y_new = [0.0; D];
        for i in 0..D {
            y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        let t_new = if hit { target } else { t + h };
        let k7 = f(t_new, &y_new);

        let mut err = 0.0_f64;
        for i in 0..D {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ctrl.atol + ctrl.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }

        if err <= 1.0 || h.abs() <= ctrl.h_min {
            if !err.is_finite() {
                return Err(LabError::Integration(format!("non-finite state at t = {t}")));
            }
            let step = Step {
                t0: t,
                t1: t_new,
                y0: y,
                y1: y_new,
                f0: k1,
                f1: k7,
            };
            t = t_new;
            y = y_new;
            k1 = k7;
            if hit && next_stop < stops.len() && (stops[next_stop] - t).abs() <= 1e-12 * t.abs().max(1.0) {
                next_stop += 1;
            }
            if let Control::Stop = on_step(&step) {
                return Ok((t, y));
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
            if h.abs() < ctrl.h_min {
                return Err(LabError::Integration(format!("step size underflow at t = {t}")));
            }
        }
    }
    Err(LabError::Integration("maximum number of steps exceeded".into()))
}
