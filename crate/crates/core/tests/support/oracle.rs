//! Independent finite-difference oracles for the three-dimensional radial
//! problem. With `w = r u` the equation `u'' + (2/r) u' + u^5 = 0` becomes
//! `w'' + w^5 / r^4 = 0`, and the mode operator becomes
//! `-w'' + (λ_k / r² - 5 u^4) w` with `w(a) = w(b) = 0`.

#![allow(dead_code)]

pub struct BvpSolution {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub newton_iterations: usize,
    /// Sup of the discrete residual after the last Newton step.
    pub residual: f64,
}

impl BvpSolution {
    pub fn max_u(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid argmax of `r^{1/2} u`, refined by a parabola through the three
    /// nodes around it.
    pub fn argmax_sqrt_r_u(&self) -> f64 {
        let g: Vec<f64> = self.r.iter().zip(&self.u).map(|(r, u)| r.sqrt() * u).collect();
        let i = (1..g.len() - 1).max_by(|&i, &j| g[i].total_cmp(&g[j])).unwrap();
        let h = self.r[1] - self.r[0];
        let denom = g[i - 1] - 2.0 * g[i] + g[i + 1];
        self.r[i] + 0.5 * h * (g[i - 1] - g[i + 1]) / denom
    }

    /// `(4π/3) ∫ u^6 r² dr` by composite Simpson; equals `I(u)` for a solution.
    pub fn energy(&self) -> f64 {
        let h = self.r[1] - self.r[0];
        let f: Vec<f64> = self.r.iter().zip(&self.u).map(|(r, u)| u.powi(6) * r * r).collect();
        let n = f.len() - 1;
        assert!(n.is_multiple_of(2), "Simpson needs an even interval count");
        let mut s = f[0] + f[n];
        for (i, v) in f.iter().enumerate().take(n).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        4.0 * std::f64::consts::PI / 3.0 * s * h / 3.0
    }
}

/// Solves `T x = d` for a tridiagonal `T` given by its three bands.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper.first().copied().unwrap_or(0.0) / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = upper[i] / m;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

fn residual(w: &[f64], r: &[f64], h: f64) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { w[i - 1] };
            let right = if i + 1 == n { 0.0 } else { w[i + 1] };
            (2.0 * w[i] - left - right) / (h * h) - w[i].powi(5) / r[i].powi(4)
        })
        .collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Positive solution on `nodes` equispaced nodes including both endpoints.
/// Petviashvili iteration finds the positive branch, damped Newton polishes it.
pub fn solve_bvp(a: f64, b: f64, nodes: usize) -> BvpSolution {
    let n = nodes - 2;
    let h = (b - a) / (nodes - 1) as f64;
    let r: Vec<f64> = (1..=n).map(|i| a + i as f64 * h).collect();
    let lap_diag = vec![2.0 / (h * h); n];
    let lap_off = vec![-1.0 / (h * h); n - 1];
    let apply_lap = |w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let left = if i == 0 { 0.0 } else { w[i - 1] };
                let right = if i + 1 == n { 0.0 } else { w[i + 1] };
                (2.0 * w[i] - left - right) / (h * h)
            })
            .collect()
    };
    let mut w: Vec<f64> = r.iter().map(|x| (std::f64::consts::PI * (x - a) / (b - a)).sin()).collect();
    for _ in 0..400 {
        let nl: Vec<f64> = w.iter().zip(&r).map(|(w, r)| w.powi(5) / r.powi(4)).collect();
        let lw = apply_lap(&w);
        let num: f64 = w.iter().zip(&lw).map(|(a, b)| a * b).sum();
        let den: f64 = w.iter().zip(&nl).map(|(a, b)| a * b).sum();
        let m = (num / den).powf(1.25);
        let next: Vec<f64> = thomas(&lap_off, &lap_diag, &lap_off, &nl).into_iter().map(|v| m * v).collect();
        let change = sup(&next.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
        w = next;
        if change < 1e-10 * sup(&w) {
            break;
        }
    }
    let mut iterations = 0;
    let mut f = residual(&w, &r, h);
    for _ in 0..50 {
        iterations += 1;
        let diag: Vec<f64> = w.iter().zip(&r).map(|(w, r)| 2.0 / (h * h) - 5.0 * w.powi(4) / r.powi(4)).collect();
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = thomas(&lap_off, &diag, &lap_off, &neg);
        let f0 = sup(&f);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&delta).map(|(w, d)| w + step * d).collect();
            let ft = residual(&trial, &r, h);
            if sup(&ft) < f0 || step < 1e-4 {
                w = trial;
                f = ft;
                break;
            }
            step *= 0.5;
        }
        if sup(&delta) * step < 1e-14 * sup(&w) {
            break;
        }
    }
    let mut rr = vec![a];
    rr.extend(&r);
    rr.push(b);
    let mut u = vec![0.0];
    u.extend(w.iter().zip(&r).map(|(w, r)| w / r));
    u.push(0.0);
    BvpSolution {
        r: rr,
        u,
        newton_iterations: iterations,
        residual: sup(&f),
    }
}

/// Richardson combination of the solves on `nodes` and `2 nodes - 1` nodes,
/// reported on the coarse grid.
pub fn solve_bvp_extrapolated(a: f64, b: f64, nodes: usize) -> BvpSolution {
    let coarse = solve_bvp(a, b, nodes);
    let fine = solve_bvp(a, b, 2 * nodes - 1);
    let u = coarse
        .u
        .iter()
        .enumerate()
        .map(|(i, uc)| (4.0 * fine.u[2 * i] - uc) / 3.0)
        .collect();
    BvpSolution {
        r: coarse.r,
        u,
        newton_iterations: coarse.newton_iterations.max(fine.newton_iterations),
        residual: coarse.residual.max(fine.residual),
    }
}

fn sturm_count(diag: &[f64], off2: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let prev = if q == 0.0 { 1e-300 } else { q };
        q = diag[i] - x - off2[i - 1] / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Lowest `n_eigs` eigenvalues of `-w'' + (λ_k/r² - 5 u⁴) w` on the nodes of
/// `sol`, by Sturm-sequence bisection.
pub fn mode_eigenvalues(sol: &BvpSolution, k: usize, n_eigs: usize) -> Vec<f64> {
    let h = sol.r[1] - sol.r[0];
    let lk = (k * (k + 1)) as f64;
    let inner = &sol.r[1..sol.r.len() - 1];
    let uin = &sol.u[1..sol.u.len() - 1];
    let diag: Vec<f64> = inner
        .iter()
        .zip(uin)
        .map(|(r, u)| 2.0 / (h * h) + lk / (r * r) - 5.0 * u.powi(4))
        .collect();
    let off2 = vec![1.0 / (h * h * h * h); diag.len() - 1];
    let lo0 = diag.iter().fold(f64::INFINITY, |m, d| m.min(*d)) - 2.0 / (h * h);
    let hi0 = diag.iter().fold(f64::NEG_INFINITY, |m, d| m.max(*d)) + 2.0 / (h * h);
    (0..n_eigs)
        .map(|i| {
            let (mut lo, mut hi) = (lo0, hi0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sturm_count(&diag, &off2, mid) > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-13 * hi.abs().max(1.0) {
                    break;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}
