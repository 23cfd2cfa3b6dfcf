//! Gauss–Legendre rules, composite Simpson sums and an adaptive tensor
//! cubature on 3-d boxes.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n` from the Chebyshev-like initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over `[lo, hi]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Nodes and weights mapped to `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    for l in 2..=n {
        let lf = l as f64;
        let p2 = ((2.0 * lf - 1.0) * x * p1 - (lf - 1.0) * p0) / lf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = if (1.0 - x * x).abs() < 1e-300 {
        // endpoint limit
        0.5 * nf * (nf + 1.0) * x.powi(n as i32 + 1)
    } else {
        nf * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, d)
}

/// Composite Simpson rule on uniformly spaced samples (odd count).
/// Falls back to a trapezoid correction on the last panel for even counts.
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let panels = if (n - 1).is_multiple_of(2) { n - 1 } else { n - 2 };
            let mut s = values[0] + values[panels];
            for (i, v) in values.iter().enumerate().take(panels).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = s * h / 3.0;
            if panels < n - 1 {
                total += 0.5 * h * (values[n - 2] + values[n - 1]);
            }
            total
        }
    }
}

/// Axis-aligned box in three coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Box3 {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Self { lo, hi }
    }

    fn children(&self) -> [Box3; 8] {
        let mid = [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ];
        let mut out = [*self; 8];
        for (c, b) in out.iter_mut().enumerate() {
            for d in 0..3 {
                if c >> d & 1 == 0 {
                    b.hi[d] = mid[d];
                } else {
                    b.lo[d] = mid[d];
                }
            }
        }
        out
    }
}

/// Settings of [`adaptive_cubature`].
#[derive(Debug, Clone, Copy)]
pub struct CubatureOptions {
    /// Gauss–Legendre points per coordinate on each box.
    pub order: usize,
    /// Absolute error target for the whole integral.
    pub abs_tol: f64,
    /// Maximum bisection depth.
    pub max_depth: usize,
    /// Boxes are always refined down to this depth.
    pub min_depth: usize,
}

impl Default for CubatureOptions {
    fn default() -> Self {
        Self {
            order: 5,
            abs_tol: 1e-8,
            max_depth: 14,
            min_depth: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CubatureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub boxes: usize,
    pub evaluations: usize,
    /// True when every accepted box met its share of the tolerance.
    pub converged: bool,
}

fn tensor_rule<F: Fn([f64; 3]) -> f64>(f: &F, b: &Box3, gl: &GaussLegendre) -> f64 {
    let mut total = 0.0;
    for (x, wx) in gl.mapped(b.lo[0], b.hi[0]) {
        for (y, wy) in gl.mapped(b.lo[1], b.hi[1]) {
            for (z, wz) in gl.mapped(b.lo[2], b.hi[2]) {
                total += wx * wy * wz * f([x, y, z]);
            }
        }
    }
    total
}

/// Adaptive cubature of `f` over `domain`. A box is accepted when the
/// tensor Gauss–Legendre value on it agrees with the sum over its eight
/// children to within a volume-proportional share of `abs_tol`.
///
/// Boxes of one level are processed in parallel and accepted values are
/// summed in a fixed (depth, index) order, so the result does not depend on
/// the thread count.
pub fn adaptive_cubature<F>(f: &F, domain: Box3, opts: CubatureOptions) -> CubatureResult
where
    F: Fn([f64; 3]) -> f64 + Sync,
{
    use rayon::prelude::*;

    let gl = GaussLegendre::new(opts.order);
    let pts = opts.order.pow(3);
    let volume = |b: &Box3| (0..3).map(|d| b.hi[d] - b.lo[d]).product::<f64>().abs();
    let total_volume = volume(&domain);

    let mut level: Vec<(Box3, f64)> = vec![(domain, tensor_rule(f, &domain, &gl))];
    let mut evaluations = pts;
    let mut value = 0.0;
    let mut error = 0.0;
    let mut boxes = 0;
    let mut converged = true;

    for depth in 0..=opts.max_depth {
        if level.is_empty() {
            break;
        }
        let refined: Vec<(Vec<(Box3, f64)>, f64)> = level
            .par_iter()
            .map(|(b, _)| {
                let kids: Vec<(Box3, f64)> =
                    b.children().iter().map(|c| (*c, tensor_rule(f, c, &gl))).collect();
                let sum = kids.iter().map(|k| k.1).sum::<f64>();
                (kids, sum)
            })
            .collect();
        evaluations += level.len() * 8 * pts;

        let mut next = Vec::new();
        for ((b, parent), (kids, sum)) in level.iter().zip(refined) {
            let err = (parent - sum).abs();
            let share = opts.abs_tol * volume(b) / total_volume;
            let must_refine = depth + 1 < opts.min_depth;
            if !must_refine && (err <= share || depth == opts.max_depth) {
                if err > share {
                    converged = false;
                }
                value += sum;
                error += err;
                boxes += 8;
            } else {
                next.extend(kids);
            }
        }
        level = next;
    }
    for (_, v) in &level {
        value += v;
        boxes += 1;
        converged = false;
    }

    CubatureResult {
        value,
        error_estimate: error,
        boxes,
        evaluations,
        converged,
    }
}

/// Settings of [`hcubature`].
#[derive(Debug, Clone, Copy)]
pub struct HcubatureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Hard cap on integrand evaluations.
    pub max_evals: usize,
    /// Regions bisected per round; their children are evaluated in parallel.
    pub batch: usize,
}

impl Default for HcubatureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_evals: 20_000_000,
            batch: 32,
        }
    }
}

struct Region {
    bx: Box3,
    value: f64,
    error: f64,
    split: usize,
    id: u64,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Region {}

impl PartialOrd for Region {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Region {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error).then(other.id.cmp(&self.id))
    }
}

const GM_POINTS: usize = 33;

/// Genz–Malik degree-7 rule with embedded degree-5 estimate on one box.
/// Returns `(value, error, split dimension)`.
fn genz_malik<F: Fn([f64; 3]) -> f64>(f: &F, b: &Box3) -> (f64, f64, usize) {
    const N: f64 = 3.0;
    let l2 = (9.0f64 / 70.0).sqrt();
    let l4 = (9.0f64 / 10.0).sqrt();
    let l5 = (9.0f64 / 19.0).sqrt();
    let w1 = (12824.0 - 9120.0 * N + 400.0 * N * N) / 19683.0;
    let w2 = 980.0 / 6561.0;
    let w3 = (1820.0 - 400.0 * N) / 19683.0;
    let w4 = 200.0 / 19683.0;
    let w5 = 6859.0 / 19683.0 / 8.0;
    let v1 = (729.0 - 950.0 * N + 50.0 * N * N) / 729.0;
    let v2 = 245.0 / 486.0;
    let v3 = (265.0 - 100.0 * N) / 1458.0;
    let v4 = 25.0 / 729.0;

    let c: [f64; 3] = std::array::from_fn(|d| 0.5 * (b.lo[d] + b.hi[d]));
    let hw: [f64; 3] = std::array::from_fn(|d| 0.5 * (b.hi[d] - b.lo[d]));
    let at = |off: [f64; 3]| f(std::array::from_fn(|d| c[d] + off[d] * hw[d]));
    let f0 = at([0.0; 3]);
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let mut diff = [0.0; 3];
    for d in 0..3 {
        let mut e = [0.0; 3];
        e[d] = l2;
        let a = at(e) + at(e.map(|x| -x));
        e[d] = l4;
        let bb = at(e) + at(e.map(|x| -x));
        s2 += a;
        s3 += bb;
        diff[d] = (a - 2.0 * f0 - (l2 * l2 / (l4 * l4)) * (bb - 2.0 * f0)).abs();
    }
    let mut s4 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            for si in [-1.0, 1.0] {
                for sj in [-1.0, 1.0] {
                    let mut e = [0.0; 3];
                    e[i] = si * l4;
                    e[j] = sj * l4;
                    s4 += at(e);
                }
            }
        }
    }
    let mut s5 = 0.0;
    for corner in 0..8 {
        let e: [f64; 3] = std::array::from_fn(|d| if corner >> d & 1 == 0 { -l5 } else { l5 });
        s5 += at(e);
    }
    let vol = 8.0 * hw[0] * hw[1] * hw[2];
    let i7 = vol * (w1 * f0 + w2 * s2 + w3 * s3 + w4 * s4 + w5 * s5);
    let i5 = vol * (v1 * f0 + v2 * s2 + v3 * s3 + v4 * s4);
    // ties in the fourth difference go to the widest side
    let mut split = 0;
    for d in 1..3 {
        let better = diff[d] > diff[split] * (1.0 + 1e-10)
            || ((diff[d] - diff[split]).abs() <= 1e-10 * diff[split].max(f64::MIN_POSITIVE) && hw[d] > hw[split]);
        if better {
            split = d;
        }
    }
    (i7, (i7 - i5).abs(), split)
}

/// Globally adaptive cubature over a union of boxes: the regions with the
/// largest error estimates are bisected along their roughest coordinate
/// until the summed estimate meets `max(abs_tol, rel_tol |I|)`.
///
/// The refinement sequence depends only on the integrand, so results are
/// bit-identical for any thread count.
pub fn hcubature<F>(f: &F, domains: &[Box3], opts: HcubatureOptions) -> CubatureResult
where
    F: Fn([f64; 3]) -> f64 + Sync,
{
    use rayon::prelude::*;
    use std::collections::BinaryHeap;

    let mut next_id = 0u64;
    let mut make = |bx: Box3| {
        next_id += 1;
        (bx, next_id - 1)
    };
    let eval = |(bx, id): (Box3, u64)| {
        let (value, error, split) = genz_malik(f, &bx);
        Region { bx, value, error, split, id }
    };
    let initial: Vec<(Box3, u64)> = domains.iter().map(|b| make(*b)).collect();
    let mut heap: BinaryHeap<Region> = initial.into_par_iter().map(eval).collect::<Vec<_>>().into_iter().collect();
    let mut evaluations = domains.len() * GM_POINTS;
    let mut converged = false;
    loop {
        let (mut value, mut error) = (0.0, 0.0);
        let mut regions: Vec<&Region> = heap.iter().collect();
        regions.sort_by_key(|r| r.id);
        for r in regions {
            value += r.value;
            error += r.error;
        }
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            converged = true;
        }
        if converged || evaluations >= opts.max_evals {
            return CubatureResult {
                value,
                error_estimate: error,
                boxes: heap.len(),
                evaluations,
                converged,
            };
        }
        let mut children = Vec::with_capacity(2 * opts.batch);
        for _ in 0..opts.batch.max(1) {
            let Some(r) = heap.pop() else { break };
            let d = r.split;
            let mid = 0.5 * (r.bx.lo[d] + r.bx.hi[d]);
            let (mut lo, mut hi) = (r.bx, r.bx);
            lo.hi[d] = mid;
            hi.lo[d] = mid;
            children.push(make(lo));
            children.push(make(hi));
        }
        evaluations += children.len() * GM_POINTS;
        heap.extend(children.into_par_iter().map(eval).collect::<Vec<_>>());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..12 {
            let gl = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = gl.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-14, "n={n} deg={deg} got {got}");
            }
        }
    }

    #[test]
    fn high_order_rule_weights_sum_to_two() {
        let gl = GaussLegendre::new(96);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
        assert!(gl.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let n = 11;
        let h = 0.1;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson_uniform(&v, h) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn cubature_of_peaked_gaussian() {
        let s = 0.01_f64;
        let f = |p: [f64; 3]| {
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            (-r2 / (2.0 * s * s)).exp()
        };
        let exact = (2.0 * PI).powf(1.5) * s.powi(3);
        let res = adaptive_cubature(
            &f,
            Box3::new([-1.0; 3], [1.0; 3]),
            CubatureOptions {
                abs_tol: 1e-12,
                ..Default::default()
            },
        );
        assert!(res.converged);
        assert!(((res.value - exact) / exact).abs() < 1e-6, "{res:?} vs {exact}");
    }

    #[test]
    fn genz_malik_is_exact_for_degree_seven() {
        let f = |p: [f64; 3]| p[0].powi(7) + p[0].powi(3) * p[1].powi(2) * p[2].powi(2) + p[1].powi(4) * p[2].powi(2) + 1.0;
        let b = Box3::new([0.0, -1.0, 0.5], [1.0, 2.0, 1.5]);
        // integrate each monomial exactly
        let mono = |lo: f64, hi: f64, k: i32| (hi.powi(k + 1) - lo.powi(k + 1)) / (k as f64 + 1.0);
        let exact = mono(0.0, 1.0, 7) * 3.0 * 1.0
            + mono(0.0, 1.0, 3) * mono(-1.0, 2.0, 2) * mono(0.5, 1.5, 2)
            + 1.0 * mono(-1.0, 2.0, 4) * mono(0.5, 1.5, 2)
            + 3.0;
        let (v, _, _) = genz_malik(&f, &b);
        assert!((v - exact).abs() < 1e-12 * exact.abs(), "{v} vs {exact}");
    }

    #[test]
    fn hcubature_resolves_a_corner_peak() {
        let s = 1e-3_f64;
        let f = |p: [f64; 3]| {
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            (1.0 + r2 / (s * s)).powi(-3)
        };
        // one octant of the full-space integral s³ π²/4
        let exact = s.powi(3) * PI * PI / 4.0 / 8.0;
        let res = hcubature(
            &f,
            &[Box3::new([0.0; 3], [1.0; 3])],
            HcubatureOptions {
                abs_tol: 0.0,
                rel_tol: 1e-9,
                ..Default::default()
            },
        );
        assert!(res.converged);
        assert!(((res.value - exact) / exact).abs() < 1e-8, "{res:?} vs {exact}");
    }
}
