//! Adaptive Gauss-Kronrod quadrature plus the fixed rules used by the
//! oracle integrals.
//!
//! The adaptive driver is a standard global-error bisection scheme on the
//! 7-15 Gauss-Kronrod pair. Endpoint power-law weights `x^beta` with
//! `beta in (-1, 0)` are folded away by the substitution
//! `x = u^{1/(1+beta)}`, which turns the weighted integral into an
//! unweighted one with a bounded integrand.

use num_complex::Complex64;
use std::collections::BinaryHeap;
use thiserror::Error;

/// 15-point Kronrod abscissae on [-1, 1] (positive half, descending).
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];

/// 7-point Gauss weights for the odd-indexed abscissae of `XGK`.
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

#[derive(Debug, Error)]
pub enum QuadError {
    #[error(
        "quadrature did not converge: achieved abs error {achieved:.3e} \
         (target {target:.3e}) after {intervals} intervals"
    )]
    ToleranceNotReached {
        achieved: f64,
        target: f64,
        intervals: usize,
    },
    #[error("empty or inverted integration interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub abs_error: f64,
    pub evaluations: usize,
}

impl QuadResult {
    pub fn real(&self) -> f64 {
        self.value.re
    }
}

/// One Gauss-Kronrod pass over [a, b]; returns (K15 value, error estimate).
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut res_abs = WGK[7] * fc.norm();

    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate().take(7) {
        let f1 = f(center - half * x);
        let f2 = f(center + half * x);
        kronrod += wk * (f1 + f2);
        res_abs += wk * (f1.norm() + f2.norm());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }

    let mean = kronrod * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).norm();
    for (i, &x) in XGK.iter().enumerate().take(7) {
        let f1 = f(center - half * x);
        let f2 = f(center + half * x);
        res_asc += WGK[i] * ((f1 - mean).norm() + (f2 - mean).norm());
    }

    let value = kronrod * half;
    let raw_err = ((kronrod - gauss) * half).norm();
    // QUADPACK-style rescaling of the raw error against the oscillation mass.
    let res_asc = res_asc * half.abs();
    let mut err = raw_err;
    if res_asc != 0.0 && raw_err != 0.0 {
        let scale = (200.0 * raw_err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    let res_abs = res_abs * half.abs();
    // Round-off floor: below this the estimate cannot improve in f64.
    let floor = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    (value, err, floor)
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    floor: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

const MAX_INTERVALS: usize = 20_000;

/// Adaptive quadrature of a complex integrand over a list of panels.
///
/// The panel edges double as pre-known breakpoints (kinks, scale changes);
/// they are refined independently under one global error budget.
pub fn adaptive_complex_panels<F: Fn(f64) -> Complex64>(
    f: F,
    edges: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    if edges.len() < 2 {
        return Err(QuadError::BadInterval {
            a: f64::NAN,
            b: f64::NAN,
        });
    }
    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut heap_err = 0.0;
    // Error mass of segments already at the f64 round-off floor; splitting
    // those cannot improve anything.
    let mut frozen_err = 0.0;
    let mut evals = 0usize;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.is_nan() || a.is_nan() || b < a {
            return Err(QuadError::BadInterval { a, b });
        }
        if a == b {
            continue;
        }
        let (v, e, fl) = gk15(&f, a, b);
        evals += 30;
        total += v;
        heap_err += e;
        heap.push(Segment {
            a,
            b,
            value: v,
            error: e,
            floor: fl,
        });
    }

    loop {
        let total_err = heap_err + frozen_err;
        if total_err <= abs_tol.max(rel_tol * total.norm()) {
            break;
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(QuadError::ToleranceNotReached {
                achieved: total_err,
                target: abs_tol.max(rel_tol * total.norm()),
                intervals: heap.len(),
            });
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => break, // everything round-off limited; report what we have
        };
        let mid = 0.5 * (worst.a + worst.b);
        let saturated = worst.error <= worst.floor * (1.0 + 1e-12);
        if saturated || mid <= worst.a || mid >= worst.b {
            heap_err -= worst.error;
            frozen_err += worst.error;
            continue;
        }
        let (v1, e1, f1) = gk15(&f, worst.a, mid);
        let (v2, e2, f2) = gk15(&f, mid, worst.b);
        evals += 60;
        total += v1 + v2 - worst.value;
        heap_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            floor: f1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            floor: f2,
        });
    }

    Ok(QuadResult {
        value: total,
        abs_error: heap_err + frozen_err,
        evaluations: evals,
    })
}

pub fn adaptive_complex<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    adaptive_complex_panels(f, &[a, b], rel_tol, abs_tol)
}

pub fn adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    adaptive_complex(move |x| Complex64::new(f(x), 0.0), a, b, rel_tol, abs_tol)
}

pub fn adaptive_panels<F: Fn(f64) -> f64>(
    f: F,
    edges: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    adaptive_complex_panels(
        move |x| Complex64::new(f(x), 0.0),
        edges,
        rel_tol,
        abs_tol,
    )
}

/// Dyadic panel edges for [0, b]: 0, s, 2s, 4s, ..., b with s = b/2^k.
///
/// Oscillatory decaying integrands over wide ranges start from sensible
/// estimates this way instead of one hopeless full-range pass.
pub fn dyadic_edges(b: f64, levels: usize) -> Vec<f64> {
    let mut edges = Vec::with_capacity(levels + 2);
    edges.push(0.0);
    let mut s = b / (1u64 << levels) as f64;
    while s < b {
        edges.push(s);
        s *= 2.0;
    }
    edges.push(b);
    edges
}

/// `int_0^a x^beta g(x) dx` for beta > -1 with g bounded.
///
/// For beta < 0 the substitution x = u^{1/(1+beta)} removes the endpoint
/// singularity exactly; otherwise the weight is continuous and the plain
/// adaptive rule applies.
pub fn adaptive_power_law<F: Fn(f64) -> f64>(
    g: F,
    beta: f64,
    a: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    assert!(beta > -1.0, "power-law exponent must be integrable");
    if a == 0.0 {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    if beta < 0.0 {
        let p = 1.0 + beta;
        let upper = a.powf(p);
        adaptive(
            move |u| g(u.powf(1.0 / p)) / p,
            0.0,
            upper,
            rel_tol,
            abs_tol,
        )
    } else {
        adaptive(move |x| x.powf(beta) * g(x), 0.0, a, rel_tol, abs_tol)
    }
}

/// Complex-valued variant of [`adaptive_power_law`].
pub fn adaptive_power_law_complex<F: Fn(f64) -> Complex64>(
    g: F,
    beta: f64,
    a: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    assert!(beta > -1.0, "power-law exponent must be integrable");
    if a == 0.0 {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    if beta < 0.0 {
        let p = 1.0 + beta;
        let upper = a.powf(p);
        adaptive_complex(
            move |u| g(u.powf(1.0 / p)) / p,
            0.0,
            upper,
            rel_tol,
            abs_tol,
        )
    } else {
        adaptive_complex(
            move |x| g(x) * x.powf(beta),
            0.0,
            a,
            rel_tol,
            abs_tol,
        )
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// A fixed composite rule: Gauss-Legendre points on each panel.
///
/// Used for the high-dimensional oracle integrals where adaptivity per
/// axis would be wasteful.
#[derive(Debug, Clone)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PanelRule {
    /// Build from explicit panel edges with `per_panel` GL points each.
    pub fn from_edges(edges: &[f64], per_panel: usize) -> Self {
        let (gx, gw) = gauss_legendre(per_panel);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for (x, wt) in gx.iter().zip(gw.iter()) {
                nodes.push(c + h * x);
                weights.push(h * wt);
            }
        }
        PanelRule { nodes, weights }
    }

    /// Dyadic panels on [0, top]: [0,1], [1,2], ..., [top/2, top].
    pub fn dyadic(top: f64, per_panel: usize) -> Self {
        let mut edges = vec![0.0, 1.0_f64.min(top)];
        let mut s = 1.0;
        while s < top {
            edges.push((2.0 * s).min(top));
            s *= 2.0;
        }
        edges.dedup();
        Self::from_edges(&edges, per_panel)
    }

    /// Same panels, but with the power-law substitution `x = u^{1/(1+beta)}`
    /// applied on the first panel when beta < 0: nodes carry the weight
    /// `x^beta dx` exactly folded in, so the summand is just `g(node)`.
    pub fn dyadic_power_law(top: f64, per_panel: usize, beta: f64) -> Self {
        assert!(beta > -1.0);
        if beta >= 0.0 {
            let mut r = Self::dyadic(top, per_panel);
            for (n, w) in r.nodes.iter().zip(r.weights.iter_mut()) {
                *w *= n.powf(beta);
            }
            return r;
        }
        let first = 1.0_f64.min(top);
        let p = 1.0 + beta;
        let (gx, gw) = gauss_legendre(per_panel);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        // substituted first panel: int_0^first x^beta g = (1/p) int_0^{first^p} g(u^{1/p})
        let upper = first.powf(p);
        for (x, wt) in gx.iter().zip(gw.iter()) {
            let u = 0.5 * upper * (x + 1.0);
            nodes.push(u.powf(1.0 / p));
            weights.push(0.5 * upper * wt / p);
        }
        // remaining dyadic panels with the plain weight
        let mut edges = vec![first];
        let mut s = first;
        while s < top {
            edges.push((2.0 * s).min(top));
            s *= 2.0;
        }
        edges.dedup();
        if edges.len() >= 2 {
            let rest = Self::from_edges(&edges, per_panel);
            for (n, w) in rest.nodes.iter().zip(rest.weights.iter()) {
                nodes.push(*n);
                weights.push(w * n.powf(beta));
            }
        }
        PanelRule { nodes, weights }
    }
}
