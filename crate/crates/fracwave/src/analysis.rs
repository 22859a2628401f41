//! Windowed Sobolev norms, enhanced-path norms, and the Monte-Carlo
//! moment estimators of the level-increment decay.
//!
//! The localized Sobolev norm of this project is the operational
//! surrogate
//!
//! `|| F^{-1}( (1 + |.|^2)^{alpha/2} F(chi f) ) ||_{L^p(cell)}`
//!
//! with a fixed smooth window chi equal to 1 on |x| <= 2 and supported in
//! |x| <= 3. It overestimates the intrinsic localized norm (an infimum
//! over extensions, not computable) and is used consistently across all
//! experiments; only trends and ratios are compared against theory.

use crate::config::{GridSpec, HurstTriple, PNorm, WindowKind};
use crate::kernels::{self, KernelError, LevelSel, TimeSel};
use crate::objects::{self, EnhancedPath};
use crate::quad;
use crate::rng;
use crate::spectral::{SmoothBump, TorusGrid};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("window support radius {support} exceeds the cell half-period {cell}")]
    WindowExceedsCell { support: f64, cell: f64 },
    #[error("monte carlo needs at least 8 samples, got {0}")]
    InsufficientSamples(usize),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("noise setup: {0}")]
    Noise(#[from] crate::config::Violation),
}

/// Grid values of a localization window.
pub fn window_table(kind: WindowKind, torus: &TorusGrid) -> Result<Vec<f64>, AnalysisError> {
    match kind {
        WindowKind::Unit => Ok(vec![1.0; torus.n_points()]),
        WindowKind::Standard => {
            let bump = SmoothBump::window();
            if bump.outer > torus.half_period {
                return Err(AnalysisError::WindowExceedsCell {
                    support: bump.outer,
                    cell: torus.half_period,
                });
            }
            Ok(bump.on_grid(torus))
        }
    }
}

/// Localized Sobolev norm of one spatial slice (physical values).
pub fn sobolev_norm(
    slice: &[f64],
    torus: &TorusGrid,
    alpha: f64,
    p: PNorm,
    window: WindowKind,
) -> Result<f64, AnalysisError> {
    let table = window_table(window, torus)?;
    Ok(sobolev_norm_with_table(slice, torus, alpha, p, &table))
}

/// Same, with a precomputed window table (hot Monte-Carlo loops).
pub fn sobolev_norm_with_table(
    slice: &[f64],
    torus: &TorusGrid,
    alpha: f64,
    p: PNorm,
    table: &[f64],
) -> f64 {
    let windowed: Vec<f64> = slice.iter().zip(table.iter()).map(|(v, w)| v * w).collect();
    let mut modes = torus.modes_from_real(&windowed);
    torus.apply_bessel(&mut modes, alpha);
    sobolev_norm_of_modes(&modes, torus, p)
}

/// L^p norm of the inverse transform of already-weighted modes.
pub fn sobolev_norm_of_modes(modes: &[Complex64], torus: &TorusGrid, p: PNorm) -> f64 {
    let vals = torus.values_from_modes(modes);
    let da = torus.cell_area();
    match p {
        PNorm::P2 => (vals.iter().map(|v| v.norm_sqr()).sum::<f64>() * da).sqrt(),
        PNorm::P4 => (vals.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * da).powf(0.25),
    }
}

/// Per-component path norms: sup over the time lattice of the localized
/// Sobolev norm at the component's order.
#[derive(Debug, Clone, Serialize)]
pub struct NormRecord {
    pub alpha: f64,
    pub p: f64,
    /// Component orders (-alpha, -2 alpha, 1 - 2 alpha, -alpha).
    pub orders: [f64; 4],
    /// L^inf_T of the windowed Sobolev norms, one per component.
    pub values: [f64; 4],
}

impl NormRecord {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Compute the norm record of an enhanced path.
pub fn epath_norm(
    path: &EnhancedPath,
    p: PNorm,
    window: WindowKind,
) -> Result<NormRecord, AnalysisError> {
    let torus = path.psi.geom.torus();
    let table = window_table(window, &torus)?;
    let orders = EnhancedPath::orders(path.alpha);
    let mut values = [0.0f64; 4];
    for (ci, f) in path.components().iter().enumerate() {
        for ti in 0..=f.geom.nt {
            let v = sobolev_norm_with_table(f.slice(ti), &torus, orders[ci], p, &table);
            values[ci] = values[ci].max(v);
        }
    }
    Ok(NormRecord {
        alpha: path.alpha,
        p: p.value(),
        orders,
        values,
    })
}

/// Fill a path's norm record in place.
pub fn complete_path(
    path: &mut EnhancedPath,
    p: PNorm,
    window: WindowKind,
) -> Result<(), AnalysisError> {
    path.norms = Some(epath_norm(path, p, window)?);
    Ok(())
}

/// One of the four path components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Component {
    Psi,
    WickSquare,
    DuhamelSquare,
    ThirdOrder,
}

pub const COMPONENTS: [Component; 4] = [
    Component::Psi,
    Component::WickSquare,
    Component::DuhamelSquare,
    Component::ThirdOrder,
];

impl Component {
    pub fn index(&self) -> usize {
        match self {
            Component::Psi => 0,
            Component::WickSquare => 1,
            Component::DuhamelSquare => 2,
            Component::ThirdOrder => 3,
        }
    }

    pub fn order(&self, alpha: f64) -> f64 {
        EnhancedPath::orders(alpha)[self.index()]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Component::Psi => "psi",
            Component::WickSquare => "psi2",
            Component::DuhamelSquare => "ipsi2",
            Component::ThirdOrder => "psi_ipsi2",
        }
    }
}

/// Weighted point evaluation
/// `F^{-1}( (1+|.|^2)^{ord/2} F(f) )(x)` of a spectral slice.
fn weighted_point_value(
    modes: &[Complex64],
    torus: &TorusGrid,
    order: f64,
    x: [f64; 2],
) -> f64 {
    let n = torus.nx;
    let mut acc = Complex64::default();
    for b1 in 0..n {
        let e1 = torus.eta(torus.k_of_bin(b1));
        for b2 in 0..n {
            let e2 = torus.eta(torus.k_of_bin(b2));
            let w = (1.0 + e1 * e1 + e2 * e2).powf(0.5 * order);
            let phase = e1 * x[0] + e2 * x[1];
            acc += modes[b1 * n + b2] * w * Complex64::new(phase.cos(), phase.sin());
        }
    }
    acc.re
}

#[derive(Debug, Clone, Serialize)]
pub struct IncrementRow {
    pub component: Component,
    pub n: u32,
    pub m: u32,
    pub s: f64,
    pub t: f64,
    pub estimate: f64,
    pub se: f64,
}

/// How the per-sample squared weighted increment is read off.
///
/// The moment E[|F^{-1}((1+|.|^2)^{ord/2} F tau^{n,m}_{s,t})(x)|^2] does
/// not depend on x (the synthesis is stationary), so the lattice mean of
/// the squared values estimates the same quantity as any single point
/// while averaging the Monte-Carlo noise over all modes. Consecutive
/// level pairs draw on disjoint frequency annuli, so a single-point
/// estimator's ~sqrt(2/N) relative noise would otherwise drown the slow
/// per-level decay near the window boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementEstimator {
    PointAt([f64; 2]),
    FieldMean,
}

/// Monte-Carlo second moment of the weighted double increment
/// tau^{n,m}_{s,t}, for every component and every consecutive level
/// pair, under common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn increment_study(
    hurst: &HurstTriple,
    grid: &GridSpec,
    levels: &[u32],
    s_idx: usize,
    t_idx: usize,
    estimator: IncrementEstimator,
    samples: usize,
    seed: u64,
    alpha: f64,
) -> Result<Vec<IncrementRow>, AnalysisError> {
    if samples < 8 {
        return Err(AnalysisError::InsufficientSamples(samples));
    }
    let torus = objects::FieldGeom::of(grid).torus();
    let keep = [s_idx, t_idx];
    let vars = objects::level_variances(hurst, grid, levels)?;
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let sample_seed = rng::sample_seed(seed, i as u64);
            let slices = objects::path_slices_with_vars(
                hurst,
                grid,
                levels,
                sample_seed,
                &keep,
                &vars,
            )
            .expect("levels validated by caller");
            let mut vals = Vec::new();
            for pair in slices.windows(2) {
                let (lo, hi) = (&pair[0], &pair[1]);
                for comp in COMPONENTS {
                    let c = comp.index();
                    // double increment: (level hi - level lo) at t minus at s
                    let d: Vec<Complex64> = (0..torus.n_points())
                        .map(|b| {
                            (hi.component(c)[1][b] - lo.component(c)[1][b])
                                - (hi.component(c)[0][b] - lo.component(c)[0][b])
                        })
                        .collect();
                    let v = match estimator {
                        IncrementEstimator::PointAt(x) => {
                            weighted_point_value(&d, &torus, comp.order(alpha), x).powi(2)
                        }
                        IncrementEstimator::FieldMean => {
                            // Parseval: mean_x |F^{-1}(W d)(x)|^2
                            d.iter()
                                .enumerate()
                                .map(|(b, z)| {
                                    (1.0 + torus.eta_sq(b)).powf(comp.order(alpha))
                                        * z.norm_sqr()
                                })
                                .sum()
                        }
                    };
                    vals.push(v);
                }
            }
            vals
        })
        .collect();
    let times = grid.times();
    let mut rows = Vec::new();
    for (pi, pair) in levels.windows(2).enumerate() {
        for comp in COMPONENTS {
            let idx = pi * 4 + comp.index();
            let xs: Vec<f64> = per_sample.iter().map(|v| v[idx]).collect();
            let mean = xs.iter().sum::<f64>() / samples as f64;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (samples - 1) as f64;
            rows.push(IncrementRow {
                component: comp,
                n: pair[0],
                m: pair[1],
                s: times[s_idx],
                t: times[t_idx],
                estimate: mean,
                se: (var / samples as f64).sqrt(),
            });
        }
    }
    Ok(rows)
}

/// Single-pair estimator: mean and standard error of the
/// squared weighted increment of one component at a point.
#[allow(clippy::too_many_arguments)]
pub fn mc_moment_increment(
    hurst: &HurstTriple,
    grid: &GridSpec,
    component: Component,
    n: u32,
    m: u32,
    s_idx: usize,
    t_idx: usize,
    x: [f64; 2],
    samples: usize,
    seed: u64,
    alpha: f64,
) -> Result<(f64, f64), AnalysisError> {
    if samples < 8 {
        return Err(AnalysisError::InsufficientSamples(samples));
    }
    if n == m || s_idx == t_idx {
        // tau^{n,n} = 0 and the time increment vanishes exactly
        return Ok((0.0, 0.0));
    }
    let rows = increment_study(
        hurst,
        grid,
        &[n, m],
        s_idx,
        t_idx,
        IncrementEstimator::PointAt(x),
        samples,
        seed,
        alpha,
    )?;
    let row = rows
        .into_iter()
        .find(|r| r.component == component)
        .expect("component present");
    Ok((row.estimate, row.se))
}

/// Continuum covariance quadrature: the spectral representation of
/// `E[psi^n_s(y) psi^n_t(y~)]` reduced to polar coordinates,
///
/// `int_0^{2^n} dr r^{3-2(H1+H2)} W_{s,t}(r) A_{y-y~}(r)`
///
/// with W the xi cross profile and A the angular factor of the spatial
/// density against the plane wave. Serves as the oracle for Monte-Carlo
/// covariances of the synthesized field.
pub fn covariance_psi_quadrature(
    y: [f64; 2],
    y_tilde: [f64; 2],
    s: f64,
    t: f64,
    n: u32,
    h: &HurstTriple,
) -> Result<f64, AnalysisError> {
    if s == 0.0 || t == 0.0 || n == 0 {
        return Ok(0.0);
    }
    let cutoff = (1u64 << n) as f64;
    let d = [y[0] - y_tilde[0], y[1] - y_tilde[1]];
    let a_exp = 1.0 - 2.0 * h.h1();
    let b_exp = 1.0 - 2.0 * h.h2();
    let beta = 3.0 - 2.0 * (h.h1() + h.h2());
    let edges = quad::dyadic_edges(cutoff, n as usize + 2);
    let radial = quad::adaptive_panels(
        |r| {
            if r == 0.0 {
                return 0.0;
            }
            let w = kernels::gamma_cross_xi_integral(h.h0(), r, s, t, cutoff, 1e-9)
                .unwrap_or(f64::NAN);
            let ang = angular_factor(a_exp, b_exp, r, d).unwrap_or(f64::NAN);
            r.powf(beta) * w * ang
        },
        &edges,
        1e-6,
        1e-12,
    )
    .map_err(KernelError::Quadrature)?;
    Ok(radial.real())
}

/// `int_0^{2pi} |cos|^a |sin|^b e^{i r <u(theta), d>} d theta` (real by
/// the antipodal symmetry; quadrants 0 and 1 carry half the value each).
fn angular_factor(a: f64, b: f64, r: f64, d: [f64; 2]) -> Result<f64, KernelError> {
    let mut total = Complex64::default();
    for q in 0..2 {
        // quadrant rotation: u(theta + q pi/2)
        let g = |th: f64| {
            let (sn, cs) = th.sin_cos();
            let u = match q {
                0 => [cs, sn],
                _ => [-sn, cs],
            };
            let phase = r * (u[0] * d[0] + u[1] * d[1]);
            Complex64::new(phase.cos(), phase.sin())
        };
        total += quadrant_angular(a, b, &g)?;
    }
    Ok(2.0 * total.re)
}

/// `int_0^{pi/2} cos^a sin^b g(theta) d theta` with endpoint power
/// singularities folded away.
fn quadrant_angular<G: Fn(f64) -> Complex64>(
    a: f64,
    b: f64,
    g: &G,
) -> Result<Complex64, KernelError> {
    let quarter = std::f64::consts::FRAC_PI_4;
    // [0, pi/4]: weight sin^b ~ theta^b
    let lo = quad::adaptive_power_law_complex(
        |th| g(th) * th.cos().powf(a) * kernels::sinc(th).powf(b),
        b,
        quarter,
        1e-9,
        1e-13,
    )?;
    // [pi/4, pi/2] mapped by phi = pi/2 - theta: weight cos^a ~ phi^a
    let hi = quad::adaptive_power_law_complex(
        |ph| {
            let th = std::f64::consts::FRAC_PI_2 - ph;
            g(th) * ph.cos().powf(b) * kernels::sinc(ph).powf(a)
        },
        a,
        quarter,
        1e-9,
        1e-13,
    )?;
    Ok(lo.value + hi.value)
}

/// Max over an eta grid of the level-increment kernel against its
/// theoretical envelope `2^{-n eps} |t-s|^eps sum_i K^{H_{eps,i}}`.
pub fn l_increment_envelope_ratio(
    h: &HurstTriple,
    n: u32,
    m: u32,
    s: f64,
    t: f64,
    eps: f64,
    etas: &[[f64; 2]],
) -> Result<f64, AnalysisError> {
    let mut worst = 0.0f64;
    let shifts = [
        HurstTriple::new(h.h0() - eps, h.h1(), h.h2()),
        HurstTriple::new(h.h0(), h.h1() - eps, h.h2()),
        HurstTriple::new(h.h0(), h.h1(), h.h2() - eps),
    ];
    for &eta in etas {
        let l = kernels::l_kernel(
            h,
            (LevelSel::Annulus(n, m), LevelSel::Level(m)),
            (TimeSel::Incr(s, t), TimeSel::At(t)),
            eta,
            1e-8,
        )?;
        let mut envelope = 0.0;
        for sh in &shifts {
            let sh = sh.as_ref().expect("shifted indices stay in (0,1)");
            envelope += kernels::k_kernel(eta, sh)?;
        }
        let bound = (2.0f64).powf(-(n as f64) * eps) * (t - s).abs().powf(eps) * envelope;
        worst = worst.max(l.abs() / bound);
    }
    Ok(worst)
}
