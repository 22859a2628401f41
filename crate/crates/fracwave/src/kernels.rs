//! Closed-form and quadrature evaluation of the deterministic kernels
//! behind the noise covariance: the oscillatory kernel
//! `gamma_t(xi, rho) = e^{i xi t} int_0^t e^{-i xi s} sin(s rho)/rho ds`,
//! the spectral density kernel `K^H`, the wave multiplier
//! `sin(t lambda)/lambda`, and the xi-integrated profile `Gamma^{H0,n}`.
//!
//! All operations are pure and reentrant.

use crate::config::HurstTriple;
use crate::quad;
use num_complex::Complex64;
use thiserror::Error;

/// Threshold under which removable-singularity branches switch to their
/// Taylor form. Keeps relative error below 1e-10 near branch switches.
pub const SERIES_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel argument out of domain: {0}")]
    Domain(String),
    #[error("kernel quadrature failed: {0}")]
    Quadrature(#[from] quad::QuadError),
}

#[inline]
fn cis(x: f64) -> Complex64 {
    Complex64::new(x.cos(), x.sin())
}

/// e^{ix} - 1 without cancellation: (-2 sin^2(x/2), sin x).
#[inline]
fn cis_m1(x: f64) -> Complex64 {
    let s = (0.5 * x).sin();
    Complex64::new(-2.0 * s * s, x.sin())
}

/// sin(x)/x with its removable singularity.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// F(z, t) = int_0^t e^{izs} ds = (e^{izt} - 1)/(iz), Taylor for |z| small.
#[inline]
fn phase_integral(z: f64, t: f64) -> Complex64 {
    if z.abs() < SERIES_EPS {
        let w = Complex64::new(0.0, z * t);
        // t (1 + w/2 + w^2/6 + w^3/24)
        t * (Complex64::new(1.0, 0.0) + w * (0.5 + w * (1.0 / 6.0 + w * (1.0 / 24.0))))
    } else {
        cis_m1(z * t) / Complex64::new(0.0, z)
    }
}

/// int_0^t s^k e^{-i xi s} ds by the integration-by-parts recurrence,
/// with a series branch for small |xi t|.
fn moment_integral(k: u32, xi: f64, t: f64) -> Complex64 {
    let a = Complex64::new(0.0, -xi);
    if (xi * t).abs() < 1e-3 {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut a_pow = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for m in 0..6u32 {
            let p = (k + 1 + m) as i32;
            sum += a_pow * (t.powi(p) / (fact * p as f64));
            a_pow *= a;
            fact *= (m + 1) as f64;
        }
        sum
    } else {
        let eat = cis(-xi * t);
        let mut ik = cis_m1(-xi * t) / a;
        for m in 1..=k {
            ik = (eat * t.powi(m as i32) - ik * m as f64) / a;
        }
        ik
    }
}

/// The oscillatory wave-noise kernel
/// `gamma_t(xi, rho) = e^{i xi t} int_0^t ds e^{-i xi s} sin(s rho)/rho`.
///
/// Evaluated in closed form,
/// `gamma = e^{i xi t} [F(rho - xi, t) - F(-(rho + xi), t)] / (2 i rho)`,
/// with each factor replaced by its Taylor limit near the removable
/// singularities rho = 0 and rho = ±xi.
pub fn gamma(xi: f64, rho: f64, t: f64) -> Complex64 {
    debug_assert!(rho >= 0.0 && t >= 0.0);
    if t == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if rho < SERIES_EPS {
        // sin(s rho)/rho = s - s^3 rho^2/6 + O(rho^4)
        let j1 = moment_integral(1, xi, t);
        let j3 = moment_integral(3, xi, t);
        cis(xi * t) * (j1 - j3 * (rho * rho / 6.0))
    } else {
        let fa = phase_integral(rho - xi, t);
        let fb = phase_integral(-(rho + xi), t);
        cis(xi * t) * (fa - fb) / Complex64::new(0.0, 2.0 * rho)
    }
}

/// Time increment gamma_t - gamma_s.
pub fn gamma_incr(xi: f64, rho: f64, s: f64, t: f64) -> Complex64 {
    gamma(xi, rho, t) - gamma(xi, rho, s)
}

/// One Lambda summand of the |gamma|^2 identity, written through sinc so
/// both removable singularities xi = ±rho stay finite:
///
/// Lambda_t(xi, rho) = (1 - cos(t(xi-rho)))/(rho^2 (xi-rho)^2)
///                   + cos(t rho)(cos(t xi) - cos(t rho))/(rho^2 (xi-rho)(xi+rho)).
fn lambda_t(xi: f64, rho: f64, t: f64) -> f64 {
    let d = xi - rho;
    let s = xi + rho;
    let half_t2 = 0.5 * t * t / (rho * rho);
    let sd = sinc(0.5 * t * d);
    let ss = sinc(0.5 * t * s);
    half_t2 * sd * (sd - (t * rho).cos() * ss)
}

/// Lambda_t(xi, rho) + Lambda_t(-xi, rho); proportional to |gamma|^2 with
/// the proportionality constant fixed once by [`lambda_constant`].
pub fn gamma_sq_via_lambda(xi: f64, rho: f64, t: f64) -> Result<f64, KernelError> {
    if rho <= 0.0 {
        return Err(KernelError::Domain(format!(
            "gamma_sq_via_lambda needs rho > 0, got {rho}"
        )));
    }
    Ok(lambda_t(xi, rho, t) + lambda_t(-xi, rho, t))
}

/// The constant c with |gamma|^2 = c (Lambda(xi) + Lambda(-xi)), fitted
/// once at the frozen reference point (xi, rho, t) = (0.7, 1.9, 0.5) and
/// held fixed everywhere.
pub fn lambda_constant() -> f64 {
    let (xi, rho, t) = (0.7, 1.9, 0.5);
    gamma(xi, rho, t).norm_sqr() / gamma_sq_via_lambda(xi, rho, t).unwrap()
}

/// Fourier multiplier of the wave kernel: sin(t lambda)/lambda, with the
/// limit t at lambda = 0. Satisfies |result| <= t and
/// |result| sqrt(1 + lambda^2) <= sqrt(2) max(1, t).
pub fn wave_multiplier(t: f64, lam: f64) -> f64 {
    t * sinc(t * lam)
}

/// Derivative multiplier cos(t lambda) of the wave flow.
pub fn wave_multiplier_dt(t: f64, lam: f64) -> f64 {
    (t * lam).cos()
}

/// The spectral density kernel
/// `K^H(eta) = |eta1|^{1-2H1} |eta2|^{1-2H2} / (1 + |eta|^{1+2H0})`.
pub fn k_kernel(eta: [f64; 2], h: &HurstTriple) -> Result<f64, KernelError> {
    Ok(k_density(eta, h)? / (1.0 + eta_norm(eta).powf(1.0 + 2.0 * h.h0())))
}

/// The bare spatial density |eta1|^{1-2H1} |eta2|^{1-2H2}.
pub fn k_density(eta: [f64; 2], h: &HurstTriple) -> Result<f64, KernelError> {
    if eta[0] == 0.0 || eta[1] == 0.0 {
        return Err(KernelError::Domain(
            "K^H is singular on the axes; use cell-averaged weights there".into(),
        ));
    }
    Ok(eta[0].abs().powf(1.0 - 2.0 * h.h1()) * eta[1].abs().powf(1.0 - 2.0 * h.h2()))
}

#[inline]
fn eta_norm(eta: [f64; 2]) -> f64 {
    (eta[0] * eta[0] + eta[1] * eta[1]).sqrt()
}

/// `Gamma^{H0,n}_t(rho) = int_{-2^n}^{2^n} dxi |gamma_t(xi, rho)|^2 / |xi|^{2H0-1}`
/// by adaptive quadrature (relative tolerance `rel_tol`).
///
/// The endpoint weight |xi|^{1-2H0} is folded away by a power-law
/// substitution on the cell containing 0 when H0 > 1/2.
pub fn big_gamma_n(rho: f64, t: f64, h0: f64, n: u32, rel_tol: f64) -> Result<f64, KernelError> {
    assert!(h0 > 0.0 && h0 < 1.0, "need 0 < H0 < 1");
    xi_profile_integral(
        |xi| gamma(xi, rho, t).norm_sqr(),
        h0,
        0.0,
        (1u64 << n) as f64,
        rel_tol,
    )
}

/// `2 int_{lo}^{hi} g(xi) xi^{1-2H0} dxi` with the singular cell handled.
fn xi_profile_integral<F: Fn(f64) -> f64>(
    g: F,
    h0: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64, KernelError> {
    if hi <= lo {
        return Ok(0.0);
    }
    let beta = 1.0 - 2.0 * h0;
    let mut total = 0.0;
    let mut start = lo;
    if lo == 0.0 {
        let cell = 1.0f64.min(hi);
        total += quad::adaptive_power_law(&g, beta, cell, rel_tol * 0.5, 0.0)?.real();
        start = cell;
    }
    if hi > start {
        let mut edges = vec![start];
        let mut s = start.max(1.0);
        while s < hi {
            edges.push(s.min(hi));
            s *= 2.0;
        }
        edges.push(hi);
        edges.dedup();
        total += quad::adaptive_panels(
            |xi| g(xi) * xi.powf(beta),
            &edges,
            rel_tol * 0.5,
            0.0,
        )?
        .real();
    }
    Ok(2.0 * total)
}

/// Cross-time xi profile
/// `2 int_0^{cutoff} Re[gamma_s gamma_t-bar](xi, rho) xi^{1-2H0} dxi`,
/// the xi integral of the covariance representation.
pub fn gamma_cross_xi_integral(
    h0: f64,
    rho: f64,
    s: f64,
    t: f64,
    cutoff: f64,
    rel_tol: f64,
) -> Result<f64, KernelError> {
    xi_profile_integral(
        |xi| (gamma(xi, rho, s) * gamma(xi, rho, t).conj()).re,
        h0,
        0.0,
        cutoff,
        rel_tol,
    )
}

/// Which cutoff domain a field carries: a full level or a level annulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelSel {
    Level(u32),
    /// Modes of level m not in level n (n < m).
    Annulus(u32, u32),
}

impl LevelSel {
    /// The |xi| interval cut out at spatial frequency magnitude |eta|,
    /// or None if eta lies outside the domain.
    fn xi_interval(&self, eta_abs: f64) -> Option<(f64, f64)> {
        match *self {
            LevelSel::Level(n) => {
                let c = (1u64 << n) as f64;
                (eta_abs <= c).then_some((0.0, c))
            }
            LevelSel::Annulus(n, m) => {
                let cn = (1u64 << n) as f64;
                let cm = (1u64 << m) as f64;
                if eta_abs <= cn {
                    Some((cn, cm))
                } else if eta_abs <= cm {
                    Some((0.0, cm))
                } else {
                    None
                }
            }
        }
    }
}

/// A time argument: a single time or an increment t - s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSel {
    At(f64),
    Incr(f64, f64),
}

impl TimeSel {
    fn gamma(&self, xi: f64, rho: f64) -> Complex64 {
        match *self {
            TimeSel::At(t) => gamma(xi, rho, t),
            TimeSel::Incr(s, t) => gamma_incr(xi, rho, s, t),
        }
    }
}

/// The covariance profile
/// `L^{H,a}_b(eta) = K-density(eta) int_{D} dxi gamma_{b1} conj(gamma_{b2}) / |xi|^{2H0-1}`
/// over the xi-section D of the cutoff domains selected by `a`.
///
/// Real by the xi -> -xi symmetry.
pub fn l_kernel(
    h: &HurstTriple,
    a: (LevelSel, LevelSel),
    b: (TimeSel, TimeSel),
    eta: [f64; 2],
    rel_tol: f64,
) -> Result<f64, KernelError> {
    let rho = eta_norm(eta);
    let (lo0, hi0) = match a.0.xi_interval(rho) {
        Some(iv) => iv,
        None => return Ok(0.0),
    };
    let (lo1, hi1) = match a.1.xi_interval(rho) {
        Some(iv) => iv,
        None => return Ok(0.0),
    };
    let lo = lo0.max(lo1);
    let hi = hi0.min(hi1);
    if hi <= lo {
        return Ok(0.0);
    }
    let dens = k_density(eta, h)?;
    let integral = xi_profile_integral(
        |xi| (b.0.gamma(xi, rho) * b.1.gamma(xi, rho).conj()).re,
        h.h0(),
        lo,
        hi,
        rel_tol,
    )?;
    Ok(dens * integral)
}

/// `int_0^{2 pi} |cos|^a |sin|^b d theta` for a, b > -1, by quadrant
/// symmetry and power-law endpoint substitutions.
pub fn angular_mass(a: f64, b: f64) -> Result<f64, KernelError> {
    Ok(4.0 * (angular_half(a, b)? + angular_half(b, a)?))
}

/// `int_0^{pi/4} cos^a sin^b d theta`.
fn angular_half(a: f64, b: f64) -> Result<f64, KernelError> {
    let g = move |th: f64| th.cos().powf(a) * sinc(th).powf(b);
    Ok(quad::adaptive_power_law(g, b, std::f64::consts::FRAC_PI_4, 1e-11, 0.0)?.real())
}
