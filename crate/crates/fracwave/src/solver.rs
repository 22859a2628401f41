//! Deterministic side of the decomposition: the fixed-point map for the
//! remainder equation, its Picard solver with adaptive horizon, solution
//! reconstruction u = psi + I[psi^2] + w, and an independent
//! pseudo-spectral leapfrog integrator for the renormalized equation.
//!
//! The remainder w solves the mild equation
//!
//! `w = d/dt(G * phi0) + G * phi1 + G * [rho^2 w^2 + rho^2 (I psi^2)^2
//!      + 2 (rho w)(rho I psi^2) + 2 (rho w)(rho psi) + 2 rho^2 psi I psi^2]`
//!
//! with all quadratic products evaluated pointwise on the 3/2 dealiasing
//! grid. Norms here are the global torus Sobolev norms W^{s,2}.

use crate::config::{GridSpec, HurstTriple, Violation};
use crate::kernels::{wave_multiplier, wave_multiplier_dt};
use crate::noise::SynthGrid;
use crate::objects::{
    scatter_hat_to_bins, DuhamelState, EnhancedPath, Field, FieldGeom, FieldLabel,
};
use crate::rng;
use crate::spectral::{dealias_size, rebin_modes, SmoothBump, TorusGrid};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "no contraction at T0 = {t0:.4} (update ratio {ratio:.3}); \
         horizon halved {halvings} times without success"
    )]
    NoContraction { t0: f64, ratio: f64, halvings: u32 },
    #[error("picard did not converge within {iterations} iterations (last update {last:.3e})")]
    MaxIterExceeded { iterations: usize, last: f64 },
    #[error("CFL violated: dt * {scale:.1} = {value:.3} exceeds {limit}")]
    Cfl { scale: f64, value: f64, limit: f64 },
    #[error("field blew up at step {step}: amplitude {amplitude:.3e}")]
    BlowUp { step: usize, amplitude: f64 },
    #[error("noise setup: {0}")]
    Noise(#[from] Violation),
}

/// The smooth equation cutoff: 1 on |x| <= 1, supported in |x| <= 2.
pub fn cutoff_rho(x: [f64; 2]) -> f64 {
    SmoothBump::cutoff().eval_point(x)
}

/// Deterministic initial data as torus mode coefficients.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub phi0: Vec<Complex64>,
    pub phi1: Vec<Complex64>,
}

impl InitialData {
    pub fn zero(torus: &TorusGrid) -> Self {
        InitialData {
            phi0: vec![Complex64::default(); torus.n_points()],
            phi1: vec![Complex64::default(); torus.n_points()],
        }
    }

    /// Smooth random data: Hermitian Gaussian coefficients with a
    /// Gaussian spectral profile, so the fields are real and C-infinity.
    pub fn smooth_seeded(torus: &TorusGrid, seed: u64, amp0: f64, amp1: f64, kmax: i64) -> Self {
        let mut data = Self::zero(torus);
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                if (k1, k2) <= (0, 0) {
                    continue;
                }
                let decay = (-((k1 * k1 + k2 * k2) as f64) / (kmax as f64)).exp();
                for (which, amp) in [(0u64, amp0), (1, amp1)] {
                    let b = rng::hash_words(&[rng::tag::FIELD, seed, which, k1 as u64, k2 as u64]);
                    let c = Complex64::new(
                        rng::unit_f64(b) - 0.5,
                        rng::unit_f64(rng::mix64(b)) - 0.5,
                    ) * (2.0 * amp * decay);
                    let dst = if which == 0 {
                        &mut data.phi0
                    } else {
                        &mut data.phi1
                    };
                    dst[torus.bin2([k1, k2])] = c;
                    dst[torus.bin2([-k1, -k2])] = c.conj();
                }
            }
        }
        data
    }

    pub fn norm0(&self, torus: &TorusGrid) -> f64 {
        sobolev_modes(&self.phi0, torus, 0.5)
    }

    pub fn norm1(&self, torus: &TorusGrid) -> f64 {
        sobolev_modes(&self.phi1, torus, -0.5)
    }
}

/// Global torus Sobolev norm W^{s,2} of mode coefficients (Parseval).
pub fn sobolev_modes(modes: &[Complex64], torus: &TorusGrid, order: f64) -> f64 {
    let area = (2.0 * torus.half_period).powi(2);
    let sum: f64 = modes
        .iter()
        .enumerate()
        .map(|(b, c)| (1.0 + torus.eta_sq(b)).powf(order) * c.norm_sqr())
        .sum();
    (area * sum).sqrt()
}

/// Homogeneous wave flow: per mode,
/// `cos(t |eta|) phi0-hat + sin(t |eta|)/|eta| phi1-hat`.
pub fn linear_flow(data: &InitialData, torus: &TorusGrid, t: f64) -> Vec<Complex64> {
    (0..torus.n_points())
        .map(|b| {
            let lam = torus.eta_sq(b).sqrt();
            data.phi0[b] * wave_multiplier_dt(t, lam) + data.phi1[b] * wave_multiplier(t, lam)
        })
        .collect()
}

/// Everything the fixed-point map needs that does not change across
/// Picard iterations: the linear flow, the path transported to the fine
/// grid, and the w-independent source terms.
pub struct GammaEngine {
    torus: TorusGrid,
    fine: TorusGrid,
    times: Vec<f64>,
    dt: f64,
    rho2_fine: Vec<f64>,
    psi_fine: Vec<Vec<f64>>,
    ip_fine: Vec<Vec<f64>>,
    /// rho^2 ((I psi^2)^2 + 2 psi I psi^2) per slice on the fine grid.
    base_fine: Vec<Vec<f64>>,
    lin: Vec<Vec<Complex64>>,
}

impl GammaEngine {
    /// Precompute for slices 0..=i0 of the path's lattice.
    pub fn new(path: &EnhancedPath, data: &InitialData, i0: usize) -> Self {
        let geom = path.psi.geom;
        let torus = geom.torus();
        let fine = TorusGrid::new(dealias_size(geom.nx), geom.half_period);
        let rho = SmoothBump::cutoff();
        let rho2_fine: Vec<f64> = rho.on_grid(&fine).iter().map(|v| v * v).collect();
        let all_times = geom.times();
        let times: Vec<f64> = all_times[..=i0].to_vec();
        let to_fine = |slice: &[f64]| -> Vec<f64> {
            let modes = torus.modes_from_real(slice);
            let (vals, _) = fine.real_values_from_modes(&rebin_modes(&modes, torus.nx, fine.nx));
            vals
        };
        let mut psi_fine = Vec::with_capacity(i0 + 1);
        let mut ip_fine = Vec::with_capacity(i0 + 1);
        let mut base_fine = Vec::with_capacity(i0 + 1);
        let mut lin = Vec::with_capacity(i0 + 1);
        for (ti, &t) in times.iter().enumerate() {
            let pf = to_fine(path.psi.slice(ti));
            let ipf = to_fine(path.ipsi2.slice(ti));
            let tf = to_fine(path.psi_ipsi2.slice(ti));
            let base: Vec<f64> = rho2_fine
                .iter()
                .zip(ipf.iter().zip(tf.iter()))
                .map(|(r2, (ip, th))| r2 * (ip * ip + 2.0 * th))
                .collect();
            psi_fine.push(pf);
            ip_fine.push(ipf);
            base_fine.push(base);
            lin.push(linear_flow(data, &torus, t));
        }
        GammaEngine {
            torus,
            fine,
            times,
            dt: geom.dt(),
            rho2_fine,
            psi_fine,
            ip_fine,
            base_fine,
            lin,
        }
    }

    pub fn max_len(&self) -> usize {
        self.times.len()
    }

    /// One application of the fixed-point map to w (mode slices).
    pub fn apply(&self, w: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let len = w.len();
        assert!(len <= self.times.len());
        let mut duh = DuhamelState::new(&self.torus, self.times[..len].to_vec(), self.dt);
        let mut out = Vec::with_capacity(len);
        for (ti, w_slice) in w.iter().enumerate() {
            let (wf, _) = self
                .fine
                .real_values_from_modes(&rebin_modes(w_slice, self.torus.nx, self.fine.nx));
            let src: Vec<f64> = (0..wf.len())
                .map(|p| {
                    self.base_fine[ti][p]
                        + self.rho2_fine[p]
                            * wf[p]
                            * (wf[p] + 2.0 * (self.ip_fine[ti][p] + self.psi_fine[ti][p]))
                })
                .collect();
            let s_modes = rebin_modes(&self.fine.modes_from_real(&src), self.fine.nx, self.torus.nx);
            duh.advance(&s_modes);
            let g = duh.current();
            out.push(
                self.lin[ti]
                    .iter()
                    .zip(g.iter())
                    .map(|(l, d)| l + d)
                    .collect(),
            );
        }
        out
    }

    fn update_norm(&self, a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| {
                let d: Vec<Complex64> =
                    x.iter().zip(y.iter()).map(|(u, v)| u - v).collect();
                sobolev_modes(&d, &self.torus, 0.5)
            })
            .fold(0.0f64, f64::max)
    }
}

/// The seven-term fixed-point map as a field operation: Gamma(w) on the
/// sub-horizon T (snapped to the time lattice).
pub fn gamma_map(w: &Field, path: &EnhancedPath, data: &InitialData, t_max: f64) -> Field {
    let geom = w.geom;
    let i0 = ((t_max / geom.dt()).round() as usize).min(geom.nt);
    let engine = GammaEngine::new(path, data, i0);
    let torus = geom.torus();
    let w_modes: Vec<Vec<Complex64>> = (0..=i0)
        .map(|ti| torus.modes_from_real(w.slice(ti)))
        .collect();
    let out_modes = engine.apply(&w_modes);
    let mut out = Field::zeros(FieldLabel::Remainder, w.level, geom);
    for (ti, m) in out_modes.iter().enumerate() {
        let (vals, _) = torus.real_values_from_modes(m);
        out.slice_mut(ti).copy_from_slice(&vals);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardDiagnostics {
    /// Horizon actually used (after adaptive halving).
    pub t0: f64,
    pub halvings: u32,
    pub iterations: usize,
    /// Consecutive-update norms in L^inf_T W^{1/2,2}.
    pub update_norms: Vec<f64>,
    /// Largest ratio of consecutive updates near convergence.
    pub contraction_ratio: f64,
    /// || w - Gamma(w) || at the returned iterate.
    pub residual: f64,
}

/// The converged remainder with its diagnostics; the field lives on the
/// sub-lattice [0, T0].
#[derive(Debug, Clone)]
pub struct RemainderSolution {
    pub w: Field,
    pub diag: PicardDiagnostics,
}

/// Picard iteration w_{k+1} = Gamma(w_k) from w_0 = linear flow, with the
/// horizon halved (up to 6 times) whenever three consecutive update
/// ratios reach 1.
pub fn picard_solve(
    path: &EnhancedPath,
    data: &InitialData,
    t0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RemainderSolution, SolverError> {
    let geom = path.psi.geom;
    let dt = geom.dt();
    let mut i0 = ((t0 / dt).round() as usize).clamp(2, geom.nt);
    let engine = GammaEngine::new(path, data, i0);
    let mut halvings = 0u32;
    loop {
        match picard_at_horizon(&engine, i0, tol, max_iter) {
            Ok((w_modes, mut diag)) => {
                diag.t0 = i0 as f64 * dt;
                diag.halvings = halvings;
                let torus = geom.torus();
                let sub_geom = FieldGeom {
                    nx: geom.nx,
                    nt: i0,
                    half_period: geom.half_period,
                    horizon: i0 as f64 * dt,
                };
                let mut w = Field::zeros(FieldLabel::Remainder, path.level(), sub_geom);
                for (ti, m) in w_modes.iter().enumerate() {
                    let (vals, _) = torus.real_values_from_modes(m);
                    w.slice_mut(ti).copy_from_slice(&vals);
                }
                return Ok(RemainderSolution { w, diag });
            }
            Err(PicardFailure::NoContraction { ratio }) => {
                if halvings >= 6 || i0 <= 2 {
                    return Err(SolverError::NoContraction {
                        t0: i0 as f64 * dt,
                        ratio,
                        halvings,
                    });
                }
                halvings += 1;
                i0 = (i0 / 2).max(2);
            }
            Err(PicardFailure::MaxIter { last }) => {
                return Err(SolverError::MaxIterExceeded {
                    iterations: max_iter,
                    last,
                });
            }
        }
    }
}

enum PicardFailure {
    NoContraction { ratio: f64 },
    MaxIter { last: f64 },
}

type PicardOutcome = (Vec<Vec<Complex64>>, PicardDiagnostics);

fn picard_at_horizon(
    engine: &GammaEngine,
    i0: usize,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome, PicardFailure> {
    let mut w: Vec<Vec<Complex64>> = engine.lin[..=i0].to_vec();
    let mut updates: Vec<f64> = Vec::new();
    for _ in 0..max_iter {
        let next = engine.apply(&w);
        let d = engine.update_norm(&next, &w);
        if !d.is_finite() {
            // the iteration itself blew up: certainly no contraction
            return Err(PicardFailure::NoContraction { ratio: f64::INFINITY });
        }
        updates.push(d);
        w = next;
        let k = updates.len();
        if k >= 3 {
            let growing =
                (k - 2..k).all(|i| updates[i] >= updates[i - 1] * (1.0 - 1e-12));
            if growing && updates[k - 1] > tol {
                let ratio = updates[k - 1] / updates[k - 2].max(f64::MIN_POSITIVE);
                return Err(PicardFailure::NoContraction { ratio });
            }
        }
        if d <= tol {
            let once_more = engine.apply(&w);
            let residual = engine.update_norm(&once_more, &w);
            let ratio = contraction_estimate(&updates);
            let diag = PicardDiagnostics {
                t0: 0.0,
                halvings: 0,
                iterations: updates.len(),
                update_norms: updates,
                contraction_ratio: ratio,
                residual,
            };
            return Ok((w, diag));
        }
    }
    Err(PicardFailure::MaxIter {
        last: *updates.last().unwrap_or(&f64::NAN),
    })
}

fn contraction_estimate(updates: &[f64]) -> f64 {
    updates
        .windows(2)
        .rev()
        .take(3)
        .map(|w| w[1] / w[0].max(f64::MIN_POSITIVE))
        .fold(0.0f64, f64::max)
}

/// Reconstruct the solution u = psi + I[psi^2] + w on w's sub-lattice.
pub fn reconstruct_u(path: &EnhancedPath, w: &Field) -> Field {
    let mut u = Field::zeros(FieldLabel::Solution, path.level(), w.geom);
    let n = w.geom.slice_len();
    for ti in 0..=w.geom.nt {
        let (psi, ip) = (path.psi.slice(ti), path.ipsi2.slice(ti));
        let ws = w.slice(ti);
        let dst = u.slice_mut(ti);
        for p in 0..n {
            dst[p] = psi[p] + ip[p] + ws[p];
        }
    }
    u
}

/// Direct pseudo-spectral leapfrog integration of the renormalized
/// equation
///
/// `u_tt - Lap u = rho^2 u^2 - sigma^n + (1 - rho^2) psi_n^2 + b-dot_n`
///
/// with sigma^n the exact lattice variance and the noise synthesized
/// from the same mode set as psi_n (pathwise consistent). Independent of
/// the decomposition machinery.
pub fn integrate_renormalized_pde(
    hurst: &HurstTriple,
    grid: &GridSpec,
    n: u32,
    seed: u64,
    data: &InitialData,
) -> Result<Field, SolverError> {
    let geom = FieldGeom::of(grid);
    let dt = geom.dt();
    let cutoff = (1u64 << n) as f64;
    if dt * cutoff > 0.5 {
        return Err(SolverError::Cfl {
            scale: cutoff,
            value: dt * cutoff,
            limit: 0.5,
        });
    }
    let torus = geom.torus();
    let lam_max = (2.0f64).sqrt() * torus.eta(torus.nx as i64 / 2);
    if dt * lam_max > 1.9 {
        return Err(SolverError::Cfl {
            scale: lam_max,
            value: dt * lam_max,
            limit: 1.9,
        });
    }
    let synth = SynthGrid::new(hurst, grid, n)?;
    let times = geom.times();
    let psi_hat = synth.psi_hat_seeded(seed, &times);
    let bdot_hat = synth.noise_dot_hat_seeded(seed, &times);
    let sigmas: Vec<f64> = times.iter().map(|&t| synth.lattice_variance(t)).collect();
    let fine = TorusGrid::new(dealias_size(geom.nx), geom.half_period);
    let rho2_fine: Vec<f64> = SmoothBump::cutoff()
        .on_grid(&fine)
        .iter()
        .map(|v| v * v)
        .collect();
    let np = torus.n_points();
    let lam_sq: Vec<f64> = (0..np).map(|b| torus.eta_sq(b)).collect();
    let zero_bin = torus.bin2([0, 0]);

    // nonlinear + renormalization + bandlimited-noise forcing, in modes
    let force = |u_modes: &[Complex64], ti: usize| -> Vec<Complex64> {
        let (uf, _) = fine.real_values_from_modes(&rebin_modes(u_modes, torus.nx, fine.nx));
        let psi_bins = scatter_hat_to_bins(&synth, &psi_hat, times.len(), ti, &torus);
        let (pf, _) = fine.real_values_from_modes(&rebin_modes(&psi_bins, torus.nx, fine.nx));
        let src: Vec<f64> = (0..uf.len())
            .map(|p| {
                let r2 = rho2_fine[p];
                r2 * uf[p] * uf[p] + (1.0 - r2) * pf[p] * pf[p]
            })
            .collect();
        let mut modes = rebin_modes(&fine.modes_from_real(&src), fine.nx, torus.nx);
        modes[zero_bin] -= sigmas[ti];
        let bdot = scatter_hat_to_bins(&synth, &bdot_hat, times.len(), ti, &torus);
        for (m, b) in modes.iter_mut().zip(bdot.iter()) {
            *m += b;
        }
        modes
    };

    let mut out = Field::zeros(FieldLabel::Solution, n, geom);
    let mut u_prev: Vec<Complex64> = data.phi0.clone();
    {
        let (vals, _) = torus.real_values_from_modes(&u_prev);
        out.slice_mut(0).copy_from_slice(&vals);
    }
    // Taylor start: u1 = u0 + dt phi1 + dt^2/2 (Lap u0 + F(u0, 0))
    let f0 = force(&u_prev, 0);
    let mut u_curr: Vec<Complex64> = (0..np)
        .map(|b| {
            u_prev[b]
                + data.phi1[b] * dt
                + (f0[b] - u_prev[b] * lam_sq[b]) * (0.5 * dt * dt)
        })
        .collect();
    {
        let (vals, _) = torus.real_values_from_modes(&u_curr);
        out.slice_mut(1).copy_from_slice(&vals);
    }
    for m in 1..geom.nt {
        let f = force(&u_curr, m);
        let u_next: Vec<Complex64> = (0..np)
            .map(|b| {
                u_curr[b] * 2.0 - u_prev[b] + (f[b] - u_curr[b] * lam_sq[b]) * (dt * dt)
            })
            .collect();
        let (vals, _) = torus.real_values_from_modes(&u_next);
        let amp = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !amp.is_finite() || amp > 1e6 {
            return Err(SolverError::BlowUp {
                step: m + 1,
                amplitude: amp,
            });
        }
        out.slice_mut(m + 1).copy_from_slice(&vals);
        u_prev = u_curr;
        u_curr = u_next;
    }
    Ok(out)
}
