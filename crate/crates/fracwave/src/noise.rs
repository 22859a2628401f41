//! Seeded spectral sampling of the truncated fractional noise modes.
//!
//! Level n keeps the modes (xi_j, eta_k) with |xi_j| <= 2^n and
//! |eta_k| <= 2^n (Euclidean), where xi_j = (j + 1/2) dxi runs over a
//! midpoint lattice shared by every level and eta_k = k pi / L is the
//! torus frequency lattice. Each Hermitian pair of modes carries one
//! complex Gaussian coefficient derived counter-style from the seed, so
//! levels are nested realizations of one noise: the coefficients of
//! level n are exactly the restriction of level m > n to the smaller
//! cutoff domain.
//!
//! Mode weights encode the spectral density
//! |xi|^{1-2H0} |eta1|^{1-2H1} |eta2|^{1-2H2} d xi d eta through exact
//! cell masses, so the integrable singularities on the axes are never
//! sampled pointwise.

use crate::config::{GridSpec, HurstTriple, Violation};
use crate::kernels;
use crate::rng;
use num_complex::Complex64;
use rayon::prelude::*;
use std::io::{self, Read, Write};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid noise grid: {0}")]
    Invalid(#[from] Violation),
    #[error("snapshot io: {0}")]
    Io(#[from] io::Error),
    #[error("snapshot format: {0}")]
    Format(String),
}

/// Midpoint lattice of positive temporal frequencies with exact cell
/// masses of |xi|^{1-2H0}.
#[derive(Debug, Clone)]
pub struct XiLadder {
    pub dxi: f64,
    /// Positive midpoints (i + 1/2) dxi, ascending.
    pub xi: Vec<f64>,
    /// sqrt of the cell mass int_{i dxi}^{(i+1) dxi} |xi|^{1-2H0} dxi.
    pub amp: Vec<f64>,
}

impl XiLadder {
    fn build(h0: f64, dxi: f64, cutoff: f64) -> Self {
        let p = 2.0 - 2.0 * h0;
        let slots = (cutoff / dxi).round() as usize;
        let mut xi = Vec::with_capacity(slots);
        let mut amp = Vec::with_capacity(slots);
        for i in 0..slots {
            xi.push((i as f64 + 0.5) * dxi);
            let lo = (i as f64 * dxi).powf(p);
            let hi = ((i as f64 + 1.0) * dxi).powf(p);
            amp.push(((hi - lo) / p).sqrt());
        }
        XiLadder { dxi, xi, amp }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// One canonical spatial frequency eta_k and everything shared by its
/// Hermitian mirror: |eta|, the spatial weight, and the integer square
/// norm used for exact batching.
#[derive(Debug, Clone, Copy)]
pub struct EtaGroup {
    pub k: [i64; 2],
    pub rho: f64,
    /// sqrt(m1(k1) m2(k2)) with m_i the axis cell mass of |eta|^{1-2Hi}.
    pub weight: f64,
    pub ksq: i64,
}

impl EtaGroup {
    /// 1 for the self-mirrored origin, 2 otherwise.
    pub fn multiplicity(&self) -> f64 {
        if self.k == [0, 0] {
            1.0
        } else {
            2.0
        }
    }
}

/// Axis cell mass of |eta|^{1-2H} around lattice index k (spacing d).
fn eta_cell_mass(k: i64, d: f64, h: f64) -> f64 {
    let q = 2.0 - 2.0 * h;
    if k == 0 {
        2.0 * (0.5 * d).powf(q) / q
    } else {
        let a = (k.abs() as f64 - 0.5) * d;
        let b = (k.abs() as f64 + 0.5) * d;
        (b.powf(q) - a.powf(q)) / q
    }
}

/// The deterministic frame of one cutoff level: frequency lattices, cell
/// weights, and the canonical half of the spatial mode set.
#[derive(Debug, Clone)]
pub struct SynthGrid {
    pub hurst: HurstTriple,
    pub level: u32,
    pub period: f64,
    pub ladder: XiLadder,
    /// Canonical groups (k1 > 0, or k1 == 0 and k2 >= 0), sorted by
    /// (|k|^2, k1, k2).
    pub groups: Vec<EtaGroup>,
    /// Runs of equal |k|^2 in `groups`; gamma sweeps are shared per run.
    batches: Vec<Range<usize>>,
}

impl SynthGrid {
    /// Level-n frame under the config grid. Requires n <= grid.level and
    /// the Nyquist invariant at level n.
    pub fn new(hurst: &HurstTriple, grid: &GridSpec, n: u32) -> Result<Self, Violation> {
        assert!(n <= grid.level, "synthesis level exceeds the config level");
        if grid.nyquist() < (1u64 << n) as f64 {
            return Err(Violation::NyquistViolation {
                available: grid.nyquist(),
                required: (1u64 << n) as f64,
            });
        }
        Ok(Self::from_parts(hurst, n, grid.period, grid.dxi()))
    }

    /// Frame from raw lattice descriptors (snapshot reads, tests).
    pub fn from_parts(hurst: &HurstTriple, level: u32, period: f64, dxi: f64) -> Self {
        if level == 0 {
            // B^0 == 0: the empty mode set.
            return SynthGrid {
                hurst: *hurst,
                level,
                period,
                ladder: XiLadder {
                    dxi,
                    xi: vec![],
                    amp: vec![],
                },
                groups: vec![],
                batches: vec![],
            };
        }
        let cutoff = (1u64 << level) as f64;
        let ladder = XiLadder::build(hurst.h0(), dxi, cutoff);
        let deta = std::f64::consts::PI / period;
        let kmax = (cutoff / deta).floor() as i64;
        let mut groups = Vec::new();
        for k1 in 0..=kmax {
            let k2_lo = if k1 == 0 { 0 } else { -kmax };
            for k2 in k2_lo..=kmax {
                let ksq = k1 * k1 + k2 * k2;
                let rho = deta * (ksq as f64).sqrt();
                if rho > cutoff {
                    continue;
                }
                let weight = (eta_cell_mass(k1, deta, hurst.h1())
                    * eta_cell_mass(k2, deta, hurst.h2()))
                .sqrt();
                groups.push(EtaGroup {
                    k: [k1, k2],
                    rho,
                    weight,
                    ksq,
                });
            }
        }
        groups.sort_by_key(|g| (g.ksq, g.k));
        let mut batches = Vec::new();
        let mut start = 0;
        for g in 1..=groups.len() {
            if g == groups.len() || groups[g].ksq != groups[start].ksq {
                batches.push(start..g);
                start = g;
            }
        }
        SynthGrid {
            hurst: *hurst,
            level,
            period,
            ladder,
            groups,
            batches,
        }
    }

    pub fn deta(&self) -> f64 {
        std::f64::consts::PI / self.period
    }

    /// Number of (Hermitian-paired) modes: groups x xi slots x 2 signs.
    pub fn mode_count(&self) -> usize {
        self.groups.len() * self.ladder.len() * 2
    }

    /// psi-hat per (group, time): `out[g * times.len() + ti]` is the mode
    /// coefficient of e^{i <eta_k, x>} in the level field at times[ti],
    ///
    /// `sum_j coeff(j, k) w(j, k) gamma_t(xi_j, |eta_k|)`.
    ///
    /// The pair function supplies the two raw Gaussians (c_plus for
    /// +xi_i, c_minus for -xi_i) of slot i in group g; weights are
    /// applied here. Accumulation order per group is xi-ascending, so
    /// restricting to a lower level reproduces its partial sums bitwise.
    pub fn psi_hat_custom<F>(&self, pair: &F, times: &[f64]) -> Vec<Complex64>
    where
        F: Fn(usize, usize) -> [Complex64; 2] + Sync,
    {
        let nt = times.len();
        let ns = self.ladder.len();
        let mut out = vec![Complex64::default(); self.groups.len() * nt];
        let mut slices: Vec<(&Range<usize>, &mut [Complex64])> = Vec::new();
        let mut rest: &mut [Complex64] = &mut out;
        for b in &self.batches {
            let (head, tail) = rest.split_at_mut(b.len() * nt);
            slices.push((b, head));
            rest = tail;
        }
        slices.into_par_iter().for_each(|(batch, chunk)| {
            let rho = self.groups[batch.start].rho;
            // weighted coefficients per group in this batch
            let mut cw: Vec<[Complex64; 2]> = Vec::with_capacity(batch.len() * ns);
            for g in batch.clone() {
                for i in 0..ns {
                    let [cp, cm] = pair(g, i);
                    let a = self.ladder.amp[i];
                    cw.push([cp * a, cm * a]);
                }
            }
            let mut gvec = vec![Complex64::default(); ns];
            for (ti, &t) in times.iter().enumerate() {
                gamma_sweep(rho, t, &self.ladder, &mut gvec);
                for (gl, g) in batch.clone().enumerate() {
                    let row = &cw[gl * ns..(gl + 1) * ns];
                    let mut acc = Complex64::default();
                    for (c, gv) in row.iter().zip(gvec.iter()) {
                        acc += c[0] * gv + c[1] * gv.conj();
                    }
                    chunk[gl * nt + ti] = acc * self.groups[g].weight;
                }
            }
        });
        out
    }

    /// Seeded synthesis: coefficients derived on the fly from the seed.
    pub fn psi_hat_seeded(&self, seed: u64, times: &[f64]) -> Vec<Complex64> {
        let pair = |g: usize, i: usize| {
            let k = self.groups[g].k;
            [
                rng::mode_gaussian(seed, i as i64, k),
                rng::mode_gaussian(seed, -1 - i as i64, k),
            ]
        };
        self.psi_hat_custom(&pair, times)
    }

    /// Mode sums of the noise derivative itself,
    /// `b-dot(t, k) = sum_j coeff(j, k) w(j, k) e^{i xi_j t}`,
    /// pathwise consistent with the psi synthesis: feeding these into the
    /// wave Duhamel integral reproduces psi exactly.
    pub fn noise_dot_hat_seeded(&self, seed: u64, times: &[f64]) -> Vec<Complex64> {
        let nt = times.len();
        let ns = self.ladder.len();
        let mut out = vec![Complex64::default(); self.groups.len() * nt];
        let mut slices: Vec<(&Range<usize>, &mut [Complex64])> = Vec::new();
        let mut rest: &mut [Complex64] = &mut out;
        for b in &self.batches {
            let (head, tail) = rest.split_at_mut(b.len() * nt);
            slices.push((b, head));
            rest = tail;
        }
        slices.into_par_iter().for_each(|(batch, chunk)| {
            let mut cw: Vec<[Complex64; 2]> = Vec::with_capacity(batch.len() * ns);
            for g in batch.clone() {
                let k = self.groups[g].k;
                for i in 0..ns {
                    let a = self.ladder.amp[i];
                    cw.push([
                        rng::mode_gaussian(seed, i as i64, k) * a,
                        rng::mode_gaussian(seed, -1 - i as i64, k) * a,
                    ]);
                }
            }
            let mut phase = vec![Complex64::default(); ns];
            for (ti, &t) in times.iter().enumerate() {
                let step = Complex64::new((self.ladder.dxi * t).cos(), (self.ladder.dxi * t).sin());
                let mut rot = Complex64::default();
                for (i, p) in phase.iter_mut().enumerate() {
                    if i.is_multiple_of(64) {
                        rot = Complex64::from_polar(1.0, self.ladder.xi[i] * t);
                    }
                    *p = rot;
                    rot *= step;
                }
                for (gl, g) in batch.clone().enumerate() {
                    let row = &cw[gl * ns..(gl + 1) * ns];
                    let mut acc = Complex64::default();
                    for (c, ph) in row.iter().zip(phase.iter()) {
                        acc += c[0] * ph + c[1] * ph.conj();
                    }
                    chunk[gl * nt + ti] = acc * self.groups[g].weight;
                }
            }
        });
        out
    }

    /// Exact lattice variance `sum_modes w^2 |gamma_t(xi, |eta|)|^2`;
    /// independent of the spatial point by stationarity of the synthesis.
    ///
    /// Per-batch terms are summed in fixed batch order so the value is
    /// bit-identical regardless of the worker count.
    pub fn lattice_variance(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let ns = self.ladder.len();
        let terms: Vec<f64> = self
            .batches
            .par_iter()
            .map(|batch| {
                let rho = self.groups[batch.start].rho;
                let mut gvec = vec![Complex64::default(); ns];
                gamma_sweep(rho, t, &self.ladder, &mut gvec);
                // both xi signs carry the same |gamma|
                let s_xi: f64 = self
                    .ladder
                    .amp
                    .iter()
                    .zip(gvec.iter())
                    .map(|(a, g)| 2.0 * a * a * g.norm_sqr())
                    .sum();
                let s_eta: f64 = batch
                    .clone()
                    .map(|g| self.groups[g].multiplicity() * self.groups[g].weight.powi(2))
                    .sum();
                s_xi * s_eta
            })
            .collect();
        terms.iter().sum()
    }
}

/// Fill `out[i] = gamma(xi_i, rho, t)` over the positive ladder slots.
///
/// Uses rotor recurrences for the three phase factors with periodic
/// exact re-synchronization; slots near the resonances fall back to the
/// closed form.
pub fn gamma_sweep(rho: f64, t: f64, ladder: &XiLadder, out: &mut [Complex64]) {
    let ns = ladder.len();
    debug_assert!(out.len() >= ns);
    if t == 0.0 {
        out[..ns].fill(Complex64::default());
        return;
    }
    if rho < kernels::SERIES_EPS {
        for (slot, &xi) in out.iter_mut().zip(ladder.xi.iter()) {
            *slot = kernels::gamma(xi, rho, t);
        }
        return;
    }
    let dxi = ladder.dxi;
    let step_down = Complex64::new((dxi * t).cos(), -(dxi * t).sin());
    let step_up = step_down.conj();
    let minus_i = Complex64::new(0.0, -1.0);
    let plus_i = Complex64::new(0.0, 1.0);
    let pref = minus_i / (2.0 * rho);
    const BLOCK: usize = 64;
    let mut i0 = 0;
    while i0 < ns {
        let xi0 = ladder.xi[i0];
        let mut ra = Complex64::from_polar(1.0, (rho - xi0) * t);
        let mut rb = Complex64::from_polar(1.0, -(rho + xi0) * t);
        let mut re = Complex64::from_polar(1.0, xi0 * t);
        let end = (i0 + BLOCK).min(ns);
        for (i, slot) in out.iter_mut().enumerate().take(end).skip(i0) {
            let xi = ladder.xi[i];
            let a = rho - xi;
            let b = rho + xi;
            if (a * t).abs() < 1e-4 || (b * t).abs() < 1e-4 {
                *slot = kernels::gamma(xi, rho, t);
            } else {
                // F(a) = (e^{iat} - 1)/(ia), F(-b) = (e^{-ibt} - 1)/(-ib)
                let fa = (ra - 1.0) * (minus_i / a);
                let fb = (rb - 1.0) * (plus_i / b);
                *slot = re * (fa - fb) * pref;
            }
            ra *= step_down;
            rb *= step_down;
            re *= step_up;
        }
        i0 = end;
    }
}

/// Seeded complex Gaussian Fourier coefficients for one cutoff level,
/// materialized per (group, slot, sign).
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub synth: SynthGrid,
    pub seed: u64,
    /// `[c_plus, c_minus]` per (group, slot), group-major.
    coeffs: Vec<[Complex64; 2]>,
}

/// Sample the level-n mode set of a run configuration. Level 0 is the
/// empty set (the zero noise).
pub fn sample_modes(
    hurst: &HurstTriple,
    grid: &GridSpec,
    n: u32,
    seed: u64,
) -> Result<ModeSet, Violation> {
    let synth = SynthGrid::new(hurst, grid, n)?;
    Ok(ModeSet::materialize(synth, seed))
}

impl ModeSet {
    fn materialize(synth: SynthGrid, seed: u64) -> Self {
        let ns = synth.ladder.len();
        let mut coeffs = Vec::with_capacity(synth.groups.len() * ns);
        for g in &synth.groups {
            for i in 0..ns {
                coeffs.push([
                    rng::mode_gaussian(seed, i as i64, g.k),
                    rng::mode_gaussian(seed, -1 - i as i64, g.k),
                ]);
            }
        }
        ModeSet { synth, seed, coeffs }
    }

    pub fn level(&self) -> u32 {
        self.synth.level
    }

    pub fn is_empty(&self) -> bool {
        self.synth.groups.is_empty()
    }

    /// Raw Gaussian of slot (group, i, sign); sign 0 is +xi.
    pub fn coeff(&self, g: usize, i: usize, sign: usize) -> Complex64 {
        self.coeffs[g * self.synth.ladder.len() + i][sign]
    }

    /// Full mode weight sqrt(cell masses) of slot i in group g.
    pub fn weight(&self, g: usize, i: usize) -> f64 {
        self.synth.ladder.amp[i] * self.synth.groups[g].weight
    }

    pub fn psi_hat(&self, times: &[f64]) -> Vec<Complex64> {
        let ns = self.synth.ladder.len();
        let pair = |g: usize, i: usize| self.coeffs[g * ns + i];
        self.synth.psi_hat_custom(&pair, times)
    }

    pub fn lattice_variance(&self, t: f64) -> f64 {
        self.synth.lattice_variance(t)
    }

    /// Exact lattice covariance
    /// `E[psi(t, x) psi(t, y)] = sum_modes w^2 |gamma_t|^2 cos(eta . (x - y))`.
    pub fn lattice_covariance(&self, t: f64, x: [f64; 2], y: [f64; 2]) -> f64 {
        let synth = &self.synth;
        let ns = synth.ladder.len();
        let d = [x[0] - y[0], x[1] - y[1]];
        let deta = synth.deta();
        let terms: Vec<f64> = synth
            .batches
            .par_iter()
            .map(|batch| {
                let rho = synth.groups[batch.start].rho;
                let mut gvec = vec![Complex64::default(); ns];
                gamma_sweep(rho, t, &synth.ladder, &mut gvec);
                let s_xi: f64 = synth
                    .ladder
                    .amp
                    .iter()
                    .zip(gvec.iter())
                    .map(|(a, g)| 2.0 * a * a * g.norm_sqr())
                    .sum();
                let s_eta: f64 = batch
                    .clone()
                    .map(|g| {
                        let grp = &synth.groups[g];
                        let phase = deta * (grp.k[0] as f64 * d[0] + grp.k[1] as f64 * d[1]);
                        grp.multiplicity() * grp.weight.powi(2) * phase.cos()
                    })
                    .sum();
                s_xi * s_eta
            })
            .collect();
        terms.iter().sum()
    }

    /// Point evaluation of the synthesized field at time t:
    /// `psi(t, x) = Re c_0(t) + 2 sum_{canonical k != 0} Re(psi_hat_k e^{i eta_k x})`.
    pub fn psi_at_points(&self, t: f64, points: &[[f64; 2]]) -> Vec<f64> {
        let hat = self.psi_hat(&[t]);
        let deta = self.synth.deta();
        points
            .iter()
            .map(|x| {
                let mut v = 0.0;
                for (g, grp) in self.synth.groups.iter().enumerate() {
                    let phase = deta * (grp.k[0] as f64 * x[0] + grp.k[1] as f64 * x[1]);
                    let e = Complex64::new(phase.cos(), phase.sin());
                    v += grp.multiplicity() * (hat[g] * e).re;
                }
                v
            })
            .collect()
    }

    /// Binary snapshot, magic "FWMS".
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<(), NoiseError> {
        w.write_all(b"FWMS")?;
        w.write_all(&1u32.to_le_bytes())?;
        for v in [
            self.synth.hurst.h0(),
            self.synth.hurst.h1(),
            self.synth.hurst.h2(),
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.synth.level.to_le_bytes())?;
        w.write_all(&self.synth.period.to_le_bytes())?;
        w.write_all(&self.synth.ladder.dxi.to_le_bytes())?;
        w.write_all(&(self.synth.ladder.len() as u64).to_le_bytes())?;
        w.write_all(&(self.synth.groups.len() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for g in &self.synth.groups {
            w.write_all(&g.k[0].to_le_bytes())?;
            w.write_all(&g.k[1].to_le_bytes())?;
        }
        for c in &self.coeffs {
            for z in c {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self, NoiseError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"FWMS" {
            return Err(NoiseError::Format("bad magic, expected FWMS".into()));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(NoiseError::Format(format!("unsupported version {version}")));
        }
        let h0 = read_f64(r)?;
        let h1 = read_f64(r)?;
        let h2 = read_f64(r)?;
        let hurst = HurstTriple::new(h0, h1, h2)
            .map_err(|e| NoiseError::Format(format!("bad hurst triple: {e}")))?;
        let level = read_u32(r)?;
        let period = read_f64(r)?;
        let dxi = read_f64(r)?;
        let slots = read_u64(r)? as usize;
        let n_groups = read_u64(r)? as usize;
        let seed = read_u64(r)?;
        let synth = SynthGrid::from_parts(&hurst, level, period, dxi);
        if synth.ladder.len() != slots || synth.groups.len() != n_groups {
            return Err(NoiseError::Format(format!(
                "lattice mismatch: file has {n_groups} groups x {slots} slots, \
                 descriptors give {} x {}",
                synth.groups.len(),
                synth.ladder.len()
            )));
        }
        for g in &synth.groups {
            let k1 = read_i64(r)?;
            let k2 = read_i64(r)?;
            if [k1, k2] != g.k {
                return Err(NoiseError::Format("group order mismatch".into()));
            }
        }
        let mut coeffs = Vec::with_capacity(n_groups * slots);
        for _ in 0..n_groups * slots {
            let a = Complex64::new(read_f64(r)?, read_f64(r)?);
            let b = Complex64::new(read_f64(r)?, read_f64(r)?);
            coeffs.push([a, b]);
        }
        Ok(ModeSet { synth, seed, coeffs })
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_i64<R: Read>(r: &mut R) -> io::Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
