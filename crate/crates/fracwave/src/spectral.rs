//! Torus spectral helpers: FFT conventions on the periodization cell
//! [-L, L]^2, Bessel-potential multipliers, 3/2-rule dealiased products,
//! and the smooth radial bumps used for localization.
//!
//! Mode convention: a coefficient array `c` in FFT bin layout represents
//! `f(x) = sum_k c_k e^{i <eta_k, x>}` with `eta_k = k pi / L` and
//! `k in [-nx/2, nx/2)^2`. Grid points sit at `x_m = -L + 2L m / nx`, so
//! transforms carry the parity phase `(-1)^{k1+k2}` relative to the raw
//! DFT.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, Mutex, OnceLock};

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static P: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    P.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// A square spatial lattice on the cell [-L, L]^2 with cached FFT plans.
#[derive(Clone)]
pub struct TorusGrid {
    pub nx: usize,
    pub half_period: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusGrid")
            .field("nx", &self.nx)
            .field("half_period", &self.half_period)
            .finish()
    }
}

impl TorusGrid {
    pub fn new(nx: usize, half_period: f64) -> Self {
        assert!(nx >= 4 && nx.is_multiple_of(2), "nx must be even and >= 4");
        let mut p = planner().lock().unwrap();
        TorusGrid {
            nx,
            half_period,
            fwd: p.plan_fft_forward(nx),
            inv: p.plan_fft_inverse(nx),
        }
    }

    pub fn n_points(&self) -> usize {
        self.nx * self.nx
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_period / self.nx as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    /// Lattice coordinate of grid index m along one axis.
    pub fn coord(&self, m: usize) -> f64 {
        -self.half_period + self.dx() * m as f64
    }

    /// Signed frequency index of a bin.
    #[inline]
    pub fn k_of_bin(&self, bin: usize) -> i64 {
        if bin < self.nx / 2 {
            bin as i64
        } else {
            bin as i64 - self.nx as i64
        }
    }

    #[inline]
    pub fn bin_of_k(&self, k: i64) -> usize {
        debug_assert!(k.unsigned_abs() as usize <= self.nx / 2);
        k.rem_euclid(self.nx as i64) as usize
    }

    #[inline]
    pub fn bin2(&self, k: [i64; 2]) -> usize {
        self.bin_of_k(k[0]) * self.nx + self.bin_of_k(k[1])
    }

    /// Spatial frequency eta = k pi / L of a signed index.
    #[inline]
    pub fn eta(&self, k: i64) -> f64 {
        k as f64 * std::f64::consts::PI / self.half_period
    }

    /// |eta_k|^2 for a flat bin index.
    #[inline]
    pub fn eta_sq(&self, idx: usize) -> f64 {
        let k1 = self.k_of_bin(idx / self.nx);
        let k2 = self.k_of_bin(idx % self.nx);
        let e1 = self.eta(k1);
        let e2 = self.eta(k2);
        e1 * e1 + e2 * e2
    }

    fn fft2(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.nx;
        assert_eq!(data.len(), n * n);
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        for row in data.chunks_exact_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
        transpose_square(data, n);
        for row in data.chunks_exact_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
        transpose_square(data, n);
    }

    fn apply_parity(&self, data: &mut [Complex64]) {
        let n = self.nx;
        for b1 in 0..n {
            let k1 = self.k_of_bin(b1);
            for b2 in 0..n {
                let k2 = self.k_of_bin(b2);
                if (k1 + k2) & 1 != 0 {
                    data[b1 * n + b2] = -data[b1 * n + b2];
                }
            }
        }
    }

    /// Evaluate `sum_k c_k e^{i eta_k x}` on the grid (complex output).
    pub fn values_from_modes(&self, modes: &[Complex64]) -> Vec<Complex64> {
        let mut buf = modes.to_vec();
        self.apply_parity(&mut buf);
        self.fft2(&mut buf, &self.inv.clone());
        buf
    }

    /// Real part of the mode sum; the imaginary part is returned as a
    /// diagnostic maximum.
    pub fn real_values_from_modes(&self, modes: &[Complex64]) -> (Vec<f64>, f64) {
        let v = self.values_from_modes(modes);
        let mut max_im = 0.0f64;
        let re = v
            .iter()
            .map(|z| {
                max_im = max_im.max(z.im.abs());
                z.re
            })
            .collect();
        (re, max_im)
    }

    /// Mode coefficients of grid values (inverse of `values_from_modes`).
    pub fn modes_from_values(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.fft2(&mut buf, &self.fwd.clone());
        let norm = 1.0 / self.n_points() as f64;
        for z in buf.iter_mut() {
            *z *= norm;
        }
        self.apply_parity(&mut buf);
        buf
    }

    pub fn modes_from_real(&self, values: &[f64]) -> Vec<Complex64> {
        let buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.modes_from_values(&buf)
    }

    /// Multiply modes in place by (1 + |eta|^2)^{order/2}.
    pub fn apply_bessel(&self, modes: &mut [Complex64], order: f64) {
        let n = self.nx;
        for b1 in 0..n {
            let e1 = self.eta(self.k_of_bin(b1));
            for b2 in 0..n {
                let e2 = self.eta(self.k_of_bin(b2));
                let m = (1.0 + e1 * e1 + e2 * e2).powf(0.5 * order);
                modes[b1 * n + b2] *= m;
            }
        }
    }
}

pub fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Padded grid size for the 3/2 dealiasing rule.
pub fn dealias_size(nx: usize) -> usize {
    3 * nx / 2
}

/// Re-bin modes from one grid size onto another (zero-padding or
/// truncation); only |k| < min(src, dst)/2 survive.
pub fn rebin_modes(src: &[Complex64], src_nx: usize, dst_nx: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); dst_nx * dst_nx];
    let half = src_nx.min(dst_nx) as i64 / 2;
    for k1 in -(half - 1)..half {
        for k2 in -(half - 1)..half {
            let s = (k1.rem_euclid(src_nx as i64) as usize) * src_nx
                + k2.rem_euclid(src_nx as i64) as usize;
            let d = (k1.rem_euclid(dst_nx as i64) as usize) * dst_nx
                + k2.rem_euclid(dst_nx as i64) as usize;
            dst[d] = src[s];
        }
    }
    dst
}

/// Pointwise product of two mode sets computed on the 3/2 zero-padded
/// grid and truncated back, so quadratic interactions of retained modes
/// never alias onto the lattice.
pub fn dealiased_product(
    a: &[Complex64],
    b: &[Complex64],
    grid: &TorusGrid,
    fine: &TorusGrid,
) -> Vec<Complex64> {
    debug_assert_eq!(fine.nx, dealias_size(grid.nx));
    let av = fine.values_from_modes(&rebin_modes(a, grid.nx, fine.nx));
    let bv = fine.values_from_modes(&rebin_modes(b, grid.nx, fine.nx));
    let prod: Vec<Complex64> = av.iter().zip(bv.iter()).map(|(x, y)| x * y).collect();
    rebin_modes(&fine.modes_from_values(&prod), fine.nx, grid.nx)
}

/// Smooth radial plateau: 1 on [0, inner], 0 on [outer, inf), glued by
/// the exp(-1/u) smoothstep in between. C-infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothBump {
    pub inner: f64,
    pub outer: f64,
}

impl SmoothBump {
    pub fn new(inner: f64, outer: f64) -> Self {
        assert!(0.0 < inner && inner < outer);
        SmoothBump { inner, outer }
    }

    /// The localization window chi: 1 on |x| <= 2, supported in |x| <= 3.
    pub fn window() -> Self {
        SmoothBump::new(2.0, 3.0)
    }

    /// The equation cutoff rho: 1 on |x| <= 1, supported in |x| <= 2.
    pub fn cutoff() -> Self {
        SmoothBump::new(1.0, 2.0)
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r <= self.inner {
            1.0
        } else if r >= self.outer {
            0.0
        } else {
            let u = (self.outer - r) / (self.outer - self.inner);
            smoothstep(u)
        }
    }

    pub fn eval_point(&self, x: [f64; 2]) -> f64 {
        self.eval((x[0] * x[0] + x[1] * x[1]).sqrt())
    }

    /// Tabulate on a grid (row-major over (x1, x2)).
    pub fn on_grid(&self, grid: &TorusGrid) -> Vec<f64> {
        let n = grid.nx;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let x1 = grid.coord(i);
            for j in 0..n {
                let x2 = grid.coord(j);
                out[i * n + j] = self.eval_point([x1, x2]);
            }
        }
        out
    }
}

impl crate::config::GridSpec {
    /// Torus of the spatial lattice.
    pub fn torusgrid(&self) -> TorusGrid {
        TorusGrid::new(self.nx, self.period)
    }
}

fn bump_h(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

fn smoothstep(u: f64) -> f64 {
    let a = bump_h(u);
    let b = bump_h(1.0 - u);
    a / (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn roundtrip_modes_values() {
        let grid = TorusGrid::new(16, 4.0);
        let mut modes = vec![Complex64::default(); grid.n_points()];
        for (i, m) in modes.iter_mut().enumerate() {
            let b = rng::hash_words(&[77, i as u64]);
            *m = Complex64::new(rng::unit_f64(b) - 0.5, rng::unit_f64(rng::mix64(b)) - 0.5);
        }
        let vals = grid.values_from_modes(&modes);
        let back = grid.modes_from_values(&vals);
        let err = modes
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn single_mode_evaluates_to_plane_wave() {
        let grid = TorusGrid::new(16, 4.0);
        let k = [3i64, -2];
        let mut modes = vec![Complex64::default(); grid.n_points()];
        modes[grid.bin2(k)] = Complex64::new(1.0, 0.0);
        let vals = grid.values_from_modes(&modes);
        for i in 0..grid.nx {
            for j in 0..grid.nx {
                let phase = grid.eta(k[0]) * grid.coord(i) + grid.eta(k[1]) * grid.coord(j);
                let expect = Complex64::new(phase.cos(), phase.sin());
                assert!((vals[i * grid.nx + j] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hermitian_modes_give_real_values() {
        let grid = TorusGrid::new(32, 4.0);
        let mut modes = vec![Complex64::default(); grid.n_points()];
        for k1 in -7i64..=7 {
            for k2 in -7i64..=7 {
                if (k1, k2) <= (0, 0) {
                    continue;
                }
                let b = rng::hash_words(&[5, k1 as u64, k2 as u64]);
                let c =
                    Complex64::new(rng::unit_f64(b) - 0.5, rng::unit_f64(rng::mix64(b)) - 0.5);
                modes[grid.bin2([k1, k2])] = c;
                modes[grid.bin2([-k1, -k2])] = c.conj();
            }
        }
        modes[grid.bin2([0, 0])] = Complex64::new(0.3, 0.0);
        let (_, max_im) = grid.real_values_from_modes(&modes);
        assert!(max_im < 1e-12);
    }

    #[test]
    fn dealiased_product_of_single_modes_is_exact() {
        let grid = TorusGrid::new(32, 4.0);
        let fine = TorusGrid::new(dealias_size(32), 4.0);
        let (ka, kb) = ([5i64, -3], [7i64, 9]);
        let mut a = vec![Complex64::default(); grid.n_points()];
        let mut b = vec![Complex64::default(); grid.n_points()];
        a[grid.bin2(ka)] = Complex64::new(0.0, 2.0);
        b[grid.bin2(kb)] = Complex64::new(1.5, -0.5);
        let prod = dealiased_product(&a, &b, &grid, &fine);
        let expect_bin = grid.bin2([ka[0] + kb[0], ka[1] + kb[1]]);
        for (idx, v) in prod.iter().enumerate() {
            if idx == expect_bin {
                let expect = Complex64::new(0.0, 2.0) * Complex64::new(1.5, -0.5);
                assert!((v - expect).norm() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12, "spurious mode at bin {idx}");
            }
        }
    }

    #[test]
    fn dealiased_product_drops_unresolvable_modes_without_aliasing() {
        // Two modes whose sum exceeds the retained band: the product must
        // NOT fold back onto the lattice.
        let grid = TorusGrid::new(16, 4.0);
        let fine = TorusGrid::new(dealias_size(16), 4.0);
        let ka = [6i64, 0];
        let kb = [5i64, 0];
        let mut a = vec![Complex64::default(); grid.n_points()];
        let mut b = vec![Complex64::default(); grid.n_points()];
        a[grid.bin2(ka)] = Complex64::new(1.0, 0.0);
        b[grid.bin2(kb)] = Complex64::new(1.0, 0.0);
        let prod = dealiased_product(&a, &b, &grid, &fine);
        let max: f64 = prod.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max < 1e-12, "aliased energy {max}");
    }

    #[test]
    fn product_commutes() {
        let grid = TorusGrid::new(16, 4.0);
        let fine = TorusGrid::new(24, 4.0);
        let mk = |seed: u64| {
            let mut m = vec![Complex64::default(); grid.n_points()];
            for k1 in -3i64..=3 {
                for k2 in -3i64..=3 {
                    let b = rng::hash_words(&[seed, k1 as u64, k2 as u64]);
                    m[grid.bin2([k1, k2])] =
                        Complex64::new(rng::unit_f64(b) - 0.5, rng::unit_f64(rng::mix64(b)) - 0.5);
                }
            }
            m
        };
        let a = mk(1);
        let b = mk(2);
        let ab = dealiased_product(&a, &b, &grid, &fine);
        let ba = dealiased_product(&b, &a, &grid, &fine);
        let err = ab
            .iter()
            .zip(ba.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn bessel_multiplier_matches_definition() {
        let grid = TorusGrid::new(8, 4.0);
        let mut modes = vec![Complex64::new(1.0, 0.0); grid.n_points()];
        grid.apply_bessel(&mut modes, -0.8);
        let idx = grid.bin2([2, -3]);
        let e = grid.eta(2).powi(2) + grid.eta(-3).powi(2);
        assert!((modes[idx].re - (1.0 + e).powf(-0.4)).abs() < 1e-14);
    }

    #[test]
    fn bump_shape() {
        let w = SmoothBump::window();
        assert_eq!(w.eval(0.5), 1.0);
        assert_eq!(w.eval(2.0), 1.0);
        assert_eq!(w.eval(3.0), 0.0);
        assert_eq!(w.eval(4.5), 0.0);
        let mid = w.eval(2.5);
        assert!(mid > 0.0 && mid < 1.0);
        // radial monotone on the ramp
        let mut prev = 1.0;
        for i in 0..=20 {
            let r = 2.0 + i as f64 * 0.05;
            let v = w.eval(r);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        let c = SmoothBump::cutoff();
        assert_eq!(c.eval(0.5), 1.0);
        assert_eq!(c.eval(3.0), 0.0);
    }
}
