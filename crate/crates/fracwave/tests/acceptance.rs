//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with the measured quantities (run with --nocapture to see the
//! lines for passing criteria).
//!
//! Every tolerance is pinned here. Criterion 1's growth-exponent window
//! is asserted exactly as stated; see the test body for the measured
//! finite-level values it produces.

use fracwave::analysis::{self, Component, COMPONENTS};
use fracwave::cli;
use fracwave::config::{GridSpec, HurstTriple, RunConfig, SobolevSpec};
use fracwave::kernels;
use fracwave::noise;
use fracwave::objects::{self, Field, FieldGeom, FieldLabel};
use fracwave::oracles::{self, JIntegral, Verdict};
use fracwave::quad;
use fracwave::renorm;
use fracwave::rng;
use fracwave::solver::{self, InitialData};
use fracwave::spectral::TorusGrid;
use num_complex::Complex64;
use rayon::prelude::*;
use std::time::Instant;

fn report(k: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {k:02} ({name}): {tag} - {detail}");
}

fn h_target() -> HurstTriple {
    HurstTriple::new(0.4, 0.4, 0.35).unwrap()
}

fn h_upper() -> HurstTriple {
    HurstTriple::new(0.45, 0.45, 0.35).unwrap()
}

fn h_divergent() -> HurstTriple {
    HurstTriple::new(0.3, 0.35, 0.3).unwrap()
}

#[test]
fn c01_sigma_scaling_law() {
    // Slope of log2 sigma^n(1) over n = 4..9 against 2(3/2 - sum H)
    // within +-0.05 for both target triples; t-linearity
    // sigma(1)/sigma(0.5) in [1.9, 2.1] at n = 9; runtime <= 5 min.
    let start = Instant::now();
    let levels: Vec<u32> = (4..=9).collect();
    let mut details = String::new();
    let mut slope_ok = true;
    let mut ratio_ok = true;
    for (h, expected) in [(h_target(), 0.70), (h_upper(), 0.50)] {
        let fit = renorm::sigma_slope_fit(&h, 1.0, &levels, 1e-6).unwrap();
        assert!((fit.expected - expected).abs() < 1e-12);
        slope_ok &= (fit.slope - expected).abs() <= 0.05;
        ratio_ok &= (1.9..=2.1).contains(&fit.t_ratio);
        details.push_str(&format!(
            "sumH={:.2}: slope {:.4} (expected {:.2}), t-ratio {:.3}; ",
            h.sum(),
            fit.slope,
            expected,
            fit.t_ratio
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let time_ok = elapsed <= 300.0;
    details.push_str(&format!("elapsed {elapsed:.0}s"));
    report(1, "sigma scaling law", slope_ok && ratio_ok && time_ok, &details);
    assert!(ratio_ok, "t-linearity failed: {details}");
    assert!(time_ok, "runtime budget exceeded: {details}");
    // The finite-level slope carries the constant-offset bias of the
    // asymptotic law (sigma^n = A 2^{2n(3/2-sumH)} - B with B ~ A); the
    // exponent is recovered only at higher levels. Asserted as stated.
    assert!(
        slope_ok,
        "slope window +-0.05 not met at n=4..9: {details} \
         (the fitted exponent approaches the expected value only as n grows; \
         see the growth-diagnostic test below)"
    );
}

#[test]
fn c01_sigma_exponent_recovered_asymptotically() {
    // Companion diagnostic: removing the constant offset recovers the
    // growth exponent at the same levels. Fit sigma^n = A 2^{p n} + B by
    // profiling over p: with the offset allowed, p lands within +-0.05.
    let levels: Vec<u32> = (4..=9).collect();
    for (h, expected) in [(h_target(), 0.70), (h_upper(), 0.50)] {
        let table = renorm::sigma_table(&h, &levels, &[1.0], 1e-6).unwrap();
        let sig: Vec<f64> = table.rows.iter().map(|r| r.sigma).collect();
        let mut best = (f64::INFINITY, 0.0);
        let mut p = expected - 0.3;
        while p <= expected + 0.3 {
            // linear least squares for (a, b) at fixed p
            let xs: Vec<f64> = levels.iter().map(|&n| (2.0f64).powf(p * n as f64)).collect();
            let n = xs.len() as f64;
            let sx: f64 = xs.iter().sum();
            let sy: f64 = sig.iter().sum();
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            let sxy: f64 = xs.iter().zip(sig.iter()).map(|(x, y)| x * y).sum();
            let a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            let b = (sy - a * sx) / n;
            let res: f64 = xs
                .iter()
                .zip(sig.iter())
                .map(|(x, y)| (y - a * x - b).powi(2))
                .sum();
            if res < best.0 {
                best = (res, p);
            }
            p += 0.001;
        }
        println!(
            "sigma growth with offset: sumH={:.2} fitted exponent {:.3} (expected {expected:.2})",
            h.sum(),
            best.1
        );
        assert!(
            (best.1 - expected).abs() <= 0.05,
            "offset-corrected exponent {:.3} vs {expected}",
            best.1
        );
    }
}

#[test]
fn c02_divergence_vs_convergence_dichotomy() {
    // alpha = 0.55, t = 1, 64 samples, n = 3..7: strictly increasing
    // beyond one paired SE in the divergent regime; successive increments
    // shrinking by >= 25% per level in the target window. <= 30 min.
    let start = Instant::now();
    let grid = GridSpec {
        level: 7,
        period: 4.0,
        nx: 384,
        nt: 2,
        horizon: 1.0,
        n_xi: None,
    };
    let levels: Vec<u32> = (3..=7).collect();
    let samples = 64;

    let div = renorm::divergence_study(&h_divergent(), &grid, 0.55, &levels, samples, 271).unwrap();
    let mut increasing = true;
    for row in &div.rows[1..] {
        let (inc, se) = row.increment.unwrap();
        increasing &= inc > se;
    }
    let div_vals: Vec<String> = div
        .rows
        .iter()
        .map(|r| format!("{:.3e}", r.estimate))
        .collect();

    let tw = renorm::divergence_study(&h_upper(), &grid, 0.55, &levels, samples, 271).unwrap();
    let incs: Vec<f64> = tw.rows[1..]
        .iter()
        .map(|r| r.increment.unwrap().0)
        .collect();
    let mut shrinking = true;
    for w in incs.windows(2) {
        shrinking &= w[1] <= 0.75 * w[0];
    }
    let elapsed = start.elapsed().as_secs_f64();
    let time_ok = elapsed <= 1800.0;
    let detail = format!(
        "divergent levels {:?}: [{}] (each increment > 1 SE: {increasing}); \
         target-window increments {:?} shrink >= 25%/level: {shrinking}; elapsed {elapsed:.0}s",
        levels,
        div_vals.join(", "),
        incs.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()
    );
    report(
        2,
        "divergence vs convergence dichotomy",
        increasing && shrinking && time_ok,
        &detail,
    );
    assert!(increasing, "{detail}");
    assert!(shrinking, "{detail}");
    assert!(time_ok, "{detail}");
}

#[test]
fn c03_cauchy_decay_of_level_increments() {
    // H = (0.45, 0.45, 0.35), alpha at the window midpoint, 32 samples:
    // each component's increment moment at (n, n+1) decreases
    // monotonically over n = 3..6.
    let h = h_upper();
    let grid = GridSpec {
        level: 7,
        period: 4.0,
        nx: 384,
        nt: 48,
        horizon: 1.0,
        n_xi: None,
    };
    let alpha = h.default_alpha();
    assert!((alpha - 0.375).abs() < 1e-12);
    let levels: Vec<u32> = (3..=7).collect();
    let rows = analysis::increment_study(
        &h,
        &grid,
        &levels,
        grid.nt / 2,
        grid.nt,
        analysis::IncrementEstimator::FieldMean,
        32,
        137,
        alpha,
    )
    .unwrap();
    let mut all_ok = true;
    let mut detail = String::new();
    for comp in COMPONENTS {
        let series: Vec<f64> = levels
            .windows(2)
            .map(|pair| {
                rows.iter()
                    .find(|r| r.component == comp && r.n == pair[0])
                    .unwrap()
                    .estimate
            })
            .collect();
        let monotone = series.windows(2).all(|w| w[1] < w[0]);
        all_ok &= monotone;
        detail.push_str(&format!(
            "{}: [{}] monotone {monotone}; ",
            comp.label(),
            series
                .iter()
                .map(|v| format!("{v:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    report(3, "cauchy decay of level increments", all_ok, &detail);
    assert!(all_ok, "{detail}");
}

#[test]
fn c04_kernel_oracles() {
    // gamma closed form vs quadrature <= 1e-9 on 100 random points;
    // Lambda identity <= 1e-8 after the one-constant fit; wave-multiplier
    // bound sup <= sqrt(2); <= 1 min.
    let start = Instant::now();
    let oracle = |xi: f64, rho: f64, t: f64| -> Complex64 {
        if t == 0.0 {
            return Complex64::default();
        }
        let r = quad::adaptive_complex(
            |s| Complex64::new(0.0, -xi * s).exp() * (s * kernels::sinc(s * rho)),
            0.0,
            t,
            1e-13,
            1e-15,
        )
        .unwrap();
        Complex64::new((xi * t).cos(), (xi * t).sin()) * r.value
    };
    let mut worst_gamma = 0.0f64;
    for i in 0..100u64 {
        let xi = 40.0 * rng::unit_f64(rng::hash_words(&[401, i])) - 20.0;
        let rho = 20.0 * rng::unit_f64(rng::hash_words(&[402, i]));
        let t = rng::unit_f64(rng::hash_words(&[403, i]));
        let cf = kernels::gamma(xi, rho, t);
        let or = oracle(xi, rho, t);
        worst_gamma = worst_gamma.max((cf - or).norm() / or.norm().max(1e-300));
    }
    let c = kernels::lambda_constant();
    let mut worst_lambda = 0.0f64;
    for i in 0..100u64 {
        let xi = 30.0 * rng::unit_f64(rng::hash_words(&[404, i])) - 15.0;
        let rho = 14.9 * rng::unit_f64(rng::hash_words(&[405, i])) + 0.1;
        let t = rng::unit_f64(rng::hash_words(&[406, i]));
        let lhs = kernels::gamma(xi, rho, t).norm_sqr();
        let rhs = c * kernels::gamma_sq_via_lambda(xi, rho, t).unwrap();
        worst_lambda = worst_lambda.max((lhs - rhs).abs() / lhs.max(1e-300));
    }
    let mut sup = 0.0f64;
    for it in 0..=100 {
        let t = it as f64 / 100.0;
        for il in 0..=40_000 {
            let lam = il as f64 * 0.005;
            sup = sup.max(kernels::wave_multiplier(t, lam).abs() * (1.0 + lam * lam).sqrt());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_gamma <= 1e-9
        && worst_lambda <= 1e-8
        && sup <= 2.0f64.sqrt()
        && elapsed <= 60.0;
    let detail = format!(
        "gamma worst rel {worst_gamma:.2e} (<=1e-9); lambda worst rel {worst_lambda:.2e} \
         (<=1e-8, c = {c:.12}); multiplier sup {sup:.6} (<= sqrt2 = {:.6}); elapsed {elapsed:.1}s",
        2.0f64.sqrt()
    );
    report(4, "kernel oracles", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c05_wick_identity() {
    // MC covariance of psi^2 equals 2 (cov psi)^2 within 3 SE at 5 point
    // pairs, 512 samples.
    let h = h_upper();
    let grid = GridSpec {
        level: 4,
        period: 4.0,
        nx: 64,
        nt: 2,
        horizon: 1.0,
        n_xi: None,
    };
    let pairs: [([f64; 2], [f64; 2]); 5] = [
        ([0.0, 0.0], [0.0, 0.0]),
        ([0.0, 0.0], [0.5, 0.0]),
        ([0.25, -0.3], [-0.2, 0.4]),
        ([0.8, 0.8], [0.8, -0.8]),
        ([1.2, 0.0], [0.0, 1.2]),
    ];
    let t = 1.0;
    let n_mc = 512usize;
    let base = noise::sample_modes(&h, &grid, 4, 0).unwrap();
    let var = base.lattice_variance(t);
    let samples: Vec<Vec<f64>> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let modes =
                noise::sample_modes(&h, &grid, 4, rng::sample_seed(555, i as u64)).unwrap();
            let pts: Vec<[f64; 2]> = pairs.iter().flat_map(|p| [p.0, p.1]).collect();
            modes.psi_at_points(t, &pts)
        })
        .collect();
    let mut pass = true;
    let mut detail = String::new();
    for (pi, pair) in pairs.iter().enumerate() {
        let qs: Vec<f64> = samples
            .iter()
            .map(|v| {
                let a = v[2 * pi] * v[2 * pi] - var;
                let b = v[2 * pi + 1] * v[2 * pi + 1] - var;
                a * b
            })
            .collect();
        // E[psi2(x) psi2(y)] = 2 cov(psi(x), psi(y))^2 (exact centering:
        // the product mean IS the covariance)
        let mean = qs.iter().sum::<f64>() / n_mc as f64;
        let sd = (qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n_mc - 1) as f64)
            .sqrt();
        let se = sd / (n_mc as f64).sqrt();
        let target = 2.0 * base.lattice_covariance(t, pair.0, pair.1).powi(2);
        let ok = (mean - target).abs() <= 3.0 * se;
        pass &= ok;
        detail.push_str(&format!(
            "pair{pi}: mc {mean:.3e} vs 2cov^2 {target:.3e} (se {se:.2e}, ok {ok}); "
        ));
    }
    report(5, "gaussian wick identity", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c06_integral_lemma_oracles() {
    // first_order verdicts at threshold +- offsets; all four J integrals
    // converged in the window; J1 factorization within 1e-5; convolution
    // bound max ratio stable within 5% under grid doubling.
    let h = h_target();
    let thr = 1.5 - h.sum();
    let radii = oracles::doubling_radii(4, 9);
    let conv = oracles::truncation_study("first_order", "", &radii, |r| {
        oracles::integral_first_order(&h, thr + 0.1, r)
    })
    .unwrap();
    let div = oracles::truncation_study("first_order", "", &radii, |r| {
        oracles::integral_first_order(&h, thr - 0.2, r)
    })
    .unwrap();
    let first_ok = conv.verdict == Verdict::Converged && div.verdict == Verdict::Diverging;

    let hu = h_upper();
    let j_radii = oracles::doubling_radii(4, 8);
    let mut j_ok = true;
    let mut j_detail = String::new();
    for which in [JIntegral::J1, JIntegral::J2, JIntegral::J3, JIntegral::J4] {
        let rep = oracles::truncation_study(&format!("{which:?}"), "", &j_radii, |r| {
            oracles::integral_j(which, &hu, &hu, 0.45, r)
        })
        .unwrap();
        j_ok &= rep.verdict == Verdict::Converged;
        j_detail.push_str(&format!("{which:?}:{:?} ", rep.verdict));
    }

    let via_polar = oracles::integral_j(JIntegral::J1, &hu, &hu, 0.45, 32.0).unwrap();
    let f = oracles::first_order_cartesian(&hu, 0.45, 32.0).unwrap();
    let fact_rel = (via_polar - f * f).abs() / via_polar;
    let fact_ok = fact_rel <= 1e-5;

    let qs: Vec<f64> = (0..=8).map(|e| (1u64 << e) as f64).collect();
    let qs2: Vec<f64> = (0..=9).map(|e| (1u64 << e) as f64).collect();
    let r1 = oracles::conv_bound_ratios(0.3, 0.05, &qs).unwrap();
    let r2 = oracles::conv_bound_ratios(0.3, 0.05, &qs2).unwrap();
    let m1 = r1.iter().cloned().fold(f64::MIN, f64::max);
    let m2 = r2.iter().cloned().fold(f64::MIN, f64::max);
    let conv_ok = (m2 - m1).abs() <= 0.05 * m1;

    let pass = first_ok && j_ok && fact_ok && conv_ok;
    let detail = format!(
        "first_order: conv {:?} / div {:?}; J: {j_detail}; factorization rel {fact_rel:.2e}; \
         conv-bound max {m1:.4} -> {m2:.4}",
        conv.verdict, div.verdict
    );
    report(6, "integral lemma oracles", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c07_solver() {
    // Zero-path residual <= 1e-8; stochastic-path run at level 5 with
    // nx = 128, n_xi = 64, nt = 128: adaptive T0, residual <= 1e-6,
    // contraction ratio < 1; two-start uniqueness within 10 tol.
    let h = h_upper();
    let grid = GridSpec {
        level: 5,
        period: 4.0,
        nx: 128,
        nt: 128,
        horizon: 1.0,
        n_xi: Some(64),
    };
    let cfg = RunConfig {
        hurst: h,
        grid,
        sobolev: SobolevSpec::default(),
        seed: 7201,
        samples: 1,
        output_dir: None,
    };
    cfg.validate().unwrap();
    let torus = grid.torusgrid();

    let zero_path = objects::build_enhanced_path(&h, &grid, 0, 1, 0.375).unwrap();
    let small = InitialData::smooth_seeded(&torus, 11, 1e-3, 1e-3, 3);
    let z = solver::picard_solve(&zero_path, &small, 1.0, 1e-9, 40).unwrap();
    let zero_ok = z.diag.residual <= 1e-8;

    let path = objects::build_enhanced_path(&h, &grid, 5, cfg.seed, 0.375).unwrap();
    let data = cli::default_initial_data(&cfg);
    let tol = 1e-7;
    let sol = solver::picard_solve(&path, &data, 1.0, tol, 200).unwrap();
    let stoch_ok = sol.diag.residual <= 1e-6 && sol.diag.contraction_ratio < 1.0;

    // second start from w = 0 at the adapted horizon
    let i0 = sol.w.geom.nt;
    let engine = solver::GammaEngine::new(&path, &data, i0);
    let mut w: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); torus.n_points()]; i0 + 1];
    for _ in 0..200 {
        let next = engine.apply(&w);
        let mut d = 0.0f64;
        for (a, b) in next.iter().zip(w.iter()) {
            let diff: Vec<Complex64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
            d = d.max(solver::sobolev_modes(&diff, &torus, 0.5));
        }
        w = next;
        if d <= tol {
            break;
        }
    }
    let mut dist = 0.0f64;
    for ti in 0..=i0 {
        let a = torus.modes_from_real(sol.w.slice(ti));
        let diff: Vec<Complex64> = a.iter().zip(w[ti].iter()).map(|(x, y)| x - y).collect();
        dist = dist.max(solver::sobolev_modes(&diff, &torus, 0.5));
    }
    let unique_ok = dist <= 10.0 * tol;

    let pass = zero_ok && stoch_ok && unique_ok;
    let detail = format!(
        "zero-path residual {:.2e} (<=1e-8); stochastic: T0 {:.4} after {} halvings, \
         residual {:.2e} (<=1e-6), ratio {:.3} (<1); two-start distance {:.2e} (<= {:.0e})",
        z.diag.residual,
        sol.diag.t0,
        sol.diag.halvings,
        sol.diag.residual,
        sol.diag.contraction_ratio,
        dist,
        10.0 * tol
    );
    report(7, "remainder solver", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c08_crosscheck_direct_integrator() {
    // Direct renormalized integration vs psi + I[psi^2] + w, relative L2
    // distance <= 1e-2 at desk resolution, 3 seeds.
    let h = h_upper();
    let grid = GridSpec {
        level: 4,
        period: 4.0,
        nx: 128,
        nt: 256,
        horizon: 1.0,
        n_xi: Some(128),
    };
    let cfg = RunConfig {
        hurst: h,
        grid,
        sobolev: SobolevSpec::default(),
        seed: 8086,
        samples: 3,
        output_dir: None,
    };
    cfg.validate().unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for i in 0..3u64 {
        let seed = rng::sample_seed(cfg.seed, i);
        let (t0, rel) = cli::crosscheck_once(&cfg, seed).unwrap();
        let ok = rel <= 1e-2;
        pass &= ok;
        detail.push_str(&format!("seed{i}: T0 {t0:.3}, rel L2 {rel:.3e} (ok {ok}); "));
    }
    report(8, "direct integrator cross-validation", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c09_strichartz_property_sweep() {
    // Ratio ||G*w||_{L^inf W^{1/2,2}} / ||w||_{L^1 W^{-1/2,2}} over 50
    // random sources, bounded with the max stable within 10% under
    // doubling the time lattice.
    let mut maxima = Vec::new();
    for nt in [16usize, 32] {
        let geom = FieldGeom {
            nx: 32,
            nt,
            half_period: 4.0,
            horizon: 1.0,
        };
        let torus = TorusGrid::new(geom.nx, geom.half_period);
        let mut worst = 0.0f64;
        for seed in 0..50u64 {
            let mut src = Field::zeros(FieldLabel::Source, 1, geom);
            let d0 = InitialData::smooth_seeded(&torus, seed, 1.0, 0.0, 4);
            let d1 = InitialData::smooth_seeded(&torus, seed ^ 0x5a5a, 1.0, 0.0, 4);
            let om = 1.0 + 6.0 * rng::unit_f64(rng::hash_words(&[91, seed]));
            for (ti, &t) in geom.times().iter().enumerate() {
                let modes: Vec<Complex64> = d0
                    .phi0
                    .iter()
                    .zip(d1.phi0.iter())
                    .map(|(a, b)| a * (om * t).cos() + b * (om * t).sin())
                    .collect();
                let (vals, _) = torus.real_values_from_modes(&modes);
                src.slice_mut(ti).copy_from_slice(&vals);
            }
            let conv = objects::duhamel_convolve(&src);
            let mut sup = 0.0f64;
            let mut l1 = 0.0;
            for ti in 0..=nt {
                let cm = torus.modes_from_real(conv.slice(ti));
                sup = sup.max(solver::sobolev_modes(&cm, &torus, 0.5));
                let sm = torus.modes_from_real(src.slice(ti));
                let wgt = if ti == 0 || ti == nt { 0.5 } else { 1.0 };
                l1 += wgt * solver::sobolev_modes(&sm, &torus, -0.5) * geom.dt();
            }
            worst = worst.max(sup / l1);
        }
        maxima.push(worst);
    }
    let stable = (maxima[1] - maxima[0]).abs() <= 0.10 * maxima[0];
    let pass = stable && maxima.iter().all(|m| m.is_finite() && *m > 0.0);
    let detail = format!("max ratio {:.4} -> {:.4} under nt doubling", maxima[0], maxima[1]);
    report(9, "strichartz property sweep", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c10_reproducibility_across_threads() {
    // Any experiment rerun with the same manifest is byte-identical
    // regardless of thread count.
    let cfg = RunConfig {
        hurst: h_divergent(),
        grid: GridSpec {
            level: 3,
            period: 4.0,
            nx: 32,
            nt: 4,
            horizon: 1.0,
            n_xi: Some(128),
        },
        sobolev: SobolevSpec::default(),
        seed: 424242,
        samples: 8,
        output_dir: None,
    };
    let run_in_pool = |threads: usize, sub: &str| -> (Vec<u8>, Vec<u8>) {
        let dir = std::env::temp_dir().join(format!(
            "fracwave-acc10-{}-{threads}-{sub}",
            std::process::id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| cli::run_subcommand(sub, &cfg, &Default::default(), &dir).unwrap());
        let csv = std::fs::read(dir.join(format!("{sub}.csv"))).unwrap();
        let manifest = std::fs::read(dir.join(format!("{sub}_manifest.json"))).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        (csv, manifest)
    };
    let mut pass = true;
    let mut detail = String::new();
    for sub in ["diverge", "converge"] {
        let (csv1, man1) = run_in_pool(1, sub);
        let (csv2, man2) = run_in_pool(3, sub);
        let ok = csv1 == csv2 && man1 == man2;
        pass &= ok;
        detail.push_str(&format!("{sub}: identical {ok} ({} bytes); ", csv1.len()));
    }
    report(10, "reproducibility across threads", pass, &detail);
    assert!(pass, "{detail}");
}
