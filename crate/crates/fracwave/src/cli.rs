//! Batch entry point: config ingestion, experiment orchestration, and
//! plot-ready CSV outputs with reproducible manifests.
//!
//! Every experiment writes its outputs atomically (temp file + rename)
//! next to a manifest recording the config hash and seed set; rerunning
//! the same manifest reproduces the files byte for byte regardless of
//! the worker-thread count.

use crate::analysis;
use crate::config::RunConfig;
use crate::noise;
use crate::objects;
use crate::oracles::{self, JIntegral};
use crate::renorm;
use crate::rng;
use crate::solver::{self, InitialData};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Validation(#[from] crate::config::ConfigReport),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<crate::solver::SolverError> for CliError {
    fn from(e: crate::solver::SolverError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::analysis::AnalysisError> for CliError {
    fn from(e: crate::analysis::AnalysisError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::kernels::KernelError> for CliError {
    fn from(e: crate::kernels::KernelError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::oracles::OracleError> for CliError {
    fn from(e: crate::oracles::OracleError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::config::Violation> for CliError {
    fn from(e: crate::config::Violation) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::noise::NoiseError> for CliError {
    fn from(e: crate::noise::NoiseError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::objects::ObjectError> for CliError {
    fn from(e: crate::objects::ObjectError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// 17-significant-digit float formatting: exact f64 round-trip and
/// byte-stable across reruns.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// FNV-1a hash of a byte string, hex encoded; used for config hashes and
/// run ids.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub seed_set: Vec<u64>,
    pub run_id: String,
    pub outputs: Vec<String>,
}

impl ExperimentManifest {
    fn new(subcommand: &str, cfg: &RunConfig, seeds: Vec<u64>, outputs: Vec<String>) -> Self {
        let config_hash = content_hash(cfg.to_json().as_bytes());
        let mut id_src = format!("{subcommand}:{config_hash}");
        for s in &seeds {
            let _ = write!(id_src, ":{s}");
        }
        ExperimentManifest {
            subcommand: subcommand.to_string(),
            config_hash,
            run_id: content_hash(id_src.as_bytes()),
            seed_set: seeds,
            outputs,
        }
    }
}

/// Atomic write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn sample_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.samples)
        .map(|i| rng::sample_seed(cfg.seed, i as u64))
        .collect()
}

fn finish(
    name: &str,
    cfg: &RunConfig,
    out_dir: &Path,
    seeds: Vec<u64>,
    mut outputs: Vec<(PathBuf, Vec<u8>)>,
) -> Result<Vec<PathBuf>, CliError> {
    let names: Vec<String> = outputs
        .iter()
        .map(|(p, _)| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let manifest = ExperimentManifest::new(name, cfg, seeds, names);
    outputs.push((
        out_dir.join(format!("{name}_manifest.json")),
        serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    ));
    let mut written = Vec::new();
    for (path, bytes) in outputs {
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// `sample`: snapshot the level-top mode set and the four path
/// components, plus the path norm record.
pub fn cmd_sample(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let modes = noise::sample_modes(&cfg.hurst, &cfg.grid, cfg.grid.level, cfg.seed)?;
    let mut path = objects::build_enhanced_path(
        &cfg.hurst,
        &cfg.grid,
        cfg.grid.level,
        cfg.seed,
        cfg.resolved_alpha(),
    )?;
    analysis::complete_path(&mut path, cfg.sobolev.p, cfg.sobolev.window)?;
    let mut outputs = Vec::new();
    let mut buf = Vec::new();
    modes.write_snapshot(&mut buf)?;
    outputs.push((out_dir.join("modes.fwms"), buf));
    for (name, field) in [
        ("psi", &path.psi),
        ("psi2", &path.psi2),
        ("ipsi2", &path.ipsi2),
        ("psi_ipsi2", &path.psi_ipsi2),
    ] {
        let mut buf = Vec::new();
        field.write_snapshot(&mut buf)?;
        outputs.push((out_dir.join(format!("{name}.fwav")), buf));
    }
    outputs.push((
        out_dir.join("norms.json"),
        serde_json::to_vec_pretty(&path.norms).expect("norms serialize"),
    ));
    finish("sample", cfg, out_dir, vec![cfg.seed], outputs)
}

/// `sigma`: renormalization-constant table over levels plus the fitted
/// growth exponent.
pub fn cmd_sigma(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let top = cfg.grid.level;
    let lo = top.saturating_sub(5).max(1);
    let levels: Vec<u32> = (lo..=top).collect();
    let t = cfg.grid.horizon;
    let table = renorm::sigma_table(&cfg.hurst, &levels, &[t, t / 2.0], 1e-6)?;
    let mut csv = String::from("n,t,sigma\n");
    for row in &table.rows {
        let _ = writeln!(csv, "{},{},{}", row.n, fmt_float(row.t), fmt_float(row.sigma));
    }
    let fit = renorm::sigma_slope_fit(&cfg.hurst, t, &levels, 1e-6)?;
    let outputs = vec![
        (out_dir.join("sigma.csv"), csv.into_bytes()),
        (
            out_dir.join("sigma_fit.json"),
            serde_json::to_vec_pretty(&fit).expect("fit serializes"),
        ),
    ];
    finish("sigma", cfg, out_dir, vec![], outputs)
}

/// `converge`: level-increment moment estimates for all four components.
pub fn cmd_converge(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let top = cfg.grid.level;
    let lo = top.saturating_sub(3).max(1);
    let levels: Vec<u32> = (lo..=top).collect();
    let rows = analysis::increment_study(
        &cfg.hurst,
        &cfg.grid,
        &levels,
        cfg.grid.nt / 2,
        cfg.grid.nt,
        analysis::IncrementEstimator::FieldMean,
        cfg.samples,
        cfg.seed,
        cfg.resolved_alpha(),
    )?;
    let mut csv = String::from("component,n,m,s,t,estimate,se\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.component.label(),
            r.n,
            r.m,
            fmt_float(r.s),
            fmt_float(r.t),
            fmt_float(r.estimate),
            fmt_float(r.se)
        );
    }
    let outputs = vec![(out_dir.join("converge.csv"), csv.into_bytes())];
    finish("converge", cfg, out_dir, sample_seeds(cfg), outputs)
}

/// `diverge`: the Wick-square norm statistic across levels.
pub fn cmd_diverge(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let top = cfg.grid.level;
    let lo = top.saturating_sub(4).max(1);
    let levels: Vec<u32> = (lo..=top).collect();
    let table = renorm::divergence_study(
        &cfg.hurst,
        &cfg.grid,
        cfg.resolved_alpha(),
        &levels,
        cfg.samples,
        cfg.seed,
    )?;
    let mut csv = String::from("n,estimate,se,increment,increment_se\n");
    for r in &table.rows {
        let (inc, inc_se) = r.increment.unwrap_or((f64::NAN, f64::NAN));
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.n,
            fmt_float(r.estimate),
            fmt_float(r.se),
            fmt_float(inc),
            fmt_float(inc_se)
        );
    }
    let outputs = vec![(out_dir.join("diverge.csv"), csv.into_bytes())];
    finish("diverge", cfg, out_dir, sample_seeds(cfg), outputs)
}

/// Deterministic initial data of a run: smooth seeded modes, small enough
/// for the fixed point to contract at desk scales.
pub fn default_initial_data(cfg: &RunConfig) -> InitialData {
    let torus = cfg.grid.torusgrid();
    InitialData::smooth_seeded(&torus, cfg.seed ^ 0x1d5a_f00d, 0.05, 0.05, 4)
}

fn require_solver_admissible(cfg: &RunConfig) -> Result<(), CliError> {
    if !cfg.hurst.solver_admissible() {
        return Err(CliError::Numerical(format!(
            "hurst triple (sum {:.3}) is not solver-admissible: \
             needs H1 < 3/4, H2 < 3/4 and H0+H1+H2 > 1",
            cfg.hurst.sum()
        )));
    }
    Ok(())
}

/// `solve`: Picard fixed point at the config level; emits the remainder
/// and solution snapshots plus diagnostics.
pub fn cmd_solve(
    cfg: &RunConfig,
    t0: Option<f64>,
    tol: Option<f64>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    require_solver_admissible(cfg)?;
    let mut path = objects::build_enhanced_path(
        &cfg.hurst,
        &cfg.grid,
        cfg.grid.level,
        cfg.seed,
        cfg.resolved_alpha(),
    )?;
    analysis::complete_path(&mut path, cfg.sobolev.p, cfg.sobolev.window)?;
    let data = default_initial_data(cfg);
    let sol = solver::picard_solve(
        &path,
        &data,
        t0.unwrap_or(cfg.grid.horizon),
        tol.unwrap_or(1e-6),
        200,
    )?;
    let u = solver::reconstruct_u(&path, &sol.w);
    let mut outputs = Vec::new();
    for (name, field) in [("w", &sol.w), ("u", &u)] {
        let mut buf = Vec::new();
        field.write_snapshot(&mut buf)?;
        outputs.push((out_dir.join(format!("{name}.fwav")), buf));
    }
    outputs.push((
        out_dir.join("solve_diagnostics.json"),
        serde_json::to_vec_pretty(&sol.diag).expect("diag serializes"),
    ));
    finish("solve", cfg, out_dir, vec![cfg.seed], outputs)
}

/// `crosscheck`: direct renormalized integration against the
/// reconstruction psi + I[psi^2] + w, three seeds.
pub fn cmd_crosscheck(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    require_solver_admissible(cfg)?;
    let mut csv = String::from("seed,t0,rel_l2\n");
    let mut seeds = Vec::new();
    for i in 0..3u64 {
        let seed = rng::sample_seed(cfg.seed, i);
        seeds.push(seed);
        let (t0, rel) = crosscheck_once(cfg, seed)?;
        let _ = writeln!(csv, "{seed},{},{}", fmt_float(t0), fmt_float(rel));
    }
    let outputs = vec![(out_dir.join("crosscheck.csv"), csv.into_bytes())];
    finish("crosscheck", cfg, out_dir, seeds, outputs)
}

/// One cross-validation run: returns the horizon used and the relative
/// L2 distance between the direct solve and the reconstruction.
pub fn crosscheck_once(cfg: &RunConfig, seed: u64) -> Result<(f64, f64), CliError> {
    let path = objects::build_enhanced_path(
        &cfg.hurst,
        &cfg.grid,
        cfg.grid.level,
        seed,
        cfg.resolved_alpha(),
    )?;
    let data = default_initial_data(cfg);
    let sol = solver::picard_solve(&path, &data, cfg.grid.horizon, 1e-7, 200)?;
    let u_rec = solver::reconstruct_u(&path, &sol.w);
    let u_dir = solver::integrate_renormalized_pde(&cfg.hurst, &cfg.grid, cfg.grid.level, seed, &data)?;
    let i0 = sol.w.geom.nt;
    let mut num = 0.0;
    let mut den = 0.0;
    for ti in 0..=i0 {
        for (a, b) in u_dir.slice(ti).iter().zip(u_rec.slice(ti).iter()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    Ok((sol.diag.t0, (num / den.max(f64::MIN_POSITIVE)).sqrt()))
}

/// `oracle`: truncation-convergence report for one integral id.
pub fn cmd_oracle(cfg: &RunConfig, id: &str, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let h = cfg.hurst;
    let alpha = cfg.resolved_alpha();
    let radii = oracles::doubling_radii(4, 9);
    let report = match id {
        "first_order" => oracles::truncation_study("first_order", &format!("alpha={alpha}"), &radii, |r| {
            oracles::integral_first_order(&h, alpha, r)
        })?,
        "j1" | "j2" | "j3" | "j4" => {
            let which = match id {
                "j1" => JIntegral::J1,
                "j2" => JIntegral::J2,
                "j3" => JIntegral::J3,
                _ => JIntegral::J4,
            };
            let radii = oracles::doubling_radii(4, 8);
            oracles::truncation_study(id, &format!("alpha={alpha}"), &radii, |r| {
                oracles::integral_j(which, &h, &h, alpha, r)
            })?
        }
        "k_l2" => oracles::truncation_study("k_l2", "", &radii, |r| oracles::k_l2_norm(&h, r))?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown oracle integral '{other}' \
                 (expected first_order, j1, j2, j3, j4, k_l2)"
            )))
        }
    };
    let mut csv = String::from("radius,partial\n");
    for (r, p) in report.radii.iter().zip(report.partials.iter()) {
        let _ = writeln!(csv, "{},{}", fmt_float(*r), fmt_float(*p));
    }
    let outputs = vec![
        (out_dir.join(format!("oracle_{id}.csv")), csv.into_bytes()),
        (
            out_dir.join(format!("oracle_{id}.json")),
            serde_json::to_vec_pretty(&report).expect("report serializes"),
        ),
    ];
    finish("oracle", cfg, out_dir, vec![], outputs)
}

pub const USAGE: &str = "\
usage: fracwave <subcommand> --config <path> [--seed N] [--samples N]
                [--threads N] [--out DIR] [--integral ID]
                [--t0 T] [--tol EPS]

subcommands:
  sample      synthesize one enhanced path and snapshot it (FWMS/FWAV)
  sigma       renormalization-constant table and growth-exponent fit
  converge    level-increment moment estimates (all four components)
  diverge     Wick-square norm statistic across cutoff levels
  solve       Picard fixed point for the remainder equation
  oracle      truncation report for one integral id (--integral)
  crosscheck  direct renormalized solve vs reconstruction, 3 seeds

exit codes: 0 ok, 1 usage, 2 invalid config, 3 numerical failure.
FRACWAVE_THREADS sets the worker count when --threads is absent.";

struct ParsedArgs {
    subcommand: String,
    config: Option<PathBuf>,
    seed: Option<u64>,
    samples: Option<usize>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    integral: Option<String>,
    t0: Option<f64>,
    tol: Option<f64>,
}

fn parse_args(args: &[String]) -> Result<ParsedArgs, CliError> {
    let mut it = args.iter();
    let subcommand = it
        .next()
        .ok_or_else(|| CliError::Usage("missing subcommand".into()))?
        .clone();
    let mut parsed = ParsedArgs {
        subcommand,
        config: None,
        seed: None,
        samples: None,
        threads: None,
        out: None,
        integral: None,
        t0: None,
        tol: None,
    };
    while let Some(flag) = it.next() {
        let mut value = || {
            it.next()
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("flag {flag} needs a value")))
        };
        match flag.as_str() {
            "--config" => parsed.config = Some(PathBuf::from(value()?)),
            "--seed" => {
                parsed.seed = Some(value()?.parse().map_err(|e| {
                    CliError::Usage(format!("--seed: {e}"))
                })?)
            }
            "--samples" => {
                parsed.samples = Some(value()?.parse().map_err(|e| {
                    CliError::Usage(format!("--samples: {e}"))
                })?)
            }
            "--threads" => {
                parsed.threads = Some(value()?.parse().map_err(|e| {
                    CliError::Usage(format!("--threads: {e}"))
                })?)
            }
            "--out" => parsed.out = Some(PathBuf::from(value()?)),
            "--integral" => parsed.integral = Some(value()?),
            "--t0" => {
                parsed.t0 = Some(value()?.parse().map_err(|e| {
                    CliError::Usage(format!("--t0: {e}"))
                })?)
            }
            "--tol" => {
                parsed.tol = Some(value()?.parse().map_err(|e| {
                    CliError::Usage(format!("--tol: {e}"))
                })?)
            }
            other => return Err(CliError::Usage(format!("unknown flag {other}"))),
        }
    }
    Ok(parsed)
}

/// Per-invocation options beyond the config file.
#[derive(Debug, Clone, Default)]
pub struct SubcommandOptions {
    pub integral: Option<String>,
    pub t0: Option<f64>,
    pub tol: Option<f64>,
}

/// Dispatch one subcommand against a validated config.
pub fn run_subcommand(
    name: &str,
    cfg: &RunConfig,
    opts: &SubcommandOptions,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    match name {
        "sample" => cmd_sample(cfg, out_dir),
        "sigma" => cmd_sigma(cfg, out_dir),
        "converge" => cmd_converge(cfg, out_dir),
        "diverge" => cmd_diverge(cfg, out_dir),
        "solve" => cmd_solve(cfg, opts.t0, opts.tol, out_dir),
        "crosscheck" => cmd_crosscheck(cfg, out_dir),
        "oracle" => {
            let id = opts.integral.as_deref().ok_or_else(|| {
                CliError::Usage("oracle needs --integral <id>".into())
            })?;
            cmd_oracle(cfg, id, out_dir)
        }
        other => Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    }
}

/// Full CLI entry: parse, validate, size the worker pool, dispatch.
/// Returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let parsed = match parse_args(args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}\n\n{USAGE}");
            return 1;
        }
    };
    let config_path = match &parsed.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("missing --config\n\n{USAGE}");
            return 1;
        }
    };
    let text = match fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config_path.display());
            return 1;
        }
    };
    let mut cfg = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config parse error: {e}");
            return 2;
        }
    };
    if let Some(seed) = parsed.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = parsed.samples {
        cfg.samples = samples;
    }
    if let Err(report) = cfg.validate() {
        // machine-readable violation list on stderr
        eprintln!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
        return 2;
    }
    let out_dir = parsed
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let threads = parsed.threads.or_else(|| {
        std::env::var("FRACWAVE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let opts = SubcommandOptions {
        integral: parsed.integral.clone(),
        t0: parsed.t0,
        tol: parsed.tol,
    };
    let body = || match run_subcommand(&parsed.subcommand, &cfg, &opts, &out_dir) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(CliError::Usage(u)) => {
            eprintln!("{u}\n\n{USAGE}");
            1
        }
        Err(CliError::Validation(r)) => {
            eprintln!("{}", serde_json::to_string_pretty(&r).expect("serializes"));
            2
        }
        Err(e) => {
            let diag = out_dir.join("failure_diagnostics.json");
            let payload = serde_json::json!({
                "subcommand": parsed.subcommand,
                "error": e.to_string(),
            });
            let _ = write_atomic(&diag, &serde_json::to_vec_pretty(&payload).unwrap());
            eprintln!("{e} (diagnostics at {})", diag.display());
            3
        }
    };
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(body))
            .unwrap_or_else(|e| {
                eprintln!("thread pool: {e}");
                1
            }),
        _ => body(),
    }
}
