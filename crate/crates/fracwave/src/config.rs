//! Shared domain types: Hurst triples with regime classification, lattice
//! grids, Sobolev-norm parameters, and validated run configurations.
//!
//! Configs are plain JSON with a fixed schema; unknown keys are rejected so
//! that a config file always means exactly what it says.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

/// Where a Hurst triple sits relative to the solvability thresholds for
/// the quadratic wave model.
///
/// The sum H0+H1+H2 governs everything: above 5/4 a second-order expansion
/// already closes the equation, in (1, 5/4] a third-order expansion is
/// needed (this is the window the laboratory targets), and at or below 1
/// the Wick-renormalized square diverges as the cutoff grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    TargetWindow,
    Divergent,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct HurstRaw {
    h0: f64,
    h1: f64,
    h2: f64,
}

/// The three Hurst indices of the driving noise, one per coordinate
/// (time, x1, x2). Each index lies in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "HurstRaw", into = "HurstRaw")]
pub struct HurstTriple {
    h0: f64,
    h1: f64,
    h2: f64,
}

impl From<HurstRaw> for HurstTriple {
    fn from(r: HurstRaw) -> Self {
        // Range checks happen in RunConfig::validate so that a config file
        // with bad indices still parses and reports every violation at once.
        HurstTriple {
            h0: r.h0,
            h1: r.h1,
            h2: r.h2,
        }
    }
}

impl From<HurstTriple> for HurstRaw {
    fn from(h: HurstTriple) -> Self {
        HurstRaw {
            h0: h.h0,
            h1: h.h1,
            h2: h.h2,
        }
    }
}

impl HurstTriple {
    pub fn new(h0: f64, h1: f64, h2: f64) -> Result<Self, Violation> {
        let t = HurstTriple { h0, h1, h2 };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<(), Violation> {
        for (name, v) in [("h0", self.h0), ("h1", self.h1), ("h2", self.h2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Violation::InvalidHurst {
                    name: name.to_string(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }
    pub fn h1(&self) -> f64 {
        self.h1
    }
    pub fn h2(&self) -> f64 {
        self.h2
    }

    pub fn sum(&self) -> f64 {
        self.h0 + self.h1 + self.h2
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self)
    }

    /// Whether the fixed-point solver applies: H1, H2 < 3/4 and sum > 1.
    pub fn solver_admissible(&self) -> bool {
        self.h1 < 0.75 && self.h2 < 0.75 && self.sum() > 1.0
    }

    /// Admissible window (3/2 - sum, 1/2) for the path regularity
    /// parameter alpha. Empty in the divergent regime.
    pub fn alpha_window(&self) -> (f64, f64) {
        (1.5 - self.sum(), 0.5)
    }

    /// Project-wide default alpha: the midpoint of the admissible window,
    /// or 0.55 in the divergent regime where only the blow-up study runs.
    pub fn default_alpha(&self) -> f64 {
        let (lo, hi) = self.alpha_window();
        if lo < hi {
            0.5 * (lo + hi)
        } else {
            0.55
        }
    }

    /// Shift one index down by eps, clamping inside (0, 1).
    pub fn shifted(&self, coord: usize, eps: f64) -> Result<Self, Violation> {
        let mut v = [self.h0, self.h1, self.h2];
        v[coord] -= eps;
        HurstTriple::new(v[0], v[1], v[2])
    }
}

/// Total and mutually exclusive classification over (0,1)^3.
pub fn classify_regime(h: &HurstTriple) -> Regime {
    let s = h.sum();
    if s > 1.25 {
        Regime::Subcritical
    } else if s > 1.0 {
        Regime::TargetWindow
    } else {
        Regime::Divergent
    }
}

/// Frequency cutoff level, spatial torus and lattice sizes.
///
/// The spatial domain is the square [-L, L]^2 used as a periodization cell;
/// level n retains noise modes with |xi| <= 2^n and |eta| <= 2^n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Frequency cutoff level n (cutoff 2^n).
    pub level: u32,
    /// Half-period L of the spatial cell [-L, L]^2.
    pub period: f64,
    /// Spatial lattice points per axis.
    pub nx: usize,
    /// Time steps on [0, horizon] (nt+1 slices).
    pub nt: usize,
    /// Final time T <= 1.
    pub horizon: f64,
    /// Temporal-frequency lattice count over [-2^level, 2^level];
    /// defaults to 8 * 2^level.
    #[serde(default)]
    pub n_xi: Option<usize>,
}

impl GridSpec {
    pub fn new(level: u32, period: f64, nx: usize, nt: usize, horizon: f64) -> Self {
        GridSpec {
            level,
            period,
            nx,
            nt,
            horizon,
            n_xi: None,
        }
    }

    pub fn cutoff(&self) -> f64 {
        (1u64 << self.level) as f64
    }

    pub fn n_xi(&self) -> usize {
        self.n_xi.unwrap_or(8 << self.level)
    }

    /// Temporal-frequency lattice spacing.
    pub fn dxi(&self) -> f64 {
        2.0 * self.cutoff() / self.n_xi() as f64
    }

    /// Spatial frequency lattice spacing pi / L.
    pub fn deta(&self) -> f64 {
        std::f64::consts::PI / self.period
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Largest spatial frequency representable on the lattice.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.nx as f64 / (2.0 * self.period)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.nt).map(|i| i as f64 * self.dt()).collect()
    }
}

/// Integrability exponent of the localized Sobolev norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PNorm {
    #[serde(rename = "2")]
    P2,
    #[serde(rename = "4")]
    P4,
}

impl PNorm {
    pub fn value(&self) -> f64 {
        match self {
            PNorm::P2 => 2.0,
            PNorm::P4 => 4.0,
        }
    }
}

/// Identifier of the smooth localization window chi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// chi == 1 on the whole cell (plain torus norm).
    Unit,
    /// The project window: radial bump equal to 1 on |x| <= 2, supported
    /// in |x| <= 3.
    Standard,
}

/// Sobolev-space parameters for the path norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevSpec {
    /// Regularity parameter; None picks the midpoint default.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub p: PNorm,
    #[serde(default = "default_window")]
    pub window: WindowKind,
}

fn default_window() -> WindowKind {
    WindowKind::Standard
}

impl SobolevSpec {
    pub fn resolve_alpha(&self, hurst: &HurstTriple) -> f64 {
        self.alpha.unwrap_or_else(|| hurst.default_alpha())
    }
}

impl Default for SobolevSpec {
    fn default() -> Self {
        SobolevSpec {
            alpha: None,
            p: PNorm::P2,
            window: WindowKind::Standard,
        }
    }
}

/// A full experiment configuration. Deterministic: the same config yields
/// bit-identical outputs regardless of worker count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hurst: HurstTriple,
    pub grid: GridSpec,
    #[serde(default)]
    pub sobolev: SobolevSpec,
    pub seed: u64,
    pub samples: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    #[error("invalid hurst index {name} = {value}: must lie strictly in (0, 1)")]
    InvalidHurst { name: String, value: f64 },
    #[error(
        "spatial Nyquist violated: pi*nx/(2L) = {available:.4} < 2^level = {required:.1}; \
         raise nx or lower level"
    )]
    NyquistViolation { available: f64, required: f64 },
    #[error("alpha = {alpha} out of range: admissible window is ({lo:.4}, {hi:.4})")]
    AlphaOutOfRange { alpha: f64, lo: f64, hi: f64 },
    #[error("period L = {period} too small: the cutoff support needs L >= 4")]
    PeriodTooSmall { period: f64 },
    #[error("horizon T = {horizon} must lie in (0, 1]")]
    BadHorizon { horizon: f64 },
    #[error("nt = {nt} too small: need nt >= 2")]
    BadTimeSteps { nt: usize },
    #[error("level = {level} must be >= 1")]
    BadLevel { level: u32 },
    #[error(
        "n_xi = {n_xi} must be a positive multiple of 2^level = {align} \
         (keeps frequency shells aligned across levels)"
    )]
    BadXiCount { n_xi: usize, align: usize },
    #[error("samples = {samples} must be >= 1")]
    BadSamples { samples: usize },
}

/// Every violation found in a config, not just the first.
#[derive(Debug, Clone, Serialize, Error)]
pub struct ConfigReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ConfigReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "configuration invalid ({} violations):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolved_alpha(&self) -> f64 {
        self.sobolev.resolve_alpha(&self.hurst)
    }

    /// Check every type invariant; the report lists all violations.
    pub fn validate(&self) -> Result<(), ConfigReport> {
        let mut violations = Vec::new();

        if let Err(v) = self.hurst.check() {
            violations.push(v);
            // Alpha checks below would be meaningless.
            return Err(ConfigReport { violations });
        }

        let g = &self.grid;
        if g.level < 1 {
            violations.push(Violation::BadLevel { level: g.level });
        }
        if g.period < 4.0 {
            violations.push(Violation::PeriodTooSmall { period: g.period });
        }
        if g.nyquist() < g.cutoff() {
            violations.push(Violation::NyquistViolation {
                available: g.nyquist(),
                required: g.cutoff(),
            });
        }
        if g.nt < 2 {
            violations.push(Violation::BadTimeSteps { nt: g.nt });
        }
        if !(g.horizon > 0.0 && g.horizon <= 1.0) {
            violations.push(Violation::BadHorizon { horizon: g.horizon });
        }
        let align = 1usize << g.level.min(62);
        let n_xi = g.n_xi();
        if n_xi == 0 || !n_xi.is_multiple_of(align) {
            violations.push(Violation::BadXiCount { n_xi, align });
        }

        let alpha = self.resolved_alpha();
        let (lo, hi) = self.hurst.alpha_window();
        match self.hurst.regime() {
            // Divergent regime: the admissible window is empty and only the
            // blow-up study applies, for which any alpha > 0 is meaningful.
            Regime::Divergent => {
                if alpha <= 0.0 {
                    violations.push(Violation::AlphaOutOfRange {
                        alpha,
                        lo: 0.0,
                        hi: f64::INFINITY,
                    });
                }
            }
            _ => {
                if !(alpha > lo && alpha < hi) {
                    violations.push(Violation::AlphaOutOfRange { alpha, lo, hi });
                }
            }
        }

        if self.samples < 1 {
            violations.push(Violation::BadSamples {
                samples: self.samples,
            });
        }

        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigReport { violations })
        }
    }
}
