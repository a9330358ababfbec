//! Scenario configuration, named presets, artifact output and golden-file
//! comparison.
//!
//! A configuration file is TOML with one table per scenario:
//!
//! ```toml
//! [scenario.sub]
//! preset = "subcritical"   # optional; keys below override the preset
//! mass_factor = 0.5
//! seed = 7
//! ```
//!
//! Common keys are `module`, `preset`, `seed`, `emit_every` and `out_dir`;
//! every other key belongs to the selected module and unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::burgers::{blowup_rate_fit, profile_solve, selfsimilar_exponents, shock_time, sup_gradient, BurgersProblem, Profile};
use crate::diagnostics::{loghls_deficit, loghls_minimiser, second_moment_rate_check};
use crate::entropy_toolkit::{
    bakry_emery_lambda, ckp_deficit, decay_rate_fit, fp_run, hwi_deficit, logsob_deficit, random_mixture,
    talagrand_deficit, Density1D, FpOptions, FpScheme, PotentialSpec,
};
use crate::fields::{cumulative_from_density, density_from_cumulative, NegativityPolicy, RadialDensity, RadialGrid};
use crate::jko1d::{run_jko, w2, FreeEnergySpec, JkoConfig};
use crate::ks_radial::{bubble_stationarity_residual, run, s_indicator, Scheme, SolverConfig, Termination};
use crate::numerics::{convergence_orders, linear_fit};
use crate::particles::{run_particles, ParticleParams, ParticleRun, ParticleState, RngSeed};
use crate::potential::ScalarFn;
use crate::stationary::{bubble_density, laguerre_eigen_check, liouville_residual, BubbleParams};

/// Version stamped into every CSV header comment and summary.
pub const SCHEMA_VERSION: u32 = 1;

const CRITICAL_MASS: f64 = 8.0 * PI;

fn line_suffix(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error{}: {message}", line_suffix(.line))]
    Config { line: Option<usize>, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Numerics(#[from] crate::Error),
}

impl HarnessError {
    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            _ => 1,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

fn config_err(line: Option<usize>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { line, message: message.into() }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------------------
// Scenario types

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    KsRadial,
    Stationary,
    Loghls,
    Jko,
    FokkerPlanck,
    Inequalities,
    Particles,
    Burgers,
}

impl ModuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModuleKind::KsRadial => "ks_radial",
            ModuleKind::Stationary => "stationary",
            ModuleKind::Loghls => "loghls",
            ModuleKind::Jko => "jko",
            ModuleKind::FokkerPlanck => "fokker_planck",
            ModuleKind::Inequalities => "inequalities",
            ModuleKind::Particles => "particles",
            ModuleKind::Burgers => "burgers",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    #[default]
    Gaussian,
    Bubble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Any,
    ReachedTEnd,
    BlowupDetected,
}

/// Radial Keller-Segel run with `M = mass_factor · 8π`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KsRadialScenario {
    pub mass_factor: f64,
    pub profile: InitialProfile,
    /// Gaussian width or bubble scale λ.
    pub width: f64,
    pub nodes: usize,
    pub radius: f64,
    pub scheme: Scheme,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub cfl_factor: f64,
    pub blowup_sup_threshold: f64,
    pub t_end: f64,
    pub record_interval: f64,
    pub record_growth: f64,
    pub expect: Expectation,
    pub mass_tolerance: f64,
    pub min_steps: usize,
    pub second_moment_tolerance: Option<f64>,
    pub m2_drift_tolerance: Option<f64>,
    pub sup_decreasing: bool,
    pub type_ii: bool,
    pub inner_mass_tolerance: f64,
}

impl Default for KsRadialScenario {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            mass_factor: 0.5,
            profile: InitialProfile::Gaussian,
            width: 1.0,
            nodes: 1024,
            radius: 20.0,
            scheme: s.scheme,
            dt_initial: s.dt_initial,
            dt_min: s.dt_min,
            cfl_factor: s.cfl_factor,
            blowup_sup_threshold: s.blowup_sup_threshold,
            t_end: s.t_end,
            record_interval: s.record_interval,
            record_growth: s.record_growth,
            expect: Expectation::Any,
            mass_tolerance: 1e-12,
            min_steps: 0,
            second_moment_tolerance: None,
            m2_drift_tolerance: None,
            sup_decreasing: false,
            type_ii: false,
            inner_mass_tolerance: 0.1,
        }
    }
}

impl KsRadialScenario {
    pub fn mass(&self) -> f64 {
        self.mass_factor * CRITICAL_MASS
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            dt_initial: self.dt_initial,
            dt_min: self.dt_min,
            cfl_factor: self.cfl_factor,
            blowup_sup_threshold: self.blowup_sup_threshold,
            t_end: self.t_end,
            scheme: self.scheme,
            record_interval: self.record_interval,
            record_growth: self.record_growth,
        }
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        positive("mass_factor", self.mass_factor)?;
        positive("width", self.width)?;
        positive("radius", self.radius)?;
        at_least("nodes", self.nodes, 8)?;
        self.solver().validate().map_err(|e| ("solver", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StationaryCheck {
    #[default]
    BubbleOrders,
    Laguerre,
}

/// Convergence studies of the stationary residuals.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryScenario {
    pub check: StationaryCheck,
    pub spacings: Vec<f64>,
    pub lambda: f64,
    pub radius: f64,
    pub modes: Vec<usize>,
    pub y_max: f64,
    pub cells: Vec<usize>,
    pub order_min: f64,
    pub order_max: f64,
    pub exact_tolerance: f64,
}

impl Default for StationaryScenario {
    fn default() -> Self {
        Self {
            check: StationaryCheck::BubbleOrders,
            spacings: vec![0.1, 0.05, 0.025],
            lambda: 1.0,
            radius: 10.0,
            modes: vec![0, 1, 2],
            y_max: 20.0,
            cells: vec![400, 800, 1600],
            order_min: 1.8,
            order_max: 2.2,
            exact_tolerance: 1e-12,
        }
    }
}

impl StationaryScenario {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.spacings.len() < 2 || self.spacings.iter().any(|h| !(*h > 0.0)) {
            return Err(("spacings", "need at least two positive spacings".into()));
        }
        if self.cells.len() < 2 || self.cells.iter().any(|&c| c < 16) {
            return Err(("cells", "need at least two resolutions of 16 or more cells".into()));
        }
        positive("lambda", self.lambda)?;
        positive("radius", self.radius)?;
        if !(self.y_max >= 10.0) {
            return Err(("y_max", "must be at least 10".into()));
        }
        Ok(())
    }
}

/// Log-HLS deficit at the minimiser family and on random radial densities.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogHlsScenario {
    pub samples: usize,
    pub nodes: usize,
    pub radius: f64,
    pub minimiser_nodes: usize,
    pub minimiser_radius: f64,
    pub minimiser_masses: Vec<f64>,
    pub minimiser_lambdas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for LogHlsScenario {
    fn default() -> Self {
        Self {
            samples: 1000,
            nodes: 4000,
            radius: 20.0,
            minimiser_nodes: 40_000,
            minimiser_radius: 400.0,
            minimiser_masses: vec![1.0, 4.0 * PI, 8.0 * PI],
            minimiser_lambdas: vec![1.0, 0.7, 0.5],
            tolerance: 1e-3,
        }
    }
}

impl LogHlsScenario {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        at_least("nodes", self.nodes, 16)?;
        at_least("minimiser_nodes", self.minimiser_nodes, 16)?;
        positive("radius", self.radius)?;
        positive("minimiser_radius", self.minimiser_radius)?;
        if self.minimiser_masses.len() != self.minimiser_lambdas.len() {
            return Err(("minimiser_lambdas", "must have the same length as minimiser_masses".into()));
        }
        if self.minimiser_masses.iter().chain(&self.minimiser_lambdas).any(|v| !(*v > 0.0)) {
            return Err(("minimiser_masses", "masses and scales must be positive".into()));
        }
        Ok(())
    }
}

/// JKO run for `F = c∫ρ log ρ + ∫Vρ` with `V = curvature·x²/2`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JkoScenario {
    pub diffusion: f64,
    pub curvature: f64,
    pub levels: usize,
    pub tau: f64,
    pub steps: usize,
    pub inner_tolerance: f64,
    pub inner_max_iterations: usize,
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub slack_tolerance: f64,
    pub compare_fp: bool,
    pub fp_dt: f64,
    pub w2_tolerance: f64,
}

impl Default for JkoScenario {
    fn default() -> Self {
        let j = JkoConfig::default();
        Self {
            diffusion: 1.0,
            curvature: 1.0,
            levels: j.levels,
            tau: j.tau,
            steps: 200,
            inner_tolerance: j.inner_tolerance,
            inner_max_iterations: j.inner_max_iterations,
            lo: -8.0,
            hi: 8.0,
            cells: 8000,
            slack_tolerance: 1e-8,
            compare_fp: false,
            fp_dt: 1e-4,
            w2_tolerance: 5e-2,
        }
    }
}

impl JkoScenario {
    fn jko_config(&self) -> JkoConfig {
        JkoConfig {
            tau: self.tau,
            levels: self.levels,
            inner_tolerance: self.inner_tolerance,
            inner_max_iterations: self.inner_max_iterations,
        }
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        self.jko_config().validate().map_err(|e| ("levels", e.to_string()))?;
        positive("tau", self.tau)?;
        at_least("steps", self.steps, 1)?;
        at_least("cells", self.cells, 16)?;
        positive("fp_dt", self.fp_dt)?;
        if !(self.diffusion >= 0.0) {
            return Err(("diffusion", "must be nonnegative".into()));
        }
        if self.compare_fp && (self.diffusion != 1.0) {
            return Err(("compare_fp", "the FP oracle needs diffusion = 1".into()));
        }
        if !(self.hi > self.lo) {
            return Err(("hi", "must exceed lo".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FpSchemeName {
    Explicit,
    #[default]
    Implicit,
}

/// Fokker-Planck relaxation of a shifted equilibrium with `V = curvature·x²/2`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpScenario {
    pub curvature: f64,
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub shift: f64,
    pub dt: f64,
    /// Defaults to `7/curvature` (about 14 e-folds of H).
    pub t_end: Option<f64>,
    pub scheme: FpSchemeName,
    pub record_every: usize,
    pub rate_tolerance: f64,
}

impl Default for FpScenario {
    fn default() -> Self {
        Self {
            curvature: 1.0,
            lo: -10.0,
            hi: 10.0,
            cells: 1000,
            shift: 1.0,
            dt: 1e-3,
            t_end: None,
            scheme: FpSchemeName::Implicit,
            record_every: 10,
            rate_tolerance: 0.05,
        }
    }
}

impl FpScenario {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        positive("curvature", self.curvature)?;
        positive("dt", self.dt)?;
        at_least("cells", self.cells, 16)?;
        at_least("record_every", self.record_every, 1)?;
        if let Some(t) = self.t_end {
            positive("t_end", t)?;
        }
        if !(self.hi > self.lo) {
            return Err(("hi", "must exceed lo".into()));
        }
        Ok(())
    }
}

/// Randomised CKP, log-Sobolev, Talagrand and HWI deficits.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalityScenario {
    pub samples: usize,
    pub cells: usize,
    pub lo: f64,
    pub hi: f64,
    pub curvature: f64,
    pub equality_cases: usize,
    pub tolerance: f64,
}

impl Default for InequalityScenario {
    fn default() -> Self {
        Self { samples: 500, cells: 4000, lo: -10.0, hi: 10.0, curvature: 1.0, equality_cases: 20, tolerance: 1e-6 }
    }
}

impl InequalityScenario {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        at_least("cells", self.cells, 16)?;
        positive("curvature", self.curvature)?;
        if !(self.hi > self.lo) {
            return Err(("hi", "must exceed lo".into()));
        }
        Ok(())
    }
}

/// Two-species moderately interacting particle system started uniformly
/// on a square.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleScenario {
    pub n_u: usize,
    pub n_v: usize,
    pub mu: f64,
    pub eta: f64,
    pub chi: f64,
    pub alpha: f64,
    pub alpha_hat: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub half_width: f64,
    /// Check the Brownian second-moment slope `4μ` (only meaningful for χ = 0).
    pub brownian_check: bool,
    pub sigma_tolerance: f64,
    pub verify_determinism: bool,
}

impl Default for ParticleScenario {
    fn default() -> Self {
        let p = ParticleParams::default();
        Self {
            n_u: 10_000,
            n_v: 0,
            mu: p.mu,
            eta: p.eta,
            chi: p.chi,
            alpha: p.alpha,
            alpha_hat: p.alpha_hat,
            dt: 0.01,
            t_end: 1.0,
            record_every: 10,
            half_width: 1.0,
            brownian_check: false,
            sigma_tolerance: 3.0,
            verify_determinism: false,
        }
    }
}

impl ParticleScenario {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        at_least("n_u", self.n_u, 2)?;
        positive("mu", self.mu)?;
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        positive("half_width", self.half_width)?;
        if !(0.0 < self.alpha && self.alpha < self.alpha_hat && self.alpha_hat < 1.0) {
            return Err(("alpha", "need 0 < alpha < alpha_hat < 1".into()));
        }
        if self.brownian_check && self.chi != 0.0 {
            return Err(("brownian_check", "requires chi = 0".into()));
        }
        Ok(())
    }
}

/// Burgers shock time, gradient blow-up rate and self-similar profiles for
/// `u₀ = −amplitude·sin x`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersScenario {
    pub amplitude: f64,
    pub lo: f64,
    pub hi: f64,
    pub oracle_samples: usize,
    pub rate_points: usize,
    pub exponent_indices: Vec<u32>,
    pub profile_constant: f64,
    pub far_field_min: f64,
    pub far_field_max: f64,
    pub shock_tolerance: f64,
    pub slope_tolerance: f64,
    pub far_field_tolerance: f64,
}

impl Default for BurgersScenario {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            lo: -PI,
            hi: PI,
            oracle_samples: 1_000_000,
            rate_points: 20,
            exponent_indices: vec![0, 1],
            profile_constant: 1.0,
            far_field_min: 100.0,
            far_field_max: 1e4,
            shock_tolerance: 1e-6,
            slope_tolerance: 0.02,
            far_field_tolerance: 0.01,
        }
    }
}

impl BurgersScenario {
    fn validate(&self) -> Result<(), (&'static str, String)> {
        positive("amplitude", self.amplitude)?;
        at_least("oracle_samples", self.oracle_samples, 2)?;
        at_least("rate_points", self.rate_points, 3)?;
        positive("profile_constant", self.profile_constant)?;
        if !(self.far_field_max > self.far_field_min && self.far_field_min > 0.0) {
            return Err(("far_field_max", "need 0 < far_field_min < far_field_max".into()));
        }
        if !(self.hi > self.lo) {
            return Err(("hi", "must exceed lo".into()));
        }
        Ok(())
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), (&'static str, String)> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err((field, format!("must be positive and finite (got {v})")))
    }
}

fn at_least(field: &'static str, v: usize, min: usize) -> Result<(), (&'static str, String)> {
    if v >= min {
        Ok(())
    } else {
        Err((field, format!("must be at least {min} (got {v})")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModuleConfig {
    KsRadial(KsRadialScenario),
    Stationary(StationaryScenario),
    LogHls(LogHlsScenario),
    Jko(JkoScenario),
    FokkerPlanck(FpScenario),
    Inequalities(InequalityScenario),
    Particles(ParticleScenario),
    Burgers(BurgersScenario),
}

impl ModuleConfig {
    pub fn kind(&self) -> ModuleKind {
        match self {
            ModuleConfig::KsRadial(_) => ModuleKind::KsRadial,
            ModuleConfig::Stationary(_) => ModuleKind::Stationary,
            ModuleConfig::LogHls(_) => ModuleKind::Loghls,
            ModuleConfig::Jko(_) => ModuleKind::Jko,
            ModuleConfig::FokkerPlanck(_) => ModuleKind::FokkerPlanck,
            ModuleConfig::Inequalities(_) => ModuleKind::Inequalities,
            ModuleConfig::Particles(_) => ModuleKind::Particles,
            ModuleConfig::Burgers(_) => ModuleKind::Burgers,
        }
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        match self {
            ModuleConfig::KsRadial(c) => c.validate(),
            ModuleConfig::Stationary(c) => c.validate(),
            ModuleConfig::LogHls(c) => c.validate(),
            ModuleConfig::Jko(c) => c.validate(),
            ModuleConfig::FokkerPlanck(c) => c.validate(),
            ModuleConfig::Inequalities(c) => c.validate(),
            ModuleConfig::Particles(c) => c.validate(),
            ModuleConfig::Burgers(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Write every `emit_every`-th recorded state to the trajectory CSV.
    pub emit_every: usize,
    /// Output subdirectory, relative to the batch output root.
    pub out_dir: PathBuf,
    pub module: ModuleConfig,
}

// ---------------------------------------------------------------------------
// Presets

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Desk-scale wall-clock budget in seconds.
    pub budget_seconds: u64,
    /// TOML body of the scenario table.
    pub body: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "mass-conservation",
        description: "M = 6π Gaussian at n = 1024 for 10⁴ steps; mass drift ≤ 1e-12",
        budget_seconds: 10,
        body: r#"
module = "ks_radial"
mass_factor = 0.75
nodes = 1024
radius = 10.0
dt_initial = 1e-4
t_end = 1.0
record_interval = 0.05
min_steps = 10000
emit_every = 10
"#,
    },
    Preset {
        name: "second-moment",
        description: "free-space M = 4π run; dM2/dt = 4M(1 - M/8π) within 1%",
        budget_seconds: 60,
        body: r#"
module = "ks_radial"
mass_factor = 0.5
width = 0.5
nodes = 2048
radius = 60.0
t_end = 2.0
record_interval = 0.1
expect = "reached_t_end"
second_moment_tolerance = 0.01
emit_every = 5
"#,
    },
    Preset {
        name: "subcritical",
        description: "M = 4π Gaussian; reaches t_end with sup ρ decreasing",
        budget_seconds: 100,
        body: r#"
module = "ks_radial"
mass_factor = 0.5
width = 1.0
nodes = 1024
radius = 20.0
t_end = 2.0
record_interval = 0.1
expect = "reached_t_end"
sup_decreasing = true
emit_every = 5
"#,
    },
    Preset {
        name: "critical",
        description: "M = 8π Gaussian; second moment stays within 1%",
        budget_seconds: 100,
        body: r#"
module = "ks_radial"
mass_factor = 1.0
width = 1.0
nodes = 1024
radius = 20.0
t_end = 2.0
record_interval = 0.1
m2_drift_tolerance = 0.01
emit_every = 5
"#,
    },
    Preset {
        name: "supercritical",
        description: "concentrated M = 10π Gaussian; blow-up detected",
        budget_seconds: 100,
        body: r#"
module = "ks_radial"
mass_factor = 1.25
width = 0.2
nodes = 1024
radius = 2.0
t_end = 1.0
blowup_sup_threshold = 1e4
expect = "blowup_detected"
emit_every = 5
"#,
    },
    Preset {
        name: "critical-bubble",
        description: "M = 8π bubble data (λ = 1); reports M2 drift and the fitted λ̂(t) series",
        budget_seconds: 60,
        body: r#"
module = "ks_radial"
mass_factor = 1.0
profile = "bubble"
width = 1.0
nodes = 1024
radius = 20.0
t_end = 2.0
record_interval = 0.1
emit_every = 5
"#,
    },
    Preset {
        name: "type-ii",
        description: "M = 10π collapse; S = (T - t) sup ρ increasing and core mass near 8π",
        budget_seconds: 300,
        body: r#"
module = "ks_radial"
mass_factor = 1.25
width = 0.5
nodes = 4096
radius = 2.0
t_end = 10.0
record_interval = 1.0
record_growth = 1.05
cfl_factor = 0.1
blowup_sup_threshold = 1e5
expect = "blowup_detected"
type_ii = true
emit_every = 25
"#,
    },
    Preset {
        name: "bubble-orders",
        description: "bubble stationarity and Liouville residual orders in [1.8, 2.2]",
        budget_seconds: 30,
        body: r#"
module = "stationary"
check = "bubble_orders"
"#,
    },
    Preset {
        name: "laguerre",
        description: "Laguerre eigen-residuals for k = 0, 1, 2 (exact or order ≥ 1.8)",
        budget_seconds: 30,
        body: r#"
module = "stationary"
check = "laguerre"
"#,
    },
    Preset {
        name: "jko-estimates",
        description: "200 JKO steps at K = 256; per-step and cumulative energy estimates",
        budget_seconds: 60,
        body: r#"
module = "jko"
tau = 1e-2
steps = 200
levels = 256
emit_every = 20
"#,
    },
    Preset {
        name: "jko-vs-fp",
        description: "JKO with τ = 1e-3 against the dense FP solver at t = 0.5; W2 ≤ 5e-2",
        budget_seconds: 120,
        body: r#"
module = "jko"
tau = 1e-3
steps = 500
levels = 256
compare_fp = true
emit_every = 50
"#,
    },
    Preset {
        name: "fp-decay",
        description: "FP with V = x²/2; fitted entropy decay rate vs 2λ = 2",
        budget_seconds: 30,
        body: r#"
module = "fokker_planck"
curvature = 1.0
"#,
    },
    Preset {
        name: "fp-decay-slow",
        description: "FP with V = x²/4; fitted entropy decay rate vs 2λ = 1",
        budget_seconds: 30,
        body: r#"
module = "fokker_planck"
curvature = 0.5
"#,
    },
    Preset {
        name: "inequalities",
        description: "500 random densities: CKP, LSI, Talagrand, HWI deficits plus equality cases",
        budget_seconds: 180,
        body: r#"
module = "inequalities"
seed = 2024
"#,
    },
    Preset {
        name: "loghls",
        description: "log-HLS deficit at minimisers and over 1000 random radial densities",
        budget_seconds: 120,
        body: r#"
module = "loghls"
seed = 10
"#,
    },
    Preset {
        name: "particles-control",
        description: "χ = 0 with N = 10⁴; MSD slope 4μ within 3 standard errors, determinism",
        budget_seconds: 120,
        body: r#"
module = "particles"
seed = 7
mu = 0.5
chi = 0.0
brownian_check = true
verify_determinism = true
"#,
    },
    Preset {
        name: "burgers-shock",
        description: "Burgers with u0 = -sin x: shock time, x0, rate fit and far-field slopes",
        budget_seconds: 30,
        body: r#"
module = "burgers"
"#,
    },
];

pub fn find_preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

fn preset_table(name: &str) -> HarnessResult<toml::Table> {
    let p = find_preset(name).ok_or_else(|| config_err(None, format!("unknown preset `{name}`")))?;
    toml::from_str(p.body).map_err(|e| config_err(None, format!("preset `{name}`: {e}")))
}

/// Builds the scenario of a named preset with no overrides.
pub fn preset_scenario(name: &str) -> HarnessResult<Scenario> {
    let table = preset_table(name)?;
    build_scenario(name, table, None)
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    scenario: BTreeMap<String, toml::Table>,
}

pub fn parse_config(path: &Path) -> HarnessResult<Vec<Scenario>> {
    let text = fs::read_to_string(path).map_err(|e| config_err(None, format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parses a batch; scenarios come back sorted by name.
pub fn parse_config_str(text: &str) -> HarnessResult<Vec<Scenario>> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        config_err(line, e.message().to_string())
    })?;
    if file.scenario.is_empty() {
        return Err(config_err(None, "no [scenario.NAME] tables"));
    }
    let mut out = Vec::with_capacity(file.scenario.len());
    for (name, table) in file.scenario {
        out.push(build_scenario(&name, table, Some(text))?);
    }
    check_batch(&out)?;
    Ok(out)
}

fn check_batch(batch: &[Scenario]) -> HarnessResult<()> {
    let mut seen = BTreeMap::new();
    for s in batch {
        if let Some(other) = seen.insert(s.out_dir.clone(), &s.name) {
            return Err(config_err(
                None,
                format!("scenarios `{other}` and `{}` share output directory {}", s.name, s.out_dir.display()),
            ));
        }
    }
    Ok(())
}

/// Line of `key = ...` inside `[scenario.NAME]`, for error messages.
fn locate_key(source: &str, scenario: &str, key: &str) -> Option<usize> {
    let header = format!("[scenario.{scenario}]");
    let mut inside = false;
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            inside = t.replace(['"', '\''], "") == header;
            continue;
        }
        if inside {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim().trim_matches(['"', '\'']) == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn take<T: serde::de::DeserializeOwned>(table: &mut toml::Table, key: &str, scenario: &str, source: Option<&str>) -> HarnessResult<Option<T>> {
    match table.remove(key) {
        None => Ok(None),
        Some(v) => v.try_into().map(Some).map_err(|e: toml::de::Error| {
            config_err(
                source.and_then(|s| locate_key(s, scenario, key)),
                format!("scenario `{scenario}`: field `{key}`: {}", e.message()),
            )
        }),
    }
}

fn build_scenario(name: &str, mut table: toml::Table, source: Option<&str>) -> HarnessResult<Scenario> {
    if let Some(preset) = take::<String>(&mut table, "preset", name, source)? {
        let mut base = preset_table(&preset).map_err(|e| match e {
            HarnessError::Config { message, .. } => {
                config_err(source.and_then(|s| locate_key(s, name, "preset")), format!("scenario `{name}`: {message}"))
            }
            other => other,
        })?;
        base.extend(table);
        table = base;
    }
    let kind: ModuleKind = take(&mut table, "module", name, source)?
        .ok_or_else(|| config_err(None, format!("scenario `{name}`: missing `module` (or `preset`)")))?;
    let seed = take::<u64>(&mut table, "seed", name, source)?.unwrap_or(0);
    let emit_every = take::<usize>(&mut table, "emit_every", name, source)?.unwrap_or(1);
    if emit_every == 0 {
        return Err(config_err(
            source.and_then(|s| locate_key(s, name, "emit_every")),
            format!("scenario `{name}`: field `emit_every`: must be at least 1"),
        ));
    }
    let out_dir = take::<PathBuf>(&mut table, "out_dir", name, source)?.unwrap_or_else(|| PathBuf::from(name));
    if out_dir.is_absolute() || out_dir.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
        return Err(config_err(None, format!("scenario `{name}`: field `out_dir`: must be a relative path inside the output root")));
    }

    let rest = toml::Value::Table(table);
    let module_err = |e: toml::de::Error| {
        let msg = e.message().to_string();
        let key = msg.split('`').nth(1).unwrap_or("");
        config_err(source.and_then(|s| locate_key(s, name, key)), format!("scenario `{name}` ({}): {msg}", kind.as_str()))
    };
    let module = match kind {
        ModuleKind::KsRadial => ModuleConfig::KsRadial(rest.try_into().map_err(module_err)?),
        ModuleKind::Stationary => ModuleConfig::Stationary(rest.try_into().map_err(module_err)?),
        ModuleKind::Loghls => ModuleConfig::LogHls(rest.try_into().map_err(module_err)?),
        ModuleKind::Jko => ModuleConfig::Jko(rest.try_into().map_err(module_err)?),
        ModuleKind::FokkerPlanck => ModuleConfig::FokkerPlanck(rest.try_into().map_err(module_err)?),
        ModuleKind::Inequalities => ModuleConfig::Inequalities(rest.try_into().map_err(module_err)?),
        ModuleKind::Particles => ModuleConfig::Particles(rest.try_into().map_err(module_err)?),
        ModuleKind::Burgers => ModuleConfig::Burgers(rest.try_into().map_err(module_err)?),
    };
    module.validate().map_err(|(field, msg)| {
        config_err(source.and_then(|s| locate_key(s, name, field)), format!("scenario `{name}`: field `{field}`: {msg}"))
    })?;
    Ok(Scenario { name: name.to_string(), seed, emit_every, out_dir, module })
}

// ---------------------------------------------------------------------------
// Output helpers

/// Fixed 17-significant-digit formatting used in every artifact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, kind: &str, header: &[&str], rows: &[Vec<String>]) -> HarnessResult<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "# kslab {kind} schema v{SCHEMA_VERSION}").map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf);
    let fail = |e: csv::Error| HarnessError::Format { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json(path: &Path, value: &Value) -> HarnessResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialising a JSON value cannot fail");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

/// Result of one scenario: named pass/fail checks plus reported values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub name: String,
    pub directory: PathBuf,
    pub checks: BTreeMap<String, bool>,
    pub summary: Value,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.checks.values().all(|&c| c)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, &ok)| !ok).map(|(k, _)| k.as_str()).collect()
    }
}

struct Report {
    checks: BTreeMap<String, bool>,
    results: Map<String, Value>,
}

impl Report {
    fn new() -> Self {
        Self { checks: BTreeMap::new(), results: Map::new() }
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks.insert(name.to_string(), ok);
    }

    fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.results.insert(key.to_string(), v.into());
    }

    fn setf(&mut self, key: &str, v: f64) {
        self.results.insert(key.to_string(), num(v));
    }
}

// ---------------------------------------------------------------------------
// Running

/// Runs one scenario, writing its artifacts under `out_root/out_dir`.
pub fn run_scenario(s: &Scenario, out_root: &Path) -> HarnessResult<ScenarioOutcome> {
    let dir = out_root.join(&s.out_dir);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut rep = Report::new();
    match &s.module {
        ModuleConfig::KsRadial(c) => run_ks(c, s, &dir, &mut rep)?,
        ModuleConfig::Stationary(c) => run_stationary(c, &dir, &mut rep)?,
        ModuleConfig::LogHls(c) => run_loghls(c, s.seed, &dir, &mut rep)?,
        ModuleConfig::Jko(c) => run_jko_scenario(c, s, &dir, &mut rep)?,
        ModuleConfig::FokkerPlanck(c) => run_fp(c, &dir, &mut rep)?,
        ModuleConfig::Inequalities(c) => run_inequalities(c, s.seed, &dir, &mut rep)?,
        ModuleConfig::Particles(c) => run_particle_scenario(c, s, &dir, &mut rep)?,
        ModuleConfig::Burgers(c) => run_burgers(c, &dir, &mut rep)?,
    }
    let checks_json: Map<String, Value> = rep.checks.iter().map(|(k, v)| (k.clone(), Value::Bool(*v))).collect();
    let passed = rep.checks.values().all(|&c| c);
    let summary = json!({
        "scenario": s.name,
        "module": s.module.kind().as_str(),
        "schema_version": SCHEMA_VERSION,
        "seed": s.seed,
        "passed": passed,
        "checks": checks_json,
        "results": Value::Object(rep.results),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(ScenarioOutcome { name: s.name.clone(), directory: dir, checks: rep.checks, summary })
}

/// Runs a batch in parallel; each entry pairs a scenario name with its result.
pub fn run_batch(batch: &[Scenario], out_root: &Path) -> Vec<(String, HarnessResult<ScenarioOutcome>)> {
    batch.par_iter().map(|s| (s.name.clone(), run_scenario(s, out_root))).collect()
}

fn run_ks(c: &KsRadialScenario, s: &Scenario, dir: &Path, rep: &mut Report) -> HarnessResult<()> {
    let grid = RadialGrid::new(c.nodes, c.radius)?;
    let mass = c.mass();
    let w = c.width;
    let raw = match c.profile {
        InitialProfile::Gaussian => RadialDensity::from_fn(grid, |r| (-(r * r) / (w * w)).exp())?,
        InitialProfile::Bubble => {
            let p = BubbleParams::new(w)?;
            RadialDensity::from_fn(grid, |r| bubble_density(p, r))?
        }
    };
    let scale = mass / raw.mass();
    let rho0 = RadialDensity::new(grid, raw.values().iter().map(|v| v * scale).collect())?;
    let m0 = cumulative_from_density(&rho0);
    let traj = run(&m0, &c.solver())?;

    let mut rows = vec![];
    let last = traj.states.len() - 1;
    for (k, (t, m)) in traj.times.iter().zip(&traj.states).enumerate() {
        if k % s.emit_every != 0 && k != last {
            continue;
        }
        let (rho, _) = density_from_cumulative(m, NegativityPolicy::Clamp)?;
        for i in 0..grid.node_count() {
            rows.push(vec![
                k.to_string(),
                fmt_f64(*t),
                fmt_f64(grid.node(i)),
                fmt_f64(rho.values()[i]),
                fmt_f64(grid.edge(i + 1)),
                fmt_f64(m.values()[i + 1]),
            ]);
        }
    }
    write_csv(&dir.join("trajectory.csv"), "ks_radial trajectory", &["record", "t", "r_node", "rho", "r_edge", "m"], &rows)?;

    let diag_rows: Vec<Vec<String>> = traj
        .diagnostics
        .iter()
        .map(|d| {
            vec![
                fmt_f64(d.t),
                fmt_f64(d.mass),
                fmt_f64(d.second_moment),
                fmt_f64(d.entropy),
                fmt_f64(d.free_energy),
                fmt_f64(d.free_energy_free_space),
                fmt_f64(d.sup_density),
                fmt_f64(d.bubble_scale.unwrap_or(f64::NAN)),
                fmt_f64(d.loghls_deficit),
                fmt_f64(d.gns_deficit),
                fmt_f64(d.edge_density),
            ]
        })
        .collect();
    write_csv(
        &dir.join("diagnostics.csv"),
        "ks_radial diagnostics",
        &[
            "t",
            "mass",
            "second_moment",
            "entropy",
            "free_energy",
            "free_energy_free_space",
            "sup_density",
            "bubble_scale",
            "loghls_deficit",
            "gns_deficit",
            "edge_density",
        ],
        &diag_rows,
    )?;

    let mass_drift = traj
        .diagnostics
        .iter()
        .map(|d| d.mass)
        .chain(traj.states.iter().map(|m| m.total()))
        .map(|v| (v - m0.total()).abs() / m0.total())
        .fold(0.0, f64::max);
    let m2_0 = traj.diagnostics[0].second_moment;
    let m2_drift = traj.diagnostics.iter().map(|d| (d.second_moment - m2_0).abs() / m2_0).fold(0.0, f64::max);
    rep.set("termination", serde_json::to_value(traj.termination).expect("enum serialises"));
    rep.setf("mass", mass);
    rep.setf("final_time", *traj.times.last().unwrap());
    rep.set("steps", traj.steps);
    rep.set("records", traj.diagnostics.len());
    rep.setf("last_dt", traj.last_dt);
    rep.setf("mass_drift", mass_drift);
    rep.setf("second_moment_drift", m2_drift);
    rep.set(
        "bubble_scale_series",
        traj.diagnostics
            .iter()
            .map(|d| json!([num(d.t), d.bubble_scale.map(num).unwrap_or(Value::Null)]))
            .collect::<Vec<_>>(),
    );
    rep.check("mass_conserved", mass_drift <= c.mass_tolerance);
    if c.min_steps > 0 {
        rep.check("min_steps", traj.steps >= c.min_steps);
    }
    match c.expect {
        Expectation::Any => {}
        Expectation::ReachedTEnd => rep.check("reached_t_end", traj.termination == Termination::ReachedTEnd),
        Expectation::BlowupDetected => rep.check("blowup_detected", traj.termination == Termination::BlowupDetected),
    }
    if c.sup_decreasing {
        rep.check("sup_decreasing", traj.diagnostics.windows(2).all(|p| p[1].sup_density < p[0].sup_density));
    }
    if let Some(tol) = c.m2_drift_tolerance {
        rep.check("second_moment_drift", m2_drift <= tol);
    }
    if let Some(tol) = c.second_moment_tolerance {
        match second_moment_rate_check(&traj.diagnostics) {
            Ok(chk) => {
                rep.setf("second_moment_rate_predicted", chk.predicted);
                rep.setf("second_moment_rate_deviation", chk.max_deviation);
                rep.set("boundary_contaminated", chk.boundary_contaminated);
                rep.check("second_moment_law", chk.max_deviation <= tol && !chk.boundary_contaminated);
            }
            Err(e) => {
                rep.set("second_moment_rate_error", e.to_string());
                rep.check("second_moment_law", false);
            }
        }
    }
    if traj.termination == Termination::BlowupDetected {
        let indicator = traj.blowup_time_estimate().map(|t_est| (t_est, s_indicator(&traj, t_est)));
        if let Some((t_est, Ok(s_ind))) = indicator {
            rep.setf("blowup_time_estimate", t_est);
            rep.set("s_increasing_over_final_decade", s_ind.increasing_over_final_decade);
            rep.setf("s_final_decade_slope", s_ind.final_decade_slope);
            rep.set("type_ii", s_ind.type_ii);
            let lambda = traj.diagnostics.last().and_then(|d| d.bubble_scale);
            let inner = lambda.map(|l| traj.final_state().at(10.0 * l) / CRITICAL_MASS);
            rep.set("core_scale", lambda.map(num).unwrap_or(Value::Null));
            rep.set("core_mass_over_8pi", inner.map(num).unwrap_or(Value::Null));
            if c.type_ii {
                rep.check("type_ii", s_ind.increasing_over_final_decade && s_ind.type_ii);
                rep.check("core_mass", inner.is_some_and(|x| (x - 1.0).abs() <= c.inner_mass_tolerance));
            }
        } else {
            if let Some((t_est, Err(e))) = indicator {
                rep.setf("blowup_time_estimate", t_est);
                rep.set("s_indicator_error", e.to_string());
            }
            if c.type_ii {
                rep.check("type_ii", false);
            }
        }
    } else if c.type_ii {
        rep.check("type_ii", false);
    }
    Ok(())
}

fn orders_ok(orders: &[f64], lo: f64, hi: f64) -> bool {
    orders.iter().all(|o| (lo..=hi).contains(o))
}

fn run_stationary(c: &StationaryScenario, dir: &Path, rep: &mut Report) -> HarnessResult<()> {
    match c.check {
        StationaryCheck::BubbleOrders => {
            let stat = c.spacings.iter().map(|&h| bubble_stationarity_residual(h, c.radius, c.lambda)).collect::<Result<Vec<_>, _>>()?;
            let liou = c.spacings.iter().map(|&h| liouville_residual(h, c.lambda)).collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<Vec<String>> =
                c.spacings.iter().zip(stat.iter().zip(&liou)).map(|(h, (a, b))| vec![fmt_f64(*h), fmt_f64(*a), fmt_f64(*b)]).collect();
            write_csv(&dir.join("residuals.csv"), "stationary bubble residuals", &["h", "stationarity", "liouville"], &rows)?;
            let o1 = convergence_orders(&stat);
            let o2 = convergence_orders(&liou);
            rep.set("stationarity_orders", o1.iter().map(|&o| num(o)).collect::<Vec<_>>());
            rep.set("liouville_orders", o2.iter().map(|&o| num(o)).collect::<Vec<_>>());
            rep.check("stationarity_order", orders_ok(&o1, c.order_min, c.order_max));
            rep.check("liouville_order", orders_ok(&o2, c.order_min, c.order_max));
        }
        StationaryCheck::Laguerre => {
            let mut rows = vec![];
            let mut per_mode = Map::new();
            for &k in &c.modes {
                let checks = c.cells.iter().map(|&n| laguerre_eigen_check(k, c.y_max, n)).collect::<Result<Vec<_>, _>>()?;
                for (n, e) in c.cells.iter().zip(&checks) {
                    rows.push(vec![
                        k.to_string(),
                        n.to_string(),
                        fmt_f64(e.eigenvalue),
                        fmt_f64(e.residual),
                        fmt_f64(e.weighted_norm_sq),
                    ]);
                }
                let res: Vec<f64> = checks.iter().map(|e| e.residual).collect();
                let exact = res.iter().all(|&r| r <= c.exact_tolerance);
                let orders = convergence_orders(&res);
                per_mode.insert(
                    k.to_string(),
                    json!({ "exact": exact, "orders": orders.iter().map(|&o| num(o)).collect::<Vec<_>>() }),
                );
                rep.check(&format!("mode_{k}"), exact || orders.iter().all(|&o| o >= c.order_min));
            }
            write_csv(
                &dir.join("residuals.csv"),
                "stationary laguerre residuals",
                &["k", "cells", "eigenvalue", "residual", "weighted_norm_sq"],
                &rows,
            )?;
            rep.set("modes", Value::Object(per_mode));
        }
    }
    Ok(())
}

fn random_radial_density(rng: &mut ChaCha8Rng, grid: RadialGrid) -> crate::Result<RadialDensity> {
    let scale: f64 = rng.random_range(0.05..5.0);
    let parts: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
        .map(|_| (rng.random_range(0.1..1.0), rng.random_range(0.0..4.0), rng.random_range(0.2..2.0)))
        .collect();
    RadialDensity::from_fn(grid, |r| scale * parts.iter().map(|(w, c, s)| w * (-((r - c) / s).powi(2)).exp()).sum::<f64>())
}

fn run_loghls(c: &LogHlsScenario, seed: u64, dir: &Path, rep: &mut Report) -> HarnessResult<()> {
    let mg = RadialGrid::new(c.minimiser_nodes, c.minimiser_radius)?;
    let mut rows = vec![];
    let mut worst_min = 0.0f64;
    for (&m, &l) in c.minimiser_masses.iter().zip(&c.minimiser_lambdas) {
        let rho = RadialDensity::from_fn(mg, |r| loghls_minimiser(m, l, r))?;
        let d = loghls_deficit(&rho)?;
        worst_min = worst_min.max(d.abs() / m);
        rows.push(vec![fmt_f64(m), fmt_f64(l), fmt_f64(d), fmt_f64(d / m)]);
    }
    write_csv(&dir.join("minimisers.csv"), "loghls minimisers", &["mass", "lambda", "deficit", "relative"], &rows)?;

    let grid = RadialGrid::new(c.nodes, c.radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![];
    let mut worst_random = f64::INFINITY;
    for i in 0..c.samples {
        let rho = random_radial_density(&mut rng, grid)?;
        let d = loghls_deficit(&rho)?;
        let rel = d / rho.mass();
        worst_random = worst_random.min(rel);
        rows.push(vec![i.to_string(), fmt_f64(rho.mass()), fmt_f64(d), fmt_f64(rel)]);
    }
    write_csv(&dir.join("random.csv"), "loghls random", &["sample", "mass", "deficit", "relative"], &rows)?;
    rep.setf("max_minimiser_relative_deficit", worst_min);
    rep.setf("min_random_relative_deficit", worst_random);
    rep.check("minimiser_deficit", worst_min <= c.tolerance);
    rep.check("random_deficit", c.samples == 0 || worst_random >= -c.tolerance);
    Ok(())
}

fn bimodal(x: f64) -> f64 {
    (-0.5 * ((x - 1.0) / 0.5).powi(2)).exp() + 0.5 * (-0.5 * ((x + 1.5) / 0.4).powi(2)).exp()
}

fn run_jko_scenario(c: &JkoScenario, s: &Scenario, dir: &Path, rep: &mut Report) -> HarnessResult<()> {
    let potential = ScalarFn::quadratic(c.curvature);
    let spec = FreeEnergySpec::new(c.diffusion, potential.clone(), ScalarFn::Zero)?;
    let rho0 = Density1D::from_fn(c.lo, c.hi, c.cells, bimodal)?;
    let q0 = rho0.to_quantiles(c.levels)?;
    let r = run_jko(&q0, &spec, &c.jko_config(), c.steps)?;

    let times = r.times();
    let rows: Vec<Vec<String>> = (0..r.energies.len())
        .map(|n| {
            let (inc, cum, slack) = if n == 0 {
                (0.0, 0.0, 0.0)
            } else {
                (r.increments[n - 1], r.cumulative_dissipation[n - 1], r.step_slack[n - 1])
            };
            vec![n.to_string(), fmt_f64(times[n]), fmt_f64(r.energies[n]), fmt_f64(inc), fmt_f64(cum), fmt_f64(slack)]
        })
        .collect();
    write_csv(
        &dir.join("energies.csv"),
        "jko energies",
        &["step", "t", "energy", "w2_increment", "cumulative_dissipation", "slack"],
        &rows,
    )?;

    let levels = q0.levels();
    let mut qrows = vec![];
    let last = r.states.len() - 1;
    for (n, q) in r.states.iter().enumerate() {
        if n % s.emit_every != 0 && n != last {
            continue;
        }
        for (p, x) in levels.iter().zip(q.quantiles()) {
            qrows.push(vec![n.to_string(), fmt_f64(times[n]), fmt_f64(*p), fmt_f64(*x)]);
        }
    }
    write_csv(&dir.join("quantiles.csv"), "jko quantiles", &["step", "t", "level", "quantile"], &qrows)?;

    let min_slack = r.step_slack.iter().cloned().fold(f64::INFINITY, f64::min);
    let e0 = r.energies[0];
    let e_min = r.energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let total = *r.cumulative_dissipation.last().unwrap_or(&0.0);
    rep.setf("initial_energy", e0);
    rep.setf("final_energy", *r.energies.last().unwrap());
    rep.setf("min_step_slack", min_slack);
    rep.setf("cumulative_dissipation", total);
    rep.setf("holder_constant", r.holder_constant);
    rep.check("step_inequality", min_slack >= -c.slack_tolerance);
    rep.check("cumulative_estimate", total <= e0 - e_min + c.slack_tolerance);
    if c.compare_fp {
        let pspec = PotentialSpec::new(potential, c.lo, c.hi)?;
        let t_final = *times.last().unwrap();
        let fp = fp_run(&rho0, &pspec, t_final, c.fp_dt, &FpOptions { record_every: usize::MAX, ..Default::default() })?;
        let qf = fp.states.last().expect("final state is recorded").to_quantiles(c.levels)?;
        let d = w2(r.states.last().unwrap(), &qf)?;
        rep.setf("w2_vs_fokker_planck", d);
        rep.check("matches_fokker_planck", d <= c.w2_tolerance);
    }
    Ok(())
}

fn run_fp(c: &FpScenario, dir: &Path, rep: &mut Report) -> HarnessResult<()> {
    let spec = PotentialSpec::new(ScalarFn::quadratic(c.curvature), c.lo, c.hi)?;
    let rho0 = Density1D::from_fn(c.lo, c.hi, c.cells, |x| spec.stationary_density(x - c.shift))?;
    let t_end = c.t_end.unwrap_or(7.0 / c.curvature);
    let scheme = match c.scheme {
        FpSchemeName::Explicit => FpScheme::Explicit,
        FpSchemeName::Implicit => FpScheme::Implicit,
    };
    let traj = fp_run(&rho0, &spec, t_end, c.dt, &FpOptions { scheme, record_every: c.record_every })?;
    let rows: Vec<Vec<String>> = traj
        .times
        .iter()
        .zip(traj.relative_entropy.iter().zip(&traj.fisher))
        .map(|(t, (h, i))| vec![fmt_f64(*t), fmt_f64(*h), fmt_f64(*i)])
        .collect();
    write_csv(&dir.join("entropy.csv"), "fokker_planck entropy", &["t", "relative_entropy", "fisher_information"], &rows)?;
    let lambda = bakry_emery_lambda(&spec, c.lo, c.hi);
    let expected = 2.0 * lambda;
    rep.setf("bakry_emery_lambda", lambda);
    rep.setf("expected_rate", expected);
    match decay_rate_fit(&traj) {
        Ok(fit) => {
            let rel = (fit.rate - expected).abs() / expected;
            rep.setf("fitted_rate", fit.rate);
            rep.setf("relative_error", rel);
            rep.set("fit_window", vec![num(fit.window_start), num(fit.window_end)]);
            rep.check("decay_rate", rel <= c.rate_tolerance);
        }
        Err(e) => {
            rep.set("fit_error", e.to_string());
            rep.check("decay_rate", false);
        }
    }
    Ok(())
}

fn run_inequalities(c: &InequalityScenario, seed: u64, dir: &Path, rep: &mut Report) -> HarnessResult<()> {
    let spec = PotentialSpec::new(ScalarFn::quadratic(c.curvature), c.lo, c.hi)?;
    let lambda = bakry_emery_lambda(&spec, c.lo, c.hi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![];
    let mut mins = [f64::INFINITY; 4];
    for i in 0..c.samples {
        let a = random_mixture(&mut rng, c.lo, c.hi, c.cells)?;
        let b = random_mixture(&mut rng, c.lo, c.hi, c.cells)?;
        let reference = spec.reference_on(&a)?;
        let ckp = ckp_deficit(&a, &reference)?.min(ckp_deficit(&a, &b)?);
        let lsi = logsob_deficit(&a, &spec, lambda)?;
        let tal = talagrand_deficit(&a, &spec, lambda)?;
        let hwi = hwi_deficit(&a, &b, &spec, lambda)?;
        for (m, v) in mins.iter_mut().zip([ckp, lsi, tal, hwi]) {
            *m = m.min(v);
        }
        rows.push(vec![i.to_string(), fmt_f64(ckp), fmt_f64(lsi), fmt_f64(tal), fmt_f64(hwi)]);
    }
    write_csv(&dir.join("deficits.csv"), "inequality deficits", &["sample", "ckp", "logsob", "talagrand", "hwi"], &rows)?;

    let mut eq_rows = vec![];
    let mut eq = 0.0f64;
    for i in 0..c.equality_cases {
        let m: f64 = rng.random_range(-2.0..2.0);
        let g = Density1D::from_fn(c.lo, c.hi, c.cells, |x| spec.stationary_density(x - m))?;
        let l = logsob_deficit(&g, &spec, lambda)?;
        let t = talagrand_deficit(&g, &spec, lambda)?;
        eq = eq.max(l.abs()).max(t.abs());
        eq_rows.push(vec![i.to_string(), fmt_f64(m), fmt_f64(l), fmt_f64(t)]);
    }
    write_csv(&dir.join("equality.csv"), "inequality equality cases", &["case", "shift", "logsob", "talagrand"], &eq_rows)?;

    let names = ["ckp", "logsob", "talagrand", "hwi"];
    for (n, m) in names.iter().zip(mins) {
        rep.setf(&format!("min_{n}_deficit"), m);
        rep.check(n, c.samples == 0 || m >= -c.tolerance);
    }
    rep.setf("bakry_emery_lambda", lambda);
    rep.setf("max_equality_deficit", eq);
    rep.check("equality_cases", eq <= c.tolerance);
    Ok(())
}

fn particle_bytes(r: &ParticleRun) -> Vec<u8> {
    let s = &r.final_state;
    s.u.iter().chain(&s.v).flat_map(|p| p.iter().flat_map(|x| x.to_le_bytes())).collect()
}

fn run_particle_scenario(c: &ParticleScenario, s: &Scenario, dir: &Path, rep: &mut Report) -> HarnessResult<()> {
    let params = ParticleParams { mu: c.mu, eta: c.eta, chi: c.chi, alpha: c.alpha, alpha_hat: c.alpha_hat };
    // initial positions come from a stream independent of the dynamics seed
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x9e37_79b9_7f4a_7c15);
    let w = c.half_width;
    let mut draw = |n: usize| -> Vec<[f64; 2]> { (0..n).map(|_| [rng.random_range(-w..w), rng.random_range(-w..w)]).collect() };
    let u = draw(c.n_u);
    let v = draw(c.n_v);
    let state = ParticleState::new(u, v, params)?;
    let r = run_particles(&state, c.dt, c.t_end, RngSeed(s.seed), c.record_every)?;

    let rows: Vec<Vec<String>> = (0..r.times.len())
        .map(|k| {
            vec![
                fmt_f64(r.times[k]),
                r.u_count[k].to_string(),
                r.v_count[k].to_string(),
                fmt_f64(r.u_centroid[k][0]),
                fmt_f64(r.u_centroid[k][1]),
                fmt_f64(r.u_second_moment[k]),
                fmt_f64(r.v_second_moment[k]),
            ]
        })
        .collect();
    write_csv(
        &dir.join("moments.csv"),
        "particles moments",
        &["t", "u_count", "v_count", "u_centroid_x", "u_centroid_y", "u_second_moment", "v_second_moment"],
        &rows,
    )?;
    let fs_ = &r.final_state;
    let final_rows: Vec<Vec<String>> = fs_
        .u
        .iter()
        .map(|p| ("u", p))
        .chain(fs_.v.iter().map(|p| ("v", p)))
        .map(|(sp, p)| vec![sp.to_string(), fmt_f64(p[0]), fmt_f64(p[1])])
        .collect();
    write_csv(&dir.join("final_state.csv"), "particles final state", &["species", "x", "y"], &final_rows)?;

    let z = (r.msd_slope - 4.0 * c.mu) / r.msd_slope_stderr;
    rep.setf("msd_slope", r.msd_slope);
    rep.setf("msd_slope_stderr", r.msd_slope_stderr);
    rep.setf("expected_slope", 4.0 * c.mu);
    rep.setf("z_score", z);
    if c.brownian_check {
        rep.check("brownian_slope", z.abs() <= c.sigma_tolerance);
    }
    if c.verify_determinism {
        let again = run_particles(&state, c.dt, c.t_end, RngSeed(s.seed), c.record_every)?;
        rep.check("deterministic", particle_bytes(&again) == particle_bytes(&r) && again.u_second_moment == r.u_second_moment);
    }
    Ok(())
}

fn run_burgers(c: &BurgersScenario, dir: &Path, rep: &mut Report) -> HarnessResult<()> {
    let problem = BurgersProblem::new(Profile::NegativeSine { amplitude: c.amplitude }, c.lo, c.hi)?;
    let shock = shock_time(&problem);
    let n = c.oracle_samples;
    let profile = problem.profile();
    let brute = (0..n)
        .map(|i| c.lo + (c.hi - c.lo) * i as f64 / (n - 1) as f64)
        .map(|x| profile.derivative(x))
        .filter(|&d| d < 0.0)
        .map(|d| -1.0 / d)
        .fold(f64::INFINITY, f64::min);
    rep.setf("shock_time", shock.time);
    rep.setf("oracle_shock_time", brute);
    rep.set("x_m", shock.x_m.map(num).unwrap_or(Value::Null));
    rep.set("x0", shock.x0.map(num).unwrap_or(Value::Null));
    rep.check("shock_time", (shock.time - brute).abs() <= c.shock_tolerance);

    let t = shock.time;
    let times: Vec<f64> = (1..=c.rate_points).map(|j| t - t * 10f64.powf(-1.0 - 3.0 * j as f64 / c.rate_points as f64)).collect();
    let fit = blowup_rate_fit(&problem, &times)?;
    let rows = times
        .iter()
        .map(|&tj| Ok(vec![fmt_f64(tj), fmt_f64(t - tj), fmt_f64(sup_gradient(&problem, &shock, tj)?)]))
        .collect::<crate::Result<Vec<_>>>()?;
    write_csv(&dir.join("rate.csv"), "burgers rate", &["t", "time_to_shock", "sup_gradient"], &rows)?;
    rep.setf("rate_slope", fit.slope);
    rep.setf("rate_intercept", fit.intercept);
    rep.check("rate_slope", (fit.slope + 1.0).abs() <= c.slope_tolerance);

    let mut prows = vec![];
    let mut slopes = Map::new();
    for &i in &c.exponent_indices {
        let (alpha, beta) = selfsimilar_exponents(i);
        let ratio = c.far_field_max / c.far_field_min;
        let ys: Vec<f64> = (0..=40).map(|j| c.far_field_min * ratio.powf(j as f64 / 40.0)).collect();
        let mut lx = vec![];
        let mut ly = vec![];
        for &y in &ys {
            let u = profile_solve(-y, alpha, c.profile_constant)?;
            prows.push(vec![fmt_f64(alpha), fmt_f64(-y), fmt_f64(u)]);
            lx.push(y.ln());
            ly.push(u.ln());
        }
        let (slope, _) = linear_fit(&lx, &ly)?;
        let expected = alpha / (alpha + 1.0);
        let rel = (slope / expected - 1.0).abs();
        slopes.insert(
            format!("alpha_{alpha}"),
            json!({ "alpha": num(alpha), "beta": num(beta), "slope": num(slope), "expected": num(expected), "relative_error": num(rel) }),
        );
        rep.check(&format!("far_field_alpha_{alpha}"), rel <= c.far_field_tolerance);
    }
    write_csv(&dir.join("profiles.csv"), "burgers profiles", &["alpha", "y", "u"], &prows)?;
    rep.set("far_field", Value::Object(slopes));
    Ok(())
}

// ---------------------------------------------------------------------------
// Golden comparison

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    #[serde(default)]
    pub abs: f64,
    #[serde(default)]
    pub rel: f64,
}

impl Tolerance {
    pub fn accepts(&self, expected: f64, actual: f64) -> bool {
        if expected.is_nan() || actual.is_nan() {
            return expected.is_nan() && actual.is_nan();
        }
        if expected == actual {
            return true;
        }
        (expected - actual).abs() <= self.abs + self.rel * expected.abs().max(actual.abs())
    }
}

/// Per-column tolerances. Column keys are either `column` or
/// `file.csv:column`; the file-qualified key wins.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenTolerances {
    #[serde(default = "default_tolerance")]
    pub default: Tolerance,
    #[serde(default)]
    pub columns: BTreeMap<String, Tolerance>,
}

fn default_tolerance() -> Tolerance {
    Tolerance { abs: 1e-12, rel: 1e-9 }
}

impl Default for GoldenTolerances {
    fn default() -> Self {
        Self { default: default_tolerance(), columns: BTreeMap::new() }
    }
}

impl GoldenTolerances {
    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            config_err(line, e.message().to_string())
        })
    }

    fn for_column(&self, file: &str, column: &str) -> Tolerance {
        self.columns
            .get(&format!("{file}:{column}"))
            .or_else(|| self.columns.get(column))
            .copied()
            .unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// Path relative to the compared directories.
    pub file: PathBuf,
    /// 1-based data row (header excluded); `None` for structural differences.
    pub row: Option<usize>,
    pub column: String,
    pub expected: String,
    pub actual: String,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.row {
            Some(r) => write!(f, "{} row {r} column {}: expected {}, got {}", self.file.display(), self.column, self.expected, self.actual),
            None => write!(f, "{} {}: expected {}, got {}", self.file.display(), self.column, self.expected, self.actual),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoldenReport {
    pub files_compared: usize,
    pub mismatches: Vec<Mismatch>,
}

impl GoldenReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn list_files(root: &Path) -> HarnessResult<Vec<PathBuf>> {
    let mut out = vec![];
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| HarnessError::Format { path: root.to_path_buf(), message: e.to_string() })?;
        if entry.file_type().is_file() {
            out.push(entry.path().strip_prefix(root).expect("walked below root").to_path_buf());
        }
    }
    Ok(out)
}

/// Compares every file under `golden` with its counterpart under
/// `artifacts`. CSV and JSON files are compared numerically, anything else
/// byte for byte. Extra artifact files are ignored.
pub fn compare_golden(artifacts: &Path, golden: &Path, tol: &GoldenTolerances) -> HarnessResult<GoldenReport> {
    for d in [artifacts, golden] {
        if !d.is_dir() {
            return Err(HarnessError::MissingFile(d.to_path_buf()));
        }
    }
    let mut report = GoldenReport::default();
    for rel in list_files(golden)? {
        let (g, a) = (golden.join(&rel), artifacts.join(&rel));
        if !a.is_file() {
            return Err(HarnessError::MissingFile(a));
        }
        report.files_compared += 1;
        match rel.extension().and_then(|e| e.to_str()) {
            Some("csv") => compare_csv(&rel, &g, &a, tol, &mut report.mismatches)?,
            Some("json") => {
                let read = |p: &Path| -> HarnessResult<Value> {
                    let text = fs::read_to_string(p).map_err(io_err(p))?;
                    serde_json::from_str(&text).map_err(|e| HarnessError::Format { path: p.to_path_buf(), message: e.to_string() })
                };
                let file = rel.to_string_lossy().to_string();
                compare_json(&rel, &file, "", &read(&g)?, &read(&a)?, tol, &mut report.mismatches);
            }
            _ => {
                let gb = fs::read(&g).map_err(io_err(&g))?;
                let ab = fs::read(&a).map_err(io_err(&a))?;
                if gb != ab {
                    report.mismatches.push(Mismatch {
                        file: rel.clone(),
                        row: None,
                        column: "<bytes>".into(),
                        expected: format!("{} bytes", gb.len()),
                        actual: format!("{} bytes", ab.len()),
                    });
                }
            }
        }
    }
    Ok(report)
}

struct CsvTable {
    comment: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> HarnessResult<CsvTable> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let comment = text.lines().next().filter(|l| l.starts_with('#')).unwrap_or("").to_string();
    let fail = |e: csv::Error| HarnessError::Format { path: path.to_path_buf(), message: e.to_string() };
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(fail)?.iter().map(String::from).collect();
    let mut rows = vec![];
    for rec in rdr.records() {
        rows.push(rec.map_err(fail)?.iter().map(String::from).collect());
    }
    Ok(CsvTable { comment, header, rows })
}

fn compare_csv(rel: &Path, g: &Path, a: &Path, tol: &GoldenTolerances, out: &mut Vec<Mismatch>) -> HarnessResult<()> {
    let (gt, at) = (read_csv(g)?, read_csv(a)?);
    let file_key = rel.file_name().map(|f| f.to_string_lossy().to_string()).unwrap_or_default();
    let structural = |column: &str, e: String, a: String| Mismatch { file: rel.to_path_buf(), row: None, column: column.into(), expected: e, actual: a };
    if gt.comment != at.comment {
        out.push(structural("<schema>", gt.comment.clone(), at.comment.clone()));
    }
    if gt.header != at.header {
        out.push(structural("<header>", gt.header.join(","), at.header.join(",")));
        return Ok(());
    }
    if gt.rows.len() != at.rows.len() {
        out.push(structural("<rows>", gt.rows.len().to_string(), at.rows.len().to_string()));
    }
    for (i, (gr, ar)) in gt.rows.iter().zip(&at.rows).enumerate() {
        for (j, (ge, ae)) in gr.iter().zip(ar).enumerate() {
            let col = &gt.header[j];
            let ok = match (ge.parse::<f64>(), ae.parse::<f64>()) {
                (Ok(x), Ok(y)) => tol.for_column(&file_key, col).accepts(x, y),
                _ => ge == ae,
            };
            if !ok {
                out.push(Mismatch { file: rel.to_path_buf(), row: Some(i + 1), column: col.clone(), expected: ge.clone(), actual: ae.clone() });
            }
        }
    }
    Ok(())
}

fn compare_json(rel: &Path, file: &str, path: &str, g: &Value, a: &Value, tol: &GoldenTolerances, out: &mut Vec<Mismatch>) {
    let mismatch = |out: &mut Vec<Mismatch>| {
        out.push(Mismatch { file: rel.to_path_buf(), row: None, column: path.to_string(), expected: g.to_string(), actual: a.to_string() })
    };
    match (g, a) {
        (Value::Number(x), Value::Number(y)) => {
            let key = path.rsplit('.').next().unwrap_or(path);
            let key = key.split('[').next().unwrap_or(key);
            if !tol.for_column(file, key).accepts(x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN)) {
                mismatch(out);
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            for k in x.keys().chain(y.keys().filter(|k| !x.contains_key(*k))) {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match (x.get(k), y.get(k)) {
                    (Some(gv), Some(av)) => compare_json(rel, file, &sub, gv, av, tol, out),
                    (gv, av) => out.push(Mismatch {
                        file: rel.to_path_buf(),
                        row: None,
                        column: sub,
                        expected: gv.map(|v| v.to_string()).unwrap_or_else(|| "<absent>".into()),
                        actual: av.map(|v| v.to_string()).unwrap_or_else(|| "<absent>".into()),
                    }),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (gv, av)) in x.iter().zip(y).enumerate() {
                compare_json(rel, file, &format!("{path}[{i}]"), gv, av, tol, out);
            }
        }
        _ if g == a => {}
        _ => mismatch(out),
    }
}
