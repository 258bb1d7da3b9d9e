//! Experiment configuration files.
//!
//! A config is a TOML document. Unknown keys are rejected everywhere, and
//! every expression is parsed and every engine object built by
//! [`ExperimentConfig::resolve`] before any computation starts.
//!
//! ```toml
//! experiment = "fmt"              # fmt | ldl | calculus | cartan | smt | nev
//!                                 # | mc-validate | surface-validate
//! engine = "quadrature"           # quadrature | mc | both
//!
//! [surface]                       # default: euclidean
//! kind = "poincare"               # euclidean | poincare | custom
//! a = 1.0                         # poincare: curvature −a²
//! # custom: table = [[ρ, h], …] and optionally domain_radius
//!
//! [grid]
//! min = 2.0
//! max = 50.0
//! count = 20
//! spacing = "log"                 # log | linear
//!
//! [policy]                        # Monte Carlo and assertion settings
//! seed = 7
//! n_paths = 100000
//! delta = 0.1                     # δ of the exceptional-set test
//! sigmas = 3.0                    # MC agreement threshold in stderr units
//!
//! [quadrature]                    # optional overrides of the quadrature settings
//!
//! [output]
//! dir = "out/fmt"                 # relative to the config file
//!
//! [fmt]
//! curve = "[1 : exp(z)]"
//! divisor = ["w_1"]               # or [{ form = "w_1", mult = 2 }]
//! norm = "euclidean"              # euclidean | max
//! ```
//!
//! The per-experiment sections are documented on their types.

use std::path::{Path, PathBuf};

use nevlab::divisor::{DivisorSum, HomogeneousPoly, WeilNorm, WeilSpec};
use nevlab::error::NevError;
use nevlab::expr::{parse_curve, parse_form, parse_holo, parse_meromorphic, parse_rational};
use nevlab::holo::{HoloExpr, MeromorphicFn, ProjectiveCurve, VectorField};
use nevlab::nevanlinna::RGrid;
use nevlab::quad::QuadSettings;
use nevlab::stochastic::PathPolicy;
use nevlab::surface::{MetricProfile, SurfaceModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fmt,
    Ldl,
    Calculus,
    Cartan,
    Smt,
    Nev,
    McValidate,
    SurfaceValidate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fmt => "fmt",
            Self::Ldl => "ldl",
            Self::Calculus => "calculus",
            Self::Cartan => "cartan",
            Self::Smt => "smt",
            Self::Nev => "nev",
            Self::McValidate => "mc-validate",
            Self::SurfaceValidate => "surface-validate",
        }
    }

    fn section(self) -> &'static str {
        match self {
            Self::McValidate => "mc_validate",
            Self::SurfaceValidate => "surface_validate",
            k => k.name(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Quadrature,
    Mc,
    Both,
}

impl Engine {
    pub fn uses_mc(self) -> bool {
        matches!(self, Self::Mc | Self::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
#[derive(Default)]
pub enum SurfaceSpec {
    #[default]
    Euclidean,
    Poincare {
        #[serde(default = "one")]
        a: f64,
    },
    Custom {
        /// `(ρ_e, h)` samples, interpolated monotonically.
        table: Vec<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain_radius: Option<f64>,
    },
}


fn one() -> f64 {
    1.0
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<SurfaceModel> {
        let profile = match self {
            Self::Euclidean => MetricProfile::euclidean(),
            Self::Poincare { a } => MetricProfile::poincare(*a).map_err(|e| CliError::engine("surface", e))?,
            Self::Custom { table, domain_radius } => {
                MetricProfile::from_table(table, *domain_radius).map_err(|e| CliError::engine("surface.table", e))?
            }
        };
        Ok(SurfaceModel::new(profile))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    #[default]
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

/// Monte Carlo path policy plus the statistical settings of the assertions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySpec {
    pub seed: u64,
    pub n_paths: usize,
    pub batches: usize,
    pub antithetic: bool,
    /// Absolute Euclidean-time step.
    pub base_step: f64,
    /// When set, the step at radius r is `base_step_rho2 · ρ_e(r)²` instead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_step_rho2: Option<f64>,
    pub shrink: f64,
    pub step_floor: f64,
    pub max_steps: u64,
    /// δ of the exceptional-set test.
    pub delta: f64,
    /// Agreement threshold for Monte Carlo checks, in standard errors.
    pub sigmas: f64,
}

impl Default for PolicySpec {
    fn default() -> Self {
        let p = PathPolicy::default();
        Self {
            seed: p.seed,
            n_paths: p.n_paths,
            batches: p.batches,
            antithetic: p.antithetic,
            base_step: p.base_step,
            base_step_rho2: None,
            shrink: p.shrink,
            step_floor: p.step_floor,
            max_steps: p.max_steps,
            delta: 0.1,
            sigmas: 3.0,
        }
    }
}

impl PolicySpec {
    /// Path policy at Euclidean radius `rho`.
    pub fn path_policy(&self, rho: f64) -> PathPolicy {
        let base_step = self.base_step_rho2.map_or(self.base_step, |s| s * rho * rho);
        PathPolicy {
            base_step,
            shrink: self.shrink,
            step_floor: self.step_floor.min(base_step),
            max_steps: self.max_steps,
            seed: self.seed,
            antithetic: self.antithetic,
            n_paths: self.n_paths,
            batches: self.batches,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(CliError::Config(format!("policy.delta must be positive, got {}", self.delta)));
        }
        if !(self.sigmas > 0.0) {
            return Err(CliError::Config("policy.sigmas must be positive".into()));
        }
        if let Some(s) = self.base_step_rho2 {
            if !(s > 0.0) {
                return Err(CliError::Config("policy.base_step_rho2 must be positive".into()));
            }
        }
        self.path_policy(1.0).validate().map_err(|e| CliError::engine("policy", e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: String,
    /// Emit SVG plots next to the tables.
    pub plots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: "nevlab-out".into(), plots: true }
    }
}

/// A divisor component, written as a form or as `{ form, mult }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DivisorEntry {
    Form(String),
    Weighted { form: String, mult: u32 },
}

impl DivisorEntry {
    fn parts(&self) -> (&str, u32) {
        match self {
            Self::Form(f) => (f, 1),
            Self::Weighted { form, mult } => (form, *mult),
        }
    }
}

/// `[fmt]`: first-main-theorem grid for a curve and divisor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FmtSpec {
    pub curve: String,
    pub divisor: Vec<DivisorEntry>,
    #[serde(default)]
    pub norm: WeilNorm,
    /// Bound on the oscillation of `T − m − N` over the grid.
    #[serde(default = "fmt_tolerance")]
    pub tolerance: f64,
}

fn fmt_tolerance() -> f64 {
    0.1
}

/// `[ldl]`: logarithmic derivative lemma for a meromorphic function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdlSpec {
    pub function: String,
    #[serde(default = "one_usize")]
    pub k: usize,
    /// Coefficient `a(z)` of the vector field `a(z) d/dz`.
    #[serde(default = "field_one")]
    pub field: String,
    /// Also trace `T(r, 𝔛^kψ) ≤ 2^k T(r,ψ) + …`.
    #[serde(default)]
    pub derivative_growth: bool,
}

fn one_usize() -> usize {
    1
}

fn field_one() -> String {
    "1".into()
}

/// `[calculus]`: calculus lemma for a non-negative kernel.
///
/// Kernels are written as a non-negative number, `|g|^2` for a holomorphic
/// expression `g`, or `fs:[f_0 : … : f_n]` for a Fubini–Study density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalculusSpec {
    pub kernel: String,
    /// Bound on the unflagged `ratio` column.
    #[serde(default = "one")]
    pub ratio_bound: f64,
}

/// `[cartan]`: Cartan-type bound for hyperplanes in general position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartanSpec {
    pub curve: String,
    pub hyperplanes: Vec<String>,
    #[serde(default = "max_norm")]
    pub norm: WeilNorm,
    /// Per-hyperplane defects `m/T` at the last radius and their sum.
    #[serde(default = "yes")]
    pub defects: bool,
    /// Allowance on `Σδ ≤ n + 1`.
    #[serde(default = "defect_tolerance")]
    pub defect_tolerance: f64,
}

fn max_norm() -> WeilNorm {
    WeilNorm::Max
}

fn yes() -> bool {
    true
}

fn defect_tolerance() -> f64 {
    0.05
}

/// `[smt]`: proximity bound `m ≤ (bound + ε)·T` for a general divisor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmtSpec {
    pub curve: String,
    pub divisor: Vec<DivisorEntry>,
    #[serde(default)]
    pub norm: WeilNorm,
    #[serde(default = "one_u32")]
    pub d_l: u32,
    /// Exact bound such as "2" or "5/2"; computed from bundled candidates
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<String>,
    #[serde(default = "two_u32")]
    pub k_max: u32,
    /// Degree of the Veronese map for the nondegeneracy check; defaults to
    /// `k·d_L` of the best bundled triple, or 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veronese_degree: Option<u32>,
}

fn one_u32() -> u32 {
    1
}

fn two_u32() -> u32 {
    2
}

/// One explicit `(k, V, μ)` candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub label: String,
    pub k: u32,
    pub space: Vec<String>,
    pub mu: String,
    #[serde(default)]
    pub bases: Vec<BasisSpec>,
    /// Expected verification outcome; a mismatch is an assertion failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_pass: Option<bool>,
}

/// Basis adapted to a stratum, named by 0-based divisor component indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub stratum: Vec<usize>,
    pub basis: Vec<String>,
}

/// `[nev]`: certified upper bounds for the Nevanlinna constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NevSpec {
    pub n: usize,
    pub divisor: Vec<DivisorEntry>,
    #[serde(default = "one_u32")]
    pub d_l: u32,
    #[serde(default = "yes")]
    pub bundled: bool,
    #[serde(default = "two_u32")]
    pub k_max: u32,
    #[serde(default)]
    pub candidates: Vec<CandidateSpec>,
    /// Assert the certified bound is at most this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_at_most: Option<String>,
}

/// `[mc_validate]`: Monte Carlo against quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McValidateSpec {
    /// Kernels in the syntax of `[calculus]`.
    pub functionals: Vec<String>,
    /// Geodesic radii; the grid is used when empty.
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Relative tolerance of `E[τ_r] = r²/2` on flat surfaces.
    #[serde(default = "exit_tolerance")]
    pub exit_tolerance: f64,
}

fn exit_tolerance() -> f64 {
    0.01
}

/// `[surface_validate]`: geometry checks on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceValidateSpec {
    pub roundtrip_tol: f64,
    pub jacobi_tol: f64,
    /// Inner radius η of the Green lower-bound check.
    pub eta: f64,
    pub samples: usize,
}

impl Default for SurfaceValidateSpec {
    fn default() -> Self {
        Self { roundtrip_tol: 1e-10, jacobi_tol: 1e-8, eta: 1.0, samples: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub surface: SurfaceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub quadrature: QuadSettings,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmt: Option<FmtSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldl: Option<LdlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calculus: Option<CalculusSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cartan: Option<CartanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smt: Option<SmtSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nev: Option<NevSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_validate: Option<McValidateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_validate: Option<SurfaceValidateSpec>,
}

/// A non-negative kernel on the disc.
#[derive(Clone, Debug)]
pub enum Kernel {
    Constant(f64),
    ModulusSquared(HoloExpr),
    FsDensity(ProjectiveCurve),
}

impl Kernel {
    pub fn parse(key: &str, src: &str) -> Result<Self> {
        let s = src.trim();
        if let Some(curve) = s.strip_prefix("fs:") {
            return Ok(Self::FsDensity(expr(key, curve, parse_curve)?));
        }
        if let Some(inner) = s.strip_prefix('|').and_then(|x| x.strip_suffix("|^2")) {
            return Ok(Self::ModulusSquared(expr(key, inner, parse_holo)?));
        }
        match s.parse::<f64>() {
            Ok(c) if c >= 0.0 && c.is_finite() => Ok(Self::Constant(c)),
            _ => Err(CliError::Config(format!(
                "{key}: kernel {src:?} is not a non-negative number, |g|^2 or fs:[…]"
            ))),
        }
    }

    pub fn eval(&self, z: num_complex::Complex64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::ModulusSquared(g) => g.eval(z).norm_sqr(),
            Self::FsDensity(c) => c.fs_density(z).unwrap_or(f64::NAN),
        }
    }
}

/// Parsed engine inputs of one experiment.
pub enum Task {
    Fmt { curve: ProjectiveCurve, spec: WeilSpec, tolerance: f64 },
    Ldl { psi: MeromorphicFn, field: VectorField, k: usize, derivative_growth: bool },
    Calculus { kernel: Kernel, ratio_bound: f64 },
    Cartan { curve: ProjectiveCurve, hyperplanes: Vec<HomogeneousPoly>, norm: WeilNorm, defects: bool, defect_tolerance: f64 },
    Smt { curve: ProjectiveCurve, spec: WeilSpec, d_l: u32, bound: Option<String>, k_max: u32, veronese_degree: Option<u32> },
    Nev { divisor: DivisorSum, d_l: u32, bundled: bool, k_max: u32, candidates: Vec<ParsedCandidate>, expect_at_most: Option<String> },
    McValidate { kernels: Vec<(String, Kernel)>, radii: Vec<f64>, exit_tolerance: f64 },
    SurfaceValidate(SurfaceValidateSpec),
}

pub struct ParsedCandidate {
    pub triple: nevlab::nevconst::NevTriple,
    pub expect_pass: Option<bool>,
}

/// A config with every expression parsed and every engine object built.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub surface: SurfaceModel,
    pub grid: Option<RGrid>,
    pub task: Task,
    pub out_dir: PathBuf,
}

fn expr<T>(key: &str, src: &str, f: impl Fn(&str) -> std::result::Result<T, NevError>) -> Result<T> {
    f(src).map_err(|e| match e {
        NevError::Parse { pos, msg } => CliError::Expression { key: key.into(), src: src.into(), pos, msg },
        e => CliError::engine(key, e),
    })
}

fn divisor(key: &str, entries: &[DivisorEntry], n: usize) -> Result<DivisorSum> {
    let comps = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (form, mult) = e.parts();
            Ok((expr(&format!("{key}[{i}]"), form, |s| parse_form(s, n))?, mult))
        })
        .collect::<Result<Vec<_>>>()?;
    DivisorSum::new(comps).map_err(|e| CliError::engine(key, e))
}

fn forms(key: &str, srcs: &[String], n: usize) -> Result<Vec<HomogeneousPoly>> {
    srcs.iter()
        .enumerate()
        .map(|(i, s)| expr(&format!("{key}[{i}]"), s, |x| parse_form(x, n)))
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    fn present_sections(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let checks: [(&'static str, bool); 8] = [
            ("fmt", self.fmt.is_some()),
            ("ldl", self.ldl.is_some()),
            ("calculus", self.calculus.is_some()),
            ("cartan", self.cartan.is_some()),
            ("smt", self.smt.is_some()),
            ("nev", self.nev.is_some()),
            ("mc_validate", self.mc_validate.is_some()),
            ("surface_validate", self.surface_validate.is_some()),
        ];
        for (name, present) in checks {
            if present {
                out.push(name);
            }
        }
        out
    }

    fn grid(&self, quad: &QuadSettings) -> Result<RGrid> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("experiment {} needs a [grid] section", self.experiment.name())))?;
        let grid = match g.spacing {
            Spacing::Linear => RGrid::linear(g.min, g.max, g.count, quad.clone()),
            Spacing::Log => RGrid::log_spaced(g.min, g.max, g.count, quad.clone()),
        };
        grid.map_err(|e| CliError::engine("grid", e))
    }

    /// Validates the whole config and builds the engine inputs. `base` is the
    /// directory relative output paths are resolved against.
    pub fn resolve(self, base: &Path) -> Result<Resolved> {
        let section = self.experiment.section();
        for other in self.present_sections() {
            if other != section {
                return Err(CliError::Config(format!(
                    "section [{other}] does not belong to experiment {}",
                    self.experiment.name()
                )));
            }
        }
        self.quadrature.validate().map_err(|e| CliError::engine("quadrature", e))?;
        self.policy.validate()?;
        let surface = self.surface.build()?;
        let missing = || CliError::Config(format!("experiment {} needs a [{section}] section", self.experiment.name()));
        let needs_grid = !matches!(self.experiment, ExperimentKind::Nev | ExperimentKind::McValidate);
        let grid = if needs_grid || self.grid.is_some() {
            let g = self.grid(&self.quadrature)?;
            g.check_reachable(&surface).map_err(|e| CliError::engine("grid", e))?;
            Some(g)
        } else {
            None
        };
        let task = match self.experiment {
            ExperimentKind::Fmt => {
                let s = self.fmt.as_ref().ok_or_else(missing)?;
                let curve = expr("fmt.curve", &s.curve, parse_curve)?;
                let d = divisor("fmt.divisor", &s.divisor, curve.n())?;
                if !(s.tolerance > 0.0) {
                    return Err(CliError::Config("fmt.tolerance must be positive".into()));
                }
                Task::Fmt { curve, spec: WeilSpec::new(d, s.norm), tolerance: s.tolerance }
            }
            ExperimentKind::Ldl => {
                let s = self.ldl.as_ref().ok_or_else(missing)?;
                let psi = expr("ldl.function", &s.function, parse_meromorphic)?;
                let a = expr("ldl.field", &s.field, parse_holo)?;
                let field = VectorField::new(a, surface.profile.domain_radius()).map_err(|e| CliError::engine("ldl.field", e))?;
                if s.k == 0 {
                    return Err(CliError::Config("ldl.k must be at least 1".into()));
                }
                Task::Ldl { psi, field, k: s.k, derivative_growth: s.derivative_growth }
            }
            ExperimentKind::Calculus => {
                let s = self.calculus.as_ref().ok_or_else(missing)?;
                Task::Calculus { kernel: Kernel::parse("calculus.kernel", &s.kernel)?, ratio_bound: s.ratio_bound }
            }
            ExperimentKind::Cartan => {
                let s = self.cartan.as_ref().ok_or_else(missing)?;
                let curve = expr("cartan.curve", &s.curve, parse_curve)?;
                let hyperplanes = forms("cartan.hyperplanes", &s.hyperplanes, curve.n())?;
                if let Some((i, _)) = hyperplanes.iter().enumerate().find(|(_, h)| !h.is_linear()) {
                    return Err(CliError::Config(format!("cartan.hyperplanes[{i}] is not linear")));
                }
                Task::Cartan {
                    curve,
                    hyperplanes,
                    norm: s.norm,
                    defects: s.defects,
                    defect_tolerance: s.defect_tolerance,
                }
            }
            ExperimentKind::Smt => {
                let s = self.smt.as_ref().ok_or_else(missing)?;
                let curve = expr("smt.curve", &s.curve, parse_curve)?;
                let d = divisor("smt.divisor", &s.divisor, curve.n())?;
                if let Some(b) = &s.bound {
                    expr("smt.bound", b, parse_rational)?;
                }
                Task::Smt {
                    curve,
                    spec: WeilSpec::new(d, s.norm),
                    d_l: s.d_l,
                    bound: s.bound.clone(),
                    k_max: s.k_max,
                    veronese_degree: s.veronese_degree,
                }
            }
            ExperimentKind::Nev => {
                let s = self.nev.as_ref().ok_or_else(missing)?;
                let d = divisor("nev.divisor", &s.divisor, s.n)?;
                let candidates = s
                    .candidates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let key = format!("nev.candidates[{i}]");
                        let space = forms(&format!("{key}.space"), &c.space, s.n)?;
                        let mu = expr(&format!("{key}.mu"), &c.mu, parse_rational)?;
                        let mut bases = std::collections::BTreeMap::new();
                        for (j, b) in c.bases.iter().enumerate() {
                            let mut members = b.stratum.clone();
                            members.sort_unstable();
                            if members.iter().any(|&m| m >= d.components().len()) {
                                return Err(CliError::Config(format!("{key}.bases[{j}]: stratum index out of range")));
                            }
                            bases.insert(members, forms(&format!("{key}.bases[{j}].basis"), &b.basis, s.n)?);
                        }
                        Ok(ParsedCandidate {
                            triple: nevlab::nevconst::NevTriple {
                                label: c.label.clone(),
                                k: c.k,
                                d_l: s.d_l,
                                space,
                                bases,
                                mu,
                            },
                            expect_pass: c.expect_pass,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if let Some(b) = &s.expect_at_most {
                    expr("nev.expect_at_most", b, parse_rational)?;
                }
                if !s.bundled && candidates.is_empty() {
                    return Err(CliError::Config("nev: no candidates and bundled = false".into()));
                }
                Task::Nev {
                    divisor: d,
                    d_l: s.d_l,
                    bundled: s.bundled,
                    k_max: s.k_max,
                    candidates,
                    expect_at_most: s.expect_at_most.clone(),
                }
            }
            ExperimentKind::McValidate => {
                let s = self.mc_validate.as_ref().ok_or_else(missing)?;
                if s.functionals.is_empty() {
                    return Err(CliError::Config("mc_validate.functionals is empty".into()));
                }
                let kernels = s
                    .functionals
                    .iter()
                    .enumerate()
                    .map(|(i, f)| Ok((f.clone(), Kernel::parse(&format!("mc_validate.functionals[{i}]"), f)?)))
                    .collect::<Result<Vec<_>>>()?;
                let radii = if s.radii.is_empty() {
                    grid.as_ref()
                        .map(|g| g.radii().to_vec())
                        .ok_or_else(|| CliError::Config("mc_validate needs radii or a [grid] section".into()))?
                } else {
                    s.radii.clone()
                };
                for &r in &radii {
                    surface.euclidean_radius(r).map_err(|e| CliError::engine("mc_validate.radii", e))?;
                }
                Task::McValidate { kernels, radii, exit_tolerance: s.exit_tolerance }
            }
            ExperimentKind::SurfaceValidate => Task::SurfaceValidate(self.surface_validate.clone().unwrap_or_default()),
        };
        if self.engine != Engine::Quadrature
            && !matches!(self.experiment, ExperimentKind::Fmt | ExperimentKind::Calculus | ExperimentKind::McValidate)
        {
            return Err(CliError::Config(format!(
                "engine {:?} is not available for experiment {}",
                self.engine,
                self.experiment.name()
            )));
        }
        let out_dir = base.join(&self.output.dir);
        Ok(Resolved { config: self, surface, grid, task, out_dir })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> &'static Path {
        Path::new(".")
    }

    #[test]
    fn minimal_fmt_config_resolves() {
        let cfg = ExperimentConfig::from_toml(
            r#"
experiment = "fmt"
[grid]
min = 2
max = 50
count = 5
[fmt]
curve = "[1 : exp(z)]"
divisor = ["w_1", { form = "w_0", mult = 2 }]
"#,
        )
        .unwrap();
        let r = cfg.resolve(base()).unwrap();
        match r.task {
            Task::Fmt { spec, .. } => assert_eq!(spec.divisor.degree(), 3),
            _ => panic!("wrong task"),
        }
        assert_eq!(r.grid.unwrap().radii().len(), 5);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let e = ExperimentConfig::from_toml("experiment = \"fmt\"\ncolour = 3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("colour") && msg.contains("line 2"), "{msg}");
        let e = ExperimentConfig::from_toml("experiment = \"fmt\"\n[surface]\nkind = \"poincare\"\nb = 1\n").unwrap_err();
        assert!(e.to_string().contains('b'));
    }

    #[test]
    fn expression_errors_carry_positions() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"ldl\"\n[grid]\nmin = 2\nmax = 5\ncount = 3\n[ldl]\nfunction = \"exp(\"\n",
        )
        .unwrap();
        match cfg.resolve(base()) {
            Err(CliError::Expression { key, pos, .. }) => {
                assert_eq!(key, "ldl.function");
                assert_eq!(pos, 4);
            }
            Err(e) => panic!("unexpected {e}"),
            Ok(_) => panic!("accepted"),
        }
    }

    #[test]
    fn stray_sections_and_engines_are_rejected() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"nev\"\n[nev]\nn = 1\ndivisor = [\"w_0\"]\n[fmt]\ncurve = \"[1 : z]\"\ndivisor = [\"w_0\"]\n",
        )
        .unwrap();
        assert!(cfg.resolve(base()).err().expect("rejected").to_string().contains("[fmt]"));
        let cfg = ExperimentConfig::from_toml("experiment = \"nev\"\nengine = \"mc\"\n[nev]\nn = 1\ndivisor = [\"w_0\"]\n").unwrap();
        assert!(cfg.resolve(base()).is_err());
    }

    #[test]
    fn kernels_parse() {
        let z = num_complex::Complex64::new(0.5, 0.0);
        assert_eq!(Kernel::parse("k", "1").unwrap().eval(z), 1.0);
        assert!((Kernel::parse("k", "|z|^2").unwrap().eval(z) - 0.25).abs() < 1e-15);
        assert!(Kernel::parse("k", "fs:[1 : exp(z)]").unwrap().eval(z) > 0.0);
        assert!(Kernel::parse("k", "-1").is_err());
        assert!(matches!(Kernel::parse("k", "|exp(|^2"), Err(CliError::Expression { .. })));
    }

    #[test]
    fn custom_surface_from_table() {
        let table: Vec<(f64, f64)> = (0..=400)
            .map(|i| {
                let r = i as f64 / 400.0;
                (r, (r * r).exp())
            })
            .collect();
        let s = SurfaceSpec::Custom { table, domain_radius: None }.build().unwrap();
        assert!((s.density(0.5).unwrap() - 0.25f64.exp()).abs() < 1e-6);
        assert_eq!(s.profile.domain_radius(), Some(1.0));
    }

    #[test]
    fn step_scales_with_radius() {
        let p = PolicySpec { base_step_rho2: Some(0.005), ..PolicySpec::default() };
        assert!((p.path_policy(2.0).base_step - 0.02).abs() < 1e-15);
        assert_eq!(PolicySpec::default().path_policy(2.0).base_step, 1e-3);
    }
}
