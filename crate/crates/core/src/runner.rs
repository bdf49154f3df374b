//! Experiment runner: TOML configuration, grid expansion, parallel
//! execution and report files.
//!
//! Output files (all floats with 17 significant digits):
//!
//! * `report.csv`: one row per inequality check,
//!   `tag,config_hash,master_seed,configuration,lhs,lhs_stderr,rhs,rhs_stderr,margin,band,verdict,constants`
//! * `diagnostics.csv`: scalar diagnostics (coupling, local time, generator,
//!   sharpness), `tag,config_hash,master_seed,configuration,quantity,parameter,estimate,stderr,reference`
//! * `plotdata/NN-tag.tsv`: two-column series per configured check
//! * `summary.txt`: verdict counts and the violated rows

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{self, DomainSpec, ReferenceFunction, ReferenceShape};
use crate::coupling;
use crate::diffusion;
use crate::error::{Error, Result};
use crate::estimators::{self, Sampler};
use crate::functions::TestFunction;
use crate::geometry::{ModelSpace, Point};
use crate::kernels;
use crate::verify::{self, HarnackCase, InequalityReport, Method, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

pub const REPORT_HEADER: [&str; 12] = [
    "tag",
    "config_hash",
    "master_seed",
    "configuration",
    "lhs",
    "lhs_stderr",
    "rhs",
    "rhs_stderr",
    "margin",
    "band",
    "verdict",
    "constants",
];

pub const DIAGNOSTICS_HEADER: [&str; 9] = [
    "tag",
    "config_hash",
    "master_seed",
    "configuration",
    "quantity",
    "parameter",
    "estimate",
    "stderr",
    "reference",
];

/// Checker tags accepted in `[[checks]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckTag {
    LogHarnack,
    LogHarnackLocal,
    Gradient,
    Harnack,
    KernelLower,
    Entropy,
    EntropyCost,
    CouplingDiagnostics,
    LocalTime,
    Generator,
    Sharpness,
    ExplosionCorrection,
}

impl CheckTag {
    pub const ALL: [CheckTag; 12] = [
        CheckTag::LogHarnack,
        CheckTag::LogHarnackLocal,
        CheckTag::Gradient,
        CheckTag::Harnack,
        CheckTag::KernelLower,
        CheckTag::Entropy,
        CheckTag::EntropyCost,
        CheckTag::CouplingDiagnostics,
        CheckTag::LocalTime,
        CheckTag::Generator,
        CheckTag::Sharpness,
        CheckTag::ExplosionCorrection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckTag::LogHarnack => "log-harnack",
            CheckTag::LogHarnackLocal => "log-harnack-local",
            CheckTag::Gradient => "gradient",
            CheckTag::Harnack => "harnack",
            CheckTag::KernelLower => "kernel-lower",
            CheckTag::Entropy => "entropy",
            CheckTag::EntropyCost => "entropy-cost",
            CheckTag::CouplingDiagnostics => "coupling-diagnostics",
            CheckTag::LocalTime => "local-time",
            CheckTag::Generator => "generator",
            CheckTag::Sharpness => "sharpness",
            CheckTag::ExplosionCorrection => "explosion-correction",
        }
    }

    /// Library operation the tag runs.
    pub fn operation(self) -> &'static str {
        match self {
            CheckTag::LogHarnack => "verify::check_log_harnack",
            CheckTag::LogHarnackLocal => "verify::check_log_harnack_local",
            CheckTag::Gradient => "verify::check_gradient",
            CheckTag::Harnack => "verify::check_harnack",
            CheckTag::KernelLower => "verify::check_kernel_lower_bound",
            CheckTag::Entropy => "verify::check_entropy_bound",
            CheckTag::EntropyCost => "verify::check_entropy_cost",
            CheckTag::CouplingDiagnostics => "coupling::run_coupling",
            CheckTag::LocalTime => "diffusion::local_time_profile",
            CheckTag::Generator => "estimators::generator_check",
            CheckTag::Sharpness => "verify::sharpness_experiment",
            CheckTag::ExplosionCorrection => "verify::explosion_correction",
        }
    }

    /// Grid keys the tag reads (`method`, `N`, `h` where relevant).
    pub fn parameters(self) -> &'static str {
        match self {
            CheckTag::LogHarnack | CheckTag::Harnack => "x y T f [domain_radius] [method N h]",
            CheckTag::LogHarnackLocal => "x y T f [method N h]",
            CheckTag::Gradient => "x T f [domain_radius] [method N h]",
            CheckTag::KernelLower => "x y T",
            CheckTag::Entropy => "y T",
            CheckTag::EntropyCost => "f T",
            CheckTag::CouplingDiagnostics => "x y T [domain_radius] N h",
            CheckTag::LocalTime => "x T(grid) [r] N h",
            CheckTag::Generator => "x f [s_grid] N h",
            CheckTag::Sharpness => "x f r [s_grid] N",
            CheckTag::ExplosionCorrection => "x T N h",
        }
    }
}

/// Stable machine-readable catalogue, one tab-separated line per tag.
pub fn list_checks() -> String {
    let mut out = String::from("tag\toperation\tparameters\n");
    for t in CheckTag::ALL {
        writeln!(out, "{}\t{}\t{}", t.as_str(), t.operation(), t.parameters()).unwrap();
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Exact,
    #[default]
    MonteCarlo,
}

fn default_n() -> usize {
    100_000
}

fn default_h() -> f64 {
    1e-2
}

/// One `[[checks]]` table. Every list is a grid axis; the grid is their
/// Cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub tag: CheckTag,
    #[serde(default)]
    pub x: Vec<Point>,
    #[serde(default)]
    pub y: Vec<Point>,
    #[serde(default, rename = "T")]
    pub horizon: Vec<f64>,
    #[serde(default)]
    pub f: Vec<TestFunction>,
    /// Radius of `D = B(y, R)` carrying the cosine reference function.
    #[serde(default)]
    pub domain_radius: Vec<f64>,
    #[serde(default)]
    pub method: MethodKind,
    #[serde(default = "default_n", rename = "N")]
    pub n_paths: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Sharpness: multiples `r` in `v = r ∇log f`. Local time: exit radius.
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub s_grid: Option<Vec<f64>>,
}

/// A whole experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub model: ModelSpace,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            location: e.span().map_or("config".into(), |s| format!("line {}", line_of(text, s.start))),
            message: e.message().to_string(),
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config {
                location: "schema_version".into(),
                message: format!("expected {SCHEMA_VERSION}, found {}", cfg.schema_version),
            });
        }
        cfg.model.validate().map_err(|e| Error::Config {
            location: "model".into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Expands every check into grid points and validates their
    /// preconditions without running them.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        let mut out = Vec::new();
        for (i, spec) in self.checks.iter().enumerate() {
            for job in expand(&self.model, i, spec, self.master_seed)? {
                job.validate(&self.model)?;
                out.push(job);
            }
        }
        Ok(out)
    }
}

fn field_error(check: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        location: format!("checks[{check}].{field}"),
        message: message.into(),
    }
}

fn require<'a, T>(check: usize, field: &str, v: &'a [T]) -> Result<&'a [T]> {
    if v.is_empty() {
        Err(field_error(check, field, "required for this check"))
    } else {
        Ok(v)
    }
}

fn positive(check: usize, field: &str, vals: &[f64]) -> Result<()> {
    match vals.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(field_error(check, field, format!("must be positive (found {v})"))),
        None => Ok(()),
    }
}

/// One grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub check: usize,
    pub tag: CheckTag,
    pub master_seed: u64,
    pub kind: JobKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JobKind {
    Harnack { case: HarnackCase, method: Method },
    Kernel { x: Point, y: Point, t: f64 },
    Entropy { y: Point, t: f64 },
    EntropyCost { f: TestFunction, t: f64 },
    Coupling { x: Point, y: Point, horizon: f64, radius: f64, sampler: Sampler },
    LocalTime { x: Point, t_grid: Vec<f64>, r: f64, sampler: Sampler },
    Generator { x: Point, g: TestFunction, s_grid: Vec<f64>, sampler: Sampler },
    Sharpness { x: Point, f: TestFunction, r: f64, s_grid: Vec<f64>, n_paths: usize },
    Explosion { x: Point, horizon: f64, sampler: Sampler },
}

fn point_in(m: &ModelSpace, check: usize, field: &str, points: &[Point]) -> Result<()> {
    for p in points {
        if p.len() != m.chart_len() {
            return Err(field_error(check, field, format!("{:?} needs {} coordinates", p.coords(), m.chart_len())));
        }
        if !m.contains(p) {
            return Err(field_error(check, field, format!("{:?} lies outside {}", p.coords(), m.name())));
        }
    }
    Ok(())
}

fn expand(m: &ModelSpace, i: usize, spec: &CheckSpec, seed: u64) -> Result<Vec<Job>> {
    use CheckTag as T;
    let sampler = Sampler::new(spec.n_paths, spec.h, seed);
    let needs_sampler = !matches!(spec.tag, T::KernelLower | T::Entropy | T::EntropyCost | T::Sharpness) && spec.method == MethodKind::MonteCarlo;
    if needs_sampler {
        sampler.validate().map_err(|e| field_error(i, "N/h", e.to_string()))?;
    }
    positive(i, "T", &spec.horizon)?;
    positive(i, "domain_radius", &spec.domain_radius)?;
    point_in(m, i, "x", &spec.x)?;
    point_in(m, i, "y", &spec.y)?;
    for f in &spec.f {
        f.validate(m).map_err(|e| field_error(i, "f", e.to_string()))?;
    }
    let method = match spec.method {
        MethodKind::Exact => Method::Exact,
        MethodKind::MonteCarlo => Method::MonteCarlo(sampler),
    };
    let radii = if spec.domain_radius.is_empty() { vec![1.0] } else { spec.domain_radius.clone() };
    let mut jobs = Vec::new();
    let mut push = |kind: JobKind| {
        jobs.push(Job {
            check: i,
            tag: spec.tag,
            master_seed: seed,
            kind,
        })
    };
    match spec.tag {
        T::LogHarnack | T::LogHarnackLocal | T::Gradient | T::Harnack => {
            let xs = require(i, "x", &spec.x)?;
            let ts = require(i, "T", &spec.horizon)?;
            let fs = require(i, "f", &spec.f)?;
            let gradient = spec.tag == T::Gradient;
            let local = spec.tag == T::LogHarnackLocal;
            if local && !spec.domain_radius.is_empty() {
                return Err(field_error(i, "domain_radius", "the local form has no domain input"));
            }
            let pairs: Vec<(Point, Point)> = if gradient {
                xs.iter().map(|x| (*x, *x)).collect()
            } else {
                let ys = require(i, "y", &spec.y)?;
                xs.iter().flat_map(|x| ys.iter().map(move |y| (*x, *y))).collect()
            };
            for (x, y) in pairs {
                for &t in ts {
                    for f in fs {
                        for &r in &radii {
                            let mut case = HarnackCase::new(x, y, t, f.clone());
                            if !local {
                                let center = if gradient { x } else { y };
                                case = case.with_phi(ReferenceFunction::new(ReferenceShape::Cosine, DomainSpec::new(center, r)));
                            }
                            push(JobKind::Harnack { case, method });
                        }
                    }
                }
            }
        }
        T::KernelLower => {
            for x in require(i, "x", &spec.x)? {
                for y in require(i, "y", &spec.y)? {
                    for &t in require(i, "T", &spec.horizon)? {
                        push(JobKind::Kernel { x: *x, y: *y, t });
                    }
                }
            }
        }
        T::Entropy => {
            for y in require(i, "y", &spec.y)? {
                for &t in require(i, "T", &spec.horizon)? {
                    push(JobKind::Entropy { y: *y, t });
                }
            }
        }
        T::EntropyCost => {
            for f in require(i, "f", &spec.f)? {
                for &t in require(i, "T", &spec.horizon)? {
                    push(JobKind::EntropyCost { f: f.clone(), t });
                }
            }
        }
        T::CouplingDiagnostics => {
            for x in require(i, "x", &spec.x)? {
                for y in require(i, "y", &spec.y)? {
                    for &horizon in require(i, "T", &spec.horizon)? {
                        for &radius in &radii {
                            push(JobKind::Coupling {
                                x: *x,
                                y: *y,
                                horizon,
                                radius,
                                sampler,
                            });
                        }
                    }
                }
            }
        }
        T::LocalTime => {
            let t_grid = require(i, "T", &spec.horizon)?.to_vec();
            if t_grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(field_error(i, "T", "local-time grid must be increasing"));
            }
            positive(i, "r", &spec.r)?;
            let rs = if spec.r.is_empty() { vec![1.0] } else { spec.r.clone() };
            for x in require(i, "x", &spec.x)? {
                for &r in &rs {
                    push(JobKind::LocalTime {
                        x: *x,
                        t_grid: t_grid.clone(),
                        r,
                        sampler,
                    });
                }
            }
        }
        T::Generator => {
            let s_grid = spec.s_grid.clone().unwrap_or_else(estimators::default_s_grid);
            positive(i, "s_grid", &s_grid)?;
            for x in require(i, "x", &spec.x)? {
                for g in require(i, "f", &spec.f)? {
                    push(JobKind::Generator {
                        x: *x,
                        g: g.clone(),
                        s_grid: s_grid.clone(),
                        sampler,
                    });
                }
            }
        }
        T::Sharpness => {
            let s_grid = spec.s_grid.clone().unwrap_or_else(verify::sharpness_s_grid);
            positive(i, "s_grid", &s_grid)?;
            if !matches!(m, ModelSpace::Euclidean { drift, .. } if drift.is_empty()) {
                return Err(field_error(i, "tag", "sharpness runs on driftless euclidean space"));
            }
            for x in require(i, "x", &spec.x)? {
                for f in require(i, "f", &spec.f)? {
                    for &r in require(i, "r", &spec.r)? {
                        push(JobKind::Sharpness {
                            x: *x,
                            f: f.clone(),
                            r,
                            s_grid: s_grid.clone(),
                            n_paths: spec.n_paths,
                        });
                    }
                }
            }
        }
        T::ExplosionCorrection => {
            for x in require(i, "x", &spec.x)? {
                for &horizon in require(i, "T", &spec.horizon)? {
                    push(JobKind::Explosion { x: *x, horizon, sampler });
                }
            }
        }
    }
    Ok(jobs)
}

impl Job {
    fn precondition(&self, message: impl std::fmt::Display) -> Error {
        Error::Precondition {
            point: format!("checks[{}] {}", self.check, self.describe()),
            message: message.to_string(),
        }
    }

    /// Short description of the grid point.
    pub fn describe(&self) -> String {
        match &self.kind {
            JobKind::Harnack { case, .. } => format!("x={:?} y={:?} T={} f={}", case.x.coords(), case.y.coords(), case.horizon, case.f.name()),
            JobKind::Kernel { x, y, t } => format!("x={:?} y={:?} t={t}", x.coords(), y.coords()),
            JobKind::Entropy { y, t } => format!("y={:?} t={t}", y.coords()),
            JobKind::EntropyCost { f, t } => format!("f={} t={t}", f.name()),
            JobKind::Coupling { x, y, horizon, radius, .. } => format!("x={:?} y={:?} T={horizon} R={radius}", x.coords(), y.coords()),
            JobKind::LocalTime { x, r, .. } => format!("x={:?} r={r}", x.coords()),
            JobKind::Generator { x, g, .. } => format!("x={:?} g={}", x.coords(), g.name()),
            JobKind::Sharpness { x, f, r, .. } => format!("x={:?} f={} r={r}", x.coords(), f.name()),
            JobKind::Explosion { x, horizon, .. } => format!("x={:?} T={horizon}", x.coords()),
        }
    }

    /// Cheap precondition checks, run for every grid point before any
    /// simulation starts.
    pub fn validate(&self, m: &ModelSpace) -> Result<()> {
        let fail = |msg: &str| Err(self.precondition(msg));
        match &self.kind {
            JobKind::Harnack { case, method } => {
                if *method == Method::Exact && kernels::oracle_semigroup(m, &case.x, case.horizon, &TestFunction::Constant { value: 1.0 }).is_err() {
                    return fail("exact method needs a closed-form transition law");
                }
                match self.tag {
                    CheckTag::LogHarnack | CheckTag::LogHarnackLocal if !case.f.pointwise_positive() => return fail("f must be strictly positive"),
                    CheckTag::Harnack if !case.f.nonnegative() => return fail("f must be nonnegative"),
                    CheckTag::Harnack if !m.is_conservative() => return fail("model is not conservative"),
                    _ => {}
                }
                if let Some(phi) = &case.phi {
                    phi.domain.validate(m).map_err(|e| self.precondition(e))?;
                    let inside = if self.tag == CheckTag::Gradient { &case.x } else { &case.y };
                    if !phi.domain.contains(m, inside) {
                        return fail("base point must lie in D");
                    }
                    if self.tag == CheckTag::Harnack {
                        verify::geodesic_phi4(m, &case.x, &case.y, phi).map_err(|e| self.precondition(e))?;
                    }
                } else if m.injectivity_radius() <= 1.0 + m.distance(&case.x, &case.y) {
                    return fail("injectivity radius must exceed 1 + ρ(x, y)");
                }
                Ok(())
            }
            JobKind::Kernel { .. } | JobKind::Entropy { .. } => {
                if kernels::has_probability_reference(m) || (self.tag == CheckTag::Entropy && matches!(m, ModelSpace::Euclidean { .. })) {
                    Ok(())
                } else {
                    fail("needs a closed-form symmetric kernel")
                }
            }
            JobKind::EntropyCost { f, .. } => {
                if !matches!(m, ModelSpace::OrnsteinUhlenbeck { dim: 1, .. }) {
                    return fail("needs one-dimensional ornstein-uhlenbeck");
                }
                if !f.nonnegative() {
                    return fail("f must be a nonnegative density");
                }
                Ok(())
            }
            JobKind::Coupling { y, radius, .. } => {
                DomainSpec::new(*y, *radius).validate(m).map_err(|e| self.precondition(e))?;
                Ok(())
            }
            JobKind::LocalTime { .. } if !m.has_boundary() => fail("model has no boundary"),
            JobKind::LocalTime { .. } | JobKind::Generator { .. } => Ok(()),
            JobKind::Sharpness { x, f, .. } => {
                if !f.pointwise_positive() {
                    return fail("f must be strictly positive");
                }
                if x.len() != m.dim() {
                    return fail("dimension mismatch");
                }
                Ok(())
            }
            JobKind::Explosion { .. } => Ok(()),
        }
    }

    /// Hex prefix of the SHA-256 of the model, grid point and seed.
    pub fn config_hash(&self, m: &ModelSpace) -> String {
        let mut h = Sha256::new();
        h.update(format!("{m:?}|{:?}|{:?}|{}", self.tag, self.kind, self.master_seed));
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run(&self, m: &ModelSpace) -> Result<JobOutput> {
        let mut out = JobOutput::default();
        let hash = self.config_hash(m);
        let seed = self.master_seed;
        let tag = self.tag.as_str();
        let diag = |out: &mut JobOutput, cfg: &str, quantity: &str, parameter: f64, estimate: f64, stderr: f64, reference: f64| {
            out.diagnostics.push(DiagnosticRow {
                tag: tag.to_string(),
                config_hash: hash.clone(),
                master_seed: seed,
                configuration: cfg.to_string(),
                quantity: quantity.to_string(),
                parameter,
                estimate,
                stderr,
                reference,
            })
        };
        match &self.kind {
            JobKind::Harnack { case, method } => {
                let rep = match self.tag {
                    CheckTag::LogHarnack => verify::check_log_harnack(m, case, method)?,
                    CheckTag::LogHarnackLocal => verify::check_log_harnack_local(m, case, method)?,
                    CheckTag::Gradient => verify::check_gradient(m, case, method)?,
                    _ => verify::check_harnack(m, case, method)?,
                };
                out.plot.push((case.horizon, rep.margin));
                out.reports.push(rep);
            }
            JobKind::Kernel { x, y, t } => {
                let rep = verify::check_kernel_lower_bound(m, x, y, *t)?;
                out.plot.push((*t, rep.margin));
                out.reports.push(rep);
            }
            JobKind::Entropy { y, t } => {
                let rep = verify::check_entropy_bound(m, y, *t)?;
                out.plot.push((*t, rep.margin));
                out.reports.push(rep);
            }
            JobKind::EntropyCost { f, t } => {
                let rep = verify::check_entropy_cost(m, f, *t)?;
                out.plot.push((*t, rep.margin));
                out.reports.push(rep);
            }
            JobKind::Coupling { x, y, horizon, radius, sampler } => {
                let phi = ReferenceFunction::new(ReferenceShape::Cosine, DomainSpec::new(*y, *radius));
                let cfg = coupling::CouplingConfig::new(m, *x, *y, *horizon, phi, sampler.step, sampler.master_seed)?;
                let d = coupling::run_coupling(m, &cfg, sampler.n_paths);
                let desc = format!(
                    "variant={};x={:?};y={:?};T={horizon};D=B(y,{radius});N={};h={}",
                    m.name(),
                    x.coords(),
                    y.coords(),
                    sampler.n_paths,
                    sampler.step
                );
                diag(&mut out, &desc, "mean_r", *horizon, d.mean_r.mean, d.mean_r.stderr, 1.0);
                diag(&mut out, &desc, "entropy", *horizon, d.entropy.mean, d.entropy.stderr, d.entropy_bound);
                diag(&mut out, &desc, "coupled_weighted", *horizon, d.coupled_weighted.mean, d.coupled_weighted.stderr, 1.0);
                diag(&mut out, &desc, "uncoupled_weighted", *horizon, d.uncoupled_weighted.mean, d.uncoupled_weighted.stderr, 0.0);
                diag(&mut out, &desc, "coupled_fraction", *horizon, d.coupled_fraction, 0.0, 1.0);
                diag(&mut out, &desc, "flagged_fraction", *horizon, d.flagged_fraction, 0.0, 0.0);
                diag(&mut out, &desc, "max_rho_excess", *horizon, d.max_rho_excess, 0.0, 0.0);
                diag(&mut out, &desc, "max_envelope_excess", *horizon, d.max_envelope_excess, 0.0, 0.0);
                let constants = bounds::LocalConstants {
                    k_d_rho: Some(cfg.k_d_rho),
                    c_d_phi: Some(cfg.c_d_phi),
                    ..Default::default()
                };
                let rep = InequalityReport::new(
                    "coupling-entropy",
                    desc,
                    d.entropy,
                    crate::stats::MonteCarloEstimate::exact(d.entropy_bound),
                    constants,
                );
                out.plot.push((*horizon, rep.margin));
                out.reports.push(rep);
            }
            JobKind::LocalTime { x, t_grid, r, sampler } => {
                let est = diffusion::local_time_profile(m, x, t_grid, *r, sampler.n_paths, sampler.step, sampler.master_seed)?;
                let desc = format!("variant={};x={:?};r={r};N={};h={}", m.name(), x.coords(), sampler.n_paths, sampler.step);
                for (t, e) in t_grid.iter().zip(&est) {
                    let reference = 2.0 * (t / std::f64::consts::PI).sqrt();
                    diag(&mut out, &desc, "mean_local_time", *t, e.mean, e.stderr, reference);
                    out.plot.push((*t, e.mean));
                }
            }
            JobKind::Generator { x, g, s_grid, sampler } => {
                let rep = estimators::generator_check(m, x, g, s_grid, sampler)?;
                let desc = format!("variant={};x={:?};g={};N={};h={}", m.name(), x.coords(), g.name(), sampler.n_paths, sampler.step);
                for (s, e) in rep.s_grid.iter().zip(&rep.increments) {
                    diag(&mut out, &desc, "increment", *s, e.mean, e.stderr, rep.closed_form * s);
                    out.plot.push((*s, e.mean));
                }
                diag(&mut out, &desc, "slope", 0.0, rep.slope.mean, rep.slope.stderr, rep.closed_form);
            }
            JobKind::Sharpness { x, f, r, s_grid, n_paths } => {
                let rep = verify::sharpness_experiment(x, f, *r, s_grid, *n_paths, seed)?;
                let desc = format!("variant={};x={:?};f={};r={r};N={n_paths}", m.name(), x.coords(), f.name());
                for ((s, e), q) in rep.s_grid.iter().zip(&rep.q).zip(&rep.q_exact) {
                    diag(&mut out, &desc, "q_over_s", *s, e.mean / s, e.stderr / s, q / s);
                    out.plot.push((*s, e.mean / s));
                }
                diag(&mut out, &desc, "fitted_limit", 0.0, rep.fitted_limit.mean, rep.fitted_limit.stderr, rep.limit);
                diag(&mut out, &desc, "c_lower_bound", 0.0, rep.c_lower_bound.mean, rep.c_lower_bound.stderr, rep.c_closed_form);
                diag(&mut out, &desc, "max_relative_error", 0.0, rep.max_relative_error, 0.0, 0.0);
            }
            JobKind::Explosion { x, horizon, sampler } => {
                for rep in verify::explosion_correction(m, x, *horizon, sampler)? {
                    out.plot.push((*horizon, rep.margin));
                    out.reports.push(rep);
                }
            }
        }
        out.hashes = vec![hash.clone(); out.reports.len()];
        Ok(out)
    }
}

/// One row of `diagnostics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub tag: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub configuration: String,
    pub quantity: String,
    pub parameter: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub reference: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct JobOutput {
    pub reports: Vec<InequalityReport>,
    pub hashes: Vec<String>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub plot: Vec<(f64, f64)>,
}

/// Everything a run produced, in grid order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutcome {
    pub master_seed: u64,
    pub jobs: Vec<Job>,
    pub outputs: Vec<JobOutput>,
}

impl RunOutcome {
    pub fn reports(&self) -> impl Iterator<Item = &InequalityReport> {
        self.outputs.iter().flat_map(|o| o.reports.iter())
    }

    pub fn any_violated(&self) -> bool {
        self.reports().any(|r| r.violated())
    }
}

/// Command-line overrides of the configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
    }
}

/// Runs every grid point on a pool of `cfg.workers` threads (default: all
/// cores). Results do not depend on the pool size.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let jobs = cfg.jobs()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        if w == 0 {
            return Err(Error::Config {
                location: "workers".into(),
                message: "must be at least 1".into(),
            });
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Io(e.to_string()))?;
    let outputs: Vec<Result<JobOutput>> = pool.install(|| jobs.par_iter().map(|j| j.run(&cfg.model)).collect());
    let outputs = outputs
        .into_iter()
        .zip(&jobs)
        .map(|(o, j)| o.map_err(|e| j.precondition(e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutcome {
        master_seed: cfg.master_seed,
        jobs,
        outputs,
    })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `report.csv`, `diagnostics.csv`, `plotdata/` and `summary.txt`.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("plotdata"))?;
    let csv_err = |e: csv::Error| Error::Io(e.to_string());

    let mut w = csv::Writer::from_path(dir.join("report.csv")).map_err(csv_err)?;
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for o in &outcome.outputs {
        for (r, hash) in o.reports.iter().zip(&o.hashes) {
            w.write_record([
                r.tag.clone(),
                hash.clone(),
                outcome.master_seed.to_string(),
                r.configuration.clone(),
                num(r.lhs.mean),
                num(r.lhs.stderr),
                num(r.rhs.mean),
                num(r.rhs.stderr),
                num(r.margin),
                num(r.band),
                r.verdict.as_str().to_string(),
                r.constants.describe(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("diagnostics.csv")).map_err(csv_err)?;
    w.write_record(DIAGNOSTICS_HEADER).map_err(csv_err)?;
    for d in outcome.outputs.iter().flat_map(|o| &o.diagnostics) {
        w.write_record([
            d.tag.clone(),
            d.config_hash.clone(),
            d.master_seed.to_string(),
            d.configuration.clone(),
            d.quantity.clone(),
            num(d.parameter),
            num(d.estimate),
            num(d.stderr),
            num(d.reference),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    for (i, spec) in cfg.checks.iter().enumerate() {
        let mut text = String::from("# parameter\tvalue\n");
        for (j, o) in outcome.jobs.iter().zip(&outcome.outputs) {
            if j.check == i {
                for (p, v) in &o.plot {
                    writeln!(text, "{}\t{}", num(*p), num(*v)).unwrap();
                }
            }
        }
        fs::write(dir.join("plotdata").join(format!("{i:02}-{}.tsv", spec.tag.as_str())), text)?;
    }

    fs::write(dir.join("summary.txt"), summary(outcome))?;
    Ok(())
}

/// Human-readable verdict counts per tag and the violated rows.
pub fn summary(outcome: &RunOutcome) -> String {
    let mut tags: Vec<&str> = Vec::new();
    for r in outcome.reports() {
        if !tags.contains(&r.tag.as_str()) {
            tags.push(&r.tag);
        }
    }
    let mut s = format!("master_seed {}\n", outcome.master_seed);
    writeln!(s, "{:<26}{:>8}{:>20}{:>10}", "tag", "holds", "holds-within-band", "violated").unwrap();
    for t in &tags {
        let count = |v: Verdict| outcome.reports().filter(|r| r.tag == *t && r.verdict == v).count();
        writeln!(
            s,
            "{:<26}{:>8}{:>20}{:>10}",
            t,
            count(Verdict::Holds),
            count(Verdict::HoldsWithinBand),
            count(Verdict::Violated)
        )
        .unwrap();
    }
    let diag = outcome.outputs.iter().map(|o| o.diagnostics.len()).sum::<usize>();
    writeln!(s, "diagnostic rows: {diag}").unwrap();
    for r in outcome.reports().filter(|r| r.violated()) {
        writeln!(s, "VIOLATED {} {} margin={:.6e} band={:.6e}", r.tag, r.configuration, r.margin, r.band).unwrap();
    }
    s
}

/// Loads, runs and writes; returns the outcome so callers can set the exit
/// status.
pub fn run(path: &Path, overrides: &Overrides) -> Result<(RunOutcome, PathBuf)> {
    let mut cfg = ExperimentConfig::load(path)?;
    overrides.apply(&mut cfg);
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let outcome = execute(&cfg)?;
    write_outputs(&cfg, &outcome, &dir)?;
    Ok((outcome, dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"
schema_version = 1
master_seed = 5

[model]
variant = "euclidean"
dim = 1

[[checks]]
tag = "log-harnack"
method = "exact"
x = [[0.0]]
y = [[0.3]]
T = [0.5]
f = [{ kind = "exp", rate = [1.0] }]
"#;

    #[test]
    fn catalogue_lists_every_tag_once() {
        let text = list_checks();
        for tag in [
            "log-harnack", "gradient", "harnack", "kernel-lower", "entropy", "entropy-cost", "coupling-diagnostics", "local-time", "generator", "sharpness",
        ] {
            assert_eq!(text.lines().filter(|l| l.split('\t').next() == Some(tag)).count(), 1, "{tag}");
        }
        assert_eq!(text, list_checks());
    }

    #[test]
    fn single_fixture_point() {
        let cfg = ExperimentConfig::parse(FIXTURE).unwrap();
        let out = execute(&cfg).unwrap();
        let reps: Vec<_> = out.reports().collect();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].verdict, Verdict::Holds);
        assert!((reps[0].lhs.mean + 0.2).abs() < 1e-9);
        assert!(!out.any_violated());
    }

    #[test]
    fn empty_checks_write_headers_only() {
        let cfg = ExperimentConfig::parse("schema_version = 1\nmaster_seed = 1\n[model]\nvariant = \"hyperbolic\"\n").unwrap();
        let out = execute(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&cfg, &out, dir.path()).unwrap();
        let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(report.trim_end(), REPORT_HEADER.join(","));
        assert!(!out.any_violated());
    }

    #[test]
    fn negative_horizon_names_the_field() {
        let bad = FIXTURE.replace("T = [0.5]", "T = [-0.5]");
        let cfg = ExperimentConfig::parse(&bad).unwrap();
        match cfg.jobs() {
            Err(Error::Config { location, .. }) => assert_eq!(location, "checks[0].T"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_a_line() {
        let bad = FIXTURE.replace("tag = \"log-harnack\"", "tag = \"log-harnack\"\nbogus = 1");
        match ExperimentConfig::parse(&bad) {
            Err(Error::Config { location, message }) => {
                assert!(location.starts_with("line "), "{location}");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let old = FIXTURE.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(ExperimentConfig::parse(&old), Err(Error::Config { .. })));
    }

    #[test]
    fn preconditions_checked_before_running() {
        let text = FIXTURE
            .replace("variant = \"euclidean\"\ndim = 1", "variant = \"explosive-drift-1d\"")
            .replace("tag = \"log-harnack\"", "tag = \"harnack\"")
            .replace("method = \"exact\"", "N = 1000");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        // paths explode, so the Harnack inequality with power is out of scope
        assert!(matches!(cfg.jobs(), Err(Error::Precondition { .. })));
    }
}
