//! Both sides of each inequality with error bands, and a verdict.
//!
//! Every report is phrased as `lhs ≤ rhs`. Monte Carlo sides carry their
//! standard error; quadrature sides carry their convergence tolerance in
//! the same slot, so a single band rule covers both.

use std::f64::consts::PI;

use serde::Serialize;

use crate::bounds::{self, DomainSpec, LocalConstants, ReferenceFunction};
use crate::error::{Error, Result};
use crate::estimators::{self, Functional, Sampler};
use crate::functions::TestFunction;
use crate::geometry::{linalg, Coords, ModelSpace, Point};
use crate::kernels::{self, ORACLE_TOL};
use crate::stats::{self, MonteCarloEstimate};

/// Number of points at which the minimal geodesic is sampled.
pub const GEODESIC_SAMPLES: usize = 1000;
/// Width of the verdict band in combined standard errors.
pub const BAND_SIGMAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    HoldsWithinBand,
    Violated,
}

impl Verdict {
    pub fn classify(margin: f64, band: f64) -> Self {
        if margin.is_nan() || margin < -band {
            Verdict::Violated
        } else if margin > band || (band == 0.0 && margin >= 0.0) {
            Verdict::Holds
        } else {
            Verdict::HoldsWithinBand
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::HoldsWithinBand => "holds-within-band",
            Verdict::Violated => "violated",
        }
    }
}

/// One evaluated inequality `lhs ≤ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub tag: String,
    pub configuration: String,
    pub lhs: MonteCarloEstimate,
    pub rhs: MonteCarloEstimate,
    pub margin: f64,
    pub band: f64,
    pub verdict: Verdict,
    pub constants: LocalConstants,
}

impl InequalityReport {
    pub fn new(tag: &str, configuration: String, lhs: MonteCarloEstimate, rhs: MonteCarloEstimate, constants: LocalConstants) -> Self {
        let margin = rhs.mean - lhs.mean;
        let band = BAND_SIGMAS * lhs.stderr.hypot(rhs.stderr);
        InequalityReport {
            tag: tag.to_string(),
            configuration,
            lhs,
            rhs,
            margin,
            band,
            verdict: Verdict::classify(margin, band),
            constants,
        }
    }

    pub fn violated(&self) -> bool {
        self.verdict == Verdict::Violated
    }
}

/// How semigroup quantities are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Quadrature against the closed-form transition law.
    Exact,
    MonteCarlo(Sampler),
}

impl Method {
    fn describe(&self) -> String {
        match self {
            Method::Exact => "exact".into(),
            Method::MonteCarlo(s) => format!("mc(N={},h={},seed={})", s.n_paths, s.step, s.master_seed),
        }
    }
}

/// A quadrature value with its tolerance in the error slot.
fn quadrature(value: f64) -> MonteCarloEstimate {
    MonteCarloEstimate {
        stderr: ORACLE_TOL * value.abs().max(1.0),
        ..MonteCarloEstimate::exact(value)
    }
}

fn estimate(mean: f64, stderr: f64, n: usize, seed: u64) -> MonteCarloEstimate {
    MonteCarloEstimate { mean, stderr, n, seed }
}

/// Points, horizon, test function and (optionally) the reference function
/// shared by the Harnack-type checks. Without `phi` the cosine function on
/// `B(y, 1)` is used.
#[derive(Clone, Debug, PartialEq)]
pub struct HarnackCase {
    pub x: Point,
    pub y: Point,
    pub horizon: f64,
    pub f: TestFunction,
    pub phi: Option<ReferenceFunction>,
}

impl HarnackCase {
    pub fn new(x: Point, y: Point, horizon: f64, f: TestFunction) -> Self {
        HarnackCase { x, y, horizon, f, phi: None }
    }

    pub fn with_phi(mut self, phi: ReferenceFunction) -> Self {
        self.phi = Some(phi);
        self
    }

    fn reference(&self, m: &ModelSpace) -> Result<ReferenceFunction> {
        match &self.phi {
            Some(p) => Ok(p.clone()),
            None => bounds::cosine_reference(m, &self.y),
        }
    }

    fn describe(&self, m: &ModelSpace, phi: Option<&ReferenceFunction>, method: &Method) -> String {
        let domain = phi.map_or(String::new(), |p| {
            format!(
                ";D=B({:?},{});phi={:?}*{}",
                p.domain.center.coords(),
                p.domain.radius,
                p.shape,
                p.amplitude
            )
        });
        format!(
            "variant={};x={:?};y={:?};T={}{};f={};method={}",
            m.name(),
            self.x.coords(),
            self.y.coords(),
            self.horizon,
            domain,
            self.f.name(),
            method.describe()
        )
    }

    fn validate(&self, m: &ModelSpace) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("T", "must be positive"));
        }
        self.f.validate(m)?;
        for (name, p) in [("x", &self.x), ("y", &self.y)] {
            if !m.contains(p) {
                return Err(self.precondition(format!("{name} lies outside {}", m.name())));
            }
        }
        Ok(())
    }

    fn precondition(&self, message: impl Into<String>) -> Error {
        Error::Precondition {
            point: format!("x={:?},y={:?},T={}", self.x.coords(), self.y.coords(), self.horizon),
            message: message.into(),
        }
    }
}

/// `P_T log f(y) - log(P_T f(x) + 1 - P_T 1(x))`.
fn log_harnack_lhs(m: &ModelSpace, case: &HarnackCase, method: &Method) -> Result<MonteCarloEstimate> {
    if !case.f.pointwise_positive() {
        return Err(case.precondition("log-Harnack needs a strictly positive f"));
    }
    let f = &case.f;
    match method {
        Method::Exact => {
            let log_y = kernels::oracle_expectation(m, &case.y, case.horizon, &|z| f.log_value_raw(z))?;
            let fx = kernels::oracle_semigroup(m, &case.x, case.horizon, f)?;
            Ok(MonteCarloEstimate {
                stderr: ORACLE_TOL * (log_y.abs().max(1.0) + fx.max(1.0) / fx),
                ..MonteCarloEstimate::exact(log_y - fx.ln())
            })
        }
        Method::MonteCarlo(s) => {
            let at_y = estimators::terminal_points(m, &case.y, case.horizon, s)?.estimate(f, Functional::LogF)?;
            let a = estimators::terminal_points(m, &case.x, case.horizon, s)?.corrected_samples(f);
            let a = MonteCarloEstimate::from_samples(&a, s.master_seed);
            let se = at_y.stderr.hypot(a.stderr / a.mean);
            Ok(estimate(at_y.mean - a.mean.ln(), se, s.n_paths, s.master_seed))
        }
    }
}

/// Log-Harnack inequality with a general domain `D ∋ y` and reference
/// function `φ`: cost built from `K(D_ρ)`, `c_D(φ)` and `φ(y)⁴`.
pub fn check_log_harnack(m: &ModelSpace, case: &HarnackCase, method: &Method) -> Result<InequalityReport> {
    case.validate(m)?;
    let phi = case.reference(m)?;
    if !phi.domain.contains(m, &case.y) {
        return Err(case.precondition("y must lie in D"));
    }
    let c = bounds::c_d(m, &phi)?.value;
    let k = bounds::enlarged_k(m, &case.x, &case.y, &phi.domain).value;
    let phi4 = phi.value(m, &case.y).powi(4);
    let rho = m.distance(&case.x, &case.y);
    let rhs = MonteCarloEstimate::exact(bounds::harnack_cost(rho, k, c, phi4, case.horizon));
    let lhs = log_harnack_lhs(m, case, method)?;
    let constants = LocalConstants {
        k_d_rho: Some(k),
        c_d_phi: Some(c),
        resolution: Some(phi.domain.sample_resolution),
        ..Default::default()
    };
    Ok(InequalityReport::new("log-harnack", case.describe(m, Some(&phi), method), lhs, rhs, constants))
}

/// Local form: cost built from `K_{x,y}` and `κ(y)` with no domain input.
pub fn check_log_harnack_local(m: &ModelSpace, case: &HarnackCase, method: &Method) -> Result<InequalityReport> {
    case.validate(m)?;
    let rho = m.distance(&case.x, &case.y);
    if m.injectivity_radius() <= 1.0 + rho {
        return Err(Error::InjectivityRadiusExceeded {
            distance: 1.0 + rho,
            limit: m.injectivity_radius(),
        });
    }
    let mut constants = bounds::kappa(m, &case.y)?;
    let k = bounds::k_xy(m, &case.x, &case.y);
    constants.k_xy = Some(k);
    let kappa = constants.kappa_y.unwrap();
    let rhs = MonteCarloEstimate::exact(bounds::harnack_cost(rho, k, kappa, 1.0, case.horizon));
    let lhs = log_harnack_lhs(m, case, method)?;
    Ok(InequalityReport::new("log-harnack-local", case.describe(m, None, method), lhs, rhs, constants))
}

/// `(P_T f² - (P_T f)²)(x)` with a delta-method standard error.
fn variance_at(m: &ModelSpace, x: &Point, horizon: f64, f: &TestFunction, s: &Sampler) -> Result<MonteCarloEstimate> {
    let samples = estimators::terminal_points(m, x, horizon, s)?.samples(f, Functional::F)?;
    let n = samples.len() as f64;
    let mean = stats::pairwise_sum(&samples) / n;
    let sq: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = stats::pairwise_sum(&sq) / n;
    let infl: Vec<f64> = sq.iter().map(|q| q - var).collect();
    let se = MonteCarloEstimate::from_samples(&infl, s.master_seed).stderr;
    Ok(estimate(var, se, s.n_paths, s.master_seed))
}

/// Gradient estimate `|∇P_T f|²(x) ≤ Var_{P_T}(f)(x)·rate(K(D), c_D(φ), φ(x)⁴)`.
pub fn check_gradient(m: &ModelSpace, case: &HarnackCase, method: &Method) -> Result<InequalityReport> {
    case.validate(m)?;
    let phi = match &case.phi {
        Some(p) => p.clone(),
        None => bounds::cosine_reference(m, &case.x)?,
    };
    if !phi.domain.contains(m, &case.x) {
        return Err(case.precondition("x must lie in D"));
    }
    let c = bounds::c_d(m, &phi)?.value;
    let k = bounds::k_of_domain(m, &phi.domain).value;
    let rate = bounds::harnack_rate(k, c, phi.value(m, &case.x).powi(4), case.horizon);
    let (x, t, f) = (&case.x, case.horizon, &case.f);
    let (lhs, var) = match method {
        Method::Exact => {
            let g = estimators::grad_oracle(m, x, t, f)?;
            let p = kernels::oracle_semigroup(m, x, t, f)?;
            let p2 = kernels::oracle_expectation(m, x, t, &|z| f.value_raw(z).powi(2))?;
            // fourth-order differences of tolerance-level values
            let g_tol = ORACLE_TOL * p.abs().max(1.0) / estimators::GRAD_EPS;
            let lhs = estimate(g * g, 2.0 * g * g_tol + g_tol * g_tol, 0, 0);
            (lhs, quadrature(p2 - p * p))
        }
        Method::MonteCarlo(s) => {
            let g = estimators::grad_semigroup(m, x, t, f, s)?.norm;
            let lhs = estimate(g.mean * g.mean, 2.0 * g.mean.abs() * g.stderr, g.n, g.seed);
            (lhs, variance_at(m, x, t, f, s)?)
        }
    };
    let rhs = MonteCarloEstimate {
        mean: var.mean * rate,
        stderr: var.stderr * rate,
        ..var
    };
    let constants = LocalConstants {
        k_d: Some(k),
        c_d_phi: Some(c),
        resolution: Some(phi.domain.sample_resolution),
        ..Default::default()
    };
    Ok(InequalityReport::new("gradient", case.describe(m, Some(&phi), method), lhs, rhs, constants))
}

/// `inf φ⁴` along the minimal geodesic from `x` to `y`, or the parameter
/// at which it leaves `D`.
pub fn geodesic_phi4(m: &ModelSpace, x: &Point, y: &Point, phi: &ReferenceFunction) -> Result<f64> {
    let mut inf = f64::INFINITY;
    for i in 0..GEODESIC_SAMPLES {
        let s = i as f64 / (GEODESIC_SAMPLES - 1) as f64;
        let z = m.geodesic_point(x, y, s)?;
        if !phi.domain.contains(m, &z) {
            return Err(Error::GeodesicLeavesDomain { at: s });
        }
        inf = inf.min(phi.value(m, &z).powi(4));
    }
    Ok(inf)
}

/// Harnack inequality with power:
/// `P_T f(y) ≤ P_T f(x) + ρ·√rate(K(D), c_D(φ), inf_ℓ φ⁴)·√(P_T f²(y))`.
pub fn check_harnack(m: &ModelSpace, case: &HarnackCase, method: &Method) -> Result<InequalityReport> {
    case.validate(m)?;
    if !m.is_conservative() {
        return Err(case.precondition(format!("{} is not conservative", m.name())));
    }
    if !case.f.nonnegative() {
        return Err(case.precondition("Harnack inequality needs f ≥ 0"));
    }
    let phi = case.reference(m)?;
    let phi4 = geodesic_phi4(m, &case.x, &case.y, &phi)?;
    let c = bounds::c_d(m, &phi)?.value;
    let k = bounds::k_of_domain(m, &phi.domain).value;
    let scale = m.distance(&case.x, &case.y) * bounds::harnack_rate(k, c, phi4, case.horizon).sqrt();
    let (x, y, t, f) = (&case.x, &case.y, case.horizon, &case.f);
    let (lhs, rhs) = match method {
        Method::Exact => {
            let fy = kernels::oracle_semigroup(m, y, t, f)?;
            let fx = kernels::oracle_semigroup(m, x, t, f)?;
            let f2y = kernels::oracle_expectation(m, y, t, &|z| f.value_raw(z).powi(2))?;
            (quadrature(fy), quadrature(fx + scale * f2y.sqrt()))
        }
        Method::MonteCarlo(s) => {
            let ty = estimators::terminal_points(m, y, t, s)?;
            let fy = ty.estimate(f, Functional::F)?;
            let f2y = ty.estimate(f, Functional::FSquared)?;
            let fx = estimators::terminal_points(m, x, t, s)?.estimate(f, Functional::F)?;
            let root = f2y.mean.sqrt();
            let d_root = if root > 0.0 { f2y.stderr / (2.0 * root) } else { f2y.stderr.sqrt() };
            let rhs = estimate(fx.mean + scale * root, fx.stderr.hypot(scale * d_root), s.n_paths, s.master_seed);
            (fy, rhs)
        }
    };
    let constants = LocalConstants {
        k_d: Some(k),
        c_d_phi: Some(c),
        resolution: Some(phi.domain.sample_resolution),
        ..Default::default()
    };
    Ok(InequalityReport::new("harnack", case.describe(m, Some(&phi), method), lhs, rhs, constants))
}

fn require_kernel_oracle(m: &ModelSpace) -> Result<()> {
    if kernels::has_probability_reference(m) && m.is_conservative() {
        Ok(())
    } else {
        Err(Error::NoOracle(format!("{} has no symmetric kernel against a probability measure", m.name())))
    }
}

/// Gaussian lower bound `exp(-ρ²/2·rate(K_{x,y}, κ(y), 1, t)) ≤ p_{2t}(x, y)`.
pub fn check_kernel_lower_bound(m: &ModelSpace, x: &Point, y: &Point, t: f64) -> Result<InequalityReport> {
    require_kernel_oracle(m)?;
    if !(t > 0.0) {
        return Err(Error::invalid("t", "must be positive"));
    }
    let mut constants = bounds::kappa(m, y)?;
    let k = bounds::k_xy(m, x, y);
    constants.k_xy = Some(k);
    let rho = m.distance(x, y);
    let bound = (-bounds::harnack_cost(rho, k, constants.kappa_y.unwrap(), 1.0, t)).exp();
    let kernel = kernels::heat_kernel(m, x, y, 2.0 * t)?;
    let cfg = format!("variant={};x={:?};y={:?};t={}", m.name(), x.coords(), y.coords(), t);
    Ok(InequalityReport::new("kernel-lower", cfg, MonteCarloEstimate::exact(bound), quadrature(kernel), constants))
}

/// Right-hand side of the kernel entropy bound. `sharp` replaces the
/// `√(t∧1)` prefactor by `(t∧1)/2`.
pub fn entropy_bound_rhs(m: &ModelSpace, y: &Point, t: f64, sharp: bool) -> Result<(f64, LocalConstants)> {
    let mut constants = bounds::kappa(m, y)?;
    let s = t.min(1.0);
    let k_bar = bounds::k_of_domain(m, &DomainSpec::new(*y, 2.0_f64.min(m.usable_radius()))).value;
    constants.k_d = Some(k_bar);
    let rate = bounds::harnack_rate(k_bar, constants.kappa_y.unwrap(), 1.0, t);
    let prefactor = if sharp { s / 2.0 } else { s.sqrt() };
    // conservative: P_{2t}1 = 1 and μ(1 - P_t1) = 0
    let volume = kernels::ball_measure(m, y, s.sqrt())?;
    Ok((prefactor * rate - volume.ln(), constants))
}

/// `∫ p_t(y,z) log p_t(y,z) μ(dz) ≤ √(t∧1)·rate(K(B(y,2)), κ(y), 1, t) + log(1/μ(B(y, √(t∧1))))`.
pub fn check_entropy_bound(m: &ModelSpace, y: &Point, t: f64) -> Result<InequalityReport> {
    if !m.is_conservative() {
        return Err(Error::NoOracle(format!("{} is not conservative", m.name())));
    }
    let lhs = kernels::kernel_entropy(m, y, t)?;
    let (rhs, constants) = entropy_bound_rhs(m, y, t, false)?;
    let cfg = format!("variant={};y={:?};t={}", m.name(), y.coords(), t);
    Ok(InequalityReport::new("entropy", cfg, quadrature(lhs), MonteCarloEstimate::exact(rhs), constants))
}

fn normal_cdf(z: f64, sd: f64) -> f64 {
    0.5 * libm::erfc(-z / (sd * std::f64::consts::SQRT_2))
}

/// Comonotone transport from `μ = N(0, σ²)` to `fμ / Z` on the line.
struct QuantileMap<'a> {
    f: &'a TestFunction,
    sd: f64,
    norm: f64,
    edges: Vec<f64>,
    /// Mass of `fμ/Z` left of each edge.
    cum: Vec<f64>,
}

impl<'a> QuantileMap<'a> {
    const CELLS: usize = 4000;

    fn new(m: &ModelSpace, f: &'a TestFunction, sd: f64) -> Result<Self> {
        let norm = kernels::reference_expectation(m, &|z| f.value_raw(&[z, 0.0, 0.0]))?;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("f", "must have positive finite μ-integral"));
        }
        let density = |z: f64| f.value_raw(&[z, 0.0, 0.0]) * (-0.5 * (z / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt()) / norm;
        // widen until the density is negligible at both ends
        let mut half = 10.0 * sd;
        while density(half).max(density(-half)) * half > 1e-30 && half < 1e4 * sd {
            half *= 1.5;
        }
        let w = 2.0 * half / Self::CELLS as f64;
        let edges: Vec<f64> = (0..=Self::CELLS).map(|i| -half + i as f64 * w).collect();
        let mut cum = Vec::with_capacity(edges.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for pair in edges.windows(2) {
            acc += kernels::composite(pair[0], pair[1], 1, &mut |z| density(z));
            cum.push(acc);
        }
        Ok(QuantileMap { f, sd, norm, edges, cum })
    }

    fn density(&self, z: f64) -> f64 {
        self.f.value_raw(&[z, 0.0, 0.0]) * (-0.5 * (z / self.sd).powi(2)).exp() / (self.sd * (2.0 * PI).sqrt()) / self.norm
    }

    /// `G⁻¹(F_μ(x))`.
    fn map(&self, x: f64) -> f64 {
        let total = *self.cum.last().unwrap();
        let u = normal_cdf(x, self.sd) * total;
        let i = self.cum.partition_point(|&c| c <= u).clamp(1, self.edges.len() - 1) - 1;
        let (mut lo, mut hi) = (self.edges[i], self.edges[i + 1]);
        let base = self.cum[i];
        let a = lo;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if base + kernels::composite(a, mid, 1, &mut |z| self.density(z)) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `μ`-quantile of `u`, by bisection.
fn normal_quantile(u: f64, sd: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0 * sd, 40.0 * sd);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid, sd) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ou_scale(m: &ModelSpace) -> Result<(f64, f64)> {
    match m {
        ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda } => Ok((*lambda, (1.0 / lambda).sqrt())),
        _ => Err(Error::NoOracle(format!("entropy-cost check needs one-dimensional ornstein-uhlenbeck, not {}", m.name()))),
    }
}

/// Comonotone coupling map `T` with `T_# μ = fμ/Z`, sampled at `xs`.
pub fn quantile_coupling(m: &ModelSpace, f: &TestFunction, xs: &[f64]) -> Result<Vec<f64>> {
    let (_, sd) = ou_scale(m)?;
    let q = QuantileMap::new(m, f, sd)?;
    Ok(xs.iter().map(|&x| q.map(x)).collect())
}

/// Entropy-cost inequality on the one-dimensional Ornstein–Uhlenbeck model:
/// `∫ P_t f̂ log P_t f̂ dμ ≤ ∫ ρ(x,T(x))²/2·rate(K_{x,T(x)}, κ(T(x)), 1, t) μ(dx)`
/// with `f̂ = f / μ(f)` and `T` the quantile coupling of `μ` and `f̂μ`.
pub fn check_entropy_cost(m: &ModelSpace, f: &TestFunction, t: f64) -> Result<InequalityReport> {
    let (_, sd) = ou_scale(m)?;
    f.validate(m)?;
    if !f.nonnegative() {
        return Err(Error::invalid("f", "must be a nonnegative density"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("t", "must be positive"));
    }
    let cfg = format!("variant={};f={};t={}", m.name(), f.name(), t);
    let (lo, hi) = f.range();
    if lo == hi {
        // the coupling is the diagonal and both sides vanish
        let zero = MonteCarloEstimate::exact(0.0);
        return Ok(InequalityReport::new("entropy-cost", cfg, zero, zero, LocalConstants::default()));
    }
    let q = QuantileMap::new(m, f, sd)?;
    let norm = q.norm;
    let lhs = kernels::reference_expectation(m, &|z| {
        let p = kernels::oracle_semigroup(m, &Point::new(&[z]), t, f).map_or(f64::NAN, |v| v / norm);
        if p > 0.0 {
            p * p.ln()
        } else {
            0.0
        }
    })?;

    let cost = |x: f64| {
        let y = q.map(x);
        let (px, py) = (Point::new(&[x]), Point::new(&[y]));
        let k = bounds::k_xy_value(m, &px, &py);
        let kappa = bounds::kappa_value(m, &py);
        bounds::harnack_cost((x - y).abs(), k, kappa, 1.0, t) * (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt())
    };
    // κ has a kink where T(x) = 0
    let half = 12.0 * sd;
    let kink = normal_quantile(cdf_at_zero(&q), sd).clamp(-half, half);
    let integrate = |panels: usize| {
        let mut g = |x: f64| cost(x);
        kernels::composite(-half, kink, panels, &mut g) + kernels::composite(kink, half, panels, &mut g)
    };
    let coarse = integrate(48);
    let rhs = integrate(96);
    let rhs = estimate(rhs, (rhs - coarse).abs().max(ORACLE_TOL * rhs.abs().max(1.0)), 0, 0);
    let constants = LocalConstants {
        k_xy: Some(bounds::k_xy_value(m, &Point::new(&[0.0]), &Point::new(&[0.0]))),
        ..Default::default()
    };
    Ok(InequalityReport::new("entropy-cost", cfg, quadrature(lhs), rhs, constants))
}

/// Mass of `fμ/Z` on `(-∞, 0]`.
fn cdf_at_zero(q: &QuantileMap) -> f64 {
    let i = q.edges.partition_point(|&e| e <= 0.0).clamp(1, q.edges.len() - 1) - 1;
    let partial = kernels::composite(q.edges[i], 0.0, 1, &mut |z| q.density(z));
    (q.cum[i] + partial) / q.cum.last().unwrap()
}

/// `Q(s) = P_s log f(y_s) - log P_s f(x)` along `y_s = x + s v`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharpnessReport {
    pub r: f64,
    pub s_grid: Vec<f64>,
    pub q: Vec<MonteCarloEstimate>,
    /// Quadrature values of `Q(s)`.
    pub q_exact: Vec<f64>,
    /// `⟨v, ∇log f⟩ - |∇log f|² = (r - 1)|∇log f|²`.
    pub limit: f64,
    /// Intercept of a linear fit of `Q(s)/s` against `s`.
    pub fitted_limit: MonteCarloEstimate,
    /// `max_s |Q(s)/s - limit| / |limit|`.
    pub max_relative_error: f64,
    /// Smallest `c` compatible with the fitted limit: `2·fitted/|v|²`.
    pub c_lower_bound: MonteCarloEstimate,
    /// `2(r - 1)/r²`.
    pub c_closed_form: f64,
}

/// Default grid `0.001, 0.002, …, 0.01`.
pub fn sharpness_s_grid() -> Vec<f64> {
    (1..=10).map(|k| 0.001 * k as f64).collect()
}

/// Short-time behaviour of the log-Harnack gap in flat space along
/// `v = r ∇log f(x)`. One Gaussian draw per path is shared by every `s`;
/// the second-order Taylor polynomial of each integrand (with known mean)
/// serves as a control variate.
pub fn sharpness_experiment(x: &Point, f: &TestFunction, r: f64, s_grid: &[f64], n_paths: usize, master_seed: u64) -> Result<SharpnessReport> {
    let d = x.len();
    let m = ModelSpace::euclidean(d);
    m.validate()?;
    f.validate(&m)?;
    if !f.pointwise_positive() {
        return Err(Error::NonpositiveF { value: f.range().0 });
    }
    if s_grid.is_empty() || s_grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("s_grid", "needs positive entries"));
    }
    if n_paths < estimators::MIN_PATHS {
        return Err(Error::invalid("N", format!("must be at least {}", estimators::MIN_PATHS)));
    }
    let z0 = *x.raw();
    let lj = f.log_jet(&z0);
    let fj = f.jet_raw(&z0);
    let g2 = linalg::dot(&lj.grad, &lj.grad);
    if !(g2 > 1e-24) {
        return Err(Error::ZeroGradient);
    }
    let v = linalg::scale(&lj.grad, r);
    let limit = (r - 1.0) * g2;
    let trace = |h: &[Coords; 3]| (0..d).map(|i| h[i][i]).sum::<f64>();
    let quad = |h: &[Coords; 3], w: &Coords| (0..d).map(|i| (0..d).map(|j| h[i][j] * w[i] * w[j]).sum::<f64>()).sum::<f64>();

    let noise: Vec<[f64; 3]> = stats::par_paths(n_paths, |i| stats::gaussian3(&mut stats::path_rng(master_seed, i), d));
    let mut q = Vec::with_capacity(s_grid.len());
    let mut q_exact = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let ys = linalg::axpy(&z0, s, &v);
        // Taylor data of log f at y_s and of f at x
        let ly = f.log_jet(&ys);
        let sd = (2.0 * s).sqrt();
        let rows: Vec<[f64; 2]> = noise
            .iter()
            .map(|xi| {
                let w = linalg::scale(xi, sd);
                let a = f.log_value_raw(&linalg::add(&ys, &w)) - (linalg::dot(&ly.grad, &w) + 0.5 * quad(&ly.hess, &w) - s * trace(&ly.hess));
                let b = f.value_raw(&linalg::add(&z0, &w)) - (linalg::dot(&fj.grad, &w) + 0.5 * quad(&fj.hess, &w) - s * trace(&fj.hess));
                [a, b]
            })
            .collect();
        let a = stats::column(&rows, 0);
        let b = stats::column(&rows, 1);
        let n = n_paths as f64;
        let ma = stats::pairwise_sum(&a) / n;
        let mb = stats::pairwise_sum(&b) / n;
        let infl: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a - b / mb).collect();
        let se = MonteCarloEstimate::from_samples(&infl, master_seed).stderr;
        q.push(estimate(ma - mb.ln(), se, n_paths, master_seed));

        let sdv = [sd; 3];
        let exact_log = kernels::gaussian_expectation(d, &ys, &sdv, &|z| f.log_value_raw(z))?;
        let exact_f = kernels::gaussian_expectation(d, &z0, &sdv, &|z| f.value_raw(z))?;
        q_exact.push(exact_log - exact_f.ln());
    }

    // least squares of Q(s)/s = L + c s; the intercept weights are applied
    // to the per-point errors as if fully correlated (they share noise)
    let k = s_grid.len() as f64;
    let ratios: Vec<f64> = q.iter().zip(s_grid).map(|(e, s)| e.mean / s).collect();
    let (fitted, fitted_se) = if s_grid.len() == 1 {
        (ratios[0], q[0].stderr / s_grid[0])
    } else {
        let ms = s_grid.iter().sum::<f64>() / k;
        let sxx: f64 = s_grid.iter().map(|s| (s - ms).powi(2)).sum();
        let weights: Vec<f64> = s_grid.iter().map(|s| 1.0 / k - ms * (s - ms) / sxx).collect();
        let fitted = weights.iter().zip(&ratios).map(|(w, r)| w * r).sum::<f64>();
        let se = weights.iter().zip(q.iter().zip(s_grid)).map(|(w, (e, s))| (w * e.stderr / s).abs()).sum::<f64>();
        (fitted, se)
    };
    let max_relative_error = ratios.iter().map(|r| (r - limit).abs() / limit.abs().max(1e-300)).fold(0.0, f64::max);
    let v2 = linalg::dot(&v, &v);
    Ok(SharpnessReport {
        r,
        s_grid: s_grid.to_vec(),
        q,
        q_exact,
        limit,
        fitted_limit: estimate(fitted, fitted_se, n_paths, master_seed),
        max_relative_error,
        c_lower_bound: estimate(2.0 * fitted / v2, 2.0 * fitted_se / v2, n_paths, master_seed),
        c_closed_form: 2.0 * (r - 1.0) / (r * r),
    })
}

/// The log-Harnack gap with `f ≡ e` at `x = y`, in the corrected form and
/// with the `1 - P_T 1` term dropped. Both sides are functions of the same
/// estimate `u` of `P_T 1(x)`, so they are compared exactly.
pub fn explosion_correction(m: &ModelSpace, x: &Point, horizon: f64, sampler: &Sampler) -> Result<[InequalityReport; 2]> {
    let f = TestFunction::Constant { value: std::f64::consts::E };
    let term = estimators::terminal_points(m, x, horizon, sampler)?;
    let lhs_samples = term.samples(&f, Functional::LogF)?;
    let u = stats::pairwise_sum(&lhs_samples) / lhs_samples.len() as f64;
    if !(u > 0.0) {
        return Err(Error::Precondition {
            point: format!("x={:?},T={}", x.coords(), horizon),
            message: "every path exploded".into(),
        });
    }
    let cfg = |form: &str| {
        format!(
            "variant={};x={:?};y={:?};T={};f=e;form={form};survival={u:.16e};method={}",
            m.name(),
            x.coords(),
            x.coords(),
            horizon,
            Method::MonteCarlo(*sampler).describe()
        )
    };
    let lhs = MonteCarloEstimate::exact(u);
    // ρ = 0, so the right-hand side of the inequality is zero; move the log
    // term across: u ≤ log(e·u + 1 - u) versus u ≤ log(e·u)
    let corrected = InequalityReport::new(
        "log-harnack",
        cfg("corrected"),
        lhs,
        MonteCarloEstimate::exact((u * std::f64::consts::E + 1.0 - u).ln()),
        LocalConstants::default(),
    );
    let uncorrected = InequalityReport::new(
        "log-harnack-uncorrected",
        cfg("uncorrected"),
        lhs,
        MonteCarloEstimate::exact((u * std::f64::consts::E).ln()),
        LocalConstants::default(),
    );
    Ok([corrected, uncorrected])
}
