//! Local geometry constants: pointwise and domain curvature bounds, the
//! reference-function class for a metric ball, `c_D(φ)` and `κ(y)`.
//!
//! Suprema over a domain are taken over a Halton point set mapped through
//! the exponential map at the centre, refined by a pattern search around
//! the running maximum and re-checked at four times the resolution.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{linalg, Coords, ModelSpace, Point, TangentVec};

pub const DEFAULT_RESOLUTION: usize = 4096;
pub const MIN_RESOLUTION: usize = 1000;
/// Tolerance of the numerical class-membership checks.
pub const CLASS_TOL: f64 = 1e-8;
/// Below this `|K|` the `K → 0` limits of the curvature terms are used.
pub const K_ZERO: f64 = 1e-8;

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

/// Open metric ball `B(center, radius)`, intersected with the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub center: Point,
    pub radius: f64,
    #[serde(default = "default_resolution")]
    pub sample_resolution: usize,
}

impl DomainSpec {
    pub fn new(center: Point, radius: f64) -> Self {
        DomainSpec {
            center,
            radius,
            sample_resolution: DEFAULT_RESOLUTION,
        }
    }

    pub fn with_resolution(mut self, n: usize) -> Self {
        self.sample_resolution = n;
        self
    }

    pub fn validate(&self, m: &ModelSpace) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid("domain.radius", "must be positive"));
        }
        if self.radius >= m.injectivity_radius() {
            return Err(Error::InjectivityRadiusExceeded {
                distance: self.radius,
                limit: m.injectivity_radius(),
            });
        }
        if self.sample_resolution < MIN_RESOLUTION {
            return Err(Error::invalid(
                "domain.sample_resolution",
                format!("must be at least {MIN_RESOLUTION}"),
            ));
        }
        if !m.contains(&self.center) {
            return Err(Error::invalid("domain.center", "outside the model"));
        }
        Ok(())
    }

    /// `D_r = {z : ρ(z, D) ≤ r}`, which for a ball is the ball of radius
    /// `radius + r`.
    pub fn enlarged(&self, r: f64) -> Self {
        DomainSpec {
            radius: self.radius + r,
            ..self.clone()
        }
    }

    pub fn contains(&self, m: &ModelSpace, z: &Point) -> bool {
        m.contains(z) && m.distance(&self.center, z) < self.radius
    }

    pub(crate) fn contains_closed_raw(&self, m: &ModelSpace, z: &Coords) -> bool {
        let p = Point::from_raw(*z, self.center.len());
        m.contains(&p) && m.distance_raw(self.center.raw(), z) <= self.radius * (1.0 + 1e-12)
    }

    /// Radius usable by the exponential map at the centre; enlarged balls
    /// on the sphere cover everything once this reaches `πr`.
    fn sampling_radius(&self, m: &ModelSpace) -> f64 {
        self.radius.min(m.diameter())
    }

    /// Quasi-random points of `D ∩ M`, the centre first.
    pub fn sample_points(&self, m: &ModelSpace, n: usize) -> Vec<Coords> {
        let d = m.dim();
        let frame = m.frame(&self.center);
        let r = self.sampling_radius(m);
        let mut out = Vec::with_capacity(n);
        out.push(*self.center.raw());
        let mut index = 1u64;
        while out.len() < n {
            let h = halton(index, d);
            index += 1;
            let u: [f64; 3] = std::array::from_fn(|i| if i < d { 2.0 * h[i] - 1.0 } else { 0.0 });
            if linalg::norm(&u) >= 1.0 {
                continue;
            }
            let v = frame.combine(&linalg::scale(&u, r));
            let z = m.exp_raw(self.center.raw(), &v);
            if m.contains(&Point::from_raw(z, self.center.len())) {
                out.push(z);
            }
            if index > 64 * n as u64 + 1000 {
                break;
            }
        }
        out
    }

    /// Quasi-random points of the metric sphere `{ρ(center, ·) = radius}`
    /// that lie in `M`.
    pub fn boundary_points(&self, m: &ModelSpace, n: usize) -> Vec<Coords> {
        let d = m.dim();
        let frame = m.frame(&self.center);
        let mut out = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let h = halton(i + 1, 2);
            let u = match d {
                1 => [if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0],
                2 => {
                    let a = 2.0 * PI * h[0];
                    [a.cos(), a.sin(), 0.0]
                }
                _ => {
                    let z = 2.0 * h[0] - 1.0;
                    let a = 2.0 * PI * h[1];
                    let s = (1.0 - z * z).sqrt();
                    [s * a.cos(), s * a.sin(), z]
                }
            };
            let v = frame.combine(&linalg::scale(&u, self.radius));
            let z = m.exp_raw(self.center.raw(), &v);
            if m.contains(&Point::from_raw(z, self.center.len())) {
                out.push(z);
            }
        }
        out
    }
}

/// Radical-inverse Halton point in bases 2, 3, 5.
pub(crate) fn halton(index: u64, dim: usize) -> [f64; 3] {
    const BASES: [u64; 3] = [2, 3, 5];
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate().take(dim.min(3)) {
        let b = BASES[k];
        let mut i = index;
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= b as f64;
            r += f * (i % b) as f64;
            i /= b;
        }
        *slot = r;
    }
    out
}

/// A sampled supremum with its maximiser and the 4× re-check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupEstimate {
    pub value: f64,
    pub argmax: Point,
    pub resolution: usize,
    /// Refined maximum at `resolution` points.
    pub sampled: f64,
    /// Refined maximum at `4 × resolution` points.
    pub recheck: f64,
    /// Closed form when the variant provides one (then `value` equals it).
    pub exact: Option<f64>,
}

fn refine(m: &ModelSpace, d: &DomainSpec, g: &dyn Fn(&Coords) -> f64, start: Coords, start_val: f64, n: usize) -> (Coords, f64) {
    let dim = m.dim();
    let mut best = start;
    let mut best_val = start_val;
    let mut step = d.sampling_radius(m) / (n as f64).powf(1.0 / dim as f64);
    let tol = 1e-10 * d.radius.max(1.0);
    while step > tol {
        let frame = m.frame(&Point::from_raw(best, d.center.len()));
        let mut improved = false;
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let cand = m.exp_raw(&best, &linalg::scale(&frame.vectors[i], sign * step));
                if !d.contains_closed_raw(m, &cand) {
                    continue;
                }
                let v = g(&cand);
                if v > best_val {
                    best = cand;
                    best_val = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, best_val)
}

fn sampled_sup(m: &ModelSpace, d: &DomainSpec, g: &dyn Fn(&Coords) -> f64, n: usize) -> (Coords, f64) {
    let mut best = *d.center.raw();
    let mut best_val = f64::NEG_INFINITY;
    for z in d.sample_points(m, n) {
        let v = g(&z);
        if v > best_val {
            best = z;
            best_val = v;
        }
    }
    refine(m, d, g, best, best_val, n)
}

/// Supremum of `g` over the closure of `D ∩ M`.
pub fn sup_over(m: &ModelSpace, d: &DomainSpec, g: &dyn Fn(&Coords) -> f64) -> SupEstimate {
    let n = d.sample_resolution;
    let (z1, v1) = sampled_sup(m, d, g, n);
    let (z4, v4) = sampled_sup(m, d, g, 4 * n);
    let (argmax, value) = if v4 > v1 { (z4, v4) } else { (z1, v1) };
    SupEstimate {
        value,
        argmax: Point::from_raw(argmax, d.center.len()),
        resolution: n,
        sampled: v1,
        recheck: v4,
        exact: None,
    }
}

/// Smallest admissible `K(x) = max_{|u|=1} -Ric_Z(u,u)`.
pub fn pointwise_k(m: &ModelSpace, x: &Point) -> f64 {
    -m.min_ricci_z(x)
}

/// Closed form of `sup_D K` where the variant has one.
fn exact_k_of_domain(m: &ModelSpace, d: &DomainSpec) -> Option<f64> {
    match m {
        ModelSpace::ExplosiveDrift1D => {
            let c = d.center.raw()[0];
            let far = (c - d.radius).abs().max((c + d.radius).abs());
            Some(3.0 * far * far)
        }
        _ => Some(pointwise_k(m, &d.center)),
    }
}

/// `K(D) = sup_D K`.
pub fn k_of_domain(m: &ModelSpace, d: &DomainSpec) -> SupEstimate {
    let g = |z: &Coords| pointwise_k(m, &Point::from_raw(*z, d.center.len()));
    let mut est = sup_over(m, d, &g);
    if let Some(v) = exact_k_of_domain(m, d) {
        est.exact = Some(v);
        est.value = v;
    }
    est
}

/// `K(D_{ρ(x,y)})`.
pub fn enlarged_k(m: &ModelSpace, x: &Point, y: &Point, d: &DomainSpec) -> SupEstimate {
    k_of_domain(m, &d.enlarged(m.distance(x, y)))
}

fn exact_drift_sup(m: &ModelSpace, d: &DomainSpec) -> f64 {
    let far = linalg::norm(d.center.raw()) + d.radius;
    match m {
        ModelSpace::Euclidean { drift, .. } => drift.iter().map(|c| c * c).sum::<f64>().sqrt(),
        ModelSpace::OrnsteinUhlenbeck { lambda, .. } => lambda * far,
        ModelSpace::ExplosiveDrift1D => far.powi(3),
        _ => 0.0,
    }
}

/// `sup_D |Z|` with closed forms where available.
pub fn drift_sup(m: &ModelSpace, d: &DomainSpec) -> SupEstimate {
    let g = |z: &Coords| linalg::norm(&m.drift_raw(z));
    let mut est = sup_over(m, d, &g);
    let exact = exact_drift_sup(m, d);
    est.exact = Some(exact);
    est.value = exact;
    est
}

/// Radial profile of a reference function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceShape {
    /// `cos(π ρ / (2R))`
    Cosine,
    /// `1 - (ρ / R)²`
    Quadratic,
}

fn default_amplitude() -> f64 {
    1.0
}

/// A radial candidate `φ = A ψ(ρ(center, ·))` for the class of `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFunction {
    pub shape: ReferenceShape,
    pub domain: DomainSpec,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

impl ReferenceFunction {
    pub fn new(shape: ReferenceShape, domain: DomainSpec) -> Self {
        ReferenceFunction {
            shape,
            domain,
            amplitude: 1.0,
        }
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.amplitude *= a;
        self
    }

    /// `(ψ, ψ', ψ'')` at distance `rho`.
    #[inline]
    fn profile(&self, rho: f64) -> (f64, f64, f64) {
        let a = self.amplitude;
        let r = self.domain.radius;
        match self.shape {
            ReferenceShape::Cosine => {
                let k = PI / (2.0 * r);
                let (s, c) = (k * rho).sin_cos();
                (a * c, -a * k * s, -a * k * k * c)
            }
            ReferenceShape::Quadratic => (a * (1.0 - rho * rho / (r * r)), -2.0 * a * rho / (r * r), -2.0 * a / (r * r)),
        }
    }

    #[inline]
    pub(crate) fn value_raw(&self, m: &ModelSpace, z: &Coords) -> f64 {
        self.profile(m.distance_raw(self.domain.center.raw(), z)).0
    }

    pub fn value(&self, m: &ModelSpace, z: &Point) -> f64 {
        self.value_raw(m, z.raw())
    }

    pub(crate) fn gradient_raw(&self, m: &ModelSpace, z: &Coords) -> Coords {
        let rho = m.distance_raw(self.domain.center.raw(), z);
        if rho < 1e-12 {
            return linalg::ZERO;
        }
        let (_, d1, _) = self.profile(rho);
        linalg::scale(&m.grad_distance_raw(self.domain.center.raw(), z, rho), d1)
    }

    pub fn gradient(&self, m: &ModelSpace, z: &Point) -> TangentVec {
        TangentVec::from_raw(*z, self.gradient_raw(m, z.raw()))
    }

    /// `|∇φ|(z)`
    pub fn gradient_norm(&self, m: &ModelSpace, z: &Point) -> f64 {
        let rho = m.distance(&self.domain.center, z);
        self.profile(rho).1.abs()
    }

    /// `Lφ = Δφ + <Z, ∇φ>`.
    pub(crate) fn generator_raw(&self, m: &ModelSpace, z: &Coords) -> f64 {
        let rho = m.distance_raw(self.domain.center.raw(), z);
        let (_, d1, d2) = self.profile(rho);
        if rho < 1e-9 {
            // ψ'(ρ) Δρ → (d - 1) ψ''(0) at the centre
            return m.dim() as f64 * d2;
        }
        let grad_rho = m.grad_distance_raw(self.domain.center.raw(), z, rho);
        let drift = m.drift_raw(z);
        d2 + d1 * m.laplacian_distance_at(rho) + d1 * m.inner_raw(z, &drift, &grad_rho)
    }

    pub fn generator(&self, m: &ModelSpace, z: &Point) -> f64 {
        self.generator_raw(m, z.raw())
    }

    /// `5|∇φ|² - φ Lφ`
    pub(crate) fn class_integrand(&self, m: &ModelSpace, z: &Coords) -> f64 {
        let rho = m.distance_raw(self.domain.center.raw(), z);
        let (v, d1, _) = self.profile(rho);
        5.0 * d1 * d1 - v * self.generator_raw(m, z)
    }

    /// Numerical membership test for the class of the domain: `φ > 0`
    /// inside, `φ = 0` on `∂D \ ∂M`, `Nφ ≥ 0` on `∂M ∩ ∂D` (checked on
    /// `∂M ∩ D̄`).
    pub fn check_class(&self, m: &ModelSpace) -> Result<()> {
        let d = &self.domain;
        let n = d.sample_resolution;
        for z in d.sample_points(m, n).iter().skip(1) {
            if m.distance_raw(d.center.raw(), z) >= d.radius * (1.0 - 1e-9) {
                continue;
            }
            let v = self.value_raw(m, z);
            if v <= 0.0 {
                return Err(Error::ClassViolation(format!("phi = {v} inside the domain at {z:?}")));
            }
        }
        for z in d.boundary_points(m, n) {
            if on_boundary(m, &z) {
                self.check_normal(m, &z)?;
            } else {
                let v = self.value_raw(m, &z);
                if v.abs() > CLASS_TOL {
                    return Err(Error::ClassViolation(format!("phi = {v:e} on the domain boundary at {z:?}")));
                }
            }
        }
        if m.has_boundary() {
            for z in d.sample_points(m, n) {
                let Some(p) = project_to_boundary(m, &z) else { continue };
                if d.contains_closed_raw(m, &p) {
                    self.check_normal(m, &p)?;
                }
            }
        }
        Ok(())
    }

    fn check_normal(&self, m: &ModelSpace, z: &Coords) -> Result<()> {
        let Some(n) = m.inward_normal_raw(z) else { return Ok(()) };
        let dn = m.inner_raw(z, &n, &self.gradient_raw(m, z));
        if dn < -CLASS_TOL {
            return Err(Error::ClassViolation(format!("normal derivative {dn:e} < 0 at {z:?}")));
        }
        Ok(())
    }
}

fn on_boundary(m: &ModelSpace, z: &Coords) -> bool {
    match m {
        ModelSpace::HalfSpace { .. } => z[0].abs() <= 1e-9,
        ModelSpace::EuclideanBall { radius, .. } => (linalg::norm(z) - radius).abs() <= 1e-9 * radius,
        _ => false,
    }
}

fn project_to_boundary(m: &ModelSpace, z: &Coords) -> Option<Coords> {
    match m {
        ModelSpace::HalfSpace { .. } => Some([0.0, z[1], z[2]]),
        ModelSpace::EuclideanBall { radius, .. } => {
            let r = linalg::norm(z);
            (r > 0.0).then(|| linalg::scale(z, radius / r))
        }
        _ => None,
    }
}

/// `c_D(φ) = sup_D {5|∇φ|² - φLφ}`, clamped at zero.
pub fn c_d(m: &ModelSpace, phi: &ReferenceFunction) -> Result<SupEstimate> {
    phi.domain.validate(m)?;
    phi.check_class(m)?;
    let g = |z: &Coords| phi.class_integrand(m, z);
    let mut est = sup_over(m, &phi.domain, &g);
    est.value = est.value.max(0.0);
    Ok(est)
}

/// `φ(z) = cos(π ρ(y, z) / 2)` on `B(y, 1)`.
pub fn cosine_reference(m: &ModelSpace, y: &Point) -> Result<ReferenceFunction> {
    if m.injectivity_radius() <= 1.0 {
        return Err(Error::InjectivityRadiusExceeded {
            distance: 1.0,
            limit: m.injectivity_radius(),
        });
    }
    Ok(ReferenceFunction::new(ReferenceShape::Cosine, DomainSpec::new(*y, 1.0)))
}

/// `K/(1 - e^{-2KT})`, with limit `1/(2T)` as `K → 0`.
pub fn curvature_term(k: f64, t: f64) -> f64 {
    if k.abs() < K_ZERO {
        1.0 / (2.0 * t)
    } else {
        k / (-(-2.0 * k * t).exp_m1())
    }
}

/// `(e^{2KT} - 1)/(2K)`, with limit `T` as `K → 0`.
pub fn growth_term(k: f64, t: f64) -> f64 {
    if k.abs() < K_ZERO {
        t
    } else {
        (2.0 * k * t).exp_m1() / (2.0 * k)
    }
}

/// `(ρ²/2)(K/(1-e^{-2KT}) + c²(e^{2KT}-1)/(2K φ⁴))`, the common cost of
/// the log-Harnack family. Pass `phi4 = 1` for the local form.
pub fn harnack_cost(rho: f64, k: f64, c: f64, phi4: f64, t: f64) -> f64 {
    0.5 * rho * rho * harnack_rate(k, c, phi4, t)
}

/// Bracket of [`harnack_cost`] without the `ρ²/2` prefactor.
pub fn harnack_rate(k: f64, c: f64, phi4: f64, t: f64) -> f64 {
    curvature_term(k, t) + c * c * growth_term(k, t) / phi4
}

/// Constants attached to every report.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LocalConstants {
    pub k_d: Option<f64>,
    pub k_d_rho: Option<f64>,
    pub c_d_phi: Option<f64>,
    pub kappa_y: Option<f64>,
    pub k_y: Option<f64>,
    pub k_y0: Option<f64>,
    pub b_y: Option<f64>,
    pub k_xy: Option<f64>,
    pub resolution: Option<usize>,
}

impl LocalConstants {
    /// `name=value` pairs of the populated fields, `;`-separated.
    pub fn describe(&self) -> String {
        let fields = [
            ("K_D", self.k_d),
            ("K_D_rho", self.k_d_rho),
            ("c_D_phi", self.c_d_phi),
            ("kappa_y", self.kappa_y),
            ("K_y", self.k_y),
            ("K_y0", self.k_y0),
            ("b_y", self.b_y),
            ("K_xy", self.k_xy),
        ];
        let mut parts: Vec<String> = fields
            .iter()
            .filter_map(|(n, v)| v.map(|v| format!("{n}={v:.16e}")))
            .collect();
        if let Some(r) = self.resolution {
            parts.push(format!("resolution={r}"));
        }
        parts.join(";")
    }

    pub fn merge(mut self, other: &LocalConstants) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = other.$f; } )* };
        }
        take!(k_d, k_d_rho, c_d_phi, kappa_y, k_y, k_y0, b_y, k_xy, resolution);
        self
    }
}

/// `K_y⁰ = 0 ∨ sup{-Ric(U,U) : z ∈ B(y,1)}`.
fn k_y0(m: &ModelSpace, d: &DomainSpec) -> f64 {
    let g = |z: &Coords| -m.min_ricci(&Point::from_raw(*z, d.center.len()));
    let est = sup_over(m, d, &g);
    // Ricci is constant on every catalogue variant
    let exact = -m.min_ricci(&d.center);
    debug_assert!((est.value - exact).abs() < 1e-9);
    exact.max(0.0)
}

/// `κ(y) = K_y + π²(d+3)/4 + π(b_y + ½√(K_y⁰(d-1)))` with its ingredients.
pub fn kappa(m: &ModelSpace, y: &Point) -> Result<LocalConstants> {
    let phi = cosine_reference(m, y)?;
    let ball = phi.domain;
    let k_y = k_of_domain(m, &ball).value.max(0.0);
    let k0 = k_y0(m, &ball);
    let b_y = drift_sup(m, &ball).value;
    let d = m.dim() as f64;
    let kappa = k_y + PI * PI * (d + 3.0) / 4.0 + PI * (b_y + 0.5 * (k0 * (d - 1.0)).sqrt());
    Ok(LocalConstants {
        kappa_y: Some(kappa),
        k_y: Some(k_y),
        k_y0: Some(k0),
        b_y: Some(b_y),
        resolution: Some(ball.sample_resolution),
        ..Default::default()
    })
}

/// `κ(y)` from the closed forms alone, for integrands that need it at many
/// points.
pub(crate) fn kappa_value(m: &ModelSpace, y: &Point) -> f64 {
    let ball = DomainSpec::new(*y, 1.0);
    let k_y = exact_k_of_domain(m, &ball).unwrap_or(0.0).max(0.0);
    let k0 = (-m.min_ricci(y)).max(0.0);
    let d = m.dim() as f64;
    k_y + PI * PI * (d + 3.0) / 4.0 + PI * (exact_drift_sup(m, &ball) + 0.5 * (k0 * (d - 1.0)).sqrt())
}

/// Closed form of [`k_xy`].
pub(crate) fn k_xy_value(m: &ModelSpace, x: &Point, y: &Point) -> f64 {
    exact_k_of_domain(m, &DomainSpec::new(*y, 1.0 + m.distance(x, y))).unwrap_or_else(|| k_xy(m, x, y))
}

/// `K_{x,y} = K(B(y, 1 + ρ(x,y)))`.
pub fn k_xy(m: &ModelSpace, x: &Point, y: &Point) -> f64 {
    k_of_domain(m, &DomainSpec::new(*y, 1.0 + m.distance(x, y))).value
}
