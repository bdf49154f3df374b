//! Closed-form transition laws and quadrature: the independent ground truth
//! for the Monte Carlo estimators.
//!
//! * Euclidean and Ornstein–Uhlenbeck: Gaussian laws, tensor Gauss–Hermite
//!   with the node count doubled until two rules agree.
//! * Half-space: reflected Gaussian kernel `g(z - x) + g(z + x)` in the
//!   normal direction, composite Gauss–Legendre.
//! * Circle: theta series (200 terms) or, for short times, the wrapped
//!   Gaussian; periodic trapezoid rule.
//! * 2-sphere: Legendre series `Σ (2l+1) e^{-l(l+1)t/r²} P_l(cos γ)`,
//!   Gauss–Legendre in the polar angle about the start point and trapezoid
//!   in the azimuth.
//!
//! Kernels are densities with respect to the reference measure `μ`:
//! normalised volume on spheres, the normalised Gaussian `N(0, 1/λ)` for
//! Ornstein–Uhlenbeck, Lebesgue measure on flat spaces.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{GaussHermite, GaussLegendre};
use libm::erf;

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::geometry::{linalg, Coords, ModelSpace, Point};

/// Relative agreement between successive refinements at which a quadrature
/// is accepted.
pub const QUAD_TOL: f64 = 1e-12;
/// Largest accepted error estimate of an oracle value.
pub const ORACLE_TOL: f64 = 1e-8;
/// Terms of the circle theta series.
pub const THETA_TERMS: usize = 200;
/// Minimum number of terms of the sphere Legendre series.
pub const LEGENDRE_TERMS: usize = 200;
const SERIES_TAIL: f64 = 1e-14;

type Rule = Arc<Vec<(f64, f64)>>;

fn cached(kind: u8, n: usize, build: impl FnOnce() -> Vec<(f64, f64)>) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<(u8, usize), Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&(kind, n)) {
        return r.clone();
    }
    let rule = Arc::new(build());
    cache.lock().unwrap().insert((kind, n), rule.clone());
    rule
}

/// `n`-point rule for `E g(ξ)`, `ξ ~ N(0, 1)`.
pub(crate) fn normal_rule(n: usize) -> Rule {
    cached(0, n, || {
        let gh = GaussHermite::new(NonZeroUsize::new(n).unwrap());
        gh.iter()
            .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / PI.sqrt()))
            .collect()
    })
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub(crate) fn legendre_rule(n: usize) -> Rule {
    cached(1, n, || {
        let gl = GaussLegendre::new(NonZeroUsize::new(n).unwrap());
        gl.iter().map(|(x, w)| (*x, *w)).collect()
    })
}

/// `∫_a^b g` with `panels` equal Gauss–Legendre panels of 16 nodes.
pub(crate) fn composite(a: f64, b: f64, panels: usize, g: &mut dyn FnMut(f64) -> f64) -> f64 {
    let rule = legendre_rule(16);
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * w;
        let mid = lo + 0.5 * w;
        let mut s = 0.0;
        for &(x, wt) in rule.iter() {
            s += wt * g(mid + 0.5 * w * x);
        }
        total += 0.5 * w * s;
    }
    total
}

/// Repeats `level ↦ value` with increasing resolution until two successive
/// values agree; returns the last value and the last difference.
fn refine(max_level: usize, mut at: impl FnMut(usize) -> f64) -> (f64, f64) {
    let mut prev = at(0);
    let mut err = f64::INFINITY;
    for level in 1..=max_level {
        let next = at(level);
        err = (next - prev).abs();
        prev = next;
        if err <= QUAD_TOL * next.abs().max(1.0) {
            break;
        }
    }
    (prev, err)
}

fn accept(what: &str, (value, err): (f64, f64)) -> Result<f64> {
    if err <= ORACLE_TOL * value.abs().max(1.0) && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NoOracle(format!("{what} quadrature did not converge (error estimate {err:e})")))
    }
}

/// `E g(mean + sd ⊙ ξ)` for a standard normal `ξ` in `dim` dimensions.
pub(crate) fn gaussian_expectation(dim: usize, mean: &Coords, sd: &Coords, g: &dyn Fn(&Coords) -> f64) -> Result<f64> {
    let max_level = match dim {
        1 => 5,
        2 => 4,
        _ => 3,
    };
    let at = |level: usize| {
        let rule = normal_rule(16 << level);
        let mut total = 0.0;
        let mut z = *mean;
        match dim {
            1 => {
                for &(x, w) in rule.iter() {
                    z[0] = mean[0] + sd[0] * x;
                    total += w * g(&z);
                }
            }
            2 => {
                for &(x, wx) in rule.iter() {
                    z[0] = mean[0] + sd[0] * x;
                    let mut s = 0.0;
                    for &(y, wy) in rule.iter() {
                        z[1] = mean[1] + sd[1] * y;
                        s += wy * g(&z);
                    }
                    total += wx * s;
                }
            }
            _ => {
                for &(x, wx) in rule.iter() {
                    z[0] = mean[0] + sd[0] * x;
                    let mut s = 0.0;
                    for &(y, wy) in rule.iter() {
                        z[1] = mean[1] + sd[1] * y;
                        let mut u = 0.0;
                        for &(v, wv) in rule.iter() {
                            z[2] = mean[2] + sd[2] * v;
                            u += wv * g(&z);
                        }
                        s += wy * u;
                    }
                    total += wx * s;
                }
            }
        }
        total
    };
    accept("Gauss-Hermite", refine(max_level, at))
}

/// Reflected Gaussian: `z₀ ≥ 0` with density `g(z₀ - x₀) + g(z₀ + x₀)`, the
/// other axes Gaussian about `x`.
fn reflected_expectation(dim: usize, x: &Coords, sd: f64, g: &dyn Fn(&Coords) -> f64) -> Result<f64> {
    let upper = x[0] + 14.0 * sd;
    let norm = 1.0 / (sd * (2.0 * PI).sqrt());
    let inner = |z0: f64| {
        let k = norm * ((-0.5 * ((z0 - x[0]) / sd).powi(2)).exp() + (-0.5 * ((z0 + x[0]) / sd).powi(2)).exp());
        if k == 0.0 {
            return Ok(0.0);
        }
        if dim == 1 {
            return Ok(k * g(&[z0, 0.0, 0.0]));
        }
        let mut mean = *x;
        mean[0] = 0.0;
        let mut sds = [sd; 3];
        sds[0] = 0.0;
        let h = |w: &Coords| g(&[z0, w[1], w[2]]);
        let rest = gaussian_rest(dim, &mean, &sds, &h)?;
        Ok(k * rest)
    };
    let mut failure = None;
    let at = |level: usize| {
        composite(0.0, upper, 16 << level, &mut |z0| match inner(z0) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        })
    };
    let result = refine(6, at);
    if let Some(e) = failure {
        return Err(e);
    }
    accept("reflected Gauss-Legendre", result)
}

/// Gaussian expectation over axes `1..dim` (axis 0 held fixed).
fn gaussian_rest(dim: usize, mean: &Coords, sd: &Coords, g: &dyn Fn(&Coords) -> f64) -> Result<f64> {
    // shift axes down by one so the tensor rule sees a `dim - 1` problem
    let m = [mean[1], mean[2], 0.0];
    let s = [sd[1], sd[2], 0.0];
    let h = |w: &Coords| g(&[0.0, w[0], w[1]]);
    gaussian_expectation(dim - 1, &m, &s, &h)
}

/// `e^{-λt}` mean factor and per-axis standard deviation of the Gaussian
/// law at time `t` (`t = ∞` gives the stationary law).
fn gaussian_law(m: &ModelSpace, x: &Coords, t: f64) -> Option<(Coords, f64)> {
    match m {
        ModelSpace::Euclidean { drift, .. } => {
            let mut mean = *x;
            for (c, b) in mean.iter_mut().zip(drift) {
                *c += b * t;
            }
            Some((mean, (2.0 * t).sqrt()))
        }
        ModelSpace::OrnsteinUhlenbeck { lambda, .. } => {
            if t.is_infinite() {
                Some((linalg::ZERO, (1.0 / lambda).sqrt()))
            } else {
                let var = -(-2.0 * lambda * t).exp_m1() / lambda;
                Some((linalg::scale(x, (-lambda * t).exp()), var.sqrt()))
            }
        }
        _ => None,
    }
}

fn axes_sd(dim: usize, sd: f64) -> Coords {
    let mut s = linalg::ZERO;
    for slot in s.iter_mut().take(dim) {
        *slot = sd;
    }
    s
}

/// Circle kernel with respect to `dθ/(2π)` at angular offset `delta` and
/// time `t`, for radius `r`.
pub fn circle_kernel(r: f64, delta: f64, t: f64) -> f64 {
    let tau = t / (r * r);
    let q = (-tau).exp();
    let tail = 2.0 * q.powi((THETA_TERMS as i32 + 1).pow(2));
    if tail < SERIES_TAIL {
        let mut s = 0.0;
        for n in (1..=THETA_TERMS).rev() {
            s += (-((n * n) as f64) * tau).exp() * (n as f64 * delta).cos();
        }
        1.0 + 2.0 * s
    } else {
        // wrapped Gaussian with angular variance 2τ
        let var = 2.0 * tau;
        let d = delta.rem_euclid(2.0 * PI);
        let mut s = 0.0;
        for k in -3i32..=3 {
            let u = d + 2.0 * PI * k as f64;
            s += (-u * u / (2.0 * var)).exp();
        }
        2.0 * PI * s / (2.0 * PI * var).sqrt()
    }
}

/// Number of Legendre terms needed at `τ = t/r²`.
fn legendre_terms(tau: f64) -> usize {
    let mut l = LEGENDRE_TERMS;
    while (2 * l + 1) as f64 * (-((l * (l + 1)) as f64) * tau).exp() / tau.min(1.0) > SERIES_TAIL && l < 40_000 {
        l += 50;
    }
    l
}

/// 2-sphere kernel with respect to normalised area at polar angle `gamma`.
pub fn sphere_kernel(r: f64, gamma: f64, t: f64) -> f64 {
    let tau = t / (r * r);
    sphere_kernel_terms(gamma.cos(), tau, legendre_terms(tau))
}

fn sphere_kernel_terms(c: f64, tau: f64, terms: usize) -> f64 {
    let (mut p0, mut p1) = (1.0, c);
    let mut s = 1.0 + 3.0 * (-2.0 * tau).exp() * c;
    for l in 2..=terms {
        let lf = l as f64;
        let p2 = ((2.0 * lf - 1.0) * c * p1 - (lf - 1.0) * p0) / lf;
        s += (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * tau).exp() * p2;
        p0 = p1;
        p1 = p2;
    }
    s
}

/// Polar panels `[0, w], [w, 2w], [2w, 4w], …, π` each split `2^level`
/// times, with 16 Gauss–Legendre nodes per piece: `(γ, weight)` pairs.
fn polar_nodes(width: f64, level: usize) -> Vec<(f64, f64)> {
    let rule = legendre_rule(16);
    let mut edges = vec![0.0];
    let mut e = width.min(PI);
    while e < PI {
        edges.push(e);
        e *= 2.0;
    }
    edges.push(PI);
    let pieces = 1usize << level;
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let step = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let mid = w[0] + (p as f64 + 0.5) * step;
            for &(x, wt) in rule.iter() {
                out.push((mid + 0.5 * step * x, 0.5 * step * wt));
            }
        }
    }
    out
}

fn sphere_expectation(m: &ModelSpace, r: f64, x: &Point, t: f64, g: &dyn Fn(&Coords) -> f64) -> Result<f64> {
    let tau = t / (r * r);
    let terms = legendre_terms(tau);
    let n = linalg::scale(x.raw(), 1.0 / r);
    let fr = m.frame(x).vectors;
    let width = (2.0 * tau).sqrt().min(PI / 2.0);
    let at = |level: usize| {
        let m = 32usize << level;
        let mut total = 0.0;
        for (gamma, w) in polar_nodes(width, level) {
            let k = sphere_kernel_terms(gamma.cos(), tau, terms);
            let (s, c) = gamma.sin_cos();
            let mut ring = 0.0;
            for j in 0..m {
                let a = 2.0 * PI * j as f64 / m as f64;
                let dir = linalg::add(&linalg::scale(&fr[0], a.cos()), &linalg::scale(&fr[1], a.sin()));
                let z = linalg::scale(&linalg::add(&linalg::scale(&n, c), &linalg::scale(&dir, s)), r);
                ring += g(&z);
            }
            total += w * k * s * ring / m as f64;
        }
        total / 2.0
    };
    accept("sphere", refine(4, at))
}

fn circle_expectation(r: f64, x: &Coords, t: f64, g: &dyn Fn(&Coords) -> f64) -> Result<f64> {
    let theta = x[1].atan2(x[0]);
    let at = |level: usize| {
        let m = 256usize << level;
        let mut s = 0.0;
        for j in 0..m {
            let phi = 2.0 * PI * j as f64 / m as f64;
            s += circle_kernel(r, phi - theta, t) * g(&[r * phi.cos(), r * phi.sin(), 0.0]);
        }
        s / m as f64
    };
    accept("circle", refine(8, at))
}

/// `E g(X_t(x))` from the closed-form transition law.
pub fn oracle_expectation(m: &ModelSpace, x: &Point, t: f64, g: &dyn Fn(&Coords) -> f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid("T", "must be positive"));
    }
    let d = m.dim();
    match m {
        ModelSpace::Euclidean { .. } | ModelSpace::OrnsteinUhlenbeck { .. } => {
            let (mean, sd) = gaussian_law(m, x.raw(), t).unwrap();
            gaussian_expectation(d, &mean, &axes_sd(d, sd), g)
        }
        ModelSpace::HalfSpace { .. } => reflected_expectation(d, x.raw(), (2.0 * t).sqrt(), g),
        ModelSpace::Sphere { dim: 1, radius } => circle_expectation(*radius, x.raw(), t, g),
        ModelSpace::Sphere { radius, .. } => sphere_expectation(m, *radius, x, t, g),
        _ => Err(Error::NoOracle(format!("no closed-form transition law for {}", m.name()))),
    }
}

/// `P_T f(x)` by quadrature against the closed-form kernel.
pub fn oracle_semigroup(m: &ModelSpace, x: &Point, t: f64, f: &TestFunction) -> Result<f64> {
    oracle_expectation(m, x, t, &|z| f.value_raw(z))
}

/// Transition density `p_t(x, y)` with respect to the reference measure.
pub fn heat_kernel(m: &ModelSpace, x: &Point, y: &Point, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", "must be positive"));
    }
    let (a, b) = (x.raw(), y.raw());
    let d = m.dim();
    match m {
        ModelSpace::Sphere { dim: 1, radius } => Ok(circle_kernel(*radius, b[1].atan2(b[0]) - a[1].atan2(a[0]), t)),
        ModelSpace::Sphere { radius, .. } => Ok(sphere_kernel(*radius, m.distance_raw(a, b) / radius, t)),
        ModelSpace::Euclidean { .. } | ModelSpace::OrnsteinUhlenbeck { .. } => {
            let (mean, sd) = gaussian_law(m, a, t).unwrap();
            let mut p = 1.0;
            for i in 0..d {
                p *= normal_density(b[i], mean[i], sd);
            }
            if let ModelSpace::OrnsteinUhlenbeck { lambda, .. } = m {
                for &c in b.iter().take(d) {
                    p /= normal_density(c, 0.0, (1.0 / lambda).sqrt());
                }
            }
            Ok(p)
        }
        ModelSpace::HalfSpace { .. } => {
            let sd = (2.0 * t).sqrt();
            let mut p = normal_density(b[0], a[0], sd) + normal_density(b[0], -a[0], sd);
            for i in 1..d {
                p *= normal_density(b[i], a[i], sd);
            }
            Ok(p)
        }
        _ => Err(Error::NoOracle(format!("no closed-form kernel for {}", m.name()))),
    }
}

fn normal_density(z: f64, mean: f64, sd: f64) -> f64 {
    let u = (z - mean) / sd;
    (-0.5 * u * u).exp() / (sd * (2.0 * PI).sqrt())
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `∫ p_t(y, z) log p_t(y, z) μ(dz)`.
pub fn kernel_entropy(m: &ModelSpace, y: &Point, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", "must be positive"));
    }
    let d = m.dim() as f64;
    match m {
        ModelSpace::Euclidean { .. } => Ok(-0.5 * d * (1.0 + (4.0 * PI * t).ln())),
        ModelSpace::OrnsteinUhlenbeck { lambda, .. } => {
            // relative entropy of N(e^{-λt} y, σ²) with respect to N(0, 1/λ)
            let var = -(-2.0 * lambda * t).exp_m1() / lambda;
            let shrink = (-2.0 * lambda * t).exp();
            let mean2 = linalg::dot(y.raw(), y.raw()) * shrink;
            Ok(0.5 * (d * (lambda * var - 1.0 - (lambda * var).ln()) + lambda * mean2))
        }
        ModelSpace::Sphere { dim: 1, radius } => {
            let at = |level: usize| {
                let n = 256usize << level;
                (0..n)
                    .map(|j| plogp(circle_kernel(*radius, 2.0 * PI * j as f64 / n as f64, t)))
                    .sum::<f64>()
                    / n as f64
            };
            accept("circle entropy", refine(8, at))
        }
        ModelSpace::Sphere { radius, .. } => {
            let tau = t / (radius * radius);
            let terms = legendre_terms(tau);
            let width = (2.0 * tau).sqrt().min(PI / 2.0);
            let at = |level: usize| {
                polar_nodes(width, level)
                    .into_iter()
                    .map(|(g, w)| w * g.sin() * plogp(sphere_kernel_terms(g.cos(), tau, terms)))
                    .sum::<f64>()
                    / 2.0
            };
            accept("sphere entropy", refine(5, at))
        }
        _ => Err(Error::NoOracle(format!("no kernel entropy for {}", m.name()))),
    }
}

/// `μ(B(y, r))` for the reference measure.
pub fn ball_measure(m: &ModelSpace, y: &Point, r: f64) -> Result<f64> {
    match m {
        ModelSpace::Sphere { dim: 1, radius } => Ok((r / (PI * radius)).min(1.0)),
        ModelSpace::Sphere { radius, .. } => Ok(0.5 * (1.0 - (r / radius).min(PI).cos())),
        ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda } => {
            let s = (lambda / 2.0).sqrt();
            let c = y.raw()[0];
            Ok(0.5 * (erf(s * (c + r)) - erf(s * (c - r))))
        }
        ModelSpace::Euclidean { dim, .. } => Ok(match dim {
            1 => 2.0 * r,
            2 => PI * r * r,
            _ => 4.0 / 3.0 * PI * r * r * r,
        }),
        _ => Err(Error::NoOracle(format!("no closed-form ball measure for {}", m.name()))),
    }
}

/// Whether `μ` is a probability measure and kernels are symmetric.
pub fn has_probability_reference(m: &ModelSpace) -> bool {
    matches!(m, ModelSpace::Sphere { .. } | ModelSpace::OrnsteinUhlenbeck { .. })
}

/// `∫ g dμ` for the normalised Gaussian reference of a one-dimensional
/// Ornstein–Uhlenbeck model.
pub fn reference_expectation(m: &ModelSpace, g: &dyn Fn(f64) -> f64) -> Result<f64> {
    match m {
        ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda } => {
            let sd = (1.0 / lambda).sqrt();
            gaussian_expectation(1, &linalg::ZERO, &[sd, 0.0, 0.0], &|z| g(z[0]))
        }
        _ => Err(Error::NoOracle(format!("reference expectation only for one-dimensional ornstein-uhlenbeck, not {}", m.name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn normal_rule_moments() {
        let r = normal_rule(16);
        let m = |k: i32| r.iter().map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!(close(m(0), 1.0, 1e-14));
        assert!(m(1).abs() < 1e-14);
        assert!(close(m(2), 1.0, 1e-13));
        assert!(close(m(4), 3.0, 1e-13));
    }

    #[test]
    fn euclidean_exponential() {
        let m = ModelSpace::euclidean(1);
        let f = TestFunction::Exp { rate: vec![1.0] };
        let v = oracle_semigroup(&m, &Point::new(&[0.0]), 0.5, &f).unwrap();
        assert!(close(v, 0.5f64.exp(), 1e-12));
        let m3 = ModelSpace::euclidean(3);
        let f = TestFunction::Exp { rate: vec![1.0, -0.5, 0.25] };
        let x = Point::new(&[0.1, 0.2, 0.3]);
        let want = (0.1f64 - 0.1 + 0.075 + 0.3 * (1.0 + 0.25 + 0.0625)).exp();
        assert!(close(oracle_semigroup(&m3, &x, 0.3, &f).unwrap(), want, 1e-12));
    }

    #[test]
    fn euclidean_with_drift_shifts_mean() {
        let m = ModelSpace::Euclidean { dim: 2, drift: vec![1.0, -2.0] };
        let f = TestFunction::Coordinate { index: 1 };
        let v = oracle_semigroup(&m, &Point::new(&[0.0, 0.5]), 0.25, &f).unwrap();
        assert!(close(v, 0.0, 1e-13));
    }

    #[test]
    fn ou_stationary_variance() {
        let m = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 1.0 };
        let f = TestFunction::Quadratic { center: vec![0.0] };
        let v = oracle_semigroup(&m, &Point::new(&[0.0]), f64::INFINITY, &f).unwrap();
        assert!(close(v, 1.0, 1e-13));
        let v = oracle_semigroup(&m, &Point::new(&[1.0]), 0.5, &f).unwrap();
        let want = (-1.0f64).exp() + (1.0 - (-1.0f64).exp());
        assert!(close(v, want, 1e-13));
    }

    #[test]
    fn half_space_matches_folded_normal() {
        let m = ModelSpace::HalfSpace { dim: 1 };
        let f = TestFunction::Coordinate { index: 0 };
        // E|N(0, 2t)| = 2 sqrt(t/π)
        let t = 0.3;
        let v = oracle_semigroup(&m, &Point::new(&[0.0]), t, &f).unwrap();
        assert!(close(v, 2.0 * (t / PI).sqrt(), 1e-11));
        let one = oracle_semigroup(&m, &Point::new(&[0.4]), t, &TestFunction::Constant { value: 1.0 }).unwrap();
        assert!(close(one, 1.0, 1e-11));
        // second moment is unaffected by reflection
        let m2 = ModelSpace::HalfSpace { dim: 2 };
        let q = TestFunction::Quadratic { center: vec![0.0, 0.0] };
        let v = oracle_semigroup(&m2, &Point::new(&[0.2, 1.0]), t, &q).unwrap();
        assert!(close(v, 0.04 + 1.0 + 4.0 * t, 1e-11));
    }

    #[test]
    fn circle_cosine_decays() {
        let m = ModelSpace::Sphere { dim: 1, radius: 1.0 };
        let f = TestFunction::Coordinate { index: 0 };
        for t in [0.001, 0.05, 0.7, 3.0] {
            let v = oracle_semigroup(&m, &Point::on_circle(1.0, 0.0), t, &f).unwrap();
            assert!(close(v, (-t).exp(), 1e-11), "t = {t}: {v}");
        }
        // radius 2: eigenvalue 1/4
        let m = ModelSpace::Sphere { dim: 1, radius: 2.0 };
        let v = oracle_semigroup(&m, &Point::on_circle(2.0, 0.3), 0.8, &f).unwrap();
        assert!(close(v, 2.0 * 0.3f64.cos() * (-0.2f64).exp(), 1e-11));
    }

    #[test]
    fn circle_kernel_branches_agree() {
        // the theta series and the wrapped Gaussian describe the same kernel
        let tau = 0.02;
        let theta: f64 = 1.0 + 2.0 * (1..=THETA_TERMS).map(|n| (-((n * n) as f64) * tau).exp() * (n as f64 * 0.3).cos()).sum::<f64>();
        let var = 2.0 * tau;
        let wrapped: f64 = (-3..=3)
            .map(|k| {
                let u = 0.3 + 2.0 * PI * k as f64;
                (-u * u / (2.0 * var)).exp()
            })
            .sum::<f64>()
            * 2.0
            * PI
            / (2.0 * PI * var).sqrt();
        assert!(close(theta, wrapped, 1e-12));
    }

    #[test]
    fn sphere_coordinate_eigenfunction() {
        for r in [1.0, 1.5] {
            let m = ModelSpace::Sphere { dim: 2, radius: r };
            let x = Point::on_sphere(r, 0.4, 1.1);
            let f = TestFunction::Coordinate { index: 2 };
            for t in [0.002, 0.1, 1.0] {
                let v = oracle_semigroup(&m, &x, t, &f).unwrap();
                let want = r * 0.4f64.cos() * (-2.0 * t / (r * r)).exp();
                assert!(close(v, want, 1e-10), "r {r} t {t}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn sphere_second_harmonic() {
        // z² - r²/3 is an l = 2 harmonic with eigenvalue 6/r²
        let m = ModelSpace::Sphere { dim: 2, radius: 1.0 };
        let x = Point::on_sphere(1.0, 0.9, 0.0);
        let f = TestFunction::Quadratic { center: vec![0.0, 0.0, 0.0] };
        let g = |z: &Coords| z[2] * z[2] - 1.0 / 3.0;
        let t = 0.15;
        let v = oracle_expectation(&m, &x, t, &g).unwrap();
        let want = (0.9f64.cos().powi(2) - 1.0 / 3.0) * (-6.0 * t).exp();
        assert!(close(v, want, 1e-10));
        assert!(close(oracle_semigroup(&m, &x, t, &f).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn kernels_are_normalised() {
        let cases: Vec<(ModelSpace, Point)> = vec![
            (ModelSpace::Sphere { dim: 1, radius: 1.0 }, Point::on_circle(1.0, 0.2)),
            (ModelSpace::Sphere { dim: 2, radius: 1.0 }, Point::on_sphere(1.0, 0.3, 0.0)),
        ];
        for (m, y) in cases {
            for t in [0.01, 0.2] {
                let mass = oracle_expectation(&m, &y, t, &|_| 1.0).unwrap();
                assert!(close(mass, 1.0, 1e-11), "{} t {t}: {mass}", m.name());
            }
        }
        let m = ModelSpace::euclidean(1);
        let y = Point::new(&[0.3]);
        let mass = composite(-10.0, 10.0, 64, &mut |z| heat_kernel(&m, &y, &Point::new(&[z]), 0.5).unwrap());
        assert!(close(mass, 1.0, 1e-12));
        let ou = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 2.0 };
        let mass = reference_expectation(&ou, &|z| heat_kernel(&ou, &y, &Point::new(&[z]), 0.3).unwrap()).unwrap();
        assert!(close(mass, 1.0, 1e-10));
    }

    #[test]
    fn circle_kernel_on_diagonal_exceeds_one() {
        for t in [0.01, 0.5, 5.0] {
            assert!(circle_kernel(1.0, 0.0, t) >= 1.0);
            assert!(sphere_kernel(1.0, 0.0, t) >= 1.0);
        }
        assert!(close(circle_kernel(1.0, 2.0, 40.0), 1.0, 1e-14));
    }

    #[test]
    fn entropy_closed_forms_match_quadrature() {
        let ou = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 1.5 };
        let y = Point::new(&[0.7]);
        let t = 0.4;
        let q = reference_expectation(&ou, &|z| plogp(heat_kernel(&ou, &y, &Point::new(&[z]), t).unwrap())).unwrap();
        assert!(close(kernel_entropy(&ou, &y, t).unwrap(), q, 1e-8));
        let m = ModelSpace::euclidean(1);
        let q = composite(-12.0, 12.0, 128, &mut |z| plogp(heat_kernel(&m, &y, &Point::new(&[z]), t).unwrap()));
        assert!(close(kernel_entropy(&m, &y, t).unwrap(), q, 1e-11));
        // entropies vanish as the kernel flattens
        let s1 = ModelSpace::Sphere { dim: 1, radius: 1.0 };
        assert!(kernel_entropy(&s1, &Point::on_circle(1.0, 0.0), 30.0).unwrap().abs() < 1e-12);
        let s2 = ModelSpace::Sphere { dim: 2, radius: 1.0 };
        let h = kernel_entropy(&s2, &Point::on_sphere(1.0, 0.0, 0.0), 0.05).unwrap();
        assert!(h > 0.0);
    }

    #[test]
    fn ball_measures() {
        let s1 = ModelSpace::Sphere { dim: 1, radius: 1.0 };
        let y = Point::on_circle(1.0, 0.0);
        assert!(close(ball_measure(&s1, &y, PI).unwrap(), 1.0, 1e-15));
        let s2 = ModelSpace::Sphere { dim: 2, radius: 1.0 };
        let y = Point::on_sphere(1.0, 0.0, 0.0);
        assert!(close(ball_measure(&s2, &y, PI / 2.0).unwrap(), 0.5, 1e-15));
        let ou = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 1.0 };
        let b = ball_measure(&ou, &Point::new(&[0.0]), 1.0).unwrap();
        assert!(close(b, 0.682_689_492_137_085_9, 1e-12), "{b}");
        assert!(ball_measure(&ModelSpace::Hyperbolic, &Point::new(&[0.0, 1.0]), 1.0).is_err());
    }

    #[test]
    fn unsupported_variants_have_no_oracle() {
        let f = TestFunction::Constant { value: 1.0 };
        for m in [
            ModelSpace::Hyperbolic,
            ModelSpace::ExplosiveDrift1D,
            ModelSpace::EuclideanBall { dim: 2, radius: 1.0 },
        ] {
            let x = m.point(&[0.1, 0.5][..m.chart_len()]).unwrap();
            assert!(matches!(oracle_semigroup(&m, &x, 0.5, &f), Err(Error::NoOracle(_))));
        }
    }
}
