//! Model manifolds with closed-form geometry.
//!
//! Every [`ModelSpace`] variant supplies exact distance, exponential and
//! logarithm maps, parallel transport along minimal geodesics, the
//! Bakry–Émery curvature `Ric(u,u) - <u, ∇_u Z>` and, where present, the
//! boundary normal and second fundamental form. Charts:
//!
//! * flat variants use Cartesian coordinates;
//! * the sphere is embedded in R^{d+1} (tangent vectors are ambient vectors
//!   orthogonal to the base point);
//! * the hyperbolic plane uses the upper half-plane `(a, b)`, `b > 0`.
//!
//! Pairwise operations are restricted to `0.9 ×` the injectivity radius so
//! that minimal geodesics are unique.

mod hyperbolic;
pub(crate) mod linalg;
mod sphere;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use linalg::Coords;

/// Fraction of the injectivity radius usable by pairwise operations.
pub const INJECTIVITY_MARGIN: f64 = 0.9;

/// A point in the chart of a model space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Point {
    coords: Coords,
    len: usize,
}

impl Point {
    /// Panics if more than three coordinates are given.
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= 3,
            "charts have between one and three coordinates"
        );
        Point {
            coords: linalg::from_slice(coords),
            len: coords.len(),
        }
    }

    pub(crate) fn from_raw(coords: Coords, len: usize) -> Self {
        Point { coords, len }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.len]
    }

    pub fn raw(&self) -> &Coords {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Point at angle `theta` on the circle of radius `r`.
    pub fn on_circle(r: f64, theta: f64) -> Self {
        Point::new(&[r * theta.cos(), r * theta.sin()])
    }

    /// Point on the 2-sphere of radius `r` with polar angle `polar`
    /// measured from the north pole `(0, 0, r)`.
    pub fn on_sphere(r: f64, polar: f64, azimuth: f64) -> Self {
        Point::new(&[
            r * polar.sin() * azimuth.cos(),
            r * polar.sin() * azimuth.sin(),
            r * polar.cos(),
        ])
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.coords().to_vec()
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = String;

    fn try_from(v: Vec<f64>) -> std::result::Result<Self, String> {
        if v.is_empty() || v.len() > 3 {
            return Err(format!("points need 1 to 3 coordinates, got {}", v.len()));
        }
        Ok(Point::new(&v))
    }
}

/// Tangent vector in chart components at `base`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVec {
    pub base: Point,
    comps: Coords,
}

impl TangentVec {
    pub fn new(base: Point, comps: &[f64]) -> Self {
        assert_eq!(comps.len(), base.len(), "component count must match chart");
        TangentVec {
            base,
            comps: linalg::from_slice(comps),
        }
    }

    pub(crate) fn from_raw(base: Point, comps: Coords) -> Self {
        TangentVec { base, comps }
    }

    pub fn zero(base: Point) -> Self {
        TangentVec {
            base,
            comps: linalg::ZERO,
        }
    }

    pub fn components(&self) -> &[f64] {
        &self.comps[..self.base.len()]
    }

    pub fn raw(&self) -> &Coords {
        &self.comps
    }

    pub fn scaled(&self, s: f64) -> Self {
        TangentVec::from_raw(self.base, linalg::scale(&self.comps, s))
    }
}

/// Orthonormal frame of the tangent space, in chart components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub vectors: [Coords; 3],
    pub count: usize,
}

impl Frame {
    /// `Σ coeffs[i] · e_i`
    #[inline]
    pub fn combine(&self, coeffs: &[f64; 3]) -> Coords {
        let mut out = linalg::ZERO;
        for i in 0..self.count {
            out = linalg::axpy(&out, coeffs[i], &self.vectors[i]);
        }
        out
    }
}

/// Inward normal and second fundamental form at a boundary point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryData {
    pub normal: TangentVec,
    pub second_fundamental: f64,
}

/// The catalogue of model manifolds (with drift `Z` and boundary data).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpace {
    /// R^d with a constant drift vector (empty means `Z = 0`).
    Euclidean {
        dim: usize,
        #[serde(default)]
        drift: Vec<f64>,
    },
    /// R^d with drift `Z(x) = -λ x`.
    OrnsteinUhlenbeck { dim: usize, lambda: f64 },
    /// Round sphere of the given radius, `dim ∈ {1, 2}`.
    Sphere { dim: usize, radius: f64 },
    /// Hyperbolic plane, upper half-plane chart.
    Hyperbolic,
    /// `{x : x₁ ≥ 0}` with reflection at `x₁ = 0`, inward normal `e₁`.
    HalfSpace { dim: usize },
    /// Closed ball of radius `radius` about the origin, reflecting on its
    /// boundary sphere.
    EuclideanBall { dim: usize, radius: f64 },
    /// The real line with drift `Z(x) = x³`; paths explode in finite time.
    #[serde(rename = "explosive-drift-1d")]
    ExplosiveDrift1D,
}

/// Flat variants share Cartesian geometry.
fn is_flat(m: &ModelSpace) -> bool {
    !matches!(m, ModelSpace::Sphere { .. } | ModelSpace::Hyperbolic)
}

impl ModelSpace {
    pub fn euclidean(dim: usize) -> Self {
        ModelSpace::Euclidean { dim, drift: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        match self {
            ModelSpace::Euclidean { dim, drift } => {
                if !(1..=3).contains(dim) {
                    return bad("euclidean dimension must be 1..=3");
                }
                if !drift.is_empty() && drift.len() != *dim {
                    return bad("euclidean drift must be empty or have `dim` entries");
                }
            }
            ModelSpace::OrnsteinUhlenbeck { dim, lambda } => {
                if !(1..=3).contains(dim) {
                    return bad("ornstein-uhlenbeck dimension must be 1..=3");
                }
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return bad("ornstein-uhlenbeck lambda must be positive");
                }
            }
            ModelSpace::Sphere { dim, radius } => {
                if !(1..=2).contains(dim) {
                    return bad("sphere dimension must be 1 or 2");
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad("sphere radius must be positive");
                }
            }
            ModelSpace::HalfSpace { dim } => {
                if !(1..=3).contains(dim) {
                    return bad("half-space dimension must be 1..=3");
                }
            }
            ModelSpace::EuclideanBall { dim, radius } => {
                if !(1..=3).contains(dim) {
                    return bad("ball dimension must be 1..=3");
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad("ball radius must be positive");
                }
            }
            ModelSpace::Hyperbolic | ModelSpace::ExplosiveDrift1D => {}
        }
        Ok(())
    }

    /// Short stable name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpace::Euclidean { .. } => "euclidean",
            ModelSpace::OrnsteinUhlenbeck { .. } => "ornstein-uhlenbeck",
            ModelSpace::Sphere { .. } => "sphere",
            ModelSpace::Hyperbolic => "hyperbolic",
            ModelSpace::HalfSpace { .. } => "half-space",
            ModelSpace::EuclideanBall { .. } => "euclidean-ball",
            ModelSpace::ExplosiveDrift1D => "explosive-drift-1d",
        }
    }

    /// Manifold dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpace::Euclidean { dim, .. }
            | ModelSpace::OrnsteinUhlenbeck { dim, .. }
            | ModelSpace::Sphere { dim, .. }
            | ModelSpace::HalfSpace { dim }
            | ModelSpace::EuclideanBall { dim, .. } => *dim,
            ModelSpace::Hyperbolic => 2,
            ModelSpace::ExplosiveDrift1D => 1,
        }
    }

    /// Number of chart coordinates (`d + 1` for the embedded sphere).
    pub fn chart_len(&self) -> usize {
        match self {
            ModelSpace::Sphere { dim, .. } => dim + 1,
            _ => self.dim(),
        }
    }

    pub fn has_boundary(&self) -> bool {
        matches!(self, ModelSpace::HalfSpace { .. } | ModelSpace::EuclideanBall { .. })
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, ModelSpace::Sphere { .. } | ModelSpace::EuclideanBall { .. })
    }

    /// `P_t 1 = 1` for every variant except the explosive drift.
    pub fn is_conservative(&self) -> bool {
        !matches!(self, ModelSpace::ExplosiveDrift1D)
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self {
            ModelSpace::Sphere { radius, .. } => std::f64::consts::PI * radius,
            _ => f64::INFINITY,
        }
    }

    pub fn usable_radius(&self) -> f64 {
        INJECTIVITY_MARGIN * self.injectivity_radius()
    }

    /// Largest metric-ball radius that still describes a proper subset.
    pub(crate) fn diameter(&self) -> f64 {
        self.injectivity_radius()
    }

    /// Whether `p` lies in the chart domain (closed, small tolerance).
    pub fn contains(&self, p: &Point) -> bool {
        if p.len() != self.chart_len() || p.coords().iter().any(|c| !c.is_finite()) {
            return false;
        }
        let c = p.raw();
        match self {
            ModelSpace::Sphere { radius, .. } => (linalg::norm(c) - radius).abs() <= 1e-8 * radius,
            ModelSpace::Hyperbolic => c[1] > 0.0,
            ModelSpace::HalfSpace { .. } => c[0] >= -1e-12,
            ModelSpace::EuclideanBall { radius, .. } => linalg::norm(c) <= radius * (1.0 + 1e-12),
            _ => true,
        }
    }

    /// Validated point constructor.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.is_empty() || coords.len() > 3 {
            return Err(Error::invalid("point", "needs 1 to 3 coordinates"));
        }
        let p = Point::new(coords);
        if !self.contains(&p) {
            return Err(Error::invalid(
                "point",
                format!("{coords:?} is outside the chart domain of {}", self.name()),
            ));
        }
        Ok(p)
    }

    /// Riemannian inner product of chart components at `base`.
    #[inline]
    pub(crate) fn inner_raw(&self, base: &Coords, u: &Coords, v: &Coords) -> f64 {
        match self {
            ModelSpace::Hyperbolic => hyperbolic::inner(base, u, v),
            _ => linalg::dot(u, v),
        }
    }

    pub fn inner(&self, u: &TangentVec, v: &TangentVec) -> f64 {
        self.inner_raw(u.base.raw(), &u.comps, &v.comps)
    }

    pub fn norm(&self, v: &TangentVec) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    #[inline]
    pub(crate) fn distance_raw(&self, x: &Coords, y: &Coords) -> f64 {
        match self {
            ModelSpace::Sphere { radius, .. } => sphere::distance(*radius, x, y),
            ModelSpace::Hyperbolic => hyperbolic::distance(x, y),
            _ => linalg::norm(&linalg::sub(x, y)),
        }
    }

    /// Riemannian distance.
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        self.distance_raw(x.raw(), y.raw())
    }

    fn check_pair(&self, d: f64) -> Result<()> {
        let limit = self.usable_radius();
        if d > limit {
            Err(Error::InjectivityRadiusExceeded { distance: d, limit })
        } else {
            Ok(())
        }
    }

    /// Exponential map without the injectivity check.
    #[inline]
    pub(crate) fn exp_raw(&self, x: &Coords, v: &Coords) -> Coords {
        match self {
            ModelSpace::Sphere { radius, .. } => sphere::exp(*radius, x, v),
            ModelSpace::Hyperbolic => hyperbolic::exp(x, v),
            _ => linalg::add(x, v),
        }
    }

    #[inline]
    pub(crate) fn log_raw(&self, x: &Coords, y: &Coords) -> Coords {
        match self {
            ModelSpace::Sphere { radius, .. } => sphere::log(*radius, x, y),
            ModelSpace::Hyperbolic => hyperbolic::log(x, y),
            _ => linalg::sub(y, x),
        }
    }

    #[inline]
    pub(crate) fn transport_raw(&self, x: &Coords, y: &Coords, v: &Coords) -> Coords {
        match self {
            ModelSpace::Sphere { radius, .. } => sphere::transport(*radius, x, y, v),
            ModelSpace::Hyperbolic => hyperbolic::transport(x, y, v),
            _ => *v,
        }
    }

    /// `exp_x(v)`; requires `|v|` within the usable injectivity radius.
    pub fn exp_map(&self, x: &Point, v: &TangentVec) -> Result<Point> {
        self.check_pair(self.norm(v))?;
        Ok(Point::from_raw(self.exp_raw(x.raw(), &v.comps), x.len()))
    }

    /// Inverse of [`exp_map`](Self::exp_map) inside the injectivity radius.
    pub fn log_map(&self, x: &Point, y: &Point) -> Result<TangentVec> {
        self.check_pair(self.distance(x, y))?;
        Ok(TangentVec::from_raw(*x, self.log_raw(x.raw(), y.raw())))
    }

    /// `∇ρ(x, ·)(y)`: the unit vector at `y` pointing away from `x`.
    pub fn grad_distance(&self, x: &Point, y: &Point) -> Result<TangentVec> {
        let d = self.distance(x, y);
        if d <= 1e-14 {
            return Err(Error::CoincidentPoints);
        }
        self.check_pair(d)?;
        Ok(TangentVec::from_raw(*y, self.grad_distance_raw(x.raw(), y.raw(), d)))
    }

    #[inline]
    pub(crate) fn grad_distance_raw(&self, x: &Coords, y: &Coords, d: f64) -> Coords {
        linalg::scale(&self.log_raw(y, x), -1.0 / d)
    }

    /// Parallel transport of `v ∈ T_xM` along the minimal geodesic to `y`.
    pub fn parallel_transport(&self, x: &Point, y: &Point, v: &TangentVec) -> Result<TangentVec> {
        self.check_pair(self.distance(x, y))?;
        Ok(TangentVec::from_raw(*y, self.transport_raw(x.raw(), y.raw(), &v.comps)))
    }

    /// Point at fraction `s ∈ [0,1]` of the minimal geodesic from `x` to `y`.
    pub fn geodesic_point(&self, x: &Point, y: &Point, s: f64) -> Result<Point> {
        let v = self.log_map(x, y)?;
        Ok(Point::from_raw(
            self.exp_raw(x.raw(), &linalg::scale(&v.comps, s)),
            x.len(),
        ))
    }

    /// Drift vector field `Z` at `x`.
    #[inline]
    pub(crate) fn drift_raw(&self, x: &Coords) -> Coords {
        match self {
            ModelSpace::Euclidean { drift, .. } if !drift.is_empty() => linalg::from_slice(drift),
            ModelSpace::OrnsteinUhlenbeck { lambda, .. } => linalg::scale(x, -lambda),
            ModelSpace::ExplosiveDrift1D => [x[0] * x[0] * x[0], 0.0, 0.0],
            _ => linalg::ZERO,
        }
    }

    pub fn drift(&self, x: &Point) -> TangentVec {
        TangentVec::from_raw(*x, self.drift_raw(x.raw()))
    }

    pub fn has_drift(&self) -> bool {
        match self {
            ModelSpace::Euclidean { drift, .. } => drift.iter().any(|&c| c != 0.0),
            ModelSpace::OrnsteinUhlenbeck { .. } | ModelSpace::ExplosiveDrift1D => true,
            _ => false,
        }
    }

    /// Ricci curvature `Ric(u, u)` (no drift term).
    pub fn ricci(&self, x: &Point, u: &TangentVec) -> f64 {
        let n2 = self.inner(u, u);
        let _ = x;
        match self {
            ModelSpace::Sphere { dim, radius } => (*dim as f64 - 1.0) / (radius * radius) * n2,
            ModelSpace::Hyperbolic => -n2,
            _ => 0.0,
        }
    }

    /// Bakry–Émery curvature `Ric(u,u) - <u, ∇_u Z>`.
    pub fn ricci_z(&self, x: &Point, u: &TangentVec) -> f64 {
        let n2 = self.inner(u, u);
        let drift_part = match self {
            ModelSpace::OrnsteinUhlenbeck { lambda, .. } => -lambda * n2,
            ModelSpace::ExplosiveDrift1D => 3.0 * x.raw()[0] * x.raw()[0] * n2,
            _ => 0.0,
        };
        self.ricci(x, u) - drift_part
    }

    /// `min_{|u|=1} Ric_Z(u,u)` in closed form. Every catalogue variant is
    /// isotropic so the minimum is attained in every direction.
    pub fn min_ricci_z(&self, x: &Point) -> f64 {
        let frame = self.frame(x);
        let u = TangentVec::from_raw(*x, frame.vectors[0]);
        self.ricci_z(x, &u)
    }

    /// `min_{|u|=1} Ric(u,u)`.
    pub fn min_ricci(&self, x: &Point) -> f64 {
        let frame = self.frame(x);
        let u = TangentVec::from_raw(*x, frame.vectors[0]);
        self.ricci(x, &u)
    }

    /// Inward unit normal and `II(u,u)` at a boundary point.
    pub fn boundary_data(&self, x: &Point, u: &TangentVec) -> Result<BoundaryData> {
        let c = x.raw();
        match self {
            ModelSpace::HalfSpace { .. } => {
                if c[0].abs() > 1e-9 {
                    return Err(Error::NotOnBoundary { offset: c[0] });
                }
                let mut n = linalg::ZERO;
                n[0] = 1.0;
                Ok(BoundaryData {
                    normal: TangentVec::from_raw(*x, n),
                    second_fundamental: 0.0,
                })
            }
            ModelSpace::EuclideanBall { radius, .. } => {
                let r = linalg::norm(c);
                if (r - radius).abs() > 1e-9 * radius.max(1.0) {
                    return Err(Error::NotOnBoundary { offset: r - radius });
                }
                Ok(BoundaryData {
                    normal: TangentVec::from_raw(*x, linalg::scale(c, -1.0 / r)),
                    second_fundamental: self.inner(u, u) / radius,
                })
            }
            _ => Err(Error::NoBoundary),
        }
    }

    /// Inward normal at the boundary point nearest to `x` (flat boundary
    /// variants only).
    pub(crate) fn inward_normal_raw(&self, x: &Coords) -> Option<Coords> {
        match self {
            ModelSpace::HalfSpace { .. } => Some([1.0, 0.0, 0.0]),
            ModelSpace::EuclideanBall { .. } => {
                let r = linalg::norm(x);
                (r > 0.0).then(|| linalg::scale(x, -1.0 / r))
            }
            _ => None,
        }
    }

    /// Laplacian of `ρ(c, ·)` at `z`, for `z ≠ c` inside the injectivity
    /// radius.
    pub fn laplacian_distance(&self, c: &Point, z: &Point) -> f64 {
        self.laplacian_distance_at(self.distance(c, z))
    }

    /// Same as [`laplacian_distance`](Self::laplacian_distance) given only
    /// the distance (all catalogue variants are isotropic).
    pub fn laplacian_distance_at(&self, rho: f64) -> f64 {
        let k = self.dim() as f64 - 1.0;
        match self {
            ModelSpace::Sphere { radius, .. } => k / (radius * (rho / radius).tan()),
            ModelSpace::Hyperbolic => k / rho.tanh(),
            _ => k / rho,
        }
    }

    /// Canonical orthonormal frame at `x`.
    pub fn frame(&self, x: &Point) -> Frame {
        let d = self.dim();
        let c = x.raw();
        let vectors = match self {
            ModelSpace::Sphere { dim, radius } => sphere::frame(*dim, *radius, c),
            ModelSpace::Hyperbolic => [[c[1], 0.0, 0.0], [0.0, c[1], 0.0], linalg::ZERO],
            _ => {
                let mut v = [linalg::ZERO; 3];
                for (i, e) in v.iter_mut().enumerate().take(d) {
                    e[i] = 1.0;
                }
                v
            }
        };
        Frame { vectors, count: d }
    }

    /// Transports a frame along the minimal geodesic and re-orthonormalises
    /// against rounding drift.
    pub(crate) fn transport_frame(&self, x: &Coords, y: &Coords, frame: &mut Frame) {
        if is_flat(self) {
            return;
        }
        if let ModelSpace::Sphere { dim: 1, radius } = self {
            frame.vectors[0] = [-y[1] / radius, y[0] / radius, 0.0];
            return;
        }
        for i in 0..frame.count {
            let mut v = self.transport_raw(x, y, &frame.vectors[i]);
            if let ModelSpace::Sphere { radius, .. } = self {
                v = sphere::project(*radius, y, &v);
            }
            for j in 0..i {
                let prev = frame.vectors[j];
                let c = self.inner_raw(y, &v, &prev);
                v = linalg::axpy(&v, -c, &prev);
            }
            let n = self.inner_raw(y, &v, &v).sqrt();
            frame.vectors[i] = linalg::scale(&v, 1.0 / n);
        }
    }

    /// Riemannian gradient from the chart gradient `∂f`.
    pub(crate) fn riemannian_gradient_raw(&self, x: &Coords, chart_grad: &Coords) -> Coords {
        match self {
            ModelSpace::Sphere { radius, .. } => sphere::project(*radius, x, chart_grad),
            ModelSpace::Hyperbolic => linalg::scale(chart_grad, x[1] * x[1]),
            _ => *chart_grad,
        }
    }

    /// Laplace–Beltrami operator from the chart gradient and Hessian.
    pub(crate) fn laplacian_from_chart(&self, x: &Coords, grad: &Coords, hess: &[Coords; 3]) -> f64 {
        match self {
            ModelSpace::Sphere { dim, radius } => {
                let n = linalg::scale(x, 1.0 / radius);
                let trace = hess[0][0] + hess[1][1] + hess[2][2];
                let mut nhn = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        nhn += n[i] * hess[i][j] * n[j];
                    }
                }
                trace - nhn - (*dim as f64 / radius) * linalg::dot(grad, &n)
            }
            ModelSpace::Hyperbolic => x[1] * x[1] * (hess[0][0] + hess[1][1]),
            _ => (0..self.dim()).map(|i| hess[i][i]).sum(),
        }
    }

    /// Reflects a proposed chart position back into the domain and returns
    /// the inward displacement applied (the local-time increment).
    #[inline]
    pub(crate) fn reflect(&self, p: &mut Coords) -> f64 {
        match self {
            ModelSpace::HalfSpace { .. } if p[0] < 0.0 => {
                let push = -2.0 * p[0];
                p[0] = -p[0];
                push
            }
            ModelSpace::EuclideanBall { radius, .. } => {
                let r = linalg::norm(p);
                if r <= *radius {
                    return 0.0;
                }
                let target = (2.0 * radius - r).max(0.0);
                *p = linalg::scale(p, target / r);
                r - target
            }
            _ => 0.0,
        }
    }

    /// Projects an ambient vector onto `T_xM` (identity off the sphere).
    pub(crate) fn project_raw(&self, x: &Coords, v: &Coords) -> Coords {
        match self {
            ModelSpace::Sphere { radius, .. } => sphere::project(*radius, x, v),
            _ => *v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{E, FRAC_PI_2, PI};

    fn s2() -> ModelSpace {
        ModelSpace::Sphere { dim: 2, radius: 1.0 }
    }

    fn flat_dir(m: &ModelSpace, x: &Point, comps: &[f64]) -> TangentVec {
        TangentVec::from_raw(*x, m.project_raw(x.raw(), &linalg::from_slice(comps)))
    }

    #[test]
    fn euclidean_distance_and_exp() {
        let m = ModelSpace::euclidean(2);
        let o = Point::new(&[0.0, 0.0]);
        let p = Point::new(&[3.0, 4.0]);
        assert_eq!(m.distance(&o, &p), 5.0);
        let v = TangentVec::new(o, &[1.5, -2.0]);
        assert_eq!(m.exp_map(&o, &v).unwrap().coords(), &[1.5, -2.0]);
        assert_eq!(m.log_map(&o, &p).unwrap().components(), &[3.0, 4.0]);
        assert_eq!(m.log_map(&p, &p).unwrap().components(), &[0.0, 0.0]);
    }

    #[test]
    fn sphere_quarter_circle() {
        let m = s2();
        let north = Point::on_sphere(1.0, 0.0, 0.0);
        let equator = Point::on_sphere(1.0, FRAC_PI_2, 0.0);
        assert!((m.distance(&north, &equator) - FRAC_PI_2).abs() < 1e-15);
        let v = TangentVec::new(north, &[FRAC_PI_2, 0.0, 0.0]);
        let e = m.exp_map(&north, &v).unwrap();
        for (a, b) in e.coords().iter().zip(equator.coords()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hyperbolic_vertical_geodesic() {
        let m = ModelSpace::Hyperbolic;
        let a = Point::new(&[0.0, 1.0]);
        let b = Point::new(&[0.0, E]);
        assert!((m.distance(&a, &b) - 1.0).abs() < 1e-14);
        let v = TangentVec::new(a, &[0.0, 1.0]);
        let e = m.exp_map(&a, &v).unwrap();
        assert!(e.coords()[0].abs() < 1e-14);
        assert!((e.coords()[1] - E).abs() < 1e-13);
    }

    /// Integrates the half-plane geodesic equations with RK4 as an
    /// independent check of the closed-form exponential map.
    fn integrate_hyperbolic_geodesic(p: [f64; 2], v: [f64; 2], steps: usize) -> [f64; 2] {
        // a'' = 2 a' b' / b ; b'' = (b'^2 - a'^2) / b
        let rhs = |s: [f64; 4]| -> [f64; 4] {
            let (_, b, da, db) = (s[0], s[1], s[2], s[3]);
            [da, db, 2.0 * da * db / b, (db * db - da * da) / b]
        };
        let mut s = [p[0], p[1], v[0], v[1]];
        let h = 1.0 / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(s);
            let k2 = rhs(std::array::from_fn(|i| s[i] + 0.5 * h * k1[i]));
            let k3 = rhs(std::array::from_fn(|i| s[i] + 0.5 * h * k2[i]));
            let k4 = rhs(std::array::from_fn(|i| s[i] + h * k3[i]));
            s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        [s[0], s[1]]
    }

    #[test]
    fn hyperbolic_exp_matches_geodesic_ode() {
        let m = ModelSpace::Hyperbolic;
        for (p, v) in [([0.3, 1.2], [0.7, -0.4]), ([-1.0, 0.5], [0.2, 0.3]), ([0.0, 1.0], [0.0, 1.0])] {
            let x = Point::new(&p);
            let e = m.exp_map(&x, &TangentVec::new(x, &v)).unwrap();
            let ode = integrate_hyperbolic_geodesic(p, v, 4000);
            assert!((e.coords()[0] - ode[0]).abs() < 1e-10, "{e:?} vs {ode:?}");
            assert!((e.coords()[1] - ode[1]).abs() < 1e-10);
            // geodesic length equals |v|
            let len = m.norm(&TangentVec::new(x, &v));
            assert!((m.distance(&x, &e) - len).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_distance_is_radial_unit() {
        let m = ModelSpace::euclidean(2);
        let g = m
            .grad_distance(&Point::new(&[0.0, 0.0]), &Point::new(&[1.0, 0.0]))
            .unwrap();
        assert_eq!(g.components(), &[1.0, 0.0]);
        assert_eq!(
            m.grad_distance(&Point::new(&[0.5, 0.5]), &Point::new(&[0.5, 0.5])),
            Err(Error::CoincidentPoints)
        );
    }

    #[test]
    fn grad_distance_finite_difference() {
        let h = 1e-5;
        for m in [s2(), ModelSpace::Hyperbolic, ModelSpace::euclidean(2)] {
            let (x, y) = match m {
                ModelSpace::Sphere { .. } => (Point::on_sphere(1.0, 0.2, 0.1), Point::on_sphere(1.0, 1.1, 2.0)),
                ModelSpace::Hyperbolic => (Point::new(&[0.1, 1.0]), Point::new(&[0.8, 1.7])),
                _ => (Point::new(&[0.0, 0.0]), Point::new(&[0.3, -1.2])),
            };
            let g = m.grad_distance(&x, &y).unwrap();
            assert!((m.norm(&g) - 1.0).abs() < 1e-12);
            let frame = m.frame(&y);
            for i in 0..frame.count {
                let u = TangentVec::from_raw(y, frame.vectors[i]);
                let moved = m.exp_map(&y, &u.scaled(h)).unwrap();
                let fd = (m.distance(&x, &moved) - m.distance(&x, &y)) / h;
                assert!((fd - m.inner(&g, &u)).abs() < 1e-4, "{} fd {fd}", m.name());
            }
        }
    }

    #[test]
    fn sphere_transport_keeps_great_circle_tangent() {
        let m = s2();
        let x = Point::on_sphere(1.0, 0.4, 0.0);
        let y = Point::on_sphere(1.0, 1.5, 0.0);
        // tangent of the meridian through x and y
        let t = m.log_map(&x, &y).unwrap();
        let unit = t.scaled(1.0 / m.norm(&t));
        let moved = m.parallel_transport(&x, &y, &unit).unwrap();
        // closed-form: rotation about the y-axis by the travelled angle
        let expected = [1.5f64.cos(), 0.0, -(1.5f64.sin())];
        for (a, b) in moved.components().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        // orthogonal direction is unchanged (axis of rotation)
        let e2 = TangentVec::new(x, &[0.0, 1.0, 0.0]);
        let moved2 = m.parallel_transport(&x, &y, &e2).unwrap();
        assert!((moved2.components()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ricci_z_values() {
        let e = ModelSpace::euclidean(3);
        let x = Point::new(&[0.3, 0.1, 0.0]);
        assert_eq!(e.ricci_z(&x, &TangentVec::new(x, &[1.0, 0.0, 0.0])), 0.0);
        let ou = ModelSpace::OrnsteinUhlenbeck { dim: 2, lambda: 1.0 };
        let p = Point::new(&[0.4, -2.0]);
        let u = TangentVec::new(p, &[0.6, 0.8]);
        assert!((ou.ricci_z(&p, &u) - 1.0).abs() < 1e-15);
        let ex = ModelSpace::ExplosiveDrift1D;
        let two = Point::new(&[2.0]);
        assert_eq!(ex.ricci_z(&two, &TangentVec::new(two, &[1.0])), -12.0);
    }

    /// Sectional curvature from the geodesic law of cosines
    /// `L² = 2t² - K t⁴ / 3 + O(t⁶)` for two orthogonal unit-speed
    /// geodesics, summed over an orthonormal complement.
    fn ricci_by_geodesic_deviation(m: &ModelSpace, x: &Point, u: usize) -> f64 {
        let frame = m.frame(x);
        let mut ric = 0.0;
        for w in (0..frame.count).filter(|&w| w != u) {
            let est = |t: f64| {
                let a = m.exp_raw(x.raw(), &linalg::scale(&frame.vectors[u], t));
                let b = m.exp_raw(x.raw(), &linalg::scale(&frame.vectors[w], t));
                let l = m.distance_raw(&a, &b);
                3.0 * (2.0 * t * t - l * l) / t.powi(4)
            };
            // Richardson extrapolation in t²
            let (t1, t2) = (0.02, 0.01);
            ric += (4.0 * est(t2) - est(t1)) / 3.0;
        }
        ric
    }

    #[test]
    fn ricci_matches_geodesic_deviation_oracle() {
        let x = Point::on_sphere(1.0, 0.7, 0.3);
        let s = s2();
        let exact = s.ricci(&x, &TangentVec::from_raw(x, s.frame(&x).vectors[0]));
        assert!((ricci_by_geodesic_deviation(&s, &x, 0) - exact).abs() < 1e-4);
        let r2 = ModelSpace::Sphere { dim: 2, radius: 2.0 };
        let x2 = Point::on_sphere(2.0, 1.1, -0.3);
        assert!((ricci_by_geodesic_deviation(&r2, &x2, 1) - 0.25).abs() < 1e-4);
        let h = ModelSpace::Hyperbolic;
        let y = Point::new(&[0.2, 0.8]);
        assert!((ricci_by_geodesic_deviation(&h, &y, 0) + 1.0).abs() < 1e-4);
    }

    #[test]
    fn boundary_data_cases() {
        let hs = ModelSpace::HalfSpace { dim: 2 };
        let x = Point::new(&[0.0, 0.7]);
        let bd = hs.boundary_data(&x, &TangentVec::new(x, &[0.0, 1.0])).unwrap();
        assert_eq!(bd.normal.components(), &[1.0, 0.0]);
        assert_eq!(bd.second_fundamental, 0.0);
        let ball = ModelSpace::EuclideanBall { dim: 2, radius: 2.0 };
        let b = Point::new(&[0.0, 2.0]);
        let bd = ball.boundary_data(&b, &TangentVec::new(b, &[1.0, 0.0])).unwrap();
        assert!((bd.second_fundamental - 0.5).abs() < 1e-15);
        assert_eq!(bd.normal.components(), &[0.0, -1.0]);
        assert!(matches!(
            ball.boundary_data(&Point::new(&[0.0, 1.0]), &TangentVec::new(b, &[1.0, 0.0])),
            Err(Error::NotOnBoundary { .. })
        ));
        assert_eq!(
            ModelSpace::euclidean(1).boundary_data(&Point::new(&[0.0]), &TangentVec::new(Point::new(&[0.0]), &[1.0])),
            Err(Error::NoBoundary)
        );
    }

    #[test]
    fn injectivity_margin_enforced() {
        let m = s2();
        let n = Point::on_sphere(1.0, 0.0, 0.0);
        let far = Point::on_sphere(1.0, 0.95 * PI, 0.0);
        assert!(matches!(m.log_map(&n, &far), Err(Error::InjectivityRadiusExceeded { .. })));
    }

    #[test]
    fn reflection_keeps_chart_domain() {
        let hs = ModelSpace::HalfSpace { dim: 2 };
        let mut p = [-0.3, 1.0, 0.0];
        let push = hs.reflect(&mut p);
        assert_eq!(p, [0.3, 1.0, 0.0]);
        assert!((push - 0.6).abs() < 1e-15);
        let ball = ModelSpace::EuclideanBall { dim: 2, radius: 1.0 };
        let mut q = [1.2, 0.0, 0.0];
        let push = ball.reflect(&mut q);
        assert!((q[0] - 0.8).abs() < 1e-15 && (push - 0.4).abs() < 1e-15);
    }

    fn sphere_pair() -> impl Strategy<Value = (Point, Point)> {
        (0.0..PI, 0.0..2.0 * PI, 0.0..PI, 0.0..2.0 * PI).prop_filter_map("angle < pi - 0.1", |(a, b, c, d)| {
            let x = Point::on_sphere(1.0, a, b);
            let y = Point::on_sphere(1.0, c, d);
            (s2().distance(&x, &y) < PI - 0.1).then_some((x, y))
        })
    }

    fn hyperbolic_point() -> impl Strategy<Value = Point> {
        (-2.0..2.0f64, 0.2..3.0f64).prop_map(|(a, b)| Point::new(&[a, b]))
    }

    proptest! {
        #[test]
        fn sphere_exp_log_round_trip((x, y) in sphere_pair()) {
            let m = s2();
            prop_assume!(m.distance(&x, &y) < m.usable_radius());
            let v = m.log_map(&x, &y).unwrap();
            prop_assert!((m.norm(&v) - m.distance(&x, &y)).abs() < 1e-10);
            let back = m.exp_map(&x, &v).unwrap();
            prop_assert!(m.distance(&back, &y) < 1e-10);
        }

        #[test]
        fn sphere_transport_isometry((x, y) in sphere_pair(), a in -1.0..1.0f64, b in -1.0..1.0f64) {
            let m = s2();
            prop_assume!(m.distance(&x, &y) < m.usable_radius() && m.distance(&x, &y) > 1e-6);
            let f = m.frame(&x);
            let v = TangentVec::from_raw(x, linalg::add(&linalg::scale(&f.vectors[0], a), &linalg::scale(&f.vectors[1], b)));
            let w = m.parallel_transport(&x, &y, &v).unwrap();
            prop_assert!((m.norm(&w) - m.norm(&v)).abs() < 1e-10);
            // tangent at y
            prop_assert!(linalg::dot(w.raw(), y.raw()).abs() < 1e-10);
            // preserves the angle with the geodesic
            let rho = m.distance(&x, &y);
            let lhs = m.inner(&v, &m.log_map(&x, &y).unwrap()) / rho;
            let rhs = -m.inner(&w, &m.log_map(&y, &x).unwrap()) / rho;
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn hyperbolic_round_trip_and_transport(x in hyperbolic_point(), y in hyperbolic_point(), a in -1.0..1.0f64, b in -1.0..1.0f64) {
            let m = ModelSpace::Hyperbolic;
            prop_assume!(m.distance(&x, &y) > 1e-4);
            let v = m.log_map(&x, &y).unwrap();
            let back = m.exp_map(&x, &v).unwrap();
            prop_assert!(m.distance(&back, &y) < 1e-10);
            prop_assert!((m.norm(&v) - m.distance(&x, &y)).abs() < 1e-10);
            let u = TangentVec::new(x, &[a, b]);
            let w = m.parallel_transport(&x, &y, &u).unwrap();
            prop_assert!((m.norm(&w) - m.norm(&u)).abs() < 1e-10 * (1.0 + m.norm(&u)));
            let rho = m.distance(&x, &y);
            let lhs = m.inner(&u, &v) / rho;
            let rhs = -m.inner(&w, &m.log_map(&y, &x).unwrap()) / rho;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn distance_metric_axioms(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let models = [ModelSpace::euclidean(2), s2(), ModelSpace::Hyperbolic, ModelSpace::Sphere { dim: 1, radius: 1.5 }];
            for m in &models {
                let mut pick = || match m {
                    ModelSpace::Sphere { dim: 2, radius } => Point::on_sphere(*radius, rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI)),
                    ModelSpace::Sphere { radius, .. } => Point::on_circle(*radius, rng.random_range(0.0..2.0 * PI)),
                    ModelSpace::Hyperbolic => Point::new(&[rng.random_range(-2.0..2.0), rng.random_range(0.2..3.0)]),
                    _ => Point::new(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]),
                };
                let (x, y, z) = (pick(), pick(), pick());
                let dxy = m.distance(&x, &y);
                prop_assert!((dxy - m.distance(&y, &x)).abs() < 1e-10);
                prop_assert!(m.distance(&x, &x) < 1e-7);
                prop_assert!(dxy <= m.distance(&x, &z) + m.distance(&z, &y) + 1e-10);
            }
        }
    }

    #[test]
    fn frames_are_orthonormal() {
        for (m, x) in [
            (s2(), Point::on_sphere(1.0, 0.3, 1.0)),
            (ModelSpace::Sphere { dim: 1, radius: 2.0 }, Point::on_circle(2.0, 0.7)),
            (ModelSpace::Hyperbolic, Point::new(&[0.5, 2.5])),
        ] {
            let f = m.frame(&x);
            for i in 0..f.count {
                for j in 0..f.count {
                    let g = m.inner_raw(x.raw(), &f.vectors[i], &f.vectors[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-12);
                }
            }
            let _ = flat_dir(&m, &x, &[0.0; 3][..m.chart_len()]);
        }
    }

    #[test]
    fn laplacian_distance_matches_chart_laplacian() {
        // Δρ(c,·) from the closed form against a chart finite-difference Hessian
        let h = 1e-4;
        let m = ModelSpace::Hyperbolic;
        let c = Point::new(&[0.0, 1.0]);
        let z = Point::new(&[0.4, 1.3]);
        let f = |p: &Coords| m.distance_raw(c.raw(), p);
        let mut hess = [linalg::ZERO; 3];
        let mut grad = linalg::ZERO;
        for i in 0..2 {
            let mut zp = *z.raw();
            let mut zm = *z.raw();
            zp[i] += h;
            zm[i] -= h;
            grad[i] = (f(&zp) - f(&zm)) / (2.0 * h);
            hess[i][i] = (f(&zp) - 2.0 * f(z.raw()) + f(&zm)) / (h * h);
        }
        let lap = m.laplacian_from_chart(z.raw(), &grad, &hess);
        assert!((lap - m.laplacian_distance(&c, &z)).abs() < 1e-5);
    }

    #[test]
    fn model_space_config_roundtrip() {
        let m: ModelSpace = toml::from_str("variant = \"sphere\"\ndim = 2\nradius = 1.0").unwrap();
        assert_eq!(m, s2());
        let ou: ModelSpace = toml::from_str("variant = \"ornstein-uhlenbeck\"\ndim = 1\nlambda = 0.5").unwrap();
        assert_eq!(ou, ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 0.5 });
        assert!(ModelSpace::Sphere { dim: 3, radius: 1.0 }.validate().is_err());
    }
}
