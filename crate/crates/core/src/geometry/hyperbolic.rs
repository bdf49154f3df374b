//! Hyperbolic plane in the upper half-plane chart `(a, b)`, `b > 0`, with
//! metric `(da² + db²) / b²`. Exponential map, logarithm and parallel
//! transport are evaluated on the hyperboloid sheet in R^{2,1} and pulled
//! back through the chart isometry.

use super::linalg::{self, minkowski, Coords};

pub(crate) fn to_hyperboloid(p: &Coords) -> Coords {
    let (a, b) = (p[0], p[1]);
    let s = a * a + b * b;
    [(s + 1.0) / (2.0 * b), a / b, (s - 1.0) / (2.0 * b)]
}

pub(crate) fn from_hyperboloid(q: &Coords) -> Coords {
    let b = 1.0 / (q[0] - q[2]);
    [q[1] * b, b, 0.0]
}

/// Differential of the chart-to-hyperboloid map at `p`.
pub(crate) fn push_forward(p: &Coords, v: &Coords) -> Coords {
    let (a, b) = (p[0], p[1]);
    let (da, db) = (v[0], v[1]);
    let s = a * a + b * b;
    let common = (a * da + b * db) / b;
    [
        common - (s + 1.0) * db / (2.0 * b * b),
        da / b - a * db / (b * b),
        common - (s - 1.0) * db / (2.0 * b * b),
    ]
}

/// Differential of the hyperboloid-to-chart map at hyperboloid point `q`.
pub(crate) fn pull_back(q: &Coords, w: &Coords) -> Coords {
    let b = 1.0 / (q[0] - q[2]);
    let db = -(w[0] - w[2]) * b * b;
    let da = w[1] * b + q[1] * db;
    [da, db, 0.0]
}

pub(crate) fn inner(p: &Coords, u: &Coords, v: &Coords) -> f64 {
    (u[0] * v[0] + u[1] * v[1]) / (p[1] * p[1])
}

pub(crate) fn distance(x: &Coords, y: &Coords) -> f64 {
    let dx = x[0] - y[0];
    let dy = x[1] - y[1];
    let chord = (dx * dx + dy * dy).sqrt();
    2.0 * (chord / (2.0 * (x[1] * y[1]).sqrt())).asinh()
}

pub(crate) fn exp(x: &Coords, v: &Coords) -> Coords {
    let p = to_hyperboloid(x);
    let w = push_forward(x, v);
    let n = minkowski(&w, &w).max(0.0).sqrt();
    if n <= 1e-300 {
        return *x;
    }
    let q = linalg::add(&linalg::scale(&p, n.cosh()), &linalg::scale(&w, n.sinh() / n));
    from_hyperboloid(&q)
}

pub(crate) fn log(x: &Coords, y: &Coords) -> Coords {
    let theta = distance(x, y);
    if theta <= 1e-300 {
        return linalg::ZERO;
    }
    let p = to_hyperboloid(x);
    let q = to_hyperboloid(y);
    let c = -minkowski(&p, &q);
    let w = linalg::axpy(&q, -c, &p);
    let wn = minkowski(&w, &w).max(0.0).sqrt();
    if wn <= 1e-300 {
        return linalg::ZERO;
    }
    pull_back(&p, &linalg::scale(&w, theta / wn))
}

pub(crate) fn transport(x: &Coords, y: &Coords, v: &Coords) -> Coords {
    let p = to_hyperboloid(x);
    let q = to_hyperboloid(y);
    let w = push_forward(x, v);
    let coef = minkowski(&q, &w) / (1.0 - minkowski(&p, &q));
    let moved = linalg::axpy(&w, coef, &linalg::add(&p, &q));
    pull_back(&q, &moved)
}
