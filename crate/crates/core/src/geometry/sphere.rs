//! Round sphere of radius `r` embedded in R^{d+1}. Tangent vectors are
//! ambient vectors orthogonal to the base point, so the Riemannian inner
//! product is the ambient dot product.

use super::linalg::{self, Coords};

/// Geodesic angle between two points together with the unit direction at
/// `x` pointing towards `y` (zero when the points coincide).
pub(crate) fn angle_and_direction(r: f64, x: &Coords, y: &Coords) -> (f64, Coords) {
    let c = linalg::dot(x, y) / (r * r);
    let w = linalg::axpy(y, -c, x);
    let wn = linalg::norm(&w);
    let theta = (wn / r).atan2(c);
    if wn <= 1e-300 {
        (theta, linalg::ZERO)
    } else {
        (theta, linalg::scale(&w, 1.0 / wn))
    }
}

pub(crate) fn distance(r: f64, x: &Coords, y: &Coords) -> f64 {
    r * angle_and_direction(r, x, y).0
}

pub(crate) fn exp(r: f64, x: &Coords, v: &Coords) -> Coords {
    let n = linalg::norm(v);
    if n <= 1e-300 {
        return *x;
    }
    let theta = n / r;
    let y = linalg::add(
        &linalg::scale(x, theta.cos()),
        &linalg::scale(v, r * theta.sin() / n),
    );
    let yn = linalg::norm(&y);
    linalg::scale(&y, r / yn)
}

pub(crate) fn log(r: f64, x: &Coords, y: &Coords) -> Coords {
    let (theta, u) = angle_and_direction(r, x, y);
    linalg::scale(&u, r * theta)
}

pub(crate) fn transport(r: f64, x: &Coords, y: &Coords, v: &Coords) -> Coords {
    let (theta, u) = angle_and_direction(r, x, y);
    if linalg::dot(&u, &u) == 0.0 {
        return *v;
    }
    let xhat = linalg::scale(x, 1.0 / r);
    let vu = linalg::dot(v, &u);
    let shift = linalg::sub(&linalg::scale(&u, theta.cos() - 1.0), &linalg::scale(&xhat, theta.sin()));
    linalg::axpy(v, vu, &shift)
}

pub(crate) fn project(r: f64, x: &Coords, v: &Coords) -> Coords {
    let xhat = linalg::scale(x, 1.0 / r);
    linalg::axpy(v, -linalg::dot(v, &xhat), &xhat)
}

/// Orthonormal tangent frame at `x` built from the ambient axes least
/// aligned with `x`.
pub(crate) fn frame(dim: usize, r: f64, x: &Coords) -> [Coords; 3] {
    let mut out = [linalg::ZERO; 3];
    if dim == 1 {
        out[0] = [-x[1] / r, x[0] / r, 0.0];
        return out;
    }
    let xhat = linalg::scale(x, 1.0 / r);
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&a, &b| xhat[a].abs().partial_cmp(&xhat[b].abs()).unwrap());
    let mut k = 0;
    for &a in &axes {
        if k == dim {
            break;
        }
        let mut e = linalg::ZERO;
        e[a] = 1.0;
        let mut v = project(r, x, &e);
        for prev in out.iter().take(k) {
            v = linalg::axpy(&v, -linalg::dot(&v, prev), prev);
        }
        let n = linalg::norm(&v);
        if n > 1e-8 {
            out[k] = linalg::scale(&v, 1.0 / n);
            k += 1;
        }
    }
    out
}
