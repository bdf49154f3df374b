//! Fixed-size helpers for chart coordinates. Every chart used by the model
//! catalogue fits in three ambient coordinates; unused slots stay zero so
//! that dot products never need the active length.

pub type Coords = [f64; 3];

pub const ZERO: Coords = [0.0; 3];

#[inline]
pub fn dot(a: &Coords, b: &Coords) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Coords) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn add(a: &Coords, b: &Coords) -> Coords {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Coords, b: &Coords) -> Coords {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: &Coords, s: f64) -> Coords {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// `a + s * b`
#[inline]
pub fn axpy(a: &Coords, s: f64, b: &Coords) -> Coords {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// Minkowski product `-a0 b0 + a1 b1 + a2 b2` on R^{2,1}.
#[inline]
pub fn minkowski(a: &Coords, b: &Coords) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn from_slice(s: &[f64]) -> Coords {
    let mut c = ZERO;
    c[..s.len()].copy_from_slice(s);
    c
}
