//! Catalogue of test functions with closed-form derivatives.
//!
//! Every function is written in chart coordinates (ambient coordinates on
//! the sphere) so that value, gradient and Hessian come out exactly; the
//! generator `Lg = Δg + <Z, ∇g>` is then assembled by the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{linalg, Coords, ModelSpace, Point};

/// A bounded or explicitly growing test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunction {
    Constant { value: f64 },
    /// `e^{<a, z>}`
    Exp { rate: Vec<f64> },
    /// `exp(-|z - c|² / (2w²))`
    GaussianBump { center: Vec<f64>, width: f64 },
    /// `1 + b exp(-|z - c|² / (2w²))`, bounded away from zero for `b > -1`.
    PositiveBump { center: Vec<f64>, width: f64, height: f64 },
    /// `exp(a ψ(|z - c|² / R²))` with `ψ(q) = exp(1 - 1/(1 - q))` on
    /// `q < 1`, so `log f` is smooth and supported in `B(c, R)`.
    LogBump { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// `z_i`
    Coordinate { index: usize },
    /// `|z - c|²`
    Quadratic { center: Vec<f64> },
}

/// Value, chart gradient and chart Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Coords,
    pub hess: [Coords; 3],
}

fn padded(v: &[f64]) -> Coords {
    let mut c = linalg::ZERO;
    for (slot, x) in c.iter_mut().zip(v) {
        *slot = *x;
    }
    c
}

/// Jet of `exp(s)` given the jet of `s`.
fn exp_jet(s: Jet) -> Jet {
    let v = s.value.exp();
    let mut hess = [linalg::ZERO; 3];
    for i in 0..3 {
        for j in 0..3 {
            hess[i][j] = v * (s.hess[i][j] + s.grad[i] * s.grad[j]);
        }
    }
    Jet {
        value: v,
        grad: linalg::scale(&s.grad, v),
        hess,
    }
}

/// Jet of `a |z - c|²`.
fn quadratic_jet(z: &Coords, c: &Coords, a: f64) -> Jet {
    let d = linalg::sub(z, c);
    let mut hess = [linalg::ZERO; 3];
    for (i, row) in hess.iter_mut().enumerate() {
        row[i] = 2.0 * a;
    }
    Jet {
        value: a * linalg::dot(&d, &d),
        grad: linalg::scale(&d, 2.0 * a),
        hess,
    }
}

impl TestFunction {
    /// Checks parameter shapes against the chart of `m`.
    pub fn validate(&self, m: &ModelSpace) -> Result<()> {
        let n = m.chart_len();
        let len_ok = |field: &'static str, v: &[f64]| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("needs {n} entries for {}", m.name())))
            }
        };
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be positive"))
            }
        };
        match self {
            TestFunction::Constant { value } if !value.is_finite() => Err(Error::invalid("value", "must be finite")),
            TestFunction::Constant { .. } => Ok(()),
            TestFunction::Exp { rate } => len_ok("rate", rate),
            TestFunction::GaussianBump { center, width } => {
                len_ok("center", center)?;
                positive("width", *width)
            }
            TestFunction::PositiveBump { center, width, height } => {
                len_ok("center", center)?;
                positive("width", *width)?;
                if *height <= -1.0 {
                    return Err(Error::invalid("height", "must exceed -1"));
                }
                Ok(())
            }
            TestFunction::LogBump { center, radius, .. } => {
                len_ok("center", center)?;
                positive("radius", *radius)
            }
            TestFunction::Coordinate { index } if *index >= n => Err(Error::invalid("index", format!("must be below {n}"))),
            TestFunction::Coordinate { .. } => Ok(()),
            TestFunction::Quadratic { center } => len_ok("center", center),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Constant { .. } => "constant",
            TestFunction::Exp { .. } => "exp",
            TestFunction::GaussianBump { .. } => "gaussian-bump",
            TestFunction::PositiveBump { .. } => "positive-bump",
            TestFunction::LogBump { .. } => "log-bump",
            TestFunction::Coordinate { .. } => "coordinate",
            TestFunction::Quadratic { .. } => "quadratic",
        }
    }

    /// `inf f > 0` on the whole chart (not just pointwise positivity).
    pub fn bounded_below_by_positive(&self) -> bool {
        match self {
            TestFunction::Constant { value } => *value > 0.0,
            TestFunction::PositiveBump { height, .. } => *height > -1.0,
            TestFunction::LogBump { amplitude, .. } => amplitude.is_finite(),
            _ => false,
        }
    }

    /// `f > 0` everywhere (possibly with `inf f = 0`).
    pub fn pointwise_positive(&self) -> bool {
        self.bounded_below_by_positive() || matches!(self, TestFunction::Exp { .. } | TestFunction::GaussianBump { .. })
    }

    /// `f ≥ 0` everywhere.
    pub fn nonnegative(&self) -> bool {
        match self {
            TestFunction::Constant { value } => *value >= 0.0,
            TestFunction::Quadratic { .. } => true,
            TestFunction::Coordinate { .. } => false,
            _ => self.pointwise_positive(),
        }
    }

    /// `(inf f, sup f)` over the whole chart.
    pub fn range(&self) -> (f64, f64) {
        match self {
            TestFunction::Constant { value } => (*value, *value),
            TestFunction::Exp { rate } if rate.iter().all(|a| *a == 0.0) => (1.0, 1.0),
            TestFunction::Exp { .. } => (0.0, f64::INFINITY),
            TestFunction::GaussianBump { .. } => (0.0, 1.0),
            TestFunction::PositiveBump { height, .. } => ((1.0 + height).min(1.0), (1.0 + height).max(1.0)),
            TestFunction::LogBump { amplitude, .. } => {
                let e = amplitude.exp();
                (e.min(1.0), e.max(1.0))
            }
            TestFunction::Coordinate { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            TestFunction::Quadratic { .. } => (0.0, f64::INFINITY),
        }
    }

    #[inline]
    pub(crate) fn value_raw(&self, z: &Coords) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Exp { rate } => linalg::dot(&padded(rate), z).exp(),
            TestFunction::GaussianBump { center, width } => {
                let d = linalg::sub(z, &padded(center));
                (-linalg::dot(&d, &d) / (2.0 * width * width)).exp()
            }
            TestFunction::PositiveBump { center, width, height } => {
                let d = linalg::sub(z, &padded(center));
                1.0 + height * (-linalg::dot(&d, &d) / (2.0 * width * width)).exp()
            }
            TestFunction::LogBump { .. } => self.log_value_raw(z).exp(),
            TestFunction::Coordinate { index } => z[*index],
            TestFunction::Quadratic { center } => {
                let d = linalg::sub(z, &padded(center));
                linalg::dot(&d, &d)
            }
        }
    }

    /// `log f`, evaluated without forming `f` where possible.
    #[inline]
    pub(crate) fn log_value_raw(&self, z: &Coords) -> f64 {
        match self {
            TestFunction::Exp { rate } => linalg::dot(&padded(rate), z),
            TestFunction::GaussianBump { center, width } => {
                let d = linalg::sub(z, &padded(center));
                -linalg::dot(&d, &d) / (2.0 * width * width)
            }
            TestFunction::LogBump { center, radius, amplitude } => {
                let d = linalg::sub(z, &padded(center));
                let q = linalg::dot(&d, &d) / (radius * radius);
                if q >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - q)).exp()
                }
            }
            _ => self.value_raw(z).ln(),
        }
    }

    pub fn value(&self, z: &Point) -> f64 {
        self.value_raw(z.raw())
    }

    pub fn log_value(&self, z: &Point) -> f64 {
        self.log_value_raw(z.raw())
    }

    /// Jet of `log f` for the log-bump (used by the sharpness experiment).
    pub(crate) fn log_jet(&self, z: &Coords) -> Jet {
        match self {
            TestFunction::LogBump { center, radius, amplitude } => {
                let c = padded(center);
                let q = quadratic_jet(z, &c, 1.0 / (radius * radius));
                if q.value >= 1.0 {
                    return Jet {
                        value: 0.0,
                        grad: linalg::ZERO,
                        hess: [linalg::ZERO; 3],
                    };
                }
                // ψ' = -ψ/u², ψ'' = ψ/u⁴ - 2ψ/u³ with u = 1 - q
                let u = 1.0 - q.value;
                let psi = (1.0 - 1.0 / u).exp();
                let d1 = -psi / (u * u);
                let d2 = psi / (u * u * u * u) - 2.0 * psi / (u * u * u);
                let mut hess = [linalg::ZERO; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        hess[i][j] = amplitude * (d2 * q.grad[i] * q.grad[j] + d1 * q.hess[i][j]);
                    }
                }
                Jet {
                    value: amplitude * psi,
                    grad: linalg::scale(&q.grad, amplitude * d1),
                    hess,
                }
            }
            TestFunction::Exp { rate } => Jet {
                value: linalg::dot(&padded(rate), z),
                grad: padded(rate),
                hess: [linalg::ZERO; 3],
            },
            TestFunction::GaussianBump { center, width } => quadratic_jet(z, &padded(center), -0.5 / (width * width)),
            _ => {
                let j = self.jet_raw(z);
                let mut hess = [linalg::ZERO; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        hess[a][b] = j.hess[a][b] / j.value - j.grad[a] * j.grad[b] / (j.value * j.value);
                    }
                }
                Jet {
                    value: j.value.ln(),
                    grad: linalg::scale(&j.grad, 1.0 / j.value),
                    hess,
                }
            }
        }
    }

    pub(crate) fn jet_raw(&self, z: &Coords) -> Jet {
        let zero = [linalg::ZERO; 3];
        match self {
            TestFunction::Constant { value } => Jet {
                value: *value,
                grad: linalg::ZERO,
                hess: zero,
            },
            TestFunction::Exp { .. } | TestFunction::GaussianBump { .. } | TestFunction::LogBump { .. } => exp_jet(self.log_jet(z)),
            TestFunction::PositiveBump { center, width, height } => {
                let b = exp_jet(quadratic_jet(z, &padded(center), -0.5 / (width * width)));
                let mut hess = b.hess;
                for row in hess.iter_mut() {
                    *row = linalg::scale(row, *height);
                }
                Jet {
                    value: 1.0 + height * b.value,
                    grad: linalg::scale(&b.grad, *height),
                    hess,
                }
            }
            TestFunction::Coordinate { index } => {
                let mut grad = linalg::ZERO;
                grad[*index] = 1.0;
                Jet {
                    value: z[*index],
                    grad,
                    hess: zero,
                }
            }
            TestFunction::Quadratic { center } => quadratic_jet(z, &padded(center), 1.0),
        }
    }

    /// Chart gradient `∂f`.
    pub fn chart_gradient(&self, z: &Point) -> Vec<f64> {
        self.jet_raw(z.raw()).grad[..z.len()].to_vec()
    }

    /// Riemannian gradient norm `|∇f|(z)`.
    pub fn gradient_norm(&self, m: &ModelSpace, z: &Point) -> f64 {
        let g = m.riemannian_gradient_raw(z.raw(), &self.jet_raw(z.raw()).grad);
        m.inner_raw(z.raw(), &g, &g).sqrt()
    }

    /// `Lf = Δf + <Z, ∇f>` in closed form.
    pub fn generator(&self, m: &ModelSpace, z: &Point) -> f64 {
        let c = z.raw();
        let j = self.jet_raw(c);
        let lap = m.laplacian_from_chart(c, &j.grad, &j.hess);
        // <Z, ∇f> = df(Z) = chart gradient paired with the chart drift
        lap + linalg::dot(&m.drift_raw(c), &j.grad)
    }
}
