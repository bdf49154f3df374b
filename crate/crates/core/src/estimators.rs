//! Monte Carlo and quadrature evaluation of semigroup functionals
//! `P_T f`, `P_T log f`, `P_T 1`, `P_T f²`, gradients and the short-time
//! generator identity.
//!
//! Killed (exploded) paths contribute zero in every mode, so all estimates
//! are of `E[h(X_T) 1_{T < ζ}]`. Estimates that are later compared share
//! random numbers: path `i` always uses stream `i` of the master seed.

use serde::{Deserialize, Serialize};

use crate::diffusion::{self, PathConfig};
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::geometry::{linalg, Coords, Frame, ModelSpace, Point};
use crate::kernels;
use crate::stats;

pub use crate::kernels::oracle_semigroup;
pub use crate::stats::MonteCarloEstimate;

/// Smallest sample accepted by the estimators.
pub const MIN_PATHS: usize = 1000;
/// Finite-difference offset for gradients.
pub const GRAD_EPS: f64 = 1e-3;

/// Sample size, Euler step and master seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    pub n_paths: usize,
    pub step: f64,
    pub master_seed: u64,
}

impl Sampler {
    pub fn new(n_paths: usize, step: f64, master_seed: u64) -> Self {
        Sampler {
            n_paths,
            step,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < MIN_PATHS {
            return Err(Error::invalid("N", format!("must be at least {MIN_PATHS}")));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("h", "must be positive"));
        }
        Ok(())
    }

    fn path_config(&self, horizon: f64) -> Result<PathConfig> {
        self.validate()?;
        let cfg = PathConfig::new(self.step.min(horizon), horizon, self.master_seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Which expectation to form from the terminal values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    /// `P_T f`
    F,
    /// `P_T log f` (log taken per path)
    LogF,
    /// `P_T 1`
    One,
    /// `P_T f²`
    FSquared,
}

/// Per-path value of a functional; `None` marks a killed path.
#[inline]
fn path_value(f: &TestFunction, mode: Functional, end: Option<&Coords>) -> Result<f64> {
    let Some(z) = end else { return Ok(0.0) };
    Ok(match mode {
        Functional::F => f.value_raw(z),
        Functional::One => 1.0,
        Functional::FSquared => f.value_raw(z).powi(2),
        Functional::LogF => {
            if f.pointwise_positive() {
                f.log_value_raw(z)
            } else {
                let v = f.value_raw(z);
                if !(v > 0.0) {
                    return Err(Error::NonpositiveF { value: v });
                }
                v.ln()
            }
        }
    })
}

/// Terminal positions of a batch of paths (`None` = exploded before `T`).
#[derive(Clone, Debug, PartialEq)]
pub struct Terminal {
    pub endpoints: Vec<Option<Coords>>,
    pub chart_len: usize,
    pub master_seed: u64,
}

impl Terminal {
    /// Per-path samples of `mode` applied to `f`.
    pub fn samples(&self, f: &TestFunction, mode: Functional) -> Result<Vec<f64>> {
        self.endpoints.iter().map(|e| path_value(f, mode, e.as_ref())).collect()
    }

    pub fn estimate(&self, f: &TestFunction, mode: Functional) -> Result<MonteCarloEstimate> {
        Ok(MonteCarloEstimate::from_samples(&self.samples(f, mode)?, self.master_seed))
    }

    /// Per-path values of `g(X_T) 1_{T<ζ} + 1 - 1_{T<ζ}`, the integrand of
    /// `P_T f + 1 - P_T 1`.
    pub fn corrected_samples(&self, f: &TestFunction) -> Vec<f64> {
        self.endpoints.iter().map(|e| e.map_or(1.0, |z| f.value_raw(&z))).collect()
    }

    pub fn survivors(&self) -> usize {
        self.endpoints.iter().filter(|e| e.is_some()).count()
    }

    pub fn endpoint(&self, i: usize) -> Option<Point> {
        self.endpoints[i].map(|c| Point::from_raw(c, self.chart_len))
    }
}

/// Runs one path of `n` steps of size `h`; `None` if it exploded.
#[inline]
fn run_one(m: &ModelSpace, start: &Coords, frame: &Frame, n: usize, h: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Option<Coords> {
    let d = m.dim();
    let mut pos = *start;
    let mut frame = *frame;
    for _ in 0..n {
        let xi = stats::gaussian3(rng, d);
        diffusion::advance(m, &mut pos, &mut frame, &xi, h)?;
    }
    Some(pos)
}

fn check_start(m: &ModelSpace, x: &Point) -> Result<()> {
    if !m.contains(x) {
        return Err(Error::Precondition {
            point: format!("x = {:?}", x.coords()),
            message: format!("outside the chart domain of {}", m.name()),
        });
    }
    Ok(())
}

fn terminal_with_frame(m: &ModelSpace, x: &Point, frame: &Frame, horizon: f64, sampler: &Sampler) -> Result<Terminal> {
    check_start(m, x)?;
    let cfg = sampler.path_config(horizon)?;
    let (n, h) = cfg.steps();
    let endpoints = stats::par_paths(sampler.n_paths, |i| {
        let mut rng = stats::path_rng(sampler.master_seed, i);
        run_one(m, x.raw(), frame, n, h, &mut rng)
    });
    Ok(Terminal {
        endpoints,
        chart_len: x.len(),
        master_seed: sampler.master_seed,
    })
}

/// Simulates `sampler.n_paths` paths from `x` to time `horizon`.
pub fn terminal_points(m: &ModelSpace, x: &Point, horizon: f64, sampler: &Sampler) -> Result<Terminal> {
    terminal_with_frame(m, x, &m.frame(x), horizon, sampler)
}

/// `E[h(X_T) 1_{T<ζ}]` for `h ∈ {f, log f, 1, f²}`.
pub fn mc_functional(m: &ModelSpace, x: &Point, horizon: f64, f: &TestFunction, mode: Functional, sampler: &Sampler) -> Result<MonteCarloEstimate> {
    f.validate(m)?;
    terminal_points(m, x, horizon, sampler)?.estimate(f, mode)
}

/// Estimates at step `h` and `h/2` driven by the same Brownian increments
/// (the coarse increment is the normalised sum of two fine ones).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelPair {
    pub coarse: MonteCarloEstimate,
    pub fine: MonteCarloEstimate,
    /// `coarse - fine`, paired
    pub difference: MonteCarloEstimate,
    pub coarse_step: f64,
    pub fine_step: f64,
}

/// Runs the coarse (`sampler.step`) and fine (`sampler.step / 2`) schemes
/// on common noise. The fine level is bit-identical to
/// [`mc_functional`] with step `sampler.step / 2`.
pub fn mc_functional_levels(m: &ModelSpace, x: &Point, horizon: f64, f: &TestFunction, mode: Functional, sampler: &Sampler) -> Result<LevelPair> {
    f.validate(m)?;
    check_start(m, x)?;
    let cfg = sampler.path_config(horizon)?;
    let (nc, hc) = cfg.steps();
    let hf = 0.5 * hc;
    let d = m.dim();
    let frame0 = m.frame(x);
    let rows = stats::par_paths(sampler.n_paths, |i| {
        let mut rng = stats::path_rng(sampler.master_seed, i);
        let (mut pf, mut ff, mut af) = (*x.raw(), frame0, true);
        let (mut pc, mut fc, mut ac) = (*x.raw(), frame0, true);
        for _ in 0..nc {
            let a = stats::gaussian3(&mut rng, d);
            let b = stats::gaussian3(&mut rng, d);
            if af {
                af = diffusion::advance(m, &mut pf, &mut ff, &a, hf).is_some() && diffusion::advance(m, &mut pf, &mut ff, &b, hf).is_some();
            }
            if ac {
                let mut c = [0.0; 3];
                for k in 0..d {
                    c[k] = (a[k] + b[k]) * std::f64::consts::FRAC_1_SQRT_2;
                }
                ac = diffusion::advance(m, &mut pc, &mut fc, &c, hc).is_some();
            }
        }
        let fine = path_value(f, mode, af.then_some(&pf));
        let coarse = path_value(f, mode, ac.then_some(&pc));
        (fine, coarse)
    });
    let mut fine = Vec::with_capacity(rows.len());
    let mut coarse = Vec::with_capacity(rows.len());
    for (a, b) in rows {
        fine.push(a?);
        coarse.push(b?);
    }
    let seed = sampler.master_seed;
    Ok(LevelPair {
        coarse: MonteCarloEstimate::from_samples(&coarse, seed),
        fine: MonteCarloEstimate::from_samples(&fine, seed),
        difference: stats::paired_difference(&coarse, &fine, seed),
        coarse_step: hc,
        fine_step: hf,
    })
}

/// Monte Carlo against quadrature with a measured first-order bias term.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleAgreement {
    pub oracle: f64,
    pub levels: LevelPair,
    /// `C` in `|bias| ≈ C h`, from the difference of the two levels.
    pub bias_constant: f64,
    /// `|fine - oracle|`
    pub deviation: f64,
    /// `3 stderr + C h` at the fine step.
    pub allowed: f64,
    pub agrees: bool,
}

/// Compares [`mc_functional_levels`] with [`oracle_semigroup`] (mode `F`).
pub fn oracle_agreement(m: &ModelSpace, x: &Point, horizon: f64, f: &TestFunction, sampler: &Sampler) -> Result<OracleAgreement> {
    let oracle = kernels::oracle_semigroup(m, x, horizon, f)?;
    let levels = mc_functional_levels(m, x, horizon, f, Functional::F, sampler)?;
    let bias_constant = levels.difference.mean.abs() / (levels.coarse_step - levels.fine_step);
    let deviation = (levels.fine.mean - oracle).abs();
    let allowed = 3.0 * levels.fine.stderr + bias_constant * levels.fine_step;
    Ok(OracleAgreement {
        oracle,
        levels,
        bias_constant,
        deviation,
        allowed,
        agrees: deviation <= allowed,
    })
}

/// `|∇P_T f|(x)` with its components along the canonical frame at `x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub norm: MonteCarloEstimate,
    pub components: Vec<MonteCarloEstimate>,
}

/// Start points `exp_x(±ε e_i)` with frames transported from `x`.
fn offsets(m: &ModelSpace, x: &Point, eps: f64) -> Result<Vec<[(Point, Frame); 2]>> {
    let frame = m.frame(x);
    (0..m.dim())
        .map(|i| {
            let mut pair = Vec::with_capacity(2);
            for s in [eps, -eps] {
                let p = Point::from_raw(m.exp_raw(x.raw(), &linalg::scale(&frame.vectors[i], s)), x.len());
                if !m.contains(&p) {
                    return Err(Error::Precondition {
                        point: format!("x = {:?}", x.coords()),
                        message: format!("finite-difference offset {eps} leaves the manifold"),
                    });
                }
                let mut fr = frame;
                m.transport_frame(x.raw(), p.raw(), &mut fr);
                pair.push((p, fr));
            }
            let b = pair.pop().unwrap();
            let a = pair.pop().unwrap();
            Ok([a, b])
        })
        .collect()
}

fn combine_norm(components: Vec<MonteCarloEstimate>, seed: u64) -> GradientEstimate {
    let sq: f64 = components.iter().map(|c| c.mean * c.mean).sum();
    let norm = sq.sqrt();
    let stderr = if norm > 0.0 {
        components.iter().map(|c| (c.mean / norm * c.stderr).powi(2)).sum::<f64>().sqrt()
    } else {
        components.iter().map(|c| c.stderr * c.stderr).sum::<f64>().sqrt()
    };
    let n = components.first().map_or(0, |c| c.n);
    GradientEstimate {
        norm: MonteCarloEstimate {
            mean: norm,
            stderr,
            n,
            seed,
        },
        components,
    }
}

/// Central differences of `P_T f` along an orthonormal frame at `x`, with
/// the same noise streams for both offsets.
pub fn grad_semigroup(m: &ModelSpace, x: &Point, horizon: f64, f: &TestFunction, sampler: &Sampler) -> Result<GradientEstimate> {
    f.validate(m)?;
    check_start(m, x)?;
    let mut components = Vec::with_capacity(m.dim());
    for [(xp, fp), (xm, fm)] in offsets(m, x, GRAD_EPS)? {
        let plus = terminal_with_frame(m, &xp, &fp, horizon, sampler)?.samples(f, Functional::F)?;
        let minus = terminal_with_frame(m, &xm, &fm, horizon, sampler)?.samples(f, Functional::F)?;
        let diff: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * GRAD_EPS)).collect();
        components.push(MonteCarloEstimate::from_samples(&diff, sampler.master_seed));
    }
    Ok(combine_norm(components, sampler.master_seed))
}

/// `|∇P_T f|(x)` from fourth-order differences of the quadrature oracle.
pub fn grad_oracle(m: &ModelSpace, x: &Point, horizon: f64, f: &TestFunction) -> Result<f64> {
    let eps = 1e-3;
    let frame = m.frame(x);
    let mut sq = 0.0;
    for e in frame.vectors.iter().take(m.dim()) {
        let at = |s: f64| {
            let p = Point::from_raw(m.exp_raw(x.raw(), &linalg::scale(e, s)), x.len());
            kernels::oracle_semigroup(m, &p, horizon, f)
        };
        let d = (-at(2.0 * eps)? + 8.0 * at(eps)? - 8.0 * at(-eps)? + at(-2.0 * eps)?) / (12.0 * eps);
        sq += d * d;
    }
    Ok(sq.sqrt())
}

/// Default short-time grid `0.002, 0.004, …, 0.02`.
pub fn default_s_grid() -> Vec<f64> {
    (1..=10).map(|k| 0.002 * k as f64).collect()
}

/// Fitted short-time slope of `P_s g(x) - g(x)` against the closed form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorReport {
    pub s_grid: Vec<f64>,
    /// `P_s g(x) - g(x)` at each `s` (control-variate corrected)
    pub increments: Vec<MonteCarloEstimate>,
    /// Coefficient `b` of the least-squares fit `b s + c s²`.
    pub slope: MonteCarloEstimate,
    /// `Lg(x) = Δg + <Z, ∇g>`
    pub closed_form: f64,
    /// `|slope - Lg| / |Lg|`, infinite when `Lg = 0`
    pub relative_error: f64,
}

/// Short-time generator identity `d/ds P_s g|_{s=0} = Lg`.
///
/// Each path subtracts the discrete martingale `Σ <∇g(X_k), √2 ΔB_k>`,
/// which has mean zero and removes the `O(√s)` fluctuation of `g(X_s)`.
/// The slope is the linear coefficient of a per-path least-squares fit of
/// `b s + c s²`, so its standard error comes from the path sample.
pub fn generator_check(m: &ModelSpace, x: &Point, g: &TestFunction, s_grid: &[f64], sampler: &Sampler) -> Result<GeneratorReport> {
    g.validate(m)?;
    check_start(m, x)?;
    sampler.validate()?;
    if s_grid.len() < 2 || s_grid.windows(2).any(|w| w[1] <= w[0]) || s_grid[0] <= 0.0 {
        return Err(Error::invalid("s_grid", "needs at least two increasing positive times"));
    }
    let h = sampler.step.min(s_grid[0]);
    let marks: Vec<usize> = s_grid.iter().map(|s| (s / h).round().max(1.0) as usize).collect();
    for (s, k) in s_grid.iter().zip(&marks) {
        if ((*k as f64) * h - s).abs() > 1e-9 * s.max(1.0) {
            return Err(Error::invalid("s_grid", format!("{s} is not a multiple of the step {h}")));
        }
    }
    // least-squares weights of b in y ≈ b s + c s²
    let (s2, s3, s4) = s_grid.iter().fold((0.0, 0.0, 0.0), |(a, b, c), s| (a + s * s, b + s * s * s, c + s.powi(4)));
    let det = s2 * s4 - s3 * s3;
    let weights: Vec<f64> = s_grid.iter().map(|s| (s4 * s - s3 * s * s) / det).collect();

    let d = m.dim();
    let g0 = g.value_raw(x.raw());
    let frame0 = m.frame(x);
    let n_steps = *marks.last().unwrap();
    let rows = stats::par_paths(sampler.n_paths, |i| {
        let mut rng = stats::path_rng(sampler.master_seed, i);
        let mut pos = *x.raw();
        let mut frame = frame0;
        let mut alive = true;
        let mut cv = 0.0;
        let mut out = vec![0.0; marks.len() + 1];
        let mut next = 0;
        for k in 1..=n_steps {
            let xi = stats::gaussian3(&mut rng, d);
            if alive {
                let noise = linalg::scale(&frame.combine(&xi), (2.0 * h).sqrt());
                cv += linalg::dot(&g.jet_raw(&pos).grad, &noise);
                alive = diffusion::advance_with(m, &mut pos, &mut frame, &noise, h).is_some();
            }
            while next < marks.len() && marks[next] == k {
                let gv = if alive { g.value_raw(&pos) } else { 0.0 };
                out[next] = gv - g0 - cv;
                next += 1;
            }
        }
        out[marks.len()] = weights.iter().zip(&out).map(|(w, y)| w * y).sum();
        out
    });
    let seed = sampler.master_seed;
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let increments = (0..marks.len()).map(|j| MonteCarloEstimate::from_samples(&column(j), seed)).collect();
    let slope = MonteCarloEstimate::from_samples(&column(marks.len()), seed);
    let closed_form = g.generator(m, x);
    let relative_error = if closed_form != 0.0 {
        (slope.mean - closed_form).abs() / closed_form.abs()
    } else {
        f64::INFINITY
    };
    Ok(GeneratorReport {
        s_grid: s_grid.to_vec(),
        increments,
        slope,
        closed_form,
        relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampler(n: usize, h: f64) -> Sampler {
        Sampler::new(n, h, 2024)
    }

    #[test]
    fn constant_one_is_exact_on_conservative_models() {
        let m = ModelSpace::Sphere { dim: 2, radius: 1.0 };
        let x = Point::on_sphere(1.0, 0.3, 0.2);
        let one = TestFunction::Constant { value: 1.0 };
        let e = mc_functional(&m, &x, 0.5, &one, Functional::F, &sampler(2000, 1e-2)).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
        let e = mc_functional(&m, &x, 0.5, &one, Functional::One, &sampler(2000, 1e-2)).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
    }

    #[test]
    fn euclidean_exponential_moment() {
        let m = ModelSpace::euclidean(1);
        let f = TestFunction::Exp { rate: vec![1.0] };
        let s = Sampler::new(100_000, 1e-2, 1);
        let e = mc_functional(&m, &Point::new(&[0.0]), 0.5, &f, Functional::F, &s).unwrap();
        assert!(e.agrees_with(0.5f64.exp(), 3.0, 0.0), "{e:?}");
        let l = mc_functional(&m, &Point::new(&[0.0]), 0.5, &f, Functional::LogF, &s).unwrap();
        assert!(l.agrees_with(0.0, 3.0, 0.0));
    }

    #[test]
    fn explosive_paths_are_killed() {
        let m = ModelSpace::ExplosiveDrift1D;
        let one = TestFunction::Constant { value: 1.0 };
        let e = mc_functional(&m, &Point::new(&[3.0]), 1.0, &one, Functional::One, &sampler(2000, 1e-2)).unwrap();
        assert!(e.mean + 3.0 * e.stderr < 1.0, "{e:?}");
    }

    #[test]
    fn log_mode_rejects_nonpositive_values() {
        let m = ModelSpace::euclidean(1);
        let f = TestFunction::Coordinate { index: 0 };
        let r = mc_functional(&m, &Point::new(&[0.0]), 0.5, &f, Functional::LogF, &sampler(1000, 1e-1));
        assert!(matches!(r, Err(Error::NonpositiveF { .. })));
    }

    #[test]
    fn small_samples_are_rejected() {
        let m = ModelSpace::euclidean(1);
        let f = TestFunction::Constant { value: 1.0 };
        assert!(mc_functional(&m, &Point::new(&[0.0]), 0.5, &f, Functional::F, &sampler(999, 1e-2)).is_err());
    }

    #[test]
    fn fine_level_matches_direct_run() {
        let m = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 1.0 };
        let f = TestFunction::Quadratic { center: vec![0.0] };
        let x = Point::new(&[0.5]);
        let pair = mc_functional_levels(&m, &x, 0.5, &f, Functional::F, &sampler(2000, 1e-2)).unwrap();
        let direct = mc_functional(&m, &x, 0.5, &f, Functional::F, &sampler(2000, 5e-3)).unwrap();
        assert_eq!(pair.fine, direct);
    }

    #[test]
    fn ou_agrees_with_oracle_after_bias_term() {
        let m = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 1.0 };
        let f = TestFunction::Quadratic { center: vec![0.0] };
        let a = oracle_agreement(&m, &Point::new(&[1.0]), 0.5, &f, &sampler(20_000, 1e-2)).unwrap();
        assert!(a.agrees, "{a:?}");
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let m = ModelSpace::Hyperbolic;
        let f = TestFunction::Constant { value: 3.0 };
        let g = grad_semigroup(&m, &Point::new(&[0.0, 1.0]), 0.3, &f, &sampler(1000, 1e-2)).unwrap();
        assert_eq!(g.norm.mean, 0.0);
    }

    #[test]
    fn euclidean_gradient_of_exponential() {
        let m = ModelSpace::euclidean(1);
        let f = TestFunction::Exp { rate: vec![1.0] };
        let x = Point::new(&[0.0]);
        let g = grad_semigroup(&m, &x, 0.5, &f, &sampler(50_000, 0.5)).unwrap();
        assert!(g.norm.agrees_with(0.5f64.exp(), 3.0, 1e-5), "{g:?}");
        let o = grad_oracle(&m, &x, 0.5, &f).unwrap();
        assert!((o - 0.5f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn ou_gradient_of_coordinate() {
        let m = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 1.0 };
        let f = TestFunction::Coordinate { index: 0 };
        let x = Point::new(&[0.0]);
        let o = grad_oracle(&m, &x, 1.0, &f).unwrap();
        assert!((o - (-1.0f64).exp()).abs() < 1e-9);
        let g = grad_semigroup(&m, &x, 1.0, &f, &sampler(2000, 1e-2)).unwrap();
        // the scheme is linear in the start point, so the difference is exact
        assert!((g.norm.mean - (1.0f64 - 1e-2).powi(100)).abs() < 1e-9, "{g:?}");
    }

    #[test]
    fn generator_slopes() {
        let line = ModelSpace::euclidean(1);
        let s = default_s_grid();
        let lin = TestFunction::Exp { rate: vec![0.0] };
        let r = generator_check(&line, &Point::new(&[0.3]), &lin, &s, &sampler(1000, 1e-3)).unwrap();
        assert_eq!(r.slope.mean, 0.0);
        let q = TestFunction::Quadratic { center: vec![0.0] };
        let r = generator_check(&line, &Point::new(&[0.3]), &q, &s, &sampler(5000, 1e-3)).unwrap();
        assert_eq!(r.closed_form, 2.0);
        assert!(r.relative_error < 0.05, "{r:?}");
        let ou = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 1.0 };
        let r = generator_check(&ou, &Point::new(&[1.0]), &q, &s, &sampler(5000, 1e-3)).unwrap();
        assert!(r.closed_form.abs() < 1e-15);
        assert!(r.slope.mean.abs() < 3.0 * r.slope.stderr + 0.05, "{r:?}");
    }

    #[test]
    fn generator_grid_must_align_with_step() {
        let line = ModelSpace::euclidean(1);
        let q = TestFunction::Quadratic { center: vec![0.0] };
        assert!(generator_check(&line, &Point::new(&[0.0]), &q, &[0.0015, 0.0025], &sampler(1000, 1e-3)).is_err());
    }
}
