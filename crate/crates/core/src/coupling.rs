//! Coupling by parallel displacement with explicit Girsanov accounting.
//!
//! `X` is an L-diffusion from `x`. `Y` starts at `y`, receives the noise
//! of `X` parallel-transported along the minimal geodesic from `X` to `Y`,
//! and is pulled towards `X` with speed `√(ξ₁² + ξ₂²)`. The density
//! `R = exp(-Σ <η, ΔB> - ½ Σ |η|² h)` turns `Y` back into an L-diffusion,
//! so `E R = 1` holds exactly for the discrete scheme.
//!
//! The pull is capped at `ρ/h` so that a single step cannot carry `Y`
//! past `X`; the same capped speed enters `η`, keeping the change of
//! measure exact.

use serde::Serialize;

use crate::bounds::{self, DomainSpec, ReferenceFunction, K_ZERO};
use crate::diffusion;
use crate::error::{Error, Result};
use crate::geometry::{linalg, Frame, ModelSpace, Point};
use crate::stats::{self, MonteCarloEstimate};

/// Below this value of `φ(Y)` the boundary drift is frozen and the path is
/// flagged as degenerate.
pub const PHI_FLOOR: f64 = 1e-4;

/// Inputs of one coupled experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingConfig {
    pub x: Point,
    pub y: Point,
    pub horizon: f64,
    pub domain: DomainSpec,
    pub phi: ReferenceFunction,
    /// `K(D_{ρ(x,y)})`
    pub k_d_rho: f64,
    /// `c_D(φ)`
    pub c_d_phi: f64,
    pub eps_couple: f64,
    pub step: f64,
    pub master_seed: u64,
}

impl CouplingConfig {
    /// Computes `K(D_ρ)` and `c_D(φ)` for `φ` on `D` and sets the detection
    /// radius to `3√(2h)`.
    pub fn new(m: &ModelSpace, x: Point, y: Point, horizon: f64, phi: ReferenceFunction, step: f64, master_seed: u64) -> Result<Self> {
        let domain = phi.domain.clone();
        if !domain.contains(m, &y) {
            return Err(Error::Precondition {
                point: format!("y = {:?}", y.coords()),
                message: "y must lie in D".into(),
            });
        }
        if m.distance(&x, &y) > m.usable_radius() {
            return Err(Error::InjectivityRadiusExceeded {
                distance: m.distance(&x, &y),
                limit: m.usable_radius(),
            });
        }
        let k_d_rho = bounds::enlarged_k(m, &x, &y, &domain).value;
        let c_d_phi = bounds::c_d(m, &phi)?.value;
        let cfg = CouplingConfig {
            x,
            y,
            horizon,
            domain,
            phi,
            k_d_rho,
            c_d_phi,
            eps_couple: 3.0 * (2.0 * step).sqrt(),
            step,
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        diffusion::PathConfig::new(self.step, self.horizon, self.master_seed).validate()?;
        if !(self.eps_couple > 0.0 && self.eps_couple <= 10.0 * (2.0 * self.step).sqrt()) {
            return Err(Error::invalid("eps_couple", "must lie in (0, 10 sqrt(2h)]"));
        }
        Ok(())
    }

    pub fn rho0(&self, m: &ModelSpace) -> f64 {
        m.distance(&self.x, &self.y)
    }

    /// Entropy bound `(ρ²/2)(K/(1-e^{-2KT}) + c²(e^{2KT}-1)/(2Kφ(y)⁴))`.
    pub fn entropy_bound(&self, m: &ModelSpace) -> f64 {
        let phi_y = self.phi.value(m, &self.y);
        bounds::harnack_cost(self.rho0(m), self.k_d_rho, self.c_d_phi, phi_y.powi(4), self.horizon)
    }
}

/// Which stopping time ended the coupled run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaEvent {
    Running,
    /// `Y` reached `∂D`.
    YLeftDomain,
    /// `X` left `D_{ρ(x,y)}`.
    XLeftEnlarged,
    Coupled,
    Horizon,
    Exploded,
}

/// State of the pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPathState {
    pub x: Point,
    pub y: Point,
    pub rho: f64,
    pub log_r: f64,
    pub l: f64,
    pub l_tilde: f64,
    pub event: ThetaEvent,
    pub coupled: bool,
    pub degenerate: bool,
    pub t: f64,
    pub frame: Frame,
    /// `max_t ρ(X_t, Y_t) - ρ(x, y)`
    pub max_rho_excess: f64,
    /// Largest excess of `ρ(X_t, Y_t)` over the contraction envelope.
    pub max_envelope_excess: f64,
}

impl CoupledPathState {
    pub fn new(m: &ModelSpace, cfg: &CouplingConfig) -> Self {
        let rho = cfg.rho0(m);
        let coupled = rho == 0.0;
        CoupledPathState {
            x: cfg.x,
            y: if coupled { cfg.x } else { cfg.y },
            rho,
            log_r: 0.0,
            l: 0.0,
            l_tilde: 0.0,
            event: if coupled { ThetaEvent::Coupled } else { ThetaEvent::Running },
            coupled,
            degenerate: false,
            t: 0.0,
            frame: m.frame(&cfg.x),
            max_rho_excess: 0.0,
            max_envelope_excess: 0.0,
        }
    }

    pub fn stopped(&self) -> bool {
        self.event != ThetaEvent::Running
    }
}

/// `ξ₁(t) = 2K e^{-Kt} / (1 - e^{-2KT}) · ρ(x,y)`, `ρ(x,y)/T` as `K → 0`.
pub fn xi1(t: f64, cfg: &CouplingConfig, rho0: f64) -> f64 {
    let k = cfg.k_d_rho;
    if k.abs() < K_ZERO {
        rho0 / cfg.horizon
    } else {
        2.0 * k * (-k * t).exp() / (-(-2.0 * k * cfg.horizon).exp_m1()) * rho0
    }
}

/// `ξ₂ = 2 c_D(φ) ρ(X,Y) / φ(Y)²`.
pub fn xi2(m: &ModelSpace, state: &CoupledPathState, cfg: &CouplingConfig) -> Result<f64> {
    let phi = cfg.phi.value(m, &state.y);
    if phi <= 0.0 {
        return Err(Error::DomainBoundaryReached { phi });
    }
    Ok(xi2_raw(cfg.c_d_phi, state.rho, phi))
}

#[inline]
fn xi2_raw(c: f64, rho: f64, phi: f64) -> f64 {
    if rho == 0.0 || c == 0.0 {
        0.0
    } else {
        2.0 * c * rho / (phi * phi)
    }
}

/// Envelope `ρ(x,y) e^{Kt}(e^{-2Kt} - e^{-2KT})/(1 - e^{-2KT})` of the
/// contraction inequality.
pub fn contraction_envelope(k: f64, t: f64, horizon: f64, rho0: f64) -> f64 {
    if t >= horizon {
        return 0.0;
    }
    if k.abs() < K_ZERO {
        rho0 * (horizon - t) / horizon
    } else {
        let num = (-2.0 * k * t).exp() - (-2.0 * k * horizon).exp();
        rho0 * (k * t).exp() * num / (-(-2.0 * k * horizon).exp_m1())
    }
}

/// Advances the pair by one step with standard normal `noise`; no-op once a
/// stopping time has fired.
pub fn step_coupled(m: &ModelSpace, state: &CoupledPathState, cfg: &CouplingConfig, noise: &[f64]) -> CoupledPathState {
    let mut next = state.clone();
    let xi = linalg::from_slice(&noise[..m.dim()]);
    let rho0 = cfg.rho0(m);
    let d_enlarged = cfg.domain.enlarged(rho0);
    advance_pair(m, &mut next, cfg, &d_enlarged, rho0, &xi, cfg.step);
    next
}

fn advance_pair(m: &ModelSpace, s: &mut CoupledPathState, cfg: &CouplingConfig, d_enlarged: &DomainSpec, rho0: f64, xi: &[f64; 3], h: f64) {
    if s.stopped() {
        return;
    }
    let d = m.dim();
    let mut xp = *s.x.raw();
    let mut yp = *s.y.raw();
    let rho = s.rho;

    let phi_y = cfg.phi.value_raw(m, &yp);
    let phi_eff = if phi_y < PHI_FLOOR {
        s.degenerate = true;
        PHI_FLOOR
    } else {
        phi_y
    };
    let x1 = xi1(s.t, cfg, rho0);
    let x2 = xi2_raw(cfg.c_d_phi, rho, phi_eff);
    let speed = x1.hypot(x2).min(rho / h);

    // √2 Φ ΔB at X and the Girsanov integrand in frame coordinates
    let db = linalg::scale(xi, h.sqrt());
    let noise_x = linalg::scale(&s.frame.combine(&db), 2f64.sqrt());
    let away_from_y = m.grad_distance_raw(&yp, &xp, rho);
    let mut eta_db = 0.0;
    let mut eta2 = 0.0;
    for i in 0..d {
        let eta_i = speed / 2f64.sqrt() * m.inner_raw(&xp, &away_from_y, &s.frame.vectors[i]);
        eta_db += eta_i * db[i];
        eta2 += eta_i * eta_i;
    }
    s.log_r += -eta_db - 0.5 * eta2 * h;

    // Y: transported noise, own drift and the pull towards X
    let noise_y = m.project_raw(&yp, &m.transport_raw(&xp, &yp, &noise_x));
    let pull = m.grad_distance_raw(&xp, &yp, rho);
    let mut frame_y = s.frame;
    let dy = linalg::axpy(&noise_y, -speed * h, &pull);
    let y_alive = diffusion::advance_with(m, &mut yp, &mut frame_y, &dy, h);
    let x_alive = diffusion::advance_with(m, &mut xp, &mut s.frame, &noise_x, h);
    s.t += h;
    let (Some(dl), Some(dlt)) = (x_alive, y_alive) else {
        s.event = ThetaEvent::Exploded;
        s.x = Point::from_raw(xp, s.x.len());
        s.y = Point::from_raw(yp, s.y.len());
        return;
    };
    s.l += dl;
    s.l_tilde += dlt;
    s.x = Point::from_raw(xp, s.x.len());
    s.y = Point::from_raw(yp, s.y.len());
    s.rho = m.distance_raw(&xp, &yp);
    s.max_rho_excess = s.max_rho_excess.max(s.rho - rho0);
    let env = contraction_envelope(cfg.k_d_rho, s.t, cfg.horizon, rho0);
    s.max_envelope_excess = s.max_envelope_excess.max(s.rho - env);

    if cfg.phi.value_raw(m, &yp) <= 0.0 || !cfg.domain.contains(m, &s.y) {
        s.event = ThetaEvent::YLeftDomain;
    } else if !d_enlarged.contains(m, &s.x) {
        s.event = ThetaEvent::XLeftEnlarged;
    } else if s.rho <= cfg.eps_couple {
        s.event = ThetaEvent::Coupled;
        s.coupled = true;
        s.y = s.x;
        s.rho = 0.0;
    } else if s.t >= cfg.horizon * (1.0 - 1e-12) {
        s.event = ThetaEvent::Horizon;
    }
}

/// Runs path `index` until its first stopping time.
pub fn run_path(m: &ModelSpace, cfg: &CouplingConfig, index: u64) -> CoupledPathState {
    let rho0 = cfg.rho0(m);
    let d_enlarged = cfg.domain.enlarged(rho0);
    let (n, h) = diffusion::PathConfig::new(cfg.step, cfg.horizon, cfg.master_seed).steps();
    let mut rng = stats::path_rng(cfg.master_seed, index);
    let mut s = CoupledPathState::new(m, cfg);
    for _ in 0..n {
        if s.stopped() {
            break;
        }
        let xi = stats::gaussian3(&mut rng, m.dim());
        advance_pair(m, &mut s, cfg, &d_enlarged, rho0, &xi, h);
    }
    if !s.stopped() {
        s.event = ThetaEvent::Horizon;
    }
    s
}

/// Monte Carlo summary of a coupled batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingDiagnostics {
    pub mean_r: MonteCarloEstimate,
    pub entropy: MonteCarloEstimate,
    /// `E[R 1_{coupled before the other stopping times}]`
    pub coupled_weighted: MonteCarloEstimate,
    /// `E[R 1_{not coupled}]`; since `E R = 1` exactly, `1 - uncoupled_weighted`
    /// estimates the same quantity as `coupled_weighted` with far less noise.
    pub uncoupled_weighted: MonteCarloEstimate,
    pub coupled_fraction: f64,
    pub entropy_bound: f64,
    pub flagged_fraction: f64,
    pub max_rho_excess: f64,
    pub max_envelope_excess: f64,
    pub n: usize,
    pub step: f64,
    pub eps_couple: f64,
}

/// Runs `n` coupled paths.
pub fn run_coupling(m: &ModelSpace, cfg: &CouplingConfig, n: usize) -> CouplingDiagnostics {
    let rows = stats::par_paths(n, |i| {
        let s = run_path(m, cfg, i);
        let r = s.log_r.exp();
        let c = if s.coupled { 1.0 } else { 0.0 };
        [r, r * s.log_r, r * c, c, s.degenerate as u8 as f64, s.max_rho_excess, s.max_envelope_excess, r * (1.0 - c)]
    });
    let seed = cfg.master_seed;
    let col = |k| stats::column(&rows, k);
    let max_of = |k: usize| rows.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
    CouplingDiagnostics {
        mean_r: MonteCarloEstimate::from_samples(&col(0), seed),
        entropy: MonteCarloEstimate::from_samples(&col(1), seed),
        coupled_weighted: MonteCarloEstimate::from_samples(&col(2), seed),
        uncoupled_weighted: MonteCarloEstimate::from_samples(&col(7), seed),
        coupled_fraction: stats::pairwise_sum(&col(3)) / n as f64,
        entropy_bound: cfg.entropy_bound(m),
        flagged_fraction: stats::pairwise_sum(&col(4)) / n as f64,
        max_rho_excess: max_of(5),
        max_envelope_excess: max_of(6),
        n,
        step: cfg.step,
        eps_couple: cfg.eps_couple,
    }
}

/// Convenience: coupling set up on `D = B(y, 1)` with the cosine reference.
pub fn cosine_setup(m: &ModelSpace, x: Point, y: Point, horizon: f64, step: f64, master_seed: u64) -> Result<CouplingConfig> {
    let phi = bounds::cosine_reference(m, &y)?;
    CouplingConfig::new(m, x, y, horizon, phi, step, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_cfg(x: f64, y: f64, t: f64, h: f64) -> (ModelSpace, CouplingConfig) {
        let m = ModelSpace::euclidean(1);
        let cfg = cosine_setup(&m, Point::new(&[x]), Point::new(&[y]), t, h, 17).unwrap();
        (m, cfg)
    }

    #[test]
    fn xi1_values() {
        let (m, mut cfg) = line_cfg(0.0, 1.0, 2.0, 1e-2);
        assert_eq!(cfg.k_d_rho, 0.0);
        assert_eq!(xi1(0.3, &cfg, cfg.rho0(&m)), 0.5);
        cfg.k_d_rho = 1.0;
        cfg.horizon = 1.0;
        let want = 2.0 / (1.0 - (-2.0f64).exp());
        assert!((xi1(0.0, &cfg, 1.0) - want).abs() < 1e-15);
        assert!((want - 2.3130352854993315).abs() < 1e-14);
    }

    #[test]
    fn xi2_values() {
        let (m, mut cfg) = line_cfg(0.0, 0.3, 1.0, 1e-2);
        let mut s = CoupledPathState::new(&m, &cfg);
        s.rho = 0.0;
        assert_eq!(xi2(&m, &s, &cfg).unwrap(), 0.0);
        assert_eq!(xi2_raw(1.0, 0.5, 0.5), 4.0);
        cfg.c_d_phi = 0.0;
        s.rho = 0.2;
        assert_eq!(xi2(&m, &s, &cfg).unwrap(), 0.0);
        s.y = Point::new(&[1.5]);
        assert!(matches!(xi2(&m, &s, &cfg), Err(Error::DomainBoundaryReached { .. })));
    }

    #[test]
    fn coincident_start_is_coupled() {
        let (m, cfg) = line_cfg(0.3, 0.3, 1.0, 1e-3);
        let s = run_path(&m, &cfg, 0);
        assert!(s.coupled);
        assert_eq!(s.log_r, 0.0);
        let diag = run_coupling(&m, &cfg, 1000);
        assert_eq!(diag.mean_r.mean, 1.0);
        assert_eq!(diag.entropy.mean, 0.0);
        assert_eq!(diag.entropy_bound, 0.0);
    }

    #[test]
    fn zero_drift_keeps_flat_distance() {
        let (m, mut cfg) = line_cfg(0.0, 0.3, 1.0, 1e-3);
        cfg.c_d_phi = 0.0;
        cfg.horizon = 1e12;
        let mut s = CoupledPathState::new(&m, &cfg);
        for k in 0..50 {
            s = step_coupled(&m, &s, &cfg, &[((k * 7) % 5) as f64 - 2.0]);
            assert!((s.rho - 0.3).abs() < 1e-9, "rho moved to {}", s.rho);
        }
    }

    #[test]
    fn one_dimensional_pull_is_signed() {
        let (m, cfg) = line_cfg(0.0, 0.5, 1.0, 1e-3);
        let s0 = CoupledPathState::new(&m, &cfg);
        let s1 = step_coupled(&m, &s0, &cfg, &[0.7]);
        let shift = (2.0 * 1e-3f64).sqrt() * 0.7;
        let phi = (std::f64::consts::PI * 0.0 / 2.0).cos();
        let speed = xi1(0.0, &cfg, 0.5).hypot(xi2_raw(cfg.c_d_phi, 0.5, phi));
        assert!((s1.x.coords()[0] - shift).abs() < 1e-15);
        assert!((s1.y.coords()[0] - (0.5 + shift - speed * 1e-3)).abs() < 1e-12);
        // log R increment: η = speed/√2 · sign(X - Y) = -speed/√2
        let db = 1e-3f64.sqrt() * 0.7;
        let eta = -speed / 2f64.sqrt();
        assert!((s1.log_r - (-eta * db - 0.5 * eta * eta * 1e-3)).abs() < 1e-14);
    }

    #[test]
    fn euclidean_line_diagnostics() {
        let (m, cfg) = line_cfg(0.0, 0.3, 1.0, 1e-3);
        let diag = run_coupling(&m, &cfg, 20_000);
        assert!(diag.mean_r.agrees_with(1.0, 3.0, 0.0), "{:?}", diag.mean_r);
        assert!(diag.entropy.mean <= diag.entropy_bound + 3.0 * diag.entropy.stderr);
        assert!(diag.coupled_weighted.mean >= 0.98, "{:?}", diag.coupled_weighted);
        assert!(diag.max_rho_excess <= 5.0 * 1e-3f64.sqrt());
    }

    #[test]
    fn log_r_frozen_after_stop() {
        let (m, cfg) = line_cfg(0.0, 0.2, 0.5, 1e-2);
        let s = run_path(&m, &cfg, 3);
        assert!(s.stopped());
        let again = step_coupled(&m, &s, &cfg, &[1.0]);
        assert_eq!(again, s);
    }

    #[test]
    fn curved_pairs_keep_martingale() {
        for (m, x, y) in [
            (ModelSpace::Sphere { dim: 2, radius: 1.0 }, Point::on_sphere(1.0, 0.5, 0.0), Point::on_sphere(1.0, 0.8, 0.0)),
            (ModelSpace::Hyperbolic, Point::new(&[0.0, 1.0]), Point::new(&[0.3, 1.0])),
        ] {
            let cfg = cosine_setup(&m, x, y, 0.5, 2e-3, 5).unwrap();
            let diag = run_coupling(&m, &cfg, 5000);
            assert!(diag.mean_r.agrees_with(1.0, 4.0, 0.0), "{}: {:?}", m.name(), diag.mean_r);
            assert!(diag.coupled_fraction > 0.5);
        }
    }

    #[test]
    fn envelope_limits() {
        assert_eq!(contraction_envelope(0.0, 0.5, 1.0, 0.4), 0.2);
        assert!((contraction_envelope(1e-3, 0.5, 1.0, 0.4) - 0.2).abs() < 1e-3);
        assert_eq!(contraction_envelope(1.0, 1.0, 1.0, 0.4), 0.0);
        assert!((contraction_envelope(-1.0, 0.0, 1.0, 0.4) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn y_outside_domain_rejected() {
        let m = ModelSpace::euclidean(1);
        let phi = bounds::cosine_reference(&m, &Point::new(&[0.0])).unwrap();
        let err = CouplingConfig::new(&m, Point::new(&[0.0]), Point::new(&[1.5]), 1.0, phi, 1e-3, 0).unwrap_err();
        assert!(matches!(err, Error::Precondition { .. }));
    }
}
