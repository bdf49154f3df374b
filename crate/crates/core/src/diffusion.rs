//! The (reflecting) L-diffusion `dX = √2 Φ dB + Z(X) dt + N(X) dl`.
//!
//! One step of size `h` moves to `exp_X(√(2h) Σ ξ_i e_i + h Z(X))` where
//! `(e_i)` is an orthonormal frame carried along the path by parallel
//! transport. Positions that leave `M` through the boundary are mirrored
//! back and the inward displacement is added to the local time. The
//! explosive drift is integrated with step halving so that one drift move
//! never exceeds a tenth of `max(1, |x|)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::DomainSpec;
use crate::error::{Error, Result};
use crate::geometry::{linalg, Coords, Frame, ModelSpace, Point};
use crate::stats::{self, MonteCarloEstimate};

/// `|x|` beyond which a path is declared exploded.
pub const EXPLOSION_THRESHOLD: f64 = 1e6;
const MAX_HALVINGS: u32 = 40;

/// Step size, horizon and the master seed of a batch of paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub step: f64,
    pub horizon: f64,
    pub master_seed: u64,
}

impl PathConfig {
    pub fn new(step: f64, horizon: f64, master_seed: u64) -> Self {
        PathConfig {
            step,
            horizon,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("T", "must be positive"));
        }
        if !(self.step > 0.0 && self.step <= self.horizon) {
            return Err(Error::invalid("h", "must satisfy 0 < h <= T"));
        }
        Ok(())
    }

    /// Uniform grid `T / n` with `n = ⌈T / h⌉`.
    pub fn steps(&self) -> (usize, f64) {
        let n = ((self.horizon / self.step) - 1e-9).ceil().max(1.0) as usize;
        (n, self.horizon / n as f64)
    }
}

/// Position, local time, clock, alive flag and transported frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub position: Point,
    pub local_time: f64,
    pub time: f64,
    pub alive: bool,
    pub frame: Frame,
}

impl PathState {
    pub fn new(m: &ModelSpace, x: &Point) -> Self {
        PathState {
            position: *x,
            local_time: 0.0,
            time: 0.0,
            alive: true,
            frame: m.frame(x),
        }
    }
}

/// Moves `pos` by one geodesic Euler step driven by `xi` and returns the
/// local-time increment, or `None` if the path exploded.
#[inline]
pub(crate) fn advance(m: &ModelSpace, pos: &mut Coords, frame: &mut Frame, xi: &[f64; 3], h: f64) -> Option<f64> {
    let noise = linalg::scale(&frame.combine(xi), (2.0 * h).sqrt());
    advance_with(m, pos, frame, &noise, h)
}

/// As [`advance`] with the noise displacement `√2 ΔB` already expressed as
/// a tangent vector at `pos`.
#[inline]
pub(crate) fn advance_with(m: &ModelSpace, pos: &mut Coords, frame: &mut Frame, noise: &Coords, h: f64) -> Option<f64> {
    match m {
        ModelSpace::ExplosiveDrift1D => explosive_step(pos, noise[0], h).then_some(0.0),
        ModelSpace::Sphere { .. } | ModelSpace::Hyperbolic => {
            let v = linalg::axpy(noise, h, &m.drift_raw(pos));
            let next = m.exp_raw(pos, &v);
            m.transport_frame(pos, &next, frame);
            *pos = next;
            Some(0.0)
        }
        _ => {
            let v = linalg::axpy(noise, h, &m.drift_raw(pos));
            *pos = linalg::add(pos, &v);
            Some(m.reflect(pos))
        }
    }
}

/// `x' = x + noise + x³ dt` over `h`, halving `dt` while the drift move
/// exceeds `0.1 max(1, |x|)`; the noise is spread evenly over the substeps.
fn explosive_step(pos: &mut Coords, noise: f64, h: f64) -> bool {
    let mut x = pos[0];
    let mut left = h;
    while left > 0.0 {
        let mut dt = left;
        let mut halvings = 0;
        while (x * x * x).abs() * dt > 0.1 * x.abs().max(1.0) && halvings < MAX_HALVINGS {
            dt *= 0.5;
            halvings += 1;
        }
        x += noise * (dt / h) + x * x * x * dt;
        left -= dt;
        if !(x.abs() <= EXPLOSION_THRESHOLD) {
            pos[0] = x;
            return false;
        }
        if left < 1e-15 * h {
            break;
        }
    }
    pos[0] = x;
    true
}

/// One step of size `cfg.step` from `state` with standard normal `noise`.
pub fn step(m: &ModelSpace, state: &PathState, cfg: &PathConfig, noise: &[f64]) -> PathState {
    let mut next = state.clone();
    if !state.alive {
        return next;
    }
    let xi = linalg::from_slice(&noise[..m.dim()]);
    let mut pos = *state.position.raw();
    match advance(m, &mut pos, &mut next.frame, &xi, cfg.step) {
        Some(dl) => next.local_time += dl,
        None => next.alive = false,
    }
    next.position = Point::from_raw(pos, state.position.len());
    next.time += cfg.step;
    next
}

/// One row of a path trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub coords: Vec<f64>,
    pub local_time: f64,
    pub alive: bool,
}

/// Final state and observables of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub state: PathState,
    /// First time the path is outside each registered domain, if before `T`.
    pub exit_times: Vec<Option<f64>>,
    pub trace: Option<Vec<TraceRow>>,
}

/// Simulates path `index` of the batch to the horizon.
pub fn simulate_path(m: &ModelSpace, x: &Point, cfg: &PathConfig, index: u64, domains: &[DomainSpec], trace: bool) -> PathRecord {
    let (n, h) = cfg.steps();
    let d = m.dim();
    let mut rng = stats::path_rng(cfg.master_seed, index);
    let mut pos = *x.raw();
    let mut frame = m.frame(x);
    let mut l = 0.0;
    let mut alive = true;
    let mut t = 0.0;
    let mut exits: Vec<Option<f64>> = domains
        .iter()
        .map(|dom| (!dom.contains(m, x)).then_some(0.0))
        .collect();
    let mut rows = trace.then(Vec::new);
    let push_row = |rows: &mut Option<Vec<TraceRow>>, t: f64, pos: &Coords, l: f64, alive: bool| {
        if let Some(r) = rows.as_mut() {
            r.push(TraceRow {
                t,
                coords: pos[..x.len()].to_vec(),
                local_time: l,
                alive,
            });
        }
    };
    push_row(&mut rows, t, &pos, l, alive);
    for k in 0..n {
        let xi = stats::gaussian3(&mut rng, d);
        match advance(m, &mut pos, &mut frame, &xi, h) {
            Some(dl) => l += dl,
            None => alive = false,
        }
        t = (k + 1) as f64 * h;
        push_row(&mut rows, t, &pos, l, alive);
        if !alive {
            break;
        }
        let p = Point::from_raw(pos, x.len());
        for (dom, e) in domains.iter().zip(exits.iter_mut()) {
            if e.is_none() && !dom.contains(m, &p) {
                *e = Some(t);
            }
        }
    }
    PathRecord {
        state: PathState {
            position: Point::from_raw(pos, x.len()),
            local_time: l,
            time: t,
            alive,
            frame,
        },
        exit_times: exits,
        trace: rows,
    }
}

/// Writes a trace as CSV `t,x0,..,l,alive`.
pub fn write_trace(out: &mut dyn Write, rows: &[TraceRow]) -> Result<()> {
    let width = rows.first().map_or(0, |r| r.coords.len());
    let mut header = String::from("t");
    for i in 0..width {
        header.push_str(&format!(",x{i}"));
    }
    writeln!(out, "{header},l,alive")?;
    for r in rows {
        let coords: Vec<String> = r.coords.iter().map(|c| format!("{c:.16e}")).collect();
        writeln!(out, "{:.16e},{},{:.16e},{}", r.t, coords.join(","), r.local_time, r.alive as u8)?;
    }
    Ok(())
}

/// Monte Carlo estimates of `E l_{t ∧ σ_r}` on `t_grid` for paths started at
/// `x` on the boundary, where `σ_r` is the first time `ρ(X, x) ≥ r`.
pub fn local_time_profile(m: &ModelSpace, x: &Point, t_grid: &[f64], r: f64, n_paths: usize, step: f64, master_seed: u64) -> Result<Vec<MonteCarloEstimate>> {
    if !m.has_boundary() {
        return Err(Error::NoBoundary);
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(Error::invalid("t_grid", "must be positive and increasing"));
    }
    let t_max = *t_grid.last().unwrap();
    let n_steps = (t_max / step).round() as usize;
    let h = t_max / n_steps as f64;
    let marks: Vec<usize> = t_grid.iter().map(|t| (t / h).round() as usize).collect();
    let d = m.dim();
    let samples = stats::par_paths(n_paths, |i| {
        let mut rng = stats::path_rng(master_seed, i);
        let mut pos = *x.raw();
        let mut frame = m.frame(x);
        let mut l = 0.0;
        let mut stopped = false;
        let mut out = vec![0.0; marks.len()];
        let mut next_mark = 0;
        for k in 1..=n_steps {
            let xi = stats::gaussian3(&mut rng, d);
            if !stopped {
                l += advance(m, &mut pos, &mut frame, &xi, h).unwrap_or(0.0);
                stopped = m.distance_raw(&pos, x.raw()) >= r;
            }
            while next_mark < marks.len() && marks[next_mark] == k {
                out[next_mark] = l;
                next_mark += 1;
            }
        }
        out
    });
    Ok((0..t_grid.len())
        .map(|j| {
            let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            MonteCarloEstimate::from_samples(&col, master_seed)
        })
        .collect())
}

/// Fraction of paths with `σ_r ≤ t` (first exit from `B(x, r)`).
pub fn exit_probability(m: &ModelSpace, x: &Point, r: f64, t: f64, n_paths: usize, step: f64, master_seed: u64) -> MonteCarloEstimate {
    let cfg = PathConfig::new(step, t, master_seed);
    let dom = DomainSpec::new(*x, r);
    let hits = stats::par_paths(n_paths, |i| {
        let rec = simulate_path(m, x, &cfg, i, std::slice::from_ref(&dom), false);
        if rec.exit_times[0].is_some() { 1.0 } else { 0.0 }
    });
    MonteCarloEstimate::from_samples(&hits, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn euclidean_increment_is_scaled_noise() {
        let m = ModelSpace::euclidean(2);
        let s = PathState::new(&m, &Point::new(&[1.0, -1.0]));
        let cfg = PathConfig::new(0.01, 1.0, 0);
        let next = step(&m, &s, &cfg, &[0.5, -2.0]);
        let k = (0.02f64).sqrt();
        assert!((next.position.coords()[0] - (1.0 + 0.5 * k)).abs() < 1e-15);
        assert!((next.position.coords()[1] - (-1.0 - 2.0 * k)).abs() < 1e-15);
        assert_eq!(next.local_time, 0.0);
    }

    #[test]
    fn ou_zero_noise_contracts() {
        let m = ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 1.0 };
        let s = PathState::new(&m, &Point::new(&[2.0]));
        let cfg = PathConfig::new(0.01, 1.0, 0);
        let next = step(&m, &s, &cfg, &[0.0]);
        assert!((next.position.coords()[0] - 2.0 * 0.99).abs() < 1e-15);
    }

    #[test]
    fn reflection_from_near_boundary() {
        let m = ModelSpace::HalfSpace { dim: 2 };
        let s = PathState::new(&m, &Point::new(&[1e-3, 0.0]));
        let cfg = PathConfig::new(0.01, 1.0, 0);
        let next = step(&m, &s, &cfg, &[-5.0, 0.3]);
        let proposed = 1e-3 - 5.0 * (0.02f64).sqrt();
        assert!(next.position.coords()[0] >= 0.0);
        assert!((next.position.coords()[0] + proposed).abs() < 1e-15);
        assert!((next.local_time + 2.0 * proposed).abs() < 1e-15);
    }

    #[test]
    fn explosive_path_dies() {
        let m = ModelSpace::ExplosiveDrift1D;
        let s = PathState::new(&m, &Point::new(&[3.0]));
        // deterministic blow-up time from 3 is 1/18
        let cfg = PathConfig::new(0.1, 1.0, 0);
        let next = step(&m, &s, &cfg, &[0.0]);
        assert!(!next.alive);
    }

    #[test]
    fn explosive_substeps_track_ode() {
        // x' = x³ from 0.5 over 0.5: x = 1 / sqrt(4 - 1) = 1/√3
        let mut pos = [0.5, 0.0, 0.0];
        assert!(explosive_step(&mut pos, 0.0, 0.5));
        assert!((pos[0] - 1.0 / 3f64.sqrt()).abs() < 0.02);
    }

    #[test]
    fn sphere_path_stays_on_sphere() {
        let m = ModelSpace::Sphere { dim: 2, radius: 2.0 };
        let x = Point::on_sphere(2.0, 0.3, 0.1);
        let rec = simulate_path(&m, &x, &PathConfig::new(0.01, 1.0, 9), 3, &[], false);
        assert!((linalg::norm(rec.state.position.raw()) - 2.0).abs() < 1e-12);
        let f = rec.state.frame;
        for i in 0..2 {
            assert!(linalg::dot(&f.vectors[i], rec.state.position.raw()).abs() < 1e-9);
            assert!((linalg::norm(&f.vectors[i]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn euclidean_marginal_moments() {
        let m = ModelSpace::euclidean(2);
        let x = Point::new(&[0.5, -0.2]);
        let cfg = PathConfig::new(0.05, 0.5, 11);
        let ends = stats::par_paths(20_000, |i| *simulate_path(&m, &x, &cfg, i, &[], false).state.position.raw());
        for k in 0..2 {
            let col: Vec<f64> = ends.iter().map(|p| p[k]).collect();
            let e = MonteCarloEstimate::from_samples(&col, 11);
            assert!(e.agrees_with(x.coords()[k], 3.0, 0.0), "{e:?}");
            let sq: Vec<f64> = col.iter().map(|c| (c - x.coords()[k]).powi(2)).collect();
            let v = MonteCarloEstimate::from_samples(&sq, 11);
            assert!(v.agrees_with(1.0, 3.0, 0.0), "{v:?}");
        }
    }

    #[test]
    fn conservative_paths_never_die() {
        for m in [ModelSpace::euclidean(1), ModelSpace::OrnsteinUhlenbeck { dim: 1, lambda: 3.0 }, ModelSpace::HalfSpace { dim: 1 }] {
            let cfg = PathConfig::new(0.01, 1.0, 5);
            let x = Point::new(&[0.5]);
            assert!((0..500).all(|i| simulate_path(&m, &x, &cfg, i, &[], false).state.alive));
        }
    }

    #[test]
    fn explosion_fraction_from_three() {
        let m = ModelSpace::ExplosiveDrift1D;
        let cfg = PathConfig::new(0.01, 1.0, 2);
        let x = Point::new(&[3.0]);
        let dead = (0..2000).filter(|&i| !simulate_path(&m, &x, &cfg, i, &[], false).state.alive).count();
        assert!(dead > 0);
    }

    #[test]
    fn exit_times_monotone_in_domain() {
        let m = ModelSpace::euclidean(2);
        let x = Point::new(&[0.0, 0.0]);
        let doms = [DomainSpec::new(x, 0.3), DomainSpec::new(x, 0.6), DomainSpec::new(x, 1.2)];
        let cfg = PathConfig::new(0.01, 1.0, 4);
        for i in 0..300 {
            let rec = simulate_path(&m, &x, &cfg, i, &doms, false);
            let t = |e: Option<f64>| e.unwrap_or(f64::INFINITY);
            assert!(t(rec.exit_times[0]) <= t(rec.exit_times[1]));
            assert!(t(rec.exit_times[1]) <= t(rec.exit_times[2]));
        }
    }

    #[test]
    fn trace_dump() {
        let m = ModelSpace::HalfSpace { dim: 1 };
        let rec = simulate_path(&m, &Point::new(&[0.0]), &PathConfig::new(0.1, 0.3, 1), 0, &[], true);
        let mut buf = Vec::new();
        write_trace(&mut buf, rec.trace.as_ref().unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("t,x0,l,alive"));
    }

    #[test]
    fn local_time_needs_boundary() {
        let m = ModelSpace::euclidean(1);
        assert_eq!(local_time_profile(&m, &Point::new(&[0.0]), &[0.1], 1.0, 10, 0.01, 0), Err(Error::NoBoundary));
    }

    #[test]
    fn local_time_small_t() {
        let m = ModelSpace::HalfSpace { dim: 1 };
        let est = local_time_profile(&m, &Point::new(&[0.0]), &[1e-4, 0.01], 1.0, 20_000, 1e-4, 3).unwrap();
        assert!(est[0].mean < 0.02);
        let want = 2.0 * 0.1 / std::f64::consts::PI.sqrt();
        assert!(est[1].agrees_with(want, 3.0, 0.005), "{:?} vs {want}", est[1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn half_space_paths_stay_inside(seed in 0u64..1000, x0 in 0.0..0.2f64) {
            let m = ModelSpace::HalfSpace { dim: 2 };
            let rec = simulate_path(&m, &Point::new(&[x0, 0.0]), &PathConfig::new(0.01, 0.5, seed), 0, &[], true);
            prop_assert!(rec.trace.unwrap().iter().all(|r| r.coords[0] >= 0.0));
        }

        #[test]
        fn local_time_nondecreasing(seed in 0u64..1000) {
            let m = ModelSpace::EuclideanBall { dim: 2, radius: 0.5 };
            let rec = simulate_path(&m, &Point::new(&[0.4, 0.0]), &PathConfig::new(0.01, 0.5, seed), 0, &[], true);
            let tr = rec.trace.unwrap();
            prop_assert!(tr.windows(2).all(|w| w[1].local_time >= w[0].local_time));
            prop_assert!(tr.iter().all(|r| r.coords.iter().map(|c| c * c).sum::<f64>().sqrt() <= 0.5 + 1e-12));
        }
    }
}
