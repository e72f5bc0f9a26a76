//! Explicit Euler integration of the characteristic system
//!
//! ```text
//! gamma' = K(m_t, gamma) u
//! u'     = -(grad_x K - (u . grad_x K) u)
//! ```
//!
//! for an ensemble of weighted particles whose empirical measure is the
//! congestion source, plus restart-based value-function diagnostics.

use crate::geometry::{Point, Vec2};
use crate::kernel::CongestionModel;
use crate::measure::{check_probability_vector, AtomicFlow, WeightedParticles};
use crate::{MfgError, Result};

/// Unit-norm tolerance for control directions.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A curve sampled on the uniform grid `t0 + j dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPath<P> {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<P>,
    /// Control direction at each sample; a constant sign in 1D.
    pub directions: Vec<P>,
    pub exit_time: Option<f64>,
    pub frozen_after_exit: bool,
}

impl<P: Point> TrajectoryPath<P> {
    pub fn from_samples(t0: f64, dt: f64, states: Vec<P>, directions: Vec<P>, exit_time: Option<f64>) -> Self {
        TrajectoryPath { t0, dt, states, directions, exit_time, frozen_after_exit: true }
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.states.len().saturating_sub(1))
    }

    /// Linear interpolation between grid samples.
    pub fn state_at(&self, t: f64) -> Result<P> {
        let end = self.end_time();
        // Allow rounding slack at the grid ends.
        let slack = 1e-9 * self.dt;
        if !(t >= self.t0 - slack && t <= end + slack) {
            return Err(MfgError::OutOfRange { t, start: self.t0, end });
        }
        let s = ((t - self.t0) / self.dt).max(0.0);
        let j = (s.floor() as usize).min(self.states.len() - 1);
        if j + 1 >= self.states.len() {
            return Ok(self.states[j]);
        }
        let frac = s - j as f64;
        Ok(self.states[j] + (self.states[j + 1] - self.states[j]) * frac)
    }

    /// Time left before exit when standing on the curve at time `s`.
    pub fn remaining_time(&self, s: f64) -> Result<f64> {
        let exit = self.exit_time.ok_or_else(|| MfgError::OutOfRange {
            t: s,
            start: self.t0,
            end: self.end_time(),
        })?;
        if !(s >= self.t0 && s <= exit) {
            return Err(MfgError::OutOfRange { t: s, start: self.t0, end: exit });
        }
        Ok(exit - s)
    }
}

/// When the ensemble integration stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Every particle has crossed the boundary.
    AllExited,
    /// The first particle with weight above `min_weight` has crossed.
    FirstExit { min_weight: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub max_time: f64,
    pub renormalize_u: bool,
    pub stop: StopRule,
}

impl StepperConfig {
    pub fn new(dt: f64, max_time: f64) -> Self {
        StepperConfig { dt, max_time, renormalize_u: true, stop: StopRule::AllExited }
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.max_time >= self.dt) {
            return Err(MfgError::InvalidParameter(format!(
                "need dt > 0 and max_time >= dt (dt = {}, max_time = {})",
                self.dt, self.max_time
            )));
        }
        Ok(())
    }

    fn max_steps(&self) -> usize {
        (self.max_time / self.dt).ceil() as usize
    }
}

/// Initial data of one particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agent<P> {
    pub position: P,
    pub direction: P,
    pub weight: f64,
}

fn check_unit<P: Point>(u: P) -> Result<()> {
    let n = u.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(MfgError::NonUnitDirection(n));
    }
    Ok(())
}

#[inline]
fn advance_direction<P: Point>(u: P, grad: P, dt: f64, renormalize: bool) -> P {
    let tangential = grad - u * u.dot(grad);
    let v = u - tangential * dt;
    if renormalize {
        v * (1.0 / v.norm())
    } else {
        v
    }
}

/// One explicit Euler step of the characteristic system against `m_t`.
pub fn step_characteristic<P: Point>(
    model: &CongestionModel,
    m_t: &WeightedParticles<P>,
    gamma: P,
    u: P,
    dt: f64,
) -> Result<(P, P)> {
    check_unit(u)?;
    let k = model.speed(m_t, gamma);
    let grad = model.speed_gradient(m_t, gamma);
    Ok((gamma + u * (dt * k), advance_direction(u, grad, dt, true)))
}

/// Boundary crossing inside a step from depth `d0` to depth `d1`, as a
/// fraction of the step, if one occurs.
#[inline]
fn crossing_fraction(d0: f64, d1: f64) -> Option<f64> {
    if d1 > 0.0 {
        return None;
    }
    if d0 <= 0.0 {
        return Some(0.0);
    }
    Some((d0 / (d0 - d1)).clamp(0.0, 1.0))
}

/// Advance every particle in lockstep, each step evaluating the speed field
/// against the current empirical measure of the whole ensemble. Particles
/// that cross the boundary are frozen on it and stay in the measure (the
/// cutoff makes their contribution vanish).
pub fn integrate_flow<P: Point>(
    model: &CongestionModel,
    initial: &[Agent<P>],
    cfg: &StepperConfig,
) -> Result<AtomicFlow<P>> {
    cfg.validate()?;
    let weights: Vec<f64> = initial.iter().map(|a| a.weight).collect();
    check_probability_vector(&weights)?;
    for a in initial {
        check_unit(a.direction)?;
    }
    let n = initial.len();
    let dt = cfg.dt;
    let t0 = 0.0;
    let mut pos: Vec<P> = initial.iter().map(|a| a.position).collect();
    let mut dir: Vec<P> = initial.iter().map(|a| a.direction).collect();
    let mut exit: Vec<Option<f64>> = pos
        .iter()
        .map(|x| if x.boundary_depth() < 0.0 { Some(t0) } else { None })
        .collect();
    let cap = cfg.max_steps().min(1 << 16) + 1;
    let mut states: Vec<Vec<P>> = pos.iter().map(|&x| {
        let mut v = Vec::with_capacity(cap);
        v.push(x);
        v
    }).collect();
    let mut dirs: Vec<Vec<P>> = dir.iter().map(|&u| {
        let mut v = Vec::with_capacity(cap);
        v.push(u);
        v
    }).collect();
    let mut max_density: f64 = 0.0;
    let mut proposed = pos.clone();
    let mut stop: Option<(f64, Vec<P>)> = None;

    let positive = |w: f64, rule: StopRule| match rule {
        StopRule::AllExited => true,
        StopRule::FirstExit { min_weight } => w > min_weight,
    };

    for step in 0..cfg.max_steps() {
        let t = t0 + step as f64 * dt;
        let fields = model.ensemble_fields(&pos, &weights);
        let old = pos.clone();
        for i in 0..n {
            if exit[i].is_some() {
                proposed[i] = pos[i];
                continue;
            }
            let f = fields[i];
            max_density = max_density.max(f.density);
            let next = pos[i] + dir[i] * (dt * f.speed);
            proposed[i] = next;
            dir[i] = advance_direction(dir[i], f.gradient, dt, cfg.renormalize_u);
            match crossing_fraction(pos[i].boundary_depth(), next.boundary_depth()) {
                Some(frac) => {
                    exit[i] = Some(t + frac * dt);
                    pos[i] = (pos[i] + (next - pos[i]) * frac).snap_to_boundary();
                }
                None => pos[i] = next,
            }
        }
        for i in 0..n {
            states[i].push(pos[i]);
            dirs[i].push(dir[i]);
        }

        let done = match cfg.stop {
            StopRule::AllExited => exit.iter().all(Option::is_some),
            StopRule::FirstExit { .. } => exit
                .iter()
                .zip(&weights)
                .any(|(e, &w)| e.is_some() && positive(w, cfg.stop)),
        };
        if done {
            let stop_time = match cfg.stop {
                StopRule::AllExited => exit.iter().flatten().copied().fold(t0, f64::max),
                StopRule::FirstExit { .. } => exit
                    .iter()
                    .zip(&weights)
                    .filter(|(e, &w)| e.is_some() && positive(w, cfg.stop))
                    .map(|(e, _)| e.unwrap())
                    .fold(f64::INFINITY, f64::min),
            };
            let frac = ((stop_time - t) / dt).clamp(0.0, 1.0);
            let at_stop = (0..n)
                .map(|i| match exit[i] {
                    Some(e) if e <= stop_time => pos[i],
                    _ => old[i] + (proposed[i] - old[i]) * frac,
                })
                .collect();
            stop = Some((stop_time, at_stop));
            break;
        }
    }

    let trajectories = states
        .into_iter()
        .zip(dirs)
        .zip(&exit)
        .map(|((s, d), e)| TrajectoryPath::from_samples(t0, dt, s, d, *e))
        .collect();
    let mut flow = AtomicFlow::new(trajectories, weights)?;
    if let Some((t, p)) = stop {
        flow.stop_time = t;
        flow.stop_positions = p;
    }
    flow.max_density = max_density;
    Ok(flow)
}

/// Largest excess of the discrete speed over the admissible speed,
/// `max_j |gamma(t_{j+1}) - gamma(t_j)| / dt - K(m_{t_j}, gamma(t_j))`.
pub fn max_speed_excess<P: Point>(model: &CongestionModel, flow: &AtomicFlow<P>) -> f64 {
    let steps = flow.trajectories[0].states.len();
    let dt = flow.dt();
    let mut worst = f64::NEG_INFINITY;
    for j in 0..steps.saturating_sub(1) {
        let pts: Vec<P> = flow.trajectories.iter().map(|p| p.states[j]).collect();
        let fields = model.ensemble_fields(&pts, &flow.weights);
        for (p, f) in flow.trajectories.iter().zip(&fields) {
            let v = (p.states[j + 1] - p.states[j]).norm() / dt;
            worst = worst.max(v - f.speed);
        }
    }
    worst
}

/// Exit time of a single test agent started at `(t_start, x0)` with
/// direction `u0`, moving against the frozen crowd `flow` (the agent does
/// not contribute to the congestion). `None` if the horizon is reached.
pub fn restart_exit_time<P: Point>(
    model: &CongestionModel,
    flow: &AtomicFlow<P>,
    t_start: f64,
    x0: P,
    u0: P,
    cfg: &StepperConfig,
) -> Result<Option<f64>> {
    cfg.validate()?;
    check_unit(u0)?;
    if t_start < flow.start_time() {
        return Err(MfgError::OutOfRange { t: t_start, start: flow.start_time(), end: flow.end_time() });
    }
    let (mut x, mut u) = (x0, u0);
    if x.boundary_depth() <= 0.0 {
        return Err(MfgError::BoundaryProximity(format!("restart point {x:?} is on or outside the boundary")));
    }
    for step in 0..cfg.max_steps() {
        let t = t_start + step as f64 * cfg.dt;
        let m = flow.measure_at_clamped(t)?;
        let k = model.speed(&m, x);
        let grad = model.speed_gradient(&m, x);
        let next = x + u * (cfg.dt * k);
        if let Some(frac) = crossing_fraction(x.boundary_depth(), next.boundary_depth()) {
            return Ok(Some(t + frac * cfg.dt));
        }
        x = next;
        u = advance_direction(u, grad, cfg.dt, cfg.renormalize_u);
    }
    Ok(None)
}

/// Minimization of a restart exit time over initial control directions.
pub trait DirectionSearch: Point {
    fn minimize_exit<F>(f: F) -> Result<Option<(f64, Self)>>
    where
        F: Fn(Self) -> Result<Option<f64>>;
}

impl DirectionSearch for f64 {
    fn minimize_exit<F>(f: F) -> Result<Option<(f64, Self)>>
    where
        F: Fn(Self) -> Result<Option<f64>>,
    {
        let left = f(-1.0)?;
        let right = f(1.0)?;
        Ok(match (left, right) {
            (Some(l), Some(r)) if l <= r => Some((l, -1.0)),
            (Some(_), Some(r)) => Some((r, 1.0)),
            (Some(l), None) => Some((l, -1.0)),
            (None, Some(r)) => Some((r, 1.0)),
            (None, None) => None,
        })
    }
}

impl DirectionSearch for Vec2 {
    /// Coarse scan over 32 angles, then golden-section refinement around the
    /// best one.
    fn minimize_exit<F>(f: F) -> Result<Option<(f64, Self)>>
    where
        F: Fn(Self) -> Result<Option<f64>>,
    {
        const COARSE: usize = 32;
        let eval = |theta: f64| -> Result<f64> { Ok(f(Vec2::from_angle(theta))?.unwrap_or(f64::INFINITY)) };
        let h = std::f64::consts::TAU / COARSE as f64;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..COARSE {
            let theta = k as f64 * h;
            let v = eval(theta)?;
            if v < best.0 {
                best = (v, theta);
            }
        }
        if !best.0.is_finite() {
            return Ok(None);
        }
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (best.1 - h, best.1 + h);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (eval(c)?, eval(d)?);
        for _ in 0..40 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = eval(d)?;
            }
        }
        let theta = 0.5 * (a + b);
        let v = eval(theta)?;
        let (v, theta) = if v <= best.0 { (v, theta) } else { best };
        Ok(Some((v, Vec2::from_angle(theta))))
    }
}

/// Value function of a single agent against the frozen crowd: least
/// remaining time to exit from `(t, x)`.
pub fn restart_value<P: DirectionSearch>(
    model: &CongestionModel,
    flow: &AtomicFlow<P>,
    t: f64,
    x: P,
    cfg: &StepperConfig,
) -> Result<f64> {
    let best = P::minimize_exit(|u| restart_exit_time(model, flow, t, x, u, cfg))?;
    match best {
        Some((exit, _)) => Ok(exit - t),
        None => Err(MfgError::Horizon { horizon: cfg.max_time, what: "restart exit".into() }),
    }
}

/// `[remaining(t + h) + h] - remaining(t)` along trajectory `k`.
pub fn dpp_residual<P: Point>(flow: &AtomicFlow<P>, k: usize, t: f64, h: f64) -> Result<f64> {
    let path = &flow.trajectories[k];
    let later = path.remaining_time(t + h)?;
    let now = path.remaining_time(t)?;
    Ok(later + h - now)
}

/// Gap between the remaining time stored along trajectory `k` at time `t`
/// and an independent restart of the optimal control problem from
/// `(t, gamma_k(t))`.
pub fn dpp_restart_gap<P: DirectionSearch>(
    model: &CongestionModel,
    flow: &AtomicFlow<P>,
    k: usize,
    t: f64,
    cfg: &StepperConfig,
) -> Result<f64> {
    let path = &flow.trajectories[k];
    let stored = path.remaining_time(t)?;
    let x = path.state_at(t)?;
    let restarted = restart_value(model, flow, t, x, cfg)?;
    Ok(restarted - stored)
}

/// `-d_t phi + |grad_x phi| K - 1` at `(t, gamma_k(t))`, with `phi` the
/// restart value function and central differences of step `h`.
pub fn hj_residual_along<P: DirectionSearch>(
    model: &CongestionModel,
    flow: &AtomicFlow<P>,
    k: usize,
    t: f64,
    h: f64,
    cfg: &StepperConfig,
) -> Result<f64> {
    let x = flow.trajectories[k].state_at(t)?;
    if x.boundary_depth() <= 2.0 * h {
        return Err(MfgError::BoundaryProximity(format!("{x:?} within {} of the boundary", 2.0 * h)));
    }
    if t - h < flow.start_time() {
        return Err(MfgError::OutOfRange { t: t - h, start: flow.start_time(), end: flow.end_time() });
    }
    let phi = |s: f64, y: P| restart_value(model, flow, s, y, cfg);
    let dphi_dt = (phi(t + h, x)? - phi(t - h, x)?) / (2.0 * h);
    let mut grad_sq = 0.0;
    for axis in 0..P::DIM {
        let e = P::axis(axis);
        let d = (phi(t, x + e * h)? - phi(t, x - e * h)?) / (2.0 * h);
        grad_sq += d * d;
    }
    let m = flow.measure_at_clamped(t)?;
    Ok(-dphi_dt + grad_sq.sqrt() * model.speed(&m, x) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::SpeedLaw;

    fn unit_speed_segment() -> CongestionModel {
        CongestionModel::segment(0.1).unwrap().with_speed_law(SpeedLaw::Constant(1.0)).unwrap()
    }

    #[test]
    fn straight_line_under_constant_speed() {
        let m = unit_speed_segment();
        let mu = WeightedParticles::dirac(0.5);
        let (g, u) = step_characteristic(&m, &mu, 0.5, -1.0, 0.01).unwrap();
        assert!((g - 0.49).abs() < 1e-15);
        assert_eq!(u, -1.0);
        assert!(step_characteristic(&m, &mu, 0.5, 0.5, 0.01).is_err());
    }

    #[test]
    fn projection_kills_parallel_gradient() {
        let m = CongestionModel::disk(0.1).unwrap();
        let mu = WeightedParticles::dirac(Vec2::new(0.25, 0.0));
        let x = Vec2::new(0.3, 0.0);
        assert!(m.speed_gradient(&mu, x).norm() > 0.0);
        let (_, u) = step_characteristic(&m, &mu, x, Vec2::new(1.0, 0.0), 0.01).unwrap();
        assert_eq!(u, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn unit_speed_exit_from_middle() {
        let m = unit_speed_segment();
        let cfg = StepperConfig::new(1e-3, 5.0);
        let flow = integrate_flow(&m, &[Agent { position: 0.5, direction: -1.0, weight: 1.0 }], &cfg).unwrap();
        let p = &flow.trajectories[0];
        assert!((p.exit_time.unwrap() - 0.5).abs() <= 1e-3);
        for t in [0.0, 0.1, 0.37, 0.5] {
            assert!((p.state_at(t).unwrap() - (0.5 - t).max(0.0)).abs() < 1e-3);
        }
    }

    #[test]
    fn starting_on_the_exit_leaves_at_once() {
        let m = unit_speed_segment();
        let cfg = StepperConfig::new(1e-3, 5.0);
        let agents = [
            Agent { position: 0.0, direction: -1.0, weight: 0.5 },
            Agent { position: 0.0, direction: 1.0, weight: 0.5 },
        ];
        let flow = integrate_flow(&m, &agents, &cfg).unwrap();
        assert_eq!(flow.trajectories[0].exit_time, Some(0.0));
        assert!((flow.trajectories[1].exit_time.unwrap() - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn horizon_leaves_exit_time_unset() {
        let m = unit_speed_segment();
        let cfg = StepperConfig::new(1e-2, 0.1);
        let flow = integrate_flow(&m, &[Agent { position: 0.5, direction: 1.0, weight: 1.0 }], &cfg).unwrap();
        assert_eq!(flow.trajectories[0].exit_time, None);
    }

    #[test]
    fn first_exit_interpolates_stop_positions() {
        let m = unit_speed_segment();
        let cfg = StepperConfig::new(0.03, 5.0).with_stop(StopRule::FirstExit { min_weight: 1e-9 });
        let agents = [
            Agent { position: 0.2, direction: -1.0, weight: 0.5 },
            Agent { position: 0.4, direction: 1.0, weight: 0.5 },
        ];
        let flow = integrate_flow(&m, &agents, &cfg).unwrap();
        assert!((flow.stop_time - 0.2).abs() < 1e-12);
        assert_eq!(flow.stop_positions[0], 0.0);
        assert!((flow.stop_positions[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn dpp_residual_telescopes() {
        let m = unit_speed_segment();
        let cfg = StepperConfig::new(1e-3, 5.0);
        let flow = integrate_flow(&m, &[Agent { position: 0.7, direction: 1.0, weight: 1.0 }], &cfg).unwrap();
        assert!(dpp_residual(&flow, 0, 0.05, 0.1).unwrap().abs() < 1e-12);
        assert!(dpp_residual(&flow, 0, 0.25, 0.1).is_err());
    }

    #[test]
    fn hj_residual_vanishes_at_unit_speed() {
        let m = unit_speed_segment();
        let dt = 1e-4;
        let cfg = StepperConfig::new(dt, 5.0);
        let flow = integrate_flow(&m, &[Agent { position: 0.4, direction: -1.0, weight: 1.0 }], &cfg).unwrap();
        for t in [0.05, 0.1, 0.2] {
            let r = hj_residual_along(&m, &flow, 0, t, 1e-2, &cfg).unwrap();
            assert!(r.abs() <= 2.0 * dt, "t = {t}: {r}");
        }
    }

    #[test]
    fn disk_exit_at_unit_speed() {
        let m = CongestionModel::disk(0.1).unwrap().with_speed_law(SpeedLaw::Constant(1.0)).unwrap();
        let dt = 1e-2;
        let cfg = StepperConfig::new(dt, 5.0);
        for theta in [0.0, 1.0, 2.5] {
            let a = Agent { position: Vec2::zero(), direction: Vec2::from_angle(theta), weight: 1.0 };
            let flow = integrate_flow(&m, &[a], &cfg).unwrap();
            assert!((flow.trajectories[0].exit_time.unwrap() - 1.0).abs() <= dt);
        }
    }
}
