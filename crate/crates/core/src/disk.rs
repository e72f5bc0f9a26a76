//! Exit from the unit disk starting from a Dirac mass at `p`.
//!
//! An equilibrium is encoded by the distribution of initial directions on
//! the circle, discretized on `N` fixed equally spaced atoms. For `p = 0`
//! the equilibrium is uniform and the common radius solves a scalar ODE;
//! otherwise the atom weights are found by a damped multiplicative
//! fixed-point iteration, optionally continued along a ray from the origin.

use crate::geometry::{Point, Vec2};
use crate::kernel::CongestionModel;
use crate::measure::{check_probability_vector, AtomicFlow};
use crate::trajectory::{integrate_flow, Agent, StepperConfig, StopRule};
use crate::{MfgError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_N: usize = 1000;
pub const DEFAULT_DT: f64 = 1e-2;
pub const DEFAULT_ZETA: f64 = 3e-3;
pub const DEFAULT_MAX_ITERS: usize = 500;
/// Atoms lighter than this are ignored by the arrival test.
pub const POSITIVE_MASS: f64 = 1e-9;
pub const DEFAULT_N_QUAD: usize = 256;

/// Weights on the atoms `z_k = exp(i 2 pi (k + 1/2) / N)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionMeasure {
    weights: Vec<f64>,
}

impl DirectionMeasure {
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(MfgError::InvalidParameter(format!("need at least 4 atoms, got {n}")));
        }
        Ok(DirectionMeasure { weights: vec![1.0 / n as f64; n] })
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 4 {
            return Err(MfgError::InvalidParameter(format!("need at least 4 atoms, got {}", weights.len())));
        }
        check_probability_vector(&weights)?;
        Ok(DirectionMeasure { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn angle(&self, k: usize) -> f64 {
        2.0 * PI * (k as f64 + 0.5) / self.len() as f64
    }

    pub fn atom(&self, k: usize) -> Vec2 {
        Vec2::from_angle(self.angle(k))
    }

    /// Density with respect to the normalized uniform measure on the circle.
    pub fn density(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.weights.iter().map(|w| w * n).collect()
    }

    /// Density with respect to arclength, `mu_k N / (2 pi)`.
    pub fn arclength_density(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.weights.iter().map(|w| w * n / (2.0 * PI)).collect()
    }

    /// `max_k |mu_k - mu_{N-1-k}|`: zero when the measure is symmetric
    /// under `y -> -y`.
    pub fn reflection_asymmetry(&self) -> f64 {
        let n = self.len();
        (0..n).map(|k| (self.weights[k] - self.weights[n - 1 - k]).abs()).fold(0.0, f64::max)
    }

    pub fn max_uniform_deviation(&self) -> f64 {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().map(|w| (w - u).abs()).fold(0.0, f64::max)
    }

    /// `max mu_k / min mu_k`.
    pub fn contrast(&self) -> f64 {
        let max = self.weights.iter().copied().fold(0.0, f64::max);
        let min = self.weights.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (k, &w) in self.weights.iter().enumerate() {
            if w < self.weights[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskFixedPointConfig {
    pub n: usize,
    pub dt: f64,
    pub zeta: f64,
    pub max_iters: usize,
}

impl Default for DiskFixedPointConfig {
    fn default() -> Self {
        DiskFixedPointConfig { n: DEFAULT_N, dt: DEFAULT_DT, zeta: DEFAULT_ZETA, max_iters: DEFAULT_MAX_ITERS }
    }
}

impl DiskFixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(MfgError::InvalidParameter(format!("need at least 4 atoms, got {}", self.n)));
        }
        if !(self.dt > 0.0) || !(self.zeta > 0.0) || self.max_iters == 0 {
            return Err(MfgError::InvalidParameter(format!(
                "need dt > 0, zeta > 0 and max_iters > 0 (dt = {}, zeta = {}, max_iters = {})",
                self.dt, self.zeta, self.max_iters
            )));
        }
        Ok(())
    }
}

/// Radius of the symmetric equilibrium as a function of time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialEquilibrium {
    pub dt: f64,
    /// `min(r~(t_j), 1)` on `t_j = j dt`.
    pub r_samples: Vec<f64>,
    pub exit_time: f64,
}

/// Circle average of `chi0(r |e - omega|)` over `omega`. Only the arc
/// where the kernel is positive contributes; composite Simpson on that arc,
/// parametrized by the angle from `e`.
fn circle_average(model: &CongestionModel, r: f64, e: Vec2, n_quad: usize) -> f64 {
    let eps = model.chi.epsilon;
    let half = if 2.0 * r <= eps { PI } else { 2.0 * (eps / (2.0 * r)).asin() };
    let m = n_quad + n_quad % 2;
    let h = half / m as f64;
    let base = e.angle();
    let f = |phi: f64| {
        let a = model.chi.value(r * (e - Vec2::from_angle(base + phi)).norm());
        let b = model.chi.value(r * (e - Vec2::from_angle(base - phi)).norm());
        a + b
    };
    let mut sum = f(0.0) + f(half);
    for j in 1..m {
        sum += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j as f64 * h);
    }
    sum * h / 3.0 / (2.0 * PI)
}

/// Explicit Euler solution of the radial equation for the symmetric
/// equilibrium from the centre. The right-hand side is evaluated at two
/// directions `e`; they must agree to `1e-10`.
pub fn radial_oracle(model: &CongestionModel, dt: f64, n_quad: usize) -> Result<RadialEquilibrium> {
    if n_quad < 64 {
        return Err(MfgError::InvalidParameter(format!("need at least 64 quadrature points, got {n_quad}")));
    }
    if !(dt > 0.0) {
        return Err(MfgError::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let e1 = Vec2::new(1.0, 0.0);
    let e2 = Vec2::from_angle(0.7);
    let horizon = 10.0 / model.k_min;
    let mut r = 0.0f64;
    let mut r_samples = vec![0.0];
    for j in 0..(horizon / dt).ceil() as usize {
        let eta = model.eta.value_at_depth(1.0 - r);
        let a1 = circle_average(model, r, e1, n_quad);
        let a2 = circle_average(model, r, e2, n_quad);
        if (a1 - a2).abs() >= 1e-10 {
            return Err(MfgError::Symmetry(format!("radial right-hand side depends on e at r = {r}: {a1} vs {a2}")));
        }
        let next = r + dt * model.g.value(eta * a1);
        if next >= 1.0 {
            let exit_time = (j as f64 + (1.0 - r) / (next - r)) * dt;
            r_samples.push(1.0);
            return Ok(RadialEquilibrium { dt, r_samples, exit_time });
        }
        r = next;
        r_samples.push(r);
    }
    Err(MfgError::Horizon { horizon, what: "radial equilibrium reached the boundary".into() })
}

/// One forward simulation for a given direction measure.
#[derive(Clone, Debug)]
pub struct Response {
    /// `|gamma_k(T)|` for every atom.
    pub radii: Vec<f64>,
    /// First time a positive-mass trajectory reaches the boundary.
    pub stop_time: f64,
    pub flow: AtomicFlow<Vec2>,
}

pub fn simulate_response(
    mu: &DirectionMeasure,
    p: Vec2,
    model: &CongestionModel,
    cfg: &DiskFixedPointConfig,
) -> Result<Response> {
    if !(p.norm() < 1.0) {
        return Err(MfgError::InvalidParameter(format!("start point ({}, {}) is not inside the disk", p.x, p.y)));
    }
    let agents: Vec<Agent<Vec2>> = (0..mu.len())
        .map(|k| Agent { position: p, direction: mu.atom(k), weight: mu.weights[k] })
        .collect();
    let horizon = 10.0 / model.k_min;
    let stepper = StepperConfig::new(cfg.dt, horizon).with_stop(StopRule::FirstExit { min_weight: POSITIVE_MASS });
    let flow = integrate_flow(model, &agents, &stepper)?;
    if flow.stop_positions.is_empty() {
        return Err(MfgError::Horizon { horizon, what: "a positive-mass trajectory reached the boundary".into() });
    }
    let radii = flow.stop_positions.iter().map(|x| x.norm()).collect();
    Ok(Response { radii, stop_time: flow.stop_time, flow })
}

/// `max ||gamma_k(T)| - 1|` over atoms of positive mass.
pub fn arrival_spread(mu: &DirectionMeasure, radii: &[f64]) -> f64 {
    mu.weights.iter().zip(radii).filter(|(&w, _)| w > POSITIVE_MASS).map(|(_, r)| (r - 1.0).abs()).fold(0.0, f64::max)
}

/// Reweight by arrival radius, then average with the old weights.
pub fn update_measure(mu: &DirectionMeasure, radii: &[f64]) -> Result<DirectionMeasure> {
    if radii.len() != mu.len() {
        return Err(MfgError::InvalidParameter(format!("{} radii for {} atoms", radii.len(), mu.len())));
    }
    if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(MfgError::InvalidParameter(format!("arrival radius {r} is not a finite non-negative number")));
    }
    let total: f64 = mu.weights.iter().zip(radii).map(|(w, r)| w * r).sum();
    if !(total > 0.0) {
        return Err(MfgError::DegenerateUpdate("every weighted arrival radius is zero".into()));
    }
    let mut next: Vec<f64> = mu.weights.iter().zip(radii).map(|(w, r)| 0.5 * (w + w * r / total)).collect();
    let s: f64 = next.iter().sum();
    next.iter_mut().for_each(|w| *w /= s);
    Ok(DirectionMeasure { weights: next })
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub p: Vec2,
    pub converged: bool,
    /// Converged measure, or the one with the smallest spread seen.
    pub mu: DirectionMeasure,
    pub exit_time: f64,
    pub spread: f64,
    /// Forward simulations run.
    pub iters: usize,
    pub spread_history: Vec<f64>,
    pub max_density: f64,
}

impl FixedPointReport {
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(MfgError::NonConvergence {
                context: format!("disk fixed point at p = ({}, {})", self.p.x, self.p.y),
                best_spread: self.spread,
                iters: self.iters,
            })
        }
    }
}

/// Iterate simulate / test / update until every positive-mass trajectory
/// reaches the boundary within `zeta` of the first one, or `max_iters`
/// simulations have been run.
pub fn fixed_point_solve(
    p: Vec2,
    model: &CongestionModel,
    cfg: &DiskFixedPointConfig,
    mu0: DirectionMeasure,
) -> Result<FixedPointReport> {
    cfg.validate()?;
    if mu0.len() != cfg.n {
        return Err(MfgError::InvalidParameter(format!("seed has {} atoms, config asks for {}", mu0.len(), cfg.n)));
    }
    let mut mu = mu0;
    let mut history = Vec::new();
    let mut best: Option<(f64, DirectionMeasure, f64, f64)> = None;
    for iter in 1..=cfg.max_iters {
        let resp = simulate_response(&mu, p, model, cfg)?;
        let spread = arrival_spread(&mu, &resp.radii);
        history.push(spread);
        if best.as_ref().map_or(true, |b| spread < b.0) {
            best = Some((spread, mu.clone(), resp.stop_time, resp.flow.max_density));
        }
        if spread < cfg.zeta {
            return Ok(FixedPointReport {
                p,
                converged: true,
                mu,
                exit_time: resp.stop_time,
                spread,
                iters: iter,
                spread_history: history,
                max_density: resp.flow.max_density,
            });
        }
        mu = update_measure(&mu, &resp.radii)?;
    }
    let (spread, mu, exit_time, max_density) = best.expect("at least one iteration");
    Ok(FixedPointReport {
        p,
        converged: false,
        mu,
        exit_time,
        spread,
        iters: cfg.max_iters,
        spread_history: history,
        max_density,
    })
}

/// Solve at `0, step, 2 step, ...` along the ray to `p_target`, seeding
/// each solve with the previous measure.
pub fn continuation_schedule(
    p_target: Vec2,
    step: f64,
    model: &CongestionModel,
    cfg: &DiskFixedPointConfig,
) -> Result<Vec<FixedPointReport>> {
    if !(step > 0.0) {
        return Err(MfgError::InvalidParameter(format!("continuation step {step} must be positive")));
    }
    let dist = p_target.norm();
    let n_steps = (dist / step - 1e-9).ceil().max(0.0) as usize;
    let mut reports: Vec<FixedPointReport> = Vec::with_capacity(n_steps + 1);
    let mut seed = DirectionMeasure::uniform(cfg.n)?;
    for i in 0..=n_steps {
        let p = if i == n_steps { p_target } else { p_target * (i as f64 * step / dist) };
        let report = fixed_point_solve(p, model, cfg, seed)?.into_converged()?;
        seed = report.mu.clone();
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::SpeedLaw;

    #[test]
    fn atoms_are_offset_by_half_a_cell() {
        let mu = DirectionMeasure::uniform(4).unwrap();
        assert!((mu.angle(0) - PI / 4.0).abs() < 1e-15);
        assert!((mu.angle(3) - 7.0 * PI / 4.0).abs() < 1e-15);
        assert!(DirectionMeasure::uniform(3).is_err());
        assert!(DirectionMeasure::from_weights(vec![0.5, 0.5, 0.5, -0.5]).is_err());
    }

    #[test]
    fn update_examples() {
        let mu = DirectionMeasure { weights: vec![0.5, 0.5] };
        let next = update_measure(&mu, &[1.0, 0.5]).unwrap();
        assert!((next.weights[0] - 7.0 / 12.0).abs() < 1e-15);
        assert!((next.weights[1] - 5.0 / 12.0).abs() < 1e-15);

        let mu = DirectionMeasure::from_weights(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let same = update_measure(&mu, &[0.8; 4]).unwrap();
        for (a, b) in same.weights.iter().zip(&mu.weights) {
            assert!((a - b).abs() < 1e-15);
        }

        let mu = DirectionMeasure::from_weights(vec![0.0, 0.5, 0.25, 0.25]).unwrap();
        let next = update_measure(&mu, &[1.0, 0.3, 0.9, 1.0]).unwrap();
        assert_eq!(next.weights[0], 0.0);
        assert!((next.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        assert!(matches!(update_measure(&mu, &[0.0; 4]), Err(MfgError::DegenerateUpdate(_))));
    }

    #[test]
    fn radial_oracle_at_unit_speed() {
        let model = CongestionModel::disk(0.1).unwrap().with_speed_law(SpeedLaw::Constant(1.0)).unwrap();
        let rad = radial_oracle(&model, 1e-2, 64).unwrap();
        assert!((rad.exit_time - 1.0).abs() < 1e-9);
        assert!(radial_oracle(&model, 1e-2, 16).is_err());
    }

    #[test]
    fn radial_oracle_initial_slope() {
        let model = CongestionModel::disk(0.1).unwrap();
        let dt = 1e-3;
        let rad = radial_oracle(&model, dt, 256).unwrap();
        assert!((rad.r_samples[1] - dt / 26.0).abs() < 1e-15);
        assert!(rad.r_samples.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn unit_speed_response_from_centre() {
        let model = CongestionModel::disk(0.1).unwrap().with_speed_law(SpeedLaw::Constant(1.0)).unwrap();
        let cfg = DiskFixedPointConfig { n: 16, ..Default::default() };
        let mu = DirectionMeasure::uniform(16).unwrap();
        let resp = simulate_response(&mu, Vec2::new(0.0, 0.0), &model, &cfg).unwrap();
        assert!((resp.stop_time - 1.0).abs() <= cfg.dt);
        for r in &resp.radii {
            assert!((r - 1.0).abs() <= cfg.dt);
        }
        assert!(simulate_response(&mu, Vec2::new(1.0, 0.0), &model, &cfg).is_err());
    }

    #[test]
    fn centre_start_converges_immediately() {
        let model = CongestionModel::disk(0.1).unwrap();
        let cfg = DiskFixedPointConfig { n: 64, ..Default::default() };
        let rep = fixed_point_solve(Vec2::new(0.0, 0.0), &model, &cfg, DirectionMeasure::uniform(64).unwrap()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iters, 1);
        assert!(rep.mu.max_uniform_deviation() <= 1e-15);
    }

    #[test]
    fn free_flow_off_centre_does_not_converge() {
        let model = CongestionModel::disk(0.1).unwrap().with_speed_law(SpeedLaw::Constant(1.0)).unwrap();
        let cfg = DiskFixedPointConfig { n: 16, max_iters: 5, ..Default::default() };
        let rep = fixed_point_solve(Vec2::new(0.3, 0.0), &model, &cfg, DirectionMeasure::uniform(16).unwrap()).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.spread_history.len(), 5);
        assert!(matches!(rep.into_converged(), Err(MfgError::NonConvergence { .. })));
    }
}
