//! The corridor game on `[0, 1]` with exits at both ends and all agents
//! initially at `ell`: the crowd splits into a left-moving Dirac of mass
//! `alpha` and a right-moving one of mass `1 - alpha`, and `alpha` is an
//! equilibrium when both arrive together (or one side is empty and the
//! other is not slower).

use crate::kernel::CongestionModel;
use crate::measure::AtomicFlow;
use crate::roots::{split_bisection, SplitCase};
use crate::trajectory::{integrate_flow, Agent, StepperConfig};
use crate::{MfgError, Result};
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_TOL_ALPHA: f64 = 1e-4;
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentInstance {
    pub ell: f64,
    pub model: CongestionModel,
    pub dt: f64,
}

impl SegmentInstance {
    pub fn new(ell: f64, model: CongestionModel, dt: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ell) {
            return Err(MfgError::InvalidParameter(format!("ell = {ell} is outside [0, 1]")));
        }
        if !(dt > 0.0) {
            return Err(MfgError::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        Ok(SegmentInstance { ell, model, dt })
    }

    /// Standard kernels with `eps = 0.1` and `dt = 1e-4`.
    pub fn standard(ell: f64) -> Result<Self> {
        Self::new(ell, CongestionModel::segment(DEFAULT_EPSILON)?, DEFAULT_DT)
    }

    pub fn with_ell(&self, ell: f64) -> Result<Self> {
        Self::new(ell, self.model, self.dt)
    }

    /// Upper bound on any exit time, with a safety factor of 10.
    pub fn horizon(&self) -> f64 {
        10.0 / self.model.k_min
    }
}

/// Crossing times of the two extended curves for one split fraction.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub t_left: f64,
    pub t_right: f64,
    pub flow: AtomicFlow<f64>,
}

/// Integrate the two-Dirac system for a given `alpha` until both curves have
/// reached their exits. A curve of zero mass is still integrated as a probe.
pub fn integrate_pair(inst: &SegmentInstance, alpha: f64) -> Result<PairRun> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MfgError::InvalidParameter(format!("alpha = {alpha} is outside [0, 1]")));
    }
    let agents = [
        Agent { position: inst.ell, direction: -1.0, weight: alpha },
        Agent { position: inst.ell, direction: 1.0, weight: 1.0 - alpha },
    ];
    let cfg = StepperConfig::new(inst.dt, inst.horizon());
    let flow = integrate_flow(&inst.model, &agents, &cfg)?;
    let exit = |k: usize| {
        flow.trajectories[k].exit_time.ok_or_else(|| MfgError::Horizon {
            horizon: cfg.max_time,
            what: format!("curve {} reached its exit", if k == 0 { "left" } else { "right" }),
        })
    };
    let (t_left, t_right) = (exit(0)?, exit(1)?);
    Ok(PairRun { t_left, t_right, flow })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SegmentCase {
    Interior,
    AllLeft,
    AllRight,
}

impl SegmentCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            SegmentCase::Interior => "interior",
            SegmentCase::AllLeft => "all_left",
            SegmentCase::AllRight => "all_right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SegmentEquilibrium {
    pub ell: f64,
    pub alpha: f64,
    pub t_left: f64,
    pub t_right: f64,
    /// Arrival time of the agents actually present.
    pub exit_time: f64,
    pub residual: f64,
    pub case: SegmentCase,
    pub iters: usize,
    pub prescan_sign_changes: Option<usize>,
}

/// Equilibrium split fraction by the endpoint trichotomy and bisection on
/// `T_r(alpha) - T_l(alpha)`.
pub fn solve_alpha(inst: &SegmentInstance, tol_alpha: f64) -> Result<SegmentEquilibrium> {
    let outcome = split_bisection(
        |alpha| {
            let run = integrate_pair(inst, alpha)?;
            Ok(run.t_right - run.t_left)
        },
        tol_alpha,
        true,
    )?;
    let alpha = outcome.value;
    let run = integrate_pair(inst, alpha)?;
    let (case, exit_time, residual) = match outcome.case {
        SplitCase::Lower => (SegmentCase::AllRight, run.t_right, 0.0),
        SplitCase::Upper => (SegmentCase::AllLeft, run.t_left, 0.0),
        SplitCase::Interior => (SegmentCase::Interior, run.t_left.max(run.t_right), (run.t_left - run.t_right).abs()),
    };
    Ok(SegmentEquilibrium {
        ell: inst.ell,
        alpha,
        t_left: run.t_left,
        t_right: run.t_right,
        exit_time,
        residual,
        case,
        iters: outcome.evaluations + 1,
        prescan_sign_changes: outcome.prescan_sign_changes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub ell: f64,
    pub result: std::result::Result<SegmentEquilibrium, String>,
}

/// One equilibrium per `ell`, rows in input order; failures are recorded per
/// row and do not stop the sweep.
pub fn sweep_ell(ells: &[f64], template: &SegmentInstance, tol_alpha: f64) -> Vec<SweepRow> {
    ells.par_iter()
        .map(|&ell| SweepRow {
            ell,
            result: template
                .with_ell(ell)
                .and_then(|inst| solve_alpha(&inst, tol_alpha))
                .map_err(|e| e.to_string()),
        })
        .collect()
}
