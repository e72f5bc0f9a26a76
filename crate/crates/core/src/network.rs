//! The Braess network: vertices `A, B, C, D`, edges `AC` and `DB` of length
//! 1, `AD` and `CB` of length `L > 1`, and the shortcut `CD` of length
//! `ell`. All mass starts at `A` and leaves at `B`.
//!
//! At equilibrium the mass splits at `A` into `alpha1` on `AC` and
//! `1 - alpha1` on `AD`; at `C` a fraction `alpha2` of the `AC` mass takes
//! the shortcut. The two groups heading to `D` must arrive together, and so
//! must the two groups heading to `B`.

use crate::geometry::{GraphMetric, GraphPoint};
use crate::kernel::CongestionModel;
use crate::measure::WeightedParticles;
use crate::roots::{split_bisection, SplitCase};
use crate::{MfgError, Result};
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_LONG_EDGE: f64 = 1.25;
pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 1e-4;

pub const A: usize = 0;
pub const B: usize = 1;
pub const C: usize = 2;
pub const D: usize = 3;

pub const AC: usize = 0;
pub const AD: usize = 1;
pub const CD: usize = 2;
pub const CB: usize = 3;
pub const DB: usize = 4;

/// Edges as (tail, head), oriented in the direction of travel.
pub const EDGES: [(usize, usize); 5] = [(A, C), (A, D), (C, D), (C, B), (D, B)];

pub const EDGE_NAMES: [&str; 5] = ["AC", "AD", "CD", "CB", "DB"];

/// Slack allowed on arclength coordinates.
const COORD_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct BraessNetwork {
    pub long_edge: f64,
    pub short_edge: f64,
    lengths: [f64; 5],
    vertex_dist: [[f64; 4]; 4],
}

impl BraessNetwork {
    pub fn new(long_edge: f64, short_edge: f64) -> Result<Self> {
        if !(long_edge > 1.0) {
            return Err(MfgError::InvalidParameter(format!("L = {long_edge} must exceed 1")));
        }
        if !(short_edge > 0.0 && short_edge < 1.0) {
            return Err(MfgError::InvalidParameter(format!("ell = {short_edge} must lie in (0, 1)")));
        }
        let lengths = [1.0, long_edge, short_edge, long_edge, 1.0];
        let vertex_dist = vertex_distances(&lengths);
        Ok(BraessNetwork { long_edge, short_edge, lengths, vertex_dist })
    }

    pub fn standard(ell: f64) -> Result<Self> {
        Self::new(DEFAULT_LONG_EDGE, ell)
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        self.lengths[edge]
    }

    pub fn vertex_distance(&self, a: usize, b: usize) -> f64 {
        self.vertex_dist[a][b]
    }

    fn check(&self, p: GraphPoint) -> Result<()> {
        if p.edge >= 5 || !(p.s >= -COORD_TOL && p.s <= self.lengths[p.edge] + COORD_TOL) {
            return Err(MfgError::InvalidCoordinate { edge: p.edge, arclength: p.s });
        }
        Ok(())
    }
}

/// All-pairs vertex distances by enumerating simple paths.
fn vertex_distances(lengths: &[f64; 5]) -> [[f64; 4]; 4] {
    fn walk(at: usize, target: usize, visited: &mut [bool; 4], len: f64, lengths: &[f64; 5], best: &mut f64) {
        if at == target {
            *best = best.min(len);
            return;
        }
        for (e, &(u, v)) in EDGES.iter().enumerate() {
            let next = if u == at {
                v
            } else if v == at {
                u
            } else {
                continue;
            };
            if !visited[next] {
                visited[next] = true;
                walk(next, target, visited, len + lengths[e], lengths, best);
                visited[next] = false;
            }
        }
    }
    let mut dist = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut visited = [false; 4];
            visited[a] = true;
            let mut best = f64::INFINITY;
            walk(a, b, &mut visited, 0.0, lengths, &mut best);
            dist[a][b] = best;
        }
    }
    dist
}

impl GraphMetric for BraessNetwork {
    fn distance(&self, a: GraphPoint, b: GraphPoint) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let ends = |p: GraphPoint| {
            let (tail, head) = EDGES[p.edge];
            [(tail, p.s), (head, self.lengths[p.edge] - p.s)]
        };
        let mut best = if a.edge == b.edge { (a.s - b.s).abs() } else { f64::INFINITY };
        for (va, da) in ends(a) {
            for (vb, db) in ends(b) {
                best = best.min(da + self.vertex_dist[va][vb] + db);
            }
        }
        Ok(best)
    }
}

/// A Dirac mass travelling along one edge toward its head.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Walker {
    pub edge: usize,
    pub s: f64,
    pub weight: f64,
    /// Reached `B`; kept for mass bookkeeping but no longer congests.
    pub exited: bool,
}

impl Walker {
    fn new(edge: usize, s: f64, weight: f64) -> Self {
        Walker { edge, s, weight, exited: false }
    }

    fn point(&self) -> GraphPoint {
        GraphPoint::new(self.edge, self.s)
    }
}

/// Snapshot of the staged dynamics at one grid time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StagedSample {
    pub t: f64,
    pub stage: u8,
    pub walkers: Vec<Walker>,
    pub speeds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StagedRun {
    pub alpha1: f64,
    pub alpha2: f64,
    /// `AC` group reaches `C`.
    pub t1: Option<f64>,
    /// The `D`-bound groups merge onto `DB`.
    pub t2: Option<f64>,
    /// First arrival of positive mass at `B`.
    pub t: Option<f64>,
    /// Signed `T_AD - T_CD` (positive when the shortcut group reaches `D` first).
    pub residual_d: f64,
    /// Signed `T_CB - T_CDB`: the `CB` arrival against the arrival at `B` of
    /// the shortcut group, whose departure from `D` is the merged `DB`
    /// departure shifted by its own arrival offset at `D`.
    pub residual_b: Option<f64>,
    /// Mass on `AD` reached `D` before `AC` reached `C`; the later stages
    /// were not run.
    pub out_of_order: bool,
    pub max_density: f64,
    pub trace: Option<Vec<StagedSample>>,
}

/// Crossing of the edge end inside a step from `s0` to `s1`.
fn crossing(s0: f64, s1: f64, len: f64) -> Option<f64> {
    if s1 < len {
        None
    } else if s0 >= len {
        Some(0.0)
    } else {
        Some(((len - s0) / (s1 - s0)).clamp(0.0, 1.0))
    }
}

fn walker_fields(net: &BraessNetwork, model: &CongestionModel, walkers: &[Walker]) -> Result<(Vec<f64>, f64)> {
    let mut speeds = Vec::with_capacity(walkers.len());
    let mut max_e: f64 = 0.0;
    for w in walkers {
        let mut e = 0.0;
        for o in walkers {
            if o.weight > 0.0 && !o.exited {
                e += o.weight * model.chi.value(net.distance(w.point(), o.point())?);
            }
        }
        max_e = max_e.max(e);
        speeds.push(model.g.value(e));
    }
    Ok((speeds, max_e))
}

/// Integrate the staged dynamics for given split fractions.
///
/// Walkers of zero mass are integrated as probes: their arrivals set the
/// signs of the residuals but never trigger the merge at `D` or the exit at
/// `B`. When both arrivals at a vertex are observed the residual is their
/// exact time difference; otherwise the laggard's remaining arclength at the
/// leader's crossing is converted to time with its current speed.
pub fn integrate_staged(
    net: &BraessNetwork,
    model: &CongestionModel,
    alpha1: f64,
    alpha2: f64,
    dt: f64,
    record: bool,
) -> Result<StagedRun> {
    for (name, a) in [("alpha1", alpha1), ("alpha2", alpha2)] {
        if !(0.0..=1.0).contains(&a) {
            return Err(MfgError::InvalidParameter(format!("{name} = {a} is outside [0, 1]")));
        }
    }
    if !(dt > 0.0) {
        return Err(MfgError::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let horizon = 10.0 * (2.0 + net.long_edge) / model.k_min;
    let max_steps = (horizon / dt).ceil() as usize;
    let mut trace = record.then(Vec::new);
    let mut max_density: f64 = 0.0;

    let mut slots: [Option<Walker>; 5] = [None; 5];
    let mut parked = [false; 5];
    let mut arrival: [Option<f64>; 5] = [None; 5];
    slots[AC] = Some(Walker::new(AC, 0.0, alpha1));
    slots[AD] = Some(Walker::new(AD, 0.0, 1.0 - alpha1));
    let mut stage = 1u8;
    let mut t1 = None;
    let mut t2 = None;
    let mut residual_d: Option<f64> = None;
    // Merge time minus the CD group's own arrival at D.
    let mut shortcut_shift = 0.0;
    let weight = |slots: &[Option<Walker>; 5], e: usize| slots[e].map_or(0.0, |w| w.weight);

    for step in 0..max_steps {
        let t = step as f64 * dt;
        let t_next = t + dt;
        let live: Vec<usize> = (0..5).filter(|&e| slots[e].is_some()).collect();
        let walkers: Vec<Walker> = live.iter().map(|&e| slots[e].unwrap()).collect();
        let (speeds, e_max) = walker_fields(net, model, &walkers)?;
        max_density = max_density.max(e_max);
        let mut speed = [0.0; 5];
        for (&e, &v) in live.iter().zip(&speeds) {
            speed[e] = v;
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(StagedSample { t, stage, walkers, speeds });
        }

        let mut events: Vec<(f64, usize)> = Vec::new();
        for &e in &live {
            if parked[e] {
                continue;
            }
            let w = slots[e].as_mut().unwrap();
            let s0 = w.s;
            w.s += dt * speed[e];
            if let Some(f) = crossing(s0, w.s, net.edge_length(e)) {
                events.push((f, e));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut arrived_now = [false; 5];
        for &(f, e) in &events {
            arrival[e] = Some(t + f * dt);
            arrived_now[e] = true;
            if e == AC {
                let over = slots[AC].unwrap().s - 1.0;
                t1 = arrival[AC];
                slots[AC] = None;
                slots[CD] = Some(Walker::new(CD, over, alpha1 * alpha2));
                slots[CB] = Some(Walker::new(CB, over, alpha1 * (1.0 - alpha2)));
                speed[CD] = speed[AC];
                speed[CB] = speed[AC];
                stage = 2;
            } else {
                let w = slots[e].as_mut().unwrap();
                w.s = net.edge_length(e);
                w.exited = e == CB || e == DB;
                parked[e] = true;
            }
        }
        // Remaining arclength of a moving group at an earlier time `at` of this step.
        let remaining_at = |slots: &[Option<Walker>; 5], route: &[usize], at: f64| -> (f64, f64) {
            let e = *route.iter().find(|&&e| slots[e].is_some()).expect("group on its route");
            let w = slots[e].unwrap();
            let rest: f64 = route.iter().skip_while(|&&r| r != e).skip(1).map(|&r| net.edge_length(r)).sum();
            let remaining = net.edge_length(e) - w.s + rest + (t_next - at) * speed[e];
            (remaining.max(0.0), speed[e])
        };

        if stage <= 2 && t2.is_none() {
            let (ad, cd) = (arrival[AD], arrival[CD]);
            match (ad, cd) {
                (Some(a), Some(c)) => residual_d = Some(a - c),
                (Some(a), None) if residual_d.is_none() => {
                    let (r, v) = remaining_at(&slots, &[AC, CD], a);
                    residual_d = Some(-r / v);
                }
                (None, Some(c)) if residual_d.is_none() => {
                    let (r, v) = remaining_at(&slots, &[AD], c);
                    residual_d = Some(r / v);
                }
                _ => {}
            }
            if let Some(a) = ad {
                if slots[AC].is_some() && weight(&slots, AD) > 0.0 {
                    return Ok(StagedRun {
                        alpha1,
                        alpha2,
                        t1: None,
                        t2: None,
                        t: None,
                        residual_d: residual_d.unwrap_or(0.0).min(-(t_next - a).max(0.0)),
                        residual_b: None,
                        out_of_order: true,
                        max_density,
                        trace,
                    });
                }
            }
            let trigger = match (ad, cd) {
                (Some(_), Some(_)) => {
                    // The later of the two arrived during this step.
                    if arrived_now[CD] && (!arrived_now[AD] || cd >= ad) {
                        Some(CD)
                    } else {
                        Some(AD)
                    }
                }
                (Some(_), None) if stage == 2 && weight(&slots, AD) > 0.0 => Some(AD),
                (None, Some(_)) if weight(&slots, CD) > 0.0 => Some(CD),
                _ => None,
            };
            if let Some(e) = trigger {
                let at = arrival[e].unwrap();
                let over = (t_next - at) * speed[e];
                t2 = Some(at);
                let t_cd = cd.unwrap_or_else(|| at - residual_d.unwrap_or(0.0));
                shortcut_shift = at - t_cd;
                slots[AD] = None;
                slots[CD] = None;
                parked[AD] = false;
                parked[CD] = false;
                slots[DB] = Some(Walker::new(DB, over, alpha1 * alpha2 + (1.0 - alpha1)));
                stage = 3;
                // DB cannot also reach B during the remainder of this step.
                continue;
            }
        }

        if stage == 3 {
            let (cb, db) = (arrival[CB], arrival[DB]);
            let massive = |e: usize| weight(&slots, e) > 0.0;
            let exit_of = |pairs: &[(Option<f64>, usize)]| {
                pairs.iter().filter(|(a, e)| a.is_some() && massive(*e)).map(|(a, _)| a.unwrap()).fold(f64::INFINITY, f64::min)
            };
            let done = match (cb, db) {
                (Some(c), Some(d)) => Some((c - d, exit_of(&[(cb, CB), (db, DB)]))),
                (Some(c), None) if arrived_now[CB] && massive(CB) => {
                    let (r, v) = remaining_at(&slots, &[DB], c);
                    Some((-r / v, c))
                }
                (None, Some(d)) if arrived_now[DB] && massive(DB) => {
                    let (r, v) = remaining_at(&slots, &[CB], d);
                    Some((r / v, d))
                }
                _ => None,
            };
            if let Some((rb, t_exit)) = done {
                return Ok(StagedRun {
                    alpha1,
                    alpha2,
                    t1,
                    t2,
                    t: Some(t_exit),
                    residual_d: residual_d.expect("merge implies a D arrival"),
                    residual_b: Some(rb + shortcut_shift),
                    out_of_order: false,
                    max_density,
                    trace,
                });
            }
        }
    }
    Err(MfgError::Horizon { horizon, what: format!("stage {stage} of the network dynamics completed") })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BraessMethod {
    /// Nested bisection: `alpha1` on the `D` condition for each `alpha2`,
    /// `alpha2` on the `B` condition.
    Nested,
    /// Single bisection on `alpha2` with `alpha1 = 1 / (2 - alpha2)`.
    Symmetric,
}

impl BraessMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BraessMethod::Nested => "method1",
            BraessMethod::Symmetric => "method2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BraessEquilibrium {
    pub ell: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub t1: f64,
    pub t2: f64,
    pub exit_time: f64,
    pub residual_d: f64,
    pub residual_b: f64,
    pub alpha1_case: SplitCase,
    pub alpha2_case: SplitCase,
    pub method: BraessMethod,
    /// Number of staged integrations.
    pub iters: usize,
    pub max_density: f64,
}

impl BraessEquilibrium {
    pub fn case_label(&self) -> String {
        let c = |s: SplitCase| match s {
            SplitCase::Lower => "0",
            SplitCase::Upper => "1",
            SplitCase::Interior => "i",
        };
        format!("a1={},a2={}", c(self.alpha1_case), c(self.alpha2_case))
    }
}

/// `alpha1 = 1 / (2 - alpha2)`.
pub fn symmetric_alpha1(alpha2: f64) -> f64 {
    1.0 / (2.0 - alpha2)
}

fn finish(
    net: &BraessNetwork,
    model: &CongestionModel,
    dt: f64,
    alpha1: f64,
    alpha2: f64,
    cases: (SplitCase, SplitCase),
    method: BraessMethod,
    iters: usize,
) -> Result<BraessEquilibrium> {
    let run = integrate_staged(net, model, alpha1, alpha2, dt, false)?;
    let (t1, t2, t, residual_b) = match (run.t1, run.t2, run.t, run.residual_b) {
        (Some(t1), Some(t2), Some(t), Some(rb)) => (t1, t2, t, rb),
        _ => {
            return Err(MfgError::Inconsistent(format!(
                "equilibrium candidate (alpha1 = {alpha1}, alpha2 = {alpha2}) crosses vertices out of order"
            )))
        }
    };
    Ok(BraessEquilibrium {
        ell: net.short_edge,
        alpha1,
        alpha2,
        t1,
        t2,
        exit_time: t,
        residual_d: run.residual_d,
        residual_b,
        alpha1_case: cases.0,
        alpha2_case: cases.1,
        method,
        iters: iters + 1,
        max_density: run.max_density,
    })
}

/// Equilibrium by bisection on `alpha2` with `alpha1` tied to it by the
/// time-reversal relation; only the `D` arrival is targeted.
pub fn solve_method2(net: &BraessNetwork, model: &CongestionModel, dt: f64, tol: f64) -> Result<BraessEquilibrium> {
    let outcome = split_bisection(
        |a2| Ok(integrate_staged(net, model, symmetric_alpha1(a2), a2, dt, false)?.residual_d),
        tol,
        false,
    )?;
    let a2 = outcome.value;
    let a1 = symmetric_alpha1(a2);
    let a1_case = if a1 >= 1.0 { SplitCase::Upper } else { SplitCase::Interior };
    finish(net, model, dt, a1, a2, (a1_case, outcome.case), BraessMethod::Symmetric, outcome.evaluations)
}

/// Inner step of the nested method: the `alpha1` balancing arrivals at `D`
/// for a fixed `alpha2`.
pub fn balance_alpha1(
    net: &BraessNetwork,
    model: &CongestionModel,
    alpha2: f64,
    dt: f64,
    tol: f64,
) -> Result<(f64, SplitCase, usize)> {
    if alpha2 == 0.0 {
        // No shortcut traffic: the two routes A-C-B and A-D-B are mirror images.
        return Ok((0.5, SplitCase::Interior, 0));
    }
    let outcome = split_bisection(
        |a1| Ok(integrate_staged(net, model, a1, alpha2, dt, false)?.residual_d),
        tol,
        false,
    )?;
    Ok((outcome.value, outcome.case, outcome.evaluations))
}

/// Equilibrium by nested bisection, targeting both the `D` and the `B`
/// arrivals independently.
pub fn solve_method1(net: &BraessNetwork, model: &CongestionModel, dt: f64, tol: f64) -> Result<BraessEquilibrium> {
    let mut total = 0usize;
    let outcome = split_bisection(
        |a2| {
            let (a1, _, n) = balance_alpha1(net, model, a2, dt, tol)?;
            total += n + 1;
            let run = integrate_staged(net, model, a1, a2, dt, false)?;
            run.residual_b.ok_or_else(|| {
                MfgError::Inconsistent(format!(
                    "balanced alpha1 = {a1} at alpha2 = {a2} still reaches D before C (residual_D = {:e})",
                    run.residual_d
                ))
            })
        },
        tol,
        false,
    )?;
    let a2 = outcome.value;
    let (a1, a1_case, n) = balance_alpha1(net, model, a2, dt, tol)?;
    finish(net, model, dt, a1, a2, (a1_case, outcome.case), BraessMethod::Nested, total + n)
}

pub fn solve(
    net: &BraessNetwork,
    model: &CongestionModel,
    dt: f64,
    tol: f64,
    method: BraessMethod,
) -> Result<BraessEquilibrium> {
    match method {
        BraessMethod::Nested => solve_method1(net, model, dt, tol),
        BraessMethod::Symmetric => solve_method2(net, model, dt, tol),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSweepRow {
    pub ell: f64,
    pub result: std::result::Result<BraessEquilibrium, String>,
    /// `(alpha2 by method 1, alpha2 by method 2)` on cross-checked rows.
    pub method_pair: Option<std::result::Result<(f64, f64), String>>,
}

impl NetworkSweepRow {
    pub fn method_gap(&self) -> Option<f64> {
        match &self.method_pair {
            Some(Ok((m1, m2))) => Some(m1 - m2),
            _ => None,
        }
    }
}

/// Equilibria over `ells` (rows in input order); every `cross_check_every`-th
/// row is also solved by the other method.
pub fn sweep_ell_network(
    ells: &[f64],
    long_edge: f64,
    model: &CongestionModel,
    dt: f64,
    tol: f64,
    method: BraessMethod,
    cross_check_every: Option<usize>,
) -> Vec<NetworkSweepRow> {
    ells.par_iter()
        .enumerate()
        .map(|(i, &ell)| {
            let net = BraessNetwork::new(long_edge, ell);
            let result = net
                .as_ref()
                .map_err(|e| e.clone())
                .and_then(|n| solve(n, model, dt, tol, method))
                .map_err(|e| e.to_string());
            let method_pair = match (cross_check_every, &net, &result) {
                (Some(k), Ok(n), Ok(eq)) if k > 0 && i % k == 0 => {
                    let other = match method {
                        BraessMethod::Nested => BraessMethod::Symmetric,
                        BraessMethod::Symmetric => BraessMethod::Nested,
                    };
                    Some(
                        solve(n, model, dt, tol, other)
                            .map(|o| match method {
                                BraessMethod::Nested => (eq.alpha2, o.alpha2),
                                BraessMethod::Symmetric => (o.alpha2, eq.alpha2),
                            })
                            .map_err(|e| e.to_string()),
                    )
                }
                _ => None,
            };
            NetworkSweepRow { ell, result, method_pair }
        })
        .collect()
}

/// Largest excess of walker displacement per step over the admissible speed.
pub fn max_speed_excess(trace: &[StagedSample], dt: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for pair in trace.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        for (wa, v) in a.walkers.iter().zip(&a.speeds) {
            if let Some(wb) = b.walkers.iter().find(|w| w.edge == wa.edge && w.s >= wa.s) {
                worst = worst.max((wb.s - wa.s) / dt - v);
            }
        }
    }
    worst
}

/// The measure carried by a staged snapshot.
pub fn sample_measure(sample: &StagedSample) -> Result<WeightedParticles<GraphPoint>> {
    WeightedParticles::new(
        sample.walkers.iter().map(|w| w.point()).collect(),
        sample.walkers.iter().map(|w| w.weight).collect(),
    )
}
