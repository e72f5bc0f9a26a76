use mfg_core::segment::{integrate_pair, SegmentInstance};
use mfg_core::trajectory::{dpp_restart_gap, hj_residual_along, max_speed_excess, restart_value};
use mfg_core::{integrate_flow, Agent, CongestionModel, Point, StepperConfig, Vec2};
use proptest::prelude::*;

const ALPHA_04: f64 = 0.683;

fn segment_flow(dt: f64) -> (SegmentInstance, mfg_core::AtomicFlow<f64>) {
    let inst = SegmentInstance::new(0.4, CongestionModel::segment(0.1).unwrap(), dt).unwrap();
    let run = integrate_pair(&inst, ALPHA_04).unwrap();
    (inst, run.flow)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn segment_flows_respect_the_speed_bound(
        agents in prop::collection::vec((0.05..0.95f64, any::<bool>(), 0.1..1.0f64), 1..6)
    ) {
        let model = CongestionModel::segment(0.1).unwrap();
        let total: f64 = agents.iter().map(|a| a.2).sum();
        let agents: Vec<Agent<f64>> = agents
            .iter()
            .map(|&(x, left, w)| Agent { position: x, direction: if left { -1.0 } else { 1.0 }, weight: w / total })
            .collect();
        let flow = integrate_flow(&model, &agents, &StepperConfig::new(1e-3, 10.0 / model.k_min)).unwrap();
        prop_assert!(max_speed_excess(&model, &flow) <= 1e-9);
        for p in &flow.trajectories {
            prop_assert!(p.exit_time.is_some());
            prop_assert!(p.states.iter().all(|x| (-1e-12..=1.0 + 1e-12).contains(x)));
        }
    }

    #[test]
    fn disk_flows_respect_the_speed_bound_and_keep_unit_controls(
        agents in prop::collection::vec((0.0..0.6f64, 0.0..6.3f64, 0.0..6.3f64, 0.1..1.0f64), 2..8)
    ) {
        let model = CongestionModel::disk(0.1).unwrap();
        let total: f64 = agents.iter().map(|a| a.3).sum();
        // Start everyone near one point so that the crowd interacts.
        let agents: Vec<Agent<Vec2>> = agents
            .iter()
            .map(|&(r, a, u, w)| Agent {
                position: Vec2::new(0.2, 0.0) + Vec2::from_angle(a) * (0.1 * r),
                direction: Vec2::from_angle(u),
                weight: w / total,
            })
            .collect();
        let flow = integrate_flow(&model, &agents, &StepperConfig::new(1e-2, 10.0 / model.k_min)).unwrap();
        prop_assert!(max_speed_excess(&model, &flow) <= 1e-9);
        for p in &flow.trajectories {
            prop_assert!(p.directions.iter().all(|u| (u.norm() - 1.0).abs() <= 1e-9));
        }
    }
}

#[test]
fn directions_stay_radial_from_the_centre() {
    let model = CongestionModel::disk(0.1).unwrap();
    let n = 32;
    let agents: Vec<Agent<Vec2>> = (0..n)
        .map(|k| {
            let u = Vec2::from_angle(std::f64::consts::TAU * (k as f64 + 0.5) / n as f64);
            Agent { position: Vec2::zero(), direction: u, weight: 1.0 / n as f64 }
        })
        .collect();
    let flow = integrate_flow(&model, &agents, &StepperConfig::new(1e-2, 10.0 / model.k_min)).unwrap();
    for p in &flow.trajectories {
        let u0 = p.directions[0];
        for (x, u) in p.states.iter().zip(&p.directions).skip(1) {
            assert!((*u - u0).norm() < 1e-12);
            assert!((*x * (1.0 / x.norm()) - u0).norm() < 1e-12);
        }
    }
}

#[test]
fn later_starts_never_arrive_earlier() {
    let (inst, flow) = segment_flow(1e-3);
    let cfg = StepperConfig::new(inst.dt, inst.horizon());
    let x0 = inst.ell;
    let mut last = f64::NEG_INFINITY;
    for i in 0..10 {
        let t = 0.05 * i as f64;
        let arrival = t + restart_value(&inst.model, &flow, t, x0, &cfg).unwrap();
        assert!(arrival >= last - 1e-12, "start {t}: arrival {arrival} before {last}");
        last = arrival;
    }
}

#[test]
fn stored_remaining_times_match_restarts() {
    let (inst, flow) = segment_flow(1e-4);
    let cfg = StepperConfig::new(inst.dt, inst.horizon());
    for k in 0..2 {
        let exit = flow.trajectories[k].exit_time.unwrap();
        for j in 1..=5 {
            let t = exit * j as f64 / 6.0;
            let gap = dpp_restart_gap(&inst.model, &flow, k, t, &cfg).unwrap();
            assert!(gap.abs() <= 10.0 * inst.dt, "curve {k} at t = {t}: gap {gap}");
        }
    }
}

#[test]
fn value_function_solves_the_eikonal_equation_along_equilibrium_curves() {
    let (inst, flow) = segment_flow(1e-4);
    let cfg = StepperConfig::new(inst.dt, inst.horizon());
    // The value function bends over a fraction of eps next to the crowd, so
    // the difference step has to be well below eps.
    for (k, t) in [(0, 0.15), (0, 0.3), (1, 0.15), (1, 0.3)] {
        let r = hj_residual_along(&inst.model, &flow, k, t, 1e-3, &cfg).unwrap();
        assert!(r.abs() <= 0.02, "curve {k} at t = {t}: residual {r}");
    }
    let coarse = hj_residual_along(&inst.model, &flow, 0, 0.15, 5e-3, &cfg).unwrap();
    let fine = hj_residual_along(&inst.model, &flow, 0, 0.15, 1e-3, &cfg).unwrap();
    assert!(fine.abs() < coarse.abs());
}

#[test]
fn exit_times_converge_at_first_order() {
    let exit = |dt: f64| integrate_pair(&segment_flow(dt).0, ALPHA_04).unwrap().t_left;
    let (a, b, c) = (exit(1e-3), exit(5e-4), exit(2.5e-4));
    let ratio = (a - b) / (b - c);
    assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
    // Richardson extrapolation from the two finest steps.
    let limit = 2.0 * c - b;
    let fine = exit(1e-4);
    assert!((fine - limit).abs() < 5e-3);
}
