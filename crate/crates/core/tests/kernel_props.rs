use mfg_core::{wasserstein1_exact, CongestionModel, Point, Vec2, WeightedParticles};
use proptest::prelude::*;

fn weights(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn disk_measure(centre: Vec2, offsets: &[(f64, f64)], raw: &[f64]) -> WeightedParticles<Vec2> {
    let pts = offsets.iter().map(|&(r, a)| centre + Vec2::from_angle(a) * r).collect();
    WeightedParticles::new(pts, weights(raw)).unwrap()
}

// Near-boundary centres exercise the cutoff, interior ones the plateau.
fn centre() -> impl Strategy<Value = Vec2> {
    (0.0..0.9f64, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| Vec2::from_angle(a) * r)
}

fn atoms(n: usize) -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>)> {
    (
        prop::collection::vec((0.0..0.15f64, 0.0..std::f64::consts::TAU), 1..=n),
        prop::collection::vec(0.05..1.0f64, n),
    )
        .prop_map(|(o, mut w)| {
            w.truncate(o.len());
            (o, w)
        })
}

#[test]
fn two_atom_example_by_hand() {
    let model = CongestionModel::segment(0.1).unwrap();
    let mu = WeightedParticles::new(vec![0.45, 0.55], vec![0.5, 0.5]).unwrap();
    // Both atoms sit at distance 0.05 = eps / 2, where the bump is half its peak.
    assert!((model.density(&mu, 0.5) - 5.0).abs() < 1e-12);
    assert!((model.speed(&mu, 0.5) - 81.0 / 97.0).abs() < 1e-12);
    // On an atom: full peak from it, nothing from the other (distance eps).
    assert!((model.density(&mu, 0.45) - 5.0).abs() < 1e-12);
    // Cutoff: an atom within eps of an exit only partly congests.
    let edge = WeightedParticles::dirac(0.05);
    assert!((model.density(&edge, 0.05) - 10.0 * 0.5).abs() < 1e-12);
}

#[test]
fn unit_dirac_peak_and_speed_range() {
    let seg = CongestionModel::segment(0.1).unwrap();
    assert!((seg.density(&WeightedParticles::dirac(0.5), 0.5) - 10.0).abs() < 1e-12);
    assert!((seg.k_min - 81.0 / 337.0).abs() < 1e-12);
    assert_eq!(seg.k_max, 1.0);
    let disk = CongestionModel::disk(0.1).unwrap();
    assert!((disk.k_min - 1.0 / 26.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn density_and_speed_stay_in_bounds(c in centre(), (o, w) in atoms(6), probe in (0.0..0.2f64, 0.0..6.3f64)) {
        let model = CongestionModel::disk(0.1).unwrap();
        let mu = disk_measure(c, &o, &w);
        let x = c + Vec2::from_angle(probe.1) * probe.0;
        let e = model.density(&mu, x);
        prop_assert!(e >= 0.0 && e <= model.chi.peak() + 1e-12);
        let k = model.speed(&mu, x);
        prop_assert!(k >= model.k_min - 1e-12 && k <= model.k_max + 1e-12);
    }

    #[test]
    fn density_is_w1_lipschitz(c in centre(), (o1, w1) in atoms(5), (o2, w2) in atoms(5), probe in (0.0..0.2f64, 0.0..6.3f64)) {
        let model = CongestionModel::disk(0.1).unwrap();
        let mu = disk_measure(c, &o1, &w1);
        let nu = disk_measure(c, &o2, &w2);
        let x = c + Vec2::from_angle(probe.1) * probe.0;
        let (m1, m2) = model.lipschitz_bounds();
        let w = wasserstein1_exact(&mu, &nu).unwrap();
        let gap = (model.density(&mu, x) - model.density(&nu, x)).abs();
        prop_assert!(gap <= 2.0 * m1 * m2 * w + 1e-9, "gap {gap} vs W1 {w}");
    }

    #[test]
    fn density_is_lipschitz_in_space(c in centre(), (o, w) in atoms(6), dx in (0.0..0.05f64, 0.0..6.3f64)) {
        let model = CongestionModel::disk(0.1).unwrap();
        let mu = disk_measure(c, &o, &w);
        let y = c + Vec2::from_angle(dx.1) * dx.0;
        let (m1, m2) = model.lipschitz_bounds();
        let gap = (model.density(&mu, c) - model.density(&mu, y)).abs();
        prop_assert!(gap <= m1 * m2 * (c - y).norm() + 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences(c in centre(), (o, w) in atoms(6), probe in (0.0..0.12f64, 0.0..6.3f64)) {
        let model = CongestionModel::disk(0.1).unwrap();
        let mu = disk_measure(c, &o, &w);
        let x = c + Vec2::from_angle(probe.1) * probe.0;
        let h = 1e-6;
        let grad = model.speed_gradient(&mu, x);
        for (axis, g) in [(0, grad.x), (1, grad.y)] {
            let e = Vec2::axis(axis);
            let fd = (model.speed(&mu, x + e * h) - model.speed(&mu, x - e * h)) / (2.0 * h);
            prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "axis {axis}: fd {fd} vs {g}");
        }
    }

    #[test]
    fn segment_gradient_matches_central_differences(x in 0.02..0.98f64, ys in prop::collection::vec(0.0..1.0f64, 1..6)) {
        let model = CongestionModel::segment(0.1).unwrap();
        let mu = WeightedParticles::uniform(ys).unwrap();
        let h = 1e-6;
        let g = model.speed_gradient(&mu, x);
        let fd = (model.speed(&mu, x + h) - model.speed(&mu, x - h)) / (2.0 * h);
        prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "fd {fd} vs {g}");
    }

    #[test]
    fn ensemble_fields_agree_with_pointwise_evaluation(c in centre(), (o, w) in atoms(6)) {
        let model = CongestionModel::disk(0.1).unwrap();
        let mu = disk_measure(c, &o, &w);
        let fields = model.ensemble_fields(mu.points(), mu.weights());
        for (x, f) in mu.points().iter().zip(&fields) {
            prop_assert!((f.density - model.density(&mu, *x)).abs() < 1e-10);
            prop_assert!((f.gradient - model.speed_gradient(&mu, *x)).norm() < 1e-10);
        }
    }

    #[test]
    fn w1_is_a_metric(c in centre(), a in atoms(4), b in atoms(4), d in atoms(4)) {
        let mu = disk_measure(c, &a.0, &a.1);
        let nu = disk_measure(c, &b.0, &b.1);
        let xi = disk_measure(c, &d.0, &d.1);
        let w = |p: &WeightedParticles<Vec2>, q: &WeightedParticles<Vec2>| wasserstein1_exact(p, q).unwrap();
        prop_assert!(w(&mu, &mu).abs() < 1e-12);
        prop_assert!((w(&mu, &nu) - w(&nu, &mu)).abs() < 1e-12);
        prop_assert!(w(&mu, &xi) <= w(&mu, &nu) + w(&nu, &xi) + 1e-12);
    }

    #[test]
    fn w1_of_diracs_is_distance(a in centre(), b in centre()) {
        let w = wasserstein1_exact(&WeightedParticles::dirac(a), &WeightedParticles::dirac(b)).unwrap();
        prop_assert!((w - (a - b).norm()).abs() < 1e-12);
    }
}
