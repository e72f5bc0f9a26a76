//! Nonlocal congestion speed `K(mu, x) = g(E(mu, x))` with
//! `E(mu, x) = sum_k w_k chi(x - y_k) eta(y_k)`.
//!
//! The profiles are the fixed cosine bumps and rational speed laws used by
//! the three worked examples; [`SpeedLaw::Constant`] exists for
//! congestion-free reference runs.

use crate::geometry::{GraphMetric, GraphPoint, Point};
use crate::measure::WeightedParticles;
use crate::{MfgError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MollifierKind {
    /// `chi(x) = (1 + cos(pi x / eps)) / (2 eps)` on `|x| < eps`.
    CosineBump1D,
    /// Radial profile `chi0(|x|)` with the same cosine bump.
    CosineBumpRadial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierProfile {
    pub epsilon: f64,
    pub kind: MollifierKind,
}

impl MollifierProfile {
    /// Value as a function of the distance `r >= 0`.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        let eps = self.epsilon;
        if r >= eps {
            0.0
        } else {
            (1.0 + (PI * r / eps).cos()) / (2.0 * eps)
        }
    }

    /// Derivative with respect to the distance `r >= 0`.
    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        let eps = self.epsilon;
        if r >= eps {
            0.0
        } else {
            -PI * (PI * r / eps).sin() / (2.0 * eps * eps)
        }
    }

    /// Value and distance-derivative together.
    #[inline]
    fn value_and_derivative(&self, r: f64) -> (f64, f64) {
        let eps = self.epsilon;
        if r >= eps {
            (0.0, 0.0)
        } else {
            let (s, c) = (PI * r / eps).sin_cos();
            ((1.0 + c) / (2.0 * eps), -PI * s / (2.0 * eps * eps))
        }
    }

    /// `chi(0) = 1 / eps`.
    pub fn peak(&self) -> f64 {
        1.0 / self.epsilon
    }

    /// Lipschitz constant `pi / (2 eps^2)`.
    pub fn lipschitz(&self) -> f64 {
        PI / (2.0 * self.epsilon * self.epsilon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffDomain {
    UnitInterval,
    UnitDisk,
    NetworkNone,
}

/// Boundary cutoff `eta`: 1 at depth >= eps, smooth cosine ramp to 0 with
/// vanishing derivative on the boundary, 0 outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub epsilon: f64,
    pub domain: CutoffDomain,
}

impl CutoffProfile {
    /// Value as a function of the signed depth inside the domain.
    #[inline]
    pub fn value_at_depth(&self, depth: f64) -> f64 {
        if self.domain == CutoffDomain::NetworkNone {
            return 1.0;
        }
        if depth <= 0.0 {
            0.0
        } else if depth >= self.epsilon {
            1.0
        } else {
            0.5 * (1.0 - (PI * depth / self.epsilon).cos())
        }
    }

    pub fn value<P: Point>(&self, x: P) -> f64 {
        self.value_at_depth(x.boundary_depth())
    }

    /// Lipschitz constant `pi / (2 eps)` (0 when disabled).
    pub fn lipschitz(&self) -> f64 {
        match self.domain {
            CutoffDomain::NetworkNone => 0.0,
            _ => PI / (2.0 * self.epsilon),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpeedLaw {
    /// `1 / (1 + (2x/15)^4)`
    SegmentG,
    /// `1 / (1 + (x/2)^2)`
    DiskG,
    Constant(f64),
}

impl SpeedLaw {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            SpeedLaw::SegmentG => {
                let z = 2.0 * x / 15.0;
                1.0 / (1.0 + z * z * z * z)
            }
            SpeedLaw::DiskG => {
                let z = x / 2.0;
                1.0 / (1.0 + z * z)
            }
            SpeedLaw::Constant(c) => c,
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            SpeedLaw::SegmentG => {
                let z = 2.0 * x / 15.0;
                let d = 1.0 + z * z * z * z;
                -4.0 * z * z * z * (2.0 / 15.0) / (d * d)
            }
            SpeedLaw::DiskG => {
                let z = x / 2.0;
                let d = 1.0 + z * z;
                -z / (d * d)
            }
            SpeedLaw::Constant(_) => 0.0,
        }
    }

    /// Minimum and maximum over `[0, upper]` for the (monotone) laws.
    fn range_on(&self, upper: f64) -> (f64, f64) {
        match *self {
            SpeedLaw::Constant(c) => (c, c),
            _ => (self.value(upper), self.value(0.0)),
        }
    }
}

/// Speed, density, and spatial speed gradient at one particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalField<P> {
    pub density: f64,
    pub speed: f64,
    pub gradient: P,
}

/// The triple `(g, chi, eta)` with the speed bounds it induces on
/// probability measures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongestionModel {
    pub g: SpeedLaw,
    pub chi: MollifierProfile,
    pub eta: CutoffProfile,
    pub k_min: f64,
    pub k_max: f64,
}

impl CongestionModel {
    pub fn new(g: SpeedLaw, chi: MollifierProfile, eta: CutoffProfile) -> Result<Self> {
        if !(chi.epsilon > 0.0) || !(eta.epsilon > 0.0) {
            return Err(MfgError::InvalidParameter("epsilon must be positive".into()));
        }
        // E <= chi(0) * sup eta = chi(0) for probability measures.
        let (k_min, k_max) = g.range_on(chi.peak());
        if !(k_min > 0.0) || !k_max.is_finite() {
            return Err(MfgError::InvalidParameter(format!("speed law must be positive, got k_min = {k_min}")));
        }
        Ok(CongestionModel { g, chi, eta, k_min, k_max })
    }

    /// Segment kernels on `[0, 1]`.
    pub fn segment(epsilon: f64) -> Result<Self> {
        Self::new(
            SpeedLaw::SegmentG,
            MollifierProfile { epsilon, kind: MollifierKind::CosineBump1D },
            CutoffProfile { epsilon, domain: CutoffDomain::UnitInterval },
        )
    }

    /// Radial kernels on the unit disk.
    pub fn disk(epsilon: f64) -> Result<Self> {
        Self::new(
            SpeedLaw::DiskG,
            MollifierProfile { epsilon, kind: MollifierKind::CosineBumpRadial },
            CutoffProfile { epsilon, domain: CutoffDomain::UnitDisk },
        )
    }

    /// Segment speed law with the radial bump composed with graph distance.
    pub fn network(epsilon: f64) -> Result<Self> {
        Self::new(
            SpeedLaw::SegmentG,
            MollifierProfile { epsilon, kind: MollifierKind::CosineBumpRadial },
            CutoffProfile { epsilon, domain: CutoffDomain::NetworkNone },
        )
    }

    /// Replace the speed law, keeping the profiles.
    pub fn with_speed_law(&self, g: SpeedLaw) -> Result<Self> {
        Self::new(g, self.chi, self.eta)
    }

    /// Lipschitz constant shared by `chi` and `eta`, and the sup bound
    /// `max(sup eta, sup chi)`.
    pub fn lipschitz_bounds(&self) -> (f64, f64) {
        (self.chi.lipschitz().max(self.eta.lipschitz()), self.chi.peak().max(1.0))
    }

    /// `E(mu, x)`.
    pub fn density<P: Point>(&self, mu: &WeightedParticles<P>, x: P) -> f64 {
        mu.iter().map(|(y, w)| w * self.chi.value((x - y).norm()) * self.eta.value(y)).sum()
    }

    /// `K(mu, x)`.
    pub fn speed<P: Point>(&self, mu: &WeightedParticles<P>, x: P) -> f64 {
        self.g.value(self.density(mu, x))
    }

    /// `grad_x K(mu, x) = g'(E) sum_k w_k grad chi(x - y_k) eta(y_k)`.
    pub fn speed_gradient<P: Point>(&self, mu: &WeightedParticles<P>, x: P) -> P {
        let mut e = 0.0;
        let mut grad = P::zero();
        for (y, w) in mu.iter() {
            let d = x - y;
            let r = d.norm();
            let we = w * self.eta.value(y);
            if we == 0.0 || r >= self.chi.epsilon {
                continue;
            }
            let (c, dc) = self.chi.value_and_derivative(r);
            e += we * c;
            if r > 0.0 {
                grad = grad + d * (we * dc / r);
            }
        }
        grad * self.g.derivative(e)
    }

    /// Density, speed, and gradient at every particle of the ensemble, with
    /// each pair visited once.
    pub fn ensemble_fields<P: Point>(&self, points: &[P], weights: &[f64]) -> Vec<LocalField<P>> {
        let n = points.len();
        let eps = self.chi.epsilon;
        let eps2 = eps * eps;
        let masses: Vec<f64> = points.iter().zip(weights).map(|(&y, &w)| w * self.eta.value(y)).collect();
        let peak = self.chi.peak();
        let mut dens: Vec<f64> = masses.iter().map(|m| m * peak).collect();
        let mut grad = vec![P::zero(); n];
        for i in 0..n {
            let xi = points[i];
            let mi = masses[i];
            for j in (i + 1)..n {
                let mj = masses[j];
                if mi == 0.0 && mj == 0.0 {
                    continue;
                }
                let d = xi - points[j];
                let r2 = d.dot(d);
                if r2 >= eps2 {
                    continue;
                }
                let r = r2.sqrt();
                let (c, dc) = self.chi.value_and_derivative(r);
                dens[i] += mj * c;
                dens[j] += mi * c;
                if r > 0.0 {
                    let unit = d * (dc / r);
                    grad[i] = grad[i] + unit * mj;
                    grad[j] = grad[j] - unit * mi;
                }
            }
        }
        dens.into_iter()
            .zip(grad)
            .map(|(e, gr)| LocalField { density: e, speed: self.g.value(e), gradient: gr * self.g.derivative(e) })
            .collect()
    }

    /// `g(sum_k w_k chi0(d(x, y_k)))` with `d` the graph distance.
    pub fn speed_on_network<M: GraphMetric>(
        &self,
        metric: &M,
        mu: &WeightedParticles<GraphPoint>,
        x: GraphPoint,
    ) -> Result<f64> {
        Ok(self.g.value(self.density_on_network(metric, mu, x)?))
    }

    pub fn density_on_network<M: GraphMetric>(
        &self,
        metric: &M,
        mu: &WeightedParticles<GraphPoint>,
        x: GraphPoint,
    ) -> Result<f64> {
        let mut e = 0.0;
        for (&y, &w) in mu.points().iter().zip(mu.weights()) {
            if w == 0.0 {
                metric.distance(x, y)?;
                continue;
            }
            e += w * self.chi.value(metric.distance(x, y)?);
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mollifier_shape() {
        let chi = MollifierProfile { epsilon: 0.1, kind: MollifierKind::CosineBump1D };
        assert!(close(chi.value(0.0), 10.0, 1e-14));
        assert_eq!(chi.value(0.1), 0.0);
        assert_eq!(chi.value(0.3), 0.0);
        assert!(chi.value(0.0999999) < 1e-9);
        assert!(chi.derivative(0.0999999).abs() < 1e-3);
        assert_eq!(chi.derivative(0.0), 0.0);
    }

    #[test]
    fn mollifier_has_unit_mass() {
        // Composite Simpson on [-eps, eps].
        let chi = MollifierProfile { epsilon: 0.1, kind: MollifierKind::CosineBump1D };
        let n = 20_000;
        let h = 0.2 / n as f64;
        let mut s = 0.0;
        for k in 0..=n {
            let x = -0.1 + k as f64 * h;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * chi.value(x.abs());
        }
        assert!(close(s * h / 3.0, 1.0, 1e-8));
    }

    #[test]
    fn cutoff_shape() {
        let eta = CutoffProfile { epsilon: 0.1, domain: CutoffDomain::UnitInterval };
        assert_eq!(eta.value(0.5), 1.0);
        assert_eq!(eta.value(0.1), 1.0);
        assert_eq!(eta.value(0.0), 0.0);
        assert_eq!(eta.value(1.0), 0.0);
        assert_eq!(eta.value(-0.2), 0.0);
        assert!(close(eta.value(0.05), 0.5, 1e-15));
        assert!(close(eta.value(0.95), 0.5, 1e-12));
        let disk = CutoffProfile { epsilon: 0.1, domain: CutoffDomain::UnitDisk };
        assert_eq!(disk.value(Vec2::new(0.3, 0.4)), 1.0);
        assert!(close(disk.value(Vec2::new(0.95, 0.0)), 0.5, 1e-12));
        assert_eq!(disk.value(Vec2::new(1.0, 0.5)), 0.0);
        let none = CutoffProfile { epsilon: 0.1, domain: CutoffDomain::NetworkNone };
        assert_eq!(none.value(2.0), 1.0);
    }

    #[test]
    fn speed_laws() {
        // (2*10/15)^4 = 256/81
        assert!(close(SpeedLaw::SegmentG.value(10.0), 81.0 / 337.0, 1e-15));
        assert!(close(SpeedLaw::DiskG.value(10.0), 1.0 / 26.0, 1e-15));
        assert_eq!(SpeedLaw::SegmentG.value(0.0), 1.0);
        for law in [SpeedLaw::SegmentG, SpeedLaw::DiskG] {
            for k in 1..100 {
                let x = k as f64 * 0.1;
                let fd = (law.value(x + 1e-6) - law.value(x - 1e-6)) / 2e-6;
                assert!(close(law.derivative(x), fd, 1e-8));
                assert!(law.value(x) < law.value(x - 0.1));
            }
        }
    }

    #[test]
    fn model_bounds() {
        let m = CongestionModel::segment(0.1).unwrap();
        assert!(close(m.k_min, 81.0 / 337.0, 1e-15));
        assert_eq!(m.k_max, 1.0);
        let c = m.with_speed_law(SpeedLaw::Constant(1.0)).unwrap();
        assert_eq!((c.k_min, c.k_max), (1.0, 1.0));
        assert!(m.with_speed_law(SpeedLaw::Constant(0.0)).is_err());
        assert!(CongestionModel::segment(0.0).is_err());
    }

    #[test]
    fn density_examples() {
        let m = CongestionModel::segment(0.1).unwrap();
        assert_eq!(m.density(&WeightedParticles::dirac(0.3), 0.45), 0.0);
        assert!(close(m.density(&WeightedParticles::dirac(0.5), 0.5), 10.0, 1e-14));
        assert!(close(m.speed(&WeightedParticles::dirac(0.5), 0.5), 81.0 / 337.0, 1e-14));
        assert_eq!(m.speed(&WeightedParticles::dirac(0.3), 0.45), 1.0);
        let c = m.with_speed_law(SpeedLaw::Constant(1.0)).unwrap();
        assert_eq!(c.speed(&WeightedParticles::dirac(0.5), 0.5), 1.0);
    }

    #[test]
    fn symmetric_measure_has_zero_gradient() {
        let m = CongestionModel::segment(0.1).unwrap();
        let mu = WeightedParticles::new(vec![0.46, 0.54], vec![0.5, 0.5]).unwrap();
        assert!(m.speed_gradient(&mu, 0.5).abs() < 1e-12);
        assert_eq!(m.speed_gradient(&WeightedParticles::dirac(0.2), 0.4), 0.0);
    }

    #[test]
    fn ensemble_fields_match_pointwise() {
        let m = CongestionModel::disk(0.1).unwrap();
        let pts = vec![
            Vec2::new(0.1, 0.0),
            Vec2::new(0.13, 0.02),
            Vec2::new(0.12, -0.04),
            Vec2::new(0.5, 0.5),
            Vec2::new(0.93, 0.0),
        ];
        let w = vec![0.3, 0.2, 0.1, 0.15, 0.25];
        let mu = WeightedParticles::new(pts.clone(), w.clone()).unwrap();
        let f = m.ensemble_fields(&pts, &w);
        for (x, fx) in pts.iter().zip(&f) {
            assert!(close(fx.density, m.density(&mu, *x), 1e-12));
            assert!(close(fx.speed, m.speed(&mu, *x), 1e-12));
            let g = m.speed_gradient(&mu, *x);
            assert!((fx.gradient - g).norm() < 1e-10);
        }
    }
}
