//! Finitely supported probability measures, their pushforward along a finite
//! family of curves, and an exact Wasserstein-1 oracle for small supports.

use crate::geometry::Point;
use crate::trajectory::TrajectoryPath;
use crate::{MfgError, Result};

/// Absolute tolerance on the total mass of a probability vector.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Largest support handled by [`wasserstein1_exact`].
pub const ORACLE_MAX_SUPPORT: usize = 8;

pub(crate) fn check_probability_vector(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(MfgError::InvalidMeasure("empty support".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(MfgError::InvalidMeasure(format!("weight {w} is not a finite nonnegative number")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(MfgError::InvalidMeasure(format!("weights sum to {total}")));
    }
    Ok(())
}

/// A probability measure `sum_k w_k delta_{x_k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedParticles<P> {
    points: Vec<P>,
    weights: Vec<f64>,
}

impl<P: Copy> WeightedParticles<P> {
    pub fn new(points: Vec<P>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(MfgError::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        check_probability_vector(&weights)?;
        Ok(WeightedParticles { points, weights })
    }

    pub fn dirac(x: P) -> Self {
        WeightedParticles { points: vec![x], weights: vec![1.0] }
    }

    pub fn uniform(points: Vec<P>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(MfgError::InvalidMeasure("empty support".into()));
        }
        let w = vec![1.0 / n as f64; n];
        WeightedParticles::new(points, w)
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (P, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// A measure on curves carried by finitely many trajectories.
#[derive(Clone, Debug)]
pub struct AtomicFlow<P> {
    pub trajectories: Vec<TrajectoryPath<P>>,
    pub weights: Vec<f64>,
    /// Time at which integration stopped (last exit, or first positive-mass
    /// exit, depending on the stop rule).
    pub stop_time: f64,
    /// Particle positions at `stop_time`, interpolated inside the last step.
    pub stop_positions: Vec<P>,
    /// Largest value of the congestion density seen by any particle.
    pub max_density: f64,
}

impl<P: Point> AtomicFlow<P> {
    pub fn new(trajectories: Vec<TrajectoryPath<P>>, weights: Vec<f64>) -> Result<Self> {
        check_probability_vector(&weights)?;
        if trajectories.len() != weights.len() {
            return Err(MfgError::InvalidMeasure("one weight per trajectory required".into()));
        }
        let first = trajectories
            .first()
            .ok_or_else(|| MfgError::InvalidMeasure("empty flow".into()))?;
        let (t0, dt, len) = (first.t0, first.dt, first.states.len());
        if trajectories.iter().any(|p| p.t0 != t0 || p.dt != dt || p.states.len() != len) {
            return Err(MfgError::InvalidMeasure("trajectories must share one time grid".into()));
        }
        let stop_time = first.end_time();
        let stop_positions = trajectories.iter().map(|p| *p.states.last().unwrap()).collect();
        Ok(AtomicFlow { trajectories, weights, stop_time, stop_positions, max_density: 0.0 })
    }

    pub fn start_time(&self) -> f64 {
        self.trajectories[0].t0
    }

    pub fn end_time(&self) -> f64 {
        self.trajectories[0].end_time()
    }

    pub fn dt(&self) -> f64 {
        self.trajectories[0].dt
    }

    /// Pushforward of the flow by evaluation at time `t`.
    pub fn measure_at(&self, t: f64) -> Result<WeightedParticles<P>> {
        let points = self
            .trajectories
            .iter()
            .map(|p| p.state_at(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightedParticles { points, weights: self.weights.clone() })
    }

    /// As [`measure_at`](Self::measure_at), but times past the end of the grid
    /// return the final (frozen) configuration.
    pub fn measure_at_clamped(&self, t: f64) -> Result<WeightedParticles<P>> {
        self.measure_at(t.min(self.end_time()))
    }
}

/// Exact Wasserstein-1 distance with Euclidean ground cost between two
/// measures with at most [`ORACLE_MAX_SUPPORT`] atoms each.
pub fn wasserstein1_exact<P: Point>(mu: &WeightedParticles<P>, nu: &WeightedParticles<P>) -> Result<f64> {
    for m in [mu, nu] {
        if m.len() > ORACLE_MAX_SUPPORT {
            return Err(MfgError::OracleScale(m.len(), ORACLE_MAX_SUPPORT));
        }
    }
    if P::DIM == 1 {
        let a: Vec<(f64, f64)> = mu.iter().map(|(x, w)| (x.coords()[0], w)).collect();
        let b: Vec<(f64, f64)> = nu.iter().map(|(x, w)| (x.coords()[0], w)).collect();
        Ok(w1_quantile_1d(&a, &b))
    } else {
        Ok(w1_transport(mu, nu))
    }
}

/// W1 on the line as the L1 distance between quantile functions.
pub fn w1_quantile_1d(mu: &[(f64, f64)], nu: &[(f64, f64)]) -> f64 {
    let sorted = |m: &[(f64, f64)]| {
        let mut v = m.to_vec();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let (a, b) = (sorted(mu), sorted(nu));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    loop {
        let step = ra.min(rb);
        total += step * (a[i].0 - b[j].0).abs();
        ra -= step;
        rb -= step;
        if ra <= 0.0 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 0.0 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    total
}

/// Optimal transport cost by successive shortest augmenting paths on the
/// bipartite transport network (exact for real-valued supplies).
pub fn w1_transport<P: Point>(mu: &WeightedParticles<P>, nu: &WeightedParticles<P>) -> f64 {
    const EPS: f64 = 1e-15;
    let (n, m) = (mu.len(), nu.len());
    // Nodes: 0 = source, 1..=n supplies, n+1..=n+m demands, n+m+1 = sink.
    let nodes = n + m + 2;
    let sink = n + m + 1;
    let mut cap = vec![vec![0.0f64; nodes]; nodes];
    let mut cost = vec![vec![0.0f64; nodes]; nodes];
    for i in 0..n {
        cap[0][1 + i] = mu.weights()[i];
        for j in 0..m {
            let c = (mu.points()[i] - nu.points()[j]).norm();
            cap[1 + i][1 + n + j] = f64::INFINITY;
            cost[1 + i][1 + n + j] = c;
            cost[1 + n + j][1 + i] = -c;
        }
    }
    for j in 0..m {
        cap[1 + n + j][sink] = nu.weights()[j];
    }
    let mut total = 0.0;
    for _ in 0..10_000 {
        // Bellman-Ford from the source on the residual graph.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if !dist[u].is_finite() {
                    continue;
                }
                for v in 0..nodes {
                    if cap[u][v] > EPS && dist[u] + cost[u][v] < dist[v] - 1e-15 {
                        dist[v] = dist[u] + cost[u][v];
                        prev[v] = u;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != 0 {
            let u = prev[v];
            push = push.min(cap[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != 0 {
            let u = prev[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total += push * dist[sink];
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::trajectory::TrajectoryPath;

    #[test]
    fn rejects_bad_weights() {
        assert!(WeightedParticles::new(vec![0.1, 0.2], vec![0.5, 0.4]).is_err());
        assert!(WeightedParticles::new(vec![0.1, 0.2], vec![1.5, -0.5]).is_err());
        assert!(WeightedParticles::new(vec![0.1], vec![0.5, 0.5]).is_err());
        assert!(WeightedParticles::<f64>::new(vec![], vec![]).is_err());
        assert!(WeightedParticles::new(vec![0.1, 0.2], vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn w1_small_cases() {
        let a = WeightedParticles::dirac(0.2);
        let b = WeightedParticles::dirac(0.7);
        assert!((wasserstein1_exact(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(wasserstein1_exact(&a, &a).unwrap(), 0.0);

        let mu = WeightedParticles::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let nu = WeightedParticles::new(vec![0.25, 0.75], vec![0.5, 0.5]).unwrap();
        assert!((wasserstein1_exact(&mu, &nu).unwrap() - 0.25).abs() < 1e-15);

        // Every 2x2 plan with these marginals is [[p, 0.5-p], [0.5-p, p]].
        let brute = (0..=1000)
            .map(|k| {
                let p = 0.5 * k as f64 / 1000.0;
                p * 0.25 + (0.5 - p) * 0.75 + (0.5 - p) * 0.25 + p * 0.25
            })
            .fold(f64::INFINITY, f64::min);
        assert!((brute - 0.25).abs() < 1e-12);
    }

    #[test]
    fn transport_matches_quantiles_on_embedded_line() {
        let xs = [0.1, 0.35, 0.9];
        let ws = [0.2, 0.5, 0.3];
        let ys = [0.0, 0.5, 0.6, 0.95];
        let vs = [0.1, 0.4, 0.25, 0.25];
        let a: Vec<_> = xs.iter().copied().zip(ws).collect();
        let b: Vec<_> = ys.iter().copied().zip(vs).collect();
        let q = w1_quantile_1d(&a, &b);
        let mu = WeightedParticles::new(xs.iter().map(|&x| Vec2::new(x, 0.0)).collect(), ws.to_vec()).unwrap();
        let nu = WeightedParticles::new(ys.iter().map(|&x| Vec2::new(x, 0.0)).collect(), vs.to_vec()).unwrap();
        let t = wasserstein1_exact(&mu, &nu).unwrap();
        assert!((q - t).abs() < 1e-10, "{q} vs {t}");
    }

    #[test]
    fn oracle_refuses_large_support() {
        let mu = WeightedParticles::uniform((0..9).map(|k| k as f64 / 9.0).collect()).unwrap();
        assert_eq!(wasserstein1_exact(&mu, &mu), Err(MfgError::OracleScale(9, 8)));
    }

    #[test]
    fn measure_at_interpolates_and_preserves_mass() {
        let left = TrajectoryPath::from_samples(0.0, 0.5, vec![0.4, 0.2, 0.0], vec![-1.0; 3], Some(1.0));
        let right = TrajectoryPath::from_samples(0.0, 0.5, vec![0.4, 0.6, 0.8], vec![1.0; 3], None);
        let flow = AtomicFlow::new(vec![left, right], vec![0.7, 0.3]).unwrap();
        let m0 = flow.measure_at(0.0).unwrap();
        assert_eq!(m0.points(), &[0.4, 0.4]);
        let m = flow.measure_at(0.75).unwrap();
        assert!((m.points()[0] - 0.1).abs() < 1e-15);
        assert!((m.points()[1] - 0.7).abs() < 1e-15);
        assert_eq!(m.weights(), &[0.7, 0.3]);
        assert!(matches!(flow.measure_at(1.5), Err(MfgError::OutOfRange { .. })));
        assert!(flow.measure_at(-0.1).is_err());
    }

    #[test]
    fn constant_curve_pushes_forward_to_dirac() {
        let p = TrajectoryPath::from_samples(0.0, 0.1, vec![0.3; 11], vec![1.0; 11], None);
        let flow = AtomicFlow::new(vec![p], vec![1.0]).unwrap();
        assert_eq!(flow.measure_at(0.55).unwrap(), WeightedParticles::dirac(0.3));
    }
}
