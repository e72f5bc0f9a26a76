//! Ambient spaces for particles: the unit interval (`f64`) and the unit disk
//! (`Vec2`). The point type fixes the domain whose boundary is the exit.

use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

/// Euclidean point type with a canonical bounded domain.
pub trait Point:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + Neg<Output = Self>
    + 'static
{
    const DIM: usize;

    fn zero() -> Self;
    /// Canonical basis vector `index < DIM`.
    fn axis(index: usize) -> Self;
    fn dot(self, other: Self) -> f64;

    /// Signed distance to the boundary of the domain, positive inside.
    /// Unit interval: `min(x, 1 - x)`; unit disk: `1 - |x|`.
    fn boundary_depth(self) -> f64;

    /// Nearest point of the domain boundary.
    fn snap_to_boundary(self) -> Self;

    fn coords(self) -> Vec<f64>;

    fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Point for f64 {
    const DIM: usize = 1;

    fn zero() -> Self {
        0.0
    }

    fn axis(_index: usize) -> Self {
        1.0
    }

    fn dot(self, other: Self) -> f64 {
        self * other
    }

    fn boundary_depth(self) -> f64 {
        self.min(1.0 - self)
    }

    fn snap_to_boundary(self) -> Self {
        if self < 0.5 {
            0.0
        } else {
            1.0
        }
    }

    fn coords(self) -> Vec<f64> {
        vec![self]
    }

    fn norm(self) -> f64 {
        self.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Point for Vec2 {
    const DIM: usize = 2;

    fn zero() -> Self {
        Vec2::default()
    }

    fn axis(index: usize) -> Self {
        if index == 0 {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(0.0, 1.0)
        }
    }

    fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn boundary_depth(self) -> f64 {
        1.0 - self.norm()
    }

    fn snap_to_boundary(self) -> Self {
        let r = self.norm();
        if r == 0.0 {
            Vec2::new(1.0, 0.0)
        } else {
            self * (1.0 / r)
        }
    }

    fn coords(self) -> Vec<f64> {
        vec![self.x, self.y]
    }

    fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// A point on a metric graph: an edge index and the arclength from the
/// edge's tail vertex.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub edge: usize,
    pub s: f64,
}

impl GraphPoint {
    pub const fn new(edge: usize, s: f64) -> Self {
        GraphPoint { edge, s }
    }
}

/// Shortest-path distance between points of a metric graph.
pub trait GraphMetric {
    fn distance(&self, a: GraphPoint, b: GraphPoint) -> crate::Result<f64>;
}
