//! Numerical Lagrangian equilibria for minimal-time mean field games with
//! nonlocal congestion-limited speed: a segment with two exits, a Braess
//! network, and the unit disk.

pub mod cli;
pub mod config;
pub mod disk;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod measure;
pub mod network;
pub mod roots;
pub mod segment;
pub mod trajectory;

pub use error::{MfgError, Result};
pub use geometry::{GraphMetric, GraphPoint, Point, Vec2};
pub use kernel::{CongestionModel, CutoffDomain, CutoffProfile, MollifierKind, MollifierProfile, SpeedLaw};
pub use measure::{wasserstein1_exact, AtomicFlow, WeightedParticles};
pub use trajectory::{integrate_flow, Agent, StepperConfig, StopRule, TrajectoryPath};
