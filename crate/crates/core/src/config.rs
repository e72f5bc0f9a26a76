//! Experiment configuration. Files are TOML (or JSON, so a resolved config
//! written next to the results can be fed back in); every field is optional
//! and falls back to the standard parameters.

use crate::disk::{DiskFixedPointConfig, DEFAULT_MAX_ITERS, DEFAULT_N, DEFAULT_ZETA};
use crate::geometry::Vec2;
use crate::kernel::{CongestionModel, SpeedLaw};
use crate::network::{BraessMethod, DEFAULT_LONG_EDGE};
use crate::{MfgError, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Segment,
    SegmentSweep,
    Braess,
    BraessSweep,
    Disk,
    DiskContinuation,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Segment => "segment",
            Experiment::SegmentSweep => "segment_sweep",
            Experiment::Braess => "braess",
            Experiment::BraessSweep => "braess_sweep",
            Experiment::Disk => "disk",
            Experiment::DiskContinuation => "disk_continuation",
        }
    }

    fn default_dt(&self) -> f64 {
        match self {
            Experiment::Disk | Experiment::DiskContinuation => crate::disk::DEFAULT_DT,
            Experiment::Braess | Experiment::BraessSweep => crate::network::DEFAULT_DT,
            _ => crate::segment::DEFAULT_DT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedLawChoice {
    /// The rational law of the chosen geometry.
    Rational,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Method1,
    Method2,
}

impl From<MethodChoice> for BraessMethod {
    fn from(m: MethodChoice) -> Self {
        match m {
            MethodChoice::Method1 => BraessMethod::Nested,
            MethodChoice::Method2 => BraessMethod::Symmetric,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub epsilon: Option<f64>,
    pub speed_law: Option<SpeedLawChoice>,
    pub constant_speed: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit grid; takes precedence over the range.
    pub ells: Option<Vec<f64>>,
    pub ell_min: Option<f64>,
    pub ell_max: Option<f64>,
    pub count: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BraessConfig {
    pub long_edge: Option<f64>,
    pub method: Option<MethodChoice>,
    /// Also solve every k-th sweep row with method 1.
    pub method1_every: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    pub n: Option<usize>,
    pub p: Option<[f64; 2]>,
    pub step: Option<f64>,
    pub max_iters: Option<usize>,
    pub snapshot_times: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub dt: Option<f64>,
    pub tol_alpha: Option<f64>,
    pub zeta: Option<f64>,
    pub ell: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub dump_trajectories: Option<bool>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub braess: BraessConfig,
    #[serde(default)]
    pub disk: DiskConfig,
}

fn parse_error(path: &Path, inner: impl std::fmt::Display, field: &str) -> MfgError {
    let at = if field.is_empty() || field == "." { String::new() } else { format!(" at `{field}`") };
    MfgError::InvalidParameter(format!("{}{at}: {inner}", path.display()))
}

impl ExperimentConfig {
    pub fn from_str_as(text: &str, json: bool, origin: &Path) -> Result<Self> {
        if json {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| parse_error(origin, e.inner(), &e.path().to_string()))
        } else {
            let de = toml::Deserializer::new(text);
            serde_path_to_error::deserialize(de).map_err(|e| parse_error(origin, e.inner(), &e.path().to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MfgError::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json");
        Self::from_str_as(&text, json, path)
    }

    /// Fill every unset field with its default for `experiment`, then check
    /// ranges.
    pub fn resolve(mut self, experiment: Experiment) -> Result<Self> {
        self.experiment = Some(experiment);
        self.dt.get_or_insert(experiment.default_dt());
        self.tol_alpha.get_or_insert(crate::segment::DEFAULT_TOL_ALPHA);
        self.zeta.get_or_insert(DEFAULT_ZETA);
        self.out_dir.get_or_insert_with(|| PathBuf::from("out"));
        self.dump_trajectories.get_or_insert(false);
        self.kernel.epsilon.get_or_insert(crate::segment::DEFAULT_EPSILON);
        self.kernel.speed_law.get_or_insert(SpeedLawChoice::Rational);
        match experiment {
            Experiment::Segment => {
                self.ell.get_or_insert(0.4);
            }
            Experiment::Braess => {
                self.ell.get_or_insert(0.2);
            }
            Experiment::SegmentSweep | Experiment::BraessSweep => {
                if self.sweep.ells.is_none() {
                    let (lo, hi, n) = if experiment == Experiment::SegmentSweep { (0.0, 1.0, 21) } else { (0.001, 0.35, 350) };
                    self.sweep.ell_min.get_or_insert(lo);
                    self.sweep.ell_max.get_or_insert(hi);
                    self.sweep.count.get_or_insert(n);
                }
            }
            Experiment::Disk | Experiment::DiskContinuation => {
                self.disk.n.get_or_insert(DEFAULT_N);
                self.disk.max_iters.get_or_insert(DEFAULT_MAX_ITERS);
                self.disk.snapshot_times.get_or_insert_with(Vec::new);
                if experiment == Experiment::DiskContinuation {
                    self.disk.p.get_or_insert([0.1, 0.0]);
                    self.disk.step.get_or_insert(0.01);
                } else {
                    self.disk.p.get_or_insert([0.0, 0.0]);
                }
            }
        }
        if matches!(experiment, Experiment::Braess | Experiment::BraessSweep) {
            self.braess.long_edge.get_or_insert(DEFAULT_LONG_EDGE);
            self.braess.method.get_or_insert(MethodChoice::Method2);
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(MfgError::InvalidParameter(format!("`{field}`: {msg}")));
        let dt = self.dt.unwrap_or(1.0);
        if !(dt > 0.0 && dt.is_finite()) {
            return bad("dt", format!("must be positive, got {dt}"));
        }
        if let Some(t) = self.tol_alpha {
            if !(t > 0.0 && t < 1.0) {
                return bad("tol_alpha", format!("must lie in (0, 1), got {t}"));
            }
        }
        if let Some(z) = self.zeta {
            if !(z > 0.0) {
                return bad("zeta", format!("must be positive, got {z}"));
            }
        }
        if let Some(e) = self.kernel.epsilon {
            if !(e > 0.0 && e < 0.5) {
                return bad("kernel.epsilon", format!("must lie in (0, 0.5), got {e}"));
            }
        }
        if self.kernel.speed_law == Some(SpeedLawChoice::Constant) {
            let c = self.kernel.constant_speed.unwrap_or(1.0);
            if !(c > 0.0 && c.is_finite()) {
                return bad("kernel.constant_speed", format!("must be positive, got {c}"));
            }
        }
        if let Some(count) = self.sweep.count {
            if count == 0 {
                return bad("sweep.count", "must be at least 1".into());
            }
        }
        if let (Some(lo), Some(hi)) = (self.sweep.ell_min, self.sweep.ell_max) {
            if !(lo <= hi) {
                return bad("sweep.ell_min", format!("{lo} exceeds sweep.ell_max = {hi}"));
            }
        }
        if let Some(n) = self.disk.n {
            if n < 4 {
                return bad("disk.n", format!("need at least 4 atoms, got {n}"));
            }
        }
        if let Some(p) = self.disk.p {
            if !(p[0].hypot(p[1]) < 1.0) {
                return bad("disk.p", format!("({}, {}) is not inside the unit disk", p[0], p[1]));
            }
        }
        if let Some(s) = self.disk.step {
            if !(s > 0.0) {
                return bad("disk.step", format!("must be positive, got {s}"));
            }
        }
        if self.disk.max_iters == Some(0) {
            return bad("disk.max_iters", "must be at least 1".into());
        }
        if let Some(l) = self.braess.long_edge {
            if !(l > 1.0) {
                return bad("braess.long_edge", format!("must exceed 1, got {l}"));
            }
        }
        Ok(())
    }

    pub fn experiment(&self) -> Experiment {
        self.experiment.unwrap_or(Experiment::Segment)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.experiment().default_dt())
    }

    /// Congestion model for the resolved experiment geometry.
    pub fn model(&self) -> Result<CongestionModel> {
        let eps = self.kernel.epsilon.unwrap_or(crate::segment::DEFAULT_EPSILON);
        let base = match self.experiment() {
            Experiment::Segment | Experiment::SegmentSweep => CongestionModel::segment(eps)?,
            Experiment::Braess | Experiment::BraessSweep => CongestionModel::network(eps)?,
            Experiment::Disk | Experiment::DiskContinuation => CongestionModel::disk(eps)?,
        };
        match self.kernel.speed_law.unwrap_or(SpeedLawChoice::Rational) {
            SpeedLawChoice::Rational => Ok(base),
            SpeedLawChoice::Constant => base.with_speed_law(SpeedLaw::Constant(self.kernel.constant_speed.unwrap_or(1.0))),
        }
    }

    /// The sweep grid: explicit list, or `count` equally spaced points with
    /// both ends included.
    pub fn ell_grid(&self) -> Vec<f64> {
        if let Some(ells) = &self.sweep.ells {
            return ells.clone();
        }
        let lo = self.sweep.ell_min.unwrap_or(0.0);
        let hi = self.sweep.ell_max.unwrap_or(1.0);
        let n = self.sweep.count.unwrap_or(21);
        linspace(lo, hi, n)
    }

    pub fn disk_config(&self) -> DiskFixedPointConfig {
        DiskFixedPointConfig {
            n: self.disk.n.unwrap_or(DEFAULT_N),
            dt: self.dt(),
            zeta: self.zeta.unwrap_or(DEFAULT_ZETA),
            max_iters: self.disk.max_iters.unwrap_or(DEFAULT_MAX_ITERS),
        }
    }

    pub fn disk_p(&self) -> Vec2 {
        let [x, y] = self.disk.p.unwrap_or([0.0, 0.0]);
        Vec2::new(x, y)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
