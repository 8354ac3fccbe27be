use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{OptimizerKind, Schedule};
use crate::dqnn::Activation;
use crate::error::{Error, Result};
use crate::simulator::SimConfig;

use super::{BINARY_THRESHOLD, DEFAULT_ALPHA};

/// Hidden sizes (in dual quaternions), activation and dropout of a
/// two-hidden-layer network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: [usize; 2],
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden: [32, 32], activation: Activation::Tanh, dropout: 0.1 }
    }
}

impl NetConfig {
    /// Hidden size 16, used where inputs are evaluated once per wall or
    /// per path.
    pub fn small() -> Self {
        NetConfig { hidden: [16, 16], ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    pub clip_norm: Option<f64>,
    /// Weight of the real scalar part in the error-dual-quaternion score.
    pub alpha: f64,
    pub threshold: f64,
    /// Weight of positive samples in the binary cross-entropy.
    pub pos_weight: f64,
    /// Train, validation and test fractions of the trajectories.
    pub split: [f64; 3],
    /// Whether collision records are expanded by the eight rotations.
    pub augment: bool,
    pub multi: NetConfig,
    pub binary: NetConfig,
    pub collision: NetConfig,
    /// Epochs for the collision stage; `epochs` when absent.
    pub collision_epochs: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 256,
            lr: 3e-3,
            optimizer: OptimizerKind::ADAM,
            schedule: Schedule::EXPONENTIAL,
            clip_norm: Some(10.0),
            alpha: DEFAULT_ALPHA,
            threshold: BINARY_THRESHOLD,
            pos_weight: 1.0,
            split: [0.7, 0.15, 0.15],
            augment: true,
            multi: NetConfig::default(),
            binary: NetConfig::small(),
            collision: NetConfig::small(),
            collision_epochs: Some(50),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.alpha > 0.0) || !(self.pos_weight > 0.0) {
            return bad("lr, alpha and pos_weight must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        let s: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(*f > 0.0)) || (s - 1.0).abs() > 1e-9 {
            return bad(format!("split {:?} must be positive and sum to 1", self.split));
        }
        self.schedule.validate()?;
        self.multi.validate()?;
        self.binary.validate()?;
        self.collision.validate()
    }
}

/// Everything a run needs: simulation and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    /// The hard-coded path assumes force-free flight, so the pipeline
    /// defaults to the zero-gravity preset.
    fn default() -> Self {
        PipelineConfig { sim: SimConfig::zero_gravity(), train: TrainConfig::default() }
    }
}

impl PipelineConfig {
    /// Parses a possibly partial file. Missing keys keep the values of
    /// `PipelineConfig::default()`, so a bare `[sim]` table stays in zero
    /// gravity.
    pub fn from_toml(text: &str) -> Result<Self> {
        let err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let user: toml::Table = toml::from_str(text).map_err(|e| err(&e))?;
        let mut base = toml::Table::try_from(Self::default()).map_err(|e| err(&e))?;
        merge(&mut base, user);
        let c: PipelineConfig = base.try_into().map_err(|e| err(&e))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.train.validate()
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let c = PipelineConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
        let partial = PipelineConfig::from_toml("[train]\nepochs = 5\n[train.multi]\nhidden = [8, 4]\n").unwrap();
        assert_eq!(partial.train.epochs, 5);
        assert_eq!(partial.train.multi.hidden, [8, 4]);
        assert_eq!(partial.sim, SimConfig::zero_gravity());
        let sim = PipelineConfig::from_toml("[sim]\nn_records = 500\n").unwrap();
        assert_eq!(sim.sim, SimConfig { n_records: 500, ..SimConfig::zero_gravity() });
        let sched = PipelineConfig::from_toml("[train.schedule]\nkind = \"exponential\"\ngamma = 0.9995\n").unwrap();
        assert_eq!(sched.train.schedule, Schedule::EXPONENTIAL);
    }

    #[test]
    fn invalid_files_are_config_errors() {
        assert!(matches!(PipelineConfig::from_toml("[train]\nepochs = 0\n"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::from_toml("[train]\nbogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::from_toml("[train]\nsplit = [0.5, 0.5, 0.5]\n"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::from_toml("[train.multi]\ndropout = 1.0\n"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::from_toml("not toml"), Err(Error::Config(_))));
    }
}
