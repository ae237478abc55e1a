use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::OptimizeConfig;
use crate::render::{AugmentConfig, CameraRig};
use crate::repr::TrainConfig;
use crate::segmentation::SegmentationConfig;
use crate::select::VoteConfig;

/// Version of the configuration document layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Granularity at which quality is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionLevel {
    /// No classification; every segment goes through the same treatment.
    None,
    /// One decision per demonstration from the mean of its segment scores.
    Demonstration,
    #[default]
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Switches {
    pub selection_level: SelectionLevel,
    pub trajectory_optimization: bool,
    pub action_relabeling: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Switches {
            selection_level: SelectionLevel::Segment,
            trajectory_optimization: true,
            action_relabeling: true,
        }
    }
}

impl Switches {
    pub fn new(level: SelectionLevel, optimization: bool, relabeling: bool) -> Self {
        Switches {
            selection_level: level,
            trajectory_optimization: optimization,
            action_relabeling: relabeling,
        }
    }
}

/// Optional default locations for inputs and outputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub mixed: Option<PathBuf>,
    pub expert: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Every threshold and hyperparameter of a curation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub schema_version: u32,
    pub segmentation: SegmentationConfig,
    pub rig: CameraRig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub vote: VoteConfig,
    pub optimize: OptimizeConfig,
    pub switches: Switches,
    pub paths: Paths,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            schema_version: SCHEMA_VERSION,
            segmentation: SegmentationConfig::default(),
            rig: CameraRig::default(),
            augment: AugmentConfig::default(),
            train: TrainConfig::default(),
            vote: VoteConfig::default(),
            optimize: OptimizeConfig::default(),
            switches: Switches::default(),
            paths: Paths::default(),
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.switches.action_relabeling && !self.switches.trajectory_optimization {
            return Err(Error::Config(
                "action_relabeling requires trajectory_optimization".into(),
            ));
        }
        if self.rig.width == 0 || self.rig.height == 0 || !(self.rig.focal > 0.0) {
            return Err(Error::Config("rig needs a positive size and focal length".into()));
        }
        self.segmentation.validate()?;
        self.augment.validate()?;
        self.train.validate()?;
        self.vote.validate()?;
        self.optimize.validate()
    }

    /// Seeds every randomized stage from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.augment.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: CurationConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
