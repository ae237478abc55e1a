//! Demonstration data model shared by every curation stage.
//!
//! Timestep indices are 1-based throughout the public API: a demonstration of
//! length `T` has timesteps `1..=T`.

pub(crate) mod frames;
pub(crate) mod io;

pub use frames::{absolute_to_relative, relative_to_absolute};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the quaternion norm accepted at load time.
pub const QUAT_NORM_TOL: f64 = 1e-6;

/// End-effector pose: position in meters and a unit quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl Pose {
    pub const IDENTITY_ORIENTATION: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

    pub fn new(position: [f64; 3], orientation: [f64; 4]) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn at(position: [f64; 3]) -> Self {
        Pose::new(position, Self::IDENTITY_ORIENTATION)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.orientation;
        UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))
    }

    pub(crate) fn from_parts(t: Vector3<f64>, r: UnitQuaternion<f64>) -> Self {
        let q = r.quaternion();
        Pose::new([t.x, t.y, t.z], [q.w, q.i, q.j, q.k])
    }

    /// Checks finiteness and unit norm; returns the offending field on failure.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(("pos", "position components must be finite".into()));
        }
        if self.orientation.iter().any(|v| !v.is_finite()) {
            return Err(("quat", "quaternion components must be finite".into()));
        }
        let norm = self.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(("quat", format!("quaternion norm {norm} is not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub ee_pose: Pose,
    /// Gripper opening in `[0, 1]`; 0 is fully closed, 1 fully open.
    pub gripper: f64,
    pub proprio: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    /// World-frame target pose.
    Absolute,
    /// Delta pose applied to the current end-effector pose.
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub kind: ActionKind,
    pub target_pose: Pose,
    pub gripper_cmd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub act: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceQuality {
    Expert,
    Suboptimal,
    #[default]
    Unknown,
}

/// Segment quality label: high quality (`+`) or low quality (`-`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn symbol(self) -> char {
        match self {
            Label::Positive => '+',
            Label::Negative => '-',
        }
    }
}

/// A value reserved for evaluation. Curation code never calls [`EvalOnly::reveal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOnly<T>(T);

impl<T> EvalOnly<T> {
    pub fn new(value: T) -> Self {
        EvalOnly(value)
    }

    pub fn reveal(&self) -> &T {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub id: String,
    /// Seconds per step.
    pub dt: f64,
    pub steps: Vec<Step>,
    pub source_quality: EvalOnly<SourceQuality>,
}

impl Demonstration {
    /// Builds a demonstration and checks its invariants.
    pub fn new(
        id: impl Into<String>,
        dt: f64,
        steps: Vec<Step>,
        source_quality: SourceQuality,
    ) -> Result<Self> {
        let demo = Demonstration {
            id: id.into(),
            dt,
            steps,
            source_quality: EvalOnly::new(source_quality),
        };
        demo.validate()?;
        Ok(demo)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidDemo {
            demo: self.id.clone(),
            message,
        };
        if self.steps.len() < 2 {
            return Err(invalid(format!(
                "needs at least 2 steps, found {}",
                self.steps.len()
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(format!("dt must be positive, found {}", self.dt)));
        }
        let kind = self.steps[0].act.kind;
        for (i, step) in self.steps.iter().enumerate() {
            if step.act.kind != kind {
                return Err(Error::MixedActionKinds {
                    demo: self.id.clone(),
                    step: i + 1,
                });
            }
            let t = i + 1;
            step.obs
                .ee_pose
                .check()
                .map_err(|(f, m)| invalid(format!("step {t} obs.{f}: {m}")))?;
            step.act
                .target_pose
                .check()
                .map_err(|(f, m)| invalid(format!("step {t} act.{f}: {m}")))?;
            if !(0.0..=1.0).contains(&step.obs.gripper) {
                return Err(invalid(format!("step {t} obs.gripper out of [0,1]")));
            }
            if !(0.0..=1.0).contains(&step.act.gripper_cmd) {
                return Err(invalid(format!("step {t} act.gripper out of [0,1]")));
            }
        }
        Ok(())
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn action_kind(&self) -> ActionKind {
        self.steps[0].act.kind
    }

    /// End-effector positions `e_1..e_T`.
    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.steps.iter().map(|s| s.obs.ee_pose.position).collect()
    }

    /// Slices timesteps `start..=end` (1-based, inclusive) into a segment.
    pub fn slice(&self, start: usize, end: usize) -> Segment {
        assert!(
            1 <= start && start < end && end <= self.len(),
            "invalid segment range {start}..={end} for T={}",
            self.len()
        );
        Segment {
            demo_id: self.id.clone(),
            start,
            end,
            steps: self.steps[start - 1..end].to_vec(),
        }
    }
}

/// Contiguous slice of a demonstration, `start..=end` in parent timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub demo_id: String,
    pub start: usize,
    pub end: usize,
    pub steps: Vec<Step>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.steps.iter().map(|s| s.obs.ee_pose.position).collect()
    }

    pub fn action_kind(&self) -> ActionKind {
        self.steps[0].act.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    #[default]
    Mixed,
    ExpertReference,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub demos: Vec<Demonstration>,
    pub role: DatasetRole,
}

impl Dataset {
    pub fn new(demos: Vec<Demonstration>, role: DatasetRole) -> Result<Self> {
        let ds = Dataset { demos, role };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.role == DatasetRole::ExpertReference && self.demos.is_empty() {
            return Err(Error::Config(
                "an expert reference dataset needs at least one demonstration".into(),
            ));
        }
        self.demos.iter().try_for_each(Demonstration::validate)
    }

    /// Re-tags the dataset as an expert reference set.
    pub fn into_reference(self) -> Result<Self> {
        Dataset::new(self.demos, DatasetRole::ExpertReference)
    }

    pub fn total_steps(&self) -> usize {
        self.demos.iter().map(Demonstration::len).sum()
    }

    pub fn get(&self, id: &str) -> Option<&Demonstration> {
        self.demos.iter().find(|d| d.id == id)
    }
}

/// Euclidean length of the polyline through `points`.
pub fn polyline_length(points: &[[f64; 3]]) -> f64 {
    points.windows(2).map(|w| distance(&w[0], &w[1])).sum()
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}
