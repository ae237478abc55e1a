//! JSON-lines dataset files: one demonstration object per line.
//!
//! Floats are written with 17 significant digits so that a save/load cycle
//! reproduces every numeric field bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Action, ActionKind, Dataset, DatasetRole, Demonstration, EvalOnly, Observation, Pose,
    SourceQuality, Step,
};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoRecord {
    id: String,
    dt: f64,
    action_kind: ActionKind,
    #[serde(default)]
    source_quality: SourceQuality,
    steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct StepRecord {
    obs: ObsRecord,
    act: ActRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObsRecord {
    pos: [f64; 3],
    quat: [f64; 4],
    gripper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    proprio: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActRecord {
    pos: [f64; 3],
    quat: [f64; 4],
    gripper: f64,
    /// Per-step override of the demonstration's action kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<ActionKind>,
}

/// `serde_json` formatter that writes every float with 17 significant digits.
pub(crate) struct CanonicalFloats;

impl serde_json::ser::Formatter for CanonicalFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.8e}")
    }
}

/// Serializes `value` as one compact JSON document with canonical floats.
pub(crate) fn to_canonical_json<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFloats);
    value.serialize(&mut ser)?;
    Ok(out)
}

pub(crate) fn step_record(s: &Step) -> StepRecord {
    StepRecord {
        obs: ObsRecord {
            pos: s.obs.ee_pose.position,
            quat: s.obs.ee_pose.orientation,
            gripper: s.obs.gripper,
            proprio: s.obs.proprio.clone(),
        },
        act: ActRecord {
            pos: s.act.target_pose.position,
            quat: s.act.target_pose.orientation,
            gripper: s.act.gripper_cmd,
            kind: None,
        },
    }
}

fn to_record(demo: &Demonstration) -> DemoRecord {
    DemoRecord {
        id: demo.id.clone(),
        dt: demo.dt,
        action_kind: demo.action_kind(),
        source_quality: *demo.source_quality.reveal(),
        steps: demo.steps.iter().map(step_record).collect(),
    }
}

fn from_record(rec: DemoRecord, path: &Path, line: usize) -> Result<Demonstration> {
    let schema = |field: String, message: String| Error::Schema {
        path: path.to_path_buf(),
        line,
        field,
        message,
    };
    if rec.steps.len() < 2 {
        return Err(schema(
            "steps".into(),
            format!("need at least 2 steps, found {}", rec.steps.len()),
        ));
    }
    if !(rec.dt.is_finite() && rec.dt > 0.0) {
        return Err(schema("dt".into(), format!("must be positive, found {}", rec.dt)));
    }
    let mut steps = Vec::with_capacity(rec.steps.len());
    for (i, s) in rec.steps.into_iter().enumerate() {
        if let Some(kind) = s.act.kind {
            if kind != rec.action_kind {
                return Err(Error::MixedActionKinds {
                    demo: rec.id,
                    step: i + 1,
                });
            }
        }
        let obs_pose = Pose::new(s.obs.pos, s.obs.quat);
        let act_pose = Pose::new(s.act.pos, s.act.quat);
        obs_pose
            .check()
            .map_err(|(f, m)| schema(format!("steps[{i}].obs.{f}"), m))?;
        act_pose
            .check()
            .map_err(|(f, m)| schema(format!("steps[{i}].act.{f}"), m))?;
        for (field, g) in [("obs.gripper", s.obs.gripper), ("act.gripper", s.act.gripper)] {
            if !(0.0..=1.0).contains(&g) {
                return Err(schema(format!("steps[{i}].{field}"), format!("{g} outside [0, 1]")));
            }
        }
        if let Some(p) = &s.obs.proprio {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(schema(format!("steps[{i}].obs.proprio"), "non-finite value".into()));
            }
        }
        steps.push(Step {
            obs: Observation {
                ee_pose: obs_pose,
                gripper: s.obs.gripper,
                proprio: s.obs.proprio,
            },
            act: Action {
                kind: rec.action_kind,
                target_pose: act_pose,
                gripper_cmd: s.act.gripper,
            },
        });
    }
    Ok(Demonstration {
        id: rec.id,
        dt: rec.dt,
        steps,
        source_quality: EvalOnly::new(rec.source_quality),
    })
}

/// Pulls the field name out of a serde diagnostic when it names one.
fn field_of(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    for marker in ["missing field `", "unknown field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "record".to_string()
}

/// Parses a dataset from any reader; `path` is used only in diagnostics.
pub fn read_dataset<R: Read>(reader: R, path: &Path) -> Result<Dataset> {
    let mut demos: Vec<Demonstration> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DemoRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            field: field_of(&e),
            message: e.to_string(),
        })?;
        if demos.iter().any(|d| d.id == rec.id) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                line: i + 1,
                field: "id".into(),
                message: format!("duplicate demonstration id `{}`", rec.id),
            });
        }
        demos.push(from_record(rec, path, i + 1)?);
    }
    Ok(Dataset {
        demos,
        role: DatasetRole::Mixed,
    })
}

/// Loads a JSON-lines dataset. The result has role [`DatasetRole::Mixed`];
/// use [`Dataset::into_reference`] for an expert reference set.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, path)
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut writer: W) -> std::io::Result<()> {
    for demo in &ds.demos {
        let line = to_canonical_json(&to_record(demo))?;
        writer.write_all(&line)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
