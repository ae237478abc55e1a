//! Synthetic pick-and-place demonstrations with known quality labels.
//!
//! Expert demonstrations move in straight minimum-jerk strokes between
//! waypoints and toggle the gripper at each subtask boundary. Suboptimal
//! demonstrations reuse the same kind of skeleton but corrupt individual
//! subtasks independently (jitter, detours, pauses, gripper fumbles), so one
//! demonstration can mix clean and corrupted segments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    absolute_to_relative, polyline_length, Action, ActionKind, Dataset, DatasetRole,
    Demonstration, Label, Observation, Pose, Segment, SourceQuality, Step,
};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Gripper pointing down: 180 degrees about x.
const DOWN: [f64; 4] = [0.0, 1.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseProfile {
    /// Probability that a subtask of a suboptimal demo is corrupted.
    pub corrupt_prob: f64,
    pub jitter_sigma: f64,
    pub detour_prob: f64,
    pub detour_amplitude: f64,
    pub pause_prob: f64,
    pub pause_len: usize,
    pub gripper_fumble_prob: f64,
    pub fumble_len: usize,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile {
            corrupt_prob: 0.6,
            jitter_sigma: 0.02,
            detour_prob: 0.5,
            detour_amplitude: 0.08,
            pause_prob: 0.2,
            pause_len: 10,
            gripper_fumble_prob: 0.15,
            fumble_len: 6,
        }
    }
}

impl NoiseProfile {
    pub fn none() -> Self {
        NoiseProfile {
            corrupt_prob: 0.0,
            jitter_sigma: 0.0,
            detour_prob: 0.0,
            detour_amplitude: 0.0,
            pause_prob: 0.0,
            pause_len: 0,
            gripper_fumble_prob: 0.0,
            fumble_len: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            min: [0.35, -0.2, 0.02],
            max: [0.65, 0.2, 0.3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_expert: usize,
    pub n_suboptimal: usize,
    pub subtasks: usize,
    /// Control rate (steps per second).
    pub hz: f64,
    pub workspace: Workspace,
    /// Range of subtask durations (seconds).
    pub subtask_duration: (f64, f64),
    pub noise: NoiseProfile,
    pub action_kind: ActionKind,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_expert: 25,
            n_suboptimal: 25,
            subtasks: 3,
            hz: 20.0,
            workspace: Workspace::default(),
            subtask_duration: (1.5, 2.5),
            noise: NoiseProfile::default(),
            action_kind: ActionKind::Absolute,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        for (name, p) in [
            ("corrupt_prob", n.corrupt_prob),
            ("detour_prob", n.detour_prob),
            ("pause_prob", n.pause_prob),
            ("gripper_fumble_prob", n.gripper_fumble_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("noise.{name} must lie in [0, 1]")));
            }
        }
        if !(n.jitter_sigma >= 0.0 && n.detour_amplitude >= 0.0) {
            return Err(Error::Config("noise scales must be >= 0".into()));
        }
        if self.subtasks == 0 {
            return Err(Error::Config("subtasks must be >= 1".into()));
        }
        if !(self.hz > 0.0) {
            return Err(Error::Config("hz must be > 0".into()));
        }
        let (lo, hi) = self.subtask_duration;
        if !(lo > 0.0 && hi >= lo) || lo * self.hz < 12.0 {
            return Err(Error::Config(
                "subtask_duration must be ordered and span at least 12 steps".into(),
            ));
        }
        let w = &self.workspace;
        if (0..3).any(|k| !(w.max[k] > w.min[k])) {
            return Err(Error::Config("workspace max must exceed min on every axis".into()));
        }
        Ok(())
    }
}

/// Ground truth of one subtask, in 1-based demo timesteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskTruth {
    pub start: usize,
    pub end: usize,
    pub corrupted: bool,
    pub corruptions: Vec<String>,
    /// Path length of the uncorrupted skeleton over this subtask.
    pub clean_length: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTruth {
    pub id: String,
    pub quality: SourceQuality,
    pub subtasks: Vec<SubtaskTruth>,
    /// Gripper-toggle keyframes at subtask boundaries.
    pub boundaries: Vec<usize>,
    /// Centers of inserted pauses.
    pub pause_keyframes: Vec<usize>,
    /// Gripper-toggle keyframes caused by fumbles.
    pub fumble_toggles: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub demos: Vec<DemoTruth>,
}

impl GroundTruth {
    pub fn demo(&self, id: &str) -> Option<&DemoTruth> {
        self.demos.iter().find(|d| d.id == id)
    }

    /// Label of a segment: negative when most of its timesteps lie in
    /// corrupted subtasks. `None` for unknown demonstrations.
    pub fn segment_label(&self, seg: &Segment) -> Option<Label> {
        let demo = self.demo(&seg.demo_id)?;
        let corrupted = (seg.start..=seg.end)
            .filter(|&t| {
                demo.subtasks
                    .iter()
                    .any(|s| s.corrupted && (s.start..=s.end).contains(&t))
            })
            .count();
        let clean = seg.len() - corrupted;
        Some(if corrupted >= clean && corrupted > 0 {
            Label::Negative
        } else {
            Label::Positive
        })
    }
}

fn min_jerk(s: f64) -> f64 {
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn lerp(a: &[f64; 3], b: &[f64; 3], s: f64) -> [f64; 3] {
    std::array::from_fn(|k| a[k] + (b[k] - a[k]) * s)
}

fn waypoints(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let w = &cfg.workspace;
    let mut uniform = |k: usize| rng.random_range(w.min[k]..w.max[k]);
    let top = w.max[2];
    let low = w.min[2];
    let mut pts = vec![[uniform(0), uniform(1), top]];
    for s in 0..cfg.subtasks {
        let last = s + 1 == cfg.subtasks;
        let prev = pts[pts.len() - 1];
        let next = loop {
            let candidate = if last && cfg.subtasks > 1 {
                [prev[0], prev[1], top]
            } else {
                [uniform(0), uniform(1), low]
            };
            if crate::data::distance(&prev, &candidate) > 0.1 {
                break candidate;
            }
        };
        pts.push(next);
    }
    pts
}

struct Stroke {
    points: Vec<[f64; 3]>,
    gripper: Vec<f64>,
    clean: Vec<[f64; 3]>,
    corruptions: Vec<String>,
    pause_at: Option<usize>,
    fumble_at: Option<usize>,
}

fn unit_orthogonal(rng: &mut ChaCha8Rng, axis: &[f64; 3]) -> [f64; 3] {
    let n = (axis.iter().map(|v| v * v).sum::<f64>()).sqrt();
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let along: f64 = (0..3).map(|k| v[k] * axis[k] / n).sum();
        let o: [f64; 3] = std::array::from_fn(|k| v[k] - along * axis[k] / n);
        let on = (o.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if on > 1e-6 {
            return o.map(|x| x / on);
        }
    }
}

fn corrupt(stroke: &mut Stroke, from: &[f64; 3], noise: &NoiseProfile, rng: &mut ChaCha8Rng) {
    let n = stroke.points.len();
    let to = stroke.points[n - 1];
    if noise.jitter_sigma > 0.0 {
        let jitter = Normal::new(0.0, noise.jitter_sigma).expect("sigma >= 0");
        for p in &mut stroke.points[..n - 1] {
            for v in p.iter_mut() {
                *v += jitter.sample(rng);
            }
        }
        stroke.corruptions.push("jitter".into());
    }
    if noise.detour_amplitude > 0.0 && rng.random_bool(noise.detour_prob) {
        let center = rng.random_range(n / 4..=3 * n / 4) as f64;
        let half = (n / 4).max(2) as f64;
        let chord: [f64; 3] = std::array::from_fn(|k| to[k] - from[k]);
        let dir = unit_orthogonal(rng, &chord);
        for (i, p) in stroke.points[..n - 1].iter_mut().enumerate() {
            let x = ((i as f64 - center) / half).abs();
            let w = if x < 1.0 {
                noise.detour_amplitude * (1.0 - x) * (1.0 - x) * (1.0 + 2.0 * x)
            } else {
                0.0
            };
            for k in 0..3 {
                p[k] += w * dir[k];
            }
        }
        stroke.corruptions.push("detour".into());
    }
    if noise.fumble_len > 0 && n >= noise.fumble_len + 16 && rng.random_bool(noise.gripper_fumble_prob) {
        let f = rng.random_range(n / 2..=n - noise.fumble_len - 6);
        for g in &mut stroke.gripper[f..f + noise.fumble_len] {
            *g = 1.0 - *g;
        }
        stroke.fumble_at = Some(f);
        stroke.corruptions.push("fumble".into());
    }
    if noise.pause_len > 0 && n >= 20 && rng.random_bool(noise.pause_prob) {
        let p = rng.random_range(6..=n / 2 - 3);
        let (pt, g) = (stroke.points[p], stroke.gripper[p]);
        for _ in 0..noise.pause_len {
            stroke.points.insert(p + 1, pt);
            stroke.gripper.insert(p + 1, g);
            stroke.clean.insert(p + 1, stroke.clean[p]);
        }
        if let Some(f) = stroke.fumble_at.as_mut() {
            *f += noise.pause_len;
        }
        stroke.pause_at = Some(p);
        stroke.corruptions.push("pause".into());
    }
}

fn generate_demo(
    cfg: &SynthConfig,
    id: String,
    quality: SourceQuality,
    rng: &mut ChaCha8Rng,
) -> Result<(Demonstration, DemoTruth)> {
    let wps = waypoints(cfg, rng);
    let mut positions = vec![wps[0]];
    let mut clean_positions = vec![wps[0]];
    let mut grippers = vec![1.0];
    let mut truth = DemoTruth {
        id: id.clone(),
        quality,
        subtasks: Vec::new(),
        boundaries: Vec::new(),
        pause_keyframes: Vec::new(),
        fumble_toggles: Vec::new(),
    };
    for s in 0..cfg.subtasks {
        let (lo, hi) = cfg.subtask_duration;
        let secs = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let n = (secs * cfg.hz).round() as usize;
        let state = if s % 2 == 0 { 1.0 } else { 0.0 };
        let clean: Vec<[f64; 3]> = (1..=n)
            .map(|i| lerp(&wps[s], &wps[s + 1], min_jerk(i as f64 / n as f64)))
            .collect();
        let mut stroke = Stroke {
            points: clean.clone(),
            gripper: vec![state; n],
            clean,
            corruptions: Vec::new(),
            pause_at: None,
            fumble_at: None,
        };
        if quality == SourceQuality::Suboptimal && rng.random_bool(cfg.noise.corrupt_prob) {
            corrupt(&mut stroke, &wps[s], &cfg.noise, rng);
        }
        let offset = positions.len();
        let start = offset + 1;
        let end = offset + stroke.points.len();
        let from = positions[offset - 1];
        let mut path = vec![from];
        path.extend_from_slice(&stroke.points);
        let mut clean_path = vec![clean_positions[offset - 1]];
        clean_path.extend_from_slice(&stroke.clean);
        if let Some(p) = stroke.pause_at {
            truth
                .pause_keyframes
                .push(start + p + cfg.noise.pause_len.div_ceil(2));
        }
        if let Some(f) = stroke.fumble_at {
            truth.fumble_toggles.push(offset + f);
            truth.fumble_toggles.push(offset + f + cfg.noise.fumble_len);
        }
        truth.subtasks.push(SubtaskTruth {
            start,
            end,
            corrupted: !stroke.corruptions.is_empty(),
            corruptions: stroke.corruptions,
            clean_length: polyline_length(&clean_path),
            length: polyline_length(&path),
        });
        if s + 1 < cfg.subtasks {
            truth.boundaries.push(end);
        }
        positions.extend(stroke.points);
        clean_positions.extend(stroke.clean);
        grippers.extend(stroke.gripper);
    }

    let t_end = positions.len();
    let steps: Vec<Step> = (0..t_end)
        .map(|i| {
            let next = (i + 1).min(t_end - 1);
            Step {
                obs: Observation {
                    ee_pose: Pose::new(positions[i], DOWN),
                    gripper: grippers[i],
                    proprio: None,
                },
                act: Action {
                    kind: ActionKind::Absolute,
                    target_pose: Pose::new(positions[next], DOWN),
                    gripper_cmd: grippers[next],
                },
            }
        })
        .collect();
    let mut demo = Demonstration::new(id, 1.0 / cfg.hz, steps, quality)?;
    if cfg.action_kind == ActionKind::Relative {
        demo = absolute_to_relative(&demo);
    }
    Ok((demo, truth))
}

/// Generates experts first, then suboptimal demos; deterministic per seed.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut demos = Vec::new();
    let mut truth = GroundTruth::default();
    let total = cfg.n_expert + cfg.n_suboptimal;
    for i in 0..total {
        let (id, quality) = if i < cfg.n_expert {
            (format!("expert_{i:03}"), SourceQuality::Expert)
        } else {
            (
                format!("subopt_{:03}", i - cfg.n_expert),
                SourceQuality::Suboptimal,
            )
        };
        let mut rng = stream(cfg.seed, i as u64);
        let (demo, t) = generate_demo(cfg, id, quality, &mut rng)?;
        demos.push(demo);
        truth.demos.push(t);
    }
    Ok((
        Dataset {
            demos,
            role: DatasetRole::Mixed,
        },
        truth,
    ))
}
