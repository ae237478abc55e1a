//! Heuristic keyframe discovery and segment tiling.
//!
//! A timestep is a keyframe when the binarized gripper state changes after
//! it, or when it is the midpoint of a sustained near-zero-speed run of the
//! end effector.

use serde::{Deserialize, Serialize};

use crate::data::{distance, Demonstration, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Speed below which the end effector counts as stationary (m/s).
    pub velocity_eps: f64,
    /// Gripper openings at or above this value count as open.
    pub gripper_toggle_threshold: f64,
    /// Low-speed runs shorter than this many steps are ignored.
    pub debounce_window: usize,
    pub min_segment_len: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            velocity_eps: 0.005,
            gripper_toggle_threshold: 0.5,
            debounce_window: 5,
            min_segment_len: 4,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.velocity_eps > 0.0) {
            return Err(Error::Config("segmentation.velocity_eps must be > 0".into()));
        }
        if !(self.gripper_toggle_threshold > 0.0 && self.gripper_toggle_threshold < 1.0) {
            return Err(Error::Config(
                "segmentation.gripper_toggle_threshold must lie in (0, 1)".into(),
            ));
        }
        if self.debounce_window < 1 {
            return Err(Error::Config("segmentation.debounce_window must be >= 1".into()));
        }
        if self.min_segment_len < 2 {
            return Err(Error::Config("segmentation.min_segment_len must be >= 2".into()));
        }
        Ok(())
    }
}

/// Timesteps `t` (1-based) after which the binarized gripper state flips.
pub fn gripper_toggles(demo: &Demonstration, threshold: f64) -> Vec<usize> {
    let open: Vec<bool> = demo.steps.iter().map(|s| s.obs.gripper >= threshold).collect();
    open.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| i + 1)
        .collect()
}

/// Midpoints of maximal low-speed runs at least `debounce_window` long.
fn pause_midpoints(demo: &Demonstration, cfg: &SegmentationConfig) -> Vec<usize> {
    let pos = demo.positions();
    // slow[i] refers to timestep i + 1, speed measured towards the next step.
    let slow: Vec<bool> = pos
        .windows(2)
        .map(|w| distance(&w[0], &w[1]) / demo.dt < cfg.velocity_eps)
        .collect();
    let mut mids = Vec::new();
    let mut i = 0;
    while i < slow.len() {
        if !slow[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < slow.len() && slow[i] {
            i += 1;
        }
        let len = i - start;
        if len >= cfg.debounce_window {
            mids.push(start + 1 + (len - 1) / 2);
        }
    }
    mids
}

/// Sorted keyframe timesteps; always contains `1` and `T`.
pub fn find_keyframes(demo: &Demonstration, cfg: &SegmentationConfig) -> Vec<usize> {
    let t_end = demo.len();
    let toggles = gripper_toggles(demo, cfg.gripper_toggle_threshold);
    let pauses = pause_midpoints(demo, cfg);

    let mut candidates: Vec<(usize, bool)> = toggles
        .iter()
        .map(|&t| (t, true))
        .chain(pauses.iter().filter(|t| !toggles.contains(t)).map(|&t| (t, false)))
        .filter(|&(t, _)| t > 1 && t < t_end)
        .collect();
    candidates.sort_unstable();

    let mut keyframes = vec![1];
    for (t, is_toggle) in candidates {
        let last = *keyframes.last().unwrap();
        let crowded = t - last < cfg.min_segment_len || t_end - t < cfg.min_segment_len;
        if is_toggle || !crowded {
            keyframes.push(t);
        }
    }
    keyframes.push(t_end);
    keyframes
}

/// Tiles the demonstration by its keyframes: `[k1..k2], [k2+1..k3], ...`.
///
/// Each segment includes its closing keyframe. A one-step remainder left by
/// adjacent gripper toggles is merged into the preceding segment, and a demo
/// shorter than `2 * min_segment_len` becomes a single segment.
pub fn segment_demo(demo: &Demonstration, cfg: &SegmentationConfig) -> Vec<Segment> {
    let t_end = demo.len();
    if t_end < 2 * cfg.min_segment_len {
        return vec![demo.slice(1, t_end)];
    }
    let keyframes = find_keyframes(demo, cfg);
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut start = 1;
    for &k in &keyframes[1..] {
        if k < start {
            continue;
        }
        if k == start {
            if let Some(last) = ranges.last_mut() {
                last.1 = k;
                start = k + 1;
                continue;
            }
        }
        ranges.push((start, k));
        start = k + 1;
    }
    ranges.into_iter().map(|(s, e)| demo.slice(s, e)).collect()
}
