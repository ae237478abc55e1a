//! Greedy angle-gated waypoint selection and action relabeling.
//!
//! Starting from the first point of a segment, the next waypoint is the
//! nearest not-yet-selected point whose direction deviates from the
//! direction to the segment's final point by at most `delta_theta`. When no
//! point qualifies, the nearest one at least one maximal step length away
//! is taken instead. Discarded timesteps keep their observations; their
//! actions are rewritten to steer towards the next retained waypoint, so
//! every timestep of the segment survives.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::frames::{steps_to_absolute, steps_to_relative};
use crate::data::io::{step_record, to_canonical_json, StepRecord};
use crate::data::{distance, polyline_length, ActionKind, Segment, Step};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Maximum deviation from the goal direction, in degrees.
    pub delta_theta: f64,
    /// Vectors shorter than this have no defined direction (m).
    pub zero_vec_eps: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            delta_theta: 75.0,
            zero_vec_eps: 1e-9,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_theta > 0.0 && self.delta_theta < 180.0) {
            return Err(Error::Config("optimize.delta_theta must lie in (0, 180)".into()));
        }
        if !(self.zero_vec_eps >= 0.0) {
            return Err(Error::Config("optimize.zero_vec_eps must be >= 0".into()));
        }
        Ok(())
    }
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Angle between `u` and `v` in degrees, or `None` if either is too short.
fn angle_deg(u: &[f64; 3], v: &[f64; 3], eps: f64) -> Option<f64> {
    let (nu, nv) = (norm(u), norm(v));
    if nu < eps || nv < eps || nu == 0.0 || nv == 0.0 {
        return None;
    }
    let cos = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]) / (nu * nv);
    Some(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Retained waypoints of a polyline as sorted 1-based indices.
///
/// Every not-yet-selected point is a candidate at each step, including
/// points before the current waypoint; the selected set is returned in
/// timestep order.
pub fn greedy_waypoints(points: &[[f64; 3]], cfg: &OptimizeConfig) -> Vec<usize> {
    let n = points.len();
    if n <= 1 {
        return (1..=n).collect();
    }
    let last = n - 1;
    let max_step = points
        .windows(2)
        .map(|w| distance(&w[0], &w[1]))
        .fold(0.0, f64::max);

    let mut rest = vec![true; n];
    rest[0] = false;
    let mut retained = vec![0usize];
    let mut j = 0;
    while rest[last] {
        let goal = sub(&points[last], &points[j]);
        let nearest = |admit: &dyn Fn(&[f64; 3], f64) -> bool| {
            let mut best: Option<(usize, f64)> = None;
            for k in (0..n).filter(|&k| rest[k]) {
                let v = sub(&points[k], &points[j]);
                let d = norm(&v);
                if admit(&v, d) && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((k, d));
                }
            }
            best.map(|(k, _)| k)
        };
        let next = nearest(&|v, _| {
            angle_deg(v, &goal, cfg.zero_vec_eps).is_some_and(|a| a <= cfg.delta_theta)
        })
        .or_else(|| nearest(&|_, d| d >= max_step && d >= cfg.zero_vec_eps && d > 0.0))
        .unwrap_or(last);
        rest[next] = false;
        retained.push(next);
        j = next;
    }
    retained.sort_unstable();
    retained.into_iter().map(|i| i + 1).collect()
}

/// Runs the greedy selection on a segment's end-effector positions.
pub fn greedy_optimize(seg: &Segment, cfg: &OptimizeConfig) -> Vec<usize> {
    greedy_waypoints(&seg.positions(), cfg)
}

/// A low-quality segment after waypoint selection and relabeling.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedSegment {
    pub original: Segment,
    /// Segment-local 1-based indices of the retained waypoints.
    pub retained: Vec<usize>,
    /// Every original timestep with its relabeled action.
    pub relabeled_steps: Vec<Step>,
}

impl OptimizedSegment {
    /// Original steps at the retained waypoints only.
    pub fn retained_steps(&self) -> Vec<Step> {
        self.retained
            .iter()
            .map(|&i| self.original.steps[i - 1].clone())
            .collect()
    }

    pub fn original_length(&self) -> f64 {
        polyline_length(&self.original.positions())
    }

    /// Length of the polyline through the retained waypoints.
    pub fn retained_length(&self) -> f64 {
        let pos = self.original.positions();
        let pts: Vec<[f64; 3]> = self.retained.iter().map(|&i| pos[i - 1]).collect();
        polyline_length(&pts)
    }
}

/// Source timestep of each relabeled action: for `t < T` the smallest
/// `t' >= t` whose successor is retained, and `T` itself for the last step.
pub fn relabel_sources(len: usize, retained: &[usize]) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut keep = vec![false; len + 2];
    for &r in retained {
        keep[r] = true;
    }
    let mut sources = vec![len; len];
    let mut src = len;
    for t in (1..len).rev() {
        if keep[t + 1] {
            src = t;
        }
        sources[t - 1] = src;
    }
    sources
}

/// Rewrites every action of `seg` from its relabel source. Expects absolute actions.
pub fn relabel(seg: &Segment, retained: &[usize]) -> OptimizedSegment {
    let sources = relabel_sources(seg.len(), retained);
    let relabeled_steps = seg
        .steps
        .iter()
        .zip(&sources)
        .map(|(step, &src)| Step {
            obs: step.obs.clone(),
            act: seg.steps[src - 1].act.clone(),
        })
        .collect();
    OptimizedSegment {
        original: seg.clone(),
        retained: retained.to_vec(),
        relabeled_steps,
    }
}

/// Optimizes and relabels each segment, going through absolute actions when
/// the data uses relative ones. `action_kind` is the kind of the source dataset.
pub fn optimize_negatives(
    segments: &[Segment],
    cfg: &OptimizeConfig,
    action_kind: ActionKind,
) -> Vec<OptimizedSegment> {
    segments
        .iter()
        .map(|seg| {
            let absolute = Segment {
                steps: steps_to_absolute(&seg.steps),
                ..seg.clone()
            };
            let retained = greedy_optimize(&absolute, cfg);
            let mut out = relabel(&absolute, &retained);
            if action_kind == ActionKind::Relative {
                out.relabeled_steps = steps_to_relative(&out.relabeled_steps);
            }
            out.original = seg.clone();
            out
        })
        .collect()
}

#[derive(Serialize)]
struct OptimizedRecord<'a> {
    demo_id: &'a str,
    start: usize,
    end: usize,
    action_kind: ActionKind,
    retained: &'a [usize],
    steps: Vec<StepRecord>,
}

/// Writes one JSON line per optimized segment with its retained indices and
/// relabeled steps.
pub fn write_optimized<W: Write>(segs: &[OptimizedSegment], mut w: W) -> std::io::Result<()> {
    for seg in segs {
        let rec = OptimizedRecord {
            demo_id: &seg.original.demo_id,
            start: seg.original.start,
            end: seg.original.end,
            action_kind: seg.original.action_kind(),
            retained: &seg.retained,
            steps: seg.relabeled_steps.iter().map(step_record).collect(),
        };
        w.write_all(&to_canonical_json(&rec)?)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testing::segment_from_positions;
    use crate::data::{absolute_to_relative, Demonstration};
    use proptest::prelude::*;

    const CFG: OptimizeConfig = OptimizeConfig {
        delta_theta: 75.0,
        zero_vec_eps: 1e-9,
    };

    fn detour() -> Vec<[f64; 3]> {
        vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 2.0, 0.0],
            [2.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
        ]
    }

    #[test]
    fn collinear_points_are_all_retained() {
        let pts: Vec<[f64; 3]> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert_eq!(greedy_waypoints(&pts, &CFG), vec![1, 2, 3, 4]);
    }

    #[test]
    fn detour_point_is_discarded() {
        assert_eq!(greedy_waypoints(&detour(), &CFG), vec![1, 2, 4, 5]);
    }

    #[test]
    fn loop_back_uses_step_length_fallback() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        assert_eq!(greedy_waypoints(&pts, &CFG), vec![1, 2, 3]);
    }

    #[test]
    fn coincident_points_terminate() {
        let pts = [[0.5; 3]; 6];
        assert_eq!(greedy_waypoints(&pts, &CFG), vec![1, 6]);
    }

    #[test]
    fn relabel_identity_when_everything_is_retained() {
        let seg = segment_from_positions(&detour());
        let out = relabel(&seg, &[1, 2, 3, 4, 5]);
        assert_eq!(out.relabeled_steps, seg.steps);
    }

    #[test]
    fn relabel_detour_example() {
        assert_eq!(relabel_sources(5, &[1, 2, 4, 5]), vec![1, 3, 3, 4, 5]);
        let seg = segment_from_positions(&detour());
        let out = relabel(&seg, &[1, 2, 4, 5]);
        assert_eq!(out.relabeled_steps.len(), 5);
        // The action at the discarded point targets waypoint 4.
        assert_eq!(out.relabeled_steps[1].act, seg.steps[2].act);
        assert_eq!(out.relabeled_steps[1].act.target_pose.position, [2.0, 0.0, 0.0]);
        for (a, b) in out.relabeled_steps.iter().zip(&seg.steps) {
            assert_eq!(a.obs, b.obs);
        }
    }

    #[test]
    fn relabel_endpoints_only() {
        assert_eq!(relabel_sources(6, &[1, 6]), vec![5, 5, 5, 5, 5, 6]);
    }

    #[test]
    fn negatives_keep_every_timestep() {
        assert!(optimize_negatives(&[], &CFG, ActionKind::Absolute).is_empty());
        let seg = segment_from_positions(&detour());
        let out = optimize_negatives(std::slice::from_ref(&seg), &CFG, ActionKind::Absolute);
        assert_eq!(out[0].retained, vec![1, 2, 4, 5]);
        assert_eq!(out[0].relabeled_steps.len(), seg.len());
        assert!(out[0].retained_length() < out[0].original_length());
    }

    #[test]
    fn relative_segment_round_trips_when_nothing_is_dropped() {
        let pts: Vec<[f64; 3]> = (0..6).map(|i| [0.1 * i as f64, 0.02 * i as f64, 0.3]).collect();
        let abs = segment_from_positions(&pts);
        let demo = Demonstration::new(
            "rel",
            0.05,
            abs.steps.clone(),
            crate::data::SourceQuality::Unknown,
        )
        .unwrap();
        let rel = absolute_to_relative(&demo).slice(1, 6);
        let out = optimize_negatives(std::slice::from_ref(&rel), &CFG, ActionKind::Relative);
        assert_eq!(out[0].retained, vec![1, 2, 3, 4, 5, 6]);
        for (a, b) in out[0].relabeled_steps.iter().zip(&rel.steps) {
            assert_eq!(a.act.kind, ActionKind::Relative);
            for k in 0..3 {
                assert!((a.act.target_pose.position[k] - b.act.target_pose.position[k]).abs() < 1e-9);
            }
            for k in 0..4 {
                assert!(
                    (a.act.target_pose.orientation[k] - b.act.target_pose.orientation[k]).abs()
                        < 1e-9
                );
            }
        }
    }

    fn points() -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 2..30)
    }

    proptest! {
        #[test]
        fn retained_is_an_increasing_subsequence(pts in points(), theta in 1.0f64..179.0) {
            let cfg = OptimizeConfig { delta_theta: theta, ..CFG };
            let r = greedy_waypoints(&pts, &cfg);
            prop_assert_eq!(r[0], 1);
            prop_assert_eq!(*r.last().unwrap(), pts.len());
            prop_assert!(r.windows(2).all(|w| w[0] < w[1]));
            let kept: Vec<[f64; 3]> = r.iter().map(|&i| pts[i - 1]).collect();
            prop_assert!(polyline_length(&kept) <= polyline_length(&pts) + 1e-12);
        }

        #[test]
        fn second_pass_changes_nothing(pts in points()) {
            let r = greedy_waypoints(&pts, &CFG);
            let kept: Vec<[f64; 3]> = r.iter().map(|&i| pts[i - 1]).collect();
            prop_assert_eq!(greedy_waypoints(&kept, &CFG), (1..=kept.len()).collect::<Vec<_>>());
        }

        #[test]
        fn advancing_paths_survive_wide_gate(
            steps in prop::collection::vec((1e-3f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..30)
        ) {
            let mut p = [0.0; 3];
            let mut pts = vec![p];
            for (dx, dy, dz) in steps {
                p = [p[0] + dx, p[1] + dy, p[2] + dz];
                pts.push(p);
            }
            let cfg = OptimizeConfig { delta_theta: 180.0 - 1e-6, ..CFG };
            prop_assert_eq!(greedy_waypoints(&pts, &cfg), (1..=pts.len()).collect::<Vec<_>>());
        }

        #[test]
        fn relabel_covers_every_step(len in 2usize..40, mask in prop::collection::vec(any::<bool>(), 40)) {
            let mut retained: Vec<usize> = (2..len).filter(|&i| mask[i]).collect();
            retained.insert(0, 1);
            retained.push(len);
            let src = relabel_sources(len, &retained);
            prop_assert_eq!(src.len(), len);
            for (i, &s) in src.iter().enumerate() {
                let t = i + 1;
                prop_assert!(s >= t);
                if t < len {
                    prop_assert!(retained.contains(&(s + 1)));
                    prop_assert!((t..s).all(|u| !retained.contains(&(u + 1))));
                }
            }
            let all: Vec<usize> = (1..=len).collect();
            prop_assert_eq!(relabel_sources(len, &all), all);
        }
    }
}
