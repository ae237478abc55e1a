//! Conversion between absolute and relative action frames.
//!
//! A relative action is a delta pose expressed in the current end-effector
//! frame: the translation is rotated by the current orientation and added in
//! the world frame, and the rotation is right-multiplied onto the current one.

use super::{Action, ActionKind, Demonstration, Pose, Step};

fn compose(current: &Pose, delta: &Pose) -> Pose {
    let r = current.rotation();
    let t = current.translation() + r * delta.translation();
    Pose::from_parts(t, r * delta.rotation())
}

fn difference(current: &Pose, target: &Pose) -> Pose {
    let r_inv = current.rotation().inverse();
    let t = r_inv * (target.translation() - current.translation());
    Pose::from_parts(t, r_inv * target.rotation())
}

fn convert(steps: &[Step], to: ActionKind) -> Vec<Step> {
    steps
        .iter()
        .map(|s| {
            if s.act.kind == to {
                return s.clone();
            }
            let target_pose = match to {
                ActionKind::Absolute => compose(&s.obs.ee_pose, &s.act.target_pose),
                ActionKind::Relative => difference(&s.obs.ee_pose, &s.act.target_pose),
            };
            Step {
                obs: s.obs.clone(),
                act: Action {
                    kind: to,
                    target_pose,
                    gripper_cmd: s.act.gripper_cmd,
                },
            }
        })
        .collect()
}

pub(crate) fn steps_to_absolute(steps: &[Step]) -> Vec<Step> {
    convert(steps, ActionKind::Absolute)
}

pub(crate) fn steps_to_relative(steps: &[Step]) -> Vec<Step> {
    convert(steps, ActionKind::Relative)
}

/// Rewrites relative actions as world-frame targets. Absolute demos are returned unchanged.
pub fn relative_to_absolute(demo: &Demonstration) -> Demonstration {
    Demonstration {
        steps: steps_to_absolute(&demo.steps),
        ..demo.clone()
    }
}

/// Inverse of [`relative_to_absolute`]. Relative demos are returned unchanged.
pub fn absolute_to_relative(demo: &Demonstration) -> Demonstration {
    Demonstration {
        steps: steps_to_relative(&demo.steps),
        ..demo.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Observation, SourceQuality};
    use proptest::prelude::*;

    fn one_step_demo(current: Pose, delta: Pose, kind: ActionKind) -> Demonstration {
        let step = Step {
            obs: Observation {
                ee_pose: current,
                gripper: 1.0,
                proprio: None,
            },
            act: Action {
                kind,
                target_pose: delta,
                gripper_cmd: 0.0,
            },
        };
        Demonstration::new("d", 0.1, vec![step.clone(), step], SourceQuality::Unknown).unwrap()
    }

    #[test]
    fn identity_frame_composition() {
        let d = one_step_demo(
            Pose::at([0.0; 3]),
            Pose::at([1.0, 0.0, 0.0]),
            ActionKind::Relative,
        );
        let abs = relative_to_absolute(&d);
        assert_eq!(abs.action_kind(), ActionKind::Absolute);
        assert_eq!(abs.steps[0].act.target_pose.position, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn yawed_frame_rotates_delta() {
        // 90 degrees about z: (w, x, y, z) = (cos 45, 0, 0, sin 45).
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let current = Pose::new([0.0; 3], [h, 0.0, 0.0, h]);
        let d = one_step_demo(current, Pose::at([1.0, 0.0, 0.0]), ActionKind::Relative);
        let abs = relative_to_absolute(&d);
        // Rotation matrix of a 90 degree yaw maps x onto y.
        let oracle = [0.0, 1.0, 0.0];
        let got = abs.steps[0].act.target_pose.position;
        for k in 0..3 {
            assert!((got[k] - oracle[k]).abs() < 1e-9, "{got:?}");
        }
        // Orientation composes by product; the identity delta keeps the yaw.
        let q = abs.steps[0].act.target_pose.orientation;
        for k in 0..4 {
            assert!((q[k] - current.orientation[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn absolute_input_passes_through() {
        let d = one_step_demo(
            Pose::at([0.5; 3]),
            Pose::at([1.0, 0.0, 0.0]),
            ActionKind::Absolute,
        );
        assert_eq!(relative_to_absolute(&d), d);
    }

    fn unit_quat() -> impl Strategy<Value = [f64; 4]> {
        prop::array::uniform4(-1.0f64..1.0).prop_filter_map("non-degenerate", |q| {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            (n > 0.1).then(|| [q[0] / n, q[1] / n, q[2] / n, q[3] / n])
        })
    }

    fn pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-2.0f64..2.0), unit_quat()).prop_map(|(p, q)| Pose::new(p, q))
    }

    proptest! {
        #[test]
        fn conversions_are_inverse(current in pose(), delta in pose()) {
            let rel = one_step_demo(current, delta, ActionKind::Relative);
            let back = absolute_to_relative(&relative_to_absolute(&rel));
            let got = back.steps[0].act.target_pose;
            for k in 0..3 {
                prop_assert!((got.position[k] - delta.position[k]).abs() < 1e-9);
            }
            for k in 0..4 {
                prop_assert!((got.orientation[k] - delta.orientation[k]).abs() < 1e-9);
            }

            let abs = one_step_demo(current, delta, ActionKind::Absolute);
            let back = relative_to_absolute(&absolute_to_relative(&abs));
            let got = back.steps[0].act.target_pose;
            for k in 0..3 {
                prop_assert!((got.position[k] - delta.position[k]).abs() < 1e-9);
            }
            for k in 0..4 {
                prop_assert!((got.orientation[k] - delta.orientation[k]).abs() < 1e-9);
            }
        }
    }
}
