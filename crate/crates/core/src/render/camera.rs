use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::centroid;
use crate::error::{Error, Result};

/// Pinhole camera; the camera frame is right-handed and looks along `-z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Focal length in pixels.
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let view = Vector3::from(self.look_at) - Vector3::from(self.position);
        if view.norm() == 0.0 {
            return Err(Error::Config("camera look_at coincides with position".into()));
        }
        if view.cross(&Vector3::from(self.up)).norm() <= 1e-12 * view.norm() {
            return Err(Error::Config("camera up is parallel to the view direction".into()));
        }
        if !(self.focal > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera needs focal > 0 and a non-empty image".into()));
        }
        Ok(())
    }

    /// Image center `(cx, cy)`.
    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// World-to-camera basis: rows are the camera x, y and z axes.
    fn basis(&self) -> [Vector3<f64>; 3] {
        let forward = (Vector3::from(self.look_at) - Vector3::from(self.position)).normalize();
        let right = forward.cross(&Vector3::from(self.up)).normalize();
        let up = right.cross(&forward);
        [right, up, -forward]
    }
}

/// Projects a world point to pixel coordinates; `None` when it is not in front of the camera.
pub fn project(p: [f64; 3], cam: &Camera) -> Option<(f64, f64)> {
    project_with_depth(p, cam).map(|(u, v, _)| (u, v))
}

/// Like [`project`], also returning the depth along the viewing axis.
pub(crate) fn project_with_depth(p: [f64; 3], cam: &Camera) -> Option<(f64, f64, f64)> {
    let [bx, by, bz] = cam.basis();
    let rel = Vector3::from(p) - Vector3::from(cam.position);
    let (x, y, z) = (bx.dot(&rel), by.dot(&rel), bz.dot(&rel));
    let depth = -z;
    if depth <= 0.0 {
        return None;
    }
    let (cx, cy) = cam.center();
    Some((cx + cam.focal * x / depth, cy + cam.focal * y / depth, depth))
}

/// Image size and focal length shared by every rendering camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig {
            width: 64,
            height: 64,
            focal: 80.0,
        }
    }
}

/// Viewpoint on a sphere around a trajectory: unit direction and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub direction: [f64; 3],
    pub radius: f64,
}

impl View {
    /// Camera at `center + radius * direction` looking at `center`.
    pub fn camera_at(&self, center: [f64; 3], rig: &CameraRig) -> Camera {
        let d = self.direction;
        let position = [
            center[0] + self.radius * d[0],
            center[1] + self.radius * d[1],
            center[2] + self.radius * d[2],
        ];
        let up = if d[2].abs() > 0.99 {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        Camera {
            position,
            look_at: center,
            up,
            focal: rig.focal,
            width: rig.width,
            height: rig.height,
        }
    }

    /// Camera framing the centroid of `points`.
    pub fn camera_for(&self, points: &[[f64; 3]], rig: &CameraRig) -> Camera {
        self.camera_at(centroid(points), rig)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera {
            position: [0.0, 0.0, 2.0],
            look_at: [0.0; 3],
            up: [0.0, 1.0, 0.0],
            focal: 100.0,
            width: 64,
            height: 64,
        }
    }

    #[test]
    fn optical_axis_hits_image_center() {
        let c = Camera {
            position: [0.0, 0.0, 1.0],
            ..cam()
        };
        assert_eq!(project([0.0, 0.0, 0.0], &c), Some((32.0, 32.0)));
    }

    #[test]
    fn hand_computed_pinhole() {
        // u = 32 + 100 * 0.5 / 2 = 57.
        let (u, v) = project([0.5, 0.0, 0.0], &cam()).unwrap();
        assert!((u - 57.0).abs() < 0.5 && (v - 32.0).abs() < 0.5, "{u} {v}");
    }

    #[test]
    fn points_behind_are_out_of_frame() {
        assert_eq!(project([0.0, 0.0, 3.0], &cam()), None);
        assert_eq!(project([0.3, 0.0, 2.0], &cam()), None);
    }

    #[test]
    fn camera_validation() {
        assert!(cam().validate().is_ok());
        let bad = Camera {
            up: [0.0, 0.0, 1.0],
            ..cam()
        };
        assert!(bad.validate().is_err());
        let bad = Camera {
            look_at: [0.0, 0.0, 2.0],
            ..cam()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn views_look_at_their_center() {
        let v = View {
            direction: [0.0, 0.0, 1.0],
            radius: 0.8,
        };
        let c = v.camera_at([0.1, 0.2, 0.3], &CameraRig::default());
        assert!(c.validate().is_ok());
        let (u, w) = project([0.1, 0.2, 0.3], &c).unwrap();
        assert!((u - 32.0).abs() < 1e-9 && (w - 32.0).abs() < 1e-9);
    }
}
