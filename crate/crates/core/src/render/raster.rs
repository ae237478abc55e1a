use std::sync::Arc;

use super::camera::{project_with_depth, Camera};
use crate::data::Segment;

/// Grayscale raster with values in `[0, 1]`, stored row-major (`v` rows, `u` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajRaster {
    pub width: usize,
    pub height: usize,
    pixels: Arc<[f32]>,
    pub camera: Option<Camera>,
}

impl TrajRaster {
    pub fn blank(width: usize, height: usize) -> Self {
        TrajRaster {
            width,
            height,
            pixels: vec![0.0; width * height].into(),
            camera: None,
        }
    }

    /// Wraps existing pixel data; values are clamped into `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, mut pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size");
        for p in &mut pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
        TrajRaster {
            width,
            height,
            pixels: pixels.into(),
            camera: None,
        }
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// Pixel at column `u`, row `v`.
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.pixels[v * self.width + u]
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0.0)
    }
}

/// Draws one segment between projected endpoints `(u, v, depth)`. Intensity
/// is interpolated perspective-correctly so it follows the 3D arc.
fn stroke(buf: &mut [f32], cam: &Camera, a: (f64, f64, f64), b: (f64, f64, f64), ia: f64, ib: f64) {
    let (w, h) = (cam.width as f64, cam.height as f64);
    if ![a.0, a.1, b.0, b.1].iter().all(|v| v.is_finite()) {
        return;
    }
    let lo_u = (a.0.min(b.0) - 1.0).floor().max(0.0);
    let hi_u = (a.0.max(b.0) + 1.0).ceil().min(w - 1.0);
    let lo_v = (a.1.min(b.1) - 1.0).floor().max(0.0);
    let hi_v = (a.1.max(b.1) + 1.0).ceil().min(h - 1.0);
    if lo_u > hi_u || lo_v > hi_v {
        return;
    }
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for v in lo_v as usize..=hi_v as usize {
        for u in lo_u as usize..=hi_u as usize {
            let (px, py) = (u as f64, v as f64);
            let lambda = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let (qx, qy) = (a.0 + lambda * dx, a.1 + lambda * dy);
            let d = ((px - qx).powi(2) + (py - qy).powi(2)).sqrt();
            let coverage = 1.0 - d;
            if coverage <= 0.0 {
                continue;
            }
            let along = lambda / b.2 / ((1.0 - lambda) / a.2 + lambda / b.2);
            let value = (coverage * (ia + along * (ib - ia))) as f32;
            let cell = &mut buf[v * cam.width + u];
            if value > *cell {
                *cell = value;
            }
        }
    }
}

/// Draws the polyline through `points` with 1-px anti-aliased strokes.
///
/// Intensity grows linearly with the timestep index from 0.2 at the first
/// point to 1.0 at the last, so both direction and timing are visible;
/// overlapping strokes keep the brighter value. Strokes touching a point
/// behind the camera are dropped.
pub fn render_points(points: &[[f64; 3]], cam: &Camera) -> TrajRaster {
    let mut buf = vec![0.0f32; cam.width * cam.height];
    let last = points.len().saturating_sub(1);
    let intensity = |i: usize| {
        if last > 0 {
            0.2 + 0.8 * i as f64 / last as f64
        } else {
            1.0
        }
    };
    let projected: Vec<_> = points.iter().map(|&p| project_with_depth(p, cam)).collect();
    if projected.len() == 1 {
        if let Some(a) = projected[0] {
            stroke(&mut buf, cam, a, a, 1.0, 1.0);
        }
    }
    for i in 1..projected.len() {
        if let (Some(a), Some(b)) = (projected[i - 1], projected[i]) {
            stroke(&mut buf, cam, a, b, intensity(i - 1), intensity(i));
        }
    }
    TrajRaster {
        width: cam.width,
        height: cam.height,
        pixels: buf.into(),
        camera: Some(*cam),
    }
}

pub fn render_segment(seg: &Segment, cam: &Camera) -> TrajRaster {
    render_points(&seg.positions(), cam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testing::segment_from_positions;
    use crate::render::{CameraRig, View};
    use proptest::prelude::*;

    fn top_down() -> Camera {
        Camera {
            position: [0.0, 0.0, 1.0],
            look_at: [0.0; 3],
            up: [0.0, 1.0, 0.0],
            focal: 64.0,
            width: 64,
            height: 64,
        }
    }

    #[test]
    fn stationary_point_is_a_bright_blob() {
        let seg = segment_from_positions(&[[0.0; 3]; 4]);
        let r = render_segment(&seg, &top_down());
        assert_eq!(r.get(32, 32), 1.0);
        let lit = r.pixels().iter().filter(|&&p| p > 0.0).count();
        assert!(lit <= 9, "{lit}");
    }

    #[test]
    fn straight_line_ramps_monotonically() {
        let seg = segment_from_positions(&[[-0.4, 0.0, 0.0], [0.4, 0.0, 0.0]]);
        let r = render_segment(&seg, &top_down());
        // The line runs along row 32 from u = 6.4 to u = 57.6.
        let samples: Vec<f32> = (0..10).map(|i| r.get(8 + 5 * i, 32)).collect();
        assert!(samples.windows(2).all(|w| w[0] <= w[1]), "{samples:?}");
        assert!(samples[0] > 0.15 && samples[9] > 0.9, "{samples:?}");
    }

    #[test]
    fn rendering_is_deterministic() {
        let seg = segment_from_positions(&[[0.0; 3], [0.1, 0.2, 0.0], [0.3, -0.1, 0.05]]);
        assert_eq!(render_segment(&seg, &top_down()), render_segment(&seg, &top_down()));
    }

    #[test]
    fn strokes_behind_the_camera_are_clipped() {
        let seg = segment_from_positions(&[[0.0; 3], [0.0, 0.0, 2.0]]);
        assert!(render_segment(&seg, &top_down()).is_blank());
    }

    fn polyline() -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(prop::array::uniform3(-0.2f64..0.2), 2..12)
    }

    proptest! {
        #[test]
        fn pixels_stay_in_unit_range(pts in polyline(), dir in prop::array::uniform3(-1.0f64..1.0)) {
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            prop_assume!(n > 0.1);
            let view = View { direction: dir.map(|v| v / n), radius: 0.3 };
            let r = render_points(&pts, &view.camera_for(&pts, &CameraRig::default()));
            prop_assert!(r.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        }

        #[test]
        fn resampling_preserves_the_raster(pts in polyline()) {
            let view = View { direction: [0.3, -0.5, 0.81], radius: 0.9 };
            let cam = view.camera_for(&pts, &CameraRig::default());
            let mut dense = Vec::new();
            for w in pts.windows(2) {
                dense.push(w[0]);
                dense.push([0.0, 1.0, 2.0].map(|k: f64| {
                    let k = k as usize;
                    0.5 * (w[0][k] + w[1][k])
                }));
            }
            dense.push(*pts.last().unwrap());
            let a = render_points(&pts, &cam);
            let b = render_points(&dense, &cam);
            for (x, y) in a.pixels().iter().zip(b.pixels()) {
                prop_assert!((x - y).abs() < 0.05, "{} vs {}", x, y);
            }
        }
    }
}
