//! Trajectory rasterization and expert-segment augmentation.

mod augment;
mod camera;
mod raster;

pub use augment::{
    augment_expert, augment_with_endings, canonical_view, sample_view, AugmentConfig, Augmented,
    RasterPair,
};
pub use camera::{project, Camera, CameraRig, View};
pub use raster::{render_points, render_segment, TrajRaster};

/// Mean of the points; the origin for an empty slice.
pub fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    if points.is_empty() {
        return [0.0; 3];
    }
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.map(|v| v / n)
}
