//! Flat-shaded rasterizer for arena observations.
//!
//! Every pixel is classified against the scene geometry at its center, so
//! renders are pure functions of the environment state. No anti-aliasing,
//! no lighting, no external assets.

use super::{EnvConfig, EnvState, TargetKind};
use std::io::Write;
use std::path::Path;

/// World-space view rectangle, square so pixels stay square.
const VIEW_X_MIN: f64 = -0.05;
const VIEW_X_MAX: f64 = 0.45;
const VIEW_Y_MIN: f64 = -0.25;
const VIEW_Y_MAX: f64 = 0.25;

const BACKGROUND: [f64; 3] = [0.35, 0.35, 0.35];
/// Half-width of the rectangles the links are drawn as, meters.
const LINK_HALF_WIDTH: f64 = 0.012;

/// Renders the full scene (target plus arm) as a flat RGB raster in
/// row-major order with values in [0, 1].
pub fn render(config: &EnvConfig, state: &EnvState) -> Vec<f64> {
    render_scene(config, state, true)
}

pub(crate) fn render_scene(config: &EnvConfig, state: &EnvState, with_target: bool) -> Vec<f64> {
    let size = config.image_size;
    let sx = (VIEW_X_MAX - VIEW_X_MIN) / size as f64;
    let sy = (VIEW_Y_MAX - VIEW_Y_MIN) / size as f64;
    let joints = joint_positions(config, state);
    let mut image = Vec::with_capacity(size * size * 3);
    for py in 0..size {
        // Image rows run top-down; world y runs bottom-up.
        let wy = VIEW_Y_MAX - (py as f64 + 0.5) * sy;
        for px in 0..size {
            let wx = VIEW_X_MIN + (px as f64 + 0.5) * sx;
            let mut color = BACKGROUND;
            if with_target && inside_target(state, wx, wy) {
                color = state.target.color;
            }
            if on_arm(&joints, wx, wy) {
                color = config.arm_color;
            }
            image.extend_from_slice(&color);
        }
    }
    image
}

fn joint_positions(config: &EnvConfig, state: &EnvState) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(config.n_links + 1);
    let mut pos = (0.0, 0.0);
    let mut heading = 0.0;
    out.push(pos);
    for (i, &len) in config.link_lengths.iter().enumerate() {
        heading += state.joint_angles[i];
        pos = (pos.0 + len * heading.cos(), pos.1 + len * heading.sin());
        out.push(pos);
    }
    out
}

fn on_arm(joints: &[(f64, f64)], x: f64, y: f64) -> bool {
    joints
        .windows(2)
        .any(|seg| dist_to_segment(x, y, seg[0], seg[1]) <= LINK_HALF_WIDTH)
}

fn dist_to_segment(x: f64, y: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((x - a.0) * dx + (y - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()
}

/// Shape test for the realized target. The grasp point itself is not
/// drawn; the agent has to infer it from the object silhouette.
fn inside_target(state: &EnvState, x: f64, y: f64) -> bool {
    let (tx, ty) = state.target.position;
    let (dx, dy) = (x - tx, y - ty);
    match state.target.spec.kind {
        TargetKind::Mug => {
            let body = dx * dx + dy * dy <= 0.030f64.powi(2);
            let (hx, hy) = (dx - 0.030, dy);
            let handle = hx * hx + hy * hy <= 0.011f64.powi(2);
            body || handle
        }
        TargetKind::Bottle => {
            let body = dx.abs() <= 0.014 && dy.abs() <= 0.034;
            let cap = dx.abs() <= 0.007 && (0.034..=0.046).contains(&dy);
            body || cap
        }
        TargetKind::CerealBox => dx.abs() <= 0.040 && dy.abs() <= 0.026,
    }
}

/// Writes the raster as a binary PPM (P6) file.
pub fn write_ppm(path: &Path, image: &[f64], size: usize) -> std::io::Result<()> {
    assert_eq!(image.len(), size * size * 3, "image length vs size");
    let mut buf = Vec::with_capacity(image.len() + 32);
    write!(buf, "P6\n{size} {size}\n255\n")?;
    buf.extend(
        image
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    std::fs::write(path, buf)
}
