#![allow(dead_code)]

use rainsim_core::math::Vec3;
use rainsim_core::scene::{AuxView, EnvironmentMap};

/// Reflection by marching the world-space ray in fixed 1 mm steps and
/// testing each sample against the view's depth buffer.
pub fn brute_force_reflection(view: &AuxView, env: &EnvironmentMap, start: Vec3, r: Vec3, eps: f64) -> Vec3 {
    brute_force_hit(view, start, r, eps).unwrap_or_else(|| env.sample(r))
}

/// The view color the 1 mm march hits, or `None` once the ray leaves the
/// screen or passes behind the camera.
pub fn brute_force_hit(view: &AuxView, start: Vec3, r: Vec3, eps: f64) -> Option<Vec3> {
    let cam = &view.camera;
    let step = 1e-3;
    for k in 1..=50_000 {
        let q = start + r * (k as f64 * step);
        let c = cam.to_camera(q);
        if c.z <= 0.0 {
            break;
        }
        let u = cam.fx * c.x / c.z + cam.cx;
        let v = cam.fy * c.y / c.z + cam.cy;
        if u < 0.0 || v < 0.0 || u >= cam.width as f64 || v >= cam.height as f64 {
            break;
        }
        let (px, py) = (u as usize, v as usize);
        let d = view.depth.get(px, py);
        if d <= c.z && c.z < d + eps {
            return Some(view.rgb.get(px, py));
        }
    }
    None
}
