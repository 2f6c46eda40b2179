//! The rain pass: falling drops drawn as chains of small Gaussian splats
//! and impacts drawn as flattened Gaussian splashes, composited front to
//! back into a premultiplied color layer with a per-pixel depth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthImage, RgbImage};
use crate::math::{Mat3, Vec2, Vec3};
use crate::rain::{sphere_volume, Impact, Raindrop};
use crate::scene::Camera;

const NEAR: f64 = 1e-4;
const STREAK_GRAY: f64 = 200.0 / 255.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RainRenderParams {
    /// Sub-splats per streak.
    pub streak_samples: usize,
    /// Exposure window the streak covers, seconds.
    pub exposure: f64,
    /// Sub-splat world radius as a multiple of the drop radius.
    pub streak_width_factor: f64,
    pub streak_opacity: f64,
    /// Bounds of the base-image brightness modulation.
    pub brightness_min: f64,
    pub brightness_max: f64,
    /// Major-to-minor axis ratio of a splash.
    pub splash_aspect: f64,
    /// Seconds a splash stays visible.
    pub splash_lifetime: f64,
    pub splash_opacity: f64,
    /// Accumulated coverage at which a pixel takes the rain depth.
    pub alpha_min: f64,
    /// Screen-space variance added to every splat before compositing, px².
    pub screen_filter: f64,
}

impl Default for RainRenderParams {
    fn default() -> Self {
        Self {
            streak_samples: 5,
            exposure: 0.008,
            streak_width_factor: 3.0,
            streak_opacity: 0.6,
            brightness_min: 0.3,
            brightness_max: 1.5,
            splash_aspect: 3.0,
            splash_lifetime: 0.15,
            splash_opacity: 0.8,
            alpha_min: 0.05,
            screen_filter: 0.25,
        }
    }
}

impl RainRenderParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.streak_samples == 0 {
            return bad("rain_render.streak_samples must be at least 1".into());
        }
        if !(self.exposure >= 0.0) {
            return bad(format!("rain_render.exposure must be >= 0, got {}", self.exposure));
        }
        if !(self.streak_width_factor > 0.0) {
            return bad(format!("rain_render.streak_width_factor must be positive, got {}", self.streak_width_factor));
        }
        for (name, v) in [("streak_opacity", self.streak_opacity), ("splash_opacity", self.splash_opacity)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("rain_render.{name} must be in (0, 1], got {v}"));
            }
        }
        if !(self.brightness_min > 0.0 && self.brightness_min <= self.brightness_max) {
            return bad("rain_render brightness bounds must satisfy 0 < min <= max".into());
        }
        if !(self.splash_aspect >= 1.0) {
            return bad(format!("rain_render.splash_aspect must be >= 1, got {}", self.splash_aspect));
        }
        if !(self.splash_lifetime > 0.0) {
            return bad(format!("rain_render.splash_lifetime must be positive, got {}", self.splash_lifetime));
        }
        if !(0.0..1.0).contains(&self.alpha_min) {
            return bad(format!("rain_render.alpha_min must be in [0, 1), got {}", self.alpha_min));
        }
        if !(self.screen_filter >= 0.0) {
            return bad(format!("rain_render.screen_filter must be >= 0, got {}", self.screen_filter));
        }
        Ok(())
    }
}

/// A screen-space Gaussian primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D {
    /// Continuous pixel coordinates.
    pub center: Vec2,
    /// Symmetric 2×2 covariance `[xx, xy, yy]` in px².
    pub cov: [f64; 3],
    pub depth: f64,
    pub color: Vec3,
    pub opacity: f64,
}

impl Splat2D {
    /// Weight `opacity·exp(−½ δᵀ Σ⁻¹ δ)` at `p` under covariance `cov`, or
    /// zero beyond three standard deviations.
    pub fn weight_with(&self, cov: [f64; 3], p: Vec2) -> f64 {
        weight_inv(self.opacity, inverse(cov), p - self.center)
    }

    pub fn weight(&self, p: Vec2) -> f64 {
        self.weight_with(self.cov, p)
    }
}

/// Inverse of the symmetric 2×2 matrix `(xx, xy, yy)`, in the same layout.
fn inverse(cov: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = cov;
    let det = a * c - b * b;
    [c / det, -b / det, a / det]
}

#[inline]
fn weight_inv(opacity: f64, inv: [f64; 3], d: Vec2) -> f64 {
    let m = inv[0] * d.x * d.x + 2.0 * inv[1] * d.x * d.y + inv[2] * d.y * d.y;
    if m <= 9.0 {
        opacity * (-0.5 * m).exp()
    } else {
        0.0
    }
}

/// An impact still on screen, with the surface normal it landed on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splash {
    pub pos: Vec3,
    pub vel: Vec3,
    pub radius: f64,
    pub normal: Vec3,
    /// Seconds since impact.
    pub age: f64,
}

impl Splash {
    pub fn new(impact: &Impact, normal: Vec3) -> Self {
        Self { pos: impact.pos, vel: impact.vel, radius: impact.radius, normal, age: 0.0 }
    }
}

/// Brightness factor `L/L̄` clamped to the configured bounds; 1 for a black base.
pub fn brightness_factor(l: f64, mean: f64, params: &RainRenderParams) -> f64 {
    if mean > 0.0 {
        (l / mean).clamp(params.brightness_min, params.brightness_max)
    } else {
        1.0
    }
}

fn on_screen(cam: &Camera, s: Vec2, reach: f64) -> bool {
    s.x > -reach && s.y > -reach && s.x < cam.width as f64 + reach && s.y < cam.height as f64 + reach
}

/// Streak sub-splats for every drop in front of the camera. Sub-splats are
/// spread over `−vel·exposure` behind the drop, each with screen standard
/// deviation `radius·width_factor·f/z`.
pub fn splat_streaks(drops: &[Raindrop], cam: &Camera, base: &RgbImage, params: &RainRenderParams) -> Vec<Splat2D> {
    let mean = base.mean_luminance();
    let n = params.streak_samples;
    let mut out = Vec::with_capacity(drops.len() * n);
    for drop in drops {
        let tail = drop.vel * (-params.exposure);
        let r = drop.radius * params.streak_width_factor;
        for k in 0..n {
            let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            let c = cam.to_camera(drop.pos + tail * t);
            if c.z <= NEAR {
                continue;
            }
            let center = cam.project_cam(c);
            let (sx, sy) = (r * cam.fx / c.z, r * cam.fy / c.z);
            if !on_screen(cam, center, 3.0 * sx.max(sy) + 1.0) {
                continue;
            }
            let px = (center.x.max(0.0) as usize).min(cam.width - 1);
            let py = (center.y.max(0.0) as usize).min(cam.height - 1);
            let l = if base.dims() == (cam.width, cam.height) { base.get(px, py).luminance() } else { mean };
            out.push(Splat2D {
                center,
                cov: [sx * sx, 0.0, sy * sy],
                depth: c.z,
                color: Vec3::splat(STREAK_GRAY * brightness_factor(l, mean, params)),
                opacity: params.streak_opacity,
            });
        }
    }
    out
}

/// Unit vector perpendicular to `n`.
fn any_tangent(n: Vec3) -> Vec3 {
    let helper = if n.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    n.cross(helper).normalize()
}

/// World covariance of a splash and its major axis.
///
/// The major axis is the tangential part of the impact velocity. Standard
/// deviations are `(a·s, s, s)` along (major, tangent, normal) with
/// `s = (V/a)^{1/3}`, so the determinant is `V²`. A velocity along the
/// normal gives the isotropic tangential spread `(√a·s, √a·s, s)`.
pub fn splash_covariance(vel: Vec3, normal: Vec3, radius: f64, aspect: f64) -> (Mat3, Vec3) {
    let n = normal.normalize();
    let volume = sphere_volume(radius);
    let s = (volume / aspect).cbrt();
    let tangential = vel - n * vel.dot(n);
    let (e, var_e, var_b) = if tangential.length() > 1e-9 * vel.length().max(f64::MIN_POSITIVE) {
        (tangential.normalize(), aspect * aspect * s * s, s * s)
    } else {
        (any_tangent(n), aspect * s * s, aspect * s * s)
    };
    let b = n.cross(e);
    let axes = Mat3::from_cols(e, b, n);
    let cov = axes * Mat3::diag(Vec3::new(var_e, var_b, s * s)) * axes.transpose();
    (cov, e)
}

/// `J Σ Jᵀ` for the pinhole projection at camera-space point `c`.
pub fn project_covariance(cam: &Camera, c: Vec3, cov_cam: &Mat3) -> [f64; 3] {
    let iz = 1.0 / c.z;
    let j0 = Vec3::new(cam.fx * iz, 0.0, -cam.fx * c.x * iz * iz);
    let j1 = Vec3::new(0.0, cam.fy * iz, -cam.fy * c.y * iz * iz);
    let s0 = *cov_cam * j0;
    let s1 = *cov_cam * j1;
    [j0.dot(s0), j0.dot(s1), j1.dot(s1)]
}

/// Splash splats; opacity falls linearly to zero over the lifetime.
pub fn splat_splashes(splashes: &[Splash], cam: &Camera, params: &RainRenderParams) -> Vec<Splat2D> {
    let rot = cam.world_to_cam.rotation;
    let mut out = Vec::with_capacity(splashes.len());
    for sp in splashes {
        let fade = 1.0 - sp.age / params.splash_lifetime;
        if fade <= 0.0 {
            continue;
        }
        let c = cam.to_camera(sp.pos);
        if c.z <= NEAR {
            continue;
        }
        let (cov_w, _) = splash_covariance(sp.vel, sp.normal, sp.radius, params.splash_aspect);
        let cov_c = rot * cov_w * rot.transpose();
        let cov = project_covariance(cam, c, &cov_c);
        let center = cam.project_cam(c);
        if !on_screen(cam, center, 3.0 * cov[0].max(cov[2]).sqrt() + 1.0) {
            continue;
        }
        out.push(Splat2D {
            center,
            cov,
            depth: c.z,
            color: Vec3::splat(STREAK_GRAY),
            opacity: params.splash_opacity * fade,
        });
    }
    out
}

/// The composited rain layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RainPass {
    /// Premultiplied color.
    pub color: RgbImage,
    pub alpha: DepthImage,
    /// Depth of the contribution at which coverage first exceeded the
    /// threshold; `+inf` elsewhere.
    pub depth: DepthImage,
}

impl RainPass {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            color: RgbImage::filled(width, height, Vec3::ZERO),
            alpha: DepthImage::filled(width, height, 0.0),
            depth: DepthImage::filled(width, height, f64::INFINITY),
        }
    }
}

#[derive(Clone, Copy)]
struct Fragment {
    depth: f64,
    splat: u32,
    alpha: f64,
}

/// Front-to-back composite of all splats. Fragments are gathered per pixel,
/// ordered by depth (then submission order), and blended with `over`.
pub fn composite_rain_pass(splats: &[Splat2D], width: usize, height: usize, params: &RainRenderParams) -> RainPass {
    let mut pass = RainPass::empty(width, height);
    if splats.is_empty() || width == 0 || height == 0 {
        return pass;
    }

    let mut pixels: Vec<u32> = Vec::new();
    let mut frags: Vec<Fragment> = Vec::new();
    for (idx, s) in splats.iter().enumerate() {
        let cov = [s.cov[0] + params.screen_filter, s.cov[1], s.cov[2] + params.screen_filter];
        if !(cov[0] * cov[2] - cov[1] * cov[1] > 0.0) {
            continue;
        }
        let (hx, hy) = (3.0 * cov[0].sqrt(), 3.0 * cov[2].sqrt());
        let x0 = (s.center.x - hx - 0.5).ceil().max(0.0);
        let x1 = (s.center.x + hx - 0.5).floor().min(width as f64 - 1.0);
        let y0 = (s.center.y - hy - 0.5).ceil().max(0.0);
        let y1 = (s.center.y + hy - 0.5).floor().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let inv = inverse(cov);
        for y in y0 as usize..y1 as usize + 1 {
            for x in x0 as usize..x1 as usize + 1 {
                let a = weight_inv(s.opacity, inv, Vec2::new(x as f64 + 0.5, y as f64 + 0.5) - s.center);
                if a > 0.0 {
                    pixels.push((y * width + x) as u32);
                    frags.push(Fragment { depth: s.depth, splat: idx as u32, alpha: a.min(1.0) });
                }
            }
        }
    }

    // Counting sort by pixel, then depth order within each pixel.
    let n = width * height;
    let mut start = vec![0u32; n + 1];
    for &p in &pixels {
        start[p as usize + 1] += 1;
    }
    for k in 0..n {
        start[k + 1] += start[k];
    }
    let mut fill = start.clone();
    let mut sorted = vec![Fragment { depth: 0.0, splat: 0, alpha: 0.0 }; frags.len()];
    for (p, f) in pixels.iter().zip(&frags) {
        let slot = &mut fill[*p as usize];
        sorted[*slot as usize] = *f;
        *slot += 1;
    }

    let color = pass.color.data_mut();
    for k in 0..n {
        let list = &mut sorted[start[k] as usize..start[k + 1] as usize];
        if list.is_empty() {
            continue;
        }
        list.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.splat.cmp(&b.splat)));
        let mut c = Vec3::ZERO;
        let mut acc = 0.0;
        let mut d = f64::INFINITY;
        for f in list.iter() {
            let t = (1.0 - acc) * f.alpha;
            c += splats[f.splat as usize].color * t;
            acc += t;
            if d.is_infinite() && acc > params.alpha_min {
                d = f.depth;
            }
        }
        color[k] = c;
        pass.alpha.data_mut()[k] = acc;
        pass.depth.data_mut()[k] = d;
    }
    pass
}
