//! Water-surface shading: screen-space reflection, sun highlight,
//! image-space refraction, Fresnel mixing, and the final depth-ordered blend
//! with the rain pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthImage, Image, RgbImage};
use crate::math::{Vec2, Vec3};
use crate::rain_render::RainPass;
use crate::scene::{AuxView, EnvironmentMap, Sun};
use crate::water_view::WaterGBuffer;

/// Which angle feeds the Fresnel term of the water mix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FresnelMode {
    /// `h·v` with `h` the sun/view half vector.
    HalfVector,
    /// `n·v`, the usual environment-reflection form.
    #[default]
    NormalView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Base reflectivity of water.
    pub f0: f64,
    /// Blinn-Phong exponent.
    pub shininess: f64,
    /// Surface thickness for the reflection hit test, camera-space meters.
    pub eps_ssr: f64,
    pub ssr_max_steps: usize,
    /// Refraction offset in pixels per meter of water depth.
    pub kappa: f64,
    /// Triangles whose vertices all hold less water than this are not drawn.
    pub h_render_min: f64,
    pub fresnel_mode: FresnelMode,
    /// Replaces the computed Fresnel factor when set.
    pub fresnel_override: Option<f64>,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            f0: 0.02,
            shininess: 64.0,
            eps_ssr: 3e-2,
            ssr_max_steps: 256,
            kappa: 40.0,
            h_render_min: 1e-4,
            fresnel_mode: FresnelMode::NormalView,
            fresnel_override: None,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.f0) {
            return Err(Error::Config(format!("render.f0 must be in [0, 1), got {}", self.f0)));
        }
        if !(self.shininess > 0.0) {
            return Err(Error::Config(format!("render.shininess must be positive, got {}", self.shininess)));
        }
        if !(self.eps_ssr > 0.0) {
            return Err(Error::Config(format!("render.eps_ssr must be positive, got {}", self.eps_ssr)));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Config(format!("render.kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.h_render_min >= 0.0) {
            return Err(Error::Config(format!("render.h_render_min must be >= 0, got {}", self.h_render_min)));
        }
        if let Some(f) = self.fresnel_override {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("render.fresnel_override must be in [0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

/// Mirror `v` (pointing away from the surface) about `n`: `2(n·v)n − v`.
#[inline]
pub fn reflect_dir(n: Vec3, v: Vec3) -> Vec3 {
    n * (2.0 * n.dot(v)) - v
}

/// Schlick's approximation `F0 + (1−F0)(1−x)^5`, `x` clamped to `[0, 1]`.
#[inline]
pub fn fresnel_schlick(cos: f64, f0: f64) -> f64 {
    let m = 1.0 - cos.clamp(0.0, 1.0);
    let m2 = m * m;
    f0 + (1.0 - f0) * (m2 * m2 * m)
}

/// Blinn-Phong highlight `max(0, n·h)^p` with `h = normalize(l + v)`.
#[inline]
pub fn highlight(n: Vec3, l: Vec3, v: Vec3, p: f64) -> f64 {
    let sum = l + v;
    if sum.length_squared() == 0.0 {
        return 0.0;
    }
    let h = sum.normalize();
    n.dot(h).max(0.0).powf(p)
}

/// Outcome of the reflection collision predicate at one march step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsrTest {
    Hit,
    /// The ray is still in front of the stored surface.
    InFront,
    /// The ray passed behind the surface by more than its thickness.
    Behind,
}

/// `D ≤ Z < D + ε` collision test against the stored depth `d`.
#[inline]
pub fn ssr_collision(d: f64, z: f64, eps: f64) -> SsrTest {
    if z < d {
        SsrTest::InFront
    } else if z < d + eps {
        SsrTest::Hit
    } else {
        SsrTest::Behind
    }
}

/// Reflected color for the water pixel `(x, y)`.
pub fn ssr_trace(
    x: usize,
    y: usize,
    gbuf: &WaterGBuffer,
    view: &AuxView,
    env: &EnvironmentMap,
    params: &RenderParams,
) -> Vec3 {
    let cam = &view.camera;
    let p_cam = cam.unproject_cam(x as f64 + 0.5, y as f64 + 0.5, gbuf.depth.get(x, y));
    let p_world = cam.to_world(p_cam);
    let v = (cam.position() - p_world).normalize();
    let r = reflect_dir(gbuf.normal.get(x, y), v);
    trace_reflection(view, env, p_cam, r, params)
}

/// March the world-space direction `r` from the camera-space point `start`
/// across the view's depth buffer, one pixel per step along the major axis,
/// with the ray depth interpolated linearly in `1/z`. Falls back to the
/// environment when the ray leaves the screen, heads toward the camera
/// plane, or runs out of steps.
pub fn trace_reflection(view: &AuxView, env: &EnvironmentMap, start: Vec3, r: Vec3, params: &RenderParams) -> Vec3 {
    march(view, env, start, r, params, None)
}

/// Same result as [`trace_reflection`], skipping stretches of the march
/// that `tiles` proves cannot hit.
pub fn trace_reflection_tiled(
    view: &AuxView,
    env: &EnvironmentMap,
    start: Vec3,
    r: Vec3,
    params: &RenderParams,
    tiles: &DepthTiles,
) -> Vec3 {
    march(view, env, start, r, params, Some(tiles))
}

/// Tile edge lengths, finest first. A march chunk covers as many steps as
/// its tile is wide, so one chunk touches at most 2×2 tiles.
const TILE_SIZES: [usize; 2] = [8, 32];

#[derive(Clone, Debug)]
struct TileLevel {
    size: usize,
    cols: usize,
    /// `(min, max)` finite depth per tile; `(inf, -inf)` when none.
    bounds: Vec<(f64, f64)>,
}

impl TileLevel {
    /// True when no pixel in the pixel box `[x0, x1] × [y0, y1]` can satisfy
    /// the hit test for any ray depth in `[z_lo, z_hi]`.
    fn excludes(&self, (x0, x1): (usize, usize), (y0, y1): (usize, usize), z_lo: f64, z_hi: f64, eps: f64) -> bool {
        let rows = self.bounds.len() / self.cols;
        for ty in y0 / self.size..(y1 / self.size + 1).min(rows) {
            for tx in x0 / self.size..(x1 / self.size + 1).min(self.cols) {
                let (lo, hi) = self.bounds[ty * self.cols + tx];
                if z_hi >= lo && z_lo < hi + eps {
                    return false;
                }
            }
        }
        true
    }
}

/// Per-tile bounds of the finite depths of a view, for skipping empty
/// stretches of a reflection march.
#[derive(Clone, Debug)]
pub struct DepthTiles {
    levels: Vec<TileLevel>,
}

impl DepthTiles {
    pub fn new(depth: &DepthImage) -> Self {
        let (w, h) = depth.dims();
        let levels = TILE_SIZES
            .iter()
            .map(|&size| {
                let cols = w.div_ceil(size);
                let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); cols * h.div_ceil(size)];
                for y in 0..h {
                    for x in 0..w {
                        let d = depth.get(x, y);
                        if d.is_finite() {
                            let b = &mut bounds[(y / size) * cols + x / size];
                            b.0 = b.0.min(d);
                            b.1 = b.1.max(d);
                        }
                    }
                }
                TileLevel { size, cols, bounds }
            })
            .collect();
        Self { levels }
    }
}

fn march(
    view: &AuxView,
    env: &EnvironmentMap,
    start: Vec3,
    r: Vec3,
    params: &RenderParams,
    tiles: Option<&DepthTiles>,
) -> Vec3 {
    let cam = &view.camera;
    let fallback = || env.sample(r);
    let r_cam = cam.world_to_cam.rotation * r;
    if r_cam.z <= 0.0 {
        return fallback();
    }
    let end = start + r_cam * start.z;
    let s0 = cam.project_cam(start);
    let s1 = cam.project_cam(end);
    let delta = s1 - s0;
    let major = delta.x.abs().max(delta.y.abs());
    if major < 1e-9 {
        return fallback();
    }
    let step = delta * (1.0 / major);
    let inv0 = 1.0 / start.z;
    let dinv = (1.0 / end.z - inv0) / major;
    let (w, h) = (cam.width as f64, cam.height as f64);
    let at = |k: usize| {
        let kf = k as f64;
        (Vec2::new(s0.x + step.x * kf, s0.y + step.y * kf), inv0 + dinv * kf)
    };
    // Steps `k0..=k1` cannot hit according to `level`.
    let skippable = |level: &TileLevel, k0: usize, k1: usize| {
        let ((a, ia), (b, ib)) = (at(k0), at(k1));
        if !(ia > 0.0 && ib > 0.0) {
            return false;
        }
        if a.x.min(b.x) >= w || a.y.min(b.y) >= h || a.x.max(b.x) < 0.0 || a.y.max(b.y) < 0.0 {
            return true;
        }
        // Truncation is floor here: both ends are clamped to >= 0.
        let span = |p: f64, q: f64, size: f64| (p.min(q).max(0.0) as usize, p.max(q).min(size - 1.0) as usize);
        level.excludes(span(a.x, b.x, w), span(a.y, b.y, h), 1.0 / ia.max(ib), 1.0 / ia.min(ib), params.eps_ssr)
    };
    let max_steps = params.ssr_max_steps;
    let mut k = 1;
    'outer: while k <= max_steps {
        let mut k_stop = k;
        if let Some(t) = tiles {
            for level in t.levels.iter().rev() {
                let k_end = (k + level.size - 1).min(max_steps);
                if skippable(level, k, k_end) {
                    k = k_end + 1;
                    continue 'outer;
                }
            }
            k_stop = (k + t.levels[0].size - 1).min(max_steps);
        }
        while k <= k_stop {
            let (s, inv) = at(k);
            if s.x < 0.0 || s.y < 0.0 || s.x >= w || s.y >= h {
                return fallback();
            }
            if inv <= 0.0 {
                return fallback();
            }
            let z = 1.0 / inv;
            let (px, py) = (s.x as usize, s.y as usize);
            if ssr_collision(view.depth.get(px, py), z, params.eps_ssr) == SsrTest::Hit {
                return view.rgb.get(px, py);
            }
            k += 1;
        }
    }
    fallback()
}

/// Screen-space refraction offset direction: the horizontal part of the
/// world normal expressed in camera axes. Flat water gives `(0, 0)`.
#[inline]
pub fn screen_normal(view: &AuxView, n: Vec3) -> Vec2 {
    let c = view.camera.world_to_cam.rotation * Vec3::new(n.x, n.y, 0.0);
    Vec2::new(c.x, c.y)
}

/// `I_src` sampled at `(u + n_u·k, v + n_v·k)` for the pixel `(x, y)`.
#[inline]
pub fn refract_sample(src: &RgbImage, x: usize, y: usize, n_screen: Vec2, k: f64) -> Vec3 {
    src.sample_bilinear(x as f64 + 0.5 + n_screen.x * k, y as f64 + 0.5 + n_screen.y * k)
}

/// Image-space refraction with offsets `kappa·thickness` pixels along the
/// screen normal; pixels without water copy `src`.
pub fn refract_warp(src: &RgbImage, n_screen: &Image<Vec2>, thickness: &DepthImage, kappa: f64) -> RgbImage {
    RgbImage::from_fn(src.width(), src.height(), |x, y| {
        let t = thickness.get(x, y);
        if t > 0.0 {
            refract_sample(src, x, y, n_screen.get(x, y), kappa * t)
        } else {
            src.get(x, y)
        }
    })
}

/// `(1−F)·I_refra + F·(I_spec + I_highl)`.
#[inline]
pub fn mix_water(f: f64, refra: Vec3, spec: Vec3, highl: Vec3) -> Vec3 {
    refra * (1.0 - f) + (spec + highl) * f
}

/// Per-pixel terms of the water pass, for inspection and tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaterTerms {
    pub fresnel: f64,
    pub spec: Vec3,
    pub highl: Vec3,
    pub refra: Vec3,
}

#[allow(clippy::too_many_arguments)]
pub fn water_terms(
    x: usize,
    y: usize,
    src: &RgbImage,
    gbuf: &WaterGBuffer,
    view: &AuxView,
    env: &EnvironmentMap,
    sun: &Sun,
    params: &RenderParams,
) -> WaterTerms {
    terms(x, y, src, gbuf, view, env, sun, params, None)
}

#[allow(clippy::too_many_arguments)]
fn terms(
    x: usize,
    y: usize,
    src: &RgbImage,
    gbuf: &WaterGBuffer,
    view: &AuxView,
    env: &EnvironmentMap,
    sun: &Sun,
    params: &RenderParams,
    tiles: Option<&DepthTiles>,
) -> WaterTerms {
    let cam = &view.camera;
    let p_cam = cam.unproject_cam(x as f64 + 0.5, y as f64 + 0.5, gbuf.depth.get(x, y));
    let p_world = cam.to_world(p_cam);
    let v = (cam.position() - p_world).normalize();
    let n = gbuf.normal.get(x, y);
    let spec = march(view, env, p_cam, reflect_dir(n, v), params, tiles);
    let highl = sun.color * highlight(n, sun.dir, v, params.shininess);
    let refra = refract_sample(src, x, y, screen_normal(view, n), params.kappa * gbuf.thickness.get(x, y));
    let fresnel = params.fresnel_override.unwrap_or_else(|| match params.fresnel_mode {
        FresnelMode::NormalView => fresnel_schlick(n.dot(v), params.f0),
        FresnelMode::HalfVector => {
            let hv = (sun.dir + v).normalize();
            fresnel_schlick(hv.dot(v), params.f0)
        }
    });
    WaterTerms { fresnel, spec, highl, refra }
}

/// Water pass `I0` with its depth `d0`. Pixels without water pass `src`
/// through and take the scene depth.
pub fn compose_water_pass(
    src: &RgbImage,
    gbuf: &WaterGBuffer,
    view: &AuxView,
    env: &EnvironmentMap,
    sun: &Sun,
    params: &RenderParams,
) -> (RgbImage, DepthImage) {
    compose_water_pass_tiled(src, gbuf, view, env, sun, params, &DepthTiles::new(&view.depth))
}

/// [`compose_water_pass`] with precomputed reflection tiles for `view`.
pub fn compose_water_pass_tiled(
    src: &RgbImage,
    gbuf: &WaterGBuffer,
    view: &AuxView,
    env: &EnvironmentMap,
    sun: &Sun,
    params: &RenderParams,
    tiles: &DepthTiles,
) -> (RgbImage, DepthImage) {
    let (w, h) = src.dims();
    let mut color = src.clone();
    let mut depth = view.depth.clone();
    color.data_mut().par_chunks_mut(w).zip(depth.data_mut().par_chunks_mut(w)).enumerate().for_each(
        |(y, (crow, drow))| {
            for x in 0..w {
                if !gbuf.has_water(x, y) {
                    continue;
                }
                let t = terms(x, y, src, gbuf, view, env, sun, params, Some(tiles));
                crow[x] = mix_water(t.fresnel, t.refra, t.spec, t.highl);
                drow[x] = gbuf.depth.get(x, y);
            }
        },
    );
    debug_assert_eq!(depth.dims(), (w, h));
    (color, depth)
}

/// Depth-ordered blend: the rain pass wins where `d1 < d0` and is
/// composited over `I0` with its coverage; everywhere else `I0` is kept.
pub fn blend_passes(i0: &RgbImage, d0: &DepthImage, rain: &RainPass) -> RgbImage {
    RgbImage::from_fn(i0.width(), i0.height(), |x, y| {
        if rain.depth.get(x, y) < d0.get(x, y) {
            rain.color.get(x, y) + i0.get(x, y) * (1.0 - rain.alpha.get(x, y))
        } else {
            i0.get(x, y)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_cases() {
        let n = Vec3::Z;
        assert_eq!(reflect_dir(n, n), n);
        let r = reflect_dir(n, Vec3::new(0.6, 0.0, 0.8));
        assert!((r - Vec3::new(-0.6, 0.0, 0.8)).length() < 1e-15);
        assert_eq!(reflect_dir(n, Vec3::X), -Vec3::X);
    }

    #[test]
    fn fresnel_values() {
        assert_eq!(fresnel_schlick(1.0, 0.02), 0.02);
        assert_eq!(fresnel_schlick(0.0, 0.02), 1.0);
        assert!((fresnel_schlick(0.5, 0.02) - 0.050625).abs() < 1e-12);
        assert_eq!(fresnel_schlick(-3.0, 0.02), 1.0);
    }

    #[test]
    fn fresnel_is_monotone_on_dense_grid() {
        let mut prev = f64::INFINITY;
        for k in 0..=10_000 {
            let f = fresnel_schlick(k as f64 / 10_000.0, 0.04);
            assert!((0.04..=1.0).contains(&f));
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn highlight_values() {
        let n = Vec3::Z;
        let l = Vec3::new(0.6, 0.0, 0.8);
        let v = Vec3::new(-0.6, 0.0, 0.8);
        assert!((highlight(n, l, v, 64.0) - 1.0).abs() < 1e-15);
        assert_eq!(highlight(n, Vec3::X, -Vec3::X, 8.0), 0.0);
        // n·h = 0.5 with l = v.
        let lv = Vec3::new(0.75f64.sqrt(), 0.0, 0.5);
        assert!((highlight(n, lv, lv, 1.0) - 0.5).abs() < 1e-15);
        let lv = Vec3::new((1.0f64 - 0.81).sqrt(), 0.0, 0.9);
        assert!((highlight(n, lv, lv, 32.0) - 0.9f64.powi(32)).abs() < 1e-15);
    }

    #[test]
    fn collision_predicate() {
        assert_eq!(ssr_collision(2.0, 2.01, 0.03), SsrTest::Hit);
        assert_eq!(ssr_collision(2.0, 2.0, 0.03), SsrTest::Hit);
        assert_eq!(ssr_collision(2.0, 1.99, 0.03), SsrTest::InFront);
        assert_eq!(ssr_collision(2.0, 2.05, 0.03), SsrTest::Behind);
        assert_eq!(ssr_collision(f64::INFINITY, 9.0, 0.03), SsrTest::InFront);
    }

    #[test]
    fn refract_offsets() {
        let src = RgbImage::from_fn(8, 8, |x, y| Vec3::new(x as f64, y as f64, 0.0));
        assert_eq!(refract_sample(&src, 3, 4, Vec2::ZERO, 7.0), src.get(3, 4));
        assert_eq!(refract_sample(&src, 3, 4, Vec2::new(0.5, 0.0), 4.0), src.get(5, 4));
        let ns = Image::filled(8, 8, Vec2::new(0.3, -0.2));
        let none = DepthImage::filled(8, 8, 0.0);
        assert_eq!(refract_warp(&src, &ns, &none, 40.0), src);
    }

    #[test]
    fn water_mix_limits() {
        let refra = Vec3::splat(0.2);
        let spec = Vec3::new(0.6, 0.0, 0.0);
        assert_eq!(mix_water(0.0, refra, spec, Vec3::splat(0.3)), refra);
        assert_eq!(mix_water(1.0, refra, spec, Vec3::splat(0.3)), spec + Vec3::splat(0.3));
        let m = mix_water(0.5, refra, spec, Vec3::ZERO);
        assert!((m - Vec3::new(0.4, 0.1, 0.1)).length() < 1e-15);
    }
}
