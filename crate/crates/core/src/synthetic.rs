//! Procedural scenes: a small courtyard used as the bundled demo, and a
//! mirror floor facing a red wall for checking reflections.

use crate::error::Result;
use crate::fields::ScalarField2D;
use crate::image::{DepthImage, Image, RgbImage};
use crate::math::{Mat3, Vec2, Vec3};
use crate::scene::{AuxView, Camera, EnvironmentMap, SceneBundle, SceneMeta};
use crate::water_view::rasterize_surface;

const SKY_ZENITH: Vec3 = Vec3::new(0.30, 0.38, 0.52);
const SKY_HORIZON: Vec3 = Vec3::new(0.72, 0.75, 0.80);
const GROUND_BELOW: Vec3 = Vec3::new(0.12, 0.11, 0.10);

/// Overcast sky gradient with a bright sun disc around `sun_dir`.
pub fn sky_env(width: usize, sun_dir: Vec3, sun_color: Vec3) -> EnvironmentMap {
    let height = width / 2;
    let sun_dir = sun_dir.normalize();
    let mut env = EnvironmentMap { image: RgbImage::filled(width, height, Vec3::ZERO), orientation: Mat3::IDENTITY };
    let mut best = (0, 0, f64::NEG_INFINITY);
    for row in 0..height {
        for col in 0..width {
            let d = env.texel_dir(row, col);
            let c = sky_color(d);
            env.image.set(col, row, c);
            let a = d.dot(sun_dir);
            if a > best.2 {
                best = (row, col, a);
            }
        }
    }
    env.image.set(best.1, best.0, sun_color);
    env
}

fn sky_color(d: Vec3) -> Vec3 {
    if d.z >= 0.0 {
        SKY_HORIZON.lerp(SKY_ZENITH, d.z.sqrt())
    } else {
        GROUND_BELOW
    }
}

/// Ground height of the demo courtyard: a shallow bowl with a raised wall
/// along one side.
fn courtyard_height(p: Vec2) -> f64 {
    let c = Vec2::new(2.4, 2.4);
    let r2 = (p - c).dot(p - c) / (2.4 * 2.4);
    let bowl = 0.25 * r2.min(1.0);
    let wall = (3.3..=3.6).contains(&p.x) && (0.8..=3.8).contains(&p.y);
    if wall {
        0.5
    } else {
        bowl
    }
}

/// A canopy over one corner, 1.6 m up.
fn courtyard_occluder(p: Vec2, ground: f64) -> f64 {
    if p.x < 1.4 && p.y > 3.0 {
        1.6
    } else {
        ground
    }
}

/// Render a height field into a base view: depth, world normals and a
/// simple sun-lit albedo, with the sky from `env` where nothing is hit.
pub fn render_ground_view(
    name: &str,
    camera: Camera,
    ground: &ScalarField2D,
    env: &EnvironmentMap,
    sun_dir: Vec3,
    albedo: impl Fn(Vec3, f64) -> Vec3,
) -> AuxView {
    let normals = ground.normal_from_height();
    let material = ground.map(|g| if g >= 0.45 { 1.0 } else { 0.0 });
    let g = rasterize_surface(ground, &normals, &material, &camera, |_, _, _| true);
    let l = sun_dir.normalize();
    let (w, h) = (camera.width, camera.height);
    let rgb = RgbImage::from_fn(w, h, |x, y| {
        let d = g.depth.get(x, y);
        let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
        if d.is_finite() {
            let p = camera.unproject(u, v, d);
            let n = g.normal.get(x, y);
            let shade = 0.45 + 0.55 * n.dot(l).max(0.0);
            clamp01(albedo(p, g.thickness.get(x, y)) * shade)
        } else {
            clamp01(env.sample(camera.ray_dir(u, v)))
        }
    });
    AuxView { name: name.to_owned(), camera, rgb, depth: g.depth, normal: g.normal }
}

fn clamp01(c: Vec3) -> Vec3 {
    Vec3::new(c.x.clamp(0.0, 1.0), c.y.clamp(0.0, 1.0), c.z.clamp(0.0, 1.0))
}

fn courtyard_albedo(p: Vec3, material: f64) -> Vec3 {
    let tile = ((p.x / 0.4).floor() as i64 + (p.y / 0.4).floor() as i64).rem_euclid(2) as f64;
    let stone = Vec3::new(0.42, 0.40, 0.37) * (0.85 + 0.15 * tile);
    let brick = Vec3::new(0.55, 0.30, 0.22);
    stone.lerp(brick, material.clamp(0.0, 1.0))
}

/// The bundled demo scene: a 96×96 courtyard with two 160×120 views.
pub fn demo_scene() -> Result<SceneBundle> {
    courtyard_scene(96, 160, 120)
}

/// The demo courtyard (4.8 m square) at `cells × cells` with views of
/// `width × height` pixels.
pub fn courtyard_scene(cells: usize, width: usize, height: usize) -> Result<SceneBundle> {
    let (n, dx) = (cells, 4.8 / cells as f64);
    let ground = ScalarField2D::filled(n, n, dx, Vec2::ZERO, 0.0)?;
    let ground = ScalarField2D::from_fn(&ground, |i, j| courtyard_height(ground.cell_center(i, j)));
    let occlusion =
        ScalarField2D::from_fn(&ground, |i, j| courtyard_occluder(ground.cell_center(i, j), ground.get(i, j)));

    let sun_dir = Vec3::new(0.55, 0.45, 0.70).normalize();
    let env = sky_env(128, sun_dir, Vec3::new(6.0, 5.6, 5.0));
    let sun = env.sun();

    let center = Vec3::new(2.4, 2.2, 0.0);
    let views = vec![
        render_ground_view(
            "main",
            Camera::look_at(Vec3::new(2.4, -1.6, 2.2), center, Vec3::Z, width, height, 55f64.to_radians())?,
            &ground,
            &env,
            sun.dir,
            courtyard_albedo,
        ),
        render_ground_view(
            "side",
            Camera::look_at(Vec3::new(-1.4, 2.4, 1.6), center, Vec3::Z, width, height, 55f64.to_radians())?,
            &ground,
            &env,
            sun.dir,
            courtyard_albedo,
        ),
    ];
    let meta = SceneMeta { dx_meters: dx, ..SceneMeta::default() };
    let bundle = SceneBundle { ground, occlusion: Some(occlusion), env, views, meta };
    bundle.validate()?;
    Ok(bundle)
}

/// A flat mirror-like water sheet in front of a red wall.
#[derive(Clone, Debug)]
pub struct MirrorScene {
    pub view: AuxView,
    pub env: EnvironmentMap,
    pub ground: ScalarField2D,
    pub depth: ScalarField2D,
    /// World `y` of the wall face.
    pub wall_y: f64,
    pub wall_top: f64,
}

pub const WALL_RED: Vec3 = Vec3::new(0.9, 0.05, 0.05);
const FLOOR_GRAY: Vec3 = Vec3::new(0.35, 0.35, 0.35);

/// Analytic ray cast of floor (`z = 0`) and wall (`y = wall_y`, `0 ≤ z ≤
/// wall_top`) for every pixel of `camera`; sky beyond.
pub fn mirror_scene(size: usize) -> Result<MirrorScene> {
    let wall_y = 1.0;
    let wall_top = 0.6;
    let camera =
        Camera::look_at(Vec3::new(0.5, 0.0, 0.3), Vec3::new(0.5, 0.8, 0.0), Vec3::Z, size, size, 60f64.to_radians())?;
    let env = sky_env(64, Vec3::new(-0.3, -0.5, 0.8), Vec3::splat(2.0));
    let eye = camera.position();

    let mut rgb = RgbImage::filled(size, size, Vec3::ZERO);
    let mut depth = DepthImage::filled(size, size, f64::INFINITY);
    let mut normal = Image::filled(size, size, Vec3::ZERO);
    for y in 0..size {
        for x in 0..size {
            let dir = camera.ray_dir(x as f64 + 0.5, y as f64 + 0.5);
            let mut best: Option<(f64, Vec3, Vec3)> = None;
            if dir.y > 0.0 {
                let t = (wall_y - eye.y) / dir.y;
                let p = eye + dir * t;
                if p.z >= 0.0 && p.z <= wall_top {
                    best = Some((t, -Vec3::Y, WALL_RED));
                }
            }
            if dir.z < 0.0 {
                let t = -eye.z / dir.z;
                if best.is_none_or(|b| t < b.0) {
                    best = Some((t, Vec3::Z, FLOOR_GRAY));
                }
            }
            match best {
                Some((t, n, c)) => {
                    depth.set(x, y, camera.to_camera(eye + dir * t).z);
                    normal.set(x, y, n);
                    rgb.set(x, y, c);
                }
                None => rgb.set(x, y, env.sample(dir)),
            }
        }
    }
    let view = AuxView { name: "mirror".into(), camera, rgb, depth, normal };
    view.validate()?;

    // Water up to just short of the wall face.
    let dx = 0.01;
    let ground = ScalarField2D::filled(201, 98, dx, Vec2::new(-0.5, 0.02), 0.0)?;
    let depth = ground.map(|_| 0.05);
    Ok(MirrorScene { view, env, ground, depth, wall_y, wall_top })
}
