//! Scene assets: cameras, per-view auxiliary maps, the environment map, and
//! the on-disk scene directory format.
//!
//! ```text
//! scene/
//!   height.pfm               ground height, "Pf", meters
//!   occlusion.pfm            optional occluder height, same size
//!   env.pfm                  optional "PF" equirectangular environment
//!   meta.cfg                 optional `key = value` lines
//!   views/<name>/rgb.png     8-bit sRGB
//!   views/<name>/depth.pfm   camera-space z, +inf for sky
//!   views/<name>/normal.pfm  world-space normals, 3 channels
//!   views/<name>/camera.txt  `w h fx fy cx cy` then three [R|t] rows
//! ```
//!
//! Height-map file rows map to grid rows bottom-up (first scanline is
//! `j = 0`, the lowest y). View and environment images are stored the usual
//! PFM way and flipped on load so row 0 is the top of the picture.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result, SceneError};
use crate::fields::{Grid2, ScalarField2D};
use crate::image::{read_png, write_png, DepthImage, Image, RgbImage};
use crate::math::{Mat3, Rigid, Vec2, Vec3};
use crate::pfm::Pfm;

/// Pinhole camera. Camera space looks down +z with +x right and +y down;
/// pixel `(col, row)` covers `[col, col+1) × [row, row+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_cam: Rigid,
}

impl Camera {
    pub fn new(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64, world_to_cam: Rigid) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("camera size must be positive, got {width}×{height}")));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Config(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if world_to_cam.rotation.orthonormality_error() > 1e-6 || world_to_cam.rotation.determinant() < 0.0 {
            return Err(Error::Config("camera rotation is not a proper rotation".into()));
        }
        Ok(Self { width, height, fx, fy, cx, cy, world_to_cam })
    }

    /// Camera at `eye` looking at `target`, vertical field of view `fov_y` radians.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, width: usize, height: usize, fov_y: f64) -> Result<Self> {
        let f = (target - eye).normalize();
        let r = f.cross(up).normalize();
        if r.length() < 0.5 {
            return Err(Error::Degenerate("view direction parallel to up vector".into()));
        }
        let d = f.cross(r);
        let rotation = Mat3::from_rows(r, d, f);
        let focal = 0.5 * height as f64 / (0.5 * fov_y).tan();
        Self::new(
            width,
            height,
            focal,
            focal,
            0.5 * width as f64,
            0.5 * height as f64,
            Rigid { rotation, translation: -(rotation * eye) },
        )
    }

    pub fn position(&self) -> Vec3 {
        self.world_to_cam.inverse().translation
    }

    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        self.world_to_cam.apply(p)
    }

    pub fn to_world(&self, p_cam: Vec3) -> Vec3 {
        self.world_to_cam.rotation.transpose() * (p_cam - self.world_to_cam.translation)
    }

    /// Continuous pixel coordinates of a camera-space point.
    #[inline]
    pub fn project_cam(&self, p: Vec3) -> Vec2 {
        Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-space point at pixel coordinates `(u, v)` with camera z `depth`.
    #[inline]
    pub fn unproject_cam(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth)
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.to_world(self.unproject_cam(u, v, depth))
    }

    /// Unit world-space direction through pixel coordinates `(u, v)`.
    pub fn ray_dir(&self, u: f64, v: f64) -> Vec3 {
        let c = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (self.world_to_cam.rotation.transpose() * c).normalize()
    }

    /// Same pose, intrinsics rescaled to a new image size.
    pub fn resized(&self, width: usize, height: usize) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            width,
            height,
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            world_to_cam: self.world_to_cam,
        }
    }

    fn to_text(&self) -> String {
        let r = &self.world_to_cam.rotation.rows;
        let t = self.world_to_cam.translation;
        format!(
            "{} {} {} {} {} {}\n{} {} {} {}\n{} {} {} {}\n{} {} {} {}\n",
            self.width,
            self.height,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            r[0].x,
            r[0].y,
            r[0].z,
            t.x,
            r[1].x,
            r[1].y,
            r[1].z,
            t.y,
            r[2].x,
            r[2].y,
            r[2].z,
            t.z,
        )
    }

    fn parse(text: &str, path: &Path) -> Result<Camera, SceneError> {
        let field = |field: &str, msg: String| SceneError::Field { path: path.to_owned(), field: field.into(), msg };
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() < 4 {
            return Err(field("camera", format!("expected 4 lines, found {}", lines.len())));
        }
        let nums = |line: &str, n: usize, name: &str| -> Result<Vec<f64>, SceneError> {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| field(name, e.to_string()))?;
            if v.len() != n {
                return Err(field(name, format!("expected {n} numbers, found {}", v.len())));
            }
            Ok(v)
        };
        let intr = nums(lines[0], 6, "intrinsics")?;
        if intr[0] < 1.0 || intr[1] < 1.0 || intr[0].fract() != 0.0 || intr[1].fract() != 0.0 {
            return Err(field("intrinsics", "width and height must be positive integers".into()));
        }
        let mut rows = [Vec3::ZERO; 3];
        let mut t = Vec3::ZERO;
        for k in 0..3 {
            let v = nums(lines[k + 1], 4, &format!("extrinsics row {}", k + 1))?;
            rows[k] = Vec3::new(v[0], v[1], v[2]);
            match k {
                0 => t.x = v[3],
                1 => t.y = v[3],
                _ => t.z = v[3],
            }
        }
        let pose = Rigid { rotation: Mat3 { rows }, translation: t };
        Camera::new(intr[0] as usize, intr[1] as usize, intr[2], intr[3], intr[4], intr[5], pose)
            .map_err(|e| field("camera", e.to_string()))
    }
}

/// One camera's rendered base image with matching depth and normal maps.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxView {
    pub name: String,
    pub camera: Camera,
    /// Linear RGB.
    pub rgb: RgbImage,
    /// Camera-space z in meters; `+inf` where nothing was hit.
    pub depth: DepthImage,
    /// World-space unit normals (zero where `depth` is infinite).
    pub normal: Image<Vec3>,
}

impl AuxView {
    pub fn validate(&self) -> Result<()> {
        let dims = (self.camera.width, self.camera.height);
        for (what, d) in [("rgb", self.rgb.dims()), ("depth", self.depth.dims()), ("normal", self.normal.dims())] {
            if d != dims {
                return Err(Error::DimensionMismatch { what, left: d, right: dims });
            }
        }
        if let Some(bad) = self.depth.data().iter().find(|d| d.is_nan() || (d.is_finite() && **d <= 0.0) || **d < 0.0) {
            return Err(Error::Config(format!("view {}: depth {bad} is not positive", self.name)));
        }
        Ok(())
    }

    /// Same view at another resolution (nearest-neighbour maps, rescaled intrinsics).
    pub fn resized(&self, width: usize, height: usize) -> AuxView {
        if (width, height) == self.rgb.dims() {
            return self.clone();
        }
        AuxView {
            name: self.name.clone(),
            camera: self.camera.resized(width, height),
            rgb: self.rgb.resize_nearest(width, height),
            depth: self.depth.resize_nearest(width, height),
            normal: self.normal.resize_nearest(width, height),
        }
    }
}

/// Equirectangular environment: column ↦ longitude in `[-π, π)`, row ↦
/// polar angle from +Z in `[0, π]` (row 0 at the zenith).
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentMap {
    pub image: RgbImage,
    /// Rotation taking map-frame directions to world directions.
    pub orientation: Mat3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sun {
    pub dir: Vec3,
    pub color: Vec3,
}

impl EnvironmentMap {
    pub fn new(image: RgbImage, orientation: Mat3, require_2to1: bool) -> Result<Self> {
        if require_2to1 && image.width() != 2 * image.height() {
            return Err(Error::Config(format!(
                "environment map must be 2:1, got {}×{}",
                image.width(),
                image.height()
            )));
        }
        if image.width() < 2 || image.height() < 2 {
            return Err(Error::Config("environment map must be at least 2×2".into()));
        }
        Ok(Self { image, orientation })
    }

    pub fn uniform(color: Vec3) -> Self {
        Self { image: RgbImage::filled(4, 2, color), orientation: Mat3::IDENTITY }
    }

    /// Bilinear lookup; longitude wraps, latitude clamps.
    pub fn sample(&self, dir: Vec3) -> Vec3 {
        let d = self.orientation.transpose() * dir;
        let (w, h) = self.image.dims();
        let phi = d.y.atan2(d.x);
        let theta = d.z.clamp(-1.0, 1.0).acos();
        let gx = (phi + PI) / (2.0 * PI) * w as f64 - 0.5;
        let gy = (theta / PI * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let fx = gx.floor();
        let tx = gx - fx;
        let x0 = (fx as i64).rem_euclid(w as i64) as usize;
        let x1 = (x0 + 1) % w;
        let y0 = (gy as usize).min(h - 2);
        let ty = gy - y0 as f64;
        let top = self.image.get(x0, y0) * (1.0 - tx) + self.image.get(x1, y0) * tx;
        let bot = self.image.get(x0, y0 + 1) * (1.0 - tx) + self.image.get(x1, y0 + 1) * tx;
        top * (1.0 - ty) + bot * ty
    }

    /// World direction through the center of texel `(row, col)`.
    pub fn texel_dir(&self, row: usize, col: usize) -> Vec3 {
        let (w, h) = self.image.dims();
        let phi = (col as f64 + 0.5) / w as f64 * 2.0 * PI - PI;
        let theta = (row as f64 + 0.5) / h as f64 * PI;
        let d = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        self.orientation * d
    }

    /// The brightest texel as a directional light; ties go to the lowest
    /// `(row, col)`.
    pub fn sun(&self) -> Sun {
        let (w, h) = self.image.dims();
        let mut best = (0, 0);
        let mut best_l = f64::NEG_INFINITY;
        for row in 0..h {
            for col in 0..w {
                let l = self.image.get(col, row).luminance();
                if l > best_l {
                    best_l = l;
                    best = (row, col);
                }
            }
        }
        Sun { dir: self.texel_dir(best.0, best.1), color: self.image.get(best.1, best.0) }
    }
}

/// Free-function form of [`EnvironmentMap::sample`].
pub fn sample_env(env: &EnvironmentMap, dir: Vec3) -> Vec3 {
    env.sample(dir)
}

/// Sun from the environment unless overridden.
pub fn sun_from_envmap(env: &EnvironmentMap, over: Option<Sun>) -> Sun {
    over.unwrap_or_else(|| env.sun())
}

/// Scene-wide settings read from `meta.cfg`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneMeta {
    pub dx_meters: f64,
    pub origin: Vec2,
    pub floor_height: f64,
    pub sun_dir: Option<Vec3>,
    pub sun_color: Option<Vec3>,
}

impl Default for SceneMeta {
    fn default() -> Self {
        Self { dx_meters: 0.05, origin: Vec2::ZERO, floor_height: 0.0, sun_dir: None, sun_color: None }
    }
}

impl SceneMeta {
    pub fn parse(text: &str, path: &Path) -> Result<SceneMeta, SceneError> {
        let mut meta = SceneMeta::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let field = |field: &str, msg: String| SceneError::Field {
                path: path.to_owned(),
                field: field.to_owned(),
                msg: format!("line {}: {msg}", lineno + 1),
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(field(line, "expected `key = value`".into()));
            };
            let (key, value) = (key.trim(), value.trim());
            let scalar = |v: &str| v.parse::<f64>().map_err(|e| field(key, e.to_string()));
            let triple = |v: &str| -> Result<Vec3, SceneError> {
                let p: Vec<f64> = v
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().map_err(|e| field(key, e.to_string())))
                    .collect::<Result<_, _>>()?;
                match p[..] {
                    [x, y, z] => Ok(Vec3::new(x, y, z)),
                    _ => Err(field(key, format!("expected 3 numbers, found {}", p.len()))),
                }
            };
            match key {
                "dx_meters" => {
                    meta.dx_meters = scalar(value)?;
                    if !(meta.dx_meters > 0.0) {
                        return Err(field(key, "must be positive".into()));
                    }
                }
                "origin_x" => meta.origin.x = scalar(value)?,
                "origin_y" => meta.origin.y = scalar(value)?,
                "floor_height" => meta.floor_height = scalar(value)?,
                "sun_dir" => {
                    let d = triple(value)?;
                    if d.length() < 1e-9 {
                        return Err(field(key, "zero-length direction".into()));
                    }
                    meta.sun_dir = Some(d.normalize());
                }
                "sun_color" => meta.sun_color = Some(triple(value)?),
                other => return Err(field(other, "unknown key".into())),
            }
        }
        Ok(meta)
    }

    fn to_text(&self) -> String {
        let mut s = format!(
            "dx_meters = {}\norigin_x = {}\norigin_y = {}\nfloor_height = {}\n",
            self.dx_meters, self.origin.x, self.origin.y, self.floor_height
        );
        if let Some(d) = self.sun_dir {
            s += &format!("sun_dir = {} {} {}\n", d.x, d.y, d.z);
        }
        if let Some(c) = self.sun_color {
            s += &format!("sun_color = {} {} {}\n", c.x, c.y, c.z);
        }
        s
    }
}

/// Everything needed to simulate and render one scene.
#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub ground: ScalarField2D,
    pub occlusion: Option<ScalarField2D>,
    pub env: EnvironmentMap,
    /// Sorted by name.
    pub views: Vec<AuxView>,
    pub meta: SceneMeta,
}

impl SceneBundle {
    pub fn view(&self, name: &str) -> Option<&AuxView> {
        self.views.iter().find(|v| v.name == name)
    }

    pub fn view_names(&self) -> Vec<&str> {
        self.views.iter().map(|v| v.name.as_str()).collect()
    }

    /// Occlusion layer, defaulting to the ground.
    pub fn occlusion_or_ground(&self) -> &ScalarField2D {
        self.occlusion.as_ref().unwrap_or(&self.ground)
    }

    /// Sun from meta overrides, falling back to the environment's brightest texel.
    pub fn sun(&self) -> Sun {
        let env_sun = self.env.sun();
        Sun { dir: self.meta.sun_dir.unwrap_or(env_sun.dir), color: self.meta.sun_color.unwrap_or(env_sun.color) }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.ground.all_finite() {
            return Err(Error::Config("ground height has non-finite samples".into()));
        }
        if let Some(occ) = &self.occlusion {
            occ.check_same_shape(&self.ground, "occlusion vs ground")?;
            if let Some(k) = occ.data().iter().zip(self.ground.data()).position(|(o, g)| !(o >= g)) {
                let (i, j) = (k % self.ground.nx(), k / self.ground.nx());
                return Err(Error::Config(format!("occlusion height below ground at cell ({i}, {j})")));
            }
        }
        for v in &self.views {
            v.validate()?;
        }
        Ok(())
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, SceneError> {
    fs::read(path).map_err(|source| SceneError::Io { path: path.to_owned(), source })
}

fn read_pfm(path: &Path, channels: usize) -> Result<Pfm, SceneError> {
    let bytes = read_bytes(path)?;
    let pfm = Pfm::parse(&bytes).map_err(|e| SceneError::Malformed {
        path: path.to_owned(),
        offset: e.offset,
        msg: e.msg,
    })?;
    if pfm.channels != channels {
        let want = if channels == 1 { "Pf" } else { "PF" };
        return Err(SceneError::Malformed {
            path: path.to_owned(),
            offset: 0,
            msg: format!("expected a {channels}-channel \"{want}\" map"),
        });
    }
    Ok(pfm)
}

fn height_field(pfm: &Pfm, meta: &SceneMeta, path: &Path) -> Result<ScalarField2D, SceneError> {
    let data = pfm.data.iter().map(|&v| v as f64).collect();
    Grid2::from_vec(pfm.width, pfm.height, meta.dx_meters, meta.origin, data)
        .map_err(|e| SceneError::Validation { path: path.to_owned(), msg: e.to_string() })
}

fn validation(path: &Path, e: Error) -> SceneError {
    match e {
        Error::Scene(s) => s,
        other => SceneError::Validation { path: path.to_owned(), msg: other.to_string() },
    }
}

/// Read and validate a scene directory.
pub fn load_scene(dir: &Path) -> Result<SceneBundle, SceneError> {
    let meta_path = dir.join("meta.cfg");
    let meta = if meta_path.exists() {
        let bytes = read_bytes(&meta_path)?;
        let text = String::from_utf8(bytes).map_err(|e| SceneError::Malformed {
            path: meta_path.clone(),
            offset: e.utf8_error().valid_up_to(),
            msg: "not valid UTF-8".into(),
        })?;
        SceneMeta::parse(&text, &meta_path)?
    } else {
        SceneMeta::default()
    };

    let height_path = dir.join("height.pfm");
    let ground = height_field(&read_pfm(&height_path, 1)?, &meta, &height_path)?;
    if !ground.all_finite() {
        return Err(SceneError::Validation { path: height_path, msg: "non-finite height samples".into() });
    }

    let occ_path = dir.join("occlusion.pfm");
    let occlusion = if occ_path.exists() {
        let occ = height_field(&read_pfm(&occ_path, 1)?, &meta, &occ_path)?;
        if occ.dims() != ground.dims() {
            return Err(SceneError::Validation {
                path: occ_path,
                msg: format!("size {:?} differs from height map {:?}", occ.dims(), ground.dims()),
            });
        }
        if let Some(k) = occ.data().iter().zip(ground.data()).position(|(o, g)| !(o >= g)) {
            return Err(SceneError::Validation {
                path: occ_path,
                msg: format!("occlusion below ground at cell ({}, {})", k % ground.nx(), k / ground.nx()),
            });
        }
        Some(occ)
    } else {
        None
    };

    let env_path = dir.join("env.pfm");
    let env = if env_path.exists() {
        let pfm = read_pfm(&env_path, 3)?;
        let img = color_image(&pfm);
        EnvironmentMap::new(img, Mat3::IDENTITY, true).map_err(|e| validation(&env_path, e))?
    } else {
        EnvironmentMap::uniform(Vec3::splat(0.5))
    };

    let views_dir = dir.join("views");
    let mut views = Vec::new();
    if views_dir.is_dir() {
        let mut names: Vec<String> = fs::read_dir(&views_dir)
            .map_err(|source| SceneError::Io { path: views_dir.clone(), source })?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for name in names {
            views.push(load_view(&views_dir.join(&name), name)?);
        }
    }
    if views.is_empty() {
        return Err(SceneError::Validation { path: views_dir, msg: "scene has no views".into() });
    }
    Ok(SceneBundle { ground, occlusion, env, views, meta })
}

fn color_image(pfm: &Pfm) -> RgbImage {
    RgbImage::from_fn(pfm.width, pfm.height, |x, y| {
        Vec3::new(pfm.get_top_down(x, y, 0) as f64, pfm.get_top_down(x, y, 1) as f64, pfm.get_top_down(x, y, 2) as f64)
    })
}

fn load_view(dir: &Path, name: String) -> Result<AuxView, SceneError> {
    let cam_path = dir.join("camera.txt");
    let cam_bytes = read_bytes(&cam_path)?;
    let cam_text = String::from_utf8_lossy(&cam_bytes);
    let camera = Camera::parse(&cam_text, &cam_path)?;
    let dims = (camera.width, camera.height);
    let mismatch = |path: PathBuf, got: (usize, usize)| SceneError::Validation {
        path,
        msg: format!("size {}×{} does not match camera {}×{}", got.0, got.1, dims.0, dims.1),
    };

    let rgb_path = dir.join("rgb.png");
    let file = fs::File::open(&rgb_path).map_err(|source| SceneError::Io { path: rgb_path.clone(), source })?;
    let (w, h, bytes) = read_png(std::io::BufReader::new(file)).map_err(|e| SceneError::Malformed {
        path: rgb_path.clone(),
        offset: 0,
        msg: e.to_string(),
    })?;
    if (w as usize, h as usize) != dims {
        return Err(mismatch(rgb_path, (w as usize, h as usize)));
    }
    let rgb = RgbImage::from_srgb8(dims.0, dims.1, &bytes).expect("decoded size checked");

    let depth_path = dir.join("depth.pfm");
    let dpfm = read_pfm(&depth_path, 1)?;
    if (dpfm.width, dpfm.height) != dims {
        return Err(mismatch(depth_path, (dpfm.width, dpfm.height)));
    }
    let depth = DepthImage::from_fn(dims.0, dims.1, |x, y| dpfm.get_top_down(x, y, 0) as f64);

    let normal_path = dir.join("normal.pfm");
    let npfm = read_pfm(&normal_path, 3)?;
    if (npfm.width, npfm.height) != dims {
        return Err(mismatch(normal_path, (npfm.width, npfm.height)));
    }
    let normal = color_image(&npfm).map_pixels(|n| n.normalize());

    let view = AuxView { name, camera, rgb, depth, normal };
    view.validate().map_err(|e| validation(&depth_path, e))?;
    Ok(view)
}

impl<T: Copy> Image<T> {
    pub fn map_pixels<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image::from_vec(self.width(), self.height(), self.data().iter().map(|&p| f(p)).collect()).expect("same size")
    }
}

fn write_err(path: &Path, source: std::io::Error) -> Error {
    Error::io(path, source)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| write_err(path, e))
}

/// Grayscale PFM of a grid; file rows follow grid rows (`j = 0` first).
pub fn field_pfm(f: &ScalarField2D) -> Pfm {
    Pfm { width: f.nx(), height: f.ny(), channels: 1, data: f.data().iter().map(|&v| v as f32).collect() }
}

/// Grayscale PFM of a top-down image (stored bottom row first).
pub fn image_pfm(img: &DepthImage) -> Pfm {
    let (w, h) = img.dims();
    let mut data = Vec::with_capacity(w * h);
    for row in (0..h).rev() {
        data.extend((0..w).map(|x| img.get(x, row) as f32));
    }
    Pfm { width: w, height: h, channels: 1, data }
}

fn color_pfm<T: Copy>(img: &Image<T>, f: impl Fn(T) -> Vec3) -> Pfm {
    let (w, h) = img.dims();
    let mut data = Vec::with_capacity(w * h * 3);
    for row in (0..h).rev() {
        for x in 0..w {
            let c = f(img.get(x, row));
            data.extend_from_slice(&[c.x as f32, c.y as f32, c.z as f32]);
        }
    }
    Pfm { width: w, height: h, channels: 3, data }
}

/// Write a bundle in the directory layout [`load_scene`] reads.
pub fn write_scene(dir: &Path, scene: &SceneBundle) -> Result<()> {
    let views_dir = dir.join("views");
    fs::create_dir_all(&views_dir).map_err(|e| write_err(&views_dir, e))?;
    write_file(&dir.join("meta.cfg"), scene.meta.to_text().as_bytes())?;
    write_file(&dir.join("height.pfm"), &field_pfm(&scene.ground).encode())?;
    if let Some(occ) = &scene.occlusion {
        write_file(&dir.join("occlusion.pfm"), &field_pfm(occ).encode())?;
    }
    write_file(&dir.join("env.pfm"), &color_pfm(&scene.env.image, |c| c).encode())?;
    for view in &scene.views {
        let vd = views_dir.join(&view.name);
        fs::create_dir_all(&vd).map_err(|e| write_err(&vd, e))?;
        write_file(&vd.join("camera.txt"), view.camera.to_text().as_bytes())?;
        let mut png = Vec::new();
        write_png(&mut png, view.rgb.width() as u32, view.rgb.height() as u32, &view.rgb.to_srgb8())
            .map_err(|e| Error::Config(e.to_string()))?;
        write_file(&vd.join("rgb.png"), &png)?;
        write_file(&vd.join("depth.pfm"), &image_pfm(&view.depth).encode())?;
        write_file(&vd.join("normal.pfm"), &color_pfm(&view.normal, |n| n).encode())?;
    }
    Ok(())
}

/// Rigid frame that centers a point cloud and aligns its principal axes
/// with world axes: `p ↦ rotation · (p + translation)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundFrame {
    pub rotation: Mat3,
    /// Negated centroid.
    pub translation: Vec3,
    /// Covariance eigenvalues, largest first.
    pub eigenvalues: [f64; 3],
}

impl GroundFrame {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation * (p + self.translation)
    }

    pub fn to_rigid(&self) -> Rigid {
        Rigid { rotation: self.rotation, translation: self.rotation * self.translation }
    }
}

/// Ground-plane frame from camera positions by principal component analysis.
///
/// The largest-variance axis becomes +X and the smallest +Z (oriented to
/// agree with the input +Z); +Y completes a right-handed frame. The sign of
/// +X is chosen so its largest-magnitude component is positive.
pub fn estimate_ground_frame(positions: &[Vec3]) -> Result<GroundFrame> {
    if positions.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 camera positions, got {}", positions.len())));
    }
    let n = positions.len() as f64;
    let centroid = positions.iter().fold(Vec3::ZERO, |a, &p| a + p) / n;
    let mut cov = Matrix3::<f64>::zeros();
    for p in positions {
        let d = *p - centroid;
        let v = nalgebra::Vector3::new(d.x, d.y, d.z);
        cov += v * v.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|k| eig.eigenvalues[k]);
    let scale = vals[0].abs().max(f64::MIN_POSITIVE);
    if vals[1] <= 1e-12 * scale {
        return Err(Error::Degenerate("camera positions are collinear".into()));
    }
    let col = |k: usize| {
        let c = eig.eigenvectors.column(order[k]);
        Vec3::new(c[0], c[1], c[2]).normalize()
    };
    let mut x = col(0);
    let mut z = col(2);
    if z.z < 0.0 {
        z = -z;
    }
    let dominant = if x.x.abs() >= x.y.abs() && x.x.abs() >= x.z.abs() {
        x.x
    } else if x.y.abs() >= x.z.abs() {
        x.y
    } else {
        x.z
    };
    if dominant < 0.0 {
        x = -x;
    }
    let y = z.cross(x);
    Ok(GroundFrame { rotation: Mat3::from_rows(x, y, z), translation: -centroid, eigenvalues: vals })
}

/// Heights from an overhead orthographic depth render:
/// `H = camera_height − depth`, infinite depth mapping to `floor`.
pub fn height_from_ortho_depth(depth: &ScalarField2D, camera_height: f64, floor: f64) -> Result<ScalarField2D> {
    if !(camera_height > 0.0) {
        return Err(Error::Config(format!("camera height must be positive, got {camera_height}")));
    }
    Ok(depth.map(|d| if d.is_finite() { camera_height - d } else { floor }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_projects_target_to_center() {
        let cam = Camera::look_at(Vec3::new(1.0, -4.0, 2.0), Vec3::new(1.0, 0.0, 0.0), Vec3::Z, 64, 48, 1.0).unwrap();
        let p = cam.to_camera(Vec3::new(1.0, 0.0, 0.0));
        let s = cam.project_cam(p);
        assert!((s.x - 32.0).abs() < 1e-12 && (s.y - 24.0).abs() < 1e-12);
        // Points above the target appear higher in the image.
        let up = cam.project_cam(cam.to_camera(Vec3::new(1.0, 0.0, 0.5)));
        assert!(up.y < 24.0);
        let right = cam.project_cam(cam.to_camera(Vec3::new(2.0, 0.0, 0.0)));
        assert!(right.x > 32.0);
        let w = cam.unproject(s.x, s.y, p.z);
        assert!((w - Vec3::new(1.0, 0.0, 0.0)).length() < 1e-12);
        assert!((cam.position() - Vec3::new(1.0, -4.0, 2.0)).length() < 1e-12);
    }

    #[test]
    fn env_uniform_and_pole() {
        let env = EnvironmentMap::uniform(Vec3::new(0.2, 0.3, 0.4));
        assert_eq!(env.sample(Vec3::new(0.6, 0.0, 0.8)), Vec3::new(0.2, 0.3, 0.4));

        let img = RgbImage::from_fn(8, 4, |_, y| if y == 0 { Vec3::X } else { Vec3::Y });
        let env = EnvironmentMap::new(img, Mat3::IDENTITY, true).unwrap();
        assert_eq!(env.sample(Vec3::Z), Vec3::X);
    }

    #[test]
    fn env_longitude_wraps() {
        let img = RgbImage::from_fn(16, 8, |x, y| Vec3::new(x as f64, y as f64, (x * y) as f64));
        let env = EnvironmentMap::new(img, Mat3::IDENTITY, true).unwrap();
        let theta: f64 = 1.1;
        for phi in [0.3, -2.0, 3.1] {
            let a = Vec3::new(theta.sin() * f64::cos(phi), theta.sin() * f64::sin(phi), theta.cos());
            let p2 = phi + 2.0 * PI;
            let b = Vec3::new(theta.sin() * p2.cos(), theta.sin() * p2.sin(), theta.cos());
            assert!((env.sample(a) - env.sample(b)).length() < 1e-9);
        }
    }

    #[test]
    fn env_requires_two_to_one() {
        assert!(EnvironmentMap::new(RgbImage::filled(4, 4, Vec3::ZERO), Mat3::IDENTITY, true).is_err());
        assert!(EnvironmentMap::new(RgbImage::filled(4, 4, Vec3::ZERO), Mat3::IDENTITY, false).is_ok());
    }

    #[test]
    fn sun_is_brightest_texel() {
        let mut img = RgbImage::filled(16, 8, Vec3::splat(0.1));
        img.set(11, 2, Vec3::splat(5.0));
        let env = EnvironmentMap::new(img, Mat3::IDENTITY, true).unwrap();
        let sun = env.sun();
        assert!((sun.dir - env.texel_dir(2, 11)).length() < 1e-12);
        assert_eq!(sun.color, Vec3::splat(5.0));
        // The returned direction maps back into the bright texel.
        assert!((env.sample(sun.dir) - Vec3::splat(5.0)).length() < 1e-9);

        let uniform = EnvironmentMap::new(RgbImage::filled(8, 4, Vec3::ONE), Mat3::IDENTITY, true).unwrap();
        assert!((uniform.sun().dir - uniform.texel_dir(0, 0)).length() < 1e-15);

        let over = Sun { dir: Vec3::Z, color: Vec3::new(1.0, 0.9, 0.8) };
        assert_eq!(sun_from_envmap(&env, Some(over)), over);
    }

    #[test]
    fn ortho_depth_to_height() {
        let d = ScalarField2D::from_vec(2, 2, 0.1, Vec2::ZERO, vec![7.5, 10.0, f64::INFINITY, 9.0]).unwrap();
        let h = height_from_ortho_depth(&d, 10.0, -1.0).unwrap();
        assert_eq!(h.data(), &[2.5, 0.0, -1.0, 1.0]);
        assert!(height_from_ortho_depth(&d, 0.0, 0.0).is_err());
    }

    #[test]
    fn meta_parsing() {
        let p = Path::new("meta.cfg");
        let m = SceneMeta::parse("# c\ndx_meters = 0.1\norigin_x=2\nsun_dir = 0 0 2\n", p).unwrap();
        assert_eq!(m.dx_meters, 0.1);
        assert_eq!(m.origin.x, 2.0);
        assert_eq!(m.sun_dir, Some(Vec3::Z));
        let e = SceneMeta::parse("bogus = 1\n", p).unwrap_err();
        assert!(e.to_string().contains("bogus"));
        assert!(SceneMeta::parse("dx_meters = -1\n", p).is_err());
    }

    #[test]
    fn ground_frame_rejects_degenerate() {
        assert!(estimate_ground_frame(&[Vec3::ZERO, Vec3::X]).is_err());
        let line: Vec<Vec3> = (0..5).map(|k| Vec3::new(k as f64, 2.0 * k as f64, 0.0)).collect();
        assert!(estimate_ground_frame(&line).is_err());
    }
}
