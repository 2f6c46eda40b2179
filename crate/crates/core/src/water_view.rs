//! Rasterization of a height-field surface into a camera view.
//!
//! The surface is triangulated with vertices at cell centers (two triangles
//! per quad of centers) and z-buffered with perspective-correct
//! interpolation of depth, normal and water thickness.

use rayon::prelude::*;

use crate::fields::{NormalField, ScalarField2D};
use crate::image::{DepthImage, Image};
use crate::math::{Vec2, Vec3};
use crate::scene::Camera;

/// Vertices closer than this to the camera plane cull their triangle.
const NEAR: f64 = 1e-4;
const BAND_ROWS: usize = 16;

/// Per-pixel water surface attributes for one view.
#[derive(Clone, Debug, PartialEq)]
pub struct WaterGBuffer {
    /// Camera-space z of the water surface, `+inf` where uncovered.
    pub depth: DepthImage,
    /// World-space unit normal of the water surface (zero where uncovered).
    pub normal: Image<Vec3>,
    /// Water depth `h` in meters, 0 where uncovered.
    pub thickness: DepthImage,
}

impl WaterGBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            depth: DepthImage::filled(width, height, f64::INFINITY),
            normal: Image::filled(width, height, Vec3::ZERO),
            thickness: DepthImage::filled(width, height, 0.0),
        }
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn has_water(&self, x: usize, y: usize) -> bool {
        self.depth.get(x, y).is_finite()
    }

    pub fn covered_pixels(&self) -> usize {
        self.depth.data().iter().filter(|d| d.is_finite()).count()
    }
}

/// Rasterize the water surface `eta`, skipping triangles whose three
/// vertices all have `h ≤ h_render_min`.
pub fn rasterize_water(eta: &ScalarField2D, h: &ScalarField2D, cam: &Camera, h_render_min: f64) -> WaterGBuffer {
    debug_assert!(eta.same_shape(h));
    let normals = eta.normal_from_height();
    rasterize_surface(eta, &normals, h, cam, |a, b, c| a > h_render_min || b > h_render_min || c > h_render_min)
}

/// Screen-space triangle ready for scan conversion.
struct Setup {
    s: [Vec2; 3],
    inv_z: [f64; 3],
    normal_over_z: [Vec3; 3],
    attr_over_z: [f64; 3],
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

/// Edge function with a canonical endpoint order, so triangles sharing an
/// edge evaluate it to bitwise-opposite values.
#[inline]
fn edge(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    if (a.x, a.y) <= (b.x, b.y) {
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
    } else {
        -((a.x - b.x) * (p.y - b.y) - (a.y - b.y) * (p.x - b.x))
    }
}

/// Generic height-field rasterizer. `attr` is interpolated into the
/// `thickness` channel; `keep` decides per triangle from its three `attr`
/// values whether it is drawn.
pub fn rasterize_surface(
    surface: &ScalarField2D,
    normals: &NormalField,
    attr: &ScalarField2D,
    cam: &Camera,
    keep: impl Fn(f64, f64, f64) -> bool,
) -> WaterGBuffer {
    let (nx, ny) = surface.dims();
    let (w, h) = (cam.width, cam.height);
    let eye = cam.position();

    let world: Vec<Vec3> = (0..nx * ny)
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let c = surface.cell_center(i, j);
            Vec3::new(c.x, c.y, surface.data()[k])
        })
        .collect();
    let cam_pts: Vec<Vec3> = world.iter().map(|&p| cam.to_camera(p)).collect();

    let mut tris = Vec::new();
    let mut push = |ka: usize, kb: usize, kc: usize| {
        let ks = [ka, kb, kc];
        let ad = attr.data();
        if !keep(ad[ka], ad[kb], ad[kc]) {
            return;
        }
        if ks.iter().any(|&k| cam_pts[k].z <= NEAR) {
            return;
        }
        let n = (world[kb] - world[ka]).cross(world[kc] - world[ka]);
        if n.dot(world[ka] - eye) >= 0.0 {
            return;
        }
        let s = ks.map(|k| cam.project_cam(cam_pts[k]));
        let minx = s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let maxx = s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let miny = s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let maxy = s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        // Pixel centers at +0.5 inside the bounding box.
        let x0 = (minx - 0.5).ceil().max(0.0);
        let x1 = (maxx - 0.5).floor().min(w as f64 - 1.0);
        let y0 = (miny - 0.5).ceil().max(0.0);
        let y1 = (maxy - 0.5).floor().min(h as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            return;
        }
        let inv_z = ks.map(|k| 1.0 / cam_pts[k].z);
        let normal_over_z = [0, 1, 2].map(|m| normals.data()[ks[m]] * inv_z[m]);
        let attr_over_z = [0, 1, 2].map(|m| ad[ks[m]] * inv_z[m]);
        tris.push(Setup {
            s,
            inv_z,
            normal_over_z,
            attr_over_z,
            x0: x0 as usize,
            x1: x1 as usize,
            y0: y0 as usize,
            y1: y1 as usize,
        });
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let b = a + 1;
            let c = a + nx + 1;
            let d = a + nx;
            push(a, b, c);
            push(a, c, d);
        }
    }

    let bands = h.div_ceil(BAND_ROWS);
    let mut binned: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (t, tri) in tris.iter().enumerate() {
        for list in &mut binned[tri.y0 / BAND_ROWS..=tri.y1 / BAND_ROWS] {
            list.push(t as u32);
        }
    }

    let mut out = WaterGBuffer::empty(w, h);
    let band_len = BAND_ROWS * w;
    out.depth
        .data_mut()
        .par_chunks_mut(band_len)
        .zip(out.normal.data_mut().par_chunks_mut(band_len))
        .zip(out.thickness.data_mut().par_chunks_mut(band_len))
        .enumerate()
        .for_each(|(band, ((depth, normal), thick))| {
            let row0 = band * BAND_ROWS;
            let row1 = (row0 + BAND_ROWS).min(h) - 1;
            for &t in &binned[band] {
                let tri = &tris[t as usize];
                let [s0, s1, s2] = tri.s;
                let mut area = edge(s0, s1, s2);
                if area == 0.0 {
                    continue;
                }
                let sign = area.signum();
                area = area.abs();
                for y in tri.y0.max(row0)..=tri.y1.min(row1) {
                    let py = y as f64 + 0.5;
                    for x in tri.x0..=tri.x1 {
                        let p = Vec2::new(x as f64 + 0.5, py);
                        let w0 = sign * edge(s1, s2, p);
                        let w1 = sign * edge(s2, s0, p);
                        let w2 = sign * edge(s0, s1, p);
                        if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                            continue;
                        }
                        let (l0, l1, l2) = (w0 / area, w1 / area, w2 / area);
                        let iz = l0 * tri.inv_z[0] + l1 * tri.inv_z[1] + l2 * tri.inv_z[2];
                        let z = 1.0 / iz;
                        let k = (y - row0) * w + x;
                        if z < depth[k] {
                            depth[k] = z;
                            let n =
                                (tri.normal_over_z[0] * l0 + tri.normal_over_z[1] * l1 + tri.normal_over_z[2] * l2) * z;
                            normal[k] = n.normalize();
                            thick[k] =
                                (tri.attr_over_z[0] * l0 + tri.attr_over_z[1] * l1 + tri.attr_over_z[2] * l2) * z;
                        }
                    }
                }
            }
        });
    out
}
