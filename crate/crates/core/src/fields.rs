//! Uniform-grid containers: cell-centered scalar fields and the staggered
//! (MAC) velocity field, with the interpolation and differencing helpers the
//! solver and the renderer share.
//!
//! Layout: cell `(i, j)` has its center at `origin + (i·dx, j·dx)`, `i` along
//! world x and `j` along world y. Storage is row-major in `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Vec2, Vec3};

/// A `nx × ny` grid of cell-centered samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2<T> {
    nx: usize,
    ny: usize,
    dx: f64,
    origin: Vec2,
    data: Vec<T>,
}

pub type ScalarField2D = Grid2<f64>;
pub type NormalField = Grid2<Vec3>;

impl<T: Copy> Grid2<T> {
    pub fn filled(nx: usize, ny: usize, dx: f64, origin: Vec2, value: T) -> Result<Self> {
        Self::from_vec(nx, ny, dx, origin, vec![value; nx * ny])
    }

    pub fn from_vec(nx: usize, ny: usize, dx: f64, origin: Vec2, data: Vec<T>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Config(format!("grid must be at least 2×2, got {nx}×{ny}")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {dx}")));
        }
        if data.len() != nx * ny {
            return Err(Error::Config(format!("grid data has {} samples, expected {}", data.len(), nx * ny)));
        }
        Ok(Self { nx, ny, dx, origin, data })
    }

    /// A grid with the same geometry and new contents produced per cell.
    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid2<U> {
        Grid2 {
            nx: self.nx,
            ny: self.ny,
            dx: self.dx,
            origin: self.origin,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn from_fn(like: &Grid2<impl Copy>, f: impl Fn(usize, usize) -> T) -> Grid2<T> {
        let mut data = Vec::with_capacity(like.nx * like.ny);
        for j in 0..like.ny {
            for i in 0..like.nx {
                data.push(f(i, j));
            }
        }
        Grid2 { nx: like.nx, ny: like.ny, dx: like.dx, origin: like.origin, data }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.index(i, j);
        self.data[k] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.origin.x + i as f64 * self.dx, self.origin.y + j as f64 * self.dx)
    }

    /// Cell containing world point `p` (cells span ±dx/2 around their
    /// centers), or `None` outside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fi = ((p.x - self.origin.x) / self.dx + 0.5).floor();
        let fj = ((p.y - self.origin.y) / self.dx + 0.5).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    /// World-space area covered by the cells.
    pub fn extent(&self) -> (Vec2, Vec2) {
        let h = 0.5 * self.dx;
        let lo = Vec2::new(self.origin.x - h, self.origin.y - h);
        let hi = Vec2::new(
            self.origin.x + (self.nx as f64 - 0.5) * self.dx,
            self.origin.y + (self.ny as f64 - 0.5) * self.dx,
        );
        (lo, hi)
    }

    pub fn same_shape<U>(&self, other: &Grid2<U>) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.dx == other.dx && self.origin == other.origin
    }

    pub fn check_same_shape<U>(&self, other: &Grid2<U>, what: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what, left: self.dims(), right: (other.nx, other.ny) })
        }
    }
}

impl ScalarField2D {
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear interpolation of cell-center samples; `p` is clamped to the
    /// rectangle spanned by the outermost centers.
    pub fn sample_bilinear(&self, p: Vec2) -> f64 {
        bilerp(&self.data, self.nx, self.ny, (p.x - self.origin.x) / self.dx, (p.y - self.origin.y) / self.dx)
    }

    /// Per-cell central differences, one-sided on the boundary.
    pub fn gradient_central(&self) -> (ScalarField2D, ScalarField2D) {
        let (nx, ny, dx) = (self.nx, self.ny, self.dx);
        let gx = Grid2::from_fn(self, |i, j| {
            if i == 0 {
                (self.get(1, j) - self.get(0, j)) / dx
            } else if i == nx - 1 {
                (self.get(nx - 1, j) - self.get(nx - 2, j)) / dx
            } else {
                (self.get(i + 1, j) - self.get(i - 1, j)) / (2.0 * dx)
            }
        });
        let gy = Grid2::from_fn(self, |i, j| {
            if j == 0 {
                (self.get(i, 1) - self.get(i, 0)) / dx
            } else if j == ny - 1 {
                (self.get(i, ny - 1) - self.get(i, ny - 2)) / dx
            } else {
                (self.get(i, j + 1) - self.get(i, j - 1)) / (2.0 * dx)
            }
        });
        (gx, gy)
    }

    /// Unit surface normals `normalize(-∂η/∂x, -∂η/∂y, 1)`.
    pub fn normal_from_height(&self) -> NormalField {
        let (gx, gy) = self.gradient_central();
        Grid2::from_fn(self, |i, j| Vec3::new(-gx.get(i, j), -gy.get(i, j), 1.0).normalize())
    }

    pub fn add(&self, other: &ScalarField2D) -> Result<ScalarField2D> {
        self.check_same_shape(other, "field addition")?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(out)
    }
}

/// Bilinear lookup in a row-major `w × h` node array at fractional node
/// coordinates `(gx, gy)`, clamped to the node rectangle.
#[inline]
pub(crate) fn bilerp(data: &[f64], w: usize, h: usize, gx: f64, gy: f64) -> f64 {
    let gx = gx.clamp(0.0, (w - 1) as f64);
    let gy = gy.clamp(0.0, (h - 1) as f64);
    let i0 = (gx as usize).min(w - 2);
    let j0 = (gy as usize).min(h - 2);
    let tx = gx - i0 as f64;
    let ty = gy - j0 as f64;
    let k = j0 * w + i0;
    let a = data[k] * (1.0 - tx) + data[k + 1] * tx;
    let b = data[k + w] * (1.0 - tx) + data[k + w + 1] * tx;
    a * (1.0 - ty) + b * ty
}

/// Velocity on a staggered (MAC) grid: x-velocity on vertical faces,
/// y-velocity on horizontal faces.
///
/// u-face `(i, j)`, `i ∈ 0..=nx`, sits between cells `(i-1, j)` and `(i, j)`.
/// v-face `(i, j)`, `j ∈ 0..=ny`, sits between cells `(i, j-1)` and `(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaggeredVelocityField {
    nx: usize,
    ny: usize,
    dx: f64,
    origin: Vec2,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl StaggeredVelocityField {
    pub fn zeros_like<T: Copy>(grid: &Grid2<T>) -> Self {
        let (nx, ny) = grid.dims();
        Self { nx, ny, dx: grid.dx(), origin: grid.origin(), u: vec![0.0; (nx + 1) * ny], v: vec![0.0; nx * (ny + 1)] }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn matches<T: Copy>(&self, grid: &Grid2<T>) -> bool {
        self.nx == grid.nx() && self.ny == grid.ny() && self.dx == grid.dx() && self.origin == grid.origin()
    }

    #[inline]
    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[j * (self.nx + 1) + i]
    }

    #[inline]
    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.nx + i]
    }

    #[inline]
    pub fn set_u(&mut self, i: usize, j: usize, val: f64) {
        let nx = self.nx;
        self.u[j * (nx + 1) + i] = val;
    }

    #[inline]
    pub fn set_v(&mut self, i: usize, j: usize, val: f64) {
        let nx = self.nx;
        self.v[j * nx + i] = val;
    }

    pub fn u_data(&self) -> &[f64] {
        &self.u
    }

    pub fn v_data(&self) -> &[f64] {
        &self.v
    }

    pub fn u_data_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub fn v_data_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn u_face_position(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.origin.x + (i as f64 - 0.5) * self.dx, self.origin.y + j as f64 * self.dx)
    }

    pub fn v_face_position(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.origin.x + i as f64 * self.dx, self.origin.y + (j as f64 - 0.5) * self.dx)
    }

    /// Bilinear sample of the x-velocity component at a world point.
    pub fn sample_u(&self, p: Vec2) -> f64 {
        bilerp(&self.u, self.nx + 1, self.ny, (p.x - self.origin.x) / self.dx + 0.5, (p.y - self.origin.y) / self.dx)
    }

    /// Bilinear sample of the y-velocity component at a world point.
    pub fn sample_v(&self, p: Vec2) -> f64 {
        bilerp(&self.v, self.nx, self.ny + 1, (p.x - self.origin.x) / self.dx, (p.y - self.origin.y) / self.dx + 0.5)
    }

    /// y-velocity at u-face `(i, j)`, averaged from its four neighbouring v-faces.
    pub fn v_at_u_face(&self, i: usize, j: usize) -> f64 {
        let il = i.saturating_sub(1);
        let ir = i.min(self.nx - 1);
        0.25 * (self.v(il, j) + self.v(ir, j) + self.v(il, j + 1) + self.v(ir, j + 1))
    }

    /// x-velocity at v-face `(i, j)`, averaged from its four neighbouring u-faces.
    pub fn u_at_v_face(&self, i: usize, j: usize) -> f64 {
        let jb = j.saturating_sub(1);
        let jt = j.min(self.ny - 1);
        0.25 * (self.u(i, jb) + self.u(i + 1, jb) + self.u(i, jt) + self.u(i + 1, jt))
    }

    /// Zero the normal velocity on the outer boundary.
    pub fn zero_boundary(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            self.set_u(0, j, 0.0);
            self.set_u(nx, j, 0.0);
        }
        for i in 0..nx {
            self.set_v(i, 0, 0.0);
            self.set_v(i, ny, 0.0);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    pub fn boundary_is_zero(&self) -> bool {
        (0..self.ny).all(|j| self.u(0, j) == 0.0 && self.u(self.nx, j) == 0.0)
            && (0..self.nx).all(|i| self.v(i, 0) == 0.0 && self.v(i, self.ny) == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Velocity vector at a cell center (face average).
    pub fn cell_velocity(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(0.5 * (self.u(i, j) + self.u(i + 1, j)), 0.5 * (self.v(i, j) + self.v(i, j + 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_from(nx: usize, ny: usize, dx: f64, f: impl Fn(f64, f64) -> f64) -> ScalarField2D {
        let base = ScalarField2D::filled(nx, ny, dx, Vec2::ZERO, 0.0).unwrap();
        Grid2::from_fn(&base, |i, j| f(i as f64 * dx, j as f64 * dx))
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(ScalarField2D::filled(1, 4, 1.0, Vec2::ZERO, 0.0).is_err());
        assert!(ScalarField2D::filled(4, 4, 0.0, Vec2::ZERO, 0.0).is_err());
        assert!(ScalarField2D::from_vec(2, 2, 1.0, Vec2::ZERO, vec![0.0; 3]).is_err());
    }

    #[test]
    fn bilinear_constant_field() {
        let f = ScalarField2D::filled(5, 3, 0.3, Vec2::new(1.0, -2.0), 2.5).unwrap();
        for p in [Vec2::new(0.0, 0.0), Vec2::new(1.4, -1.7), Vec2::new(100.0, 100.0)] {
            assert_eq!(f.sample_bilinear(p), 2.5);
        }
    }

    #[test]
    fn bilinear_reproduces_every_center_exactly() {
        let f = field_from(6, 5, 0.25, |x, y| (3.0 * x).sin() + y * y - 0.1 * x * y);
        for j in 0..5 {
            for i in 0..6 {
                assert_eq!(f.sample_bilinear(f.cell_center(i, j)), f.get(i, j), "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn bilinear_midpoint_of_linear_field() {
        let f = field_from(4, 4, 1.0, |x, _| x);
        let p = Vec2::new(1.5, 2.0);
        assert_eq!(f.sample_bilinear(p), 0.5 * (f.get(1, 2) + f.get(2, 2)));
    }

    #[test]
    fn bilinear_clamps_outside() {
        let f = field_from(4, 4, 1.0, |x, y| x + 10.0 * y);
        assert_eq!(f.sample_bilinear(Vec2::new(-5.0, -5.0)), f.get(0, 0));
        assert_eq!(f.sample_bilinear(Vec2::new(9.0, 9.0)), f.get(3, 3));
    }

    #[test]
    fn gradient_of_linear_fields() {
        let c = ScalarField2D::filled(5, 5, 0.1, Vec2::ZERO, 3.0).unwrap();
        let (gx, gy) = c.gradient_central();
        assert!(gx.data().iter().chain(gy.data()).all(|&g| g == 0.0));

        let f = field_from(6, 6, 0.1, |x, y| 0.1 * x + 0.2 * y);
        let (gx, gy) = f.gradient_central();
        for j in 1..5 {
            for i in 1..5 {
                assert!((gx.get(i, j) - 0.1).abs() < 1e-12);
                assert!((gy.get(i, j) - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normals_of_planes() {
        let flat = ScalarField2D::filled(4, 4, 0.5, Vec2::ZERO, 1.0).unwrap();
        assert!(flat.normal_from_height().data().iter().all(|&n| n == Vec3::Z));

        let f = field_from(6, 6, 0.2, |x, y| 0.1 * x + 0.1 * y);
        let want = Vec3::new(-0.1, -0.1, 1.0).normalize();
        for n in f.normal_from_height().data() {
            assert!((*n - want).length() < 1e-12);
        }
        let f = field_from(6, 6, 0.2, |x, _| 0.1 * x);
        let want = Vec3::new(-0.1, 0.0, 1.0).normalize();
        for n in f.normal_from_height().data() {
            assert!((*n - want).length() < 1e-12);
        }
    }

    #[test]
    fn cell_lookup_uses_cell_extent() {
        let f = ScalarField2D::filled(4, 3, 1.0, Vec2::ZERO, 0.0).unwrap();
        assert_eq!(f.cell_of(Vec2::new(0.49, -0.5)), Some((0, 0)));
        assert_eq!(f.cell_of(Vec2::new(0.5, 0.0)), Some((1, 0)));
        assert_eq!(f.cell_of(Vec2::new(3.49, 2.49)), Some((3, 2)));
        assert_eq!(f.cell_of(Vec2::new(3.5, 0.0)), None);
        assert_eq!(f.cell_of(Vec2::new(-0.51, 0.0)), None);
    }

    #[test]
    fn staggered_sampling_hits_face_values() {
        let grid = ScalarField2D::filled(3, 4, 0.5, Vec2::new(1.0, 1.0), 0.0).unwrap();
        let mut vel = StaggeredVelocityField::zeros_like(&grid);
        for j in 0..4 {
            for i in 0..=3 {
                vel.set_u(i, j, (i * 10 + j) as f64);
            }
        }
        for j in 0..=4 {
            for i in 0..3 {
                vel.set_v(i, j, -((i * 10 + j) as f64));
            }
        }
        for j in 0..4 {
            for i in 0..=3 {
                assert_eq!(vel.sample_u(vel.u_face_position(i, j)), vel.u(i, j));
            }
        }
        for j in 0..=4 {
            for i in 0..3 {
                assert_eq!(vel.sample_v(vel.v_face_position(i, j)), vel.v(i, j));
            }
        }
        vel.zero_boundary();
        assert!(vel.boundary_is_zero());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bilinear_is_exact_on_affine_fields(
                a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64,
                px in 0.0..1.0f64, py in 0.0..1.0f64,
            ) {
                let dx = 0.37;
                let f = field_from(7, 6, dx, |x, y| a + b * x + c * y);
                let p = Vec2::new(px * 6.0 * dx, py * 5.0 * dx);
                let exact = a + b * p.x + c * p.y;
                prop_assert!((f.sample_bilinear(p) - exact).abs() < 1e-12 * (1.0 + exact.abs()) * 10.0);
            }

            #[test]
            fn normals_are_unit_with_positive_z(seed in proptest::collection::vec(-3.0..3.0f64, 30)) {
                let base = ScalarField2D::filled(6, 5, 0.1, Vec2::ZERO, 0.0).unwrap();
                let f = Grid2::from_fn(&base, |i, j| seed[(i + 6 * j) % 30]);
                for n in f.normal_from_height().data() {
                    prop_assert!((n.length() - 1.0).abs() < 1e-9);
                    prop_assert!(n.z > 0.0);
                }
            }
        }
    }
}
