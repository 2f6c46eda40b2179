//! Raindrop spawning, ballistic fall and collision against the ground and
//! occlusion layers.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ScalarField2D;
use crate::math::{Vec2, Vec3};
use crate::swe::Deposit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raindrop {
    pub pos: Vec3,
    pub vel: Vec3,
    pub radius: f64,
}

impl Raindrop {
    pub fn volume(&self) -> f64 {
        sphere_volume(self.radius)
    }
}

/// Where and how a drop struck the water or ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    pub pos: Vec3,
    pub vel: Vec3,
    pub radius: f64,
    pub cell: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RainParams {
    /// Drops per second per square meter.
    pub spawn_rate: f64,
    pub mean_radius: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Includes wind; z must be negative.
    pub fall_velocity: Vec3,
    /// Meters above the highest point of the surface or occluder.
    pub spawn_height: f64,
}

impl Default for RainParams {
    fn default() -> Self {
        Self {
            spawn_rate: 400.0,
            mean_radius: 0.002,
            min_radius: 0.0005,
            max_radius: 0.004,
            fall_velocity: Vec3::new(0.0, 0.0, -9.0),
            spawn_height: 2.0,
        }
    }
}

impl RainParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.spawn_rate >= 0.0 && self.spawn_rate.is_finite()) {
            return bad(format!("rain.spawn_rate must be >= 0, got {}", self.spawn_rate));
        }
        if !(0.0 < self.min_radius && self.min_radius <= self.mean_radius && self.mean_radius <= self.max_radius) {
            return bad(format!(
                "rain radii must satisfy 0 < min <= mean <= max, got {} / {} / {}",
                self.min_radius, self.mean_radius, self.max_radius
            ));
        }
        if !(self.fall_velocity.z < 0.0) || !self.fall_velocity.is_finite() {
            return bad(format!("rain.fall_velocity z must be negative, got {:?}", self.fall_velocity));
        }
        if !(self.spawn_height >= 0.0) {
            return bad(format!("rain.spawn_height must be >= 0, got {}", self.spawn_height));
        }
        Ok(())
    }

    /// Mean of the exponential radius distribution after clamping to
    /// `[min_radius, max_radius]`: `a + m·(e^{-a/m} − e^{-b/m})`.
    pub fn clamped_mean_radius(&self) -> f64 {
        let (a, b, m) = (self.min_radius, self.max_radius, self.mean_radius);
        a + m * ((-a / m).exp() - (-b / m).exp())
    }
}

/// Horizontal rectangle new drops appear over, and the reference altitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpawnRegion {
    pub min: Vec2,
    pub max: Vec2,
    pub z: f64,
}

impl SpawnRegion {
    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    /// The grid's full extent, `height` above the tallest of `eta` and `occlusion`.
    pub fn over(eta: &ScalarField2D, occlusion: &ScalarField2D, height: f64) -> Self {
        let (min, max) = eta.extent();
        Self { min, max, z: eta.max().max(occlusion.max()) + height }
    }
}

pub fn sphere_volume(r: f64) -> f64 {
    4.0 * PI * r * r * r / 3.0
}

/// New drops for one interval of length `dt`.
///
/// Random draws happen in a fixed order: the Poisson count, then every
/// radius, then each drop's position. Drops start up to one interval's fall
/// above the reference altitude so successive batches form a continuous
/// column rather than sheets.
pub fn spawn_raindrops<R: Rng + ?Sized>(
    params: &RainParams,
    region: &SpawnRegion,
    dt: f64,
    rng: &mut R,
) -> Vec<Raindrop> {
    let lambda = params.spawn_rate * region.area() * dt;
    if !(lambda > 0.0) {
        return Vec::new();
    }
    let count = match Poisson::new(lambda) {
        Ok(p) => p.sample(rng) as usize,
        Err(_) => return Vec::new(),
    };
    let exp = Exp::new(1.0 / params.mean_radius).expect("validated mean radius");
    let radii: Vec<f64> = (0..count).map(|_| exp.sample(rng).clamp(params.min_radius, params.max_radius)).collect();
    let span = Vec2::new(region.max.x - region.min.x, region.max.y - region.min.y);
    let column = -params.fall_velocity.z * dt;
    radii
        .into_iter()
        .map(|radius| {
            let x = region.min.x + rng.random::<f64>() * span.x;
            let y = region.min.y + rng.random::<f64>() * span.y;
            let z = region.z + rng.random::<f64>() * column;
            Raindrop { pos: Vec3::new(x, y, z), vel: params.fall_velocity, radius }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdvanceOutcome {
    pub survivors: Vec<Raindrop>,
    pub deposits: Vec<Deposit>,
    pub impacts: Vec<Impact>,
    /// Drops removed by the occlusion layer.
    pub occluded: usize,
    /// Drops that left the horizontal domain.
    pub escaped: usize,
}

/// Move every drop by `vel·dt` and resolve collisions.
///
/// A drop at or below `η` in its cell deposits `4πr³/(3·dx²)` there. A drop
/// still above `η` that crossed the occlusion height during this step is
/// absorbed without a deposit.
pub fn advance_raindrops(
    drops: &[Raindrop],
    eta: &ScalarField2D,
    occlusion: &ScalarField2D,
    dt: f64,
) -> AdvanceOutcome {
    let dx2 = eta.dx() * eta.dx();
    let mut out = AdvanceOutcome::default();
    for drop in drops {
        let prev_z = drop.pos.z;
        let pos = drop.pos + drop.vel * dt;
        let Some(cell) = eta.cell_of(pos.xy()) else {
            out.escaped += 1;
            continue;
        };
        let surface = eta.get(cell.0, cell.1);
        let occluder = occlusion.get(cell.0, cell.1);
        if pos.z <= surface {
            out.deposits.push(Deposit { cell, depth: sphere_volume(drop.radius) / dx2 });
            out.impacts.push(Impact {
                pos: Vec3::new(pos.x, pos.y, surface),
                vel: drop.vel,
                radius: drop.radius,
                cell,
            });
        } else if pos.z <= occluder && prev_z > occluder {
            out.occluded += 1;
        } else {
            out.survivors.push(Raindrop { pos, ..*drop });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(nx: usize, dx: f64, v: f64) -> ScalarField2D {
        ScalarField2D::filled(nx, nx, dx, Vec2::ZERO, v).unwrap()
    }

    fn drop_at(x: f64, y: f64, z: f64, r: f64) -> Raindrop {
        Raindrop { pos: Vec3::new(x, y, z), vel: Vec3::new(0.0, 0.0, -8.0), radius: r }
    }

    #[test]
    fn zero_rate_spawns_nothing() {
        let params = RainParams { spawn_rate: 0.0, ..Default::default() };
        let region = SpawnRegion { min: Vec2::ZERO, max: Vec2::new(4.0, 4.0), z: 5.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(spawn_raindrops(&params, &region, 0.1, &mut rng).is_empty());
    }

    #[test]
    fn degenerate_radius_range_is_exact() {
        let params = RainParams { min_radius: 0.002, mean_radius: 0.002, max_radius: 0.002, ..Default::default() };
        let region = SpawnRegion { min: Vec2::ZERO, max: Vec2::new(2.0, 2.0), z: 5.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let drops = spawn_raindrops(&params, &region, 0.1, &mut rng);
        assert!(!drops.is_empty());
        assert!(drops.iter().all(|d| d.radius == 0.002));
        assert!(drops.iter().all(|d| d.pos.x >= 0.0 && d.pos.x <= 2.0 && d.pos.z >= 5.0));
    }

    #[test]
    fn same_seed_same_stream() {
        let params = RainParams::default();
        let region = SpawnRegion { min: Vec2::ZERO, max: Vec2::new(3.0, 2.0), z: 1.0 };
        let a = spawn_raindrops(&params, &region, 0.05, &mut ChaCha8Rng::seed_from_u64(9));
        let b = spawn_raindrops(&params, &region, 0.05, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn falling_drop_survives_above_surface() {
        let eta = flat(8, 0.5, 0.0);
        let out = advance_raindrops(&[drop_at(1.0, 1.0, 10.0, 0.002)], &eta, &eta, 0.01);
        assert_eq!(out.survivors.len(), 1);
        assert!((out.survivors[0].pos.z - (10.0 - 0.08)).abs() < 1e-12);
        assert!(out.deposits.is_empty());
    }

    #[test]
    fn ground_hit_deposits_sphere_volume() {
        let eta = flat(8, 0.05, 0.0);
        let out = advance_raindrops(&[drop_at(0.1, 0.1, 0.01, 0.01)], &eta, &eta, 0.01);
        assert!(out.survivors.is_empty());
        assert_eq!(out.deposits.len(), 1);
        assert_eq!(out.deposits[0].cell, (2, 2));
        assert!((out.deposits[0].depth - 1.675516e-3).abs() < 1e-9);
        assert_eq!(out.impacts[0].pos.z, 0.0);
    }

    #[test]
    fn occluder_absorbs_without_deposit() {
        let eta = flat(8, 0.5, 0.5);
        let occ = flat(8, 0.5, 3.0);
        // Crosses 3.0 during this step and ends at z = 1.0 > η.
        let d = Raindrop { pos: Vec3::new(1.0, 1.0, 3.05), vel: Vec3::new(0.0, 0.0, -205.0), radius: 0.002 };
        let out = advance_raindrops(&[d], &eta, &occ, 0.01);
        assert!(out.survivors.is_empty() && out.deposits.is_empty());
        assert_eq!(out.occluded, 1);
    }

    #[test]
    fn drops_below_occluder_keep_falling() {
        let eta = flat(8, 0.5, 0.5);
        let occ = flat(8, 0.5, 3.0);
        let out = advance_raindrops(&[drop_at(1.0, 1.0, 1.5, 0.002)], &eta, &occ, 0.01);
        assert_eq!(out.survivors.len(), 1);
    }

    #[test]
    fn leaving_domain_removes_drop() {
        let eta = flat(4, 1.0, 0.0);
        let d = Raindrop { pos: Vec3::new(3.4, 1.0, 5.0), vel: Vec3::new(10.0, 0.0, -1.0), radius: 0.002 };
        let out = advance_raindrops(&[d], &eta, &eta, 0.1);
        assert_eq!(out.escaped, 1);
        assert!(out.survivors.is_empty() && out.deposits.is_empty());
    }

    #[test]
    fn validation() {
        assert!(RainParams::default().validate().is_ok());
        let p = RainParams { fall_velocity: Vec3::new(0.0, 0.0, 1.0), ..Default::default() };
        assert!(p.validate().is_err());
        let p = RainParams { min_radius: 0.01, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
