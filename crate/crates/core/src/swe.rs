//! Explicit shallow-water step on a closed MAC grid.
//!
//! One step runs, in order: semi-Lagrangian velocity advection and upwind
//! height advection (both from the start-of-step state), the small-depth
//! clamp, surface construction `η = H + h`, rain deposits, the pressure
//! update `u ← u − Δt·g·∇η`, and velocity extrapolation into dry cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{bilerp, ScalarField2D, StaggeredVelocityField};

/// Depths below this are zeroed after advection.
pub const CLAMP_THRESHOLD: f64 = 1e-6;

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Fraction of the cell-crossing time a substep may use.
const CFL_SAFETY: f64 = 0.5;

/// Water added to one cell by a raindrop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deposit {
    pub cell: (usize, usize),
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweState {
    pub ground: ScalarField2D,
    pub occlusion: ScalarField2D,
    pub depth: ScalarField2D,
    pub vel: StaggeredVelocityField,
    pub gravity: f64,
    pub time: f64,
}

/// Bookkeeping for one call to [`SweState::step`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub substeps: usize,
    /// Total depth added by deposits.
    pub deposited: f64,
    /// Total depth removed by the small-depth clamp (negative if the clamp
    /// removed round-off undershoot).
    pub clamp_loss: f64,
    /// Largest `max|u|·dt_sub/dx` observed after any substep.
    pub max_cfl: f64,
}

impl SweState {
    /// Dry state over `ground`, occlusion defaulting to the ground itself.
    pub fn new(ground: ScalarField2D, occlusion: Option<ScalarField2D>, gravity: f64) -> Result<Self> {
        if !(gravity > 0.0) {
            return Err(Error::Config(format!("gravity must be positive, got {gravity}")));
        }
        if !ground.all_finite() {
            return Err(Error::Config("ground height has non-finite samples".into()));
        }
        let occlusion = match occlusion {
            Some(occ) => {
                occ.check_same_shape(&ground, "occlusion vs ground")?;
                if let Some(k) = occ.data().iter().zip(ground.data()).position(|(o, g)| o < g) {
                    return Err(Error::Config(format!(
                        "occlusion height below ground at cell ({}, {})",
                        k % ground.nx(),
                        k / ground.nx()
                    )));
                }
                occ
            }
            None => ground.clone(),
        };
        let depth = ground.map(|_| 0.0);
        let vel = StaggeredVelocityField::zeros_like(&ground);
        Ok(Self { ground, occlusion, depth, vel, gravity, time: 0.0 })
    }

    pub fn eta(&self) -> ScalarField2D {
        construct_eta_unchecked(&self.ground, &self.depth)
    }

    pub fn total_depth(&self) -> f64 {
        self.depth.sum()
    }

    /// Largest stable substep for the current state.
    pub fn stable_dt(&self) -> f64 {
        let wave = (self.gravity * self.depth.max().max(0.0)).sqrt();
        CFL_SAFETY * self.depth.dx() / (self.vel.max_abs() + wave + 1e-9)
    }

    /// Advance by `dt`, substepping as needed for stability. Deposits are
    /// applied once, in the first substep.
    pub fn step(&mut self, dt: f64, deposits: &[Deposit]) -> Result<StepReport> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        for d in deposits {
            if !(d.depth >= 0.0) {
                return Err(Error::Config(format!("negative deposit {} at {:?}", d.depth, d.cell)));
            }
            if d.cell.0 >= self.depth.nx() || d.cell.1 >= self.depth.ny() {
                return Err(Error::Config(format!("deposit cell {:?} outside the grid", d.cell)));
            }
        }

        let mut report = StepReport::default();
        let mut remaining = dt;
        let mut first = true;
        while remaining > 0.0 {
            let mut sub = self.stable_dt().min(remaining);
            // Avoid a sliver substep from floating-point leftovers.
            if remaining - sub < 1e-12 * dt {
                sub = remaining;
            }
            let pending: &[Deposit] = if first { deposits } else { &[] };
            self.substep(sub, pending, &mut report);
            report.max_cfl = report.max_cfl.max(self.vel.max_abs() * sub / self.depth.dx());
            report.substeps += 1;
            remaining -= sub;
            first = false;
        }
        Ok(report)
    }

    fn substep(&mut self, dt: f64, deposits: &[Deposit], report: &mut StepReport) {
        let mut depth = advect_height_upwind(&self.depth, &self.vel, dt);
        report.clamp_loss += clamp_height(&mut depth);
        let eta = construct_eta_unchecked(&self.ground, &depth);
        for d in deposits {
            let (i, j) = d.cell;
            let k = depth.index(i, j);
            depth.data_mut()[k] += d.depth;
            report.deposited += d.depth;
        }
        // Faces away from the water are rebuilt by extrapolation below, so
        // only faces touching a wet cell are advected.
        let wet: Vec<bool> = depth.data().iter().map(|&d| d > 0.0).collect();
        let mut vel = self.vel.clone();
        advect_velocity_masked(&self.vel, &mut vel, dt, &wet);
        pressure_in_place(&mut vel, &eta, dt, self.gravity);
        block_dry_walls(&mut vel, &self.ground, &depth, &eta);
        extrapolate_in_place(&mut vel, &wet);
        self.vel = vel;
        self.depth = depth;
        self.time += dt;
    }
}

/// Semi-Lagrangian advection of the staggered velocity by itself.
pub fn advect_velocity_semilagrangian(vel: &StaggeredVelocityField, dt: f64) -> StaggeredVelocityField {
    let mut out = vel.clone();
    advect_velocity_masked(vel, &mut out, dt, &vec![true; vel.nx() * vel.ny()]);
    out
}

/// Advect the interior faces bordering at least one `wet` cell into `out`;
/// other faces of `out` are left as they are.
fn advect_velocity_masked(vel: &StaggeredVelocityField, out: &mut StaggeredVelocityField, dt: f64, wet: &[bool]) {
    let (nx, ny) = (vel.nx(), vel.ny());
    // Back-traces run in face-index coordinates, where face (i, j) sits at
    // (i, j) of its own lattice.
    let c = dt / vel.dx();
    let (u, v) = (vel.u_data(), vel.v_data());
    for j in 0..ny {
        let row = &wet[j * nx..(j + 1) * nx];
        for i in 1..nx {
            if row[i - 1] || row[i] {
                let back_i = i as f64 - c * vel.u(i, j);
                let back_j = j as f64 - c * vel.v_at_u_face(i, j);
                out.set_u(i, j, bilerp(u, nx + 1, ny, back_i, back_j));
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            if wet[(j - 1) * nx + i] || wet[j * nx + i] {
                let back_i = i as f64 - c * vel.u_at_v_face(i, j);
                let back_j = j as f64 - c * vel.v(i, j);
                out.set_v(i, j, bilerp(v, nx, ny + 1, back_i, back_j));
            }
        }
    }
    out.zero_boundary();
}

/// First-order upwind transport of `h` in conservative flux form.
///
/// A cell's combined outflow is scaled down when it would exceed the water
/// the cell holds, so depths stay non-negative. Boundary faces carry no flux.
pub fn advect_height_upwind(h: &ScalarField2D, vel: &StaggeredVelocityField, dt: f64) -> ScalarField2D {
    let (nx, ny) = h.dims();
    let c = dt / h.dx();
    let hd = h.data();

    let mut limiter = vec![1.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let speed_out =
                vel.u(i + 1, j).max(0.0) + (-vel.u(i, j)).max(0.0) + vel.v(i, j + 1).max(0.0) + (-vel.v(i, j)).max(0.0);
            let out = c * speed_out * hd[k];
            if out > hd[k] {
                // Slightly under one, so rounding in the separate face
                // fluxes cannot leave a negative residue.
                limiter[k] = hd[k] / out * (1.0 - 1e-12);
            }
        }
    }

    let mut next = h.clone();
    let nd = next.data_mut();
    let flux = |speed: f64, k: usize| c * speed * hd[k] * limiter[k];
    for j in 0..ny {
        for i in 1..nx {
            let uf = vel.u(i, j);
            let (l, r) = (j * nx + i - 1, j * nx + i);
            if uf > 0.0 {
                let f = flux(uf, l);
                nd[l] -= f;
                nd[r] += f;
            } else if uf < 0.0 {
                let f = flux(-uf, r);
                nd[r] -= f;
                nd[l] += f;
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let vf = vel.v(i, j);
            let (b, t) = ((j - 1) * nx + i, j * nx + i);
            if vf > 0.0 {
                let f = flux(vf, b);
                nd[b] -= f;
                nd[t] += f;
            } else if vf < 0.0 {
                let f = flux(-vf, t);
                nd[t] -= f;
                nd[b] += f;
            }
        }
    }
    next
}

/// Zero every depth below [`CLAMP_THRESHOLD`]; returns the removed total.
pub fn clamp_height(h: &mut ScalarField2D) -> f64 {
    let mut removed = 0.0;
    for v in h.data_mut() {
        if *v < CLAMP_THRESHOLD {
            removed += *v;
            *v = 0.0;
        }
    }
    removed
}

/// Water surface elevation `η = H + h`.
pub fn construct_eta(ground: &ScalarField2D, h: &ScalarField2D) -> Result<ScalarField2D> {
    ground.check_same_shape(h, "ground vs water depth")?;
    Ok(construct_eta_unchecked(ground, h))
}

fn construct_eta_unchecked(ground: &ScalarField2D, h: &ScalarField2D) -> ScalarField2D {
    let mut eta = ground.clone();
    for (e, d) in eta.data_mut().iter_mut().zip(h.data()) {
        *e += *d;
    }
    eta
}

/// Gravity-driven acceleration from face differences of the surface.
pub fn apply_pressure(vel: &StaggeredVelocityField, eta: &ScalarField2D, dt: f64, g: f64) -> StaggeredVelocityField {
    let mut out = vel.clone();
    pressure_in_place(&mut out, eta, dt, g);
    out
}

fn pressure_in_place(vel: &mut StaggeredVelocityField, eta: &ScalarField2D, dt: f64, g: f64) {
    let (nx, ny) = eta.dims();
    let k = dt * g / eta.dx();
    let e = eta.data();
    let u = vel.u_data_mut();
    for j in 0..ny {
        let (er, ur) = (&e[j * nx..(j + 1) * nx], &mut u[j * (nx + 1)..(j + 1) * (nx + 1)]);
        for i in 1..nx {
            ur[i] -= k * (er[i] - er[i - 1]);
        }
    }
    let v = vel.v_data_mut();
    for j in 1..ny {
        for i in 0..nx {
            v[j * nx + i] -= k * (e[j * nx + i] - e[(j - 1) * nx + i]);
        }
    }
}

/// Zero faces between a wet cell and a dry neighbour whose ground rises
/// above the water surface: nothing can flow out of such a cell, and the
/// pressure update would otherwise accelerate the face without bound.
fn block_dry_walls(vel: &mut StaggeredVelocityField, ground: &ScalarField2D, h: &ScalarField2D, eta: &ScalarField2D) {
    let (nx, ny) = h.dims();
    let wall = |dry: (usize, usize), wet: (usize, usize)| {
        h.get(dry.0, dry.1) == 0.0 && h.get(wet.0, wet.1) > 0.0 && ground.get(dry.0, dry.1) >= eta.get(wet.0, wet.1)
    };
    for j in 0..ny {
        for i in 1..nx {
            let (l, r) = ((i - 1, j), (i, j));
            if wall(l, r) || wall(r, l) {
                vel.set_u(i, j, 0.0);
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (b, t) = ((i, j - 1), (i, j));
            if wall(b, t) || wall(t, b) {
                vel.set_v(i, j, 0.0);
            }
        }
    }
}

/// Copy velocities from faces bordering wet cells (`h > 0`) outward into
/// the dry region, breadth-first over face adjacency. With no wet cell all
/// faces become zero. Boundary faces stay zero.
pub fn extrapolate_velocity(vel: &StaggeredVelocityField, h: &ScalarField2D) -> StaggeredVelocityField {
    let wet: Vec<bool> = h.data().iter().map(|&d| d > 0.0).collect();
    let mut out = vel.clone();
    extrapolate_in_place(&mut out, &wet);
    out
}

fn extrapolate_in_place(vel: &mut StaggeredVelocityField, wet: &[bool]) {
    let (nx, ny) = (vel.nx(), vel.ny());
    if !wet.iter().any(|&w| w) {
        vel.u_data_mut().fill(0.0);
        vel.v_data_mut().fill(0.0);
        return;
    }
    // u-faces: interior i in 1..nx, all j.
    let u_known = |i: usize, j: usize| wet[j * nx + i - 1] || wet[j * nx + i];
    flood_fill(vel.u_data_mut(), nx + 1, (1, nx), (0, ny), u_known);
    // v-faces: interior j in 1..ny, all i.
    let v_known = |i: usize, j: usize| wet[(j - 1) * nx + i] || wet[j * nx + i];
    flood_fill(vel.v_data_mut(), nx, (0, nx), (1, ny), v_known);
    vel.zero_boundary();
}

/// Multi-source BFS over the face rectangle `[i0, i1) × [j0, j1)` of a
/// `w`-wide face array, propagating values from `known` faces. Neighbours
/// are visited left, right, below, above.
fn flood_fill(
    data: &mut [f64],
    w: usize,
    (i0, i1): (usize, usize),
    (j0, j1): (usize, usize),
    known: impl Fn(usize, usize) -> bool,
) {
    // Work on a copy with a one-face border marked visited, so neighbour
    // indices need no range checks.
    let pw = i1 - i0 + 2;
    let ph = j1 - j0 + 2;
    let mut buf = vec![0.0; pw * ph];
    let mut visited = vec![true; pw * ph];
    let mut queue: Vec<u32> = Vec::with_capacity(pw * ph);
    for j in j0..j1 {
        let row = (j - j0 + 1) * pw + 1;
        buf[row..row + (i1 - i0)].copy_from_slice(&data[j * w + i0..j * w + i1]);
        for i in i0..i1 {
            let k = row + i - i0;
            if known(i, j) {
                queue.push(k as u32);
            } else {
                visited[k] = false;
            }
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let k = queue[head] as usize;
        head += 1;
        let value = buf[k];
        for n in [k - 1, k + 1, k - pw, k + pw] {
            if !visited[n] {
                visited[n] = true;
                buf[n] = value;
                queue.push(n as u32);
            }
        }
    }
    for j in j0..j1 {
        let row = (j - j0 + 1) * pw + 1;
        data[j * w + i0..j * w + i1].copy_from_slice(&buf[row..row + (i1 - i0)]);
    }
}
