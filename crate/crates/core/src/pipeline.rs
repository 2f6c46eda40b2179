//! Frame orchestration: rain and water simulation, the water and rain
//! passes, their blend, and writing sequences to disk.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::fields::ScalarField2D;
use crate::image::{DepthImage, RgbImage};
use crate::protocol::LiveParams;
use crate::rain::{advance_raindrops, spawn_raindrops, RainParams, Raindrop, SpawnRegion};
use crate::rain_render::{composite_rain_pass, splat_splashes, splat_streaks, RainPass, Splash};
use crate::scene::{field_pfm, image_pfm, AuxView, SceneBundle, Sun};
use crate::shading::{blend_passes, compose_water_pass_tiled, DepthTiles};
use crate::swe::SweState;
use crate::water_view::{rasterize_water, WaterGBuffer};

/// Mutable simulation state advanced once per frame.
#[derive(Clone, Debug)]
pub struct SimState {
    pub swe: SweState,
    pub drops: Vec<Raindrop>,
    pub splashes: Vec<Splash>,
    pub rng: ChaCha8Rng,
    pub frame_index: u64,
}

/// Bookkeeping for one simulated frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub spawned: usize,
    pub impacts: usize,
    pub occluded: usize,
    pub escaped: usize,
    pub drops_alive: usize,
    /// Total depth added by drops this frame, meters summed over cells.
    pub deposited: f64,
    /// Depth removed by the small-depth clamp this frame.
    pub clamp_loss: f64,
    pub sum_h_before: f64,
    pub sum_h: f64,
    pub substeps: usize,
}

/// Everything produced by rendering one frame.
#[derive(Clone, Debug)]
pub struct FrameOutputs {
    pub image: RgbImage,
    pub gbuf: WaterGBuffer,
    pub water: RgbImage,
    pub water_depth: DepthImage,
    pub rain: RainPass,
}

/// A scene, its configuration and the live simulation.
#[derive(Clone, Debug)]
pub struct Session {
    scene: SceneBundle,
    config: SimConfig,
    views: Vec<AuxView>,
    tiles: Vec<DepthTiles>,
    sun: Sun,
    live: LiveParams,
    state: SimState,
}

fn output_size(config: &SimConfig, view: &AuxView) -> (usize, usize) {
    let (w, h) = (view.camera.width, view.camera.height);
    match (config.width, config.height) {
        (Some(cw), Some(ch)) => (cw, ch),
        (Some(cw), None) => (cw, ((h * cw) as f64 / w as f64).round().max(1.0) as usize),
        (None, Some(ch)) => (((w * ch) as f64 / h as f64).round().max(1.0) as usize, ch),
        (None, None) => (w, h),
    }
}

impl Session {
    pub fn new(scene: SceneBundle, config: SimConfig) -> Result<Session> {
        config.validate()?;
        scene.validate()?;
        let view = match &config.view {
            Some(name) => scene.view(name).ok_or_else(|| Error::Config(format!("unknown view `{name}`")))?.name.clone(),
            None => scene.views.first().ok_or_else(|| Error::Config("scene has no views".into()))?.name.clone(),
        };
        let views = scene
            .views
            .iter()
            .map(|v| {
                let (w, h) = output_size(&config, v);
                v.resized(w, h)
            })
            .collect::<Vec<AuxView>>();
        let tiles = views.iter().map(|v| DepthTiles::new(&v.depth)).collect();
        let scene_sun = scene.sun();
        let sun = Sun {
            dir: config.sun_dir.map(|d| d.normalize()).unwrap_or(scene_sun.dir),
            color: config.sun_color.unwrap_or(scene_sun.color),
        };
        let state = Self::initial_state(&scene, &config, 0.0)?;
        Ok(Session { scene, config, views, tiles, sun, live: LiveParams::new(view), state })
    }

    fn initial_state(scene: &SceneBundle, config: &SimConfig, offset: f64) -> Result<SimState> {
        let mut swe = SweState::new(scene.ground.clone(), scene.occlusion.clone(), config.gravity)?;
        fill_to_level(&mut swe.depth, &scene.ground, water_level(config, &scene.ground, offset));
        Ok(SimState {
            swe,
            drops: Vec::new(),
            splashes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            frame_index: 0,
        })
    }

    /// Restart from the initial state with the current seed and live parameters.
    pub fn reset(&mut self) -> Result<()> {
        self.state = Self::initial_state(&self.scene, &self.config, self.live.water_level_offset)?;
        Ok(())
    }

    pub fn scene(&self) -> &SceneBundle {
        &self.scene
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SimState {
        &mut self.state
    }

    pub fn sun(&self) -> Sun {
        self.sun
    }

    pub fn live(&self) -> &LiveParams {
        &self.live
    }

    pub fn view(&self) -> &AuxView {
        &self.views[self.view_index()]
    }

    fn view_index(&self) -> usize {
        self.views.iter().position(|v| v.name == self.live.view).expect("active view exists")
    }

    pub fn view_names(&self) -> Vec<String> {
        self.views.iter().map(|v| v.name.clone()).collect()
    }

    /// Install new live parameters. An unknown view is rejected; a higher
    /// water level offset raises the water to the new level where it is
    /// below it.
    pub fn set_live(&mut self, live: LiveParams) -> Result<()> {
        if !self.views.iter().any(|v| v.name == live.view) {
            return Err(Error::Config(format!("unknown view `{}`", live.view)));
        }
        if live.water_level_offset != self.live.water_level_offset {
            let level = water_level(&self.config, &self.scene.ground, live.water_level_offset);
            fill_to_level(&mut self.state.swe.depth, &self.scene.ground, level);
        }
        self.live = live;
        Ok(())
    }

    /// Rain parameters after live intensity and wind.
    pub fn effective_rain(&self) -> RainParams {
        let mut rain = self.config.rain.clone();
        rain.spawn_rate *= self.live.rain_intensity;
        rain.fall_velocity.x += self.live.wind[0];
        rain.fall_velocity.y += self.live.wind[1];
        rain
    }

    /// Simulate one frame.
    pub fn step(&mut self) -> Result<FrameStats> {
        let rain = self.effective_rain();
        step_state(&mut self.state, &rain, self.config.dt, self.config.rain_render.splash_lifetime)
    }

    /// Render the current state into the active view.
    pub fn render(&self) -> FrameOutputs {
        let k = self.view_index();
        render_with(&self.state, &self.views[k], &self.tiles[k], &self.scene, self.sun, &self.config)
    }

    /// Simulate then render one frame.
    pub fn run_frame(&mut self) -> Result<(FrameStats, FrameOutputs)> {
        let stats = self.step()?;
        Ok((stats, self.render()))
    }
}

fn water_level(config: &SimConfig, ground: &ScalarField2D, offset: f64) -> f64 {
    config.fill_level.unwrap_or_else(|| ground.min()) + offset
}

fn fill_to_level(depth: &mut ScalarField2D, ground: &ScalarField2D, level: f64) {
    for (h, g) in depth.data_mut().iter_mut().zip(ground.data()) {
        *h = h.max(level - g);
    }
}

/// Spawn, move and collide drops, age splashes, then advance the water with
/// this frame's deposits.
pub fn step_state(state: &mut SimState, rain: &RainParams, dt: f64, splash_lifetime: f64) -> Result<FrameStats> {
    let eta = state.swe.eta();
    let region = SpawnRegion::over(&eta, &state.swe.occlusion, rain.spawn_height);
    let fresh = spawn_raindrops(rain, &region, dt, &mut state.rng);
    let spawned = fresh.len();
    state.drops.extend(fresh);

    let outcome = advance_raindrops(&state.drops, &eta, &state.swe.occlusion, dt);
    state.drops = outcome.survivors;

    for s in &mut state.splashes {
        s.age += dt;
    }
    state.splashes.retain(|s| s.age < splash_lifetime);
    if !outcome.impacts.is_empty() {
        let normals = eta.normal_from_height();
        state.splashes.extend(outcome.impacts.iter().map(|i| Splash::new(i, normals.get(i.cell.0, i.cell.1))));
    }

    let sum_h_before = state.swe.total_depth();
    let report = state.swe.step(dt, &outcome.deposits)?;
    state.frame_index += 1;
    Ok(FrameStats {
        spawned,
        impacts: outcome.impacts.len(),
        occluded: outcome.occluded,
        escaped: outcome.escaped,
        drops_alive: state.drops.len(),
        deposited: report.deposited,
        clamp_loss: report.clamp_loss,
        sum_h_before,
        sum_h: state.swe.total_depth(),
        substeps: report.substeps,
    })
}

/// Water pass, rain pass and their depth-ordered blend for one view.
pub fn render_state(
    state: &SimState,
    view: &AuxView,
    scene: &SceneBundle,
    sun: Sun,
    config: &SimConfig,
) -> FrameOutputs {
    render_with(state, view, &DepthTiles::new(&view.depth), scene, sun, config)
}

fn render_with(
    state: &SimState,
    view: &AuxView,
    tiles: &DepthTiles,
    scene: &SceneBundle,
    sun: Sun,
    config: &SimConfig,
) -> FrameOutputs {
    let cam = &view.camera;
    let eta = state.swe.eta();
    let gbuf = rasterize_water(&eta, &state.swe.depth, cam, config.render.h_render_min);
    let (water, water_depth) =
        compose_water_pass_tiled(&view.rgb, &gbuf, view, &scene.env, &sun, &config.render, tiles);
    let mut splats = splat_streaks(&state.drops, cam, &view.rgb, &config.rain_render);
    splats.extend(splat_splashes(&state.splashes, cam, &config.rain_render));
    let rain = composite_rain_pass(&splats, cam.width, cam.height, &config.rain_render);
    let image = blend_passes(&water, &water_depth, &rain);
    FrameOutputs { image, gbuf, water, water_depth, rain }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: u64,
    pub sum_h: f64,
    pub drops_alive: usize,
    pub ms_sim: f64,
    pub ms_render: f64,
    pub deposited: f64,
    pub clamp_loss: f64,
}

/// Machine-readable summary of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SimConfig,
    pub frames: Vec<FrameRecord>,
    pub complete: bool,
    pub last_good_frame: Option<u64>,
}

impl Manifest {
    fn new(config: &SimConfig) -> Self {
        Manifest { config: config.clone(), frames: Vec::new(), complete: false, last_good_frame: None }
    }
}

/// Destination for frames and the manifest.
pub trait FrameSink {
    fn write_file(&mut self, name: &str, bytes: &[u8]) -> io::Result<()>;
}

/// Writes into a directory, creating it on first use.
pub struct DirSink {
    dir: PathBuf,
}

impl DirSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl FrameSink for DirSink {
    fn write_file(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.dir.join(name), bytes)
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn frame_name(index: u64) -> String {
    format!("frame_{index:06}.png")
}

fn sink_err(name: &str, e: io::Error) -> Error {
    Error::io(name, e)
}

fn finish(sink: &mut dyn FrameSink, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    sink.write_file(MANIFEST_NAME, &json).map_err(|e| sink_err(MANIFEST_NAME, e))
}

fn debug_layers(sink: &mut dyn FrameSink, index: u64, state: &SimState, out: &FrameOutputs) -> io::Result<()> {
    let stem = format!("frame_{index:06}");
    sink.write_file(&format!("{stem}_water.png"), &out.water.encode_png())?;
    sink.write_file(&format!("{stem}_rain.png"), &out.rain.color.encode_png())?;
    sink.write_file(&format!("{stem}_d0.pfm"), &image_pfm(&out.water_depth).encode())?;
    sink.write_file(&format!("{stem}_d1.pfm"), &image_pfm(&out.rain.depth).encode())?;
    sink.write_file(&format!("{stem}_h.pfm"), &field_pfm(&state.swe.depth).encode())?;
    sink.write_file(&format!("{stem}_eta.pfm"), &field_pfm(&state.swe.eta()).encode())
}

fn run_loop(
    session: &mut Session,
    frames: usize,
    sink: &mut dyn FrameSink,
    mut emit: impl FnMut(&mut dyn FrameSink, u64, &Session, Option<&FrameOutputs>) -> io::Result<()>,
    render: bool,
) -> Result<Manifest> {
    let mut manifest = Manifest::new(session.config());
    for k in 0..frames as u64 {
        let t0 = Instant::now();
        let stats = session.step()?;
        let ms_sim = t0.elapsed().as_secs_f64() * 1e3;
        let t1 = Instant::now();
        let out = render.then(|| session.render());
        let ms_render = t1.elapsed().as_secs_f64() * 1e3;
        manifest.frames.push(FrameRecord {
            index: k,
            sum_h: stats.sum_h,
            drops_alive: stats.drops_alive,
            ms_sim,
            ms_render,
            deposited: stats.deposited,
            clamp_loss: stats.clamp_loss,
        });
        if let Err(e) = emit(sink, k, session, out.as_ref()) {
            manifest.frames.pop();
            // Best effort: the write that failed may take the manifest with it.
            let _ = finish(sink, &manifest);
            return Err(sink_err(&frame_name(k), e));
        }
        manifest.last_good_frame = Some(k);
    }
    manifest.complete = true;
    finish(sink, &manifest)?;
    Ok(manifest)
}

/// Render `frames` frames as `frame_NNNNNN.png` plus `manifest.json`. On a
/// write failure the manifest is written with `complete: false`.
pub fn run_sequence(
    session: &mut Session,
    frames: usize,
    sink: &mut dyn FrameSink,
    with_layers: bool,
) -> Result<Manifest> {
    run_loop(
        session,
        frames,
        sink,
        |sink, k, session, out| {
            let out = out.expect("rendered");
            sink.write_file(&frame_name(k), &out.image.encode_png())?;
            if with_layers {
                debug_layers(sink, k, session.state(), out)?;
            }
            Ok(())
        },
        true,
    )
}

/// Simulation only: writes `eta_NNNNNN.pfm` every `snapshot_every` frames.
pub fn run_simulation(session: &mut Session, frames: usize, sink: &mut dyn FrameSink) -> Result<Manifest> {
    let every = session.config().snapshot_every as u64;
    run_loop(
        session,
        frames,
        sink,
        |sink, k, session, _| {
            if k % every == 0 {
                sink.write_file(&format!("eta_{k:06}.pfm"), &field_pfm(&session.state().swe.eta()).encode())?;
            }
            Ok(())
        },
        false,
    )
}
