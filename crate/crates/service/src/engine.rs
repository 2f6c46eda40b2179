use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use rainsim_core::pipeline::Session;
use rainsim_core::protocol::{FieldError, LiveParams, ParamsUpdate, StateReport};
use tokio::sync::watch;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceOptions {
    /// Upper bound on frames pushed to each stream client per second;
    /// frames beyond it are dropped.
    pub stream_fps: f64,
    /// Pace the simulation to one frame per `dt` of wall time.
    pub realtime: bool,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { stream_fps: 30.0, realtime: true }
    }
}

/// One published frame and the state it was rendered from.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub report: StateReport,
    pub png: Bytes,
}

/// Edits waiting for the next frame boundary. Later edits merge over
/// earlier ones.
#[derive(Debug)]
struct Pending {
    desired: LiveParams,
    dirty: bool,
    reset: bool,
}

#[derive(Debug)]
struct Shared {
    pending: Mutex<Pending>,
    views: Vec<String>,
}

/// Owns the session; call [`Engine::frame`] to advance by one frame, or
/// [`Engine::run`] to loop.
pub struct Engine {
    session: Session,
    shared: Arc<Shared>,
    tx: watch::Sender<Arc<Snapshot>>,
    options: ServiceOptions,
    png: Bytes,
    fps: f64,
    last_frame: Option<Instant>,
}

/// Cheap, cloneable access for request handlers.
#[derive(Clone, Debug)]
pub struct Handle {
    shared: Arc<Shared>,
    rx: watch::Receiver<Arc<Snapshot>>,
    options: ServiceOptions,
}

/// Build an engine around `session` and publish its initial frame.
pub fn engine(session: Session, options: ServiceOptions) -> anyhow::Result<(Engine, Handle)> {
    anyhow::ensure!(options.stream_fps > 0.0, "stream fps must be positive");
    let shared = Arc::new(Shared {
        pending: Mutex::new(Pending { desired: session.live().clone(), dirty: false, reset: false }),
        views: session.view_names(),
    });
    let png = Bytes::from(session.render().image.encode_png());
    let first = Arc::new(Snapshot { report: report(&session, 0.0), png: png.clone() });
    let (tx, rx) = watch::channel(first);
    let engine = Engine { session, shared: shared.clone(), tx, options, png, fps: 0.0, last_frame: None };
    Ok((engine, Handle { shared, rx, options }))
}

fn report(session: &Session, fps: f64) -> StateReport {
    let state = session.state();
    StateReport {
        time: state.swe.time,
        fps,
        params: session.live().clone(),
        sum_h: state.swe.total_depth(),
        drops_alive: state.drops.len(),
        frame_index: state.frame_index,
    }
}

impl Engine {
    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Apply pending edits, advance one frame unless paused, render and
    /// publish.
    pub fn frame(&mut self) -> anyhow::Result<()> {
        let (live, reset) = {
            let mut p = self.shared.pending.lock().expect("pending lock");
            let live = std::mem::take(&mut p.dirty).then(|| p.desired.clone());
            (live, std::mem::take(&mut p.reset))
        };
        let mut changed = reset;
        if let Some(live) = live {
            changed |= live.view != self.session.live().view
                || live.water_level_offset != self.session.live().water_level_offset;
            self.session.set_live(live)?;
        }
        if reset {
            self.session.reset()?;
        }
        if !self.session.live().paused {
            self.session.step()?;
            changed = true;
        }
        if changed {
            self.png = Bytes::from(self.session.render().image.encode_png());
        }

        let now = Instant::now();
        if let Some(prev) = self.last_frame {
            let rate = 1.0 / now.duration_since(prev).as_secs_f64().max(1e-6);
            self.fps = if self.fps == 0.0 { rate } else { 0.9 * self.fps + 0.1 * rate };
        }
        self.last_frame = Some(now);
        let snap = Snapshot { report: report(&self.session, self.fps), png: self.png.clone() };
        self.tx.send_replace(Arc::new(snap));
        Ok(())
    }

    /// Produce frames until `stop` is set. With real-time pacing each frame
    /// takes at least `dt` of wall time; a slow frame does not make later
    /// frames hurry.
    pub fn run(mut self, stop: &AtomicBool) -> anyhow::Result<()> {
        let dt = Duration::from_secs_f64(self.session.config().dt);
        let mut next = Instant::now();
        while !stop.load(Ordering::Relaxed) {
            self.frame()?;
            if self.options.realtime {
                next = (next + dt).max(Instant::now());
                while !stop.load(Ordering::Relaxed) {
                    let now = Instant::now();
                    if now >= next {
                        break;
                    }
                    std::thread::sleep((next - now).min(Duration::from_millis(50)));
                }
            }
        }
        Ok(())
    }
}

impl Handle {
    pub fn options(&self) -> ServiceOptions {
        self.options
    }

    pub fn views(&self) -> &[String] {
        &self.shared.views
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        self.rx.borrow().clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<Arc<Snapshot>> {
        self.rx.clone()
    }

    /// Queue an update for the next frame boundary and return the
    /// parameters that will then be in effect. Fails only on an unknown
    /// view.
    pub fn update_params(&self, update: &ParamsUpdate) -> Result<LiveParams, FieldError> {
        if let Some(view) = &update.view {
            if !self.shared.views.contains(view) {
                return Err(FieldError {
                    field: "view".into(),
                    error: format!("unknown view `{view}`; known: {}", self.shared.views.join(", ")),
                });
            }
        }
        let mut p = self.shared.pending.lock().expect("pending lock");
        p.desired = p.desired.merged(update);
        p.dirty = true;
        Ok(p.desired.clone())
    }

    /// Restart the simulation from its initial state at the next boundary.
    pub fn request_reset(&self) {
        self.shared.pending.lock().expect("pending lock").reset = true;
    }
}
