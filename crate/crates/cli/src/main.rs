//! `rainsim`: render, simulate, serve or inspect a scene, or talk to a
//! running service.

use std::fmt;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rainsim_client::{Client, ClientError};
use rainsim_core::config::SimConfig;
use rainsim_core::error::{Error, SceneError};
use rainsim_core::pipeline::{run_sequence, run_simulation, DirSink, Manifest, Session};
use rainsim_core::protocol::ParamsUpdate;
use rainsim_core::scene::{load_scene, SceneBundle};
use rainsim_core::synthetic::demo_scene;
use rainsim_service::ServiceOptions;

#[derive(Debug, Parser)]
#[command(
    name = "rainsim",
    version,
    about = "Simulate rain and surface water on a scene and composite it into its captured views"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scene directory; the bundled demo courtyard when omitted
    #[arg(long, global = true, value_name = "PATH")]
    scene: Option<PathBuf>,

    /// Config file of `key = value` lines
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key (repeatable); for `remote set`, a live parameter
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Number of frames
    #[arg(long, global = true, value_name = "N")]
    frames: Option<usize>,

    /// Random seed
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// View to render
    #[arg(long, global = true, value_name = "NAME")]
    view: Option<String>,

    /// Output width in pixels
    #[arg(long, global = true, value_name = "N")]
    width: Option<usize>,

    /// Output height in pixels
    #[arg(long, global = true, value_name = "N")]
    height: Option<usize>,

    /// Port for `serve`, and for `remote` without --url
    #[arg(long, global = true, value_name = "N", default_value_t = 8080)]
    port: u16,

    /// Also write water, rain, depth and height layers (`render`)
    #[arg(long, global = true)]
    debug_layers: bool,

    /// Service address for `remote`
    #[arg(long, global = true, value_name = "URL")]
    url: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render frames as PNGs plus a run manifest
    Render,
    /// Run the water and rain without rendering; writes surface snapshots as PFM
    Simulate,
    /// Start the live control service
    Serve,
    /// Validate a scene directory and print a summary
    Inspect,
    /// Query or steer a running service
    Remote {
        #[arg(value_enum)]
        action: RemoteAction,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RemoteAction {
    /// Print the service state as JSON
    State,
    /// Send the --set live parameters
    Set,
    /// Restart the simulation
    Reset,
    /// Save the latest frame to <out>/frame.png
    Frame,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            Error::Scene(s) => s.into(),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<SceneError> for Failure {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Rejected { .. } => Failure::Invalid(e.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rainsim: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Render => render(cli),
        Command::Simulate => simulate(cli),
        Command::Serve => serve(cli),
        Command::Inspect => inspect(cli),
        Command::Remote { action } => remote(cli, *action),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path, Failure> {
    cli.out.as_deref().ok_or_else(|| Failure::Usage("--out DIR is required".into()))
}

fn scene(cli: &Cli) -> Result<SceneBundle, Failure> {
    match &cli.scene {
        Some(dir) => Ok(load_scene(dir)?),
        None => Ok(demo_scene()?),
    }
}

fn config(cli: &Cli) -> Result<SimConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            SimConfig::from_text(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?
        }
        None => SimConfig::default(),
    };
    let keys = SimConfig::keys();
    for assignment in &cli.overrides {
        let key = assignment.split_once('=').map(|(k, _)| k.trim()).unwrap_or(assignment);
        if !keys.iter().any(|k| k == key) {
            return Err(Failure::Usage(format!("--set {assignment}: unknown config key `{key}`")));
        }
        cfg.apply_assignment(assignment)?;
    }
    if let Some(n) = cli.frames {
        cfg.frames = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(v) = &cli.view {
        cfg.view = Some(v.clone());
    }
    if cli.width.is_some() {
        cfg.width = cli.width;
    }
    if cli.height.is_some() {
        cfg.height = cli.height;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn session(cli: &Cli) -> Result<Session, Failure> {
    let cfg = config(cli)?;
    Ok(Session::new(scene(cli)?, cfg)?)
}

fn summarize(what: &str, manifest: &Manifest, out: &Path) {
    let mut ms: Vec<f64> = manifest.frames.iter().map(|f| f.ms_sim + f.ms_render).collect();
    ms.sort_by(f64::total_cmp);
    let median = ms.get(ms.len() / 2).copied().unwrap_or(0.0);
    let sum_h = manifest.frames.last().map(|f| f.sum_h).unwrap_or(0.0);
    println!(
        "{what} {} frames into {} (median {median:.1} ms/frame, final sum h {sum_h:.6})",
        manifest.frames.len(),
        out.display()
    );
}

fn render(cli: &Cli) -> Result<(), Failure> {
    let out = out_dir(cli)?;
    let mut s = session(cli)?;
    let frames = s.config().frames;
    let manifest = run_sequence(&mut s, frames, &mut DirSink::new(out), cli.debug_layers)?;
    summarize("rendered", &manifest, out);
    Ok(())
}

fn simulate(cli: &Cli) -> Result<(), Failure> {
    let out = out_dir(cli)?;
    let mut s = session(cli)?;
    let frames = s.config().frames;
    let manifest = run_simulation(&mut s, frames, &mut DirSink::new(out))?;
    summarize("simulated", &manifest, out);
    Ok(())
}

fn serve(cli: &Cli) -> Result<(), Failure> {
    let s = session(cli)?;
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let addr = SocketAddr::from(([127, 0, 0, 1], cli.port));
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    rt.block_on(rainsim_service::serve(s, addr, ServiceOptions::default())).map_err(|e| Failure::Io(format!("{e:#}")))
}

fn inspect(cli: &Cli) -> Result<(), Failure> {
    let scene = scene(cli)?;
    scene.validate()?;
    let g = &scene.ground;
    let source = cli.scene.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "bundled demo".into());
    println!("scene       {source}");
    println!(
        "grid        {} x {} cells, dx {:.4} m, origin ({:.3}, {:.3})",
        g.nx(),
        g.ny(),
        g.dx(),
        g.origin().x,
        g.origin().y
    );
    println!("ground      {:.4} .. {:.4} m", g.min(), g.max());
    match &scene.occlusion {
        Some(o) => {
            let covered = o.data().iter().zip(g.data()).filter(|(o, g)| o > g).count();
            println!("occlusion   {covered} cells covered");
        }
        None => println!("occlusion   none"),
    }
    let (ew, eh) = scene.env.image.dims();
    let sun = scene.sun();
    println!("environment {ew} x {eh}");
    println!(
        "sun         dir ({:.3}, {:.3}, {:.3}) color ({:.2}, {:.2}, {:.2})",
        sun.dir.x, sun.dir.y, sun.dir.z, sun.color.x, sun.color.y, sun.color.z
    );
    for v in &scene.views {
        let covered = v.depth.data().iter().filter(|d| d.is_finite()).count();
        let total = v.depth.data().len();
        println!(
            "view        {}: {} x {}, {:.1}% covered",
            v.name,
            v.camera.width,
            v.camera.height,
            100.0 * covered as f64 / total as f64
        );
    }
    println!("ok");
    Ok(())
}

/// Parse `--set` assignments as live parameters.
fn live_update(overrides: &[String]) -> Result<ParamsUpdate, Failure> {
    let mut body = serde_json::Map::new();
    for a in overrides {
        let (k, v) = a.split_once('=').ok_or_else(|| Failure::Usage(format!("expected KEY=VALUE, got `{a}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let value = match k {
            "rain_intensity" | "water_level_offset" => serde_json::json!(number(k, v)?),
            "wind" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                let [x, y] = parts[..] else {
                    return Err(Failure::Usage(format!("wind takes `x,y`, got `{v}`")));
                };
                serde_json::json!([number(k, x)?, number(k, y)?])
            }
            "paused" => serde_json::json!(v
                .parse::<bool>()
                .map_err(|_| Failure::Usage(format!("paused takes true or false, got `{v}`")))?),
            "view" => serde_json::json!(v),
            other => return Err(Failure::Usage(format!("unknown live parameter `{other}`"))),
        };
        body.insert(k.to_owned(), value);
    }
    ParamsUpdate::from_json(&serde_json::Value::Object(body)).map_err(|e| Failure::Usage(e.to_string()))
}

fn number(key: &str, v: &str) -> Result<f64, Failure> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Failure::Usage(format!("{key}: `{v}` is not a number")))
}

fn remote(cli: &Cli, action: RemoteAction) -> Result<(), Failure> {
    let url = cli.url.clone().unwrap_or_else(|| format!("http://127.0.0.1:{}", cli.port));
    let client = Client::new(url)?;
    match action {
        RemoteAction::State => {
            println!("{}", serde_json::to_string_pretty(&client.state()?).expect("state serializes"));
        }
        RemoteAction::Set => {
            if cli.overrides.is_empty() {
                return Err(Failure::Usage("remote set needs at least one --set KEY=VALUE".into()));
            }
            let echo = client.set_params(&live_update(&cli.overrides)?)?;
            println!("{}", serde_json::to_string_pretty(&echo).expect("params serialize"));
        }
        RemoteAction::Reset => {
            client.reset()?;
            println!("reset requested");
        }
        RemoteAction::Frame => {
            let out = out_dir(cli)?;
            fs::create_dir_all(out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
            let path = out.join("frame.png");
            fs::write(&path, client.frame_png()?).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
