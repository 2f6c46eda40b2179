use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use rainsim_core::scene::write_scene;
use rainsim_core::synthetic::demo_scene;
use sha2::{Digest, Sha256};

fn rainsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rainsim")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn hashes(dir: &Path, ext: &str) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .map(|p| {
            (p.file_name().unwrap().to_string_lossy().into_owned(), Sha256::digest(fs::read(&p).unwrap()).to_vec())
        })
        .collect()
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn help_matches_snapshot_and_lists_every_flag() {
    let o = rainsim(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let snapshot = include_str!("snapshots/help.txt");
    assert_eq!(text, snapshot, "--help output changed; update tests/snapshots/help.txt");
    for flag in [
        "--scene",
        "--config",
        "--set",
        "--out",
        "--frames",
        "--seed",
        "--view",
        "--width",
        "--height",
        "--port",
        "--debug-layers",
        "--url",
    ] {
        assert!(text.contains(flag), "{flag} missing from --help");
    }
}

#[test]
fn usage_errors_exit_1() {
    let o = rainsim(&["render", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bogus"));
    let o = rainsim(&[]);
    assert_eq!(o.status.code(), Some(1));
    let o = rainsim(&["render", "--frames", "1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("--out"));
    let out = tempfile::tempdir().unwrap();
    let o = rainsim(&["render", "--out", out.path().to_str().unwrap(), "--set", "rain.colour=red"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rain.colour"));
    assert!(names(out.path()).is_empty());
}

#[test]
fn invalid_config_values_exit_2() {
    let out = tempfile::tempdir().unwrap();
    let o = rainsim(&["render", "--out", out.path().to_str().unwrap(), "--set", "dt=-1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = rainsim(&["render", "--out", out.path().to_str().unwrap(), "--view", "attic"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("attic"));
}

#[test]
fn render_writes_numbered_frames_and_manifest() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().join("run");
    let o = rainsim(&["render", "--frames", "3", "--seed", "7", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(names(&dir), ["frame_000000.png", "frame_000001.png", "frame_000002.png", "manifest.json"]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);
    assert_eq!(manifest["config"]["seed"], 7);
    let frames = manifest["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 3);
    for (k, f) in frames.iter().enumerate() {
        assert_eq!(f["index"], k);
        for key in ["sum_h", "drops_alive", "ms_sim", "ms_render"] {
            assert!(f.get(key).is_some(), "{key}");
        }
    }
    // Nothing else was written next to the output directory.
    assert_eq!(names(out.path()), ["run"]);
}

#[test]
fn same_command_twice_gives_identical_frames() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = rainsim(&[
            "render",
            "--frames",
            "4",
            "--seed",
            "11",
            "--set",
            "fill_level=0.05",
            "--debug-layers",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for ext in ["png", "pfm"] {
        let (ha, hb) = (hashes(a.path(), ext), hashes(b.path(), ext));
        assert!(!ha.is_empty());
        assert_eq!(ha, hb, "{ext} outputs differ");
    }
}

#[test]
fn simulate_writes_surface_snapshots() {
    let out = tempfile::tempdir().unwrap();
    let o = rainsim(&["simulate", "--frames", "5", "--set", "snapshot_every=2", "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(names(out.path()), ["eta_000000.pfm", "eta_000002.pfm", "eta_000004.pfm", "manifest.json"]);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "frames = 2\n[rain]\nspawn_rate = 0\n").unwrap();
    let out = dir.path().join("out");
    let o = rainsim(&["render", "--config", cfg.to_str().unwrap(), "--set", "seed=5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["frames"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["seed"], 5);
    assert_eq!(manifest["config"]["rain"]["spawn_rate"], 0.0);

    let o = rainsim(&[
        "render",
        "--config",
        dir.path().join("missing.cfg").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn inspect_reports_a_scene_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), &demo_scene().unwrap()).unwrap();
    let o = rainsim(&["inspect", "--scene", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("96 x 96 cells"), "{text}");
    assert!(text.contains("main") && text.contains("side"));
}

#[test]
fn inspect_malformed_pfm_exits_2_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), &demo_scene().unwrap()).unwrap();
    let height = dir.path().join("height.pfm");
    let bytes = fs::read(&height).unwrap();
    fs::write(&height, &bytes[..bytes.len() / 2]).unwrap();
    let o = rainsim(&["inspect", "--scene", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("height.pfm"), "{}", stderr(&o));
}

#[test]
fn missing_scene_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rainsim(&["inspect", "--scene", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn remote_commands_talk_to_a_served_scene() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port().to_string();
    let _server = Server(
        Command::new(env!("CARGO_BIN_EXE_rainsim"))
            .args(["serve", "--port", &port])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let t0 = Instant::now();
    let state = loop {
        let o = rainsim(&["remote", "state", "--port", &port]);
        if o.status.success() {
            break o;
        }
        assert!(t0.elapsed() < Duration::from_secs(30), "service never came up: {}", stderr(&o));
        std::thread::sleep(Duration::from_millis(100));
    };
    let v: serde_json::Value = serde_json::from_slice(&state.stdout).unwrap();
    assert_eq!(v["params"]["view"], "main");

    let o = rainsim(&["remote", "set", "--port", &port, "--set", "rain_intensity=40", "--set", "wind=1,0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(echo["rain_intensity"], 10.0);
    assert_eq!(echo["wind"][0], 1.0);

    let o = rainsim(&["remote", "set", "--port", &port, "--set", "view=attic"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let out = tempfile::tempdir().unwrap();
    let o = rainsim(&["remote", "frame", "--port", &port, "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read(out.path().join("frame.png")).unwrap().starts_with(b"\x89PNG"));

    assert!(rainsim(&["remote", "reset", "--port", &port]).status.success());
}

#[test]
fn remote_without_a_service_is_an_io_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port().to_string();
    let o = rainsim(&["remote", "state", "--port", &port]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
