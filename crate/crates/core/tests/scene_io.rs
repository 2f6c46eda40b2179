use std::fs;
use std::path::Path;

use rainsim_core::fields::ScalarField2D;
use rainsim_core::pfm::Pfm;
use rainsim_core::scene::{field_pfm, load_scene, write_scene, SceneBundle};
use rainsim_core::synthetic::demo_scene;
use rainsim_core::SceneError;

fn written() -> (tempfile::TempDir, SceneBundle) {
    let dir = tempfile::tempdir().unwrap();
    let scene = demo_scene().unwrap();
    write_scene(dir.path(), &scene).unwrap();
    (dir, scene)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(1e-3) }).fold(0.0, f64::max)
}

#[test]
fn written_scene_loads_back() {
    let (dir, scene) = written();
    let back = load_scene(dir.path()).unwrap();
    assert_eq!(back.ground.dims(), scene.ground.dims());
    assert_eq!(back.ground.dx(), scene.ground.dx());
    assert!(max_rel(back.ground.data(), scene.ground.data()) < 1e-6);
    assert!(max_rel(back.occlusion.as_ref().unwrap().data(), scene.occlusion.as_ref().unwrap().data()) < 1e-6);
    assert_eq!(back.view_names(), scene.view_names());
    for (a, b) in back.views.iter().zip(&scene.views) {
        assert_eq!(a.camera.width, b.camera.width);
        assert!((a.camera.fx - b.camera.fx).abs() < 1e-9 * b.camera.fx);
        assert!((a.camera.position() - b.camera.position()).length() < 1e-9);
        assert_eq!(a.rgb.to_srgb8(), b.rgb.to_srgb8());
        for (x, y) in a.depth.data().iter().zip(b.depth.data()) {
            assert_eq!(x.is_finite(), y.is_finite());
            if y.is_finite() {
                assert!((x - y).abs() <= 1e-6 * y);
            }
        }
    }
    let (sa, sb) = (back.sun(), scene.sun());
    assert!((sa.dir - sb.dir).length() < 1e-6);
}

#[test]
fn optional_files_fall_back_to_defaults() {
    let (dir, _) = written();
    for f in ["env.pfm", "meta.cfg", "occlusion.pfm"] {
        fs::remove_file(dir.path().join(f)).unwrap();
    }
    let back = load_scene(dir.path()).unwrap();
    assert!(back.occlusion.is_none());
    assert_eq!(back.ground.dx(), 0.05);
    assert_eq!(back.occlusion_or_ground(), &back.ground);
}

fn expect_named(dir: &Path, file: &str) -> SceneError {
    let err = load_scene(dir).unwrap_err();
    assert!(err.path().ends_with(file), "{err}");
    assert!(err.to_string().contains(file));
    err
}

#[test]
fn truncated_height_map_is_malformed() {
    let (dir, _) = written();
    let p = dir.path().join("height.pfm");
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() - 7]).unwrap();
    assert!(matches!(expect_named(dir.path(), "height.pfm"), SceneError::Malformed { .. }));
}

#[test]
fn missing_height_map_is_an_io_error() {
    let (dir, _) = written();
    fs::remove_file(dir.path().join("height.pfm")).unwrap();
    assert!(matches!(expect_named(dir.path(), "height.pfm"), SceneError::Io { .. }));
}

#[test]
fn occluder_below_ground_is_rejected() {
    let (dir, scene) = written();
    let mut occ: ScalarField2D = scene.ground.clone();
    occ.set(10, 20, scene.ground.get(10, 20) - 0.1);
    fs::write(dir.path().join("occlusion.pfm"), field_pfm(&occ).encode()).unwrap();
    let err = expect_named(dir.path(), "occlusion.pfm");
    assert!(matches!(err, SceneError::Validation { .. }));
    assert!(err.to_string().contains("(10, 20)"), "{err}");
}

#[test]
fn view_size_mismatch_names_the_file() {
    let (dir, _) = written();
    let p = dir.path().join("views/side/depth.pfm");
    fs::write(&p, Pfm { width: 4, height: 4, channels: 1, data: vec![1.0; 16] }.encode()).unwrap();
    assert!(matches!(expect_named(dir.path(), "depth.pfm"), SceneError::Validation { .. }));
}

#[test]
fn bad_meta_key_is_named() {
    let (dir, _) = written();
    fs::write(dir.path().join("meta.cfg"), "dx_meters = 0.05\nwobble = 3\n").unwrap();
    let err = expect_named(dir.path(), "meta.cfg");
    assert!(err.to_string().contains("wobble"));
}
