use std::path::Path;
use std::process::{Command, Output};

use solarwind_core::sfno::{load_checkpoint, SfnoParams};
use solarwind_core::storage::{read_cube, DatasetManifest, Split};

fn swsfno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swsfno")).args(args).output().expect("spawn swsfno")
}

fn ok(args: &[&str]) -> Output {
    let out = swsfno(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, count: &str) {
    ok(&["synth", "--seed", "7", "--count", count, "--nr", "12", "--nlat", "8", "--nlon", "16", "--l-band", "3", "--out", p(dir)]);
}

#[test]
fn synth_writes_count_cubes_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "8");
    synth(&b, "8");
    let m = DatasetManifest::load(&a.join("manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 8);
    assert_eq!(m.split(Split::Test).len(), 2);
    for e in &m.entries {
        let x = std::fs::read(a.join(&e.cube_path)).unwrap();
        let y = std::fs::read(b.join(&e.cube_path)).unwrap();
        assert_eq!(x, y);
        assert!(a.join(&e.cube_path).with_extension("json").exists());
    }
}

#[test]
fn synth_rejects_odd_longitudes_and_unknown_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = swsfno(&["synth", "--nlon", "47", "--out", p(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_lon"));
    assert!(!swsfno(&["synth", "--bogus", "1", "--out", p(tmp.path())]).status.success());
}

#[test]
fn hux_forward_backward_and_cfl() {
    use solarwind_core::grid::{RadialGrid, SphericalGrid};
    use solarwind_core::storage::{write_cube, VelocityCube};
    let tmp = tempfile::tempdir().unwrap();
    // Smooth boundary: the upwind scheme is diffusive, so HUX-b only
    // nearly inverts HUX-f for well-resolved structure.
    let grid = SphericalGrid::new(24, 48).unwrap();
    let radial = RadialGrid::heliospheric(20).unwrap();
    let mut values = Vec::new();
    for _ in 0..20 {
        for &x in grid.cos_colatitudes() {
            for &phi in grid.longitudes() {
                values.push(450.0 + 120.0 * phi.cos() * (1.0 - x * x).sqrt() + 60.0 * x * (2.0 * phi).sin());
            }
        }
    }
    let cube = tmp.path().join("smooth.hwc");
    write_cube(&VelocityCube::new(radial, grid, values).unwrap(), &cube).unwrap();
    let fwd = tmp.path().join("fwd.hwc");
    ok(&["hux", "--in", p(&cube), "--mode", "f", "--out", p(&fwd)]);
    let back = tmp.path().join("back.hwc");
    ok(&["hux", "--in", p(&fwd), "--mode", "b", "--out", p(&back)]);
    let (f, b) = (read_cube(&fwd).unwrap(), read_cube(&back).unwrap());
    let num: f64 = f.slice(0).iter().zip(b.slice(0)).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = f.slice(0).iter().map(|x| x * x).sum();
    assert!((num / den).sqrt() < 5e-2, "{}", (num / den).sqrt());

    let out = swsfno(&["hux", "--in", p(&cube), "--nr", "3", "--out", p(&tmp.path().join("x.hwc"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("CFL"));
}

#[test]
fn hux_constant_boundary_without_acceleration_is_constant() {
    use solarwind_core::grid::{RadialGrid, SphericalGrid};
    use solarwind_core::storage::{write_cube, VelocityCube};
    let tmp = tempfile::tempdir().unwrap();
    let grid = SphericalGrid::new(6, 12).unwrap();
    let radial = RadialGrid::heliospheric(15).unwrap();
    let cube = VelocityCube::new(radial, grid, vec![450.0; 15 * 72]).unwrap();
    let path = tmp.path().join("c.hwc");
    write_cube(&cube, &path).unwrap();
    let out = tmp.path().join("o.hwc");
    ok(&["hux", "--in", p(&path), "--alpha", "0", "--out", p(&out)]);
    assert!(read_cube(&out).unwrap().values().iter().all(|&v| v == 450.0));
}

#[test]
fn train_zero_epochs_eval_bench_render() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "6");
    let manifest = data.join("manifest.json");
    let ckpt = tmp.path().join("m.sfc");
    let log = tmp.path().join("runs.log");
    ok(&[
        "--log", p(&log), "train", "--manifest", p(&manifest), "--layers", "1", "--channels", "4", "--epochs", "0",
        "--l-max", "5", "--m-max", "6", "--seed", "3", "--out", p(&ckpt),
    ]);
    let loaded = load_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded.params, SfnoParams::init(&loaded.params.config).unwrap());
    assert_eq!(std::fs::read_to_string(tmp.path().join("m.csv")).unwrap(), "epoch,train_loss,val_loss\n");
    let logged = std::fs::read_to_string(&log).unwrap();
    assert_eq!(logged.lines().count(), 1);
    assert!(logged.contains("\"epochs\":0"));

    // A few epochs so predictions stay physical, then evaluate.
    ok(&[
        "train", "--manifest", p(&manifest), "--layers", "1", "--channels", "4", "--epochs", "40", "--batch", "2",
        "--lr", "5e-3", "--l-max", "5", "--m-max", "6", "--out", p(&ckpt),
    ]);
    let report = tmp.path().join("r.json");
    let out = swsfno(&["eval", "--manifest", p(&manifest), "--ckpt", p(&ckpt), "--report", p(&report)]);
    if out.status.success() {
        let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
        for model in ["SFNO", "HUX-f"] {
            assert_eq!(json["models"][model]["per_radius_mse"].as_array().unwrap().len(), 11);
        }
        let csv = std::fs::read_to_string(tmp.path().join("r_per_radius.csv")).unwrap();
        assert_eq!(csv.lines().count(), 12);
    } else {
        assert!(String::from_utf8_lossy(&out.stderr).contains("non-physical"));
    }

    let missing = swsfno(&["eval", "--manifest", p(&manifest), "--ckpt", p(&tmp.path().join("nope.sfc")), "--report", p(&report)]);
    assert!(!missing.status.success());

    let boundary = data.join("cube_0000.hwc");
    let bench = tmp.path().join("bench.json");
    let out = swsfno(&["bench", "--ckpt", p(&ckpt), "--boundary", p(&boundary), "--repeat", "3", "--out", p(&bench)]);
    if out.status.success() {
        let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&bench).unwrap()).unwrap();
        for model in ["SFNO", "HUX-f"] {
            for key in ["time_s", "total_mem_mb", "infer_mem_mb"] {
                assert!(json[model].get(key).is_some(), "{model}.{key}");
            }
        }
        assert_eq!(json["repeat"], 3);
    }

    let img = tmp.path().join("s.pgm");
    ok(&["render", "--cube", p(&boundary), "--radius-index", "4", "--out", p(&img)]);
    let bytes = std::fs::read(&img).unwrap();
    let header = b"P5\n16 8\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 128);
    assert!(bytes[header.len()..].contains(&0) && bytes[header.len()..].contains(&255));
    assert!(!swsfno(&["render", "--cube", p(&boundary), "--radius-index", "12", "--out", p(&img)]).status.success());
}

#[test]
fn cv_writes_one_row_per_architecture() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "8");
    let out = tmp.path().join("cv.csv");
    ok(&[
        "cv", "--manifest", p(&data.join("manifest.json")), "--layers", "1,2", "--channels", "2,3,4", "--folds", "2",
        "--epochs", "1", "--l-max", "4", "--m-max", "4", "--out", p(&out),
    ]);
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n_layers,hidden,fold_1_mse,fold_2_mse,mean_mse");
    assert_eq!(lines.len(), 7);
    assert!(!swsfno(&["cv", "--manifest", p(&data.join("manifest.json")), "--folds", "1", "--out", p(&out)]).status.success());
}
