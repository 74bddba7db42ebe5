use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn lumedepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lumedepth"))
        .args(args)
        .env_remove("LUMEDEPTH_THREADS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn camera(size: usize, focal: f64) -> Value {
    let c = (size as f64 - 1.0) / 2.0;
    json!({ "fx": focal, "fy": focal, "cx": c, "cy": c, "width": size, "height": size })
}

fn tube_scene() -> Value {
    json!({
        "geometry": { "kind": "tube", "axis": [[0.0, 0.0, -10.0], [0.0, 0.0, 70.0]], "radius": 20.0 },
        "albedo": {
            "kind": "stripes",
            "base": { "h": 0.02, "s": 0.45 },
            "vessel": { "h": 0.97, "s": 0.75 },
            "frequency": 0.08,
            "width": 0.2
        },
        "camera": camera(16, 10.0),
        "light": { "position": [1.0, 0.0, 0.0], "mu": 2.0, "gain": 1500.0, "gamma": 1.0 },
        "seed": 7
    })
}

fn write(path: &Path, value: &Value) {
    fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

#[test]
fn gen_then_eval_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.json");
    write(&scene, &tube_scene());
    let gt = tmp.path().join("gt");
    let out = lumedepth(&["gen", p(&scene), "-o", p(&gt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["image.ppm", "depth.pfm", "normals.pfm", "albedo.pfm", "meta.json"] {
        assert!(gt.join(f).exists(), "{f}");
    }

    let report = tmp.path().join("report.json");
    let out = lumedepth(&["eval", p(&gt), p(&gt), "-o", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Abs_Rel"));
    let r: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    for key in ["mae", "medae", "rmse", "rmse_log", "abs_rel", "sq_rel", "normal_mae_deg", "image_mae"] {
        assert_eq!(r[key].as_f64().unwrap(), 0.0, "{key}");
    }
    for key in ["delta1", "delta2", "delta3", "ssim", "scale"] {
        assert_eq!(r[key].as_f64().unwrap(), 1.0, "{key}");
    }
}

#[test]
fn render_reproduces_generated_image() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.json");
    write(&scene, &tube_scene());
    let gt = tmp.path().join("gt");
    assert!(lumedepth(&["--quiet", "gen", p(&scene), "-o", p(&gt)]).status.success());
    let image = tmp.path().join("out.ppm");
    let out = lumedepth(&["--quiet", "render", p(&gt), "-o", p(&image)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    // Normals and albedo pass through single precision, so a channel may
    // land on the other side of a rounding boundary.
    let a = fs::read(&image).unwrap();
    let b = fs::read(gt.join("image.ppm")).unwrap();
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.abs_diff(*y) <= 1));
}

#[test]
fn recover_writes_bundle_and_history() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.json");
    let spec = tube_scene();
    write(&scene, &spec);
    let gt = tmp.path().join("gt");
    assert!(lumedepth(&["gen", p(&scene), "-o", p(&gt)]).status.success());
    let cam = tmp.path().join("camera.json");
    let light = tmp.path().join("light.json");
    let config = tmp.path().join("config.json");
    write(&cam, &spec["camera"]);
    write(&light, &spec["light"]);
    write(&config, &json!({ "steps": 5, "init": { "constant": { "depth": 60.0 } } }));
    let pred = tmp.path().join("pred");
    let image = gt.join("image.ppm");
    let args = [
        "--threads", "2", "recover", p(&image), "--camera", p(&cam), "--light", p(&light),
        "--config", p(&config), "-o", p(&pred),
    ];
    let out = lumedepth(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = fs::read_to_string(pred.join("history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "step,photometric,smoothness,specular,total");
    assert_eq!(lines.len(), 1 + 6);

    let first = fs::read(pred.join("depth.pfm")).unwrap();
    let again = tmp.path().join("again");
    let mut args2 = args;
    args2[1] = "1";
    args2[11] = p(&again);
    assert!(lumedepth(&args2).status.success());
    assert_eq!(first, fs::read(again.join("depth.pfm")).unwrap());
    assert_eq!(history, fs::read_to_string(again.join("history.csv")).unwrap());

    let report = tmp.path().join("report.json");
    assert!(lumedepth(&["eval", p(&pred), p(&gt), "-o", p(&report)]).status.success());
}

#[test]
fn missing_input_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.ppm");
    let cam = tmp.path().join("camera.json");
    write(&cam, &camera(8, 6.0));
    let out = lumedepth(&[
        "recover", p(&missing), "--camera", p(&cam), "--light", p(&cam), "-o", p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ppm"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = lumedepth(&["gen", "scene.json", "-o", "x", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calib_fits_light_from_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    let obs = tmp.path().join("obs");
    let truth = json!({ "position": [0.2, -0.1, 0.05], "mu": 2.0, "gamma": 2.2 });
    let targets = [([0.0, 0.0, 1.5], [0.0, 0.0, -1.0]), ([0.0, 0.0, 2.5], [0.0, 0.0, -1.0]), ([0.0, 0.0, 2.0], [0.4, 0.2, -1.0])];
    for (i, (point, normal)) in targets.iter().enumerate() {
        let scene = tmp.path().join(format!("scene{i}.json"));
        write(&scene, &json!({
            "geometry": { "kind": "plane", "point": point, "normal": normal },
            "albedo": { "kind": "constant", "h": 0.0, "s": 0.0 },
            "camera": camera(24, 18.0),
            "light": truth,
        }));
        let out = lumedepth(&["gen", p(&scene), "-o", p(&obs.join(format!("t{i}")))]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let init = tmp.path().join("init.json");
    write(&init, &json!({ "position": [0.28, -0.06, 0.03], "mu": 1.2, "gamma": 2.2 }));
    let fitted = tmp.path().join("light.json");
    let out = lumedepth(&["calib", p(&obs), "--init", p(&init), "-o", p(&fitted)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let light: Value = serde_json::from_slice(&fs::read(&fitted).unwrap()).unwrap();
    // The stored images are 8-bit, so the fit is only as good as quantisation
    // allows.
    assert!((light["mu"].as_f64().unwrap() - 2.0).abs() < 0.05, "{light}");
    assert!((light["position"][0].as_f64().unwrap() - 0.2).abs() < 0.05, "{light}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gray levels"));
}
