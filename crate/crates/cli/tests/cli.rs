use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use volest::field::{bake, SceneDescription};
use volest_cli::{EstimatorConfig, SceneConfig, Setup, SweepSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_volest"))
}

fn scene(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenes")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "volest {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stats(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn ppm_pixels(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    let mut newlines = 0;
    let body = bytes
        .iter()
        .position(|&b| {
            newlines += (b == b'\n') as usize;
            newlines == 3
        })
        .unwrap();
    bytes[body + 1..].to_vec()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .split("\r\n")
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn empty_scene_renders_the_background_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(
        &empty,
        r#"{"bounds": {"min": [-1,-1,-1], "max": [1,1,1]}, "primitives": []}"#,
    )
    .unwrap();
    let img = dir.path().join("out.ppm");
    let out = run(&[
        "render",
        "--scene",
        empty.to_str().unwrap(),
        "--width",
        "8",
        "--height",
        "6",
        "--background",
        "0.2,0.4,1.0",
        "-o",
        img.to_str().unwrap(),
    ]);
    let header = b"P6\n8 6\n255\n";
    assert_eq!(&std::fs::read(&img).unwrap()[..header.len()], header);
    let px = ppm_pixels(&img);
    assert_eq!(px.len(), 8 * 6 * 3);
    assert!(px.chunks(3).all(|p| p == [51, 102, 255]));
    assert_eq!(stats(&out)["psnr"], 100.0);
}

#[test]
fn occupancy_skips_empty_rays() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("o.ppm");
    let s = stats(&run(&[
        "render",
        "--scene",
        scene("blob.json").to_str().unwrap(),
        "--estimator",
        "occupancy",
        "--grid-resolution",
        "64",
        "--samples",
        "64",
        "--no-timing",
        "-o",
        img.to_str().unwrap(),
    ]));
    assert_eq!(s["estimator"], "occupancy");
    assert!(s["mean_samples_per_ray"].as_f64().unwrap() < 64.0);
    assert!(s["wall_time_ms"].is_null());
    assert!(s["psnr"].as_f64().unwrap() > 30.0);
}

#[test]
fn config_file_overrides_flags_and_resolves_relative_scene() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(scene("blob.json"), dir.path().join("blob.json")).unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"scene": {"scene": "blob.json", "camera": {"width": 5, "height": 3}},
            "estimator": {"kind": "pdf", "n_samples": 7}}"#,
    )
    .unwrap();
    let img = dir.path().join("c.ppm");
    let s = stats(&run(&[
        "render",
        "--config",
        cfg.to_str().unwrap(),
        "--width",
        "40",
        "--estimator",
        "uniform",
        "-o",
        img.to_str().unwrap(),
    ]));
    assert_eq!(s["estimator"], "pdf");
    assert_eq!(s["n_samples"], 7);
    assert_eq!(s["rays"], 15);
}

#[test]
fn bad_inputs_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    let blob = scene("blob.json");
    let blob = blob.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["render", "--scene", "/does/not/exist.json", "-o", out],
        vec!["render", "--scene", blob, "--fov", "180", "-o", out],
        vec!["render", "--scene", blob, "--width", "0", "-o", out],
        vec![
            "render",
            "--scene",
            blob,
            "--estimator",
            "occupancy",
            "--tau",
            "-1",
            "-o",
            out,
        ],
        vec!["render", "--scene", blob, "--samples", "0", "-o", out],
        vec!["render", "--scene", blob, "--unbounded", "-o", out],
        vec![
            "render", "--scene", blob, "--t-near", "2", "--t-far", "1", "-o", out,
        ],
        vec![
            "simulate-updates",
            "--scene",
            blob,
            "--estimator",
            "pdf",
            "-o",
            out,
        ],
        vec!["sweep", "--scene", blob, "-o", out],
    ];
    for args in cases {
        let o = bin().args(&args).env("NO_COLOR", "1").output().unwrap();
        assert!(!o.status.success(), "{args:?} should fail");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.starts_with("error"), "{args:?}: {err}");
        assert!(!err.contains('\x1b'));
    }
}

#[test]
fn unbounded_scene_renders() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("u.ppm");
    for kind in ["uniform", "pdf", "combined"] {
        let s = stats(&run(&[
            "render",
            "--scene",
            scene("blob.json").to_str().unwrap(),
            "--unbounded",
            "--t-near",
            "0.5",
            "--estimator",
            kind,
            "--width",
            "16",
            "--height",
            "16",
            "--samples",
            "128",
            "-o",
            img.to_str().unwrap(),
        ]));
        assert!(s["psnr"].as_f64().unwrap() > 25.0, "{kind}: {s}");
    }
}

#[test]
fn voxel_scenes_load_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let desc = SceneDescription::load(scene("blob.json")).unwrap();
    let vox = bake(&desc.scene(), [24, 24, 24], desc.bounds).unwrap();
    let path = dir.path().join("blob.vox3");
    vox.save(&path).unwrap();
    let img = dir.path().join("v.ppm");
    let s = stats(&run(&[
        "render",
        "--scene",
        path.to_str().unwrap(),
        "--estimator",
        "combined",
        "--width",
        "16",
        "--height",
        "16",
        "-o",
        img.to_str().unwrap(),
    ]));
    assert!(s["psnr"].as_f64().unwrap() > 30.0);

    std::fs::write(dir.path().join("bad.vox3"), b"VOX3junk").unwrap();
    let o = bin()
        .args(["render", "--scene"])
        .arg(dir.path().join("bad.vox3"))
        .args(["-o", img.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte"));
}

#[test]
fn simulate_updates_cold_start_and_decay() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("u.csv");
    run(&[
        "simulate-updates",
        "--scene",
        scene("blob.json").to_str().unwrap(),
        "--estimator",
        "occupancy",
        "--grid-resolution",
        "16",
        "--jitter",
        "0",
        "--ema-decay",
        "0.8",
        "--steps",
        "30",
        "-o",
        csv.to_str().unwrap(),
    ]);
    let rows = csv_rows(&csv);
    assert_eq!(rows[0], ["k", "max_cell_error", "occupied_fraction"]);
    assert_eq!(rows.len(), 32);
    assert_eq!(rows[1][0], "0");
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 0.0);
    // The blob peaks at sigma = 8.
    for (k, row) in rows[1..].iter().enumerate() {
        let err: f64 = row[1].parse().unwrap();
        assert!(err <= 8.0 * 0.8f64.powi(k as i32) + 1e-12, "k={k}: {err}");
    }
}

#[test]
fn box_covering_an_eighth_converges_to_an_eighth() {
    let dir = tempfile::tempdir().unwrap();
    let scene_file = dir.path().join("octant.json");
    std::fs::write(
        &scene_file,
        r#"{"bounds": {"min": [-1,-1,-1], "max": [1,1,1]},
            "primitives": [{"type": "constant_box", "box": {"min": [0,0,0], "max": [1,1,1]}, "sigma": 2.0}]}"#,
    )
    .unwrap();
    let csv = dir.path().join("o.csv");
    let l = 20.0;
    run(&[
        "simulate-updates",
        "--scene",
        scene_file.to_str().unwrap(),
        "--estimator",
        "occupancy",
        "--grid-resolution",
        "20",
        "--tau",
        "0.5",
        "--ema-decay",
        "0.5",
        "--steps",
        "40",
        "-o",
        csv.to_str().unwrap(),
    ]);
    let last: f64 = csv_rows(&csv).last().unwrap()[2].parse().unwrap();
    // one layer of cells along each of the three inner faces
    let layer = 3.0 * (l / 2.0) * (l / 2.0) / (l * l * l);
    assert!((last - 0.125).abs() <= layer, "{last}");
}

#[test]
fn single_point_sweep_matches_render() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"seed": 3, "grid": {"n_samples": [24]}}"#).unwrap();
    let csv = dir.path().join("s.csv");
    let common: [String; 9] = [
        "--scene".into(),
        scene("sparse.json").to_str().unwrap().to_owned(),
        "--estimator".into(),
        "occupancy".into(),
        "--width".into(),
        "20".into(),
        "--height".into(),
        "20".into(),
        "--no-timing".into(),
    ];
    let mut sweep_args = vec![
        "sweep".to_owned(),
        "--spec".into(),
        spec.to_str().unwrap().into(),
        "-o".into(),
    ];
    sweep_args.push(csv.to_str().unwrap().into());
    sweep_args.extend(common.iter().map(|s| s.to_string()));
    let out = bin().args(&sweep_args).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let img = dir.path().join("r.ppm");
    let mut render_args = vec![
        "render".to_owned(),
        "--samples".into(),
        "24".into(),
        "--seed".into(),
        "3".into(),
    ];
    render_args.extend(["-o".to_owned(), img.to_str().unwrap().into()]);
    render_args.extend(common.iter().map(|s| s.to_string()));
    let out = bin().args(&render_args).output().unwrap();
    assert!(out.status.success());
    let s = stats(&out);

    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 2);
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    let row = &rows[1];
    assert_eq!(row[col("kind")], "occupancy");
    assert_eq!(row[col("n_samples")], "24");
    assert_eq!(row[col("wall_time_ms")], "");
    for key in ["psnr", "mean_samples_before_filter", "mean_samples_per_ray"] {
        assert_eq!(
            row[col(key)].parse::<f64>().unwrap(),
            s[key].as_f64().unwrap(),
            "{key}"
        );
    }
}

#[test]
fn sparse_sweep_favours_occupancy_at_matched_quality() {
    let setup = Setup::load(SceneConfig {
        scene: scene("sparse.json"),
        camera: volest_cli::Camera {
            width: 32,
            height: 32,
            ..Default::default()
        },
        ..Default::default()
    })
    .unwrap();
    let spec: SweepSpec = serde_json::from_str(
        r#"{"seed": 1, "base": {"resolution": 32},
            "grid": {"kind": ["uniform", "occupancy"], "n_samples": [8, 16, 32, 64, 128]}}"#,
    )
    .unwrap();
    let rows =
        volest_cli::run_sweep(&setup, &EstimatorConfig::default(), &spec, 4096, false).unwrap();
    assert_eq!(rows.len(), 10);
    let (uni, occ): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.kind.name() == "uniform");
    // For every uniform row, some occupancy row at least as good is cheaper.
    for u in &uni {
        assert!(
            occ.iter()
                .any(|o| o.psnr >= u.psnr && o.mean_samples_per_ray < u.mean_samples_per_ray),
            "uniform N={} not dominated",
            u.n_samples
        );
    }
}

#[test]
fn dump_samples_writes_packed_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    run(&[
        "dump-samples",
        "--scene",
        scene("box.json").to_str().unwrap(),
        "--estimator",
        "occupancy",
        "--grid-resolution",
        "32",
        "--width",
        "6",
        "--height",
        "6",
        "--samples",
        "16",
        "-o",
        csv.to_str().unwrap(),
    ]);
    let rows = csv_rows(&csv);
    assert_eq!(rows[0], ["ray_id", "t0", "t1"]);
    let mut last: Option<(usize, f64)> = None;
    for r in &rows[1..] {
        let (id, t0, t1): (usize, f64, f64) = (
            r[0].parse().unwrap(),
            r[1].parse().unwrap(),
            r[2].parse().unwrap(),
        );
        assert!(t0 < t1 && id < 36);
        if let Some((pid, pt1)) = last {
            assert!(id > pid || (id == pid && t0 >= pt1));
        }
        last = Some((id, t1));
    }
}
