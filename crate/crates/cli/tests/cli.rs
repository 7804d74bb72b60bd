use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn gsrmr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsrmr")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_fixture(dir: &Path) -> String {
    let path = dir.join("fixture.csv");
    std::fs::write(&path, "t,gain,loss\n0,1e-6,0.01\n1,1e-6,0.09\n2,1e-6,0.02\n").unwrap();
    path.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn xs(report: &serde_json::Value) -> Vec<f64> {
    report["schedule"]["x"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

#[test]
fn gen_channel_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        ok(&gsrmr(&["gen-channel", "--T", "50", "--seed", "7", "--trace", name], dir.path()));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 51);

    ok(&gsrmr(&["gen-channel", "--T", "20", "--seed", "8", "--trace", "c.csv"], dir.path()));
    assert_ne!(a, std::fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn line_of_sight_channel_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    ok(&gsrmr(&["gen-channel", "--T", "12", "--K", "1e12", "--d", "10", "--trace", "los.csv"], dir.path()));
    let text = std::fs::read_to_string(dir.path().join("los.csv")).unwrap();
    for line in text.lines().skip(1) {
        let gain: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((gain - 1e-6).abs() <= 1e-18, "{gain}");
    }
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gsrmr(&["gen-channel", "--T", "0"], dir.path()).status.code(), Some(2));
    assert_eq!(gsrmr(&["solve"], dir.path()).status.code(), Some(2));
    assert_eq!(gsrmr(&["solve", "--lth", "-1", "--trace", "x.csv"], dir.path()).status.code(), Some(2));
    assert_eq!(gsrmr(&["solve", "--trace", "missing.csv"], dir.path()).status.code(), Some(3));
    assert_eq!(gsrmr(&["solve", "--config", "missing.toml"], dir.path()).status.code(), Some(3));
}

#[test]
fn reference_schemes_and_apo_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_fixture(dir.path());

    ok(&gsrmr(&["solve", "--trace", &trace, "--solver", "robomr", "--out", "mr"], dir.path()));
    let r = report(&dir.path().join("mr"));
    assert_eq!(xs(&r), [1.0; 3]);
    assert_eq!(r["mean_masked_loss"].as_f64().unwrap(), 0.0);

    ok(&gsrmr(&["solve", "--trace", &trace, "--solver", "robogs", "--out", "gs"], dir.path()));
    let r = report(&dir.path().join("gs"));
    assert_eq!(xs(&r), [0.0; 3]);
    assert!((r["mean_masked_loss"].as_f64().unwrap() - 0.04).abs() <= 1e-12);

    let stdout = ok(&gsrmr(&["solve", "--trace", &trace, "--lth", "0.02", "--out", "apo"], dir.path()));
    let r = report(&dir.path().join("apo"));
    assert_eq!(xs(&r), [0.0, 1.0, 0.0]);
    assert!(r["feasible"].as_bool().unwrap());
    assert!(r.get("wall_ms").map_or(true, |v| v.is_null()));
    assert!(stdout.contains("vs robomr"));
}

#[test]
fn brute_force_refuses_long_traces() {
    let dir = tempfile::tempdir().unwrap();
    ok(&gsrmr(&["gen-channel", "--T", "288", "--trace", "long.csv"], dir.path()));
    let out = gsrmr(&["solve", "--trace", "long.csv", "--solver", "brute"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "seed = 5\n\n[system]\nloss_threshold = 0.05\n").unwrap();
    let trace = write_fixture(dir.path());

    let from_file = ok(&gsrmr(&["solve", "--config", "run.toml", "--trace", &trace], dir.path()));
    assert!(from_file.contains("loss_threshold = 0.05"));
    assert!(from_file.contains("seed = 5"));
    let flags =
        ok(&gsrmr(&["solve", "--config", "run.toml", "--trace", &trace, "--lth", "0.02", "--seed", "9"], dir.path()));
    assert!(flags.contains("loss_threshold = 0.02"));
    assert!(flags.contains("seed = 9"));
    let defaults = ok(&gsrmr(&["solve", "--trace", &trace], dir.path()));
    assert!(defaults.contains("loss_threshold = 0.03"));

    std::fs::write(dir.path().join("typo.toml"), "[system]\nloss_treshold = 0.05\n").unwrap();
    assert_eq!(gsrmr(&["solve", "--config", "typo.toml", "--trace", &trace], dir.path()).status.code(), Some(2));
}

fn save_rgb(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    image::RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y))).save(path).unwrap();
}

fn save_mask(path: &Path, w: u32, h: u32, keep: impl Fn(u32, u32) -> bool) {
    image::GrayImage::from_fn(w, h, |x, y| image::Luma([if keep(x, y) { 255 } else { 0 }])).save(path).unwrap();
}

fn frame_set(dir: &Path, t: usize, gs_offset: Option<u8>, w: u32) {
    let real = |x: u32, y: u32| [(x * 13 % 256) as u8, (y * 7 % 256) as u8, ((x + y) * 3 % 256) as u8];
    save_rgb(&dir.join(format!("real_{t:05}.png")), w, 12, real);
    if let Some(o) = gs_offset {
        save_rgb(&dir.join(format!("gs_{t:05}.png")), w, 12, |x, y| real(x, y).map(|v| v.saturating_add(o)));
    }
    save_rgb(&dir.join(format!("virtual_{t:05}.png")), w, 12, |_, _| [40, 90, 140]);
    save_mask(&dir.join(format!("mask_{t:05}.png")), w, 12, |x, _| x % 3 != 0);
}

#[test]
fn compute_losses_from_frames() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_fixture(dir.path());
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for t in 0..3 {
        frame_set(&frames, t, Some(0), 14);
    }
    ok(&gsrmr(&["compute-losses", "--frames", "frames", "--trace", &trace, "--out", "o"], dir.path()));
    let text = std::fs::read_to_string(dir.path().join("o/trace_losses.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("t,gain,loss"));
    for line in lines {
        let loss: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(loss, 0.0);
    }

    std::fs::remove_file(frames.join("gs_00001.png")).unwrap();
    ok(&gsrmr(&["compute-losses", "--frames", "frames", "--trace", &trace, "--out", "o"], dir.path()));
    let text = std::fs::read_to_string(dir.path().join("o/trace_losses.csv")).unwrap();
    let loss: f64 = text.lines().nth(2).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(loss, 1e6);

    frame_set(&frames, 1, Some(20), 13);
    save_rgb(&frames.join("gs_00001.png"), 14, 12, |_, _| [0, 0, 0]);
    let out = gsrmr(&["compute-losses", "--frames", "frames", "--trace", &trace, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    frame_set(&frames, 1, Some(20), 14);
    frame_set(&frames, 3, Some(0), 14);
    let out = gsrmr(&["compute-losses", "--frames", "frames", "--trace", &trace, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_and_convergence_smoke() {
    let dir = tempfile::tempdir().unwrap();
    ok(&gsrmr(&["gen-channel", "--T", "60", "--seed", "2", "--trace", "t.csv"], dir.path()));
    let start = Instant::now();
    ok(&gsrmr(
        &["sweep", "--trace", "t.csv", "--thresholds", "0.02,0.03,0.04", "--solvers", "apo,ranking", "--out", "s"],
        dir.path(),
    ));
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let csv = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    // apo, ranking, robomr, robogs at three thresholds
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    assert!(dir.path().join("s/sweep.svg").exists());

    ok(&gsrmr(&["convergence", "--trace", "t.csv", "--iters", "5", "--out", "c"], dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("c/convergence.csv")).unwrap();
    assert!(csv.starts_with("n,step_norm,zero_one_loss,penalized_objective_J"));
    assert!(csv.lines().count() >= 2 && csv.lines().count() <= 7);

    let out = gsrmr(&["sweep", "--thresholds", "0.03,0.02"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
