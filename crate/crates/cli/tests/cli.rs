mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::write_scene;
use doodle_cli::io::load_image;

fn doodle(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_doodle"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("DOODLE_THREADS", t),
        None => cmd.env_remove("DOODLE_THREADS"),
    };
    cmd.output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn render_writes_png_and_logs_every_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_scene(dir.path(), 48, 1);
    let out = dir.path().join("out.png");
    let o = doodle(
        &[
            "render", "--content", s(&f.content), "--content-map", s(&f.content_map), "--style", s(&f.style),
            "--style-map", s(&f.style_map), "--out", s(&out), "--beta", "250", "--gamma", "50", "--alpha", "10",
            "--resolutions", "24,40", "--iters", "3",
        ],
        None,
    );
    let err = stderr(&o);
    assert_eq!(o.status.code(), Some(0), "{err}");
    assert!(err.contains("alpha=10 beta=250 gamma=50"), "{err}");
    assert!(err.contains("resolutions=24,40 iters=3"), "{err}");
    assert_eq!(err.lines().filter(|l| l.starts_with("level=")).count(), 6, "{err}");
    let img = load_image(&out).unwrap();
    assert_eq!(img.shape(), (3, 40, 40));
}

#[test]
fn unannotated_render_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_scene(dir.path(), 32, 2);
    let out = dir.path().join("plain.png");
    let o = doodle(
        &["render", "--content", s(&f.content), "--style", s(&f.style), "--out", s(&out), "--iters", "2"],
        Some("2"),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.exists());
}

#[test]
fn unpaired_map_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_scene(dir.path(), 32, 3);
    let out = dir.path().join("o.png");
    let o = doodle(
        &["render", "--content", s(&f.content), "--content-map", s(&f.content_map), "--style", s(&f.style), "--out", s(&out)],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("same M"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn mismatched_channels_and_aspect_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_scene(dir.path(), 32, 4);
    let grey = dir.path().join("grey.png");
    common::write_png(&grey, &doodle_core::Tensor::filled(3, 32, 32, 128.0));
    let grey_img = image::open(&grey).unwrap().into_luma8();
    grey_img.save(&grey).unwrap();
    let out = dir.path().join("o.png");
    let base = ["render", "--content", s(&f.content), "--style", s(&f.style), "--out", s(&out), "--iters", "1"];

    let mut args = base.to_vec();
    args.extend(["--content-map", s(&f.content_map), "--style-map", s(&grey)]);
    let o = doodle(&args, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("M=3") && stderr(&o).contains("M=1"), "{}", stderr(&o));

    let wide = dir.path().join("wide.png");
    common::write_png(&wide, &doodle_core::Tensor::filled(3, 32, 40, 0.0));
    let mut args = base.to_vec();
    args.extend(["--content-map", s(&wide), "--style-map", s(&f.style_map)]);
    let o = doodle(&args, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("aspect"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let o = doodle(&["render", "--frobnicate"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    let o = doodle(&["render", "--patch-size", "4", "--content", "a", "--style", "b", "--out", "c"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = doodle(&["render"], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_scene(dir.path(), 32, 5);
    let out = dir.path().join("o.png");
    let missing = dir.path().join("missing.png");
    let o = doodle(&["render", "--content", s(&missing), "--style", s(&f.style), "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.png"));

    let weights = dir.path().join("bad.dfw");
    std::fs::write(&weights, b"NOPE\x00\x00\x00\x00").unwrap();
    let o = doodle(
        &["render", "--content", s(&f.content), "--style", s(&f.style), "--out", s(&out), "--weights", s(&weights)],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("format error"), "{}", stderr(&o));
}

#[test]
fn custom_weights_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_scene(dir.path(), 32, 6);
    let weights = dir.path().join("net.dfw");
    std::fs::write(&weights, doodle_core::FeatureExtractor::default_weight_bytes()).unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec!["render", "--content", s(&f.content), "--style", s(&f.style), "--out", s(out), "--iters", "2"];
        args.extend_from_slice(extra);
        assert_eq!(doodle(&args, None).status.code(), Some(0));
    };
    run(&a, &[]);
    run(&b, &["--weights", s(&weights)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
