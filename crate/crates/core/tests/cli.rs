//! End-to-end tests of the `mvseg` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvseg::block_motion::{read_mvec, MotionVector};
use mvseg::cli::{run_dir_name, seg_path, RunManifest};
use mvseg::eval::parse_curve;
use mvseg::frame_io::{store_sequence, Frame, SequenceFormat, VideoSequence};
use mvseg::pipeline::{backward_sidecar_path, forward_sidecar_path, Scheme};
use serde_json::Value;
use tempfile::TempDir;

fn mvseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvseg"))
        .args(args)
        .env_remove("MVSEG_THREADS")
        .output()
        .expect("spawning mvseg")
}

fn ok(args: &[&str]) -> Output {
    let out = mvseg(args);
    assert!(
        out.status.success(),
        "mvseg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SCENE: &str = r#"{
  "width": 64, "height": 64, "frames": 12, "num_classes": 3,
  "background": {"texture_seed": 4, "velocity": [1.0, 0.0]},
  "sprites": [
    {"shape": "rect", "class_id": 1, "position": [8.0, 8.0], "velocity": [2.0, 1.0], "size": [20, 16]},
    {"shape": "ellipse", "class_id": 2, "position": [40.0, 30.0], "velocity": [-1.0, 1.0], "size": [16, 16]}
  ],
  "seed": 11
}"#;

fn small_scene(dir: &Path) -> PathBuf {
    let spec = dir.join("scene_in.json");
    fs::write(&spec, SMALL_SCENE).unwrap();
    let data = dir.join("data");
    ok(&["synth", "--spec", s(&spec), "--out", s(&data)]);
    data
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

/// Manifest JSON without its wall-clock sections.
fn replayable(path: &Path) -> Value {
    let mut v: Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    let obj = v.as_object_mut().unwrap();
    assert!(obj.remove("timing").is_some());
    assert!(obj.remove("throughput").is_some());
    v
}

/// Deterministic per-pixel texture.
fn texel(x: i64, y: i64) -> u8 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (h >> 56) as u8
}

/// `frames` frames where frame i+1 at p shows frame i at p + d.
fn translated(frames: usize, d: (i64, i64), size: usize) -> VideoSequence {
    let seq = (0..frames as i64)
        .map(|i| {
            let mut data = Vec::with_capacity(size * size * 3);
            for y in 0..size as i64 {
                for x in 0..size as i64 {
                    let v = texel(x + i * d.0, y + i * d.1);
                    data.extend_from_slice(&[v, v.wrapping_mul(3), 255 - v]);
                }
            }
            Frame::new(size, size, 3, data).unwrap()
        })
        .collect();
    VideoSequence::new(seq, None, 30.0).unwrap()
}

#[test]
fn synth_is_byte_identical_and_rejects_empty_scenes() {
    let tmp = TempDir::new().unwrap();
    let a = small_scene(tmp.path());
    let b = tmp.path().join("again");
    ok(&[
        "synth",
        "--spec",
        s(&tmp.path().join("scene_in.json")),
        "--out",
        s(&b),
    ]);
    let fa = files(&a);
    assert_eq!(fa.len(), 12 * 2 + 1);
    assert!(fa.iter().any(|(n, _)| n == "scene.json"));
    assert_eq!(fa, files(&b));

    let out = mvseg(&[
        "synth",
        "--out",
        s(&tmp.path().join("empty")),
        "--frames",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_raw_format_round_trips_through_run() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("scene_in.json");
    fs::write(&spec, SMALL_SCENE).unwrap();
    let ppm = tmp.path().join("ppm");
    let raw = tmp.path().join("raw");
    ok(&["synth", "--spec", s(&spec), "--out", s(&ppm)]);
    ok(&[
        "synth",
        "--spec",
        s(&spec),
        "--out",
        s(&raw),
        "--format",
        "raw",
    ]);
    assert!(raw.join("frames.mvsq").is_file());
    for (dir, out) in [(&ppm, "r1"), (&raw, "r2")] {
        ok(&[
            "run",
            "--input",
            s(dir),
            "--out",
            s(&tmp.path().join(out)),
            "--scheme",
            "prop",
            "--interval",
            "3",
            "--backbone-layers",
            "0",
        ]);
    }
    for i in 0..12 {
        assert_eq!(
            fs::read(seg_path(&tmp.path().join("r1"), i)).unwrap(),
            fs::read(seg_path(&tmp.path().join("r2"), i)).unwrap()
        );
    }
}

#[test]
fn encode_static_sequence_gives_all_zero_sidecars() {
    let tmp = TempDir::new().unwrap();
    let frame = translated(1, (0, 0), 64).frames.remove(0);
    let video = VideoSequence::new(vec![frame; 4], None, 30.0).unwrap();
    let data = tmp.path().join("data");
    store_sequence(&video, &data, SequenceFormat::Ppm).unwrap();
    let out = ok(&["encode", "--input", s(&data), "--radius", "4"]);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["forward"]["zero_fraction"], 1.0);
    assert_eq!(summary["backward"]["zero_fraction"], 1.0);
    assert_eq!(summary["forward"]["maps"], 3);
    for i in 1..4 {
        let m = read_mvec(&forward_sidecar_path(&data, i)).unwrap();
        assert!(m.vectors().iter().all(|v| *v == MotionVector::ZERO));
    }
    assert!(!forward_sidecar_path(&data, 0).exists());
    assert!(!backward_sidecar_path(&data, 3).exists());
}

#[test]
fn encode_recovers_translation_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let video = translated(3, (-5, 3), 96);
    let data = tmp.path().join("data");
    store_sequence(&video, &data, SequenceFormat::Ppm).unwrap();
    let (m1, m2) = (tmp.path().join("mv1"), tmp.path().join("mv2"));
    ok(&[
        "encode",
        "--input",
        s(&data),
        "--out",
        s(&m1),
        "--radius",
        "8",
    ]);
    ok(&[
        "encode",
        "--input",
        s(&data),
        "--out",
        s(&m2),
        "--radius",
        "8",
    ]);
    assert_eq!(files(&m1), files(&m2));

    for i in 1..3 {
        let fwd = read_mvec(&forward_sidecar_path(&m1, i)).unwrap();
        let bwd = read_mvec(&backward_sidecar_path(&m1, i - 1)).unwrap();
        // Interior blocks are those whose match stays inside the frame.
        for row in 1..fwd.rows() - 1 {
            for col in 1..fwd.cols() - 1 {
                assert_eq!(fwd.get(col, row), MotionVector::new(-5, 3));
                assert_eq!(bwd.get(col, row), MotionVector::new(5, -3));
            }
        }
    }
}

#[test]
fn run_records_delay_and_replays_from_its_manifest() {
    let tmp = TempDir::new().unwrap();
    let data = small_scene(tmp.path());
    let mv = tmp.path().join("mv");
    ok(&[
        "encode",
        "--input",
        s(&data),
        "--out",
        s(&mv),
        "--radius",
        "4",
    ]);
    let r1 = tmp.path().join("r1");
    ok(&[
        "run",
        "--input",
        s(&data),
        "--motion",
        s(&mv),
        "--out",
        s(&r1),
        "--scheme",
        "interp",
        "--interval",
        "5",
        "--seed",
        "9",
        "--fusion",
        "conv",
        "--dump-features",
    ]);
    let m = RunManifest::load(&r1.join("manifest.json")).unwrap();
    assert_eq!(m.delay, 5);
    assert_eq!(m.settings.scheme, Scheme::Interp);
    assert_eq!(m.settings.seed, 9);
    assert_eq!(m.counters.extractions, 3);
    assert!(r1.join("fusion.bin").is_file());
    assert!(r1.join("feat_000011.fmap").is_file());

    let r2 = tmp.path().join("r2");
    ok(&[
        "run",
        "--input",
        s(&data),
        "--motion",
        s(&mv),
        "--out",
        s(&r2),
        "--config",
        s(&r1.join("manifest.json")),
    ]);
    assert_eq!(
        replayable(&r1.join("manifest.json")),
        replayable(&r2.join("manifest.json"))
    );
    for i in 0..12 {
        assert_eq!(
            fs::read(seg_path(&r1, i)).unwrap(),
            fs::read(seg_path(&r2, i)).unwrap()
        );
    }
    assert_eq!(
        fs::read(r1.join("fusion.bin")).unwrap(),
        fs::read(r2.join("fusion.bin")).unwrap()
    );
}

#[test]
fn missing_and_corrupt_sidecars_map_to_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let data = small_scene(tmp.path());
    let mv = tmp.path().join("mv");
    ok(&[
        "encode",
        "--input",
        s(&data),
        "--out",
        s(&mv),
        "--radius",
        "2",
        "--no-backward",
    ]);
    let args = |scheme: &'static str, out: &str| {
        vec![
            "run".to_string(),
            "--input".into(),
            s(&data).into(),
            "--motion".into(),
            s(&mv).into(),
            "--out".into(),
            s(&tmp.path().join(out)).into(),
            "--scheme".into(),
            scheme.into(),
            "--interval".into(),
            "3".into(),
        ]
    };
    let run = |a: Vec<String>| mvseg(&a.iter().map(String::as_str).collect::<Vec<_>>());

    assert!(run(args("prop", "a")).status.success());
    // Interpolation needs the backward maps that were not encoded.
    let out = run(args("interp", "b"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("backward"));
    // Negated forward maps stand in for them.
    let mut negate = args("interp", "c");
    negate.extend(["--backward".into(), "negate".into()]);
    assert!(run(negate).status.success());

    fs::write(forward_sidecar_path(&mv, 2), b"MVEC\x01").unwrap();
    assert_eq!(run(args("prop", "d")).status.code(), Some(3));
}

#[test]
fn bad_thread_count_and_config_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let data = small_scene(tmp.path());
    let out = Command::new(env!("CARGO_BIN_EXE_mvseg"))
        .args([
            "run",
            "--input",
            s(&data),
            "--out",
            s(&tmp.path().join("r")),
        ])
        .env("MVSEG_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"interval": 0}"#).unwrap();
    let out = mvseg(&[
        "run",
        "--input",
        s(&data),
        "--out",
        s(&tmp.path().join("r")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&cfg, r#"{"schedule": 3}"#).unwrap();
    let out = mvseg(&[
        "run",
        "--input",
        s(&data),
        "--out",
        s(&tmp.path().join("r")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn eval_at_interval_one_has_equal_avg_and_min() {
    let tmp = TempDir::new().unwrap();
    let data = small_scene(tmp.path());
    for scheme in ["prop", "interp"] {
        let out = ok(&[
            "eval",
            "--input",
            s(&data),
            "--scheme",
            scheme,
            "--interval",
            "1",
            "--radius",
            "4",
        ]);
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["accuracy"]["avg"], v["accuracy"]["min"]);
        assert_eq!(v["clips"], 12);
    }
    let out = ok(&[
        "eval",
        "--input",
        s(&data),
        "--scheme",
        "prop",
        "--interval",
        "3",
        "--radius",
        "4",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["accuracy"]["per_offset"].as_object().unwrap().len(), 3);
    // Frames 2..=8 are eligible.
    assert_eq!(v["clips"], 7);
}

#[test]
fn bench_sweep_runs_every_point_and_report_matches_its_curve() {
    let tmp = TempDir::new().unwrap();
    let data = small_scene(tmp.path());
    let out = tmp.path().join("bench");
    let stdout = ok(&[
        "bench",
        "--input",
        s(&data),
        "--out",
        s(&out),
        "--sweep",
        "1..10",
        "--schemes",
        "baseline,prop,interp",
        "--radius",
        "4",
        "--backbone-layers",
        "0",
    ])
    .stdout;
    let run_dirs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(run_dirs, 21);
    assert!(out
        .join(run_dir_name(Scheme::Interp, 10))
        .join("manifest.json")
        .is_file());

    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert_eq!(String::from_utf8(stdout).unwrap(), curve);
    let rows = parse_curve(&curve).unwrap();
    assert_eq!(rows.len(), 21);
    assert_eq!(
        (rows[0].scheme, rows[0].n, rows[0].delay_frames),
        (Scheme::Baseline, 1, 0)
    );

    let report = ok(&["report", "--input", s(&out)]).stdout;
    assert_eq!(String::from_utf8(report).unwrap(), curve);
}

#[test]
fn report_rejects_mismatched_manifests() {
    let tmp = TempDir::new().unwrap();
    let data = small_scene(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&[
        "run",
        "--input",
        s(&data),
        "--out",
        s(&a),
        "--scheme",
        "prop",
        "--interval",
        "2",
        "--radius",
        "2",
    ]);
    ok(&[
        "run",
        "--input",
        s(&data),
        "--out",
        s(&b),
        "--scheme",
        "interp",
        "--interval",
        "2",
        "--radius",
        "2",
        "--seed",
        "5",
    ]);
    let out = mvseg(&["report", "--input", s(&a), s(&b)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatched"));
}

#[test]
fn report_over_a_sweep_has_interp_dominating_prop() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--out", s(&data), "--frames", "40", "--seed", "2"]);
    let mv = tmp.path().join("mv");
    ok(&["encode", "--input", s(&data), "--out", s(&mv)]);
    let out = tmp.path().join("bench");
    ok(&[
        "bench",
        "--input",
        s(&data),
        "--motion",
        s(&mv),
        "--out",
        s(&out),
        "--sweep",
        "2..6",
        "--schemes",
        "prop,interp",
    ]);
    let csv = String::from_utf8(ok(&["report", "--input", s(&out)]).stdout).unwrap();
    let rows = parse_curve(&csv).unwrap();
    for n in 2..=6 {
        let get = |scheme| {
            rows.iter()
                .find(|r| r.scheme == scheme && r.n == n)
                .unwrap()
        };
        let (p, i) = (get(Scheme::Prop), get(Scheme::Interp));
        assert!(
            i.miou_avg >= p.miou_avg,
            "n={n}: interp {} < prop {}",
            i.miou_avg,
            p.miou_avg
        );
    }
}
