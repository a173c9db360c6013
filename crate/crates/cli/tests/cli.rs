//! The `ttvsr` binary driven end to end through temporary directories.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use ttvsr_cli::frames::{frame_name, load_png, load_sequence, quantize};
use ttvsr_core::tensor::{bicubic_resize, sample_plane, Coord, ResizeDirection};

const SMALL_NET: [&str; 6] = [
    "--channels",
    "8",
    "--extract-blocks",
    "1",
    "--recon-blocks",
    "2",
];

fn ttvsr(args: &[&str], paths: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ttvsr"));
    cmd.args(args);
    // paths are appended after the flags so they can be positional or values
    cmd.args(paths);
    cmd.output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ttvsr"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, kind: &str, frames: usize, size: &str) -> PathBuf {
    let out = dir.path().join(kind);
    let n = frames.to_string();
    run_ok(&[
        "synth",
        kind,
        "--frames",
        &n,
        "--size",
        size,
        "--seed",
        "42",
        "--out",
        s(&out),
    ]);
    out
}

#[test]
fn synth_static_writes_identical_frames() {
    let dir = TempDir::new().unwrap();
    let seq = synth(&dir, "static", 3, "16x16");
    let frames = load_sequence(&seq).unwrap();
    assert_eq!(frames.len(), 3);
    assert_eq!(frames[0].shape(), (3, 16, 16));
    assert!(frames.iter().all(|f| f == &frames[0]));
}

#[test]
fn synth_rejects_zero_frames() {
    let dir = TempDir::new().unwrap();
    let out = ttvsr(&["synth", "pan", "--frames", "0", "--out"], &[dir.path()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need ≥1 frame"));
}

#[test]
fn synth_into_unwritable_location_fails_with_2() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let out = ttvsr(&["synth", "static", "--out"], &[&blocker.join("sub")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_pan_matches_warp_of_first_frame() {
    let dir = TempDir::new().unwrap();
    let seq = synth(&dir, "pan", 5, "16x16");
    let f0 = load_png(&seq.join(frame_name(0))).unwrap();
    let f4 = load_png(&seq.join(frame_name(4))).unwrap();
    // four steps of (0.5, 0.75) px: sample frame 0 at p - (2, 3)
    let mut worst = 0.0f32;
    for c in 0..3 {
        for i in 2..16 {
            for j in 3..16 {
                let warped = sample_plane(
                    f0.plane(c),
                    16,
                    16,
                    Coord::new(i as f32 - 2.0, j as f32 - 3.0),
                );
                worst = worst.max((warped - f4.get(c, i, j)).abs());
            }
        }
    }
    assert!(worst <= 1.0 / 255.0, "interior warp error {worst}");
}

#[test]
fn sr_with_zero_weights_equals_quantized_bicubic() {
    let dir = TempDir::new().unwrap();
    let seq = synth(&dir, "zoom", 3, "12x16");
    let weights = dir.path().join("zero.ttwb");
    let mut args = vec!["init-weights", "--zeros", "--out", s(&weights)];
    args.extend(SMALL_NET);
    run_ok(&args);
    let out_dir = dir.path().join("sr");
    let mut args = vec!["sr", s(&seq), s(&out_dir), "--weights", s(&weights)];
    args.extend(SMALL_NET);
    run_ok(&args);
    let inputs = load_sequence(&seq).unwrap();
    let outputs = load_sequence(&out_dir).unwrap();
    assert_eq!(outputs.len(), 3);
    for (o, f) in outputs.iter().zip(&inputs) {
        let up = bicubic_resize(f, 4, ResizeDirection::Up).unwrap();
        assert_eq!(o.shape(), (3, 48, 64));
        for (a, b) in o.data().iter().zip(up.data()) {
            assert_eq!(quantize(*a), quantize(*b));
        }
    }
}

#[test]
fn sr_digest_is_repeatable_and_flag_sensitive() {
    let dir = TempDir::new().unwrap();
    let seq = synth(&dir, "pan", 4, "16x16");
    let digest = |extra: &[&str], out: &str| {
        let out_dir = dir.path().join(out);
        let mut args = vec!["sr", s(&seq), s(&out_dir), "--golden-hash"];
        args.extend(SMALL_NET);
        args.extend(extra);
        String::from_utf8(run_ok(&args).stdout)
            .unwrap()
            .trim()
            .to_string()
    };
    let a = digest(&["--seed", "42"], "a");
    assert_eq!(a.len(), 64);
    assert_eq!(a, digest(&["--seed", "42"], "b"));
    assert_ne!(a, digest(&["--seed", "42", "--bidirectional"], "c"));
    assert_ne!(a, digest(&["--seed", "7"], "d"));
}

#[test]
fn sr_flags_and_flow_files_agree_with_block_matching() {
    let dir = TempDir::new().unwrap();
    let seq = synth(&dir, "pan", 4, "16x16");
    let flows = dir.path().join("flows");
    run_ok(&["flow", s(&seq), "--out", s(&flows)]);
    assert!(flows.join("fwd_00003.flo").exists());
    assert!(flows.join("bwd_00002.flo").exists());
    let run = |extra: &[&str], out: &str| {
        let out_dir = dir.path().join(out);
        let mut args = vec![
            "sr",
            s(&seq),
            s(&out_dir),
            "--golden-hash",
            "--bidirectional",
        ];
        args.extend(SMALL_NET);
        args.extend(extra);
        String::from_utf8(run_ok(&args).stdout).unwrap()
    };
    assert_eq!(run(&[], "a"), run(&["--flows", s(&flows)], "b"));
}

#[test]
fn sr_writes_metrics_against_ground_truth() {
    let dir = TempDir::new().unwrap();
    let lr = synth(&dir, "static", 2, "16x16");
    let gt_dir = dir.path().join("gt");
    run_ok(&[
        "synth",
        "static",
        "--frames",
        "2",
        "--size",
        "64x64",
        "--out",
        s(&gt_dir),
    ]);
    let out_dir = dir.path().join("sr");
    let mut args = vec!["sr", s(&lr), s(&out_dir), "--gt", s(&gt_dir)];
    args.extend(SMALL_NET);
    run_ok(&args);
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "frame_index,psnr_db,ssim");
    assert_eq!(lines.len(), 3);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "0");
    assert!(fields[1].parse::<f64>().unwrap().is_finite());
    assert!(fields[2].parse::<f64>().unwrap() <= 1.0);
}

#[test]
fn sr_input_and_weight_errors() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = ttvsr(&["sr"], &[&empty, &dir.path().join("o")]);
    assert_eq!(out.status.code(), Some(2));

    let seq = synth(&dir, "static", 1, "8x8");
    let weights = dir.path().join("w.ttwb");
    let mut args = vec!["init-weights", "--out", s(&weights)];
    args.extend(SMALL_NET);
    run_ok(&args);
    let bytes = std::fs::read(&weights).unwrap();
    std::fs::write(&weights, &bytes[..bytes.len() / 2]).unwrap();
    let out_dir = dir.path().join("o");
    let mut args = vec!["sr", s(&seq), s(&out_dir), "--weights", s(&weights)];
    args.extend(SMALL_NET);
    let out = Command::new(env!("CARGO_BIN_EXE_ttvsr"))
        .args(&args)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("truncated at tensor"), "{err}");

    // a full network's file does not fit the small one
    let big = dir.path().join("big.ttwb");
    run_ok(&[
        "init-weights",
        "--out",
        s(&big),
        "--channels",
        "4",
        "--recon-blocks",
        "1",
        "--extract-blocks",
        "1",
    ]);
    let mut args = vec!["sr", s(&seq), s(&out_dir), "--weights", s(&big)];
    args.extend(SMALL_NET);
    let out = Command::new(env!("CARGO_BIN_EXE_ttvsr"))
        .args(&args)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("phi.conv_in.weight"));
}

fn traj_gap(seq: &Path, cell: &str, out: &Path) -> f32 {
    let o = run_ok(&["traj", s(seq), "--cell", cell, "--out", s(out)]);
    let text = String::from_utf8(o.stdout).unwrap();
    text.trim()
        .strip_prefix("max_gap ")
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn traj_reports_both_trajectories() {
    let dir = TempDir::new().unwrap();
    let still = synth(&dir, "static", 4, "16x16");
    let out = dir.path().join("t.txt");
    assert_eq!(traj_gap(&still, "3,5", &out), 0.0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# location maps\n0 3.000000 5.000000\n"));
    assert!(text.contains("# oracle\n"));
    assert!(text.ends_with("max_gap 0.000000\n"));

    let pan = synth(&dir, "pan", 5, "16x16");
    assert!(traj_gap(&pan, "8,8", &out) <= 1e-3);

    let o = ttvsr(&["traj", s(&pan), "--cell", "16,0", "--out"], &[&out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_prints_report_row() {
    let out = run_ok(&[
        "bench",
        "--frames",
        "10",
        "--channels",
        "4",
        "--height",
        "16",
        "--width",
        "16",
        "--dh",
        "4",
        "--dw",
        "4",
        "--measure",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        "T,C,H,W,Dh,Dw,vanilla_macs,traj_macs,ratio\n10,4,16,16,4,4,10240,640,0.0625\n"
    );
    let bad = ttvsr(&["bench", "--height", "10", "--dh", "4"], &[]);
    assert_eq!(bad.status.code(), Some(2));
}
