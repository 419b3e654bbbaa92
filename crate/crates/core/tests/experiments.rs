use std::path::Path;
use std::process::Command;

use refsr::adaptation::TargetTrace;
use refsr::codec::RateProfile;
use refsr::experiments::{cmd_adapt, cmd_profile, cmd_rd_curve, cmd_run, RdPoint, RunConfig, RunMode, VideoInput};
use refsr::metrics::Mode;
use refsr::streaming::Upsampler;
use refsr::video::read_raw;

fn synthetic(size: usize, frames: usize) -> VideoInput {
    VideoInput::Synthetic { size, frames, seed: 3 }
}

#[test]
fn bicubic_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(
        synthetic(256, 4),
        RunMode::Bicubic {
            resolution: 128,
            kbps: 120.0,
        },
        dir.path(),
    );
    let report = cmd_run(&cfg).unwrap();
    assert_eq!(report.records.len(), 4);
    assert!(report.records.iter().all(|r| r.psnr_db.is_finite() && r.psnr_db > 10.0));
    let (meta, frames) = read_raw(&dir.path().join("reconstructed.rgb")).unwrap();
    assert_eq!((meta.width, meta.height, frames.len()), (256, 256, 4));
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn neural_run_with_random_weights_has_output_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(
        synthetic(256, 2),
        RunMode::Neural {
            resolution: 128,
            kbps: 80.0,
        },
        dir.path(),
    );
    let report = cmd_run(&cfg).unwrap();
    assert!(report.records.iter().all(|r| r.mode == Mode::Neural && r.resolution_id == 1));
    let (_, frames) = read_raw(&dir.path().join("reconstructed.rgb")).unwrap();
    assert!(frames.iter().all(|f| f.dims() == (3, 256, 256)));
}

#[test]
fn rd_curve_has_one_sorted_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig::new(synthetic(256, 3), RunMode::Fallback { kbps: 0.0 }, dir.path());
    let points: Vec<RdPoint> = ["fallback:256:400", "bicubic:64:40", "bicubic:128:120"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let rows = cmd_rd_curve(&base, &points).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0].bitrate_kbps <= w[1].bitrate_kbps));
    for r in &rows {
        let rel = (r.bitrate_kbps - r.target_kbps).abs() / r.target_kbps;
        assert!(rel <= 0.2, "{r:?}");
    }
    let csv = std::fs::read_to_string(dir.path().join("rd_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!("neural:64".parse::<RdPoint>().is_err());
}

#[test]
fn constant_trace_never_switches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(
        synthetic(512, 5),
        RunMode::Adaptive {
            trace: TargetTrace::constant(100.0).unwrap(),
            upsampler: Upsampler::Bicubic,
        },
        dir.path(),
    );
    let report = cmd_adapt(&cfg).unwrap();
    assert_eq!(report.adapt.len(), 5);
    assert!(report.adapt.iter().all(|r| r.resolution == 256 && r.mode == Mode::Bicubic));
    assert!(dir.path().join("adapt.csv").exists());
}

#[test]
fn adapt_requires_a_trace() {
    let cfg = RunConfig::new(synthetic(256, 1), RunMode::Fallback { kbps: 100.0 }, "unused");
    assert!(cmd_adapt(&cfg).is_err());
}

#[test]
fn profile_is_monotone_and_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let corpus = [synthetic(256, 2), VideoInput::Synthetic { size: 256, frames: 2, seed: 9 }];
    let p = cmd_profile(&corpus, 30.0, 2, a.path()).unwrap();
    cmd_profile(&corpus, 30.0, 2, b.path()).unwrap();
    let bytes = std::fs::read(a.path().join("profile.json")).unwrap();
    assert_eq!(bytes, std::fs::read(b.path().join("profile.json")).unwrap());
    assert_eq!(RateProfile::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap(), p);
    let ranges = &p.ranges;
    assert!(ranges.windows(2).all(|w| w[0].resolution < w[1].resolution && w[0].min_kbps < w[1].min_kbps));
    assert!(ranges.iter().all(|r| r.min_kbps < r.max_kbps));
    assert!(cmd_profile(&[], 30.0, 2, a.path()).is_err());
}

fn refsr(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_refsr"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("REFSR_WEIGHTS_DIR")
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    let ok = refsr(&["run", "--synthetic", "256:2", "--mode", "bicubic", "--resolution", "64", "--kbps", "50"], out);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("metrics.csv").exists());

    let usage = refsr(&["run", "--synthetic", "256:2", "--mode", "warp-speed"], out);
    assert_eq!(usage.status.code(), Some(2));
    let usage = refsr(&["run", "--synthetic", "300:2"], out);
    assert_eq!(usage.status.code(), Some(2));
    let usage = refsr(&["profile"], out);
    assert_eq!(usage.status.code(), Some(2));

    let missing = refsr(&["run", "--input", "/definitely/not/here.rgb"], out);
    assert_eq!(missing.status.code(), Some(3));

    let trace = out.join("bad_trace.csv");
    std::fs::write(&trace, "t,kbps\n0,100\n").unwrap();
    let bad = refsr(&["adapt", "--synthetic", "512:2", "--trace", trace.to_str().unwrap()], out);
    assert_eq!(bad.status.code(), Some(3), "{}", String::from_utf8_lossy(&bad.stderr));
}

#[test]
fn cli_covers_all_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(refsr(&["profile", "--synthetic", "256:1"], out).status.success());
    assert!(out.join("profile.json").exists());
    let rd = refsr(&["rd-curve", "--synthetic", "256:2", "--point", "bicubic:64:40", "--point", "fallback:256:300"], out);
    assert!(rd.status.success(), "{}", String::from_utf8_lossy(&rd.stderr));
    assert!(out.join("rd_curve.csv").exists());
    let trace = out.join("trace.csv");
    std::fs::write(&trace, "time_s,target_kbps\n0,100\n0.05,20\n").unwrap();
    let adapt = refsr(
        &["adapt", "--synthetic", "512:3", "--trace", trace.to_str().unwrap(), "--upsampler", "bicubic"],
        out,
    );
    assert!(adapt.status.success(), "{}", String::from_utf8_lossy(&adapt.stderr));
    let csv = std::fs::read_to_string(out.join("adapt.csv")).unwrap();
    let res: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(res, ["256", "256", "128"]);
}
