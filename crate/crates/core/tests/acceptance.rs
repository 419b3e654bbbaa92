//! Acceptance checks 1-12. All run inside one test, in order, so that the
//! wall-clock checks do not compete with each other for cores. Each prints
//! a PASS/FAIL line; the test fails if any check does.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refsr::adaptation::{BitrateLadder, PfMode, TargetTrace};
use refsr::codec::{self, bicubic_upsample, downsample, nearest_upsample, COARSEST_QUALITY, FINEST_QUALITY};
use refsr::experiments::{cmd_adapt, cmd_run, RunConfig, RunMode, VideoInput};
use refsr::kernels::{
    avgpool2, conv2d, grid_sample, softmax_channels, softmax_spatial, upsample2, ConvKernel, Mat2, UpsampleMode,
    WarpField,
};
use refsr::keypoints::{KeypointSet, NUM_KEYPOINTS};
use refsr::metrics::psnr;
use refsr::model::Model;
use refsr::motion::MotionEstimator;
use refsr::streaming::{
    decode_keypoints, encode_keypoints, packetize, StreamId, Upsampler, DEFAULT_MTU, KEYPOINT_PAYLOAD_LEN,
};
use refsr::synth::{multiscale_cost_report, MotionScale, PredictOptions, Synthesizer, SynthesizerConfig};
use refsr::video::{smooth_gradient, SyntheticClip};
use refsr::weights::random_init;
use refsr::Tensor;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

const KERNEL_TOL: f64 = 1e-5;
const CASES: usize = 100;

fn kernel_oracles() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 7];

    for _ in 0..CASES {
        let (c, o) = (rng.gen_range(1..6), rng.gen_range(1..6));
        // The kernels support odd sizes only.
        let (k, stride) = (2 * rng.gen_range(0..3) + 1, rng.gen_range(1..3));
        let pad = rng.gen_range(0..=k / 2);
        let (h, w) = (rng.gen_range(k..20), rng.gen_range(k..20));
        let input = common::random_tensor(&mut rng, c, h, w, 1.0);
        let kernel = ok(ConvKernel::new(o, c, k, k, (0..o * c * k * k).map(|_| rng.gen_range(-0.3..0.3)).collect()))?;
        let bias: Vec<f32> = (0..o).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let got = ok(conv2d(&input, &kernel, &bias, stride, pad))?;
        let (oh, ow, want) = common::conv2d(&input, &kernel, &bias, stride, pad);
        ensure!(got.dims() == (o, oh, ow), "conv2d dims {:?} vs {:?}", got.dims(), (o, oh, ow));
        worst[0] = worst[0].max(common::max_abs_diff(got.data(), &want));
    }
    for _ in 0..CASES {
        let (c, h, w) = (rng.gen_range(1..5), 2 * rng.gen_range(1..12), 2 * rng.gen_range(1..12));
        let input = common::random_tensor(&mut rng, c, h, w, 2.0);
        worst[1] = worst[1].max(common::max_abs_diff(ok(avgpool2(&input))?.data(), &common::avgpool2(&input)));
    }
    for _ in 0..CASES {
        let (c, h, w) = (rng.gen_range(1..5), rng.gen_range(1..12), rng.gen_range(1..12));
        let input = common::random_tensor(&mut rng, c, h, w, 2.0);
        let near = upsample2(&input, UpsampleMode::Nearest);
        let bil = upsample2(&input, UpsampleMode::Bilinear);
        worst[2] = worst[2].max(common::max_abs_diff(near.data(), &common::upsample2_nearest(&input)));
        worst[3] = worst[3].max(common::max_abs_diff(bil.data(), &common::upsample2_bilinear(&input)));
    }
    for _ in 0..CASES {
        let (c, h, w) = (rng.gen_range(1..4), rng.gen_range(2..14), rng.gen_range(2..14));
        let (oh, ow) = (rng.gen_range(1..14), rng.gen_range(1..14));
        let input = common::random_tensor(&mut rng, c, h, w, 2.0);
        // Includes out-of-range coordinates to exercise the border.
        let coords: Vec<[f32; 2]> = (0..oh * ow).map(|_| [rng.gen_range(-1.3..1.3), rng.gen_range(-1.3..1.3)]).collect();
        let field = ok(WarpField::from_coords(oh, ow, coords.clone()))?;
        let got = grid_sample(&input, &field);
        worst[4] = worst[4].max(common::max_abs_diff(got.data(), &common::grid_sample(&input, oh, ow, &coords)));
    }
    for _ in 0..CASES {
        let (c, h, w) = (rng.gen_range(1..12), rng.gen_range(1..10), rng.gen_range(1..10));
        let input = common::random_tensor(&mut rng, c, h, w, 6.0);
        worst[5] = worst[5].max(common::max_abs_diff(softmax_channels(&input).data(), &common::softmax_channels(&input)));
        worst[6] = worst[6].max(common::max_abs_diff(softmax_spatial(&input).data(), &common::softmax_spatial(&input)));
    }
    let names = ["conv2d", "avgpool2", "upsample2 nearest", "upsample2 bilinear", "grid_sample", "softmax channels", "softmax spatial"];
    for (n, &e) in names.iter().zip(&worst) {
        ensure!(e <= KERNEL_TOL, "{n} max error {e:.2e}");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{CASES} cases each, worst error {:.1e}", worst.iter().fold(0.0f64, |a, &b| a.max(b))))
}

fn random_frame(rng: &mut ChaCha8Rng, size: usize) -> Tensor {
    Tensor::from_vec(3, size, size, (0..3 * size * size).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

fn bottleneck_shapes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut dims = Vec::new();
    for (out, blocks) in [(1024, 4), (512, 3)] {
        let cfg = ok(SynthesizerConfig::for_output(out))?;
        ensure!(cfg.n_blocks == blocks, "{out}: {} blocks, expected {blocks}", cfg.n_blocks);
        let store = ok(random_init(&cfg.architecture("gen"), out as u64))?;
        let synth = ok(Synthesizer::build(&store, "gen", cfg))?;
        let enc = ok(synth.encode_reference(&random_frame(&mut rng, out)))?;
        ensure!(enc.bottleneck.dims() == (256, 64, 64), "{out}: bottleneck {:?}", enc.bottleneck.dims());
        dims.push(format!("{out} -> {:?}", enc.bottleneck.dims()));
    }
    Ok(dims.join(", "))
}

fn random_keypoints(rng: &mut ChaCha8Rng, jac_range: f32) -> KeypointSet {
    let mut locations = [[0.0f32; 2]; NUM_KEYPOINTS];
    let mut jacobians = [[[0.0f32; 2]; 2]; NUM_KEYPOINTS];
    for k in 0..NUM_KEYPOINTS {
        locations[k] = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        let mut e = || rng.gen_range(-1.0f32..1.0) * jac_range;
        let j: Mat2 = [[1.0 + e(), e()], [e(), 1.0 + e()]];
        jacobians[k] = j;
    }
    KeypointSet::new(locations, jacobians)
}

fn motion_input_width() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let store = ok(random_init(&MotionEstimator::architecture("motion"), 3))?;
    let est = ok(MotionEstimator::build(&store, "motion"))?;
    let (r, t) = (random_frame(&mut rng, 64), random_frame(&mut rng, 64));
    let (input, _) = ok(est.motion_input(&r, &t, &random_keypoints(&mut rng, 0.3), &random_keypoints(&mut rng, 0.3)))?;
    // 11 heatmaps + 11 deformed RGB references + target RGB.
    let expected = (NUM_KEYPOINTS + 1) * (1 + 3) + 3;
    ensure!(input.channels() == 47 && expected == 47, "{} channels", input.channels());
    Ok(format!("{} channels at {}x{}", input.channels(), input.height(), input.width()))
}

fn occlusion_normalization() -> Check {
    let arch = MotionEstimator::architecture("motion");
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + trial);
        let store = ok(random_init(&arch, 1000 + trial))?;
        let est = ok(MotionEstimator::build(&store, "motion"))?;
        let (r, t) = (random_frame(&mut rng, 64), random_frame(&mut rng, 64));
        let out = ok(est.estimate(&r, &t, &random_keypoints(&mut rng, 0.3), &random_keypoints(&mut rng, 0.3)))?;
        let m = out.masks.tensor();
        ensure!(m.channels() == 3, "{} mask channels", m.channels());
        let n = m.plane_len();
        let d = m.data();
        for i in 0..n {
            let s = d[i] as f64 + d[n + i] as f64 + d[2 * n + i] as f64;
            worst = worst.max((s - 1.0).abs());
        }
    }
    ensure!(worst <= 1e-5, "max |A+B+C-1| = {worst:.2e}");
    Ok(format!("50 trials, max |A+B+C-1| = {worst:.1e}"))
}

fn identity_warp() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = ok(Model::random(ok(SynthesizerConfig::for_output(256))?, 5))?;
    let gen = &model.generator;
    let prepared = ok(gen.prepare_reference(&random_frame(&mut rng, 256)))?;
    let lr = random_frame(&mut rng, 64);
    let mut worst_warp = 0.0f32;
    let mut worst_feat = 0.0f32;
    for _ in 0..5 {
        let kp = KeypointSet::with_identity_jacobians(random_keypoints(&mut rng, 0.0).locations);
        let motion = ok(gen.estimate_motion(&prepared, Some(&lr), &kp, &kp, MotionScale::Low))?;
        let id = WarpField::identity(motion.warp.height(), motion.warp.width());
        worst_warp = worst_warp.max(motion.warp.max_abs_diff(&id));
        let b = &prepared.encoded.bottleneck;
        let warped = grid_sample(b, &motion.warp.resample(b.height(), b.width()));
        worst_feat = worst_feat.max(warped.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max));
    }
    ensure!(worst_warp <= 1e-6, "warp deviates from identity by {worst_warp:.2e}");
    ensure!(worst_feat <= 1e-5, "warped bottleneck deviates by {worst_feat:.2e}");
    Ok(format!("warp error {worst_warp:.1e}, bottleneck error {worst_feat:.1e}"))
}

fn keypoint_wire() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f32;
    for _ in 0..500 {
        let kp = random_keypoints(&mut rng, 1.0);
        let bytes = ok(encode_keypoints(&kp))?;
        ensure!(bytes.len() == 100 && KEYPOINT_PAYLOAD_LEN == 100, "payload {} bytes", bytes.len());
        let back = ok(decode_keypoints(&bytes))?;
        for (a, b) in kp.locations.iter().zip(&back.locations) {
            worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
    }
    // f32 rounding of the dequantized value is allowed on top of half a step.
    ensure!(worst <= 1.0 / 255.0 + 1e-6, "location error {worst}");
    let payload_kbps = 100.0 * 8.0 * 30.0 / 1000.0;
    let packets = ok(packetize(StreamId::Keypoints, 0, 0, &[0u8; 100], DEFAULT_MTU))?;
    let wire_kbps = packets.iter().map(|p| p.wire_len()).sum::<usize>() as f64 * 8.0 * 30.0 / 1000.0;
    ensure!((payload_kbps - 24.0f64).abs() < 1e-12, "payload {payload_kbps} kbps");
    ensure!(wire_kbps < 30.0, "wire {wire_kbps} kbps");
    Ok(format!("100 B, {payload_kbps} kbps payload, {wire_kbps:.2} kbps on the wire, location error {worst:.5}"))
}

/// The table written out independently of the library.
fn table_resolution(kbps: f64) -> usize {
    if kbps >= 550.0 {
        1024
    } else if kbps >= 180.0 {
        512
    } else if kbps >= 30.0 {
        256
    } else {
        128
    }
}

fn ladder() -> Check {
    let l = BitrateLadder::default();
    for (kbps, res, mode) in [(20.0, 128, PfMode::Neural), (100.0, 256, PfMode::Neural), (300.0, 512, PfMode::Neural), (600.0, 1024, PfMode::Fallback)] {
        let op = l.resolution_for_bitrate(kbps);
        ensure!(op.resolution == res && op.mode == mode, "{kbps} kbps -> {op:?}");
    }
    let mut prev = 0;
    for i in 2..=2000 {
        let kbps = i as f64 * 0.5;
        let r = l.resolution_for_bitrate(kbps).resolution;
        ensure!(r >= prev, "resolution drops from {prev} to {r} at {kbps} kbps");
        ensure!(r == table_resolution(kbps), "{kbps} kbps -> {r}");
        prev = r;
    }
    Ok("20/100/300/600 kbps -> 128/256/512/1024 fallback; monotone over 1-1000 kbps".into())
}

fn adaptation_replay() -> Check {
    // One breakpoint per 30 fps frame, 800 kbps falling by 10 kbps each frame.
    let n = 79;
    let trace = ok(TargetTrace::new((0..n).map(|k| (k as f64 / 30.0, 800.0 - 10.0 * k as f64)).collect()))?;
    let dir = ok(tempfile::tempdir())?;
    let input = VideoInput::Synthetic {
        size: 1024,
        frames: n,
        seed: 8,
    };
    let cfg = RunConfig::new(
        input,
        RunMode::Adaptive {
            trace,
            upsampler: Upsampler::Bicubic,
        },
        dir.path(),
    );
    let report = ok(cmd_adapt(&cfg))?;
    let profile = report.profile.as_ref().ok_or("no profile")?;
    ensure!(report.adapt.len() == n, "{} rows", report.adapt.len());

    let mut switches = Vec::new();
    let mut worst_rel: f64 = 0.0;
    for (k, row) in report.adapt.iter().enumerate() {
        let target = 800.0 - 10.0 * k as f64;
        ensure!((row.target_kbps - target).abs() < 1e-9, "row {k}: target {}", row.target_kbps);
        ensure!(row.resolution == table_resolution(target), "row {k}: {} at {target} kbps", row.resolution);
        if k > 0 && row.resolution != report.adapt[k - 1].resolution {
            switches.push(k);
        }
        let range = profile.range(row.resolution).ok_or("profile gap")?;
        if range.contains(target) {
            let rel = (row.achieved_kbps - target).abs() / target;
            worst_rel = worst_rel.max(rel);
            ensure!(rel <= 0.2, "row {k}: achieved {:.1} for target {target}", row.achieved_kbps);
        } else if target < range.min_kbps {
            // Below the floor the codec sits at its coarsest setting.
            ensure!(
                (row.achieved_kbps - range.min_kbps).abs() <= 0.2 * range.min_kbps,
                "row {k}: achieved {:.1} vs floor {:.1}",
                row.achieved_kbps,
                range.min_kbps
            );
        }
        let fits = !row.overshoot && row.achieved_kbps <= row.codec_target_kbps + 1e-9;
        let floor = row.overshoot && row.quality == COARSEST_QUALITY;
        ensure!(fits || floor, "row {k}: achieved {:.1} over {:.1}", row.achieved_kbps, row.codec_target_kbps);
    }
    // First frames strictly below 550, 180 and 30 kbps.
    let expected: Vec<usize> = [550.0, 180.0, 30.0]
        .iter()
        .map(|&t| (0..n).find(|&k| 800.0 - 10.0 * (k as f64) < t).unwrap())
        .collect();
    ensure!(switches == expected, "switches at {switches:?}, crossings at {expected:?}");
    ensure!(dir.path().join("adapt.csv").exists(), "adapt.csv missing");
    Ok(format!("switches at frames {switches:?}, worst in-range rate error {:.1}%", worst_rel * 100.0))
}

fn codec_properties() -> Check {
    let mut total = 0;
    for seed in 0..20u64 {
        let frame = SyntheticClip::new(256, seed).frame(seed as usize);
        let mut prev: Option<(usize, f64)> = None;
        for q in FINEST_QUALITY..=COARSEST_QUALITY {
            let enc = ok(codec::encode(&frame, q))?;
            let bytes = enc.to_bytes();
            ensure!(bytes == ok(codec::encode(&frame, q))?.to_bytes(), "seed {seed} q{q}: encode not deterministic");
            let dec = ok(codec::decode_bytes(&bytes))?;
            let p = ok(psnr(&dec, &frame))?;
            if let Some((ps, pp)) = prev {
                ensure!(bytes.len() <= ps, "seed {seed}: size rises at q{q} ({ps} -> {})", bytes.len());
                ensure!(p <= pp, "seed {seed}: psnr rises at q{q} ({pp:.3} -> {p:.3})");
            }
            prev = Some((bytes.len(), p));
            if q % 16 == 0 {
                let again = ok(codec::decode(&ok(codec::encode(&dec, q))?))?;
                ensure!(again.data() == dec.data(), "seed {seed} q{q}: not idempotent");
                ensure!(ok(codec::decode_bytes(&bytes))?.data() == dec.data(), "decode not deterministic");
            }
            total += 1;
        }
        let coarsest = ok(codec::encode(&frame, COARSEST_QUALITY))?.to_bytes().len();
        for kbps in [10.0, 30.0, 60.0, 120.0, 250.0, 500.0, 1000.0, 3000.0] {
            let rc = ok(codec::encode_at_bitrate(&frame, kbps, 30.0))?;
            let budget = codec::frame_budget_bytes(kbps, 30.0);
            let used = rc.frame.to_bytes().len();
            if coarsest <= budget {
                ensure!(!rc.overshoot && used <= budget, "seed {seed} {kbps} kbps: {used} B over {budget} B");
            } else {
                ensure!(rc.overshoot && rc.frame.quality == COARSEST_QUALITY, "seed {seed} {kbps} kbps: infeasible case not flagged");
            }
        }
    }
    Ok(format!("{total} encodes over 20 frames: deterministic, idempotent, monotone, budgets met"))
}

fn multiscale_cost() -> Check {
    let report = multiscale_cost_report(&ok(SynthesizerConfig::for_output(1024))?, 256);
    ensure!(report.motion_macs_full == 256 * report.motion_macs_low, "motion MACs {} vs {}", report.motion_macs_full, report.motion_macs_low);
    ensure!(report.motion_ratio() == 256.0, "motion ratio {}", report.motion_ratio());

    let model = ok(Model::random(ok(SynthesizerConfig::for_output(256))?, 10))?;
    let clip = SyntheticClip::new(256, 10);
    let reference = ok(model.prepare_reference(&clip.frame(0)))?;
    let lrs: Vec<Tensor> = (1..=10).map(|i| downsample(&clip.frame(i), 64)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut secs = [0.0f64; 2];
    for (i, scale) in [MotionScale::Low, MotionScale::Full].into_iter().enumerate() {
        let opts = PredictOptions {
            motion_scale: scale,
            ..Default::default()
        };
        let t = Instant::now();
        for lr in &lrs {
            ok(model.reconstruct(&reference, lr, &opts))?;
        }
        secs[i] = t.elapsed().as_secs_f64() / lrs.len() as f64;
    }
    let speedup = secs[1] / secs[0];
    ensure!(speedup >= 2.0, "64x64 motion only {speedup:.2}x faster");
    Ok(format!(
        "motion MAC ratio 256 at 1024; 256 output: {:.2} s vs {:.2} s per frame ({speedup:.1}x)",
        secs[0], secs[1]
    ))
}

fn determinism() -> Check {
    let t = Instant::now();
    let dirs = [ok(tempfile::tempdir())?, ok(tempfile::tempdir())?];
    for d in &dirs {
        let input = VideoInput::Synthetic {
            size: 256,
            frames: 30,
            seed: 11,
        };
        let mut cfg = RunConfig::new(
            input,
            RunMode::Neural {
                resolution: 64,
                kbps: 45.0,
            },
            d.path(),
        );
        cfg.seed = 11;
        let report = ok(cmd_run(&cfg))?;
        ensure!(report.records.len() == 30, "{} frames", report.records.len());
        ensure!(report.records.iter().all(|r| r.psnr_db.is_finite()), "non-finite psnr");
    }
    let elapsed = t.elapsed().as_secs_f64();
    for file in ["metrics.csv", "reconstructed.rgb", "summary.json"] {
        let a = ok(std::fs::read(dirs[0].path().join(file)))?;
        let b = ok(std::fs::read(dirs[1].path().join(file)))?;
        ensure!(!a.is_empty() && a == b, "{file} differs between runs");
    }
    ensure!(elapsed < 300.0, "two runs took {elapsed:.0} s");
    Ok(format!("two 30-frame neural runs byte-identical, {elapsed:.0} s total"))
}

fn baseline_sanity() -> Check {
    let mut rows = Vec::new();
    for i in 0..4 {
        let truth = smooth_gradient(1024, i as f32 * 0.25);
        let lr = ok(downsample(&truth, 256))?;
        let bic = ok(psnr(&ok(bicubic_upsample(&lr, 1024))?, &truth))?;
        let near = ok(psnr(&ok(nearest_upsample(&lr, 1024))?, &truth))?;
        ensure!(bic > near, "frame {i}: bicubic {bic:.2} dB <= nearest {near:.2} dB");
        rows.push(format!("{bic:.1}/{near:.1}"));
    }
    Ok(format!("bicubic/nearest psnr dB per frame: {}", rows.join(", ")))
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Check); 12] = [
        ("kernel oracles", kernel_oracles),
        ("bottleneck shape", bottleneck_shapes),
        ("motion input width", motion_input_width),
        ("occlusion masks sum to one", occlusion_normalization),
        ("identity warp", identity_warp),
        ("keypoint wire format", keypoint_wire),
        ("bitrate ladder", ladder),
        ("adaptation replay", adaptation_replay),
        ("codec properties", codec_properties),
        ("multi-scale cost", multiscale_cost),
        ("end-to-end determinism", determinism),
        ("bicubic beats nearest", baseline_sanity),
    ];
    let mut failed = Vec::new();
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    for (i, (name, check)) in checks.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why} [{secs:.1} s]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
