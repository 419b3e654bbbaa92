use proptest::prelude::*;

use refsr::codec::{self, resolution_id};
use refsr::keypoints::KeypointSet;
use refsr::model::{Model, ModelBank, WeightSource, KEYPOINT_BASELINE};
use refsr::streaming::{
    channel_run, decode_keypoints, encode_keypoints, packetize, reassemble, ComputeModel, LinkState, LinkTrace, Packet, Receiver, ReceiverConfig,
    RefreshPolicy, SendMode, Sender, SenderConfig, StreamId, Upsampler, HEADER_LEN, KEYPOINT_PAYLOAD_LEN,
};
use refsr::metrics::Mode;
use refsr::synth::SynthesizerConfig;
use refsr::video::SyntheticClip;

proptest! {
    #[test]
    fn packetize_round_trips(
        payload in proptest::collection::vec(any::<u8>(), 0..6000),
        mtu in (HEADER_LEN + 1)..1500usize,
        frame_id in any::<u32>(),
        reverse in any::<bool>(),
    ) {
        let mut packets = packetize(StreamId::PerFrame, frame_id, 2, &payload, mtu).unwrap();
        prop_assert!(packets.iter().all(|p| p.wire_len() <= mtu));
        prop_assert_eq!(packets.len(), payload.len().div_ceil(mtu - HEADER_LEN).max(1));
        let wire: Vec<Packet> = packets.iter().map(|p| Packet::from_bytes(&p.to_bytes()).unwrap()).collect();
        prop_assert_eq!(&wire, &packets);
        if reverse {
            packets.reverse();
        }
        prop_assert_eq!(reassemble(&packets).unwrap(), payload);
    }

    #[test]
    fn truncated_packets_are_rejected(payload in proptest::collection::vec(any::<u8>(), 1..300), cut in 1usize..12) {
        let p = &packetize(StreamId::Reference, 7, 3, &payload, 1200).unwrap()[0];
        let bytes = p.to_bytes();
        prop_assert!(Packet::from_bytes(&bytes[..bytes.len() - cut.min(bytes.len())]).is_err());
    }
}

#[test]
fn missing_fragment_names_the_frame() {
    let mut packets = packetize(StreamId::PerFrame, 42, 1, &[5u8; 3000], 1200).unwrap();
    packets.remove(1);
    let err = reassemble(&packets).unwrap_err().to_string();
    assert!(err.contains("frame 42"), "{err}");
}

fn bicubic_pair(out: usize, fps: f64) -> (Sender, Receiver) {
    let sender = Sender::new(SenderConfig::new(out, fps)).unwrap();
    let mut rcfg = ReceiverConfig::new(out);
    rcfg.upsampler = Upsampler::Bicubic;
    (sender, Receiver::new(rcfg, None).unwrap())
}

#[test]
fn reference_goes_out_with_the_first_frame_only() {
    let (mut sender, mut receiver) = bicubic_pair(256, 30.0);
    let clip = SyntheticClip::new(256, 1);
    let mode = SendMode::Neural {
        resolution: 128,
        target_kbps: 100.0,
    };
    for i in 0..4 {
        let sent = sender.send_frame(&clip.frame(i), mode).unwrap();
        let refs = sent.packets.iter().filter(|p| p.stream_id == StreamId::Reference).count();
        assert_eq!(refs > 0, i == 0, "frame {i}");
        assert_eq!(sent.reference_bytes > 0, i == 0);
        let rx = receiver.receive_frame(&sent.packets).unwrap();
        assert_eq!(rx.frame_id, i as u32);
        assert_eq!(rx.frame.dims(), (3, 256, 256));
        assert_eq!(rx.mode, Mode::Bicubic);
        assert_eq!(rx.resolution_id, resolution_id(128).unwrap());
    }
    assert!(receiver.reference().is_some());
    assert_eq!(sender.contexts()[&128].frames, 4);
    assert_eq!(receiver.contexts()[&128].frames, 4);
}

#[test]
fn periodic_refresh_resends_the_reference() {
    let mut cfg = SenderConfig::new(256, 30.0);
    cfg.refresh = RefreshPolicy::Every(3);
    let mut sender = Sender::new(cfg).unwrap();
    let clip = SyntheticClip::new(256, 2);
    let with_ref: Vec<bool> = (0..7)
        .map(|i| sender.send_frame(&clip.frame(i), SendMode::Fallback { target_kbps: 500.0 }).unwrap().reference_bytes > 0)
        .collect();
    assert_eq!(with_ref, [true, false, false, true, false, false, true]);
}

#[test]
fn fallback_returns_the_decoded_frame() {
    let (mut sender, mut receiver) = bicubic_pair(256, 30.0);
    let frame = SyntheticClip::new(256, 3).frame(0);
    let sent = sender.send_frame(&frame, SendMode::Fallback { target_kbps: 400.0 }).unwrap();
    let rx = receiver.receive_frame(&sent.packets).unwrap();
    assert_eq!(rx.mode, Mode::Fallback);
    let pf: Vec<Packet> = sent.packets.into_iter().filter(|p| p.stream_id == StreamId::PerFrame).collect();
    let direct = codec::decode_bytes(&reassemble(&pf).unwrap()).unwrap();
    assert_eq!(rx.frame.data(), direct.data());
}

#[test]
fn neural_mode_rejects_output_resolution() {
    let (mut sender, _) = bicubic_pair(256, 30.0);
    let frame = SyntheticClip::new(256, 0).frame(0);
    let mode = SendMode::Neural {
        resolution: 256,
        target_kbps: 100.0,
    };
    assert!(sender.send_frame(&frame, mode).is_err());
}

#[test]
fn keypoint_only_frames_carry_a_fixed_payload() {
    let model = std::sync::Arc::new(Model::random(SynthesizerConfig::for_output(256).unwrap(), 9).unwrap());
    let mut sender = Sender::new(SenderConfig::new(256, 30.0)).unwrap().with_keypoint_model(model);
    let bank = ModelBank::new(256, WeightSource::Random { seed: 9 }).unwrap();
    let mut receiver = Receiver::new(ReceiverConfig::new(256), Some(bank)).unwrap();
    let clip = SyntheticClip::new(256, 4);
    for i in 0..2 {
        let sent = sender.send_frame(&clip.frame(i), SendMode::KeypointsOnly).unwrap();
        assert_eq!(sent.payload_bytes, KEYPOINT_PAYLOAD_LEN);
        let kp: Vec<&Packet> = sent.packets.iter().filter(|p| p.stream_id == StreamId::Keypoints).collect();
        assert_eq!(kp.len(), 1);
        assert_eq!(kp[0].wire_len(), KEYPOINT_PAYLOAD_LEN + HEADER_LEN);
        let rx = receiver.receive_frame(&sent.packets).unwrap();
        assert_eq!(rx.mode, Mode::KeypointsOnly);
        assert_eq!(rx.frame.dims(), (3, 256, 256));
    }
    assert_eq!(KEYPOINT_BASELINE, "kp_baseline");
}

/// Link and compute timing replayed by hand.
#[test]
fn latency_follows_link_arithmetic() {
    let fps = 10.0;
    let frames = SyntheticClip::new(256, 5).frames(6);
    let (mut sender, mut receiver) = bicubic_pair(256, fps);
    let link = LinkTrace::new(vec![
        LinkState {
            time_s: 0.0,
            bytes_per_s: 20_000.0,
            delay_s: 0.03,
        },
        LinkState {
            time_s: 0.25,
            bytes_per_s: 5_000.0,
            delay_s: 0.05,
        },
    ])
    .unwrap();
    let (ts, tr) = (0.02, 0.04);
    let compute = ComputeModel::Fixed {
        sender_s: ts,
        receiver_s: tr,
    };
    let plan = |_: usize, _: f64| {
        Ok(SendMode::Neural {
            resolution: 64,
            target_kbps: 60.0,
        })
    };
    let mut bytes = Vec::new();
    let consume = |s: &refsr::streaming::SendRecord, _: &refsr::streaming::ReceivedFrame, _: &refsr::streaming::FrameTiming| {
        bytes.push(s.bytes_on_wire);
        Ok(())
    };
    let timings = channel_run(&mut sender, &mut receiver, &frames, &link, compute, plan, consume).unwrap();
    assert_eq!(timings.len(), 6);

    let (mut link_free, mut busy) = (0.0f64, 0.0f64);
    for (i, t) in timings.iter().enumerate() {
        let capture = i as f64 / fps;
        let ready = capture + ts;
        let (bw, delay) = if ready >= 0.25 { (5_000.0, 0.05) } else { (20_000.0, 0.03) };
        link_free = ready.max(link_free) + bytes[i] as f64 / bw;
        let arrival = link_free + delay;
        let done = arrival.max(busy) + tr;
        busy = done;
        assert_eq!(t.frame_id, i as u32);
        assert!((t.sent_s - ready).abs() < 1e-9, "frame {i}");
        assert!((t.arrival_s - arrival).abs() < 1e-9, "frame {i}: {} vs {arrival}", t.arrival_s);
        assert!((t.done_s - done).abs() < 1e-9, "frame {i}");
        assert!((t.latency_ms - (done - capture) * 1000.0).abs() < 1e-6);
    }
    // The reference makes frame 0 large; later frames queue behind it.
    assert!(timings[0].latency_ms > 1000.0 * (bytes[0] as f64 / 20_000.0));
    assert!(timings.windows(2).all(|w| w[1].done_s >= w[0].done_s));
}

#[test]
fn unlimited_link_with_zero_compute_has_zero_latency() {
    let frames = SyntheticClip::new(256, 6).frames(3);
    let (mut sender, mut receiver) = bicubic_pair(256, 30.0);
    let plan = |_: usize, _: f64| Ok(SendMode::Fallback { target_kbps: 300.0 });
    let timings = channel_run(
        &mut sender,
        &mut receiver,
        &frames,
        &LinkTrace::unlimited(),
        ComputeModel::default(),
        plan,
        |_, _, _| Ok(()),
    )
    .unwrap();
    assert!(timings.iter().all(|t| t.latency_ms == 0.0));
}

#[test]
fn receiver_errors_surface_from_the_run() {
    let frames = SyntheticClip::new(256, 7).frames(2);
    let (mut sender, mut receiver) = bicubic_pair(256, 30.0);
    let plan = |_: usize, _: f64| Ok(SendMode::Fallback { target_kbps: 300.0 });
    let err = channel_run(
        &mut sender,
        &mut receiver,
        &frames,
        &LinkTrace::unlimited(),
        ComputeModel::default(),
        plan,
        |_, _, _| Err(refsr::Error::Session("sink full".into())),
    )
    .unwrap_err();
    assert!(err.to_string().contains("sink full"), "{err}");
}

#[test]
fn latency_never_rises_with_bandwidth() {
    let frames = SyntheticClip::new(256, 8).frames(5);
    let mut prev: Option<Vec<f64>> = None;
    for kbps in [100.0, 300.0, 1000.0, 5000.0] {
        let (mut sender, mut receiver) = bicubic_pair(256, 30.0);
        let link = LinkTrace::constant(kbps * 1000.0 / 8.0, 0.01).unwrap();
        let plan = |_: usize, _: f64| {
            Ok(SendMode::Neural {
                resolution: 128,
                target_kbps: 90.0,
            })
        };
        let lat: Vec<f64> = channel_run(&mut sender, &mut receiver, &frames, &link, ComputeModel::default(), plan, |_, _, _| Ok(()))
            .unwrap()
            .iter()
            .map(|t| t.latency_ms)
            .collect();
        if let Some(p) = &prev {
            assert!(lat.iter().zip(p).all(|(a, b)| a <= b), "{kbps} kbps: {lat:?} vs {p:?}");
        }
        prev = Some(lat);
    }
}

#[test]
fn one_decoder_context_per_frame() {
    let (mut sender, mut receiver) = bicubic_pair(512, 30.0);
    let clip = SyntheticClip::new(512, 9);
    for (i, res) in [128, 256, 128, 64].into_iter().enumerate() {
        let mode = SendMode::Neural {
            resolution: res,
            target_kbps: 80.0,
        };
        let sent = sender.send_frame(&clip.frame(i), mode).unwrap();
        let before: Vec<u64> = receiver.contexts().values().map(|c| c.frames).collect();
        receiver.receive_frame(&sent.packets).unwrap();
        let after: Vec<u64> = receiver.contexts().values().map(|c| c.frames).collect();
        let touched: Vec<usize> = receiver
            .contexts()
            .keys()
            .zip(before.iter().zip(&after))
            .filter(|(_, (b, a))| a != b)
            .map(|(&r, _)| r)
            .collect();
        assert_eq!(touched, [res]);
    }
    assert_eq!(receiver.contexts()[&128].frames, 2);
}

#[test]
fn pf_frame_without_reference_is_rejected() {
    let (mut sender, mut receiver) = bicubic_pair(256, 30.0);
    let frame = SyntheticClip::new(256, 10).frame(0);
    let mode = SendMode::Neural {
        resolution: 128,
        target_kbps: 100.0,
    };
    let sent = sender.send_frame(&frame, mode).unwrap();
    let pf: Vec<Packet> = sent.packets.into_iter().filter(|p| p.stream_id == StreamId::PerFrame).collect();
    assert!(receiver.receive_frame(&pf).is_err());
}

#[test]
fn unknown_resolution_id_is_rejected() {
    let (mut sender, mut receiver) = bicubic_pair(256, 30.0);
    let frame = SyntheticClip::new(256, 11).frame(0);
    let mode = SendMode::Neural {
        resolution: 128,
        target_kbps: 100.0,
    };
    let mut packets = sender.send_frame(&frame, mode).unwrap().packets;
    for p in packets.iter_mut().filter(|p| p.stream_id == StreamId::PerFrame) {
        p.resolution_id = 9;
    }
    assert!(receiver.receive_frame(&packets).is_err());
}

#[test]
fn identity_jacobians_survive_the_wire_exactly() {
    let kp = KeypointSet::with_identity_jacobians([[0.0, 0.0]; 10]);
    let back = decode_keypoints(&encode_keypoints(&kp).unwrap()).unwrap();
    assert_eq!(back.jacobians, kp.jacobians);
    assert!(back.locations.iter().all(|l| l[0].abs() <= 1.0 / 255.0 && l[1].abs() <= 1.0 / 255.0));
    assert!(decode_keypoints(&[0u8; 99]).is_err());
}
