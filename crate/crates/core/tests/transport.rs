mod common;

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use common::{default_config, table_triple, toy_world};
use proptest::prelude::*;
use specsteer::config::{DecodeMode, ProtocolConfig};
use specsteer::error::Error;
use specsteer::experiment::load_private;
use specsteer::protocol::{run_session, EdgeNode, SparseSteeringPayload, SteeringEntry};
use specsteer::transport::scanner::UplinkScanner;
use specsteer::transport::wire::{self, Frame, MsgType};
use specsteer::transport::Channel;
use specsteer::transport::{
    connect_edge, framelog, replay_cloud, run_simulated, serve, ChannelModel, StreamChannel,
};
use specsteer::{DraftBatch, Verdict};

fn cfg(seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        lambda: 0.3,
        seed,
        max_len: 20,
        ..ProtocolConfig::default()
    }
}

#[test]
fn split_run_matches_in_process_session() {
    let w = toy_world();
    let m = w.models().unwrap();
    let prompt = w.encode_prompt("where should we eat tonight ?").unwrap();
    for seed in 0..12 {
        let c = ProtocolConfig {
            mode: if seed % 3 == 0 {
                DecodeMode::Greedy
            } else {
                DecodeMode::Stochastic
            },
            ..cfg(seed)
        };
        let local = run_session(&c, &m, &prompt, &w.vocab).unwrap();
        let (split, _) = run_simulated(&c, &m, &prompt, &w.vocab, ChannelModel::ideal()).unwrap();
        assert_eq!(split.edge.sequence, local.sequence);
        assert_eq!(split.cloud.mirror, local.sequence);
        assert_eq!(split.traces(), local.traces);
    }
}

#[test]
fn link_counters_match_traces() {
    let w = toy_world();
    let m = w.models().unwrap();
    let prompt = w.encode_prompt("let us go to").unwrap();
    let link = ChannelModel::new(20.0, 1e6).unwrap();
    let (split, stats) = run_simulated(&cfg(5), &m, &prompt, &w.vocab, link).unwrap();
    let up: usize = split.uplink.iter().map(Frame::encoded_len).sum();
    let down: usize = split.downlink.iter().map(Frame::encoded_len).sum();
    assert_eq!(stats.uplink_bytes as usize, up);
    assert_eq!(stats.downlink_bytes as usize, down);
    assert_eq!(stats.uplink_frames as usize, split.edge.traces.len() + 2);
    assert_eq!(stats.downlink_frames as usize, split.edge.traces.len() + 1);
    let traced_up: u64 = split.edge.traces.iter().map(|t| t.uplink_bytes).sum();
    let traced_down: u64 = split.edge.traces.iter().map(|t| t.downlink_bytes).sum();
    let hello = split.uplink[0].encoded_len() as u64;
    let done = split.uplink.last().unwrap().encoded_len() as u64;
    assert_eq!(stats.uplink_bytes, traced_up + hello + done);
    assert_eq!(
        stats.downlink_bytes,
        traced_down + split.downlink[0].encoded_len() as u64
    );
    let expected_ms: f64 = split
        .uplink
        .iter()
        .chain(&split.downlink)
        .map(|f| link.delivery_ms(f.encoded_len()))
        .sum();
    assert!((stats.transfer_ms - expected_ms).abs() < 1e-9);
}

#[test]
fn all_accept_downlink_is_seventeen_bytes_a_round() {
    let w = toy_world();
    let m = w.models().unwrap();
    let prompt = w.encode_prompt("where should we eat tonight ?").unwrap();
    let c = ProtocolConfig {
        lambda: 1e-15,
        ..cfg(2)
    };
    let (split, _) = run_simulated(&c, &m, &prompt, &w.vocab, ChannelModel::ideal()).unwrap();
    for t in &split.edge.traces {
        assert_eq!(t.downlink_bytes, 17);
        assert!(!t.rejected());
    }
}

#[test]
fn replayed_uplink_reproduces_downlink() {
    let w = toy_world();
    let m = w.models().unwrap();
    let prompt = w.encode_prompt("we should eat at").unwrap();
    let (split, _) = run_simulated(&cfg(9), &m, &prompt, &w.vocab, ChannelModel::ideal()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("uplink.bin");
    framelog::write_log(&path, Some("config_hash=abc"), &split.uplink).unwrap();
    let (header, frames) = framelog::read_log(&path).unwrap();
    assert_eq!(header.as_deref(), Some("config_hash=abc"));
    assert_eq!(frames, split.uplink);
    let again = replay_cloud(m.generalist.clone(), m.generic.clone(), &w.vocab, &frames).unwrap();
    assert_eq!(again, split.downlink);
    // A truncated log cannot finish.
    assert!(replay_cloud(
        m.generalist.clone(),
        m.generic.clone(),
        &w.vocab,
        &frames[..frames.len() - 1]
    )
    .is_err());
}

#[test]
fn vocabulary_mismatch_refuses_handshake() {
    let t = table_triple(vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]);
    let other = specsteer::Vocabulary::new(vec!["x".into(), "</s>".into()], "</s>").unwrap();
    assert_ne!(other.fingerprint(), t.vocab.fingerprint());
    let c = ProtocolConfig { top_k: 2, ..cfg(0) };
    let mut edge = EdgeNode::new(t.models.specialist.clone(), &c, &[0], &t.vocab).unwrap();
    let hello = wire::Hello::from_config(&c, t.vocab.fingerprint(), &[0])
        .unwrap()
        .encode();
    let (ack, _) = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::scope(|s| {
            let (g, m) = (t.models.generalist.clone(), t.models.generic.clone());
            let other = &other;
            s.spawn(move || {
                serve(
                    &listener,
                    g,
                    m,
                    other,
                    Some(Duration::from_secs(5)),
                    Some(2),
                    |_| {},
                )
                .unwrap()
            });
            let mut raw = StreamChannel::connect(addr, Some(Duration::from_secs(5))).unwrap();
            raw.send(&hello).unwrap();
            let ack = wire::HelloAck::decode(&raw.recv().unwrap()).unwrap();
            let err = connect_edge(
                addr,
                &mut edge,
                t.vocab.fingerprint(),
                Some(Duration::from_secs(5)),
            )
            .unwrap_err();
            (ack, err)
        })
    };
    assert_eq!(ack.status, wire::HelloStatus::VocabMismatch);
    assert_eq!(ack.vocab_hash, other.fingerprint());
}

#[test]
fn socket_sessions_match_simulated() {
    let w = toy_world();
    let m = w.models().unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let prompts = [
        "where should we eat tonight ?",
        "let us go to",
        "we should eat at",
    ];
    std::thread::scope(|s| {
        let (g, gm, vocab) = (m.generalist.clone(), m.generic.clone(), &w.vocab);
        s.spawn(move || {
            serve(
                &listener,
                g,
                gm,
                vocab,
                Some(Duration::from_secs(10)),
                Some(3),
                |r| {
                    assert!(r.result.is_ok(), "{:?}", r.result);
                },
            )
        });
        for (i, p) in prompts.iter().enumerate() {
            let prompt = w.encode_prompt(p).unwrap();
            let c = cfg(100 + i as u64);
            let mut edge = EdgeNode::new(m.specialist.clone(), &c, &prompt, &w.vocab).unwrap();
            let (report, down, up) = connect_edge(
                addr,
                &mut edge,
                w.vocab.fingerprint(),
                Some(Duration::from_secs(10)),
            )
            .unwrap();
            let (sim, _) = run_simulated(&c, &m, &prompt, &w.vocab, ChannelModel::ideal()).unwrap();
            assert_eq!(report.sequence, sim.edge.sequence);
            assert_eq!(report.verdicts, sim.edge.verdicts);
            assert_eq!(up, sim.uplink);
            assert_eq!(down, sim.downlink);
        }
    });
}

#[test]
fn silent_peer_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let _hold = std::thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        std::thread::sleep(Duration::from_secs(2));
        drop(s);
    });
    let mut ch = StreamChannel::connect(addr, Some(Duration::from_millis(100))).unwrap();
    assert!(matches!(ch.recv(), Err(Error::Timeout)));
}

#[test]
fn garbage_from_peer_is_a_wire_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let h = std::thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        s.write_all(b"HTTP/1.1 200 OK\r\n\r\n").unwrap();
    });
    let stream = TcpStream::connect(addr).unwrap();
    let mut ch = StreamChannel::tcp(stream, Some(Duration::from_secs(2))).unwrap();
    assert!(ch.recv().is_err());
    h.join().unwrap();
}

#[test]
fn uplink_of_real_sessions_is_clean() {
    let base = default_config();
    for user in ["user_alice.txt", "user_bob.txt", "user_carol.txt"] {
        let mut cfg = base.clone();
        let corpora = cfg.corpora.as_mut().unwrap();
        corpora.private = corpora.private.with_file_name(user);
        let w =
            specsteer::experiment::World::load(&cfg, specsteer::experiment::Side::Both).unwrap();
        let m = w.models().unwrap();
        let ctx = load_private(&cfg.corpora.as_ref().unwrap().private, &w.vocab).unwrap();
        let scanner = UplinkScanner::new(&ctx);
        for (i, p) in [
            "where should we eat tonight ?",
            "let us go to",
            "we should eat at",
        ]
        .iter()
        .enumerate()
        {
            let prompt = w.encode_prompt(p).unwrap();
            let (split, _) = run_simulated(
                &cfg_for(i as u64),
                &m,
                &prompt,
                &w.vocab,
                ChannelModel::ideal(),
            )
            .unwrap();
            let report = scanner.scan(&split.uplink);
            assert!(report.is_clean(), "{user}: {:?}", report.violations);
            assert_eq!(report.frames, split.uplink.len());
        }
    }
}

fn cfg_for(seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        max_len: 48,
        ..cfg(seed)
    }
}

#[test]
fn scanner_flags_smuggled_private_data() {
    let w = toy_world();
    let cfg = default_config();
    let ctx = load_private(&cfg.corpora.as_ref().unwrap().private, &w.vocab).unwrap();
    let scanner = UplinkScanner::new(&ctx);
    let doc = ctx.documents().iter().find(|d| d.len() >= 10).unwrap();
    let batch = DraftBatch {
        seq_no: 0,
        token_ids: doc.clone(),
    };
    let smuggled = wire::encode_draft(&batch, None).unwrap();
    assert!(!scanner.scan(&[smuggled]).is_clean());
    let word = ctx.texts()[0]
        .split_whitespace()
        .find(|w| w.len() >= 5)
        .unwrap();
    let text = Frame::new(MsgType::Done, word.as_bytes().to_vec());
    assert!(!scanner.scan(&[text]).is_clean());
    let verdict = wire::encode_verdict(&Verdict {
        seq_no: 0,
        accepted_count: 0,
        recovery: None,
    })
    .unwrap();
    assert!(!scanner.scan(&[verdict]).is_clean());
}

fn arb_verdict() -> impl Strategy<Value = Verdict> {
    (
        any::<u32>(),
        0usize..64,
        prop::option::of(prop::collection::vec((any::<u32>(), any::<u32>()), 1..40)),
    )
        .prop_map(|(seq_no, accepted_count, rec)| Verdict {
            seq_no,
            accepted_count,
            recovery: rec.map(|mut e| {
                e.sort_by_key(|&(t, _)| t);
                e.dedup_by_key(|&mut (t, _)| t);
                let mut entries: Vec<SteeringEntry> = e
                    .into_iter()
                    .map(|(token, bits)| SteeringEntry {
                        token,
                        value: f32::from_bits(bits % 0x7f00_0000),
                    })
                    .collect();
                entries.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.token.cmp(&b.token)));
                SparseSteeringPayload { entries }
            }),
        })
}

proptest! {
    #[test]
    fn draft_frames_roundtrip(seq in any::<u32>(), ids in prop::collection::vec(any::<u32>(), 1..64), delta in prop::option::of(any::<u32>())) {
        let batch = DraftBatch { seq_no: seq, token_ids: ids.clone() };
        let f = wire::encode_draft(&batch, delta).unwrap();
        prop_assert_eq!(f.encoded_len(), wire::draft_frame_len(ids.len(), delta.is_some()));
        let (g, used) = Frame::decode(&f.encode()).unwrap();
        prop_assert_eq!(used, f.encoded_len());
        prop_assert_eq!(wire::decode_draft(&g).unwrap(), (batch, delta));
    }

    #[test]
    fn verdict_frames_roundtrip(v in arb_verdict()) {
        let f = wire::encode_verdict(&v).unwrap();
        prop_assert_eq!(f.encoded_len(), wire::verdict_frame_len(&v));
        let back = wire::decode_verdict(&Frame::decode(&f.encode()).unwrap().0).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn truncated_frames_never_decode(ids in prop::collection::vec(any::<u32>(), 1..16), cut in 1usize..20) {
        let bytes = wire::encode_draft(&DraftBatch { seq_no: 0, token_ids: ids }, None).unwrap().encode();
        let cut = cut.min(bytes.len());
        prop_assert!(Frame::decode(&bytes[..bytes.len() - cut]).is_err());
    }
}
