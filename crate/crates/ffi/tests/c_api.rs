use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use specsteer_ffi::*;

fn repo_config(name: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = specsteer_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Engine(*mut SpecsteerEngine);

impl Drop for Engine {
    fn drop(&mut self) {
        unsafe { specsteer_engine_free(self.0) };
    }
}

fn open(name: &str) -> Engine {
    let mut e = ptr::null_mut();
    let st = unsafe { specsteer_engine_open(repo_config(name).as_ptr(), &mut e) };
    assert_eq!(st, SpecsteerStatus::Ok, "{}", last_error());
    Engine(e)
}

#[test]
fn fused_target_of_the_worked_example() {
    let (llm, plus, minus) = ([0.5, 0.3, 0.2], [0.2, 0.7, 0.1], [0.4, 0.4, 0.2]);
    let mut out = [0.0; 3];
    let mut z = 0.0;
    let st = unsafe {
        specsteer_fused_target(
            llm.as_ptr(),
            plus.as_ptr(),
            minus.as_ptr(),
            3,
            out.as_mut_ptr(),
            &mut z,
        )
    };
    assert_eq!(st, SpecsteerStatus::Ok);
    assert!((z - 0.875).abs() < 1e-12);
    let want = [0.25 / 0.875, 0.525 / 0.875, 0.1 / 0.875];
    for (a, b) in out.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }

    let mut alpha = [0.0; 3];
    let st =
        unsafe { specsteer_acceptance(llm.as_ptr(), minus.as_ptr(), 3, 0.5, alpha.as_mut_ptr()) };
    assert_eq!(st, SpecsteerStatus::Ok);
    assert_eq!(alpha, [1.0, 1.0, 1.0]);
}

#[test]
fn one_step_law_sums_to_one() {
    let h = [
        [0.1, -1.0, 2.0, 0.5],
        [1.0, 0.0, -0.5, 0.2],
        [0.0, 0.3, 0.3, -1.0],
    ];
    let mut probs = [0.0; 4];
    let mut rej = -1.0;
    let st = unsafe {
        specsteer_one_step_law(
            h[0].as_ptr(),
            h[1].as_ptr(),
            h[2].as_ptr(),
            4,
            0.7,
            1.0,
            probs.as_mut_ptr(),
            &mut rej,
        )
    };
    assert_eq!(st, SpecsteerStatus::Ok);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((0.0..=1.0).contains(&rej));

    let mut soft = [0.0; 4];
    assert_eq!(
        unsafe { specsteer_softmax(h[0].as_ptr(), 4, soft.as_mut_ptr()) },
        SpecsteerStatus::Ok
    );
    assert!(soft[2] > soft[3] && soft[3] > soft[0] && soft[0] > soft[1]);
}

#[test]
fn bad_inputs_report_errors() {
    let mut out = [0.0; 2];
    let st = unsafe { specsteer_softmax(ptr::null(), 2, out.as_mut_ptr()) };
    assert_eq!(st, SpecsteerStatus::NullPointer);
    assert!(last_error().contains("logits"));

    let bad = [0.5, 0.6];
    let st = unsafe {
        specsteer_fused_target(
            bad.as_ptr(),
            bad.as_ptr(),
            bad.as_ptr(),
            2,
            out.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_ne!(st, SpecsteerStatus::Ok);

    let mut e = ptr::null_mut();
    let missing = CString::new("/no/such/config.toml").unwrap();
    let st = unsafe { specsteer_engine_open(missing.as_ptr(), &mut e) };
    assert_eq!(st, SpecsteerStatus::InvalidConfig);
    assert!(e.is_null());
    assert!(last_error().contains("/no/such/config.toml"));
}

#[test]
fn draft_frames_roundtrip() {
    let ids = [5u32, 9, 2];
    let delta = 7u32;
    let mut buf = [0u8; 64];
    let mut len = 0;
    let st = unsafe {
        specsteer_encode_draft(
            3,
            ids.as_ptr(),
            3,
            &delta,
            buf.as_mut_ptr(),
            buf.len(),
            &mut len,
        )
    };
    assert_eq!(st, SpecsteerStatus::Ok);
    assert_eq!(len, specsteer_draft_frame_len(3, true));
    assert_eq!(len, 16 + 4 * 3 + 4);

    let (mut seq, mut n, mut has, mut d) = (0u32, 0usize, 0u8, 0u32);
    let mut back = [0u32; 8];
    let st = unsafe {
        specsteer_decode_draft(
            buf.as_ptr(),
            len,
            &mut seq,
            back.as_mut_ptr(),
            back.len(),
            &mut n,
            &mut has,
            &mut d,
        )
    };
    assert_eq!(st, SpecsteerStatus::Ok);
    assert_eq!((seq, n, has, d), (3, 3, 1, 7));
    assert_eq!(&back[..3], &ids);

    let mut small = [0u8; 8];
    let st = unsafe {
        specsteer_encode_draft(
            3,
            ids.as_ptr(),
            3,
            ptr::null(),
            small.as_mut_ptr(),
            small.len(),
            &mut len,
        )
    };
    assert_eq!(st, SpecsteerStatus::BufferTooSmall);
    assert_eq!(len, 28);

    buf[0] = b'X';
    let st = unsafe {
        specsteer_decode_draft(
            buf.as_ptr(),
            32,
            &mut seq,
            back.as_mut_ptr(),
            8,
            &mut n,
            &mut has,
            &mut d,
        )
    };
    assert_eq!(st, SpecsteerStatus::Wire);
}

#[test]
fn engine_generates_reproducibly() {
    let e = open("default.toml");
    let mut v = 0;
    assert_eq!(
        unsafe { specsteer_engine_vocab_size(e.0, &mut v) },
        SpecsteerStatus::Ok
    );
    assert!(v > 100);

    let prompt = CString::new("where should we eat tonight ?").unwrap();
    let gen = |seed| {
        let mut ids = vec![0u32; 64];
        let mut n = 0;
        let st = unsafe {
            specsteer_engine_generate(
                e.0,
                prompt.as_ptr(),
                seed,
                ids.as_mut_ptr(),
                ids.len(),
                &mut n,
            )
        };
        assert_eq!(st, SpecsteerStatus::Ok, "{}", last_error());
        ids.truncate(n);
        ids
    };
    let a = gen(11);
    assert!(!a.is_empty());
    assert_eq!(a, gen(11));

    let mut text = vec![0 as std::ffi::c_char; 1024];
    let mut len = 0;
    let st = unsafe {
        specsteer_engine_decode(
            e.0,
            a.as_ptr(),
            a.len(),
            text.as_mut_ptr(),
            text.len(),
            &mut len,
        )
    };
    assert_eq!(st, SpecsteerStatus::Ok);
    let s = unsafe { CStr::from_ptr(text.as_ptr()) }.to_str().unwrap();
    assert_eq!(s.len() + 1, len);
    assert_eq!(s.split(' ').count(), a.len());

    let mut tiny = [0u32; 1];
    let mut n = 0;
    let st = unsafe {
        specsteer_engine_generate(e.0, prompt.as_ptr(), 11, tiny.as_mut_ptr(), 1, &mut n)
    };
    if a.len() > 1 {
        assert_eq!(st, SpecsteerStatus::BufferTooSmall);
        assert_eq!(n, a.len());
    }

    let oov = CString::new("zzzz qqqq").unwrap();
    let st =
        unsafe { specsteer_engine_generate(e.0, oov.as_ptr(), 1, tiny.as_mut_ptr(), 1, &mut n) };
    assert_ne!(st, SpecsteerStatus::Ok);
    assert!(last_error().contains("zzzz"));
}

#[test]
fn engine_params_are_validated() {
    let e = open("worked_example.toml");
    assert_eq!(
        unsafe { specsteer_engine_set_params(e.0, 0.1, 2.0) },
        SpecsteerStatus::Ok
    );
    assert_eq!(
        unsafe { specsteer_engine_set_params(e.0, -1.0, 1.0) },
        SpecsteerStatus::InvalidConfig
    );
    assert_eq!(
        unsafe { specsteer_engine_set_params(ptr::null_mut(), 1.0, 1.0) },
        SpecsteerStatus::NullPointer
    );
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/specsteer.h"))
            .unwrap();
    for name in [
        "specsteer_last_error",
        "specsteer_engine_open",
        "specsteer_engine_free",
        "specsteer_engine_generate",
        "specsteer_engine_decode",
        "specsteer_fused_target",
        "specsteer_acceptance",
        "specsteer_one_step_law",
        "specsteer_softmax",
        "specsteer_encode_draft",
        "specsteer_decode_draft",
        "specsteer_draft_frame_len",
        "SPECSTEER_STATUS_BUFFER_TOO_SMALL",
        "typedef struct SpecsteerEngine SpecsteerEngine;",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
