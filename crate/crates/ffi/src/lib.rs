//! C interface to the specsteer library.
//!
//! Every fallible function returns a [`SpecsteerStatus`]. On failure the
//! thread's last error message is available from [`specsteer_last_error`].
//! Output buffers are caller-owned; when one is too small the call fails with
//! `SPECSTEER_STATUS_BUFFER_TOO_SMALL` and still reports the required length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use specsteer::config::ProtocolConfig;
use specsteer::dist::{softmax, Distribution, LogitVector};
use specsteer::experiment::{ExperimentConfig, Side, World};
use specsteer::fusion::{acceptance_vector, fused_target, one_step_law_from_logits};
use specsteer::protocol::{run_session, SessionModels};
use specsteer::transport::wire::{self, Frame};
use specsteer::{DraftBatch, Error, TokenId, Vocabulary};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecsteerStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Protocol = 4,
    Wire = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A loaded experiment: vocabulary, the three models and protocol settings.
pub struct SpecsteerEngine {
    vocab: Vocabulary,
    models: SessionModels,
    protocol: ProtocolConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> SpecsteerStatus {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidModel(_)
        | Error::EmptyCorpus
        | Error::InvalidVocabulary(_) => SpecsteerStatus::InvalidConfig,
        Error::Protocol(_) | Error::Terminated | Error::HandshakeRefused(_) | Error::Timeout => {
            SpecsteerStatus::Protocol
        }
        Error::Wire(_) => SpecsteerStatus::Wire,
        Error::Io(_) => SpecsteerStatus::Io,
        _ => SpecsteerStatus::InvalidArgument,
    }
}

type Fallible = Result<(), (SpecsteerStatus, String)>;

fn fail(status: SpecsteerStatus, msg: impl Into<String>) -> Fallible {
    Err((status, msg.into()))
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, (SpecsteerStatus, String)>;
}

impl<T> OrStatus<T> for specsteer::Result<T> {
    fn or_status(self) -> Result<T, (SpecsteerStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Fallible) -> SpecsteerStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpecsteerStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpecsteerStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(
    p: *const T,
    n: usize,
    what: &str,
) -> Result<&'a [T], (SpecsteerStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err((SpecsteerStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn output<'a, T>(
    p: *mut T,
    n: usize,
    what: &str,
) -> Result<&'a mut [T], (SpecsteerStatus, String)> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err((SpecsteerStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (SpecsteerStatus, String)> {
    p.as_mut()
        .ok_or_else(|| (SpecsteerStatus::NullPointer, format!("{what} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SpecsteerStatus, String)> {
    if p.is_null() {
        return Err((SpecsteerStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        (
            SpecsteerStatus::InvalidArgument,
            format!("{what} is not UTF-8"),
        )
    })
}

/// Copies `src` into `dst` if it fits; always reports the length.
fn copy_out<T: Copy>(src: &[T], dst: &mut [T], len: &mut usize) -> Fallible {
    *len = src.len();
    if src.len() > dst.len() {
        return fail(
            SpecsteerStatus::BufferTooSmall,
            format!("need {} elements, buffer holds {}", src.len(), dst.len()),
        );
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

fn distribution(p: &[f64], what: &str) -> Result<Distribution, (SpecsteerStatus, String)> {
    Distribution::from_probs(p.to_vec()).map_err(|e| (status_of(&e), format!("{what}: {e}")))
}

fn logits(h: &[f64], what: &str) -> Result<LogitVector, (SpecsteerStatus, String)> {
    LogitVector::new(h.to_vec()).map_err(|e| (status_of(&e), format!("{what}: {e}")))
}

/// The last error message on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn specsteer_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a TOML experiment config (corpora or tables) and builds all models.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn specsteer_engine_open(
    config_path: *const c_char,
    out: *mut *mut SpecsteerEngine,
) -> SpecsteerStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let path = c_str(config_path, "config_path")?;
        let cfg = ExperimentConfig::load(Path::new(path)).or_status()?;
        let world = World::load(&cfg, Side::Both).or_status()?;
        cfg.protocol.validate(world.vocab.size()).or_status()?;
        let models = world.models().or_status()?;
        *out = Box::into_raw(Box::new(SpecsteerEngine {
            vocab: world.vocab,
            models,
            protocol: cfg.protocol,
        }));
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from [`specsteer_engine_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn specsteer_engine_free(engine: *mut SpecsteerEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// # Safety
/// `engine` must be a live engine; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn specsteer_engine_vocab_size(
    engine: *const SpecsteerEngine,
    out: *mut usize,
) -> SpecsteerStatus {
    guard(|| {
        let e = engine
            .as_ref()
            .ok_or((SpecsteerStatus::NullPointer, "engine is null".to_string()))?;
        *out_ref(out, "out")? = e.vocab.size();
        Ok(())
    })
}

/// Overrides the threshold λ and steering strength β for later sessions.
///
/// # Safety
/// `engine` must be a live engine.
#[no_mangle]
pub unsafe extern "C" fn specsteer_engine_set_params(
    engine: *mut SpecsteerEngine,
    lambda: f64,
    beta: f64,
) -> SpecsteerStatus {
    guard(|| {
        let e = engine
            .as_mut()
            .ok_or((SpecsteerStatus::NullPointer, "engine is null".to_string()))?;
        let mut p = e.protocol.clone();
        p.lambda = lambda;
        p.beta = beta;
        p.validate(e.vocab.size()).or_status()?;
        e.protocol = p;
        Ok(())
    })
}

/// Runs one in-process session on `prompt` (in-vocabulary words separated by
/// spaces) and writes the generated token ids.
///
/// # Safety
/// `engine` must be a live engine, `prompt` NUL-terminated, `out_ids` valid
/// for `cap` writes and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn specsteer_engine_generate(
    engine: *const SpecsteerEngine,
    prompt: *const c_char,
    seed: u64,
    out_ids: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> SpecsteerStatus {
    guard(|| {
        let e = engine
            .as_ref()
            .ok_or((SpecsteerStatus::NullPointer, "engine is null".to_string()))?;
        let len = out_ref(out_len, "out_len")?;
        *len = 0;
        let prompt = e.vocab.encode(c_str(prompt, "prompt")?).or_status()?;
        let config = ProtocolConfig {
            seed,
            ..e.protocol.clone()
        };
        let out = run_session(&config, &e.models, &prompt, &e.vocab).or_status()?;
        copy_out(out.generated(), output(out_ids, cap, "out_ids")?, len)
    })
}

/// Writes the space-joined text of `ids` plus a terminating NUL. `out_len`
/// receives the byte count including the NUL.
///
/// # Safety
/// `ids` must hold `n` values, `buf` be valid for `cap` bytes and `out_len`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn specsteer_engine_decode(
    engine: *const SpecsteerEngine,
    ids: *const u32,
    n: usize,
    buf: *mut c_char,
    cap: usize,
    out_len: *mut usize,
) -> SpecsteerStatus {
    guard(|| {
        let e = engine
            .as_ref()
            .ok_or((SpecsteerStatus::NullPointer, "engine is null".to_string()))?;
        let len = out_ref(out_len, "out_len")?;
        let ids = input(ids, n, "ids")?;
        for &id in ids {
            e.vocab.check(id).or_status()?;
        }
        let mut text = e.vocab.decode(ids).into_bytes();
        text.push(0);
        let dst = output(buf.cast::<u8>(), cap, "buf")?;
        copy_out(&text, dst, len)
    })
}

/// Fused target P* ∝ P_LLM·P⁺/P⁻ over `n` tokens, and its normalizer Z.
///
/// # Safety
/// The three inputs and `out_target` must hold `n` values; `out_partition`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn specsteer_fused_target(
    p_llm: *const f64,
    p_plus: *const f64,
    p_minus: *const f64,
    n: usize,
    out_target: *mut f64,
    out_partition: *mut f64,
) -> SpecsteerStatus {
    guard(|| {
        let f = fused_target(
            &distribution(input(p_llm, n, "p_llm")?, "p_llm")?,
            &distribution(input(p_plus, n, "p_plus")?, "p_plus")?,
            &distribution(input(p_minus, n, "p_minus")?, "p_minus")?,
        )
        .or_status()?;
        output(out_target, n, "out_target")?.copy_from_slice(f.target.probs());
        if let Some(z) = out_partition.as_mut() {
            *z = f.partition;
        }
        Ok(())
    })
}

/// Per-token acceptance probability min(1, P_LLM/(λ·P⁻)).
///
/// # Safety
/// Inputs and `out_alpha` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn specsteer_acceptance(
    p_llm: *const f64,
    p_minus: *const f64,
    n: usize,
    lambda: f64,
    out_alpha: *mut f64,
) -> SpecsteerStatus {
    guard(|| {
        let a = acceptance_vector(
            &distribution(input(p_llm, n, "p_llm")?, "p_llm")?,
            &distribution(input(p_minus, n, "p_minus")?, "p_minus")?,
            lambda,
        )
        .or_status()?;
        output(out_alpha, n, "out_alpha")?.copy_from_slice(&a);
        Ok(())
    })
}

/// Exact law of one protocol step from three logit vectors.
///
/// # Safety
/// Inputs and `out_probs` must hold `n` values; `out_rejection` may be null.
#[no_mangle]
pub unsafe extern "C" fn specsteer_one_step_law(
    h_llm: *const f64,
    h_plus: *const f64,
    h_minus: *const f64,
    n: usize,
    lambda: f64,
    beta: f64,
    out_probs: *mut f64,
    out_rejection: *mut f64,
) -> SpecsteerStatus {
    guard(|| {
        let law = one_step_law_from_logits(
            &logits(input(h_llm, n, "h_llm")?, "h_llm")?,
            &logits(input(h_plus, n, "h_plus")?, "h_plus")?,
            &logits(input(h_minus, n, "h_minus")?, "h_minus")?,
            lambda,
            beta,
        )
        .or_status()?;
        output(out_probs, n, "out_probs")?.copy_from_slice(law.output.probs());
        if let Some(r) = out_rejection.as_mut() {
            *r = law.rejection_mass;
        }
        Ok(())
    })
}

/// Softmax of `n` logits.
///
/// # Safety
/// `logits_in` and `out_probs` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn specsteer_softmax(
    logits_in: *const f64,
    n: usize,
    out_probs: *mut f64,
) -> SpecsteerStatus {
    guard(|| {
        let p = softmax(&logits(input(logits_in, n, "logits")?, "logits")?);
        output(out_probs, n, "out_probs")?.copy_from_slice(p.probs());
        Ok(())
    })
}

/// Encodes a DRAFT frame. `delta` may be null when no recovery token is
/// carried.
///
/// # Safety
/// `ids` must hold `n` values, `buf` be valid for `cap` bytes and `out_len`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn specsteer_encode_draft(
    seq_no: u32,
    ids: *const u32,
    n: usize,
    delta: *const u32,
    buf: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> SpecsteerStatus {
    guard(|| {
        let len = out_ref(out_len, "out_len")?;
        let batch = DraftBatch {
            seq_no,
            token_ids: input(ids, n, "ids")?.to_vec(),
        };
        let frame = wire::encode_draft(&batch, delta.as_ref().copied()).or_status()?;
        copy_out(&frame.encode(), output(buf, cap, "buf")?, len)
    })
}

/// Decodes one DRAFT frame. `out_has_delta` is set to 1 and `out_delta`
/// written when the frame carries a recovery token.
///
/// # Safety
/// `bytes` must hold `len` bytes, `out_ids` be valid for `cap` writes and
/// every other output writable.
#[no_mangle]
pub unsafe extern "C" fn specsteer_decode_draft(
    bytes: *const u8,
    len: usize,
    out_seq_no: *mut u32,
    out_ids: *mut u32,
    cap: usize,
    out_n: *mut usize,
    out_has_delta: *mut u8,
    out_delta: *mut u32,
) -> SpecsteerStatus {
    guard(|| {
        let n = out_ref(out_n, "out_n")?;
        *n = 0;
        let data = input(bytes, len, "bytes")?;
        let (frame, used) = Frame::decode(data).or_status()?;
        if used != data.len() {
            return fail(
                SpecsteerStatus::Wire,
                format!("{} trailing bytes", data.len() - used),
            );
        }
        let (batch, delta) = wire::decode_draft(&frame).or_status()?;
        let has_delta = out_ref(out_has_delta, "out_has_delta")?;
        *has_delta = u8::from(delta.is_some());
        if let Some(d) = delta {
            *out_ref(out_delta, "out_delta")? = d;
        }
        *out_ref(out_seq_no, "out_seq_no")? = batch.seq_no;
        let ids: &[TokenId] = &batch.token_ids;
        copy_out(ids, output(out_ids, cap, "out_ids")?, n)
    })
}

/// Size in bytes of a DRAFT frame with `n` tokens.
#[no_mangle]
pub extern "C" fn specsteer_draft_frame_len(n: usize, has_delta: bool) -> usize {
    wire::draft_frame_len(n, has_delta)
}
