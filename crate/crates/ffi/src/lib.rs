//! C ABI over the ontodistill engine.
//!
//! Every fallible call returns an [`OdStatus`]; on failure a message is kept
//! per thread and read with [`od_last_error`]. Strings handed out by the
//! library are owned by the caller and released with [`od_string_free`].
//! Structured values cross the boundary as JSON.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ontodistill::dot::{hierarchy_from_dot, parse_dot, to_dot};
use ontodistill::gateway::{Gateway, Transcript};
use ontodistill::ontology::{
    apply_edits, validate, CanonicalDocument, EdgeDirection, ManualEdit, Ontology, ValidationPolicy,
};
use ontodistill::orchestrator::{ControlCommand, OrchestratorError, Session, SessionConfig};
use ontodistill::prompt::TaskKind;
use ontodistill::store::SessionStore;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed DOT, JSON or transcript input.
    Parse = 3,
    /// Unknown task name or invalid configuration.
    InvalidArgument = 4,
    /// An edit or operation the ontology refused.
    Ontology = 5,
    /// The command is not allowed in the task's current state.
    InvalidTransition = 6,
    UnknownIteration = 7,
    /// Gateway, prompt or repeated-failure errors while stepping.
    Execution = 8,
    Io = 9,
    Panic = 10,
}

struct Failure(OdStatus, String);

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        let status = match e {
            OrchestratorError::InvalidTransition { .. } => OdStatus::InvalidTransition,
            OrchestratorError::UnknownIteration { .. } => OdStatus::UnknownIteration,
            OrchestratorError::Ontology(_) => OdStatus::Ontology,
            OrchestratorError::Config(_) => OdStatus::InvalidArgument,
            _ => OdStatus::Execution,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording the failure message and catching panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OdStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            OdStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(OdStatus::NullArgument, "null string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(OdStatus::InvalidUtf8, e.to_string()))
}

unsafe fn optional_text<'a>(p: *const c_char) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p).map(Some)
    }
}

unsafe fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(OdStatus::NullArgument, "null output pointer".into()));
    }
    let c = CString::new(s).map_err(|e| Failure(OdStatus::Execution, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn out_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(OdStatus::NullArgument, "null output pointer".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(OdStatus::NullArgument, "null handle".into()))
}

unsafe fn handle_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(OdStatus::NullArgument, "null handle".into()))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("engine types serialize")
}

fn parse_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, Failure> {
    serde_json::from_str(s).map_err(|e| Failure(OdStatus::Parse, e.to_string()))
}

fn task(name: &str) -> Result<TaskKind, Failure> {
    name.parse().map_err(|e| Failure(OdStatus::InvalidArgument, e))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn od_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn od_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version; static, do not free.
#[no_mangle]
pub extern "C" fn od_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- ontology ----

/// An ontology value owned by the caller.
pub struct OdOntology(Ontology);

/// Parses a DOT hierarchy (`parent -> child` edges).
///
/// # Safety
/// `dot` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_from_dot(dot: *const c_char, out: *mut *mut OdOntology) -> OdStatus {
    guard(|| {
        let (graph, _) = parse_dot(text(dot)?).map_err(|e| Failure(OdStatus::Parse, e.to_string()))?;
        let onto = hierarchy_from_dot(&graph, EdgeDirection::ParentToChild).into_ontology();
        out_handle(out, OdOntology(onto))
    })
}

/// Reads a canonical ontology document (JSON).
///
/// # Safety
/// `doc` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_from_json(doc: *const c_char, out: *mut *mut OdOntology) -> OdStatus {
    guard(|| {
        let onto = CanonicalDocument::from_json(text(doc)?)
            .and_then(CanonicalDocument::into_ontology)
            .map_err(|e| Failure(OdStatus::Parse, e.to_string()))?;
        out_handle(out, OdOntology(onto))
    })
}

/// # Safety
/// `onto` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_free(onto: *mut OdOntology) {
    if !onto.is_null() {
        drop(Box::from_raw(onto));
    }
}

/// # Safety
/// `onto` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_to_dot(onto: *const OdOntology, out: *mut *mut c_char) -> OdStatus {
    guard(|| out_string(out, to_dot(&handle(onto)?.0)))
}

/// Canonical document, including its checksum.
///
/// # Safety
/// `onto` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_to_json(onto: *const OdOntology, out: *mut *mut c_char) -> OdStatus {
    guard(|| out_string(out, CanonicalDocument::from_ontology(&handle(onto)?.0).to_json()))
}

/// Content checksum (hex sha256), independent of the version counter.
///
/// # Safety
/// `onto` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_checksum(onto: *const OdOntology, out: *mut *mut c_char) -> OdStatus {
    guard(|| out_string(out, handle(onto)?.0.checksum()))
}

/// # Safety
/// `onto` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_concept_count(onto: *const OdOntology, out: *mut usize) -> OdStatus {
    guard(|| {
        let n = handle(onto)?.0.len();
        *out.as_mut().ok_or(Failure(OdStatus::NullArgument, "null output pointer".into()))? = n;
        Ok(())
    })
}

/// Validation report as JSON. `strict` non-zero selects the strict policy.
///
/// # Safety
/// `onto` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_validate(onto: *const OdOntology, strict: c_int, out: *mut *mut c_char) -> OdStatus {
    guard(|| {
        let policy = if strict != 0 { ValidationPolicy::Strict } else { ValidationPolicy::Permissive };
        out_string(out, json(&validate(&handle(onto)?.0, policy)))
    })
}

/// Applies a JSON array of manual edits in place. On failure the ontology is
/// unchanged.
///
/// # Safety
/// `onto` must be a live handle; `edits_json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn od_ontology_apply_edits(onto: *mut OdOntology, edits_json: *const c_char) -> OdStatus {
    guard(|| {
        let onto = handle_mut(onto)?;
        let edits: Vec<ManualEdit> = parse_json(text(edits_json)?)?;
        onto.0 = apply_edits(&onto.0, &edits).map_err(|e| Failure(OdStatus::Ontology, e.to_string()))?;
        Ok(())
    })
}

// ---- session ----

/// A distillation session plus the gateway it steps through.
pub struct OdSession {
    session: Session,
    gateway: Gateway,
}

/// Starts a session from `seed` (copied). `config_json` may be null for
/// defaults. The session answers from an empty replay transcript until
/// [`od_session_use_transcript`] or [`od_session_connect`] is called.
///
/// # Safety
/// `domain` must be a NUL-terminated string, `seed` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_session_new(
    domain: *const c_char,
    seed: *const OdOntology,
    config_json: *const c_char,
    out: *mut *mut OdSession,
) -> OdStatus {
    guard(|| {
        let config: SessionConfig = match optional_text(config_json)? {
            Some(s) => parse_json(s)?,
            None => SessionConfig::default(),
        };
        let session = Session::new(text(domain)?, handle(seed)?.0.clone(), config)?;
        out_handle(
            out,
            OdSession {
                session,
                gateway: Gateway::replay(Transcript::new()),
            },
        )
    })
}

/// Opens a saved session directory. Its transcript becomes the replay source.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_session_open(dir: *const c_char, out: *mut *mut OdSession) -> OdStatus {
    guard(|| {
        let (session, transcript) = SessionStore::new(text(dir)?)
            .load()
            .map_err(|e| Failure(OdStatus::Io, e.to_string()))?;
        out_handle(
            out,
            OdSession {
                session,
                gateway: Gateway::replay(transcript),
            },
        )
    })
}

/// # Safety
/// `s` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn od_session_free(s: *mut OdSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Answers future requests from a JSONL transcript.
///
/// # Safety
/// `s` must be a live handle; `jsonl` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn od_session_use_transcript(s: *mut OdSession, jsonl: *const c_char) -> OdStatus {
    guard(|| {
        let s = handle_mut(s)?;
        let transcript = Transcript::from_jsonl(text(jsonl)?).map_err(|e| Failure(OdStatus::Parse, e.to_string()))?;
        s.gateway = Gateway::replay(transcript);
        Ok(())
    })
}

/// Builds the gateway the session configuration describes (live or record
/// over HTTP, or replay of the current transcript).
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn od_session_connect(s: *mut OdSession) -> OdStatus {
    guard(|| {
        let s = handle_mut(s)?;
        let transcript = s.gateway.transcript().clone();
        s.gateway = Gateway::from_config(s.session.config.gateway.clone(), transcript)
            .map_err(|e| Failure(OdStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Executes one iteration of `task`; `out` receives the outcome as JSON.
///
/// # Safety
/// `s` must be a live handle; `task_name` a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_session_step(s: *mut OdSession, task_name: *const c_char, out: *mut *mut c_char) -> OdStatus {
    guard(|| {
        let s = handle_mut(s)?;
        let outcome = s.session.step(task(text(task_name)?)?, &mut s.gateway)?;
        out_string(out, json(&outcome))
    })
}

/// Applies a control command such as `{"command":"revert","to_iteration":9}`;
/// `out` receives the task state as JSON.
///
/// # Safety
/// `s` must be a live handle; string arguments NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_session_control(
    s: *mut OdSession,
    task_name: *const c_char,
    command_json: *const c_char,
    out: *mut *mut c_char,
) -> OdStatus {
    guard(|| {
        let s = handle_mut(s)?;
        let command: ControlCommand = parse_json(text(command_json)?)?;
        let run = s.session.control(task(text(task_name)?)?, command, &mut s.gateway)?;
        out_string(out, json(run))
    })
}

/// Iteration log of `task` as JSON.
///
/// # Safety
/// `s` must be a live handle; `task_name` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_session_task(s: *const OdSession, task_name: *const c_char, out: *mut *mut c_char) -> OdStatus {
    guard(|| out_string(out, json(handle(s)?.session.task(task(text(task_name)?)?))))
}

/// Copies the committed ontology into a new handle.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_session_ontology(s: *const OdSession, out: *mut *mut OdOntology) -> OdStatus {
    guard(|| out_handle(out, OdOntology(handle(s)?.session.ontology.clone())))
}

/// Writes the session and the gateway's transcript to `dir`.
///
/// # Safety
/// `s` must be a live handle; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn od_session_save(s: *const OdSession, dir: *const c_char) -> OdStatus {
    guard(|| {
        let s = handle(s)?;
        SessionStore::new(text(dir)?)
            .save(&s.session, s.gateway.transcript())
            .map_err(|e| Failure(OdStatus::Io, e.to_string()))
    })
}
