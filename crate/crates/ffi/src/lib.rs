//! C ABI over `islands-core`.
//!
//! Sessions are opaque handles. Every function returns an [`IslandsStatus`];
//! on failure [`islands_last_error_message`] describes the problem. Strings
//! handed out through `out` parameters are owned by the caller and must be
//! released with [`islands_string_free`]. Times are session seconds chosen
//! by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use islands_core::engine::{EngineError, Session, SessionConfig};
use islands_core::geometry::Vec2;
use islands_core::metrics::SessionAnalysis;
use islands_core::model::{IslandId, SessionEvent};
use islands_core::organizer::{
    InferenceProvider, InferenceRaw, InferenceRequest, MockProvider, ProviderError, TopicConfig,
};
use islands_core::session_log::SessionFile;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IslandsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// A navigation guard refused the action (wrong mode, unknown island,
    /// orb out of range).
    GuardRejected = 4,
    /// The utterance was logged but could not be categorized.
    InferenceFailed = 5,
    Storage = 6,
    SessionClosed = 7,
    Internal = 8,
}

/// Reply buffer size handed to inference callbacks.
pub const ISLANDS_REPLY_CAPACITY: usize = 1024;

/// Inference callback. Write a NUL-terminated `CATEGORY;SUMMARY` line into
/// `out` (capacity `out_len`) and return 0; return 1 for a timeout and any
/// other value for a failure.
pub type IslandsInferFn = Option<
    unsafe extern "C" fn(
        user_data: *mut c_void,
        prompt: *const c_char,
        transcript: *const c_char,
        out: *mut c_char,
        out_len: usize,
    ) -> i32,
>;

/// Opaque session handle.
pub struct IslandsSession {
    session: Session,
    provider: Arc<dyn InferenceProvider>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).unwrap_or_default());
}

/// Message for the last failed call on this thread. Valid until the next
/// call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn islands_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

struct Failure(IslandsStatus, String);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::EmptyTranscript => IslandsStatus::InvalidArgument,
            EngineError::Navigation(_) => IslandsStatus::GuardRejected,
            EngineError::Log(_) => IslandsStatus::Storage,
            EngineError::SessionClosed => IslandsStatus::SessionClosed,
            EngineError::Fold(_) | EngineError::UnknownTicket(_) => IslandsStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> IslandsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => IslandsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IslandsStatus::Internal
        }
    }
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(
            IslandsStatus::NullArgument,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(IslandsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a>(ptr: *mut IslandsSession) -> Result<&'a mut IslandsSession, Failure> {
    ptr.as_mut()
        .ok_or_else(|| Failure(IslandsStatus::NullArgument, "session is null".into()))
}

/// Stores `value` in `*out` if `out` is non-null.
unsafe fn give(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Ok(());
    }
    let s =
        CString::new(value).map_err(|_| Failure(IslandsStatus::Internal, "interior NUL".into()))?;
    *out = s.into_raw();
    Ok(())
}

fn events_json(events: &[SessionEvent]) -> String {
    serde_json::to_string(events).expect("events serialize")
}

struct CallbackProvider {
    callback:
        unsafe extern "C" fn(*mut c_void, *const c_char, *const c_char, *mut c_char, usize) -> i32,
    user_data: *mut c_void,
}

// The caller promises the callback and its user data may be used from the
// thread that drives the session.
unsafe impl Send for CallbackProvider {}
unsafe impl Sync for CallbackProvider {}

impl InferenceProvider for CallbackProvider {
    fn infer(&self, request: &InferenceRequest) -> Result<InferenceRaw, ProviderError> {
        let prompt = CString::new(request.prompt.replace('\0', " ")).unwrap_or_default();
        let transcript = CString::new(request.transcript.replace('\0', " ")).unwrap_or_default();
        let mut buf = vec![0 as c_char; ISLANDS_REPLY_CAPACITY];
        let code = unsafe {
            (self.callback)(
                self.user_data,
                prompt.as_ptr(),
                transcript.as_ptr(),
                buf.as_mut_ptr(),
                buf.len(),
            )
        };
        *buf.last_mut().unwrap() = 0;
        match code {
            0 => {
                let reply = unsafe { CStr::from_ptr(buf.as_ptr()) };
                Ok(InferenceRaw(reply.to_string_lossy().into_owned()))
            }
            1 => Err(ProviderError::Timeout),
            other => Err(ProviderError::Failed(format!("callback returned {other}"))),
        }
    }
}

/// Creates a session. `topic` is a preset name or a topic file path;
/// `log_path` may be null for an in-memory session. Categorization uses the
/// topic's keyword table until a callback is installed.
///
/// # Safety
/// String arguments must be null or valid NUL-terminated strings; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn islands_session_new(
    topic: *const c_char,
    log_path: *const c_char,
    out: *mut *mut IslandsSession,
) -> IslandsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(IslandsStatus::NullArgument, "out is null".into()));
        }
        let topic = TopicConfig::resolve(text(topic, "topic")?)
            .map_err(|e| Failure(IslandsStatus::InvalidArgument, e.to_string()))?;
        let table = topic.keyword_table().ok_or_else(|| {
            Failure(
                IslandsStatus::InvalidArgument,
                format!("topic {:?} has no keyword table", topic.id),
            )
        })?;
        let mut config = SessionConfig::new(topic);
        if !log_path.is_null() {
            config.log_path = Some(text(log_path, "log_path")?.into());
        }
        let session = Session::new(config)?;
        *out = Box::into_raw(Box::new(IslandsSession {
            session,
            provider: Arc::new(MockProvider::new(table)),
        }));
        Ok(())
    })
}

/// Routes categorization through `callback`. Passing a null callback
/// restores the keyword table.
///
/// # Safety
/// `session` must come from [`islands_session_new`]; `user_data` must stay
/// valid for as long as the callback is installed.
#[no_mangle]
pub unsafe extern "C" fn islands_session_set_inference(
    session: *mut IslandsSession,
    callback: IslandsInferFn,
    user_data: *mut c_void,
) -> IslandsStatus {
    guard(|| {
        let s = handle(session)?;
        s.provider = match callback {
            Some(callback) => Arc::new(CallbackProvider {
                callback,
                user_data,
            }),
            None => {
                let table = s.session.topic().keyword_table().ok_or_else(|| {
                    Failure(
                        IslandsStatus::InvalidArgument,
                        "topic has no keyword table".into(),
                    )
                })?;
                Arc::new(MockProvider::new(table))
            }
        };
        Ok(())
    })
}

/// # Safety
/// `session` must be null or come from [`islands_session_new`], and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn islands_session_free(session: *mut IslandsSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Submits an utterance and categorizes it synchronously. The produced
/// events go to `out_events` (JSON array; may be null). Returns
/// `InferenceFailed` when the utterance was logged but not placed.
///
/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_submit(
    session: *mut IslandsSession,
    transcript: *const c_char,
    t: f64,
    out_events: *mut *mut c_char,
) -> IslandsStatus {
    guard(|| {
        let s = handle(session)?;
        let transcript = text(transcript, "transcript")?;
        let provider = s.provider.clone();
        let (result, events) = s
            .session
            .submit_blocking(provider.as_ref(), transcript, t)?;
        give(out_events, events_json(&events))?;
        result
            .map(|_| ())
            .map_err(|e| Failure(IslandsStatus::InferenceFailed, e.to_string()))
    })
}

unsafe fn navigate(
    session: *mut IslandsSession,
    out_events: *mut *mut c_char,
    step: impl FnOnce(&mut Session) -> Result<Vec<SessionEvent>, EngineError>,
) -> IslandsStatus {
    guard(|| {
        let s = handle(session)?;
        let events = step(&mut s.session)?;
        give(out_events, events_json(&events))
    })
}

/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_dive_in(
    session: *mut IslandsSession,
    island_id: u32,
    t: f64,
    out_events: *mut *mut c_char,
) -> IslandsStatus {
    navigate(session, out_events, |s| {
        s.dive_in(IslandId(island_id), t).map(|e| vec![e])
    })
}

/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_dive_out(
    session: *mut IslandsSession,
    t: f64,
    out_events: *mut *mut c_char,
) -> IslandsStatus {
    navigate(session, out_events, |s| s.dive_out(t).map(|e| vec![e]))
}

/// Activates the orb leading to island `orb_id`.
///
/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_trigger(
    session: *mut IslandsSession,
    orb_id: u32,
    t: f64,
    out_events: *mut *mut c_char,
) -> IslandsStatus {
    navigate(session, out_events, |s| {
        s.trigger(IslandId(orb_id), t).map(|e| vec![e])
    })
}

/// Tracked room-space pose. `out_events` receives an empty array when the
/// update was throttled.
///
/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_pose(
    session: *mut IslandsSession,
    x: f64,
    y: f64,
    heading: f64,
    t: f64,
    out_events: *mut *mut c_char,
) -> IslandsStatus {
    navigate(session, out_events, |s| {
        s.pose(Vec2::new(x, y), heading, t)
            .map(|e| e.into_iter().collect())
    })
}

/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_end(
    session: *mut IslandsSession,
    t: f64,
    out_events: *mut *mut c_char,
) -> IslandsStatus {
    navigate(session, out_events, |s| s.end(t).map(|e| vec![e]))
}

/// Current scene state as JSON.
///
/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_snapshot_json(
    session: *mut IslandsSession,
    out: *mut *mut c_char,
) -> IslandsStatus {
    guard(|| {
        let s = handle(session)?;
        give(
            out,
            serde_json::to_string(s.session.snapshot()).expect("state serializes"),
        )
    })
}

/// Events with seq greater than `since_seq`, as a JSON array.
///
/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_events_json(
    session: *mut IslandsSession,
    since_seq: u64,
    out: *mut *mut c_char,
) -> IslandsStatus {
    guard(|| {
        let s = handle(session)?;
        give(out, events_json(s.session.events_since(since_seq)))
    })
}

/// Metrics for the session so far, as `name=value` lines.
///
/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_metrics_text(
    session: *mut IslandsSession,
    out: *mut *mut c_char,
) -> IslandsStatus {
    guard(|| {
        let s = handle(session)?;
        give(out, s.session.metrics().to_text())
    })
}

/// Metrics for a session file, as `name=value` lines.
///
/// # Safety
/// Pointers must be valid as described in the module docs.
#[no_mangle]
pub unsafe extern "C" fn islands_report_from_log(
    path: *const c_char,
    out: *mut *mut c_char,
) -> IslandsStatus {
    guard(|| {
        let path = text(path, "path")?;
        let file =
            SessionFile::load(path).map_err(|e| Failure(IslandsStatus::Storage, e.to_string()))?;
        give(
            out,
            SessionAnalysis::from_events(&file.events, None)
                .report()
                .to_text(),
        )
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn islands_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
