//! C ABI over the lstoc library.
//!
//! Every fallible call returns an [`LstocStatus`]; on failure the message is
//! available from [`lstoc_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function. Strings
//! returned through out-pointers are owned by the caller and released with
//! [`lstoc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use lstoc::driver::{run_comparison, RunConfig};
use lstoc::gridworld::{Action, Env, World};
use lstoc::labeler::LabelingProblem;
use lstoc::tl::{Formula, Fsm, Symbol};
use lstoc::trajectory::StateKey;
use lstoc::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LstocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Syntax = 3,
    InvalidArgument = 4,
    EpisodeDone = 5,
    Io = 6,
    Budget = 7,
    Internal = 8,
    Panic = 9,
}

/// Compiled task machine.
pub struct LstocFsm(Fsm);

/// Environment with its current episode.
pub struct LstocEnv {
    world: Arc<World>,
    episode: Option<Env>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LstocStatus {
    match e {
        Error::Syntax { .. } | Error::UnknownSymbol { .. } => LstocStatus::Syntax,
        Error::EpisodeDone => LstocStatus::EpisodeDone,
        Error::Io(_) => LstocStatus::Io,
        Error::BudgetExhausted(_) | Error::ExploreCap { .. } | Error::EnumerationCap(_) => LstocStatus::Budget,
        Error::Spec { .. } | Error::Config(_) | Error::Json(_) | Error::NoFreeStart => LstocStatus::InvalidArgument,
        _ => LstocStatus::Internal,
    }
}

struct Fail(LstocStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LstocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LstocStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside lstoc".into());
            LstocStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(LstocStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(LstocStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(LstocStatus::NullPointer, format!("{what} is null")))
}

fn owned(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(LstocStatus::Internal, "string holds a nul byte".into()))
}

fn json<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, Fail> {
    serde_json::from_str(s).map_err(|e| Fail(LstocStatus::InvalidArgument, format!("{what}: {e}")))
}

fn symbols(s: &str) -> Result<Vec<Option<Symbol>>, Fail> {
    s.chars()
        .map(|c| match c {
            '.' => Ok(None),
            _ => Symbol::new(c)
                .map(Some)
                .ok_or_else(|| Fail(LstocStatus::InvalidArgument, format!("`{c}` is not a symbol"))),
        })
        .collect()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on this thread.
#[no_mangle]
pub extern "C" fn lstoc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lstoc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `formula` over lowercase letters and compiles it.
///
/// # Safety
/// `formula` must be a nul-terminated string; `out_fsm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_fsm_compile(formula: *const c_char, out_fsm: *mut *mut LstocFsm) -> LstocStatus {
    guard(|| {
        let slot = out(out_fsm, "out_fsm")?;
        let f = Formula::parse_open(text(formula, "formula")?)?;
        *slot = Box::into_raw(Box::new(LstocFsm(Fsm::compile(&f))));
        Ok(())
    })
}

/// # Safety
/// `fsm` must come from [`lstoc_fsm_compile`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lstoc_fsm_free(fsm: *mut LstocFsm) {
    if !fsm.is_null() {
        drop(Box::from_raw(fsm));
    }
}

/// Does the machine accept the word, one symbol per character?
///
/// # Safety
/// `fsm` must be live; `word` nul-terminated; `out_accepted` writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_fsm_accepts(fsm: *const LstocFsm, word: *const c_char, out_accepted: *mut bool) -> LstocStatus {
    guard(|| {
        let fsm = &fsm.as_ref().ok_or_else(|| Fail(LstocStatus::NullPointer, "fsm is null".into()))?.0;
        let slot = out(out_accepted, "out_accepted")?;
        let word: Option<Vec<Symbol>> = symbols(text(word, "word")?)?.into_iter().collect();
        let word = word.ok_or_else(|| Fail(LstocStatus::InvalidArgument, "a word cannot contain `.`".into()))?;
        *slot = fsm.accepts(&word);
        Ok(())
    })
}

/// Is the label trace accepted, one state per character and `.` for an
/// unlabeled state?
///
/// # Safety
/// `fsm` must be live; `trace` nul-terminated; `out_satisfied` writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_fsm_satisfies(fsm: *const LstocFsm, trace: *const c_char, out_satisfied: *mut bool) -> LstocStatus {
    guard(|| {
        let fsm = &fsm.as_ref().ok_or_else(|| Fail(LstocStatus::NullPointer, "fsm is null".into()))?.0;
        let slot = out(out_satisfied, "out_satisfied")?;
        *slot = fsm.accepts_trace(&symbols(text(trace, "trace")?)?);
        Ok(())
    })
}

/// The machine in DOT; free with [`lstoc_string_free`].
///
/// # Safety
/// `fsm` must be live; `out_dot` writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_fsm_dot(fsm: *const LstocFsm, out_dot: *mut *mut c_char) -> LstocStatus {
    guard(|| {
        let fsm = &fsm.as_ref().ok_or_else(|| Fail(LstocStatus::NullPointer, "fsm is null".into()))?.0;
        let slot = out(out_dot, "out_dot")?;
        *slot = owned(fsm.to_dot())?;
        Ok(())
    })
}

/// Loads a bundled environment by name or a spec file by path.
///
/// # Safety
/// `name_or_path` nul-terminated; `out_env` writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_env_load(name_or_path: *const c_char, out_env: *mut *mut LstocEnv) -> LstocStatus {
    guard(|| {
        let slot = out(out_env, "out_env")?;
        let world = World::load(text(name_or_path, "name_or_path")?)?;
        *slot = Box::into_raw(Box::new(LstocEnv { world, episode: None }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`lstoc_env_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lstoc_env_free(env: *mut LstocEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts an episode and reports the agent cell.
///
/// # Safety
/// `env` must be live; `out_x` and `out_y` writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_env_reset(env: *mut LstocEnv, seed: u64, out_x: *mut u32, out_y: *mut u32) -> LstocStatus {
    guard(|| {
        let env = out(env, "env")?;
        let (x, y) = (out(out_x, "out_x")?, out(out_y, "out_y")?);
        let (episode, _) = env.world.reset(seed)?;
        let (cx, cy) = episode.position();
        (*x, *y) = (cx as u32, cy as u32);
        env.episode = Some(episode);
        Ok(())
    })
}

/// Takes `action` (0 north, 1 south, 2 east, 3 west). `out_label` is -1 while
/// the episode runs, then 1 on task completion and 0 at the horizon.
///
/// # Safety
/// `env` must be live; every out-pointer writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_env_step(
    env: *mut LstocEnv,
    action: u32,
    out_x: *mut u32,
    out_y: *mut u32,
    out_done: *mut bool,
    out_label: *mut i32,
) -> LstocStatus {
    guard(|| {
        let env = out(env, "env")?;
        let (x, y) = (out(out_x, "out_x")?, out(out_y, "out_y")?);
        let (done, label) = (out(out_done, "out_done")?, out(out_label, "out_label")?);
        let a = *Action::ALL
            .get(action as usize)
            .ok_or_else(|| Fail(LstocStatus::InvalidArgument, format!("action {action} out of range")))?;
        let episode = env
            .episode
            .as_mut()
            .ok_or_else(|| Fail(LstocStatus::InvalidArgument, "reset before stepping".into()))?;
        let o = episode.step_key(a)?;
        let (cx, cy) = episode.position();
        (*x, *y) = (cx as u32, cy as u32);
        *done = o.done;
        *label = o.label.map_or(-1, i32::from);
        Ok(())
    })
}

/// Grounds key states to the formula's symbols. `sequences_json` is an array
/// of arrays of hex keys and `keys_json` an array of hex keys; the verdict is
/// written as JSON.
///
/// # Safety
/// Strings nul-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_label_solve(
    formula: *const c_char,
    sequences_json: *const c_char,
    keys_json: *const c_char,
    out_json: *mut *mut c_char,
) -> LstocStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let fsm = Fsm::compile(&Formula::parse_open(text(formula, "formula")?)?);
        let seqs: Vec<Vec<StateKey>> = json(text(sequences_json, "sequences_json")?, "sequences_json")?;
        let keys: Vec<StateKey> = json(text(keys_json, "keys_json")?, "keys_json")?;
        let verdict = LabelingProblem::new(fsm, seqs, keys)?.solve()?;
        *slot = owned(verdict.to_json().to_string())?;
        Ok(())
    })
}

/// Runs the full method from a JSON run configuration and writes the report
/// summary as JSON.
///
/// # Safety
/// `config_json` nul-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn lstoc_run(config_json: *const c_char, out_json: *mut *mut c_char) -> LstocStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let cfg: RunConfig = json(text(config_json, "config_json")?, "config_json")?;
        let report = run_comparison(&cfg, cfg.variant)?;
        *slot = owned(report.summary_json().to_string())?;
        Ok(())
    })
}
