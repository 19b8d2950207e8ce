//! C ABI over the orsense simulator.
//!
//! Scenes and configurations are opaque handles created and released by this
//! library. Every fallible call returns an [`OrsStatus`]; the message for the
//! last failure on the calling thread is available from
//! [`ors_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use orsense::executor::{run_episode, EpisodeConfig, FailureReason, SensingMode};
use orsense::mcts::PlannerMode;
use orsense::scene::{generate_scene_with, GroundTruthScene, SizeClass};
use orsense::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Generation = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrsSizeClass {
    Small = 0,
    Large = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrsSensingMode {
    Mas = 0,
    IasSas = 1,
    IasFas = 2,
    Ias = 3,
    Dias = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrsPlannerMode {
    Or = 0,
    Ss = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrsFailure {
    None = 0,
    TargetNotDetected = 1,
    NoGrasp = 2,
    NoRetrievalPath = 3,
    Unsolved = 4,
    ReplayInvalid = 5,
}

/// Ground-truth shelf scene.
pub struct OrsScene(GroundTruthScene);

/// Episode configuration.
pub struct OrsConfig(EpisodeConfig);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OrsEpisodeSummary {
    pub success: bool,
    /// One of the OrsFailure values.
    pub failure: i32,
    pub attempts: u32,
    pub objects_moved: u32,
    pub viewpoints: u32,
    /// Meters.
    pub relocation_distance: f64,
    /// Seconds.
    pub planning_time: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: OrsStatus, msg: impl Into<String>) -> OrsStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> OrsStatus {
    let status = match e {
        Error::Io(_) => OrsStatus::Io,
        Error::Format(_) => OrsStatus::Format,
        Error::PlacementFailure(_) | Error::OutOfBounds => OrsStatus::Generation,
        _ => OrsStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`OrsStatus::Panic`].
fn guard(f: impl FnOnce() -> OrsStatus) -> OrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == OrsStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(OrsStatus::Panic, msg)
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, OrsStatus> {
    if p.is_null() {
        return Err(fail(OrsStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(OrsStatus::InvalidArgument, "path is not UTF-8"))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ors_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ors_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ors_scene_generate(
    seed: u64,
    size_class: OrsSizeClass,
    n_obstacles: u32,
    out: *mut *mut OrsScene,
) -> OrsStatus {
    guard(|| {
        if out.is_null() {
            return fail(OrsStatus::NullPointer, "out is null");
        }
        let size = match size_class {
            OrsSizeClass::Small => SizeClass::Small,
            OrsSizeClass::Large => SizeClass::Large,
        };
        let cfg = EpisodeConfig::default();
        match generate_scene_with(seed, size, n_obstacles as usize, &cfg.generator) {
            Ok(gt) => {
                *out = Box::into_raw(Box::new(OrsScene(gt)));
                OrsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ors_scene_load(path: *const c_char, out: *mut *mut OrsScene) -> OrsStatus {
    guard(|| {
        if out.is_null() {
            return fail(OrsStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match GroundTruthScene::load(path) {
            Ok(gt) => {
                *out = Box::into_raw(Box::new(OrsScene(gt)));
                OrsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scene` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ors_scene_save(scene: *const OrsScene, path: *const c_char) -> OrsStatus {
    guard(|| {
        let Some(scene) = scene.as_ref() else { return fail(OrsStatus::NullPointer, "scene is null") };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match scene.0.save(path) {
            Ok(()) => OrsStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Number of objects including the target, or 0 for a null handle.
///
/// # Safety
/// `scene` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ors_scene_object_count(scene: *const OrsScene) -> usize {
    scene.as_ref().map_or(0, |s| s.0.objects.len())
}

/// # Safety
/// `scene` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ors_scene_free(scene: *mut OrsScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Default configuration: MAS sensing, OR planner, seed 0.
#[no_mangle]
pub extern "C" fn ors_config_new() -> *mut OrsConfig {
    Box::into_raw(Box::new(OrsConfig(EpisodeConfig::default())))
}

/// Parses a TOML episode configuration; omitted fields keep their defaults.
///
/// # Safety
/// `text` must be NUL-terminated and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ors_config_from_toml(text: *const c_char, out: *mut *mut OrsConfig) -> OrsStatus {
    guard(|| {
        if out.is_null() || text.is_null() {
            return fail(OrsStatus::NullPointer, "argument is null");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(OrsStatus::InvalidArgument, "config is not UTF-8");
        };
        let cfg: EpisodeConfig = match toml::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(OrsStatus::Format, e.to_string()),
        };
        if let Err(e) = cfg.validate() {
            return from_error(e);
        }
        *out = Box::into_raw(Box::new(OrsConfig(cfg)));
        OrsStatus::Ok
    })
}

/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn ors_config_set_modes(
    config: *mut OrsConfig,
    sensing: OrsSensingMode,
    planner: OrsPlannerMode,
) -> OrsStatus {
    let Some(cfg) = config.as_mut() else { return fail(OrsStatus::NullPointer, "config is null") };
    cfg.0.sensing_mode = match sensing {
        OrsSensingMode::Mas => SensingMode::Mas,
        OrsSensingMode::IasSas => SensingMode::IasSas,
        OrsSensingMode::IasFas => SensingMode::IasFas,
        OrsSensingMode::Ias => SensingMode::Ias,
        OrsSensingMode::Dias => SensingMode::Dias,
    };
    cfg.0.planner_mode = match planner {
        OrsPlannerMode::Or => PlannerMode::Or,
        OrsPlannerMode::Ss => PlannerMode::Ss,
    };
    OrsStatus::Ok
}

/// Seed of the sensing random stream.
///
/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn ors_config_set_seed(config: *mut OrsConfig, seed: u64) -> OrsStatus {
    let Some(cfg) = config.as_mut() else { return fail(OrsStatus::NullPointer, "config is null") };
    cfg.0.seed = seed;
    OrsStatus::Ok
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ors_config_free(config: *mut OrsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs one episode on `scene`. A failed retrieval is a normal outcome
/// reported through `out`; the status only reflects API errors. When
/// `trace_path` is non-null the episode trace is written there.
///
/// # Safety
/// Handles must come from this library, `out` must be writable, and
/// `trace_path` must be null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ors_run_episode(
    scene: *const OrsScene,
    config: *const OrsConfig,
    trace_path: *const c_char,
    out: *mut OrsEpisodeSummary,
) -> OrsStatus {
    guard(|| {
        let (Some(scene), Some(cfg)) = (scene.as_ref(), config.as_ref()) else {
            return fail(OrsStatus::NullPointer, "handle is null");
        };
        if out.is_null() {
            return fail(OrsStatus::NullPointer, "out is null");
        }
        let r = run_episode(&scene.0, &cfg.0);
        if !trace_path.is_null() {
            let path = match path_arg(trace_path) {
                Ok(p) => p,
                Err(s) => return s,
            };
            if let Err(e) = r.trace.save(path) {
                return from_error(e);
            }
        }
        *out = OrsEpisodeSummary {
            success: r.success,
            failure: r.failure.map_or(OrsFailure::None, |f| match f {
                FailureReason::TargetNotDetected => OrsFailure::TargetNotDetected,
                FailureReason::NoGrasp => OrsFailure::NoGrasp,
                FailureReason::NoRetrievalPath => OrsFailure::NoRetrievalPath,
                FailureReason::Unsolved => OrsFailure::Unsolved,
                FailureReason::ReplayInvalid => OrsFailure::ReplayInvalid,
            }) as i32,
            attempts: r.attempts as u32,
            objects_moved: r.objects_moved as u32,
            viewpoints: r.viewpoints as u32,
            relocation_distance: r.relocation_distance,
            planning_time: r.planning_time,
        };
        OrsStatus::Ok
    })
}
