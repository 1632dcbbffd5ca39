//! C API over the swarm-cc library.
//!
//! Every entry point returns an [`SccStatus`]. On failure a description is
//! kept per thread and can be read with [`scc_last_error_message`]. Handles
//! are opaque and must be released with their `*_free` function. Panics are
//! caught at the boundary and reported as `SCC_STATUS_PANIC`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rand_chacha::ChaCha8Rng;
use swarm_cc::checkpoint::{read_checkpoint, write_checkpoint};
use swarm_cc::config::{parse_config, parse_config_str, set_key};
use swarm_cc::env::{CmdpEnv, NODE_FEATURES};
use swarm_cc::trainer::{evaluate, run_rngs, TrainConfig, Trainer};
use swarm_cc::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SccStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Domain = 4,
    Protocol = 5,
    Numeric = 6,
    Shape = 7,
    Checkpoint = 8,
    Parse = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&Error> for SccStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => SccStatus::Config,
            Error::Domain(_) => SccStatus::Domain,
            Error::Protocol(_) => SccStatus::Protocol,
            Error::Numeric(_) => SccStatus::Numeric,
            Error::Shape(_) => SccStatus::Shape,
            Error::Checkpoint(_) => SccStatus::Checkpoint,
            Error::Parse { .. } => SccStatus::Parse,
            Error::Io(_) => SccStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(SccStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(SccStatus::from(&e), e.to_string())
    }
}

fn fail(status: SccStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SccStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SccStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SccStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| fail(SccStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(SccStatus::NullPointer, format!("{what} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(SccStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(SccStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SccStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(fail(SccStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

/// Copies `data` into a caller buffer, always reporting the needed length.
unsafe fn fill<T: Copy>(data: &[T], buf: *mut T, capacity: usize, out_len: *mut usize) -> Result<(), Fail> {
    put(out_len, data.len(), "out_len")?;
    if data.len() > capacity {
        return Err(fail(SccStatus::BufferTooSmall, format!("buffer holds {capacity}, need {}", data.len())));
    }
    if !data.is_empty() {
        if buf.is_null() {
            return Err(fail(SccStatus::NullPointer, "buffer is null"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    }
    Ok(())
}

/// Last error message of the calling thread, or null when the last call succeeded.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn scc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of features per node row in an observation.
#[no_mangle]
pub extern "C" fn scc_node_features() -> usize {
    NODE_FEATURES
}

/// Run configuration.
pub struct SccConfig(TrainConfig);

/// One swarm stepped slot by slot under a scheme.
pub struct SccSimulator {
    env: CmdpEnv,
    rng: ChaCha8Rng,
}

/// Agent population plus training state.
pub struct SccTrainer(Trainer);

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scc_config_new_default(out: *mut *mut SccConfig) -> SccStatus {
    guard(|| put(out, boxed(SccConfig(TrainConfig::default())), "out"))
}

/// Parses a config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scc_config_from_file(path: *const c_char, out: *mut *mut SccConfig) -> SccStatus {
    guard(|| {
        let cfg = parse_config(Path::new(c_str(path, "path")?))?;
        put(out, boxed(SccConfig(cfg)), "out")
    })
}

/// Parses config text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scc_config_from_str(text: *const c_char, out: *mut *mut SccConfig) -> SccStatus {
    guard(|| {
        let cfg = parse_config_str(c_str(text, "text")?)?;
        put(out, boxed(SccConfig(cfg)), "out")
    })
}

/// Sets one dotted key, e.g. `("e_c", "1")`, then revalidates. On error the config is unchanged.
///
/// # Safety
/// `cfg` must come from an `scc_config_*` constructor; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn scc_config_set(cfg: *mut SccConfig, key: *const c_char, value: *const c_char) -> SccStatus {
    guard(|| {
        let cfg = deref_mut(cfg, "cfg")?;
        let (key, value) = (c_str(key, "key")?, c_str(value, "value")?);
        let mut next = cfg.0.clone();
        set_key(&mut next, key, value).map_err(|m| fail(SccStatus::Config, m))?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scc_config_free(cfg: *mut SccConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Simulator with a freshly placed swarm.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scc_simulator_new(cfg: *const SccConfig, seed: u64, out: *mut *mut SccSimulator) -> SccStatus {
    guard(|| {
        let c = &deref(cfg, "cfg")?.0;
        let (mut rng, _) = run_rngs(seed);
        let env = CmdpEnv::new(c.scenario.clone(), c.scheme, c.e_c, &mut rng)?;
        put(out, boxed(SccSimulator { env, rng }), "out")
    })
}

/// Runs Phase I of a new round and reports how many UAVs decoded the GBS broadcast.
///
/// # Safety
/// `sim` must be a live simulator handle; `out_phase1_success` may be null.
#[no_mangle]
pub unsafe extern "C" fn scc_simulator_begin_round(sim: *mut SccSimulator, out_phase1_success: *mut usize) -> SccStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        let out = s.env.begin_round(&mut s.rng)?;
        if !out_phase1_success.is_null() {
            out_phase1_success.write(out.successful.len());
        }
        Ok(())
    })
}

/// Moves the swarm by one inter-round interval.
///
/// # Safety
/// `sim` must be a live simulator handle.
#[no_mangle]
pub unsafe extern "C" fn scc_simulator_advance(sim: *mut SccSimulator) -> SccStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        Ok(s.env.advance_mobility(&mut s.rng)?)
    })
}

/// Ids of the UAVs that act in the next slot (empty once the round is over).
/// `out_len` always receives the required length.
///
/// # Safety
/// `buf` must hold `capacity` elements; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scc_simulator_acting_agents(
    sim: *const SccSimulator,
    buf: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> SccStatus {
    guard(|| fill(&deref(sim, "sim")?.env.acting_agents(), buf, capacity, out_len))
}

/// Current node table, row-major, `n_uavs * scc_node_features()` values.
///
/// # Safety
/// `buf` must hold `capacity` elements; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scc_simulator_observation(
    sim: *const SccSimulator,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> SccStatus {
    guard(|| fill(deref(sim, "sim")?.env.observation().nodes.as_slice(), buf, capacity, out_len))
}

/// Outcome of one slot.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SccStep {
    pub reward: f64,
    /// Slot energy in broadcast-slot units.
    pub cost: f64,
    pub terminal: bool,
    pub n_success: usize,
    pub slot: usize,
}

/// Executes one slot. `agents[k]` takes action index `actions[k]`.
///
/// # Safety
/// `agents` and `actions` must each hold `len` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scc_simulator_step(
    sim: *mut SccSimulator,
    agents: *const usize,
    actions: *const usize,
    len: usize,
    out: *mut SccStep,
) -> SccStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        let joint: BTreeMap<usize, usize> =
            slice(agents, len, "agents")?.iter().copied().zip(slice(actions, len, "actions")?.iter().copied()).collect();
        if joint.len() != len {
            return Err(fail(SccStatus::InvalidArgument, "duplicate agent id"));
        }
        let r = s.env.step(&joint, &mut s.rng)?;
        put(
            out,
            SccStep { reward: r.reward, cost: r.cost, terminal: r.terminal, n_success: r.info.n_success, slot: r.info.slot },
            "out",
        )
    })
}

/// # Safety
/// `sim` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scc_simulator_free(sim: *mut SccSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Fresh trainer seeded from the config.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scc_trainer_new(cfg: *const SccConfig, out: *mut *mut SccTrainer) -> SccStatus {
    guard(|| {
        let t = Trainer::new(deref(cfg, "cfg")?.0.clone())?;
        put(out, boxed(SccTrainer(t)), "out")
    })
}

/// Per-episode training metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SccMetrics {
    pub episode: usize,
    pub mean_success: f64,
    pub mean_energy: f64,
    pub lambda_mean: f64,
    /// NaN when no learning step ran.
    pub loss: f64,
    pub epsilon: f64,
}

/// Trains one episode.
///
/// # Safety
/// `trainer` must be a live handle; `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn scc_trainer_run_episode(trainer: *mut SccTrainer, out: *mut SccMetrics) -> SccStatus {
    guard(|| {
        let t = deref_mut(trainer, "trainer")?;
        let m = t.0.run_episode()?;
        if !out.is_null() {
            out.write(SccMetrics {
                episode: m.episode,
                mean_success: m.mean_success,
                mean_energy: m.mean_energy,
                lambda_mean: m.lambda_mean(),
                loss: m.loss,
                epsilon: m.epsilon,
            });
        }
        Ok(())
    })
}

/// Episodes completed so far.
///
/// # Safety
/// `trainer` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn scc_trainer_episodes_done(trainer: *const SccTrainer, out: *mut usize) -> SccStatus {
    guard(|| put(out, deref(trainer, "trainer")?.0.episode, "out"))
}

/// Current multiplier of every agent.
///
/// # Safety
/// `buf` must hold `capacity` elements; `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scc_trainer_lambdas(
    trainer: *const SccTrainer,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> SccStatus {
    guard(|| {
        let l: Vec<f64> = deref(trainer, "trainer")?.0.agents.iter().map(|a| a.lagrange.lambda).collect();
        fill(&l, buf, capacity, out_len)
    })
}

/// Writes a bit-exact snapshot.
///
/// # Safety
/// `trainer` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn scc_trainer_save(trainer: *const SccTrainer, path: *const c_char) -> SccStatus {
    guard(|| {
        let t = deref(trainer, "trainer")?;
        Ok(write_checkpoint(Path::new(c_str(path, "path")?), &t.0)?)
    })
}

/// Restores a snapshot written by `scc_trainer_save` under a matching config.
///
/// # Safety
/// `cfg` must be a live config handle; `path` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn scc_trainer_load(cfg: *const SccConfig, path: *const c_char, out: *mut *mut SccTrainer) -> SccStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?.0.clone();
        let t = read_checkpoint(Path::new(c_str(path, "path")?), c)?;
        put(out, boxed(SccTrainer(t)), "out")
    })
}

/// Greedy evaluation summary with 95% half-widths.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SccEval {
    pub rounds: usize,
    pub mean_success: f64,
    pub success_ci95: f64,
    pub mean_energy: f64,
    pub energy_ci95: f64,
}

/// Evaluates the trainer's agents greedily without changing them.
///
/// # Safety
/// `trainer` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn scc_trainer_evaluate(trainer: *const SccTrainer, episodes: usize, seed: u64, out: *mut SccEval) -> SccStatus {
    guard(|| {
        let t = &deref(trainer, "trainer")?.0;
        let s = evaluate(&t.agents, &t.config, episodes, seed)?;
        put(
            out,
            SccEval {
                rounds: s.rounds,
                mean_success: s.mean_success,
                success_ci95: s.success_ci95,
                mean_energy: s.mean_energy,
                energy_ci95: s.energy_ci95,
            },
            "out",
        )
    })
}

/// # Safety
/// `trainer` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scc_trainer_free(trainer: *mut SccTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}
