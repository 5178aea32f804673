//! C ABI over `ital-core`.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns an [`ItalStatus`]; on failure the message is
//! kept per thread and can be read with [`ital_last_error`]. Arrays are passed
//! as pointer plus length, and output arrays must be sized by the caller
//! (the `*_len` queries give the required sizes).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ital_core::gridworld::{soft_value_iteration, GridworldMdp, HumanMap, IrlModel, SoftPlanner, TransitionSpec};
use ital_core::linmodel::{self, LossSpec, ParameterVector, TeachingExample};
use ital_core::pedagogy::{self, BetaSchedule, LearnerState};
use ital_core::session::{SessionConfig, SessionLearner, TeachingSession};
use ital_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    InvalidIndex = 4,
    NonFinite = 5,
    NotConverged = 6,
    NotFound = 7,
    Finished = 8,
    BufferTooSmall = 9,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ItalStatus {
    match e {
        Error::Shape { .. } => ItalStatus::ShapeMismatch,
        Error::InvalidIndex { .. } => ItalStatus::InvalidIndex,
        Error::NonFinite(_) => ItalStatus::NonFinite,
        Error::Convergence { .. } => ItalStatus::NotConverged,
        Error::NotFound(_) => ItalStatus::NotFound,
        Error::Conflict(_) => ItalStatus::Finished,
        _ => ItalStatus::InvalidArgument,
    }
}

struct Fail(ItalStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult = Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> ItalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ItalStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ItalStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ItalStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(src: &[f64], out: *mut f64, cap: usize) -> FfiResult {
    if cap < src.len() {
        return Err(Fail(
            ItalStatus::BufferTooSmall,
            format!("output buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn handle<'a, T>(h: *const T) -> Result<&'a T, Fail> {
    h.as_ref().ok_or_else(|| null("handle"))
}

unsafe fn handle_mut<'a, T>(h: *mut T) -> Result<&'a mut T, Fail> {
    h.as_mut().ok_or_else(|| null("handle"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Why the most recent call on this thread failed, or null if it succeeded.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ital_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ital_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes `softmax(beta * volumes)` into `out`.
///
/// # Safety
/// `volumes` must point to `len` doubles and `out` to room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ital_selection_distribution(
    volumes: *const f64,
    len: usize,
    beta: f64,
    out: *mut f64,
) -> ItalStatus {
    guard(|| {
        let v = slice(volumes, len, "volumes")?;
        if v.is_empty() {
            return Err(Error::Empty("teaching volumes").into());
        }
        if v.iter().any(|x| !x.is_finite()) || !beta.is_finite() {
            return Err(Error::NonFinite("teaching volumes").into());
        }
        write_out(&pedagogy::selection_distribution(v, beta), out, len)
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItalLoss {
    Squared = 0,
    CrossEntropy = 1,
}

/// Options for [`ital_learner_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ItalLearnerOptions {
    pub loss: ItalLoss,
    /// Ignored for the squared loss.
    pub classes: usize,
    pub dim: usize,
    pub lambda: f64,
    pub eta: f64,
    pub beta: f64,
}

/// A gradient learner over a linear model with `rows x (dim + 1)` parameters.
pub struct ItalLearner {
    spec: LossSpec,
    dim: usize,
    state: LearnerState,
}

/// Creates a learner. `init` may be null for zero parameters; otherwise it
/// must hold `rows * (dim + 1)` values, row-major with the bias last.
///
/// # Safety
/// `opts` and `out` must be valid; `init`, if not null, must point to
/// `init_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ital_learner_new(
    opts: *const ItalLearnerOptions,
    init: *const f64,
    init_len: usize,
    out: *mut *mut ItalLearner,
) -> ItalStatus {
    guard(|| {
        let o = handle(opts)?;
        let spec = match o.loss {
            ItalLoss::Squared => LossSpec::squared(o.lambda),
            ItalLoss::CrossEntropy => LossSpec::cross_entropy(o.classes, o.lambda),
        };
        spec.validate()?;
        if o.dim == 0 {
            return Err(Fail(ItalStatus::InvalidArgument, "dim must be positive".into()));
        }
        if !(o.eta > 0.0 && o.eta.is_finite()) || !o.beta.is_finite() {
            return Err(Fail(
                ItalStatus::InvalidArgument,
                "eta must be positive and beta finite".into(),
            ));
        }
        let params = if init.is_null() {
            spec.zeros(o.dim)
        } else {
            let v = slice(init, init_len, "init")?;
            ParameterVector::from_vec(spec.outputs(), o.dim + 1, v.to_vec())?
        };
        let state = LearnerState::new(params, o.eta, BetaSchedule::Constant(o.beta), 0);
        put(
            out,
            ItalLearner {
                spec,
                dim: o.dim,
                state,
            },
        )
    })
}

/// # Safety
/// `learner` must come from [`ital_learner_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ital_learner_free(learner: *mut ItalLearner) {
    if !learner.is_null() {
        drop(Box::from_raw(learner));
    }
}

/// Number of parameters, or 0 for a null handle.
///
/// # Safety
/// `learner` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ital_learner_params_len(learner: *const ItalLearner) -> usize {
    learner.as_ref().map_or(0, |l| l.state.params.len())
}

/// Copies the current parameters into `out`.
///
/// # Safety
/// `learner` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ital_learner_params(learner: *const ItalLearner, out: *mut f64, cap: usize) -> ItalStatus {
    guard(|| write_out(handle(learner)?.state.params.as_slice(), out, cap))
}

unsafe fn read_batch(
    dim: usize,
    features: *const f64,
    labels: *const f64,
    batch_len: usize,
) -> Result<Vec<TeachingExample>, Fail> {
    let x = slice(features, batch_len * dim, "features")?;
    let y = slice(labels, batch_len, "labels")?;
    Ok(x.chunks(dim)
        .zip(y)
        .map(|(f, &l)| TeachingExample::new(f.to_vec(), l))
        .collect())
}

/// One learner update on a batch of `batch_len` examples (`features` is
/// row-major `batch_len x dim`). With `subset_len == 0` this is a plain
/// gradient step on example `chosen`; otherwise it is the teacher-aware
/// update using `subset` as the unchosen examples.
///
/// # Safety
/// `learner` must be a live handle; the arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ital_learner_step(
    learner: *mut ItalLearner,
    features: *const f64,
    labels: *const f64,
    batch_len: usize,
    chosen: usize,
    subset: *const usize,
    subset_len: usize,
) -> ItalStatus {
    guard(|| {
        let l = handle_mut(learner)?;
        let batch = read_batch(l.dim, features, labels, batch_len)?;
        let subset = slice(subset, subset_len, "subset")?;
        l.state = if subset.is_empty() {
            let ex = batch.get(chosen).ok_or(Error::InvalidIndex {
                index: chosen,
                len: batch.len(),
            })?;
            pedagogy::naive_update(&l.spec, &l.state, ex)?
        } else {
            pedagogy::ital_update(&l.spec, &l.state, &batch, chosen, subset)?.0
        };
        Ok(())
    })
}

/// Feedback teaching volumes of every example in the batch for a target
/// model given as a parameter array shaped like the learner's.
///
/// # Safety
/// `learner` must be a live handle; `target` must hold `target_len` doubles,
/// the batch arrays their stated lengths, and `out` room for `batch_len`.
#[no_mangle]
pub unsafe extern "C" fn ital_learner_feedback_volumes(
    learner: *const ItalLearner,
    target: *const f64,
    target_len: usize,
    features: *const f64,
    labels: *const f64,
    batch_len: usize,
    out: *mut f64,
) -> ItalStatus {
    guard(|| {
        let l = handle(learner)?;
        let target = ParameterVector::from_vec(
            l.state.params.rows(),
            l.state.params.cols(),
            slice(target, target_len, "target")?.to_vec(),
        )?;
        let batch = read_batch(l.dim, features, labels, batch_len)?;
        let eta = l.state.eta();
        let volumes = batch
            .iter()
            .map(|ex| {
                let feedback = linmodel::logits(&l.spec, &l.state.params, ex)?;
                pedagogy::teaching_volume_feedback(&l.spec, &feedback, ex, &target, eta)
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        write_out(&volumes, out, batch_len)
    })
}

/// A gridworld with the standard noisy transitions and a fixed reward map.
pub struct ItalGridworld {
    mdp: GridworldMdp,
    planner: SoftPlanner,
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ital_gridworld_new(
    width: usize,
    height: usize,
    discount: f64,
    out: *mut *mut ItalGridworld,
) -> ItalStatus {
    guard(|| {
        let mdp = GridworldMdp::new(width, height, TransitionSpec::PAPER, discount)?;
        put(
            out,
            ItalGridworld {
                mdp,
                planner: SoftPlanner::default(),
            },
        )
    })
}

/// # Safety
/// `world` must come from [`ital_gridworld_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ital_gridworld_free(world: *mut ItalGridworld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Number of grids, or 0 for a null handle.
///
/// # Safety
/// `world` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ital_gridworld_num_states(world: *const ItalGridworld) -> usize {
    world.as_ref().map_or(0, |w| w.mdp.num_states())
}

/// Overrides the soft planner's sharpness `k` and Boltzmann rationality.
///
/// # Safety
/// `world` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ital_gridworld_set_planner(
    world: *mut ItalGridworld,
    sharpness: f64,
    rationality: f64,
) -> ItalStatus {
    guard(|| {
        let w = handle_mut(world)?;
        let planner = SoftPlanner {
            sharpness,
            rationality,
            ..w.planner
        };
        planner.validate()?;
        w.planner = planner;
        Ok(())
    })
}

/// Soft state-action values for per-grid `rewards`, written row-major
/// `states x 4` (up, down, left, right) into `q_out`.
///
/// # Safety
/// `world` must be a live handle; `rewards` must hold one value per grid and
/// `q_out` room for `4 * states`.
#[no_mangle]
pub unsafe extern "C" fn ital_gridworld_soft_q(
    world: *const ItalGridworld,
    rewards: *const f64,
    rewards_len: usize,
    q_out: *mut f64,
    q_cap: usize,
) -> ItalStatus {
    guard(|| {
        let w = handle(world)?;
        let params = w.mdp.encode(slice(rewards, rewards_len, "rewards")?)?;
        let sol = soft_value_iteration(&w.mdp, &params, &w.planner)?;
        write_out(&sol.q, q_out, q_cap)
    })
}

/// Boltzmann policy for `rewards`, row-major `states x 4`.
///
/// # Safety
/// As for [`ital_gridworld_soft_q`].
#[no_mangle]
pub unsafe extern "C" fn ital_gridworld_policy(
    world: *const ItalGridworld,
    rewards: *const f64,
    rewards_len: usize,
    out: *mut f64,
    cap: usize,
) -> ItalStatus {
    guard(|| {
        let w = handle(world)?;
        let params = w.mdp.encode(slice(rewards, rewards_len, "rewards")?)?;
        let model = IrlModel::without_gradient(&w.mdp, &params, &w.planner)?;
        write_out(&model.policy.probs, out, cap)
    })
}

/// One displayed arrow: grid `state` (row-major) and action 0..4 for up, down, left, right.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ItalArrow {
    pub index: u32,
    pub state: u32,
    pub row: u32,
    pub col: u32,
    pub action: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ItalMetrics {
    pub step: u64,
    pub distance: f64,
    pub policy_tv: f64,
    pub expected_return: f64,
}

pub struct ItalSession {
    inner: TeachingSession,
}

/// Starts a teaching session on a built-in map (`"A"` to `"E"`). `aware`
/// selects the teacher-aware learner; `beta` and `eta` override the defaults
/// when positive.
///
/// # Safety
/// `map_id` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ital_session_new(
    map_id: *const c_char,
    aware: bool,
    seed: u64,
    beta: f64,
    eta: f64,
    out: *mut *mut ItalSession,
) -> ItalStatus {
    guard(|| {
        if map_id.is_null() {
            return Err(null("map_id"));
        }
        let id = CStr::from_ptr(map_id)
            .to_str()
            .map_err(|_| Fail(ItalStatus::InvalidArgument, "map id is not UTF-8".into()))?;
        if HumanMap::from_id(id).is_none() {
            return Err(Error::NotFound(format!("map `{id}`")).into());
        }
        let kind = if aware {
            SessionLearner::Aware
        } else {
            SessionLearner::Naive
        };
        let mut config = SessionConfig::for_map(id, kind, seed)?;
        if beta > 0.0 {
            config.beta = beta;
        }
        if eta > 0.0 {
            config.eta = eta;
        }
        let inner = TeachingSession::new(format!("ffi-{seed}"), config)?;
        put(out, ItalSession { inner })
    })
}

/// # Safety
/// `session` must come from [`ital_session_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ital_session_free(session: *mut ItalSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Writes the current candidates into `out` and their count into `written`.
/// A finished session has no candidates.
///
/// # Safety
/// `session` must be a live handle, `out` must hold `cap` arrows and
/// `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ital_session_candidates(
    session: *const ItalSession,
    out: *mut ItalArrow,
    cap: usize,
    written: *mut usize,
) -> ItalStatus {
    guard(|| {
        let s = handle(session)?;
        let arrows: Vec<ItalArrow> = s
            .inner
            .candidate_arrows()
            .iter()
            .map(|a| ItalArrow {
                index: a.index as u32,
                state: a.state as u32,
                row: a.row as u32,
                col: a.col as u32,
                action: a.action.index() as u32,
            })
            .collect();
        if written.is_null() {
            return Err(null("written"));
        }
        if cap < arrows.len() {
            return Err(Fail(
                ItalStatus::BufferTooSmall,
                format!("{} arrows need room", arrows.len()),
            ));
        }
        if !arrows.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            ptr::copy_nonoverlapping(arrows.as_ptr(), out, arrows.len());
        }
        *written = arrows.len();
        Ok(())
    })
}

/// Applies the teacher's choice of candidate and reports the new metrics.
/// `metrics` may be null.
///
/// # Safety
/// `session` must be a live handle; `metrics` null or valid.
#[no_mangle]
pub unsafe extern "C" fn ital_session_select(
    session: *mut ItalSession,
    candidate_index: usize,
    metrics: *mut ItalMetrics,
) -> ItalStatus {
    guard(|| {
        let s = handle_mut(session)?;
        let m = s.inner.select(candidate_index)?;
        if let Some(out) = metrics.as_mut() {
            *out = ItalMetrics {
                step: m.step as u64,
                distance: m.distance,
                policy_tv: m.policy_tv,
                expected_return: m.expected_return,
            };
        }
        Ok(())
    })
}

/// Copies the learner's current reward estimates (one per grid).
///
/// # Safety
/// `session` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ital_session_estimates(session: *const ItalSession, out: *mut f64, cap: usize) -> ItalStatus {
    guard(|| write_out(handle(session)?.inner.params().as_slice(), out, cap))
}
