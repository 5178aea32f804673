//! Interactive teaching sessions on the human-study tile maps, their event
//! logs, and the HTTP service that hosts them.

pub mod core;
pub mod http;
pub mod log;

pub use self::core::{
    run_scripted, CandidateArrow, MetricPoint, ScriptedTeacher, SessionConfig, SessionLearner, SessionView,
    TeachingSession, CANDIDATES,
};
pub use self::http::{app, router, serve, AppState, ServeOptions};
pub use self::log::{replay, replay_log, EventSink, ReplaySummary, Replayed, SessionEvent};
