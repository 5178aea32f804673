//! Append-only JSON-lines event logs and replay.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::core::{CandidateArrow, MetricPoint, SessionConfig, SessionLearner, TeachingSession};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        timestamp: String,
        session_id: String,
        config: SessionConfig,
        candidates: Vec<CandidateArrow>,
        metrics: MetricPoint,
    },
    Selected {
        timestamp: String,
        step: usize,
        /// The candidates on display when the selection was made.
        candidates: Vec<CandidateArrow>,
        selection: usize,
        metrics: MetricPoint,
    },
    Finished {
        timestamp: String,
        step: usize,
    },
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

impl SessionEvent {
    pub fn created(session: &TeachingSession) -> Self {
        SessionEvent::Created {
            timestamp: now(),
            session_id: session.id().to_string(),
            config: session.config().clone(),
            candidates: session.candidate_arrows(),
            metrics: session.metrics()[0],
        }
    }
}

/// Writes one event per line, flushing after each.
#[derive(Debug)]
pub struct EventSink {
    path: PathBuf,
    file: File,
}

impl EventSink {
    pub fn create(dir: &Path, session_id: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{session_id}.jsonl"));
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &SessionEvent) -> Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct Replayed {
    pub session: TeachingSession,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub session_id: String,
    pub map_id: String,
    pub learner_kind: SessionLearner,
    pub steps: usize,
    pub finished: bool,
    pub final_metrics: MetricPoint,
    pub estimates: Vec<f64>,
}

impl Replayed {
    pub fn summary(&self) -> ReplaySummary {
        let s = &self.session;
        ReplaySummary {
            session_id: s.id().to_string(),
            map_id: s.config().map_id.clone(),
            learner_kind: s.config().learner_kind,
            steps: s.step(),
            finished: s.is_finished(),
            final_metrics: *s.metrics().last().expect("initial metrics"),
            estimates: s.params().as_slice().to_vec(),
        }
    }
}

pub fn replay_log(path: &Path) -> Result<Replayed> {
    replay(BufReader::new(File::open(path)?))
}

/// Rebuilds a session by re-applying every logged selection, checking the
/// recomputed candidates and metrics against the log as it goes.
pub fn replay<R: BufRead>(reader: R) -> Result<Replayed> {
    let mut session: Option<TeachingSession> = None;
    let mut events = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let diverged = |what: &str| Error::Parse {
            line: line_no,
            message: format!("replay diverges from the log: {what}"),
        };
        let event: SessionEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("corrupt event: {e}"),
        })?;
        match (event, session.as_mut()) {
            (
                SessionEvent::Created {
                    session_id,
                    config,
                    candidates,
                    metrics,
                    ..
                },
                None,
            ) => {
                let s = TeachingSession::new(session_id, config)?;
                if s.candidate_arrows() != candidates {
                    return Err(diverged("initial candidates"));
                }
                if s.metrics()[0] != metrics {
                    return Err(diverged("initial metrics"));
                }
                session = Some(s);
            }
            (
                SessionEvent::Selected {
                    step,
                    candidates,
                    selection,
                    metrics,
                    ..
                },
                Some(s),
            ) => {
                if s.step() + 1 != step {
                    return Err(diverged("step out of order"));
                }
                if s.candidate_arrows() != candidates {
                    return Err(diverged("candidates"));
                }
                if s.select(selection)? != metrics {
                    return Err(diverged("metrics"));
                }
            }
            (SessionEvent::Finished { .. }, Some(s)) => s.finish(),
            (SessionEvent::Created { .. }, Some(_)) => return Err(diverged("second creation event")),
            (_, None) => return Err(diverged("log must start with a creation event")),
        }
        events += 1;
    }
    let session = session.ok_or(Error::Empty("session log"))?;
    Ok(Replayed { session, events })
}
