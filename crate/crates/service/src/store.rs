//! Append-only, per-session event logs.
//!
//! Each session lives in `<data_dir>/<session_id>.jsonl`: one `created`
//! record followed by one `observation` record per accepted data point. The
//! trial state is never stored; it is rebuilt by replaying observations
//! through the engine, both on load and after every append. Every record is
//! fsynced before the mutation is acknowledged.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use lrtrial_core::{DesignParams, FieldError, Status, TrialDesign, TrialState};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

pub type SessionId = Uuid;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(SessionId),

    #[error("session already stopped with status {0}")]
    Stopped(Status),

    #[error("version conflict: expected {expected}, current {actual}")]
    VersionConflict { expected: u64, actual: u64 },

    #[error("validation failed")]
    Validation(Vec<FieldError>),

    #[error("bad page token {0:?}")]
    BadPageToken(String),

    #[error("corrupt event log {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub seq: u64,
    pub value: f64,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Event {
    Created {
        session_id: SessionId,
        design: TrialDesign,
        created_at: DateTime<Utc>,
    },
    Observation(Observation),
}

/// Derived quantities after one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub seq: u64,
    pub theta_obs: f64,
    pub se: f64,
    pub log_lr: f64,
    pub lr: f64,
    pub status: Status,
}

impl TrajectoryPoint {
    fn of(seq: u64, state: &TrialState) -> Self {
        let lr = state.lr().expect("state has at least one observation");
        Self {
            seq,
            theta_obs: state.theta_obs().expect("state has at least one observation"),
            se: state.se().expect("state has at least one observation"),
            log_lr: lr.log_value(),
            lr: lr.value(),
            status: state.status(),
        }
    }
}

/// A session as held in memory. `state` and `trajectory` are derived from
/// `design` and `observations` only.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub session_id: SessionId,
    pub design: TrialDesign,
    pub created_at: DateTime<Utc>,
    pub observations: Vec<Observation>,
    pub state: TrialState,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl SessionRecord {
    fn new(session_id: SessionId, design: TrialDesign, created_at: DateTime<Utc>) -> Self {
        Self {
            session_id,
            state: TrialState::new(design.clone()),
            design,
            created_at,
            observations: Vec::new(),
            trajectory: Vec::new(),
        }
    }

    /// One accepted mutation per observation.
    pub fn version(&self) -> u64 {
        self.observations.len() as u64
    }

    /// Validates and applies an observation without touching `self` on error.
    fn next_state(&self, value: f64) -> Result<TrialState, StoreError> {
        if self.state.status().is_stopped() {
            return Err(StoreError::Stopped(self.state.status()));
        }
        if !value.is_finite() {
            return Err(StoreError::Validation(vec![FieldError::new(
                "value",
                format!("must be a finite number, got {value}"),
            )]));
        }
        self.state
            .add_observation(value)
            .map_err(|e| StoreError::Validation(vec![FieldError::new("value", e.to_string())]))
    }

    fn apply(&mut self, obs: Observation, state: TrialState) {
        self.trajectory.push(TrajectoryPoint::of(obs.seq, &state));
        self.observations.push(obs);
        self.state = state;
    }

    /// Replays the observation log from scratch.
    pub fn recompute(&self) -> Result<(TrialState, Vec<TrajectoryPoint>), lrtrial_core::Error> {
        let mut state = TrialState::new(self.design.clone());
        let mut trajectory = Vec::with_capacity(self.observations.len());
        for obs in &self.observations {
            state.push(obs.value)?;
            trajectory.push(TrajectoryPoint::of(obs.seq, &state));
        }
        Ok((state, trajectory))
    }

    /// CSV with columns `seq,value,theta_obs,se,lr,status,recorded_at`.
    pub fn export_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(EXPORT_HEADER).expect("in-memory write");
        for (obs, point) in self.observations.iter().zip(&self.trajectory) {
            w.write_record([
                obs.seq.to_string(),
                obs.value.to_string(),
                point.theta_obs.to_string(),
                point.se.to_string(),
                point.lr.to_string(),
                point.status.to_string(),
                obs.recorded_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

pub const EXPORT_HEADER: [&str; 7] = ["seq", "value", "theta_obs", "se", "lr", "status", "recorded_at"];

struct Slot {
    record: SessionRecord,
    log: File,
}

/// A page of sessions ordered by `(created_at, session_id)`.
#[derive(Debug, Clone)]
pub struct Page {
    pub sessions: Vec<SessionRecord>,
    pub next_page_token: Option<String>,
}

pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<SessionId, Arc<Mutex<Slot>>>>,
}

impl SessionStore {
    /// Opens (creating if needed) a data directory and replays every log in it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let (record, log) = load_log(&path)?;
            sessions.insert(record.session_id, Arc::new(Mutex::new(Slot { record, log })));
        }
        tracing::info!(dir = %dir.display(), sessions = sessions.len(), "session store opened");
        Ok(Self {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn create_session(&self, params: DesignParams) -> Result<SessionRecord, StoreError> {
        let design = TrialDesign::new(params).map_err(|e| match e {
            lrtrial_core::Error::InvalidDesign(fields) => StoreError::Validation(fields),
            other => StoreError::Validation(vec![FieldError::new("design", other.to_string())]),
        })?;
        let session_id = Uuid::new_v4();
        let created_at = Utc::now();
        let path = self.log_path(session_id);
        let mut log = OpenOptions::new().append(true).create_new(true).open(&path)?;
        write_event(
            &mut log,
            &Event::Created {
                session_id,
                design: design.clone(),
                created_at,
            },
        )?;
        sync_dir(&self.dir)?;

        let record = SessionRecord::new(session_id, design, created_at);
        self.sessions.write().expect("session map lock poisoned").insert(
            session_id,
            Arc::new(Mutex::new(Slot {
                record: record.clone(),
                log,
            })),
        );
        Ok(record)
    }

    pub fn post_observation(
        &self,
        session_id: SessionId,
        value: f64,
        expected_version: u64,
    ) -> Result<SessionRecord, StoreError> {
        let slot = self.slot(session_id)?;
        let mut slot = slot.lock().expect("session lock poisoned");
        let actual = slot.record.version();
        if expected_version != actual {
            return Err(StoreError::VersionConflict {
                expected: expected_version,
                actual,
            });
        }
        let state = slot.record.next_state(value)?;
        let obs = Observation {
            seq: actual + 1,
            value,
            recorded_at: Utc::now(),
        };
        write_event(&mut slot.log, &Event::Observation(obs.clone()))?;
        slot.record.apply(obs, state);
        Ok(slot.record.clone())
    }

    pub fn get_session(&self, session_id: SessionId) -> Result<SessionRecord, StoreError> {
        let slot = self.slot(session_id)?;
        let record = slot.lock().expect("session lock poisoned").record.clone();
        Ok(record)
    }

    pub fn list_sessions(
        &self,
        status: Option<Status>,
        limit: Option<usize>,
        page_token: Option<&str>,
    ) -> Result<Page, StoreError> {
        let slots: Vec<_> = self
            .sessions
            .read()
            .expect("session map lock poisoned")
            .values()
            .cloned()
            .collect();
        let mut all: Vec<SessionRecord> = slots
            .iter()
            .map(|s| s.lock().expect("session lock poisoned").record.clone())
            .filter(|r| status.is_none_or(|st| r.state.status() == st))
            .collect();
        all.sort_by_key(|r| (r.created_at, r.session_id));

        let start = match page_token {
            None => 0,
            Some(token) => {
                let after: SessionId = token.parse().map_err(|_| StoreError::BadPageToken(token.to_string()))?;
                let anchor = self
                    .get_session(after)
                    .map_err(|_| StoreError::BadPageToken(token.to_string()))?;
                all.partition_point(|r| (r.created_at, r.session_id) <= (anchor.created_at, anchor.session_id))
            }
        };
        let limit = limit.unwrap_or(usize::MAX).max(1);
        let rest = &all[start.min(all.len())..];
        let take = rest.len().min(limit);
        let next_page_token = (take < rest.len()).then(|| rest[take - 1].session_id.to_string());
        Ok(Page {
            sessions: rest[..take].to_vec(),
            next_page_token,
        })
    }

    pub fn export_session_csv(&self, session_id: SessionId) -> Result<Vec<u8>, StoreError> {
        Ok(self.get_session(session_id)?.export_csv())
    }

    /// Flushes every log to disk.
    pub fn flush(&self) -> Result<(), StoreError> {
        let slots: Vec<_> = self
            .sessions
            .read()
            .expect("session map lock poisoned")
            .values()
            .cloned()
            .collect();
        for slot in slots {
            slot.lock().expect("session lock poisoned").log.sync_all()?;
        }
        Ok(())
    }

    fn slot(&self, session_id: SessionId) -> Result<Arc<Mutex<Slot>>, StoreError> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(&session_id)
            .cloned()
            .ok_or(StoreError::NotFound(session_id))
    }

    fn log_path(&self, session_id: SessionId) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }
}

fn write_event(log: &mut File, event: &Event) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(event).expect("events serialize");
    line.push(b'\n');
    log.write_all(&line)?;
    log.sync_data()?;
    Ok(())
}

#[cfg(unix)]
fn sync_dir(dir: &Path) -> std::io::Result<()> {
    File::open(dir)?.sync_all()
}

#[cfg(not(unix))]
fn sync_dir(_dir: &Path) -> std::io::Result<()> {
    Ok(())
}

/// Replays one log. A final line without its newline is an interrupted
/// append that was never acknowledged; it is cut off so later appends start
/// on a clean boundary.
fn load_log(path: &Path) -> Result<(SessionRecord, File), StoreError> {
    let corrupt = |reason: String| StoreError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = BufReader::new(File::open(path)?);
    let mut record: Option<SessionRecord> = None;
    let mut good_len = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        if !line.ends_with('\n') {
            tracing::warn!(path = %path.display(), "dropping torn trailing record");
            break;
        }
        let event: Event =
            serde_json::from_str(line.trim_end()).map_err(|e| corrupt(format!("record at byte {good_len}: {e}")))?;
        match (event, record.as_mut()) {
            (
                Event::Created {
                    session_id,
                    design,
                    created_at,
                },
                None,
            ) => record = Some(SessionRecord::new(session_id, design, created_at)),
            (Event::Observation(obs), Some(rec)) => {
                if obs.seq != rec.version() + 1 {
                    return Err(corrupt(format!("observation seq {} out of order", obs.seq)));
                }
                let state = rec
                    .next_state(obs.value)
                    .map_err(|e| corrupt(format!("observation {} rejected on replay: {e}", obs.seq)))?;
                rec.apply(obs, state);
            }
            (Event::Created { .. }, Some(_)) => return Err(corrupt("second created record".into())),
            (Event::Observation(_), None) => return Err(corrupt("observation before created record".into())),
        }
        good_len += read as u64;
    }
    let record = record.ok_or_else(|| corrupt("no created record".into()))?;
    if path.file_stem().and_then(|s| s.to_str()) != Some(record.session_id.to_string().as_str()) {
        return Err(corrupt("file name does not match session id".into()));
    }

    if fs::metadata(path)?.len() != good_len {
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(good_len)?;
        file.sync_all()?;
    }
    let log = OpenOptions::new().append(true).open(path)?;
    Ok((record, log))
}
