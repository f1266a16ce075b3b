//! Transport-independent session handling.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use mzi_core::env::{Env, EnvState, ACTION_COUNT};
use mzi_core::harness::{write_jsonl_line, EpisodeRecord, StepRecord};
use mzi_core::optics::Observation;

use crate::protocol::{frames_to_base64, ClientMessage, ServerMessage};

pub type SessionId = u64;

struct Session {
    state: EnvState,
    record: EpisodeRecord,
    last_active: Instant,
}

/// Shared state of the server: the environment, the session registry and
/// the record sink. Each session is driven by one connection at a time.
pub struct PlayService {
    env: Env,
    cap: usize,
    idle_timeout: Duration,
    sessions: Mutex<HashMap<SessionId, Session>>,
    next_id: AtomicU64,
    next_episode: AtomicUsize,
    records: Option<Mutex<File>>,
}

impl PlayService {
    pub fn new(env: Env, cap: usize, idle_timeout: Duration) -> Self {
        Self {
            env,
            cap,
            idle_timeout,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            next_episode: AtomicUsize::new(0),
            records: None,
        }
    }

    /// Appends every finished or abandoned episode to `path` as JSONL.
    pub fn with_records(mut self, path: &Path) -> std::io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        self.records = Some(Mutex::new(f));
        Ok(self)
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn idle_timeout(&self) -> Duration {
        self.idle_timeout
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Handles one message for the connection whose session slot is
    /// `slot`, returning the replies in order.
    pub fn handle(&self, slot: &mut Option<SessionId>, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Reset { seed } => vec![self.reset(slot, seed)],
            ClientMessage::Action { action_id } => self.action(slot, action_id),
            ClientMessage::Close => {
                self.close(slot);
                Vec::new()
            }
        }
    }

    fn reset(&self, slot: &mut Option<SessionId>, seed: Option<u64>) -> ServerMessage {
        let seed = seed.unwrap_or_else(rand::random);
        let (state, obs) = self.env.reset(seed);
        let episode = self.next_episode.fetch_add(1, Ordering::Relaxed);
        let mut record = EpisodeRecord::new(episode, seed);
        let info = self.env.info(&state, 0.0);
        record.steps.push(StepRecord::reset(episode, seed, &info));
        let session = Session { state, record, last_active: Instant::now() };

        let mut sessions = self.sessions.lock().unwrap();
        match slot.and_then(|id| sessions.get_mut(&id)) {
            Some(existing) => {
                let old = std::mem::replace(existing, session);
                drop(sessions);
                self.save(&old.record);
            }
            None => {
                if sessions.len() >= self.cap {
                    return ServerMessage::error("capacity", format!("session limit of {} reached", self.cap));
                }
                let id = self.next_id.fetch_add(1, Ordering::Relaxed);
                sessions.insert(id, session);
                *slot = Some(id);
            }
        }
        observation_message(0, info.visibility, None, false, &obs, seed)
    }

    fn action(&self, slot: &mut Option<SessionId>, action_id: i64) -> Vec<ServerMessage> {
        let mut sessions = self.sessions.lock().unwrap();
        let Some(session) = slot.and_then(|id| sessions.get_mut(&id)) else {
            let code = if slot.is_some() { "session_expired" } else { "no_session" };
            *slot = None;
            return vec![ServerMessage::error(code, "send a reset message first")];
        };
        session.last_active = Instant::now();
        if !(0..ACTION_COUNT as i64).contains(&action_id) {
            return vec![ServerMessage::error("bad_action", format!("action_id must be in 0..{ACTION_COUNT}, got {action_id}"))];
        }
        let action = action_id as usize;
        let result = match self.env.step(&mut session.state, action) {
            Ok(r) => r,
            Err(mzi_core::Error::EpisodeDone(_)) => {
                return vec![ServerMessage::error("episode_done", "episode finished; send reset to start another")]
            }
            Err(e) => return vec![ServerMessage::error("internal", e.to_string())],
        };
        let t = session.state.step_index;
        let seed = session.record.seed;
        session.record.steps.push(StepRecord::step(session.record.episode, seed, t, action, &result));
        let mut out = vec![observation_message(
            t,
            result.info.visibility,
            Some(result.reward),
            result.done,
            &result.observation,
            seed,
        )];
        if result.done {
            out.push(ServerMessage::Summary {
                best_visibility: session.record.best_visibility(),
                episode_return: session.record.episode_return(),
            });
            let record = session.record.clone();
            drop(sessions);
            self.save(&record);
        }
        out
    }

    /// Ends the connection's session, if any, saving an unfinished episode.
    pub fn close(&self, slot: &mut Option<SessionId>) {
        if let Some(id) = slot.take() {
            let removed = self.sessions.lock().unwrap().remove(&id);
            if let Some(s) = removed {
                if !self.finished(&s) {
                    self.save(&s.record);
                }
            }
        }
    }

    fn finished(&self, s: &Session) -> bool {
        s.state.step_index >= self.env.config().episode_length
    }

    /// Drops sessions idle for longer than the timeout; returns how many.
    pub fn reap_idle(&self) -> usize {
        let now = Instant::now();
        let mut expired = Vec::new();
        {
            let mut sessions = self.sessions.lock().unwrap();
            sessions.retain(|_, s| {
                let keep = now.duration_since(s.last_active) < self.idle_timeout;
                if !keep {
                    expired.push(s.record.clone());
                }
                keep
            });
        }
        for r in &expired {
            if r.steps.len() <= self.env.config().episode_length {
                self.save(r);
            }
        }
        expired.len()
    }

    fn save(&self, record: &EpisodeRecord) {
        if let Some(f) = &self.records {
            let mut f = f.lock().unwrap();
            for s in &record.steps {
                // Best effort: a full disk must not take the session down.
                let _ = write_jsonl_line(&mut *f, s);
            }
            let _ = f.flush();
        }
    }
}

fn observation_message(
    step: usize,
    visibility: f64,
    reward: Option<f64>,
    done: bool,
    obs: &Observation<f32>,
    seed: u64,
) -> ServerMessage {
    ServerMessage::Observation {
        step,
        visibility,
        reward,
        done,
        frames: frames_to_base64(obs),
        seed,
    }
}

/// Shared handle used by the HTTP layer.
pub type SharedService = Arc<PlayService>;
