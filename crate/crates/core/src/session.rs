//! Per-run trajectory state shared by concurrent request handlers.
//!
//! The outer map is behind a read/write lock that is only held long enough
//! to find or insert an entry; each session then has its own mutex, so
//! operations on one session are linearizable and distinct sessions never
//! contend on anything but that short map lookup.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chat::ChatMessage;
use crate::trajectory::{Instruction, ThoughtStep, Trajectory};

pub const DEFAULT_SESSION_HEADER: &str = "X-Aligner-Session";
pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("session {0} already exists")]
    DuplicateSession(SessionId),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("step index {found} does not follow step count {expected}")]
    IndexGap { expected: usize, found: usize },
    #[error("session {0} has no step awaiting an observation")]
    NothingPending(SessionId),
    #[error("session id must be nonempty")]
    EmptyId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn new(value: impl Into<String>) -> Result<Self, SessionError> {
        let value = value.into();
        if value.is_empty() {
            return Err(SessionError::EmptyId);
        }
        Ok(Self(value))
    }

    /// Correlation key for clients that do not send a session header.
    pub fn derive(client: &str, first_user_message: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(client.as_bytes());
        hasher.update([0u8]);
        hasher.update(first_user_message.as_bytes());
        let digest = hasher.finalize();
        let hex: String = digest[..16].iter().map(|b| format!("{b:02x}")).collect();
        Self(format!("derived-{hex}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub id: SessionId,
    pub trajectory: Trajectory,
    /// Messages that preceded the first step (system prompt, tool list,
    /// the user's request), replayed when the upstream is asked to act.
    pub context: Vec<ChatMessage>,
    pub created_at: Instant,
    pub last_active: Instant,
    pub step_count: usize,
}

impl SessionState {
    fn touch(&mut self) {
        let now = Instant::now();
        if now > self.last_active {
            self.last_active = now;
        }
    }
}

#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<SessionId, Arc<Mutex<SessionState>>>>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &SessionId) -> bool {
        self.sessions.read().unwrap().contains_key(id)
    }

    fn entry(&self, id: &SessionId) -> Result<Arc<Mutex<SessionState>>, SessionError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.clone()))
    }

    pub fn create_session(
        &self,
        id: SessionId,
        instruction: Instruction,
    ) -> Result<SessionState, SessionError> {
        let mut map = self.sessions.write().unwrap();
        if map.contains_key(&id) {
            return Err(SessionError::DuplicateSession(id));
        }
        let now = Instant::now();
        let state = SessionState {
            id: id.clone(),
            trajectory: Trajectory::new(instruction),
            context: Vec::new(),
            created_at: now,
            last_active: now,
            step_count: 0,
        };
        map.insert(id, Arc::new(Mutex::new(state.clone())));
        Ok(state)
    }

    /// Return the existing session or register a new one.
    pub fn get_or_create(&self, id: SessionId, instruction: Instruction) -> SessionState {
        if let Ok(entry) = self.entry(&id) {
            let mut state = entry.lock().unwrap();
            state.touch();
            return state.clone();
        }
        match self.create_session(id.clone(), instruction) {
            Ok(state) => state,
            // Lost a race with another handler creating the same session.
            Err(_) => self.get(&id).expect("session was just created"),
        }
    }

    pub fn get(&self, id: &SessionId) -> Result<SessionState, SessionError> {
        Ok(self.entry(id)?.lock().unwrap().clone())
    }

    pub fn append_step(
        &self,
        id: &SessionId,
        step: ThoughtStep,
    ) -> Result<SessionState, SessionError> {
        let entry = self.entry(id)?;
        let mut state = entry.lock().unwrap();
        if step.index != state.step_count {
            return Err(SessionError::IndexGap {
                expected: state.step_count,
                found: step.index,
            });
        }
        state.trajectory.steps.push(step);
        state.step_count += 1;
        state.touch();
        Ok(state.clone())
    }

    /// Attach the environment's response to the most recent step.
    pub fn record_observation(
        &self,
        id: &SessionId,
        observation: impl Into<String>,
    ) -> Result<SessionState, SessionError> {
        let entry = self.entry(id)?;
        let mut state = entry.lock().unwrap();
        match state.trajectory.steps.last_mut() {
            Some(step) if step.observation.is_none() => {
                step.observation = Some(observation.into());
            }
            _ => return Err(SessionError::NothingPending(id.clone())),
        }
        state.touch();
        Ok(state.clone())
    }

    pub fn set_final_answer(
        &self,
        id: &SessionId,
        thought: impl Into<String>,
        answer: impl Into<String>,
    ) -> Result<SessionState, SessionError> {
        let entry = self.entry(id)?;
        let mut state = entry.lock().unwrap();
        state.trajectory.final_thought = Some(thought.into());
        state.trajectory.final_answer = Some(answer.into());
        state.touch();
        Ok(state.clone())
    }

    /// `(thought, observation)` for every observed step, in step order.
    pub fn history(&self, id: &SessionId) -> Result<Vec<(String, String)>, SessionError> {
        Ok(self.entry(id)?.lock().unwrap().trajectory.history())
    }

    /// Run `f` with the session locked, so a read-modify-write sequence is atomic.
    pub fn with_session<R>(
        &self,
        id: &SessionId,
        f: impl FnOnce(&mut SessionState) -> R,
    ) -> Result<R, SessionError> {
        let entry = self.entry(id)?;
        let mut state = entry.lock().unwrap();
        Ok(f(&mut state))
    }

    pub fn remove(&self, id: &SessionId) -> Option<SessionState> {
        self.sessions
            .write()
            .unwrap()
            .remove(id)
            .map(|e| e.lock().unwrap().clone())
    }

    /// Remove every session whose `last_active + ttl` is strictly before `now`.
    pub fn evict_expired(&self, now: Instant, ttl: Duration) -> usize {
        let mut map = self.sessions.write().unwrap();
        let before = map.len();
        map.retain(|_, entry| {
            let state = entry.lock().unwrap();
            state.last_active + ttl >= now
        });
        before - map.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid(s: &str) -> SessionId {
        SessionId::new(s).unwrap()
    }

    fn instruction() -> Instruction {
        Instruction::new("i", "Tidy my downloads folder").unwrap()
    }

    #[test]
    fn create_and_duplicate() {
        let store = SessionStore::new();
        let state = store.create_session(sid("a"), instruction()).unwrap();
        assert_eq!(state.step_count, 0);
        assert!(state.trajectory.steps.is_empty());
        assert_eq!(
            store.create_session(sid("a"), instruction()).unwrap_err(),
            SessionError::DuplicateSession(sid("a"))
        );
    }

    #[test]
    fn empty_id_rejected() {
        assert_eq!(SessionId::new("").unwrap_err(), SessionError::EmptyId);
    }

    #[test]
    fn derived_ids_are_stable() {
        let a = SessionId::derive("127.0.0.1", "hello");
        assert_eq!(a, SessionId::derive("127.0.0.1", "hello"));
        assert_ne!(a, SessionId::derive("127.0.0.2", "hello"));
        assert_ne!(a, SessionId::derive("127.0.0.1", "hello!"));
    }

    #[test]
    fn append_counts_and_rejects_gaps() {
        let store = SessionStore::new();
        store.create_session(sid("a"), instruction()).unwrap();
        store
            .append_step(&sid("a"), ThoughtStep::new(0, "t0", "A", "{}").observed("o0"))
            .unwrap();
        let s = store
            .append_step(&sid("a"), ThoughtStep::new(1, "t1", "B", "{}").observed("o1"))
            .unwrap();
        assert_eq!(s.step_count, 2);
        assert_eq!(s.step_count, s.trajectory.steps.len());

        store.create_session(sid("b"), instruction()).unwrap();
        assert_eq!(
            store
                .append_step(&sid("b"), ThoughtStep::new(2, "t", "A", "{}"))
                .unwrap_err(),
            SessionError::IndexGap {
                expected: 0,
                found: 2
            }
        );
        assert!(matches!(
            store.append_step(&sid("zzz"), ThoughtStep::new(0, "t", "A", "{}")),
            Err(SessionError::UnknownSession(_))
        ));
    }

    #[test]
    fn history_projection() {
        let store = SessionStore::new();
        store.create_session(sid("a"), instruction()).unwrap();
        assert!(store.history(&sid("a")).unwrap().is_empty());
        store
            .append_step(&sid("a"), ThoughtStep::new(0, "t0", "A", "{}").observed("o0"))
            .unwrap();
        store
            .append_step(&sid("a"), ThoughtStep::new(1, "t1", "B", "{}").observed("o1"))
            .unwrap();
        store
            .append_step(&sid("a"), ThoughtStep::new(2, "t2", "C", "{}"))
            .unwrap();
        let h = store.history(&sid("a")).unwrap();
        assert_eq!(
            h,
            vec![("t0".into(), "o0".into()), ("t1".into(), "o1".into())]
        );
        store.record_observation(&sid("a"), "o2").unwrap();
        assert_eq!(store.history(&sid("a")).unwrap().len(), 3);
        assert!(matches!(
            store.record_observation(&sid("a"), "again"),
            Err(SessionError::NothingPending(_))
        ));
    }

    #[test]
    fn eviction_boundaries() {
        let store = SessionStore::new();
        let ttl = Duration::from_secs(60);
        assert_eq!(store.evict_expired(Instant::now(), ttl), 0);

        let stale = store.create_session(sid("stale"), instruction()).unwrap();
        std::thread::sleep(Duration::from_millis(5));
        let fresh = store.create_session(sid("fresh"), instruction()).unwrap();

        // Exactly at the boundary: retained.
        assert_eq!(store.evict_expired(stale.last_active + ttl, ttl), 0);
        // Past the stale boundary but not the fresh one.
        let now = stale.last_active + ttl + Duration::from_millis(1);
        assert!(fresh.last_active + ttl >= now);
        assert_eq!(store.evict_expired(now, ttl), 1);
        assert!(store.contains(&sid("fresh")));
        assert!(!store.contains(&sid("stale")));
    }

    #[test]
    fn last_active_never_precedes_creation() {
        let store = SessionStore::new();
        store.create_session(sid("a"), instruction()).unwrap();
        let s = store
            .append_step(&sid("a"), ThoughtStep::new(0, "t", "A", "{}"))
            .unwrap();
        assert!(s.last_active >= s.created_at);
    }
}
