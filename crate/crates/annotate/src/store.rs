//! Campaign state: sessions, coverage and the durable event log.
//!
//! Every mutation is appended to `events.jsonl` and synced before it is
//! applied in memory, so an acknowledged answer survives a restart. A
//! snapshot of the full state is rewritten every few events to shorten
//! recovery; the log itself is never truncated.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use civet_core::metrics::{AnnotationMatrix, AnnotationRow};
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::AnnotateError;
use crate::config::Campaign;

const EVENT_LOG: &str = "events.jsonl";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Submitted,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub session_id: String,
    pub stimulus_id: String,
    pub option: String,
    pub elapsed_ms: u64,
    /// Unix time in milliseconds when the server recorded the answer.
    pub received_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub annotator_id: String,
    /// Shown to the annotator on completion.
    pub code: String,
    pub ordinal: u64,
    pub created_at: u64,
    pub stimuli: Vec<String>,
    pub answers: Vec<AnnotationRecord>,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<String>,
}

impl Session {
    pub fn cursor(&self) -> usize {
        self.answers.len()
    }

    pub fn current(&self) -> Option<&str> {
        self.stimuli.get(self.cursor()).map(String::as_str)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    SessionCreated {
        session_id: String,
        annotator_id: String,
        code: String,
        created_at: u64,
        stimuli: Vec<String>,
    },
    AnswerRecorded(AnnotationRecord),
    SessionReviewed {
        session_id: String,
        status: SessionStatus,
        reason: Option<String>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct LogEntry {
    seq: u64,
    #[serde(flatten)]
    event: Event,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
struct State {
    seq: u64,
    sessions: BTreeMap<String, Session>,
    /// Session ids in creation order.
    order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// 1-based position of the current item.
    pub index: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Next {
    Stimulus {
        stimulus_id: String,
        image_url: String,
        question: String,
        options: Vec<String>,
        progress: Progress,
    },
    Complete {
        session_code: String,
        status: SessionStatus,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub stimulus_id: String,
    pub cursor: usize,
    pub total: usize,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStatus {
    pub stimuli: usize,
    pub target: u32,
    /// Approved annotations counted toward coverage (capped at the target per stimulus).
    pub annotations: u64,
    pub required: u64,
    pub progress: String,
    /// Slots held by sessions that are active or approved.
    pub assigned: u64,
    pub sessions_active: usize,
    pub sessions_approved: usize,
    pub sessions_rejected: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incomplete {
    pub stimulus_id: String,
    pub approved: u32,
}

/// Approved votes as a matrix, plus stimuli that have not reached the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(flatten)]
    pub matrix: AnnotationMatrix,
    pub incomplete: Vec<Incomplete>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

struct Inner {
    state: State,
    /// Assigned slots per stimulus position, excluding rejected sessions.
    coverage: Vec<u32>,
    log: File,
    since_snapshot: u64,
}

pub struct Store {
    campaign: Arc<Campaign>,
    dir: PathBuf,
    inner: Mutex<Inner>,
}

impl Store {
    /// Open the campaign's data directory, recovering any earlier state.
    pub fn open(campaign: Campaign) -> Result<Self, AnnotateError> {
        let campaign = Arc::new(campaign);
        let dir = campaign.config.data_dir.clone();
        fs::create_dir_all(&dir)?;
        let mut state = match fs::read_to_string(dir.join(SNAPSHOT)) {
            Ok(text) => serde_json::from_str::<State>(&text)
                .map_err(|e| AnnotateError::Corrupt(format!("snapshot: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => State::default(),
            Err(e) => return Err(e.into()),
        };
        let log_path = dir.join(EVENT_LOG);
        let mut replayed = 0;
        if log_path.exists() {
            let text = fs::read_to_string(&log_path)?;
            // An unterminated last line was never acknowledged; cut it off.
            let valid = text.rfind('\n').map_or(0, |i| i + 1);
            if valid < text.len() {
                log::warn!("dropping truncated event at end of {}", log_path.display());
                OpenOptions::new().write(true).open(&log_path)?.set_len(valid as u64)?;
            }
            for (n, line) in text[..valid].lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LogEntry = serde_json::from_str(line)
                    .map_err(|e| AnnotateError::Corrupt(format!("{EVENT_LOG} line {}: {e}", n + 1)))?;
                if entry.seq <= state.seq {
                    continue;
                }
                if entry.seq != state.seq + 1 {
                    return Err(AnnotateError::Corrupt(format!(
                        "event sequence jumps from {} to {}",
                        state.seq, entry.seq
                    )));
                }
                apply(&campaign, &mut state, entry.event)?;
                state.seq = entry.seq;
                replayed += 1;
            }
        }
        let coverage = compute_coverage(&campaign, &state)?;
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        let store = Store {
            campaign,
            dir,
            inner: Mutex::new(Inner {
                state,
                coverage,
                log,
                since_snapshot: replayed,
            }),
        };
        {
            let mut inner = store.lock();
            // Sessions whose final answer landed before a crash still need review.
            let pending: Vec<String> = inner
                .state
                .sessions
                .values()
                .filter(|s| s.status == SessionStatus::Submitted)
                .map(|s| s.session_id.clone())
                .collect();
            for id in pending {
                store.review(&mut inner, &id)?;
            }
            if inner.since_snapshot > 0 {
                store.snapshot(&mut inner)?;
            }
        }
        Ok(store)
    }

    pub fn campaign(&self) -> &Campaign {
        &self.campaign
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Durably record `event`, then apply it.
    fn commit(&self, inner: &mut Inner, event: Event) -> Result<(), AnnotateError> {
        let entry = LogEntry {
            seq: inner.state.seq + 1,
            event,
        };
        let mut line = serde_json::to_vec(&entry).map_err(std::io::Error::from)?;
        line.push(b'\n');
        inner.log.write_all(&line)?;
        inner.log.sync_data()?;
        track_coverage(&self.campaign, &inner.state, &mut inner.coverage, &entry.event);
        apply(&self.campaign, &mut inner.state, entry.event)?;
        inner.state.seq = entry.seq;
        inner.since_snapshot += 1;
        if inner.since_snapshot >= self.campaign.config.snapshot_every.max(1) {
            self.snapshot(inner)?;
        }
        Ok(())
    }

    fn snapshot(&self, inner: &mut Inner) -> Result<(), AnnotateError> {
        let state = &inner.state;
        civet_core::manifest::atomic_write(&self.dir.join(SNAPSHOT), |w| {
            serde_json::to_writer(w, state).map_err(std::io::Error::from)?;
            Ok(())
        })?;
        inner.since_snapshot = 0;
        Ok(())
    }

    pub fn create_session(&self, annotator_id: &str) -> Result<Session, AnnotateError> {
        let annotator_id = annotator_id.trim();
        if annotator_id.is_empty() || annotator_id.len() > 256 {
            return Err(AnnotateError::Validation("annotator_id must be 1 to 256 characters".into()));
        }
        let cfg = &self.campaign.config;
        let mut inner = self.lock();
        if inner.coverage.iter().all(|&c| c >= cfg.target) {
            return Err(AnnotateError::CampaignComplete);
        }
        let mut candidates: Vec<usize> = (0..self.campaign.stimuli.len()).collect();
        // stable sort keeps id order among equal coverage
        candidates.sort_by_key(|&i| inner.coverage[i]);
        candidates.truncate(cfg.batch);
        let ordinal = inner.state.order.len() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(ordinal);
        candidates.shuffle(&mut rng);

        let session_id = loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if !inner.state.sessions.contains_key(&id) {
                break id;
            }
        };
        let event = Event::SessionCreated {
            session_id: session_id.clone(),
            annotator_id: annotator_id.to_string(),
            code: format!("{:08X}", rand::random::<u32>()),
            created_at: now_ms(),
            stimuli: candidates
                .iter()
                .map(|&i| self.campaign.stimuli[i].stimulus_id.clone())
                .collect(),
        };
        self.commit(&mut inner, event)?;
        Ok(inner.state.sessions[&session_id].clone())
    }

    pub fn session(&self, session_id: &str) -> Result<Session, AnnotateError> {
        self.lock()
            .state
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| AnnotateError::NotFound(format!("session {session_id}")))
    }

    /// The item at the session's cursor. Does not advance the cursor.
    pub fn next_stimulus(&self, session_id: &str) -> Result<Next, AnnotateError> {
        let session = self.session(session_id)?;
        let Some(id) = session.current() else {
            return Ok(Next::Complete {
                session_code: session.code,
                status: session.status,
            });
        };
        let record = self.campaign.record(id).expect("assigned stimuli are in the pool");
        Ok(Next::Stimulus {
            stimulus_id: record.stimulus_id.clone(),
            image_url: format!("/assets/{}", record.image_path),
            question: record.question.clone(),
            options: record.options.clone(),
            progress: Progress {
                index: session.cursor() + 1,
                total: session.stimuli.len(),
            },
        })
    }

    pub fn submit_answer(
        &self,
        session_id: &str,
        stimulus_id: &str,
        option: &str,
        elapsed_ms: u64,
    ) -> Result<Ack, AnnotateError> {
        let mut inner = self.lock();
        let session = inner
            .state
            .sessions
            .get(session_id)
            .ok_or_else(|| AnnotateError::NotFound(format!("session {session_id}")))?;
        if session.answers.iter().any(|a| a.stimulus_id == stimulus_id) {
            return Err(AnnotateError::Sequencing(format!("{stimulus_id} was already answered")));
        }
        match session.current() {
            None => return Err(AnnotateError::Sequencing("session is already complete".into())),
            Some(current) if current != stimulus_id => {
                return Err(AnnotateError::Sequencing(format!(
                    "expected an answer for {current}, got {stimulus_id}"
                )));
            }
            Some(_) => {}
        }
        let record = self.campaign.record(stimulus_id).expect("assigned stimuli are in the pool");
        if !record.options.iter().any(|o| o == option) {
            return Err(AnnotateError::Validation(format!(
                "{option:?} is not one of {:?}",
                record.options
            )));
        }
        let finishing = session.cursor() + 1 == session.stimuli.len();
        self.commit(
            &mut inner,
            Event::AnswerRecorded(AnnotationRecord {
                session_id: session_id.to_string(),
                stimulus_id: stimulus_id.to_string(),
                option: option.to_string(),
                elapsed_ms,
                received_at: now_ms(),
            }),
        )?;
        if finishing {
            self.review(&mut inner, session_id)?;
        }
        let session = &inner.state.sessions[session_id];
        Ok(Ack {
            session_id: session_id.to_string(),
            stimulus_id: stimulus_id.to_string(),
            cursor: session.cursor(),
            total: session.stimuli.len(),
            status: session.status,
        })
    }

    fn review(&self, inner: &mut Inner, session_id: &str) -> Result<(), AnnotateError> {
        let session = &inner.state.sessions[session_id];
        let (status, reason) = quality_control(&self.campaign, session);
        if let Some(r) = &reason {
            log::info!("session {session_id} rejected: {r}");
        }
        self.commit(
            inner,
            Event::SessionReviewed {
                session_id: session_id.to_string(),
                status,
                reason,
            },
        )
    }

    pub fn status(&self) -> CampaignStatus {
        let inner = self.lock();
        let target = self.campaign.config.target;
        let approved = approved_counts(&self.campaign, &inner.state);
        let annotations: u64 = approved.iter().map(|&c| u64::from(c.min(target))).sum();
        let required = self.campaign.required();
        let count = |st: SessionStatus| inner.state.sessions.values().filter(|s| s.status == st).count();
        CampaignStatus {
            stimuli: self.campaign.stimuli.len(),
            target,
            annotations,
            required,
            progress: format!("{annotations}/{required}"),
            assigned: inner.coverage.iter().map(|&c| u64::from(c)).sum(),
            sessions_active: count(SessionStatus::Active) + count(SessionStatus::Submitted),
            sessions_approved: count(SessionStatus::Approved),
            sessions_rejected: count(SessionStatus::Rejected),
            complete: annotations == required,
        }
    }

    /// Current assigned-slot count per stimulus id.
    pub fn coverage(&self) -> BTreeMap<String, u32> {
        let inner = self.lock();
        self.campaign
            .stimuli
            .iter()
            .zip(&inner.coverage)
            .map(|(r, &c)| (r.stimulus_id.clone(), c))
            .collect()
    }

    /// Every recorded answer, approved or not, in log order.
    pub fn records(&self) -> Vec<AnnotationRecord> {
        let inner = self.lock();
        inner
            .state
            .order
            .iter()
            .flat_map(|id| inner.state.sessions[id].answers.clone())
            .collect()
    }

    /// Vote matrix over approved sessions only. Each stimulus keeps at most
    /// `target` votes (earliest sessions first); stimuli short of the target
    /// are listed as incomplete instead of entering the matrix.
    pub fn aggregate(&self) -> Result<Aggregate, AnnotateError> {
        let inner = self.lock();
        let campaign = &self.campaign;
        let target = campaign.config.target;
        let col: HashMap<&str, usize> = campaign
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut counts = vec![vec![0u64; campaign.categories.len()]; campaign.stimuli.len()];
        let mut votes = vec![0u32; campaign.stimuli.len()];
        for id in &inner.state.order {
            let session = &inner.state.sessions[id];
            if session.status != SessionStatus::Approved {
                continue;
            }
            for a in &session.answers {
                let pos = campaign.position(&a.stimulus_id).expect("validated on apply");
                if votes[pos] < target {
                    votes[pos] += 1;
                    counts[pos][col[a.option.as_str()]] += 1;
                }
            }
        }
        let mut items = Vec::new();
        let mut incomplete = Vec::new();
        for (pos, record) in campaign.stimuli.iter().enumerate() {
            if votes[pos] == target {
                items.push(AnnotationRow {
                    stimulus_id: record.stimulus_id.clone(),
                    counts: std::mem::take(&mut counts[pos]),
                });
            } else {
                incomplete.push(Incomplete {
                    stimulus_id: record.stimulus_id.clone(),
                    approved: votes[pos],
                });
            }
        }
        Ok(Aggregate {
            matrix: AnnotationMatrix::new(campaign.categories.clone(), items)?,
            incomplete,
        })
    }
}

/// Approve a finished session iff every gold item (object in a corner cell)
/// matches the ground truth and the median answer time reaches the floor.
pub fn quality_control(campaign: &Campaign, session: &Session) -> (SessionStatus, Option<String>) {
    let mut wrong_gold = Vec::new();
    for a in &session.answers {
        let record = campaign.record(&a.stimulus_id).expect("assigned stimuli are in the pool");
        if record.world.primary().cell.is_corner() && a.option != record.ground_truth {
            wrong_gold.push(a.stimulus_id.clone());
        }
    }
    if !wrong_gold.is_empty() {
        return (
            SessionStatus::Rejected,
            Some(format!("gold items answered incorrectly: {}", wrong_gold.join(", "))),
        );
    }
    let median = median_ms(session.answers.iter().map(|a| a.elapsed_ms).collect());
    if median < campaign.config.min_median_ms as f64 {
        return (
            SessionStatus::Rejected,
            Some(format!(
                "median answer time {median} ms is below {} ms",
                campaign.config.min_median_ms
            )),
        );
    }
    (SessionStatus::Approved, None)
}

fn median_ms(mut values: Vec<u64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

fn apply(campaign: &Campaign, state: &mut State, event: Event) -> Result<(), AnnotateError> {
    match event {
        Event::SessionCreated {
            session_id,
            annotator_id,
            code,
            created_at,
            stimuli,
        } => {
            if let Some(bad) = stimuli.iter().find(|s| campaign.position(s).is_none()) {
                return Err(AnnotateError::Corrupt(format!("session {session_id} references unknown stimulus {bad}")));
            }
            let session = Session {
                session_id: session_id.clone(),
                annotator_id,
                code,
                ordinal: state.order.len() as u64,
                created_at,
                stimuli,
                answers: Vec::new(),
                status: SessionStatus::Active,
                review: None,
            };
            state.order.push(session_id.clone());
            state.sessions.insert(session_id, session);
        }
        Event::AnswerRecorded(record) => {
            let session = state
                .sessions
                .get_mut(&record.session_id)
                .ok_or_else(|| AnnotateError::Corrupt(format!("answer for unknown session {}", record.session_id)))?;
            if session.current() != Some(record.stimulus_id.as_str()) {
                return Err(AnnotateError::Corrupt(format!(
                    "answer for {} out of sequence in session {}",
                    record.stimulus_id, record.session_id
                )));
            }
            session.answers.push(record);
            if session.current().is_none() {
                session.status = SessionStatus::Submitted;
            }
        }
        Event::SessionReviewed {
            session_id,
            status,
            reason,
        } => {
            let session = state
                .sessions
                .get_mut(&session_id)
                .ok_or_else(|| AnnotateError::Corrupt(format!("review for unknown session {session_id}")))?;
            session.status = status;
            session.review = reason;
        }
    }
    Ok(())
}

fn compute_coverage(campaign: &Campaign, state: &State) -> Result<Vec<u32>, AnnotateError> {
    let mut coverage = vec![0u32; campaign.stimuli.len()];
    for session in state.sessions.values() {
        if session.status == SessionStatus::Rejected {
            continue;
        }
        for id in &session.stimuli {
            let pos = campaign
                .position(id)
                .ok_or_else(|| AnnotateError::Corrupt(format!("unknown stimulus {id}")))?;
            coverage[pos] += 1;
        }
    }
    Ok(coverage)
}

/// Incremental form of [`compute_coverage`], called before `event` is applied.
fn track_coverage(campaign: &Campaign, state: &State, coverage: &mut [u32], event: &Event) {
    match event {
        Event::SessionCreated { stimuli, .. } => {
            for id in stimuli {
                if let Some(pos) = campaign.position(id) {
                    coverage[pos] += 1;
                }
            }
        }
        Event::SessionReviewed {
            session_id,
            status: SessionStatus::Rejected,
            ..
        } => {
            if let Some(s) = state.sessions.get(session_id).filter(|s| s.status != SessionStatus::Rejected) {
                for id in &s.stimuli {
                    if let Some(pos) = campaign.position(id) {
                        coverage[pos] -= 1;
                    }
                }
            }
        }
        _ => {}
    }
}

fn approved_counts(campaign: &Campaign, state: &State) -> Vec<u32> {
    let mut counts = vec![0u32; campaign.stimuli.len()];
    for s in state.sessions.values().filter(|s| s.status == SessionStatus::Approved) {
        for a in &s.answers {
            if let Some(pos) = campaign.position(&a.stimulus_id) {
                counts[pos] += 1;
            }
        }
    }
    counts
}
