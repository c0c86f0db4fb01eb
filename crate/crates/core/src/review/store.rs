//! Event-sourced review queue.
//!
//! Every change is one line in `events.jsonl`; the in-memory view is the
//! fold of those events. `snapshot.json` caches the fold so that opening a
//! long log does not replay it from the start.

use crate::clock::{Clock, SystemClock};
use crate::dialogue::DialogueSink;
use crate::knowledge::KnowledgeSink;
use crate::model::{Dialogue, DialogueStage, KnowledgeItem, KnowledgeStatus, Validate};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use thiserror::Error;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Dialogue,
    Knowledge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Accepted,
    Rejected,
    Edited,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        self != TaskStatus::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "item", rename_all = "snake_case")]
pub enum Payload {
    Dialogue(Dialogue),
    Knowledge(KnowledgeItem),
}

impl Payload {
    pub fn kind(&self) -> TaskKind {
        match self {
            Payload::Dialogue(_) => TaskKind::Dialogue,
            Payload::Knowledge(_) => TaskKind::Knowledge,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Payload::Dialogue(d) => &d.id,
            Payload::Knowledge(k) => &k.id,
        }
    }

    pub fn flags(&self) -> &[String] {
        match self {
            Payload::Dialogue(d) => &d.flags,
            Payload::Knowledge(k) => &k.flags,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let v = match self {
            Payload::Dialogue(d) => d.violations(),
            Payload::Knowledge(k) => k.violations(),
        };
        v.into_iter().map(|v| v.to_string()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept,
    Reject,
    Edit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub reviewer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Replacement item, same kind and id as the task's payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_payload: Option<Payload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAudit {
    pub action: String,
    pub actor: String,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub id: String,
    pub kind: TaskKind,
    /// Id of the dialogue or knowledge item under review.
    pub payload_ref: String,
    pub status: TaskStatus,
    /// Bumped by every decision; callers echo it back to detect conflicts.
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub flags: Vec<String>,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_payload: Option<Payload>,
    pub audit: Vec<TaskAudit>,
}

impl ReviewTask {
    /// What gets exported: the edit when there is one.
    pub fn effective_payload(&self) -> &Payload {
        self.edit_payload.as_ref().unwrap_or(&self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Enqueued { task_id: String, payload: Payload, at: DateTime<Utc> },
    Decided { task_id: String, decision: Decision, at: DateTime<Utc> },
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("task {0} not found")]
    NotFound(String),
    #[error("task {task_id} is at version {actual}, not {expected}")]
    VersionConflict { task_id: String, expected: u64, actual: u64 },
    #[error("task {task_id} was already decided ({status:?})")]
    AlreadyDecided { task_id: String, status: TaskStatus },
    #[error("invalid decision: {0}")]
    Invalid(String),
    #[error("invalid cursor")]
    BadCursor,
    #[error("{0}")]
    Precondition(String),
    #[error("review store: {0}")]
    Io(#[from] io::Error),
    #[error("review store: {0}")]
    Corrupt(String),
}

/// The materialized view. Equal logs fold to equal states.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreState {
    /// In enqueue order.
    pub tasks: Vec<ReviewTask>,
    #[serde(skip)]
    by_id: HashMap<String, usize>,
    #[serde(skip)]
    by_payload: HashMap<(TaskKind, String), usize>,
}

fn task_id(n: usize) -> String {
    format!("task-{n:06}")
}

impl StoreState {
    fn reindex(&mut self) {
        self.by_id = self.tasks.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();
        self.by_payload = self.tasks.iter().enumerate().map(|(i, t)| ((t.kind, t.payload_ref.clone()), i)).collect();
    }

    pub fn get(&self, id: &str) -> Option<&ReviewTask> {
        self.by_id.get(id).map(|i| &self.tasks[*i])
    }

    fn find_payload(&self, kind: TaskKind, id: &str) -> Option<&ReviewTask> {
        self.by_payload.get(&(kind, id.to_string())).map(|i| &self.tasks[*i])
    }

    /// Checks a decision without applying it; on success returns the task
    /// as it would be afterwards.
    fn decided(&self, task_id: &str, d: &Decision, at: DateTime<Utc>) -> Result<ReviewTask, ReviewError> {
        let task = self.get(task_id).ok_or_else(|| ReviewError::NotFound(task_id.into()))?;
        if task.status.is_terminal() {
            return Err(ReviewError::AlreadyDecided { task_id: task_id.into(), status: task.status });
        }
        if d.reviewer_id.trim().is_empty() {
            return Err(ReviewError::Invalid("reviewer_id is required".into()));
        }
        let mut t = task.clone();
        let (status, target) = match d.action {
            Action::Accept => (TaskStatus::Accepted, Some(t.payload.clone())),
            Action::Reject => (TaskStatus::Rejected, None),
            Action::Edit => {
                let edit = d.edit_payload.clone().ok_or_else(|| ReviewError::Invalid("edit requires edit_payload".into()))?;
                if edit.kind() != t.kind || edit.id() != t.payload_ref {
                    return Err(ReviewError::Invalid(format!("edit_payload must be {:?} {}", t.kind, t.payload_ref)));
                }
                (TaskStatus::Edited, Some(edit))
            }
        };
        if d.action != Action::Edit && d.edit_payload.is_some() {
            return Err(ReviewError::Invalid("edit_payload is only allowed with edit".into()));
        }
        let actor = format!("reviewer:{}", d.reviewer_id);
        match target {
            Some(mut p) => {
                approve(&mut p, at, &actor);
                let v = p.violations();
                if !v.is_empty() {
                    return Err(ReviewError::Invalid(v.join("; ")));
                }
                if d.action == Action::Edit {
                    t.edit_payload = Some(p);
                } else {
                    t.payload = p;
                }
            }
            None => reject(&mut t.payload, at, &actor, d.note.as_deref()),
        }
        t.status = status;
        t.version += 1;
        t.decided_by = Some(d.reviewer_id.clone());
        t.decided_at = Some(at);
        t.note = d.note.clone();
        let action = match d.action {
            Action::Accept => "accept",
            Action::Reject => "reject",
            Action::Edit => "edit",
        };
        t.audit.push(TaskAudit { action: action.into(), actor: d.reviewer_id.clone(), at, note: d.note.clone() });
        Ok(t)
    }

    /// Folds one event. Events that would be refused live are refused here
    /// too, so a log never folds differently from how it was written.
    pub fn apply(&mut self, event: &Event) -> Result<(), ReviewError> {
        match event {
            Event::Enqueued { task_id: id, payload, at } => {
                if self.by_id.contains_key(id) || self.find_payload(payload.kind(), payload.id()).is_some() {
                    return Err(ReviewError::Corrupt(format!("duplicate enqueue of {id}")));
                }
                let task = ReviewTask {
                    id: id.clone(),
                    kind: payload.kind(),
                    payload_ref: payload.id().to_string(),
                    status: TaskStatus::Pending,
                    version: 0,
                    decided_by: None,
                    decided_at: None,
                    note: None,
                    flags: payload.flags().to_vec(),
                    payload: payload.clone(),
                    edit_payload: None,
                    audit: vec![TaskAudit { action: "enqueue".into(), actor: "pipeline".into(), at: *at, note: None }],
                };
                let i = self.tasks.len();
                self.by_id.insert(id.clone(), i);
                self.by_payload.insert((task.kind, task.payload_ref.clone()), i);
                self.tasks.push(task);
            }
            Event::Decided { task_id, decision, at } => {
                let t = self.decided(task_id, decision, *at)?;
                let i = self.by_id[task_id];
                self.tasks[i] = t;
            }
        }
        Ok(())
    }

    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, ReviewError> {
        let mut s = Self::default();
        for e in events {
            s.apply(e)?;
        }
        Ok(s)
    }
}

fn approve(p: &mut Payload, at: DateTime<Utc>, actor: &str) {
    match p {
        Payload::Dialogue(d) => d.advance(DialogueStage::Approved, at, actor),
        Payload::Knowledge(k) => k.status = KnowledgeStatus::Approved,
    }
}

fn reject(p: &mut Payload, at: DateTime<Utc>, actor: &str, note: Option<&str>) {
    match p {
        Payload::Dialogue(d) => {
            d.reject_reason = Some(note.unwrap_or("rejected in review").to_string());
            d.advance(DialogueStage::Rejected, at, actor);
        }
        Payload::Knowledge(k) => k.status = KnowledgeStatus::Rejected,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFilter {
    pub status: Option<TaskStatus>,
    pub kind: Option<TaskKind>,
    pub flag: Option<String>,
}

impl TaskFilter {
    pub fn matches(&self, t: &ReviewTask) -> bool {
        self.status.is_none_or(|s| s == t.status)
            && self.kind.is_none_or(|k| k == t.kind)
            && self.flag.as_ref().is_none_or(|f| t.flags.contains(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page {
    pub tasks: Vec<ReviewTask>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
}

pub const DEFAULT_PAGE_SIZE: usize = 50;

fn encode_cursor(pos: usize) -> String {
    hex::encode(format!("after:{pos}"))
}

fn decode_cursor(c: &str) -> Result<usize, ReviewError> {
    let raw = hex::decode(c).map_err(|_| ReviewError::BadCursor)?;
    let s = String::from_utf8(raw).map_err(|_| ReviewError::BadCursor)?;
    s.strip_prefix("after:").and_then(|n| n.parse().ok()).ok_or(ReviewError::BadCursor)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub total: usize,
    pub by_status: BTreeMap<TaskStatus, usize>,
    pub by_kind: BTreeMap<TaskKind, usize>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    events: usize,
    tasks: Vec<ReviewTask>,
}

struct Inner {
    state: StoreState,
    log: Option<File>,
    events: usize,
}

/// Shared review queue. Reads take the lock briefly; writes append to the
/// log before touching the view.
pub struct ReviewStore {
    dir: Option<PathBuf>,
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
}

impl ReviewStore {
    /// A store with no backing files.
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self { dir: None, inner: Mutex::new(Inner { state: StoreState::default(), log: None, events: 0 }), clock }
    }

    pub fn open(dir: &Path) -> Result<Self, ReviewError> {
        Self::open_with_clock(dir, Arc::new(SystemClock))
    }

    pub fn open_with_clock(dir: &Path, clock: Arc<dyn Clock>) -> Result<Self, ReviewError> {
        std::fs::create_dir_all(dir)?;
        let events_path = dir.join(EVENTS_FILE);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&events_path)?;
        let mut bytes = Vec::new();
        file.seek(SeekFrom::Start(0))?;
        file.read_to_end(&mut bytes)?;
        let mut events = Vec::new();
        let mut good = 0usize;
        let mut pos = 0usize;
        while let Some(nl) = bytes[pos..].iter().position(|b| *b == b'\n') {
            let line = &bytes[pos..pos + nl];
            pos += nl + 1;
            if line.iter().all(u8::is_ascii_whitespace) {
                good = pos;
                continue;
            }
            match serde_json::from_slice::<Event>(line) {
                Ok(e) => {
                    events.push(e);
                    good = pos;
                }
                Err(e) => {
                    log::warn!("{}: stopping at unreadable event: {e}", events_path.display());
                    break;
                }
            }
        }
        if good < bytes.len() {
            log::warn!("{}: dropping {} trailing bytes", events_path.display(), bytes.len() - good);
            file.set_len(good as u64)?;
        }

        let (mut state, from) = match load_snapshot(&dir.join(SNAPSHOT_FILE)) {
            Some(s) if s.events <= events.len() => {
                let mut st = StoreState { tasks: s.tasks, ..Default::default() };
                st.reindex();
                (st, s.events)
            }
            _ => (StoreState::default(), 0),
        };
        for e in &events[from..] {
            state.apply(e)?;
        }
        let n = events.len();
        Ok(Self { dir: Some(dir.to_path_buf()), inner: Mutex::new(Inner { state, log: Some(file), events: n }), clock })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn commit(inner: &mut Inner, event: &Event) -> Result<(), ReviewError> {
        if let Some(f) = inner.log.as_mut() {
            let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.flush()?;
        }
        inner.state.apply(event).expect("event was checked before commit");
        inner.events += 1;
        Ok(())
    }

    /// Adds a pending task unless the item is already queued. Returns the
    /// task id and whether it was created now.
    pub fn enqueue(&self, payload: Payload) -> Result<(String, bool), ReviewError> {
        match &payload {
            Payload::Dialogue(d) if d.stage != DialogueStage::Refined => {
                return Err(ReviewError::Precondition(format!("{}: only refined dialogues can be queued", d.id)));
            }
            Payload::Knowledge(k) if k.status != KnowledgeStatus::Adjudicated => {
                return Err(ReviewError::Precondition(format!("{}: only adjudicated items can be queued", k.id)));
            }
            _ => {}
        }
        let mut inner = self.lock();
        if let Some(t) = inner.state.find_payload(payload.kind(), payload.id()) {
            return Ok((t.id.clone(), false));
        }
        let id = task_id(inner.state.tasks.len() + 1);
        let event = Event::Enqueued { task_id: id.clone(), payload, at: self.clock.now() };
        Self::commit(&mut inner, &event)?;
        Ok((id, true))
    }

    /// Applies a decision if the task is still at `expected_version`.
    pub fn decide(&self, task_id: &str, decision: Decision, expected_version: u64) -> Result<ReviewTask, ReviewError> {
        let mut inner = self.lock();
        let task = inner.state.get(task_id).ok_or_else(|| ReviewError::NotFound(task_id.into()))?;
        if task.version != expected_version {
            return Err(ReviewError::VersionConflict {
                task_id: task_id.into(),
                expected: expected_version,
                actual: task.version,
            });
        }
        let at = self.clock.now();
        let updated = inner.state.decided(task_id, &decision, at)?;
        let event = Event::Decided { task_id: task_id.into(), decision, at };
        Self::commit(&mut inner, &event)?;
        debug_assert_eq!(inner.state.get(task_id), Some(&updated));
        Ok(updated)
    }

    pub fn get(&self, task_id: &str) -> Option<ReviewTask> {
        self.lock().state.get(task_id).cloned()
    }

    /// Tasks matching `filter` in enqueue order, starting after `cursor`.
    pub fn list(&self, filter: &TaskFilter, cursor: Option<&str>, limit: usize) -> Result<Page, ReviewError> {
        let start = cursor.map(decode_cursor).transpose()?.unwrap_or(0);
        let inner = self.lock();
        if start > inner.state.tasks.len() {
            return Err(ReviewError::BadCursor);
        }
        let limit = limit.max(1);
        let mut tasks = Vec::new();
        let mut next_cursor = None;
        for (i, t) in inner.state.tasks.iter().enumerate().skip(start) {
            if !filter.matches(t) {
                continue;
            }
            if tasks.len() == limit {
                next_cursor = Some(encode_cursor(i));
                break;
            }
            tasks.push(t.clone());
        }
        Ok(Page { tasks, next_cursor })
    }

    pub fn stats(&self) -> Stats {
        let inner = self.lock();
        let mut s = Stats { total: inner.state.tasks.len(), ..Default::default() };
        for t in &inner.state.tasks {
            *s.by_status.entry(t.status).or_default() += 1;
            *s.by_kind.entry(t.kind).or_default() += 1;
        }
        s
    }

    /// A copy of the current view.
    pub fn state(&self) -> StoreState {
        self.lock().state.clone()
    }

    /// Every event in the log, in order.
    pub fn events(&self) -> Result<Vec<Event>, ReviewError> {
        let Some(dir) = &self.dir else {
            return Err(ReviewError::Precondition("in-memory store has no log".into()));
        };
        let text = std::fs::read_to_string(dir.join(EVENTS_FILE))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| ReviewError::Corrupt(e.to_string())))
            .collect()
    }

    /// Writes the current view so later opens skip replaying the log so far.
    pub fn snapshot(&self) -> Result<(), ReviewError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let inner = self.lock();
        let snap = Snapshot { events: inner.events, tasks: inner.state.tasks.clone() };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(&snap).map_err(io::Error::other)?)?;
        std::fs::rename(tmp, dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }
}

fn load_snapshot(path: &Path) -> Option<Snapshot> {
    let bytes = std::fs::read(path).ok()?;
    match serde_json::from_slice(&bytes) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("{}: ignoring unreadable snapshot: {e}", path.display());
            None
        }
    }
}

impl DialogueSink for ReviewStore {
    fn enqueue_dialogue(&self, d: &Dialogue) -> Result<(), String> {
        self.enqueue(Payload::Dialogue(d.clone())).map(|_| ()).map_err(|e| e.to_string())
    }
}

impl KnowledgeSink for ReviewStore {
    fn enqueue_knowledge(&self, item: &KnowledgeItem) -> Result<bool, String> {
        self.enqueue(Payload::Knowledge(item.clone())).map(|(_, new)| new).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::model::{QualityScores, Role, StudentChoice, Turn};

    pub(crate) fn refined_dialogue(id: &str, flags: &[&str]) -> Dialogue {
        let at = FixedClock::from_unix(1_700_000_000).0;
        let mut d = Dialogue {
            id: id.into(),
            source_qa_id: format!("qa-{id}"),
            turns: vec![
                Turn { role: Role::Seeker, text: "最近很焦虑。".into(), evidence: None },
                Turn { role: Role::Counselor, text: "能说说发生了什么吗？".into(), evidence: None },
            ],
            stage: DialogueStage::Generated,
            support_ratio: Some(0.0),
            quality: Some(QualityScores { empathy: 4, supportiveness: 4, guidance: 3, safety: 5 }),
            audit: vec![],
            flags: flags.iter().map(|f| f.to_string()).collect(),
            reject_reason: None,
        };
        for s in [DialogueStage::Generated, DialogueStage::EvidenceJudged, DialogueStage::Refined] {
            d.advance(s, at, "test");
        }
        d
    }

    pub(crate) fn adjudicated_item(id: &str) -> KnowledgeItem {
        KnowledgeItem {
            id: id.into(),
            span_ref: "book#0".into(),
            question: "什么是共情？".into(),
            seed_answer: "理解他人感受。".into(),
            rag_answer: Some("设身处地理解来访者的感受。".into()),
            plain_answer: Some("理解别人。".into()),
            teacher_choice: Some(StudentChoice::Rag),
            teacher_rationale: Some("更完整".into()),
            status: KnowledgeStatus::Adjudicated,
            flags: vec![],
        }
    }

    fn clock() -> Arc<dyn Clock> {
        Arc::new(FixedClock::from_unix(1_700_000_100))
    }

    fn accept(who: &str) -> Decision {
        Decision { action: Action::Accept, reviewer_id: who.into(), note: None, edit_payload: None }
    }

    #[test]
    fn enqueue_is_idempotent_and_ids_are_sequential() {
        let s = ReviewStore::in_memory(clock());
        assert_eq!(s.enqueue(Payload::Dialogue(refined_dialogue("d1", &[]))).unwrap(), ("task-000001".into(), true));
        assert_eq!(s.enqueue(Payload::Dialogue(refined_dialogue("d1", &[]))).unwrap(), ("task-000001".into(), false));
        assert_eq!(s.enqueue(Payload::Knowledge(adjudicated_item("d1"))).unwrap(), ("task-000002".into(), true));
        let drafted = KnowledgeItem { status: KnowledgeStatus::Drafted, teacher_choice: None, ..adjudicated_item("k") };
        assert!(matches!(s.enqueue(Payload::Knowledge(drafted)), Err(ReviewError::Precondition(_))));
    }

    #[test]
    fn accept_then_conflicts() {
        let s = ReviewStore::in_memory(clock());
        let (id, _) = s.enqueue(Payload::Dialogue(refined_dialogue("d1", &[]))).unwrap();
        let before = s.get(&id).unwrap().audit.len();
        let t = s.decide(&id, accept("r1"), 0).unwrap();
        assert_eq!((t.status, t.version, t.audit.len()), (TaskStatus::Accepted, 1, before + 1));
        assert_eq!(t.decided_by.as_deref(), Some("r1"));
        let Payload::Dialogue(d) = &t.payload else { panic!() };
        assert_eq!(d.stage, DialogueStage::Approved);
        assert!(matches!(s.decide(&id, accept("r2"), 0), Err(ReviewError::VersionConflict { .. })));
        assert!(matches!(s.decide(&id, accept("r2"), 1), Err(ReviewError::AlreadyDecided { .. })));
        assert!(matches!(s.decide("task-999999", accept("r2"), 0), Err(ReviewError::NotFound(_))));
    }

    #[test]
    fn invalid_edit_leaves_task_pending() {
        let s = ReviewStore::in_memory(clock());
        let (id, _) = s.enqueue(Payload::Dialogue(refined_dialogue("d1", &[]))).unwrap();
        let mut bad = refined_dialogue("d1", &[]);
        bad.turns.truncate(1);
        let edit = Decision { action: Action::Edit, reviewer_id: "r".into(), note: None, edit_payload: Some(Payload::Dialogue(bad)) };
        let err = s.decide(&id, edit, 0).unwrap_err();
        assert!(err.to_string().contains("turns < 2"), "{err}");
        let no_payload = Decision { action: Action::Edit, reviewer_id: "r".into(), note: None, edit_payload: None };
        assert!(matches!(s.decide(&id, no_payload, 0), Err(ReviewError::Invalid(_))));
        let t = s.get(&id).unwrap();
        assert_eq!((t.status, t.version), (TaskStatus::Pending, 0));

        let mut good = refined_dialogue("d1", &[]);
        good.turns[1].text = "听起来你很不容易。".into();
        let edit = Decision { action: Action::Edit, reviewer_id: "r".into(), note: Some("更温和".into()), edit_payload: Some(Payload::Dialogue(good)) };
        let t = s.decide(&id, edit, 0).unwrap();
        assert_eq!(t.status, TaskStatus::Edited);
        let Payload::Dialogue(d) = t.effective_payload() else { panic!() };
        assert_eq!(d.turns[1].text, "听起来你很不容易。");
    }

    #[test]
    fn filters_and_pages() {
        let s = ReviewStore::in_memory(clock());
        s.enqueue(Payload::Dialogue(refined_dialogue("d1", &["safety-floor"]))).unwrap();
        s.enqueue(Payload::Dialogue(refined_dialogue("d2", &[]))).unwrap();
        s.enqueue(Payload::Knowledge(adjudicated_item("k1"))).unwrap();
        let pending = TaskFilter { status: Some(TaskStatus::Pending), ..Default::default() };
        assert_eq!(s.list(&pending, None, 10).unwrap().tasks.len(), 3);
        let flagged = TaskFilter { flag: Some("safety-floor".into()), ..Default::default() };
        assert_eq!(s.list(&flagged, None, 10).unwrap().tasks.len(), 1);
        let kind = TaskFilter { kind: Some(TaskKind::Knowledge), ..Default::default() };
        assert_eq!(s.list(&kind, None, 10).unwrap().tasks[0].payload_ref, "k1");

        let p1 = s.list(&TaskFilter::default(), None, 2).unwrap();
        assert_eq!(p1.tasks.len(), 2);
        let p2 = s.list(&TaskFilter::default(), p1.next_cursor.as_deref(), 2).unwrap();
        assert_eq!((p2.tasks.len(), p2.next_cursor.clone()), (1, None));
        assert_eq!(p2.tasks[0].id, "task-000003");
        assert!(matches!(s.list(&TaskFilter::default(), Some("zz"), 2), Err(ReviewError::BadCursor)));
        assert!(matches!(s.list(&TaskFilter::default(), Some(&encode_cursor(99)), 2), Err(ReviewError::BadCursor)));
    }

    #[test]
    fn reopen_and_replay_match() {
        let dir = tempfile::tempdir().unwrap();
        let s = ReviewStore::open_with_clock(dir.path(), clock()).unwrap();
        for i in 0..4 {
            s.enqueue(Payload::Dialogue(refined_dialogue(&format!("d{i}"), &[]))).unwrap();
        }
        s.decide("task-000001", accept("a"), 0).unwrap();
        s.snapshot().unwrap();
        let reject = Decision { action: Action::Reject, reviewer_id: "b".into(), note: Some("偏题".into()), edit_payload: None };
        s.decide("task-000002", reject, 0).unwrap();
        let live = s.state();
        let replayed = StoreState::replay(&s.events().unwrap()).unwrap();
        assert_eq!(replayed.tasks, live.tasks);
        drop(s);
        let reopened = ReviewStore::open_with_clock(dir.path(), clock()).unwrap();
        assert_eq!(reopened.state().tasks, live.tasks);
        std::fs::remove_file(dir.path().join(SNAPSHOT_FILE)).unwrap();
        let full = ReviewStore::open_with_clock(dir.path(), clock()).unwrap();
        assert_eq!(full.state().tasks, live.tasks);
    }

    #[test]
    fn stats_count() {
        let s = ReviewStore::in_memory(clock());
        s.enqueue(Payload::Dialogue(refined_dialogue("d1", &[]))).unwrap();
        s.enqueue(Payload::Knowledge(adjudicated_item("k1"))).unwrap();
        s.decide("task-000002", accept("r"), 0).unwrap();
        let st = s.stats();
        assert_eq!(st.total, 2);
        assert_eq!(st.by_status[&TaskStatus::Accepted], 1);
        assert_eq!(st.by_kind[&TaskKind::Dialogue], 1);
    }
}
