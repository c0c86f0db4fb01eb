//! Human review of generated dialogues and knowledge items.
//!
//! [`ReviewStore`] is an append-only event log with an in-memory view.
//! Decisions use optimistic versioning, so a stale client gets a conflict
//! instead of overwriting someone else's decision. Accepted and edited items
//! feed the SFT export.

pub mod export;
#[cfg(feature = "server")]
pub mod http;
pub mod store;

pub use export::{exercise_record, payload_record, qa_pair_record, task_records, write_sft, ChatMessage, SftRecord};
pub use store::{
    Action, Decision, Event, Page, Payload, ReviewError, ReviewStore, ReviewTask, Stats, StoreState, TaskAudit,
    TaskFilter, TaskKind, TaskStatus, DEFAULT_PAGE_SIZE, EVENTS_FILE, SNAPSHOT_FILE,
};
