//! Chat-format JSONL for supervised fine-tuning.

use super::store::{Payload, ReviewTask, TaskStatus};
use crate::knowledge::Exercise;
use crate::model::{QaPair, Role};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

const UNSUPPORTED: &str = "[unsupported]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: &str) -> Self {
        Self { role: role.to_string(), content: content.trim().to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub source: String,
    pub messages: Vec<ChatMessage>,
}

/// Accepted and edited tasks, each once, in enqueue order.
pub fn task_records<'a>(tasks: impl IntoIterator<Item = &'a ReviewTask>) -> Vec<SftRecord> {
    tasks
        .into_iter()
        .filter(|t| matches!(t.status, TaskStatus::Accepted | TaskStatus::Edited))
        .filter_map(|t| payload_record(t.effective_payload()))
        .collect()
}

pub fn payload_record(p: &Payload) -> Option<SftRecord> {
    match p {
        Payload::Dialogue(d) => {
            let messages: Vec<ChatMessage> = d
                .turns
                .iter()
                .map(|t| {
                    let role = if t.role == Role::Seeker { "user" } else { "assistant" };
                    let text = t.text.trim_start();
                    ChatMessage::new(role, text.strip_prefix(UNSUPPORTED).unwrap_or(text))
                })
                .collect();
            Some(SftRecord { id: d.id.clone(), source: "dialogue".into(), messages })
        }
        Payload::Knowledge(k) => {
            let answer = k.canonical_answer()?;
            Some(SftRecord {
                id: k.id.clone(),
                source: "knowledge".into(),
                messages: vec![ChatMessage::new("user", &k.question), ChatMessage::new("assistant", answer)],
            })
        }
    }
}

pub fn qa_pair_record(qa: &QaPair) -> SftRecord {
    SftRecord {
        id: qa.id.clone(),
        source: "qa_pair".into(),
        messages: vec![ChatMessage::new("user", &qa.question), ChatMessage::new("assistant", &qa.answer)],
    }
}

pub fn exercise_record(ex: &Exercise) -> SftRecord {
    SftRecord {
        id: ex.id.clone(),
        source: "exercise".into(),
        messages: vec![ChatMessage::new("user", &ex.question), ChatMessage::new("assistant", &ex.response_text())],
    }
}

/// One JSON object per line, no header. Returns the record count.
pub fn write_sft<W: Write>(mut w: W, records: &[SftRecord]) -> io::Result<usize> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(records.len())
}
