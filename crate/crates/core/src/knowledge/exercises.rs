//! Textbook exercises with answer analyses, imported as-is.

use crate::model::{read_jsonl_numbered, JsonlError, JsonlRead, LineDiagnostic};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const EXERCISE_SCHEMA: &str = "exercise";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exercise {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Exercise {
    /// Answer followed by the analysis, if any.
    pub fn response_text(&self) -> String {
        match self.analysis.as_deref().map(str::trim).filter(|a| !a.is_empty()) {
            Some(a) => format!("{}\n\n{a}", self.answer.trim()),
            None => self.answer.trim().to_string(),
        }
    }
}

/// Exercises with an empty question or answer become diagnostics.
pub fn load_exercises(path: &Path) -> Result<JsonlRead<Exercise>, JsonlError> {
    let read = read_jsonl_numbered::<Exercise>(path, EXERCISE_SCHEMA)?;
    let mut diagnostics = read.diagnostics;
    let mut items = Vec::new();
    for (line, ex) in read.items {
        if ex.question.trim().is_empty() || ex.answer.trim().is_empty() {
            diagnostics.push(LineDiagnostic { line, message: format!("{}: question and answer are required", ex.id) });
        } else {
            items.push(ex);
        }
    }
    Ok(JsonlRead { items, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_reports_blank_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex.jsonl");
        std::fs::write(
            &path,
            "{\"schema\":\"exercise\",\"version\":1}\n\
             {\"id\":\"e1\",\"question\":\"q\",\"answer\":\"B\",\"analysis\":\"because\"}\n\
             {\"id\":\"e2\",\"question\":\" \",\"answer\":\"B\"}\n",
        )
        .unwrap();
        let read = load_exercises(&path).unwrap();
        assert_eq!(read.items.len(), 1);
        assert_eq!(read.items[0].response_text(), "B\n\nbecause");
        assert_eq!(read.diagnostics[0].line, 3);
    }
}
