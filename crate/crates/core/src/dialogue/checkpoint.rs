//! Append-only log of completed (item, stage) steps.
//!
//! One JSON record per line. A partially written last line is cut off when
//! the log is reopened, so a crash mid-append loses at most that one step.

use crate::model::{Dialogue, DialogueStage};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub const CHECKPOINT_FILE: &str = "stages.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub item_id: String,
    pub stage: DialogueStage,
    #[serde(default)]
    pub integration_rounds: u32,
    pub dialogue: Dialogue,
}

pub struct Checkpoint {
    path: PathBuf,
    file: Mutex<File>,
    latest: HashMap<String, StageRecord>,
    records: usize,
}

impl Checkpoint {
    pub fn open(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(CHECKPOINT_FILE);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        file.seek(SeekFrom::Start(0))?;
        file.read_to_end(&mut bytes)?;
        let mut latest = HashMap::new();
        let mut good = 0usize;
        let mut records = 0usize;
        let mut pos = 0usize;
        while let Some(nl) = bytes[pos..].iter().position(|b| *b == b'\n') {
            let line = &bytes[pos..pos + nl];
            pos += nl + 1;
            if line.iter().all(u8::is_ascii_whitespace) {
                good = pos;
                continue;
            }
            match serde_json::from_slice::<StageRecord>(line) {
                Ok(r) => {
                    records += 1;
                    latest.insert(r.item_id.clone(), r);
                    good = pos;
                }
                Err(e) => {
                    log::warn!("{}: stopping at unreadable record: {e}", path.display());
                    break;
                }
            }
        }
        if good < bytes.len() {
            log::warn!("{}: dropping {} trailing bytes", path.display(), bytes.len() - good);
            file.set_len(good as u64)?;
        }
        Ok(Self { path, file: Mutex::new(file), latest, records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Most recent record per item, as loaded at open time.
    pub fn latest(&self, item_id: &str) -> Option<&StageRecord> {
        self.latest.get(item_id)
    }

    pub fn loaded_records(&self) -> usize {
        self.records
    }

    pub fn append(&self, record: &StageRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut f = self.file.lock().map_err(|_| io::Error::other("checkpoint lock poisoned"))?;
        f.write_all(&line)?;
        f.flush()
    }
}
