use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// First line of every JSONL file written by this crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaHeader {
    pub schema: String,
    pub version: u32,
}

impl SchemaHeader {
    pub const VERSION: u32 = 1;

    pub fn new(schema: &str) -> Self {
        Self { schema: schema.to_string(), version: Self::VERSION }
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: header declares schema {found:?}, expected {expected:?}")]
    SchemaMismatch { path: PathBuf, expected: String, found: String },
    #[error("{path}: unsupported schema version {found}")]
    Version { path: PathBuf, found: u32 },
    #[error("encoding record: {0}")]
    Encode(#[from] serde_json::Error),
}

/// A skipped line and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    /// 1-based line number in the file, header included.
    pub line: usize,
    pub message: String,
}

#[derive(Debug)]
pub struct JsonlRead<T> {
    pub items: Vec<T>,
    pub diagnostics: Vec<LineDiagnostic>,
}

/// Reads a JSONL file. The header line is optional on input; when present its
/// schema must equal `schema`. Malformed lines become diagnostics.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<JsonlRead<T>, JsonlError> {
    let read = read_jsonl_numbered(path, schema)?;
    Ok(JsonlRead { items: read.items.into_iter().map(|(_, t)| t).collect(), diagnostics: read.diagnostics })
}

/// Like [`read_jsonl`], keeping the 1-based line number of each record.
pub fn read_jsonl_numbered<T: DeserializeOwned>(
    path: &Path,
    schema: &str,
) -> Result<JsonlRead<(usize, T)>, JsonlError> {
    let io_err = |source| JsonlError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut items = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            if let Ok(header) = serde_json::from_str::<SchemaHeader>(&line) {
                if header.schema != schema {
                    return Err(JsonlError::SchemaMismatch {
                        path: path.to_path_buf(),
                        expected: schema.to_string(),
                        found: header.schema,
                    });
                }
                if header.version != SchemaHeader::VERSION {
                    return Err(JsonlError::Version { path: path.to_path_buf(), found: header.version });
                }
                continue;
            }
        }
        match serde_json::from_str::<T>(&line) {
            Ok(item) => items.push((lineno, item)),
            Err(e) => diagnostics.push(LineDiagnostic { line: lineno, message: e.to_string() }),
        }
    }
    Ok(JsonlRead { items, diagnostics })
}

/// Writes header plus one record per line, replacing `path` atomically.
pub fn write_jsonl<'a, T, I>(path: &Path, schema: &str, items: I) -> Result<usize, JsonlError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut buf = serde_json::to_vec(&SchemaHeader::new(schema))?;
    buf.push(b'\n');
    let mut count = 0;
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
        count += 1;
    }
    write_atomic(path, &buf).map_err(|source| JsonlError::Io { path: path.to_path_buf(), source })?;
    Ok(count)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
