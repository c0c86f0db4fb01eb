use crate::model::{read_jsonl_numbered, BenchItem, BenchKind, JsonlError, Level, LineDiagnostic, Section, Validate};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

pub const BENCH_SCHEMA: &str = "bench_item";

/// Item counts per (section, kind, level).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    counts: BTreeMap<(Section, BenchKind, Level), usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestEntry {
    pub section: Section,
    pub kind: BenchKind,
    pub level: Level,
    pub count: usize,
}

impl Manifest {
    pub fn from_items<'a>(items: impl IntoIterator<Item = &'a BenchItem>) -> Self {
        let mut counts = BTreeMap::new();
        for it in items {
            *counts.entry((it.section, it.kind, it.level)).or_insert(0) += 1;
        }
        Self { counts }
    }

    pub fn get(&self, section: Section, kind: BenchKind, level: Level) -> usize {
        self.counts.get(&(section, kind, level)).copied().unwrap_or(0)
    }

    /// Count over all levels.
    pub fn count(&self, section: Section, kind: BenchKind) -> usize {
        Level::ALL.iter().map(|l| self.get(section, kind, *l)).sum()
    }

    pub fn kind_total(&self, kind: BenchKind) -> usize {
        Section::ALL.iter().map(|s| self.count(*s, kind)).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn entries(&self) -> Vec<ManifestEntry> {
        self.counts
            .iter()
            .map(|(&(section, kind, level), &count)| ManifestEntry { section, kind, level, count })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Benchmark {
    pub items: Vec<BenchItem>,
    pub manifest: Manifest,
    pub diagnostics: Vec<LineDiagnostic>,
}

/// Loads a benchmark file. Items that break an invariant, or repeat an id,
/// are dropped with a diagnostic instead of failing the load.
pub fn load_benchmark(path: &Path) -> Result<Benchmark, JsonlError> {
    let read = read_jsonl_numbered::<BenchItem>(path, BENCH_SCHEMA)?;
    Ok(check_items(read.items, read.diagnostics))
}

/// Applies the item invariants to already-parsed `(line, item)` pairs.
pub fn check_items(raw: Vec<(usize, BenchItem)>, mut diagnostics: Vec<LineDiagnostic>) -> Benchmark {
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(raw.len());
    for (line, item) in raw {
        let violations = item.violations();
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.into_iter().map(|v| v.0).collect();
            diagnostics.push(LineDiagnostic { line, message: format!("{}: {}", item.id, msgs.join("; ")) });
            continue;
        }
        if !seen.insert(item.id.clone()) {
            diagnostics.push(LineDiagnostic { line, message: format!("{}: duplicate id", item.id) });
            continue;
        }
        items.push(item);
    }
    diagnostics.sort_by_key(|d| d.line);
    let manifest = Manifest::from_items(&items);
    Benchmark { items, manifest, diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{write_jsonl, Correct};

    fn mcq(id: &str, kind: BenchKind, correct: &str) -> BenchItem {
        BenchItem {
            id: id.into(),
            kind,
            section: Section::Ethics,
            level: Level::Level2,
            stem: "stem".into(),
            case_background: None,
            options: "ABCD".chars().map(|c| (c, c.to_string())).collect(),
            correct: Correct::Choices(correct.chars().collect()),
        }
    }

    #[test]
    fn rejects_bad_smcq_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.jsonl");
        let items = vec![mcq("a", BenchKind::Smcq, "A"), mcq("b", BenchKind::Smcq, "AB"), mcq("c", BenchKind::Mmcq, "BC")];
        write_jsonl(&path, BENCH_SCHEMA, &items).unwrap();
        let b = load_benchmark(&path).unwrap();
        assert_eq!(b.items.len(), 2);
        assert_eq!(b.diagnostics.len(), 1);
        assert_eq!(b.diagnostics[0].line, 3);
        assert!(b.diagnostics[0].message.contains("SMCQ must have exactly one correct option"));
        assert_eq!(b.manifest.count(Section::Ethics, BenchKind::Smcq), 1);
        assert_eq!(b.manifest.count(Section::Ethics, BenchKind::Mmcq), 1);
    }

    #[test]
    fn duplicate_ids_dropped() {
        let b = check_items(vec![(1, mcq("a", BenchKind::Smcq, "A")), (2, mcq("a", BenchKind::Smcq, "B"))], vec![]);
        assert_eq!(b.items.len(), 1);
        assert!(b.diagnostics[0].message.contains("duplicate"));
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "").unwrap();
        let b = load_benchmark(&path).unwrap();
        assert!(b.items.is_empty());
        assert!(b.manifest.is_empty());
    }
}
