//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use psyforge::bench::BENCH_SCHEMA;
use psyforge::model::{write_jsonl, BenchItem, BenchKind, Correct, Level, Section};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// (section, kind, level, count) of the exam-derived benchmark.
pub const EXAM_LAYOUT: &[(Section, BenchKind, Level, usize)] = &[
    (Section::Ethics, BenchKind::Smcq, Level::Level2, 48),
    (Section::Ethics, BenchKind::Smcq, Level::Level3, 72),
    (Section::Ethics, BenchKind::Smcq, Level::Other, 32),
    (Section::Ethics, BenchKind::Mmcq, Level::Level2, 48),
    (Section::Ethics, BenchKind::Mmcq, Level::Level3, 72),
    (Section::Ethics, BenchKind::Mmcq, Level::Other, 38),
    (Section::Theory, BenchKind::Smcq, Level::Level2, 337),
    (Section::Theory, BenchKind::Smcq, Level::Level3, 566),
    (Section::Theory, BenchKind::Smcq, Level::Other, 241),
    (Section::Theory, BenchKind::Mmcq, Level::Level2, 228),
    (Section::Theory, BenchKind::Mmcq, Level::Level3, 363),
    (Section::Theory, BenchKind::Mmcq, Level::Other, 192),
    (Section::Case, BenchKind::Smcq, Level::Level2, 245),
    (Section::Case, BenchKind::Smcq, Level::Level3, 338),
    (Section::Case, BenchKind::Smcq, Level::Other, 165),
    (Section::Case, BenchKind::Mmcq, Level::Level2, 214),
    (Section::Case, BenchKind::Mmcq, Level::Level3, 455),
    (Section::Case, BenchKind::Mmcq, Level::Other, 209),
    (Section::Case, BenchKind::CaseQa, Level::Level2, 44),
    (Section::Case, BenchKind::CaseQa, Level::Level3, 40),
    (Section::Case, BenchKind::CaseQa, Level::Other, 16),
];

fn options() -> BTreeMap<char, String> {
    ['A', 'B', 'C', 'D'].into_iter().map(|c| (c, format!("选项{c}"))).collect()
}

pub fn mcq(id: &str, kind: BenchKind, section: Section, level: Level, correct: &str) -> BenchItem {
    BenchItem {
        id: id.into(),
        kind,
        section,
        level,
        stem: format!("题目 {id}"),
        case_background: (section == Section::Case).then(|| "来访者，女，28岁。".to_string()),
        options: options(),
        correct: Correct::Choices(correct.chars().collect::<BTreeSet<_>>()),
    }
}

pub fn case_qa(id: &str, level: Level, reference: &str) -> BenchItem {
    BenchItem {
        id: id.into(),
        kind: BenchKind::CaseQa,
        section: Section::Case,
        level,
        stem: format!("请分析 {id}"),
        case_background: Some("来访者，男，35岁，失眠两个月。".into()),
        options: BTreeMap::new(),
        correct: Correct::Reference(reference.into()),
    }
}

pub fn exam_items() -> Vec<BenchItem> {
    let mut items = Vec::new();
    for &(section, kind, level, count) in EXAM_LAYOUT {
        for i in 0..count {
            let id = format!("{section:?}-{kind:?}-{level:?}-{i}").to_lowercase();
            let letters = ["A", "B", "C", "D"];
            items.push(match kind {
                BenchKind::Smcq => mcq(&id, kind, section, level, letters[i % 4]),
                BenchKind::Mmcq => mcq(&id, kind, section, level, ["AB", "BCD", "AC", "ABCD"][i % 4]),
                BenchKind::CaseQa => case_qa(&id, level, "建议进行认知行为治疗，改善睡眠习惯。"),
            });
        }
    }
    items
}

pub fn write_exam(path: &Path) -> usize {
    let items = exam_items();
    write_jsonl(path, BENCH_SCHEMA, &items).unwrap()
}
