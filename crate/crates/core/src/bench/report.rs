//! Table-style aggregation of evaluation outcomes.
//!
//! Cell values are fractions in [0, 1]; the markdown renderer shows them as
//! percentages with elastic accuracies underlined, the CSV keeps full precision.

use super::schema::Manifest;
use crate::model::{BenchKind, EvalOutcome, Level, Section};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SectionCells {
    pub smcq_acc: Option<f64>,
    pub mmcq_std: Option<f64>,
    pub mmcq_elastic: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseQaMeans {
    pub n: usize,
    pub r1: f64,
    pub rl: f64,
    pub b4: f64,
    /// Mean over the pairs that have a score; absent when none do.
    pub bertscore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: String,
    /// Set on level-split rows.
    pub level: Option<Level>,
    pub ethics: SectionCells,
    pub theory: SectionCells,
    pub case: SectionCells,
    pub avg_standard: Option<f64>,
    pub avg_parenthesized: Option<f64>,
    pub case_qa: Option<CaseQaMeans>,
}

fn mean_present(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl ReportRow {
    pub fn section(&self, s: Section) -> &SectionCells {
        match s {
            Section::Ethics => &self.ethics,
            Section::Theory => &self.theory,
            Section::Case => &self.case,
        }
    }

    fn section_mut(&mut self, s: Section) -> &mut SectionCells {
        match s {
            Section::Ethics => &mut self.ethics,
            Section::Theory => &mut self.theory,
            Section::Case => &mut self.case,
        }
    }

    /// Builds a row from already-computed cells, filling in both averages.
    pub fn from_cells(model_id: impl Into<String>, ethics: SectionCells, theory: SectionCells, case: SectionCells) -> Self {
        let mut row = Self {
            model_id: model_id.into(),
            level: None,
            ethics,
            theory,
            case,
            avg_standard: None,
            avg_parenthesized: None,
            case_qa: None,
        };
        row.recompute_averages();
        row
    }

    /// Unweighted means of the six standard cells, and of the three SMCQ
    /// plus three elastic cells. Absent cells are left out.
    pub fn recompute_averages(&mut self) {
        let cells = [self.ethics, self.theory, self.case];
        let standard: Vec<Option<f64>> = cells.iter().flat_map(|c| [c.smcq_acc, c.mmcq_std]).collect();
        let paren: Vec<Option<f64>> = cells.iter().flat_map(|c| [c.smcq_acc, c.mmcq_elastic]).collect();
        self.avg_standard = mean_present(&standard);
        self.avg_parenthesized = mean_present(&paren);
    }
}

/// One row over all outcomes. With a manifest, cells whose outcome count
/// differs from the expected item count are reported in the log.
pub fn aggregate(model_id: &str, outcomes: &[EvalOutcome], manifest: Option<&Manifest>) -> ReportRow {
    aggregate_filtered(model_id, outcomes, manifest, None)
}

/// Rows restricted to each level in turn, in level order.
pub fn aggregate_by_level(model_id: &str, outcomes: &[EvalOutcome], manifest: Option<&Manifest>) -> Vec<ReportRow> {
    Level::ALL
        .iter()
        .filter(|l| outcomes.iter().any(|o| o.level == **l))
        .map(|l| aggregate_filtered(model_id, outcomes, manifest, Some(*l)))
        .collect()
}

fn aggregate_filtered(model_id: &str, outcomes: &[EvalOutcome], manifest: Option<&Manifest>, level: Option<Level>) -> ReportRow {
    let selected: Vec<&EvalOutcome> = outcomes.iter().filter(|o| level.is_none_or(|l| o.level == l)).collect();
    let mut row = ReportRow::from_cells(model_id, SectionCells::default(), SectionCells::default(), SectionCells::default());
    row.level = level;
    for section in Section::ALL {
        for kind in [BenchKind::Smcq, BenchKind::Mmcq] {
            let cell: Vec<&&EvalOutcome> = selected.iter().filter(|o| o.section == section && o.kind == kind).collect();
            if let Some(m) = manifest {
                let expected = match level {
                    Some(l) => m.get(section, kind, l),
                    None => m.count(section, kind),
                };
                if expected != cell.len() {
                    log::warn!("{section:?}/{kind:?}: {} outcomes for {expected} manifest items", cell.len());
                }
            }
            if cell.is_empty() {
                log::warn!("{section:?}/{kind:?}: no outcomes; cell left out of averages");
                continue;
            }
            let std = mean(cell.iter().map(|o| o.standard_score));
            let target = row.section_mut(section);
            if kind == BenchKind::Smcq {
                target.smcq_acc = std;
            } else {
                target.mmcq_std = std;
                target.mmcq_elastic = mean(cell.iter().map(|o| o.elastic_score.unwrap_or(0.0)));
            }
        }
    }
    row.recompute_averages();
    let scores: Vec<_> = selected.iter().filter(|o| o.kind == BenchKind::CaseQa).filter_map(|o| o.text_scores).collect();
    if !scores.is_empty() {
        row.case_qa = Some(CaseQaMeans {
            n: scores.len(),
            r1: mean(scores.iter().map(|s| s.r1)).unwrap_or(0.0),
            rl: mean(scores.iter().map(|s| s.rl)).unwrap_or(0.0),
            b4: mean(scores.iter().map(|s| s.b4)).unwrap_or(0.0),
            bertscore: mean(scores.iter().filter_map(|s| s.bertscore)),
        });
    }
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// Stable sort by overall standard average, best first; rows without one go last.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| match (a.avg_standard, b.avg_standard) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
}

pub fn render_report(rows: &[ReportRow], format: ReportFormat) -> String {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    match format {
        ReportFormat::Markdown => render_markdown(&rows),
        ReportFormat::Csv => render_csv(&rows),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", x * 100.0))
}

fn label(row: &ReportRow) -> String {
    match row.level {
        None => row.model_id.clone(),
        Some(l) => format!("{} ({})", row.model_id, level_name(l)),
    }
}

fn level_name(l: Level) -> &'static str {
    match l {
        Level::Level2 => "level2",
        Level::Level3 => "level3",
        Level::Other => "other",
    }
}

fn render_markdown(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    out.push_str("| Model | Ethics SMCQ | Ethics MMCQ | Theory SMCQ | Theory MMCQ | Case SMCQ | Case MMCQ | Average |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for row in rows {
        let _ = write!(out, "| {} ", label(row));
        for s in Section::ALL {
            let c = row.section(s);
            let _ = write!(out, "| {} | {} (<u>{}</u>) ", pct(c.smcq_acc), pct(c.mmcq_std), pct(c.mmcq_elastic));
        }
        let _ = writeln!(out, "| {} (<u>{}</u>) |", pct(row.avg_standard), pct(row.avg_parenthesized));
    }
    if rows.iter().any(|r| r.case_qa.is_some()) {
        out.push_str("\n| Model | R-1 | R-L | B-4 | BERTScore |\n|---|---|---|---|---|\n");
        for row in rows {
            if let Some(c) = &row.case_qa {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    label(row),
                    pct(Some(c.r1)),
                    pct(Some(c.rl)),
                    pct(Some(c.b4)),
                    pct(c.bertscore)
                );
            }
        }
    }
    out
}

/// Flat CSV record; one column per cell.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    model_id: String,
    level: Option<Level>,
    ethics_smcq: Option<f64>,
    ethics_mmcq_std: Option<f64>,
    ethics_mmcq_elastic: Option<f64>,
    theory_smcq: Option<f64>,
    theory_mmcq_std: Option<f64>,
    theory_mmcq_elastic: Option<f64>,
    case_smcq: Option<f64>,
    case_mmcq_std: Option<f64>,
    case_mmcq_elastic: Option<f64>,
    avg_standard: Option<f64>,
    avg_parenthesized: Option<f64>,
    case_qa_n: Option<usize>,
    case_qa_r1: Option<f64>,
    case_qa_rl: Option<f64>,
    case_qa_b4: Option<f64>,
    case_qa_bertscore: Option<f64>,
}

impl From<&ReportRow> for CsvRow {
    fn from(r: &ReportRow) -> Self {
        let c = r.case_qa.as_ref();
        Self {
            model_id: r.model_id.clone(),
            level: r.level,
            ethics_smcq: r.ethics.smcq_acc,
            ethics_mmcq_std: r.ethics.mmcq_std,
            ethics_mmcq_elastic: r.ethics.mmcq_elastic,
            theory_smcq: r.theory.smcq_acc,
            theory_mmcq_std: r.theory.mmcq_std,
            theory_mmcq_elastic: r.theory.mmcq_elastic,
            case_smcq: r.case.smcq_acc,
            case_mmcq_std: r.case.mmcq_std,
            case_mmcq_elastic: r.case.mmcq_elastic,
            avg_standard: r.avg_standard,
            avg_parenthesized: r.avg_parenthesized,
            case_qa_n: c.map(|c| c.n),
            case_qa_r1: c.map(|c| c.r1),
            case_qa_rl: c.map(|c| c.rl),
            case_qa_b4: c.map(|c| c.b4),
            case_qa_bertscore: c.and_then(|c| c.bertscore),
        }
    }
}

impl From<CsvRow> for ReportRow {
    fn from(r: CsvRow) -> Self {
        let case_qa = match (r.case_qa_n, r.case_qa_r1, r.case_qa_rl, r.case_qa_b4) {
            (Some(n), Some(r1), Some(rl), Some(b4)) => {
                Some(CaseQaMeans { n, r1, rl, b4, bertscore: r.case_qa_bertscore })
            }
            _ => None,
        };
        Self {
            model_id: r.model_id,
            level: r.level,
            ethics: SectionCells { smcq_acc: r.ethics_smcq, mmcq_std: r.ethics_mmcq_std, mmcq_elastic: r.ethics_mmcq_elastic },
            theory: SectionCells { smcq_acc: r.theory_smcq, mmcq_std: r.theory_mmcq_std, mmcq_elastic: r.theory_mmcq_elastic },
            case: SectionCells { smcq_acc: r.case_smcq, mmcq_std: r.case_mmcq_std, mmcq_elastic: r.case_mmcq_elastic },
            avg_standard: r.avg_standard,
            avg_parenthesized: r.avg_parenthesized,
            case_qa,
        }
    }
}

fn render_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        // Serializing plain Option/f64 fields into memory cannot fail.
        w.serialize(CsvRow::from(row)).expect("csv row");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

pub fn parse_csv_report(text: &str) -> Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize::<CsvRow>().map(|r| r.map(ReportRow::from)).collect()
}
