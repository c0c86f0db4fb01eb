//! Benchmark loading, answer extraction, scoring, text metrics and reports.

pub mod bertscore;
pub mod evaluate;
pub mod extract;
pub mod metrics;
pub mod report;
pub mod schema;
pub mod score;
pub mod tokenize;

pub use bertscore::{bertscore_f1, bertscore_tokens, BertScore, EmbedError, Embedder, HashingEmbedder, OrthogonalStub};
pub use evaluate::{build_prompt, evaluate_model, load_transcript, score_item, AnswerSource, EvalConfig, TranscriptEntry, OUTCOME_SCHEMA, TRANSCRIPT_SCHEMA};
pub use extract::{extract_choices, render_choices, Extractor};
pub use metrics::{bleu4, bleu4_tokens, lcs_len, rouge1_f1, rouge1_f1_tokens, rouge_l_f1, rouge_l_f1_tokens};
pub use report::{
    aggregate, aggregate_by_level, parse_csv_report, render_report, sort_rows, CaseQaMeans, ReportFormat, ReportRow,
    SectionCells,
};
pub use schema::{check_items, load_benchmark, Benchmark, Manifest, ManifestEntry, BENCH_SCHEMA};
pub use score::{score_mmcq, score_smcq};
pub use tokenize::{count_tokens, tokenize, TokenizerMode};
