//! C ABI over the psyforge scoring, metric, segmentation, retrieval and
//! review-store APIs.
//!
//! Every function returns a [`PsyStatus`]. On failure a message is kept per
//! thread and can be read with [`psy_last_error`]. Strings passed in must be
//! NUL-terminated UTF-8; strings handed out are owned by the caller and must
//! be released with [`psy_string_free`].

#![allow(clippy::missing_safety_doc)]

use psyforge::bench::{self, BertScore, OrthogonalStub, TokenizerMode};
use psyforge::knowledge::{segment_book, Boundary, RetrievalIndex, SegmentConfig};
use psyforge::model::{BenchItem, BenchKind, BookSpan, Correct, Extracted, Level, Section};
use psyforge::review::{Decision, Payload, ReviewError, ReviewStore, TaskFilter, TaskStatus};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsyStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Conflict = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub const PSY_TOKENIZER_CJK: u32 = 0;
pub const PSY_TOKENIZER_WHITESPACE: u32 = 1;

pub const PSY_BOUNDARY_SENTENCE: u32 = 0;
pub const PSY_BOUNDARY_PARAGRAPH: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PsyBertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Opaque handle to a review store.
pub struct PsyReviewStore {
    inner: ReviewStore,
}

/// Opaque handle to a retrieval index.
pub struct PsyIndex {
    inner: RetrievalIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(PsyStatus, String);

impl Fail {
    fn invalid(msg: impl Into<String>) -> Self {
        Fail(PsyStatus::InvalidArgument, msg.into())
    }
}

impl From<ReviewError> for Fail {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::NotFound(_) => PsyStatus::NotFound,
            ReviewError::VersionConflict { .. } | ReviewError::AlreadyDecided { .. } => PsyStatus::Conflict,
            ReviewError::Io(_) | ReviewError::Corrupt(_) => PsyStatus::Io,
            _ => PsyStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PsyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PsyStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PsyStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(PsyStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(PsyStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: callers pass either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| Fail(PsyStatus::NullArgument, format!("{name} is null")))
}

fn give_string(s: String, dst: *mut *mut c_char) -> Result<(), Fail> {
    let slot = out(dst, "out")?;
    let c = CString::new(s).map_err(|_| Fail::invalid("result contains a NUL byte"))?;
    *slot = c.into_raw();
    Ok(())
}

fn tokenizer(mode: u32) -> Result<TokenizerMode, Fail> {
    match mode {
        PSY_TOKENIZER_CJK => Ok(TokenizerMode::CjkCharLatinWord),
        PSY_TOKENIZER_WHITESPACE => Ok(TokenizerMode::Whitespace),
        other => Err(Fail::invalid(format!("unknown tokenizer {other}"))),
    }
}

fn letters(s: &str, name: &str) -> Result<BTreeSet<char>, Fail> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| {
            let u = c.to_ascii_uppercase();
            if u.is_ascii_uppercase() {
                Ok(u)
            } else {
                Err(Fail::invalid(format!("{name}: {c:?} is not an option letter")))
            }
        })
        .collect()
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn psy_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn psy_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn psy_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Standard (0 or 1) and elastic scores of a multiple-answer response.
/// Letter sets are strings such as "AC"; an empty `extracted` means the
/// model gave no answer.
#[no_mangle]
pub unsafe extern "C" fn psy_score_mmcq(
    extracted: *const c_char,
    correct: *const c_char,
    standard: *mut f64,
    elastic: *mut f64,
) -> PsyStatus {
    guard(|| {
        let ext = letters(text(extracted, "extracted")?, "extracted")?;
        let cor = letters(text(correct, "correct")?, "correct")?;
        let e = if ext.is_empty() { Extracted::Unanswered } else { Extracted::Choices(ext) };
        let (s, el) = bench::score_mmcq(&e, &cor);
        *out(standard, "standard")? = s;
        *out(elastic, "elastic")? = el;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn psy_score_smcq(extracted: *const c_char, correct: *const c_char, score: *mut f64) -> PsyStatus {
    guard(|| {
        let ext = letters(text(extracted, "extracted")?, "extracted")?;
        let cor = letters(text(correct, "correct")?, "correct")?;
        let e = if ext.is_empty() { Extracted::Unanswered } else { Extracted::Choices(ext) };
        *out(score, "score")? = bench::score_smcq(&e, &cor);
        Ok(())
    })
}

type TextMetric = fn(&str, &str, TokenizerMode) -> f64;

unsafe fn metric(f: TextMetric, cand: *const c_char, reference: *const c_char, mode: u32, dst: *mut f64) -> PsyStatus {
    guard(|| {
        let c = text(cand, "candidate")?;
        let r = text(reference, "reference")?;
        *out(dst, "out")? = f(c, r, tokenizer(mode)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn psy_rouge1_f1(cand: *const c_char, reference: *const c_char, tokenizer: u32, out: *mut f64) -> PsyStatus {
    metric(bench::rouge1_f1, cand, reference, tokenizer, out)
}

#[no_mangle]
pub unsafe extern "C" fn psy_rouge_l_f1(cand: *const c_char, reference: *const c_char, tokenizer: u32, out: *mut f64) -> PsyStatus {
    metric(bench::rouge_l_f1, cand, reference, tokenizer, out)
}

#[no_mangle]
pub unsafe extern "C" fn psy_bleu4(cand: *const c_char, reference: *const c_char, tokenizer: u32, out: *mut f64) -> PsyStatus {
    metric(bench::bleu4, cand, reference, tokenizer, out)
}

/// BERTScore under one-hot token embeddings: token-overlap precision,
/// recall and F1.
#[no_mangle]
pub unsafe extern "C" fn psy_bertscore_stub(
    cand: *const c_char,
    reference: *const c_char,
    tokenizer_mode: u32,
    dst: *mut PsyBertScore,
) -> PsyStatus {
    guard(|| {
        let mode = tokenizer(tokenizer_mode)?;
        let c = bench::tokenize(text(cand, "candidate")?, mode);
        let r = bench::tokenize(text(reference, "reference")?, mode);
        let BertScore { precision, recall, f1 } =
            bench::bertscore_tokens(&c, &r, &OrthogonalStub::new()).map_err(|e| Fail::invalid(e.to_string()))?;
        *out(dst, "out")? = PsyBertScore { precision, recall, f1 };
        Ok(())
    })
}

/// Reads the declared answer letters out of a model reply. `options` lists
/// the item's option letters, e.g. "ABCD". The result is the letters in
/// order ("AC"), or "" when nothing was found.
#[no_mangle]
pub unsafe extern "C" fn psy_extract_choices(
    reply: *const c_char,
    options: *const c_char,
    multiple: bool,
    dst: *mut *mut c_char,
) -> PsyStatus {
    guard(|| {
        let reply = text(reply, "reply")?;
        let opts = letters(text(options, "options")?, "options")?;
        if opts.len() < 2 {
            return Err(Fail::invalid("at least two options are required"));
        }
        let first = *opts.iter().next().expect("non-empty");
        let item = BenchItem {
            id: "ffi".into(),
            kind: if multiple { BenchKind::Mmcq } else { BenchKind::Smcq },
            section: Section::Theory,
            level: Level::Other,
            stem: "-".into(),
            case_background: None,
            options: opts.iter().map(|c| (*c, String::new())).collect::<BTreeMap<_, _>>(),
            correct: Correct::Choices(BTreeSet::from([first])),
        };
        let s = match bench::extract_choices(reply, &item) {
            Extracted::Choices(set) => set.into_iter().collect(),
            _ => String::new(),
        };
        give_string(s, dst)
    })
}

/// Segments `text` and writes the end offset (in characters) of each span
/// into `ends`. With `ends` null or too small, only `count` is set and
/// `BufferTooSmall` is returned.
#[no_mangle]
pub unsafe extern "C" fn psy_segment(
    book: *const c_char,
    target_len: usize,
    boundary: u32,
    ends: *mut usize,
    capacity: usize,
    count: *mut usize,
) -> PsyStatus {
    guard(|| {
        let book = text(book, "text")?;
        let boundary = match boundary {
            PSY_BOUNDARY_SENTENCE => Boundary::Sentence,
            PSY_BOUNDARY_PARAGRAPH => Boundary::Paragraph,
            other => return Err(Fail::invalid(format!("unknown boundary {other}"))),
        };
        let cfg = SegmentConfig { target_len, boundary, max_overshoot: None };
        let seg = segment_book("ffi", book, &cfg).map_err(|e| Fail::invalid(e.to_string()))?;
        *out(count, "count")? = seg.spans.len();
        if ends.is_null() || capacity < seg.spans.len() {
            return Err(Fail(PsyStatus::BufferTooSmall, format!("{} spans, capacity {capacity}", seg.spans.len())));
        }
        let slots = std::slice::from_raw_parts_mut(ends, seg.spans.len());
        for (slot, s) in slots.iter_mut().zip(&seg.spans) {
            *slot = s.char_range.1;
        }
        Ok(())
    })
}

/// Builds a retrieval index over `n` documents.
#[no_mangle]
pub unsafe extern "C" fn psy_index_new(texts: *const *const c_char, n: usize, tokenizer_mode: u32, dst: *mut *mut PsyIndex) -> PsyStatus {
    guard(|| {
        let mode = tokenizer(tokenizer_mode)?;
        if texts.is_null() && n > 0 {
            return Err(Fail(PsyStatus::NullArgument, "texts is null".into()));
        }
        let ptrs = if n == 0 { &[][..] } else { std::slice::from_raw_parts(texts, n) };
        let mut spans = Vec::with_capacity(n);
        for (i, p) in ptrs.iter().enumerate() {
            let t = text(*p, &format!("texts[{i}]"))?;
            spans.push(BookSpan { book_id: "ffi".into(), ordinal: i, char_range: (0, t.chars().count()), text: t.into() });
        }
        let slot = out(dst, "out")?;
        *slot = Box::into_raw(Box::new(PsyIndex { inner: RetrievalIndex::build(spans, mode) }));
        Ok(())
    })
}

/// Top-`k` documents for `query`, best first. Writes up to `k` document
/// positions and scores; `count` receives how many were written.
#[no_mangle]
pub unsafe extern "C" fn psy_index_retrieve(
    index: *const PsyIndex,
    query: *const c_char,
    k: usize,
    docs: *mut usize,
    scores: *mut f64,
    count: *mut usize,
) -> PsyStatus {
    guard(|| {
        let idx = index.as_ref().ok_or_else(|| Fail(PsyStatus::NullArgument, "index is null".into()))?;
        let hits = idx.inner.retrieve(text(query, "query")?, k);
        if !hits.is_empty() && (docs.is_null() || scores.is_null()) {
            return Err(Fail(PsyStatus::NullArgument, "docs or scores is null".into()));
        }
        for (i, h) in hits.iter().enumerate() {
            *docs.add(i) = h.doc;
            *scores.add(i) = h.score;
        }
        *out(count, "count")? = hits.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn psy_index_free(index: *mut PsyIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Opens (or creates) a review store in `dir`.
#[no_mangle]
pub unsafe extern "C" fn psy_review_open(dir: *const c_char, dst: *mut *mut PsyReviewStore) -> PsyStatus {
    guard(|| {
        let dir = text(dir, "dir")?;
        let store = ReviewStore::open(Path::new(dir))?;
        *out(dst, "out")? = Box::into_raw(Box::new(PsyReviewStore { inner: store }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn psy_review_free(store: *mut PsyReviewStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

unsafe fn store_ref<'a>(store: *const PsyReviewStore) -> Result<&'a ReviewStore, Fail> {
    store.as_ref().map(|s| &s.inner).ok_or_else(|| Fail(PsyStatus::NullArgument, "store is null".into()))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Fail> {
    serde_json::to_string(v).map_err(|e| Fail::invalid(e.to_string()))
}

/// Queues a payload given as JSON (`{"kind": "dialogue", "item": {...}}`).
/// Writes the task id; `created` tells whether it is new.
#[no_mangle]
pub unsafe extern "C" fn psy_review_enqueue(
    store: *const PsyReviewStore,
    payload_json: *const c_char,
    task_id: *mut *mut c_char,
    created: *mut bool,
) -> PsyStatus {
    guard(|| {
        let store = store_ref(store)?;
        let payload: Payload =
            serde_json::from_str(text(payload_json, "payload_json")?).map_err(|e| Fail::invalid(e.to_string()))?;
        let (id, new) = store.enqueue(payload)?;
        if let Some(c) = created.as_mut() {
            *c = new;
        }
        give_string(id, task_id)
    })
}

/// Applies a decision given as JSON (`{"action": "accept", "reviewer_id": "..."}`)
/// and writes the updated task as JSON.
#[no_mangle]
pub unsafe extern "C" fn psy_review_decide(
    store: *const PsyReviewStore,
    task_id: *const c_char,
    decision_json: *const c_char,
    expected_version: u64,
    task_json: *mut *mut c_char,
) -> PsyStatus {
    guard(|| {
        let store = store_ref(store)?;
        let id = text(task_id, "task_id")?;
        let decision: Decision =
            serde_json::from_str(text(decision_json, "decision_json")?).map_err(|e| Fail::invalid(e.to_string()))?;
        let task = store.decide(id, decision, expected_version)?;
        give_string(to_json(&task)?, task_json)
    })
}

/// Tasks with the given status ("pending", "accepted", ...; null for all),
/// as a JSON array in enqueue order.
#[no_mangle]
pub unsafe extern "C" fn psy_review_list(store: *const PsyReviewStore, status: *const c_char, tasks_json: *mut *mut c_char) -> PsyStatus {
    guard(|| {
        let store = store_ref(store)?;
        let status: Option<TaskStatus> = if status.is_null() {
            None
        } else {
            let s = text(status, "status")?;
            Some(serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| Fail::invalid(format!("unknown status {s:?}")))?)
        };
        let filter = TaskFilter { status, ..Default::default() };
        let tasks: Vec<_> = store.state().tasks.into_iter().filter(|t| filter.matches(t)).collect();
        give_string(to_json(&tasks)?, tasks_json)
    })
}

/// Counts by status and kind, as JSON.
#[no_mangle]
pub unsafe extern "C" fn psy_review_stats(store: *const PsyReviewStore, stats_json: *mut *mut c_char) -> PsyStatus {
    guard(|| {
        let store = store_ref(store)?;
        give_string(to_json(&store.stats())?, stats_json)
    })
}

/// Accepted and edited items as chat-format JSONL.
#[no_mangle]
pub unsafe extern "C" fn psy_review_export_sft(store: *const PsyReviewStore, jsonl: *mut *mut c_char) -> PsyStatus {
    guard(|| {
        let store = store_ref(store)?;
        let records = psyforge::review::task_records(&store.state().tasks);
        let mut buf = Vec::new();
        psyforge::review::write_sft(&mut buf, &records).map_err(|e| Fail(PsyStatus::Io, e.to_string()))?;
        give_string(String::from_utf8(buf).map_err(|e| Fail::invalid(e.to_string()))?, jsonl)
    })
}
