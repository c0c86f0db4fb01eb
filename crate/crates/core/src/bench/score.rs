use crate::model::Extracted;
use std::collections::BTreeSet;

/// 1 when the single extracted letter is the correct one.
pub fn score_smcq(extracted: &Extracted, correct: &BTreeSet<char>) -> f64 {
    match extracted {
        Extracted::Choices(got) if got == correct => 1.0,
        _ => 0.0,
    }
}

/// `(standard, elastic)`. Partial credit only when no wrong option was chosen.
pub fn score_mmcq(extracted: &Extracted, correct: &BTreeSet<char>) -> (f64, f64) {
    let Extracted::Choices(got) = extracted else {
        return (0.0, 0.0);
    };
    if correct.is_empty() || got.is_empty() || !got.is_subset(correct) {
        return (0.0, 0.0);
    }
    let standard = if got == correct { 1.0 } else { 0.0 };
    (standard, got.len() as f64 / correct.len() as f64)
}
