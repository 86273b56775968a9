//! Composite quality scoring and threshold logic.

use crate::error::EngineError;
use crate::types::Weights;

/// Valid range for a single quality dimension.
pub const SCORE_MIN: f64 = 0.0;
pub const SCORE_MAX: f64 = 5.0;

/// Weighted sum of the three quality dimensions.
///
/// Rejects out-of-range scores rather than clamping: clamping is the
/// response parser's job, and a raw value landing here means a parser bug.
pub fn composite_score(
    logic: f64,
    answer: f64,
    explanation: f64,
    weights: Weights,
) -> Result<f64, EngineError> {
    weights.validate()?;
    for (name, v) in [("logic", logic), ("answer", answer), ("explanation", explanation)] {
        if !(SCORE_MIN..=SCORE_MAX).contains(&v) || !v.is_finite() {
            return Err(EngineError::domain(format!(
                "{name} score {v} outside [{SCORE_MIN}, {SCORE_MAX}]"
            )));
        }
    }
    Ok(weights.logic * logic + weights.answer * answer + weights.explanation * explanation)
}

/// Inclusive pass test: a composite exactly at the threshold is retained.
pub fn passes_threshold(composite: f64, tau: f64) -> bool {
    composite >= tau
}

/// Clamp a raw parsed score into the valid range, reporting whether it was
/// out of range.
pub fn clamp_score(raw: f64) -> (f64, bool) {
    if raw.is_nan() {
        return (SCORE_MIN, true);
    }
    if raw < SCORE_MIN {
        (SCORE_MIN, true)
    } else if raw > SCORE_MAX {
        (SCORE_MAX, true)
    } else {
        (raw, false)
    }
}
