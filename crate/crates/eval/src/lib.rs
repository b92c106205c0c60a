//! ASR scoring stack: transcript normalization, Levenshtein alignment,
//! word error rate, and entity word error rate (the fraction of annotated
//! entity words — drug names and the like — not exactly reproduced under
//! the optimal alignment).
//!
//! All scoring is pure and per-record, so corpora can be evaluated in any
//! order (aggregation is a commutative count merge).

pub mod align;
pub mod error;
pub mod normalize;
pub mod numwords;
pub mod score;
pub mod spelling;

pub use align::{levenshtein_align, script_cost, EditOp};
pub use error::{EvalError, Result};
pub use normalize::normalize;
pub use numwords::number_to_words;
pub use score::{
    evaluate, read_records, render_summary_table, wer, write_records, EvalReport,
    EwerAggregation, RecordEntity, TranscriptRecord, UtteranceScore, WerCounts,
};
