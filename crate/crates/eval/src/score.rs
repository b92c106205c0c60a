//! WER and entity-WER scoring over normalized token streams, plus the
//! report structures and the line-delimited record format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::align::{levenshtein_align, EditOp};
use crate::error::{EvalError, Result};
use crate::normalize::normalize;

/// Edit counts for one utterance. `wer = (S + D + I) / ref_len` and can
/// exceed 1 on insertion-heavy hypotheses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub matches: usize,
    pub ref_len: usize,
}

impl WerCounts {
    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn wer(&self) -> f64 {
        self.edits() as f64 / self.ref_len as f64
    }

    fn absorb(&mut self, other: &WerCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.matches += other.matches;
        self.ref_len += other.ref_len;
    }
}

/// Score one pair of normalized token streams.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<WerCounts> {
    if reference.is_empty() {
        return Err(EvalError::Contract("wer: empty reference".into()));
    }
    let ops = levenshtein_align(reference, hypothesis);
    let mut counts = WerCounts { ref_len: reference.len(), ..Default::default() };
    for op in &ops {
        match op {
            EditOp::Match { .. } => counts.matches += 1,
            EditOp::Substitute { .. } => counts.substitutions += 1,
            EditOp::Delete { .. } => counts.deletions += 1,
            EditOp::Insert { .. } => counts.insertions += 1,
        }
    }
    Ok(counts)
}

/// Entity annotation as it appears in manifests: surface text plus the
/// token offset in the normalized reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntity {
    pub text: String,
    pub start_token: usize,
}

/// One utterance to score: reference, hypothesis, and entity spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub id: String,
    #[serde(rename = "ref")]
    pub reference: String,
    pub hyp: String,
    #[serde(default)]
    pub entities: Vec<RecordEntity>,
}

/// How corpus EWER is aggregated: micro (total errored entity words over
/// total entity words) or macro (mean of per-utterance rates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EwerAggregation {
    #[default]
    Micro,
    Macro,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    #[serde(flatten)]
    pub counts: WerCounts,
    pub wer: f64,
    pub entity_words_total: usize,
    pub entity_words_errored: usize,
    /// Absent when the utterance has no entity annotations.
    pub ewer: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub utterances: Vec<UtteranceScore>,
    pub corpus: WerCounts,
    pub corpus_wer: f64,
    pub entity_words_total: usize,
    pub entity_words_errored: usize,
    /// Micro- or macro-averaged per the evaluation call; absent when no
    /// record carries entities.
    pub corpus_ewer: Option<f64>,
}

/// Normalize, align, and score every record. The corpus WER is the
/// micro-average (total edits over total reference words).
pub fn evaluate(records: &[TranscriptRecord], aggregation: EwerAggregation) -> Result<EvalReport> {
    let mut utterances = Vec::with_capacity(records.len());
    let mut corpus = WerCounts::default();
    let mut entity_words_total = 0usize;
    let mut entity_words_errored = 0usize;
    let mut per_utt_rates: Vec<f64> = Vec::new();

    for record in records {
        let ref_tokens = normalize(&record.reference);
        let hyp_tokens = normalize(&record.hyp);
        if ref_tokens.is_empty() {
            return Err(EvalError::Contract(format!(
                "utterance `{}`: reference normalizes to zero tokens",
                record.id
            )));
        }
        let ops = levenshtein_align(&ref_tokens, &hyp_tokens);
        let mut counts = WerCounts { ref_len: ref_tokens.len(), ..Default::default() };
        // per-reference-token outcome, for entity scoring
        let mut ref_outcome: Vec<bool> = vec![false; ref_tokens.len()];
        for op in &ops {
            match op {
                EditOp::Match { ref_idx, .. } => {
                    counts.matches += 1;
                    ref_outcome[*ref_idx] = true;
                }
                EditOp::Substitute { .. } => counts.substitutions += 1,
                EditOp::Delete { .. } => counts.deletions += 1,
                EditOp::Insert { .. } => counts.insertions += 1,
            }
        }

        let mut utt_total = 0usize;
        let mut utt_errored = 0usize;
        for entity in &record.entities {
            let span_tokens = normalize(&entity.text);
            if span_tokens.is_empty() {
                return Err(EvalError::InvalidSpan {
                    utterance_id: record.id.clone(),
                    detail: format!("entity {:?} normalizes to zero tokens", entity.text),
                });
            }
            let start = entity.start_token;
            let end = start + span_tokens.len();
            if end > ref_tokens.len() {
                return Err(EvalError::InvalidSpan {
                    utterance_id: record.id.clone(),
                    detail: format!(
                        "span {start}..{end} exceeds reference of {} tokens",
                        ref_tokens.len()
                    ),
                });
            }
            if ref_tokens[start..end] != span_tokens[..] {
                return Err(EvalError::InvalidSpan {
                    utterance_id: record.id.clone(),
                    detail: format!(
                        "entity {:?} does not match reference tokens {:?} at offset {start}",
                        span_tokens,
                        &ref_tokens[start..end]
                    ),
                });
            }
            utt_total += span_tokens.len();
            utt_errored += ref_outcome[start..end].iter().filter(|ok| !**ok).count();
        }

        let ewer = (utt_total > 0).then(|| utt_errored as f64 / utt_total as f64);
        if let Some(rate) = ewer {
            per_utt_rates.push(rate);
        }
        entity_words_total += utt_total;
        entity_words_errored += utt_errored;
        corpus.absorb(&counts);

        utterances.push(UtteranceScore {
            id: record.id.clone(),
            counts,
            wer: counts.wer(),
            entity_words_total: utt_total,
            entity_words_errored: utt_errored,
            ewer,
        });
    }

    let corpus_ewer = match aggregation {
        EwerAggregation::Micro => {
            (entity_words_total > 0).then(|| entity_words_errored as f64 / entity_words_total as f64)
        }
        EwerAggregation::Macro => (!per_utt_rates.is_empty())
            .then(|| per_utt_rates.iter().sum::<f64>() / per_utt_rates.len() as f64),
    };

    Ok(EvalReport {
        corpus_wer: corpus.wer(),
        utterances,
        corpus,
        entity_words_total,
        entity_words_errored,
        corpus_ewer,
    })
}

/// Parse line-delimited records (`{id, ref, hyp, entities}` per line).
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<TranscriptRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Write records in the same line-delimited format.
pub fn write_records<W: Write>(mut w: W, records: &[TranscriptRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| EvalError::Contract(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Plain-text summary table (model, WER, EWER columns).
pub fn render_summary_table(model_name: &str, report: &EvalReport) -> String {
    let ewer = report
        .corpus_ewer
        .map(|e| format!("{e:.4}"))
        .unwrap_or_else(|| "NA".to_string());
    let mut out = String::new();
    out.push_str(&format!("{:<20} {:>8} {:>8}\n", "model", "WER", "EWER"));
    out.push_str(&format!(
        "{:<20} {:>8.4} {:>8}\n",
        model_name, report.corpus_wer, ewer
    ));
    out
}
