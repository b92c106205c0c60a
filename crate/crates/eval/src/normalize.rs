//! Transcript normalization applied to references and hypotheses alike
//! before scoring. Five passes, in order:
//!
//! 1. disfluency removal against a filler lexicon (with elongation
//!    collapse, so "ummmm" and "ahhh" are caught),
//! 2. numeral-to-words for standalone nonnegative integers up to 999999,
//! 3. lowercasing, punctuation stripping, whitespace collapse,
//! 4. British→American spelling harmonization,
//! 5. hyphen splitting into separate tokens.
//!
//! The composite is idempotent: normalizing already-normalized text
//! changes nothing.

use crate::numwords::number_to_words;
use crate::spelling::to_american;

/// Fillers removed by step 1, already in collapsed form.
const FILLERS: &[&str] = &["um", "umm", "ummm", "uh", "uhh", "ah", "ahh", "er", "hmm"];

/// Normalize `text` into the scored token sequence.
pub fn normalize(text: &str) -> Vec<String> {
    // Punctuation stripping can expose new standalone integers ("3.5" ->
    // "35"), so the pipeline reruns until the token stream is stable.
    let mut tokens = pipeline(text);
    for _ in 0..3 {
        let again = pipeline(&tokens.join(" "));
        if again == tokens {
            break;
        }
        tokens = again;
    }
    tokens
}

fn pipeline(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for raw in text.split_whitespace() {
        // step 1: disfluency removal
        if is_filler(raw) {
            continue;
        }
        // step 2: numeral normalization on the punctuation-trimmed core
        let token = spell_standalone_integer(raw);
        // step 3: lowercase + punctuation strip (hyphens survive until
        // step 5)
        let cleaned: String = token
            .to_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '-' || *c == ' ')
            .collect();
        // steps 4 + 5: spelling per hyphen segment, then split
        for part in cleaned.split([' ', '-']) {
            if part.is_empty() {
                continue;
            }
            match to_american(part) {
                Some(us) => out.push(us.to_string()),
                None => out.push(part.to_string()),
            }
        }
    }
    out
}

/// A token is a filler if its trimmed lowercase form is in the lexicon,
/// either directly or after collapsing letter runs of three or more
/// ("ummmm" → "umm"/"um").
fn is_filler(raw: &str) -> bool {
    if raw.chars().any(|c| c.is_ascii_digit()) {
        return false;
    }
    let core: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .collect();
    if core.is_empty() {
        return false;
    }
    if FILLERS.contains(&core.as_str()) {
        return true;
    }
    let two = collapse_runs(&core, 2);
    let one = collapse_runs(&core, 1);
    FILLERS.contains(&two.as_str()) || FILLERS.contains(&one.as_str())
}

fn collapse_runs(s: &str, keep: usize) -> String {
    let mut out = String::with_capacity(s.len());
    let mut run_char = None;
    let mut run_len = 0;
    for c in s.chars() {
        if Some(c) == run_char {
            run_len += 1;
        } else {
            run_char = Some(c);
            run_len = 1;
        }
        if run_len <= keep {
            out.push(c);
        }
    }
    out
}

/// Replace a token whose punctuation-trimmed core is a standalone integer
/// (0..=999999) by its spelled-out form. Decimals, ordinals, and
/// alphanumeric mixes like "16mg" pass through untouched.
fn spell_standalone_integer(raw: &str) -> String {
    let start = raw.find(|c: char| c.is_ascii_alphanumeric());
    let end = raw.rfind(|c: char| c.is_ascii_alphanumeric());
    let (Some(start), Some(end)) = (start, end) else {
        return raw.to_string();
    };
    let core = &raw[start..=end];
    if core.is_empty() || !core.bytes().all(|b| b.is_ascii_digit()) {
        return raw.to_string();
    }
    match core.parse::<u64>().ok().and_then(number_to_words) {
        Some(words) => format!("{}{}{}", &raw[..start], words, &raw[end + 1..]),
        None => raw.to_string(),
    }
}
