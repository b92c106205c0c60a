//! Character-level vocabulary over a closed alphabet.

use std::collections::HashMap;

/// Padding token id.
pub const PAD: usize = 0;
/// Beginning-of-sequence id, fed to the decoder before the first token.
pub const BOS: usize = 1;
/// End-of-sequence id, terminates generation.
pub const EOS: usize = 2;
/// Fallback id for characters outside the alphabet.
pub const UNK: usize = 3;

const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz :'-";

/// Token ↔ id map with dense ids: four specials followed by the alphabet.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    chars: Vec<char>,
    ids: HashMap<char, usize>,
}

impl Vocabulary {
    /// The closed lowercase alphabet used throughout the toy pipeline.
    pub fn char_level() -> Self {
        let chars: Vec<char> = ALPHABET.chars().collect();
        let ids = chars.iter().enumerate().map(|(i, &c)| (c, i + 4)).collect();
        Self { chars, ids }
    }

    pub fn size(&self) -> usize {
        self.chars.len() + 4
    }

    /// Lowercases and maps each character; anything outside the alphabet
    /// becomes `UNK`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars()
            .flat_map(|c| c.to_lowercase())
            .map(|c| self.ids.get(&c).copied().unwrap_or(UNK))
            .collect()
    }

    /// Inverse of [`encode`](Self::encode); special ids are skipped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter_map(|&id| id.checked_sub(4).and_then(|i| self.chars.get(i)))
            .collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::char_level()
    }
}
