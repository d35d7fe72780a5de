use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Instance;

/// Reserved id of the padding symbol, for both words and characters.
pub const PAD: usize = 0;
/// Reserved id of the unknown symbol, for both words and characters.
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Word and character maps. Ids are dense from 0 with [`PAD`] and [`UNK`]
/// reserved; words are ordered by descending count, then by token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<char>,
    min_count: usize,
    word_index: HashMap<String, usize>,
    char_index: HashMap<char, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    min_count: usize,
    words: Vec<String>,
    chars: Vec<char>,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        Self::from_parts(f.words, f.chars, f.min_count)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        Self {
            min_count: v.min_count,
            words: v.words,
            chars: v.chars,
        }
    }
}

impl Vocabulary {
    fn from_parts(words: Vec<String>, chars: Vec<char>, min_count: usize) -> Self {
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let char_index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self {
            words,
            chars,
            min_count,
            word_index,
            char_index,
        }
    }

    /// Counts context and query tokens. Characters are kept whenever their
    /// word is, so every in-vocabulary word is fully spelled.
    pub fn build<'a>(instances: impl IntoIterator<Item = &'a Instance>, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for inst in instances {
            for tok in inst.context.iter().chain(&inst.query) {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut chars: Vec<char> = kept.iter().flat_map(|(w, _)| w.chars()).collect();
        chars.sort_unstable();
        chars.dedup();

        let words = [PAD_TOKEN, UNK_TOKEN]
            .into_iter()
            .chain(kept.into_iter().map(|(w, _)| w))
            .map(String::from)
            .collect();
        // Slots 0 and 1 hold placeholders for the reserved ids.
        let chars = ['\u{0}', '\u{1}']
            .into_iter()
            .chain(chars.into_iter().filter(|&c| c > '\u{1}'))
            .collect();
        Self::from_parts(words, chars, min_count)
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn word_id(&self, token: &str) -> usize {
        self.word_index.get(token).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn char_id(&self, c: char) -> usize {
        match self.char_index.get(&c) {
            Some(&i) if i > UNK => i,
            _ => UNK,
        }
    }

    pub fn char_ids(&self, token: &str) -> Vec<usize> {
        token.chars().map(|c| self.char_id(c)).collect()
    }

    /// Non-reserved words in id order.
    pub fn words(&self) -> &[String] {
        &self.words[2..]
    }
}
