//! Corpus records, line-delimited JSON I/O, training filters, vocabulary,
//! batching and the synthetic coreference corpus.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```json
//! {"id": "s-1", "context": ["Anna", "ate", "."], "query": ["the", "one", "who", "ate", "was"],
//!  "answer": "Anna",
//!  "annotation": {"sentences": [[0, 3]], "dep_head": [1, 1, 1],
//!                 "dep_rel": ["nsubj", "root", "punct"], "pos": ["NNP", "VBD", "."],
//!                 "chains": [[{"start": 0, "end": 1}]], "entities": ["PERSON", "O", "O"]}}
//! ```
//!
//! `annotation` may be omitted; `head` inside a mention and `entities` are
//! optional. The JSON schema lives in `docs/corpus.schema.json`.

mod batch;
mod synth;
mod vocab;

pub use batch::{make_batch, Batch};
pub use synth::{majority_baseline, synth_generate, SynthConfig};
pub use vocab::{Vocabulary, PAD, UNK};

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::supervision::Annotation;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub context: Vec<String>,
    pub query: Vec<String>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
}

impl Instance {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.context.is_empty() {
            return Err("empty context".into());
        }
        if self.answer.is_empty() {
            return Err("empty answer".into());
        }
        if let Some(ann) = &self.annotation {
            ann.validate(self.context.len()).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    /// Context positions whose token equals the answer.
    pub fn answer_positions(&self, lowercase: bool) -> Vec<usize> {
        self.context
            .iter()
            .enumerate()
            .filter(|(_, t)| same_word(t, &self.answer, lowercase))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn answer_in_context(&self) -> bool {
        self.context.contains(&self.answer)
    }
}

pub fn same_word(a: &str, b: &str, lowercase: bool) -> bool {
    if lowercase {
        a.to_lowercase() == b.to_lowercase()
    } else {
        a == b
    }
}

/// A rejected corpus line: 1-based line number and reason.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejected {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadedCorpus {
    pub instances: Vec<Instance>,
    pub rejected: Vec<Rejected>,
}

/// Streams `(line number, parsed instance or reason)` pairs, skipping blank
/// lines.
pub fn read_corpus<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::result::Result<Instance, String>)> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some((line_no, Err(e.to_string()))),
        };
        if line.trim().is_empty() {
            return None;
        }
        let parsed = serde_json::from_str::<Instance>(&line)
            .map_err(|e| format!("schema: {e}"))
            .and_then(|inst| inst.validate().map(|_| inst));
        Some((line_no, parsed))
    })
}

pub fn load_corpus(path: &Path) -> Result<LoadedCorpus> {
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open corpus {}: {e}", path.display())))?;
    let mut out = LoadedCorpus::default();
    for (line, parsed) in read_corpus(BufReader::new(file)) {
        match parsed {
            Ok(inst) => out.instances.push(inst),
            Err(reason) => {
                log::warn!("{}:{line}: {reason}", path.display());
                out.rejected.push(Rejected { line, reason });
            }
        }
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(out: W, instances: &[Instance]) -> Result<()> {
    let mut out = BufWriter::new(out);
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_corpus(path: &Path, instances: &[Instance]) -> Result<()> {
    write_corpus(File::create(path)?, instances)
}

/// Built-in stopword list, one word per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Keeps instances whose answer occurs in the context and is not a stopword
/// (case-insensitive).
pub fn filter_training<'a>(
    instances: impl IntoIterator<Item = Instance> + 'a,
    stopwords: &'a HashSet<String>,
) -> impl Iterator<Item = Instance> + 'a {
    instances
        .into_iter()
        .filter(move |i| i.answer_in_context() && !stopwords.contains(&i.answer.to_lowercase()))
}
