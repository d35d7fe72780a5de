//! Pointer-sum decoding, accuracy reports and prediction agreement.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{same_word, Instance};
use crate::{Error, Result};

/// Decoded answer of one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted_word: String,
    pub summed_prob: f64,
    /// Summed probability of every word type, in order of first occurrence.
    pub per_type_probs: IndexMap<String, f64>,
}

/// Sums `probs` per distinct token and returns the most probable type.
/// Ties go to the type that occurs first. Positions past `tokens.len()` are
/// ignored.
pub fn pointer_sum_decode(probs: &[f64], tokens: &[String]) -> Result<Prediction> {
    if tokens.is_empty() {
        return Err(Error::Data("cannot decode an empty context".into()));
    }
    if probs.len() < tokens.len() {
        return Err(Error::Data(format!(
            "{} probabilities for {} tokens",
            probs.len(),
            tokens.len()
        )));
    }
    let mut per_type: IndexMap<String, f64> = IndexMap::new();
    for (tok, &p) in tokens.iter().zip(probs) {
        *per_type.entry(tok.clone()).or_insert(0.0) += p;
    }
    let (mut best, mut best_p) = (0, f64::NEG_INFINITY);
    for (i, &p) in per_type.values().enumerate() {
        if p > best_p {
            best = i;
            best_p = p;
        }
    }
    let (word, &p) = per_type.get_index(best).expect("nonempty");
    Ok(Prediction {
        predicted_word: word.clone(),
        summed_prob: p,
        per_type_probs: per_type,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetPartition {
    /// Answer tagged as a pronoun vs. a noun.
    Pos,
    /// Answer labelled PERSON vs. not.
    Entity,
}

impl std::str::FromStr for SubsetPartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pos" => Ok(Self::Pos),
            "entity" | "ne" => Ok(Self::Entity),
            other => Err(Error::Config(format!("unknown subset partition `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub lowercase: bool,
    pub subsets: Vec<SubsetPartition>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub count: usize,
    pub correct: usize,
    pub unanswerable: usize,
    pub subset_accuracies: BTreeMap<String, SubsetScore>,
    /// Partitions requested but not computable from the annotation.
    pub skipped_subsets: Vec<String>,
}

fn answer_tag<'a>(inst: &'a Instance, labels: impl Fn(&'a Instance) -> Option<&'a [String]>) -> Option<&'a str> {
    let labels = labels(inst)?;
    let pos = inst.context.iter().rposition(|t| *t == inst.answer)?;
    labels.get(pos).map(String::as_str)
}

fn is_pronoun(tag: &str) -> bool {
    tag.starts_with("PRP") || tag.starts_with("WP") || tag == "PRON"
}

fn is_noun(tag: &str) -> bool {
    tag.starts_with("NN") || tag == "NOUN" || tag == "PROPN"
}

/// Subset memberships of one instance, judged at the answer's last
/// occurrence in the context.
fn subsets_of(inst: &Instance, partition: SubsetPartition) -> Option<Option<&'static str>> {
    match partition {
        SubsetPartition::Pos => {
            let tag = answer_tag(inst, |i| i.annotation.as_ref().map(|a| a.pos.as_slice()));
            inst.annotation.as_ref()?;
            Some(tag.and_then(|t| {
                if is_pronoun(t) {
                    Some("pos:pronoun")
                } else if is_noun(t) {
                    Some("pos:noun")
                } else {
                    None
                }
            }))
        }
        SubsetPartition::Entity => {
            inst.annotation.as_ref()?.entities.as_ref()?;
            let tag = answer_tag(inst, |i| i.annotation.as_ref().and_then(|a| a.entities.as_deref()));
            Some(Some(if tag == Some("PERSON") {
                "entity:person"
            } else {
                "entity:other"
            }))
        }
    }
}

/// Scores predictions against gold answers. Instances whose answer does not
/// occur in the context count as wrong.
pub fn evaluate(instances: &[Instance], predictions: &[String], options: &EvalOptions) -> Result<EvalReport> {
    if instances.len() != predictions.len() {
        return Err(Error::Data(format!(
            "{} instances but {} predictions",
            instances.len(),
            predictions.len()
        )));
    }
    let mut correct = 0;
    let mut unanswerable = 0;
    let mut tallies: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut skipped = Vec::new();
    for partition in &options.subsets {
        let name = match partition {
            SubsetPartition::Pos => "pos",
            SubsetPartition::Entity => "entity",
        };
        if instances.iter().any(|i| subsets_of(i, *partition).is_none()) {
            log::info!("subset partition `{name}` skipped: labels missing from the annotation");
            skipped.push(name.to_string());
        }
    }
    for (inst, pred) in instances.iter().zip(predictions) {
        let answerable = inst
            .context
            .iter()
            .any(|t| same_word(t, &inst.answer, options.lowercase));
        if !answerable {
            unanswerable += 1;
            log::debug!("{}: answer `{}` not in context", inst.id, inst.answer);
        }
        let hit = answerable && same_word(pred, &inst.answer, options.lowercase);
        correct += hit as usize;
        for partition in &options.subsets {
            let name = match partition {
                SubsetPartition::Pos => "pos",
                SubsetPartition::Entity => "entity",
            };
            if skipped.iter().any(|s| s == name) {
                continue;
            }
            if let Some(Some(subset)) = subsets_of(inst, *partition) {
                let t = tallies.entry(subset.to_string()).or_insert((0, 0));
                t.0 += 1;
                t.1 += hit as usize;
            }
        }
    }
    let count = instances.len();
    Ok(EvalReport {
        accuracy: if count == 0 { 0.0 } else { correct as f64 / count as f64 },
        count,
        correct,
        unanswerable,
        subset_accuracies: tallies
            .into_iter()
            .map(|(k, (n, c))| {
                (
                    k,
                    SubsetScore {
                        count: n,
                        accuracy: c as f64 / n as f64,
                    },
                )
            })
            .collect(),
        skipped_subsets: skipped,
    })
}

/// Fraction of positions where both lists predict the same string.
pub fn agreement(a: &[String], b: &[String]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Data(format!(
            "prediction lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

impl EvalReport {
    /// Plain-text table of overall and subset accuracy.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>8} {:>9}", "subset", "count", "accuracy");
        let _ = writeln!(out, "{:<16} {:>8} {:>9.4}", "all", self.count, self.accuracy);
        for (name, s) in &self.subset_accuracies {
            let _ = writeln!(out, "{:<16} {:>8} {:>9.4}", name, s.count, s.accuracy);
        }
        if self.unanswerable > 0 {
            let _ = writeln!(out, "{} instances have no answer in the context", self.unanswerable);
        }
        for name in &self.skipped_subsets {
            let _ = writeln!(out, "subset `{name}` skipped: annotation lacks the labels");
        }
        out
    }
}
