//! Linguistic annotations and the attention-target matrices built from them.
//!
//! Five target constructions are provided, each a sparse 0/1 matrix over
//! context tokens:
//!
//! - [`SupervisionKind::DepParse`]: every token points at its syntactic head
//!   (roots point at themselves).
//! - [`SupervisionKind::CorefAll`]: every pair of distinct mention heads in a
//!   coreference chain, in both directions.
//! - [`SupervisionKind::CorefPrev`] / [`SupervisionKind::CorefNext`]: each
//!   mention head points at the previous / next head of its chain.
//! - [`SupervisionKind::Narrative`]: arguments are linked, in both directions,
//!   to every predicate governing an argument of their chain.
//!
//! Within a chain, mention heads are ordered by token index and
//! deduplicated.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("sentence spans must be nonempty, ordered and cover [0, {n}); problem at span {index}")]
    BadSentenceSpans { n: usize, index: usize },
    #[error("field `{field}` has {got} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("token {token} has head {head} outside its sentence")]
    HeadOutsideSentence { token: usize, head: usize },
    #[error("chain {chain} is empty")]
    EmptyChain { chain: usize },
    #[error("mention [{start}, {end}) in chain {chain} is empty, out of range or crosses a sentence boundary")]
    BadMention { chain: usize, start: usize, end: usize },
    #[error("mention head {head} lies outside span [{start}, {end})")]
    HeadNotInSpan { head: usize, start: usize, end: usize },
    #[error("empty mention span at {0}")]
    EmptySpan(usize),
}

/// A mention: half-open token span plus an optional externally supplied head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
}

impl Mention {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end, head: None }
    }

    pub fn with_head(start: usize, end: usize, head: usize) -> Self {
        Self {
            start,
            end,
            head: Some(head),
        }
    }
}

/// Per-context linguistic annotation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    /// Half-open token ranges, one per sentence.
    pub sentences: Vec<(usize, usize)>,
    /// Syntactic head per token; roots carry their own index.
    pub dep_head: Vec<usize>,
    pub dep_rel: Vec<String>,
    pub pos: Vec<String>,
    pub chains: Vec<Vec<Mention>>,
    /// Optional named-entity label per token (`"O"` for none).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<String>>,
}

impl Annotation {
    pub fn len(&self) -> usize {
        self.dep_head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dep_head.is_empty()
    }

    /// Checks every structural invariant against a context of `n` tokens.
    pub fn validate(&self, n: usize) -> Result<(), AnnotationError> {
        let mut cursor = 0;
        for (index, &(s, e)) in self.sentences.iter().enumerate() {
            if s != cursor || e <= s || e > n {
                return Err(AnnotationError::BadSentenceSpans { n, index });
            }
            cursor = e;
        }
        if cursor != n {
            return Err(AnnotationError::BadSentenceSpans {
                n,
                index: self.sentences.len(),
            });
        }
        for (field, got) in [
            ("dep_head", self.dep_head.len()),
            ("dep_rel", self.dep_rel.len()),
            ("pos", self.pos.len()),
        ] {
            if got != n {
                return Err(AnnotationError::LengthMismatch {
                    field,
                    expected: n,
                    got,
                });
            }
        }
        if let Some(ents) = &self.entities {
            if ents.len() != n {
                return Err(AnnotationError::LengthMismatch {
                    field: "entities",
                    expected: n,
                    got: ents.len(),
                });
            }
        }
        for (token, &head) in self.dep_head.iter().enumerate() {
            if head >= n || self.sentence_of(head) != self.sentence_of(token) {
                return Err(AnnotationError::HeadOutsideSentence { token, head });
            }
        }
        for (chain, mentions) in self.chains.iter().enumerate() {
            if mentions.is_empty() {
                return Err(AnnotationError::EmptyChain { chain });
            }
            for m in mentions {
                let bad = AnnotationError::BadMention {
                    chain,
                    start: m.start,
                    end: m.end,
                };
                if m.start >= m.end || m.end > n || self.sentence_of(m.start) != self.sentence_of(m.end - 1) {
                    return Err(bad);
                }
                if let Some(h) = m.head {
                    if h < m.start || h >= m.end {
                        return Err(AnnotationError::HeadNotInSpan {
                            head: h,
                            start: m.start,
                            end: m.end,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Index of the sentence containing `token`.
    pub fn sentence_of(&self, token: usize) -> Option<usize> {
        self.sentences.iter().position(|&(s, e)| s <= token && token < e)
    }

    pub fn is_root(&self, token: usize) -> bool {
        self.dep_head[token] == token
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupervisionKind {
    DepParse,
    CorefAll,
    CorefPrev,
    CorefNext,
    Narrative,
}

impl SupervisionKind {
    pub const ALL: [SupervisionKind; 5] = [
        SupervisionKind::DepParse,
        SupervisionKind::CorefAll,
        SupervisionKind::CorefPrev,
        SupervisionKind::CorefNext,
        SupervisionKind::Narrative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SupervisionKind::DepParse => "depparse",
            SupervisionKind::CorefAll => "corefall",
            SupervisionKind::CorefPrev => "corefprev",
            SupervisionKind::CorefNext => "corefnext",
            SupervisionKind::Narrative => "narrative",
        }
    }
}

impl fmt::Display for SupervisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SupervisionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SupervisionKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown supervision type `{s}` (expected one of depparse, corefall, corefprev, corefnext, narrative)")
            })
    }
}

/// Sparse 0/1 target matrix: `rows[i]` lists the target columns of row `i`
/// in ascending order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisionMatrix {
    pub kind: SupervisionKind,
    pub n: usize,
    pub rows: Vec<Vec<usize>>,
}

impl SupervisionMatrix {
    fn from_pairs(kind: SupervisionKind, n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut sets = vec![BTreeSet::new(); n];
        for (i, j) in pairs {
            sets[i].insert(j);
        }
        Self {
            kind,
            n,
            rows: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    /// Number of rows with at least one target.
    pub fn k(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_empty()).count()
    }

    pub fn num_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    pub fn transpose(&self) -> Self {
        Self::from_pairs(self.kind, self.n, self.entries().map(|(i, j)| (j, i)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries().all(|(i, j)| self.contains(j, i))
    }

    /// Same entries viewed at size `n`: extra rows are empty; entries beyond
    /// `n` are dropped.
    pub fn resized(&self, n: usize) -> Self {
        let pairs = self.entries().filter(|&(i, j)| i < n && j < n);
        Self::from_pairs(self.kind, n, pairs.collect::<Vec<_>>())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.n, self.n]);
        for (i, j) in self.entries() {
            t.data_mut()[i * self.n + j] = 1.0;
        }
        t
    }
}

/// Relation and tag sets used to find predicate-argument pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeConfig {
    pub argument_relations: Vec<String>,
    /// POS tags marking predicates; a trailing `*` makes a prefix match.
    pub verb_tags: Vec<String>,
}

impl Default for NarrativeConfig {
    fn default() -> Self {
        Self {
            argument_relations: ["nsubj", "nsubjpass", "dobj", "obj", "iobj"].map(String::from).to_vec(),
            verb_tags: vec!["VERB".into(), "VB*".into()],
        }
    }
}

impl NarrativeConfig {
    pub fn is_verb(&self, tag: &str) -> bool {
        self.verb_tags.iter().any(|t| match t.strip_suffix('*') {
            Some(prefix) => tag.starts_with(prefix),
            None => tag == t,
        })
    }

    /// Predicate governing `token` when it is a verb argument.
    pub fn predicate_of(&self, annotation: &Annotation, token: usize) -> Option<usize> {
        let head = annotation.dep_head[token];
        let is_arg = head != token
            && self.argument_relations.iter().any(|r| *r == annotation.dep_rel[token])
            && self.is_verb(&annotation.pos[head]);
        is_arg.then_some(head)
    }
}

/// Representative token of a mention.
///
/// A supplied head wins. Otherwise the leftmost token whose syntactic head
/// lies outside the span (or which is a root) is chosen, falling back to the
/// last token of the span.
pub fn mention_head(mention: &Mention, annotation: &Annotation) -> Result<usize, AnnotationError> {
    if mention.start >= mention.end {
        return Err(AnnotationError::EmptySpan(mention.start));
    }
    if let Some(h) = mention.head {
        return Ok(h);
    }
    let span = mention.start..mention.end;
    Ok(span
        .clone()
        .find(|&t| {
            let head = annotation.dep_head[t];
            head == t || !span.contains(&head)
        })
        .unwrap_or(mention.end - 1))
}

/// Distinct mention heads of a chain, ascending.
pub fn chain_heads(chain: &[Mention], annotation: &Annotation) -> Result<Vec<usize>, AnnotationError> {
    let heads: BTreeSet<usize> = chain
        .iter()
        .map(|m| mention_head(m, annotation))
        .collect::<Result<_, _>>()?;
    Ok(heads.into_iter().collect())
}

pub fn build_depparse(annotation: &Annotation) -> Result<SupervisionMatrix, AnnotationError> {
    let n = annotation.len();
    for (token, &head) in annotation.dep_head.iter().enumerate() {
        if head >= n || annotation.sentence_of(head) != annotation.sentence_of(token) {
            return Err(AnnotationError::HeadOutsideSentence { token, head });
        }
    }
    Ok(SupervisionMatrix::from_pairs(
        SupervisionKind::DepParse,
        n,
        annotation.dep_head.iter().copied().enumerate(),
    ))
}

pub fn build_corefall(annotation: &Annotation) -> Result<SupervisionMatrix, AnnotationError> {
    let mut pairs = Vec::new();
    for chain in &annotation.chains {
        let heads = chain_heads(chain, annotation)?;
        for &a in &heads {
            pairs.extend(heads.iter().filter(|&&b| b != a).map(|&b| (a, b)));
        }
    }
    Ok(SupervisionMatrix::from_pairs(
        SupervisionKind::CorefAll,
        annotation.len(),
        pairs,
    ))
}

pub fn build_corefprev(annotation: &Annotation) -> Result<SupervisionMatrix, AnnotationError> {
    let mut pairs = Vec::new();
    for chain in &annotation.chains {
        let heads = chain_heads(chain, annotation)?;
        pairs.extend(heads.windows(2).map(|w| (w[1], w[0])));
    }
    Ok(SupervisionMatrix::from_pairs(
        SupervisionKind::CorefPrev,
        annotation.len(),
        pairs,
    ))
}

pub fn build_corefnext(annotation: &Annotation) -> Result<SupervisionMatrix, AnnotationError> {
    let mut pairs = Vec::new();
    for chain in &annotation.chains {
        let heads = chain_heads(chain, annotation)?;
        pairs.extend(heads.windows(2).map(|w| (w[0], w[1])));
    }
    Ok(SupervisionMatrix::from_pairs(
        SupervisionKind::CorefNext,
        annotation.len(),
        pairs,
    ))
}

pub fn build_narrative(
    annotation: &Annotation,
    config: &NarrativeConfig,
) -> Result<SupervisionMatrix, AnnotationError> {
    let mut pairs = Vec::new();
    for chain in &annotation.chains {
        let heads = chain_heads(chain, annotation)?;
        let args: Vec<(usize, usize)> = heads
            .iter()
            .filter_map(|&h| config.predicate_of(annotation, h).map(|p| (h, p)))
            .collect();
        for &(arg, _) in &args {
            for &(_, pred) in &args {
                pairs.push((arg, pred));
                pairs.push((pred, arg));
            }
        }
    }
    Ok(SupervisionMatrix::from_pairs(
        SupervisionKind::Narrative,
        annotation.len(),
        pairs,
    ))
}

pub fn build(
    kind: SupervisionKind,
    annotation: &Annotation,
    config: &NarrativeConfig,
) -> Result<SupervisionMatrix, AnnotationError> {
    match kind {
        SupervisionKind::DepParse => build_depparse(annotation),
        SupervisionKind::CorefAll => build_corefall(annotation),
        SupervisionKind::CorefPrev => build_corefprev(annotation),
        SupervisionKind::CorefNext => build_corefnext(annotation),
        SupervisionKind::Narrative => build_narrative(annotation, config),
    }
}

/// (n, n) 0/1 matrix with ones exactly where both tokens share a sentence.
pub fn sentence_window_mask(annotation: &Annotation) -> Tensor {
    let n = annotation.len();
    let mut t = Tensor::zeros(&[n, n]);
    for &(s, e) in &annotation.sentences {
        for i in s..e {
            t.data_mut()[i * n + s..i * n + e].fill(1.0);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(
        sentences: &[(usize, usize)],
        heads: &[usize],
        rels: &[&str],
        pos: &[&str],
        chains: Vec<Vec<Mention>>,
    ) -> Annotation {
        Annotation {
            sentences: sentences.to_vec(),
            dep_head: heads.to_vec(),
            dep_rel: rels.iter().map(|s| s.to_string()).collect(),
            pos: pos.iter().map(|s| s.to_string()).collect(),
            chains,
            entities: None,
        }
    }

    fn flat(n: usize, chains: Vec<Vec<Mention>>) -> Annotation {
        Annotation {
            sentences: vec![(0, n)],
            dep_head: vec![0; n],
            dep_rel: vec!["dep".into(); n],
            pos: vec!["NN".into(); n],
            chains,
            entities: None,
        }
    }

    fn singles(heads: &[usize]) -> Vec<Mention> {
        heads.iter().map(|&h| Mention::new(h, h + 1)).collect()
    }

    #[test]
    fn mention_head_rules() {
        // the old man sat
        let a = ann(
            &[(0, 4)],
            &[2, 2, 3, 3],
            &["det", "amod", "nsubj", "root"],
            &["DT", "JJ", "NN", "VBD"],
            vec![],
        );
        assert_eq!(mention_head(&Mention::new(0, 3), &a).unwrap(), 2);
        assert_eq!(mention_head(&Mention::new(1, 2), &a).unwrap(), 1);
        assert_eq!(mention_head(&Mention::with_head(0, 3, 1), &a).unwrap(), 1);
        assert!(mention_head(&Mention::new(2, 2), &a).is_err());
        // two tokens pointing outside the span: leftmost wins
        let noisy = ann(&[(0, 4)], &[3, 3, 1, 3], &["x"; 4], &["NN"; 4], vec![]);
        assert_eq!(mention_head(&Mention::new(0, 3), &noisy).unwrap(), 0);
        // no token qualifies: last token
        let cyc = ann(&[(0, 3)], &[1, 0, 2], &["x"; 3], &["NN"; 3], vec![]);
        assert_eq!(mention_head(&Mention::new(0, 2), &cyc).unwrap(), 1);
    }

    #[test]
    fn depparse_she_smiled() {
        let a = ann(
            &[(0, 3)],
            &[1, 1, 1],
            &["nsubj", "root", "punct"],
            &["PRP", "VBD", "."],
            vec![],
        );
        let s = build_depparse(&a).unwrap();
        assert!(s.contains(0, 1) && s.contains(2, 1) && s.contains(1, 1));
        assert_eq!((s.k(), s.num_entries()), (3, 3));

        let single = ann(&[(0, 1)], &[0], &["root"], &["VB"], vec![]);
        let s = build_depparse(&single).unwrap();
        assert_eq!(s.rows, vec![vec![0]]);
    }

    #[test]
    fn depparse_rejects_cross_sentence_head() {
        let a = ann(&[(0, 2), (2, 3)], &[1, 1, 0], &["x"; 3], &["NN"; 3], vec![]);
        assert!(matches!(
            build_depparse(&a),
            Err(AnnotationError::HeadOutsideSentence { token: 2, .. })
        ));
    }

    #[test]
    fn corefall_examples() {
        let s = build_corefall(&flat(8, vec![singles(&[0, 4])])).unwrap();
        assert!(s.contains(0, 4) && s.contains(4, 0));
        assert_eq!((s.k(), s.num_entries()), (2, 2));

        let s = build_corefall(&flat(8, vec![])).unwrap();
        assert_eq!(s.k(), 0);

        let s = build_corefall(&flat(12, vec![singles(&[2, 5, 9])])).unwrap();
        assert_eq!((s.k(), s.num_entries()), (3, 6));
        assert!(s.is_symmetric());
        assert!((0..12).all(|i| !s.contains(i, i)));
    }

    #[test]
    fn corefprev_and_next() {
        let a = flat(20, vec![singles(&[10, 2, 17]), singles(&[4])]);
        let prev = build_corefprev(&a).unwrap();
        assert_eq!(prev.entries().collect::<Vec<_>>(), vec![(10, 2), (17, 10)]);
        let next = build_corefnext(&a).unwrap();
        assert_eq!(next.entries().collect::<Vec<_>>(), vec![(2, 10), (10, 17)]);
        assert_eq!(next.transpose().rows, prev.rows);

        let two = flat(10, vec![singles(&[1, 5]), singles(&[3, 8])]);
        let prev = build_corefprev(&two).unwrap();
        assert_eq!(prev.entries().collect::<Vec<_>>(), vec![(5, 1), (8, 3)]);
        assert_eq!(prev.k(), 2);
    }

    #[test]
    fn narrative_anna_ate_she_slept() {
        // Anna ate . She slept .
        let a = ann(
            &[(0, 3), (3, 6)],
            &[1, 1, 1, 4, 4, 4],
            &["nsubj", "root", "punct", "nsubj", "root", "punct"],
            &["NNP", "VBD", ".", "PRP", "VBD", "."],
            vec![singles(&[0, 3])],
        );
        let s = build_narrative(&a, &NarrativeConfig::default()).unwrap();
        let mut expect = vec![(0, 1), (0, 4), (3, 1), (3, 4), (1, 0), (4, 0), (1, 3), (4, 3)];
        expect.sort();
        assert_eq!(s.entries().collect::<Vec<_>>(), expect);
        assert_eq!(s.k(), 4);
        assert!(s.is_symmetric());

        // singleton chain links only to its own predicate
        let single = Annotation {
            chains: vec![singles(&[0])],
            ..a.clone()
        };
        let s = build_narrative(&single, &NarrativeConfig::default()).unwrap();
        assert_eq!(s.entries().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);

        // chain of non-arguments
        let none = Annotation {
            chains: vec![singles(&[2, 5])],
            ..a
        };
        assert_eq!(build_narrative(&none, &NarrativeConfig::default()).unwrap().k(), 0);
    }

    #[test]
    fn window_mask_blocks() {
        let a = ann(&[(0, 3), (3, 5)], &[0, 0, 0, 3, 3], &["x"; 5], &["NN"; 5], vec![]);
        let m = sentence_window_mask(&a);
        for i in 0..5 {
            for j in 0..5 {
                let same = (i < 3) == (j < 3);
                assert_eq!(m.get(&[i, j]), if same { 1.0 } else { 0.0 });
            }
        }
        let one = flat(4, vec![]);
        assert!(sentence_window_mask(&one).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn validation_catches_bad_mentions() {
        let mut a = ann(
            &[(0, 2), (2, 4)],
            &[0, 0, 2, 2],
            &["x"; 4],
            &["NN"; 4],
            vec![vec![Mention::new(1, 3)]],
        );
        assert!(matches!(a.validate(4), Err(AnnotationError::BadMention { .. })));
        a.chains = vec![vec![Mention::new(2, 9)]];
        assert!(a.validate(4).is_err());
        a.chains = vec![vec![]];
        assert!(matches!(a.validate(4), Err(AnnotationError::EmptyChain { chain: 0 })));
        a.chains = vec![vec![Mention::new(2, 4)]];
        assert!(a.validate(4).is_ok());
        assert!(a.validate(5).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "CorefAll".parse::<SupervisionKind>().unwrap(),
            SupervisionKind::CorefAll
        );
        assert!("coref".parse::<SupervisionKind>().is_err());
    }
}
