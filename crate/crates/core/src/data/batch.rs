use std::collections::BTreeMap;

use super::vocab::{Vocabulary, PAD};
use super::Instance;
use crate::supervision::{self, NarrativeConfig, SupervisionKind, SupervisionMatrix};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Padded, id-mapped view of a group of instances.
///
/// Per-instance tables (`supervision`, `windows`) are built at the padded
/// context length; pad rows carry no targets and pad positions see only
/// themselves in the window mask.
#[derive(Clone, Debug)]
pub struct Batch {
    pub ids: Vec<String>,
    pub context_tokens: Vec<Vec<String>>,
    pub query_tokens: Vec<Vec<String>>,
    pub answers: Vec<String>,
    /// (B, n_max) word ids, [`PAD`] beyond each context.
    pub context_ids: Vec<Vec<usize>>,
    /// Per-token character ids; pad tokens have none.
    pub context_chars: Vec<Vec<Vec<usize>>>,
    pub query_ids: Vec<Vec<usize>>,
    pub query_chars: Vec<Vec<Vec<usize>>>,
    /// (B, n_max) with 1 at real context positions.
    pub context_mask: Tensor,
    /// (B, m_max) with 1 at real query positions; `None` when every query
    /// is empty.
    pub query_mask: Option<Tensor>,
    pub answer_positions: Vec<Vec<usize>>,
    pub supervision: Vec<BTreeMap<SupervisionKind, SupervisionMatrix>>,
    pub windows: Vec<Option<Tensor>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn context_len(&self, b: usize) -> usize {
        self.context_tokens[b].len()
    }

    pub fn query_len(&self, b: usize) -> usize {
        self.query_tokens[b].len()
    }

    pub fn max_context_len(&self) -> usize {
        self.context_ids.first().map_or(0, Vec::len)
    }
}

fn pad_ids(tokens: &[String], vocab: &Vocabulary, width: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut ids: Vec<usize> = tokens.iter().map(|t| vocab.word_id(t)).collect();
    let mut chars: Vec<Vec<usize>> = tokens.iter().map(|t| vocab.char_ids(t)).collect();
    ids.resize(width, PAD);
    chars.resize(width, Vec::new());
    (ids, chars)
}

fn mask(lengths: &[usize], width: usize) -> Tensor {
    let mut data = vec![0.0; lengths.len() * width];
    for (b, &len) in lengths.iter().enumerate() {
        data[b * width..b * width + len].fill(1.0);
    }
    Tensor::new(&[lengths.len(), width], data).expect("nonempty batch")
}

pub fn make_batch(
    instances: &[&Instance],
    vocab: &Vocabulary,
    kinds: &[SupervisionKind],
    narrative: &NarrativeConfig,
) -> Result<Batch> {
    if instances.is_empty() {
        return Err(Error::Data("cannot batch zero instances".into()));
    }
    let n_max = instances.iter().map(|i| i.context.len()).max().unwrap_or(0);
    let m_max = instances.iter().map(|i| i.query.len()).max().unwrap_or(0);

    let mut batch = Batch {
        ids: Vec::new(),
        context_tokens: Vec::new(),
        query_tokens: Vec::new(),
        answers: Vec::new(),
        context_ids: Vec::new(),
        context_chars: Vec::new(),
        query_ids: Vec::new(),
        query_chars: Vec::new(),
        context_mask: mask(
            &instances.iter().map(|i| i.context.len()).collect::<Vec<_>>(),
            n_max.max(1),
        ),
        query_mask: (m_max > 0).then(|| mask(&instances.iter().map(|i| i.query.len()).collect::<Vec<_>>(), m_max)),
        answer_positions: Vec::new(),
        supervision: Vec::new(),
        windows: Vec::new(),
    };
    for inst in instances {
        let (ids, chars) = pad_ids(&inst.context, vocab, n_max);
        batch.context_ids.push(ids);
        batch.context_chars.push(chars);
        let (ids, chars) = pad_ids(&inst.query, vocab, m_max);
        batch.query_ids.push(ids);
        batch.query_chars.push(chars);
        batch.ids.push(inst.id.clone());
        batch.context_tokens.push(inst.context.clone());
        batch.query_tokens.push(inst.query.clone());
        batch.answers.push(inst.answer.clone());
        batch.answer_positions.push(inst.answer_positions(false));

        let mut tables = BTreeMap::new();
        let window = match &inst.annotation {
            Some(ann) => {
                for &kind in kinds {
                    let m = supervision::build(kind, ann, narrative)
                        .map_err(|e| Error::Data(format!("{}: {e}", inst.id)))?;
                    tables.insert(kind, m.resized(n_max));
                }
                let small = supervision::sentence_window_mask(ann);
                let n = inst.context.len();
                let mut full = Tensor::zeros(&[n_max, n_max]);
                for i in 0..n_max {
                    for j in 0..n_max {
                        let v = if i < n && j < n {
                            small.get(&[i, j])
                        } else {
                            (i == j) as u8 as f64
                        };
                        full.data_mut()[i * n_max + j] = v;
                    }
                }
                Some(full)
            }
            None if !kinds.is_empty() => {
                return Err(Error::Data(format!(
                    "instance {} has no annotation but supervision {} was requested",
                    inst.id,
                    kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")
                )));
            }
            None => None,
        };
        batch.supervision.push(tables);
        batch.windows.push(window);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::data::SynthConfig;

    fn plain(id: &str, n: usize) -> Instance {
        Instance {
            id: id.into(),
            context: (0..n).map(|i| format!("w{i}")).collect(),
            query: vec!["q".into(), "r".into()],
            answer: "w0".into(),
            annotation: None,
        }
    }

    #[test]
    fn padding_and_masks() {
        let a = plain("a", 7);
        let b = plain("b", 10);
        let vocab = Vocabulary::build([&a, &b], 1);
        let batch = make_batch(&[&a, &b], &vocab, &[], &NarrativeConfig::default()).unwrap();
        assert_eq!(batch.context_ids[0].len(), 10);
        assert_eq!(batch.context_ids[0][7..], [PAD; 3]);
        assert_eq!(batch.context_mask.row(0).iter().sum::<f64>(), 7.0);
        assert_eq!(batch.context_mask.row(1).iter().sum::<f64>(), 10.0);
        assert_eq!(batch.answer_positions, vec![vec![0], vec![0]]);

        let single = make_batch(&[&a], &vocab, &[], &NarrativeConfig::default()).unwrap();
        assert_eq!(single.context_ids[0].len(), 7);
        assert!(single.context_mask.data().iter().all(|&m| m == 1.0));

        assert!(make_batch(&[&a], &vocab, &[SupervisionKind::CorefAll], &NarrativeConfig::default()).is_err());
    }

    #[test]
    fn supervision_tables_match_unpadded_builders() {
        let data = synth_generate(6, 2, &SynthConfig::default());
        let refs: Vec<&Instance> = data.iter().collect();
        let vocab = Vocabulary::build(refs.iter().copied(), 1);
        let narrative = NarrativeConfig::default();
        let batch = make_batch(&refs, &vocab, &SupervisionKind::ALL, &narrative).unwrap();
        for (b, inst) in data.iter().enumerate() {
            let ann = inst.annotation.as_ref().unwrap();
            for kind in SupervisionKind::ALL {
                let direct = supervision::build(kind, ann, &narrative).unwrap();
                let padded = &batch.supervision[b][&kind];
                assert_eq!(padded.k(), direct.k());
                assert_eq!(padded.resized(inst.context.len()), direct);
            }
            let w = batch.windows[b].as_ref().unwrap();
            for i in 0..batch.max_context_len() {
                assert!(w.row(i).iter().sum::<f64>() >= 1.0);
            }
        }
    }
}
