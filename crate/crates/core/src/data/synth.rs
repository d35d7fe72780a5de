use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Instance;
use crate::supervision::{Annotation, Mention};

const MALE: &[&str] = &[
    "Adam", "Ben", "Carl", "David", "Eric", "Frank", "George", "Henry", "Ivan", "Jack",
];
const FEMALE: &[&str] = &[
    "Anna", "Beth", "Clara", "Diana", "Emma", "Fiona", "Grace", "Helen", "Iris", "Julia",
];
const PLACES: &[&str] = &[
    "park", "market", "library", "station", "garden", "office", "harbor", "museum", "school", "bakery",
];
const VERBS: &[(&str, &str)] = &[
    ("ate", "eaten"),
    ("took", "taken"),
    ("found", "found"),
    ("broke", "broken"),
    ("painted", "painted"),
    ("sold", "sold"),
    ("bought", "bought"),
    ("washed", "washed"),
    ("moved", "moved"),
    ("hid", "hidden"),
    ("stole", "stolen"),
    ("opened", "opened"),
    ("carried", "carried"),
    ("dropped", "dropped"),
    ("cleaned", "cleaned"),
    ("kept", "kept"),
];
const OBJECTS: &[&str] = &[
    "apple", "book", "lamp", "vase", "chair", "coin", "key", "letter", "cup", "box", "ring", "hat", "map", "bell",
    "clock", "rope", "kite", "drum", "shoe", "plate",
];

/// Shape of the generated stories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub min_entities: usize,
    pub max_entities: usize,
    pub min_events: usize,
    pub max_events: usize,
    /// Chance that an event's subject is drawn from the entities a pronoun
    /// would currently resolve to.
    pub pronoun_rate: f64,
    /// Chance that the query asks about a pronoun-subject event when one
    /// exists.
    pub pronoun_query_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_entities: 2,
            max_entities: 4,
            min_events: 3,
            max_events: 6,
            pronoun_rate: 0.6,
            pronoun_query_rate: 0.8,
        }
    }
}

struct Doc {
    tokens: Vec<String>,
    ann: Annotation,
}

impl Doc {
    fn sentence(&mut self, words: &[&str], heads: &[usize], rels: &[&str], pos: &[&str], person: &[bool]) -> usize {
        let start = self.tokens.len();
        for (k, w) in words.iter().enumerate() {
            self.tokens.push(w.to_string());
            self.ann.dep_head.push(start + heads[k]);
            self.ann.dep_rel.push(rels[k].into());
            self.ann.pos.push(pos[k].into());
            self.ann
                .entities
                .as_mut()
                .expect("entities enabled")
                .push(if person[k] { "PERSON" } else { "O" }.into());
        }
        self.ann.sentences.push((start, self.tokens.len()));
        start
    }
}

struct Entity {
    name: &'static str,
    female: bool,
}

fn story(rng: &mut ChaCha8Rng, cfg: &SynthConfig, id: String) -> Instance {
    let count = rng.gen_range(cfg.min_entities..=cfg.max_entities.max(cfg.min_entities));
    let mut entities: Vec<Entity> = Vec::with_capacity(count);
    let mut males = MALE.to_vec();
    let mut females = FEMALE.to_vec();
    males.shuffle(rng);
    females.shuffle(rng);
    for _ in 0..count {
        let female = rng.gen_bool(0.5);
        let pool = if female { &mut females } else { &mut males };
        entities.push(Entity {
            name: pool.pop().expect("name pools exceed entity count"),
            female,
        });
    }

    let mut doc = Doc {
        tokens: Vec::new(),
        ann: Annotation {
            sentences: Vec::new(),
            dep_head: Vec::new(),
            dep_rel: Vec::new(),
            pos: Vec::new(),
            chains: Vec::new(),
            entities: Some(Vec::new()),
        },
    };
    let mut chains: Vec<Vec<Mention>> = vec![Vec::new(); count];
    // Most recently mentioned entity per gender: [male, female].
    let mut last: [Option<usize>; 2] = [None, None];

    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    for &e in &order {
        let place = PLACES.choose(rng).expect("nonempty");
        let start = doc.sentence(
            &[entities[e].name, "went", "to", "the", place, "."],
            &[1, 1, 1, 4, 2, 1],
            &["nsubj", "ROOT", "prep", "det", "pobj", "punct"],
            &["NNP", "VBD", "IN", "DT", "NN", "."],
            &[true, false, false, false, false, false],
        );
        chains[e].push(Mention::new(start, start + 1));
        last[entities[e].female as usize] = Some(e);
    }

    let events = rng.gen_range(cfg.min_events..=cfg.max_events.max(cfg.min_events));
    let mut objects = OBJECTS.to_vec();
    objects.shuffle(rng);
    // (subject entity, verb, object, pronoun subject)
    let mut done = Vec::with_capacity(events);
    for _ in 0..events.min(objects.len()) {
        let recent: Vec<usize> = last.iter().flatten().copied().collect();
        let e = if rng.gen_bool(cfg.pronoun_rate) {
            *recent.choose(rng).expect("every story introduces an entity")
        } else {
            rng.gen_range(0..count)
        };
        let pronoun = last[entities[e].female as usize] == Some(e);
        let subject = match (pronoun, entities[e].female) {
            (true, true) => "She",
            (true, false) => "He",
            (false, _) => entities[e].name,
        };
        let (verb, participle) = *VERBS.choose(rng).expect("nonempty");
        let object = objects.pop().expect("checked above");
        let start = doc.sentence(
            &[subject, verb, "the", object, "."],
            &[1, 1, 3, 1, 1],
            &["nsubj", "ROOT", "det", "dobj", "punct"],
            &[if pronoun { "PRP" } else { "NNP" }, "VBD", "DT", "NN", "."],
            &[!pronoun, false, false, false, false],
        );
        chains[e].push(Mention::new(start, start + 1));
        last[entities[e].female as usize] = Some(e);
        done.push((e, participle, object, pronoun));
    }

    let with_pronoun: Vec<usize> = (0..done.len()).filter(|&i| done[i].3).collect();
    let pick = if !with_pronoun.is_empty() && rng.gen_bool(cfg.pronoun_query_rate) {
        *with_pronoun.choose(rng).expect("nonempty")
    } else {
        rng.gen_range(0..done.len())
    };
    let (e, participle, object, _) = done[pick];
    doc.ann.chains = chains;
    Instance {
        id,
        context: doc.tokens,
        query: ["the", object, "was", participle, "by"].map(String::from).to_vec(),
        answer: entities[e].name.into(),
        annotation: Some(doc.ann),
    }
}

/// Deterministic synthetic coreference stories.
///
/// Each context introduces 2-4 people, then narrates events whose subject is
/// a pronoun whenever that person is the latest mention of their gender.
/// The query names an event's object and asks who did it, so answering a
/// pronoun-subject event requires resolving the pronoun.
pub fn synth_generate(count: usize, seed: u64, config: &SynthConfig) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| story(&mut rng, config, format!("synth-{seed}-{i}")))
        .collect()
}

/// Accuracy of predicting the most frequently mentioned name in each
/// context (earliest first mention wins ties).
pub fn majority_baseline(instances: &[Instance]) -> f64 {
    if instances.is_empty() {
        return 0.0;
    }
    let correct = instances
        .iter()
        .filter(|inst| {
            let mut counts: IndexMap<&str, usize> = IndexMap::new();
            let ann = inst.annotation.as_ref();
            for (i, tok) in inst.context.iter().enumerate() {
                let is_name = ann.map_or(tok.chars().next().is_some_and(char::is_uppercase), |a| {
                    a.pos[i] == "NNP"
                });
                if is_name {
                    *counts.entry(tok.as_str()).or_insert(0) += 1;
                }
            }
            let mut best: Option<(&str, usize)> = None;
            for (&tok, &c) in &counts {
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((tok, c));
                }
            }
            best.is_some_and(|(tok, _)| tok == inst.answer)
        })
        .count();
    correct as f64 / instances.len() as f64
}
