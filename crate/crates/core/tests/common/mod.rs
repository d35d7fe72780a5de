//! Brute-force oracles and random generators shared by the integration
//! tests. Nothing here calls the builders or losses it is compared with.

#![allow(dead_code)]

use bidaf_sa::supervision::{Annotation, Mention, NarrativeConfig, SupervisionMatrix};
use bidaf_sa::tensor::Tensor;
use rand::Rng;

pub mod smoke;

const RELS: [&str; 8] = ["nsubj", "dobj", "iobj", "nsubjpass", "det", "prep", "punct", "amod"];
const TAGS: [&str; 8] = ["NN", "NNP", "VBD", "VB", "VERB", "PRP", "DT", "IN"];

/// Random valid annotation over `n` tokens.
pub fn random_annotation<R: Rng>(rng: &mut R, n: usize) -> Annotation {
    let mut sentences = Vec::new();
    let mut start = 0;
    while start < n {
        let end = rng.gen_range(start + 1..=n);
        sentences.push((start, end));
        start = end;
    }
    let mut dep_head = vec![0; n];
    for &(s, e) in &sentences {
        for (t, h) in dep_head.iter_mut().enumerate().take(e).skip(s) {
            *h = if rng.gen_bool(0.2) { t } else { rng.gen_range(s..e) };
        }
    }
    let dep_rel = (0..n).map(|_| RELS[rng.gen_range(0..RELS.len())].to_string()).collect();
    let pos = (0..n).map(|_| TAGS[rng.gen_range(0..TAGS.len())].to_string()).collect();
    let chains = (0..rng.gen_range(0..=3))
        .map(|_| {
            (0..rng.gen_range(1..=4))
                .map(|_| {
                    let &(s, e) = &sentences[rng.gen_range(0..sentences.len())];
                    let a = rng.gen_range(s..e);
                    let b = rng.gen_range(a + 1..=e.min(a + 3));
                    if rng.gen_bool(0.3) {
                        Mention::with_head(a, b, rng.gen_range(a..b))
                    } else {
                        Mention::new(a, b)
                    }
                })
                .collect()
        })
        .collect();
    Annotation {
        sentences,
        dep_head,
        dep_rel,
        pos,
        chains,
        entities: None,
    }
}

pub type Dense = Vec<Vec<bool>>;

pub fn dense(m: &SupervisionMatrix) -> Dense {
    (0..m.n)
        .map(|i| (0..m.n).map(|j| m.rows[i].contains(&j)).collect())
        .collect()
}

fn head_of(a: &Annotation, m: &Mention) -> usize {
    if let Some(h) = m.head {
        return h;
    }
    for t in m.start..m.end {
        let h = a.dep_head[t];
        if h == t || h < m.start || h >= m.end {
            return t;
        }
    }
    m.end - 1
}

fn heads(a: &Annotation, chain: &[Mention]) -> Vec<usize> {
    let mut hs: Vec<usize> = chain.iter().map(|m| head_of(a, m)).collect();
    hs.sort_unstable();
    hs.dedup();
    hs
}

pub fn oracle_depparse(a: &Annotation) -> Dense {
    let n = a.dep_head.len();
    (0..n).map(|i| (0..n).map(|j| a.dep_head[i] == j).collect()).collect()
}

pub fn oracle_corefall(a: &Annotation) -> Dense {
    let n = a.dep_head.len();
    let mut t = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            t[i][j] = i != j
                && a.chains.iter().any(|c| {
                    let h = heads(a, c);
                    h.contains(&i) && h.contains(&j)
                });
        }
    }
    t
}

/// `next = false`: row `i` targets the closest earlier head of its chain.
pub fn oracle_adjacent(a: &Annotation, next: bool) -> Dense {
    let n = a.dep_head.len();
    let mut t = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            t[i][j] = a.chains.iter().any(|c| {
                let h = heads(a, c);
                let (lo, hi) = if next { (i, j) } else { (j, i) };
                h.contains(&i) && h.contains(&j) && lo < hi && !h.iter().any(|&x| lo < x && x < hi)
            });
        }
    }
    t
}

fn predicate(a: &Annotation, cfg: &NarrativeConfig, t: usize) -> Option<usize> {
    let h = a.dep_head[t];
    let verb = cfg.verb_tags.iter().any(|v| match v.strip_suffix('*') {
        Some(p) => a.pos[h].starts_with(p),
        None => a.pos[h] == *v,
    });
    (h != t && verb && cfg.argument_relations.contains(&a.dep_rel[t])).then_some(h)
}

pub fn oracle_narrative(a: &Annotation, cfg: &NarrativeConfig) -> Dense {
    let n = a.dep_head.len();
    let mut t = vec![vec![false; n]; n];
    for c in &a.chains {
        let hs = heads(a, c);
        for &x in &hs {
            for &y in &hs {
                let (Some(_), Some(py)) = (predicate(a, cfg, x), predicate(a, cfg, y)) else {
                    continue;
                };
                for i in 0..n {
                    for j in 0..n {
                        if (i == x && j == py) || (i == py && j == x) {
                            t[i][j] = true;
                        }
                    }
                }
            }
        }
    }
    t
}

/// Row-stochastic random (n, n) matrix with every entry positive.
pub fn random_attention<R: Rng>(rng: &mut R, n: usize) -> Tensor {
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n {
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let z: f64 = row.iter().sum();
        data.extend(row.iter().map(|x| x / z));
    }
    Tensor::new(&[n, n], data).unwrap()
}

pub fn random_targets<R: Rng>(rng: &mut R, n: usize) -> Dense {
    (0..n).map(|_| (0..n).map(|_| rng.gen_bool(0.25)).collect()).collect()
}

pub fn to_matrix(kind: bidaf_sa::supervision::SupervisionKind, t: &Dense) -> SupervisionMatrix {
    SupervisionMatrix {
        kind,
        n: t.len(),
        rows: t
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect())
            .collect(),
    }
}

/// Double loop over the attention and target matrices.
pub fn oracle_supervision_loss(a: &Tensor, t: &Dense, weighted: bool) -> Option<f64> {
    let n = t.len();
    let mut total = 0.0;
    let mut k = 0;
    for i in 0..n {
        let mut mass = 0.0;
        let mut count = 0.0;
        for j in 0..n {
            if t[i][j] {
                mass += a.get(&[i, j]);
                count += 1.0;
            }
        }
        if count > 0.0 {
            k += 1;
            total += -mass.ln() * if weighted { count } else { 1.0 };
        }
    }
    (k > 0).then(|| total / k as f64)
}

/// Brute-force type summation; ties go to the type seen first.
pub fn oracle_decode(probs: &[f64], tokens: &[String]) -> (String, f64) {
    let mut best: Option<(String, f64)> = None;
    for (i, t) in tokens.iter().enumerate() {
        if tokens[..i].contains(t) {
            continue;
        }
        let mut s = 0.0;
        for (j, u) in tokens.iter().enumerate() {
            if u == t {
                s += probs[j];
            }
        }
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((t.clone(), s));
        }
    }
    best.unwrap()
}

/// Random distribution over up to 12 positions. With `ties`, two word
/// types share the top summed probability exactly (probabilities are
/// multiples of 1/16).
pub fn random_decode_case<R: Rng>(rng: &mut R, ties: bool) -> (Vec<f64>, Vec<String>) {
    if ties {
        let n = rng.gen_range(2..=12);
        let u = loop {
            let u: u32 = rng.gen_range(3..=8);
            if 16 - 2 * u <= (n as u32 - 2) * (u - 1) {
                break u;
            }
        };
        let mut units = vec![0u32; n];
        units[0] = u;
        units[1] = u;
        for _ in 0..16 - 2 * u {
            let open: Vec<usize> = (2..n).filter(|&i| units[i] < u - 1).collect();
            units[open[rng.gen_range(0..open.len())]] += 1;
        }
        let mut tokens: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        tokens[0] = "x".into();
        tokens[1] = "y".into();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let probs = order.iter().map(|&i| units[i] as f64 / 16.0).collect();
        let tokens = order.iter().map(|&i| tokens[i].clone()).collect();
        return (probs, tokens);
    }
    let n = rng.gen_range(1..=12);
    let types = ["a", "b", "c", "d", "e"];
    let tokens = (0..n)
        .map(|_| types[rng.gen_range(0..types.len())].to_string())
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let z: f64 = raw.iter().sum();
    (raw.iter().map(|x| x / z).collect(), tokens)
}
