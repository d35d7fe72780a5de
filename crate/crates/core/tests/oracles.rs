mod common;

use bidaf_sa::decode::pointer_sum_decode;
use bidaf_sa::objective::{answer_loss, supervision_loss};
use bidaf_sa::supervision::{build, NarrativeConfig, SupervisionKind};
use bidaf_sa::tensor::{Graph, Tensor};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn builders_match_oracles(seed in any::<u64>(), n in 1usize..=12) {
        let a = random_annotation(&mut rng(seed), n);
        prop_assert!(a.validate(n).is_ok());
        let cfg = NarrativeConfig::default();
        let get = |k| dense(&build(k, &a, &cfg).unwrap());
        prop_assert_eq!(get(SupervisionKind::DepParse), oracle_depparse(&a));
        prop_assert_eq!(get(SupervisionKind::CorefAll), oracle_corefall(&a));
        prop_assert_eq!(get(SupervisionKind::CorefPrev), oracle_adjacent(&a, false));
        prop_assert_eq!(get(SupervisionKind::CorefNext), oracle_adjacent(&a, true));
        prop_assert_eq!(get(SupervisionKind::Narrative), oracle_narrative(&a, &cfg));
    }

    #[test]
    fn structural_properties(seed in any::<u64>(), n in 1usize..=12) {
        let a = random_annotation(&mut rng(seed), n);
        let cfg = NarrativeConfig::default();
        let dep = build(SupervisionKind::DepParse, &a, &cfg).unwrap();
        for (i, j) in dep.entries() {
            prop_assert_eq!(a.sentence_of(i), a.sentence_of(j));
        }
        prop_assert_eq!(dep.k(), n);
        prop_assert!(build(SupervisionKind::CorefAll, &a, &cfg).unwrap().is_symmetric());
        prop_assert!(build(SupervisionKind::Narrative, &a, &cfg).unwrap().is_symmetric());
        let prev = build(SupervisionKind::CorefPrev, &a, &cfg).unwrap();
        let next = build(SupervisionKind::CorefNext, &a, &cfg).unwrap();
        prop_assert_eq!(prev.transpose().rows, next.rows);
    }

    #[test]
    fn supervision_loss_matches_double_loop(seed in any::<u64>(), n in 1usize..=8, weighted in any::<bool>()) {
        let mut r = rng(seed);
        let attn = random_attention(&mut r, n);
        let targets = random_targets(&mut r, n);
        let expected = oracle_supervision_loss(&attn, &targets, weighted);
        let mut g = Graph::new();
        let a = g.constant(attn.clone());
        let got = supervision_loss(&mut g, a, &to_matrix(SupervisionKind::CorefAll, &targets), weighted)
            .unwrap()
            .map(|v| g.value(v).item());
        match (got, expected) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-10, "{} vs {}", x, y),
            (None, None) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn decode_matches_type_summation(seed in any::<u64>(), ties in any::<bool>()) {
        let (probs, tokens) = random_decode_case(&mut rng(seed), ties);
        let p = pointer_sum_decode(&probs, &tokens).unwrap();
        let (word, mass) = oracle_decode(&probs, &tokens);
        prop_assert_eq!(&p.predicted_word, &word);
        prop_assert_eq!(p.summed_prob, mass);
        if ties {
            let first = tokens.iter().find(|t| *t == "x" || *t == "y").unwrap();
            prop_assert_eq!(&p.predicted_word, first);
        }
    }
}

#[test]
fn answer_loss_hand_values() {
    for (probs, positions, expected) in [
        (vec![0.1, 0.7, 0.2], vec![1], 0.356_674_943_938_732_4),
        (vec![0.25, 0.5, 0.25], vec![0], 1.386_294_361_119_890_6),
        (vec![0.2, 0.3, 0.2, 0.3], vec![1, 3], 0.510_825_623_765_990_7),
    ] {
        let mut g = Graph::new();
        let p = g.constant(Tensor::vector(probs));
        let l = answer_loss(&mut g, p, &positions).unwrap();
        assert!((g.value(l).item() - expected).abs() < 1e-9);
    }
}

#[test]
fn supervision_loss_hand_value() {
    let attn = Tensor::from_rows(&[vec![0.25, 0.5, 0.25], vec![0.2, 0.4, 0.4], vec![1.0 / 3.0; 3]]).unwrap();
    let targets = vec![vec![false, true, true], vec![false; 3], vec![false; 3]];
    let mut g = Graph::new();
    let a = g.constant(attn);
    let l = supervision_loss(&mut g, a, &to_matrix(SupervisionKind::CorefAll, &targets), true)
        .unwrap()
        .unwrap();
    assert!((g.value(l).item() - 0.575_364_144_903_561_8).abs() < 1e-10);
}
