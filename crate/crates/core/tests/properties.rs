//! Property tests for the structural block definition, the dependency
//! tree accessors, vocabulary construction and the raw-format codec.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sbcnn_core::blocks::{aggreg_block, seq_tokens, single_block};
use sbcnn_core::corpus::{extract_markers, parse_raw, to_raw_format, Dialect, RawInstance};
use sbcnn_core::deptree::DepTree;
use sbcnn_core::synth::{self, random_heads};

/// Definitional traversal of the block membership rule, written directly
/// against the head array rather than the tree accessors.
fn naive_block(heads: &[usize], span: (usize, usize), include_children: bool) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for tok in span.0..=span.1 {
        out.insert(tok);
        let head = heads[tok - 1];
        if head != 0 {
            out.insert(head);
            // siblings: other nodes sharing the same head
            for (i, &h) in heads.iter().enumerate() {
                if h == head && i + 1 != tok {
                    out.insert(i + 1);
                }
            }
        }
        if include_children {
            for (i, &h) in heads.iter().enumerate() {
                if h == tok {
                    out.insert(i + 1);
                }
            }
        }
    }
    out
}

fn tree_and_span(seed: u64, n: usize) -> (Vec<usize>, (usize, usize)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads = random_heads(&mut rng, n);
    let start = (seed as usize % n) + 1;
    let len = (seed as usize / 7) % 3;
    let end = (start + len).min(n);
    (heads, (start, end))
}

fn span(of: (usize, usize)) -> sbcnn_core::corpus::Span {
    sbcnn_core::corpus::Span {
        start: of.0 - 1,
        end: of.1 - 1,
    }
}

proptest! {
    #[test]
    fn block_matches_definitional_traversal(seed in 0u64..4000, n in 1usize..15) {
        let (heads, sp) = tree_and_span(seed, n);
        let tree = DepTree::new(&heads).unwrap();
        for include_children in [false, true] {
            let got = single_block(&tree, &span(sp), include_children).unwrap();
            let want = naive_block(&heads, sp, include_children);
            prop_assert_eq!(&got, &want);
        }
    }

    #[test]
    fn block_without_children_is_subset(seed in 0u64..2000, n in 1usize..15) {
        let (heads, sp) = tree_and_span(seed, n);
        let tree = DepTree::new(&heads).unwrap();
        let without = single_block(&tree, &span(sp), false).unwrap();
        let with = single_block(&tree, &span(sp), true).unwrap();
        prop_assert!(without.is_subset(&with));
    }

    #[test]
    fn block_sequence_is_sorted_unique_and_contains_entities(
        seed in 0u64..2000, n in 2usize..15
    ) {
        let (heads, sp) = tree_and_span(seed, n);
        let tree = DepTree::new(&heads).unwrap();
        let e2_tok = (seed as usize % n) / 2 + 1;
        let set = aggreg_block(&tree, &span(sp), &span((e2_tok, e2_tok)), true).unwrap();
        let seq = seq_tokens(&set);
        prop_assert!(seq.windows(2).all(|w| w[0] < w[1]));
        for t in sp.0..=sp.1 {
            prop_assert!(set.contains(&t));
        }
        prop_assert!(set.contains(&e2_tok));
        prop_assert!(seq.iter().all(|&t| (1..=n).contains(&t)));
    }

    #[test]
    fn siblings_share_a_head_and_exclude_self(seed in 0u64..1000, n in 2usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads = random_heads(&mut rng, n);
        let tree = DepTree::new(&heads).unwrap();
        for tok in 1..=n {
            let sibs = tree.siblings_of(tok).unwrap();
            let head = tree.head_of(tok).unwrap();
            for &s in &sibs {
                prop_assert_ne!(s, tok);
                prop_assert_eq!(tree.head_of(s).unwrap(), head);
            }
            // completeness: every same-head node appears
            for other in 1..=n {
                if other != tok && head.is_some() && tree.head_of(other).unwrap() == head {
                    prop_assert!(sibs.contains(&other));
                }
            }
        }
    }

    #[test]
    fn raw_format_round_trips(
        ids in proptest::collection::btree_set(1u64..10_000, 1..6),
        words in proptest::collection::vec("[a-z]{1,6}", 4..10),
        label_idx in 0usize..4,
    ) {
        let labels = ["Cause-Effect(e1,e2)", "Other", "Entity-Origin(e2,e1)", "rel"];
        let instances: Vec<RawInstance> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let mut text = words.clone();
                text[0] = format!("<e1>{}</e1>", text[0]);
                let last = text.len() - 1;
                text[last] = format!("<e2>{}</e2>", text[last]);
                RawInstance {
                    id,
                    text: text.join(" "),
                    label: labels[(label_idx + i) % labels.len()].to_string(),
                }
            })
            .collect();
        let serialized = to_raw_format(&instances);
        let parsed = parse_raw(serialized.as_bytes(), Dialect::Semeval).unwrap();
        prop_assert_eq!(parsed.len(), instances.len());
        for (a, b) in instances.iter().zip(&parsed) {
            prop_assert_eq!(a.id, b.id);
            prop_assert_eq!(&a.text, &b.text);
            prop_assert_eq!(&a.label, &b.label);
            // marker extraction agrees on the marked words
            let m = extract_markers(&b.text).unwrap();
            prop_assert_eq!(&m.e1, &words[0]);
            prop_assert_eq!(&m.e2, &words[words.len() - 1]);
        }
    }
}

#[test]
fn vocab_construction_is_deterministic_and_complete() {
    for seed in [3u64, 19, 77] {
        let corpus = synth::generate(seed, 20, 8, 5);
        let a = synth::build_dataset(&corpus).unwrap();
        let b = synth::build_dataset(&corpus).unwrap();
        assert_eq!(a.vocab.digest(), b.vocab.digest());
        assert_eq!(a.vocab.words.items(), b.vocab.words.items());
        assert_eq!(a.vocab.labels.items(), b.vocab.labels.items());
        // every training token resolves to a non-unk id
        for inst in &a.train {
            for tok in &inst.tokens {
                assert_ne!(a.vocab.word_id(&tok.form), sbcnn_core::corpus::UNK_ID);
                assert!(a.vocab.pos.get(&tok.pos).is_some());
                assert!(a.vocab.deprel.get(&tok.deprel).is_some());
            }
        }
    }
}
