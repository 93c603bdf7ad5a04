//! Entity-anchored structural block detection: for every entity token,
//! take the token itself, its head, its siblings and (optionally) its
//! children, union over both entities, then rank the selection back into
//! surface order and attach word/dependency/POS ids per token.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{SentenceInstance, Span, Vocab};
use crate::deptree::DepTree;
use crate::error::{Error, Result};

/// Ranked block token indices (1-based surface order) with parallel id
/// sequences and the positions of the entity tokens inside the block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructuralBlock {
    pub indices: Vec<usize>,
    pub word_ids: Vec<usize>,
    pub role_ids: Vec<usize>,
    pub pos_ids: Vec<usize>,
    pub e1_positions: Vec<usize>,
    pub e2_positions: Vec<usize>,
}

/// Token set structurally related to one entity span. Span bounds are
/// 0-based over the token vector; the returned indices are 1-based.
pub fn single_block(tree: &DepTree, span: &Span, include_children: bool) -> Result<BTreeSet<usize>> {
    if span.end >= tree.len() {
        return Err(Error::IndexRange {
            index: span.end + 1,
            n: tree.len(),
        });
    }
    let mut out = BTreeSet::new();
    for pos in span.start..=span.end {
        let i = pos + 1;
        out.insert(i);
        if let Some(h) = tree.head_of(i)? {
            out.insert(h);
        }
        out.extend(tree.siblings_of(i)?);
        if include_children {
            out.extend(tree.children_of(i)?.iter().copied());
        }
    }
    Ok(out)
}

/// Union of the two entities' single blocks; duplicates collapse.
pub fn aggreg_block(
    tree: &DepTree,
    e1: &Span,
    e2: &Span,
    include_children: bool,
) -> Result<BTreeSet<usize>> {
    let mut out = single_block(tree, e1, include_children)?;
    out.extend(single_block(tree, e2, include_children)?);
    Ok(out)
}

/// Ranks selected indices into ascending surface order.
pub fn seq_tokens(selected: &BTreeSet<usize>) -> Vec<usize> {
    selected.iter().copied().collect()
}

/// Attaches word/dependency-label/POS ids to the ranked block tokens.
/// The "role" of a token is its dependency-relation label.
pub fn enrich(
    instance: &SentenceInstance,
    ranked: &[usize],
    vocab: &Vocab,
) -> Result<StructuralBlock> {
    let mut block = StructuralBlock {
        indices: ranked.to_vec(),
        word_ids: Vec::with_capacity(ranked.len()),
        role_ids: Vec::with_capacity(ranked.len()),
        pos_ids: Vec::with_capacity(ranked.len()),
        e1_positions: Vec::new(),
        e2_positions: Vec::new(),
    };
    for (pos, &idx) in ranked.iter().enumerate() {
        let tok = instance.tokens.get(idx - 1).ok_or(Error::IndexRange {
            index: idx,
            n: instance.tokens.len(),
        })?;
        block.word_ids.push(vocab.word_id(&tok.form));
        block.role_ids.push(vocab.deprel.get(&tok.deprel).ok_or_else(|| {
            Error::Internal(format!("deprel {:?} missing from vocab", tok.deprel))
        })?);
        block.pos_ids.push(
            vocab
                .pos
                .get(&tok.pos)
                .ok_or_else(|| Error::Internal(format!("POS {:?} missing from vocab", tok.pos)))?,
        );
        if instance.e1_span.contains(idx - 1) {
            block.e1_positions.push(pos);
        }
        if instance.e2_span.contains(idx - 1) {
            block.e2_positions.push(pos);
        }
    }
    Ok(block)
}

/// Full pipeline for one instance: tree, aggregation, ranking, enrichment.
pub fn detect(
    instance: &SentenceInstance,
    vocab: &Vocab,
    include_children: bool,
) -> Result<StructuralBlock> {
    let tree = instance.tree()?;
    let selected = aggreg_block(&tree, &instance.e1_span, &instance.e2_span, include_children)?;
    let ranked = seq_tokens(&selected);
    enrich(instance, &ranked, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Split, Token};

    fn flight_instance() -> SentenceInstance {
        let words = [
            ("I", "PRP", "nsubj", 2),
            ("prefer", "VBP", "root", 0),
            ("the", "DT", "det", 5),
            ("morning", "NN", "compound", 5),
            ("flight", "NN", "obj", 2),
            ("through", "IN", "case", 5),
            ("Denver", "NNP", "nmod", 6),
        ];
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, (f, p, d, h))| Token {
                index: i + 1,
                form: f.to_string(),
                pos: p.to_string(),
                deprel: d.to_string(),
                head: *h,
            })
            .collect();
        SentenceInstance {
            id: 1,
            tokens,
            e1_span: Span { start: 4, end: 4 }, // flight
            e2_span: Span { start: 6, end: 6 }, // Denver
            label: "Other".into(),
            label_id: 0,
            split: Split::Train,
        }
    }

    #[test]
    fn flight_block_with_children() {
        let inst = flight_instance();
        let tree = inst.tree().unwrap();
        let got = single_block(&tree, &Span { start: 4, end: 4 }, true).unwrap();
        // flight, head prefer, sibling I, children the/morning/through
        let expect: BTreeSet<usize> = [5, 2, 1, 3, 4, 6].into_iter().collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn flight_block_without_children() {
        let inst = flight_instance();
        let tree = inst.tree().unwrap();
        let got = single_block(&tree, &Span { start: 4, end: 4 }, false).unwrap();
        let expect: BTreeSet<usize> = [5, 2, 1].into_iter().collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn single_token_root_sentence() {
        let inst = SentenceInstance {
            id: 2,
            tokens: vec![Token {
                index: 1,
                form: "go".into(),
                pos: "VB".into(),
                deprel: "root".into(),
                head: 0,
            }],
            e1_span: Span { start: 0, end: 0 },
            e2_span: Span { start: 0, end: 0 },
            label: "Other".into(),
            label_id: 0,
            split: Split::Train,
        };
        let tree = inst.tree().unwrap();
        let got = single_block(&tree, &inst.e1_span, true).unwrap();
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn identical_spans_make_union_idempotent() {
        let inst = flight_instance();
        let tree = inst.tree().unwrap();
        let span = Span { start: 4, end: 4 };
        let single = single_block(&tree, &span, true).unwrap();
        let agg = aggreg_block(&tree, &span, &span, true).unwrap();
        assert_eq!(single, agg);
    }

    #[test]
    fn union_size_accounts_for_overlap() {
        let inst = flight_instance();
        let tree = inst.tree().unwrap();
        let b1 = single_block(&tree, &inst.e1_span, true).unwrap();
        let b2 = single_block(&tree, &inst.e2_span, true).unwrap();
        let agg = aggreg_block(&tree, &inst.e1_span, &inst.e2_span, true).unwrap();
        let overlap = b1.intersection(&b2).count();
        assert_eq!(agg.len(), b1.len() + b2.len() - overlap);
        // Denver's head "through" sits inside flight's block
        assert!(overlap > 0);
    }

    #[test]
    fn seq_tokens_sorts() {
        let set: BTreeSet<usize> = [5, 2, 9].into_iter().collect();
        assert_eq!(seq_tokens(&set), vec![2, 5, 9]);
    }

    #[test]
    fn enrich_produces_parallel_sequences_and_entity_positions() {
        let inst = flight_instance();
        let vocab = build_vocab(std::slice::from_ref(&inst), &[]).unwrap();
        let block = detect(&inst, &vocab, true).unwrap();
        assert_eq!(block.indices.len(), block.word_ids.len());
        assert_eq!(block.indices.len(), block.role_ids.len());
        assert_eq!(block.indices.len(), block.pos_ids.len());
        assert!(!block.e1_positions.is_empty());
        assert!(!block.e2_positions.is_empty());
        // id lookups match the vocab tables
        let fpos = block.indices.iter().position(|&i| i == 5).unwrap();
        assert_eq!(block.word_ids[fpos], vocab.words.get("flight").unwrap());
        assert_eq!(block.role_ids[fpos], vocab.deprel.get("obj").unwrap());
        assert_eq!(block.pos_ids[fpos], vocab.pos.get("NN").unwrap());
    }

    #[test]
    fn without_children_is_subset_of_with_children() {
        let inst = flight_instance();
        let tree = inst.tree().unwrap();
        let with = aggreg_block(&tree, &inst.e1_span, &inst.e2_span, true).unwrap();
        let without = aggreg_block(&tree, &inst.e1_span, &inst.e2_span, false).unwrap();
        assert!(without.is_subset(&with));
    }
}
