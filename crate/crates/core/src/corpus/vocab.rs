use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SentenceInstance;
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
/// One-hot width of the POS embedding segment.
pub const POS_CAPACITY: usize = 24;
/// One-hot width of the dependency-label embedding segment.
pub const DEPREL_CAPACITY: usize = 41;

/// Insertion-ordered string interner; ids are first-occurrence ranks.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StringTable {
    items: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl StringTable {
    pub fn new() -> Self {
        StringTable::default()
    }

    pub fn intern(&mut self, s: &str) -> usize {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = self.items.len();
        self.items.push(s.to_string());
        self.index.insert(s.to_string(), id);
        id
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.items.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Rebuilds the lookup map after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocab {
    /// Word ids; slot 0 is padding, slot 1 unknown.
    pub words: StringTable,
    pub pos: StringTable,
    pub deprel: StringTable,
    pub labels: StringTable,
}

impl Vocab {
    pub fn word_id(&self, form: &str) -> usize {
        self.words.get(form).unwrap_or(UNK_ID)
    }

    pub fn reindex(&mut self) {
        self.words.reindex();
        self.pos.reindex();
        self.deprel.reindex();
        self.labels.reindex();
    }

    /// Stable content digest used to tie checkpoints to their corpus.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for table in [&self.words, &self.pos, &self.deprel, &self.labels] {
            for item in table.items() {
                h.update(item.as_bytes());
                h.update([0u8]);
            }
            h.update([0xff]);
        }
        hex_string(&h.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Word vocab from the train split only (test words fall back to UNK);
/// POS/deprel/label vocabs from train plus test, first-occurrence order.
pub fn build_vocab(train: &[SentenceInstance], test: &[SentenceInstance]) -> Result<Vocab> {
    let mut words = StringTable::new();
    words.intern("<pad>");
    words.intern("<unk>");
    let mut pos = StringTable::new();
    let mut deprel = StringTable::new();
    let mut labels = StringTable::new();

    for inst in train {
        for tok in &inst.tokens {
            words.intern(&tok.form);
        }
    }
    for inst in train.iter().chain(test.iter()) {
        for tok in &inst.tokens {
            if pos.get(&tok.pos).is_none() && pos.len() == POS_CAPACITY {
                return Err(Error::TagCapacity {
                    kind: "POS",
                    tag: tok.pos.clone(),
                    cap: POS_CAPACITY,
                });
            }
            pos.intern(&tok.pos);
            if deprel.get(&tok.deprel).is_none() && deprel.len() == DEPREL_CAPACITY {
                return Err(Error::TagCapacity {
                    kind: "deprel",
                    tag: tok.deprel.clone(),
                    cap: DEPREL_CAPACITY,
                });
            }
            deprel.intern(&tok.deprel);
        }
        labels.intern(&inst.label);
    }

    Ok(Vocab {
        words,
        pos,
        deprel,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Span, Split, Token};

    fn inst(forms: &[(&str, &str, &str)], label: &str) -> SentenceInstance {
        let tokens: Vec<Token> = forms
            .iter()
            .enumerate()
            .map(|(i, (f, p, d))| Token {
                index: i + 1,
                form: f.to_string(),
                pos: p.to_string(),
                deprel: d.to_string(),
                head: if i == 0 { 0 } else { 1 },
            })
            .collect();
        SentenceInstance {
            id: 0,
            tokens,
            e1_span: Span { start: 0, end: 0 },
            e2_span: Span {
                start: forms.len() - 1,
                end: forms.len() - 1,
            },
            label: label.to_string(),
            label_id: 0,
            split: Split::Train,
        }
    }

    #[test]
    fn reserved_slots_and_first_occurrence_order() {
        let train = vec![inst(
            &[("b", "NN", "root"), ("a", "VB", "nsubj"), ("b", "NN", "obj")],
            "Other",
        )];
        let v = build_vocab(&train, &[]).unwrap();
        assert_eq!(v.words.get("<pad>"), Some(PAD_ID));
        assert_eq!(v.words.get("<unk>"), Some(UNK_ID));
        assert_eq!(v.words.get("b"), Some(2));
        assert_eq!(v.words.get("a"), Some(3));
        assert_eq!(v.pos.len(), 2);
        assert_eq!(v.deprel.len(), 3);
        assert_eq!(v.word_id("unseen"), UNK_ID);
    }

    #[test]
    fn empty_corpus_keeps_only_reserved_entries() {
        let v = build_vocab(&[], &[]).unwrap();
        assert_eq!(v.words.len(), 2);
        assert_eq!(v.pos.len(), 0);
        assert_eq!(v.deprel.len(), 0);
        assert_eq!(v.labels.len(), 0);
    }

    #[test]
    fn test_split_words_excluded_but_tags_included() {
        let train = vec![inst(&[("x", "NN", "root")], "A")];
        let test = vec![inst(&[("y", "VB", "root")], "B")];
        let v = build_vocab(&train, &test).unwrap();
        assert_eq!(v.word_id("y"), UNK_ID);
        assert!(v.pos.get("VB").is_some());
        assert!(v.labels.get("B").is_some());
        assert_eq!(v.labels.len(), 2);
    }

    #[test]
    fn pos_capacity_overflow_names_tag() {
        let tags: Vec<String> = (0..25).map(|i| format!("P{i}")).collect();
        let forms: Vec<(&str, &str, &str)> =
            tags.iter().map(|p| ("w", p.as_str(), "dep")).collect();
        let train = vec![inst(&forms, "Other")];
        match build_vocab(&train, &[]).unwrap_err() {
            Error::TagCapacity { kind, tag, cap } => {
                assert_eq!(kind, "POS");
                assert_eq!(tag, "P24");
                assert_eq!(cap, 24);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic_given_order() {
        let train = vec![
            inst(&[("m", "NN", "root"), ("n", "VB", "obj")], "A"),
            inst(&[("o", "JJ", "root")], "B"),
        ];
        let a = build_vocab(&train, &[]).unwrap();
        let b = build_vocab(&train, &[]).unwrap();
        assert_eq!(a.words.items(), b.words.items());
        assert_eq!(a.digest(), b.digest());
    }
}
