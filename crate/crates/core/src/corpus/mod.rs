//! Corpus ingestion: raw SemEval2010/KBP37 relation files, aligned CoNLL-U
//! parses, vocabularies, pretrained embeddings and dataset statistics.

mod conllu;
mod embed;
mod raw;
mod stats;
pub(crate) mod vocab;

pub use conllu::{parse_conllu, ConlluSentence};
pub use embed::{load_embeddings, EmbeddingTable};
pub use raw::{extract_markers, parse_raw, to_raw_format, MarkedText, RawInstance};
pub use stats::{dataset_stats, Stats};
pub use vocab::{build_vocab, StringTable, Vocab, DEPREL_CAPACITY, PAD_ID, POS_CAPACITY, UNK_ID};

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::deptree::DepTree;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Semeval,
    Kbp37,
}

impl std::str::FromStr for Dialect {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "semeval" => Ok(Dialect::Semeval),
            "kbp37" => Ok(Dialect::Kbp37),
            other => Err(format!("unknown dialect {other:?} (expected semeval|kbp37)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One parsed token; `index` is the 1-based surface position and `head` is
/// 0 for the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub pos: String,
    pub deprel: String,
    pub head: usize,
}

/// Inclusive 0-based range over a sentence's token vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SentenceInstance {
    pub id: u64,
    pub tokens: Vec<Token>,
    pub e1_span: Span,
    pub e2_span: Span,
    pub label: String,
    pub label_id: usize,
    pub split: Split,
}

impl SentenceInstance {
    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    pub fn tree(&self) -> Result<DepTree> {
        DepTree::new(&self.heads())
    }
}

/// Aligns one raw instance to its CoNLL-U parse: entity markers must land on
/// whole-token boundaries (case-sensitive, whitespace-insensitive match).
pub fn align_conllu(raw: &RawInstance, parse: &ConlluSentence, split: Split) -> Result<SentenceInstance> {
    let marked = extract_markers(&raw.text).map_err(|msg| Error::Parse { line: 0, msg })?;

    // non-whitespace character stream of the clean text, tagged by entity
    #[derive(Clone, Copy, PartialEq)]
    enum Tag {
        None,
        E1,
        E2,
    }
    let mut stream: Vec<(char, Tag)> = Vec::with_capacity(marked.clean.len());
    for (pos, ch) in marked.clean.char_indices() {
        if ch.is_whitespace() {
            continue;
        }
        let tag = if marked.e1_chars.0 <= pos && pos < marked.e1_chars.1 {
            Tag::E1
        } else if marked.e2_chars.0 <= pos && pos < marked.e2_chars.1 {
            Tag::E2
        } else {
            Tag::None
        };
        stream.push((ch, tag));
    }

    let mut cursor = 0usize;
    let mut e1_tokens = Vec::new();
    let mut e2_tokens = Vec::new();
    for (ti, tok) in parse.tokens.iter().enumerate() {
        let mut tags = Vec::new();
        for ch in tok.form.chars().filter(|c| !c.is_whitespace()) {
            let Some(&(sc, tag)) = stream.get(cursor) else {
                return Err(Error::Alignment {
                    id: raw.id,
                    entity: "sentence",
                    marked: marked.clean.clone(),
                    tokens: parse.joined_forms(),
                });
            };
            if sc != ch {
                return Err(Error::Alignment {
                    id: raw.id,
                    entity: "sentence",
                    marked: marked.clean.clone(),
                    tokens: parse.joined_forms(),
                });
            }
            tags.push(tag);
            cursor += 1;
        }
        let in_e1 = tags.iter().any(|&t| t == Tag::E1);
        let in_e2 = tags.iter().any(|&t| t == Tag::E2);
        let all_e1 = !tags.is_empty() && tags.iter().all(|&t| t == Tag::E1);
        let all_e2 = !tags.is_empty() && tags.iter().all(|&t| t == Tag::E2);
        if (in_e1 && !all_e1) || (in_e2 && !all_e2) || (in_e1 && in_e2) {
            return Err(Error::Alignment {
                id: raw.id,
                entity: if in_e1 { "e1" } else { "e2" },
                marked: if in_e1 {
                    marked.e1.clone()
                } else {
                    marked.e2.clone()
                },
                tokens: tok.form.clone(),
            });
        }
        if all_e1 {
            e1_tokens.push(ti);
        }
        if all_e2 {
            e2_tokens.push(ti);
        }
    }
    if cursor != stream.len() {
        return Err(Error::Alignment {
            id: raw.id,
            entity: "sentence",
            marked: marked.clean.clone(),
            tokens: parse.joined_forms(),
        });
    }

    let span_of = |toks: &[usize], entity: &'static str, text: &str| -> Result<Span> {
        if toks.is_empty() || toks.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Alignment {
                id: raw.id,
                entity,
                marked: text.to_string(),
                tokens: parse.joined_forms(),
            });
        }
        Ok(Span {
            start: toks[0],
            end: *toks.last().unwrap(),
        })
    };
    let e1_span = span_of(&e1_tokens, "e1", &marked.e1)?;
    let e2_span = span_of(&e2_tokens, "e2", &marked.e2)?;

    Ok(SentenceInstance {
        id: raw.id,
        tokens: parse.tokens.clone(),
        e1_span,
        e2_span,
        label: raw.label.clone(),
        label_id: 0, // assigned once the label vocab exists
        split,
    })
}

/// Per-instance mapping from raw id to CoNLL-U sentence index
/// (JSON-lines sidecar: `{"id": ..., "conllu_sentence_index": ...}`).
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<HashMap<u64, usize>> {
    #[derive(Deserialize)]
    struct Row {
        id: u64,
        conllu_sentence_index: usize,
    }
    let mut map = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            msg: format!("manifest: {e}"),
        })?;
        if map.insert(row.id, row.conllu_sentence_index).is_some() {
            return Err(Error::DuplicateId(row.id));
        }
    }
    Ok(map)
}

/// Aligns a whole split. Instances whose parse is malformed (alignment
/// failure, invalid tree) are skipped and reported, per the corpus-level
/// skip policy; a missing manifest means parses are taken in file order.
pub fn align_corpus(
    raws: &[RawInstance],
    parses: &[ConlluSentence],
    manifest: Option<&HashMap<u64, usize>>,
    split: Split,
) -> (Vec<SentenceInstance>, Vec<(u64, Error)>) {
    let mut out = Vec::with_capacity(raws.len());
    let mut skipped = Vec::new();
    for (i, raw) in raws.iter().enumerate() {
        let idx = match manifest {
            Some(m) => match m.get(&raw.id) {
                Some(&idx) => idx,
                None => {
                    skipped.push((raw.id, Error::MissingParse(raw.id, usize::MAX)));
                    continue;
                }
            },
            None => i,
        };
        let Some(parse) = parses.get(idx) else {
            skipped.push((raw.id, Error::MissingParse(raw.id, idx)));
            continue;
        };
        match align_conllu(raw, parse, split).and_then(|inst| {
            inst.tree()?;
            Ok(inst)
        }) {
            Ok(inst) => out.push(inst),
            Err(e) => skipped.push((raw.id, e)),
        }
    }
    (out, skipped)
}

/// An ingested corpus: aligned instances for both splits plus vocabularies.
#[derive(Serialize, Deserialize)]
pub struct Dataset {
    pub dialect: Dialect,
    pub train: Vec<SentenceInstance>,
    pub test: Vec<SentenceInstance>,
    pub vocab: Vocab,
}

impl Dataset {
    pub fn build(
        dialect: Dialect,
        mut train: Vec<SentenceInstance>,
        mut test: Vec<SentenceInstance>,
    ) -> Result<Self> {
        let vocab = build_vocab(&train, &test)?;
        for inst in train.iter_mut().chain(test.iter_mut()) {
            inst.label_id = vocab
                .labels
                .get(&inst.label)
                .ok_or_else(|| Error::Internal(format!("label {:?} missing from vocab", inst.label)))?;
        }
        Ok(Dataset {
            dialect,
            train,
            test,
            vocab,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut ds: Dataset = serde_json::from_reader(std::io::BufReader::new(file))?;
        ds.vocab.reindex();
        Ok(ds)
    }
}
