//! Minimal CoNLL-U reader. Only the ID, FORM, UPOS (or XPOS), HEAD and
//! DEPREL columns are consumed; comments and multiword/empty-node lines
//! are skipped.

use std::io::BufRead;

use crate::corpus::Token;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ConlluSentence {
    pub tokens: Vec<Token>,
}

impl ConlluSentence {
    pub fn joined_forms(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// `use_xpos` selects the language-specific tag column instead of UPOS.
pub fn parse_conllu<R: BufRead>(reader: R, use_xpos: bool) -> Result<Vec<ConlluSentence>> {
    let mut sentences = Vec::new();
    let mut current = ConlluSentence::default();

    for (lineno0, line) in reader.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = line?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            if !current.tokens.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() < 8 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected >=8 tab-separated columns, got {}", cols.len()),
            });
        }
        // ranges (1-2) and empty nodes (1.1) carry no tree structure
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad token id {:?}", cols[0]),
        })?;
        let head: usize = cols[6].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad head {:?}", cols[6]),
        })?;
        if index != current.tokens.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("token id {index} out of sequence"),
            });
        }
        current.tokens.push(Token {
            index,
            form: cols[1].to_string(),
            pos: cols[if use_xpos { 4 } else { 3 }].to_string(),
            deprel: cols[7].to_string(),
            head,
        });
    }
    if !current.tokens.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}
