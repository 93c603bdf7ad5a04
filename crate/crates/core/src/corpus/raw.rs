//! The two-line SemEval2010/KBP37 text format: an id, a tab, the quoted
//! sentence with `<e1>`/`<e2>` markers; the relation label on the next
//! line; a blank-line separator. `Comment:` lines are tolerated.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialect;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInstance {
    pub id: u64,
    /// Sentence text with the entity markers kept verbatim.
    pub text: String,
    pub label: String,
}

/// Marker-stripped view of an instance text.
#[derive(Clone, Debug)]
pub struct MarkedText {
    pub clean: String,
    pub e1: String,
    pub e2: String,
    /// Byte ranges of the entities inside `clean`, half-open.
    pub e1_chars: (usize, usize),
    pub e2_chars: (usize, usize),
}

/// Strips `<e1>…</e1>` / `<e2>…</e2>` markers, validating that each appears
/// exactly once, unnested and non-overlapping.
pub fn extract_markers(text: &str) -> std::result::Result<MarkedText, String> {
    for tag in ["<e1>", "</e1>", "<e2>", "</e2>"] {
        if text.matches(tag).count() != 1 {
            return Err(format!("marker {tag} must appear exactly once"));
        }
    }
    let o1 = text.find("<e1>").unwrap();
    let c1 = text.find("</e1>").unwrap();
    let o2 = text.find("<e2>").unwrap();
    let c2 = text.find("</e2>").unwrap();
    if !(o1 < c1 && o2 < c2) {
        return Err("entity markers out of order".into());
    }
    let (first, second) = if o1 < o2 { ((o1, c1), (o2, c2)) } else { ((o2, c2), (o1, c1)) };
    if second.0 < first.1 + 5 {
        return Err("entity spans nest or overlap".into());
    }

    let mut clean = String::with_capacity(text.len());
    let mut e1_chars = (0, 0);
    let mut e2_chars = (0, 0);
    let mut rest = text;
    let mut consumed = 0usize;
    for (open, close, which) in if o1 < o2 {
        [("<e1>", "</e1>", 1), ("<e2>", "</e2>", 2)]
    } else {
        [("<e2>", "</e2>", 2), ("<e1>", "</e1>", 1)]
    } {
        let op = rest.find(open).unwrap();
        let cp = rest.find(close).unwrap();
        clean.push_str(&rest[..op]);
        let start = clean.len();
        clean.push_str(&rest[op + open.len()..cp]);
        let end = clean.len();
        if which == 1 {
            e1_chars = (start, end);
        } else {
            e2_chars = (start, end);
        }
        consumed += cp + close.len();
        rest = &text[consumed..];
    }
    clean.push_str(rest);

    let e1 = clean[e1_chars.0..e1_chars.1].to_string();
    let e2 = clean[e2_chars.0..e2_chars.1].to_string();
    if e1.trim().is_empty() || e2.trim().is_empty() {
        return Err("empty entity span".into());
    }
    Ok(MarkedText {
        clean,
        e1,
        e2,
        e1_chars,
        e2_chars,
    })
}

/// Parses a raw relation file into instances, in file order.
pub fn parse_raw<R: BufRead>(reader: R, _dialect: Dialect) -> Result<Vec<RawInstance>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut pending: Option<(usize, RawInstance)> = None;

    for (lineno0, line) in reader.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if let Some((l, _)) = &pending {
                return Err(Error::Parse {
                    line: *l,
                    msg: "instance is missing its relation label line".into(),
                });
            }
            continue;
        }
        if trimmed.starts_with("Comment") {
            continue;
        }
        match pending.take() {
            None => {
                let (id_part, text_part) = trimmed.split_once('\t').ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: "expected <id>\\t\"<sentence>\"".into(),
                })?;
                let id: u64 = id_part.trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad instance id {id_part:?}"),
                })?;
                if !seen.insert(id) {
                    return Err(Error::DuplicateId(id));
                }
                let mut text = text_part.trim();
                if text.starts_with('"') && text.ends_with('"') && text.len() >= 2 {
                    text = &text[1..text.len() - 1];
                }
                let text = text.trim().to_string();
                extract_markers(&text).map_err(|msg| Error::Parse { line: lineno, msg })?;
                pending = Some((
                    lineno,
                    RawInstance {
                        id,
                        text,
                        label: String::new(),
                    },
                ));
            }
            Some((_, mut inst)) => {
                inst.label = trimmed.to_string();
                out.push(inst);
            }
        }
    }
    if let Some((l, _)) = pending {
        return Err(Error::Parse {
            line: l,
            msg: "instance is missing its relation label line".into(),
        });
    }
    Ok(out)
}

/// Inverse of [`parse_raw`] for well-formed records.
pub fn to_raw_format(instances: &[RawInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&format!("{}\t\"{}\"\n{}\n\n", inst.id, inst.text, inst.label));
    }
    out
}
