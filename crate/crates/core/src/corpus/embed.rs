//! GloVe-format text embeddings: one word followed by its floats per line.

use std::io::BufRead;

use crate::corpus::vocab::{Vocab, PAD_ID, UNK_ID};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub dim: usize,
    /// |vocab| x dim; row 0 (padding) and unmatched rows are all zeros.
    pub table: Tensor,
    /// Fraction of vocab words (excluding pad/unk) found in the file.
    pub coverage: f64,
    pub exact_matches: usize,
    pub lowercase_matches: usize,
}

/// Fills rows for vocab words found in the file. Matching is exact-case
/// first, then lowercased. `expected_dim` pins the dimension when known.
pub fn load_embeddings<R: BufRead>(
    reader: R,
    vocab: &Vocab,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let n = vocab.words.len();
    let mut dim = expected_dim;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut exact = vec![false; n];

    for (lineno0, line) in reader.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().ok_or_else(|| Error::Embedding(format!("line {lineno}: empty")))?;
        let vals: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::Embedding(format!("line {lineno}: bad float {p:?}")))
            })
            .collect::<Result<_>>()?;
        match dim {
            None => {
                if vals.is_empty() {
                    return Err(Error::Embedding(format!("line {lineno}: no values")));
                }
                dim = Some(vals.len());
            }
            Some(d) => {
                if vals.len() != d {
                    return Err(Error::Embedding(format!(
                        "line {lineno}: expected {d} values, got {}",
                        vals.len()
                    )));
                }
            }
        }
        // exact-case hit always wins over a lowercase fallback
        if let Some(id) = vocab.words.get(word) {
            if id != PAD_ID && id != UNK_ID {
                rows[id] = Some(vals.clone());
                exact[id] = true;
            }
        }
        let lower = word.to_lowercase();
        if lower != word {
            continue;
        }
        for (id, vocab_word) in vocab.words.items().iter().enumerate() {
            if id == PAD_ID || id == UNK_ID || exact[id] || rows[id].is_some() {
                continue;
            }
            if vocab_word.to_lowercase() == lower && vocab_word != word {
                rows[id] = Some(vals.clone());
            }
        }
    }

    let dim = dim.ok_or_else(|| Error::Embedding("empty embedding file".into()))?;
    let mut data = vec![0.0; n * dim];
    let mut exact_matches = 0;
    let mut lowercase_matches = 0;
    for (id, row) in rows.iter().enumerate() {
        if let Some(vals) = row {
            data[id * dim..(id + 1) * dim].copy_from_slice(vals);
            if exact[id] {
                exact_matches += 1;
            } else {
                lowercase_matches += 1;
            }
        }
    }
    let candidates = n.saturating_sub(2);
    let coverage = if candidates == 0 {
        0.0
    } else {
        (exact_matches + lowercase_matches) as f64 / candidates as f64
    };
    Ok(EmbeddingTable {
        dim,
        table: Tensor::from_vec(&[n, dim], data)?,
        coverage,
        exact_matches,
        lowercase_matches,
    })
}
