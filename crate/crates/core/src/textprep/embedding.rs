use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};

/// Row 0: padding (all zeros).
pub const PAD_ID: u32 = 0;
/// Row 1: out-of-vocabulary vector.
pub const OOV_ID: u32 = 1;
const FIRST_WORD_ID: u32 = 2;

/// Word vectors stored row-major. Word rows start at id 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    words: HashMap<String, u32>,
    rows: Vec<f64>,
}

impl EmbeddingTable {
    /// Build from `(word, vector)` pairs; the OOV row is the mean of all word rows.
    /// Duplicate words keep their first vector.
    pub fn from_rows(dim: usize, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut table = Self {
            dim,
            words: HashMap::with_capacity(rows.len()),
            rows: vec![0.0; 2 * dim],
        };
        let mut mean = vec![0.0; dim];
        let mut count = 0usize;
        for (word, vec) in rows {
            if vec.len() != dim {
                return Err(Error::invalid(format!(
                    "vector for {word:?} has {} values, expected {dim}",
                    vec.len()
                )));
            }
            if vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("embedding row {word:?}")));
            }
            if table.words.contains_key(&word) {
                continue;
            }
            let id = FIRST_WORD_ID + count as u32;
            table.words.insert(word, id);
            mean.iter_mut().zip(&vec).for_each(|(m, v)| *m += v);
            table.rows.extend_from_slice(&vec);
            count += 1;
        }
        if count > 0 {
            for (k, m) in mean.iter().enumerate() {
                table.rows[dim + k] = m / count as f64;
            }
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of words (excluding the padding and OOV rows).
    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    /// Number of addressable rows, including padding and OOV.
    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn id(&self, word: &str) -> u32 {
        self.words.get(word).copied().unwrap_or(OOV_ID)
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let start = id as usize * self.dim;
        &self.rows[start..start + self.dim]
    }

    pub fn vector(&self, word: &str) -> &[f64] {
        self.row(self.id(word))
    }
}

/// Map the first `max_len` tokens to table ids, padding with [`PAD_ID`].
pub fn encode_sequence<S: AsRef<str>>(doc: &[S], table: &EmbeddingTable, max_len: usize) -> Result<TokenSequence> {
    if max_len == 0 {
        return Err(Error::invalid("max sequence length must be at least 1"));
    }
    let mut ids: Vec<u32> = doc.iter().take(max_len).map(|t| table.id(t.as_ref())).collect();
    let len = ids.len();
    ids.resize(max_len, PAD_ID);
    Ok(TokenSequence { ids, len })
}

/// Read the word2vec text format: a `count dim` header followed by one
/// `word v1 .. vd` line per word.
pub fn load_word2vec_text(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(err(1, "missing header".into())),
    };
    let mut parts = header.split_whitespace();
    let (count, dim) = match (
        parts.next().and_then(|s| s.parse::<usize>().ok()),
        parts.next().and_then(|s| s.parse::<usize>().ok()),
        parts.next(),
    ) {
        (Some(c), Some(d), None) if d > 0 => (c, d),
        _ => return Err(err(1, format!("bad header {header:?}, expected \"count dim\""))),
    };

    let mut rows = Vec::with_capacity(count);
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().unwrap().to_string();
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| err(lineno, format!("bad number {f:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(err(lineno, format!("expected {dim} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(lineno, "non-finite value".into()));
        }
        rows.push((word, values));
    }
    if rows.len() != count {
        return Err(err(
            rows.len() + 1,
            format!("header announces {count} vectors, found {}", rows.len()),
        ));
    }
    EmbeddingTable::from_rows(dim, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_and_computes_oov_mean() {
        let f = file("2 3\nola 1 2 3\nmundo 3 0 -1\n");
        let t = load_word2vec_text(f.path()).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.n_words(), 2);
        assert_eq!(t.vector("ola"), &[1.0, 2.0, 3.0]);
        assert_eq!(t.vector("nunca"), &[2.0, 1.0, 1.0]);
        assert_eq!(t.row(PAD_ID), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn short_row_reports_its_line() {
        let f = file("2 3\nola 1 2 3\nmundo 3 0\n");
        match load_word2vec_text(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        let f = file("1 2\nola nan 1\n");
        assert!(load_word2vec_text(f.path()).is_err());
    }

    #[test]
    fn encode_truncates_and_pads() {
        let t = EmbeddingTable::from_rows(2, vec![("a".into(), vec![1.0, 1.0])]).unwrap();
        let long: Vec<String> = (0..60).map(|_| "a".to_string()).collect();
        let s = encode_sequence(&long, &t, 50).unwrap();
        assert_eq!((s.ids.len(), s.len), (50, 50));

        let short: Vec<&str> = vec!["a"; 10];
        let s = encode_sequence(&short, &t, 25).unwrap();
        assert_eq!((s.ids.len(), s.len), (25, 10));
        assert_eq!(s.ids.iter().filter(|&&i| i == PAD_ID).count(), 15);

        let s = encode_sequence::<&str>(&[], &t, 5).unwrap();
        assert_eq!((s.ids.len(), s.len), (5, 0));

        let s = encode_sequence(&["zz"], &t, 1).unwrap();
        assert_eq!(s.ids, vec![OOV_ID]);
        assert!(encode_sequence(&["a"], &t, 0).is_err());
    }
}
