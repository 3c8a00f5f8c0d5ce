use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::{FeatureMatrix, Vocabulary};
use crate::error::{Error, Result};

/// Read a feature TSV (`word\tv1\t...\tvn`, no header).
pub fn load_features(path: impl AsRef<Path>, modality_tag: &str) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text, &path.display().to_string(), modality_tag)
}

/// Parse feature TSV text. `origin` is used in error messages.
pub fn parse_features(text: &str, origin: &str, modality_tag: &str) -> Result<FeatureMatrix> {
    let mut words = Vec::new();
    let mut values = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut width = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::RaggedRow {
                path: origin.to_string(),
                line: line_no,
                expected,
                found: fields.len(),
            });
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: line_no,
                message: "expected a word followed by at least one feature".into(),
            });
        }
        let word = fields[0].to_string();
        if word.is_empty() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: line_no,
                message: "empty word field".into(),
            });
        }
        if let Some(&first_line) = seen.get(&word) {
            return Err(Error::DuplicateWord {
                word,
                first_line,
                second_line: line_no,
            });
        }
        for field in &fields[1..] {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: origin.to_string(),
                line: line_no,
                message: format!("non-numeric field {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: line_no,
                    message: format!("non-finite field {field:?}"),
                });
            }
            values.push(v);
        }
        seen.insert(word.clone(), line_no);
        words.push(word);
    }

    let Some(width) = width else {
        return Err(Error::EmptyInput(format!("{origin}: no feature rows")));
    };
    let n = words.len();
    let vocab = Vocabulary::new(words)?;
    let data = Array2::from_shape_vec((n, width - 1), values).expect("row widths checked");
    FeatureMatrix::new(vocab, data, modality_tag)
}

/// Write a feature TSV. Values use the shortest representation that parses
/// back to the same `f64`, so a write/read cycle is exact.
pub fn write_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, features_to_string(m)).map_err(|e| Error::io(path, e))
}

pub(crate) fn features_to_string(m: &FeatureMatrix) -> String {
    let mut out = String::new();
    for (word, row) in m.vocab().words().iter().zip(m.data().rows()) {
        out.push_str(word);
        for v in row {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}
