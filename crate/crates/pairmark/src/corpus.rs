//! Corpus container and JSONL document I/O.
//!
//! A corpus is an ordered list of documents read from (or written to) a
//! JSONL file: one object per line, required field `text`, optional `id`
//! (auto-assigned `doc-<line#>` when missing) and optional string `meta`.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single dataset sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            meta: None,
        }
    }
}

/// An ordered, id-unique collection of documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub source_path: String,
}

#[derive(Deserialize)]
struct RawLine {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    meta: Option<BTreeMap<String, String>>,
}

impl Corpus {
    /// Build a corpus from documents, enforcing non-emptiness and id uniqueness.
    pub fn new(docs: Vec<Document>, source_path: impl Into<String>) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Parse("corpus contains no documents".into()));
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for doc in &docs {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::Parse(format!("duplicate document id '{}'", doc.id)));
            }
        }
        Ok(Corpus {
            docs,
            source_path: source_path.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Read a JSONL corpus. Lines must be UTF-8 objects with a `text` field;
    /// blank lines are rejected to keep line numbers meaningful.
    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut docs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                return Err(Error::Parse(format!(
                    "{}: blank line at {}",
                    path.display(),
                    lineno
                )));
            }
            let raw: RawLine = serde_json::from_str(&line).map_err(|e| {
                Error::Parse(format!("{}: line {}: {}", path.display(), lineno, e))
            })?;
            docs.push(Document {
                id: raw.id.unwrap_or_else(|| format!("doc-{lineno}")),
                text: raw.text,
                meta: raw.meta,
            });
        }
        Corpus::new(docs, path.display().to_string())
    }

    /// Write the corpus as JSONL with LF line endings.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path.as_ref())?);
        for doc in &self.docs {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_preserves_docs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = Corpus::new(
            vec![
                Document::new("a", "first text"),
                Document::new("b", "second \"quoted\" text"),
            ],
            "test",
        )
        .unwrap();
        corpus.write_jsonl(&path).unwrap();
        let back = Corpus::read_jsonl(&path).unwrap();
        assert_eq!(back.docs, corpus.docs);
    }

    #[test]
    fn missing_ids_are_assigned_by_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"text\":\"x\"}\n{\"text\":\"y\",\"id\":\"named\"}\n").unwrap();
        let corpus = Corpus::read_jsonl(&path).unwrap();
        assert_eq!(corpus.docs[0].id, "doc-0");
        assert_eq!(corpus.docs[1].id, "named");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let docs = vec![Document::new("x", "a"), Document::new("x", "b")];
        assert!(matches!(Corpus::new(docs, "t"), Err(Error::Parse(_))));
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(Corpus::new(vec![], "t").is_err());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"text\":\"ok\"}\nnot json\n").unwrap();
        let err = Corpus::read_jsonl(&path).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
