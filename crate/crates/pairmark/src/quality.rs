//! Lexical preservation between an original and a watermarked corpus:
//! n-gram overlap with the original as the denominator.
//!
//! The overlap of a document pair is the fraction of the original's
//! distinct word n-grams that survive in the modified text. It is
//! asymmetric by construction: added material never lowers the score,
//! lost material always does. Words are NFKC-lowercased alphanumeric runs;
//! unlike the corpus statistics, single-character words count here.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::textstat::tokenize_min;

fn quality_tokens(text: &str) -> Vec<String> {
    tokenize_min(text, 1)
}

fn ngram_set(tokens: &[String], n: usize) -> HashSet<&[String]> {
    tokens.windows(n).collect()
}

/// Fraction of the original's distinct n-grams present in the modified
/// text. Originals shorter than `n` words score 1 when the normalized
/// token sequences are equal and 0 otherwise.
pub fn ngram_overlap(original: &Document, modified: &Document, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    let orig_tokens = quality_tokens(&original.text);
    let mod_tokens = quality_tokens(&modified.text);
    if orig_tokens.len() < n {
        return Ok(if orig_tokens == mod_tokens { 1.0 } else { 0.0 });
    }
    let orig = ngram_set(&orig_tokens, n);
    let modified = ngram_set(&mod_tokens, n);
    let shared = orig.iter().filter(|g| modified.contains(*g)).count();
    Ok(shared as f64 / orig.len() as f64)
}

/// Per-document overlap scores. `external` is populated when a
/// semantic-similarity scores file is attached.
#[derive(Debug, Clone, Serialize)]
pub struct DocQuality {
    pub doc_id: String,
    pub ngram3: f64,
    pub ngram4: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<f64>,
}

/// Per-document and corpus-mean lexical preservation.
#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub per_doc: Vec<DocQuality>,
    pub mean_ngram3: f64,
    pub mean_ngram4: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_external: Option<f64>,
    pub doc_count: usize,
}

impl QualityReport {
    /// Attach externally computed per-document scores (e.g. embedding
    /// similarity from a separate model). This crate never computes
    /// embeddings itself; the hook only merges a scores file into the
    /// report. Every document must be covered.
    pub fn attach_external_scores(&mut self, scores: &HashMap<String, f64>) -> Result<()> {
        let mut missing: Vec<&str> = self
            .per_doc
            .iter()
            .filter(|d| !scores.contains_key(&d.doc_id))
            .map(|d| d.doc_id.as_str())
            .collect();
        if !missing.is_empty() {
            missing.sort_unstable();
            return Err(Error::Alignment(format!(
                "external scores missing for: [{}]",
                missing.join(", ")
            )));
        }
        let mut sum = 0.0;
        for doc in &mut self.per_doc {
            let score = scores[&doc.doc_id];
            doc.external = Some(score);
            sum += score;
        }
        self.mean_external = Some(sum / self.per_doc.len() as f64);
        Ok(())
    }
}

/// Read a `{doc_id: score}` JSON scores file produced by an external scorer.
pub fn read_external_scores(path: impl AsRef<std::path::Path>) -> Result<HashMap<String, f64>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))
}

/// Score every aligned document pair; corpora must contain exactly the
/// same document ids.
pub fn quality_report(original: &Corpus, modified: &Corpus) -> Result<QualityReport> {
    let modified_by_id: HashMap<&str, &Document> =
        modified.docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let original_ids: HashSet<&str> = original.docs.iter().map(|d| d.id.as_str()).collect();
    let mut missing: Vec<&str> = original_ids
        .iter()
        .filter(|id| !modified_by_id.contains_key(*id))
        .copied()
        .collect();
    let mut extra: Vec<&str> = modified_by_id
        .keys()
        .filter(|id| !original_ids.contains(*id))
        .copied()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort_unstable();
        extra.sort_unstable();
        return Err(Error::Alignment(format!(
            "document ids do not align; missing from modified: [{}], unmatched in modified: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let mut per_doc = Vec::with_capacity(original.len());
    let mut sum3 = 0.0;
    let mut sum4 = 0.0;
    for doc in &original.docs {
        let counterpart = modified_by_id[doc.id.as_str()];
        let ngram3 = ngram_overlap(doc, counterpart, 3)?;
        let ngram4 = ngram_overlap(doc, counterpart, 4)?;
        sum3 += ngram3;
        sum4 += ngram4;
        per_doc.push(DocQuality {
            doc_id: doc.id.clone(),
            ngram3,
            ngram4,
            external: None,
        });
    }
    let count = per_doc.len();
    Ok(QualityReport {
        per_doc,
        mean_ngram3: sum3 / count as f64,
        mean_ngram4: sum4 / count as f64,
        mean_external: None,
        doc_count: count,
    })
}

/// Emit `doc_id,ngram3,ngram4` rows.
pub fn write_quality_csv(report: &QualityReport, out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(["doc_id", "ngram3", "ngram4"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for row in &report.per_doc {
        writer
            .write_record([
                row.doc_id.as_str(),
                &row.ngram3.to_string(),
                &row.ngram4.to_string(),
            ])
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
