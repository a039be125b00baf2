//! Corpus statistics: tokenization, document frequencies, the candidate
//! vocabulary, and per-sample word presence.
//!
//! Co-occurrence is defined at the sample level, so everything downstream
//! works off binary presence indicators rather than raw term counts. The
//! tokenization rule (NFKC, lowercase, split on non-alphanumeric, drop
//! tokens shorter than two characters) is deliberately simple so that the
//! embed-time and detect-time vocabularies stay consistent.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Tokenize text: NFKC-normalize, lowercase, split on non-alphanumeric
/// boundaries, drop tokens shorter than two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_min(text, 2)
}

/// Same segmentation with a configurable minimum token length; the quality
/// metrics keep single-character words.
pub(crate) fn tokenize_min(text: &str, min_chars: usize) -> Vec<String> {
    let normalized: String = text.nfkc().collect::<String>().to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in normalized.chars() {
        if c.is_alphanumeric() {
            current.push(c);
        } else if !current.is_empty() {
            if current.chars().count() >= min_chars {
                tokens.push(std::mem::take(&mut current));
            } else {
                current.clear();
            }
        }
    }
    if current.chars().count() >= min_chars {
        tokens.push(current);
    }
    tokens
}

/// Distinct token set of a document, under [`tokenize`].
pub fn token_set(text: &str) -> HashSet<String> {
    tokenize(text).into_iter().collect()
}

/// Document frequency per word: the number of documents containing the word
/// at least once (occurrences within one document count once).
pub fn document_frequencies(corpus: &Corpus) -> HashMap<String, usize> {
    let per_doc: Vec<HashSet<String>> = corpus
        .docs
        .par_iter()
        .map(|d| token_set(&d.text))
        .collect();
    let mut counts = HashMap::new();
    for set in per_doc {
        for word in set {
            *counts.entry(word).or_insert(0) += 1;
        }
    }
    counts
}

/// Words whose document frequencies rank between the top `k1` and `k2`,
/// i.e. ranks `(k1, k2]` of the descending-frequency order.
///
/// Ties are broken lexicographically so the same corpus and window always
/// yield the same word list; a stored secret key must never drift out of
/// vocabulary because of an unstable sort.
#[derive(Debug, Clone)]
pub struct CandidateVocabulary {
    words: Vec<String>,
    rank_window: (usize, usize),
    counts: HashMap<String, usize>,
    index: HashMap<String, usize>,
    fingerprint: String,
}

impl CandidateVocabulary {
    /// Columns of every downstream matrix, in rank order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Vocabulary size `T`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn rank_window(&self) -> (usize, usize) {
        self.rank_window
    }

    /// Document frequency of a retained word.
    pub fn count(&self, word: &str) -> Option<usize> {
        self.counts.get(word).copied()
    }

    /// Column index of a word, if retained.
    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// SHA-256 over the newline-joined word list; stamps every derived
    /// artifact so keys and matrices from different vocabularies cannot be
    /// mixed silently.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

fn fingerprint_words(words: &[String]) -> String {
    let mut hasher = Sha256::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            hasher.update(b"\n");
        }
        hasher.update(w.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Retain the words ranked `(k1, k2]` by descending document frequency.
pub fn candidate_vocabulary(corpus: &Corpus, k1: usize, k2: usize) -> Result<CandidateVocabulary> {
    let counts = document_frequencies(corpus);
    if k1 >= k2 {
        return Err(Error::Range(format!(
            "rank window requires k1 < k2, got ({k1}, {k2})"
        )));
    }
    if k2 > counts.len() {
        return Err(Error::Range(format!(
            "rank window ({k1}, {k2}) exceeds the {} distinct words in the corpus",
            counts.len()
        )));
    }
    let mut ranked: Vec<(&String, usize)> = counts.iter().map(|(w, &c)| (w, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let words: Vec<String> = ranked[k1..k2].iter().map(|(w, _)| (*w).clone()).collect();
    let index = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let fingerprint = fingerprint_words(&words);
    let retained: HashMap<String, usize> = words
        .iter()
        .map(|w| (w.clone(), counts[w]))
        .collect();
    Ok(CandidateVocabulary {
        words,
        rank_window: (k1, k2),
        counts: retained,
        index,
        fingerprint,
    })
}

/// Binary presence of each candidate word in each document, stored
/// column-major as bitsets so pairwise joint counts reduce to AND+popcount.
#[derive(Debug, Clone)]
pub struct PresenceMatrix {
    vocab: Arc<CandidateVocabulary>,
    n_docs: usize,
    words_per_col: usize,
    bits: Vec<u64>,
}

impl PresenceMatrix {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_words(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &Arc<CandidateVocabulary> {
        &self.vocab
    }

    /// Whether word `col` occurs in document `row`.
    pub fn get(&self, row: usize, col: usize) -> bool {
        let w = self.bits[col * self.words_per_col + row / 64];
        (w >> (row % 64)) & 1 == 1
    }

    pub(crate) fn column(&self, col: usize) -> &[u64] {
        &self.bits[col * self.words_per_col..(col + 1) * self.words_per_col]
    }

    /// Number of documents containing word `col`.
    pub fn column_count(&self, col: usize) -> usize {
        self.column(col).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of documents containing both words.
    pub(crate) fn joint_count(&self, a: usize, b: usize) -> usize {
        self.column(a)
            .iter()
            .zip(self.column(b))
            .map(|(x, y)| (x & y).count_ones() as usize)
            .sum()
    }
}

/// Build the N×T presence matrix of a corpus over a candidate vocabulary.
pub fn presence_matrix(corpus: &Corpus, vocab: &Arc<CandidateVocabulary>) -> Result<PresenceMatrix> {
    if vocab.is_empty() {
        return Err(Error::Config("candidate vocabulary is empty".into()));
    }
    let n_docs = corpus.len();
    let words_per_col = n_docs.div_ceil(64);
    let hits: Vec<Vec<usize>> = corpus
        .docs
        .par_iter()
        .map(|doc| {
            let mut cols: Vec<usize> = token_set(&doc.text)
                .iter()
                .filter_map(|w| vocab.index_of(w))
                .collect();
            cols.sort_unstable();
            cols
        })
        .collect();
    let mut bits = vec![0u64; vocab.len() * words_per_col];
    for (row, cols) in hits.iter().enumerate() {
        for &col in cols {
            bits[col * words_per_col + row / 64] |= 1u64 << (row % 64);
        }
    }
    Ok(PresenceMatrix {
        vocab: Arc::clone(vocab),
        n_docs,
        words_per_col,
        bits,
    })
}
