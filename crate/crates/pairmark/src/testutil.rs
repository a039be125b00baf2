//! Shared helpers for unit tests.

use std::sync::Arc;

use crate::cooccur::{DeviationMatrix, TriMatrix};
use crate::corpus::{Corpus, Document};
use crate::textstat::{candidate_vocabulary, CandidateVocabulary};

/// Build a vocabulary whose rank order matches the given slice, by giving
/// earlier words strictly higher document frequencies.
pub(crate) fn vocab_of(words: &[&str]) -> Arc<CandidateVocabulary> {
    let mut docs = Vec::new();
    for (rank, word) in words.iter().enumerate() {
        for copy in 0..(words.len() - rank) {
            docs.push(Document::new(format!("d-{rank}-{copy}"), (*word).to_string()));
        }
    }
    let corpus = Corpus::new(docs, "testutil").unwrap();
    let vocab = candidate_vocabulary(&corpus, 0, words.len()).unwrap();
    assert_eq!(vocab.words(), words, "helper must reproduce the given order");
    Arc::new(vocab)
}

/// Deviation matrix with the listed unordered entries `(i, j, value, valid)`
/// set and everything else (0.0, valid).
pub(crate) fn deviation_from_entries(
    vocab: &Arc<CandidateVocabulary>,
    n_generations: usize,
    entries: &[(usize, usize, f64, bool)],
) -> DeviationMatrix {
    let t = vocab.len();
    let mut tri = TriMatrix::zeroed(t);
    for i in 1..t {
        for j in 0..i {
            tri.set(i, j, 0.0, true);
        }
    }
    for &(i, j, value, valid) in entries {
        tri.set(i, j, value, valid);
    }
    DeviationMatrix::from_tri(Arc::clone(vocab), n_generations, tri)
}
