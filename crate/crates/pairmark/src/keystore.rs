//! The secret key: word pairs sampled uniformly without replacement from
//! the candidate vocabulary.
//!
//! The pair universe is the set of ORDERED distinct pairs, size T·(T−1),
//! so the sampling model matches the denominators of the detection score
//! and its false-positive bound literally. Pairs are addressed by index
//! `i·(T−1) + j'` with `j' = j` when `j < i` and `j − 1` otherwise; keys
//! are drawn by a Fisher–Yates-style partial shuffle over that virtual
//! index space using a seeded ChaCha8 stream, so the same (vocabulary,
//! d, seed) triple reproduces the same key on any platform.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::textstat::CandidateVocabulary;

/// An ordered pair of distinct candidate words. Serializes as a two-element
/// array `["first", "second"]`, the on-disk pair representation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordPair {
    pub first: String,
    pub second: String,
}

impl WordPair {
    pub fn new(first: impl Into<String>, second: impl Into<String>) -> Self {
        WordPair {
            first: first.into(),
            second: second.into(),
        }
    }
}

impl Serialize for WordPair {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        (&self.first, &self.second).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WordPair {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (first, second) = <(String, String)>::deserialize(deserializer)?;
        Ok(WordPair { first, second })
    }
}

/// The watermark identity: `d` ordered word pairs plus the fingerprint of
/// the vocabulary they were drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKey {
    pub version: u32,
    pub seed: u64,
    pub d: usize,
    pub vocab_fingerprint: String,
    pub pairs: Vec<WordPair>,
    pub created_at: DateTime<Utc>,
}

impl SecretKey {
    /// Number of pairs `d`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Error unless this key was sampled from the given vocabulary.
    pub fn check_compatible(&self, vocab: &CandidateVocabulary) -> Result<()> {
        if self.vocab_fingerprint != vocab.fingerprint() {
            return Err(Error::Incompatible(format!(
                "key fingerprint {} does not match vocabulary fingerprint {}",
                &self.vocab_fingerprint[..12.min(self.vocab_fingerprint.len())],
                &vocab.fingerprint()[..12]
            )));
        }
        Ok(())
    }

    /// SHA-256 over the pair list; safe to publish in reports (the pairs
    /// themselves never leave the key file).
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for pair in &self.pairs {
            hasher.update(pair.first.as_bytes());
            hasher.update(b"\t");
            hasher.update(pair.second.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Map an ordered-pair index in `[0, T(T-1))` back to `(i, j)`, `i ≠ j`.
pub(crate) fn decode_pair_index(index: u64, t: usize) -> (usize, usize) {
    let per_row = (t - 1) as u64;
    let i = (index / per_row) as usize;
    let r = (index % per_row) as usize;
    let j = if r < i { r } else { r + 1 };
    (i, j)
}

/// Draw `d` distinct indices uniformly from `[0, universe)` via a partial
/// Fisher–Yates shuffle over a virtual array.
pub(crate) fn sample_indices(universe: u64, d: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut swapped: HashMap<u64, u64> = HashMap::new();
    let mut picks = Vec::with_capacity(d);
    for k in 0..d as u64 {
        let r = rng.random_range(k..universe);
        let value_at_r = swapped.get(&r).copied().unwrap_or(r);
        let value_at_k = swapped.get(&k).copied().unwrap_or(k);
        picks.push(value_at_r);
        swapped.insert(r, value_at_k);
    }
    picks
}

/// Sample `d` ordered distinct pair indices over a vocabulary of size `t`.
pub(crate) fn sample_pair_indices(t: usize, d: usize, seed: u64) -> Result<Vec<u64>> {
    if t < 2 {
        return Err(Error::Range("vocabulary must contain at least 2 words".into()));
    }
    let universe = (t as u64) * (t as u64 - 1);
    if d == 0 || d as u64 > universe {
        return Err(Error::Range(format!(
            "d={d} outside the valid range 1..={universe} for T={t}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_indices(universe, d, &mut rng))
}

/// Sample a secret key of `d` word pairs, deterministic in (vocab, d, seed).
pub fn sample_key(vocab: &CandidateVocabulary, d: usize, seed: u64) -> Result<SecretKey> {
    let indices = sample_pair_indices(vocab.len(), d, seed)?;
    let words = vocab.words();
    let pairs = indices
        .iter()
        .map(|&idx| {
            let (i, j) = decode_pair_index(idx, vocab.len());
            WordPair::new(words[i].clone(), words[j].clone())
        })
        .collect();
    Ok(SecretKey {
        version: 1,
        seed,
        d,
        vocab_fingerprint: vocab.fingerprint().to_string(),
        pairs,
        created_at: Utc::now(),
    })
}

/// Resolve key pairs to column indices of the vocabulary the key was
/// sampled from.
pub fn key_pair_indices(key: &SecretKey, vocab: &Arc<CandidateVocabulary>) -> Result<Vec<(usize, usize)>> {
    key.check_compatible(vocab)?;
    key.pairs
        .iter()
        .map(|p| {
            let i = vocab
                .index_of(&p.first)
                .ok_or_else(|| Error::Incompatible(format!("key word '{}' not in vocabulary", p.first)))?;
            let j = vocab
                .index_of(&p.second)
                .ok_or_else(|| Error::Incompatible(format!("key word '{}' not in vocabulary", p.second)))?;
            Ok((i, j))
        })
        .collect()
}

/// Persist a key as JSON.
pub fn save_key(key: &SecretKey, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(key)?;
    fs::write(path.as_ref(), json)?;
    Ok(())
}

/// Load a key, validating the schema invariants (pair distinctness,
/// self-pair exclusion, d consistency).
pub fn load_key(path: impl AsRef<Path>) -> Result<SecretKey> {
    let data = fs::read_to_string(path.as_ref())?;
    let key: SecretKey = serde_json::from_str(&data)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))?;
    if key.version != 1 {
        return Err(Error::Parse(format!("unsupported key version {}", key.version)));
    }
    if key.pairs.is_empty() || key.pairs.len() != key.d {
        return Err(Error::Parse(format!(
            "key declares d={} but carries {} pairs",
            key.d,
            key.pairs.len()
        )));
    }
    let mut seen = HashSet::with_capacity(key.pairs.len());
    for pair in &key.pairs {
        if pair.first == pair.second {
            return Err(Error::Parse(format!("self-pair '{}' in key", pair.first)));
        }
        if !seen.insert((pair.first.as_str(), pair.second.as_str())) {
            return Err(Error::Parse(format!(
                "duplicate ordered pair ({}, {}) in key",
                pair.first, pair.second
            )));
        }
    }
    Ok(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document};
    use crate::textstat::candidate_vocabulary;
    use proptest::prelude::*;

    fn vocab_of(words: &[&str]) -> CandidateVocabulary {
        // one doc per word count so frequencies are distinct and ordering
        // follows the given slice
        let mut docs = Vec::new();
        for (rank, _) in words.iter().enumerate() {
            for copy in 0..(words.len() - rank) {
                let id = format!("d-{rank}-{copy}");
                docs.push(Document::new(id, words[rank].to_string()));
            }
        }
        let corpus = Corpus::new(docs, "test").unwrap();
        let v = candidate_vocabulary(&corpus, 0, words.len()).unwrap();
        assert_eq!(v.words(), words);
        v
    }

    #[test]
    fn two_word_vocab_exhausts_both_ordered_pairs() {
        let v = vocab_of(&["aa", "bb"]);
        let key = sample_key(&v, 2, 7).unwrap();
        let set: HashSet<(String, String)> = key
            .pairs
            .iter()
            .map(|p| (p.first.clone(), p.second.clone()))
            .collect();
        assert_eq!(set.len(), 2);
        assert!(set.contains(&("aa".into(), "bb".into())));
        assert!(set.contains(&("bb".into(), "aa".into())));
    }

    #[test]
    fn same_inputs_give_identical_keys() {
        let v = vocab_of(&["aa", "bb", "cc", "dd"]);
        let k1 = sample_key(&v, 5, 42).unwrap();
        let k2 = sample_key(&v, 5, 42).unwrap();
        assert_eq!(k1.pairs, k2.pairs);
        assert_eq!(k1.vocab_fingerprint, k2.vocab_fingerprint);
    }

    #[test]
    fn d_out_of_range_rejected() {
        let v = vocab_of(&["aa", "bb", "cc"]);
        assert!(matches!(sample_key(&v, 0, 1), Err(Error::Range(_))));
        assert!(matches!(sample_key(&v, 7, 1), Err(Error::Range(_))));
        assert!(sample_key(&v, 6, 1).is_ok());
    }

    #[test]
    fn pair_index_codec_covers_universe() {
        let t = 5;
        let mut seen = HashSet::new();
        for idx in 0..(t as u64 * (t as u64 - 1)) {
            let (i, j) = decode_pair_index(idx, t);
            assert_ne!(i, j);
            assert!(i < t && j < t);
            assert!(seen.insert((i, j)));
        }
        assert_eq!(seen.len(), t * (t - 1));
    }

    #[test]
    fn marginal_uniformity_monte_carlo() {
        // T=10 -> 90 ordered pairs; inclusion probability of any fixed pair
        // in a d=5 key is 5/90. Over 100k resamples the empirical frequency
        // must sit within 3 sigma of the binomial expectation.
        let t = 10;
        let d = 5;
        let trials = 100_000u32;
        let mut counts = vec![0u32; t * (t - 1)];
        for trial in 0..trials {
            let picks = sample_pair_indices(t, d, 42 ^ u64::from(trial)).unwrap();
            for idx in picks {
                counts[idx as usize] += 1;
            }
        }
        let p = d as f64 / (t * (t - 1)) as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        for (idx, &c) in counts.iter().enumerate() {
            let freq = c as f64 / trials as f64;
            assert!(
                (freq - p).abs() <= 3.0 * sigma,
                "pair {idx}: frequency {freq:.5} vs expected {p:.5} (3s={:.5})",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn save_load_round_trip() {
        let v = vocab_of(&["aa", "bb", "cc"]);
        let key = sample_key(&v, 3, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("key.json");
        save_key(&key, &path).unwrap();
        let back = load_key(&path).unwrap();
        assert_eq!(back, key);
    }

    #[test]
    fn load_against_wrong_vocabulary_is_incompatible() {
        let v1 = vocab_of(&["aa", "bb", "cc"]);
        let v2 = vocab_of(&["aa", "bb", "dd"]);
        let key = sample_key(&v1, 2, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("key.json");
        save_key(&key, &path).unwrap();
        let back = load_key(&path).unwrap();
        assert!(back.check_compatible(&v1).is_ok());
        assert!(matches!(
            back.check_compatible(&v2),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let v = vocab_of(&["aa", "bb"]);
        let key = sample_key(&v, 2, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("key.json");
        save_key(&key, &path).unwrap();
        let full = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        assert!(matches!(load_key(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn key_file_schema_uses_pair_arrays() {
        let v = vocab_of(&["aa", "bb", "cc"]);
        let key = sample_key(&v, 2, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("key.json");
        save_key(&key, &path).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(json["version"], 1);
        assert_eq!(json["seed"], 5);
        assert_eq!(json["d"], 2);
        assert!(json["vocab_fingerprint"].as_str().unwrap().len() == 64);
        let pairs = json["pairs"].as_array().unwrap();
        assert_eq!(pairs.len(), 2);
        for pair in pairs {
            let items = pair.as_array().expect("pair is a two-element array");
            assert_eq!(items.len(), 2);
            assert!(items.iter().all(|w| w.is_string()));
        }
    }

    #[test]
    fn key_fingerprint_stable_and_pair_dependent() {
        let v = vocab_of(&["aa", "bb", "cc"]);
        let k1 = sample_key(&v, 2, 5).unwrap();
        let k2 = sample_key(&v, 2, 5).unwrap();
        let k3 = sample_key(&v, 2, 6).unwrap();
        assert_eq!(k1.fingerprint(), k2.fingerprint());
        assert_ne!(k1.fingerprint(), k3.fingerprint());
    }

    proptest! {
        #[test]
        fn sampled_keys_never_contain_duplicates(seed in any::<u64>(), d in 1usize..=20) {
            let picks = sample_pair_indices(5, d, seed).unwrap();
            let set: HashSet<u64> = picks.iter().copied().collect();
            prop_assert_eq!(set.len(), picks.len());
            for &idx in &picks {
                prop_assert!(idx < 20);
            }
        }
    }
}
