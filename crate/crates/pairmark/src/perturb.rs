//! Robustness stress transforms: random word deletion, synonym
//! substitution, and emoji insertion at a modification ratio `r`.
//!
//! All three operate on whitespace words of the surface text. With
//! `n` words, deletion removes exactly `floor(r*n)` positions, synonym
//! substitution rewrites `floor(r*n)` mappable positions (all of them when
//! fewer are mappable), and emoji insertion adds `floor(r*n)` emoji tokens
//! at uniformly chosen inter-word gaps. Everything is deterministic given
//! the seed; corpus perturbation gives document `i` its own RNG stream so
//! documents never influence each other.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

/// 32 common emojis used when no custom set is supplied.
pub const DEFAULT_EMOJI: [&str; 32] = [
    "😀", "😁", "😂", "🤣", "😃", "😄", "😅", "😊", "😉", "😍", "😎", "😢", "😭", "😡", "🤔",
    "🙄", "😴", "🤯", "👍", "👎", "👏", "🙏", "💪", "🔥", "✨", "🎉", "🎊", "💡", "🚀", "🌟",
    "🍀", "🎈",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbKind {
    Deletion,
    Synonym,
    Emoji,
}

/// Configuration of one perturbation pass.
#[derive(Debug, Clone)]
pub struct PerturbConfig {
    pub kind: PerturbKind,
    pub ratio: f64,
    pub seed: u64,
    /// Required for synonym substitution; keys are matched against the
    /// lowercased whitespace token.
    pub synonym_map: Option<HashMap<String, String>>,
    pub emoji_set: Vec<String>,
}

impl PerturbConfig {
    pub fn new(kind: PerturbKind, ratio: f64, seed: u64) -> Self {
        PerturbConfig {
            kind,
            ratio,
            seed,
            synonym_map: None,
            emoji_set: DEFAULT_EMOJI.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_synonyms(mut self, map: HashMap<String, String>) -> Self {
        self.synonym_map = Some(map);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::Config(format!(
                "ratio {} outside [0, 1]",
                self.ratio
            )));
        }
        if self.kind == PerturbKind::Synonym
            && self.synonym_map.as_ref().is_none_or(|m| m.is_empty())
        {
            return Err(Error::Config(
                "synonym substitution requires a non-empty synonym map".into(),
            ));
        }
        if self.kind == PerturbKind::Emoji && self.emoji_set.is_empty() {
            return Err(Error::Config("emoji insertion requires a non-empty emoji set".into()));
        }
        Ok(())
    }
}

fn perturb_with_rng(doc: &Document, cfg: &PerturbConfig, rng: &mut ChaCha8Rng) -> Document {
    let words: Vec<&str> = doc.text.split_whitespace().collect();
    let n = words.len();
    let count = (cfg.ratio * n as f64).floor() as usize;
    if count == 0 {
        return doc.clone();
    }
    let text = match cfg.kind {
        PerturbKind::Deletion => {
            let mut drop = vec![false; n];
            for i in index::sample(rng, n, count) {
                drop[i] = true;
            }
            words
                .iter()
                .zip(&drop)
                .filter_map(|(w, &d)| (!d).then_some(*w))
                .collect::<Vec<_>>()
                .join(" ")
        }
        PerturbKind::Synonym => {
            let map = cfg.synonym_map.as_ref().expect("validated");
            let mappable: Vec<usize> = (0..n)
                .filter(|&i| map.contains_key(&words[i].to_lowercase()))
                .collect();
            let n_sub = count.min(mappable.len());
            let mut out: Vec<&str> = words.clone();
            if n_sub > 0 {
                for pick in index::sample(rng, mappable.len(), n_sub) {
                    let i = mappable[pick];
                    out[i] = map[&words[i].to_lowercase()].as_str();
                }
            }
            out.join(" ")
        }
        PerturbKind::Emoji => {
            // gaps 0..=n: before the first word, between words, after the last
            let mut inserts: Vec<Vec<&str>> = vec![Vec::new(); n + 1];
            for _ in 0..count {
                let gap = rng.random_range(0..=n);
                let emoji = &cfg.emoji_set[rng.random_range(0..cfg.emoji_set.len())];
                inserts[gap].push(emoji.as_str());
            }
            let mut out: Vec<&str> = Vec::with_capacity(n + count);
            for (i, word) in words.iter().enumerate() {
                out.extend(&inserts[i]);
                out.push(word);
            }
            out.extend(&inserts[n]);
            out.join(" ")
        }
    };
    Document {
        id: doc.id.clone(),
        text,
        meta: doc.meta.clone(),
    }
}

/// Perturb one document, deterministic in `cfg.seed`.
pub fn perturb_document(doc: &Document, cfg: &PerturbConfig) -> Result<Document> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(perturb_with_rng(doc, cfg, &mut rng))
}

/// Perturb every document independently; document `i` uses RNG stream `i`
/// of the seed, so the first document matches [`perturb_document`].
pub fn perturb_corpus(corpus: &Corpus, cfg: &PerturbConfig) -> Result<Corpus> {
    cfg.validate()?;
    let docs = corpus
        .docs
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            perturb_with_rng(doc, cfg, &mut rng)
        })
        .collect();
    Corpus::new(docs, corpus.source_path.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document::new("d", text)
    }

    fn ten_words() -> Document {
        doc("one two three four five six seven eight nine ten")
    }

    #[test]
    fn deletion_removes_exactly_floor_r_n() {
        let cfg = PerturbConfig::new(PerturbKind::Deletion, 0.2, 1);
        let out = perturb_document(&ten_words(), &cfg).unwrap();
        assert_eq!(out.text.split_whitespace().count(), 8);
    }

    #[test]
    fn ratio_zero_is_byte_identity() {
        for kind in [PerturbKind::Deletion, PerturbKind::Emoji] {
            let cfg = PerturbConfig::new(kind, 0.0, 1);
            let original = doc("spaced   oddly\ttext");
            let out = perturb_document(&original, &cfg).unwrap();
            assert_eq!(out, original);
        }
    }

    #[test]
    fn emoji_insertion_reproducible_and_exact() {
        let cfg = PerturbConfig::new(PerturbKind::Emoji, 0.3, 42);
        let a = perturb_document(&ten_words(), &cfg).unwrap();
        let b = perturb_document(&ten_words(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.text.split_whitespace().count(), 13);
        let emojis: Vec<&str> = a
            .text
            .split_whitespace()
            .filter(|t| DEFAULT_EMOJI.contains(t))
            .collect();
        assert_eq!(emojis.len(), 3);
    }

    #[test]
    fn synonym_preserves_word_count_and_substitutes_mappable() {
        let map = HashMap::from([
            ("two".to_string(), "pair".to_string()),
            ("five".to_string(), "fist".to_string()),
            ("nine".to_string(), "nein".to_string()),
        ]);
        let cfg = PerturbConfig::new(PerturbKind::Synonym, 0.2, 9).with_synonyms(map);
        let out = perturb_document(&ten_words(), &cfg).unwrap();
        let words: Vec<&str> = out.text.split_whitespace().collect();
        assert_eq!(words.len(), 10);
        let substituted = words
            .iter()
            .filter(|w| ["pair", "fist", "nein"].contains(*w))
            .count();
        // floor(0.2 * 10) = 2 substitutions among 3 mappable positions
        assert_eq!(substituted, 2);
    }

    #[test]
    fn synonym_caps_at_mappable_count() {
        let map = HashMap::from([("two".to_string(), "pair".to_string())]);
        let cfg = PerturbConfig::new(PerturbKind::Synonym, 0.5, 9).with_synonyms(map);
        let out = perturb_document(&ten_words(), &cfg).unwrap();
        assert!(out.text.contains("pair"));
        assert_eq!(out.text.split_whitespace().count(), 10);
    }

    #[test]
    fn synonym_without_map_is_a_configuration_error() {
        let cfg = PerturbConfig::new(PerturbKind::Synonym, 0.2, 1);
        assert!(matches!(
            perturb_document(&ten_words(), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn out_of_range_ratio_rejected() {
        let cfg = PerturbConfig::new(PerturbKind::Deletion, 1.5, 1);
        assert!(matches!(
            perturb_document(&ten_words(), &cfg),
            Err(Error::Config(_))
        ));
    }

    fn word_corpus(rng: &mut ChaCha8Rng, docs: usize) -> Corpus {
        let docs = (0..docs)
            .map(|i| {
                let len = rng.random_range(3..40);
                let text: Vec<String> = (0..len).map(|k| format!("w{k}")).collect();
                Document::new(format!("doc-{i}"), text.join(" "))
            })
            .collect();
        Corpus::new(docs, "test").unwrap()
    }

    #[test]
    fn corpus_perturbation_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let corpus = word_corpus(&mut rng, 30);
        let cfg = PerturbConfig::new(PerturbKind::Deletion, 0.3, 77);
        let a = perturb_corpus(&corpus, &cfg).unwrap();
        let b = perturb_corpus(&corpus, &cfg).unwrap();
        assert_eq!(a.docs, b.docs);
        let other = PerturbConfig::new(PerturbKind::Deletion, 0.3, 78);
        let c = perturb_corpus(&corpus, &other).unwrap();
        assert_ne!(a.docs, c.docs);
    }

    #[test]
    fn five_seeds_give_five_distinct_valid_corpora() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let corpus = word_corpus(&mut rng, 20);
        let mut outputs = Vec::new();
        for seed in 0..5u64 {
            let cfg = PerturbConfig::new(PerturbKind::Deletion, 0.3, seed);
            outputs.push(perturb_corpus(&corpus, &cfg).unwrap());
        }
        for i in 0..outputs.len() {
            assert_eq!(outputs[i].len(), corpus.len());
            for j in i + 1..outputs.len() {
                assert_ne!(outputs[i].docs, outputs[j].docs, "seeds {i} and {j}");
            }
        }
    }

    #[test]
    fn word_count_deltas_match_floor_exactly_across_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let corpus = word_corpus(&mut rng, 100);
        for ratio in [0.2, 0.3] {
            let del = perturb_corpus(&corpus, &PerturbConfig::new(PerturbKind::Deletion, ratio, 3)).unwrap();
            let emo = perturb_corpus(&corpus, &PerturbConfig::new(PerturbKind::Emoji, ratio, 3)).unwrap();
            for ((orig, d), e) in corpus.docs.iter().zip(&del.docs).zip(&emo.docs) {
                let n = orig.text.split_whitespace().count();
                let expected = (ratio * n as f64).floor() as usize;
                assert_eq!(d.text.split_whitespace().count(), n - expected, "deletion {ratio} n={n}");
                assert_eq!(e.text.split_whitespace().count(), n + expected, "emoji {ratio} n={n}");
            }
        }
    }
}
