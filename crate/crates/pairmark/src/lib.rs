//! Dataset watermarking through word-pair co-occurrence, with black-box
//! statistical detection.
//!
//! The pipeline has two stages. At embedding time a secret key of word
//! pairs is sampled from the frequent-word vocabulary of a dataset, and the
//! dataset is rephrased (via a chat model) to raise the document-level
//! co-occurrence of those pairs. At detection time, generations are sampled
//! from a suspect model, the pairwise presence-indicator correlations are
//! compared against a reference corpus, and the key pairs' excess deviation
//! is scored. Because the key is sampled uniformly without replacement, the
//! null distribution of the score has a hypergeometric tail with a
//! closed-form Hoeffding bound, which makes the reported p-value
//! distribution-free and model-agnostic.
//!
//! Modules follow the pipeline:
//!
//! - [`corpus`]: JSONL document I/O
//! - [`textstat`]: tokenization, document frequencies, candidate
//!   vocabulary, presence matrices
//! - [`keystore`]: secret-key sampling and persistence
//! - [`cooccur`]: indicator correlation matrices and the deviation A = C − R
//! - [`detector`]: detection score, decision, p-value
//! - [`nullsim`]: exact and Monte-Carlo verification of the false-positive
//!   bound, plus a synthetic correlated emitter for power studies
//! - [`embedder`]: rephrasing plans, prompt rendering, response validation,
//!   multi-round orchestration
//! - [`llmclient`]: chat-completion client with retries, checkpointed bulk
//!   sampling, and deterministic mocks
//! - [`perturb`]: robustness stress transforms (deletion, synonym, emoji)
//! - [`quality`]: n-gram overlap between original and watermarked corpora

pub mod cooccur;
pub mod corpus;
pub mod detector;
pub mod embedder;
pub mod error;
pub mod keystore;
pub mod llmclient;
pub mod nullsim;
pub mod perturb;
pub mod quality;
pub mod textstat;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, LlmError, Result};
