//! Null-hypothesis verification of the detector's false-positive bound,
//! plus a synthetic correlated emitter for power studies.
//!
//! Three tools:
//!
//! - [`exact_fpr`]: on universes small enough to enumerate, the exact
//!   probability over all possible keys that the score clears `t`, given a
//!   fixed set of `K` pairs above tau. Compared against the closed-form
//!   hypergeometric tail ([`hypergeometric_tail_fpr`]) and the Hoeffding
//!   bound.
//! - [`random_key_fpr`]: Monte-Carlo false-positive rate of freshly sampled
//!   keys against a fixed deviation matrix.
//! - [`emit_corpus`]: a desk-scale stand-in for sampling a fine-tuned
//!   model, emitting documents whose word presences are independent except
//!   for boosted pairs coupled through a shared latent coin. The boosted
//!   population correlation has a closed form, which makes the estimator
//!   testable end to end.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cooccur::DeviationMatrix;
use crate::corpus::{Corpus, Document};
use crate::detector;
use crate::error::{Error, Result};
use crate::keystore::{decode_pair_index, sample_indices, WordPair};

/// Padding token for emitted documents. The `zz` prefix is reserved so
/// filler can never collide with a candidate word.
pub const FILLER_TOKEN: &str = "zzfiller";
const RESERVED_PREFIX: &str = "zz";

/// Largest pair universe [`exact_fpr`] will enumerate.
pub const MAX_EXACT_UNIVERSE: u64 = 64;
const MAX_EXACT_SUBSETS: u128 = 200_000_000;

// ---------------------------------------------------------------------------
// Exact enumeration of the null distribution
// ---------------------------------------------------------------------------

/// Whether `score(x) = (x·U − K·d) / (d·(U−d)) >= t`, decided in exact
/// rational arithmetic so boundary cases cannot misclassify.
fn score_exceeds(x: u64, universe: u64, k_hits: u64, d: u64, t_rational: &BigRational) -> bool {
    let num = BigInt::from(x as i128 * universe as i128 - k_hits as i128 * d as i128);
    let den = BigInt::from(d as i128 * (universe - d) as i128);
    BigRational::new(num, den) >= *t_rational
}

fn exact_t_rational(t: f64) -> Result<BigRational> {
    BigRational::from_float(t).ok_or_else(|| Error::Config(format!("threshold t={t} is not finite")))
}

fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut result = BigInt::from(1);
    for i in 0..k {
        result = result * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    result
}

fn check_exact_inputs(vocab_size: usize, d: usize, k_hits: u64) -> Result<u64> {
    if vocab_size < 2 {
        return Err(Error::Config("T must be at least 2".into()));
    }
    let universe = detector::ordered_pair_universe(vocab_size);
    if universe > MAX_EXACT_UNIVERSE {
        return Err(Error::Range(format!(
            "pair universe T(T-1)={universe} exceeds the exhaustive-enumeration limit {MAX_EXACT_UNIVERSE}"
        )));
    }
    if d == 0 || d as u64 > universe {
        return Err(Error::Range(format!("d={d} outside 1..={universe}")));
    }
    if k_hits > universe {
        return Err(Error::Range(format!("K={k_hits} exceeds universe {universe}")));
    }
    let subsets = binomial(universe, d as u64)
        .to_u128()
        .unwrap_or(u128::MAX);
    if subsets > MAX_EXACT_SUBSETS {
        return Err(Error::Range(format!(
            "C({universe}, {d}) = {subsets} subsets is too many to enumerate"
        )));
    }
    Ok(universe)
}

/// Exact `P_sk(score >= t)` by enumerating every possible key of size `d`
/// against a fixed hit set of `K` ordered pairs.
///
/// By exchangeability of uniform sampling the hit set can be taken as the
/// first `K` indices; the count of key members falling inside it is the
/// hypergeometric variable the bound is proved over.
pub fn exact_fpr(vocab_size: usize, d: usize, k_hits: u64, t: f64) -> Result<f64> {
    let universe = check_exact_inputs(vocab_size, d, k_hits)?;
    let t_rat = exact_t_rational(t)?;
    // score depends on the key only through X; precompute the verdict per X
    let hit_by_x: Vec<bool> = (0..=d as u64)
        .map(|x| score_exceeds(x, universe, k_hits, d as u64, &t_rat))
        .collect();

    let u = universe as usize;
    let k = k_hits as usize;
    let mut detections: u128 = 0;
    let mut total: u128 = 0;
    let mut combo: Vec<usize> = (0..d).collect();
    loop {
        let x = combo.iter().filter(|&&e| e < k).count();
        total += 1;
        if hit_by_x[x] {
            detections += 1;
        }
        // advance to the next lexicographic combination
        let mut i = d;
        loop {
            if i == 0 {
                debug_assert_eq!(
                    BigInt::from(total),
                    binomial(universe, d as u64),
                    "enumeration must visit every subset exactly once"
                );
                return Ok(detections as f64 / total as f64);
            }
            i -= 1;
            if combo[i] != u - d + i {
                break;
            }
        }
        combo[i] += 1;
        for w in i + 1..d {
            combo[w] = combo[w - 1] + 1;
        }
    }
}

/// Closed-form counterpart of [`exact_fpr`]: the hypergeometric survival
/// mass over the same rational score threshold, summed with exact binomial
/// coefficients.
pub fn hypergeometric_tail_fpr(vocab_size: usize, d: usize, k_hits: u64, t: f64) -> Result<f64> {
    let universe = check_exact_inputs(vocab_size, d, k_hits)?;
    let t_rat = exact_t_rational(t)?;
    let d64 = d as u64;
    let mut mass = BigInt::from(0);
    for x in 0..=d64 {
        if x > k_hits || d64 - x > universe - k_hits {
            continue;
        }
        if score_exceeds(x, universe, k_hits, d64, &t_rat) {
            mass += binomial(k_hits, x) * binomial(universe - k_hits, d64 - x);
        }
    }
    let fpr = BigRational::new(mass, binomial(universe, d64));
    Ok(fpr.to_f64().unwrap_or(0.0))
}

/// The Hoeffding tail bound `exp(-2 t'^2 d)` the exact values are checked
/// against.
pub fn hoeffding_bound(t: f64, d: usize, vocab_size: usize) -> f64 {
    detector::p_value(t, d, vocab_size)
}

// ---------------------------------------------------------------------------
// Monte-Carlo random-key harness
// ---------------------------------------------------------------------------

/// Outcome of scoring many random keys against one fixed deviation matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullSimReport {
    pub n_keys: usize,
    pub scores: Vec<f64>,
    pub threshold_t: f64,
    pub empirical_fpr: f64,
    pub bound: f64,
    pub tau: f64,
    pub d: usize,
    pub vocab_size: usize,
}

impl NullSimReport {
    /// Empirical `P(score >= t)` at a threshold other than the one the
    /// report was built with.
    pub fn empirical_fpr_at(&self, t: f64) -> f64 {
        self.scores.iter().filter(|&&s| s >= t).count() as f64 / self.n_keys as f64
    }
}

/// Sample `n_keys` fresh keys (derived deterministically from `seed`) and
/// score each against the fixed matrix `a`.
pub fn random_key_fpr(
    a: &DeviationMatrix,
    d: usize,
    tau: f64,
    t: f64,
    n_keys: usize,
    seed: u64,
) -> Result<NullSimReport> {
    if n_keys == 0 {
        return Err(Error::Config("n_keys must be at least 1".into()));
    }
    let vocab_size = a.t();
    let universe = detector::ordered_pair_universe(vocab_size);
    if d == 0 || (d as u64) >= universe {
        return Err(Error::Range(format!(
            "d={d} must be in 1..{universe} so the background sum is non-empty"
        )));
    }
    // the matrix is fixed across keys: scan it once, then each key only
    // needs its own d membership tests
    let total_ordered_hits = a.ordered_hits(tau);
    let background_size = (universe - d as u64) as f64;
    let scores: Vec<f64> = (0..n_keys as u64)
        .into_par_iter()
        .map(|key_idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(key_idx + 1);
            let picks = sample_indices(universe, d, &mut rng);
            let key_hits = picks
                .iter()
                .filter(|&&idx| {
                    let (i, j) = decode_pair_index(idx, vocab_size);
                    let (v, ok) = a.entry(i, j);
                    ok && v >= tau
                })
                .count();
            let background_hits = total_ordered_hits - key_hits;
            key_hits as f64 / d as f64 - background_hits as f64 / background_size
        })
        .collect();
    let empirical_fpr = scores.iter().filter(|&&s| s >= t).count() as f64 / n_keys as f64;
    Ok(NullSimReport {
        n_keys,
        scores,
        threshold_t: t,
        empirical_fpr,
        bound: hoeffding_bound(t, d, vocab_size),
        tau,
        d,
        vocab_size,
    })
}

/// Shuffle the (value, validity) entries of a deviation matrix in place of
/// their pair slots, producing an exchangeable null matrix with the same
/// entry population.
pub fn permute_entries(a: &DeviationMatrix, seed: u64) -> DeviationMatrix {
    let t = a.t();
    let mut entries: Vec<(f64, bool)> = Vec::with_capacity(t * (t - 1) / 2);
    for i in 1..t {
        for j in 0..i {
            entries.push(a.entry(i, j));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries.shuffle(&mut rng);
    let mut tri = crate::cooccur::TriMatrix::zeroed(t);
    let mut k = 0;
    for i in 1..t {
        for j in 0..i {
            let (v, ok) = entries[k];
            tri.set(i, j, v, ok);
            k += 1;
        }
    }
    DeviationMatrix::from_tri(Arc::clone(a.vocab()), a.n_generations(), tri)
}

// ---------------------------------------------------------------------------
// Synthetic correlated emitter
// ---------------------------------------------------------------------------

/// Generative model for synthetic corpora: words appear independently with
/// their own probabilities, except boosted pairs whose joint inclusion is
/// raised through a shared latent coin of probability beta.
///
/// For a pair with marginal probabilities `p` and `q` and boost `beta`, the
/// population moments are `joint = beta + (1-beta)·p·q` and marginals
/// `beta + (1-beta)·p`, which pin the population phi coefficient in closed
/// form (exact when the pair shares no word with another boosted pair).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmitterSpec {
    pub word_probs: BTreeMap<String, f64>,
    pub boosted_pairs: Vec<(WordPair, f64)>,
    pub doc_length_words: usize,
}

impl EmitterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.word_probs.is_empty() {
            return Err(Error::Config("emitter needs at least one word".into()));
        }
        if self.doc_length_words == 0 {
            return Err(Error::Config("doc_length_words must be at least 1".into()));
        }
        for (word, &p) in &self.word_probs {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!(
                    "word '{word}' probability {p} outside (0, 1)"
                )));
            }
            if word.starts_with(RESERVED_PREFIX) {
                return Err(Error::Config(format!(
                    "word '{word}' collides with the reserved filler prefix '{RESERVED_PREFIX}'"
                )));
            }
        }
        for (pair, beta) in &self.boosted_pairs {
            if !(0.0..=1.0).contains(beta) {
                return Err(Error::Config(format!(
                    "boost {beta} for ({}, {}) outside [0, 1]",
                    pair.first, pair.second
                )));
            }
            if pair.first == pair.second {
                return Err(Error::Config(format!("boosted self-pair '{}'", pair.first)));
            }
            for word in [&pair.first, &pair.second] {
                if !self.word_probs.contains_key(word) {
                    return Err(Error::Config(format!(
                        "boosted word '{word}' has no emission probability"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Population phi of a boosted pair under the shared-coin mixture,
    /// assuming the pair shares no word with another boosted pair.
    pub fn population_phi(p: f64, q: f64, beta: f64) -> f64 {
        let joint = beta + (1.0 - beta) * p * q;
        let ma = beta + (1.0 - beta) * p;
        let mb = beta + (1.0 - beta) * q;
        (joint - ma * mb) / (ma * (1.0 - ma) * mb * (1.0 - mb)).sqrt()
    }
}

/// Emit a reproducible synthetic corpus: same (spec, n_docs, seed) gives an
/// identical corpus. Document `i` draws from an independent ChaCha stream,
/// so trials parallelize without coupling.
pub fn emit_corpus(spec: &EmitterSpec, n_docs: usize, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    if n_docs == 0 {
        return Err(Error::Config("n_docs must be at least 1".into()));
    }
    let words: Vec<(&String, f64)> = spec.word_probs.iter().map(|(w, &p)| (w, p)).collect();
    let docs: Vec<Document> = (0..n_docs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i + 1);
            let mut forced: HashSet<&str> = HashSet::new();
            for (pair, beta) in &spec.boosted_pairs {
                if rng.random::<f64>() < *beta {
                    forced.insert(pair.first.as_str());
                    forced.insert(pair.second.as_str());
                }
            }
            let mut present: Vec<&str> = Vec::new();
            for (word, p) in &words {
                let own_draw = rng.random::<f64>() < *p;
                if own_draw || forced.contains(word.as_str()) {
                    present.push(word.as_str());
                }
            }
            present.shuffle(&mut rng);
            let mut tokens: Vec<&str> = present;
            while tokens.len() < spec.doc_length_words {
                tokens.push(FILLER_TOKEN);
            }
            Document::new(format!("sim-{i:06}"), tokens.join(" "))
        })
        .collect();
    Corpus::new(docs, format!("emitter(seed={seed})"))
}

/// Emitter spec covering a whole vocabulary at a flat base probability with
/// every key pair boosted by `beta`; the synthetic stand-in for a model
/// fine-tuned on a watermarked dataset.
pub fn boosted_spec_for_key(
    vocab_words: &[String],
    key_pairs: &[WordPair],
    base_prob: f64,
    beta: f64,
    doc_length_words: usize,
) -> EmitterSpec {
    EmitterSpec {
        word_probs: vocab_words
            .iter()
            .map(|w| (w.clone(), base_prob))
            .collect(),
        boosted_pairs: key_pairs.iter().map(|p| (p.clone(), beta)).collect(),
        doc_length_words,
    }
}

// ---------------------------------------------------------------------------
// Sweep CSV
// ---------------------------------------------------------------------------

/// One row of a false-positive sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub t: f64,
    pub tau: Option<f64>,
    pub d: usize,
    pub vocab_size: usize,
    pub empirical_fpr: f64,
    pub bound: f64,
    pub n_keys: u64,
}

/// Write sweep rows as plot-ready CSV with the fixed header
/// `t,tau,d,T,empirical_fpr,bound,n_keys`.
pub fn write_sweep_csv(mut out: impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "t,tau,d,T,empirical_fpr,bound,n_keys")?;
    for row in rows {
        let tau = row.tau.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.t, tau, row.d, row.vocab_size, row.empirical_fpr, row.bound, row.n_keys
        )?;
    }
    Ok(())
}
