//! The detection score, thresholded decision, and closed-form p-value.
//!
//! The score compares how often key pairs exceed the deviation threshold
//! tau against how often the remaining ordered pairs do:
//!
//! ```text
//! score = (1/d) * #{(i,j) in sk : A[i][j] >= tau}
//!       - (1/(T(T-1)-d)) * #{(i,j) not in sk : A[i][j] >= tau}
//! ```
//!
//! Under the null hypothesis the key is the only source of randomness and
//! the key-side hit count is hypergeometric, which gives the distribution-
//! free tail bound `P(score >= t) <= exp(-2 t'^2 d)` with
//! `t' = t * (1 - d / (T(T-1)))`. That bound is reported as the p-value.
//!
//! Invalid (zero-variance) deviation entries count as non-hits on both
//! sides rather than being dropped, preserving the exact `d` and
//! `T(T-1) - d` denominators the sampling model requires. The test is
//! one-sided: non-positive scores map to p = 1.

use serde::{Deserialize, Serialize};

use crate::cooccur::DeviationMatrix;
use crate::error::{Error, Result};
use crate::keystore::{key_pair_indices, SecretKey};

/// Display floor for reported p-values; the log10 field carries the true
/// magnitude when the bound underflows.
pub const P_VALUE_FLOOR: f64 = 1e-300;

/// Thresholds and dimensions of one detection run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Deviation threshold tau for counting a pair as a hit.
    pub tau: f64,
    /// Score threshold t for declaring a detection.
    pub t: f64,
    /// Key size d.
    pub d: usize,
    /// Vocabulary size T.
    pub vocab_size: usize,
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config(format!(
                "vocabulary size must be at least 2, got {}",
                self.vocab_size
            )));
        }
        let universe = ordered_pair_universe(self.vocab_size);
        if self.d == 0 || self.d as u64 > universe {
            return Err(Error::Config(format!(
                "d={} outside 1..={universe} for T={}",
                self.d, self.vocab_size
            )));
        }
        if !self.tau.is_finite() || !self.t.is_finite() {
            return Err(Error::Config("tau and t must be finite".into()));
        }
        Ok(())
    }
}

/// Everything needed to reproduce a detection decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub score: f64,
    pub key_hits: usize,
    pub background_hits: usize,
    pub key_hit_fraction: f64,
    pub background_hit_fraction: f64,
    pub t_prime: f64,
    pub p_value: f64,
    pub log10_p_value: f64,
    pub decision: bool,
    pub n_generations: usize,
    pub invalid_pair_count: usize,
    pub config: DetectionConfig,
}

pub(crate) fn ordered_pair_universe(vocab_size: usize) -> u64 {
    (vocab_size as u64) * (vocab_size as u64 - 1)
}

fn t_prime_of(score: f64, d: usize, vocab_size: usize) -> f64 {
    score * (1.0 - d as f64 / ordered_pair_universe(vocab_size) as f64)
}

/// Natural log of the tail bound at a given score; 0 for non-positive
/// scores (one-sided test).
pub fn ln_p_value(score: f64, d: usize, vocab_size: usize) -> f64 {
    if score <= 0.0 {
        return 0.0;
    }
    let tp = t_prime_of(score, d, vocab_size);
    -2.0 * tp * tp * d as f64
}

/// The p-value `exp(-2 t'^2 d)` with `t' = score * (1 - d/(T(T-1)))`,
/// clamped into `(0, 1]`; non-positive scores return 1.
pub fn p_value(score: f64, d: usize, vocab_size: usize) -> f64 {
    let p = ln_p_value(score, d, vocab_size).exp();
    p.clamp(P_VALUE_FLOOR, 1.0)
}

/// Smallest score threshold whose tail bound equals the target p-value:
/// the inverse of [`p_value`] for `p` in (0, 1).
pub fn threshold_for_p_value(p: f64, d: usize, vocab_size: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p <= 0.0 {
        return Err(Error::Config(format!("target p-value {p} must be in (0, 1)")));
    }
    let tp = ((1.0 / p).ln() / (2.0 * d as f64)).sqrt();
    Ok(tp / (1.0 - d as f64 / ordered_pair_universe(vocab_size) as f64))
}

/// Score a set of ordered pair indices against a deviation matrix without
/// key bookkeeping; shared by the detector and the null simulator.
pub(crate) fn score_for_pair_indices(
    a: &DeviationMatrix,
    pair_indices: &[(usize, usize)],
    tau: f64,
) -> Result<(f64, usize, usize)> {
    let t = a.t();
    let universe = ordered_pair_universe(t);
    let d = pair_indices.len() as u64;
    if d >= universe {
        return Err(Error::Degenerate(format!(
            "key covers the whole pair universe (d={d}, T(T-1)={universe}); the background sum is empty"
        )));
    }
    let key_hits = pair_indices
        .iter()
        .filter(|&&(i, j)| {
            let (v, ok) = a.entry(i, j);
            ok && v >= tau
        })
        .count();
    let total_ordered_hits = a.ordered_hits(tau);
    let background_hits = total_ordered_hits - key_hits;
    let score = key_hits as f64 / d as f64 - background_hits as f64 / (universe - d) as f64;
    Ok((score, key_hits, background_hits))
}

/// Evaluate the detection score of a key on a deviation matrix.
///
/// Returns `(score, key_hits, background_hits)` where the hit counts are
/// over ordered distinct pairs. Invalid entries count as below tau.
pub fn detection_score(
    a: &DeviationMatrix,
    key: &SecretKey,
    tau: f64,
) -> Result<(f64, usize, usize)> {
    let pairs = key_pair_indices(key, a.vocab())?;
    score_for_pair_indices(a, &pairs, tau)
}

/// Run the full detection: score, decision at `config.t`, and p-value.
pub fn detect(a: &DeviationMatrix, key: &SecretKey, config: &DetectionConfig) -> Result<DetectionReport> {
    config.validate()?;
    if config.d != key.len() {
        return Err(Error::Config(format!(
            "config d={} does not match key size {}",
            config.d,
            key.len()
        )));
    }
    if config.vocab_size != a.t() {
        return Err(Error::Config(format!(
            "config T={} does not match matrix size {}",
            config.vocab_size,
            a.t()
        )));
    }
    let (score, key_hits, background_hits) = detection_score(a, key, config.tau)?;
    let universe = ordered_pair_universe(a.t());
    let ln_p = ln_p_value(score, config.d, config.vocab_size);
    Ok(DetectionReport {
        score,
        key_hits,
        background_hits,
        key_hit_fraction: key_hits as f64 / config.d as f64,
        background_hit_fraction: background_hits as f64 / (universe - config.d as u64) as f64,
        t_prime: t_prime_of(score, config.d, config.vocab_size),
        p_value: ln_p.exp().clamp(P_VALUE_FLOOR, 1.0),
        log10_p_value: ln_p / std::f64::consts::LN_10,
        decision: score >= config.t,
        n_generations: a.n_generations(),
        invalid_pair_count: a.invalid_ordered_pair_count(),
        config: *config,
    })
}

/// Render a report for publication: all report fields plus tool version,
/// timestamp, and the key fingerprint. The key itself never appears.
pub fn render_report_json(report: &DetectionReport, key: &SecretKey) -> serde_json::Value {
    let mut value = serde_json::to_value(report).expect("report serializes");
    let obj = value.as_object_mut().expect("report is an object");
    obj.insert(
        "tool_version".into(),
        serde_json::Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    obj.insert(
        "timestamp".into(),
        serde_json::Value::String(chrono::Utc::now().to_rfc3339()),
    );
    obj.insert(
        "key_fingerprint".into(),
        serde_json::Value::String(key.fingerprint()),
    );
    value
}
