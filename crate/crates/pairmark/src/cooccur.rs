//! Co-occurrence correlation matrices and their deviation.
//!
//! For binary presence indicators the Pearson correlation is the phi
//! coefficient, computed here from integer counts:
//!
//! ```text
//! phi(i, j) = (N·n11 − ci·cj) / sqrt(ci·(N−ci)·cj·(N−cj))
//! ```
//!
//! where `ci` is the number of documents containing word `i` and `n11` the
//! number containing both. Pairs involving a constant indicator have no
//! defined correlation; they are stored as 0 and flagged invalid so they can
//! never contribute a hit on either side of the detection score.
//!
//! Matrices are symmetric with an unused diagonal, stored as the strict
//! lower triangle plus a validity bitmap.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::textstat::{presence_matrix, CandidateVocabulary, PresenceMatrix};

/// Strict-lower-triangle storage for a symmetric T×T matrix with an unused
/// diagonal: entry (i, j), i > j lives at `i·(i−1)/2 + j`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TriMatrix {
    t: usize,
    values: Vec<f64>,
    valid: Vec<u64>,
}

impl TriMatrix {
    pub(crate) fn zeroed(t: usize) -> Self {
        let m = t * (t - 1) / 2;
        TriMatrix {
            t,
            values: vec![0.0; m],
            valid: vec![0u64; m.div_ceil(64)],
        }
    }

    pub(crate) fn from_parts(t: usize, values: Vec<f64>, valid: Vec<u64>) -> Self {
        debug_assert_eq!(values.len(), t * (t - 1) / 2);
        TriMatrix { t, values, valid }
    }

    pub(crate) fn t(&self) -> usize {
        self.t
    }

    pub(crate) fn n_entries(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        debug_assert!(i > j);
        i * (i - 1) / 2 + j
    }

    /// (value, valid) for an off-diagonal entry; the diagonal reads as
    /// (0.0, false).
    #[inline]
    pub(crate) fn entry(&self, i: usize, j: usize) -> (f64, bool) {
        if i == j {
            return (0.0, false);
        }
        let k = if i > j { Self::idx(i, j) } else { Self::idx(j, i) };
        (self.values[k], (self.valid[k / 64] >> (k % 64)) & 1 == 1)
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, value: f64, is_valid: bool) {
        let k = if i > j { Self::idx(i, j) } else { Self::idx(j, i) };
        self.values[k] = value;
        if is_valid {
            self.valid[k / 64] |= 1u64 << (k % 64);
        } else {
            self.valid[k / 64] &= !(1u64 << (k % 64));
        }
    }

    pub(crate) fn entry_at(&self, k: usize) -> (f64, bool) {
        (self.values[k], (self.valid[k / 64] >> (k % 64)) & 1 == 1)
    }

    pub(crate) fn set_at(&mut self, k: usize, value: f64, is_valid: bool) {
        self.values[k] = value;
        if is_valid {
            self.valid[k / 64] |= 1u64 << (k % 64);
        } else {
            self.valid[k / 64] &= !(1u64 << (k % 64));
        }
    }

    /// Number of unordered valid entries with value >= tau.
    pub(crate) fn count_at_least(&self, tau: f64) -> usize {
        self.values
            .iter()
            .enumerate()
            .filter(|(k, &v)| v >= tau && (self.valid[k / 64] >> (k % 64)) & 1 == 1)
            .count()
    }

    pub(crate) fn count_invalid(&self) -> usize {
        let m = self.values.len();
        let set: usize = self.valid.iter().map(|w| w.count_ones() as usize).sum();
        m - set
    }
}

/// Pearson correlations of word-presence indicators over one corpus of
/// samples.
#[derive(Debug, Clone)]
pub struct CooccurrenceMatrix {
    vocab: Arc<CandidateVocabulary>,
    n_samples: usize,
    pub(crate) tri: TriMatrix,
}

impl CooccurrenceMatrix {
    pub fn t(&self) -> usize {
        self.tri.t()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn vocab(&self) -> &Arc<CandidateVocabulary> {
        &self.vocab
    }

    pub fn vocab_fingerprint(&self) -> &str {
        self.vocab.fingerprint()
    }

    /// (correlation, valid) for words `i` and `j`; symmetric in its
    /// arguments, diagonal reads (0.0, false).
    pub fn entry(&self, i: usize, j: usize) -> (f64, bool) {
        self.tri.entry(i, j)
    }

    pub fn invalid_entry_count(&self) -> usize {
        self.tri.count_invalid()
    }
}

/// Element-wise difference of a generation-side and a reference-side
/// correlation matrix: the quantity the detector thresholds.
#[derive(Debug, Clone)]
pub struct DeviationMatrix {
    vocab: Arc<CandidateVocabulary>,
    n_generations: usize,
    source_fingerprints: (String, String),
    pub(crate) tri: TriMatrix,
}

impl DeviationMatrix {
    pub(crate) fn from_tri(
        vocab: Arc<CandidateVocabulary>,
        n_generations: usize,
        tri: TriMatrix,
    ) -> Self {
        let fp = vocab.fingerprint().to_string();
        DeviationMatrix {
            vocab,
            n_generations,
            source_fingerprints: (fp.clone(), fp),
            tri,
        }
    }

    pub fn t(&self) -> usize {
        self.tri.t()
    }

    /// Sample count of the generation-side parent.
    pub fn n_generations(&self) -> usize {
        self.n_generations
    }

    pub fn vocab(&self) -> &Arc<CandidateVocabulary> {
        &self.vocab
    }

    pub fn vocab_fingerprint(&self) -> &str {
        self.vocab.fingerprint()
    }

    /// (generation, reference) parent fingerprints.
    pub fn source_fingerprints(&self) -> (&str, &str) {
        (&self.source_fingerprints.0, &self.source_fingerprints.1)
    }

    pub fn entry(&self, i: usize, j: usize) -> (f64, bool) {
        self.tri.entry(i, j)
    }

    /// Number of ordered distinct pairs whose deviation entry is flagged
    /// invalid (each unordered entry counts twice).
    pub fn invalid_ordered_pair_count(&self) -> usize {
        2 * self.tri.count_invalid()
    }

    /// Number of ordered distinct pairs with a valid deviation >= tau.
    pub fn ordered_hits(&self, tau: f64) -> usize {
        2 * self.tri.count_at_least(tau)
    }
}

/// Estimate the correlation matrix from a presence matrix.
///
/// Requires at least two samples; with one sample every indicator is
/// constant and nothing is estimable.
pub fn indicator_correlation(pm: &PresenceMatrix) -> Result<CooccurrenceMatrix> {
    let n = pm.n_docs();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 2 samples, got {n}"
        )));
    }
    let t = pm.n_words();
    let counts: Vec<usize> = (0..t).map(|c| pm.column_count(c)).collect();
    let nf = n as f64;

    let rows: Vec<(Vec<f64>, Vec<bool>)> = (1..t)
        .into_par_iter()
        .map(|i| {
            let mut values = Vec::with_capacity(i);
            let mut valid = Vec::with_capacity(i);
            let ci = counts[i];
            for (j, &cj) in counts.iter().enumerate().take(i) {
                if ci == 0 || ci == n || cj == 0 || cj == n {
                    values.push(0.0);
                    valid.push(false);
                    continue;
                }
                let joint = pm.joint_count(i, j);
                // identical or complementary columns are exactly +-1; the
                // float route can land one ulp off the boundary
                let phi = if joint == ci && joint == cj {
                    1.0
                } else if joint == 0 && ci + cj == n {
                    -1.0
                } else {
                    let num = nf * joint as f64 - (ci as f64) * (cj as f64);
                    let den = ((ci * (n - ci)) as f64 * (cj * (n - cj)) as f64).sqrt();
                    (num / den).clamp(-1.0, 1.0)
                };
                values.push(phi);
                valid.push(true);
            }
            (values, valid)
        })
        .collect();

    let mut tri = TriMatrix::zeroed(t);
    let mut k = 0;
    for (values, valid) in rows {
        for (v, ok) in values.into_iter().zip(valid) {
            tri.set_at(k, v, ok);
            k += 1;
        }
    }
    Ok(CooccurrenceMatrix {
        vocab: Arc::clone(pm.vocab()),
        n_samples: n,
        tri,
    })
}

/// Correlation matrix of a reference (non-watermarked) corpus.
pub fn reference_matrix(
    corpus: &Corpus,
    vocab: &Arc<CandidateVocabulary>,
) -> Result<CooccurrenceMatrix> {
    indicator_correlation(&presence_matrix(corpus, vocab)?)
}

/// Deviation A = C − R. Entries where either side is invalid are 0 and
/// invalid; matrices must share dimensions and vocabulary fingerprint.
pub fn deviation(c: &CooccurrenceMatrix, r: &CooccurrenceMatrix) -> Result<DeviationMatrix> {
    if c.vocab_fingerprint() != r.vocab_fingerprint() || c.t() != r.t() {
        return Err(Error::Incompatible(format!(
            "deviation requires matching vocabularies (T={} fp={}... vs T={} fp={}...)",
            c.t(),
            &c.vocab_fingerprint()[..12],
            r.t(),
            &r.vocab_fingerprint()[..12]
        )));
    }
    let t = c.t();
    let mut tri = TriMatrix::zeroed(t);
    for k in 0..tri.n_entries() {
        let (cv, cok) = c.tri.entry_at(k);
        let (rv, rok) = r.tri.entry_at(k);
        if cok && rok {
            tri.set_at(k, cv - rv, true);
        } else {
            tri.set_at(k, 0.0, false);
        }
    }
    Ok(DeviationMatrix {
        vocab: Arc::clone(&c.vocab),
        n_generations: c.n_samples,
        source_fingerprints: (
            c.vocab_fingerprint().to_string(),
            r.vocab_fingerprint().to_string(),
        ),
        tri,
    })
}

// ---------------------------------------------------------------------------
// Binary persistence
// ---------------------------------------------------------------------------

const MATRIX_MAGIC: &[u8; 8] = b"PMCOOC01";

/// Write a correlation matrix: magic, u32 T (LE), 32-byte vocabulary
/// fingerprint, the strict lower triangle as little-endian f64 in row-major
/// order, then the validity bitmap (LSB-first bytes).
pub fn save_matrix(matrix: &CooccurrenceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(matrix.t() as u32).to_le_bytes())?;
    let fp = hex::decode(matrix.vocab_fingerprint())
        .map_err(|e| Error::Parse(format!("bad fingerprint hex: {e}")))?;
    out.write_all(&fp)?;
    for v in &matrix.tri.values {
        out.write_all(&v.to_le_bytes())?;
    }
    let m = matrix.tri.n_entries();
    let mut bitmap = vec![0u8; m.div_ceil(8)];
    for k in 0..m {
        if matrix.tri.entry_at(k).1 {
            bitmap[k / 8] |= 1 << (k % 8);
        }
    }
    out.write_all(&bitmap)?;
    out.flush()?;
    Ok(())
}

/// Load a correlation matrix saved by [`save_matrix`], binding it to the
/// vocabulary it was computed over; the stored fingerprint must match.
///
/// The file format does not carry the sample count, so a loaded matrix
/// reports `n_samples() == 0` (unknown).
pub fn load_matrix(
    path: impl AsRef<Path>,
    vocab: &Arc<CandidateVocabulary>,
) -> Result<CooccurrenceMatrix> {
    let path = path.as_ref();
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Parse(format!("{}: bad magic", path.display())));
    }
    let mut t_bytes = [0u8; 4];
    input.read_exact(&mut t_bytes)?;
    let t = u32::from_le_bytes(t_bytes) as usize;
    let mut fp = [0u8; 32];
    input.read_exact(&mut fp)?;
    let stored_fp = hex::encode(fp);
    if stored_fp != vocab.fingerprint() {
        return Err(Error::Incompatible(format!(
            "{}: stored fingerprint {}... does not match vocabulary {}...",
            path.display(),
            &stored_fp[..12],
            &vocab.fingerprint()[..12]
        )));
    }
    if t != vocab.len() {
        return Err(Error::Incompatible(format!(
            "{}: stored T={t} does not match vocabulary size {}",
            path.display(),
            vocab.len()
        )));
    }
    let m = t * (t - 1) / 2;
    let mut values = Vec::with_capacity(m);
    let mut buf = [0u8; 8];
    for _ in 0..m {
        input.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    let mut bitmap = vec![0u8; m.div_ceil(8)];
    input.read_exact(&mut bitmap)?;
    let mut valid = vec![0u64; m.div_ceil(64)];
    for k in 0..m {
        if (bitmap[k / 8] >> (k % 8)) & 1 == 1 {
            valid[k / 64] |= 1u64 << (k % 64);
        }
    }
    Ok(CooccurrenceMatrix {
        vocab: Arc::clone(vocab),
        n_samples: 0,
        tri: TriMatrix::from_parts(t, values, valid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::textstat::candidate_vocabulary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus_of(texts: &[String]) -> Corpus {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("doc-{i}"), t.clone()))
            .collect();
        Corpus::new(docs, "test").unwrap()
    }

    /// Presence corpus where every doc carries a filler word `pp` so that
    /// docs with no signal words still tokenize non-empty.
    fn presence_corpus(rows: &[(bool, bool)]) -> (Corpus, Arc<CandidateVocabulary>) {
        let texts: Vec<String> = rows
            .iter()
            .map(|&(a, b)| {
                let mut s = String::from("pp");
                if a {
                    s.push_str(" aa");
                }
                if b {
                    s.push_str(" bb");
                }
                s
            })
            .collect();
        let corpus = corpus_of(&texts);
        // rank 0 is the filler; slice it off
        let vocab = Arc::new(candidate_vocabulary(&corpus, 1, 3).unwrap());
        (corpus, vocab)
    }

    /// Plain-f64 Pearson correlation over 0/1 columns, independent of the
    /// popcount path.
    fn naive_phi(xs: &[bool], ys: &[bool]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().filter(|&&v| v).count() as f64 / n;
        let my = ys.iter().filter(|&&v| v).count() as f64 / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            let dx = (x as u8 as f64) - mx;
            let dy = (y as u8 as f64) - my;
            cov += dx * dy;
            vx += dx * dx;
            vy += dy * dy;
        }
        cov / (vx.sqrt() * vy.sqrt())
    }

    #[test]
    fn identical_nonconstant_columns_correlate_exactly_one() {
        let rows = [(true, true), (false, false), (true, true), (false, false)];
        let (corpus, vocab) = presence_corpus(&rows);
        let c = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        let (v, ok) = c.entry(
            vocab.index_of("aa").unwrap(),
            vocab.index_of("bb").unwrap(),
        );
        assert!(ok);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn zero_variance_column_flagged_invalid() {
        // vocabulary from a base corpus where both words occur, presence over
        // a corpus where `aa` never does: its column is all zeros
        let (base, vocab) = presence_corpus(&[(true, true), (false, false)]);
        drop(base);
        let texts = vec!["pp bb".to_string(), "pp".to_string(), "pp bb".to_string()];
        let corpus = corpus_of(&texts);
        let c = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        let (v, ok) = c.entry(
            vocab.index_of("aa").unwrap(),
            vocab.index_of("bb").unwrap(),
        );
        assert_eq!(v, 0.0);
        assert!(!ok);
        assert_eq!(c.invalid_entry_count(), 1);
    }

    #[test]
    fn fewer_than_two_rows_is_insufficient() {
        let (corpus, vocab) = presence_corpus(&[(true, true)]);
        let pm = presence_matrix(&corpus, &vocab).unwrap();
        assert!(matches!(
            indicator_correlation(&pm),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn independent_indicators_have_near_zero_correlation() {
        // Bernoulli(1/2) x Bernoulli(1/2), N = 100k: population correlation 0,
        // the estimate concentrates within 0.01 (about 3 sigma).
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let rows: Vec<(bool, bool)> = (0..100_000)
            .map(|_| (rng.random::<bool>(), rng.random::<bool>()))
            .collect();
        let (corpus, vocab) = presence_corpus(&rows);
        let c = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        let (v, ok) = c.entry(
            vocab.index_of("aa").unwrap(),
            vocab.index_of("bb").unwrap(),
        );
        assert!(ok);
        assert!(v.abs() < 0.01, "correlation {v} not near zero");
    }

    #[test]
    fn four_doc_corpus_matches_hand_computed_phi() {
        let texts = vec![
            "apple banana".to_string(),
            "apple".to_string(),
            "banana cherry".to_string(),
            "apple banana cherry".to_string(),
        ];
        let corpus = corpus_of(&texts);
        let vocab = Arc::new(candidate_vocabulary(&corpus, 0, 3).unwrap());
        let pm = presence_matrix(&corpus, &vocab).unwrap();
        let c = indicator_correlation(&pm).unwrap();
        let idx = |w: &str| vocab.index_of(w).unwrap();
        // hand: phi(apple,banana) = (4*2-3*3)/sqrt(3*1*3*1) = -1/3
        //       phi(apple,cherry) = (4*1-3*2)/sqrt(3*1*2*2) = -2/sqrt(12)
        //       phi(banana,cherry) = (4*2-3*2)/sqrt(3*1*2*2) = 2/sqrt(12)
        let cases = [
            ("apple", "banana", -1.0 / 3.0),
            ("apple", "cherry", -2.0 / 12f64.sqrt()),
            ("banana", "cherry", 2.0 / 12f64.sqrt()),
        ];
        for (a, b, expected) in cases {
            let (v, ok) = c.entry(idx(a), idx(b));
            assert!(ok);
            assert!((v - expected).abs() < 1e-12, "{a},{b}: {v} vs {expected}");
            // cross-check against the naive Pearson route
            let xs: Vec<bool> = (0..4).map(|r| pm.get(r, idx(a))).collect();
            let ys: Vec<bool> = (0..4).map(|r| pm.get(r, idx(b))).collect();
            assert!((v - naive_phi(&xs, &ys)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetry_and_row_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let texts: Vec<String> = (0..64)
            .map(|_| {
                let mut s = String::from("pp");
                for w in ["aa", "bb", "cc", "dd"] {
                    if rng.random::<f64>() < 0.4 {
                        s.push(' ');
                        s.push_str(w);
                    }
                }
                s
            })
            .collect();
        let corpus = corpus_of(&texts);
        let vocab = Arc::new(candidate_vocabulary(&corpus, 1, 5).unwrap());
        let c = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        for i in 0..vocab.len() {
            for j in 0..vocab.len() {
                assert_eq!(c.entry(i, j), c.entry(j, i));
            }
        }
        let mut docs = corpus.docs.clone();
        docs.rotate_left(17);
        let rotated = Corpus::new(docs, "test").unwrap();
        let c2 = indicator_correlation(&presence_matrix(&rotated, &vocab).unwrap()).unwrap();
        for i in 1..vocab.len() {
            for j in 0..i {
                assert_eq!(c.entry(i, j), c2.entry(i, j));
            }
        }
    }

    #[test]
    fn deviation_of_matrix_with_itself_is_zero() {
        let rows = [(true, false), (false, true), (true, true), (false, false)];
        let (corpus, vocab) = presence_corpus(&rows);
        let c = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        let a = deviation(&c, &c).unwrap();
        for i in 1..a.t() {
            for j in 0..i {
                let (v, _) = a.entry(i, j);
                assert_eq!(v, 0.0);
            }
        }
        assert_eq!(a.ordered_hits(1e-9), 0);
    }

    #[test]
    fn deviation_subtracts_elementwise() {
        let rows_c = [(true, true), (false, false), (true, false), (false, true), (true, true)];
        let rows_r = [(true, false), (false, true), (true, true), (false, false), (true, false)];
        let (corpus_c, vocab) = presence_corpus(&rows_c);
        let texts_r: Vec<String> = rows_r
            .iter()
            .map(|&(a, b)| {
                let mut s = String::from("pp");
                if a {
                    s.push_str(" aa");
                }
                if b {
                    s.push_str(" bb");
                }
                s
            })
            .collect();
        let corpus_r = corpus_of(&texts_r);
        let c = indicator_correlation(&presence_matrix(&corpus_c, &vocab).unwrap()).unwrap();
        let r = indicator_correlation(&presence_matrix(&corpus_r, &vocab).unwrap()).unwrap();
        let a = deviation(&c, &r).unwrap();
        let i = vocab.index_of("aa").unwrap();
        let j = vocab.index_of("bb").unwrap();
        let (cv, _) = c.entry(i, j);
        let (rv, _) = r.entry(i, j);
        let (av, ok) = a.entry(i, j);
        assert!(ok);
        assert_eq!(av, cv - rv);
    }

    #[test]
    fn deviation_rejects_mismatched_vocabularies() {
        let (corpus1, vocab1) = presence_corpus(&[(true, false), (false, true)]);
        let texts2 = vec!["pp xx".to_string(), "pp yy".to_string()];
        let corpus2 = corpus_of(&texts2);
        let vocab2 = Arc::new(candidate_vocabulary(&corpus2, 1, 3).unwrap());
        let c = indicator_correlation(&presence_matrix(&corpus1, &vocab1).unwrap()).unwrap();
        let r = indicator_correlation(&presence_matrix(&corpus2, &vocab2).unwrap()).unwrap();
        assert!(matches!(deviation(&c, &r), Err(Error::Incompatible(_))));
    }

    #[test]
    fn reference_equals_generation_gives_zero_deviation_downstream() {
        let rows = [(true, true), (false, true), (true, false), (false, false)];
        let (corpus, vocab) = presence_corpus(&rows);
        let gen = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        let reference = reference_matrix(&corpus, &vocab).unwrap();
        let a = deviation(&gen, &reference).unwrap();
        assert_eq!(a.ordered_hits(f64::MIN_POSITIVE), 0);
        assert_eq!(a.entry(0, 1).0, 0.0);
    }

    #[test]
    fn persistence_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rows: Vec<(bool, bool)> = (0..50)
            .map(|_| (rng.random::<f64>() < 0.5, rng.random::<f64>() < 0.3))
            .collect();
        let (corpus, vocab) = presence_corpus(&rows);
        let c = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mat");
        save_matrix(&c, &path).unwrap();
        let back = load_matrix(&path, &vocab).unwrap();
        assert_eq!(back.tri, c.tri);
        // byte-identical on re-save
        let path2 = dir.path().join("c2.mat");
        save_matrix(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn matrix_file_layout_is_pinned() {
        let (corpus, vocab) = presence_corpus(&[(true, false), (false, true), (true, true)]);
        let c = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mat");
        save_matrix(&c, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // magic, u32 T, 32-byte fingerprint, m f64 values, ceil(m/8) bitmap
        let t = vocab.len();
        let m = t * (t - 1) / 2;
        assert_eq!(&bytes[0..8], b"PMCOOC01");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), t as u32);
        assert_eq!(hex::encode(&bytes[12..44]), vocab.fingerprint());
        assert_eq!(bytes.len(), 44 + 8 * m + m.div_ceil(8));
        let first = f64::from_le_bytes(bytes[44..52].try_into().unwrap());
        assert_eq!(first, c.entry(1, 0).0);
    }

    #[test]
    fn load_matrix_rejects_wrong_vocabulary() {
        let (corpus, vocab) = presence_corpus(&[(true, false), (false, true)]);
        let c = indicator_correlation(&presence_matrix(&corpus, &vocab).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mat");
        save_matrix(&c, &path).unwrap();
        let texts2 = vec!["pp xx yy".to_string(), "pp yy".to_string()];
        let corpus2 = corpus_of(&texts2);
        let vocab2 = Arc::new(candidate_vocabulary(&corpus2, 1, 3).unwrap());
        assert!(matches!(
            load_matrix(&path, &vocab2),
            Err(Error::Incompatible(_))
        ));
    }
}
