//! `pairmark`: embed co-occurrence watermarks into text datasets and detect
//! them from black-box model generations.
//!
//! Exit codes: 0 success (or no detection), 10 watermark detected, 2 error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use pairmark::cooccur::{deviation, indicator_correlation, reference_matrix};
use pairmark::corpus::Corpus;
use pairmark::detector::{detect, render_report_json, threshold_for_p_value, DetectionConfig};
use pairmark::embedder::{pair_cooccurrence_counts, run_rounds, RephraseOptions, VariantMap};
use pairmark::keystore::{load_key, sample_key, save_key};
use pairmark::llmclient::{
    mock::{FaithfulRephraser, SeededGenerator},
    sample_generations, ChatClient, GenerationBatchSpec, HttpChatClient, SampleOptions,
    SeedPolicy,
};
use pairmark::nullsim::{
    boosted_spec_for_key, emit_corpus, exact_fpr, hoeffding_bound, permute_entries,
    random_key_fpr, write_sweep_csv, SweepRow,
};
use pairmark::perturb::{perturb_corpus, PerturbConfig, PerturbKind};
use pairmark::quality::{quality_report, write_quality_csv};
use pairmark::textstat::{candidate_vocabulary, presence_matrix};

const EXIT_DETECTED: u8 = 10;
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "pairmark",
    version,
    about = "Word-pair co-occurrence dataset watermarking and black-box detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the candidate vocabulary from a corpus and sample a secret key.
    Keygen(KeygenArgs),
    /// Rephrase a corpus to raise co-occurrence of the key pairs.
    Embed(EmbedArgs),
    /// Score generations against a reference corpus and report a p-value.
    Detect(DetectArgs),
    /// Verify the false-positive bound (exact or Monte Carlo) or run a
    /// synthetic power study; writes a sweep CSV.
    Simulate(SimulateArgs),
    /// Apply a robustness stress transform to a corpus.
    Perturb(PerturbArgs),
    /// Measure n-gram preservation between an original and modified corpus.
    Quality(QualityArgs),
}

/// Optional TOML config file; flags take precedence over file values,
/// file values over built-in defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    k1: Option<usize>,
    k2: Option<usize>,
    d: Option<usize>,
    seed: Option<u64>,
    tau: Option<f64>,
    t: Option<f64>,
    alpha: Option<f64>,
    rounds: Option<usize>,
    n_samples: Option<usize>,
    max_tokens: Option<u32>,
    temperature: Option<f64>,
    concurrency: Option<usize>,
    provider: Option<Provider>,
    model: Option<String>,
    prompt: Option<String>,
}

impl FileConfig {
    fn load(path: &Option<PathBuf>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Provider {
    /// Deterministic offline mocks.
    Mock,
    /// Chat-completion endpoint from PAIRMARK_API_BASE / _API_KEY / _MODEL.
    Http,
}

const DEFAULT_K1: usize = 20;
const DEFAULT_K2: usize = 1020;
const DEFAULT_D: usize = 250;
const DEFAULT_TAU: f64 = 0.03;
const DEFAULT_ALPHA: f64 = 0.01;
const DEFAULT_ROUNDS: usize = 3;
const DEFAULT_N_SAMPLES: usize = 20_000;
const DEFAULT_CONCURRENCY: usize = 8;
const DEFAULT_PROMPT: &str = "Please generate a QA question.";

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Echo the effective configuration next to an output artifact so every
/// run is reproducible from its products.
fn write_run_sidecar(out: &Path, command: &str, effective: serde_json::Value) -> Result<()> {
    let sidecar = serde_json::json!({
        "command": command,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "timestamp": chrono::Utc::now().to_rfc3339(),
        "effective_config": effective,
    });
    let path = out.with_extension(format!(
        "{}run.json",
        out.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen(args) => cmd_keygen(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Perturb(args) => cmd_perturb(args),
        Command::Quality(args) => cmd_quality(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

// ---------------------------------------------------------------------------
// keygen
// ---------------------------------------------------------------------------

#[derive(Args)]
struct KeygenArgs {
    /// Corpus (JSONL) whose frequent words form the candidate vocabulary.
    #[arg(long)]
    corpus: PathBuf,
    /// Lower frequency rank bound (exclusive).
    #[arg(long)]
    k1: Option<usize>,
    /// Upper frequency rank bound (inclusive).
    #[arg(long)]
    k2: Option<usize>,
    /// Number of word pairs in the key.
    #[arg(long)]
    d: Option<usize>,
    /// Sampling seed; drawn from OS entropy when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output key file (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_keygen(args: KeygenArgs) -> Result<ExitCode> {
    let file = FileConfig::load(&args.config)?;
    let k1 = pick(args.k1, file.k1, DEFAULT_K1);
    let k2 = pick(args.k2, file.k2, DEFAULT_K2);
    let d = pick(args.d, file.d, DEFAULT_D);
    let seed = pick(args.seed, file.seed, rand_seed());

    let corpus = Corpus::read_jsonl(&args.corpus)?;
    let vocab = candidate_vocabulary(&corpus, k1, k2)?;
    let key = sample_key(&vocab, d, seed)?;
    save_key(&key, &args.out)?;
    write_run_sidecar(
        &args.out,
        "keygen",
        serde_json::json!({
            "corpus": args.corpus, "k1": k1, "k2": k2, "d": d, "seed": seed,
        }),
    )?;
    println!(
        "vocabulary T={} (ranks {}..{}], key d={} seed={} fingerprint={}",
        vocab.len(),
        k1,
        k2,
        d,
        seed,
        key.fingerprint()
    );
    println!("key written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn rand_seed() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    // entropy is fine here; the chosen seed is persisted in the key file
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ (std::process::id() as u64).rotate_left(32)
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EmbedArgs {
    /// Corpus to watermark (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Secret key file from `keygen`.
    #[arg(long)]
    key: PathBuf,
    /// Variant map JSON ({word: [variants...]}).
    #[arg(long)]
    variants: PathBuf,
    /// Rephrasing rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Watermarked corpus output (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Audit log output (JSONL); defaults next to the output corpus.
    #[arg(long)]
    audit: Option<PathBuf>,
    #[arg(long, value_enum)]
    provider: Option<Provider>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn make_rephrase_client(provider: Provider) -> Result<Box<dyn ChatClient>> {
    Ok(match provider {
        Provider::Mock => Box::new(FaithfulRephraser),
        Provider::Http => Box::new(HttpChatClient::from_env()?),
    })
}

fn cmd_embed(args: EmbedArgs) -> Result<ExitCode> {
    let file = FileConfig::load(&args.config)?;
    let rounds = pick(args.rounds, file.rounds, DEFAULT_ROUNDS);
    let provider = pick(args.provider, file.provider, Provider::Http);
    let options = RephraseOptions {
        concurrency: pick(args.concurrency, file.concurrency, DEFAULT_CONCURRENCY),
        model_name: pick(args.model.clone(), file.model.clone(), String::new()),
        max_tokens: pick(args.max_tokens, file.max_tokens, 1024),
        temperature: pick(args.temperature, file.temperature, 0.2),
        system_prompt: String::new(),
    };

    let corpus = Corpus::read_jsonl(&args.corpus)?;
    let key = load_key(&args.key)?;
    let variants = VariantMap::from_json_file(&args.variants)?;
    let client = make_rephrase_client(provider)?;

    let before = pair_cooccurrence_counts(&corpus, &key);
    let (watermarked, audit) = run_rounds(&corpus, &key, &variants, rounds, client.as_ref(), &options)?;
    let after = pair_cooccurrence_counts(&watermarked, &key);

    watermarked.write_jsonl(&args.out)?;
    let audit_path = args
        .audit
        .clone()
        .unwrap_or_else(|| args.out.with_extension("audit.jsonl"));
    {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(&audit_path)?);
        for record in &audit {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
    }

    // co-occurrence uplift per key pair, before vs after
    let uplift: Vec<serde_json::Value> = key
        .pairs
        .iter()
        .map(|pair| {
            serde_json::json!({
                "first": pair.first,
                "second": pair.second,
                "docs_before": before[pair],
                "docs_after": after[pair],
            })
        })
        .collect();
    let increased = key
        .pairs
        .iter()
        .filter(|p| after[*p] > before[*p])
        .count();
    let uplift_path = args.out.with_extension("uplift.json");
    std::fs::write(
        &uplift_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "pairs": uplift,
            "pairs_increased": increased,
            "pairs_total": key.pairs.len(),
        }))?,
    )?;
    write_run_sidecar(
        &args.out,
        "embed",
        serde_json::json!({
            "corpus": args.corpus, "key": args.key, "variants": args.variants,
            "rounds": rounds, "provider": format!("{provider:?}"),
            "concurrency": options.concurrency, "max_tokens": options.max_tokens,
            "temperature": options.temperature, "model": options.model_name,
        }),
    )?;
    println!(
        "embedded {} docs over {} rounds: {} rephrase calls, {} applied; {}/{} key pairs increased",
        watermarked.len(),
        rounds,
        audit.len(),
        audit.iter().filter(|r| r.applied).count(),
        increased,
        key.pairs.len()
    );
    println!(
        "watermarked corpus: {} | audit: {} | uplift: {}",
        args.out.display(),
        audit_path.display(),
        uplift_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

#[derive(Args)]
struct DetectArgs {
    /// Secret key file.
    #[arg(long)]
    key: PathBuf,
    /// Reference (non-watermarked) corpus for the baseline correlations.
    #[arg(long)]
    reference: PathBuf,
    /// Corpus for vocabulary construction; defaults to the reference.
    #[arg(long)]
    vocab_corpus: Option<PathBuf>,
    /// Pre-collected generations (JSONL); skips sampling.
    #[arg(long)]
    generations: Option<PathBuf>,
    /// Number of generations to sample when --generations is absent.
    #[arg(long)]
    n_samples: Option<usize>,
    /// Where sampled generations are written.
    #[arg(long)]
    save_generations: Option<PathBuf>,
    /// Checkpoint file for resumable sampling.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    /// Deviation threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Score threshold; computed from --alpha when omitted.
    #[arg(long)]
    t: Option<f64>,
    /// Target false-positive rate used to derive t.
    #[arg(long)]
    alpha: Option<f64>,
    /// Detection report output (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    provider: Option<Provider>,
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Base seed forwarded per sample (mock provider is deterministic in it).
    #[arg(long)]
    gen_seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_detect(args: DetectArgs) -> Result<ExitCode> {
    let file = FileConfig::load(&args.config)?;
    let k1 = pick(args.k1, file.k1, DEFAULT_K1);
    let k2 = pick(args.k2, file.k2, DEFAULT_K2);
    let tau = pick(args.tau, file.tau, DEFAULT_TAU);
    let alpha = pick(args.alpha, file.alpha, DEFAULT_ALPHA);
    let provider = pick(args.provider, file.provider, Provider::Http);

    let key = load_key(&args.key)?;
    let reference = Corpus::read_jsonl(&args.reference)?;
    let vocab_corpus = match &args.vocab_corpus {
        Some(path) => Corpus::read_jsonl(path)?,
        None => reference.clone(),
    };
    let vocab = Arc::new(candidate_vocabulary(&vocab_corpus, k1, k2)?);
    key.check_compatible(&vocab)?;

    // pin the full detection config before any expensive sampling
    let d = key.len();
    let t = match pick(args.t, file.t, f64::NAN) {
        t if t.is_nan() => threshold_for_p_value(alpha, d, vocab.len())?,
        t => t,
    };
    let config = DetectionConfig {
        tau,
        t,
        d,
        vocab_size: vocab.len(),
    };
    config.validate()?;

    let generations = match &args.generations {
        Some(path) => Corpus::read_jsonl(path)?,
        None => {
            let spec = GenerationBatchSpec {
                prompt: pick(args.prompt.clone(), file.prompt.clone(), DEFAULT_PROMPT.into()),
                system_prompt: String::new(),
                n_samples: pick(args.n_samples, file.n_samples, DEFAULT_N_SAMPLES),
                max_tokens: pick(args.max_tokens, file.max_tokens, 128),
                temperature: pick(args.temperature, file.temperature, 1.0),
                model_name: pick(args.model.clone(), file.model.clone(), String::new()),
                seed_policy: match args.gen_seed {
                    Some(base) => SeedPolicy::PerSample { base },
                    None => match provider {
                        // the mock needs per-sample seeds to vary its output
                        Provider::Mock => SeedPolicy::PerSample { base: 0 },
                        Provider::Http => SeedPolicy::None,
                    },
                },
            };
            let client: Box<dyn ChatClient> = match provider {
                Provider::Mock => Box::new(SeededGenerator::default_lexicon()),
                Provider::Http => Box::new(HttpChatClient::from_env()?),
            };
            let options = SampleOptions {
                checkpoint_path: args.checkpoint.clone(),
                concurrency: pick(args.concurrency, file.concurrency, DEFAULT_CONCURRENCY),
            };
            let corpus = sample_generations(client.as_ref(), &spec, &options)?;
            if let Some(path) = &args.save_generations {
                corpus.write_jsonl(path)?;
            }
            corpus
        }
    };

    let r = reference_matrix(&reference, &vocab)?;
    let c = indicator_correlation(&presence_matrix(&generations, &vocab)?)?;
    let a = deviation(&c, &r)?;
    let report = detect(&a, &key, &config)?;

    let mut json = render_report_json(&report, &key);
    json.as_object_mut().expect("object").insert(
        "effective_config".into(),
        serde_json::json!({
            "k1": k1, "k2": k2, "tau": tau, "t": t, "alpha": alpha, "d": d,
            "vocab_size": vocab.len(),
            "reference": args.reference,
            "generations": args.generations,
            "n_generations": generations.len(),
            "provider": format!("{provider:?}"),
        }),
    );
    std::fs::write(&args.out, serde_json::to_string_pretty(&json)?)?;
    println!(
        "score={:.6} p={:.3e} (log10 p = {:.2}) decision={}",
        report.score,
        report.p_value,
        report.log10_p_value,
        if report.decision { "WATERMARKED" } else { "not detected" }
    );
    println!("report written to {}", args.out.display());
    Ok(if report.decision {
        ExitCode::from(EXIT_DETECTED)
    } else {
        ExitCode::SUCCESS
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimulateMode {
    /// Exhaustive enumeration on a small universe.
    Exact,
    /// Random keys against a permuted null deviation matrix.
    Montecarlo,
    /// Synthetic boosted-emitter power study.
    Power,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mode: SimulateMode,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Vocabulary size T.
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Key sizes d (comma separated for power-mode ablations).
    #[arg(long, value_delimiter = ',')]
    d: Vec<usize>,
    /// Number of ordered pairs above tau (exact mode).
    #[arg(long)]
    k_hits: Option<u64>,
    /// Score thresholds to evaluate.
    #[arg(long, value_delimiter = ',')]
    t_grid: Vec<f64>,
    /// Deviation thresholds tau (comma separated for power-mode ablations).
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    /// Random keys (montecarlo) or trials (power).
    #[arg(long)]
    n_keys: Option<usize>,
    /// Documents per emitted corpus.
    #[arg(long)]
    n_docs: Option<usize>,
    /// Per-word emission probability of the synthetic emitter.
    #[arg(long)]
    base_prob: Option<f64>,
    /// Joint boost for key pairs (power mode).
    #[arg(long)]
    beta: Option<f64>,
    /// Emitted document length in words.
    #[arg(long)]
    doc_len: Option<usize>,
    /// Target false-positive rate defining the detection threshold.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn emitter_vocab(
    n_words: usize,
    base_prob: f64,
    doc_len: usize,
    n_docs: usize,
    seed: u64,
    boosted: &[(pairmark::keystore::WordPair, f64)],
) -> Result<(Corpus, Arc<pairmark::textstat::CandidateVocabulary>)> {
    let words: Vec<String> = (0..n_words).map(|i| format!("word{i:04}")).collect();
    let spec = pairmark::nullsim::EmitterSpec {
        word_probs: words.iter().map(|w| (w.clone(), base_prob)).collect(),
        boosted_pairs: boosted.to_vec(),
        doc_length_words: doc_len,
    };
    let corpus = emit_corpus(&spec, n_docs, seed)?;
    // the filler token outranks every candidate word; slice it off
    let vocab = Arc::new(candidate_vocabulary(&corpus, 1, n_words + 1)?);
    Ok((corpus, vocab))
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let file = FileConfig::load(&args.config)?;
    let seed = pick(args.seed, file.seed, 0);
    let alpha = pick(args.alpha, file.alpha, DEFAULT_ALPHA);
    let t_grid = if args.t_grid.is_empty() {
        vec![0.02, 0.05, 0.1, 0.2]
    } else {
        args.t_grid.clone()
    };
    let taus = if args.tau.is_empty() {
        vec![pick(None, file.tau, DEFAULT_TAU)]
    } else {
        args.tau.clone()
    };
    let ds = if args.d.is_empty() {
        vec![pick(None, file.d, DEFAULT_D)]
    } else {
        args.d.clone()
    };

    let mut rows: Vec<SweepRow> = Vec::new();
    match args.mode {
        SimulateMode::Exact => {
            let vocab_size = args.vocab_size.unwrap_or(6);
            let k_hits = args
                .k_hits
                .context("--k-hits is required in exact mode")?;
            for &d in &ds {
                for &t in &t_grid {
                    rows.push(SweepRow {
                        t,
                        tau: None,
                        d,
                        vocab_size,
                        empirical_fpr: exact_fpr(vocab_size, d, k_hits, t)?,
                        bound: hoeffding_bound(t, d, vocab_size),
                        n_keys: 0,
                    });
                }
            }
        }
        SimulateMode::Montecarlo => {
            let vocab_size = args.vocab_size.unwrap_or(200);
            let n_keys = args.n_keys.unwrap_or(1000);
            let n_docs = args.n_docs.unwrap_or(4000);
            let base_prob = args.base_prob.unwrap_or(0.2);
            let doc_len = args.doc_len.unwrap_or(((vocab_size as f64 * base_prob) as usize).max(8) * 2);
            let (gen_corpus, vocab) =
                emitter_vocab(vocab_size, base_prob, doc_len, n_docs, seed, &[])?;
            let ref_corpus = {
                let words: Vec<String> =
                    (0..vocab_size).map(|i| format!("word{i:04}")).collect();
                let spec = pairmark::nullsim::EmitterSpec {
                    word_probs: words.iter().map(|w| (w.clone(), base_prob)).collect(),
                    boosted_pairs: vec![],
                    doc_length_words: doc_len,
                };
                emit_corpus(&spec, n_docs, seed ^ 0x5EED)?
            };
            let c = indicator_correlation(&presence_matrix(&gen_corpus, &vocab)?)?;
            let r = indicator_correlation(&presence_matrix(&ref_corpus, &vocab)?)?;
            let a = permute_entries(&deviation(&c, &r)?, seed ^ 0xFACE);
            for &d in &ds {
                for &tau in &taus {
                    let report = random_key_fpr(&a, d, tau, t_grid[0], n_keys, seed)?;
                    for &t in &t_grid {
                        rows.push(SweepRow {
                            t,
                            tau: Some(tau),
                            d,
                            vocab_size,
                            empirical_fpr: report.empirical_fpr_at(t),
                            bound: hoeffding_bound(t, d, vocab_size),
                            n_keys: n_keys as u64,
                        });
                    }
                }
            }
        }
        SimulateMode::Power => {
            let vocab_size = args.vocab_size.unwrap_or(200);
            let runs = args.n_keys.unwrap_or(20);
            let n_docs = args.n_docs.unwrap_or(20_000);
            let base_prob = args.base_prob.unwrap_or(0.05);
            let beta = args.beta.unwrap_or(0.1);
            let doc_len = args.doc_len.unwrap_or(((vocab_size as f64 * base_prob) as usize).max(8) * 2);
            // fixed reference from the unboosted emitter
            let (ref_corpus, vocab) =
                emitter_vocab(vocab_size, base_prob, doc_len, n_docs, seed ^ 0x0FF5E7, &[])?;
            let r = indicator_correlation(&presence_matrix(&ref_corpus, &vocab)?)?;
            for &d in &ds {
                for &tau in &taus {
                    let t = threshold_for_p_value(alpha, d, vocab.len())?;
                    let mut detections = 0usize;
                    for run in 0..runs {
                        let run_seed = seed.wrapping_add(1 + run as u64);
                        let key = sample_key(&vocab, d, run_seed)?;
                        let spec = boosted_spec_for_key(
                            vocab.words(),
                            &key.pairs,
                            base_prob,
                            beta,
                            doc_len,
                        );
                        let gen_corpus = emit_corpus(&spec, n_docs, run_seed ^ 0xB00)?;
                        let c = indicator_correlation(&presence_matrix(&gen_corpus, &vocab)?)?;
                        let a = deviation(&c, &r)?;
                        let config = DetectionConfig {
                            tau,
                            t,
                            d,
                            vocab_size: vocab.len(),
                        };
                        if detect(&a, &key, &config)?.decision {
                            detections += 1;
                        }
                    }
                    rows.push(SweepRow {
                        t,
                        tau: Some(tau),
                        d,
                        vocab_size,
                        empirical_fpr: detections as f64 / runs as f64,
                        bound: alpha,
                        n_keys: runs as u64,
                    });
                }
            }
        }
    }

    let out = std::fs::File::create(&args.out)?;
    write_sweep_csv(std::io::BufWriter::new(out), &rows)?;
    write_run_sidecar(
        &args.out,
        "simulate",
        serde_json::json!({
            "mode": format!("{:?}", args.mode), "seed": seed, "alpha": alpha,
            "t_grid": t_grid, "tau": taus, "d": ds,
        }),
    )?;
    println!("{} rows written to {}", rows.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// perturb
// ---------------------------------------------------------------------------

#[derive(Args)]
struct PerturbArgs {
    /// Input corpus (JSONL).
    input: PathBuf,
    /// Output corpus (JSONL).
    output: PathBuf,
    #[arg(long, value_enum)]
    kind: CliPerturbKind,
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON map {word: replacement} for synonym substitution.
    #[arg(long)]
    synonyms: Option<PathBuf>,
    /// Emit this many seeded variants (out.seed<N>.jsonl) instead of one file.
    #[arg(long)]
    num_seeds: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliPerturbKind {
    Deletion,
    Synonym,
    Emoji,
}

impl From<CliPerturbKind> for PerturbKind {
    fn from(kind: CliPerturbKind) -> Self {
        match kind {
            CliPerturbKind::Deletion => PerturbKind::Deletion,
            CliPerturbKind::Synonym => PerturbKind::Synonym,
            CliPerturbKind::Emoji => PerturbKind::Emoji,
        }
    }
}

fn cmd_perturb(args: PerturbArgs) -> Result<ExitCode> {
    let corpus = Corpus::read_jsonl(&args.input)?;
    let mut cfg = PerturbConfig::new(args.kind.into(), args.ratio, args.seed);
    if let Some(path) = &args.synonyms {
        let map: HashMap<String, String> =
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("parsing synonym map {}", path.display()))?;
        cfg = cfg.with_synonyms(map);
    }
    match args.num_seeds {
        None => {
            let out = perturb_corpus(&corpus, &cfg)?;
            out.write_jsonl(&args.output)?;
            println!("perturbed {} docs -> {}", out.len(), args.output.display());
        }
        Some(k) => {
            for offset in 0..k as u64 {
                let mut variant_cfg = cfg.clone();
                variant_cfg.seed = args.seed + offset;
                let out = perturb_corpus(&corpus, &variant_cfg)?;
                let path = args.output.with_extension(format!("seed{offset}.jsonl"));
                out.write_jsonl(&path)?;
                println!("seed {} -> {}", variant_cfg.seed, path.display());
            }
        }
    }
    write_run_sidecar(
        &args.output,
        "perturb",
        serde_json::json!({
            "kind": format!("{:?}", args.kind), "ratio": args.ratio,
            "seed": args.seed, "num_seeds": args.num_seeds,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// quality
// ---------------------------------------------------------------------------

#[derive(Args)]
struct QualityArgs {
    /// Original corpus (JSONL).
    original: PathBuf,
    /// Modified corpus (JSONL).
    modified: PathBuf,
    /// Per-document CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full JSON report output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Externally computed per-document similarity scores
    /// ({doc_id: score} JSON), merged into the JSON summary.
    #[arg(long)]
    external_scores: Option<PathBuf>,
}

fn cmd_quality(args: QualityArgs) -> Result<ExitCode> {
    let original = Corpus::read_jsonl(&args.original)?;
    let modified = Corpus::read_jsonl(&args.modified)?;
    let mut report = quality_report(&original, &modified)?;
    if let Some(path) = &args.external_scores {
        let scores = pairmark::quality::read_external_scores(path)?;
        report.attach_external_scores(&scores)?;
    }
    if let Some(path) = &args.csv {
        write_quality_csv(&report, std::fs::File::create(path)?)?;
        write_run_sidecar(
            path,
            "quality",
            serde_json::json!({"original": args.original, "modified": args.modified}),
        )?;
    }
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    println!(
        "docs={} mean 3-gram overlap={:.4} mean 4-gram overlap={:.4}",
        report.doc_count, report.mean_ngram3, report.mean_ngram4
    );
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn bad_config_keys_are_rejected() {
        let parsed: std::result::Result<FileConfig, _> = toml::from_str("unknown_key = 1");
        assert!(parsed.is_err());
        let parsed: std::result::Result<FileConfig, _> = toml::from_str("tau = 0.03\nd = 250");
        let config = parsed.unwrap();
        assert_eq!(config.tau, Some(0.03));
        assert_eq!(config.d, Some(250));
    }
}
