//! Chat-completion client used for rephrasing (embedding stage) and bulk
//! generation sampling (detection stage), plus deterministic mocks that
//! make the whole pipeline runnable offline.
//!
//! The HTTP client speaks the widely adopted chat-completion schema
//! (`{model, messages[], max_tokens, temperature}`) against a base URL and
//! key taken from `PAIRMARK_API_BASE` / `PAIRMARK_API_KEY` /
//! `PAIRMARK_MODEL`, so it works against commercial APIs and local
//! inference servers alike. Bulk sampling checkpoints progress so an
//! interrupted run resumes without duplicating or dropping a sample.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, LlmError, Result};

/// One chat call.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub model_name: String,
    /// Forwarded to providers that accept a sampling seed; drives the
    /// deterministic mocks.
    pub seed: Option<u64>,
}

/// Anything that can answer a chat request. Implementations must be safe
/// to share across the bounded worker pool.
pub trait ChatClient: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> std::result::Result<String, LlmError>;
}

// ---------------------------------------------------------------------------
// HTTP client
// ---------------------------------------------------------------------------

/// Retry policy for transient failures.
#[derive(Debug, Clone)]
pub struct RetryConfig {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }
}

/// Connection settings for the HTTP provider.
#[derive(Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub retry: RetryConfig,
}

// The API key must never reach logs or audit records.
impl std::fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .field("model", &self.model)
            .field("timeout", &self.timeout)
            .field("retry", &self.retry)
            .finish()
    }
}

impl HttpConfig {
    /// Read PAIRMARK_API_BASE, PAIRMARK_API_KEY and PAIRMARK_MODEL.
    pub fn from_env() -> Result<Self> {
        let base_url = std::env::var("PAIRMARK_API_BASE")
            .map_err(|_| LlmError::NotConfigured("PAIRMARK_API_BASE is not set".into()))?;
        let api_key = std::env::var("PAIRMARK_API_KEY").unwrap_or_default();
        let model = std::env::var("PAIRMARK_MODEL")
            .map_err(|_| LlmError::NotConfigured("PAIRMARK_MODEL is not set".into()))?;
        Ok(HttpConfig {
            base_url,
            api_key,
            model,
            timeout: Duration::from_secs(120),
            retry: RetryConfig::default(),
        })
    }
}

/// Blocking chat-completion client with bounded exponential-backoff retries
/// on transient failures (transport, timeout, rate limiting).
pub struct HttpChatClient {
    config: HttpConfig,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatClient")
            .field("config", &self.config)
            .finish()
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl HttpChatClient {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpChatClient { config, http })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(HttpConfig::from_env()?)
    }

    fn attempt(&self, request: &ChatRequest) -> std::result::Result<String, LlmError> {
        let mut messages = Vec::with_capacity(2);
        if !request.system_prompt.is_empty() {
            messages.push(WireMessage {
                role: "system",
                content: &request.system_prompt,
            });
        }
        messages.push(WireMessage {
            role: "user",
            content: &request.user_prompt,
        });
        let model = if request.model_name.is_empty() {
            &self.config.model
        } else {
            &request.model_name
        };
        let body = WireRequest {
            model,
            messages,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            seed: request.seed,
        };
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let response = self
            .http
            .post(&url)
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    LlmError::Timeout(e.to_string())
                } else {
                    LlmError::Transport(e.to_string())
                }
            })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(LlmError::Auth(format!("status {status}: {text}"))),
            429 => return Err(LlmError::RateLimited(format!("status {status}: {text}"))),
            500..=599 => return Err(LlmError::Transport(format!("status {status}: {text}"))),
            _ => return Err(LlmError::Provider(format!("status {status}: {text}"))),
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::MalformedResponse(format!("{e}: {text}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                LlmError::MalformedResponse(format!("no choices[0].message.content in: {text}"))
            })
    }
}

impl ChatClient for HttpChatClient {
    fn chat(&self, request: &ChatRequest) -> std::result::Result<String, LlmError> {
        let mut backoff = self.config.retry.initial_backoff;
        let mut last_err = None;
        for attempt in 0..=self.config.retry.max_retries {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff = (backoff * 2).min(self.config.retry.max_backoff);
            }
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}

// ---------------------------------------------------------------------------
// Bulk generation sampling with checkpointed resume
// ---------------------------------------------------------------------------

/// How per-sample seeds are forwarded to the provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPolicy {
    /// No seed field on requests.
    None,
    /// Request for sample `i` carries seed `base + i`; with a seeded
    /// provider (or the mock) this makes sample `i` deterministic.
    PerSample { base: u64 },
}

/// A bulk sampling job: the same prompt issued `n_samples` times.
#[derive(Debug, Clone)]
pub struct GenerationBatchSpec {
    pub prompt: String,
    pub system_prompt: String,
    pub n_samples: usize,
    pub max_tokens: u32,
    pub temperature: f64,
    pub model_name: String,
    pub seed_policy: SeedPolicy,
}

impl GenerationBatchSpec {
    /// Detection-time defaults: the fixed QA prompt, 20k samples, 128-token
    /// generations at temperature 1.
    pub fn detection_defaults() -> Self {
        GenerationBatchSpec {
            prompt: "Please generate a QA question.".into(),
            system_prompt: String::new(),
            n_samples: 20_000,
            max_tokens: 128,
            temperature: 1.0,
            model_name: String::new(),
            seed_policy: SeedPolicy::None,
        }
    }

    fn request_for(&self, index: usize) -> ChatRequest {
        ChatRequest {
            system_prompt: self.system_prompt.clone(),
            user_prompt: self.prompt.clone(),
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            model_name: self.model_name.clone(),
            seed: match self.seed_policy {
                SeedPolicy::None => None,
                SeedPolicy::PerSample { base } => Some(base.wrapping_add(index as u64)),
            },
        }
    }
}

/// Execution knobs for [`sample_generations`].
#[derive(Debug, Clone)]
pub struct SampleOptions {
    pub checkpoint_path: Option<PathBuf>,
    pub concurrency: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            checkpoint_path: None,
            concurrency: 8,
        }
    }
}

const CHECKPOINT_FLUSH_EVERY: usize = 500;

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    index: usize,
    text: String,
}

fn read_checkpoint(path: &Path) -> Result<HashMap<usize, String>> {
    let mut map = HashMap::new();
    if !path.exists() {
        return Ok(map);
    }
    let reader = BufReader::new(File::open(path)?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CheckpointEntry = serde_json::from_str(&line).map_err(|e| {
            Error::Parse(format!("{}: line {lineno}: {e}", path.display()))
        })?;
        map.insert(entry.index, entry.text);
    }
    Ok(map)
}

struct CheckpointWriter {
    out: BufWriter<File>,
    pending: usize,
}

impl CheckpointWriter {
    fn append(&mut self, index: usize, text: &str) -> Result<()> {
        serde_json::to_writer(&mut self.out, &CheckpointEntry {
            index,
            text: text.to_string(),
        })?;
        self.out.write_all(b"\n")?;
        self.pending += 1;
        if self.pending >= CHECKPOINT_FLUSH_EVERY {
            self.out.flush()?;
            self.pending = 0;
        }
        Ok(())
    }
}

/// Issue the batch, resuming from the checkpoint when one exists. Returns a
/// corpus of exactly `n_samples` documents with ids `gen-0000...`; on
/// persistent per-sample failure the successes are checkpointed and an
/// incompleteness error is returned.
pub fn sample_generations(
    client: &dyn ChatClient,
    spec: &GenerationBatchSpec,
    options: &SampleOptions,
) -> Result<Corpus> {
    if spec.n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let mut completed: Vec<Option<String>> = vec![None; spec.n_samples];
    if let Some(path) = &options.checkpoint_path {
        for (index, text) in read_checkpoint(path)? {
            if index < spec.n_samples {
                completed[index] = Some(text);
            }
        }
    }
    let missing: Vec<usize> = completed
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.is_none().then_some(i))
        .collect();

    if !missing.is_empty() {
        let writer = match &options.checkpoint_path {
            Some(path) => {
                let file = OpenOptions::new().create(true).append(true).open(path)?;
                Some(Mutex::new(CheckpointWriter {
                    out: BufWriter::new(file),
                    pending: 0,
                }))
            }
            None => None,
        };
        let results: Vec<Mutex<Option<std::result::Result<String, LlmError>>>> =
            missing.iter().map(|_| Mutex::new(None)).collect();
        let cursor = AtomicUsize::new(0);
        let workers = options.concurrency.clamp(1, missing.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let slot = cursor.fetch_add(1, Ordering::SeqCst);
                    if slot >= missing.len() {
                        break;
                    }
                    let index = missing[slot];
                    let outcome = client.chat(&spec.request_for(index));
                    if let (Ok(text), Some(w)) = (&outcome, &writer) {
                        // failures are retried on the next run, not recorded
                        let _ = w.lock().expect("checkpoint lock").append(index, text);
                    }
                    *results[slot].lock().expect("result lock") = Some(outcome);
                });
            }
        });
        if let Some(w) = &writer {
            w.lock().expect("checkpoint lock").out.flush()?;
        }
        let mut first_error: Option<LlmError> = None;
        let mut failures = 0usize;
        for (slot, result) in results.into_iter().enumerate() {
            match result.into_inner().expect("result lock") {
                Some(Ok(text)) => completed[missing[slot]] = Some(text),
                Some(Err(e)) => {
                    failures += 1;
                    first_error.get_or_insert(e);
                }
                None => unreachable!("every slot is visited"),
            }
        }
        if failures > 0 {
            let done = completed.iter().filter(|t| t.is_some()).count();
            return Err(Error::IncompleteGeneration {
                completed: done,
                requested: spec.n_samples,
                reason: format!(
                    "{failures} samples failed; first error: {}",
                    first_error.expect("failures imply an error")
                ),
            });
        }
    }

    let width = ((spec.n_samples.max(2) - 1).ilog10() as usize + 1).max(4);
    let docs: Vec<Document> = completed
        .into_iter()
        .enumerate()
        .map(|(i, text)| Document::new(format!("gen-{i:0width$}"), text.expect("all complete")))
        .collect();
    Corpus::new(docs, "generated")
}

// ---------------------------------------------------------------------------
// Deterministic mocks
// ---------------------------------------------------------------------------

pub mod mock {
    use super::*;
    use crate::textstat::{token_set, tokenize};
    use rand::seq::IndexedRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Handler = Box<dyn Fn(&ChatRequest) -> std::result::Result<String, LlmError> + Send + Sync>;

    /// Programmable mock: canned responses keyed by user prompt, or an
    /// arbitrary handler. Counts calls for assertions.
    pub struct MockChatClient {
        handler: Handler,
        calls: AtomicUsize,
    }

    impl MockChatClient {
        pub fn with_handler(
            handler: impl Fn(&ChatRequest) -> std::result::Result<String, LlmError> + Send + Sync + 'static,
        ) -> Self {
            MockChatClient {
                handler: Box::new(handler),
                calls: AtomicUsize::new(0),
            }
        }

        /// Respond from a prompt->response map, with an optional fallback.
        pub fn canned(map: HashMap<String, String>, fallback: Option<String>) -> Self {
            Self::with_handler(move |req| {
                map.get(&req.user_prompt).cloned().or_else(|| fallback.clone()).ok_or_else(
                    || LlmError::Provider(format!("no canned response for: {}", req.user_prompt)),
                )
            })
        }

        pub fn call_count(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl ChatClient for MockChatClient {
        fn chat(&self, request: &ChatRequest) -> std::result::Result<String, LlmError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            (self.handler)(request)
        }
    }

    /// Emits pseudo-text drawn from a fixed word list, deterministic in the
    /// request seed: the offline stand-in for detection-time sampling.
    pub struct SeededGenerator {
        words: Vec<String>,
        words_per_sample: usize,
    }

    impl SeededGenerator {
        pub fn new(words: Vec<String>, words_per_sample: usize) -> Self {
            SeededGenerator {
                words,
                words_per_sample,
            }
        }

        /// A small default lexicon of question-ish filler.
        pub fn default_lexicon() -> Self {
            let words = [
                "which", "what", "where", "when", "question", "answer", "following",
                "correct", "option", "choose", "describe", "explain", "value", "number",
                "system", "process", "result", "example", "common", "general",
            ]
            .into_iter()
            .map(String::from)
            .collect();
            SeededGenerator::new(words, 12)
        }
    }

    impl ChatClient for SeededGenerator {
        fn chat(&self, request: &ChatRequest) -> std::result::Result<String, LlmError> {
            let mut rng = ChaCha8Rng::seed_from_u64(request.seed.unwrap_or(0));
            let text: Vec<&str> = (0..self.words_per_sample)
                .map(|_| {
                    self.words
                        .choose(&mut rng)
                        .map(String::as_str)
                        .unwrap_or("word")
                })
                .collect();
            Ok(text.join(" "))
        }
    }

    /// Applies the edits a rephrase prompt asks for, literally: removals
    /// first (protecting words that any insertion pair needs), then
    /// appending missing insertion words. Claims mirror what actually
    /// changed so local validation passes.
    pub struct FaithfulRephraser;

    fn slice_between<'a>(haystack: &'a str, start: &str, end: Option<&str>) -> Option<&'a str> {
        let from = haystack.rfind(start)? + start.len();
        match end {
            Some(end) => {
                let to = haystack[from..].find(end)? + from;
                Some(&haystack[from..to])
            }
            None => Some(&haystack[from..]),
        }
    }

    impl ChatClient for FaithfulRephraser {
        fn chat(&self, request: &ChatRequest) -> std::result::Result<String, LlmError> {
            let prompt = &request.user_prompt;
            let text = slice_between(prompt, "Original text: ", Some("\nWords to add: "))
                .ok_or_else(|| LlmError::Provider("prompt has no text slot".into()))?;
            let adding = slice_between(prompt, "Words to add: ", Some("\nWords to remove: "))
                .ok_or_else(|| LlmError::Provider("prompt has no add slot".into()))?;
            let removing = slice_between(prompt, "Words to remove: [", Some("]"))
                .ok_or_else(|| LlmError::Provider("prompt has no remove slot".into()))?;

            let mut add_words: Vec<String> = Vec::new();
            for pair in adding.trim().trim_start_matches('[').trim_end_matches(']').split("], [") {
                for word in pair.split(',') {
                    let word = word.trim();
                    if !word.is_empty() && !add_words.iter().any(|w| w == word) {
                        add_words.push(word.to_string());
                    }
                }
            }
            let remove_words: Vec<String> = removing
                .split(',')
                .map(|w| w.trim().to_string())
                .filter(|w| !w.is_empty())
                .collect();

            let before = token_set(text);
            let to_remove: Vec<&String> = remove_words
                .iter()
                .filter(|w| before.contains(*w) && !add_words.contains(w))
                .collect();
            let kept: Vec<&str> = text
                .split_whitespace()
                .filter(|tok| {
                    let toks = tokenize(tok);
                    !(toks.len() == 1 && to_remove.iter().any(|w| **w == toks[0]))
                })
                .collect();
            let to_add: Vec<&String> = add_words.iter().filter(|w| !before.contains(*w)).collect();

            if to_add.is_empty() && to_remove.is_empty() {
                return Ok("{ \"success\": 0 }".to_string());
            }
            let mut modified = kept.join(" ");
            for word in &to_add {
                if !modified.is_empty() {
                    modified.push(' ');
                }
                modified.push_str(word);
            }
            let response = serde_json::json!({
                "success": 1,
                "modified_text": modified,
                "words added": to_add,
                "words removed": to_remove,
            });
            Ok(response.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{MockChatClient, SeededGenerator};
    use super::*;
    use std::collections::HashSet;

    fn req(prompt: &str) -> ChatRequest {
        ChatRequest {
            system_prompt: String::new(),
            user_prompt: prompt.into(),
            max_tokens: 64,
            temperature: 1.0,
            model_name: "test".into(),
            seed: None,
        }
    }

    #[test]
    fn canned_mock_returns_mapped_response() {
        let map = HashMap::from([("hello".to_string(), "world".to_string())]);
        let mock = MockChatClient::canned(map, None);
        assert_eq!(mock.chat(&req("hello")).unwrap(), "world");
        assert!(mock.chat(&req("other")).is_err());
        assert_eq!(mock.call_count(), 2);
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error_after_retries() {
        let config = HttpConfig {
            base_url: "http://127.0.0.1:9".into(),
            api_key: "sk-test".into(),
            model: "m".into(),
            timeout: Duration::from_millis(200),
            retry: RetryConfig {
                max_retries: 2,
                initial_backoff: Duration::from_millis(1),
                max_backoff: Duration::from_millis(2),
            },
        };
        let client = HttpChatClient::new(config).unwrap();
        match client.chat(&req("hi")) {
            Err(LlmError::Transport(_)) | Err(LlmError::Timeout(_)) => {}
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    /// One-shot HTTP server answering every request on the listener with a
    /// fixed status and body.
    fn serve_once(status: &'static str, body: &'static str) -> String {
        use std::io::{Read as _, Write as _};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = vec![0u8; 65536];
                let mut read = 0;
                // read until the end of headers plus the declared body
                loop {
                    match stream.read(&mut buf[read..]) {
                        Ok(0) | Err(_) => break,
                        Ok(n) => read += n,
                    }
                    let text = String::from_utf8_lossy(&buf[..read]);
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::trim).map(String::from))
                            .and_then(|v| v.parse::<usize>().ok())
                            .unwrap_or(0);
                        if read >= header_end + 4 + content_length {
                            break;
                        }
                    }
                }
                let response = format!(
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}")
    }

    fn client_for(base_url: String) -> HttpChatClient {
        HttpChatClient::new(HttpConfig {
            base_url,
            api_key: "sk-test".into(),
            model: "m".into(),
            timeout: Duration::from_secs(5),
            retry: RetryConfig {
                max_retries: 0,
                initial_backoff: Duration::from_millis(1),
                max_backoff: Duration::from_millis(1),
            },
        })
        .unwrap()
    }

    #[test]
    fn successful_completion_returns_assistant_text() {
        let base = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"the reply"}}]}"#,
        );
        let client = client_for(base);
        assert_eq!(client.chat(&req("hi")).unwrap(), "the reply");
    }

    #[test]
    fn provider_errors_surface_the_body_verbatim() {
        let base = serve_once("400 Bad Request", r#"{"error":"prompt too long"}"#);
        let client = client_for(base);
        match client.chat(&req("oversized")) {
            Err(LlmError::Provider(message)) => {
                assert!(message.contains("prompt too long"), "{message}");
            }
            other => panic!("expected provider error, got {other:?}"),
        }
    }

    #[test]
    fn auth_rejection_is_not_retried() {
        let base = serve_once("401 Unauthorized", r#"{"error":"bad key"}"#);
        let client = client_for(base);
        assert!(matches!(client.chat(&req("hi")), Err(LlmError::Auth(_))));
    }

    #[test]
    fn malformed_success_body_is_flagged() {
        let base = serve_once("200 OK", r#"{"unexpected":"shape"}"#);
        let client = client_for(base);
        assert!(matches!(
            client.chat(&req("hi")),
            Err(LlmError::MalformedResponse(_))
        ));
    }

    mod scrub_property {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // no credential may ever surface in loggable client output
            #[test]
            fn debug_output_scrubs_arbitrary_keys(suffix in "[A-Za-z0-9]{12,48}") {
                let api_key = format!("sk-{suffix}");
                let config = HttpConfig {
                    base_url: "http://localhost".into(),
                    api_key: api_key.clone(),
                    model: "m".into(),
                    timeout: Duration::from_secs(1),
                    retry: RetryConfig::default(),
                };
                let client = HttpChatClient::new(config.clone()).unwrap();
                for dump in [format!("{config:?}"), format!("{client:?}")] {
                    prop_assert!(!dump.contains(&api_key));
                    prop_assert!(!dump.contains(&suffix));
                }
            }
        }
    }

    #[test]
    fn detection_defaults_match_operating_point() {
        let spec = GenerationBatchSpec::detection_defaults();
        assert_eq!(spec.prompt, "Please generate a QA question.");
        assert_eq!(spec.n_samples, 20_000);
        assert_eq!(spec.max_tokens, 128);
        assert_eq!(spec.temperature, 1.0);
    }

    #[test]
    fn debug_output_never_contains_the_api_key() {
        let config = HttpConfig {
            base_url: "http://localhost".into(),
            api_key: "sk-supersecret-123".into(),
            model: "m".into(),
            timeout: Duration::from_secs(1),
            retry: RetryConfig::default(),
        };
        let client = HttpChatClient::new(config).unwrap();
        let dump = format!("{client:?}");
        assert!(!dump.contains("supersecret"));
        assert!(dump.contains("<redacted>"));
    }

    fn batch(n: usize) -> GenerationBatchSpec {
        GenerationBatchSpec {
            prompt: "Please generate a QA question.".into(),
            system_prompt: String::new(),
            n_samples: n,
            max_tokens: 32,
            temperature: 1.0,
            model_name: String::new(),
            seed_policy: SeedPolicy::PerSample { base: 1000 },
        }
    }

    #[test]
    fn sampling_produces_indexed_unique_ids() {
        let client = SeededGenerator::default_lexicon();
        let corpus = sample_generations(&client, &batch(100), &SampleOptions::default()).unwrap();
        assert_eq!(corpus.len(), 100);
        assert_eq!(corpus.docs[0].id, "gen-0000");
        assert_eq!(corpus.docs[99].id, "gen-0099");
        let ids: HashSet<&str> = corpus.docs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn per_sample_seeds_make_sampling_deterministic() {
        let client = SeededGenerator::default_lexicon();
        let a = sample_generations(&client, &batch(20), &SampleOptions::default()).unwrap();
        let b = sample_generations(&client, &batch(20), &SampleOptions::default()).unwrap();
        assert_eq!(a.docs, b.docs);
        // distinct indices get distinct seeds, so texts vary across the batch
        let distinct: HashSet<&str> = a.docs.iter().map(|d| d.text.as_str()).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn failed_samples_checkpoint_successes_and_resume_completes() {
        let dir = tempfile::tempdir().unwrap();
        let checkpoint = dir.path().join("gen.checkpoint.jsonl");
        // fail every sample with seed >= 1050 (i.e. indices 50..)
        let flaky = MockChatClient::with_handler(|request| {
            let seed = request.seed.unwrap_or(0);
            if seed >= 1050 {
                Err(LlmError::Transport("injected outage".into()))
            } else {
                Ok(format!("text-{seed}"))
            }
        });
        let options = SampleOptions {
            checkpoint_path: Some(checkpoint.clone()),
            concurrency: 1,
        };
        let err = sample_generations(&flaky, &batch(100), &options).unwrap_err();
        match err {
            Error::IncompleteGeneration {
                completed,
                requested,
                ..
            } => {
                assert_eq!(completed, 50);
                assert_eq!(requested, 100);
            }
            other => panic!("expected incompleteness, got {other}"),
        }

        // resume with a healthy provider: only the missing 50 are requested
        let healthy = MockChatClient::with_handler(|request| {
            Ok(format!("text-{}", request.seed.unwrap_or(0)))
        });
        let corpus = sample_generations(&healthy, &batch(100), &options).unwrap();
        assert_eq!(healthy.call_count(), 50);
        assert_eq!(corpus.len(), 100);
        let ids: HashSet<&str> = corpus.docs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids.len(), 100);
        // every sample carries the text derived from its own index
        for (i, doc) in corpus.docs.iter().enumerate() {
            assert_eq!(doc.text, format!("text-{}", 1000 + i));
        }
    }

    #[test]
    fn checkpoint_restart_never_duplicates_indices() {
        let dir = tempfile::tempdir().unwrap();
        let checkpoint = dir.path().join("gen.checkpoint.jsonl");
        let client = SeededGenerator::default_lexicon();
        let options = SampleOptions {
            checkpoint_path: Some(checkpoint.clone()),
            concurrency: 4,
        };
        let first = sample_generations(&client, &batch(40), &options).unwrap();
        // a second run finds the checkpoint complete and issues no calls
        let counting = MockChatClient::with_handler(|_| Ok("unused".into()));
        let second = sample_generations(&counting, &batch(40), &options).unwrap();
        assert_eq!(counting.call_count(), 0);
        assert_eq!(first.docs, second.docs);
        let entries = read_checkpoint(&checkpoint).unwrap();
        assert_eq!(entries.len(), 40);
    }
}
