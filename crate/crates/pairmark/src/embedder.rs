//! Embedding-stage orchestration: decide which documents can naturally
//! host which key pairs, drive the rephrasing model, and verify its claims.
//!
//! For each key pair (A, B) and document: if the document contains a
//! lexical variant of both A and B (a word counts as its own variant), the
//! pair joins the document's insertion list; if it matches A but no variant
//! of B, the pair routes to the deletion side, deleting A's exact word form
//! when present. The rephrasing model is not required to apply every edit;
//! every claim it makes is re-checked locally against the returned text,
//! and a document is only replaced by a fully validated rewrite - otherwise
//! the original text is kept byte-identical.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::keystore::{SecretKey, WordPair};
use crate::llmclient::{ChatClient, ChatRequest};
use crate::textstat::{token_set, tokenize};

// ---------------------------------------------------------------------------
// Lexical variants
// ---------------------------------------------------------------------------

/// Synonyms and strongly co-occurring terms per key word. Variants are
/// normalized single tokens; a word is never its own variant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VariantMap {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl VariantMap {
    pub fn new(entries: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        for (word, variants) in &entries {
            if variants.is_empty() {
                return Err(Error::Config(format!("word '{word}' has an empty variant set")));
            }
            if variants.contains(word) {
                return Err(Error::Config(format!("word '{word}' lists itself as a variant")));
            }
        }
        Ok(VariantMap { map: entries })
    }

    /// Load from JSON `{word: [variants...]}`, normalizing every entry
    /// through the corpus tokenizer. Multi-token variants are rejected.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(&std::fs::read_to_string(path.as_ref())?)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_raw(raw)
    }

    pub fn from_raw(raw: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (word, variants) in raw {
            let word_tokens = tokenize(&word);
            if word_tokens.len() != 1 {
                return Err(Error::Config(format!(
                    "variant-map key '{word}' is not a single word"
                )));
            }
            let word = word_tokens.into_iter().next().expect("one token");
            let mut set = BTreeSet::new();
            for variant in variants {
                let tokens = tokenize(&variant);
                if tokens.len() != 1 {
                    return Err(Error::Config(format!(
                        "variant '{variant}' of '{word}' is not a single word"
                    )));
                }
                let token = tokens.into_iter().next().expect("one token");
                if token != word {
                    set.insert(token);
                }
            }
            if set.is_empty() {
                return Err(Error::Config(format!("word '{word}' has an empty variant set")));
            }
            entries.insert(word, set);
        }
        Ok(VariantMap { map: entries })
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw: BTreeMap<&String, Vec<&String>> = self
            .map
            .iter()
            .map(|(w, set)| (w, set.iter().collect()))
            .collect();
        std::fs::write(path.as_ref(), serde_json::to_string_pretty(&raw)?)?;
        Ok(())
    }

    pub fn variants(&self, word: &str) -> Option<&BTreeSet<String>> {
        self.map.get(word)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Error naming the first key word without a variant entry.
    pub fn ensure_covers(&self, key: &SecretKey) -> Result<()> {
        for pair in &key.pairs {
            for word in [&pair.first, &pair.second] {
                if !self.map.contains_key(word) {
                    return Err(Error::Config(format!(
                        "variant map has no entry for key word '{word}'"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether the token set matches `word` or one of its variants.
    fn matches(&self, tokens: &HashSet<String>, word: &str) -> bool {
        if tokens.contains(word) {
            return true;
        }
        self.map
            .get(word)
            .is_some_and(|set| set.iter().any(|v| tokens.contains(v)))
    }
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

/// The edits proposed for one document in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RephrasePlan {
    pub doc_id: String,
    pub insertion_list: Vec<WordPair>,
    pub deletion_list: Vec<String>,
}

/// Decide per document which key pairs can be inserted naturally and which
/// route to the deletion side. Documents with nothing to do produce no plan.
pub fn build_plans(
    corpus: &Corpus,
    key: &SecretKey,
    variants: &VariantMap,
) -> Result<Vec<RephrasePlan>> {
    variants.ensure_covers(key)?;
    let mut plans = Vec::new();
    for doc in &corpus.docs {
        let tokens = token_set(&doc.text);
        let mut insertion_list: Vec<WordPair> = Vec::new();
        let mut deletion_list: Vec<String> = Vec::new();
        for pair in &key.pairs {
            let matches_a = variants.matches(&tokens, &pair.first);
            if !matches_a {
                continue;
            }
            if variants.matches(&tokens, &pair.second) {
                // both orders of a pair carry the same edit; keep one
                let duplicate = insertion_list
                    .iter()
                    .any(|p| {
                        (p.first == pair.first && p.second == pair.second)
                            || (p.first == pair.second && p.second == pair.first)
                    });
                if !duplicate {
                    insertion_list.push(pair.clone());
                }
            } else if tokens.contains(&pair.first) && !deletion_list.contains(&pair.first) {
                deletion_list.push(pair.first.clone());
            }
        }
        if !insertion_list.is_empty() || !deletion_list.is_empty() {
            plans.push(RephrasePlan {
                doc_id: doc.id.clone(),
                insertion_list,
                deletion_list,
            });
        }
    }
    Ok(plans)
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

const REPHRASE_PROMPT_TEMPLATE: &str = r#"You are a text processing and word integration assistant. Given an input text and two lists of words ("Words to Add" and "Words to Remove"), your goal is to produce a rephrased version of the text that:
 (1) Naturally and coherently incorporates as many words or (word pairs) as possible from the "Words to Add" list. If a word pair [word A, word B] is in "Words to Add", you must add both word A and word B to the text simultaneously.
 Note that these words tend to either have synonyms in the text or co-occur strongly with some words in the text. Hence, you may replace a word with its synonym.
 (2) Removes as many words as possible from the "Words to Remove" list by replacing words with a suitable synonym or rephrasing the text.
 (3) Preserves the original meaning and context of the input text. Make sure the text is grammatically correct, fluent, and does not sound unnatural.

ADDITIONAL RULES:
 * If the input text is a question, it must remain a question.
 * If the original text is incomplete, it is important that it remains incomplete; do not autocomplete the text.
 * Do not alter blank spaces, such as "_". These are placeholders and must remain in the output.
 * If the original text contains a quote, preserve the quotation marks and the integrity of the quoted content.
 * If there are specific formatting elements like citations (e.g., "(5,2,10)"), these must also remain unaltered.
 * If the original text contains a mathematical equation or code, do not modify them.

Other notes:
 * Do not modify the punctuation, for example, change " to "'s".
 * Use double quotes for both keys and string values.

If it is possible to successfully integrate at least one word or successfully remove at least one word, return a JSON object with the following structure:
{ "success": 1, "modified_text": "your modified text", "words added": [..], "words removed": [..] },
If it is impossible to add or remove the words naturally without making significant changes to the text's meaning or structure, return a JSON object:
{ "success": 0 }

If some words within the "Words to Add" list already exist in the text, just make sure not to remove the word from the text and do not add the word to the words added list.
Similarly, if some words in the "Words to Remove" list are not in the text, just make sure not to remove the word from the text and do not add the word to the words removed list.

Original text: {text}
Words to add: {adding_list}
Words to remove: [{removing_list}]

Please provide only the JSON output."#;

/// Fill the rephrase template. The text slot is inserted verbatim (quotes
/// and placeholders untouched); rendering is byte-deterministic.
pub fn render_prompt(doc: &Document, plan: &RephrasePlan) -> Result<String> {
    if plan.doc_id != doc.id {
        return Err(Error::Config(format!(
            "plan for '{}' applied to document '{}'",
            plan.doc_id, doc.id
        )));
    }
    let adding = format!(
        "[{}]",
        plan.insertion_list
            .iter()
            .map(|p| format!("[{}, {}]", p.first, p.second))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let removing = plan.deletion_list.join(", ");
    Ok(REPHRASE_PROMPT_TEMPLATE
        .replace("{text}", &doc.text)
        .replace("{adding_list}", &adding)
        .replace("{removing_list}", &removing))
}

// ---------------------------------------------------------------------------
// Response validation
// ---------------------------------------------------------------------------

/// One locally re-checked claim from the model's response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub claim: String,
    pub ok: bool,
}

/// The validated result of one rephrase attempt. When `success` is false
/// the modified text is the untouched original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RephraseOutcome {
    pub doc_id: String,
    pub success: bool,
    pub modified_text: String,
    pub words_added: Vec<String>,
    pub words_removed: Vec<String>,
    pub round: usize,
    pub validation: Vec<ClaimCheck>,
    pub failure_reason: Option<String>,
}

impl RephraseOutcome {
    fn failed(doc: &Document, reason: impl Into<String>) -> Self {
        RephraseOutcome {
            doc_id: doc.id.clone(),
            success: false,
            modified_text: doc.text.clone(),
            words_added: Vec::new(),
            words_removed: Vec::new(),
            round: 0,
            validation: Vec::new(),
            failure_reason: Some(reason.into()),
        }
    }
}

/// Pull the first JSON object out of a possibly fenced or chatty response.
fn extract_json_block(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

/// Parse and locally verify a model response: every claimed addition must
/// occur in the returned text, every claimed removal must be gone, and
/// underscore placeholders must be preserved. Any contradicted claim
/// downgrades the outcome to failure.
pub fn validate_outcome(
    original: &Document,
    raw_response: &str,
    _plan: &RephrasePlan,
) -> RephraseOutcome {
    let Some(json) = extract_json_block(raw_response) else {
        return RephraseOutcome::failed(original, "parse: no JSON object in response");
    };
    let value: serde_json::Value = match serde_json::from_str(json) {
        Ok(v) => v,
        Err(e) => return RephraseOutcome::failed(original, format!("parse: {e}")),
    };
    let success = match &value["success"] {
        serde_json::Value::Number(n) => n.as_i64() == Some(1),
        serde_json::Value::Bool(b) => *b,
        _ => false,
    };
    if !success {
        return RephraseOutcome {
            failure_reason: Some("model reported success=0".into()),
            ..RephraseOutcome::failed(original, "")
        };
    }
    let Some(modified_text) = value["modified_text"].as_str().filter(|t| !t.trim().is_empty())
    else {
        return RephraseOutcome::failed(original, "success=1 without modified_text");
    };
    let claimed = |field: &str| -> Vec<String> {
        value[field]
            .as_array()
            .map(|items| {
                items
                    .iter()
                    .filter_map(|v| v.as_str())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    };
    let words_added = claimed("words added");
    let words_removed = claimed("words removed");

    let tokens_after = token_set(modified_text);
    let mut validation = Vec::new();
    let mut all_ok = true;
    for word in &words_added {
        let normalized = tokenize(word);
        let ok = normalized.len() == 1 && tokens_after.contains(&normalized[0]);
        all_ok &= ok;
        validation.push(ClaimCheck {
            claim: format!("added:{word}"),
            ok,
        });
    }
    for word in &words_removed {
        let normalized = tokenize(word);
        let ok = normalized.len() == 1 && !tokens_after.contains(&normalized[0]);
        all_ok &= ok;
        validation.push(ClaimCheck {
            claim: format!("removed:{word}"),
            ok,
        });
    }
    let placeholders_kept =
        original.text.matches('_').count() == modified_text.matches('_').count();
    all_ok &= placeholders_kept;
    validation.push(ClaimCheck {
        claim: "placeholders".into(),
        ok: placeholders_kept,
    });

    RephraseOutcome {
        doc_id: original.id.clone(),
        success: all_ok,
        modified_text: if all_ok {
            modified_text.to_string()
        } else {
            original.text.clone()
        },
        words_added,
        words_removed,
        round: 0,
        validation,
        failure_reason: (!all_ok).then(|| "contradicted claims".into()),
    }
}

// ---------------------------------------------------------------------------
// Multi-round orchestration
// ---------------------------------------------------------------------------

/// Request parameters for rephrase calls.
#[derive(Debug, Clone)]
pub struct RephraseOptions {
    pub concurrency: usize,
    pub model_name: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub system_prompt: String,
}

impl Default for RephraseOptions {
    fn default() -> Self {
        RephraseOptions {
            concurrency: 8,
            model_name: String::new(),
            max_tokens: 1024,
            temperature: 0.2,
            system_prompt: String::new(),
        }
    }
}

/// One line of the embed audit log: every API call is recorded with its
/// request/response hashes and the validation verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub doc_id: String,
    pub round: usize,
    pub request_sha256: String,
    pub response_sha256: Option<String>,
    pub success: bool,
    pub applied: bool,
    pub validation: Vec<ClaimCheck>,
    pub error: Option<String>,
}

fn sha256_hex(data: &str) -> String {
    hex::encode(Sha256::digest(data.as_bytes()))
}

/// Run `rounds` passes of plan-building and rephrasing over the corpus.
///
/// Plans are rebuilt each round against the current text, so successful
/// insertions compound. Requests are dispatched with a bounded in-flight
/// limit but results are applied in document order, making the output
/// deterministic for a deterministic client. Documents whose calls fail
/// (after the client's own retries) keep their text and are logged.
pub fn run_rounds(
    corpus: &Corpus,
    key: &SecretKey,
    variants: &VariantMap,
    rounds: usize,
    client: &dyn ChatClient,
    options: &RephraseOptions,
) -> Result<(Corpus, Vec<AuditRecord>)> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let mut current = corpus.clone();
    let mut audit: Vec<AuditRecord> = Vec::new();
    let index_of: HashMap<String, usize> = current
        .docs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.clone(), i))
        .collect();

    for round in 1..=rounds {
        let plans = build_plans(&current, key, variants)?;
        if plans.is_empty() {
            break;
        }
        let prompts: Vec<(usize, String)> = plans
            .iter()
            .map(|plan| {
                let doc = &current.docs[index_of[&plan.doc_id]];
                Ok((index_of[&plan.doc_id], render_prompt(doc, plan)?))
            })
            .collect::<Result<_>>()?;

        let responses: Vec<Mutex<Option<std::result::Result<String, crate::error::LlmError>>>> =
            prompts.iter().map(|_| Mutex::new(None)).collect();
        let cursor = AtomicUsize::new(0);
        let workers = options.concurrency.clamp(1, prompts.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let slot = cursor.fetch_add(1, Ordering::SeqCst);
                    if slot >= prompts.len() {
                        break;
                    }
                    let request = ChatRequest {
                        system_prompt: options.system_prompt.clone(),
                        user_prompt: prompts[slot].1.clone(),
                        max_tokens: options.max_tokens,
                        temperature: options.temperature,
                        model_name: options.model_name.clone(),
                        seed: None,
                    };
                    *responses[slot].lock().expect("response lock") =
                        Some(client.chat(&request));
                });
            }
        });

        // apply in document order
        for ((slot, plan), response) in prompts.iter().zip(&plans).zip(responses) {
            let (doc_index, prompt) = (slot.0, &slot.1);
            let response = response.into_inner().expect("response lock");
            match response.expect("every slot visited") {
                Ok(raw) => {
                    let mut outcome = validate_outcome(&current.docs[doc_index], &raw, plan);
                    outcome.round = round;
                    let applied = outcome.success;
                    audit.push(AuditRecord {
                        doc_id: plan.doc_id.clone(),
                        round,
                        request_sha256: sha256_hex(prompt),
                        response_sha256: Some(sha256_hex(&raw)),
                        success: outcome.success,
                        applied,
                        validation: outcome.validation.clone(),
                        error: outcome.failure_reason.clone(),
                    });
                    if applied {
                        current.docs[doc_index].text = outcome.modified_text;
                    }
                }
                Err(e) => {
                    audit.push(AuditRecord {
                        doc_id: plan.doc_id.clone(),
                        round,
                        request_sha256: sha256_hex(prompt),
                        response_sha256: None,
                        success: false,
                        applied: false,
                        validation: Vec::new(),
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    Ok((current, audit))
}

/// Bootstrap a variant map by asking the chat model for synonyms and
/// co-occurring terms of each word. The resulting file is the authoritative
/// input for reproducible embed runs.
pub fn bootstrap_variants(
    client: &dyn ChatClient,
    words: &[String],
    options: &RephraseOptions,
) -> Result<VariantMap> {
    let mut raw = BTreeMap::new();
    for word in words {
        let request = ChatRequest {
            system_prompt: options.system_prompt.clone(),
            user_prompt: format!(
                "List 5 to 10 single-word synonyms or strongly co-occurring terms for the word \"{word}\". \
                 Respond with a JSON array of lowercase words only."
            ),
            max_tokens: options.max_tokens,
            temperature: options.temperature,
            model_name: options.model_name.clone(),
            seed: None,
        };
        let response = client.chat(&request).map_err(Error::Llm)?;
        let json = extract_json_array(&response)
            .ok_or_else(|| Error::Parse(format!("no JSON array for '{word}': {response}")))?;
        let variants: Vec<String> = serde_json::from_str(json)
            .map_err(|e| Error::Parse(format!("variants for '{word}': {e}")))?;
        raw.insert(word.clone(), variants);
    }
    VariantMap::from_raw(raw)
}

fn extract_json_array(raw: &str) -> Option<&str> {
    let start = raw.find('[')?;
    let end = raw.rfind(']')?;
    (end > start).then(|| &raw[start..=end])
}

/// Document-level co-occurrence count per key pair: in how many documents
/// both words of the pair appear. The embed stage must drive these up.
pub fn pair_cooccurrence_counts(corpus: &Corpus, key: &SecretKey) -> BTreeMap<WordPair, usize> {
    let doc_tokens: Vec<HashSet<String>> =
        corpus.docs.iter().map(|d| token_set(&d.text)).collect();
    key.pairs
        .iter()
        .map(|pair| {
            let count = doc_tokens
                .iter()
                .filter(|tokens| tokens.contains(&pair.first) && tokens.contains(&pair.second))
                .count();
            (pair.clone(), count)
        })
        .collect()
}
