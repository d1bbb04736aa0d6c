//! Controlled administration of measures against a chat endpoint: request
//! construction, seeding, questioning and collection, with retries, bounded
//! concurrency, and resumable persistence.
//!
//! Every (persona, measure, item, repetition, phase) key is asked in a fresh
//! session: requests carry only the seeding prompt, the instrument
//! instructions, and the item itself, never earlier responses. A retest is a
//! full second administration under fresh sessions.

mod client;
mod clock;
mod store;

pub use client::{ChatClient, ChatMessage, ChatRequest, ClientError, DecodingConfig, HttpChatClient};
pub use clock::{Clock, FixedClock, SystemClock};
pub use store::{canonical_jsonl, CorruptLine, StoreContents, StoreError, TranscriptStore};

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::{mpsc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::measure::{Item, MeasureKind, MeasureSpec};
use crate::persona::Persona;

/// Administration pass. A retest is an independent second administration in
/// fresh sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Test,
    Retest,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Test => "test",
            Phase::Retest => "retest",
        })
    }
}

/// Identity of one exchange. Unique within a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TranscriptKey {
    pub persona_id: String,
    pub measure_id: String,
    pub item_id: String,
    pub repetition: u32,
    pub phase: Phase,
}

impl TranscriptKey {
    fn order_tuple(&self) -> (Phase, &str, &str, &str, u32) {
        (
            self.phase,
            &self.persona_id,
            &self.measure_id,
            &self.item_id,
            self.repetition,
        )
    }
}

/// Canonical order: phase-major (the whole test pass precedes the retest),
/// then persona, measure, item, repetition.
impl Ord for TranscriptKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_tuple().cmp(&other.order_tuple())
    }
}

impl PartialOrd for TranscriptKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TranscriptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, rep {}, {})",
            self.persona_id, self.measure_id, self.item_id, self.repetition, self.phase
        )
    }
}

/// One recorded exchange: the exact request, the verbatim response, and the
/// decoding settings in force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(flatten)]
    pub key: TranscriptKey,
    pub request_messages: Vec<ChatMessage>,
    pub raw_response: String,
    pub decoding: DecodingConfig,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub attempt_count: u32,
}

/// Endpoint and run-control settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_seed: Option<u64>,
    pub max_in_flight: usize,
    pub retry_limit: u32,
    pub timeout_ms: u64,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
}

fn default_backoff_base_ms() -> u64 {
    200
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            endpoint_url: String::new(),
            model_id: String::new(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 256,
            request_seed: None,
            max_in_flight: 1,
            retry_limit: 3,
            timeout_ms: 30_000,
            backoff_base_ms: default_backoff_base_ms(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let fail = |msg: String| Err(ProtocolError::InvalidConfig(msg));
        if self.max_in_flight < 1 {
            return fail("max_in_flight must be at least 1".into());
        }
        if self.retry_limit > 10 {
            return fail(format!("retry_limit {} exceeds the cap of 10", self.retry_limit));
        }
        if !(self.temperature >= 0.0) {
            return fail(format!("temperature {} must be >= 0", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return fail(format!("top_p {} must lie in (0, 1]", self.top_p));
        }
        if self.max_tokens == 0 {
            return fail("max_tokens must be positive".into());
        }
        Ok(())
    }

    pub fn decoding(&self) -> DecodingConfig {
        DecodingConfig {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            request_seed: self.request_seed,
        }
    }
}

/// Prefix of the answer-format directive for explicit items.
pub const EXPLICIT_DIRECTIVE_PREFIX: &str = "Answer with exactly one of: ";
/// The line prefix the scorer extracts from implicit responses.
pub const PAIRS_LINE_PREFIX: &str = "PAIRS:";
/// The literal format shown to the respondent for implicit items.
pub const PAIRS_FORMAT_LINE: &str = "PAIRS: <name>-<attribute>; <name>-<attribute>";

/// Build the chat request for one (persona, item) exchange.
///
/// The system message seeds the personality and carries the instrument
/// instructions; the user message carries the item stem plus the strict
/// answer-format directive (anchor list for explicit items, pairing
/// directive for implicit ones). Deterministic given its inputs.
///
/// Panics if `item` does not belong to `measure`.
pub fn build_request(
    persona: &Persona,
    measure: &MeasureSpec,
    item: &Item,
    config: &ProtocolConfig,
) -> ChatRequest {
    assert!(
        measure.items.iter().any(|i| i.id == item.id),
        "item '{}' is not part of measure '{}'",
        item.id,
        measure.id
    );

    let system = format!("{}\n\n{}", persona.seed_prompt, measure.instructions);
    let user = match measure.kind {
        MeasureKind::Explicit => {
            let labels: Vec<&str> = measure.anchors.iter().map(|a| a.label.as_str()).collect();
            format!(
                "{}\n\n{}{}",
                item.stem,
                EXPLICIT_DIRECTIVE_PREFIX,
                labels.join(" | ")
            )
        }
        MeasureKind::ImplicitAssociation | MeasureKind::ImplicitVignette => {
            let lex = item
                .lexicons
                .as_ref()
                .expect("validated implicit items carry lexicons");
            let names: Vec<&str> = lex.all_names().collect();
            let attrs: Vec<&str> = lex.all_attrs().collect();
            let (noun, lead) = match measure.kind {
                MeasureKind::ImplicitAssociation => {
                    ("Attributes", "Reply with exactly one line in the form:")
                }
                _ => (
                    "Roles",
                    "Write a brief story for the scenario, then end your reply with exactly one line in the form:",
                ),
            };
            format!(
                "{}\n\nNames: {}\n{}: {}\n\n{}\n{}\nUse each name at most once, pairing it with exactly one of the listed options.",
                item.stem,
                names.join(", "),
                noun,
                attrs.join(", "),
                lead,
                PAIRS_FORMAT_LINE,
            )
        }
    };

    ChatRequest {
        messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
        decoding: config.decoding(),
    }
}

/// A failed key with the final error that exhausted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedKey {
    pub key: TranscriptKey,
    pub error: String,
}

/// Record of one administration run: what was planned, what completed, and
/// under which configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub measure_ids: Vec<String>,
    pub persona_source_hash: String,
    pub config: ProtocolConfig,
    pub phases: Vec<Phase>,
    pub planned: usize,
    pub completed_keys: Vec<TranscriptKey>,
    pub failed_keys: Vec<FailedKey>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Wall-clock gap between the end of the test pass and the start of the
    /// retest pass, when both ran in this invocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retest_gap_ms: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("endpoint rejected authentication: {0}")]
    EndpointAuth(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid protocol config: {0}")]
    InvalidConfig(String),
}

/// Hash of the persona list; recorded in the manifest so a run is traceable
/// to the exact personas that produced it.
pub fn persona_source_hash(personas: &[Persona]) -> String {
    let mut hasher = Sha256::new();
    for p in personas {
        hasher.update(p.id.as_bytes());
        hasher.update([0]);
        hasher.update(p.seed_prompt.as_bytes());
        hasher.update([0]);
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn derive_run_id(
    measures: &[MeasureSpec],
    persona_hash: &str,
    phases: &[Phase],
    config: &ProtocolConfig,
) -> String {
    let mut hasher = Sha256::new();
    for m in measures {
        hasher.update(m.id.as_bytes());
        hasher.update([0]);
    }
    hasher.update(persona_hash.as_bytes());
    for p in phases {
        hasher.update(p.to_string().as_bytes());
    }
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    let digest = hex_string(&hasher.finalize());
    format!("run-{}", &digest[..12])
}

enum WorkerMessage {
    Done(Transcript),
    Failed(FailedKey),
    Abort(String),
}

/// Administer every (persona, item, phase) combination, resuming past any
/// keys already present in the store.
///
/// Requests are issued in canonical key order with at most
/// `config.max_in_flight` outstanding at once. Transient failures retry up
/// to `config.retry_limit` times with exponential backoff and then land in
/// the manifest's failed keys; authentication failures abort the run.
pub fn administer(
    measures: &[MeasureSpec],
    personas: &[Persona],
    phases: &[Phase],
    client: &dyn ChatClient,
    config: &ProtocolConfig,
    store: &TranscriptStore,
    clock: &dyn Clock,
) -> Result<RunManifest, ProtocolError> {
    config.validate()?;
    let started_unix_ms = clock.now_unix_ms();

    let mut phases: Vec<Phase> = phases.to_vec();
    phases.sort();
    phases.dedup();

    // Full plan in canonical key order.
    let mut plan: Vec<TranscriptKey> = Vec::new();
    for &phase in &phases {
        for persona in personas {
            for measure in measures {
                for item in &measure.items {
                    plan.push(TranscriptKey {
                        persona_id: persona.id.clone(),
                        measure_id: measure.id.clone(),
                        item_id: item.id.clone(),
                        repetition: 0,
                        phase,
                    });
                }
            }
        }
    }
    plan.sort();
    let planned = plan.len();

    // Resume: skip keys the store already holds.
    let existing: BTreeSet<TranscriptKey> = if store.exists() {
        store.load()?.transcripts.into_iter().map(|t| t.key).collect()
    } else {
        BTreeSet::new()
    };
    let mut completed_keys: Vec<TranscriptKey> = plan
        .iter()
        .filter(|k| existing.contains(*k))
        .cloned()
        .collect();
    let todo: Vec<TranscriptKey> = plan
        .iter()
        .filter(|k| !existing.contains(*k))
        .cloned()
        .collect();

    let persona_hash = persona_source_hash(personas);
    let run_id = derive_run_id(measures, &persona_hash, &phases, config);

    let mut failed_keys: Vec<FailedKey> = Vec::new();
    let mut auth_failure: Option<String> = None;
    let mut store_failure: Option<StoreError> = None;
    let mut test_phase_end: Option<u64> = None;
    let mut retest_phase_start: Option<u64> = None;

    if !todo.is_empty() {
        let queue = Mutex::new(todo.into_iter());
        let abort = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<WorkerMessage>();
        let n_workers = config.max_in_flight.min(planned.max(1));

        std::thread::scope(|scope| {
            for _ in 0..n_workers {
                let tx = tx.clone();
                let queue = &queue;
                let abort = &abort;
                scope.spawn(move || {
                    worker_loop(measures, personas, config, client, clock, queue, abort, tx);
                });
            }
            drop(tx);

            // Single-writer discipline: only this thread touches the store.
            for message in rx {
                match message {
                    WorkerMessage::Done(transcript) => {
                        match transcript.key.phase {
                            Phase::Test => {
                                let t = transcript.finished_unix_ms;
                                test_phase_end =
                                    Some(test_phase_end.map_or(t, |prev| prev.max(t)));
                            }
                            Phase::Retest => {
                                let t = transcript.started_unix_ms;
                                retest_phase_start =
                                    Some(retest_phase_start.map_or(t, |prev| prev.min(t)));
                            }
                        }
                        if let Err(e) = store.append(&transcript) {
                            // Stop issuing work, drain the channel, surface
                            // the store error after the scope ends.
                            abort.store(true, AtomicOrdering::SeqCst);
                            if store_failure.is_none() {
                                store_failure = Some(e);
                            }
                            continue;
                        }
                        completed_keys.push(transcript.key);
                    }
                    WorkerMessage::Failed(failed) => failed_keys.push(failed),
                    WorkerMessage::Abort(reason) => {
                        abort.store(true, AtomicOrdering::SeqCst);
                        if auth_failure.is_none() {
                            auth_failure = Some(reason);
                        }
                    }
                }
            }
        });
    }

    if let Some(e) = store_failure {
        return Err(ProtocolError::Store(e));
    }
    if let Some(reason) = auth_failure {
        return Err(ProtocolError::EndpointAuth(reason));
    }

    completed_keys.sort();
    failed_keys.sort_by(|a, b| a.key.cmp(&b.key));

    let retest_gap_ms = match (test_phase_end, retest_phase_start) {
        (Some(end), Some(start)) => Some(start.saturating_sub(end)),
        _ => None,
    };

    Ok(RunManifest {
        run_id,
        measure_ids: measures.iter().map(|m| m.id.clone()).collect(),
        persona_source_hash: persona_hash,
        config: config.clone(),
        phases,
        planned,
        completed_keys,
        failed_keys,
        started_unix_ms,
        finished_unix_ms: clock.now_unix_ms(),
        retest_gap_ms,
    })
}

#[allow(clippy::too_many_arguments)]
fn worker_loop(
    measures: &[MeasureSpec],
    personas: &[Persona],
    config: &ProtocolConfig,
    client: &dyn ChatClient,
    clock: &dyn Clock,
    queue: &Mutex<std::vec::IntoIter<TranscriptKey>>,
    abort: &AtomicBool,
    tx: mpsc::Sender<WorkerMessage>,
) {
    loop {
        if abort.load(AtomicOrdering::SeqCst) {
            return;
        }
        let Some(key) = queue.lock().expect("queue lock").next() else {
            return;
        };
        let measure = measures
            .iter()
            .find(|m| m.id == key.measure_id)
            .expect("planned keys reference known measures");
        let item = measure
            .item(&key.item_id)
            .expect("planned keys reference known items");
        let persona = personas
            .iter()
            .find(|p| p.id == key.persona_id)
            .expect("planned keys reference known personas");
        let request = build_request(persona, measure, item, config);

        let started = clock.now_unix_ms();
        let mut attempt: u32 = 0;
        let message = loop {
            attempt += 1;
            match client.complete(&key, &request) {
                Ok(raw_response) => {
                    break WorkerMessage::Done(Transcript {
                        key: key.clone(),
                        request_messages: request.messages.clone(),
                        raw_response,
                        decoding: request.decoding.clone(),
                        started_unix_ms: started,
                        finished_unix_ms: clock.now_unix_ms(),
                        attempt_count: attempt,
                    })
                }
                Err(ClientError::Auth(reason)) => break WorkerMessage::Abort(reason),
                Err(ClientError::Transient(reason)) => {
                    if attempt > config.retry_limit {
                        break WorkerMessage::Failed(FailedKey {
                            key: key.clone(),
                            error: format!("exhausted {} retries: {reason}", config.retry_limit),
                        });
                    }
                    let delay = config
                        .backoff_base_ms
                        .saturating_mul(1u64 << (attempt - 1).min(16))
                        .min(10_000);
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
                Err(ClientError::Permanent(reason)) => {
                    break WorkerMessage::Failed(FailedKey { key: key.clone(), error: reason })
                }
            }
        };
        if tx.send(message).is_err() {
            return;
        }
    }
}

/// Load all transcripts from a store, tolerating (and reporting) corrupt
/// lines. Ordering is canonical by key.
pub fn load_transcripts(store: &TranscriptStore) -> Result<StoreContents, StoreError> {
    store.load()
}

#[cfg(test)]
mod tests;
