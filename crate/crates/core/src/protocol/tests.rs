use super::*;
use crate::measure::{Anchor, Item, MeasureSpec};
use crate::persona::{sample_personas, TraitSet, DEFAULT_SEED_TEMPLATE};

use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

fn explicit_measure(n_items: usize) -> MeasureSpec {
    MeasureSpec {
        id: "m-explicit".into(),
        construct: "c".into(),
        construct_definition: "d".into(),
        kind: crate::measure::MeasureKind::Explicit,
        version: "1".into(),
        instructions: "Reply with exactly one of the listed options, verbatim.".into(),
        anchors: vec![
            Anchor { label: "strongly agree".into(), score: 2, is_refusal: false },
            Anchor { label: "somewhat agree".into(), score: 1, is_refusal: false },
            Anchor { label: "neither agree nor disagree".into(), score: 0, is_refusal: false },
            Anchor { label: "somewhat disagree".into(), score: -1, is_refusal: false },
            Anchor { label: "strongly disagree".into(), score: -2, is_refusal: false },
            Anchor { label: "I do not wish to answer".into(), score: 0, is_refusal: true },
        ],
        items: (0..n_items)
            .map(|i| Item {
                id: format!("item-{i:02}"),
                stem: format!("Statement {i}."),
                reverse_keyed: false,
                lexicons: None,
            })
            .collect(),
    }
}

fn association_measure() -> MeasureSpec {
    use crate::measure::{Congruence, CongruenceRule, ImplicitLexicons, NameGroup};
    MeasureSpec {
        id: "m-assoc".into(),
        construct: "c".into(),
        construct_definition: "d".into(),
        kind: crate::measure::MeasureKind::ImplicitAssociation,
        version: "1".into(),
        instructions: "Follow the pairing directive exactly.".into(),
        anchors: vec![],
        items: vec![Item {
            id: "assoc-00".into(),
            stem: "Consider the people and the words below.".into(),
            reverse_keyed: false,
            lexicons: Some(ImplicitLexicons {
                group_a_names: vec!["Julia".into()],
                group_b_names: vec!["Latisha".into()],
                attrs_a: vec!["gentle".into()],
                attrs_b: vec!["aggressive".into()],
                congruence: vec![
                    CongruenceRule { group: NameGroup::A, attr: "gentle".into(), label: Congruence::Congruent },
                    CongruenceRule { group: NameGroup::A, attr: "aggressive".into(), label: Congruence::Incongruent },
                    CongruenceRule { group: NameGroup::B, attr: "gentle".into(), label: Congruence::Incongruent },
                    CongruenceRule { group: NameGroup::B, attr: "aggressive".into(), label: Congruence::Congruent },
                ],
            }),
        }],
    }
}

fn personas(n: usize) -> Vec<crate::persona::Persona> {
    let set = TraitSet::new(
        ["calm", "curious", "formal", "humorous", "pragmatic"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
    .unwrap();
    sample_personas(&set, n, 7, DEFAULT_SEED_TEMPLATE).unwrap()
}

fn test_config() -> ProtocolConfig {
    ProtocolConfig {
        endpoint_url: "http://unused.invalid".into(),
        model_id: "test-model".into(),
        backoff_base_ms: 1,
        ..ProtocolConfig::default()
    }
}

/// Deterministic client: echoes the key. Counts calls.
struct EchoClient {
    calls: AtomicUsize,
}

impl EchoClient {
    fn new() -> Self {
        EchoClient { calls: AtomicUsize::new(0) }
    }

    fn calls(&self) -> usize {
        self.calls.load(AtomicOrdering::SeqCst)
    }
}

impl ChatClient for EchoClient {
    fn complete(&self, key: &TranscriptKey, _request: &ChatRequest) -> Result<String, ClientError> {
        self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        Ok(format!("echo {key}"))
    }
}

/// Fails every request for the first `failures` calls, then succeeds.
struct FlakyClient {
    failures: usize,
    calls: AtomicUsize,
}

impl ChatClient for FlakyClient {
    fn complete(&self, key: &TranscriptKey, _request: &ChatRequest) -> Result<String, ClientError> {
        let n = self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        if n < self.failures {
            Err(ClientError::Transient("synthetic flake".into()))
        } else {
            Ok(format!("echo {key}"))
        }
    }
}

/// Succeeds `successes` times, then reports an authentication failure.
struct ExpiringClient {
    successes: usize,
    calls: AtomicUsize,
}

impl ChatClient for ExpiringClient {
    fn complete(&self, key: &TranscriptKey, _request: &ChatRequest) -> Result<String, ClientError> {
        let n = self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        if n < self.successes {
            Ok(format!("echo {key}"))
        } else {
            Err(ClientError::Auth("synthetic credential expiry".into()))
        }
    }
}

// ---------------------------------------------------------------------------
// build_request
// ---------------------------------------------------------------------------

#[test]
fn explicit_request_lists_all_anchors() {
    let measure = explicit_measure(3);
    let ps = personas(1);
    let req = build_request(&ps[0], &measure, &measure.items[0], &test_config());
    assert_eq!(req.messages.len(), 2);
    assert_eq!(req.messages[0].role, "system");
    assert!(req.messages[0].content.starts_with(&ps[0].seed_prompt));
    assert!(req.messages[0].content.contains(&measure.instructions));
    assert_eq!(req.messages[1].role, "user");
    assert!(req.messages[1].content.ends_with(
        "Answer with exactly one of: strongly agree | somewhat agree | \
         neither agree nor disagree | somewhat disagree | strongly disagree | \
         I do not wish to answer"
    ));
}

#[test]
fn implicit_request_carries_the_pairs_directive() {
    let measure = association_measure();
    let ps = personas(1);
    let req = build_request(&ps[0], &measure, &measure.items[0], &test_config());
    let user = &req.messages[1].content;
    assert!(user.contains("PAIRS: <name>-<attribute>; <name>-<attribute>"));
    assert!(user.contains("Names: Julia, Latisha"));
    assert!(user.contains("Attributes: gentle, aggressive"));
}

#[test]
fn build_request_is_deterministic() {
    let measure = explicit_measure(3);
    let ps = personas(2);
    let a = build_request(&ps[1], &measure, &measure.items[2], &test_config());
    let b = build_request(&ps[1], &measure, &measure.items[2], &test_config());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
#[should_panic(expected = "is not part of measure")]
fn foreign_item_panics() {
    let measure = explicit_measure(3);
    let other = Item { id: "foreign".into(), stem: "s".into(), reverse_keyed: false, lexicons: None };
    let ps = personas(1);
    build_request(&ps[0], &measure, &other, &test_config());
}

// ---------------------------------------------------------------------------
// administer
// ---------------------------------------------------------------------------

#[test]
fn administer_covers_every_persona_item_pair() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(2);
    let client = EchoClient::new();
    let manifest = administer(
        &[measure],
        &ps,
        &[Phase::Test],
        &client,
        &test_config(),
        &store,
        &FixedClock(0),
    )
    .unwrap();
    assert_eq!(manifest.planned, 6);
    assert_eq!(manifest.completed_keys.len(), 6);
    assert!(manifest.failed_keys.is_empty());
    assert_eq!(store.load().unwrap().transcripts.len(), 6);
}

#[test]
fn administer_on_complete_store_issues_no_requests() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(2);
    let config = test_config();

    let first = EchoClient::new();
    administer(&[measure.clone()], &ps, &[Phase::Test], &first, &config, &store, &FixedClock(0))
        .unwrap();
    assert_eq!(first.calls(), 6);

    let second = EchoClient::new();
    let manifest = administer(
        &[measure],
        &ps,
        &[Phase::Test],
        &second,
        &config,
        &store,
        &FixedClock(0),
    )
    .unwrap();
    assert_eq!(second.calls(), 0, "idempotent rerun must not hit the client");
    assert_eq!(manifest.completed_keys.len(), 6);
}

#[test]
fn interrupted_then_resumed_run_matches_straight_run() {
    let measure = explicit_measure(4);
    let ps = personas(3);
    let config = test_config();

    // Straight run.
    let dir = tempfile::tempdir().unwrap();
    let straight_store = TranscriptStore::new(dir.path().join("straight.jsonl"));
    administer(
        &[measure.clone()],
        &ps,
        &[Phase::Test, Phase::Retest],
        &EchoClient::new(),
        &config,
        &straight_store,
        &FixedClock(0),
    )
    .unwrap();

    // Interrupted at 10 of 24 completions, then resumed.
    let resumed_store = TranscriptStore::new(dir.path().join("resumed.jsonl"));
    let failing = ExpiringClient { successes: 10, calls: AtomicUsize::new(0) };
    let err = administer(
        &[measure.clone()],
        &ps,
        &[Phase::Test, Phase::Retest],
        &failing,
        &config,
        &resumed_store,
        &FixedClock(0),
    )
    .unwrap_err();
    assert!(matches!(err, ProtocolError::EndpointAuth(_)));
    let partial = resumed_store.load().unwrap().transcripts.len();
    assert!(partial < 24, "interruption should leave an incomplete store");

    administer(
        &[measure],
        &ps,
        &[Phase::Test, Phase::Retest],
        &EchoClient::new(),
        &config,
        &resumed_store,
        &FixedClock(0),
    )
    .unwrap();

    let a = canonical_jsonl(&straight_store.load().unwrap().transcripts);
    let b = canonical_jsonl(&resumed_store.load().unwrap().transcripts);
    assert_eq!(a, b, "resumed store must equal the uninterrupted one");
}

#[test]
fn retest_requests_are_fresh_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(2);
    administer(
        &[measure],
        &ps,
        &[Phase::Test, Phase::Retest],
        &EchoClient::new(),
        &test_config(),
        &store,
        &FixedClock(0),
    )
    .unwrap();

    let transcripts = store.load().unwrap().transcripts;
    let test_responses: Vec<&str> = transcripts
        .iter()
        .filter(|t| t.key.phase == Phase::Test)
        .map(|t| t.raw_response.as_str())
        .collect();
    for t in transcripts.iter().filter(|t| t.key.phase == Phase::Retest) {
        for msg in &t.request_messages {
            for resp in &test_responses {
                assert!(
                    !msg.content.contains(resp),
                    "retest request leaked test-phase content"
                );
            }
        }
        // Exactly one system + one user message; nothing carried over.
        assert_eq!(t.request_messages.len(), 2);
    }
}

#[test]
fn single_flight_completion_order_is_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(2);
    administer(
        &[measure],
        &ps,
        &[Phase::Test, Phase::Retest],
        &EchoClient::new(),
        &test_config(),
        &store,
        &FixedClock(0),
    )
    .unwrap();

    // Raw file order (append order) must already be canonical.
    let raw = std::fs::read_to_string(store.path()).unwrap();
    let keys: Vec<TranscriptKey> = raw
        .lines()
        .map(|l| serde_json::from_str::<Transcript>(l).unwrap().key)
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn concurrency_level_does_not_change_store_contents() {
    let measure = explicit_measure(4);
    let ps = personas(3);
    let dir = tempfile::tempdir().unwrap();

    let mut canonical: Option<String> = None;
    for max_in_flight in [1usize, 4, 8] {
        let store = TranscriptStore::new(dir.path().join(format!("run-{max_in_flight}.jsonl")));
        let config = ProtocolConfig { max_in_flight, ..test_config() };
        administer(
            &[measure.clone()],
            &ps,
            &[Phase::Test],
            &EchoClient::new(),
            &config,
            &store,
            &FixedClock(0),
        )
        .unwrap();
        let bytes = canonical_jsonl(&store.load().unwrap().transcripts);
        match &canonical {
            None => canonical = Some(bytes),
            Some(expected) => assert_eq!(&bytes, expected, "max_in_flight {max_in_flight}"),
        }
    }
}

#[test]
fn transient_failures_are_retried() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(1);
    let client = FlakyClient { failures: 2, calls: AtomicUsize::new(0) };
    let manifest = administer(
        &[measure],
        &ps,
        &[Phase::Test],
        &client,
        &test_config(),
        &store,
        &FixedClock(0),
    )
    .unwrap();
    assert_eq!(manifest.completed_keys.len(), 3);
    assert!(manifest.failed_keys.is_empty());
    let transcripts = store.load().unwrap().transcripts;
    // First key absorbed both flakes: three attempts total.
    assert_eq!(transcripts[0].attempt_count, 3);
    assert_eq!(transcripts[1].attempt_count, 1);
}

#[test]
fn exhausted_retries_record_failed_keys_and_continue() {
    struct AlwaysDown;
    impl ChatClient for AlwaysDown {
        fn complete(&self, key: &TranscriptKey, _r: &ChatRequest) -> Result<String, ClientError> {
            if key.item_id == "item-00" {
                Err(ClientError::Transient("down".into()))
            } else {
                Ok("echo".into())
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(1);
    let config = ProtocolConfig { retry_limit: 2, ..test_config() };
    let manifest = administer(
        &[measure],
        &ps,
        &[Phase::Test],
        &AlwaysDown,
        &config,
        &store,
        &FixedClock(0),
    )
    .unwrap();
    assert_eq!(manifest.completed_keys.len(), 2);
    assert_eq!(manifest.failed_keys.len(), 1);
    assert_eq!(manifest.failed_keys[0].key.item_id, "item-00");
    assert!(manifest.failed_keys[0].error.contains("exhausted"));
}

#[test]
fn permanent_failures_do_not_retry() {
    struct Rejecting {
        calls: AtomicUsize,
    }
    impl ChatClient for Rejecting {
        fn complete(&self, _k: &TranscriptKey, _r: &ChatRequest) -> Result<String, ClientError> {
            self.calls.fetch_add(1, AtomicOrdering::SeqCst);
            Err(ClientError::Permanent("bad request".into()))
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(1);
    let client = Rejecting { calls: AtomicUsize::new(0) };
    let manifest = administer(
        &[measure],
        &ps,
        &[Phase::Test],
        &client,
        &test_config(),
        &store,
        &FixedClock(0),
    )
    .unwrap();
    assert_eq!(manifest.failed_keys.len(), 3);
    assert_eq!(client.calls.load(AtomicOrdering::SeqCst), 3);
}

#[test]
fn manifest_completed_keys_subset_of_plan() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(2);
    let manifest = administer(
        &[measure.clone()],
        &ps,
        &[Phase::Test],
        &EchoClient::new(),
        &test_config(),
        &store,
        &FixedClock(0),
    )
    .unwrap();
    let planned: std::collections::BTreeSet<&str> =
        measure.items.iter().map(|i| i.id.as_str()).collect();
    for key in &manifest.completed_keys {
        assert!(planned.contains(key.item_id.as_str()));
        assert_eq!(key.measure_id, "m-explicit");
    }
    assert_eq!(manifest.measure_ids, vec!["m-explicit".to_string()]);
    assert!(!manifest.persona_source_hash.is_empty());
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let config = ProtocolConfig { retry_limit: 11, ..test_config() };
    let err = administer(
        &[explicit_measure(3)],
        &personas(1),
        &[Phase::Test],
        &EchoClient::new(),
        &config,
        &store,
        &FixedClock(0),
    )
    .unwrap_err();
    assert!(matches!(err, ProtocolError::InvalidConfig(_)));
}

// ---------------------------------------------------------------------------
// store
// ---------------------------------------------------------------------------

#[test]
fn empty_store_loads_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let contents = TranscriptStore::new(path).load().unwrap();
    assert!(contents.transcripts.is_empty());
    assert!(contents.corrupt.is_empty());
}

#[test]
fn store_round_trips_administered_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(2);
    administer(
        &[measure],
        &ps,
        &[Phase::Test],
        &EchoClient::new(),
        &test_config(),
        &store,
        &FixedClock(42),
    )
    .unwrap();
    let loaded = store.load_strict().unwrap();
    assert_eq!(loaded.len(), 6);
    for t in &loaded {
        assert!(t.raw_response.starts_with("echo "));
        assert_eq!(t.started_unix_ms, 42);
        assert_eq!(t.decoding.model_id, "test-model");
    }
}

#[test]
fn truncated_final_line_recovers_prior_records() {
    let dir = tempfile::tempdir().unwrap();
    let store = TranscriptStore::new(dir.path().join("run.jsonl"));
    let measure = explicit_measure(3);
    let ps = personas(1);
    administer(
        &[measure],
        &ps,
        &[Phase::Test],
        &EchoClient::new(),
        &test_config(),
        &store,
        &FixedClock(0),
    )
    .unwrap();

    // Chop the last line in half, simulating a crash mid-write.
    let raw = std::fs::read_to_string(store.path()).unwrap();
    let keep = raw.len() - 40;
    std::fs::write(store.path(), &raw[..keep]).unwrap();

    let contents = store.load().unwrap();
    assert_eq!(contents.transcripts.len(), 2);
    assert_eq!(contents.corrupt.len(), 1);
    assert_eq!(contents.corrupt[0].line, 3);

    match store.load_strict() {
        Err(StoreError::CorruptRecord { line: 3, .. }) => {}
        other => panic!("expected corrupt record at line 3, got {other:?}"),
    }
}

#[test]
fn duplicate_keys_keep_first_occurrence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.jsonl");
    let t = Transcript {
        key: TranscriptKey {
            persona_id: "p".into(),
            measure_id: "m".into(),
            item_id: "i".into(),
            repetition: 0,
            phase: Phase::Test,
        },
        request_messages: vec![ChatMessage::user("q")],
        raw_response: "first".into(),
        decoding: test_config().decoding(),
        started_unix_ms: 0,
        finished_unix_ms: 0,
        attempt_count: 1,
    };
    let mut dup = t.clone();
    dup.raw_response = "second".into();
    let store = TranscriptStore::new(&path);
    store.append(&t).unwrap();
    store.append(&dup).unwrap();
    let contents = store.load().unwrap();
    assert_eq!(contents.transcripts.len(), 1);
    assert_eq!(contents.transcripts[0].raw_response, "first");
    assert_eq!(contents.corrupt.len(), 1);
}

// ---------------------------------------------------------------------------
// HTTP client against a local stub endpoint
// ---------------------------------------------------------------------------

mod http {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    /// Minimal one-request-per-connection HTTP stub. Returns the bodies it
    /// received.
    fn spawn_stub(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = bodies.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut body_bytes = vec![0u8; content_length];
                reader.read_exact(&mut body_bytes).unwrap();
                seen.lock().unwrap().push(String::from_utf8(body_bytes).unwrap());

                let mut stream = reader.into_inner();
                let reply = format!(
                    "HTTP/1.1 {status} STATUS\r\nContent-Type: application/json\r\n\
                     Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}"), bodies)
    }

    fn key() -> TranscriptKey {
        TranscriptKey {
            persona_id: "p".into(),
            measure_id: "m".into(),
            item_id: "i".into(),
            repetition: 0,
            phase: Phase::Test,
        }
    }

    fn request() -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::system("sys"), ChatMessage::user("hello")],
            decoding: DecodingConfig {
                model_id: "test-model".into(),
                temperature: 0.0,
                top_p: 1.0,
                max_tokens: 64,
                request_seed: Some(11),
            },
        }
    }

    #[test]
    fn sends_standard_body_and_parses_content() {
        let ok = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "strongly agree"}}]
        })
        .to_string();
        let (url, bodies) = spawn_stub(vec![(200, ok)]);
        let config = ProtocolConfig { endpoint_url: url, model_id: "test-model".into(), ..test_config() };
        let client = HttpChatClient::new(&config, Some("secret-key".into())).unwrap();
        assert!(client.url().ends_with("/chat/completions"));

        let out = client.complete(&key(), &request()).unwrap();
        assert_eq!(out, "strongly agree");

        let sent = bodies.lock().unwrap();
        let body: serde_json::Value = serde_json::from_str(&sent[0]).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["top_p"], 1.0);
        assert_eq!(body["seed"], 11);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hello");
    }

    #[test]
    fn auth_rejection_maps_to_auth_error() {
        let (url, _) = spawn_stub(vec![(401, "{}".into())]);
        let config = ProtocolConfig { endpoint_url: url, ..test_config() };
        let client = HttpChatClient::new(&config, None).unwrap();
        assert!(matches!(client.complete(&key(), &request()), Err(ClientError::Auth(_))));
    }

    #[test]
    fn server_errors_and_rate_limits_are_transient() {
        let (url, _) = spawn_stub(vec![(500, "{}".into()), (429, "{}".into())]);
        let config = ProtocolConfig { endpoint_url: url, ..test_config() };
        let client = HttpChatClient::new(&config, None).unwrap();
        assert!(matches!(client.complete(&key(), &request()), Err(ClientError::Transient(_))));
        assert!(matches!(client.complete(&key(), &request()), Err(ClientError::Transient(_))));
    }

    #[test]
    fn malformed_payload_is_permanent() {
        let (url, _) = spawn_stub(vec![(200, "{\"choices\": []}".into())]);
        let config = ProtocolConfig { endpoint_url: url, ..test_config() };
        let client = HttpChatClient::new(&config, None).unwrap();
        assert!(matches!(client.complete(&key(), &request()), Err(ClientError::Permanent(_))));
    }
}
