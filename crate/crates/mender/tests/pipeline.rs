//! Integration tests across module boundaries: engine determinism over the
//! scripted provider, leave-one-out shot selection against a real bank,
//! bank bootstrapping, evaluation bookkeeping, and the remote provider and
//! embedder exercised against an in-process HTTP stub.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use mender::bank::{
    bootstrap_bank, build_bank, BankBuildOptions, BuggyFixedPair, Embedder, RemoteEmbedder,
    ShotStrategy,
};
use mender::diag::{DiagnosticsSource, MessageStyle};
use mender::engine::{Engine, Outcome, RepairTask};
use mender::eval::toy::ToyValidator;
use mender::eval::{run_eval, DatasetTask, EvalOptions, Metric, OutcomeClass};
use mender::llm::{
    CompletionProvider, FinishReason, LlmError, MockProvider, RemoteConfig, RemoteProvider,
    SamplingParams,
};
use mender::prompt::PromptConfig;
use mender::text::{LanguageId, LanguageRegistry, SourceProgram};

fn toy_id() -> LanguageId {
    LanguageId::new("toy").unwrap()
}

fn toy_display() -> String {
    LanguageRegistry::builtin()
        .profile(&toy_id())
        .unwrap()
        .display
        .clone()
}

fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

fn load_pairs(rel: &str) -> Vec<BuggyFixedPair> {
    let text = std::fs::read_to_string(data_path(rel)).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn toy_engine(script: &str, strategy: ShotStrategy) -> Engine {
    toy_engine_with(script, strategy, None, false)
}

fn toy_engine_with(
    script: &str,
    strategy: ShotStrategy,
    bank_pairs: Option<&str>,
    leave_one_out: bool,
) -> Engine {
    let provider = Arc::new(MockProvider::from_script_str(script).unwrap());
    let validator: Arc<dyn DiagnosticsSource> = Arc::new(ToyValidator::new());
    let prompt = PromptConfig {
        message_style: Some(MessageStyle::Detailed),
        shot_strategy: strategy,
        shots: if strategy == ShotStrategy::None { 0 } else { 2 },
        ..PromptConfig::new(toy_display())
    };
    let mut builder = Engine::builder(toy_id())
        .registry(LanguageRegistry::builtin())
        .diagnostics(validator.clone())
        .provider(provider)
        .prompt_config(prompt)
        .leave_one_out(leave_one_out);
    if let Some(rel) = bank_pairs {
        let outcome = build_bank(
            load_pairs(rel),
            validator.as_ref(),
            None,
            &BankBuildOptions::default(),
        )
        .unwrap();
        builder = builder.bank(outcome.bank);
    }
    builder.build().unwrap()
}

const FIX_UNIFORM: &str = r#"{
  "entries": [
    {
      "contains": "uniform",
      "completions": [
        {"text": "uniform = (1 + 2)\n", "token_logprobs": [["uniform", -0.1], ["rest", -0.1]]}
      ]
    }
  ]
}"#;

// ---------------------------------------------------------------- engine

#[test]
fn repair_is_deterministic_across_engine_instances() {
    let program = SourceProgram::new(toy_id(), "uniform = (1 + 2\n");
    let mut results = Vec::new();
    for _ in 0..2 {
        let engine = toy_engine(FIX_UNIFORM, ShotStrategy::None);
        let task = RepairTask::new("t", program.clone(), None).unwrap();
        let result = engine.repair(&task).unwrap();
        let Outcome::Candidates(candidates) = &result.outcome else {
            panic!("expected candidates");
        };
        let rendered: Vec<(String, String)> = candidates
            .iter()
            .map(|c| (c.text.clone(), format!("{:.17e}", c.score)))
            .collect();
        results.push((rendered, result.trace.prompt_hash.clone()));
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn valid_program_short_circuits_before_the_provider() {
    let mock = Arc::new(MockProvider::from_script_str(FIX_UNIFORM).unwrap());
    let provider: Arc<dyn CompletionProvider> = mock.clone();
    let engine = Engine::builder(toy_id())
        .registry(LanguageRegistry::builtin())
        .diagnostics(Arc::new(ToyValidator::new()))
        .provider(provider)
        .prompt_config(PromptConfig {
            message_style: Some(MessageStyle::Detailed),
            ..PromptConfig::new(toy_display())
        })
        .build()
        .unwrap();

    let task = RepairTask::new("ok", SourceProgram::new(toy_id(), "a = 1 + 2\n"), None).unwrap();
    let result = engine.repair(&task).unwrap();
    assert!(matches!(result.outcome, Outcome::AlreadyValid));
    assert_eq!(mock.calls(), 0, "no completion may be sampled for a valid program");
    assert!(result.trace.prompt_hash.is_none());
}

#[test]
fn leave_one_out_never_selects_the_tasks_own_entry() {
    let script = r#"{
  "entries": [
    {"wildcard": true, "completions": [{"text": "x = 1\n", "token_logprobs": [["x", -0.5]]}]}
  ]
}"#;
    let pairs = load_pairs("toy/pairs.jsonl");

    let engine = toy_engine_with(script, ShotStrategy::ErrorVector, Some("toy/pairs.jsonl"), true);
    for pair in &pairs {
        let task = RepairTask::new(pair.id(), pair.buggy().clone(), None).unwrap();
        let result = engine.repair(&task).unwrap();
        assert!(
            !result.trace.shot_ids.iter().any(|id| id == pair.id()),
            "task `{}` was shown its own pair",
            pair.id()
        );
        assert!(!result.trace.shot_ids.is_empty(), "other entries remain selectable");
    }

    // Without leave-one-out the entry is its own nearest neighbour.
    let engine = toy_engine_with(script, ShotStrategy::ErrorVector, Some("toy/pairs.jsonl"), false);
    let pair = &pairs[0];
    let task = RepairTask::new(pair.id(), pair.buggy().clone(), None).unwrap();
    let result = engine.repair(&task).unwrap();
    assert!(result.trace.shot_ids.iter().any(|id| id == pair.id()));
}

// ------------------------------------------------------------- bootstrap

#[test]
fn bootstrap_keeps_only_pairs_whose_fix_verifies() {
    let script = r#"{
  "entries": [
    {
      "contains": "golf = 10 -",
      "completions": [{"text": "golf = 10 - 1\n", "token_logprobs": [["t", -0.2]]}]
    },
    {
      "contains": "hotel = / 11",
      "completions": [{"text": "hotel = / 11 /\n", "token_logprobs": [["t", -0.2]]}]
    }
  ]
}"#;
    let engine = toy_engine(script, ShotStrategy::None);
    let validator = ToyValidator::new();
    let programs = vec![
        SourceProgram::new(toy_id(), "golf = 10 -\n"),   // scripted fix parses
        SourceProgram::new(toy_id(), "hotel = / 11\n"),  // scripted fix still broken
        SourceProgram::new(toy_id(), "india = 1 + 2\n"), // already valid
    ];

    let (pairs, warnings) = bootstrap_bank(&programs, &engine, &validator).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].buggy().text, "golf = 10 -\n");
    assert_eq!(pairs[0].fixed().text, "golf = 10 - 1\n");
    assert_eq!(warnings.len(), 2);
    assert!(warnings.iter().any(|w| w.contains("still fails diagnostics")));
    assert!(warnings.iter().any(|w| w.contains("already valid")));
}

// ------------------------------------------------------------------ eval

#[test]
fn eval_accounts_for_every_task_once() {
    // Four tasks: scripted fix, scripted junk, already valid, unscripted
    // (provider rejection -> error class).
    let script = r#"{
  "entries": [
    {
      "contains": "quebec",
      "completions": [{"text": "quebec = 1 + 2\n", "token_logprobs": [["t", -0.1]]}]
    },
    {
      "contains": "romeo",
      "completions": [{"text": "romeo = ((\n", "token_logprobs": [["t", -0.1]]}]
    }
  ]
}"#;
    let engine = toy_engine(script, ShotStrategy::None);
    let dataset = vec![
        DatasetTask {
            id: "a-fixable".to_string(),
            language: toy_id(),
            buggy: "quebec = 1 +\n".to_string(),
            fixed: None,
        },
        DatasetTask {
            id: "b-junk".to_string(),
            language: toy_id(),
            buggy: "romeo = 1 +\n".to_string(),
            fixed: None,
        },
        DatasetTask {
            id: "c-valid".to_string(),
            language: toy_id(),
            buggy: "sierra = 3\n".to_string(),
            fixed: None,
        },
        DatasetTask {
            id: "d-unscripted".to_string(),
            language: toy_id(),
            buggy: "tango = 4 +\n".to_string(),
            fixed: None,
        },
    ];
    let options = EvalOptions {
        ks: vec![1],
        localization_ks: vec![],
        ..EvalOptions::new(Metric::ParseAndDistance)
    };
    let report = run_eval(&engine, &dataset, &options).unwrap();

    assert_eq!(report.dataset_size, 4);
    let counts = &report.counts;
    assert_eq!(counts.repaired + counts.unrepaired + counts.already_valid + counts.error, 4);
    assert_eq!(counts.repaired, 1);
    assert_eq!(counts.unrepaired, 1);
    assert_eq!(counts.already_valid, 1);
    assert_eq!(counts.error, 1);
    assert_eq!(report.eligible, 2);
    assert_eq!(report.pass_at_k[&1], 0.5);

    let by_id: std::collections::BTreeMap<&str, OutcomeClass> = report
        .outcomes
        .iter()
        .map(|o| (o.task_id.as_str(), o.class))
        .collect();
    assert_eq!(by_id["a-fixable"], OutcomeClass::Repaired);
    assert_eq!(by_id["b-junk"], OutcomeClass::Unrepaired);
    assert_eq!(by_id["c-valid"], OutcomeClass::AlreadyValid);
    assert_eq!(by_id["d-unscripted"], OutcomeClass::Error);
}

#[test]
fn eval_report_is_identical_for_any_job_count() {
    let tasks = load_tasks("toy/tasks.jsonl");
    let script = std::fs::read_to_string(data_path("toy/mock_script.json")).unwrap();
    let options = EvalOptions {
        jobs: 1,
        ..EvalOptions::new(Metric::ParseAndDistance)
    };
    let engine = toy_engine(&script, ShotStrategy::None);
    let sequential = serde_json::to_string(&run_eval(&engine, &tasks, &options).unwrap()).unwrap();

    let options = EvalOptions {
        jobs: 6,
        ..EvalOptions::new(Metric::ParseAndDistance)
    };
    let engine = toy_engine(&script, ShotStrategy::None);
    let parallel = serde_json::to_string(&run_eval(&engine, &tasks, &options).unwrap()).unwrap();

    assert_eq!(sequential, parallel);
}

fn load_tasks(rel: &str) -> Vec<DatasetTask> {
    let text = std::fs::read_to_string(data_path(rel)).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

// --------------------------------------------------------- HTTP stubbing

/// Serve `responses` (status, body) one connection at a time, recording
/// each raw request. `connection: close` forces the client to reconnect,
/// keeping accepts sequential.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    let handle = thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let request = read_http_request(&mut stream);
            let _ = tx.send(request);
            let reason = match status {
                200 => "OK",
                429 => "Too Many Requests",
                500 => "Internal Server Error",
                _ => "Error",
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
            let _ = stream.flush();
        }
    });
    (endpoint, rx, handle)
}

fn read_http_request(stream: &mut TcpStream) -> String {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 2048];
    loop {
        let n = stream.read(&mut chunk).unwrap();
        buf.extend_from_slice(&chunk[..n]);
        if let Some(split) = find(&buf, b"\r\n\r\n") {
            let headers = String::from_utf8_lossy(&buf[..split]).into_owned();
            let content_length: usize = headers
                .lines()
                .find_map(|line| {
                    let (name, value) = line.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse().ok())?
                })
                .unwrap_or(0);
            let body_end = split + 4 + content_length;
            while buf.len() < body_end {
                let n = stream.read(&mut chunk).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
            }
            return String::from_utf8_lossy(&buf).into_owned();
        }
        if n == 0 {
            return String::from_utf8_lossy(&buf).into_owned();
        }
    }
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn remote_config(endpoint: &str) -> RemoteConfig {
    RemoteConfig {
        endpoint: endpoint.to_string(),
        model: "test-model".to_string(),
        api_key_env: None,
        backoff_base_ms: 1,
        ..RemoteConfig::default()
    }
}

fn request_body(raw: &str) -> serde_json::Value {
    let body = raw.split("\r\n\r\n").nth(1).unwrap_or("");
    serde_json::from_str(body).unwrap()
}

#[test]
fn remote_provider_posts_the_documented_fields_and_parses_choices() {
    let response = serde_json::json!({
        "choices": [{
            "text": "fixed = 1\n",
            "logprobs": {
                "tokens": ["fixed", " =", " 1"],
                "token_logprobs": [-0.25, null, 0.75]
            },
            "finish_reason": "stop"
        }]
    });
    let (endpoint, rx, handle) = serve(vec![(200, response.to_string())]);

    let provider = RemoteProvider::new(remote_config(&endpoint)).unwrap();
    let completions = provider
        .complete("Fix bugs in the below code:", &SamplingParams::default())
        .unwrap();
    handle.join().unwrap();

    let body = request_body(&rx.recv().unwrap());
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["prompt"], "Fix bugs in the below code:");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["n"], 1);
    assert_eq!(body["max_tokens"], 512);
    assert_eq!(body["logprobs"], 1);
    assert_eq!(body["stop"], serde_json::json!(["### "]));

    assert_eq!(completions.len(), 1);
    assert_eq!(completions[0].text, "fixed = 1\n");
    // Missing logprobs become 0.0 and positive ones are clamped down.
    assert_eq!(
        completions[0].token_logprobs,
        vec![
            ("fixed".to_string(), -0.25),
            (" =".to_string(), 0.0),
            (" 1".to_string(), 0.0)
        ]
    );
    assert_eq!(completions[0].finish, FinishReason::Stop);
}

#[test]
fn remote_provider_retries_server_errors_then_succeeds() {
    let good = serde_json::json!({
        "choices": [{
            "text": "ok",
            "logprobs": {"tokens": ["ok"], "token_logprobs": [-0.5]},
            "finish_reason": "length"
        }]
    });
    let (endpoint, rx, handle) = serve(vec![
        (500, "{}".to_string()),
        (200, good.to_string()),
    ]);

    let provider = RemoteProvider::new(remote_config(&endpoint)).unwrap();
    let completions = provider.complete("p", &SamplingParams::default()).unwrap();
    handle.join().unwrap();

    assert_eq!(completions.len(), 1);
    assert_eq!(completions[0].finish, FinishReason::Length);
    assert_eq!(rx.iter().count(), 2, "exactly one retry after the 500");
}

#[test]
fn remote_provider_never_retries_malformed_responses() {
    let (endpoint, rx, handle) = serve(vec![(200, "this is not json".to_string())]);
    let provider = RemoteProvider::new(remote_config(&endpoint)).unwrap();
    let err = provider.complete("p", &SamplingParams::default()).unwrap_err();
    handle.join().unwrap();

    assert!(matches!(err, LlmError::ProviderRejected(_)), "got {err:?}");
    assert_eq!(rx.iter().count(), 1, "malformed output must not be retried");
}

#[test]
fn remote_provider_falls_back_to_sequential_sampling() {
    let choice = |text: &str| {
        serde_json::json!({
            "choices": [{
                "text": text,
                "logprobs": {"tokens": [text], "token_logprobs": [-0.1]},
                "finish_reason": "stop"
            }]
        })
    };
    let (endpoint, rx, handle) = serve(vec![
        (200, choice("first").to_string()),
        (200, choice("second").to_string()),
    ]);

    let config = RemoteConfig {
        supports_n: false,
        ..remote_config(&endpoint)
    };
    let provider = RemoteProvider::new(config).unwrap();
    let params = SamplingParams {
        n: 2,
        ..SamplingParams::default()
    };
    let completions = provider.complete("p", &params).unwrap();
    handle.join().unwrap();

    assert_eq!(completions.len(), 2);
    assert_eq!(completions[0].text, "first");
    assert_eq!(completions[1].text, "second");
    let bodies: Vec<serde_json::Value> = rx.iter().map(|raw| request_body(&raw)).collect();
    assert_eq!(bodies.len(), 2);
    assert!(bodies.iter().all(|b| b["n"] == 1), "each sequential call samples one");
}

#[test]
fn remote_embedder_round_trips_and_validates_dimension() {
    let (endpoint, rx, handle) = serve(vec![(
        200,
        serde_json::json!({"embedding": [3.0, 0.0, 4.0]}).to_string(),
    )]);
    let embedder = RemoteEmbedder::new(&endpoint, "embed-model", None, Some(3)).unwrap();
    assert_eq!(embedder.id(), "remote:embed-model");

    let vector = embedder.embed("Error: (1) invalid syntax.").unwrap();
    handle.join().unwrap();
    assert_eq!(vector.components(), &[3.0, 0.0, 4.0]);

    let body = request_body(&rx.recv().unwrap());
    assert_eq!(body["model"], "embed-model");
    assert_eq!(body["input"], "Error: (1) invalid syntax.");

    // A mismatched dimension is rejected.
    let (endpoint, _rx, handle) = serve(vec![(
        200,
        serde_json::json!({"embedding": [1.0, 2.0]}).to_string(),
    )]);
    let embedder = RemoteEmbedder::new(&endpoint, "embed-model", None, Some(3)).unwrap();
    let err = embedder.embed("text").unwrap_err();
    handle.join().unwrap();
    assert!(err.to_string().contains("3"), "got {err}");
}
