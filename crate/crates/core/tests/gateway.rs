mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use common::*;
use klevel_core::engine::GameKind;
use klevel_core::gateway::{
    estimate_tokens, BackendError, BackendFactory, BackendMode, BackendSpec, CallStatus,
    ChatMessage, CompletionRequest, DecisionBackend, Gateway, RetryPolicy, ReplayBackend,
    Sampling, Script, ScriptedBackend, TranscriptStreams,
};
use klevel_core::reasoning::{PromptContext, Step};
use proptest::prelude::*;
use serde_json::Value;

fn request(text: &str) -> CompletionRequest {
    let input = fresh_input(GameKind::G08a, 3, 0, 1);
    let mut context = PromptContext::new(GameKind::G08a, Step::Direct, 0, input.snapshot, Default::default());
    context.sampling = Sampling { temperature: 0.3, top_p: 0.85 };
    CompletionRequest { messages: vec![ChatMessage::system("rules"), ChatMessage::user(text)], context }
}

struct Captured {
    auth: Option<String>,
    body: Value,
}

/// Serves `statuses.len()` requests on a local port, answering each with
/// the given status; returns the endpoint and a handle yielding what it saw.
fn serve(statuses: Vec<u16>, reply: &'static str) -> (String, thread::JoinHandle<Vec<Captured>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for status in statuses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            assert!(line.starts_with("POST /v1/chat/completions"), "{line}");
            let mut length = 0;
            let mut auth = None;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (name, value) = h.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            seen.push(Captured { auth, body: serde_json::from_slice(&body).unwrap() });
            let payload = if status == 200 {
                serde_json::json!({
                    "choices": [{ "message": { "role": "assistant", "content": reply } }],
                    "usage": { "prompt_tokens": 120, "completion_tokens": 7 }
                })
                .to_string()
            } else {
                "{\"error\":\"overloaded\"}".to_string()
            };
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            )
            .unwrap();
        }
        seen
    });
    (endpoint, handle)
}

fn live_spec(endpoint: &str, key_env: Option<&str>) -> BackendSpec {
    BackendSpec {
        mode: BackendMode::Live,
        endpoint: Some(endpoint.to_string()),
        model: Some("test-model".into()),
        api_key_env: key_env.map(String::from),
        script: None,
        transcript: None,
        sampling: None,
        retry: RetryPolicy { max_attempts: 3, backoff_ms: 1 },
        requests_per_minute: None,
        timeout_secs: 10,
    }
}

#[test]
fn live_backend_retries_and_logs_failures_separately() {
    let (endpoint, server) = serve(vec![500, 503, 200], "Answer: 33");
    std::env::set_var("KLEVEL_TEST_KEY_RETRY", "sk-test-secret");
    let spec = live_spec(&endpoint, Some("KLEVEL_TEST_KEY_RETRY"));
    spec.validate().unwrap();
    let mut gateway = BackendFactory::new().build(&spec, "r0/a0").unwrap();
    let completion = gateway.complete(&request("pick a number")).unwrap();
    assert_eq!(completion.text, "Answer: 33");

    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 3);
    for c in &seen {
        assert_eq!(c.auth.as_deref(), Some("Bearer sk-test-secret"));
        assert_eq!(c.body["model"], "test-model");
        assert_eq!(c.body["temperature"], 0.3);
        assert_eq!(c.body["top_p"], 0.85);
        assert_eq!(c.body["messages"][1]["content"], "pick a number");
    }

    let log = gateway.transcript();
    let statuses: Vec<CallStatus> = log.iter().map(|r| r.status).collect();
    assert_eq!(statuses, vec![CallStatus::Failed, CallStatus::Failed, CallStatus::Ok]);
    assert_eq!(log.iter().filter(|r| r.status == CallStatus::Ok).count(), 1);
    let tally = gateway.tally();
    assert_eq!((tally.input_tokens, tally.output_tokens, tally.call_count), (120, 7, 1));
    let dump = serde_json::to_string(log).unwrap();
    assert!(!dump.contains("sk-test-secret"), "the key must never reach a transcript");
}

#[test]
fn live_backend_gives_up_after_the_last_attempt() {
    let (endpoint, server) = serve(vec![500, 500, 500], "");
    let spec = live_spec(&endpoint, None);
    let mut gateway = Gateway::new(
        Box::new(klevel_core::gateway::LiveBackend::from_spec(&spec, None).unwrap()),
        "r0/a1",
    );
    let err = gateway.complete(&request("x")).unwrap_err();
    assert!(matches!(err, BackendError::Http { attempts: 3, .. }), "{err}");
    server.join().unwrap();
    assert_eq!(gateway.tally().call_count, 0);
    assert!(gateway.transcript().iter().all(|r| r.status == CallStatus::Failed));
}

#[test]
fn sampling_override_wins_over_the_request() {
    let (endpoint, server) = serve(vec![200], "40");
    let mut spec = live_spec(&endpoint, None);
    spec.sampling = Some(Sampling { temperature: 0.0, top_p: 1.0 });
    let mut gateway = BackendFactory::new().build(&spec, "s").unwrap();
    gateway.complete(&request("x")).unwrap();
    let seen = server.join().unwrap();
    assert_eq!(seen[0].body["temperature"], 0.0);
    assert_eq!(seen[0].body["top_p"], 1.0);
}

#[test]
fn missing_key_variable_is_a_config_error() {
    let spec = live_spec("http://127.0.0.1:9", Some("KLEVEL_TEST_KEY_THAT_IS_NOT_SET"));
    let err = spec.validate().unwrap_err().to_string();
    assert!(err.contains("KLEVEL_TEST_KEY_THAT_IS_NOT_SET"), "{err}");
}

#[test]
fn replay_serves_in_order_and_then_runs_dry() {
    let mut recorder = Gateway::new(Box::new(ScriptedBackend::new(Script::Const("Answer: 12".into()))), "r0/a0");
    recorder.complete(&request("one")).unwrap();
    recorder.complete(&request("two")).unwrap();
    let streams = TranscriptStreams::from_records(recorder.transcript().to_vec());
    let records = streams.stream("r0/a0");
    let mut replay = ReplayBackend::new("r0/a0", records);
    assert_eq!(replay.complete(&request("one")).unwrap().text, "Answer: 12");
    // a different prompt is still served, with the mismatch counted
    assert_eq!(replay.complete(&request("changed")).unwrap().text, "Answer: 12");
    assert_eq!(replay.mismatches(), 1);
    assert_eq!(replay.remaining(), 0);
    assert!(matches!(replay.complete(&request("three")), Err(BackendError::ReplayExhausted(s)) if s == "r0/a0"));
    assert!(streams.stream("r9/a9").is_empty());
}

#[test]
fn factory_rejects_replay_without_transcripts() {
    let spec = BackendSpec { mode: BackendMode::Replay, ..BackendSpec::scripted("kstep") };
    assert!(BackendFactory::new().build(&spec, "r0/a0").is_err());
}

proptest! {
    #[test]
    fn usage_is_conserved_across_calls(
        prompts in proptest::collection::vec(".{0,80}", 1..8),
        reply in ".{0,60}",
    ) {
        let mut gateway = Gateway::new(Box::new(ScriptedBackend::new(Script::Const(reply.clone()))), "p");
        for p in &prompts {
            let req = request(p);
            let done = gateway.complete(&req).unwrap();
            prop_assert_eq!(done.usage.input_tokens, estimate_tokens(&req.prompt_text()));
            prop_assert_eq!(done.usage.output_tokens, (reply.chars().count() as u64).div_ceil(4));
        }
        let tally = gateway.tally();
        let (i, o): (u64, u64) = gateway
            .transcript()
            .iter()
            .map(|r| (r.usage.input_tokens, r.usage.output_tokens))
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        prop_assert_eq!(tally.input_tokens, i);
        prop_assert_eq!(tally.output_tokens, o);
        prop_assert_eq!(tally.total, i + o);
        prop_assert_eq!(tally.call_count, prompts.len() as u64);
    }
}

#[test]
fn rate_limiter_spaces_requests_across_threads() {
    let limiter = std::sync::Arc::new(klevel_core::gateway::RateLimiter::per_minute(3000));
    let start = std::time::Instant::now();
    let workers: Vec<_> = (0..4)
        .map(|_| {
            let l = limiter.clone();
            thread::spawn(move || l.acquire())
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    // four slots 20 ms apart: the last starts no earlier than 60 ms in
    assert!(start.elapsed() >= std::time::Duration::from_millis(55));
}
