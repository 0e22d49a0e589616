//! HTTP provider behavior against a minimal in-process completions server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::JoinHandle;

use medcot::llm::{LlmClient, ProviderConfig, ProviderKind, RetryPolicy, SamplingParams};

struct Exchange {
    status: u16,
    body: String,
}

/// Serves the scripted responses one connection at a time and returns the
/// raw requests it saw (headers + body).
fn serve(script: Vec<Exchange>) -> (String, JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for exchange in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(rest) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap();
                }
                let done = line == "\r\n" || line == "\n" || line.is_empty();
                request.push_str(&line);
                if done {
                    break;
                }
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).unwrap();
            request.push_str(&String::from_utf8_lossy(&body));
            seen.push(request);
            let response = format!(
                "HTTP/1.1 {} status\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                exchange.status,
                exchange.body.len(),
                exchange.body
            );
            reader.into_inner().write_all(response.as_bytes()).unwrap();
        }
        seen
    });
    (format!("http://{addr}/v1/completions"), handle)
}

fn choices_body(texts: &[&str]) -> String {
    let choices: Vec<serde_json::Value> = texts
        .iter()
        .map(|t| serde_json::json!({"text": t, "finish_reason": "stop"}))
        .collect();
    serde_json::json!({ "choices": choices }).to_string()
}

fn http_config(endpoint: &str) -> ProviderConfig {
    ProviderConfig {
        kind: ProviderKind::Http,
        endpoint: Some(endpoint.to_string()),
        model: "test-model".into(),
        auth_env: Some("MEDCOT_TEST_TOKEN".into()),
        max_concurrency: 1,
        retry: RetryPolicy {
            max_attempts: 3,
            backoff_base_ms: 5,
            backoff_cap_ms: 20,
        },
        timeout_ms: 5_000,
        seed: 0,
    }
}

fn params(k: usize) -> SamplingParams {
    SamplingParams {
        temperature: 0.5,
        k,
        max_tokens: 16,
        stop: vec![],
    }
}

#[test]
fn posts_openai_compatible_json_with_bearer_token() {
    let (endpoint, server) = serve(vec![Exchange {
        status: 200,
        body: choices_body(&[" A.", " B."]),
    }]);
    std::env::set_var("MEDCOT_TEST_TOKEN", "sk-test-123");
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::from_config(&http_config(&endpoint), dir.path().join("cache.jsonl")).unwrap();
    let out = client.complete("Question: x?\n\nAnswer: among A through B, the answer is", &params(2)).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].text, " A.");
    assert_eq!(out[1].text, " B.");

    let requests = server.join().unwrap();
    let request = &requests[0];
    assert!(request.contains("authorization: Bearer sk-test-123") || request.contains("Authorization: Bearer sk-test-123"),
        "missing bearer header: {request}");
    let body_start = request.find("\r\n\r\n").or_else(|| request.find("\n\n")).unwrap();
    let body: serde_json::Value = serde_json::from_str(request[body_start..].trim()).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["n"], 2);
    assert_eq!(body["temperature"], 0.5);
    assert_eq!(body["max_tokens"], 16);
    assert!(body["prompt"].as_str().unwrap().ends_with("the answer is"));
}

#[test]
fn retries_transient_errors_with_backoff() {
    let (endpoint, server) = serve(vec![
        Exchange { status: 500, body: "oops".into() },
        Exchange { status: 429, body: "slow down".into() },
        Exchange { status: 200, body: choices_body(&[" C."]) },
    ]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::from_config(&http_config(&endpoint), dir.path().join("cache.jsonl")).unwrap();
    let out = client.complete("prompt", &params(1)).unwrap();
    assert_eq!(out[0].text, " C.");
    assert_eq!(server.join().unwrap().len(), 3);
}

#[test]
fn non_retryable_status_fails_immediately_with_body_excerpt() {
    let (endpoint, server) = serve(vec![Exchange {
        status: 400,
        body: "{\"error\": \"bad prompt\"}".into(),
    }]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::from_config(&http_config(&endpoint), dir.path().join("cache.jsonl")).unwrap();
    let err = client.complete("prompt", &params(1)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("400"), "{msg}");
    assert!(msg.contains("bad prompt"), "{msg}");
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn exhausted_retries_carry_the_attempt_count() {
    let (endpoint, server) = serve(vec![
        Exchange { status: 503, body: "down".into() },
        Exchange { status: 503, body: "down".into() },
        Exchange { status: 503, body: "down".into() },
    ]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::from_config(&http_config(&endpoint), dir.path().join("cache.jsonl")).unwrap();
    let err = client.complete("prompt", &params(1)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("3 attempts"), "{msg}");
    assert_eq!(server.join().unwrap().len(), 3);
}

#[test]
fn greedy_requests_fetch_once_and_fan_out() {
    let (endpoint, server) = serve(vec![Exchange {
        status: 200,
        body: choices_body(&[" D."]),
    }]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::from_config(&http_config(&endpoint), dir.path().join("cache.jsonl")).unwrap();
    let mut p = params(4);
    p.temperature = 0.0;
    let out = client.complete("prompt", &p).unwrap();
    assert_eq!(out.len(), 4);
    assert!(out.iter().all(|c| c.text == " D."));
    // One wire request despite k = 4.
    let requests = server.join().unwrap();
    assert_eq!(requests.len(), 1);
    let body_start = requests[0].find("\r\n\r\n").unwrap();
    let body: serde_json::Value = serde_json::from_str(requests[0][body_start..].trim()).unwrap();
    assert_eq!(body["n"], 1);
}
