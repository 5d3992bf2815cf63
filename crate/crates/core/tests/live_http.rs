use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use indukt::providers::*;

struct Seen {
    auth: String,
    body: serde_json::Value,
}

/// Serves canned `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut auth = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line["authorization:".len()..].trim().to_string();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                auth,
                body: serde_json::from_slice(&buf).unwrap(),
            });
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn config(endpoint: String) -> LiveConfig {
    LiveConfig {
        endpoint,
        max_attempts: 3,
        backoff_base_ms: 1,
        request_timeout_ms: 5_000,
        ..Default::default()
    }
}

fn request(n: usize) -> CompletionRequest {
    SamplingProfile::default().request(
        Stage::Generator,
        "gpt-4o",
        vec![Message::new(Role::User, "hello")],
        n,
        RequestMeta::default(),
    )
}

fn choices(texts: &[&str]) -> String {
    let choices: Vec<_> = texts
        .iter()
        .map(|t| serde_json::json!({"message": {"role": "assistant", "content": t}}))
        .collect();
    serde_json::json!({ "choices": choices }).to_string()
}

#[test]
fn retries_rate_limits_and_server_errors() {
    let (url, seen) = serve(vec![
        (429, "{}".into()),
        (503, "{}".into()),
        (200, choices(&["a", "b"])),
    ]);
    let provider = LiveProvider::new(config(url), "sk-test".into()).unwrap();
    assert_eq!(provider.complete(&request(2)).unwrap(), ["a", "b"]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].auth, "Bearer sk-test");
    assert_eq!(seen[2].body["n"], 2);
    assert_eq!(seen[2].body["model"], "gpt-4o");
    assert_eq!(seen[2].body["temperature"], 1.0);
}

#[test]
fn gives_up_after_max_attempts() {
    let (url, _) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let provider = LiveProvider::new(config(url), "k".into()).unwrap();
    match provider.complete(&request(1)) {
        Err(ProviderError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let provider = LiveProvider::new(config(url), "k".into()).unwrap();
    let err = provider.complete(&request(1)).unwrap_err();
    assert!(err.to_string().contains("401"), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn wrong_choice_count_is_a_bad_response() {
    let (url, _) = serve(vec![(200, choices(&["only one"]))]);
    let provider = LiveProvider::new(config(url), "k".into()).unwrap();
    assert!(matches!(provider.complete(&request(3)), Err(ProviderError::BadResponse(_))));
}
