use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use grokforge::augment::backend::API_KEY_ENV;
use grokforge::augment::{ExternalConfig, GenerationBackend};

/// Serves one canned response per entry, returning each request's headers
/// and body on the channel.
fn mock_server(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                request.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            request.push_str(&String::from_utf8_lossy(&payload));
            tx.send(request).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn external_backend_round_trip_with_retry() {
    std::env::set_var(API_KEY_ENV, "sk-secret");
    let (url, requests) = mock_server(vec![(500, "{}".into()), (200, reply("1. Paris -- country -- France"))]);
    let mut cfg = ExternalConfig::new(url, "test-model");
    cfg.retries = 1;
    cfg.timeout = Duration::from_secs(5);
    let backend = GenerationBackend::external(cfg);

    let text = backend.complete("system prompt", "user prompt");
    assert_eq!(text.as_deref(), Some("1. Paris -- country -- France"));
    assert!(backend.take_warnings().is_empty());

    let first = requests.recv().unwrap();
    assert!(first.starts_with("POST /v1/chat/completions"));
    assert!(first.contains("authorization: Bearer sk-secret") || first.contains("Authorization: Bearer sk-secret"));
    assert!(first.contains("\"model\":\"test-model\""));
    assert!(first.contains("user prompt"));
    requests.recv().unwrap();
}

#[test]
fn malformed_reply_falls_back_with_a_warning() {
    let (url, _requests) = mock_server(vec![(200, "{\"choices\": []}".into())]);
    let mut cfg = ExternalConfig::new(url, "m");
    cfg.retries = 0;
    let backend = GenerationBackend::external(cfg);
    assert_eq!(backend.complete("s", "u"), None);
    let warnings = backend.take_warnings();
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("falling back"));
}
