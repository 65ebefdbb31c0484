//! Exercises the remote embedding client against a scripted in-process HTTP
//! server: clean round trips, batching, retry-then-fail, transient recovery,
//! and dimension policing.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use paratask::embed::{EmbedError, EmbeddingProvider, RemoteConfig, RemoteProvider};
use serde_json::Value;

/// What the server does with one request, in order.
#[derive(Clone, Copy)]
enum Behavior {
    /// 200 with one embedding per text, each of the given dimension.
    Ok { dim: usize },
    /// The given HTTP status with an empty JSON body.
    Status(u16),
    /// 200 with a body that is not the expected JSON shape.
    Malformed,
    /// 200 with one embedding too few.
    ShortCount,
}

/// The deterministic embedding the mock serves: a fingerprint of the text
/// that tests can recompute.
fn mock_embedding(text: &str, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| (text.len() * (i + 1)) as f64 + f64::from(text.as_bytes()[0]))
        .collect()
}

fn read_texts(stream: &mut TcpStream) -> Vec<String> {
    let mut buf = Vec::new();
    let mut byte = [0u8; 1];
    while !buf.ends_with(b"\r\n\r\n") {
        assert_eq!(stream.read(&mut byte).expect("read header byte"), 1);
        buf.push(byte[0]);
    }
    let headers = String::from_utf8_lossy(&buf);
    let content_length: usize = headers
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().expect("content-length value"))
        })
        .expect("request carries a content-length header");
    let mut body = vec![0u8; content_length];
    stream.read_exact(&mut body).expect("read body");
    let parsed: Value = serde_json::from_slice(&body).expect("request body is JSON");
    parsed["texts"]
        .as_array()
        .expect("texts array")
        .iter()
        .map(|t| t.as_str().expect("text is a string").to_string())
        .collect()
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = if status == 200 { "OK" } else { "Error" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes()).expect("write response");
}

/// Starts a server that serves exactly `script.len()` requests and then
/// exits. Returns (url, request counter, join handle); joining the handle
/// asserts the whole script was consumed.
fn spawn_server(script: Vec<Behavior>) -> (String, Arc<AtomicUsize>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind localhost");
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let handle = std::thread::spawn(move || {
        for behavior in script {
            let (mut stream, _) = listener.accept().expect("accept");
            counter.fetch_add(1, Ordering::SeqCst);
            let texts = read_texts(&mut stream);
            match behavior {
                Behavior::Ok { dim } => {
                    let embeddings: Vec<Vec<f64>> =
                        texts.iter().map(|t| mock_embedding(t, dim)).collect();
                    let body =
                        serde_json::json!({ "embeddings": embeddings, "dim": dim }).to_string();
                    respond(&mut stream, 200, &body);
                }
                Behavior::Status(code) => respond(&mut stream, code, "{}"),
                Behavior::Malformed => respond(&mut stream, 200, "{\"embeddings\": 7}"),
                Behavior::ShortCount => {
                    let embeddings: Vec<Vec<f64>> = texts
                        .iter()
                        .skip(1)
                        .map(|t| mock_embedding(t, 3))
                        .collect();
                    let body =
                        serde_json::json!({ "embeddings": embeddings, "dim": 3 }).to_string();
                    respond(&mut stream, 200, &body);
                }
            }
        }
    });
    (url, hits, handle)
}

fn provider(url: &str, batch_size: usize, max_retries: u32) -> RemoteProvider {
    let mut cfg = RemoteConfig::new(url);
    cfg.batch_size = batch_size;
    cfg.max_retries = max_retries;
    RemoteProvider::new(cfg)
}

#[test]
fn round_trip_batches_and_preserves_order() {
    let (url, hits, handle) = spawn_server(vec![Behavior::Ok { dim: 3 }, Behavior::Ok { dim: 3 }]);
    let p = provider(&url, 2, 0);
    assert_eq!(p.dimension(), None);
    let texts = ["alpha", "bravo", "charlie"];
    let out = p.embed_texts(&texts).expect("clean round trip");
    assert_eq!(out.len(), 3);
    for (text, emb) in texts.iter().zip(&out) {
        assert_eq!(emb.values, mock_embedding(text, 3));
        assert_eq!(emb.provider, format!("remote/{url}"));
    }
    assert_eq!(p.dimension(), Some(3));
    assert_eq!(hits.load(Ordering::SeqCst), 2, "3 texts at batch size 2");
    handle.join().unwrap();
}

#[test]
fn non_200_is_retried_then_fails() {
    let (url, hits, handle) = spawn_server(vec![Behavior::Status(500); 3]);
    let p = provider(&url, 64, 2);
    let err = p.embed_texts(&["x"]).unwrap_err();
    match err {
        EmbedError::RemoteUnavailable { reason } => {
            assert!(reason.contains("status 500"), "{reason}")
        }
        other => panic!("expected RemoteUnavailable, got {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3, "1 attempt + 2 retries");
    handle.join().unwrap();
}

#[test]
fn transient_failure_recovers_within_retry_budget() {
    let (url, hits, handle) = spawn_server(vec![Behavior::Status(503), Behavior::Ok { dim: 2 }]);
    let p = provider(&url, 64, 1);
    let out = p.embed_texts(&["steady"]).expect("retry succeeds");
    assert_eq!(out[0].values, mock_embedding("steady", 2));
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    handle.join().unwrap();
}

#[test]
fn malformed_and_short_responses_are_unavailable() {
    let (url, _, handle) = spawn_server(vec![Behavior::Malformed]);
    let err = provider(&url, 64, 0).embed_texts(&["x"]).unwrap_err();
    assert!(matches!(err, EmbedError::RemoteUnavailable { ref reason } if reason.contains("malformed")));
    handle.join().unwrap();

    let (url, _, handle) = spawn_server(vec![Behavior::ShortCount]);
    let err = provider(&url, 64, 0).embed_texts(&["x", "y"]).unwrap_err();
    assert!(
        matches!(err, EmbedError::RemoteUnavailable { ref reason } if reason.contains("1 embeddings for 2 texts"))
    );
    handle.join().unwrap();
}

#[test]
fn dimension_change_between_batches_is_fatal_without_retry() {
    let (url, hits, handle) =
        spawn_server(vec![Behavior::Ok { dim: 3 }, Behavior::Ok { dim: 4 }]);
    // Batch size 1 forces two requests; a retry would hang on the exhausted
    // script, so the request count doubles as a no-retry check.
    let p = provider(&url, 1, 5);
    let err = p.embed_texts(&["one", "two"]).unwrap_err();
    match err {
        EmbedError::DimensionMismatch { expected, got } => {
            assert_eq!((expected, got), (3, 4));
        }
        other => panic!("expected DimensionMismatch, got {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    handle.join().unwrap();
}

#[test]
fn unreachable_service_is_unavailable() {
    // Port 9 (discard) on localhost refuses connections immediately.
    let p = provider("http://127.0.0.1:9/embed", 64, 0);
    let err = p.embed_texts(&["x"]).unwrap_err();
    assert!(matches!(err, EmbedError::RemoteUnavailable { .. }), "{err:?}");
}
