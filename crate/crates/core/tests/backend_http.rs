//! Remote backend against a local stub HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use skgp_core::backend::{BackendConfig, BackendError, BackendKind, CompletionBackend, RemoteBackend};

struct Request {
    headers: Vec<(String, String)>,
    body: String,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    if line.is_empty() {
        return None;
    }
    let mut headers = Vec::new();
    let mut length = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
        if k == "content-length" {
            length = v.parse().ok()?;
        }
        headers.push((k, v));
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some(Request {
        headers,
        body: String::from_utf8(body).ok()?,
    })
}

fn respond(stream: &mut TcpStream, status: u16, body: &str, extra: &str) {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        429 => "Too Many Requests",
        _ => "Error",
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{extra}\r\n{body}",
        body.len()
    );
    let _ = stream.flush();
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 3}
    })
    .to_string()
}

type Handler = dyn Fn(usize, &Request, &mut TcpStream) + Send + Sync;

/// Serves each connection on its own thread; the handler gets the request
/// index (0-based, in arrival order).
fn serve(handler: Arc<Handler>) -> (String, Arc<Mutex<Vec<Request>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen: Arc<Mutex<Vec<Request>>> = Arc::new(Mutex::new(Vec::new()));
    let counter = Arc::new(AtomicUsize::new(0));
    let log = seen.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let (handler, counter, log) = (handler.clone(), counter.clone(), log.clone());
            std::thread::spawn(move || {
                if let Some(req) = read_request(&mut stream) {
                    let n = counter.fetch_add(1, Ordering::SeqCst);
                    handler(n, &req, &mut stream);
                    log.lock().push(req);
                }
            });
        }
    });
    (url, seen)
}

fn config(url: &str) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Remote,
        model_id: "gpt-4".into(),
        endpoint_url: url.into(),
        timeout_s: 5.0,
        max_retries: 3,
        backoff_base_ms: 5,
        api_key_env: "SKGP_TEST_UNSET_KEY".into(),
        ..BackendConfig::default()
    }
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let (url, seen) = serve(Arc::new(|n, _req, stream| {
        if n < 2 {
            respond(stream, 429, "{\"error\":\"slow down\"}", "");
        } else {
            respond(stream, 200, &ok_body("rise"), "");
        }
    }));
    let backend = RemoteBackend::new(config(&url)).unwrap();
    let result = backend
        .complete("You are a financial analysis assistant.", "prompt")
        .unwrap();
    assert_eq!(result.text, "rise");
    assert_eq!(result.attempt, 3);
    assert_eq!((result.prompt_tokens, result.completion_tokens), (11, 3));
    assert_eq!(seen.lock().len(), 3);
}

#[test]
fn request_carries_model_messages_and_zero_temperature() {
    let (url, seen) = serve(Arc::new(|_, _req, stream| respond(stream, 200, &ok_body("ok"), "")));
    let mut cfg = config(&url);
    cfg.api_key_env = "SKGP_TEST_KEY_FOR_HEADER".into();
    std::env::set_var("SKGP_TEST_KEY_FOR_HEADER", "sk-test");
    let backend = RemoteBackend::new(cfg).unwrap();
    backend.complete("system text", "user text").unwrap();
    let seen = seen.lock();
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "gpt-4");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], "system text");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], "user text");
    assert!(seen[0]
        .headers
        .iter()
        .any(|(k, v)| k == "authorization" && v == "Bearer sk-test"));
}

#[test]
fn server_down_fails_after_all_attempts() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    drop(listener);
    let mut cfg = config(&url);
    cfg.max_retries = 2;
    let err = RemoteBackend::new(cfg).unwrap().complete("s", "p").unwrap_err();
    match err {
        BackendError::Transport { attempts, .. } | BackendError::Timeout { attempts } => assert_eq!(attempts, 3),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn persistent_server_errors_report_status_and_attempts() {
    let (url, seen) = serve(Arc::new(|_, _req, stream| respond(stream, 503, "{}", "")));
    let mut cfg = config(&url);
    cfg.max_retries = 1;
    let err = RemoteBackend::new(cfg).unwrap().complete("s", "p").unwrap_err();
    assert!(
        matches!(
            err,
            BackendError::Status {
                status: 503,
                attempts: 2,
                ..
            }
        ),
        "{err:?}"
    );
    assert_eq!(seen.lock().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(Arc::new(|_, _req, stream| {
        respond(stream, 400, "{\"error\":\"bad\"}", "")
    }));
    let err = RemoteBackend::new(config(&url))
        .unwrap()
        .complete("s", "p")
        .unwrap_err();
    assert!(
        matches!(
            err,
            BackendError::Status {
                status: 400,
                attempts: 1,
                ..
            }
        ),
        "{err:?}"
    );
    assert_eq!(seen.lock().len(), 1);
}

#[test]
fn malformed_body_is_fatal() {
    let (url, _) = serve(Arc::new(|_, _req, stream| {
        respond(stream, 200, "{\"choices\": []}", "")
    }));
    let err = RemoteBackend::new(config(&url))
        .unwrap()
        .complete("s", "p")
        .unwrap_err();
    assert!(matches!(err, BackendError::Malformed(_)), "{err:?}");
}

#[test]
fn slow_server_times_out() {
    let (url, _) = serve(Arc::new(|_, _req, stream| {
        std::thread::sleep(Duration::from_millis(800));
        respond(stream, 200, &ok_body("late"), "");
    }));
    let mut cfg = config(&url);
    cfg.timeout_s = 0.2;
    cfg.max_retries = 1;
    let err = RemoteBackend::new(cfg).unwrap().complete("s", "p").unwrap_err();
    assert!(matches!(err, BackendError::Timeout { attempts: 2 }), "{err:?}");
}

#[test]
fn in_flight_requests_never_exceed_limit() {
    let current = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (c, p) = (current.clone(), peak.clone());
    let (url, seen) = serve(Arc::new(move |_, _req, stream| {
        let now = c.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(40));
        c.fetch_sub(1, Ordering::SeqCst);
        respond(stream, 200, &ok_body("ok"), "");
    }));
    let mut cfg = config(&url);
    cfg.max_concurrent_requests = 3;
    let backend = RemoteBackend::new(cfg).unwrap();
    std::thread::scope(|s| {
        for i in 0..12 {
            let backend = &backend;
            s.spawn(move || backend.complete("s", &format!("prompt {i}")).unwrap());
        }
    });
    assert_eq!(seen.lock().len(), 12);
    let peak = peak.load(Ordering::SeqCst);
    assert!(peak <= 3, "peak in-flight {peak}");
    assert!(peak >= 2, "requests were not concurrent (peak {peak})");
}

#[test]
fn empty_prompt_is_rejected_without_a_request() {
    let (url, seen) = serve(Arc::new(|_, _req, stream| respond(stream, 200, &ok_body("x"), "")));
    let err = RemoteBackend::new(config(&url))
        .unwrap()
        .complete("s", "  ")
        .unwrap_err();
    assert_eq!(err, BackendError::EmptyPrompt);
    assert!(seen.lock().is_empty());
}
