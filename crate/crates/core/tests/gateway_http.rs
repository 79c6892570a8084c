use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use sactline::gateway::{
    ChatRequest, EndpointProfile, FinishReason, Gateway, GatewayError, HttpBackend, MockBackend,
    RetryPolicy, SamplingParams, TemplateId, ThinkDelimiters,
};

struct Canned {
    status: u16,
    body: String,
}

/// Serves one canned response per connection, in order, and records the
/// request bodies it saw.
fn serve(responses: Vec<Canned>) -> (String, Arc<Mutex<Vec<String>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for canned in responses {
            let (stream, _) = listener.accept().unwrap();
            log.lock().unwrap().push(read_body(&stream));
            respond(stream, canned);
        }
    });
    (url, seen, handle)
}

fn read_body(stream: &TcpStream) -> String {
    let mut reader = BufReader::new(stream);
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if line == "\r\n" || line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    String::from_utf8(body).unwrap()
}

fn respond(mut stream: TcpStream, canned: Canned) {
    let reply = format!(
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        canned.status,
        canned.body.len(),
        canned.body
    );
    stream.write_all(reply.as_bytes()).unwrap();
}

fn gateway(url: &str) -> Gateway {
    let profile = EndpointProfile {
        url: url.to_string(),
        model: "test-model".into(),
        auth_env: None,
        timeout_secs: 5,
        think: ThinkDelimiters::default(),
    };
    Gateway::new(HttpBackend::new(profile).unwrap()).with_retry(RetryPolicy {
        max_attempts: 3,
        base_delay_ms: 1,
        max_delay_ms: 4,
    })
}

fn request(thinking: bool) -> ChatRequest {
    ChatRequest::new(
        "test-model",
        TemplateId::Extraction,
        "Date of service: 20130115\nTaxol today.",
        thinking,
        SamplingParams::default(),
    )
    .unwrap()
}

#[test]
fn three_server_errors_exhaust_retries() {
    let fail = || Canned {
        status: 500,
        body: "{}".into(),
    };
    let (url, seen, handle) = serve(vec![fail(), fail(), fail()]);
    let err = gateway(&url).complete(&request(false)).unwrap_err();
    handle.join().unwrap();
    assert!(
        matches!(err, GatewayError::Transport { attempts: 3, .. }),
        "{err:?}"
    );
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn recovers_after_a_transient_failure() {
    let ok =
        r#"{"choices":[{"message":{"content":"<think>hmm</think>[]"},"finish_reason":"stop"}]}"#;
    let (url, seen, handle) = serve(vec![
        Canned {
            status: 503,
            body: "{}".into(),
        },
        Canned {
            status: 200,
            body: ok.into(),
        },
    ]);
    let result = gateway(&url).complete(&request(true)).unwrap();
    handle.join().unwrap();
    assert_eq!(result.answer_text, "[]");
    assert_eq!(result.thinking_text.as_deref(), Some("hmm"));
    assert_eq!(result.finish_reason, FinishReason::Stop);

    let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[1]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["chat_template_kwargs"]["enable_thinking"], true);
    assert_eq!(body["top_k"], 20);
    assert!(body["messages"][0]["content"]
        .as_str()
        .unwrap()
        .contains("Taxol today."));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen, handle) = serve(vec![Canned {
        status: 400,
        body: "bad request".into(),
    }]);
    let err = gateway(&url).complete(&request(false)).unwrap_err();
    handle.join().unwrap();
    assert!(
        matches!(err, GatewayError::Endpoint { status: 400, .. }),
        "{err:?}"
    );
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn truncation_is_reported() {
    let body =
        r#"{"choices":[{"message":{"content":"[{\"SACT\": \"Tax"},"finish_reason":"length"}]}"#;
    let (url, _, handle) = serve(vec![Canned {
        status: 200,
        body: body.into(),
    }]);
    let result = gateway(&url).complete(&request(false)).unwrap();
    handle.join().unwrap();
    assert!(result.is_truncated());
}

#[test]
fn mock_replay_is_deterministic() {
    let req = request(false);
    let mut fixtures = std::collections::HashMap::new();
    fixtures.insert(
        req.key(),
        "<think>x</think>[[\"a\", \"CONTAINS-1\", \"b\"]]".to_string(),
    );
    let gateway = Gateway::new(MockBackend::from_map(fixtures));
    let first = gateway.complete(&req).unwrap();
    for _ in 0..5 {
        assert_eq!(gateway.complete(&req).unwrap(), first);
    }
    assert!(gateway.complete(&request(true)).is_err());
}
