mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use ccdae_core::backends::{
    train_ngram, NGramBackend, RemoteBackend, RemoteConfig, SampleRequest, TableBackend,
    DEFAULT_ALPHA, DEFAULT_CACHE_WEIGHT, DEFAULT_ORDER, ENDPOINT_ENV,
};
use ccdae_core::baselines::cond_likelihood_score;
use ccdae_core::{Backend, BackendError, Description};
use serde_json::{json, Value};

fn request(seed: u64) -> SampleRequest {
    SampleRequest {
        count: 12,
        max_tokens: 12,
        temperature: 1.0,
        seed,
        prompt: None,
    }
}

/// Properties every backend must satisfy on a context it knows.
fn check_contract(backend: &dyn Backend, context: &str) {
    let first = backend.sample_descriptions(context, &request(5)).unwrap();
    let again = backend.sample_descriptions(context, &request(5)).unwrap();
    assert_eq!(first, again, "sampling must be reproducible for a seed");
    assert_eq!(first.len(), 12);

    let descriptions: Vec<Description> = first.iter().map(|s| s.description.clone()).collect();
    let many = backend
        .cond_logprob_many(context, None, &descriptions)
        .unwrap();
    for (s, batch_score) in first.iter().zip(&many) {
        let single = backend.cond_logprob(context, None, &s.description).unwrap();
        assert_eq!(&single, batch_score);
        let sum: f64 = single.per_token.iter().sum();
        assert!((sum - single.total).abs() < 1e-9);
        let sampled: f64 = s.per_token.iter().sum();
        assert!(
            (sampled - single.total).abs() < 1e-9,
            "sampling and scoring disagree on {:?}",
            s.description
        );
        assert!(single.total <= 0.0 && single.total.is_finite());
        assert!(backend.code_logprob(&s.description).unwrap().total <= 0.0);
    }
}

fn toy_backend() -> NGramBackend {
    let corpus = std::fs::read_to_string(common::data_dir().join("toy_corpus.txt")).unwrap();
    let model = train_ngram(&corpus, DEFAULT_ORDER, DEFAULT_ALPHA).unwrap();
    NGramBackend::new(model, DEFAULT_CACHE_WEIGHT).unwrap()
}

#[test]
fn table_backend_contract() {
    let backend = TableBackend::load(common::fixture("scenes.json")).unwrap();
    check_contract(&backend, "a dog runs on the beach");
    assert!(matches!(
        backend.cond_logprob("unknown", None, &Description::complete("dog")),
        Err(BackendError::UnknownContext(_))
    ));
}

#[test]
fn ngram_backend_contract() {
    let backend = toy_backend();
    check_contract(&backend, "the chef bakes fresh bread in the oven");
    let truncated = Description::new("chef", false);
    let complete = Description::complete("chef");
    let ctx = "the chef bakes fresh bread in the oven";
    let t = backend.cond_logprob(ctx, None, &truncated).unwrap();
    let c = backend.cond_logprob(ctx, None, &complete).unwrap();
    assert_eq!(c.per_token.len(), t.per_token.len() + 1);
}

#[test]
fn ngram_model_file_round_trips() {
    let model = toy_backend().model().clone();
    let path = std::env::temp_dir().join(format!("ccdae-roundtrip-{}.model", std::process::id()));
    model.save(&path).unwrap();
    let loaded = ccdae_core::backends::NGramModel::load(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(loaded, model);
}

#[test]
fn identical_strings_outscore_shuffled_ones() {
    let backend = toy_backend();
    let x = "the chef bakes fresh bread";
    let mut shuffled: Vec<char> = x.chars().collect();
    shuffled.reverse();
    let shuffled: String = shuffled.into_iter().collect();
    let same = cond_likelihood_score(x, x, &backend).unwrap();
    let other = cond_likelihood_score(x, &shuffled, &backend).unwrap();
    assert!(same > other, "{same} <= {other}");
}

#[test]
fn ensemble_of_two_contexts_covers_both() {
    let backend = TableBackend::load(common::fixture("trajectory_floor.json")).unwrap();
    let draws = backend
        .ensemble_sample(
            "x1",
            "x2",
            &SampleRequest {
                count: 400,
                ..request(1)
            },
        )
        .unwrap();
    let red = draws.iter().filter(|d| d.text.starts_with("red")).count();
    assert!(
        (150..=250).contains(&red),
        "{red} of 400 from the first context"
    );
}

/// Minimal HTTP server answering the remote protocol from a table fixture.
struct MockServer {
    url: String,
    requests: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, Value)> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut length = 0;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        if header.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((path, serde_json::from_slice(&body).ok()?))
}

fn respond(stream: &mut TcpStream, status: u16, body: &Value) {
    let text = body.to_string();
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
        text.len()
    );
}

/// `failures` requests get a 503 before the server starts answering;
/// `bad_total` makes logprob responses inconsistent.
fn spawn_server(failures: usize, bad_total: bool) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&requests);
    let table = TableBackend::load(common::fixture("scenes.json")).unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some((path, body)) = read_request(&mut stream) else {
                continue;
            };
            let n = counter.fetch_add(1, Ordering::SeqCst);
            if n < failures {
                respond(&mut stream, 503, &json!({"error": "busy"}));
                continue;
            }
            let context = body["context"].as_str().unwrap_or_default();
            let reply = match path.as_str() {
                "/v1/logprob" => {
                    let d = Description::new(
                        body["continuation"].as_str().unwrap_or_default(),
                        body["eos"].as_bool().unwrap_or(true),
                    );
                    let scored = if context.is_empty() {
                        table.code_logprob(&d)
                    } else {
                        table.cond_logprob(context, None, &d)
                    };
                    scored.map(|r| {
                        let total = if bad_total { r.total - 1.0 } else { r.total };
                        json!({"per_token_logprobs": r.per_token, "total": total})
                    })
                }
                "/v1/sample" => {
                    let req = SampleRequest {
                        count: body["num_samples"].as_u64().unwrap_or(1) as usize,
                        max_tokens: body["max_tokens"].as_u64().unwrap_or(1) as usize,
                        temperature: body["temperature"].as_f64().unwrap_or(1.0),
                        seed: body["seed"].as_u64().unwrap_or(0),
                        prompt: None,
                    };
                    table.sample_descriptions(context, &req).map(|s| {
                        let samples: Vec<Value> = s
                            .iter()
                            .map(|s| json!({"text": s.description.text, "per_token_logprobs": s.per_token, "terminated": true}))
                            .collect();
                        json!({ "samples": samples })
                    })
                }
                _ => Err(BackendError::Unsupported("path")),
            };
            match reply {
                Ok(v) => respond(&mut stream, 200, &v),
                Err(e) => respond(&mut stream, 400, &json!({"error": e.to_string()})),
            }
        }
    });
    MockServer { url, requests }
}

fn remote(server: &MockServer) -> Option<RemoteBackend> {
    if std::env::var(ENDPOINT_ENV).is_ok() {
        return None;
    }
    Some(
        RemoteBackend::new(RemoteConfig {
            endpoint: server.url.clone(),
            timeout: Duration::from_secs(5),
            ..RemoteConfig::default()
        })
        .unwrap(),
    )
}

#[test]
fn remote_backend_contract() {
    let server = spawn_server(0, false);
    let Some(backend) = remote(&server) else {
        return;
    };
    check_contract(&backend, "a cat sleeps on a sofa");
    let table = TableBackend::load(common::fixture("scenes.json")).unwrap();
    let d = Description::complete("sofa");
    assert_eq!(
        backend
            .cond_logprob("a cat sleeps on a sofa", None, &d)
            .unwrap(),
        table
            .cond_logprob("a cat sleeps on a sofa", None, &d)
            .unwrap()
    );
}

#[test]
fn remote_retries_server_errors() {
    let server = spawn_server(2, false);
    let Some(backend) = remote(&server) else {
        return;
    };
    let r = backend
        .cond_logprob(
            "a cat sleeps on a sofa",
            None,
            &Description::complete("cat"),
        )
        .unwrap();
    assert!(r.total < 0.0);
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn remote_gives_up_after_the_attempt_budget() {
    let server = spawn_server(10, false);
    let Some(backend) = remote(&server) else {
        return;
    };
    let err = backend
        .cond_logprob(
            "a cat sleeps on a sofa",
            None,
            &Description::complete("cat"),
        )
        .unwrap_err();
    assert!(
        matches!(err, BackendError::Status { status: 503, .. }),
        "{err}"
    );
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn remote_client_errors_are_not_retried() {
    let server = spawn_server(0, false);
    let Some(backend) = remote(&server) else {
        return;
    };
    let err = backend
        .cond_logprob("no such context", None, &Description::complete("cat"))
        .unwrap_err();
    assert!(
        matches!(err, BackendError::Status { status: 400, .. }),
        "{err}"
    );
    assert_eq!(server.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn remote_rejects_inconsistent_totals() {
    let server = spawn_server(0, true);
    let Some(backend) = remote(&server) else {
        return;
    };
    let err = backend
        .cond_logprob(
            "a cat sleeps on a sofa",
            None,
            &Description::complete("cat"),
        )
        .unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err}");
}
