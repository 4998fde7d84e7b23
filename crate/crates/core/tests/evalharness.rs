use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};
use trajvqa::evalharness::{
    evaluate, render_prompt, ChatClient, ClientError, EndpointResponder, EvalConfig, Part, PromptMode, ResponseCache,
    RetryPolicy, API_KEY_ENV, ENDPOINT_ENV,
};
use trajvqa::phaseseg::PhaseLabel;
use trajvqa::qgen::{Category, VQAItem};

#[derive(Debug, Clone)]
struct Request {
    headers: BTreeMap<String, String>,
    body: Value,
}

type Script = Box<dyn Fn(usize, &Request) -> (u16, String) + Send + Sync>;

/// Minimal HTTP/1.1 server, one request per connection, answering through
/// `script`, which sees the zero-based request number.
struct Mock {
    url: String,
    log: Arc<Mutex<Vec<Request>>>,
}

impl Mock {
    fn start(script: Script) -> Mock {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let log: Arc<Mutex<Vec<Request>>> = Arc::default();
        let script = Arc::new(script);
        let seen = log.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (seen, script) = (seen.clone(), script.clone());
                std::thread::spawn(move || serve(stream, &seen, script.as_ref()));
            }
        });
        Mock { url, log }
    }

    fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<Request>>, script: &Script) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut headers = BTreeMap::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':').unwrap();
        headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    let len: usize = headers.get("content-length").map_or(0, |v| v.parse().unwrap());
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let req = Request { headers, body: serde_json::from_slice(&body).unwrap_or(Value::Null) };
    let n = {
        let mut l = log.lock().unwrap();
        l.push(req.clone());
        l.len() - 1
    };
    let (status, text) = script(n, &req);
    let resp = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    out.write_all(resp.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn reply(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn client(url: &str, key: Option<&str>) -> ChatClient {
    let mut c = ChatClient::new(url, key.map(str::to_string), "test-model", Duration::from_secs(10));
    c.retry = RetryPolicy { max_attempts: 3, backoff_ms: 1 };
    c
}

fn item(dir: &std::path::Path, i: usize, correct: usize) -> VQAItem {
    let img = format!("media/{i}.png");
    std::fs::create_dir_all(dir.join("media")).unwrap();
    image::RgbImage::from_pixel(8, 6, image::Rgb([i as u8, 10, 20])).save(dir.join(&img)).unwrap();
    VQAItem {
        id: format!("traj-{i:03}-AU"),
        category: Category::Au,
        question: format!("What is the robot doing in frame {i}?"),
        choices: (0..5).map(|k| format!("choice {k}")).collect(),
        correct_index: correct,
        images: vec![img],
        traj_id: "traj".into(),
        frame_indices: vec![i],
        phase: PhaseLabel::Approach,
        meta: BTreeMap::new(),
    }
}

#[test]
fn server_errors_are_retried_until_success() {
    let mock = Mock::start(Box::new(|n, _| if n < 2 { (500, "busy".into()) } else { (200, reply("Final Answer: B")) }));
    let got = client(&mock.url, None).chat(&[Part::Text("hi".into())], 0.7, 16).unwrap();
    assert_eq!(got, "Final Answer: B");
    assert_eq!(mock.requests().len(), 3);
}

#[test]
fn retries_stop_at_the_attempt_limit() {
    let mock = Mock::start(Box::new(|_, _| (503, "down".into())));
    let err = client(&mock.url, None).chat(&[Part::Text("hi".into())], 0.7, 16).unwrap_err();
    assert!(matches!(err, ClientError::Status { status: 503, .. }), "{err}");
    assert_eq!(mock.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = Mock::start(Box::new(|_, _| (400, "bad request".into())));
    let err = client(&mock.url, None).chat(&[Part::Text("hi".into())], 0.7, 16).unwrap_err();
    assert!(matches!(err, ClientError::Status { status: 400, .. }));
    assert_eq!(mock.requests().len(), 1);
}

#[test]
fn request_carries_model_sampling_and_bearer_key() {
    let mock = Mock::start(Box::new(|_, _| (200, reply("A"))));
    client(&mock.url, Some("k-123")).chat(&[Part::Text("hello".into())], 0.25, 99).unwrap();
    let r = &mock.requests()[0];
    assert_eq!(r.headers["authorization"], "Bearer k-123");
    assert_eq!(r.body["model"], "test-model");
    assert_eq!(r.body["temperature"], 0.25);
    assert_eq!(r.body["max_tokens"], 99);
    assert_eq!(r.body["messages"][0]["content"], "hello");

    let anon = Mock::start(Box::new(|_, _| (200, reply("A"))));
    client(&anon.url, None).chat(&[Part::Text("x".into())], 0.0, 1).unwrap();
    assert!(!anon.requests()[0].headers.contains_key("authorization"));
}

#[test]
fn endpoint_from_environment_scores_items_with_images() {
    let dir = tempfile::tempdir().unwrap();
    let items: Vec<VQAItem> = (0..6).map(|i| item(dir.path(), i, i % 5)).collect();
    // answers A for every item; correct only where correct_index == 0
    let mock = Mock::start(Box::new(|_, _| (200, reply("Final Answer: A"))));
    std::env::set_var(ENDPOINT_ENV, &mock.url);
    std::env::set_var(API_KEY_ENV, "env-secret");
    let cfg = EvalConfig { model: "vlm".into(), max_parallel: 3, ..EvalConfig::default() };
    let responder = EndpointResponder::from_config(&cfg, dir.path()).unwrap();
    std::env::remove_var(ENDPOINT_ENV);
    std::env::remove_var(API_KEY_ENV);

    let mut cache = ResponseCache::in_memory();
    let (report, results) = evaluate(&items, &cfg, &responder, &mut cache).unwrap();
    assert_eq!(report.overall.n, 6);
    assert_eq!(report.overall.correct, 2);
    assert_eq!(report.request_errors, 0);
    assert!(results.iter().all(|r| r.predicted == Some('A')));

    let reqs = mock.requests();
    assert_eq!(reqs.len(), 6);
    for r in &reqs {
        assert_eq!(r.headers["authorization"], "Bearer env-secret");
        assert_eq!(r.body["model"], "vlm");
        assert_eq!(r.body["max_context_length"], 10240);
        let parts = r.body["messages"][0]["content"].as_array().unwrap();
        assert_eq!(parts.len(), 2);
        let prompt = parts[1]["text"].as_str().unwrap();
        let it =
            items.iter().find(|i| render_prompt(i, PromptMode::ZeroShot) == prompt).expect("prompt of a known item");
        let png = std::fs::read(dir.path().join(&it.images[0])).unwrap();
        let want = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png));
        assert_eq!(parts[0]["image_url"]["url"], want.as_str());
    }

    // cached items are not queried again
    evaluate(&items, &cfg, &responder, &mut cache).unwrap();
    assert_eq!(mock.requests().len(), 6);
}

#[test]
fn verifier_recovers_unparseable_answers() {
    let dir = tempfile::tempdir().unwrap();
    let items = vec![item(dir.path(), 0, 3)];
    let main = Mock::start(Box::new(|_, _| (200, reply("Hard to say from this view."))));
    let verifier = Mock::start(Box::new(|_, _| (200, reply("D"))));
    let cfg = EvalConfig {
        endpoint_url: Some(main.url.clone()),
        verifier_url: Some(verifier.url.clone()),
        api_key_env: "TRAJVQA_TEST_UNSET_KEY".into(),
        ..EvalConfig::default()
    };
    let responder = EndpointResponder::from_config(&cfg, dir.path()).unwrap();
    let (report, results) = evaluate(&items, &cfg, &responder, &mut ResponseCache::in_memory()).unwrap();
    assert_eq!(results[0].predicted, Some('D'));
    assert_eq!(report.overall.correct, 1);
    assert_eq!(report.extraction_failures, 0);
    let v = &verifier.requests()[0];
    assert_eq!(v.body["temperature"], 0.0);
    assert!(v.body["messages"][0]["content"].as_str().unwrap().contains("Hard to say from this view."));
}

#[test]
fn unreachable_endpoint_is_a_request_error() {
    let dir = tempfile::tempdir().unwrap();
    let items = vec![item(dir.path(), 0, 0)];
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = EvalConfig {
        endpoint_url: Some(format!("http://127.0.0.1:{port}/v1")),
        api_key_env: "TRAJVQA_TEST_UNSET_KEY".into(),
        retry: RetryPolicy { max_attempts: 2, backoff_ms: 1 },
        timeout_s: 2,
        ..EvalConfig::default()
    };
    let responder = EndpointResponder::from_config(&cfg, dir.path()).unwrap();
    let (report, results) = evaluate(&items, &cfg, &responder, &mut ResponseCache::in_memory()).unwrap();
    assert_eq!(report.request_errors, 1);
    assert!(results[0].error.is_some());
}
