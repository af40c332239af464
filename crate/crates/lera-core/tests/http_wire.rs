//! Wire-level conformance for the HTTP backend against a local mock
//! chat-completions server: request shape, auth header, image encoding,
//! retry policy, and key hygiene in run artifacts.

mod common;

use base64::prelude::*;
use common::{chat_reply, lock_env, MockServer};

use lera_core::backend::http::{HttpBackend, HttpConfig};
use lera_core::backend::{
    Attachment, BackendError, BackendRequest, DecodeParams, Stage, API_KEY_ENV,
};
use lera_core::suite::{run_suite, trace, BackendChoice, SuiteConfig};
use lera_core::world::RasterImage;

const TEST_KEY: &str = "sk-wiretest-0123456789abcdef";

fn config_for(server: &MockServer) -> HttpConfig {
    HttpConfig {
        endpoint: server.endpoint(),
        model: "mock-model".to_string(),
        timeout_s: 5.0,
        max_retries: 3,
        backoff_base_ms: 1,
        max_concurrency: 4,
    }
}

fn backend_for(server: &MockServer) -> HttpBackend {
    std::env::set_var(API_KEY_ENV, TEST_KEY);
    let backend = HttpBackend::from_env(config_for(server)).unwrap();
    std::env::remove_var(API_KEY_ENV);
    backend
}

fn raster_request() -> (BackendRequest, RasterImage) {
    let image = RasterImage { width: 2, height: 1, pixels: vec![1, 2, 3, 4, 5, 6] };
    let request = BackendRequest {
        system_text: Stage::Look.marker(),
        user_text: "inspect the scene".to_string(),
        attachment: Some(Attachment::Raster(image.clone())),
        decode: DecodeParams::default(),
    };
    (request, image)
}

#[test]
fn request_shape_matches_the_chat_completions_contract() {
    let _guard = lock_env();
    let server = MockServer::start(vec![(200, chat_reply("all clear"))]);
    let backend = backend_for(&server);
    let (request, image) = raster_request();

    let reply = backend.complete(&request).unwrap();
    assert_eq!(reply, "all clear");

    let seen = server.requests();
    assert_eq!(seen.len(), 1);
    let req = &seen[0];
    assert_eq!(req.method, "POST");
    assert_eq!(req.path, "/v1/chat/completions");
    assert_eq!(req.header("authorization"), Some(format!("Bearer {TEST_KEY}").as_str()));
    assert!(req
        .header("content-type")
        .is_some_and(|v| v.starts_with("application/json")));

    let body = &req.body;
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["temperature"], 0.0);
    let messages = body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(
        messages[0]["content"].as_str().unwrap(),
        Stage::Look.marker()
    );
    assert_eq!(messages[1]["role"], "user");
    let parts = messages[1]["content"].as_array().unwrap();
    assert_eq!(parts[0]["type"], "text");
    assert_eq!(parts[0]["text"], "inspect the scene");
    assert_eq!(parts[1]["type"], "image_url");

    let url = parts[1]["image_url"]["url"].as_str().unwrap();
    let prefix = "data:image/x-portable-pixmap;base64,";
    assert!(url.starts_with(prefix), "{url}");
    let decoded = BASE64_STANDARD.decode(&url[prefix.len()..]).unwrap();
    assert_eq!(decoded, image.to_ppm());
    assert!(decoded.starts_with(b"P6\n2 1\n255\n"));
}

#[test]
fn transient_statuses_are_retried_until_success() {
    let _guard = lock_env();
    let server = MockServer::start(vec![
        (429, "{\"error\":\"slow down\"}".to_string()),
        (500, "{\"error\":\"boom\"}".to_string()),
        (200, chat_reply("third time lucky")),
    ]);
    let backend = backend_for(&server);
    let (request, _) = raster_request();

    let reply = backend.complete(&request).unwrap();
    assert_eq!(reply, "third time lucky");
    assert_eq!(server.requests().len(), 3, "429 and 500 each cost one attempt");
}

#[test]
fn client_errors_fail_fast_without_retry() {
    let _guard = lock_env();
    let server = MockServer::start(vec![(400, "{\"error\":\"bad request\"}".to_string())]);
    let backend = backend_for(&server);
    let (request, _) = raster_request();

    match backend.complete(&request) {
        Err(BackendError::Http { status, snippet }) => {
            assert_eq!(status, 400);
            assert!(snippet.contains("bad request"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn exhausted_retries_become_a_transport_error() {
    let _guard = lock_env();
    let server = MockServer::start(vec![
        (503, "{}".to_string()),
        (503, "{}".to_string()),
    ]);
    std::env::set_var(API_KEY_ENV, TEST_KEY);
    let mut config = config_for(&server);
    config.max_retries = 1;
    let backend = HttpBackend::from_env(config).unwrap();
    std::env::remove_var(API_KEY_ENV);
    let (request, _) = raster_request();

    match backend.complete(&request) {
        Err(BackendError::Transport { attempts, reason }) => {
            assert_eq!(attempts, 2);
            assert!(reason.contains("503"), "{reason}");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn malformed_reply_bodies_are_reported_not_retried() {
    let _guard = lock_env();
    let server = MockServer::start(vec![(200, "{\"unexpected\":true}".to_string())]);
    let backend = backend_for(&server);
    let (request, _) = raster_request();

    assert!(matches!(
        backend.complete(&request),
        Err(BackendError::MalformedReply)
    ));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn suite_artifacts_never_contain_the_api_key() {
    let _guard = lock_env();
    let server = MockServer::start(Vec::new());

    let mut config = SuiteConfig::from_toml_str(&format!(
        r#"
suite_id = "wire-hygiene"
seed = 11
tasks = ["tabletop_01"]
seeds = [0]

[backend]
kind = "http"

[backend.http]
endpoint = "{}"
model = "mock-model"
timeout_s = 5.0
max_retries = 0
backoff_base_ms = 1
max_concurrency = 1

[budgets]
max_actions = 6
max_replans = 2

[[agents]]
label = "lera"
variant = "LERa"
p_flip = 1.0
p_drop = 0.0
"#,
        server.endpoint()
    ))
    .unwrap();
    config.output_dir = tempfile::tempdir().unwrap().path().to_path_buf();

    std::env::set_var(API_KEY_ENV, TEST_KEY);
    let backend = config.make_backend().unwrap();
    std::env::remove_var(API_KEY_ENV);

    let run = run_suite(&config, &backend, Some(1)).unwrap();
    assert!(
        !server.requests().is_empty(),
        "the degenerate checker must force backend traffic"
    );

    let lines = trace::lines_for(&run);
    let jsonl = trace::render_jsonl(&lines);
    assert!(jsonl.contains("mock-reply"), "replies land in the trace");
    assert!(!jsonl.contains(TEST_KEY), "the key must never reach trace files");
    for format in [
        lera_core::metrics::ReportFormat::Csv,
        lera_core::metrics::ReportFormat::Markdown,
        lera_core::metrics::ReportFormat::Structured,
    ] {
        let report = lera_core::metrics::emit_report(&run.result, format);
        assert!(!report.contains(TEST_KEY));
    }
    assert!(!format!("{backend:?}").contains(TEST_KEY));

    // The key went exactly where it belongs: the Authorization header.
    for request in server.requests() {
        assert_eq!(
            request.header("authorization"),
            Some(format!("Bearer {TEST_KEY}").as_str())
        );
        assert!(!request.body.to_string().contains(TEST_KEY));
    }
}

#[test]
fn http_suite_without_a_key_refuses_to_start() {
    let _guard = lock_env();
    std::env::remove_var(API_KEY_ENV);
    let config = SuiteConfig {
        backend: lera_core::suite::BackendConfig {
            kind: BackendChoice::Http,
            http: HttpConfig::default(),
        },
        ..SuiteConfig::from_toml_str(
            r#"
suite_id = "no-key"
seed = 1
tasks = ["tabletop_01"]
seeds = [0]

[[agents]]
label = "lera"
variant = "LERa"
"#,
        )
        .unwrap()
    };
    match config.make_backend() {
        Err(lera_core::suite::SuiteError::Backend(BackendError::MissingAuth)) => {}
        other => panic!("{other:?}"),
    }
}
