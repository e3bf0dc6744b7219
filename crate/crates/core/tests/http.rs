use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use dual_reflect::backend::{Backend, BackendError, ChatRequest, HttpBackend, HttpConfig, RetryPolicy};
use dual_reflect::prompts::MessageSequence;
use dual_reflect::{run_pipeline, RunConfig, Stage, TranslationTask};
use serde_json::{json, Value};

#[derive(Default)]
struct Stub {
    replies: Mutex<VecDeque<(u16, Value)>>,
    seen: Mutex<Vec<(Option<String>, Value)>>,
}

async fn completions(State(stub): State<Arc<Stub>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let auth = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    stub.seen.lock().unwrap().push((auth, body));
    let (status, reply) = stub
        .replies
        .lock()
        .unwrap()
        .pop_front()
        .unwrap_or((500, json!({"error": "script exhausted"})));
    (StatusCode::from_u16(status).unwrap(), Json(reply))
}

fn ok(content: &str) -> (u16, Value) {
    (
        200,
        json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 2}
        }),
    )
}

async fn serve(replies: Vec<(u16, Value)>) -> (Arc<Stub>, HttpBackend) {
    let stub = Arc::new(Stub {
        replies: Mutex::new(replies.into()),
        ..Stub::default()
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(stub.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    let backend = HttpBackend::new(HttpConfig {
        base_url: format!("http://{addr}/v1"),
        api_key: Some("test-key".into()),
        timeout: Duration::from_secs(5),
        retry: RetryPolicy {
            initial_backoff: Duration::from_millis(5),
            max_backoff: Duration::from_millis(20),
            ..RetryPolicy::default()
        },
    })
    .unwrap();
    (stub, backend)
}

fn request() -> ChatRequest {
    ChatRequest::new("gpt-3.5-turbo", MessageSequence::user("Translate: hi"), 0.0).with_stage(Stage::Draft)
}

#[tokio::test]
async fn retries_rate_limits() {
    let busy = json!({"error": {"message": "slow down"}});
    let (stub, backend) = serve(vec![(429, busy.clone()), (429, busy), ok("salut")]).await;
    let resp = backend.complete(&request()).await.unwrap();
    assert_eq!(resp.content, "salut");
    assert_eq!(resp.attempts, 3);
    assert_eq!(resp.usage.prompt_tokens, 10);
    let seen = stub.seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].0.as_deref(), Some("Bearer test-key"));
    assert_eq!(seen[0].1["model"], "gpt-3.5-turbo");
    assert_eq!(seen[0].1["temperature"], 0.0);
    assert_eq!(seen[0].1["messages"][0]["role"], "user");
    assert!(seen[0].1.get("stage").is_none());
}

#[tokio::test]
async fn missing_content_is_malformed() {
    let (stub, backend) = serve(vec![(200, json!({"choices": [{"message": {"role": "assistant"}}]}))]).await;
    let err = backend.complete(&request()).await.unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)), "{err}");
    assert_eq!(stub.seen.lock().unwrap().len(), 1);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (stub, backend) = serve(vec![(400, json!({"error": "bad model"})), ok("never")]).await;
    let err = backend.complete(&request()).await.unwrap_err();
    assert!(matches!(err, BackendError::BadRequest { status: 400, .. }), "{err}");
    assert_eq!(stub.seen.lock().unwrap().len(), 1);
}

#[tokio::test]
async fn server_errors_give_up_after_cap() {
    let (stub, backend) = serve(vec![(503, json!({})); 6]).await;
    let err = backend.complete(&request()).await.unwrap_err();
    assert_eq!(err, BackendError::Server { status: 503, attempts: 5 });
    assert_eq!(stub.seen.lock().unwrap().len(), 5);
}

#[tokio::test]
async fn pipeline_over_http() {
    let (stub, backend) = serve(vec![
        ok("They ate apples."),
        ok("他们吃了苹果。"),
        ok("False"),
        ok(r#"{"final_translation": "They ate apples."}"#),
    ])
    .await;
    let task = TranslationTask::new("h", "他们吃了苹果。", "Chinese", "English");
    let result = run_pipeline(task, RunConfig::default(), Arc::new(backend)).await.unwrap();
    assert_eq!(result.final_translation, "They ate apples.");
    assert_eq!(result.transcript.len(), 4);
    assert_eq!(result.usage.prompt_tokens, 40);
    let seen = stub.seen.lock().unwrap();
    assert_eq!(seen[0].1["messages"][0]["role"], "system");
    assert_eq!(seen[0].1["messages"][1]["role"], "user");
}
