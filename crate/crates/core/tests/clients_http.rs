mod common;

use std::time::{Duration, Instant};

use common::{chat_reply, solid, MockServer, Reply};
use serde_json::json;
use videominer::clients::remote::{ClientConfig, RemoteAnswerer, RemoteCaptioner, RemoteClient, RemoteEmbedder, RemotePolicy};
use videominer::clients::{
    answer_question, caption_event, decide_node, embed, Action, ClientError, DecisionContext, FormatClass,
    PolicyDecisionRequest,
};
use videominer::segmentation::Event;
use videominer::frames::FrameSequence;

fn config(server: &MockServer) -> ClientConfig {
    ClientConfig {
        base_url: server.base_url.clone(),
        model_name: "test-model".into(),
        timeout: 0.3,
        max_retries: 3,
        retry_backoff: 0.01,
        ..ClientConfig::default()
    }
}

fn seq(n: usize) -> FrameSequence {
    FrameSequence::new((0..n).map(|i| solid(i, (i * 10) as u8)).collect(), "v", n).unwrap()
}

#[test]
fn retries_500_then_succeeds() {
    let server = MockServer::start(vec![
        Reply::Json(500, "{}".into()),
        Reply::Json(500, "{}".into()),
        chat_reply("a red car"),
    ]);
    let cap = RemoteCaptioner {
        client: RemoteClient::new(config(&server)),
    };
    let s = seq(4);
    let text = caption_event(&Event::new(1, 4), &s, "q?", &cap).unwrap();
    assert_eq!(text, "a red car");
    assert_eq!(server.count(), 3);
}

#[test]
fn timeouts_exhaust_retries() {
    let server = MockServer::start(vec![Reply::Hang(Duration::from_millis(700))]);
    let mut cfg = config(&server);
    cfg.max_retries = 2;
    let ans = RemoteAnswerer {
        client: RemoteClient::new(cfg),
    };
    let err = answer_question(&["c".to_string()], "q?", &ans).unwrap_err();
    match err {
        ClientError::Service { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![Reply::Json(400, r#"{"error":"bad"}"#.into())]);
    let ans = RemoteAnswerer {
        client: RemoteClient::new(config(&server)),
    };
    assert!(matches!(
        answer_question(&["c".to_string()], "q?", &ans),
        Err(ClientError::Service { attempts: 1, .. })
    ));
    assert_eq!(server.count(), 1);
}

#[test]
fn backoff_is_exponential() {
    let server = MockServer::start(vec![Reply::Json(503, "{}".into())]);
    let mut cfg = config(&server);
    cfg.max_retries = 3;
    cfg.retry_backoff = 0.05;
    let client = RemoteClient::new(cfg);
    let start = Instant::now();
    assert!(client.post("chat/completions", &json!({})).is_err());
    // 0.05 + 0.1 + 0.2
    assert!(start.elapsed() >= Duration::from_millis(350), "{:?}", start.elapsed());
    assert_eq!(server.count(), 4);
}

#[test]
fn caption_request_shape() {
    let server = MockServer::start(vec![chat_reply("cap")]);
    let mut cfg = config(&server);
    cfg.max_caption_frames = 8;
    let cap = RemoteCaptioner {
        client: RemoteClient::new(cfg),
    };
    let s = seq(20);
    caption_event(&Event::new(1, 20), &s, "where is the cat?", &cap).unwrap();
    let req = &server.recorded()[0];
    assert_eq!(req.path, "/v1/chat/completions");
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["model"], "test-model");
    let content = body["messages"][0]["content"].as_array().unwrap();
    assert_eq!(content.len(), 9);
    assert!(content[0]["text"].as_str().unwrap().contains("where is the cat?"));
    assert!(content[1]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
}

#[test]
fn api_key_comes_from_env_only() {
    let server = MockServer::start(vec![chat_reply("B")]);
    let var = "VIDEOMINER_TEST_KEY_HTTP";
    std::env::set_var(var, "s3cret");
    let mut cfg = config(&server);
    cfg.api_key_env = Some(var.into());
    let serialized = serde_json::to_string(&cfg).unwrap();
    assert!(!serialized.contains("s3cret"));
    let ans = RemoteAnswerer {
        client: RemoteClient::new(cfg),
    };
    assert_eq!(answer_question(&["c".to_string()], "q", &ans).unwrap(), "B");
    let req = &server.recorded()[0];
    let auth = req.headers.iter().find(|(k, _)| k == "authorization").map(|(_, v)| v.as_str());
    assert_eq!(auth, Some("Bearer s3cret"));
}

#[test]
fn multi_line_answer_verbatim() {
    let server = MockServer::start(vec![chat_reply("B\nbecause the car is red")]);
    let ans = RemoteAnswerer {
        client: RemoteClient::new(config(&server)),
    };
    let out = answer_question(&["one".to_string(), "two".to_string()], "q", &ans).unwrap();
    assert_eq!(out, "B\nbecause the car is red");
    let body = &server.recorded()[0].body;
    let one = body.find("1. one").unwrap();
    let two = body.find("2. two").unwrap();
    assert!(one < two);
}

#[test]
fn empty_content_is_empty_response() {
    let server = MockServer::start(vec![chat_reply("   ")]);
    let ans = RemoteAnswerer {
        client: RemoteClient::new(config(&server)),
    };
    assert_eq!(
        answer_question(&["c".to_string()], "q", &ans).unwrap_err(),
        ClientError::EmptyResponse
    );
}

#[test]
fn free_prose_policy_is_invalid() {
    let server = MockServer::start(vec![chat_reply("I think this clip looks relevant overall")]);
    let policy = RemotePolicy {
        client: RemoteClient::new(config(&server)),
    };
    let request = PolicyDecisionRequest {
        caption: "a cat".into(),
        question: "q".into(),
        depth: 1,
    };
    let ctx = DecisionContext {
        request: &request,
        max_depth: 4,
        frame_indices: &[0, 1],
        caption_embedding: None,
        question_embedding: None,
    };
    let mut rng = rand::rngs::mock::StepRng::new(0, 1);
    let out = decide_node(&ctx, &policy, &mut rng).unwrap();
    assert_eq!(out.action, Action::Invalid);
    assert_eq!(out.format, FormatClass::None);
    assert_eq!(out.action_logprob, None);
    let body = &server.recorded()[0].body;
    assert!(body.contains("a cat"));
}

#[test]
fn embeddings_batch_and_mismatch() {
    let ok = json!({"data": [{"index": 1, "embedding": [0.0, 2.0]}, {"index": 0, "embedding": [3.0, 0.0]}]});
    let server = MockServer::start(vec![Reply::Json(200, ok.to_string())]);
    let emb = RemoteEmbedder {
        client: RemoteClient::new(config(&server)),
    };
    let out = embed(&["a".to_string(), "b".to_string()], &emb).unwrap();
    assert_eq!(out[0].values(), &[1.0, 0.0]);
    assert_eq!(out[1].values(), &[0.0, 1.0]);
    let body: serde_json::Value = serde_json::from_str(&server.recorded()[0].body).unwrap();
    assert_eq!(body["input"], json!(["a", "b"]));
    assert_eq!(server.recorded()[0].path, "/v1/embeddings");

    let bad = json!({"data": [{"embedding": [1.0, 0.0]}, {"embedding": [1.0, 0.0, 0.0]}]});
    let server = MockServer::start(vec![Reply::Json(200, bad.to_string())]);
    let emb = RemoteEmbedder {
        client: RemoteClient::new(config(&server)),
    };
    assert!(matches!(
        embed(&["a".to_string(), "b".to_string()], &emb),
        Err(ClientError::DimensionMismatch { index: 1, .. })
    ));
}
