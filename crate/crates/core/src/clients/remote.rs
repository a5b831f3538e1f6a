//! HTTP clients speaking the chat-completions / embeddings JSON protocol.

use std::io::Cursor;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Answerer, Captioner, ClientError, DecisionContext, Embedder, NodeOutput, Policy};
use crate::clustering::CaptionEmbedding;
use crate::frames::{uniform_positions, Frame};

pub const CAPTION_TEMPLATE: &str = include_str!("../../assets/prompts/caption.txt");
pub const DECIDE_TEMPLATE: &str = include_str!("../../assets/prompts/decide.txt");
pub const ANSWER_TEMPLATE: &str = include_str!("../../assets/prompts/answer.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    pub max_retries: u32,
    /// Base of the exponential backoff, in seconds.
    pub retry_backoff: f64,
    pub max_in_flight: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_caption_frames: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model_name: "default".into(),
            api_key_env: None,
            timeout: 60.0,
            max_retries: 3,
            retry_backoff: 1.0,
            max_in_flight: 4,
            temperature: 0.0,
            max_tokens: 512,
            max_caption_frames: 8,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout > 0.0) {
            return Err("timeout".into());
        }
        if !(self.retry_backoff >= 0.0) {
            return Err("retry_backoff".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight".into());
        }
        if self.max_caption_frames == 0 {
            return Err("max_caption_frames".into());
        }
        Ok(())
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

enum Failure {
    Retry(String),
    Fatal(String),
}

/// Shared HTTP transport with retries and a concurrency cap.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    cfg: ClientConfig,
    agent: ureq::Agent,
    gate: Arc<Gate>,
}

impl RemoteClient {
    pub fn new(cfg: ClientConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .build();
        let gate = Arc::new(Gate::new(cfg.max_in_flight));
        Self { cfg, agent, gate }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut req = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(var) = &self.cfg.api_key_env {
            if let Ok(key) = std::env::var(var) {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| Failure::Retry(format!("invalid response body: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {}", text.chars().take(200).collect::<String>());
                if code == 429 || code >= 500 {
                    Err(Failure::Retry(msg))
                } else {
                    Err(Failure::Fatal(msg))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Failure::Retry(format!("transport: {t}"))),
        }
    }

    /// POSTs `body` to `path`, retrying transport failures, 429 and 5xx up
    /// to `max_retries` times with exponential backoff.
    pub fn post(&self, path: &str, body: &Value) -> Result<Value, ClientError> {
        let url = self.url(path);
        let _permit = self.gate.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(message)) => {
                    return Err(ClientError::Service {
                        message,
                        attempts,
                        index: None,
                    })
                }
                Err(Failure::Retry(message)) => {
                    if attempts > self.cfg.max_retries {
                        return Err(ClientError::Service {
                            message,
                            attempts,
                            index: None,
                        });
                    }
                    log::warn!("{path}: attempt {attempts} failed ({message}), retrying");
                    let wait = self.cfg.retry_backoff * f64::powi(2.0, attempts as i32 - 1);
                    std::thread::sleep(Duration::from_secs_f64(wait));
                }
            }
        }
    }

    /// Single chat request; returns the first choice's message content.
    pub fn chat(&self, content: Vec<Value>) -> Result<String, ClientError> {
        let body = json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let resp = self.post("chat/completions", &body)?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or(ClientError::EmptyResponse)?;
        if text.trim().is_empty() {
            return Err(ClientError::EmptyResponse);
        }
        Ok(text.to_string())
    }

    pub fn embeddings(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        let body = json!({"model": self.cfg.model_name, "input": texts});
        let resp = self.post("embeddings", &body)?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::service("embeddings response has no data array"))?;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vec = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| ClientError::Service {
                    message: "missing embedding".into(),
                    attempts: 1,
                    index: Some(pos),
                })?
                .iter()
                .map(|x| x.as_f64().unwrap_or(f64::NAN))
                .collect::<Vec<f64>>();
            if vec.iter().any(|x| !x.is_finite()) {
                return Err(ClientError::Service {
                    message: "non-numeric embedding entry".into(),
                    attempts: 1,
                    index: Some(pos),
                });
            }
            rows.push((index, vec));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}

pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

/// PNG data URL for one grayscale frame.
pub fn frame_data_url(frame: &Frame) -> Result<String, ClientError> {
    let img = image::GrayImage::from_raw(frame.width(), frame.height(), frame.pixels().to_vec())
        .ok_or_else(|| ClientError::Precondition("frame buffer size mismatch".into()))?;
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageOutputFormat::Png)
        .map_err(|e| ClientError::Precondition(format!("png encoding failed: {e}")))?;
    let b64 = base64::engine::general_purpose::STANDARD.encode(buf.into_inner());
    Ok(format!("data:image/png;base64,{b64}"))
}

#[derive(Debug, Clone)]
pub struct RemoteCaptioner {
    pub client: RemoteClient,
}

impl Captioner for RemoteCaptioner {
    fn caption(&self, frames: &[Frame], question: &str) -> Result<String, ClientError> {
        if frames.is_empty() {
            return Err(ClientError::Precondition("event has no frames".into()));
        }
        let picks = uniform_positions(frames.len(), self.client.cfg.max_caption_frames);
        let prompt = fill(
            CAPTION_TEMPLATE,
            &[("question", question), ("frame_count", &picks.len().to_string())],
        );
        let mut content = vec![json!({"type": "text", "text": prompt})];
        for p in picks {
            content.push(json!({"type": "image_url", "image_url": {"url": frame_data_url(&frames[p])?}}));
        }
        self.client.chat(content)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub client: RemoteClient,
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<CaptionEmbedding>, ClientError> {
        let rows = self.client.embeddings(texts)?;
        let out: Vec<CaptionEmbedding> = rows.into_iter().map(CaptionEmbedding::normalized).collect();
        super::check_dimensions(&out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct RemotePolicy {
    pub client: RemoteClient,
}

impl Policy for RemotePolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Result<NodeOutput, ClientError> {
        let req = ctx.request;
        let prompt = fill(
            DECIDE_TEMPLATE,
            &[
                ("question", &req.question),
                ("depth", &req.depth.to_string()),
                ("caption", &req.caption),
            ],
        );
        let text = self.client.chat(vec![json!({"type": "text", "text": prompt})])?;
        Ok(NodeOutput::from_text(text, None))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteAnswerer {
    pub client: RemoteClient,
}

impl Answerer for RemoteAnswerer {
    fn answer(&self, captions: &[String], question: &str) -> Result<String, ClientError> {
        let listing = captions
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {c}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = fill(ANSWER_TEMPLATE, &[("captions", &listing), ("question", question)]);
        self.client.chat(vec![json!({"type": "text", "text": prompt})])
    }
}
