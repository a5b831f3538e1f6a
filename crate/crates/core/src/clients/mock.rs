//! Deterministic stand-ins for the model roles. All of them are pure
//! functions of their inputs (the recording answerer additionally keeps a
//! log of calls for assertions).

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rand::RngCore;

use super::{Answerer, Captioner, ClientError, DecisionContext, Embedder, NodeOutput, Policy};
use crate::clustering::CaptionEmbedding;
use crate::frames::Frame;

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of character n-grams into a fixed-size vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub ngram: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64, ngram: 3 }
    }
}

impl HashEmbedder {
    pub fn embed_one(&self, text: &str) -> CaptionEmbedding {
        let padded: Vec<char> = format!(" {} ", text.to_lowercase()).chars().collect();
        let mut v = vec![0.0; self.dim];
        let mut seen = false;
        for gram in padded.windows(self.ngram) {
            let s: String = gram.iter().collect();
            let h = fnv1a(s.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
            seen = true;
        }
        if !seen || v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        CaptionEmbedding::normalized(v)
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<CaptionEmbedding>, ClientError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Captions looked up by the (first, last) original frame index of an event.
#[derive(Debug, Clone, Default)]
pub struct TableCaptioner {
    table: BTreeMap<(usize, usize), String>,
    fallback: String,
}

impl TableCaptioner {
    pub fn new(entries: impl IntoIterator<Item = ((usize, usize), String)>, fallback: impl Into<String>) -> Self {
        Self {
            table: entries.into_iter().collect(),
            fallback: fallback.into(),
        }
    }
}

impl Captioner for TableCaptioner {
    fn caption(&self, frames: &[Frame], _question: &str) -> Result<String, ClientError> {
        let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
            return Err(ClientError::Precondition("event has no frames".into()));
        };
        Ok(self
            .table
            .get(&(first.index(), last.index()))
            .cloned()
            .unwrap_or_else(|| self.fallback.clone()))
    }
}

/// Describes an event from its brightness, for running the pipeline on real
/// frames without a vision model.
#[derive(Debug, Clone, Copy, Default)]
pub struct StatsCaptioner;

impl Captioner for StatsCaptioner {
    fn caption(&self, frames: &[Frame], _question: &str) -> Result<String, ClientError> {
        if frames.is_empty() {
            return Err(ClientError::Precondition("event has no frames".into()));
        }
        let mean = frames.iter().map(Frame::mean_intensity).sum::<f64>() / frames.len() as f64;
        let tone = match mean as u32 {
            0..=42 => "very dark",
            43..=95 => "dark",
            96..=159 => "medium",
            160..=212 => "bright",
            _ => "very bright",
        };
        Ok(format!("a {tone} scene lasting {} frames", frames.len()))
    }
}

type PolicyFn = dyn Fn(&DecisionContext<'_>) -> String + Send + Sync;

/// Policy returning scripted text chosen by a closure over the context.
#[derive(Clone)]
pub struct ScriptedPolicy {
    script: Arc<PolicyFn>,
}

impl ScriptedPolicy {
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::from_fn(move |_| text.clone())
    }

    pub fn from_fn(f: impl Fn(&DecisionContext<'_>) -> String + Send + Sync + 'static) -> Self {
        Self { script: Arc::new(f) }
    }

    /// Canonical well-formed response for `action`.
    pub fn action(action: super::Action) -> Self {
        Self::constant(super::parse::render("scripted", action))
    }
}

impl std::fmt::Debug for ScriptedPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ScriptedPolicy")
    }
}

impl Policy for ScriptedPolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Result<NodeOutput, ClientError> {
        Ok(NodeOutput::from_text((self.script)(ctx), None))
    }
}

/// Returns a fixed answer and records the captions of every call.
#[derive(Debug, Default)]
pub struct ScriptedAnswerer {
    reply: String,
    calls: Mutex<Vec<Vec<String>>>,
}

impl ScriptedAnswerer {
    pub fn new(reply: impl Into<String>) -> Self {
        Self {
            reply: reply.into(),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<Vec<String>> {
        self.calls.lock().map(|c| c.clone()).unwrap_or_default()
    }
}

impl Answerer for ScriptedAnswerer {
    fn answer(&self, captions: &[String], _question: &str) -> Result<String, ClientError> {
        if let Ok(mut calls) = self.calls.lock() {
            calls.push(captions.to_vec());
        }
        Ok(self.reply.clone())
    }
}

/// Always fails; stands in for an unreachable service.
#[derive(Debug, Clone, Default)]
pub struct FailingClient {
    pub message: String,
}

impl Captioner for FailingClient {
    fn caption(&self, _frames: &[Frame], _question: &str) -> Result<String, ClientError> {
        Err(ClientError::service(self.message.clone()))
    }
}

impl Policy for FailingClient {
    fn decide(&self, _ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Result<NodeOutput, ClientError> {
        Err(ClientError::service(self.message.clone()))
    }
}

impl Answerer for FailingClient {
    fn answer(&self, _captions: &[String], _question: &str) -> Result<String, ClientError> {
        Err(ClientError::service(self.message.clone()))
    }
}
