//! Model-role interfaces (captioner, embedder, policy, answerer), their
//! mock and remote implementations, and the policy-output parser.

pub mod mock;
pub mod parse;
pub mod remote;

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::CaptionEmbedding;
use crate::frames::{Frame, FrameSequence};
use crate::segmentation::Event;

pub use parse::{parse_node_output, ParsedOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("service error after {attempts} attempt(s): {message}")]
    Service {
        message: String,
        attempts: u32,
        index: Option<usize>,
    },
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error("embedding dimension mismatch at item {index}: expected {expected}, got {found}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl ClientError {
    pub fn service(message: impl Into<String>) -> Self {
        Self::Service {
            message: message.into(),
            attempts: 1,
            index: None,
        }
    }

    /// Position of the offending input item, when known.
    pub fn index(&self) -> Option<usize> {
        match self {
            Self::Service { index, .. } => *index,
            Self::DimensionMismatch { index, .. } => Some(*index),
            _ => None,
        }
    }
}

/// How closely a policy response follows the `<think>..</think><answer>..</answer>` format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatClass {
    Max,
    Corr,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept,
    Continue,
    Delete,
    Invalid,
}

impl Action {
    /// The three decisions a policy can emit, in logit order.
    pub const DECISIONS: [Action; 3] = [Action::Accept, Action::Continue, Action::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Accept => "accept",
            Self::Continue => "continue",
            Self::Delete => "delete",
            Self::Invalid => "invalid",
        }
    }

    pub fn parse(word: &str) -> Option<Self> {
        match word.trim().to_ascii_lowercase().as_str() {
            "accept" => Some(Self::Accept),
            "continue" => Some(Self::Continue),
            "delete" => Some(Self::Delete),
            _ => None,
        }
    }

    /// Position in [`Action::DECISIONS`]; `None` for `Invalid`.
    pub fn decision_index(self) -> Option<usize> {
        Self::DECISIONS.iter().position(|&a| a == self)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One parsed policy emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOutput {
    pub raw_text: String,
    pub format: FormatClass,
    /// Whitespace-delimited token count of `raw_text`.
    pub length: usize,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_logprob: Option<f64>,
}

impl NodeOutput {
    pub fn from_text(raw_text: impl Into<String>, action_logprob: Option<f64>) -> Self {
        let raw_text = raw_text.into();
        let parsed = parse_node_output(&raw_text);
        Self {
            raw_text,
            format: parsed.format,
            length: parsed.length,
            action: parsed.action,
            action_logprob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecisionRequest {
    pub caption: String,
    pub question: String,
    pub depth: usize,
}

/// Everything a policy may look at when judging one node. Remote policies
/// only use `request`; local policies may also read the node geometry and
/// embeddings.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub request: &'a PolicyDecisionRequest,
    pub max_depth: usize,
    /// Original temporal indices of the node's frames.
    pub frame_indices: &'a [usize],
    pub caption_embedding: Option<&'a CaptionEmbedding>,
    pub question_embedding: Option<&'a CaptionEmbedding>,
}

pub trait Captioner: Send + Sync {
    fn caption(&self, frames: &[Frame], question: &str) -> Result<String, ClientError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<CaptionEmbedding>, ClientError>;
}

pub trait Policy: Send + Sync {
    /// Produces the raw decision for one node. Stochastic policies draw from
    /// `rng`; deterministic ones ignore it.
    fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut dyn RngCore) -> Result<NodeOutput, ClientError>;
}

pub trait Answerer: Send + Sync {
    fn answer(&self, captions: &[String], question: &str) -> Result<String, ClientError>;
}

/// Borrowed bundle of the four model roles used by the tree builder.
#[derive(Clone, Copy)]
pub struct Clients<'a> {
    pub captioner: &'a dyn Captioner,
    pub embedder: &'a dyn Embedder,
    pub policy: &'a dyn Policy,
    pub answerer: &'a dyn Answerer,
}

pub fn caption_event<C: Captioner + ?Sized>(
    event: &Event,
    seq: &FrameSequence,
    question: &str,
    client: &C,
) -> Result<String, ClientError> {
    if event.start < 1 || event.end > seq.len() || event.start > event.end {
        return Err(ClientError::Precondition(format!(
            "event {}..={} outside sequence of {} frames",
            event.start,
            event.end,
            seq.len()
        )));
    }
    let text = client.caption(event.frames(seq), question)?;
    if text.trim().is_empty() {
        return Err(ClientError::EmptyResponse);
    }
    Ok(text)
}

pub fn decide_node<P: Policy + ?Sized>(
    ctx: &DecisionContext<'_>,
    client: &P,
    rng: &mut dyn RngCore,
) -> Result<NodeOutput, ClientError> {
    client.decide(ctx, rng)
}

pub fn answer_question<A: Answerer + ?Sized>(
    keyframe_captions: &[String],
    question: &str,
    client: &A,
) -> Result<String, ClientError> {
    if keyframe_captions.is_empty() {
        return Err(ClientError::Precondition("answer stage needs at least one caption".into()));
    }
    let text = client.answer(keyframe_captions, question)?;
    if text.trim().is_empty() {
        return Err(ClientError::EmptyResponse);
    }
    Ok(text)
}

pub fn embed<E: Embedder + ?Sized>(texts: &[String], client: &E) -> Result<Vec<CaptionEmbedding>, ClientError> {
    if texts.is_empty() {
        return Err(ClientError::Precondition("nothing to embed".into()));
    }
    let out = client.embed(texts)?;
    if out.len() != texts.len() {
        return Err(ClientError::service(format!(
            "embedder returned {} vectors for {} inputs",
            out.len(),
            texts.len()
        )));
    }
    check_dimensions(&out)?;
    Ok(out)
}

pub(crate) fn check_dimensions(vectors: &[CaptionEmbedding]) -> Result<(), ClientError> {
    let Some(first) = vectors.first() else {
        return Ok(());
    };
    for (index, v) in vectors.iter().enumerate() {
        if v.dim() != first.dim() {
            return Err(ClientError::DimensionMismatch {
                index,
                expected: first.dim(),
                found: v.dim(),
            });
        }
    }
    Ok(())
}
