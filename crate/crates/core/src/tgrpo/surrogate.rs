//! Linear softmax policy over hand-built node features. Small enough that
//! the training objective and its gradient can be checked exactly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clients::parse::render;
use crate::clients::{Action, ClientError, DecisionContext, NodeOutput, Policy};
use crate::clustering::CaptionEmbedding;

pub const NUM_FEATURES: usize = 4;
pub const NUM_ACTIONS: usize = 3;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["question_cosine", "relative_depth", "log_frames", "bias"];

pub type Features = [f64; NUM_FEATURES];

/// `[cos(caption, question), depth / max_depth, ln(1 + frames), 1]`.
pub fn feature_vector(cosine: f64, depth: usize, max_depth: usize, frames: usize) -> Features {
    let rel_depth = if max_depth == 0 {
        0.0
    } else {
        depth as f64 / max_depth as f64
    };
    [cosine, rel_depth, (1.0 + frames as f64).ln(), 1.0]
}

pub fn context_features(ctx: &DecisionContext<'_>) -> Option<Features> {
    let caption = ctx.caption_embedding?;
    let question = ctx.question_embedding?;
    if ctx.frame_indices.is_empty() {
        return None;
    }
    Some(feature_vector(
        caption.cosine(question),
        ctx.request.depth,
        ctx.max_depth,
        ctx.frame_indices.len(),
    ))
}

pub fn embedding_features(
    caption: &CaptionEmbedding,
    question: &CaptionEmbedding,
    depth: usize,
    max_depth: usize,
    frames: usize,
) -> Features {
    feature_vector(caption.cosine(question), depth, max_depth, frames)
}

pub fn softmax(logits: &[f64; NUM_ACTIONS]) -> [f64; NUM_ACTIONS] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_ACTIONS];
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Index of the first action whose cumulative probability exceeds `u`.
pub fn sample_index(probs: &[f64; NUM_ACTIONS], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    NUM_ACTIONS - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePolicy {
    /// `weights[f][a]`: contribution of feature `f` to the logit of action `a`
    /// (actions ordered accept, continue, delete).
    pub weights: [[f64; NUM_ACTIONS]; NUM_FEATURES],
}

impl Default for SurrogatePolicy {
    fn default() -> Self {
        Self::zeros()
    }
}

impl SurrogatePolicy {
    /// Uniform policy.
    pub fn zeros() -> Self {
        Self {
            weights: [[0.0; NUM_ACTIONS]; NUM_FEATURES],
        }
    }

    /// Weights drawn uniformly from `[-scale, scale]`.
    pub fn random(scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros();
        for row in &mut p.weights {
            for w in row.iter_mut() {
                *w = if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 };
            }
        }
        p
    }

    pub fn from_flat(flat: &[f64]) -> Option<Self> {
        if flat.len() != NUM_FEATURES * NUM_ACTIONS {
            return None;
        }
        let mut p = Self::zeros();
        for (i, w) in flat.iter().enumerate() {
            p.weights[i / NUM_ACTIONS][i % NUM_ACTIONS] = *w;
        }
        Some(p)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|w| w.is_finite())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.flat()
            .iter()
            .zip(other.flat())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn logits(&self, x: &Features) -> [f64; NUM_ACTIONS] {
        let mut out = [0.0; NUM_ACTIONS];
        for (xf, row) in x.iter().zip(&self.weights) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xf * w;
            }
        }
        out
    }

    pub fn probs(&self, x: &Features) -> [f64; NUM_ACTIONS] {
        softmax(&self.logits(x))
    }

    pub fn log_prob(&self, x: &Features, action: usize) -> f64 {
        let logits = self.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits[action] - lse
    }

    /// Gradient of `log_prob(x, action)` with respect to the weights:
    /// `x_f * (1[a = action] - p_a)`.
    pub fn log_prob_grad(&self, x: &Features, action: usize) -> [[f64; NUM_ACTIONS]; NUM_FEATURES] {
        let p = self.probs(x);
        let mut g = [[0.0; NUM_ACTIONS]; NUM_FEATURES];
        for (f, row) in g.iter_mut().enumerate() {
            for (a, cell) in row.iter_mut().enumerate() {
                let indicator = if a == action { 1.0 } else { 0.0 };
                *cell = x[f] * (indicator - p[a]);
            }
        }
        g
    }

    fn emit(&self, x: &Features, index: usize, ctx: &DecisionContext<'_>) -> NodeOutput {
        let action = Action::DECISIONS[index];
        let think = format!(
            "relevance {:.3} at depth {} over {} frames",
            x[0],
            ctx.request.depth,
            ctx.frame_indices.len()
        );
        NodeOutput::from_text(render(&think, action), Some(self.log_prob(x, index)))
    }
}

fn missing_features() -> ClientError {
    ClientError::Precondition("surrogate policy needs caption and question embeddings and a nonempty node".into())
}

impl Policy for SurrogatePolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut dyn RngCore) -> Result<NodeOutput, ClientError> {
        let x = context_features(ctx).ok_or_else(missing_features)?;
        let u: f64 = rng.gen();
        let index = sample_index(&self.probs(&x), u);
        Ok(self.emit(&x, index, ctx))
    }
}

/// Decodes a surrogate policy by taking its most likely action.
#[derive(Debug, Clone, Copy)]
pub struct Greedy<'a>(pub &'a SurrogatePolicy);

impl Policy for Greedy<'_> {
    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Result<NodeOutput, ClientError> {
        let x = context_features(ctx).ok_or_else(missing_features)?;
        let p = self.0.probs(&x);
        let index = (0..NUM_ACTIONS)
            .max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        Ok(self.0.emit(&x, index, ctx))
    }
}
