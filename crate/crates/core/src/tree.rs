//! Coarse-to-fine exploration tree.
//!
//! The root covers the whole sampled sequence. Every expansion segments the
//! node's frames into events, captions each event, clusters the captions and
//! turns each cluster into a child node. Children are judged by the policy in
//! breadth-first order: `accept` keeps the node's frames as key frames,
//! `delete` prunes it and `continue` expands it one level further.

use std::collections::{BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{
    answer_question, embed, Action, Answerer, ClientError, Clients, DecisionContext, NodeOutput,
    PolicyDecisionRequest,
};
use crate::clustering::{dbscan, group_events, CaptionEmbedding, ClusterConfig, ClusterError};
use crate::frames::{uniform_positions, Frame, FrameSequence};
use crate::segmentation::{histograms, segment_histograms, Event, GrayHistogram, SegmentationConfig, SegmentationError};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("no accepted nodes: nothing to use as key frames")]
    NoKeyframes,
    #[error("node {0} cannot be split further")]
    ExpansionDegenerate(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("model service failed: {source}")]
    Service {
        #[source]
        source: ClientError,
        /// Tree state at the time of failure, kept for diagnosis.
        partial: Option<Box<VideoTree>>,
    },
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

impl From<ClientError> for TreeError {
    fn from(source: ClientError) -> Self {
        Self::Service { source, partial: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Pending,
    Accept,
    Continue,
    Delete,
}

/// Why a node's final state differs from what the policy asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coercion {
    /// `continue` at the depth limit became `accept`.
    DepthLimit,
    /// `continue` on a node that cannot be split became `accept`.
    Degenerate,
    /// The node budget ran out before or during this node's expansion.
    BudgetTruncated,
    /// Unparseable policy output became `delete`.
    InvalidAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub state: NodeState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<Coercion>,
    /// Temporally sorted events; positions refer to the tree's sequence.
    pub events: Vec<Event>,
    pub caption: String,
    #[serde(default)]
    pub children: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<NodeOutput>,
    #[serde(skip)]
    pub embedding: Option<CaptionEmbedding>,
}

impl TreeNode {
    /// 0-based positions of every frame in the node, in temporal order.
    pub fn positions(&self) -> Vec<usize> {
        self.events.iter().flat_map(Event::positions).collect()
    }

    pub fn frame_count(&self) -> usize {
        self.events.iter().map(Event::len).sum()
    }

    pub fn first_position(&self) -> usize {
        self.events.first().map_or(usize::MAX, |e| e.start)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeFlags {
    pub budget_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTree {
    pub question: String,
    /// Original frame index for each position of the explored sequence.
    pub frame_indices: Vec<usize>,
    pub root: usize,
    pub nodes: Vec<TreeNode>,
    #[serde(default)]
    pub keyframes: Vec<usize>,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub flags: TreeFlags,
}

impl VideoTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes the policy actually judged, in decision order.
    pub fn decided_nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.output.is_some())
    }

    pub fn accepted(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.state == NodeState::Accept)
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafContinuePolicy {
    #[default]
    CoerceAccept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    pub max_depth: usize,
    pub max_total_nodes: usize,
    /// Scene count for the first pass; `None` derives it from `target_event_len`.
    pub k_scenes_root: Option<usize>,
    pub target_event_len: usize,
    pub max_keyframes: usize,
    pub leaf_continue_policy: LeafContinuePolicy,
    /// Character budget for a node caption built from its events.
    pub caption_char_budget: usize,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            max_total_nodes: 256,
            k_scenes_root: None,
            target_event_len: 8,
            max_keyframes: 32,
            leaf_continue_policy: LeafContinuePolicy::CoerceAccept,
            caption_char_budget: 2000,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_depth < 1 {
            return Err("max_depth".into());
        }
        if self.max_total_nodes < 2 {
            return Err("max_total_nodes".into());
        }
        if self.k_scenes_root == Some(0) {
            return Err("k_scenes_root".into());
        }
        if self.target_event_len < 1 {
            return Err("target_event_len".into());
        }
        if self.max_keyframes < 1 {
            return Err("max_keyframes".into());
        }
        if self.caption_char_budget < 1 {
            return Err("caption_char_budget".into());
        }
        Ok(())
    }
}

/// Configuration consumed by tree construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeSettings {
    pub segmentation: SegmentationConfig,
    pub clustering: ClusterConfig,
    pub exploration: ExplorationConfig,
}

/// Joins distinct event captions in temporal order, truncated to `budget` chars.
pub fn node_caption(events: &[Event], budget: usize) -> String {
    let mut seen = BTreeSet::new();
    let mut parts = Vec::new();
    for e in events {
        if let Some(c) = &e.caption {
            if seen.insert(c.as_str()) {
                parts.push(c.as_str());
            }
        }
    }
    let joined = parts.join("; ");
    match joined.char_indices().nth(budget) {
        Some((cut, _)) => joined[..cut].to_string(),
        None => joined,
    }
}

/// Splits sorted global positions into maximal contiguous events (1-based).
fn runs(positions: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &p in positions {
        match out.last_mut() {
            Some((_, end)) if *end + 1 == p + 1 => *end = p + 1,
            _ => out.push((p + 1, p + 1)),
        }
    }
    out
}

/// Shared read-only state for one tree construction.
struct Explorer<'a> {
    seq: &'a FrameSequence,
    hists: Vec<GrayHistogram>,
    question: &'a str,
    clients: Clients<'a>,
    settings: &'a TreeSettings,
}

/// Child produced by an expansion, before it receives an id.
struct ChildSpec {
    events: Vec<Event>,
    caption: String,
    embedding: CaptionEmbedding,
}

impl<'a> Explorer<'a> {
    fn caption_frames(&self, positions: &[usize]) -> Result<String, ClientError> {
        let frames: Vec<Frame> = positions.iter().map(|&p| self.seq.frames()[p].clone()).collect();
        let text = self.clients.captioner.caption(&frames, self.question)?;
        if text.trim().is_empty() {
            return Err(ClientError::EmptyResponse);
        }
        Ok(text)
    }

    /// Segment, caption and cluster the frames at `positions`.
    /// `k` overrides the derived scene count.
    fn expand(&self, node_id: usize, positions: &[usize], k: Option<usize>, allow_single: bool) -> Result<Vec<ChildSpec>, TreeError> {
        let cfg = &self.settings.exploration;
        let local: Vec<GrayHistogram> = positions.iter().map(|&p| self.hists[p].clone()).collect();
        let k = k.unwrap_or_else(|| positions.len().div_ceil(cfg.target_event_len)).max(1);
        let seg_cfg = SegmentationConfig {
            k_scenes: k,
            ..self.settings.segmentation
        };
        let seg = segment_histograms(&local, &seg_cfg)?;
        let flat = seg.distances.iter().all(|&d| d == 0.0);
        if (seg.events.len() == 1 || flat) && !allow_single {
            return Err(TreeError::ExpansionDegenerate(node_id));
        }

        let captions: Vec<String> = seg
            .events
            .par_iter()
            .map(|e| self.caption_frames(&positions[e.positions()]))
            .collect::<Result<_, _>>()?;
        let embeddings = embed(&captions, self.clients.embedder)?;
        let assignment = dbscan(&embeddings, &self.settings.clustering)?;

        let local_events: Vec<Event> = seg
            .events
            .iter()
            .zip(captions.iter().zip(&embeddings))
            .map(|(e, (c, v))| Event {
                caption: Some(c.clone()),
                embedding: Some(v.clone()),
                ..e.clone()
            })
            .collect();
        let groups = group_events(&local_events, &assignment)?;

        let mut children = Vec::with_capacity(groups.len());
        for group in groups {
            let mut events = Vec::new();
            for e in &group.events {
                for (start, end) in runs(&positions[e.positions()]) {
                    events.push(Event {
                        start,
                        end,
                        caption: e.caption.clone(),
                        embedding: e.embedding.clone(),
                    });
                }
            }
            events.sort_by_key(|e| e.start);
            let caption = node_caption(&events, cfg.caption_char_budget);
            children.push((events, caption));
        }
        let child_captions: Vec<String> = children.iter().map(|(_, c)| c.clone()).collect();
        let child_embeddings = embed(&child_captions, self.clients.embedder)?;
        Ok(children
            .into_iter()
            .zip(child_embeddings)
            .map(|((events, caption), embedding)| ChildSpec {
                events,
                caption,
                embedding,
            })
            .collect())
    }
}

fn child_node(spec: ChildSpec, id: usize, parent: &TreeNode) -> TreeNode {
    TreeNode {
        id,
        depth: parent.depth + 1,
        parent: Some(parent.id),
        state: NodeState::Pending,
        flag: None,
        events: spec.events,
        caption: spec.caption,
        children: Vec::new(),
        output: None,
        embedding: Some(spec.embedding),
    }
}

/// Expands one node into pending children (ids are provisional, numbered
/// from `node.id + 1`). The node must be in the `continue` state and hold at
/// least two frames.
pub fn expand_node(
    node: &TreeNode,
    seq: &FrameSequence,
    question: &str,
    clients: Clients<'_>,
    settings: &TreeSettings,
) -> Result<Vec<TreeNode>, TreeError> {
    if node.state != NodeState::Continue {
        return Err(TreeError::Precondition(format!("node {} is not in the continue state", node.id)));
    }
    let positions = node.positions();
    if positions.len() < 2 {
        return Err(TreeError::Precondition(format!("node {} has fewer than 2 frames", node.id)));
    }
    if positions.iter().any(|&p| p >= seq.len()) {
        return Err(TreeError::Precondition(format!("node {} refers to frames outside the sequence", node.id)));
    }
    let explorer = Explorer {
        seq,
        hists: histograms(seq),
        question,
        clients,
        settings,
    };
    let specs = explorer.expand(node.id, &positions, None, false)?;
    Ok(specs
        .into_iter()
        .enumerate()
        .map(|(i, s)| child_node(s, node.id + 1 + i, node))
        .collect())
}

/// Builds and explores the tree. Decisions are sampled from a generator
/// seeded with `seed`, in breadth-first order.
pub fn build_tree(
    seq: &FrameSequence,
    question: &str,
    clients: Clients<'_>,
    settings: &TreeSettings,
    seed: u64,
) -> Result<VideoTree, TreeError> {
    if seq.is_empty() {
        return Err(TreeError::Precondition("empty frame sequence".into()));
    }
    let cfg = &settings.exploration;
    cfg.validate()
        .map_err(|f| TreeError::Precondition(format!("invalid exploration.{f}")))?;
    let explorer = Explorer {
        seq,
        hists: histograms(seq),
        question,
        clients,
        settings,
    };
    let mut tree = VideoTree {
        question: question.to_string(),
        frame_indices: seq.indices(),
        root: 0,
        nodes: Vec::new(),
        keyframes: Vec::new(),
        answer: None,
        flags: TreeFlags::default(),
    };

    let question_embedding = embed(&[question.to_string()], clients.embedder)?
        .pop()
        .ok_or(ClientError::EmptyResponse)?;

    let all: Vec<usize> = (0..seq.len()).collect();
    let k_root = cfg
        .k_scenes_root
        .unwrap_or_else(|| seq.len().div_ceil(cfg.target_event_len));
    let mut first_level = explorer.expand(0, &all, Some(k_root), true)?;
    // The root plus its children must fit in the budget; overflow groups are
    // folded into the last admitted child so no frames are lost.
    if first_level.len() + 1 > cfg.max_total_nodes {
        let overflow = first_level.split_off(cfg.max_total_nodes - 1);
        let last = first_level.last_mut().expect("budget admits at least one child");
        for spec in overflow {
            last.events.extend(spec.events);
        }
        last.events.sort_by_key(|e| e.start);
        last.caption = node_caption(&last.events, cfg.caption_char_budget);
        tree.flags.budget_truncated = true;
    }
    let root_events: Vec<Event> = {
        let mut ev: Vec<Event> = first_level.iter().flat_map(|c| c.events.clone()).collect();
        ev.sort_by_key(|e| e.start);
        ev
    };
    let root = TreeNode {
        id: 0,
        depth: 0,
        parent: None,
        state: NodeState::Continue,
        flag: None,
        caption: node_caption(&root_events, cfg.caption_char_budget),
        events: root_events,
        children: Vec::new(),
        output: None,
        embedding: None,
    };
    tree.nodes.push(root);
    let mut queue = VecDeque::new();
    attach_children(&mut tree, 0, first_level, &mut queue);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while let Some(id) = queue.pop_front() {
        if tree.nodes.len() >= cfg.max_total_nodes {
            truncate_pending(&mut tree, id, &mut queue);
            break;
        }
        let node = &tree.nodes[id];
        let positions = node.positions();
        let frame_indices: Vec<usize> = positions.iter().map(|&p| tree.frame_indices[p]).collect();
        let request = PolicyDecisionRequest {
            caption: node.caption.clone(),
            question: question.to_string(),
            depth: node.depth,
        };
        let ctx = DecisionContext {
            request: &request,
            max_depth: cfg.max_depth,
            frame_indices: &frame_indices,
            caption_embedding: node.embedding.as_ref(),
            question_embedding: Some(&question_embedding),
        };
        let output = match clients.policy.decide(&ctx, &mut rng) {
            Ok(o) => o,
            Err(source) => {
                return Err(TreeError::Service {
                    source,
                    partial: Some(Box::new(tree)),
                })
            }
        };
        let action = output.action;
        let depth = node.depth;
        tree.nodes[id].output = Some(output);

        let (state, flag) = match action {
            Action::Accept => (NodeState::Accept, None),
            Action::Delete => (NodeState::Delete, None),
            Action::Invalid => (NodeState::Delete, Some(Coercion::InvalidAction)),
            Action::Continue if depth >= cfg.max_depth => (NodeState::Accept, Some(Coercion::DepthLimit)),
            Action::Continue if positions.len() < 2 => (NodeState::Accept, Some(Coercion::Degenerate)),
            Action::Continue => match explorer.expand(id, &positions, None, false) {
                Err(TreeError::ExpansionDegenerate(_)) => (NodeState::Accept, Some(Coercion::Degenerate)),
                Err(TreeError::Service { source, .. }) => {
                    tree.nodes[id].state = NodeState::Continue;
                    return Err(TreeError::Service {
                        source,
                        partial: Some(Box::new(tree)),
                    });
                }
                Err(e) => return Err(e),
                Ok(children) if tree.nodes.len() + children.len() > cfg.max_total_nodes => {
                    tree.flags.budget_truncated = true;
                    (NodeState::Accept, Some(Coercion::BudgetTruncated))
                }
                Ok(children) => {
                    tree.nodes[id].state = NodeState::Continue;
                    attach_children(&mut tree, id, children, &mut queue);
                    continue;
                }
            },
        };
        tree.nodes[id].state = state;
        tree.nodes[id].flag = flag;
    }
    Ok(tree)
}

fn attach_children(tree: &mut VideoTree, parent: usize, specs: Vec<ChildSpec>, queue: &mut VecDeque<usize>) {
    for spec in specs {
        let id = tree.nodes.len();
        let child = child_node(spec, id, &tree.nodes[parent]);
        tree.nodes.push(child);
        tree.nodes[parent].children.push(id);
        queue.push_back(id);
    }
}

fn truncate_pending(tree: &mut VideoTree, first: usize, queue: &mut VecDeque<usize>) {
    tree.flags.budget_truncated = true;
    for id in std::iter::once(first).chain(queue.drain(..)) {
        let node = &mut tree.nodes[id];
        node.state = NodeState::Accept;
        node.flag = Some(Coercion::BudgetTruncated);
    }
}

/// Union of accepted frames (original indices, increasing), budget-sampled
/// down to `max_keyframes`.
pub fn collect_keyframes(tree: &VideoTree, cfg: &ExplorationConfig) -> Result<Vec<usize>, TreeError> {
    let positions: BTreeSet<usize> = tree.accepted().flat_map(TreeNode::positions).collect();
    let mut indices: Vec<usize> = positions
        .into_iter()
        .map(|p| {
            tree.frame_indices
                .get(p)
                .copied()
                .ok_or_else(|| TreeError::Precondition(format!("position {p} outside the tree's sequence")))
        })
        .collect::<Result<_, _>>()?;
    if indices.is_empty() {
        return Err(TreeError::NoKeyframes);
    }
    indices.sort_unstable();
    indices.dedup();
    Ok(uniform_positions(indices.len(), cfg.max_keyframes)
        .into_iter()
        .map(|i| indices[i])
        .collect())
}

/// Captions of the accepted nodes that contribute at least one key frame,
/// in temporal order.
pub fn keyframe_captions(tree: &VideoTree) -> Vec<String> {
    let keys: BTreeSet<usize> = tree.keyframes.iter().copied().collect();
    let mut nodes: Vec<&TreeNode> = tree
        .accepted()
        .filter(|n| n.positions().iter().any(|&p| keys.contains(&tree.frame_indices[p])))
        .collect();
    nodes.sort_by_key(|n| (n.first_position(), n.id));
    nodes.into_iter().map(|n| n.caption.clone()).collect()
}

/// Runs the answer stage on the collected key frames and stores the reply.
pub fn final_answer<A: Answerer + ?Sized>(tree: &mut VideoTree, answerer: &A) -> Result<String, TreeError> {
    if tree.keyframes.is_empty() {
        return Err(TreeError::NoKeyframes);
    }
    let captions = keyframe_captions(tree);
    if captions.is_empty() {
        return Err(TreeError::NoKeyframes);
    }
    let answer = answer_question(&captions, &tree.question, answerer)?;
    tree.answer = Some(answer.clone());
    Ok(answer)
}

/// Collects key frames and answers; on `NoKeyframes` the tree keeps an
/// empty key-frame list and no answer.
pub fn finish_tree<A: Answerer + ?Sized>(
    tree: &mut VideoTree,
    answerer: &A,
    cfg: &ExplorationConfig,
) -> Result<String, TreeError> {
    tree.keyframes = collect_keyframes(tree, cfg)?;
    final_answer(tree, answerer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{HashEmbedder, ScriptedAnswerer, ScriptedPolicy, TableCaptioner};

    fn node_with(events: Vec<Event>) -> TreeNode {
        TreeNode {
            id: 1,
            depth: 1,
            parent: Some(0),
            state: NodeState::Accept,
            flag: None,
            events,
            caption: String::new(),
            children: Vec::new(),
            output: None,
            embedding: None,
        }
    }

    fn tree_with(nodes: Vec<TreeNode>, n: usize) -> VideoTree {
        VideoTree {
            question: "q".into(),
            frame_indices: (1..=n).collect(),
            root: 0,
            nodes,
            keyframes: vec![],
            answer: None,
            flags: TreeFlags::default(),
        }
    }

    #[test]
    fn runs_split_on_gaps() {
        assert_eq!(runs(&[0, 1, 2, 5, 6, 9]), vec![(1, 3), (6, 7), (10, 10)]);
        assert_eq!(runs(&[]), vec![]);
    }

    #[test]
    fn node_caption_dedups_and_truncates() {
        let mut a = Event::new(1, 2);
        a.caption = Some("alpha".into());
        let mut b = Event::new(3, 4);
        b.caption = Some("beta".into());
        let mut c = Event::new(5, 6);
        c.caption = Some("alpha".into());
        let events = vec![a, b, c];
        assert_eq!(node_caption(&events, 100), "alpha; beta");
        assert_eq!(node_caption(&events, 7), "alpha; ");
    }

    #[test]
    fn keyframes_union_dedup_sort() {
        let mut a = node_with(vec![Event::new(1, 5)]);
        a.id = 0;
        let b = node_with(vec![Event::new(3, 8)]);
        let tree = tree_with(vec![a, b], 10);
        let k = collect_keyframes(&tree, &ExplorationConfig::default()).unwrap();
        assert_eq!(k, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn keyframes_budget_sampling() {
        let tree = tree_with(vec![node_with(vec![Event::new(1, 100)])], 100);
        let cfg = ExplorationConfig::default();
        let k = collect_keyframes(&tree, &cfg).unwrap();
        assert_eq!(k.len(), 32);
        assert_eq!(k, uniform_positions(100, 32).into_iter().map(|p| p + 1).collect::<Vec<_>>());
    }

    #[test]
    fn keyframes_require_accepted_node() {
        let mut n = node_with(vec![Event::new(1, 4)]);
        n.state = NodeState::Delete;
        let tree = tree_with(vec![n], 4);
        assert!(matches!(collect_keyframes(&tree, &ExplorationConfig::default()), Err(TreeError::NoKeyframes)));
    }

    #[test]
    fn final_answer_orders_captions_and_stores_reply() {
        let mut late = node_with(vec![Event::new(6, 8)]);
        late.caption = "late".into();
        late.id = 0;
        let mut early = node_with(vec![Event::new(1, 2)]);
        early.caption = "early".into();
        let mut tree = tree_with(vec![late, early], 10);
        let answerer = ScriptedAnswerer::new("B");
        assert!(matches!(final_answer(&mut tree, &answerer), Err(TreeError::NoKeyframes)));
        let answer = finish_tree(&mut tree, &answerer, &ExplorationConfig::default()).unwrap();
        assert_eq!(answer, "B");
        assert_eq!(tree.answer.as_deref(), Some("B"));
        assert_eq!(answerer.calls(), vec![vec!["early".to_string(), "late".to_string()]]);
    }

    fn two_halves() -> FrameSequence {
        let frames = (1..=16)
            .map(|i| Frame::new(i, 4, 4, vec![if i <= 8 { 20 } else { 230 }; 16]).unwrap())
            .collect();
        FrameSequence::new(frames, "halves", 16).unwrap()
    }

    #[test]
    fn expand_splits_distinct_halves() {
        let seq = two_halves();
        let captioner = TableCaptioner::new(
            [
                ((1, 8), "a dark tunnel with a slow train".to_string()),
                ((9, 16), "bright snowy field and a red kite".to_string()),
            ],
            "unknown",
        );
        let embedder = HashEmbedder::default();
        let policy = ScriptedPolicy::action(Action::Accept);
        let answerer = ScriptedAnswerer::new("A");
        let clients = Clients {
            captioner: &captioner,
            embedder: &embedder,
            policy: &policy,
            answerer: &answerer,
        };
        let settings = TreeSettings::default();
        let mut node = node_with(vec![Event::new(1, 16)]);
        node.state = NodeState::Continue;
        let children = expand_node(&node, &seq, "q", clients, &settings).unwrap();
        assert_eq!(children.len(), 2);
        assert_eq!((children[0].events[0].start, children[0].events[0].end), (1, 8));
        assert_eq!((children[1].events[0].start, children[1].events[0].end), (9, 16));
        assert!(children.iter().all(|c| c.depth == 2 && c.state == NodeState::Pending));
    }

    #[test]
    fn expand_preconditions_and_degenerate() {
        let seq = two_halves();
        let captioner = TableCaptioner::default();
        let embedder = HashEmbedder::default();
        let policy = ScriptedPolicy::action(Action::Accept);
        let answerer = ScriptedAnswerer::new("A");
        let clients = Clients {
            captioner: &captioner,
            embedder: &embedder,
            policy: &policy,
            answerer: &answerer,
        };
        let settings = TreeSettings::default();
        let mut single = node_with(vec![Event::new(3, 3)]);
        single.state = NodeState::Continue;
        assert!(matches!(
            expand_node(&single, &seq, "q", clients, &settings),
            Err(TreeError::Precondition(_))
        ));
        // Identical frames carry no change point to split on.
        let mut flat = node_with(vec![Event::new(1, 8)]);
        flat.state = NodeState::Continue;
        assert!(matches!(
            expand_node(&flat, &seq, "q", clients, &settings),
            Err(TreeError::ExpansionDegenerate(1))
        ));
    }
}
