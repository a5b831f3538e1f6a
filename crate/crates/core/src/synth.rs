//! Planted-segment synthetic videos.
//!
//! Each video is a run of constant-intensity blocks with uniform pixel
//! noise. One block carries the answer to a multiple-choice question; the
//! scripted captioner describes every block with a fixed sentence, and the
//! scripted answerer votes on the option tokens it finds in the captions it
//! is given. Everything is a pure function of the spec, so trees, training
//! runs and evaluation reports are reproducible.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::mock::fnv1a;
use crate::clients::parse::render;
use crate::clients::{embed, Action, Answerer, Captioner, ClientError, Clients, DecisionContext, Embedder, NodeOutput, Policy};
use crate::frames::{load_frames, Frame, FrameSequence, IngestError, ManifestEntry, VideoManifest};
use crate::tgrpo::reward::tree_reward;
use crate::tgrpo::rollout::{mix_seed, QaEnvironment};
use crate::tgrpo::surrogate::{embedding_features, Features};
use crate::tree::{build_tree, finish_tree, TreeError, TreeNode, TreeSettings};

pub const FRAME_SIDE: u32 = 32;

const COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "purple", "orange", "white", "black"];
const OBJECTS: [&str; 8] = ["cup", "lamp", "book", "chair", "bag", "ball", "phone", "hat"];
const PLACES: [&str; 8] = ["window", "door", "table", "sofa", "shelf", "sink", "stairs", "desk"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    SpecInvariantViolation(String),
    #[error("node {0} has no caption embedding or no frames")]
    MissingEmbedding(usize),
    #[error("empty spec set")]
    EmptySuite,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub total_frames: usize,
    pub num_segments: usize,
    pub answer_segment: usize,
    /// Base gray level of each segment.
    pub intensity_levels: Vec<u8>,
    /// Pixels are jittered uniformly within `±noise_amplitude`.
    pub noise_amplitude: u8,
    /// Frames per segment; `None` splits evenly, earlier segments taking the
    /// remainder.
    #[serde(default)]
    pub segment_lengths: Option<Vec<usize>>,
    /// Question without its options, e.g. "what color is the cup near the door?".
    pub question: String,
    pub options: Vec<String>,
    /// Gold option letter.
    pub gold: String,
    /// Scripted caption of each segment; the answer segment's caption names
    /// the gold option.
    pub segment_captions: Vec<String>,
    pub seed: u64,
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|ch: char| !ch.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

fn letter(i: usize) -> String {
    char::from(b'A' + i as u8).to_string()
}

impl SyntheticSpec {
    pub fn lengths(&self) -> Vec<usize> {
        match &self.segment_lengths {
            Some(l) => l.clone(),
            None => {
                let n = self.num_segments.max(1);
                let (base, extra) = (self.total_frames / n, self.total_frames % n);
                (0..n).map(|i| base + usize::from(i < extra)).collect()
            }
        }
    }

    pub fn gold_index(&self) -> Option<usize> {
        (0..self.options.len()).find(|&i| letter(i) == self.gold.trim().to_uppercase())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::SpecInvariantViolation(m));
        if self.num_segments == 0 {
            return bad("num_segments must be >= 1".into());
        }
        if self.answer_segment >= self.num_segments {
            return bad(format!(
                "answer_segment {} >= num_segments {}",
                self.answer_segment, self.num_segments
            ));
        }
        if self.total_frames < self.num_segments {
            return bad("total_frames must be >= num_segments".into());
        }
        let lengths = self.lengths();
        if lengths.len() != self.num_segments || lengths.iter().any(|&l| l == 0) {
            return bad("segment_lengths must give one positive length per segment".into());
        }
        if lengths.iter().sum::<usize>() != self.total_frames {
            return bad("segment_lengths must sum to total_frames".into());
        }
        if self.intensity_levels.len() != self.num_segments {
            return bad("intensity_levels must have one entry per segment".into());
        }
        let a = i32::from(self.noise_amplitude);
        for (i, &l) in self.intensity_levels.iter().enumerate() {
            if i32::from(l) - a < 0 || i32::from(l) + a > 255 {
                return bad(format!("level {l} with noise {a} leaves the 0..=255 range"));
            }
            for &m in &self.intensity_levels[i + 1..] {
                let gap = (i32::from(l) - i32::from(m)).abs();
                if gap == 0 || gap < 4 * a {
                    return bad(format!("levels {l} and {m} are closer than 4 x noise_amplitude"));
                }
            }
        }
        if self.options.is_empty() || self.options.len() > 26 {
            return bad("options must hold 1..=26 entries".into());
        }
        let Some(g) = self.gold_index() else {
            return bad(format!("gold {:?} does not name an option", self.gold));
        };
        if self.segment_captions.len() != self.num_segments {
            return bad("segment_captions needs one entry per segment".into());
        }
        let gold = self.options[g].to_lowercase();
        if !words(&self.segment_captions[self.answer_segment]).any(|w| w == gold) {
            return bad("the answer segment's caption must name the gold option".into());
        }
        Ok(())
    }

    /// Question followed by its lettered options.
    pub fn full_question(&self) -> String {
        let mut q = self.question.clone();
        for (i, o) in self.options.iter().enumerate() {
            q.push_str(&format!(" ({}) {}", letter(i), o));
        }
        q
    }

    pub fn captions(&self) -> Vec<String> {
        self.segment_captions.clone()
    }

    /// Content hash used to derive per-instance seeds.
    pub fn key(&self) -> u64 {
        fnv1a(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }
}

/// Picks the caption of the segment holding most of the frames (earliest
/// segment on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCaptioner {
    /// Start index of every segment, followed by the total frame count.
    bounds: Vec<usize>,
    captions: Vec<String>,
}

impl SegmentCaptioner {
    pub fn new(lengths: &[usize], captions: Vec<String>) -> Self {
        let mut bounds = vec![0];
        for l in lengths {
            bounds.push(bounds.last().copied().unwrap_or(0) + l);
        }
        Self { bounds, captions }
    }

    pub fn segment_of(&self, index: usize) -> Option<usize> {
        (0..self.captions.len()).find(|&s| index >= self.bounds[s] && index < self.bounds[s + 1])
    }
}

impl Captioner for SegmentCaptioner {
    fn caption(&self, frames: &[Frame], _question: &str) -> Result<String, ClientError> {
        let mut counts = vec![0usize; self.captions.len()];
        for f in frames {
            if let Some(s) = self.segment_of(f.index()) {
                counts[s] += 1;
            }
        }
        let best = (0..counts.len())
            .filter(|&s| counts[s] > 0)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .ok_or_else(|| ClientError::Precondition("frames outside the synthetic video".into()))?;
        Ok(self.captions[best].clone())
    }
}

/// Majority vote over option tokens mentioned in the captions; ties go to the
/// option mentioned first. Replies with the option letter, or "none".
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAnswerer {
    pub options: Vec<String>,
}

impl SyntheticAnswerer {
    /// Options listed in a question as "(A) red (B) blue ...".
    pub fn from_question(question: &str) -> Self {
        let mut options = Vec::new();
        let mut rest = question;
        while let Some(open) = rest.find('(') {
            let tail = &rest[open + 1..];
            let expected = letter(options.len());
            if tail.starts_with(&format!("{expected})")) {
                let body = &tail[2..];
                let end = body.find('(').unwrap_or(body.len());
                options.push(body[..end].trim().to_string());
                rest = &body[end..];
            } else {
                rest = tail;
            }
        }
        Self { options }
    }
}

impl Answerer for SyntheticAnswerer {
    fn answer(&self, captions: &[String], _question: &str) -> Result<String, ClientError> {
        let words: Vec<String> = captions.iter().flat_map(|c| words(c)).collect();
        let mut best: Option<(usize, usize, usize)> = None;
        for (i, opt) in self.options.iter().enumerate() {
            let opt = opt.to_lowercase();
            let hits: Vec<usize> = (0..words.len()).filter(|&w| words[w] == opt).collect();
            let Some(&first) = hits.first() else { continue };
            let better = match best {
                None => true,
                Some((_, n, f)) => hits.len() > n || (hits.len() == n && first < f),
            };
            if better {
                best = Some((i, hits.len(), first));
            }
        }
        Ok(best.map_or_else(|| "none".to_string(), |(i, _, _)| letter(i)))
    }
}

/// Accepts nodes entirely inside the planted frames, deletes nodes that miss
/// them and expands the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePolicy {
    pub planted: BTreeSet<usize>,
}

impl Policy for OraclePolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut dyn RngCore) -> Result<NodeOutput, ClientError> {
        let inside = ctx.frame_indices.iter().filter(|i| self.planted.contains(i)).count();
        let action = if inside == 0 {
            Action::Delete
        } else if inside == ctx.frame_indices.len() {
            Action::Accept
        } else {
            Action::Continue
        };
        let think = format!("{inside} of {} frames are planted", ctx.frame_indices.len());
        Ok(NodeOutput::from_text(render(&think, action), None))
    }
}

/// A generated video with its question and scripted model roles.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub spec: SyntheticSpec,
    pub frames: FrameSequence,
    /// Original indices of the answer segment's frames.
    pub planted: Vec<usize>,
    pub question: String,
    pub captioner: SegmentCaptioner,
    pub answerer: SyntheticAnswerer,
}

impl SyntheticInstance {
    pub fn captions(&self) -> Vec<String> {
        self.spec.captions()
    }

    pub fn oracle(&self) -> OraclePolicy {
        OraclePolicy {
            planted: self.planted.iter().copied().collect(),
        }
    }

    fn from_parts(spec: SyntheticSpec, frames: FrameSequence) -> Self {
        let lengths = spec.lengths();
        let start: usize = lengths[..spec.answer_segment].iter().sum();
        let planted = (start..start + lengths[spec.answer_segment]).collect();
        Self {
            question: spec.full_question(),
            captioner: SegmentCaptioner::new(&lengths, spec.captions()),
            answerer: SyntheticAnswerer {
                options: spec.options.clone(),
            },
            planted,
            frames,
            spec,
        }
    }
}

impl QaEnvironment for SyntheticInstance {
    fn frames(&self) -> &FrameSequence {
        &self.frames
    }
    fn question(&self) -> &str {
        &self.question
    }
    fn gold(&self) -> &str {
        &self.spec.gold
    }
    fn captioner(&self) -> &dyn Captioner {
        &self.captioner
    }
    fn answerer(&self) -> &dyn Answerer {
        &self.answerer
    }
    fn seed_key(&self) -> u64 {
        self.spec.key()
    }
}

/// Renders the frames of a valid spec.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticInstance, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = i32::from(spec.noise_amplitude);
    let n_pixels = (FRAME_SIDE * FRAME_SIDE) as usize;
    let mut frames = Vec::with_capacity(spec.total_frames);
    for (seg, len) in spec.lengths().into_iter().enumerate() {
        let level = i32::from(spec.intensity_levels[seg]);
        for _ in 0..len {
            let pixels = (0..n_pixels)
                .map(|_| (level + rng.gen_range(-a..=a)).clamp(0, 255) as u8)
                .collect();
            frames.push(Frame::new(frames.len(), FRAME_SIDE, FRAME_SIDE, pixels)?);
        }
    }
    let seq = FrameSequence::new(frames, format!("synthetic-{:016x}", spec.seed), spec.total_frames)?;
    Ok(SyntheticInstance::from_parts(spec.clone(), seq))
}

/// Random valid spec: 3 to 6 segments of 8 to 16 frames.
pub fn random_spec(rng: &mut impl Rng) -> SyntheticSpec {
    let num_segments = rng.gen_range(3..=6);
    let lengths: Vec<usize> = (0..num_segments).map(|_| rng.gen_range(8..=16)).collect();
    let mut grid: Vec<u8> = (0..8).map(|k| 16 + 32 * k).collect();
    grid.shuffle(rng);
    let answer_segment = rng.gen_range(0..num_segments);

    let mut palette = COLORS.to_vec();
    palette.shuffle(rng);
    let options: Vec<String> = palette[..4].iter().map(|s| s.to_string()).collect();
    let gold = rng.gen_range(0..options.len());

    let obj = *OBJECTS.choose(rng).unwrap_or(&OBJECTS[0]);
    let place = *PLACES.choose(rng).unwrap_or(&PLACES[0]);
    let others: Vec<&str> = OBJECTS.iter().copied().filter(|o| *o != obj).collect();
    let other_places: Vec<&str> = PLACES.iter().copied().filter(|p| *p != place).collect();
    let wrong: Vec<usize> = (0..options.len()).filter(|&i| i != gold).collect();

    let captions = (0..num_segments)
        .map(|s| {
            if s == answer_segment {
                format!("the {obj} near the {place} is {}", options[gold])
            } else {
                format!(
                    "{} {}s on {}s",
                    options[wrong[rng.gen_range(0..wrong.len())]],
                    others[rng.gen_range(0..others.len())],
                    other_places[rng.gen_range(0..other_places.len())]
                )
            }
        })
        .collect();
    SyntheticSpec {
        total_frames: lengths.iter().sum(),
        num_segments,
        answer_segment,
        intensity_levels: grid[..num_segments].to_vec(),
        noise_amplitude: 6,
        segment_lengths: Some(lengths),
        question: format!("what color is the {obj} near the {place}?"),
        options,
        gold: letter(gold),
        segment_captions: captions,
        seed: rng.gen(),
    }
}

pub fn generate_suite(count: usize, seed: u64) -> Result<Vec<SyntheticInstance>, SynthError> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
            generate(&random_spec(&mut rng))
        })
        .collect()
}

/// Surrogate-policy features of a tree node.
pub fn scripted_policy_features(
    node: &TreeNode,
    question: &str,
    embedder: &dyn Embedder,
    max_depth: usize,
) -> Result<Features, SynthError> {
    let caption = match &node.embedding {
        Some(e) if node.frame_count() > 0 => e,
        _ => return Err(SynthError::MissingEmbedding(node.id)),
    };
    let q = embed(&[question.to_string()], embedder)?.remove(0);
    Ok(embedding_features(caption, &q, node.depth, max_depth, node.frame_count()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub keyframe_recall: f64,
    pub keyframe_precision: f64,
    pub answer_accuracy: f64,
    pub mean_nodes_explored: f64,
    pub mean_depth: f64,
}

struct InstanceScore {
    recall: f64,
    precision: f64,
    correct: f64,
    nodes: f64,
    depth: f64,
}

fn score(keyframes: &[usize], planted: &[usize]) -> (f64, f64) {
    if keyframes.is_empty() || planted.is_empty() {
        return (0.0, 0.0);
    }
    let selected: BTreeSet<usize> = keyframes.iter().copied().collect();
    let truth: BTreeSet<usize> = planted.iter().copied().collect();
    let hit = planted
        .iter()
        .filter(|&&p| selected.range(p.saturating_sub(1)..=p + 1).next().is_some())
        .count();
    let exact = selected.intersection(&truth).count();
    (hit as f64 / planted.len() as f64, exact as f64 / selected.len() as f64)
}

/// Order-independent mean.
fn mean(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Builds one tree per instance and scores the selected key frames and
/// answers. Each instance is explored with a seed derived from `seed` and
/// the instance content.
pub fn evaluate(
    policy: &dyn Policy,
    instances: &[SyntheticInstance],
    embedder: &dyn Embedder,
    settings: &TreeSettings,
    seed: u64,
) -> Result<EvalReport, SynthError> {
    evaluate_with(|_| policy, instances, embedder, settings, seed)
}

/// Like [`evaluate`], with a policy chosen by instance position.
pub fn evaluate_with<'p, F>(
    policy_for: F,
    instances: &[SyntheticInstance],
    embedder: &dyn Embedder,
    settings: &TreeSettings,
    seed: u64,
) -> Result<EvalReport, SynthError>
where
    F: (Fn(usize) -> &'p dyn Policy) + Sync,
{
    if instances.is_empty() {
        return Err(SynthError::EmptySuite);
    }
    let scores: Vec<InstanceScore> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let clients = Clients {
                captioner: &inst.captioner,
                embedder,
                policy: policy_for(i),
                answerer: &inst.answerer,
            };
            let mut tree = build_tree(&inst.frames, &inst.question, clients, settings, mix_seed(seed, inst.spec.key()))?;
            let correct = match finish_tree(&mut tree, &inst.answerer, &settings.exploration) {
                Ok(answer) => tree_reward(&answer, &inst.spec.gold),
                Err(TreeError::NoKeyframes) => 0.0,
                Err(e) => return Err(e.into()),
            };
            let (recall, precision) = score(&tree.keyframes, &inst.planted);
            Ok(InstanceScore {
                recall,
                precision,
                correct,
                nodes: tree.node_count() as f64,
                depth: tree.max_depth() as f64,
            })
        })
        .collect::<Result<_, SynthError>>()?;
    Ok(EvalReport {
        instances: scores.len(),
        keyframe_recall: mean(scores.iter().map(|s| s.recall).collect()),
        keyframe_precision: mean(scores.iter().map(|s| s.precision).collect()),
        answer_accuracy: mean(scores.iter().map(|s| s.correct).collect()),
        mean_nodes_explored: mean(scores.iter().map(|s| s.nodes).collect()),
        mean_depth: mean(scores.iter().map(|s| s.depth).collect()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SuiteEntry {
    id: String,
    manifest: PathBuf,
    question: String,
    gold: String,
    planted: Vec<usize>,
    spec: SyntheticSpec,
}

pub const SUITE_INDEX: &str = "qa.json";

/// Writes one directory of PGM frames plus a manifest per instance, and a
/// `qa.json` index describing the questions.
pub fn write_suite(dir: &Path, instances: &[SyntheticInstance]) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut index = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        let id = format!("video_{i:03}");
        let sub = dir.join(&id);
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        let mut entries = Vec::with_capacity(inst.frames.len());
        for f in inst.frames.frames() {
            let name = format!("frame_{:04}.pgm", f.index());
            let path = sub.join(&name);
            image::save_buffer(&path, f.pixels(), f.width(), f.height(), image::ColorType::L8).map_err(|e| {
                SynthError::Format {
                    path: path.clone(),
                    message: e.to_string(),
                }
            })?;
            entries.push(ManifestEntry {
                path: PathBuf::from(name),
                index: f.index(),
            });
        }
        let mut manifest = VideoManifest::new(entries, &sub)?;
        manifest.metadata.insert("source".into(), inst.frames.source_id().to_string());
        let mpath = sub.join("manifest.json");
        write_json(&mpath, &manifest.to_json())?;
        index.push(SuiteEntry {
            manifest: PathBuf::from(&id).join("manifest.json"),
            id,
            question: inst.question.clone(),
            gold: inst.spec.gold.clone(),
            planted: inst.planted.clone(),
            spec: inst.spec.clone(),
        });
    }
    write_json(&dir.join(SUITE_INDEX), &index)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), SynthError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| SynthError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Reads a directory written by [`write_suite`], decoding frames from disk.
pub fn read_suite(dir: &Path) -> Result<Vec<SyntheticInstance>, SynthError> {
    let index_path = dir.join(SUITE_INDEX);
    let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let entries: Vec<SuiteEntry> = serde_json::from_str(&text).map_err(|e| SynthError::Format {
        path: index_path.clone(),
        message: e.to_string(),
    })?;
    if entries.is_empty() {
        return Err(SynthError::EmptySuite);
    }
    entries
        .into_iter()
        .map(|e| {
            e.spec.validate()?;
            let manifest = VideoManifest::from_file(&dir.join(&e.manifest))?;
            let frames = load_frames(&manifest)?;
            if frames.len() != e.spec.total_frames {
                return Err(SynthError::Format {
                    path: dir.join(&e.manifest),
                    message: format!("{} frames on disk, spec says {}", frames.len(), e.spec.total_frames),
                });
            }
            let inst = SyntheticInstance::from_parts(e.spec, frames);
            if inst.planted != e.planted || inst.spec.gold != e.gold {
                return Err(SynthError::Format {
                    path: index_path.clone(),
                    message: format!("entry {} disagrees with its spec", e.id),
                });
            }
            Ok(inst)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{HashEmbedder, ScriptedPolicy};
    use crate::segmentation::{change_points, segment_scenes, SegmentationConfig};
    use crate::tree::NodeState;
    use proptest::prelude::*;

    fn two_block() -> SyntheticSpec {
        SyntheticSpec {
            total_frames: 20,
            num_segments: 2,
            answer_segment: 1,
            intensity_levels: vec![40, 200],
            noise_amplitude: 5,
            segment_lengths: None,
            question: "what color is the cup near the door?".into(),
            options: vec!["red".into(), "blue".into()],
            gold: "B".into(),
            segment_captions: vec!["red hats on sinks".into(), "the cup near the door is blue".into()],
            seed: 3,
        }
    }

    #[test]
    fn two_blocks_split_at_frame_ten() {
        let inst = generate(&two_block()).unwrap();
        let d = change_points(&inst.frames, &SegmentationConfig::default()).unwrap().distances;
        let argmax = (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        assert_eq!(argmax + 1, 10);
        let events = segment_scenes(&inst.frames, &SegmentationConfig::with_k(2));
        assert_eq!((events[0].start, events[0].end), (1, 10));
        assert_eq!(inst.planted, (10..20).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&two_block()).unwrap();
        let b = generate(&two_block()).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.captions(), b.captions());
        assert_eq!(a.question, "what color is the cup near the door? (A) red (B) blue");
    }

    #[test]
    fn spec_violations() {
        let mut s = two_block();
        s.answer_segment = 2;
        assert!(matches!(generate(&s), Err(SynthError::SpecInvariantViolation(_))));
        let mut s = two_block();
        s.intensity_levels = vec![40, 55];
        assert!(matches!(generate(&s), Err(SynthError::SpecInvariantViolation(_))));
        let mut s = two_block();
        s.segment_captions[1] = "the cup near the door is reddish".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn captioner_uses_majority_segment() {
        let inst = generate(&two_block()).unwrap();
        let f = inst.frames.frames();
        let c = inst.captioner.caption(&f[8..13], "").unwrap();
        assert_eq!(c, "the cup near the door is blue");
        let c = inst.captioner.caption(&f[8..12], "").unwrap();
        assert_eq!(c, "red hats on sinks");
    }

    #[test]
    fn answerer_votes() {
        let a = SyntheticAnswerer {
            options: vec!["red".into(), "blue".into(), "green".into()],
        };
        let caps = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(a.answer(&caps(&["a blue cup", "a red hat", "a blue bag"]), "").unwrap(), "B");
        assert_eq!(a.answer(&caps(&["a green cup", "a red hat"]), "").unwrap(), "C");
        assert_eq!(a.answer(&caps(&["a grey cup"]), "").unwrap(), "none");
    }

    #[test]
    fn options_from_question() {
        let a = SyntheticAnswerer::from_question("what color is the cup (f)? (A) red (B) dark blue (C) green");
        assert_eq!(a.options, vec!["red", "dark blue", "green"]);
        assert!(SyntheticAnswerer::from_question("why?").options.is_empty());
    }

    #[test]
    fn oracle_policy_recovers_planted_frames() {
        let suite = generate_suite(6, 11).unwrap();
        let embedder = HashEmbedder::default();
        let settings = TreeSettings::default();
        let oracles: Vec<OraclePolicy> = suite.iter().map(SyntheticInstance::oracle).collect();
        let report = evaluate_with(|i| &oracles[i], &suite, &embedder, &settings, 1).unwrap();
        assert_eq!(report.keyframe_recall, 1.0);
        assert_eq!(report.answer_accuracy, 1.0);
        assert_eq!(report.keyframe_precision, 1.0);
    }

    #[test]
    fn all_delete_scores_zero() {
        let suite = generate_suite(4, 2).unwrap();
        let policy = ScriptedPolicy::action(Action::Delete);
        let r = evaluate(&policy, &suite, &HashEmbedder::default(), &TreeSettings::default(), 0).unwrap();
        assert_eq!(r.keyframe_recall, 0.0);
        assert_eq!(r.answer_accuracy, 0.0);
    }

    #[test]
    fn report_ignores_suite_order() {
        let mut suite = generate_suite(5, 9).unwrap();
        let policy = crate::tgrpo::SurrogatePolicy::random(0.5, 1);
        let e = HashEmbedder::default();
        let s = TreeSettings::default();
        let a = evaluate(&policy, &suite, &e, &s, 4).unwrap();
        suite.reverse();
        let b = evaluate(&policy, &suite, &e, &s, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn features_of_nodes() {
        let inst = generate(&two_block()).unwrap();
        let e = HashEmbedder::default();
        let mut node = TreeNode {
            id: 1,
            depth: 0,
            parent: None,
            state: NodeState::Pending,
            flag: None,
            events: vec![crate::segmentation::Event::new(1, 4)],
            caption: inst.question.clone(),
            children: vec![],
            output: None,
            embedding: Some(e.embed_one(&inst.question)),
        };
        let x = scripted_policy_features(&node, &inst.question, &e, 4).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
        assert!((x[2] - 5f64.ln()).abs() < 1e-12);
        node.events.clear();
        assert!(matches!(
            scripted_policy_features(&node, &inst.question, &e, 4),
            Err(SynthError::MissingEmbedding(1))
        ));
    }

    #[test]
    fn suite_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let suite = generate_suite(2, 5).unwrap();
        write_suite(dir.path(), &suite).unwrap();
        let back = read_suite(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in suite.iter().zip(&back) {
            assert_eq!(a.frames.frames(), b.frames.frames());
            assert_eq!(a.spec, b.spec);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn boundaries_recovered(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng);
            let inst = generate(&spec).unwrap();
            let seg = segment_scenes(&inst.frames, &SegmentationConfig::with_k(spec.num_segments));
            let ends: Vec<usize> = seg.iter().map(|e| e.end).collect();
            let mut acc = 0;
            let expected: Vec<usize> = spec.lengths().iter().map(|l| { acc += l; acc }).collect();
            prop_assert_eq!(ends, expected);
        }
    }
}
