//! Command-line front end. Machine-readable results go to standard output
//! as JSON; logs and errors go to standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::clients::mock::{HashEmbedder, StatsCaptioner};
use crate::clients::remote::{RemoteAnswerer, RemoteCaptioner, RemoteClient, RemoteEmbedder, RemotePolicy};
use crate::clients::{embed, Answerer, Captioner, ClientError, Clients, Embedder, Policy};
use crate::clustering::{dbscan, ClusterError};
use crate::config::{from_json_strict, load_config, AppConfig, ClientChoice, ConfigError};
use crate::frames::{load_frames, uniform_sample, FrameSequence, IngestError, VideoManifest};
use crate::segmentation::{histograms, segment_histograms, SegmentationError};
use crate::synth::{self, evaluate, evaluate_with, OraclePolicy, SynthError, SyntheticAnswerer, SyntheticInstance};
use crate::tgrpo::rollout::{mix_seed, rollout};
use crate::tgrpo::{train, RewardConfig, SurrogatePolicy, TgrpoError};
use crate::tree::{build_tree, finish_tree, TreeError, VideoTree};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Tgrpo(#[from] TgrpoError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Client(ClientError::Service { .. })
            | Self::Tree(TreeError::Service { .. })
            | Self::Tgrpo(TgrpoError::Tree(TreeError::Service { .. }))
            | Self::Cluster(ClusterError::Service { .. }) => "service",
            Self::Config(_) => "config",
            Self::Ingest(_) => "ingest",
            Self::Segmentation(_) => "segmentation",
            Self::Cluster(_) => "clustering",
            Self::Client(_) => "client",
            Self::Tree(_) => "tree",
            Self::Tgrpo(_) => "tgrpo",
            Self::Synth(_) => "synth",
            Self::File { .. } => "io",
            Self::Invalid(_) => "invalid_argument",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({"error": {"kind": self.kind(), "message": self.to_string()}})
    }
}

#[derive(Debug, Parser)]
#[command(name = "videominer", version, about = "Key-frame mining and policy training for long-video QA")]
pub struct Cli {
    /// JSON configuration file; absent sections use defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a video into scenes and print the intervals and change-point series.
    Segment(SegmentArgs),
    /// Cluster a JSON list of captions.
    Cluster(ClusterArgs),
    /// Build and persist an exploration tree.
    Tree(TreeArgs),
    /// Collect key frames of a persisted tree and answer its question.
    Answer(AnswerArgs),
    /// Train the surrogate policy on a synthetic suite.
    Train(TrainArgs),
    /// Write a synthetic suite directory.
    Synth(SynthArgs),
    /// Evaluate a policy on a synthetic suite.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of scenes.
    #[arg(long)]
    pub k: Option<usize>,
    /// Uniformly sample this many frames first.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub min_event_frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// JSON file holding a list of caption strings.
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_pts: Option<usize>,
}

/// Video source: a frame manifest, or one video of a synthetic suite.
#[derive(Debug, Args)]
pub struct VideoSource {
    #[arg(long, conflicts_with = "suite")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Position of the video in the suite.
    #[arg(long, default_value_t = 0, requires = "suite")]
    pub instance: usize,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[command(flatten)]
    pub source: VideoSource,
    /// Question to answer; defaults to the suite question.
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Sampling seed; defaults to trainer.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Surrogate policy weights (JSON) used when the policy role is mock.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, default_value = "tree.json")]
    pub out: PathBuf,
    /// Also collect key frames and answer.
    #[arg(long)]
    pub answer: bool,
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// Write the answered tree here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub clip_eps: Option<f64>,
    #[arg(long)]
    pub kl_beta: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with reward constants.
    #[arg(long)]
    pub reward_config: Option<PathBuf>,
    /// Set delta_c so that the growth rate equals this value.
    #[arg(long)]
    pub growth_rate: Option<f64>,
    /// Starting weights; defaults to a seeded random policy.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Write the trained weights here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one rollout of the trained policy here.
    #[arg(long)]
    pub dump_rollout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub suite: PathBuf,
    /// Surrogate policy weights; defaults to the untrained initial policy.
    #[arg(long, conflicts_with = "oracle")]
    pub policy: Option<PathBuf>,
    /// Score the planted-segment oracle instead.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs the command line and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}

/// Executes a parsed command, writing JSON results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => AppConfig::default(),
    };
    cfg.apply_env()?;
    match cli.command {
        Command::Segment(a) => cmd_segment(&cfg, a, out),
        Command::Cluster(a) => cmd_cluster(&cfg, a, out),
        Command::Tree(a) => cmd_tree(&cfg, a, out),
        Command::Answer(a) => cmd_answer(&cfg, a, out),
        Command::Train(a) => cmd_train(cfg, a, out),
        Command::Synth(a) => cmd_synth(&cfg, a, out),
        Command::Eval(a) => cmd_eval(&cfg, a, out),
    }
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::File {
        path: PathBuf::from("<stdout>"),
        message: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::File {
            path: parent.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    fs::write(path, text).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    from_json_strict(&text).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_video(cfg: &AppConfig, manifest: &Path, frames: Option<usize>) -> Result<FrameSequence, CliError> {
    let manifest = VideoManifest::from_file(&cfg.paths.resolve(manifest))?;
    let seq = load_frames(&manifest)?;
    Ok(match frames {
        Some(n) => uniform_sample(&seq, n)?,
        None => seq,
    })
}

fn embedder_for(choice: &ClientChoice) -> Box<dyn Embedder> {
    match choice {
        ClientChoice::Mock => Box::new(HashEmbedder::default()),
        ClientChoice::Remote(c) => Box::new(RemoteEmbedder {
            client: RemoteClient::new(c.clone()),
        }),
    }
}

fn load_policy(cfg: &AppConfig, path: Option<&Path>) -> Result<SurrogatePolicy, CliError> {
    match path {
        Some(p) => {
            let policy: SurrogatePolicy = read_json(&cfg.paths.resolve(p))?;
            if !policy.is_finite() {
                return Err(CliError::Invalid(format!("{}: non-finite weights", p.display())));
            }
            Ok(policy)
        }
        None => Ok(cfg.trainer.initial_policy()),
    }
}

fn load_suite(cfg: &AppConfig, dir: &Path) -> Result<Vec<SyntheticInstance>, CliError> {
    Ok(synth::read_suite(&cfg.paths.resolve(dir))?)
}

fn cmd_segment(cfg: &AppConfig, a: SegmentArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let seq = load_video(cfg, &a.manifest, a.frames)?;
    let mut seg_cfg = cfg.segmentation;
    if let Some(k) = a.k {
        seg_cfg.k_scenes = k;
    }
    if let Some(m) = a.min_event_frames {
        seg_cfg.min_event_frames = m;
    }
    let seg = segment_histograms(&histograms(&seq), &seg_cfg)?;
    let intervals: Vec<_> = seg.events.iter().map(|e| json!({"start": e.start, "end": e.end})).collect();
    emit(
        out,
        &json!({
            "intervals": intervals,
            "distances": seg.distances,
            "tau": seg.tau,
            "frame_indices": seq.indices(),
        }),
    )
}

fn cmd_cluster(cfg: &AppConfig, a: ClusterArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let captions: Vec<String> = read_json(&cfg.paths.resolve(&a.captions))?;
    let mut cl = cfg.clustering;
    if let Some(eps) = a.eps {
        cl.eps = eps;
    }
    if let Some(m) = a.min_pts {
        cl.min_pts = m;
    }
    cl.validate()?;
    if captions.is_empty() {
        return emit(out, &json!({"labels": [], "cluster_count": 0}));
    }
    let embedder = embedder_for(&cfg.clients.embedder);
    let points = embed(&captions, embedder.as_ref())?;
    let assignment = dbscan(&points, &cl)?;
    emit(out, &assignment)
}

/// Model roles for tree building. Mock roles use the suite's scripted
/// captioner when a suite video is explored.
struct Roles {
    captioner: Box<dyn Captioner>,
    embedder: Box<dyn Embedder>,
    policy: Box<dyn Policy>,
    answerer: Box<dyn Answerer>,
}

impl Roles {
    fn new(cfg: &AppConfig, question: &str, scripted: Option<&SyntheticInstance>, policy: Option<&Path>) -> Result<Self, CliError> {
        let remote = |c: &crate::clients::remote::ClientConfig| RemoteClient::new(c.clone());
        Ok(Self {
            captioner: match (&cfg.clients.captioner, scripted) {
                (ClientChoice::Remote(c), _) => Box::new(RemoteCaptioner { client: remote(c) }),
                (ClientChoice::Mock, Some(inst)) => Box::new(inst.captioner.clone()),
                (ClientChoice::Mock, None) => Box::new(StatsCaptioner),
            },
            embedder: embedder_for(&cfg.clients.embedder),
            policy: match &cfg.clients.policy {
                ClientChoice::Remote(c) => Box::new(RemotePolicy { client: remote(c) }),
                ClientChoice::Mock => Box::new(load_policy(cfg, policy)?),
            },
            answerer: match &cfg.clients.answerer {
                ClientChoice::Remote(c) => Box::new(RemoteAnswerer { client: remote(c) }),
                ClientChoice::Mock => Box::new(SyntheticAnswerer::from_question(question)),
            },
        })
    }

    fn clients(&self) -> Clients<'_> {
        Clients {
            captioner: self.captioner.as_ref(),
            embedder: self.embedder.as_ref(),
            policy: self.policy.as_ref(),
            answerer: self.answerer.as_ref(),
        }
    }
}

fn tree_summary(tree: &VideoTree, path: &Path) -> serde_json::Value {
    json!({
        "tree": path,
        "nodes": tree.node_count(),
        "max_depth": tree.max_depth(),
        "accepted": tree.accepted().count(),
        "keyframes": tree.keyframes,
        "answer": tree.answer,
        "budget_truncated": tree.flags.budget_truncated,
    })
}

fn cmd_tree(cfg: &AppConfig, a: TreeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (seq, question, scripted) = match (&a.source.manifest, &a.source.suite) {
        (Some(m), None) => {
            let q = a
                .question
                .clone()
                .ok_or_else(|| CliError::Invalid("--question is required with --manifest".into()))?;
            (load_video(cfg, m, a.frames)?, q, None)
        }
        (None, Some(dir)) => {
            let mut suite = load_suite(cfg, dir)?;
            if a.source.instance >= suite.len() {
                return Err(CliError::Invalid(format!(
                    "--instance {} out of range for {} videos",
                    a.source.instance,
                    suite.len()
                )));
            }
            let inst = suite.swap_remove(a.source.instance);
            let seq = match a.frames {
                Some(n) => uniform_sample(&inst.frames, n)?,
                None => inst.frames.clone(),
            };
            (seq, a.question.clone().unwrap_or_else(|| inst.question.clone()), Some(inst))
        }
        _ => return Err(CliError::Invalid("give exactly one of --manifest or --suite".into())),
    };
    let roles = Roles::new(cfg, &question, scripted.as_ref(), a.policy.as_deref())?;
    let seed = a.seed.unwrap_or(cfg.trainer.seed);
    let path = cfg.paths.resolve(&a.out);
    let mut tree = match build_tree(&seq, &question, roles.clients(), &cfg.tree_settings(), seed) {
        Ok(t) => t,
        Err(TreeError::Service { source, partial }) => {
            if let Some(t) = &partial {
                write_text(&path, &t.to_json())?;
                log::warn!("partial tree written to {}", path.display());
            }
            return Err(TreeError::Service { source, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    if a.answer {
        match finish_tree(&mut tree, roles.answerer.as_ref(), &cfg.exploration) {
            Ok(_) | Err(TreeError::NoKeyframes) => {}
            Err(e) => {
                write_text(&path, &tree.to_json())?;
                return Err(e.into());
            }
        }
    }
    write_text(&path, &tree.to_json())?;
    emit(out, &tree_summary(&tree, &path))
}

fn cmd_answer(cfg: &AppConfig, a: AnswerArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let path = cfg.paths.resolve(&a.tree);
    let mut tree: VideoTree = serde_json::from_str(&read_text(&path)?).map_err(|e| CliError::File {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let answerer: Box<dyn Answerer> = match &cfg.clients.answerer {
        ClientChoice::Remote(c) => Box::new(RemoteAnswerer {
            client: RemoteClient::new(c.clone()),
        }),
        ClientChoice::Mock => Box::new(SyntheticAnswerer::from_question(&tree.question)),
    };
    finish_tree(&mut tree, answerer.as_ref(), &cfg.exploration)?;
    if let Some(o) = &a.out {
        write_text(&cfg.paths.resolve(o), &tree.to_json())?;
    }
    emit(out, &json!({"answer": tree.answer, "keyframes": tree.keyframes}))
}

fn cmd_train(mut cfg: AppConfig, a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let t = &mut cfg.trainer;
    if let Some(v) = a.iterations {
        t.iterations = v;
    }
    if let Some(v) = a.group_size {
        t.group_size = v;
    }
    if let Some(v) = a.clip_eps {
        t.clip_eps = v;
    }
    if let Some(v) = a.kl_beta {
        t.kl_beta = v;
    }
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(p) = &a.reward_config {
        cfg.rewards = read_json::<RewardConfig>(&cfg.paths.resolve(p))?;
    }
    if let Some(l) = a.growth_rate {
        if !(l > 0.0 && l.is_finite()) {
            return Err(CliError::Invalid("--growth-rate must be positive".into()));
        }
        cfg.rewards = cfg.rewards.with_growth_rate(l);
    }
    cfg.validate()?;
    if !cfg.rewards.has_standard_ordering() {
        log::warn!("action rewards are not ordered delete >= accept >= continue");
    }

    let suite = load_suite(&cfg, &a.suite)?;
    let embedder = embedder_for(&cfg.clients.embedder);
    let initial = load_policy(&cfg, a.init.as_deref())?;
    let settings = cfg.tree_settings();
    let mut write_err = None;
    let outcome = train(&suite, initial, embedder.as_ref(), &settings, &cfg.rewards, &cfg.trainer, |entry| {
        if write_err.is_none() {
            write_err = emit(out, entry).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if let Some(p) = &a.out {
        let text = serde_json::to_string_pretty(&outcome.policy).map_err(|e| CliError::Invalid(e.to_string()))?;
        write_text(&cfg.paths.resolve(p), &(text + "\n"))?;
    }
    if let Some(p) = &a.dump_rollout {
        let group = rollout(
            &suite[0],
            &outcome.policy,
            embedder.as_ref(),
            &settings,
            &cfg.rewards,
            &cfg.trainer,
            mix_seed(cfg.trainer.seed, u64::MAX),
        )?;
        let text = serde_json::to_string_pretty(&group.dump()).map_err(|e| CliError::Invalid(e.to_string()))?;
        write_text(&cfg.paths.resolve(p), &(text + "\n"))?;
    }
    Ok(())
}

fn cmd_synth(cfg: &AppConfig, a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Invalid("--count must be >= 1".into()));
    }
    let suite = synth::generate_suite(a.count, a.seed)?;
    let dir = cfg.paths.resolve(&a.out);
    synth::write_suite(&dir, &suite)?;
    emit(out, &json!({"suite": dir, "instances": suite.len(), "seed": a.seed}))
}

fn cmd_eval(cfg: &AppConfig, a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let suite = load_suite(cfg, &a.suite)?;
    let embedder = embedder_for(&cfg.clients.embedder);
    let settings = cfg.tree_settings();
    let seed = a.seed.unwrap_or(cfg.trainer.seed);
    let report = if a.oracle {
        let oracles: Vec<OraclePolicy> = suite.iter().map(SyntheticInstance::oracle).collect();
        evaluate_with(|i| &oracles[i], &suite, embedder.as_ref(), &settings, seed)?
    } else {
        let policy = load_policy(cfg, a.policy.as_deref())?;
        evaluate(&policy, &suite, embedder.as_ref(), &settings, seed)?
    };
    emit(out, &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_train_flags() {
        let cli = Cli::try_parse_from([
            "videominer",
            "train",
            "--suite",
            "s",
            "--iterations",
            "3",
            "--clip-eps",
            "0.1",
            "--reward-config",
            "r.json",
        ])
        .unwrap();
        match cli.command {
            Command::Train(t) => {
                assert_eq!(t.iterations, Some(3));
                assert_eq!(t.clip_eps, Some(0.1));
                assert_eq!(t.reward_config, Some(PathBuf::from("r.json")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["videominer", "frobnicate"]), 2);
        assert_eq!(main_with_args(["videominer", "segment", "--bogus"]), 2);
    }

    #[test]
    fn error_json_shape() {
        let e = CliError::Invalid("bad".into());
        assert_eq!(e.to_json(), json!({"error": {"kind": "invalid_argument", "message": "bad"}}));
    }
}
