//! Key-frame mining for long-video question answering.
//!
//! A video is sampled into frames, split into scenes by histogram change
//! points, captioned, clustered by caption similarity and explored as a tree
//! whose nodes a policy accepts, deletes or expands. [`tgrpo`] trains that
//! policy from tree-level answer correctness; [`synth`] provides planted
//! videos to train and evaluate on without external models.

pub mod cli;
pub mod clients;
pub mod clustering;
pub mod config;
pub mod frames;
pub mod segmentation;
pub mod synth;
pub mod tgrpo;
pub mod tree;

pub use clients::{Action, FormatClass, NodeOutput};
pub use frames::{Frame, FrameSequence};
pub use segmentation::{segment_scenes, Event, SegmentationConfig};
pub use tree::{build_tree, VideoTree};
