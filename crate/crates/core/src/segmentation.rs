//! Histogram-based scene segmentation.
//!
//! Each frame is summarized by a normalized 256-bin intensity histogram.
//! Consecutive histograms are compared with the Bhattacharyya distance and
//! the sequence is cut at the `K - 1` largest distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::CaptionEmbedding;
use crate::frames::{Frame, FrameSequence};

pub const DEFAULT_BC_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("need at least 2 frames to compute change points, got {0}")]
    TooFewFrames(usize),
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayHistogram {
    bins: [f64; 256],
}

impl GrayHistogram {
    /// Builds a histogram from raw bin masses, normalizing them to sum to 1.
    /// Returns `None` when the total mass is zero or any bin is negative.
    pub fn from_masses(masses: &[f64; 256]) -> Option<Self> {
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return None;
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut bins = [0.0; 256];
        for (b, m) in bins.iter_mut().zip(masses) {
            *b = m / total;
        }
        Some(Self { bins })
    }

    pub fn bins(&self) -> &[f64; 256] {
        &self.bins
    }
}

pub fn gray_histogram(frame: &Frame) -> GrayHistogram {
    let mut counts = [0u64; 256];
    for &p in frame.pixels() {
        counts[p as usize] += 1;
    }
    let total = frame.pixels().len() as f64;
    let mut bins = [0.0; 256];
    for (b, c) in bins.iter_mut().zip(counts) {
        *b = c as f64 / total;
    }
    GrayHistogram { bins }
}

pub fn histograms(seq: &FrameSequence) -> Vec<GrayHistogram> {
    seq.frames().par_iter().map(gray_histogram).collect()
}

/// `-ln(max(clamp, sum_k sqrt(h1[k] * h2[k])))`, floored at zero.
pub fn bhattacharyya(h1: &GrayHistogram, h2: &GrayHistogram, clamp: f64) -> f64 {
    let bc: f64 = h1
        .bins
        .iter()
        .zip(&h2.bins)
        .map(|(a, b)| (a * b).sqrt())
        .sum();
    let d = -bc.max(clamp).ln();
    if d > 0.0 {
        d
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub k_scenes: usize,
    pub bc_clamp: f64,
    pub min_event_frames: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            k_scenes: 8,
            bc_clamp: DEFAULT_BC_CLAMP,
            min_event_frames: 1,
        }
    }
}

impl SegmentationConfig {
    pub fn with_k(k_scenes: usize) -> Self {
        Self {
            k_scenes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SegmentationError> {
        if self.k_scenes < 1 {
            return Err(SegmentationError::InvalidConfig("k_scenes must be >= 1".into()));
        }
        if !(self.bc_clamp > 0.0) {
            return Err(SegmentationError::InvalidConfig("bc_clamp must be > 0".into()));
        }
        if self.min_event_frames < 1 {
            return Err(SegmentationError::InvalidConfig(
                "min_event_frames must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Consecutive-frame distances `D_1..D_{N-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangePointSeries {
    pub distances: Vec<f64>,
}

/// A contiguous run of frames, `start..=end` as 1-based positions within the
/// sequence it was cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(skip)]
    pub embedding: Option<CaptionEmbedding>,
}

impl Event {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start >= 1 && start <= end);
        Self {
            start,
            end,
            caption: None,
            embedding: None,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 0-based positions covered by this event.
    pub fn positions(&self) -> std::ops::Range<usize> {
        self.start - 1..self.end
    }

    pub fn frames<'a>(&self, seq: &'a FrameSequence) -> &'a [Frame] {
        &seq.frames()[self.positions()]
    }
}

/// Result of a segmentation pass, with the distance series and the
/// effective threshold (smallest selected distance) kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segmentation {
    pub events: Vec<Event>,
    pub distances: Vec<f64>,
    pub tau: Option<f64>,
}

pub fn change_points_from_histograms(
    hists: &[GrayHistogram],
    clamp: f64,
) -> Result<ChangePointSeries, SegmentationError> {
    if hists.len() < 2 {
        return Err(SegmentationError::TooFewFrames(hists.len()));
    }
    let distances = hists
        .windows(2)
        .map(|w| bhattacharyya(&w[0], &w[1], clamp))
        .collect();
    Ok(ChangePointSeries { distances })
}

pub fn change_points(
    seq: &FrameSequence,
    cfg: &SegmentationConfig,
) -> Result<ChangePointSeries, SegmentationError> {
    if seq.len() < 2 {
        return Err(SegmentationError::TooFewFrames(seq.len()));
    }
    change_points_from_histograms(&histograms(seq), cfg.bc_clamp)
}

/// Picks up to `wanted` cut points from the distance series. A cut `p`
/// (1-based) splits after frame `p`. Candidates are visited by decreasing
/// distance, earliest index first on ties; a candidate is skipped when it
/// would leave a piece shorter than `min_len`.
fn select_cuts(distances: &[f64], n: usize, wanted: usize, min_len: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[b].total_cmp(&distances[a]).then(a.cmp(&b)));

    let mut cuts: Vec<usize> = Vec::with_capacity(wanted);
    for i in order {
        if cuts.len() == wanted {
            break;
        }
        let p = i + 1;
        if p < min_len || n - p < min_len {
            continue;
        }
        if cuts.iter().any(|&q| p.abs_diff(q) < min_len) {
            continue;
        }
        cuts.push(p);
    }
    cuts.sort_unstable();
    cuts
}

/// Segments from precomputed per-frame histograms.
pub fn segment_histograms(
    hists: &[GrayHistogram],
    cfg: &SegmentationConfig,
) -> Result<Segmentation, SegmentationError> {
    cfg.validate()?;
    let n = hists.len();
    if n == 0 {
        return Err(SegmentationError::TooFewFrames(0));
    }
    if n == 1 {
        return Ok(Segmentation {
            events: vec![Event::new(1, 1)],
            distances: Vec::new(),
            tau: None,
        });
    }
    let series = change_points_from_histograms(hists, cfg.bc_clamp)?;
    let k = cfg.k_scenes.min(n);
    let cuts = select_cuts(&series.distances, n, k - 1, cfg.min_event_frames);
    let tau = cuts
        .iter()
        .map(|&p| series.distances[p - 1])
        .min_by(f64::total_cmp);

    let mut events = Vec::with_capacity(cuts.len() + 1);
    let mut start = 1;
    for &p in &cuts {
        events.push(Event::new(start, p));
        start = p + 1;
    }
    events.push(Event::new(start, n));
    Ok(Segmentation {
        events,
        distances: series.distances,
        tau,
    })
}

pub fn segment_scenes(seq: &FrameSequence, cfg: &SegmentationConfig) -> Vec<Event> {
    match segment_histograms(&histograms(seq), cfg) {
        Ok(seg) => seg.events,
        // Invalid configs and empty input degrade to a single event.
        Err(_) => vec![Event::new(1, seq.len().max(1))],
    }
}
