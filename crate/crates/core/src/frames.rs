//! Frame ingestion: manifest loading, grayscale conversion and uniform
//! temporal sampling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::DynamicImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest entry {entry}: file not found: {path}")]
    MissingFile { entry: usize, path: PathBuf },
    #[error("manifest entry {entry}: cannot decode {path}: {reason}")]
    DecodeFailure {
        entry: usize,
        path: PathBuf,
        reason: String,
    },
    #[error("manifest entry {entry}: resolution {found_w}x{found_h} differs from {expected_w}x{expected_h}")]
    ResolutionMismatch {
        entry: usize,
        expected_w: u32,
        expected_h: u32,
        found_w: u32,
        found_h: u32,
    },
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A single grayscale frame. Pixels are stored row-major and shared, so
/// cloning a frame is cheap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    index: usize,
    width: u32,
    height: u32,
    pixels: Arc<[u8]>,
}

impl Frame {
    pub fn new(index: usize, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, IngestError> {
        if width == 0 || height == 0 {
            return Err(IngestError::InvalidFrame(format!(
                "frame {index}: dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(IngestError::InvalidFrame(format!(
                "frame {index}: expected {expected} pixels, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            pixels: pixels.into(),
        })
    }

    /// Original temporal position (1-based frame number).
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn mean_intensity(&self) -> f64 {
        let sum: u64 = self.pixels.iter().map(|&p| u64::from(p)).sum();
        sum as f64 / self.pixels.len() as f64
    }
}

/// Ordered frames of one video. Indices are strictly increasing and all
/// frames share one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    source_id: String,
    original_count: usize,
}

impl FrameSequence {
    pub fn new(
        frames: Vec<Frame>,
        source_id: impl Into<String>,
        original_count: usize,
    ) -> Result<Self, IngestError> {
        let first = frames.first().ok_or(IngestError::EmptySequence)?;
        let (w, h) = (first.width, first.height);
        for (entry, pair) in frames.windows(2).enumerate() {
            if pair[1].index <= pair[0].index {
                return Err(IngestError::InvalidFrame(format!(
                    "frame indices must be strictly increasing ({} then {})",
                    pair[0].index, pair[1].index
                )));
            }
            let f = &pair[1];
            if f.width != w || f.height != h {
                return Err(IngestError::ResolutionMismatch {
                    entry: entry + 1,
                    expected_w: w,
                    expected_h: h,
                    found_w: f.width,
                    found_h: f.height,
                });
            }
        }
        let original_count = original_count.max(frames.len());
        Ok(Self {
            frames,
            source_id: source_id.into(),
            original_count,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn original_count(&self) -> usize {
        self.original_count
    }

    pub fn indices(&self) -> Vec<usize> {
        self.frames.iter().map(Frame::index).collect()
    }

    /// Sub-sequence made of the frames at the given 0-based positions.
    pub fn select(&self, positions: &[usize]) -> Result<Self, IngestError> {
        let frames = positions
            .iter()
            .map(|&p| {
                self.frames.get(p).cloned().ok_or_else(|| {
                    IngestError::InvalidFrame(format!("position {p} out of range"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(frames, self.source_id.clone(), self.original_count)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub index: usize,
}

/// List of frame files with their temporal indices. Relative paths are
/// resolved against `base_dir`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VideoManifest {
    pub entries: Vec<ManifestEntry>,
    pub metadata: BTreeMap<String, String>,
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    List(Vec<ManifestEntry>),
    Full {
        entries: Vec<ManifestEntry>,
        #[serde(default)]
        metadata: BTreeMap<String, String>,
    },
}

impl VideoManifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let manifest = Self {
            entries,
            metadata: BTreeMap::new(),
            base_dir: base_dir.into(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Reads a manifest file: a JSON array of `{"path", "index"}` objects.
    pub fn from_file(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed: ManifestFile = serde_json::from_str(&text)
            .map_err(|e| IngestError::InvalidManifest(format!("{}: {e}", path.display())))?;
        let (entries, metadata) = match parsed {
            ManifestFile::List(entries) => (entries, BTreeMap::new()),
            ManifestFile::Full { entries, metadata } => (entries, metadata),
        };
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self {
            entries,
            metadata,
            base_dir,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.entries.is_empty() {
            return Err(IngestError::EmptySequence);
        }
        for pair in self.entries.windows(2) {
            if pair[1].index <= pair[0].index {
                return Err(IngestError::InvalidManifest(format!(
                    "entries must be sorted by index without duplicates ({} then {})",
                    pair[0].index, pair[1].index
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.entries).unwrap_or(serde_json::Value::Null)
    }
}

/// BT.601 luma, rounded half away from zero.
pub fn to_grayscale(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

fn decode_gray(entry: usize, path: &Path) -> Result<(u32, u32, Vec<u8>), IngestError> {
    if !path.exists() {
        return Err(IngestError::MissingFile {
            entry,
            path: path.to_path_buf(),
        });
    }
    let decode_err = |reason: String| IngestError::DecodeFailure {
        entry,
        path: path.to_path_buf(),
        reason,
    };
    let img = image::io::Reader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    let (w, h) = (img.width(), img.height());
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| to_grayscale(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    Ok((w, h, pixels))
}

/// Decodes every manifest entry (concurrently) into a grayscale sequence.
pub fn load_frames(manifest: &VideoManifest) -> Result<FrameSequence, IngestError> {
    manifest.validate()?;
    let decoded = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| decode_gray(i, &manifest.resolve(entry)))
        .collect::<Vec<_>>();

    let mut frames = Vec::with_capacity(decoded.len());
    let mut dims: Option<(u32, u32)> = None;
    for (i, (result, entry)) in decoded.into_iter().zip(&manifest.entries).enumerate() {
        let (w, h, pixels) = result?;
        match dims {
            None => dims = Some((w, h)),
            Some((ew, eh)) if (ew, eh) != (w, h) => {
                return Err(IngestError::ResolutionMismatch {
                    entry: i,
                    expected_w: ew,
                    expected_h: eh,
                    found_w: w,
                    found_h: h,
                })
            }
            Some(_) => {}
        }
        frames.push(Frame::new(entry.index, w, h, pixels)?);
    }
    let source_id = manifest
        .metadata
        .get("source_id")
        .cloned()
        .unwrap_or_else(|| manifest.base_dir.display().to_string());
    let count = frames.len();
    FrameSequence::new(frames, source_id, count)
}

/// 0-based positions picked by center-offset uniform sampling of `n` out of
/// `len` items: `floor((k + 0.5) * len / n)`, deduplicated.
pub fn uniform_positions(len: usize, n: usize) -> Vec<usize> {
    if n == 0 || len == 0 {
        return Vec::new();
    }
    if n >= len {
        return (0..len).collect();
    }
    let mut out: Vec<usize> = (0..n).map(|k| ((2 * k + 1) * len) / (2 * n)).collect();
    out.dedup();
    out
}

pub fn uniform_sample(seq: &FrameSequence, n: usize) -> Result<FrameSequence, IngestError> {
    if seq.is_empty() {
        return Err(IngestError::EmptySequence);
    }
    if n == 0 {
        return Err(IngestError::InvalidFrame("sample count must be at least 1".into()));
    }
    seq.select(&uniform_positions(seq.len(), n))
}
