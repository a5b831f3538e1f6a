//! Application configuration: one JSON document with a section per
//! pipeline stage. Absent sections take their defaults; unknown keys are
//! rejected with their full path.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, DeserializeOwned, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::clients::remote::ClientConfig;
use crate::clustering::ClusterConfig;
use crate::segmentation::SegmentationConfig;
use crate::tgrpo::{RewardConfig, TrainerConfig};
use crate::tree::{ExplorationConfig, TreeSettings};

pub const SEED_ENV: &str = "VIDEOMINER_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
}

/// Where a model role is served from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ClientChoice {
    /// Offline deterministic stand-in.
    #[default]
    Mock,
    Remote(ClientConfig),
}

impl Serialize for ClientChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Mock => s.serialize_str("mock"),
            Self::Remote(cfg) => cfg.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ClientChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ClientChoice;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"mock\" or a client configuration object")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                match v {
                    "mock" => Ok(ClientChoice::Mock),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
                ClientConfig::deserialize(de::value::MapAccessDeserializer::new(map)).map(ClientChoice::Remote)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientsConfig {
    pub captioner: ClientChoice,
    pub embedder: ClientChoice,
    pub policy: ClientChoice,
    pub answerer: ClientChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Base directory for relative paths given on the command line.
    pub workspace: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            workspace: PathBuf::from("."),
        }
    }
}

impl PathsConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workspace.join(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub segmentation: SegmentationConfig,
    pub clustering: ClusterConfig,
    pub exploration: ExplorationConfig,
    pub rewards: RewardConfig,
    pub trainer: TrainerConfig,
    pub clients: ClientsConfig,
    pub paths: PathsConfig,
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = |field: String| Err(ConfigError::Validation(field));
        if let Err(e) = self.segmentation.validate() {
            return v(format!("segmentation.{}", detail(&e.to_string())));
        }
        if let Err(e) = self.clustering.validate() {
            return v(format!("clustering.{}", detail(&e.to_string())));
        }
        if let Err(f) = self.exploration.validate() {
            return v(format!("exploration.{f}"));
        }
        if let Err(f) = self.rewards.validate() {
            return v(format!("rewards.{f}"));
        }
        if let Err(f) = self.trainer.validate() {
            return v(format!("trainer.{f}"));
        }
        let roles = [
            ("captioner", &self.clients.captioner),
            ("embedder", &self.clients.embedder),
            ("policy", &self.clients.policy),
            ("answerer", &self.clients.answerer),
        ];
        for (role, choice) in roles {
            if let ClientChoice::Remote(c) = choice {
                if let Err(f) = c.validate() {
                    return v(format!("clients.{role}.{f}"));
                }
            }
        }
        Ok(())
    }

    pub fn tree_settings(&self) -> TreeSettings {
        TreeSettings {
            segmentation: self.segmentation,
            clustering: self.clustering,
            exploration: self.exploration.clone(),
        }
    }

    /// Applies `VIDEOMINER_SEED` when it holds an integer.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.trainer.seed = raw
                .trim()
                .parse()
                .map_err(|_| ConfigError::Validation(format!("{SEED_ENV}: not an unsigned integer")))?;
        }
        Ok(())
    }
}

/// Strips the "invalid configuration: " prefix of nested error messages.
fn detail(msg: &str) -> &str {
    msg.rsplit(": ").next().unwrap_or(msg)
}

/// Deserializes JSON, failing on the first key the target type ignores.
pub fn from_json_strict<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    de.end().map_err(|e| ConfigError::Parse(e.to_string()))?;
    if let Some(path) = unknown.first() {
        return Err(ConfigError::Validation(format!("{path}: unknown key")));
    }
    Ok(value)
}

pub fn parse_config(text: &str) -> Result<AppConfig, ConfigError> {
    let cfg: AppConfig = from_json_strict(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a config file. Environment overrides are applied
/// separately by [`AppConfig::apply_env`].
pub fn load_config(path: &Path) -> Result<AppConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
