use serde::{Deserialize, Serialize};

use super::ClipFeatureSequence;
use crate::error::{Error, Result};

/// Per-activity scoring constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub name: String,
    pub min_score: f64,
    pub max_score: f64,
    /// Sequence length every video is padded to.
    pub clips: usize,
    /// Pairs whose score difference is strictly below this are similar.
    pub threshold: f64,
}

impl ActivityProfile {
    /// Olympic diving: scores 0–100, 9 clips of 16 frames, threshold 5.
    pub fn diving() -> Self {
        Self {
            name: "diving".into(),
            min_score: 0.0,
            max_score: 100.0,
            clips: 9,
            threshold: 5.0,
        }
    }

    /// Gymnastic vault: scores 0–20, about 75 frames (5 clips). The diving
    /// threshold of 5 on a 100-point range, scaled to 20 points.
    pub fn vault() -> Self {
        Self {
            name: "vault".into(),
            min_score: 0.0,
            max_score: 20.0,
            clips: 5,
            threshold: 1.0,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "diving" => Ok(Self::diving()),
            "vault" => Ok(Self::vault()),
            other => Err(Error::Config(format!("unknown activity `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold must be > 0, got {}", self.threshold)));
        }
        if !(self.max_score > self.min_score) || self.clips == 0 {
            return Err(Error::Config(format!("invalid activity profile `{}`", self.name)));
        }
        Ok(())
    }
}

/// One judged performance.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub action_type: u32,
    pub overall_score: f64,
    pub judge_scores: Option<Vec<f64>>,
    pub difficulty: Option<f64>,
    pub features: ClipFeatureSequence,
}

impl VideoRecord {
    pub fn new(id: impl Into<String>, action_type: u32, overall_score: f64, features: ClipFeatureSequence) -> Self {
        Self {
            id: id.into(),
            action_type,
            overall_score,
            judge_scores: None,
            difficulty: None,
            features,
        }
    }

    pub fn check_score(&self, profile: &ActivityProfile) -> Result<()> {
        if !(self.overall_score >= profile.min_score && self.overall_score <= profile.max_score) {
            return Err(Error::Config(format!(
                "video `{}` score {} outside [{}, {}] for {}",
                self.id, self.overall_score, profile.min_score, profile.max_score, profile.name
            )));
        }
        Ok(())
    }
}
