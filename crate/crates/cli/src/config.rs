use std::fs;
use std::path::Path;

use aqa_core::data::{ActivityProfile, BalanceConfig, ExpertMode, PairScope};
use aqa_core::numeric::Activation;
use aqa_core::scoring::ScoreTrainConfig;
use aqa_core::siamese::{DmlTrainConfig, ModelConfig};
use aqa_core::synthetic::SyntheticConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Clip feature dimension; taken from the data when absent.
    pub input_dim: Option<usize>,
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            input_dim: None,
            hidden: m.hidden,
            activation: m.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSection {
    pub enabled: bool,
    /// Positive pairs to reach; defaults to the negative count.
    pub target_positive: Option<usize>,
    pub augment: BalanceConfig,
}

impl Default for BalanceSection {
    fn default() -> Self {
        Self {
            enabled: true,
            target_positive: None,
            augment: BalanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackSection {
    pub threshold: f64,
    /// Videos to report on; all test videos when absent.
    pub videos: Option<Vec<String>>,
}

impl Default for FeedbackSection {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            videos: None,
        }
    }
}

/// Everything a run needs. Loaded from JSON; command-line flags override
/// individual keys. The top-level `seed` drives every stage: the seeds
/// inside `dml`, `score` and `synthetic` are overwritten from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// `diving`, `vault` or `custom`.
    pub activity: String,
    /// Required for `custom`; replaces the built-in profile otherwise.
    pub profile: Option<ActivityProfile>,
    pub model: ModelSection,
    /// Which training videos are paired for metric learning.
    pub pairing: PairScope,
    pub dml: DmlTrainConfig,
    pub balance: BalanceSection,
    pub score: ScoreTrainConfig,
    pub expert_mode: ExpertMode,
    /// Designated type for the constant expert mode (default: smallest id).
    pub constant_type: Option<u32>,
    /// Cut sequences longer than the profile's clip count instead of failing.
    pub truncate: bool,
    pub feedback: FeedbackSection,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            activity: "diving".into(),
            profile: None,
            model: ModelSection::default(),
            pairing: PairScope::WithinType,
            dml: DmlTrainConfig::default(),
            balance: BalanceSection::default(),
            score: ScoreTrainConfig::default(),
            expert_mode: ExpertMode::Best,
            constant_type: None,
            truncate: false,
            feedback: FeedbackSection::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Propagates the top-level seed and checks cross-field constraints.
    pub fn finalize(mut self) -> CliResult<Self> {
        self.dml.seed = self.seed;
        self.score.seed = self.seed;
        self.synthetic.seed = self.seed;
        let profile = self.profile()?;
        profile.validate()?;
        // epochs = 0 is meaningful here: the run stores the untrained network.
        DmlTrainConfig {
            epochs: self.dml.epochs.max(1),
            ..self.dml.clone()
        }
        .validate()?;
        if self.model.hidden == 0 || self.model.input_dim == Some(0) {
            return Err(CliError::usage("model.hidden and model.input_dim must be positive"));
        }
        if !matches!(self.model.activation, Activation::Relu | Activation::Identity) {
            return Err(CliError::usage("model.activation must be relu or identity"));
        }
        if !(self.feedback.threshold > 0.0 && self.feedback.threshold < 1.0) {
            return Err(CliError::usage("feedback.threshold must be in (0, 1)"));
        }
        Ok(self)
    }

    pub fn profile(&self) -> CliResult<ActivityProfile> {
        match (&self.profile, self.activity.as_str()) {
            (Some(p), _) => Ok(p.clone()),
            (None, "custom") => Err(CliError::usage("activity `custom` needs a `profile` section")),
            (None, name) => Ok(ActivityProfile::by_name(name)?),
        }
    }

    /// Model configuration once the feature dimension is known.
    pub fn model_config(&self, data_dim: usize) -> CliResult<ModelConfig> {
        if let Some(d) = self.model.input_dim {
            if d != data_dim {
                return Err(CliError::usage(format!(
                    "model.input_dim is {d} but the feature files have dimension {data_dim}"
                )));
            }
        }
        let config = ModelConfig {
            input_dim: data_dim,
            hidden: self.model.hidden,
            activation: self.model.activation,
        };
        config.validate()?;
        Ok(config)
    }

    /// Fingerprint of everything a checkpoint's shape and meaning depend on:
    /// the activity profile and the model architecture.
    pub fn config_hash(&self, model: &ModelConfig) -> CliResult<String> {
        #[derive(Serialize)]
        struct Hashed<'a> {
            profile: &'a ActivityProfile,
            model: &'a ModelConfig,
        }
        let profile = self.profile()?;
        let bytes = serde_json::to_vec(&Hashed {
            profile: &profile,
            model,
        })
        .expect("hash input serializes");
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
