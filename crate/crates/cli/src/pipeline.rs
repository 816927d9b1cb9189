use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use aqa_core::checkpoint::Checkpoint;
use aqa_core::data::{
    balance_pairs, load_videos, make_scoped_pairs, select_experts, ActivityProfile, DatasetManifest, ExpertRegistry, Split,
    VideoRecord,
};
use aqa_core::eval::{precision_recall, EvalReport};
use aqa_core::feedback::{ClipFeedback, FeedbackReport};
use aqa_core::numeric::{Activation, ParamSet};
use aqa_core::scoring::{predict, predictions_from_csv, predictions_to_csv, train_score_head, Prediction, ScoreHead, ScoreModel};
use aqa_core::siamese::{pair_accuracy, train_dml, SiameseParams};
use aqa_core::synthetic::{generate_dataset, read_faults_csv};
use aqa_core::Error as CoreError;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, ExitKind};

pub const DML_CHECKPOINT: &str = "checkpoints/dml.aqac";
pub const DML_LAST_GOOD: &str = "checkpoints/dml.last_good.aqac";
pub const SCORE_CHECKPOINT: &str = "checkpoints/score.aqac";

/// Seed offsets so each stage draws from its own stream.
const BALANCE_SEED_OFFSET: u64 = 1;
const INIT_SEED_OFFSET: u64 = 2;

/// One run directory and its effective configuration.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub run_dir: PathBuf,
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlSummary {
    pub train_pairs: usize,
    pub holdout_pairs: usize,
    pub positives: usize,
    pub negatives: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub pairs: usize,
    pub initial_loss: f64,
    /// Loss of the stored head.
    pub best_loss: f64,
    pub best_epoch: usize,
}

/// Written to `report.json`; a pure function of the stored predictions and
/// the activity profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rho: f64,
    pub mse: f64,
    pub n: usize,
    pub per_type: BTreeMap<u32, aqa_core::eval::TypeMetrics>,
    pub max_score: f64,
    /// `0.05 · 0.01 · S_max²`.
    pub mse_band: f64,
    pub mse_within_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlEval {
    pub test_pairs: usize,
    pub test_pair_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub video_id: String,
    pub expert_id: String,
}

/// `feedback/index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackIndex {
    pub threshold: f64,
    pub entries: Vec<FeedbackEntry>,
    /// Present when the dataset ships planted faults (`faults.csv`).
    pub localization: Option<Localization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub precision: f64,
    pub recall: f64,
    pub predicted: usize,
    pub planted: usize,
    pub hits: usize,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CoreError::io(path, e).into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    write_file(path, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::new(ExitKind::Data, format!("{}: {e}", path.display())))
}

fn subset(blocks: &ParamSet, keep: impl Fn(&str) -> bool) -> CliResult<ParamSet> {
    Ok(ParamSet::from_blocks(
        blocks.blocks().iter().filter(|b| keep(&b.name)).cloned().collect(),
    )?)
}

fn is_head_block(name: &str) -> bool {
    name.starts_with("head.")
}

impl Run {
    pub fn new(config: RunConfig, run_dir: impl Into<PathBuf>, manifest: Option<PathBuf>) -> CliResult<Self> {
        Ok(Self {
            config: config.finalize()?,
            run_dir: run_dir.into(),
            manifest,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.path("data/manifest.csv"))
    }

    fn profile(&self) -> CliResult<ActivityProfile> {
        self.config.profile()
    }

    pub fn echo_config(&self) -> CliResult<()> {
        write_file(&self.path("config.echo.json"), self.config.to_json())
    }

    /// Writes a synthetic dataset to `<run-dir>/data`.
    pub fn gen_synthetic(&self) -> CliResult<PathBuf> {
        let profile = self.profile()?;
        let syn = &self.config.synthetic;
        if syn.clips != profile.clips || syn.max_score != profile.max_score {
            return Err(CliError::usage(format!(
                "synthetic.clips/max_score ({}, {}) disagree with the {} profile ({}, {})",
                syn.clips, syn.max_score, profile.name, profile.clips, profile.max_score
            )));
        }
        let dataset = generate_dataset(syn)?;
        let dir = self.path("data");
        let manifest = dataset.write(&dir)?;
        info!(
            "generated {} videos ({} planted faults) in {}",
            dataset.videos.len(),
            dataset.fault_count(),
            dir.display()
        );
        Ok(manifest)
    }

    /// Loads every video, padded (or truncated) to the profile length.
    pub fn load_dataset(&self) -> CliResult<Vec<(VideoRecord, Split)>> {
        let path = self.manifest_path();
        if !path.is_file() {
            return Err(CliError::missing(format!("manifest {} not found", path.display())));
        }
        let profile = self.profile()?;
        let manifest = DatasetManifest::load(&path)?;
        let mut videos = load_videos(&manifest)?;
        let dim = videos.first().map(|(v, _)| v.features.dim());
        for (v, _) in &mut videos {
            v.check_score(&profile)?;
            if Some(v.features.dim()) != dim {
                return Err(CliError::new(
                    ExitKind::Data,
                    format!("video `{}` has dimension {}, expected {}", v.id, v.features.dim(), dim.unwrap_or(0)),
                ));
            }
            v.features = v.features.fit_to_length(profile.clips, self.config.truncate)?;
        }
        Ok(videos)
    }

    fn in_splits(videos: &[(VideoRecord, Split)], splits: &[Split]) -> Vec<VideoRecord> {
        videos.iter().filter(|(_, s)| splits.contains(s)).map(|(v, _)| v.clone()).collect()
    }

    fn data_dim(videos: &[(VideoRecord, Split)]) -> CliResult<usize> {
        videos
            .first()
            .map(|(v, _)| v.features.dim())
            .ok_or_else(|| CliError::new(ExitKind::Data, "manifest lists no videos"))
    }

    /// Phase one: trains the Siamese network on `train_dml` videos.
    /// `dml.epochs = 0` stores the untrained initialization instead.
    pub fn train_dml(&self) -> CliResult<DmlSummary> {
        let profile = self.profile()?;
        let videos = self.load_dataset()?;
        let model = self.config.model_config(Self::data_dim(&videos)?)?;
        let hash = self.config.config_hash(&model)?;
        let dml_videos = Self::in_splits(&videos, &[Split::TrainDml]);
        let raw = make_scoped_pairs(&dml_videos, profile.threshold, self.config.pairing);
        let seed = self.config.seed;
        let (pairs, all_videos) = if self.config.balance.enabled {
            let target = self.config.balance.target_positive.unwrap_or(usize::MAX);
            let balanced = balance_pairs(&raw, &dml_videos, target, &self.config.balance.augment, seed + BALANCE_SEED_OFFSET)?;
            let mut all = dml_videos.clone();
            all.extend(balanced.augmented);
            (balanced.pairs, all)
        } else {
            (raw, dml_videos.clone())
        };
        let positives = pairs.iter().filter(|p| p.is_positive()).count();
        let init = SiameseParams::init(model, seed + INIT_SEED_OFFSET)?;
        let checkpoint = |params: ParamSet, epoch: usize| {
            Checkpoint::new(params)
                .with_meta("phase", "dml")
                .with_meta("epoch", epoch)
                .with_meta("seed", seed)
                .with_meta("config_hash", &hash)
                .with_meta("activation", model.activation.as_str())
        };
        let summary = if self.config.dml.epochs == 0 {
            info!("dml.epochs = 0: storing the untrained initialization");
            checkpoint(init.blocks, 0).save(&self.path(DML_CHECKPOINT))?;
            DmlSummary {
                train_pairs: 0,
                holdout_pairs: 0,
                positives,
                negatives: pairs.len() - positives,
                epochs_run: 0,
                best_epoch: 0,
            }
        } else {
            let outcome = match train_dml(init, &pairs, &all_videos, &self.config.dml) {
                Ok(o) => o,
                Err(CoreError::Divergence { epoch, last_good }) => {
                    if let Some(params) = last_good {
                        checkpoint(*params, epoch.saturating_sub(1)).save(&self.path(DML_LAST_GOOD))?;
                    }
                    return Err(CliError::new(
                        ExitKind::Divergence,
                        format!("training diverged at epoch {epoch}; last good parameters saved to {DML_LAST_GOOD}"),
                    ));
                }
                Err(e) => return Err(e.into()),
            };
            write_file(&self.path("dml_history.csv"), outcome.history_csv())?;
            checkpoint(outcome.params.blocks, outcome.best_epoch).save(&self.path(DML_CHECKPOINT))?;
            DmlSummary {
                train_pairs: outcome.train_pairs,
                holdout_pairs: outcome.holdout_pairs,
                positives,
                negatives: pairs.len() - positives,
                epochs_run: outcome.history.len(),
                best_epoch: outcome.best_epoch,
            }
        };
        Ok(summary)
    }

    fn require(&self, rel: &str, produced_by: &str) -> CliResult<PathBuf> {
        let p = self.path(rel);
        if !p.is_file() {
            return Err(CliError::missing(format!("{} not found; run `{produced_by}` first", p.display())));
        }
        Ok(p)
    }

    /// Loads a checkpoint and refuses it unless it was produced by `phase`
    /// under the current profile and architecture.
    fn load_checked(&self, rel: &str, produced_by: &str, phase: &str, dim: usize) -> CliResult<(Checkpoint, Activation)> {
        let ck = Checkpoint::load(&self.require(rel, produced_by)?)?;
        let found = ck.require_meta("phase")?;
        if found != phase {
            return Err(CliError::new(ExitKind::Checkpoint, format!("{rel} is a `{found}` checkpoint, expected `{phase}`")));
        }
        let model = self.config.model_config(dim)?;
        if ck.require_meta("config_hash")? != self.config.config_hash(&model)? {
            return Err(CliError::new(
                ExitKind::Checkpoint,
                format!("{rel} was produced under a different profile or model configuration"),
            ));
        }
        let activation = Activation::parse(ck.require_meta("activation")?)?;
        Ok((ck, activation))
    }

    /// Phase two: fits the regression head on the frozen network using both
    /// training splits, without augmentation.
    pub fn train_score(&self) -> CliResult<ScoreSummary> {
        let profile = self.profile()?;
        let videos = self.load_dataset()?;
        let (dml, activation) = self.load_checked(DML_CHECKPOINT, "train-dml", "dml", Self::data_dim(&videos)?)?;
        let siamese = SiameseParams::from_blocks(dml.blocks.clone(), activation)?;
        let train = Self::in_splits(&videos, &[Split::TrainDml, Split::TrainScore]);
        let registry = select_experts(&train, self.config.expert_mode, self.config.constant_type)?;
        let outcome = train_score_head(&siamese, &registry, &train, &train, profile.max_score, &self.config.score)?;
        let mut blocks = dml.blocks.clone();
        for b in outcome.head.blocks.blocks() {
            blocks.push(b.clone())?;
        }
        let mut ck = Checkpoint {
            blocks,
            metadata: dml.metadata.clone(),
        };
        ck = ck
            .with_meta("phase", "score")
            .with_meta("dml_epoch", dml.require_meta("epoch")?)
            .with_meta("epoch", outcome.best_epoch)
            .with_meta("score_scale", profile.max_score)
            .with_meta("expert_mode", self.config.expert_mode.as_str())
            .with_meta("registry", serde_json::to_string(&registry).expect("registry serializes"));
        ck.save(&self.path(SCORE_CHECKPOINT))?;
        let mut history = String::from("epoch,loss\n");
        for (i, l) in outcome.loss_history.iter().enumerate() {
            history.push_str(&format!("{i},{l}\n"));
        }
        write_file(&self.path("score_history.csv"), history)?;
        Ok(ScoreSummary {
            pairs: outcome.pairs,
            initial_loss: outcome.loss_history[0],
            best_loss: outcome.loss_history[outcome.best_epoch],
            best_epoch: outcome.best_epoch,
        })
    }

    /// The trained score model and its expert registry.
    pub fn load_score_model(&self, dim: usize) -> CliResult<(ScoreModel, ExpertRegistry)> {
        let (ck, activation) = self.load_checked(SCORE_CHECKPOINT, "train-score", "score", dim)?;
        let siamese = SiameseParams::from_blocks(subset(&ck.blocks, |n| !is_head_block(n))?, activation)?;
        let scale: f64 = ck
            .require_meta("score_scale")?
            .parse()
            .map_err(|_| CliError::new(ExitKind::Checkpoint, "bad score_scale metadata"))?;
        let head = ScoreHead::from_blocks(subset(&ck.blocks, is_head_block)?, scale)?;
        let registry: ExpertRegistry = serde_json::from_str(ck.require_meta("registry")?)
            .map_err(|e| CliError::new(ExitKind::Checkpoint, format!("bad registry metadata: {e}")))?;
        Ok((ScoreModel { siamese, head }, registry))
    }

    /// Scores the test split; writes predictions, the metric report and the
    /// pair accuracy of the frozen network on test pairs.
    pub fn evaluate(&self) -> CliResult<RunReport> {
        let profile = self.profile()?;
        let videos = self.load_dataset()?;
        let (model, registry) = self.load_score_model(Self::data_dim(&videos)?)?;
        let train = Self::in_splits(&videos, &[Split::TrainDml, Split::TrainScore]);
        let test = Self::in_splits(&videos, &[Split::Test]);
        if test.is_empty() {
            return Err(CliError::new(ExitKind::Data, "no test videos in the manifest"));
        }
        let predictions = predict(&model, &registry, &train, &test)?;
        write_file(&self.path("predictions.csv"), predictions_to_csv(&predictions))?;
        let test_pairs = make_scoped_pairs(&test, profile.threshold, self.config.pairing);
        if !test_pairs.is_empty() {
            let acc = pair_accuracy(&model.siamese, &test_pairs, &test)?;
            write_json(
                &self.path("dml_eval.json"),
                &DmlEval {
                    test_pairs: test_pairs.len(),
                    test_pair_accuracy: acc,
                },
            )?;
        }
        self.write_report(&predictions)
    }

    fn write_report(&self, predictions: &[Prediction]) -> CliResult<RunReport> {
        let profile = self.profile()?;
        let eval = EvalReport::from_predictions(predictions)?;
        let band = 0.05 * 0.01 * profile.max_score * profile.max_score;
        let report = RunReport {
            rho: eval.rho,
            mse: eval.mse,
            n: eval.n,
            per_type: eval.per_type.clone(),
            max_score: profile.max_score,
            mse_band: band,
            mse_within_band: eval.mse <= band,
        };
        write_json(&self.path("report.json"), &report)?;
        write_file(&self.path("report.csv"), eval.to_csv())?;
        Ok(report)
    }

    /// Clip-level feedback for test videos (or `feedback.videos`) against the
    /// first registered expert of each video's type.
    pub fn feedback(&self) -> CliResult<FeedbackIndex> {
        let videos = self.load_dataset()?;
        let (model, registry) = self.load_score_model(Self::data_dim(&videos)?)?;
        let by_id: BTreeMap<&str, &VideoRecord> = videos.iter().map(|(v, _)| (v.id.as_str(), v)).collect();
        let targets: Vec<&VideoRecord> = match &self.config.feedback.videos {
            Some(ids) => ids
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| CliError::usage(format!("feedback video `{id}` is not in the manifest")))
                })
                .collect::<CliResult<_>>()?,
            None => videos.iter().filter(|(_, s)| *s == Split::Test).map(|(v, _)| v).collect(),
        };
        let threshold = self.config.feedback.threshold;
        let planted = self.planted_faults()?;
        let mut entries = Vec::new();
        let (mut predicted_set, mut truth_set) = (BTreeSet::new(), BTreeSet::new());
        let clips = self.profile()?.clips;
        for (k, v) in targets.iter().enumerate() {
            let expert_id = &registry.experts_for(v.action_type)?[0];
            let expert = by_id
                .get(expert_id.as_str())
                .ok_or_else(|| CliError::new(ExitKind::Data, format!("expert `{expert_id}` is not in the manifest")))?;
            let report = FeedbackReport::compute(&model.siamese, &v.id, &v.features, expert_id, &expert.features, threshold)?;
            self.write_feedback_files(&report)?;
            if let Some(planted) = &planted {
                predicted_set.extend(report.faulty_indices().into_iter().map(|j| k * clips + j));
                truth_set.extend(planted.get(&v.id).into_iter().flatten().map(|&j| k * clips + j));
            }
            entries.push(FeedbackEntry {
                video_id: v.id.clone(),
                expert_id: expert_id.clone(),
            });
        }
        let localization = planted.map(|_| {
            let (precision, recall) = precision_recall(&predicted_set, &truth_set);
            Localization {
                precision,
                recall,
                predicted: predicted_set.len(),
                planted: truth_set.len(),
                hits: predicted_set.intersection(&truth_set).count(),
            }
        });
        let index = FeedbackIndex {
            threshold,
            entries,
            localization,
        };
        write_json(&self.path("feedback/index.json"), &index)?;
        Ok(index)
    }

    fn planted_faults(&self) -> CliResult<Option<BTreeMap<String, Vec<usize>>>> {
        let path = self.manifest_path().with_file_name("faults.csv");
        if path.is_file() {
            Ok(Some(read_faults_csv(&path)?))
        } else {
            Ok(None)
        }
    }

    fn write_feedback_files(&self, report: &FeedbackReport) -> CliResult<()> {
        let stem = self.path("feedback").join(&report.video_id);
        write_file(&stem.with_extension("csv"), report.to_csv())?;
        write_file(&stem.with_extension("svg"), report.to_svg())
    }

    /// Rebuilds `report.json`, `report.csv` and the feedback charts from
    /// stored predictions and feedback tables.
    pub fn report(&self) -> CliResult<RunReport> {
        let path = self.require("predictions.csv", "evaluate")?;
        let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
        let predictions = predictions_from_csv(&text, &path.display().to_string())?;
        let report = self.write_report(&predictions)?;
        let index_path = self.path("feedback/index.json");
        if index_path.is_file() {
            let index: FeedbackIndex = read_json(&index_path)?;
            for entry in &index.entries {
                let csv_path = self.path("feedback").join(format!("{}.csv", entry.video_id));
                let text = fs::read_to_string(&csv_path).map_err(|e| CoreError::io(&csv_path, e))?;
                let clips: Vec<ClipFeedback> = FeedbackReport::clips_from_csv(&text, &csv_path.display().to_string())?;
                self.write_feedback_files(&FeedbackReport {
                    video_id: entry.video_id.clone(),
                    expert_id: entry.expert_id.clone(),
                    threshold: index.threshold,
                    clips,
                })?;
            }
        } else {
            warn!("no feedback/index.json; skipping feedback charts");
        }
        Ok(report)
    }
}
