//! Expert-referenced score regression on top of a frozen Siamese network.
//!
//! The sigmoid output of the similarity network is replaced by a linear
//! head `S' = w″·Z + b` evaluated on `Z`, the second dense layer's output for
//! the ordered pair `[O_expert ‖ O_test]`. Only `w″` and `b` are trained.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClipFeatureSequence, ExpertRegistry, VideoRecord};
use crate::error::{Error, Result};
use crate::numeric::{
    matvec, mse_loss, Activation, OptimizerConfig, OptimizerState, ParamSet, ParameterBlock,
};
use crate::siamese::model::{D1_B, D1_W, D2_B, D2_W};
use crate::siamese::{SiameseParams, DENSE2_WIDTH};

pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

/// The regression block `w″` (length 64) and its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHead {
    pub blocks: ParamSet,
    /// Scores are divided by this for training and multiplied back on output.
    pub score_scale: f64,
}

impl ScoreHead {
    /// Zero-initialized head.
    pub fn zeros(score_scale: f64) -> Result<Self> {
        if !(score_scale > 0.0) {
            return Err(Error::Config(format!("score scale must be positive, got {score_scale}")));
        }
        Ok(Self {
            blocks: ParamSet::from_blocks(vec![
                ParameterBlock::zeros(HEAD_WEIGHT, vec![1, DENSE2_WIDTH]),
                ParameterBlock::zeros(HEAD_BIAS, vec![1]),
            ])?,
            score_scale,
        })
    }

    pub fn from_blocks(blocks: ParamSet, score_scale: f64) -> Result<Self> {
        let mut head = Self::zeros(score_scale)?;
        head.blocks.check_same_layout(&blocks)?;
        head.blocks = blocks;
        Ok(head)
    }

    pub fn weights(&self) -> &[f64] {
        &self.blocks.block(0).values
    }

    pub fn bias(&self) -> f64 {
        self.blocks.block(1).values[0]
    }

    /// Head output in normalized units.
    pub fn normalized(&self, z: &[f64]) -> Result<f64> {
        if z.len() != DENSE2_WIDTH {
            return Err(Error::shape("head input", DENSE2_WIDTH, z.len()));
        }
        Ok(self.weights().iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.bias())
    }

    /// Head output in score units.
    pub fn score(&self, z: &[f64]) -> Result<f64> {
        Ok(self.normalized(z)? * self.score_scale)
    }
}

/// Squared error of the head on one precomputed `Z` against a normalized
/// target, with its gradient for both head blocks.
pub fn head_loss_and_grad(head: &ScoreHead, z: &[f64], target: f64) -> Result<(f64, ParamSet)> {
    let pred = head.normalized(z)?;
    let (loss, d) = mse_loss(pred, target);
    let mut grads = head.blocks.zeros_like();
    for (g, x) in grads.block_mut(0).values.iter_mut().zip(z) {
        *g = d * x;
    }
    grads.block_mut(1).values[0] = d;
    Ok((loss, grads))
}

/// A frozen Siamese network with a regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    pub siamese: SiameseParams,
    pub head: ScoreHead,
}

impl ScoreModel {
    /// Predicted score for the ordered pair (expert first, test second).
    pub fn score_sequences(&self, expert: &ClipFeatureSequence, test: &ClipFeatureSequence) -> Result<f64> {
        if expert.len() != test.len() {
            return Err(Error::shape("pair sequence lengths (pad first)", expert.len(), test.len()));
        }
        let z = self
            .siamese
            .dense_features(&self.siamese.embed(expert)?, &self.siamese.embed(test)?)?;
        self.head.score(&z)
    }
}

/// Predicted score of `test` against `expert`, refusing an expert that is not
/// registered for the test video's action type.
pub fn score_forward(model: &ScoreModel, registry: &ExpertRegistry, expert: &VideoRecord, test: &VideoRecord) -> Result<f64> {
    if !registry.is_expert_for(&expert.id, test.action_type) {
        return Err(Error::Pairing(format!(
            "`{}` (type {}) is not a registered expert for `{}` (type {})",
            expert.id, expert.action_type, test.id, test.action_type
        )));
    }
    model.score_sequences(&expert.features, &test.features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreTrainConfig {
    pub epochs: usize,
    /// Minibatch size; `None` uses every (expert, video) pair per step.
    pub batch_size: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for ScoreTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: None,
            optimizer: OptimizerConfig::adam(3e-2),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    /// The head with the lowest training loss seen, which is not
    /// necessarily the last one.
    pub head: ScoreHead,
    /// Epoch at which `head` was taken; 0 means the zero initialization.
    pub best_epoch: usize,
    /// Mean normalized squared error; entry 0 is the loss before training.
    pub loss_history: Vec<f64>,
    /// Number of (expert, video) training pairs.
    pub pairs: usize,
}

fn index_videos<'a>(all: impl IntoIterator<Item = &'a VideoRecord>) -> HashMap<&'a str, &'a VideoRecord> {
    all.into_iter().map(|v| (v.id.as_str(), v)).collect()
}

/// Embeddings of every id in `ids`, each computed once.
fn embed_all<'a>(siamese: &SiameseParams, videos: &HashMap<&'a str, &'a VideoRecord>, ids: impl IntoIterator<Item = &'a str>) -> Result<HashMap<&'a str, Vec<f64>>> {
    let mut out = HashMap::new();
    for id in ids {
        if !out.contains_key(id) {
            let v = videos
                .get(id)
                .ok_or_else(|| Error::Registry(format!("expert `{id}` is not among the supplied videos")))?;
            out.insert(id, siamese.embed(&v.features)?);
        }
    }
    Ok(out)
}

/// Fits the head by minimizing mean squared error over every
/// (expert-of-its-type, video) combination. The Siamese blocks are read only.
///
/// `experts` must contain every video named by the registry; `train` is the
/// set of scored videos (no augmentation).
pub fn train_score_head(
    siamese: &SiameseParams,
    registry: &ExpertRegistry,
    train: &[VideoRecord],
    experts: &[VideoRecord],
    score_scale: f64,
    config: &ScoreTrainConfig,
) -> Result<ScoreOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyInput("no score-training videos"));
    }
    if config.epochs == 0 || config.batch_size == Some(0) {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    let frozen_before = siamese.blocks.checksums();
    let lookup = index_videos(experts.iter().chain(train));
    let mut features: Vec<(Vec<f64>, f64)> = Vec::new();
    let expert_ids: Vec<&str> = train
        .iter()
        .map(|v| registry.experts_for(v.action_type))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .map(String::as_str)
        .collect();
    let expert_emb = embed_all(siamese, &lookup, expert_ids)?;
    for v in train {
        let o_q = siamese.embed(&v.features)?;
        for e in registry.experts_for(v.action_type)? {
            let z = siamese.dense_features(&expert_emb[e.as_str()], &o_q)?;
            features.push((z, v.overall_score / score_scale));
        }
    }
    info!("score head: {} (expert, video) pairs", features.len());

    let mut head = ScoreHead::zeros(score_scale)?;
    let mean_loss = |head: &ScoreHead| -> Result<f64> {
        let mut total = 0.0;
        for (z, t) in &features {
            total += mse_loss(head.normalized(z)?, *t).0;
        }
        Ok(total / features.len() as f64)
    };
    let mut history = vec![mean_loss(&head)?];
    let mut best = (head.clone(), 0, history[0]);
    let mut optimizer = OptimizerState::new(config.optimizer, &head.blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut grads = head.blocks.zeros_like();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.unwrap_or(features.len())) {
            grads.fill_zero();
            for &k in batch {
                let (z, t) = &features[k];
                let (_, g) = head_loss_and_grad(&head, z, *t)?;
                grads.add_scaled(&g, 1.0 / batch.len() as f64)?;
            }
            optimizer.step(&mut head.blocks, &grads)?;
        }
        let loss = mean_loss(&head)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                last_good: None,
            });
        }
        history.push(loss);
        if loss < best.2 {
            best = (head.clone(), epoch, loss);
        }
        debug!("score epoch {epoch}: loss {loss:.6}");
    }
    let (head, best_epoch, _) = best;
    if siamese.blocks.checksums() != frozen_before {
        return Err(Error::State("frozen Siamese blocks changed during head training"));
    }
    Ok(ScoreOutcome {
        head,
        best_epoch,
        loss_history: history,
        pairs: features.len(),
    })
}

/// One scored video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub action_type: u32,
    pub true_score: Option<f64>,
    pub predicted_score: f64,
    /// Experts used, `;`-separated.
    pub expert_id: String,
}

/// Scores each video as the mean prediction over its type's experts.
pub fn predict(model: &ScoreModel, registry: &ExpertRegistry, experts: &[VideoRecord], tests: &[VideoRecord]) -> Result<Vec<Prediction>> {
    let lookup = index_videos(experts.iter().chain(tests));
    let mut expert_emb: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut out = Vec::with_capacity(tests.len());
    for v in tests {
        let ids = registry.experts_for(v.action_type)?;
        for id in ids {
            if !expert_emb.contains_key(id.as_str()) {
                let e = lookup
                    .get(id.as_str())
                    .ok_or_else(|| Error::Registry(format!("expert `{id}` is not among the supplied videos")))?;
                if e.features.len() != v.features.len() {
                    return Err(Error::shape("pair sequence lengths (pad first)", e.features.len(), v.features.len()));
                }
                expert_emb.insert(id.as_str(), model.siamese.embed(&e.features)?);
            }
        }
        let o_q = model.siamese.embed(&v.features)?;
        let mut total = 0.0;
        for id in ids {
            let z = model.siamese.dense_features(&expert_emb[id.as_str()], &o_q)?;
            total += model.head.score(&z)?;
        }
        out.push(Prediction {
            video_id: v.id.clone(),
            action_type: v.action_type,
            true_score: Some(v.overall_score),
            predicted_score: total / ids.len() as f64,
            expert_id: ids.join(";"),
        });
    }
    Ok(out)
}

pub const PREDICTIONS_HEADER: &str = "video_id,action_type,true_score,predicted_score,expert_id";

pub fn predictions_to_csv(predictions: &[Prediction]) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for p in predictions {
        let truth = p.true_score.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", p.video_id, p.action_type, truth, p.predicted_score, p.expert_id);
    }
    out
}

pub fn predictions_from_csv(text: &str, source_name: &str) -> Result<Vec<Prediction>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let parse_err = |row: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        location: format!("row {row}"),
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != PREDICTIONS_HEADER {
        return Err(parse_err(0, format!("expected header `{PREDICTIONS_HEADER}`")));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|e| parse_err(row, format!("column {k}: {e}")))
        };
        out.push(Prediction {
            video_id: rec[0].to_string(),
            action_type: rec[1].parse().map_err(|e| parse_err(row, format!("action_type: {e}")))?,
            true_score: if rec[2].is_empty() { None } else { Some(num(2)?) },
            predicted_score: num(3)?,
            expert_id: rec[4].to_string(),
        });
    }
    Ok(out)
}

/// The two halves of `Z` when the dense layers are linear:
/// `Z = a_e + zx_q`, where `a_e` depends only on the expert embedding (and
/// the dense biases) and `zx_q` only on the test embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertBiasTerms {
    pub a_e: Vec<f64>,
    pub zx_q: Vec<f64>,
}

impl ExpertBiasTerms {
    pub fn z(&self) -> Vec<f64> {
        self.a_e.iter().zip(&self.zx_q).map(|(a, b)| a + b).collect()
    }
}

/// Splits `Z` into expert and test contributions. Dense biases `W2·b1 + b2`
/// are folded into `a_e`, so with zero biases this is exactly the bias-free
/// algebra. Requires identity activations.
pub fn expert_bias_decompose(siamese: &SiameseParams, expert: &ClipFeatureSequence, test: &ClipFeatureSequence) -> Result<ExpertBiasTerms> {
    if siamese.activation() != Activation::Identity {
        return Err(Error::Mode(format!(
            "expert-bias decomposition needs identity dense layers, model uses {}",
            siamese.activation().as_str()
        )));
    }
    let o_e = siamese.embed(expert)?;
    let o_q = siamese.embed(test)?;
    Ok(ExpertBiasTerms {
        a_e: expert_term(siamese, &o_e)?,
        zx_q: test_term(siamese, &o_q)?,
    })
}

/// `W2·(W1[:, :M]·o_e + b1) + b2`.
fn expert_term(siamese: &SiameseParams, o_e: &[f64]) -> Result<Vec<f64>> {
    let m = siamese.hidden();
    let w1 = &siamese.blocks.block(D1_W).values;
    let mut y = siamese.blocks.block(D1_B).values.clone();
    for (r, yr) in y.iter_mut().enumerate() {
        *yr += w1[r * 2 * m..r * 2 * m + m].iter().zip(o_e).map(|(a, b)| a * b).sum::<f64>();
    }
    let mut z = vec![0.0; DENSE2_WIDTH];
    matvec(&siamese.blocks.block(D2_W).values, DENSE2_WIDTH, y.len(), &y, &mut z);
    for (zr, b) in z.iter_mut().zip(&siamese.blocks.block(D2_B).values) {
        *zr += b;
    }
    Ok(z)
}

/// `W2·W1[:, M:]·o_q`.
fn test_term(siamese: &SiameseParams, o_q: &[f64]) -> Result<Vec<f64>> {
    let m = siamese.hidden();
    let w1 = &siamese.blocks.block(D1_W).values;
    let rows = siamese.blocks.block(D1_W).shape[0];
    let y: Vec<f64> = (0..rows)
        .map(|r| w1[r * 2 * m + m..(r + 1) * 2 * m].iter().zip(o_q).map(|(a, b)| a * b).sum())
        .collect();
    let mut z = vec![0.0; DENSE2_WIDTH];
    matvec(&siamese.blocks.block(D2_W).values, DENSE2_WIDTH, rows, &y, &mut z);
    Ok(z)
}
