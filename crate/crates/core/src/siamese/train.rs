use std::collections::{BTreeSet, HashMap};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SiameseParams;
use crate::data::{ClipFeatureSequence, LabeledPair, VideoRecord};
use crate::error::{Error, Result};
use crate::numeric::{bce_with_logit, OptimizerConfig, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmlTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Present every pair in both orders.
    pub symmetrize: bool,
    /// Stop after this many epochs without held-out improvement (0 = never).
    pub patience: usize,
    /// Fraction of videos whose pairs are held out for early stopping.
    pub holdout_fraction: f64,
}

impl Default for DmlTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            symmetrize: true,
            patience: 5,
            holdout_fraction: 0.1,
        }
    }
}

impl DmlTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub holdout_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DmlOutcome {
    /// Parameters from the epoch with the best held-out accuracy (the last
    /// epoch when nothing is held out).
    pub params: SiameseParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
}

impl DmlOutcome {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,loss,holdout_accuracy\n");
        for r in &self.history {
            let acc = r.holdout_accuracy.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.epoch, r.loss, acc));
        }
        out
    }
}

/// Augmented videos are named `<source>#aug<k>`; they belong with their source.
fn base_id(id: &str) -> &str {
    id.split('#').next().unwrap_or(id)
}

/// Splits pairs by source video: a seeded `fraction` of source ids is held
/// out; pairs entirely inside it are returned as held-out, pairs straddling
/// the boundary are dropped.
pub fn holdout_split(pairs: &[LabeledPair], fraction: f64, seed: u64) -> (Vec<LabeledPair>, Vec<LabeledPair>) {
    if fraction <= 0.0 {
        return (pairs.to_vec(), Vec::new());
    }
    let ids: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|p| [base_id(&p.id_p), base_id(&p.id_q)])
        .collect();
    let mut ids: Vec<&str> = ids.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_401d);
    ids.shuffle(&mut rng);
    let count = ((ids.len() as f64 * fraction).round() as usize).max(1).min(ids.len());
    let held: BTreeSet<&str> = ids[..count].iter().copied().collect();
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for p in pairs {
        match (held.contains(base_id(&p.id_p)), held.contains(base_id(&p.id_q))) {
            (false, false) => train.push(p.clone()),
            (true, true) => holdout.push(p.clone()),
            _ => {}
        }
    }
    (train, holdout)
}

/// The per-epoch presentation list before shuffling: `(p, q, label)` and,
/// when `symmetrize` is set, `(q, p, label)` for every pair.
pub fn presentation_order(pairs: &[LabeledPair], symmetrize: bool) -> Vec<LabeledPair> {
    let mut out = Vec::with_capacity(pairs.len() * if symmetrize { 2 } else { 1 });
    for p in pairs {
        out.push(p.clone());
        if symmetrize {
            out.push(p.swapped());
        }
    }
    out
}

/// Embedding of one sequence; identical whichever twin slot it occupies.
pub fn embed(params: &SiameseParams, seq: &ClipFeatureSequence) -> Result<Vec<f64>> {
    params.embed(seq)
}

fn lookup<'a>(by_id: &HashMap<&str, &'a VideoRecord>, id: &str) -> Result<&'a VideoRecord> {
    by_id
        .get(id)
        .copied()
        .ok_or_else(|| Error::Config(format!("pair references unknown video `{id}`")))
}

/// Fraction of pairs whose thresholded match probability (≥ 0.5 means
/// similar) agrees with the label. Embeddings are computed once per video.
pub fn pair_accuracy(params: &SiameseParams, pairs: &[LabeledPair], videos: &[VideoRecord]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs to score"));
    }
    let by_id: HashMap<&str, &VideoRecord> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut correct = 0usize;
    for pair in pairs {
        for id in [pair.id_p.as_str(), pair.id_q.as_str()] {
            if !cache.contains_key(id) {
                let v = lookup(&by_id, id)?;
                cache.insert(id, params.embed(&v.features)?);
            }
        }
        let prob = params.prob_from_embeddings(&cache[pair.id_p.as_str()], &cache[pair.id_q.as_str()])?;
        if u8::from(prob >= 0.5) == pair.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Minimizes mean binary cross-entropy over the labeled pairs.
///
/// Every video referenced by `pairs` must be present in `videos` and all
/// sequences must share one length (pad beforehand).
pub fn train_dml(
    init: SiameseParams,
    pairs: &[LabeledPair],
    videos: &[VideoRecord],
    config: &DmlTrainConfig,
) -> Result<DmlOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no training pairs"));
    }
    if !pairs.iter().any(|p| p.label == 1) || !pairs.iter().any(|p| p.label == 0) {
        return Err(Error::Config("training pairs must contain both labels".into()));
    }
    let by_id: HashMap<&str, &VideoRecord> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    for p in pairs {
        lookup(&by_id, &p.id_p)?;
        lookup(&by_id, &p.id_q)?;
    }

    let (train, holdout) = holdout_split(pairs, config.holdout_fraction, config.seed);
    if train.is_empty() {
        return Err(Error::Config("holdout split left no training pairs".into()));
    }
    let presentations = presentation_order(&train, config.symmetrize);
    info!(
        "dml: {} training pairs ({} presentations/epoch), {} held out",
        train.len(),
        presentations.len(),
        holdout.len()
    );

    let mut params = init;
    let mut optimizer = OptimizerState::new(config.optimizer, &params.blocks);
    let mut grads = params.blocks.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..presentations.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, SiameseParams)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=config.epochs {
        let last_good = params.blocks.clone();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &k in batch {
                let pair = &presentations[k];
                let vp = lookup(&by_id, &pair.id_p)?;
                let vq = lookup(&by_id, &pair.id_q)?;
                let (logit, cache) = params.forward_cached(&vp.features, &vq.features)?;
                let (loss, d_logit) = bce_with_logit(logit, pair.label);
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        last_good: Some(Box::new(last_good)),
                    });
                }
                epoch_loss += loss;
                params.backward_from_cache(&cache, d_logit * scale, &mut grads)?;
            }
            if let Err(e) = optimizer.step(&mut params.blocks, &grads) {
                log::error!("dml: optimizer step aborted: {e}");
                return Err(Error::Divergence {
                    epoch,
                    last_good: Some(Box::new(last_good)),
                });
            }
        }
        let mean_loss = epoch_loss / presentations.len() as f64;
        let holdout_accuracy = if holdout.is_empty() {
            None
        } else {
            Some(pair_accuracy(&params, &holdout, videos)?)
        };
        debug!("dml epoch {epoch}: loss {mean_loss:.5} holdout {holdout_accuracy:?}");
        history.push(EpochRecord {
            epoch,
            loss: mean_loss,
            holdout_accuracy,
        });
        match holdout_accuracy {
            Some(acc) => {
                if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                    best = Some((acc, epoch, params.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if config.patience > 0 && since_best >= config.patience {
                        info!("dml: early stop at epoch {epoch}");
                        break;
                    }
                }
            }
            None => best = Some((f64::NAN, epoch, params.clone())),
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(DmlOutcome {
        params,
        history,
        best_epoch,
        train_pairs: train.len(),
        holdout_pairs: holdout.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Activation;
    use crate::siamese::ModelConfig;
    use rand::Rng;

    fn tiny_videos(n: usize, seed: u64) -> Vec<VideoRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let score = rng.random_range(0.0..100.0);
                let level = score / 100.0;
                let values = (0..4 * 3).map(|_| level + rng.random_range(-0.05..0.05)).collect();
                VideoRecord::new(format!("v{i:02}"), 1, score, ClipFeatureSequence::new(values, 3).unwrap())
            })
            .collect()
    }

    fn model() -> SiameseParams {
        SiameseParams::init(
            ModelConfig {
                input_dim: 3,
                hidden: 4,
                activation: Activation::Relu,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn symmetrized_orders_are_balanced() {
        let pairs = vec![
            LabeledPair { id_p: "a".into(), id_q: "b".into(), label: 1 },
            LabeledPair { id_p: "a".into(), id_q: "c".into(), label: 0 },
        ];
        let order = presentation_order(&pairs, true);
        assert_eq!(order.len(), 4);
        for p in &pairs {
            let fwd = order.iter().filter(|o| o.id_p == p.id_p && o.id_q == p.id_q).count();
            let rev = order.iter().filter(|o| o.id_p == p.id_q && o.id_q == p.id_p).count();
            assert_eq!(fwd, rev);
        }
        assert_eq!(presentation_order(&pairs, false).len(), 2);
    }

    #[test]
    fn holdout_keeps_videos_apart() {
        let vids = tiny_videos(30, 2);
        let pairs = crate::data::make_pairs(&vids, 20.0);
        let (train, held) = holdout_split(&pairs, 0.1, 9);
        let held_ids: BTreeSet<&str> = held.iter().flat_map(|p| [p.id_p.as_str(), p.id_q.as_str()]).collect();
        assert_eq!(held_ids.len(), 3);
        for p in &train {
            assert!(!held_ids.contains(p.id_p.as_str()) && !held_ids.contains(p.id_q.as_str()));
        }
        assert_eq!(base_id("v01#aug7"), "v01");
    }

    #[test]
    fn single_positive_pair_overfits() {
        let vids = tiny_videos(2, 3);
        let pairs = vec![
            LabeledPair { id_p: vids[0].id.clone(), id_q: vids[1].id.clone(), label: 1 },
        ];
        let mut params = model();
        let mut opt = OptimizerState::new(OptimizerConfig::adam(1e-2), &params.blocks);
        let mut grads = params.blocks.zeros_like();
        let mut loss = f64::INFINITY;
        for _ in 0..200 {
            grads.fill_zero();
            let (logit, cache) = params.forward_cached(&vids[0].features, &vids[1].features).unwrap();
            let (l, d) = bce_with_logit(logit, pairs[0].label);
            loss = l;
            params.backward_from_cache(&cache, d, &mut grads).unwrap();
            opt.step(&mut params.blocks, &grads).unwrap();
        }
        assert!(loss < 0.05, "loss {loss}");
    }

    #[test]
    fn training_requires_both_labels() {
        let vids = tiny_videos(3, 4);
        let pairs: Vec<LabeledPair> = crate::data::make_pairs(&vids, 1000.0);
        assert!(train_dml(model(), &pairs, &vids, &DmlTrainConfig::default()).is_err());
        assert!(train_dml(model(), &[], &vids, &DmlTrainConfig::default()).is_err());
    }

    #[test]
    fn training_is_deterministic_and_records_history() {
        let vids = tiny_videos(16, 5);
        let pairs = crate::data::make_pairs(&vids, 15.0);
        let config = DmlTrainConfig {
            epochs: 3,
            optimizer: OptimizerConfig::adam(1e-2),
            holdout_fraction: 0.2,
            seed: 3,
            ..Default::default()
        };
        let a = train_dml(model(), &pairs, &vids, &config).unwrap();
        let b = train_dml(model(), &pairs, &vids, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 3);
        assert!(a.history.iter().all(|r| r.holdout_accuracy.is_some()));
        assert!(a.history_csv().starts_with("epoch,loss,holdout_accuracy\n1,"));
    }

    #[test]
    fn unknown_video_rejected() {
        let vids = tiny_videos(3, 6);
        let pairs = vec![
            LabeledPair { id_p: "v00".into(), id_q: "zzz".into(), label: 1 },
            LabeledPair { id_p: "v00".into(), id_q: "v01".into(), label: 0 },
        ];
        assert!(train_dml(model(), &pairs, &vids, &DmlTrainConfig::default()).is_err());
    }
}
