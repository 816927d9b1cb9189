//! Feature-space augmentation and positive-pair balancing.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClipFeatureSequence, LabeledPair, VideoRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    /// Removes one random clip.
    ClipDrop,
    /// Repeats one random clip in place.
    ClipDuplicate,
    /// Adds zero-mean Gaussian noise to every entry.
    FeatureJitter,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 3] = [AugmentKind::ClipDrop, AugmentKind::ClipDuplicate, AugmentKind::FeatureJitter];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentKind::ClipDrop => "clip_drop",
            AugmentKind::ClipDuplicate => "clip_duplicate",
            AugmentKind::FeatureJitter => "feature_jitter",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip_drop" => Ok(AugmentKind::ClipDrop),
            "clip_duplicate" => Ok(AugmentKind::ClipDuplicate),
            "feature_jitter" => Ok(AugmentKind::FeatureJitter),
            other => Err(Error::Config(format!("unknown augmentation kind `{other}`"))),
        }
    }
}

pub fn augment_sequence(
    seq: &ClipFeatureSequence,
    kind: AugmentKind,
    jitter_sigma: f64,
    seed: u64,
) -> Result<ClipFeatureSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = seq.len();
    let d = seq.dim();
    let flat = seq.as_flat();
    let mut out = match kind {
        AugmentKind::ClipDrop => {
            if n < 2 {
                return Err(Error::shape("clip_drop sequence length", ">= 2", n));
            }
            let drop = rng.random_range(0..n);
            let mut v = Vec::with_capacity((n - 1) * d);
            v.extend_from_slice(&flat[..drop * d]);
            v.extend_from_slice(&flat[(drop + 1) * d..]);
            ClipFeatureSequence::new(v, d)?
        }
        AugmentKind::ClipDuplicate => {
            let dup = rng.random_range(0..n);
            let mut v = Vec::with_capacity((n + 1) * d);
            v.extend_from_slice(&flat[..(dup + 1) * d]);
            v.extend_from_slice(&flat[dup * d..]);
            ClipFeatureSequence::new(v, d)?
        }
        AugmentKind::FeatureJitter => {
            if !(jitter_sigma >= 0.0) || !jitter_sigma.is_finite() {
                return Err(Error::Config(format!("jitter sigma must be >= 0, got {jitter_sigma}")));
            }
            if jitter_sigma == 0.0 {
                seq.clone()
            } else {
                let normal = Normal::new(0.0, jitter_sigma).expect("valid sigma");
                let v = flat.iter().map(|&x| x + normal.sample(&mut rng)).collect();
                ClipFeatureSequence::new(v, d)?
            }
        }
    };
    out.clip_frames = seq.clip_frames;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub kinds: Vec<AugmentKind>,
    pub jitter_sigma: f64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            kinds: AugmentKind::ALL.to_vec(),
            jitter_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BalancedPairs {
    /// The input pairs in their original order, followed by synthetic
    /// positives.
    pub pairs: Vec<LabeledPair>,
    /// Augmented videos referenced by the synthetic pairs.
    pub augmented: Vec<VideoRecord>,
}

impl BalancedPairs {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_positive()).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.len() - self.positives()
    }
}

/// Adds augmented positive pairs until the positive count reaches
/// `min(target_positive_count, negatives)`.
///
/// Each synthetic pair is built from a randomly chosen original positive
/// pair by augmenting both member videos. Augmented sequences keep their
/// source length: dropped clips are replaced by front padding, duplicated
/// clips push the first clip out.
pub fn balance_pairs(
    pairs: &[LabeledPair],
    videos: &[VideoRecord],
    target_positive_count: usize,
    config: &BalanceConfig,
    seed: u64,
) -> Result<BalancedPairs> {
    let positives: Vec<&LabeledPair> = pairs.iter().filter(|p| p.is_positive()).collect();
    if positives.is_empty() {
        return Err(Error::Balancing("no positive pairs to replicate".into()));
    }
    if config.kinds.is_empty() {
        return Err(Error::Config("no augmentation kinds configured".into()));
    }
    let negatives = pairs.len() - positives.len();
    let goal = target_positive_count.min(negatives);
    let mut out = BalancedPairs {
        pairs: pairs.to_vec(),
        augmented: Vec::new(),
    };
    if positives.len() >= goal {
        return Ok(out);
    }
    let by_id: HashMap<&str, &VideoRecord> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::Balancing(format!("pair references unknown video `{id}`")))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make_variant = |source: &VideoRecord, serial: usize, rng: &mut ChaCha8Rng| -> Result<VideoRecord> {
        let kind = config.kinds[rng.random_range(0..config.kinds.len())];
        let kind = if kind == AugmentKind::ClipDrop && source.features.len() < 2 {
            AugmentKind::FeatureJitter
        } else {
            kind
        };
        let features = augment_sequence(&source.features, kind, config.jitter_sigma, rng.random())?
            .fit_to_length(source.features.len(), true)?;
        Ok(VideoRecord {
            id: format!("{}#aug{serial}", source.id),
            features,
            ..source.clone()
        })
    };
    let mut serial = 0;
    for _ in positives.len()..goal {
        let base = positives[rng.random_range(0..positives.len())];
        let p = make_variant(lookup(&base.id_p)?, serial, &mut rng)?;
        let q = make_variant(lookup(&base.id_q)?, serial + 1, &mut rng)?;
        serial += 2;
        out.pairs.push(LabeledPair {
            id_p: p.id.clone(),
            id_q: q.id.clone(),
            label: 1,
        });
        out.augmented.push(p);
        out.augmented.push(q);
    }
    Ok(out)
}
