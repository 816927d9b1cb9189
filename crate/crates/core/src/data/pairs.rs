use serde::{Deserialize, Serialize};

use super::VideoRecord;

/// Two video ids and whether their judged scores are within the threshold.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub id_p: String,
    pub id_q: String,
    pub label: u8,
}

impl LabeledPair {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    pub fn swapped(&self) -> Self {
        Self {
            id_p: self.id_q.clone(),
            id_q: self.id_p.clone(),
            label: self.label,
        }
    }
}

/// Similar iff `|s_p - s_q| < threshold`.
pub fn pair_label(score_p: f64, score_q: f64, threshold: f64) -> u8 {
    u8::from((score_p - score_q).abs() < threshold)
}

/// Every unordered pair exactly once, ordered by `(id_p, id_q)` with
/// `id_p < id_q`. Fewer than two videos yields an empty list.
pub fn make_pairs(videos: &[VideoRecord], threshold: f64) -> Vec<LabeledPair> {
    let mut sorted: Vec<&VideoRecord> = videos.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut pairs = Vec::with_capacity(sorted.len() * sorted.len().saturating_sub(1) / 2);
    for (i, p) in sorted.iter().enumerate() {
        for q in &sorted[i + 1..] {
            if p.id == q.id {
                continue;
            }
            pairs.push(LabeledPair {
                id_p: p.id.clone(),
                id_q: q.id.clone(),
                label: pair_label(p.overall_score, q.overall_score, threshold),
            });
        }
    }
    pairs
}

/// Which videos may be paired with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    /// Only videos sharing an action type.
    #[default]
    WithinType,
    /// Every video with every other.
    All,
}

/// [`make_pairs`] restricted by `scope`. Within-type pairs are emitted type
/// by type in ascending type order.
pub fn make_scoped_pairs(videos: &[VideoRecord], threshold: f64, scope: PairScope) -> Vec<LabeledPair> {
    match scope {
        PairScope::All => make_pairs(videos, threshold),
        PairScope::WithinType => {
            let mut by_type: std::collections::BTreeMap<u32, Vec<VideoRecord>> = Default::default();
            for v in videos {
                by_type.entry(v.action_type).or_default().push(v.clone());
            }
            by_type.values().flat_map(|vs| make_pairs(vs, threshold)).collect()
        }
    }
}
