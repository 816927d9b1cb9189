use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::VideoRecord;
use crate::error::{Error, Result};

/// Which performance serves as the reference for an action type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpertMode {
    /// Every video attaining the per-type maximum score.
    #[default]
    Best,
    /// Every video attaining the per-type minimum score.
    Worst,
    /// One best performer of a designated type, used for all types.
    Constant,
}

impl ExpertMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpertMode::Best => "best",
            ExpertMode::Worst => "worst",
            ExpertMode::Constant => "constant",
        }
    }
}

impl fmt::Display for ExpertMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpertMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" | "best_per_type" => Ok(ExpertMode::Best),
            "worst" | "worst_per_type" => Ok(ExpertMode::Worst),
            "constant" => Ok(ExpertMode::Constant),
            other => Err(Error::Config(format!("unknown expert mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRegistry {
    pub mode: ExpertMode,
    /// Reference video ids per action type, sorted.
    pub experts: BTreeMap<u32, Vec<String>>,
}

impl ExpertRegistry {
    pub fn experts_for(&self, action_type: u32) -> Result<&[String]> {
        self.experts
            .get(&action_type)
            .map(Vec::as_slice)
            .filter(|e| !e.is_empty())
            .ok_or_else(|| Error::Registry(format!("no expert registered for action type {action_type}")))
    }

    pub fn is_expert_for(&self, expert_id: &str, action_type: u32) -> bool {
        self.experts
            .get(&action_type)
            .is_some_and(|ids| ids.iter().any(|id| id == expert_id))
    }

    pub fn types(&self) -> impl Iterator<Item = u32> + '_ {
        self.experts.keys().copied()
    }
}

/// Builds the reference registry from training videos.
///
/// In constant mode `constant_type` picks the designated type (default: the
/// smallest type id); its best performer with the smallest id serves every
/// type.
pub fn select_experts(videos: &[VideoRecord], mode: ExpertMode, constant_type: Option<u32>) -> Result<ExpertRegistry> {
    let mut by_type: BTreeMap<u32, Vec<&VideoRecord>> = BTreeMap::new();
    for v in videos {
        by_type.entry(v.action_type).or_default().push(v);
    }
    if by_type.is_empty() {
        return Err(Error::Registry("no training videos".into()));
    }
    let extreme = |vs: &[&VideoRecord], best: bool| -> Vec<String> {
        let target = vs
            .iter()
            .map(|v| v.overall_score)
            .fold(if best { f64::NEG_INFINITY } else { f64::INFINITY }, |acc, s| {
                if best {
                    acc.max(s)
                } else {
                    acc.min(s)
                }
            });
        let mut ids: Vec<String> = vs
            .iter()
            .filter(|v| v.overall_score == target)
            .map(|v| v.id.clone())
            .collect();
        ids.sort();
        ids
    };
    let experts = match mode {
        ExpertMode::Best | ExpertMode::Worst => by_type
            .iter()
            .map(|(&t, vs)| (t, extreme(vs, mode == ExpertMode::Best)))
            .collect(),
        ExpertMode::Constant => {
            let designated = constant_type.unwrap_or(*by_type.keys().next().expect("non-empty"));
            let vs = by_type
                .get(&designated)
                .ok_or_else(|| Error::Registry(format!("designated constant type {designated} has no videos")))?;
            let reference = extreme(vs, true).into_iter().next().expect("non-empty type");
            by_type.keys().map(|&t| (t, vec![reference.clone()])).collect()
        }
    };
    Ok(ExpertRegistry { mode, experts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClipFeatureSequence;

    fn video(id: &str, t: u32, score: f64) -> VideoRecord {
        VideoRecord::new(id, t, score, ClipFeatureSequence::zeros(1, 1).unwrap())
    }

    #[test]
    fn best_and_worst_per_type() {
        let vids = [video("x", 1, 92.8), video("y", 1, 51.2), video("z", 2, 70.0)];
        let best = select_experts(&vids, ExpertMode::Best, None).unwrap();
        let worst = select_experts(&vids, ExpertMode::Worst, None).unwrap();
        assert_eq!(best.experts_for(1).unwrap(), ["x"]);
        assert_eq!(worst.experts_for(1).unwrap(), ["y"]);
        // single-video type is both
        assert_eq!(best.experts_for(2).unwrap(), ["z"]);
        assert_eq!(worst.experts_for(2).unwrap(), ["z"]);
    }

    #[test]
    fn ties_register_all() {
        let vids = [
            video("a", 3, 94.05),
            video("b", 3, 94.05),
            video("c", 3, 34.65),
            video("d", 3, 94.05),
            video("e", 3, 94.05),
        ];
        let best = select_experts(&vids, ExpertMode::Best, None).unwrap();
        assert_eq!(best.experts_for(3).unwrap().len(), 4);
    }

    #[test]
    fn constant_serves_all_types() {
        let vids = [video("a", 1, 90.0), video("b", 1, 95.0), video("c", 2, 99.0), video("d", 5, 10.0)];
        let reg = select_experts(&vids, ExpertMode::Constant, None).unwrap();
        for t in [1, 2, 5] {
            assert_eq!(reg.experts_for(t).unwrap(), ["b"]);
        }
        assert!(reg.is_expert_for("b", 5));
        let reg2 = select_experts(&vids, ExpertMode::Constant, Some(2)).unwrap();
        assert_eq!(reg2.experts_for(1).unwrap(), ["c"]);
        assert!(select_experts(&vids, ExpertMode::Constant, Some(9)).is_err());
    }

    #[test]
    fn missing_type_is_registry_error() {
        let reg = select_experts(&[video("a", 1, 1.0)], ExpertMode::Best, None).unwrap();
        assert!(matches!(reg.experts_for(4), Err(Error::Registry(_))));
        assert!(select_experts(&[], ExpertMode::Best, None).is_err());
    }
}
