//! Synthetic clip-feature datasets with planted scores and faults.
//!
//! Each action type has a prototype trajectory of `clips` feature vectors.
//! A small set of unit "error directions" is orthogonal to every prototype.
//! A video is the prototype plus, per clip, a deviation along one error
//! direction and some nuisance noise orthogonal to all error directions.
//! Deviation magnitudes are drawn independently per clip from
//! `σ_dev · U(0, deviation_max)`; a faulty clip gets an extra
//! `fault_magnitude · U(1 − spread, 1 + spread) · σ_dev` on top.
//!
//! The planted score is `clamp(S_max − c · Σ_j ‖d_j‖, 0, S_max)`, so it is a
//! function of the stored deviation magnitudes only. One deviation-free
//! expert per type scores exactly `S_max`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    pair_label, write_feature_file, ClipFeatureSequence, DatasetManifest, FeatureFile, ManifestRow, Split, VideoRecord,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_types: u32,
    /// Generated videos per type, including the expert.
    pub videos_per_type: usize,
    /// Length of the expert and of the longest videos.
    pub clips: usize,
    /// Shortest non-expert video; lengths are uniform in `min_clips..=clips`
    /// and shorter videos keep the prototype's final clips.
    pub min_clips: usize,
    pub dim: usize,
    /// Standard deviation of prototype entries.
    pub prototype_scale: f64,
    /// Number of orthonormal error directions.
    pub error_directions: usize,
    /// Base deviation scale `σ_dev`.
    pub sigma_dev: f64,
    /// Upper end of the per-clip deviation draw, in units of `σ_dev`.
    pub deviation_max: f64,
    /// Standard deviation of score-neutral noise added to every entry.
    pub nuisance_sigma: f64,
    pub p_fault: f64,
    /// Mean extra fault magnitude in units of `σ_dev`.
    pub fault_magnitude: f64,
    /// Relative half-width of the fault magnitude distribution.
    pub fault_spread: f64,
    /// Score lost per unit of deviation norm (`c`).
    pub penalty: f64,
    pub max_score: f64,
    /// Per-type share of non-expert videos tagged `train_dml`.
    pub dml_fraction: f64,
    /// Per-type share of non-expert videos tagged `train_score`; the rest
    /// are `test`.
    pub score_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_types: 3,
            videos_per_type: 200,
            clips: 9,
            min_clips: 3,
            dim: 64,
            prototype_scale: 1.0,
            error_directions: 4,
            sigma_dev: 1.0,
            deviation_max: 0.8,
            nuisance_sigma: 0.1,
            p_fault: 0.08,
            fault_magnitude: 5.0,
            fault_spread: 0.2,
            penalty: 2.0,
            max_score: 100.0,
            dml_fraction: 0.225,
            score_fraction: 0.475,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic config: {m}")));
        if self.num_types == 0 || self.videos_per_type < 2 || self.clips == 0 || self.dim == 0 {
            return bad("counts must be positive (at least 2 videos per type)");
        }
        if self.min_clips == 0 || self.min_clips > self.clips {
            return bad("min_clips must be in 1..=clips");
        }
        if self.error_directions == 0 || self.error_directions >= self.dim {
            return bad("error_directions must be in 1..dim");
        }
        if !(0.0..=1.0).contains(&self.p_fault) {
            return bad("p_fault must be in [0, 1]");
        }
        if !(self.sigma_dev >= 0.0 && self.deviation_max > 0.0 && self.nuisance_sigma >= 0.0 && self.fault_magnitude >= 0.0) {
            return bad("scales must be non-negative");
        }
        if !(0.0..1.0).contains(&self.fault_spread) {
            return bad("fault_spread must be in [0, 1)");
        }
        if !(self.max_score > 0.0 && self.penalty >= 0.0) {
            return bad("max_score must be positive and penalty non-negative");
        }
        if !(self.dml_fraction >= 0.0 && self.score_fraction >= 0.0 && self.dml_fraction + self.score_fraction <= 1.0) {
            return bad("split fractions must be non-negative and sum to at most 1");
        }
        Ok(())
    }
}

/// Planted ground truth of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: String,
    pub action_type: u32,
    pub is_expert: bool,
    /// Zero clips in front once padded to the configured length.
    pub padding: usize,
    /// Per clip of the unpadded video: error direction used.
    pub directions: Vec<usize>,
    /// Per clip: deviation norm `‖d_j‖`.
    pub magnitudes: Vec<f64>,
    /// 1-based indices of clips that received a fault, counted after front
    /// padding to `clips`, so they line up with feedback reports.
    pub faulty: Vec<usize>,
    pub score: f64,
}

/// `clamp(S_max − c · Σ magnitudes, 0, S_max)`.
pub fn score_from_deviations(magnitudes: &[f64], penalty: f64, max_score: f64) -> f64 {
    let total: f64 = magnitudes.iter().sum();
    (max_score - penalty * total).clamp(0.0, max_score)
}

/// Similarity label from the planted deviations, independent of any manifest.
pub fn oracle_pair_label(a: &GroundTruth, b: &GroundTruth, threshold: f64, config: &SyntheticConfig) -> u8 {
    let sa = score_from_deviations(&a.magnitudes, config.penalty, config.max_score);
    let sb = score_from_deviations(&b.magnitudes, config.penalty, config.max_score);
    pair_label(sa, sb, threshold)
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub videos: Vec<(VideoRecord, Split)>,
    pub truth: Vec<GroundTruth>,
}

impl SyntheticDataset {
    pub fn videos_in(&self, split: Split) -> Vec<VideoRecord> {
        self.videos.iter().filter(|(_, s)| *s == split).map(|(v, _)| v.clone()).collect()
    }

    pub fn truth_by_id(&self) -> BTreeMap<&str, &GroundTruth> {
        self.truth.iter().map(|t| (t.id.as_str(), t)).collect()
    }

    pub fn fault_count(&self) -> usize {
        self.truth.iter().map(|t| t.faulty.len()).sum()
    }

    pub fn manifest(&self, base_dir: PathBuf) -> DatasetManifest {
        DatasetManifest {
            rows: self
                .videos
                .iter()
                .map(|(v, split)| ManifestRow {
                    id: v.id.clone(),
                    path: feature_rel_path(&v.id),
                    action_type: v.action_type,
                    overall_score: v.overall_score,
                    split: *split,
                    judge_scores: None,
                    difficulty: None,
                })
                .collect(),
            base_dir,
        }
    }

    /// `video_id,clip_index` for every planted fault.
    pub fn faults_csv(&self) -> String {
        let mut out = String::from("video_id,clip_index\n");
        for t in &self.truth {
            for j in &t.faulty {
                let _ = writeln!(out, "{},{j}", t.id);
            }
        }
        out
    }

    /// `video_id,clip_index,direction,magnitude,faulty` for every real clip;
    /// indices are counted after front padding.
    pub fn deviations_csv(&self) -> String {
        let mut out = String::from("video_id,clip_index,direction,magnitude,faulty\n");
        for t in &self.truth {
            for (j, (dir, mag)) in t.directions.iter().zip(&t.magnitudes).enumerate() {
                let index = t.padding + j + 1;
                let _ = writeln!(out, "{},{index},{dir},{mag},{}", t.id, t.faulty.contains(&index));
            }
        }
        out
    }

    /// Writes `manifest.csv`, `features/<id>.aqaf`, `faults.csv`,
    /// `deviations.csv` and `gen_config.json` under `dir`; returns the
    /// manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let features = dir.join("features");
        fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
        for (v, _) in &self.videos {
            write_feature_file(
                &dir.join(feature_rel_path(&v.id)),
                &FeatureFile {
                    id: v.id.clone(),
                    action_type: v.action_type,
                    features: v.features.clone(),
                },
            )?;
        }
        let write = |name: &str, text: String| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("faults.csv", self.faults_csv())?;
        write("deviations.csv", self.deviations_csv())?;
        write(
            "gen_config.json",
            serde_json::to_string_pretty(&self.config).map_err(|e| Error::Config(e.to_string()))? + "\n",
        )?;
        let manifest_path = dir.join("manifest.csv");
        self.manifest(dir.to_path_buf()).write(&manifest_path)?;
        Ok(manifest_path)
    }
}

fn feature_rel_path(id: &str) -> String {
    format!("features/{id}.aqaf")
}

/// Reads `faults.csv` into `video id → 1-based faulty clip indices`.
pub fn read_faults_csv(path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |row: usize, message: String| Error::Parse {
        source_name: path.display().to_string(),
        location: format!("row {row}"),
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some("video_id,clip_index") {
        return Err(err(0, "expected header `video_id,clip_index`".into()));
    }
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let (id, j) = line.split_once(',').ok_or_else(|| err(i + 1, "expected 2 fields".into()))?;
        let j = j.parse().map_err(|e| err(i + 1, format!("clip_index: {e}")))?;
        out.entry(id.to_string()).or_default().push(j);
    }
    Ok(out)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components of `v` along the orthonormal `basis`.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for e in basis {
        let c = dot(v, e);
        for (x, y) in v.iter_mut().zip(e) {
            *x -= c * y;
        }
    }
}

fn orthonormal_directions(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = normal_vec(rng, dim, 1.0);
        project_out(&mut v, &basis);
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Generates the dataset in memory. Each video draws from its own ChaCha
/// stream, so the result does not depend on generation order.
pub fn generate_dataset(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let (n, d) = (config.clips, config.dim);
    let mut shared = ChaCha8Rng::seed_from_u64(config.seed);
    let directions = orthonormal_directions(&mut shared, config.error_directions, d);

    let mut videos = Vec::new();
    let mut truth = Vec::new();
    for t in 1..=config.num_types {
        let mut type_rng = ChaCha8Rng::seed_from_u64(config.seed);
        type_rng.set_stream(u64::from(t) << 32);
        let prototype: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut clip = normal_vec(&mut type_rng, d, config.prototype_scale);
                project_out(&mut clip, &directions);
                clip
            })
            .collect();

        let others = config.videos_per_type - 1;
        let mut order: Vec<usize> = (0..others).collect();
        order.shuffle(&mut type_rng);
        let n_dml = (others as f64 * config.dml_fraction).round() as usize;
        let n_score = ((others as f64 * config.score_fraction).round() as usize).min(others - n_dml);
        let mut splits = vec![Split::Test; others];
        for (rank, &i) in order.iter().enumerate() {
            splits[i] = if rank < n_dml {
                Split::TrainDml
            } else if rank < n_dml + n_score {
                Split::TrainScore
            } else {
                Split::Test
            };
        }

        for v in 0..config.videos_per_type {
            let is_expert = v == 0;
            let id = if is_expert { format!("t{t}_expert") } else { format!("t{t}_v{v:04}") };
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream((u64::from(t) << 32) | (v as u64 + 1));
            let len = if is_expert { n } else { rng.random_range(config.min_clips..=n) };
            let mut values = Vec::with_capacity(len * d);
            let mut dirs = Vec::with_capacity(len);
            let mut mags = Vec::with_capacity(len);
            let mut faulty = Vec::new();
            for (j, proto) in prototype[n - len..].iter().enumerate() {
                let k = rng.random_range(0..config.error_directions);
                let base = config.sigma_dev * rng.random_range(0.0..config.deviation_max);
                let is_fault = rng.random_bool(config.p_fault);
                let extra = config.fault_magnitude
                    * config.sigma_dev
                    * rng.random_range(1.0 - config.fault_spread..=1.0 + config.fault_spread);
                let mut noise = normal_vec(&mut rng, d, config.nuisance_sigma);
                project_out(&mut noise, &directions);
                let mag = if is_expert {
                    0.0
                } else if is_fault {
                    base + extra
                } else {
                    base
                };
                if !is_expert && is_fault {
                    faulty.push(n - len + j + 1);
                }
                let noise_scale = if is_expert { 0.0 } else { 1.0 };
                for ((p, e), z) in proto.iter().zip(&directions[k]).zip(&noise) {
                    // Stored as f32 on disk; keep the in-memory copy identical.
                    values.push((p + mag * e + noise_scale * z) as f32 as f64);
                }
                dirs.push(k);
                mags.push(mag);
            }
            let score = score_from_deviations(&mags, config.penalty, config.max_score);
            let split = if is_expert { Split::TrainScore } else { splits[v - 1] };
            videos.push((VideoRecord::new(id.clone(), t, score, ClipFeatureSequence::new(values, d)?), split));
            truth.push(GroundTruth {
                id,
                action_type: t,
                is_expert,
                padding: n - len,
                directions: dirs,
                magnitudes: mags,
                faulty,
                score,
            });
        }
    }
    Ok(SyntheticDataset {
        config: config.clone(),
        videos,
        truth,
    })
}
