//! Clip-level feedback.
//!
//! To compare clip `j` of a test performance with clip `j` of the expert,
//! both sequences are trimmed: every earlier clip is zeroed and every later
//! clip removed. The trimmed pair then goes through the similarity network;
//! a probability below the threshold marks the clip as faulty.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::ClipFeatureSequence;
use crate::error::{Error, Result};
use crate::siamese::SiameseParams;

pub const DEFAULT_FAULT_THRESHOLD: f64 = 0.5;

/// Clips `1..j-1` zeroed, clip `j` kept, the rest dropped (`j` is 1-based).
pub fn trim_for_clip(seq: &ClipFeatureSequence, j: usize) -> Result<ClipFeatureSequence> {
    if j == 0 || j > seq.len() {
        return Err(Error::Index { index: j, len: seq.len() });
    }
    let d = seq.dim();
    let mut values = vec![0.0; j * d];
    values[(j - 1) * d..].copy_from_slice(seq.clip(j - 1));
    let mut out = ClipFeatureSequence::new(values, d)?;
    out.clip_frames = seq.clip_frames;
    Ok(out)
}

/// Match probability between the `j`-trimmed expert and test sequences, in
/// training order (expert first).
pub fn clip_similarity(siamese: &SiameseParams, test: &ClipFeatureSequence, expert: &ClipFeatureSequence, j: usize) -> Result<f64> {
    if test.len() != expert.len() {
        return Err(Error::Alignment {
            len: test.len(),
            target: expert.len(),
        });
    }
    let e = siamese.embed(&trim_for_clip(expert, j)?)?;
    let q = siamese.embed(&trim_for_clip(test, j)?)?;
    siamese.prob_from_embeddings(&e, &q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFeedback {
    /// 1-based clip index.
    pub index: usize,
    pub similarity: f64,
    pub faulty: bool,
    /// The test clip is front padding.
    pub padded: bool,
}

/// 1-based indices whose similarity is strictly below `threshold`.
pub fn faulty_clips(similarities: &[f64], threshold: f64) -> BTreeSet<usize> {
    similarities
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < threshold)
        .map(|(i, _)| i + 1)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub video_id: String,
    pub expert_id: String,
    pub threshold: f64,
    pub clips: Vec<ClipFeedback>,
}

pub const FEEDBACK_HEADER: &str = "clip_index,similarity,faulty,padded";

impl FeedbackReport {
    /// Evaluates every clip of `test` against `expert`.
    pub fn compute(
        siamese: &SiameseParams,
        video_id: &str,
        test: &ClipFeatureSequence,
        expert_id: &str,
        expert: &ClipFeatureSequence,
        threshold: f64,
    ) -> Result<Self> {
        let padding = test.leading_zero_clips();
        let clips = (1..=test.len())
            .map(|j| {
                let similarity = clip_similarity(siamese, test, expert, j)?;
                Ok(ClipFeedback {
                    index: j,
                    similarity,
                    faulty: similarity < threshold,
                    padded: j <= padding,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            video_id: video_id.to_string(),
            expert_id: expert_id.to_string(),
            threshold,
            clips,
        })
    }

    pub fn similarities(&self) -> Vec<f64> {
        self.clips.iter().map(|c| c.similarity).collect()
    }

    /// Faulty indices, ignoring padding clips.
    pub fn faulty_indices(&self) -> BTreeSet<usize> {
        self.clips.iter().filter(|c| c.faulty && !c.padded).map(|c| c.index).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{FEEDBACK_HEADER}\n");
        for c in &self.clips {
            let _ = writeln!(out, "{},{},{},{}", c.index, c.similarity, c.faulty, c.padded);
        }
        out
    }

    /// Reads the clip rows back from [`to_csv`](Self::to_csv) output.
    pub fn clips_from_csv(text: &str, source_name: &str) -> Result<Vec<ClipFeedback>> {
        let err = |row: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            location: format!("row {row}"),
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(FEEDBACK_HEADER) {
            return Err(err(0, format!("expected header `{FEEDBACK_HEADER}`")));
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let row = i + 1;
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return Err(err(row, format!("expected 4 fields, got {}", f.len())));
                }
                Ok(ClipFeedback {
                    index: f[0].parse().map_err(|e| err(row, format!("clip_index: {e}")))?,
                    similarity: f[1].parse().map_err(|e| err(row, format!("similarity: {e}")))?,
                    faulty: f[2].parse().map_err(|e| err(row, format!("faulty: {e}")))?,
                    padded: f[3].parse().map_err(|e| err(row, format!("padded: {e}")))?,
                })
            })
            .collect()
    }

    /// Line chart of similarity against clip index, with a dashed rule at
    /// the threshold. Faulty clips are drawn in red, padding clips hollow.
    pub fn to_svg(&self) -> String {
        const W: f64 = 480.0;
        const H: f64 = 240.0;
        const PAD: f64 = 36.0;
        let n = self.clips.len().max(1);
        let x = |j: usize| {
            if n == 1 {
                W / 2.0
            } else {
                PAD + (j - 1) as f64 * (W - 2.0 * PAD) / (n - 1) as f64
            }
        };
        let y = |s: f64| H - PAD - s.clamp(0.0, 1.0) * (H - 2.0 * PAD);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="12">{} vs {}</text>"#,
            xml_escape(&self.video_id),
            xml_escape(&self.expert_id)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{PAD}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            y(self.threshold),
            W - PAD
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{PAD}" y1="{0}" x2="{PAD}" y2="{1}" stroke="black"/>"#,
            H - PAD,
            PAD
        );
        for (label, v) in [("0", 0.0), ("0.5", 0.5), ("1", 1.0)] {
            let _ = writeln!(
                svg,
                r#"<text x="4" y="{:.2}" font-family="sans-serif" font-size="10">{label}</text>"#,
                y(v) + 3.0
            );
        }
        let points: Vec<String> = self
            .clips
            .iter()
            .map(|c| format!("{:.2},{:.2}", x(c.index), y(c.similarity)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            points.join(" ")
        );
        for c in &self.clips {
            let color = if c.faulty { "crimson" } else { "steelblue" };
            let fill = if c.padded { "white" } else { color };
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" stroke="{color}" fill="{fill}"/>"#,
                x(c.index),
                y(c.similarity)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
                x(c.index),
                H - PAD + 14.0,
                c.index
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
