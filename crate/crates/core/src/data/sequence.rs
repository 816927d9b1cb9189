use crate::error::{Error, Result};

/// Frames covered by one clip of the feature extractor.
pub const DEFAULT_CLIP_FRAMES: u32 = 16;

/// An ordered list of fixed-width clip feature vectors, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatureSequence {
    values: Vec<f64>,
    dim: usize,
    pub clip_frames: u32,
}

impl ClipFeatureSequence {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("clip dimension", "> 0", 0));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput("feature sequence has no clips"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::shape("feature buffer", format!("multiple of {dim}"), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite feature value in clip {} at component {}",
                i / dim + 1,
                i % dim
            )));
        }
        Ok(Self {
            values,
            dim,
            clip_frames: DEFAULT_CLIP_FRAMES,
        })
    }

    pub fn from_clips(clips: &[Vec<f64>]) -> Result<Self> {
        let dim = clips.first().map(Vec::len).ok_or(Error::EmptyInput("feature sequence has no clips"))?;
        if let Some(bad) = clips.iter().find(|c| c.len() != dim) {
            return Err(Error::shape("clip dimension", dim, bad.len()));
        }
        Self::new(clips.concat(), dim)
    }

    pub fn zeros(len: usize, dim: usize) -> Result<Self> {
        Self::new(vec![0.0; len * dim], dim)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Clip `index` (0-based).
    pub fn clip(&self, index: usize) -> &[f64] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    pub fn clips(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    /// Prepends zero clips so the sequence has exactly `target` clips.
    pub fn pad_to_length(&self, target: usize) -> Result<Self> {
        let len = self.len();
        if len > target {
            return Err(Error::Alignment { len, target });
        }
        let mut values = vec![0.0; (target - len) * self.dim];
        values.extend_from_slice(&self.values);
        Ok(Self {
            values,
            dim: self.dim,
            clip_frames: self.clip_frames,
        })
    }

    /// Like [`pad_to_length`](Self::pad_to_length), but when `truncate` is
    /// set an over-long sequence loses clips from the front so that the
    /// endings stay aligned.
    pub fn fit_to_length(&self, target: usize, truncate: bool) -> Result<Self> {
        let len = self.len();
        if len <= target {
            return self.pad_to_length(target);
        }
        if !truncate || target == 0 {
            return Err(Error::Alignment { len, target });
        }
        Ok(Self {
            values: self.values[(len - target) * self.dim..].to_vec(),
            dim: self.dim,
            clip_frames: self.clip_frames,
        })
    }

    /// Number of leading all-zero clips.
    pub fn leading_zero_clips(&self) -> usize {
        self.clips().take_while(|c| c.iter().all(|&v| v == 0.0)).count()
    }
}
