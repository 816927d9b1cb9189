use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, shaped block of trainable values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParameterBlock {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::shape("parameter block", expected, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("block `{name}` has a non-finite value at {i}")));
        }
        Ok(Self { name, shape, values })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            values: vec![0.0; len],
        }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, value: f64) -> Self {
        let mut block = Self::zeros(name, shape);
        block.values.fill(value);
        block
    }

    /// Uniform in `[-scale, scale]`.
    pub fn uniform<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: Vec<usize>,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut block = Self::zeros(name, shape);
        for v in &mut block.values {
            *v = rng.random_range(-scale..=scale);
        }
        block
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.name.clone(), self.shape.clone())
    }

    /// FNV-1a over the little-endian bytes of the values. Used to prove
    /// that frozen blocks are untouched.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        hash
    }
}

/// An ordered collection of uniquely named blocks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    blocks: Vec<ParameterBlock>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_blocks(blocks: Vec<ParameterBlock>) -> Result<Self> {
        let mut set = Self::new();
        for b in blocks {
            set.push(b)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, block: ParameterBlock) -> Result<()> {
        if self.index_of(&block.name).is_some() {
            return Err(Error::Config(format!("duplicate block name `{}`", block.name)));
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParameterBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParameterBlock> {
        self.blocks.iter_mut().find(|b| b.name == name)
    }

    pub fn block(&self, index: usize) -> &ParameterBlock {
        &self.blocks[index]
    }

    pub fn block_mut(&mut self, index: usize) -> &mut ParameterBlock {
        &mut self.blocks[index]
    }

    pub fn blocks(&self) -> &[ParameterBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParameterBlock] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.blocks.iter().map(ParameterBlock::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(ParameterBlock::zeros_like).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for b in &mut self.blocks {
            b.values.fill(0.0);
        }
    }

    /// Checks that `other` has the same block names and shapes, in order.
    pub fn check_same_layout(&self, other: &ParamSet) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::shape("parameter set", self.blocks.len(), other.blocks.len()));
        }
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::shape(
                    "parameter set",
                    format!("{} {:?}", a.name, a.shape),
                    format!("{} {:?}", b.name, b.shape),
                ));
            }
        }
        Ok(())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) -> Result<()> {
        self.check_same_layout(other)?;
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            for v in &mut b.values {
                *v *= factor;
            }
        }
    }

    pub fn checksums(&self) -> Vec<(String, u64)> {
        self.blocks.iter().map(|b| (b.name.clone(), b.checksum())).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.values.iter().all(|v| v.is_finite()))
    }
}
