//! Binary parameter checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "AQAC"  version:u32  block_count:u32
//! per block: name_len:u16 name  rank:u8  dims:u32 × rank  f64 × Πdims
//! meta_count:u32  per entry: key_len:u16 key  value_len:u16 value
//! crc32:u32   (over every byte after the version field)
//! ```
//!
//! Metadata entries are written in key order, so equal checkpoints always
//! produce equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{ParamSet, ParameterBlock};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AQAC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub blocks: ParamSet,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(blocks: ParamSet) -> Self {
        Self {
            blocks,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Metadata value that must be present.
    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata key `{key}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32::try_from(self.blocks.len()).map_err(too_large)?.to_le_bytes());
        for block in self.blocks.blocks() {
            put_str(&mut out, &block.name)?;
            out.push(u8::try_from(block.shape.len()).map_err(too_large)?);
            for &d in &block.shape {
                out.extend_from_slice(&u32::try_from(d).map_err(too_large)?.to_le_bytes());
            }
            for v in &block.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&u32::try_from(self.metadata.len()).map_err(too_large)?.to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k)?;
            put_str(&mut out, v)?;
        }
        let crc = crc32fast::hash(&out[8..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Checkpoint(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(&body[8..]);
        if stored != actual {
            return Err(Error::Checkpoint(format!(
                "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
            )));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let count = r.u32()? as usize;
        let mut blocks = ParamSet::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("block too large".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            blocks.push(ParameterBlock::new(name, shape, values)?)?;
        }
        let meta_count = r.u32()? as usize;
        let mut metadata = BTreeMap::new();
        for _ in 0..meta_count {
            let k = r.string()?;
            let v = r.string()?;
            metadata.insert(k, v);
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!(
                "{} unexpected bytes before the checksum",
                body.len() - r.pos
            )));
        }
        Ok(Self { blocks, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn too_large<E>(_: E) -> Error {
    Error::Checkpoint("field exceeds its encoded width".into())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    out.extend_from_slice(&u16::try_from(s.len()).map_err(too_large)?.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (need {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let at = self.pos;
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("invalid UTF-8 string at byte {at}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let blocks = ParamSet::from_blocks(vec![
            ParameterBlock::uniform("a.w", vec![3, 2], 1.0, &mut rng),
            ParameterBlock::uniform("a.b", vec![3], 1.0, &mut rng),
            ParameterBlock::new("scalar", vec![], vec![f64::MIN_POSITIVE]).unwrap(),
        ])
        .unwrap();
        Checkpoint::new(blocks).with_meta("phase", "dml").with_meta("epoch", 7)
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.meta("epoch"), Some("7"));
    }

    #[test]
    fn corruption_detected() {
        let bytes = sample().to_bytes().unwrap();
        for pos in [8, 20, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x40;
            assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))), "pos {pos}");
        }
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 2;
        let err = Checkpoint::from_bytes(&wrong_version).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"AQAF\x01\0\0\0\0\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/ck.aqac");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
        assert!(matches!(Checkpoint::load(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
