//! Binary clip-feature files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      "AQAF"
//! version    u32 (= 1)
//! id_len     u16, then id_len bytes of UTF-8
//! action     u32
//! clips      u32 (n)
//! dim        u32 (D)
//! payload    n·D f32, row-major by clip
//! ```
//!
//! Values are widened to `f64` on load.

use std::fs;
use std::path::Path;

use super::ClipFeatureSequence;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"AQAF";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub id: String,
    pub action_type: u32,
    pub features: ClipFeatureSequence,
}

impl FeatureFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let id = self.id.as_bytes();
        let id_len = u16::try_from(id.len()).map_err(|_| Error::Config(format!("id `{}` is too long", self.id)))?;
        let n = u32::try_from(self.features.len()).map_err(|_| Error::Config("too many clips".into()))?;
        let d = u32::try_from(self.features.dim()).map_err(|_| Error::Config("dimension too large".into()))?;
        let mut out = Vec::with_capacity(22 + id.len() + self.features.as_flat().len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&self.action_type.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
        for &v in self.features.as_flat() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], source_name: &str) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            source_name,
        };
        let magic = r.take(4, "magic")?;
        if magic != FEATURE_MAGIC {
            return Err(r.error(0, format!("bad magic {magic:?}, expected \"AQAF\"")));
        }
        let version = r.u32("version")?;
        if version != FEATURE_VERSION {
            return Err(r.error(4, format!("unsupported version {version}")));
        }
        let id_len = r.u16("id length")? as usize;
        let id_at = r.pos;
        let id = std::str::from_utf8(r.take(id_len, "id")?)
            .map_err(|e| r.error(id_at, format!("id is not UTF-8: {e}")))?
            .to_string();
        let action_type = r.u32("action type")?;
        let n = r.u32("clip count")? as usize;
        let dim_at = r.pos;
        let dim = r.u32("dimension")? as usize;
        if n == 0 {
            return Err(r.error(dim_at - 4, "clip count is zero".into()));
        }
        if dim == 0 {
            return Err(r.error(dim_at, "dimension is zero".into()));
        }
        let count = n
            .checked_mul(dim)
            .ok_or_else(|| r.error(dim_at, "clip count × dimension overflows".into()))?;
        let payload_at = r.pos;
        let expected = count
            .checked_mul(4)
            .ok_or_else(|| r.error(dim_at, "payload size overflows".into()))?;
        if bytes.len() - payload_at < expected {
            return Err(r.error(
                bytes.len(),
                format!("truncated payload: expected {expected} bytes, found {}", bytes.len() - payload_at),
            ));
        }
        if bytes.len() - payload_at > expected {
            return Err(r.error(payload_at + expected, "trailing bytes after payload".into()));
        }
        let mut values = Vec::with_capacity(count);
        for (k, chunk) in bytes[payload_at..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
            if !v.is_finite() {
                return Err(r.error(payload_at + 4 * k, format!("non-finite value in clip {}", k / dim + 1)));
            }
            values.push(f64::from(v));
        }
        let features = ClipFeatureSequence::new(values, dim)?;
        Ok(Self {
            id,
            action_type,
            features,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    source_name: &'a str,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: usize, message: String) -> Error {
        Error::Parse {
            source_name: self.source_name.to_string(),
            location: format!("byte offset {offset}"),
            message,
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(self.pos, format!("unexpected end of file reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }
}

pub fn write_feature_file(path: &Path, file: &FeatureFile) -> Result<()> {
    let bytes = file.to_bytes()?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureFile::from_bytes(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize, d: usize) -> FeatureFile {
        FeatureFile {
            id: "dive_007".into(),
            action_type: 3,
            features: ClipFeatureSequence::new((0..n * d).map(|k| k as f64 * 0.25 - 1.0).collect(), d).unwrap(),
        }
    }

    #[test]
    fn header_and_payload() {
        let f = sample(9, 4);
        let bytes = f.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"AQAF");
        assert_eq!(bytes.len(), 4 + 4 + 2 + 8 + 4 + 4 + 4 + 9 * 4 * 4);
        let back = FeatureFile::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(back.features.len(), 9);
        assert_eq!(back, f);
    }

    #[test]
    fn truncated_payload_is_parse_error() {
        let bytes = sample(9, 4).to_bytes().unwrap();
        let err = FeatureFile::from_bytes(&bytes[..bytes.len() - 3], "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("truncated"));
        let err = FeatureFile::from_bytes(&bytes[..10], "mem").unwrap_err();
        assert!(err.to_string().contains("byte offset"));
    }

    #[test]
    fn rejects_unknown_version_and_magic() {
        let mut bytes = sample(2, 2).to_bytes().unwrap();
        bytes[4] = 2;
        assert!(FeatureFile::from_bytes(&bytes, "mem").unwrap_err().to_string().contains("version"));
        let mut bytes = sample(2, 2).to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(FeatureFile::from_bytes(&bytes, "mem").unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn rejects_nan_payload() {
        let mut bytes = sample(2, 2).to_bytes().unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = FeatureFile::from_bytes(&bytes, "mem").unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    proptest! {
        #[test]
        fn round_trip(n in 1usize..12, d in 1usize..9, id in "[a-z0-9_]{1,16}", t in any::<u32>(), seed in any::<u64>()) {
            let mut state = seed;
            let values: Vec<f64> = (0..n * d).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from(((state >> 33) as f32 / (1u64 << 31) as f32) * 20.0 - 10.0)
            }).collect();
            let f = FeatureFile { id, action_type: t, features: ClipFeatureSequence::new(values, d).unwrap() };
            let back = FeatureFile::from_bytes(&f.to_bytes().unwrap(), "mem").unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
