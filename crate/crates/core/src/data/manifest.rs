//! Dataset manifest CSV:
//! `id,path,action_type,overall_score,split,judge_scores,difficulty`.
//! `judge_scores` is an optional `;`-separated list; empty cells mean absent.
//! Paths are resolved relative to the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{read_feature_file, VideoRecord};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 7] = [
    "id",
    "path",
    "action_type",
    "overall_score",
    "split",
    "judge_scores",
    "difficulty",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Used for metric learning and for score-head training.
    TrainDml,
    /// Used for score-head training only.
    TrainScore,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::TrainDml => "train_dml",
            Split::TrainScore => "train_score",
            Split::Test => "test",
        }
    }

    pub fn is_train(self) -> bool {
        matches!(self, Split::TrainDml | Split::TrainScore)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train_dml" => Ok(Split::TrainDml),
            "train_score" => Ok(Split::TrainScore),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub path: String,
    pub action_type: u32,
    pub overall_score: f64,
    pub split: Split,
    pub judge_scores: Option<Vec<f64>>,
    pub difficulty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub base_dir: PathBuf,
}

fn parse_error(source: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        source_name: source.display().to_string(),
        location: format!("row {line}"),
        message,
    }
}

fn parse_f64(cell: &str, what: &str) -> std::result::Result<f64, String> {
    let v: f64 = cell.trim().parse().map_err(|_| format!("{what} `{cell}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{what} `{cell}` is not finite"));
    }
    Ok(v)
}

impl DatasetManifest {
    /// Parses and validates a manifest: header, unique ids, split tags and
    /// existence of every referenced feature file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::parse(&text, path, base_dir)?;
        for row in &manifest.rows {
            let file = manifest.resolve(row);
            if !file.is_file() {
                return Err(Error::Parse {
                    source_name: path.display().to_string(),
                    location: format!("id `{}`", row.id),
                    message: format!("feature file {} does not exist", file.display()),
                });
            }
        }
        Ok(manifest)
    }

    pub fn parse(text: &str, source: &Path, base_dir: PathBuf) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| parse_error(source, 1, e.to_string()))?
            .clone();
        if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
            return Err(parse_error(
                source,
                1,
                format!("header must be `{}`", MANIFEST_HEADER.join(",")),
            ));
        }
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_error(source, line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let err = |m: String| parse_error(source, line, m);
            let cell = |i: usize| record.get(i).unwrap_or("").trim();
            let id = cell(0).to_string();
            if id.is_empty() {
                return Err(err("empty id".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(err(format!("duplicate id `{id}`")));
            }
            let action_type = cell(2)
                .parse::<u32>()
                .map_err(|_| err(format!("action_type `{}` is not an unsigned integer", cell(2))))?;
            let overall_score = parse_f64(cell(3), "overall_score").map_err(err)?;
            let split = cell(4).parse::<Split>().map_err(|e| err(e.to_string()))?;
            let judge_scores = match cell(5) {
                "" => None,
                list => Some(
                    list.split(';')
                        .map(|s| parse_f64(s, "judge score"))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(err)?,
                ),
            };
            let difficulty = match cell(6) {
                "" => None,
                d => Some(parse_f64(d, "difficulty").map_err(err)?),
            };
            rows.push(ManifestRow {
                id,
                path: cell(1).to_string(),
                action_type,
                overall_score,
                split,
                judge_scores,
                difficulty,
            });
        }
        Ok(Self { rows, base_dir })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let io_err = |e: csv::Error| Error::Config(format!("manifest serialization failed: {e}"));
        writer.write_record(MANIFEST_HEADER).map_err(io_err)?;
        for row in &self.rows {
            let judges = row
                .judge_scores
                .as_ref()
                .map(|js| js.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            let difficulty = row.difficulty.map(|d| d.to_string()).unwrap_or_default();
            writer
                .write_record([
                    row.id.as_str(),
                    row.path.as_str(),
                    &row.action_type.to_string(),
                    &row.overall_score.to_string(),
                    row.split.as_str(),
                    &judges,
                    &difficulty,
                ])
                .map_err(io_err)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        let p = Path::new(&row.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }
}

/// Reads every feature file referenced by the manifest, checking that the
/// embedded id and action type agree with the manifest row.
pub fn load_videos(manifest: &DatasetManifest) -> Result<Vec<(VideoRecord, Split)>> {
    manifest
        .rows
        .iter()
        .map(|row| {
            let path = manifest.resolve(row);
            let file = read_feature_file(&path)?;
            if file.id != row.id || file.action_type != row.action_type {
                return Err(Error::Parse {
                    source_name: path.display().to_string(),
                    location: "header".into(),
                    message: format!(
                        "file declares id `{}` type {}, manifest says `{}` type {}",
                        file.id, file.action_type, row.id, row.action_type
                    ),
                });
            }
            let video = VideoRecord {
                id: row.id.clone(),
                action_type: row.action_type,
                overall_score: row.overall_score,
                judge_scores: row.judge_scores.clone(),
                difficulty: row.difficulty,
                features: file.features,
            };
            Ok((video, row.split))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TEXT: &str = "id,path,action_type,overall_score,split,judge_scores,difficulty\n\
        a,features/a.aqaf,1,81.6,train_dml,8.5;9;8.5,3.2\n\
        b,features/b.aqaf,2,44.25,test,,\n";

    #[test]
    fn parses_rows_and_optionals() {
        let m = DatasetManifest::parse(TEXT, Path::new("m.csv"), PathBuf::from("/data")).unwrap();
        assert_eq!(m.rows.len(), 2);
        assert_eq!(m.rows[0].judge_scores, Some(vec![8.5, 9.0, 8.5]));
        assert_eq!(m.rows[0].difficulty, Some(3.2));
        assert_eq!(m.rows[1].judge_scores, None);
        assert_eq!(m.rows[1].split, Split::Test);
        assert_eq!(m.resolve(&m.rows[1]), PathBuf::from("/data/features/b.aqaf"));
    }

    #[test]
    fn errors_name_the_row() {
        let bad = TEXT.replace("44.25", "lots");
        let err = DatasetManifest::parse(&bad, Path::new("m.csv"), PathBuf::new()).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
        let dup = format!("{TEXT}a,x,1,2,test,,\n");
        assert!(DatasetManifest::parse(&dup, Path::new("m.csv"), PathBuf::new())
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let split = TEXT.replace("train_dml", "train");
        assert!(DatasetManifest::parse(&split, Path::new("m.csv"), PathBuf::new()).is_err());
        let header = TEXT.replace("difficulty", "diff");
        assert!(DatasetManifest::parse(&header, Path::new("m.csv"), PathBuf::new()).is_err());
    }

    #[test]
    fn missing_feature_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(&path, TEXT).unwrap();
        let err = DatasetManifest::load(&path).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    fn split_strategy() -> impl Strategy<Value = Split> {
        prop_oneof![Just(Split::TrainDml), Just(Split::TrainScore), Just(Split::Test)]
    }

    proptest! {
        #[test]
        fn round_trip(rows in proptest::collection::vec(
            (any::<u32>(), -1e6f64..1e6, split_strategy(),
             proptest::option::of(proptest::collection::vec(0.0f64..10.0, 1..5)),
             proptest::option::of(1.0f64..4.0)),
            0..20))
        {
            let rows: Vec<ManifestRow> = rows.into_iter().enumerate().map(|(i, (t, s, split, js, d))| ManifestRow {
                id: format!("v{i}"),
                path: format!("features/v{i}.aqaf"),
                action_type: t,
                overall_score: s,
                split,
                judge_scores: js,
                difficulty: d,
            }).collect();
            let m = DatasetManifest { rows, base_dir: PathBuf::from("base") };
            let text = m.to_csv_string().unwrap();
            let back = DatasetManifest::parse(&text, Path::new("m.csv"), PathBuf::from("base")).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
