use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fmap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?}, expected train, val or test"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub path: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub feature_shape: [usize; 3],
    pub samples: Vec<SampleEntry>,
}

/// One decoded feature map with its binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Tensor,
    pub label: u8,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.feature_shape.contains(&0) {
            return Err(Error::Validation(format!(
                "feature shape {:?} has a zero dimension",
                self.feature_shape
            )));
        }
        if let Some(bad) = self.samples.iter().find(|s| s.label > 1) {
            return Err(Error::Validation(format!(
                "sample {} has label {}, expected 0 or 1",
                bad.path, bad.label
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// True when every sample carries a split tag.
    pub fn is_fully_split(&self) -> bool {
        self.samples.iter().all(|s| s.split.is_some())
    }

    pub fn count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == Some(split)).count()
    }

    /// Reads and shape-checks the samples of one split (or all samples when
    /// `split` is `None`). Relative paths resolve against `base_dir`.
    pub fn load_samples(&self, base_dir: &Path, split: Option<Split>) -> Result<Vec<Sample>> {
        self.samples
            .iter()
            .filter(|s| split.is_none() || s.split == split)
            .map(|entry| {
                let path = resolve(base_dir, &entry.path);
                let features = fmap::read_file(&path)?;
                if features.shape() != self.feature_shape {
                    return Err(Error::Shape(format!(
                        "{} has shape {:?}, manifest declares {:?}",
                        path.display(),
                        features.shape(),
                        self.feature_shape
                    )));
                }
                Ok(Sample {
                    features,
                    label: entry.label,
                })
            })
            .collect()
    }
}

fn resolve(base: &Path, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
