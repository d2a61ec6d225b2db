use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_file, write_atomic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidValue(format!(
                "split must be `train` or `test`, found {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: u64,
    pub category: String,
    pub split: Split,
}

/// Labels and train/test assignment for every sample, as `id,category,split`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelManifest {
    rows: Vec<ManifestRow>,
}

impl LabelManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            if !seen.insert(r.id) {
                return Err(Error::DuplicateId(r.id));
            }
            if r.category.is_empty() {
                return Err(Error::InvalidValue(format!("sample {} has an empty label", r.id)));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)
                .map_err(|e| Error::InvalidValue(format!("csv: {e}")))?;
        }
        if self.rows.is_empty() {
            w.write_record(["id", "category", "split"])
                .map_err(|e| Error::InvalidValue(format!("csv: {e}")))?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidValue(format!("csv: {e}")))
    }

    pub fn from_csv(data: &[u8]) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(data);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse {
                location: "manifest header".into(),
                message: e.to_string(),
            })?
            .clone();
        if header.iter().collect::<Vec<_>>() != ["id", "category", "split"] {
            return Err(Error::Parse {
                location: "manifest header".into(),
                message: format!("expected `id,category,split`, found {:?}", header),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<ManifestRow>().enumerate() {
            rows.push(rec.map_err(|e| Error::Parse {
                location: format!("manifest row {}", i + 1),
                message: e.to_string(),
            })?);
        }
        Self::new(rows)
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<LabelManifest> {
    LabelManifest::from_csv(&read_file(path.as_ref())?)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &LabelManifest) -> Result<()> {
    write_atomic(path.as_ref(), &manifest.to_csv()?)
}
