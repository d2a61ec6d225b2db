//! Dataset I/O: feature files, the label manifest, joining them into
//! labelled pairs, and a synthetic generator for tests and demos.

mod features;
mod manifest;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};

use sha2::{Digest, Sha256};

pub use features::{
    read_features, write_features, FeatureFile, FeatureFormat, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use manifest::{read_manifest, write_manifest, LabelManifest, ManifestRow, Split};
pub use synth::{generate_synthetic, LayoutTruth, SynthData, SynthSpec};

use crate::error::{Error, Modality, Result};
use crate::model::{FeaturePair, FeatureVector};

/// A feature pair with its category label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub pair: FeaturePair,
    pub label: String,
}

impl LabeledPair {
    pub fn new(pair: FeaturePair, label: impl Into<String>) -> Self {
        Self {
            pair,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JoinedDataset {
    pub train: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    /// Samples per (split, category).
    pub counts: BTreeMap<(Split, String), usize>,
}

impl JoinedDataset {
    pub fn split(&self, split: Split) -> &[LabeledPair] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

const MAX_REPORTED_IDS: usize = 10;

fn missing_ids<'a>(
    wanted: impl Iterator<Item = &'a u64>,
    have: &HashSet<u64>,
    source_name: &'static str,
) -> Result<()> {
    let mut missing: Vec<u64> = wanted.filter(|id| !have.contains(id)).copied().collect();
    if missing.is_empty() {
        return Ok(());
    }
    missing.sort_unstable();
    let total = missing.len();
    missing.truncate(MAX_REPORTED_IDS);
    Err(Error::IdMismatch {
        source_name,
        ids: missing,
        total,
    })
}

fn check_modality(file: &FeatureFile, expected: Modality) -> Result<()> {
    if file.modality() != expected {
        return Err(Error::ModalityMismatch {
            expected,
            found: file.modality(),
        });
    }
    Ok(())
}

/// Joins the two feature files with the manifest. Pairs come out in
/// manifest order, split by train/test.
pub fn join_dataset(
    rgb: &FeatureFile,
    depth: &FeatureFile,
    labels: &LabelManifest,
) -> Result<JoinedDataset> {
    check_modality(rgb, Modality::Rgb)?;
    check_modality(depth, Modality::Depth)?;
    let rgb_map: HashMap<u64, &FeatureVector> = rgb.records().iter().map(|(i, v)| (*i, v)).collect();
    let depth_map: HashMap<u64, &FeatureVector> =
        depth.records().iter().map(|(i, v)| (*i, v)).collect();
    let manifest_ids: HashSet<u64> = labels.rows().iter().map(|r| r.id).collect();
    let rgb_ids: HashSet<u64> = rgb_map.keys().copied().collect();
    let depth_ids: HashSet<u64> = depth_map.keys().copied().collect();

    missing_ids(labels.rows().iter().map(|r| &r.id), &rgb_ids, "rgb features")?;
    missing_ids(labels.rows().iter().map(|r| &r.id), &depth_ids, "depth features")?;
    missing_ids(rgb.records().iter().map(|(i, _)| i), &manifest_ids, "manifest")?;
    missing_ids(depth.records().iter().map(|(i, _)| i), &manifest_ids, "manifest")?;

    let mut out = JoinedDataset::default();
    for row in labels.rows() {
        let pair = FeaturePair::new(
            row.id,
            rgb_map[&row.id].clone(),
            depth_map[&row.id].clone(),
        );
        *out.counts.entry((row.split, row.category.clone())).or_default() += 1;
        let sample = LabeledPair::new(pair, row.category.clone());
        match row.split {
            Split::Train => out.train.push(sample),
            Split::Test => out.test.push(sample),
        }
    }
    Ok(out)
}

/// Pairs two feature files without labels, in the RGB file's order.
pub fn pair_features(rgb: &FeatureFile, depth: &FeatureFile) -> Result<Vec<FeaturePair>> {
    check_modality(rgb, Modality::Rgb)?;
    check_modality(depth, Modality::Depth)?;
    let depth_map: HashMap<u64, &FeatureVector> =
        depth.records().iter().map(|(i, v)| (*i, v)).collect();
    let rgb_ids: HashSet<u64> = rgb.records().iter().map(|(i, _)| *i).collect();
    missing_ids(rgb.records().iter().map(|(i, _)| i), &depth_map.keys().copied().collect(), "depth features")?;
    missing_ids(depth.records().iter().map(|(i, _)| i), &rgb_ids, "rgb features")?;
    Ok(rgb
        .records()
        .iter()
        .map(|(id, v)| FeaturePair::new(*id, v.clone(), depth_map[id].clone()))
        .collect())
}

/// Sample id for an image given its path relative to the dataset root:
/// the first eight bytes of SHA-256 over the UTF-8 path (with `/`
/// separators), read as a little-endian `u64`.
pub fn sample_id_for_path(relative_path: &str) -> u64 {
    let normalized = relative_path.replace('\\', "/");
    let digest = Sha256::digest(normalized.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(modality: Modality, ids: &[u64]) -> FeatureFile {
        let recs = ids
            .iter()
            .map(|&i| (i, FeatureVector::new(vec![i as f32, 1.0]).unwrap()))
            .collect();
        FeatureFile::new(modality, 2, recs).unwrap()
    }

    fn manifest(rows: &[(u64, &str, Split)]) -> LabelManifest {
        LabelManifest::new(
            rows.iter()
                .map(|&(id, c, split)| ManifestRow {
                    id,
                    category: c.into(),
                    split,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn joins_in_manifest_order_with_counts() {
        let rgb = file(Modality::Rgb, &[1, 2, 3, 4]);
        let depth = file(Modality::Depth, &[4, 3, 2, 1]);
        let m = manifest(&[
            (3, "b", Split::Train),
            (1, "a", Split::Train),
            (2, "a", Split::Test),
            (4, "a", Split::Train),
        ]);
        let d = join_dataset(&rgb, &depth, &m).unwrap();
        assert_eq!(d.train.iter().map(|s| s.pair.id).collect::<Vec<_>>(), vec![3, 1, 4]);
        assert_eq!(d.test.len(), 1);
        assert_eq!(d.counts[&(Split::Train, "a".to_string())], 2);
        assert_eq!(d.counts[&(Split::Train, "b".to_string())], 1);
        assert_eq!(d.counts[&(Split::Test, "a".to_string())], 1);
        assert_eq!(d.train.len() + d.test.len(), m.len());
    }

    #[test]
    fn single_sample() {
        let d = join_dataset(
            &file(Modality::Rgb, &[9]),
            &file(Modality::Depth, &[9]),
            &manifest(&[(9, "x", Split::Test)]),
        )
        .unwrap();
        assert_eq!(d.test.len(), 1);
        assert!(d.train.is_empty());
    }

    #[test]
    fn disjoint_ids_error_lists_at_most_ten() {
        let ids: Vec<u64> = (100..130).collect();
        let rgb = file(Modality::Rgb, &ids);
        let depth = file(Modality::Depth, &ids);
        let rows: Vec<_> = (0..30).map(|i| (i, "a", Split::Train)).collect();
        match join_dataset(&rgb, &depth, &manifest(&rows)) {
            Err(Error::IdMismatch { ids, total, .. }) => {
                assert_eq!(ids, (0..10).collect::<Vec<_>>());
                assert_eq!(total, 30);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extra_feature_rows_are_reported() {
        let rgb = file(Modality::Rgb, &[1, 2]);
        let depth = file(Modality::Depth, &[1, 2]);
        let err = join_dataset(&rgb, &depth, &manifest(&[(1, "a", Split::Train)])).unwrap_err();
        assert!(matches!(err, Error::IdMismatch { source_name: "manifest", .. }));
    }

    #[test]
    fn swapped_modalities_rejected() {
        let rgb = file(Modality::Rgb, &[1]);
        let depth = file(Modality::Depth, &[1]);
        let m = manifest(&[(1, "a", Split::Train)]);
        assert!(matches!(
            join_dataset(&depth, &rgb, &m),
            Err(Error::ModalityMismatch { .. })
        ));
    }

    #[test]
    fn pairs_unlabeled() {
        let pairs = pair_features(&file(Modality::Rgb, &[5, 6]), &file(Modality::Depth, &[6, 5])).unwrap();
        assert_eq!(pairs.iter().map(|p| p.id).collect::<Vec<_>>(), vec![5, 6]);
        assert!(pair_features(&file(Modality::Rgb, &[5]), &file(Modality::Depth, &[6])).is_err());
    }

    #[test]
    fn path_hash_is_stable() {
        // Value from Python:
        // int.from_bytes(hashlib.sha256(b"kitchen/0001.jpg").digest()[:8], "little")
        let id = sample_id_for_path("kitchen/0001.jpg");
        assert_eq!(id, 5372685081940810277);
        assert_eq!(id, sample_id_for_path("kitchen\\0001.jpg"));
        assert_ne!(id, sample_id_for_path("kitchen/0002.jpg"));
    }
}
