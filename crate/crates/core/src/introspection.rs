//! Silhouette analysis of a trained model and confusion-driven category
//! merging.
//!
//! The silhouette of a training sample compares the distance to the nearest
//! centroid of its own category (`a`) with the distance to the nearest
//! centroid of any other category (`b`): `s = (b - a) / max(a, b)`.
//! Categories where more than a quarter of the samples have `s <= 0`, and
//! whose low-silhouette samples mostly point at each other, are merged; the
//! analysis is repeated on the merged labelling until no such pair remains.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::codec::write_atomic;
use crate::datastore::{LabelManifest, LabeledPair, ManifestRow};
use crate::error::{Error, Result};
use crate::model::{fused_distance_unchecked, CategoryModel, ConceptModel};
use crate::trainer::{fit, TrainConfig};

/// Fraction of low-silhouette samples a category must exceed to be merged.
pub const MERGE_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SilhouetteRecord {
    pub sample_id: u64,
    pub category: String,
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub nearest_other: String,
}

pub fn silhouette_value(a: f64, b: f64) -> f64 {
    let scale = a.max(b);
    if scale > 0.0 {
        (b - a) / scale
    } else {
        0.0
    }
}

/// Silhouette record for every sample, in input order.
pub fn silhouette_all(m: &ConceptModel, train: &[LabeledPair]) -> Result<Vec<SilhouetteRecord>> {
    let cats = m.categories();
    if cats.len() < 2 {
        return Err(Error::SingleCategory(cats.len()));
    }
    let mut own_index = Vec::with_capacity(train.len());
    for s in train {
        let idx = m
            .category_index(&s.label)
            .ok_or_else(|| Error::UnknownLabel(s.label.clone()))?;
        m.check_pair(&s.pair)?;
        own_index.push(idx);
    }
    let w = m.fusion();
    Ok(train
        .par_iter()
        .zip(&own_index)
        .map(|(s, &own)| {
            let mut a = f64::INFINITY;
            let mut b = f64::INFINITY;
            let mut other = 0;
            for (ci, cat) in cats.iter().enumerate() {
                let d = cat
                    .centroids()
                    .iter()
                    .map(|c| fused_distance_unchecked(c, &s.pair, w))
                    .fold(f64::INFINITY, f64::min);
                if ci == own {
                    a = d;
                } else if d < b {
                    b = d;
                    other = ci;
                }
            }
            SilhouetteRecord {
                sample_id: s.pair.id,
                category: s.label.clone(),
                s: silhouette_value(a, b),
                a,
                b,
                nearest_other: cats[other].label().to_owned(),
            }
        })
        .collect())
}

pub fn silhouette_csv(records: &[SilhouetteRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidValue(format!("csv: {e}"));
    w.write_record(["sample_id", "category", "s", "a", "b", "nearest_other"])
        .map_err(err)?;
    for r in records {
        w.write_record([
            r.sample_id.to_string(),
            r.category.clone(),
            r.s.to_string(),
            r.a.to_string(),
            r.b.to_string(),
            r.nearest_other.clone(),
        ])
        .map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidValue(format!("csv: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryConfusion {
    pub label: String,
    pub samples: usize,
    pub low_silhouette: usize,
    /// Fraction of the category's samples with `s <= 0`.
    pub z_conf: f64,
    /// Most common `nearest_other` among those samples.
    pub y_conf: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionSummary {
    pub categories: Vec<CategoryConfusion>,
}

impl ConfusionSummary {
    pub fn get(&self, label: &str) -> Option<&CategoryConfusion> {
        self.categories.iter().find(|c| c.label == label)
    }

    /// Unordered pairs that both exceed [`MERGE_FRACTION`] and name each
    /// other as their main confusion. Each pair is listed once, smaller label
    /// first, in model order of the smaller label.
    pub fn bidirectional_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for j in &self.categories {
            let Some(k_label) = &j.y_conf else { continue };
            if j.z_conf <= MERGE_FRACTION || j.label.as_str() >= k_label.as_str() {
                continue;
            }
            let Some(k) = self.get(k_label) else { continue };
            if k.z_conf > MERGE_FRACTION && k.y_conf.as_deref() == Some(j.label.as_str()) {
                out.push((j.label.clone(), k.label.clone()));
            }
        }
        out
    }
}

/// Per-category share of samples with `s <= 0` and their dominant
/// confusion. Categories appear in model order.
pub fn confusion_summary(records: &[SilhouetteRecord], m: &ConceptModel) -> ConfusionSummary {
    struct Tally<'a> {
        samples: usize,
        low: usize,
        others: BTreeMap<&'a str, usize>,
    }
    let mut tallies: HashMap<&str, Tally> = HashMap::new();
    for r in records {
        let t = tallies.entry(r.category.as_str()).or_insert_with(|| Tally {
            samples: 0,
            low: 0,
            others: BTreeMap::new(),
        });
        t.samples += 1;
        if r.s <= 0.0 {
            t.low += 1;
            *t.others.entry(r.nearest_other.as_str()).or_default() += 1;
        }
    }
    let categories = m
        .categories()
        .iter()
        .map(|cat| {
            let label = cat.label().to_owned();
            match tallies.get(cat.label()) {
                None => CategoryConfusion {
                    label,
                    samples: 0,
                    low_silhouette: 0,
                    z_conf: 0.0,
                    y_conf: None,
                },
                Some(t) => {
                    // BTreeMap order + strict `>` keeps the smallest label on ties.
                    let mut y_conf: Option<(&str, usize)> = None;
                    for (&other, &n) in &t.others {
                        if y_conf.is_none_or(|(_, best)| n > best) {
                            y_conf = Some((other, n));
                        }
                    }
                    CategoryConfusion {
                        label,
                        samples: t.samples,
                        low_silhouette: t.low,
                        z_conf: t.low as f64 / t.samples as f64,
                        y_conf: y_conf.map(|(l, _)| l.to_owned()),
                    }
                }
            }
        })
        .collect();
    ConfusionSummary { categories }
}

/// Name given to the union of two categories.
pub fn merged_label(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}+{b}")
    } else {
        format!("{b}+{a}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergeEvent {
    pub first: String,
    pub second: String,
    pub merged: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeRound {
    pub round: usize,
    pub categories_before: usize,
    pub evidence: ConfusionSummary,
    pub merges: Vec<MergeEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergePlan {
    /// Every analysis round, including the last one that found nothing
    /// to merge.
    pub rounds: Vec<MergeRound>,
    /// Original label → final label.
    pub final_mapping: BTreeMap<String, String>,
}

impl MergePlan {
    pub fn identity<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            rounds: Vec::new(),
            final_mapping: labels
                .into_iter()
                .map(|l| (l.to_owned(), l.to_owned()))
                .collect(),
        }
    }

    /// True when no round merged anything.
    pub fn is_empty(&self) -> bool {
        self.rounds.iter().all(|r| r.merges.is_empty())
    }

    pub fn merge_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| !r.merges.is_empty()).count()
    }

    /// Final label for `label`. Labels that are already final map to
    /// themselves, which makes relabelling idempotent.
    pub fn map_label<'a>(&'a self, label: &'a str) -> Result<&'a str> {
        if let Some(to) = self.final_mapping.get(label) {
            return Ok(to);
        }
        if self.final_mapping.values().any(|v| v == label) {
            return Ok(label);
        }
        Err(Error::UnknownLabel(label.to_owned()))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::InvalidValue(format!("json: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_json()?)
    }
}

/// Repeatedly merges bidirectionally confused categories.
///
/// Each merged category is refit from the pooled training samples of its
/// two parts (in dataset order) with the model's threshold and fusion
/// weights; untouched categories keep their centroids.
pub fn plan_merges(m: &ConceptModel, train: &[LabeledPair]) -> Result<MergePlan> {
    let mut plan = MergePlan::identity(m.categories().iter().map(|c| c.label()));
    if m.categories().len() < 2 {
        return Ok(plan);
    }
    let cfg = TrainConfig::new(m.distance_threshold(), m.fusion());
    let mut model = m.clone();
    let mut data: Vec<LabeledPair> = train.to_vec();

    loop {
        let records = silhouette_all(&model, &data)?;
        let evidence = confusion_summary(&records, &model);
        let pairs = evidence.bidirectional_pairs();
        let round = MergeRound {
            round: plan.rounds.len() + 1,
            categories_before: model.categories().len(),
            evidence,
            merges: pairs
                .iter()
                .map(|(a, b)| MergeEvent {
                    first: a.clone(),
                    second: b.clone(),
                    merged: merged_label(a, b),
                })
                .collect(),
        };
        if round.merges.is_empty() {
            plan.rounds.push(round);
            break;
        }

        let rename: HashMap<&str, &str> = round
            .merges
            .iter()
            .flat_map(|e| [(e.first.as_str(), e.merged.as_str()), (e.second.as_str(), e.merged.as_str())])
            .collect();
        for s in &mut data {
            if let Some(to) = rename.get(s.label.as_str()) {
                s.label = (*to).to_owned();
            }
        }
        for to in plan.final_mapping.values_mut() {
            if let Some(next) = rename.get(to.as_str()) {
                *to = (*next).to_owned();
            }
        }

        let mut categories: Vec<CategoryModel> = Vec::new();
        for cat in model.categories() {
            let Some(&merged) = rename.get(cat.label()) else {
                categories.push(cat.clone());
                continue;
            };
            if categories.iter().any(|c| c.label() == merged) {
                continue;
            }
            let pooled: Vec<LabeledPair> = data.iter().filter(|s| s.label == merged).cloned().collect();
            let (refit, _) = fit(&pooled, &cfg)?;
            categories.push(refit.categories()[0].clone());
        }
        model = ConceptModel::new(categories, model.fusion(), model.distance_threshold())?;
        plan.rounds.push(round);
        if model.categories().len() < 2 {
            break;
        }
    }
    Ok(plan)
}

/// Rewrites labels through the plan's final mapping.
pub fn apply_merge(plan: &MergePlan, data: &[LabeledPair]) -> Result<Vec<LabeledPair>> {
    data.iter()
        .map(|s| {
            Ok(LabeledPair::new(
                s.pair.clone(),
                plan.map_label(&s.label)?,
            ))
        })
        .collect()
}

/// [`apply_merge`] for a label manifest.
pub fn apply_merge_manifest(plan: &MergePlan, manifest: &LabelManifest) -> Result<LabelManifest> {
    let rows = manifest
        .rows()
        .iter()
        .map(|r| {
            Ok(ManifestRow {
                id: r.id,
                category: plan.map_label(&r.category)?.to_owned(),
                split: r.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabelManifest::new(rows)
}
