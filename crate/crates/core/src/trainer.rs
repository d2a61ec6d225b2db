//! Agg-Var clustering.
//!
//! Each category is clustered on its own. The first sample seeds a
//! centroid; every later sample is compared with all of the category's
//! current centroids and is either absorbed into the nearest one (fused
//! distance strictly below the threshold) or becomes a new centroid.

use std::collections::HashMap;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::codec::write_atomic;
use crate::datastore::LabeledPair;
use crate::error::{Error, Result};
use crate::model::{
    centroid_distance_unchecked, fused_distance_unchecked, CategoryModel, CentroidPair,
    ConceptModel, FeaturePair, FusionWeights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderPolicy {
    DatasetOrder,
    SeededShuffle(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub distance_threshold: f64,
    pub fusion: FusionWeights,
    pub order: OrderPolicy,
    pub record_assignments: bool,
}

impl TrainConfig {
    pub fn new(distance_threshold: f64, fusion: FusionWeights) -> Self {
        Self {
            distance_threshold,
            fusion,
            order: OrderPolicy::DatasetOrder,
            record_assignments: false,
        }
    }

    pub fn with_order(mut self, order: OrderPolicy) -> Self {
        self.order = order;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_assignments = record;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.distance_threshold.is_nan() || self.distance_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "distance threshold must be positive, got {}",
                self.distance_threshold
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(85.0, FusionWeights::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceAction {
    /// First sample of a category.
    Seed,
    /// Merged into an existing centroid.
    Absorb,
    /// Too far from every centroid; started a new one.
    Create,
}

impl TraceAction {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceAction::Seed => "seed",
            TraceAction::Absorb => "absorb",
            TraceAction::Create => "create",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub sample_id: u64,
    pub category: String,
    pub centroid_index: usize,
    pub action: TraceAction,
}

/// Where every training sample went, in processing order (categories in
/// model order, samples in the order they were clustered).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentTrace {
    pub entries: Vec<TraceEntry>,
}

impl AssignmentTrace {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample_id", "category", "centroid_index", "action"])
            .map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.sample_id.to_string(),
                e.category.clone(),
                e.centroid_index.to_string(),
                e.action.as_str().to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidValue(format!("csv: {e}")))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_csv()?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidValue(format!("csv: {e}"))
}

/// Groups samples by label, keeping labels in order of first appearance
/// and samples in processing order.
fn group_by_label(data: &[LabeledPair], order: OrderPolicy) -> Vec<(&str, Vec<&FeaturePair>)> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    if let OrderPolicy::SeededShuffle(seed) = order {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut label_order: Vec<&str> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for s in data {
        slot.entry(s.label.as_str()).or_insert_with(|| {
            label_order.push(s.label.as_str());
            label_order.len() - 1
        });
    }
    let mut groups: Vec<(&str, Vec<&FeaturePair>)> =
        label_order.iter().map(|&l| (l, Vec::new())).collect();
    for i in idx {
        let s = &data[i];
        groups[slot[s.label.as_str()]].1.push(&s.pair);
    }
    groups
}

struct CategoryFit {
    centroids: Vec<CentroidPair>,
    trace: Vec<(u64, usize, TraceAction)>,
}

fn cluster_category(samples: &[&FeaturePair], cfg: &TrainConfig) -> CategoryFit {
    let record = cfg.record_assignments;
    let mut centroids = vec![CentroidPair::seed(samples[0])];
    let mut trace = Vec::new();
    if record {
        trace.reserve(samples.len());
        trace.push((samples[0].id, 0, TraceAction::Seed));
    }
    for f in &samples[1..] {
        let (nearest, d_min) = nearest_centroid(&centroids, f, cfg.fusion);
        if d_min < cfg.distance_threshold {
            centroids[nearest].absorb(f);
            if record {
                trace.push((f.id, nearest, TraceAction::Absorb));
            }
        } else {
            centroids.push(CentroidPair::seed(f));
            if record {
                trace.push((f.id, centroids.len() - 1, TraceAction::Create));
            }
        }
    }
    CategoryFit { centroids, trace }
}

/// Index and distance of the nearest centroid; the lowest index wins ties.
fn nearest_centroid(centroids: &[CentroidPair], f: &FeaturePair, w: FusionWeights) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = fused_distance_unchecked(c, f, w);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Builds a concept model from labelled training pairs.
///
/// Categories are independent and are clustered in parallel on the current
/// rayon pool; results do not depend on the thread count. The returned
/// trace is empty unless `cfg.record_assignments` is set.
pub fn fit(data: &[LabeledPair], cfg: &TrainConfig) -> Result<(ConceptModel, AssignmentTrace)> {
    cfg.validate()?;
    let Some(first) = data.first() else {
        return Err(Error::EmptyData);
    };
    let rgb_dim = first.pair.rgb.dim();
    let depth_dim = first.pair.depth.dim();
    for s in data {
        if s.label.is_empty() {
            return Err(Error::InvalidValue(format!(
                "sample {} has an empty label",
                s.pair.id
            )));
        }
        s.pair.check_dims(rgb_dim, depth_dim)?;
    }

    let groups = group_by_label(data, cfg.order);
    let fits: Vec<CategoryFit> = groups
        .par_iter()
        .map(|(_, samples)| cluster_category(samples, cfg))
        .collect();

    let mut categories = Vec::with_capacity(groups.len());
    let mut trace = AssignmentTrace::default();
    for ((label, _), fit) in groups.iter().zip(fits) {
        trace
            .entries
            .extend(fit.trace.into_iter().map(|(id, idx, action)| TraceEntry {
                sample_id: id,
                category: (*label).to_owned(),
                centroid_index: idx,
                action,
            }));
        let centroids = fit.centroids.iter().map(CentroidPair::quantized).collect();
        categories.push(CategoryModel::new(*label, centroids)?);
    }
    let model = ConceptModel::new(categories, cfg.fusion, cfg.distance_threshold)?;
    Ok((model, trace))
}

/// Re-clusters each category's existing centroids with a new (normally
/// larger) threshold, merging nearby centroids by weighted mean.
///
/// Centroids are visited in stored order with the same strict-`<` rule as
/// [`fit`]. `f64::INFINITY` collapses every category to one centroid.
pub fn condense(m: &ConceptModel, new_threshold: f64) -> Result<ConceptModel> {
    if new_threshold.is_nan() || new_threshold <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "condense threshold must be positive, got {new_threshold}"
        )));
    }
    if new_threshold <= m.distance_threshold() {
        warn!(
            "condense threshold {new_threshold} is not larger than the model's {}",
            m.distance_threshold()
        );
    }
    let w = m.fusion();
    let categories = m
        .categories()
        .par_iter()
        .map(|cat| {
            let stored = cat.centroids();
            let mut out: Vec<CentroidPair> = vec![stored[0].clone()];
            for c in &stored[1..] {
                let mut best = (0, f64::INFINITY);
                for (i, existing) in out.iter().enumerate() {
                    let d = centroid_distance_unchecked(existing, c, w);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                if best.1 < new_threshold {
                    out[best.0].absorb_centroid(c);
                } else {
                    out.push(c.clone());
                }
            }
            let out = out.iter().map(CentroidPair::quantized).collect();
            CategoryModel::new(cat.label(), out)
        })
        .collect::<Result<Vec<_>>>()?;
    ConceptModel::new(categories, w, new_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStats {
    pub label: String,
    pub centroids: usize,
    pub min_weight: u64,
    pub max_weight: u64,
    pub mean_weight: f64,
    pub train_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelStats {
    pub rgb_dim: usize,
    pub depth_dim: usize,
    pub w_rgb: f64,
    pub w_depth: f64,
    pub distance_threshold: f64,
    pub total_categories: usize,
    pub total_centroids: usize,
    pub total_train_count: u64,
    pub categories: Vec<CategoryStats>,
}

pub fn centroid_stats(m: &ConceptModel) -> ModelStats {
    let categories: Vec<CategoryStats> = m
        .categories()
        .iter()
        .map(|cat| {
            let weights = cat.centroids().iter().map(|c| c.weight());
            CategoryStats {
                label: cat.label().to_owned(),
                centroids: cat.centroids().len(),
                min_weight: weights.clone().min().unwrap_or(0),
                max_weight: weights.max().unwrap_or(0),
                mean_weight: cat.train_count() as f64 / cat.centroids().len() as f64,
                train_count: cat.train_count(),
            }
        })
        .collect();
    ModelStats {
        rgb_dim: m.rgb_dim(),
        depth_dim: m.depth_dim(),
        w_rgb: m.fusion().rgb(),
        w_depth: m.fusion().depth(),
        distance_threshold: m.distance_threshold(),
        total_categories: categories.len(),
        total_centroids: m.centroid_count(),
        total_train_count: categories.iter().map(|c| c.train_count).sum(),
        categories,
    }
}
