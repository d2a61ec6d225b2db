//! Domain types shared by every stage of the pipeline, plus the three
//! primitive operations the rest of the crate is built on: the fused
//! two-stream distance, the running-mean centroid update and the
//! weighted merge of two centroids.
//!
//! Sample features are kept as `f32` (the on-disk precision). Centroids are
//! accumulated in `f64` so that long running means stay within 1e-6 of
//! the exact member mean.

use log::warn;

use crate::error::{Error, Modality, Result};

/// One stream's activation vector for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f32>);

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidValue("feature vector must be non-empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite value at position {pos}"
            )));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl TryFrom<Vec<f32>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Self::new(values)
    }
}

/// Both streams of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePair {
    pub id: u64,
    pub rgb: FeatureVector,
    pub depth: FeatureVector,
}

impl FeaturePair {
    pub fn new(id: u64, rgb: FeatureVector, depth: FeatureVector) -> Self {
        Self { id, rgb, depth }
    }

    /// Convenience constructor; validates both vectors and tags a
    /// non-finite value with the sample id.
    pub fn from_values(id: u64, rgb: Vec<f32>, depth: Vec<f32>) -> Result<Self> {
        let wrap = |v: Vec<f32>| match FeatureVector::new(v) {
            Err(Error::InvalidValue(msg)) if msg.starts_with("non-finite") => {
                Err(Error::NonFinite { id })
            }
            other => other,
        };
        Ok(Self::new(id, wrap(rgb)?, wrap(depth)?))
    }

    pub(crate) fn check_dims(&self, rgb_dim: usize, depth_dim: usize) -> Result<()> {
        if self.rgb.dim() != rgb_dim {
            return Err(Error::SampleDimension {
                id: self.id,
                modality: Modality::Rgb,
                expected: rgb_dim,
                found: self.rgb.dim(),
            });
        }
        if self.depth.dim() != depth_dim {
            return Err(Error::SampleDimension {
                id: self.id,
                modality: Modality::Depth,
                expected: depth_dim,
                found: self.depth.dim(),
            });
        }
        Ok(())
    }
}

/// Per-stream multipliers applied to the two Euclidean distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    w_rgb: f64,
    w_depth: f64,
}

impl FusionWeights {
    pub fn new(w_rgb: f64, w_depth: f64) -> Result<Self> {
        if !w_rgb.is_finite() || !w_depth.is_finite() || w_rgb < 0.0 || w_depth < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "fusion weights must be finite and non-negative, got ({w_rgb}, {w_depth})"
            )));
        }
        if w_rgb + w_depth <= 0.0 {
            return Err(Error::InvalidConfig(
                "at least one fusion weight must be positive".into(),
            ));
        }
        if w_rgb > 1.0 || w_depth > 1.0 {
            warn!("fusion weights ({w_rgb}, {w_depth}) exceed the usual [0, 1] range");
        }
        Ok(Self { w_rgb, w_depth })
    }

    pub fn rgb(&self) -> f64 {
        self.w_rgb
    }

    pub fn depth(&self) -> f64 {
        self.w_depth
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.w_rgb * factor, self.w_depth * factor)
    }

    #[inline]
    fn combine(&self, d_rgb: f64, d_depth: f64) -> f64 {
        0.5 * (self.w_rgb * d_rgb + self.w_depth * d_depth)
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            w_rgb: 1.0,
            w_depth: 0.73,
        }
    }
}

/// A learned concept: one centroid per stream and the number of samples
/// it summarises.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidPair {
    rgb: Vec<f64>,
    depth: Vec<f64>,
    weight: u64,
}

impl CentroidPair {
    pub fn new(rgb: Vec<f64>, depth: Vec<f64>, weight: u64) -> Result<Self> {
        if weight == 0 {
            return Err(Error::InvalidValue("centroid weight must be at least 1".into()));
        }
        if rgb.is_empty() || depth.is_empty() {
            return Err(Error::InvalidValue("centroid vectors must be non-empty".into()));
        }
        if rgb.iter().chain(&depth).any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("centroid holds a non-finite value".into()));
        }
        Ok(Self { rgb, depth, weight })
    }

    /// A fresh weight-1 centroid sitting on a sample.
    pub fn seed(f: &FeaturePair) -> Self {
        Self {
            rgb: widen(f.rgb.as_slice()),
            depth: widen(f.depth.as_slice()),
            weight: 1,
        }
    }

    pub fn rgb(&self) -> &[f64] {
        &self.rgb
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }

    pub fn rgb_dim(&self) -> usize {
        self.rgb.len()
    }

    pub fn depth_dim(&self) -> usize {
        self.depth.len()
    }

    /// Rounds both vectors to `f32` precision, the precision of model files.
    pub fn quantized(&self) -> Self {
        let q = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect();
        Self {
            rgb: q(&self.rgb),
            depth: q(&self.depth),
            weight: self.weight,
        }
    }

    fn check_against_pair(&self, f: &FeaturePair) -> Result<()> {
        check_dim(Modality::Rgb, self.rgb.len(), f.rgb.dim())?;
        check_dim(Modality::Depth, self.depth.len(), f.depth.dim())
    }

    fn check_against(&self, other: &CentroidPair) -> Result<()> {
        check_dim(Modality::Rgb, self.rgb.len(), other.rgb.len())?;
        check_dim(Modality::Depth, self.depth.len(), other.depth.len())
    }

    /// In-place running-mean absorption of one sample. Callers check dims.
    pub(crate) fn absorb(&mut self, f: &FeaturePair) {
        let w = self.weight as f64;
        let denom = w + 1.0;
        running_mean(&mut self.rgb, f.rgb.as_slice(), w, denom);
        running_mean(&mut self.depth, f.depth.as_slice(), w, denom);
        self.weight += 1;
    }

    /// In-place weighted merge with another centroid. Callers check dims.
    pub(crate) fn absorb_centroid(&mut self, other: &CentroidPair) {
        let wa = self.weight as f64;
        let wb = other.weight as f64;
        let total = wa + wb;
        for (a, &b) in self.rgb.iter_mut().zip(&other.rgb) {
            *a = (wa * *a + wb * b) / total;
        }
        for (a, &b) in self.depth.iter_mut().zip(&other.depth) {
            *a = (wa * *a + wb * b) / total;
        }
        self.weight += other.weight;
    }
}

fn running_mean(centroid: &mut [f64], sample: &[f32], w: f64, denom: f64) {
    for (c, &x) in centroid.iter_mut().zip(sample) {
        *c = (w * *c + x as f64) / denom;
    }
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn check_dim(modality: Modality, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            modality,
            expected,
            found,
        });
    }
    Ok(())
}

/// All centroids of one category and the number of training samples
/// they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryModel {
    label: String,
    centroids: Vec<CentroidPair>,
    train_count: u64,
}

impl CategoryModel {
    pub fn new(label: impl Into<String>, centroids: Vec<CentroidPair>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidValue("category label must be non-empty".into()));
        }
        if centroids.is_empty() {
            return Err(Error::EmptyCategory(label));
        }
        let (r, d) = (centroids[0].rgb_dim(), centroids[0].depth_dim());
        for c in &centroids[1..] {
            check_dim(Modality::Rgb, r, c.rgb_dim())?;
            check_dim(Modality::Depth, d, c.depth_dim())?;
        }
        let train_count = centroids.iter().map(|c| c.weight).sum();
        Ok(Self {
            label,
            centroids,
            train_count,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn centroids(&self) -> &[CentroidPair] {
        &self.centroids
    }

    /// N_j: number of training samples summarised by this category.
    pub fn train_count(&self) -> u64 {
        self.train_count
    }
}

/// A trained classifier: every category's centroids plus the fusion
/// weights and threshold they were built with.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptModel {
    categories: Vec<CategoryModel>,
    fusion: FusionWeights,
    rgb_dim: usize,
    depth_dim: usize,
    distance_threshold: f64,
}

impl ConceptModel {
    pub fn new(
        categories: Vec<CategoryModel>,
        fusion: FusionWeights,
        distance_threshold: f64,
    ) -> Result<Self> {
        let Some(first) = categories.first() else {
            return Err(Error::InvalidValue("model needs at least one category".into()));
        };
        if distance_threshold.is_nan() || distance_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "distance threshold must be positive, got {distance_threshold}"
            )));
        }
        let rgb_dim = first.centroids[0].rgb_dim();
        let depth_dim = first.centroids[0].depth_dim();
        let mut seen = std::collections::HashSet::new();
        for cat in &categories {
            if !seen.insert(cat.label.as_str()) {
                return Err(Error::DuplicateLabel(cat.label.clone()));
            }
            let c = &cat.centroids[0];
            check_dim(Modality::Rgb, rgb_dim, c.rgb_dim())?;
            check_dim(Modality::Depth, depth_dim, c.depth_dim())?;
        }
        Ok(Self {
            categories,
            fusion,
            rgb_dim,
            depth_dim,
            distance_threshold,
        })
    }

    pub fn categories(&self) -> &[CategoryModel] {
        &self.categories
    }

    pub fn category(&self, label: &str) -> Option<&CategoryModel> {
        self.categories.iter().find(|c| c.label == label)
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.label == label)
    }

    pub fn fusion(&self) -> FusionWeights {
        self.fusion
    }

    pub fn rgb_dim(&self) -> usize {
        self.rgb_dim
    }

    pub fn depth_dim(&self) -> usize {
        self.depth_dim
    }

    pub fn distance_threshold(&self) -> f64 {
        self.distance_threshold
    }

    pub fn centroid_count(&self) -> usize {
        self.categories.iter().map(|c| c.centroids.len()).sum()
    }

    /// Same model with every centroid rounded to `f32` precision.
    pub fn quantized(&self) -> Self {
        let categories = self
            .categories
            .iter()
            .map(|cat| CategoryModel {
                label: cat.label.clone(),
                centroids: cat.centroids.iter().map(CentroidPair::quantized).collect(),
                train_count: cat.train_count,
            })
            .collect();
        Self {
            categories,
            ..self.clone()
        }
    }

    pub(crate) fn check_pair(&self, f: &FeaturePair) -> Result<()> {
        f.check_dims(self.rgb_dim, self.depth_dim)
    }
}

/// Euclidean distance between an `f64` centroid and an `f32` sample.
#[inline]
pub(crate) fn euclidean_mixed(a: &[f64], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for k in 0..4 {
            let d = ca[k] - cb[k] as f64;
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in a[chunks..].iter().zip(&b[chunks..]) {
        let d = x - y as f64;
        tail += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail).sqrt()
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for k in 0..4 {
            let d = ca[k] - cb[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in a[chunks..].iter().zip(&b[chunks..]) {
        let d = x - y;
        tail += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail).sqrt()
}

/// Fused distance without dimension checks; the hot path of fit/predict.
#[inline]
pub(crate) fn fused_distance_unchecked(c: &CentroidPair, f: &FeaturePair, w: FusionWeights) -> f64 {
    let d_rgb = if w.w_rgb == 0.0 {
        0.0
    } else {
        euclidean_mixed(&c.rgb, f.rgb.as_slice())
    };
    let d_depth = if w.w_depth == 0.0 {
        0.0
    } else {
        euclidean_mixed(&c.depth, f.depth.as_slice())
    };
    w.combine(d_rgb, d_depth)
}

#[inline]
pub(crate) fn centroid_distance_unchecked(
    a: &CentroidPair,
    b: &CentroidPair,
    w: FusionWeights,
) -> f64 {
    let d_rgb = if w.w_rgb == 0.0 { 0.0 } else { euclidean(&a.rgb, &b.rgb) };
    let d_depth = if w.w_depth == 0.0 {
        0.0
    } else {
        euclidean(&a.depth, &b.depth)
    };
    w.combine(d_rgb, d_depth)
}

/// Half the weighted sum of the per-stream Euclidean distances between a
/// centroid pair and a sample.
pub fn fused_distance(c: &CentroidPair, f: &FeaturePair, w: FusionWeights) -> Result<f64> {
    c.check_against_pair(f)?;
    Ok(fused_distance_unchecked(c, f, w))
}

/// The same fused distance between two centroid pairs.
pub fn centroid_distance(a: &CentroidPair, b: &CentroidPair, w: FusionWeights) -> Result<f64> {
    a.check_against(b)?;
    Ok(centroid_distance_unchecked(a, b, w))
}

/// Absorbs one sample: each stream becomes `(weight·c + f) / (weight + 1)`.
pub fn update_centroid(c: &CentroidPair, f: &FeaturePair) -> Result<CentroidPair> {
    c.check_against_pair(f)?;
    let mut out = c.clone();
    out.absorb(f);
    Ok(out)
}

/// Weight-proportional mean of two centroid pairs.
pub fn merge_centroids(a: &CentroidPair, b: &CentroidPair) -> Result<CentroidPair> {
    a.check_against(b)?;
    let mut out = a.clone();
    out.absorb_centroid(b);
    Ok(out)
}
