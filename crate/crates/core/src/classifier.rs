//! Nearest-centroid voting.
//!
//! A query is compared with every centroid of every category. The `n`
//! globally closest centroids vote for their category with weight
//! `1 / distance`, and each category's total is divided by its training
//! count to offset class imbalance.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::datastore::LabeledPair;
use crate::error::{Error, Result};
use crate::model::{fused_distance_unchecked, ConceptModel, FeaturePair};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictConfig {
    pub n_neighbors: usize,
    /// Floor applied to distances before inversion.
    pub epsilon: f64,
}

impl PredictConfig {
    pub fn new(n_neighbors: usize) -> Self {
        Self {
            n_neighbors,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_neighbors == 0 {
            return Err(Error::InvalidConfig("n_neighbors must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// `n` clamped to the number of centroids, warning when clamping.
    fn effective_n(&self, m: &ConceptModel) -> usize {
        let total = m.centroid_count();
        if self.n_neighbors > total {
            warn!(
                "n_neighbors {} exceeds the model's {total} centroids; using {total}",
                self.n_neighbors
            );
        }
        self.n_neighbors.min(total)
    }
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 17,
            epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub category: String,
    pub centroid_index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sample_id: u64,
    pub label: String,
    /// Score of every model category; zero for categories with no neighbour.
    pub scores: BTreeMap<String, f64>,
    /// The selected centroids, nearest first.
    pub neighbors: Vec<Neighbor>,
}

impl Prediction {
    pub fn top_score(&self) -> f64 {
        self.scores[&self.label]
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    distance: f64,
    category: usize,
    centroid: usize,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.category.cmp(&b.category))
        .then(a.centroid.cmp(&b.centroid))
}

fn nearest(m: &ConceptModel, f: &FeaturePair, n: usize) -> Vec<Candidate> {
    let w = m.fusion();
    let mut all = Vec::with_capacity(m.centroid_count());
    for (ci, cat) in m.categories().iter().enumerate() {
        for (k, c) in cat.centroids().iter().enumerate() {
            all.push(Candidate {
                distance: fused_distance_unchecked(c, f, w),
                category: ci,
                centroid: k,
            });
        }
    }
    if n < all.len() {
        all.select_nth_unstable_by(n - 1, candidate_order);
        all.truncate(n);
    }
    all.sort_by(candidate_order);
    all
}

fn predict_with_n(m: &ConceptModel, f: &FeaturePair, n: usize, epsilon: f64) -> Prediction {
    let picked = nearest(m, f, n);
    let mut votes = vec![0.0f64; m.categories().len()];
    for c in &picked {
        votes[c.category] += 1.0 / c.distance.max(epsilon);
    }
    let mut scores = BTreeMap::new();
    for (cat, v) in m.categories().iter().zip(&votes) {
        scores.insert(cat.label().to_owned(), v / cat.train_count() as f64);
    }
    // BTreeMap iterates labels in lexicographic order, so keeping the first
    // strict maximum breaks ties toward the smallest label.
    let mut label = "";
    let mut best = f64::NEG_INFINITY;
    for (l, &s) in &scores {
        if s > best {
            best = s;
            label = l;
        }
    }
    let label = label.to_owned();
    let neighbors = picked
        .iter()
        .map(|c| Neighbor {
            category: m.categories()[c.category].label().to_owned(),
            centroid_index: c.centroid,
            distance: c.distance,
        })
        .collect();
    Prediction {
        sample_id: f.id,
        label,
        scores,
        neighbors,
    }
}

pub fn predict(m: &ConceptModel, f: &FeaturePair, cfg: &PredictConfig) -> Result<Prediction> {
    cfg.validate()?;
    m.check_pair(f)?;
    Ok(predict_with_n(m, f, cfg.effective_n(m), cfg.epsilon))
}

/// Predicts every sample, in parallel on the current rayon pool. Output
/// order matches input order.
pub fn predict_batch(
    m: &ConceptModel,
    fs: &[FeaturePair],
    cfg: &PredictConfig,
) -> Result<Vec<Prediction>> {
    cfg.validate()?;
    for f in fs {
        m.check_pair(f)?;
    }
    if fs.is_empty() {
        return Ok(Vec::new());
    }
    let n = cfg.effective_n(m);
    Ok(fs
        .par_iter()
        .map(|f| predict_with_n(m, f, n, cfg.epsilon))
        .collect())
}

/// CSV with one row per prediction:
/// `sample_id,predicted,score_top1,neighbor_1_category,neighbor_1_distance,...`.
pub fn predictions_csv(preds: &[Prediction]) -> Result<Vec<u8>> {
    let k = preds.iter().map(|p| p.neighbors.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidValue(format!("csv: {e}"));
    let mut header = vec!["sample_id".to_string(), "predicted".into(), "score_top1".into()];
    for i in 1..=k {
        header.push(format!("neighbor_{i}_category"));
        header.push(format!("neighbor_{i}_distance"));
    }
    w.write_record(&header).map_err(err)?;
    for p in preds {
        let mut row = vec![p.sample_id.to_string(), p.label.clone(), p.top_score().to_string()];
        for i in 0..k {
            match p.neighbors.get(i) {
                Some(nb) => {
                    row.push(nb.category.clone());
                    row.push(nb.distance.to_string());
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidValue(format!("csv: {e}")))
}

/// Hyperparameters a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub distance_threshold: f64,
    pub n_neighbors: usize,
    pub w_rgb: f64,
    pub w_depth: f64,
    pub epsilon: f64,
}

impl Provenance {
    pub fn new(m: &ConceptModel, cfg: &PredictConfig) -> Self {
        Self {
            distance_threshold: m.distance_threshold(),
            n_neighbors: cfg.n_neighbors,
            w_rgb: m.fusion().rgb(),
            w_depth: m.fusion().depth(),
            epsilon: cfg.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub support: u64,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub samples: usize,
    pub overall_accuracy: f64,
    pub mean_class_accuracy: f64,
    /// Row/column labels of `confusion`: model categories in model order,
    /// then test-only labels in lexicographic order.
    pub labels: Vec<String>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Only classes with at least one test sample.
    pub per_class_accuracy: BTreeMap<String, ClassAccuracy>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::InvalidValue(format!("json: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }
}

/// Builds the report from (truth, predicted) label pairs.
pub fn eval_report(
    m: &ConceptModel,
    cfg: &PredictConfig,
    outcomes: &[(&str, &str)],
) -> Result<EvalReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut labels: Vec<String> = m.categories().iter().map(|c| c.label().to_owned()).collect();
    let mut extra: Vec<&str> = outcomes
        .iter()
        .map(|(t, _)| *t)
        .filter(|t| m.category_index(t).is_none())
        .collect();
    extra.sort_unstable();
    extra.dedup();
    labels.extend(extra.iter().map(|s| s.to_string()));
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

    let k = labels.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (t, p) in outcomes {
        confusion[index[t]][index[p]] += 1;
    }
    let correct_total: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let mut per_class = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        let support: u64 = confusion[i].iter().sum();
        if support == 0 {
            continue;
        }
        let correct = confusion[i][i];
        per_class.insert(
            l.clone(),
            ClassAccuracy {
                support,
                correct,
                accuracy: correct as f64 / support as f64,
            },
        );
    }
    let mean_class =
        per_class.values().map(|c| c.accuracy).sum::<f64>() / per_class.len() as f64;
    Ok(EvalReport {
        provenance: Provenance::new(m, cfg),
        samples: outcomes.len(),
        overall_accuracy: correct_total as f64 / outcomes.len() as f64,
        mean_class_accuracy: mean_class,
        labels,
        confusion,
        per_class_accuracy: per_class,
    })
}

/// Classifies a labelled test set and summarises the results. Labels the
/// model does not know count as errors.
pub fn evaluate(m: &ConceptModel, test: &[LabeledPair], cfg: &PredictConfig) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyData);
    }
    let pairs: Vec<FeaturePair> = test.iter().map(|s| s.pair.clone()).collect();
    let preds = predict_batch(m, &pairs, cfg)?;
    let outcomes: Vec<(&str, &str)> = test
        .iter()
        .zip(&preds)
        .map(|(s, p)| (s.label.as_str(), p.label.as_str()))
        .collect();
    eval_report(m, cfg, &outcomes)
}
