//! Grid search over (threshold, neighbours, depth weight) with stratified
//! k-fold cross-validation on the training split.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{evaluate, PredictConfig};
use crate::datastore::LabeledPair;
use crate::error::{Error, Result};
use crate::model::FusionWeights;
use crate::trainer::{fit, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TuneGrid {
    pub distance_thresholds: Vec<f64>,
    pub n_neighbors: Vec<usize>,
    pub w_depth: Vec<f64>,
}

impl TuneGrid {
    /// Drops repeated axis values (keeping the first), warning if any.
    pub fn dedup(&self) -> Self {
        fn uniq<T: PartialEq + Copy + std::fmt::Debug>(name: &str, v: &[T]) -> Vec<T> {
            let mut out: Vec<T> = Vec::with_capacity(v.len());
            for &x in v {
                if !out.contains(&x) {
                    out.push(x);
                }
            }
            if out.len() != v.len() {
                warn!("duplicate {name} grid values removed: {v:?} -> {out:?}");
            }
            out
        }
        Self {
            distance_thresholds: uniq("distance-threshold", &self.distance_thresholds),
            n_neighbors: uniq("n-neighbors", &self.n_neighbors),
            w_depth: uniq("w-depth", &self.w_depth),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.distance_thresholds.is_empty() || self.n_neighbors.is_empty() || self.w_depth.is_empty()
        {
            return Err(Error::InvalidConfig("tuning grid must be non-empty on every axis".into()));
        }
        if let Some(d) = self.distance_thresholds.iter().find(|d| d.is_nan() || **d <= 0.0) {
            return Err(Error::InvalidConfig(format!("grid threshold {d} must be positive")));
        }
        if self.n_neighbors.contains(&0) {
            return Err(Error::InvalidConfig("grid n-neighbors must be at least 1".into()));
        }
        if let Some(w) = self.w_depth.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidConfig(format!("grid depth weight {w} must be non-negative")));
        }
        Ok(())
    }

    /// Grid points in output order: threshold-major, then n, then depth weight.
    pub fn points(&self) -> Vec<(f64, usize, f64)> {
        let mut out = Vec::new();
        for &d in &self.distance_thresholds {
            for &n in &self.n_neighbors {
                for &wd in &self.w_depth {
                    out.push((d, n, wd));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneConfig {
    pub folds: usize,
    pub seed: u64,
    pub w_rgb: f64,
    pub epsilon: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 42,
            w_rgb: 1.0,
            epsilon: PredictConfig::default().epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneRow {
    pub distance_threshold: f64,
    pub n_neighbors: usize,
    pub w_depth: f64,
    /// Validation mean-class accuracy per fold.
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub folds: usize,
    pub seed: u64,
    pub w_rgb: f64,
    pub samples: usize,
    pub best: TuneRow,
    pub table: Vec<TuneRow>,
}

impl TuneReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::InvalidValue(format!("json: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }
}

/// Fold index for every sample. Within each category the samples are
/// shuffled with `seed` and dealt round-robin, so every fold receives
/// `floor(N_j / k)` or `ceil(N_j / k)` samples of category `j`.
pub fn stratified_folds(data: &[LabeledPair], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in data.iter().enumerate() {
        by_label.entry(s.label.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; data.len()];
    for (label, mut idx) in by_label {
        if idx.len() < folds {
            return Err(Error::TooFewForFolds {
                label: label.to_owned(),
                count: idx.len(),
                folds,
            });
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Ok(assignment)
}

pub fn tune(train: &[LabeledPair], grid: &TuneGrid, cfg: &TuneConfig) -> Result<TuneReport> {
    if train.is_empty() {
        return Err(Error::EmptyData);
    }
    let grid = grid.dedup();
    grid.validate()?;
    let fold_of = stratified_folds(train, cfg.folds, cfg.seed)?;
    let splits: Vec<(Vec<LabeledPair>, Vec<LabeledPair>)> = (0..cfg.folds)
        .map(|f| {
            let mut fit_part = Vec::new();
            let mut val_part = Vec::new();
            for (s, &k) in train.iter().zip(&fold_of) {
                if k == f {
                    val_part.push(s.clone());
                } else {
                    fit_part.push(s.clone());
                }
            }
            (fit_part, val_part)
        })
        .collect();

    // One model per (threshold, depth weight, fold); every n reuses it.
    let mut jobs = Vec::new();
    for &d in &grid.distance_thresholds {
        for &wd in &grid.w_depth {
            for f in 0..cfg.folds {
                jobs.push((d, wd, f));
            }
        }
    }
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(d, wd, f)| -> Result<Vec<f64>> {
            let fusion = FusionWeights::new(cfg.w_rgb, wd)?;
            let (model, _) = fit(&splits[f].0, &TrainConfig::new(d, fusion))?;
            grid.n_neighbors
                .iter()
                .map(|&n| {
                    let pc = PredictConfig {
                        n_neighbors: n,
                        epsilon: cfg.epsilon,
                    };
                    Ok(evaluate(&model, &splits[f].1, &pc)?.mean_class_accuracy)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n_wd = grid.w_depth.len();
    let mut table = Vec::new();
    for (di, &d) in grid.distance_thresholds.iter().enumerate() {
        for (ni, &n) in grid.n_neighbors.iter().enumerate() {
            for (wi, &wd) in grid.w_depth.iter().enumerate() {
                let base = (di * n_wd + wi) * cfg.folds;
                let fold_scores: Vec<f64> =
                    (0..cfg.folds).map(|f| results[base + f][ni]).collect();
                let mean_score = fold_scores.iter().sum::<f64>() / cfg.folds as f64;
                table.push(TuneRow {
                    distance_threshold: d,
                    n_neighbors: n,
                    w_depth: wd,
                    fold_scores,
                    mean_score,
                });
            }
        }
    }
    let mut best = &table[0];
    for row in &table[1..] {
        if row.mean_score > best.mean_score {
            best = row;
        }
    }
    Ok(TuneReport {
        folds: cfg.folds,
        seed: cfg.seed,
        w_rgb: cfg.w_rgb,
        samples: train.len(),
        best: best.clone(),
        table,
    })
}
