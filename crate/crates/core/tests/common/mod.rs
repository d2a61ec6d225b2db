//! Test-only helpers: random instances and brute-force oracles.
//!
//! The oracles here use their own naive distance code and never call into
//! the library's distance kernels.

#![allow(dead_code)]

use cbcl::datastore::LabeledPair;
use cbcl::{CategoryModel, CentroidPair, ConceptModel, FeaturePair, FusionWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn l2(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Naive fused distance between a centroid and a sample.
pub fn oracle_distance(c: &CentroidPair, f: &FeaturePair, w_rgb: f64, w_depth: f64) -> f64 {
    let dr = l2(c.rgb().iter().copied(), f.rgb.as_slice().iter().map(|&x| x as f64));
    let dd = l2(c.depth().iter().copied(), f.depth.as_slice().iter().map(|&x| x as f64));
    0.5 * (w_rgb * dr + w_depth * dd)
}

/// Naive fused distance between two raw sample pairs.
pub fn oracle_pair_distance(a: &FeaturePair, b: &FeaturePair, w_rgb: f64, w_depth: f64) -> f64 {
    let f = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let dr = l2(f(a.rgb.as_slice()).into_iter(), f(b.rgb.as_slice()).into_iter());
    let dd = l2(f(a.depth.as_slice()).into_iter(), f(b.depth.as_slice()).into_iter());
    0.5 * (w_rgb * dr + w_depth * dd)
}

/// Per-stream arithmetic mean of a set of samples, by direct summation.
pub fn oracle_mean(members: &[&FeaturePair]) -> (Vec<f64>, Vec<f64>) {
    let n = members.len() as f64;
    let mut rgb = vec![0.0; members[0].rgb.dim()];
    let mut depth = vec![0.0; members[0].depth.dim()];
    for m in members {
        for (acc, &x) in rgb.iter_mut().zip(m.rgb.as_slice()) {
            *acc += x as f64;
        }
        for (acc, &x) in depth.iter_mut().zip(m.depth.as_slice()) {
            *acc += x as f64;
        }
    }
    (rgb.iter().map(|s| s / n).collect(), depth.iter().map(|s| s / n).collect())
}

/// `‖got - want‖∞ <= tol * ‖want‖∞` (absolute `tol` when `want` is zero).
pub fn rel_close(got: &[f64], want: &[f64], tol: f64) -> bool {
    let scale = want.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0e-300);
    let err = got.iter().zip(want).fold(0.0f64, |m, (g, w)| m.max((g - w).abs()));
    got.len() == want.len() && (err <= tol * scale || err <= tol)
}

pub struct Instance {
    pub data: Vec<LabeledPair>,
    pub fusion: FusionWeights,
    pub threshold: f64,
}

/// Random training set: up to `max_cats` categories, up to `max_samples`
/// samples, per-stream dims up to `max_dim`. Samples are drawn around a few
/// random anchors so both absorption and creation occur.
pub fn random_instance(seed: u64, max_cats: usize, max_samples: usize, max_dim: usize) -> Instance {
    let mut r = rng(seed);
    let cats = r.gen_range(1..=max_cats);
    let n = r.gen_range(cats..=max_samples.max(cats));
    let rgb_dim = r.gen_range(1..=max_dim);
    let depth_dim = r.gen_range(1..=max_dim);
    let anchors: Vec<(Vec<f32>, Vec<f32>)> = (0..4)
        .map(|_| {
            (
                (0..rgb_dim).map(|_| r.gen_range(-5.0..5.0)).collect(),
                (0..depth_dim).map(|_| r.gen_range(-5.0..5.0)).collect(),
            )
        })
        .collect();
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        // First `cats` samples guarantee every category is present.
        let c = if i < cats { i } else { r.gen_range(0..cats) };
        let (ar, ad) = &anchors[r.gen_range(0..anchors.len())];
        let jitter = r.gen_range(0.05..1.5f32);
        let rgb = ar.iter().map(|&x| x + r.gen_range(-jitter..jitter)).collect();
        let depth = ad.iter().map(|&x| x + r.gen_range(-jitter..jitter)).collect();
        data.push(LabeledPair::new(
            FeaturePair::from_values(i as u64 * 3 + 1, rgb, depth).unwrap(),
            format!("c{c}"),
        ));
    }
    let w_rgb = if r.gen_bool(0.1) { 0.0 } else { r.gen_range(0.05..1.0) };
    let w_depth = r.gen_range(0.05..1.0);
    let typical = 0.5 * (w_rgb + w_depth) * ((rgb_dim + depth_dim) as f64).sqrt();
    let threshold = typical * r.gen_range(0.05..1.5);
    Instance {
        data,
        fusion: FusionWeights::new(w_rgb, w_depth).unwrap(),
        threshold,
    }
}

/// Random model with up to `max_centroids` centroids over 2..=6 categories,
/// plus random query samples.
pub fn random_model(seed: u64, max_centroids: usize, queries: usize) -> (ConceptModel, Vec<FeaturePair>) {
    let mut r = rng(seed);
    let cats = r.gen_range(2..=6usize);
    let total = r.gen_range(cats..=max_centroids);
    let rgb_dim = r.gen_range(1..=12);
    let depth_dim = r.gen_range(1..=12);
    let mut per_cat: Vec<Vec<CentroidPair>> = vec![Vec::new(); cats];
    for i in 0..total {
        let c = if i < cats { i } else { r.gen_range(0..cats) };
        let rgb = (0..rgb_dim).map(|_| r.gen_range(-3.0..3.0)).collect();
        let depth = (0..depth_dim).map(|_| r.gen_range(-3.0..3.0)).collect();
        per_cat[c].push(CentroidPair::new(rgb, depth, r.gen_range(1..20)).unwrap());
    }
    let categories = per_cat
        .into_iter()
        .enumerate()
        .map(|(i, cs)| CategoryModel::new(format!("k{i}"), cs).unwrap())
        .collect();
    let fusion = FusionWeights::new(r.gen_range(0.0..1.0), r.gen_range(0.05..1.0)).unwrap();
    let model = ConceptModel::new(categories, fusion, 1.0).unwrap();
    let qs = (0..queries)
        .map(|q| {
            FeaturePair::from_values(
                q as u64,
                (0..rgb_dim).map(|_| r.gen_range(-3.5..3.5)).collect(),
                (0..depth_dim).map(|_| r.gen_range(-3.5..3.5)).collect(),
            )
            .unwrap()
        })
        .collect();
    (model, qs)
}

/// Every centroid as (distance, category index, centroid index), fully
/// sorted with ties broken by category then centroid index.
pub fn oracle_sorted_distances(m: &ConceptModel, f: &FeaturePair) -> Vec<(f64, usize, usize)> {
    let w = m.fusion();
    let mut all = Vec::new();
    for (ci, cat) in m.categories().iter().enumerate() {
        for (k, c) in cat.centroids().iter().enumerate() {
            all.push((oracle_distance(c, f, w.rgb(), w.depth()), ci, k));
        }
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all
}

/// Bounds on the threshold window in which clustering recovers layouts
/// exactly, from brute-force distances over the given samples.
///
/// `intra` is the largest pairwise fused distance between two samples of the
/// same (category, layout). `inter` is a lower bound on the distance between
/// any sample and any running centroid of a different layout of the same
/// category: `|mean_i - mean_j| - r_i - r_j`, where `r` is the largest
/// distance from a layout's mean to one of its samples. Any `D` with
/// `intra < D <= inter` yields one centroid per layout.
pub struct LayoutGap {
    pub intra: f64,
    pub inter: f64,
}

pub fn layout_gap(samples: &[(&FeaturePair, String, usize)], w_rgb: f64, w_depth: f64) -> LayoutGap {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, usize), Vec<&FeaturePair>> = BTreeMap::new();
    for (p, cat, layout) in samples {
        groups.entry((cat.clone(), *layout)).or_default().push(p);
    }
    let mut intra = 0.0f64;
    let mut summary: Vec<(&str, Vec<f64>, Vec<f64>, f64)> = Vec::new();
    for ((cat, _), members) in &groups {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                intra = intra.max(oracle_pair_distance(members[i], members[j], w_rgb, w_depth));
            }
        }
        let (mr, md) = oracle_mean(members);
        let centre = CentroidPair::new(mr.clone(), md.clone(), 1).unwrap();
        let radius = members
            .iter()
            .map(|m| oracle_distance(&centre, m, w_rgb, w_depth))
            .fold(0.0, f64::max);
        summary.push((cat.as_str(), mr, md, radius));
    }
    let mut inter = f64::INFINITY;
    for i in 0..summary.len() {
        for j in i + 1..summary.len() {
            let (ca, ra, da, qa) = &summary[i];
            let (cb, rb, db, qb) = &summary[j];
            if ca != cb {
                continue;
            }
            let centre = 0.5 * (w_rgb * l2(ra.iter().copied(), rb.iter().copied())
                + w_depth * l2(da.iter().copied(), db.iter().copied()));
            inter = inter.min(centre - qa - qb);
        }
    }
    LayoutGap { intra, inter }
}
