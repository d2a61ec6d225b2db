//! Synthetic datasets with known structure.
//!
//! Every category owns `layouts` layout centres per modality, drawn
//! coordinate-wise from N(0, spread²). Samples are a centre plus isotropic
//! N(0, sigma²) noise, rounded to `f32`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FeatureFile, LabelManifest, ManifestRow, Split};
use crate::error::{Error, Modality, Result};
use crate::model::FeatureVector;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub categories: usize,
    pub layouts: usize,
    pub rgb_dim: usize,
    pub depth_dim: usize,
    pub spread: f64,
    pub sigma: f64,
    /// Training samples drawn per layout.
    pub samples_per_layout: usize,
    /// Additional held-out samples drawn per layout.
    pub test_per_layout: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            categories: 5,
            layouts: 3,
            rgb_dim: 16,
            depth_dim: 16,
            spread: 1.0,
            sigma: 0.05,
            samples_per_layout: 100,
            test_per_layout: 20,
            seed: 42,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let counts = [
            ("categories", self.categories),
            ("layouts", self.layouts),
            ("rgb_dim", self.rgb_dim),
            ("depth_dim", self.depth_dim),
            ("samples_per_layout", self.samples_per_layout),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::InvalidConfig(format!("bad spread {}", self.spread)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("bad sigma {}", self.sigma)));
        }
        Ok(())
    }

    pub fn category_label(&self, c: usize) -> String {
        let width = (self.categories.max(2) - 1).to_string().len();
        format!("cat{c:0width$}")
    }
}

/// Which layout generated a sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutTruth {
    pub id: u64,
    pub category: String,
    pub layout: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub rgb: FeatureFile,
    pub depth: FeatureFile,
    pub manifest: LabelManifest,
    pub layouts: Vec<LayoutTruth>,
    /// `centers[category][layout]` = (rgb centre, depth centre).
    pub centers: Vec<Vec<(Vec<f32>, Vec<f32>)>>,
}

impl SynthData {
    pub fn layouts_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidValue(format!("csv: {e}"));
        w.write_record(["id", "category", "layout"]).map_err(err)?;
        for t in &self.layouts {
            w.write_record([t.id.to_string(), t.category.clone(), t.layout.to_string()])
                .map_err(err)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidValue(format!("csv: {e}")))
    }
}

fn draw(rng: &mut ChaCha8Rng, normal: &Normal<f64>, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| normal.sample(rng)).collect()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centre_dist = Normal::new(0.0, spec.spread).expect("validated spread");
    let noise = Normal::new(0.0, spec.sigma).expect("validated sigma");

    let centers: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..spec.categories)
        .map(|_| {
            (0..spec.layouts)
                .map(|_| {
                    (
                        draw(&mut rng, &centre_dist, spec.rgb_dim),
                        draw(&mut rng, &centre_dist, spec.depth_dim),
                    )
                })
                .collect()
        })
        .collect();

    let per_layout = spec.samples_per_layout + spec.test_per_layout;
    let total = spec.categories * spec.layouts * per_layout;
    let mut rgb = Vec::with_capacity(total);
    let mut depth = Vec::with_capacity(total);
    let mut rows = Vec::with_capacity(total);
    let mut truth = Vec::with_capacity(total);
    let mut next_id = 0u64;

    let perturb = |rng: &mut ChaCha8Rng, centre: &[f64]| -> Vec<f32> {
        centre
            .iter()
            .map(|&c| (c + noise.sample(rng)) as f32)
            .collect()
    };

    for (c, cat_centres) in centers.iter().enumerate() {
        let label = spec.category_label(c);
        // Layouts are interleaved so a category's stream visits all of them.
        for k in 0..per_layout {
            let split = if k < spec.samples_per_layout {
                Split::Train
            } else {
                Split::Test
            };
            for (l, (rc, dc)) in cat_centres.iter().enumerate() {
                let id = next_id;
                next_id += 1;
                rgb.push((id, FeatureVector::new(perturb(&mut rng, rc))?));
                depth.push((id, FeatureVector::new(perturb(&mut rng, dc))?));
                rows.push(ManifestRow {
                    id,
                    category: label.clone(),
                    split,
                });
                truth.push(LayoutTruth {
                    id,
                    category: label.clone(),
                    layout: l,
                });
            }
        }
    }

    let to_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    Ok(SynthData {
        rgb: FeatureFile::new(Modality::Rgb, spec.rgb_dim, rgb)?,
        depth: FeatureFile::new(Modality::Depth, spec.depth_dim, depth)?,
        manifest: LabelManifest::new(rows)?,
        layouts: truth,
        centers: centers
            .iter()
            .map(|cs| cs.iter().map(|(r, d)| (to_f32(r), to_f32(d))).collect())
            .collect(),
    })
}
