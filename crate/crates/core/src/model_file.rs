//! Binary model files (`CBM1`).
//!
//! Layout, all little-endian:
//!
//! ```text
//! "CBM1" | u16 version | u32 rgb_dim | u32 depth_dim
//! f64 w_rgb | f64 w_depth | f64 distance_threshold
//! u32 category_count
//!   per category: u16 label_len | label (UTF-8) | u64 train_count | u32 centroid_count
//!     per centroid: u64 weight | rgb_dim × f32 | depth_dim × f32
//! u32 CRC32 of all preceding bytes
//! ```
//!
//! Centroids are stored as `f32`; models produced by training are already
//! rounded to that precision so a save/load cycle is lossless.

use std::path::Path;

use crate::codec::{read_file, write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{CategoryModel, CentroidPair, ConceptModel, FusionWeights};

pub const MODEL_MAGIC: [u8; 4] = *b"CBM1";
pub const MODEL_VERSION: u16 = 1;

pub fn encode_model(m: &ConceptModel) -> Result<Vec<u8>> {
    let per_centroid = 8 + 4 * (m.rgb_dim() + m.depth_dim());
    let mut w = Writer::with_capacity(64 + m.centroid_count() * per_centroid);
    w.bytes(&MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    w.u32(to_u32(m.rgb_dim(), "rgb_dim")?);
    w.u32(to_u32(m.depth_dim(), "depth_dim")?);
    w.f64(m.fusion().rgb());
    w.f64(m.fusion().depth());
    w.f64(m.distance_threshold());
    w.u32(to_u32(m.categories().len(), "category count")?);
    for cat in m.categories() {
        let label = cat.label().as_bytes();
        let len = u16::try_from(label.len()).map_err(|_| {
            Error::InvalidValue(format!("label {:?} longer than 65535 bytes", cat.label()))
        })?;
        w.u16(len);
        w.bytes(label);
        w.u64(cat.train_count());
        w.u32(to_u32(cat.centroids().len(), "centroid count")?);
        for c in cat.centroids() {
            w.u64(c.weight());
            for &v in c.rgb().iter().chain(c.depth()) {
                w.f32(v as f32);
            }
        }
    }
    Ok(w.finish())
}

pub fn decode_model(data: &[u8]) -> Result<ConceptModel> {
    let mut r = Reader::open(data, MODEL_MAGIC, MODEL_VERSION)?;
    let rgb_dim = r.u32()? as usize;
    let depth_dim = r.u32()? as usize;
    let w_rgb = r.f64()?;
    let w_depth = r.f64()?;
    let threshold = r.f64()?;
    let n_categories = r.u32()? as usize;
    if rgb_dim == 0 || depth_dim == 0 {
        return Err(Error::InvalidValue("model declares a zero dimension".into()));
    }
    let mut categories = Vec::with_capacity(n_categories.min(r.remaining()));
    for _ in 0..n_categories {
        let len = r.u16()? as usize;
        let label = std::str::from_utf8(r.bytes(len)?)
            .map_err(|e| Error::InvalidValue(format!("label is not UTF-8: {e}")))?
            .to_owned();
        let train_count = r.u64()?;
        let n_centroids = r.u32()? as usize;
        let mut centroids = Vec::with_capacity(n_centroids.min(r.remaining()));
        for _ in 0..n_centroids {
            let weight = r.u64()?;
            let rgb = r.f32_vec(rgb_dim)?.into_iter().map(f64::from).collect();
            let depth = r.f32_vec(depth_dim)?.into_iter().map(f64::from).collect();
            centroids.push(CentroidPair::new(rgb, depth, weight)?);
        }
        let cat = CategoryModel::new(label, centroids)?;
        if cat.train_count() != train_count {
            return Err(Error::InvalidValue(format!(
                "category {:?}: stored train_count {train_count} != sum of weights {}",
                cat.label(),
                cat.train_count()
            )));
        }
        categories.push(cat);
    }
    r.finish()?;
    ConceptModel::new(categories, FusionWeights::new(w_rgb, w_depth)?, threshold)
}

pub fn save_model(m: &ConceptModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(m)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ConceptModel> {
    decode_model(&read_file(path.as_ref())?)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidValue(format!("{what} {v} exceeds u32")))
}
