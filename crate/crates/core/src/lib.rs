//! Centroid-based concept learning for paired RGB/depth feature vectors.
//!
//! Training ([`trainer::fit`]) clusters each category's samples
//! incrementally into weighted centroid pairs. Classification
//! ([`classifier::predict`]) lets the nearest centroids vote, weighted by
//! inverse distance and inverse category size. [`introspection`] measures
//! how well categories separate and merges the ones that are confused with
//! each other in both directions.

pub mod classifier;
pub mod cli;
mod codec;
pub mod datastore;
pub mod error;
pub mod introspection;
pub mod model;
pub mod model_file;
pub mod trainer;
pub mod tuning;

pub use codec::write_atomic;
pub use error::{Error, Modality, Result};
pub use model::{
    centroid_distance, fused_distance, merge_centroids, update_centroid, CategoryModel,
    CentroidPair, ConceptModel, FeaturePair, FeatureVector, FusionWeights,
};
pub use model_file::{load_model, save_model};
