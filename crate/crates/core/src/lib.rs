//! Cross-view geo-localization by polar alignment and circular correlation.
//!
//! Aerial tiles are warped into the ground panorama frame ([`geometry`]),
//! both views are reduced to spatially-aware feature volumes ([`featex`]),
//! and every ground query is correlated against every aerial volume over all
//! azimuth shifts ([`dsm`]). The correlation peak gives the orientation and
//! the matching distance; [`retrieval`] ranks a database by that distance and
//! scores the rankings. [`loss`] holds the soft-margin triplet objective and
//! a toy learner, [`ingest`] the manifests, query construction and synthetic
//! scenes.

pub mod dsm;
pub mod error;
pub mod exec;
pub mod featex;
pub mod geometry;
pub mod image;
pub mod ingest;
pub mod loss;
pub mod retrieval;
pub mod store;

pub use dsm::{
    correlate_spatial, correlate_spectral, estimate_orientation, flop_model, match_limited_fov,
    match_panorama, CorrelationPath, CorrelationProfile, FlopModel, MatchResult, Matcher,
    OrientationEstimate, SpectralCache, TiePolicy,
};
pub use error::{Error, Result};
pub use exec::Exec;
pub use featex::{
    crop_columns, extract_features, l2_normalize, ExtractorConfig, ExtractorMode, FeatureVolume,
};
pub use geometry::{bilinear_sample, polar_grid, polar_transform, PolarConfig, SamplingGrid};
pub use image::Image;
pub use ingest::{
    fov_columns, make_query, parse_manifest, query_feature_width, synth_scene, synth_scene_at,
    AzimuthSpec, Manifest, ManifestRow, Query, QuerySpec, Scene,
};
pub use store::{read_store, write_store, FeatureStore, StoreRecord};
