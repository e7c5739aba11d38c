//! Exhaustive aerial database search and the evaluation metrics.

mod bench;
mod index;
mod metrics;

pub use bench::{benchmark, BenchReport, PathTiming};
pub use index::{
    build_index, query, query_batch, Index, IndexEntry, QueryOptions, QueryResult, RankedEntry,
};
pub use metrics::{
    circular_error_deg, distance_recall, haversine_m, median, orientation_metrics, recall_at_k,
    recall_at_percent, top_k_for_percent, EvalInputs, EvalReport, GeoInputs, GeoPoint,
    OrientationMetrics, EARTH_RADIUS_M,
};
