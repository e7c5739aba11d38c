use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::dsm::{CorrelationPath, Matcher, OrientationEstimate, SpectralCache, TiePolicy};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::featex::{l2_normalize, FeatureVolume};
use crate::store::FeatureStore;

use super::metrics::GeoPoint;

#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub id: u32,
    pub volume: FeatureVolume,
    pub geo: Option<GeoPoint>,
    cache: Option<SpectralCache>,
}

impl IndexEntry {
    pub fn cache(&self) -> Option<&SpectralCache> {
        self.cache.as_ref()
    }
}

/// Immutable aerial database. All volumes are unit-normalized and share
/// `dims`; spectral caches, when present, were built from the stored volume.
#[derive(Debug, Clone)]
pub struct Index {
    dims: (usize, usize, usize),
    entries: Vec<IndexEntry>,
}

impl Index {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn has_cache(&self) -> bool {
        self.entries.iter().all(|e| e.cache.is_some())
    }

    /// Bytes held by feature data and by spectral caches.
    pub fn memory_bytes(&self) -> (usize, usize) {
        let data = self.entries.iter().map(|e| e.volume.len() * 4).sum();
        let cache = self
            .entries
            .iter()
            .filter_map(|e| e.cache.as_ref())
            .map(|c| c.size_bytes())
            .sum();
        (data, cache)
    }

    /// Attaches coordinates by id; ids absent from the map keep `None`.
    pub fn with_geo(mut self, geo: &HashMap<u32, GeoPoint>) -> Self {
        for e in &mut self.entries {
            if let Some(p) = geo.get(&e.id) {
                e.geo = Some(*p);
            }
        }
        self
    }

    pub fn geo_map(&self) -> HashMap<u32, GeoPoint> {
        self.entries
            .iter()
            .filter_map(|e| e.geo.map(|g| (e.id, g)))
            .collect()
    }
}

pub fn build_index(store: &FeatureStore, use_fft_cache: bool, exec: Exec) -> Result<Index> {
    if store.is_empty() {
        return Err(Error::Validation(
            "cannot build an index from an empty store".into(),
        ));
    }
    let mut seen = HashSet::with_capacity(store.len());
    for r in &store.records {
        if r.volume.dims() != store.dims {
            return Err(Error::Dimension(format!(
                "entry {} has dims {:?}, index expects {:?}",
                r.id,
                r.volume.dims(),
                store.dims
            )));
        }
        if !seen.insert(r.id) {
            return Err(Error::Validation(format!("duplicate index id {}", r.id)));
        }
    }
    let entries = exec
        .map(&store.records, |r| -> Result<IndexEntry> {
            let volume = l2_normalize(&r.volume).map_err(|_| {
                Error::Degenerate(format!("index entry {} is an all-zero volume", r.id))
            })?;
            let cache = use_fft_cache.then(|| SpectralCache::new(&volume));
            Ok(IndexEntry {
                id: r.id,
                volume,
                geo: None,
                cache,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Index {
        dims: store.dims,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEntry {
    pub id: u32,
    pub distance: f64,
    pub orientation: OrientationEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query_id: u32,
    /// Ascending by distance, ties by ascending id.
    pub ranked: Vec<RankedEntry>,
}

impl QueryResult {
    pub fn top(&self) -> Option<&RankedEntry> {
        self.ranked.first()
    }

    pub fn rank_of(&self, id: u32) -> Option<usize> {
        self.ranked.iter().position(|r| r.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOptions {
    pub path: CorrelationPath,
    pub k: usize,
    pub tie: TiePolicy,
    pub exec: Exec,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self {
            path: CorrelationPath::Spectral,
            k: 10,
            tie: TiePolicy::LowestIndex,
            exec: Exec::default(),
        }
    }
}

fn by_distance_then_id(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id))
}

/// Matches one ground volume against every entry; panorama matching when the
/// widths agree, limited-FoV matching when the ground is narrower.
pub fn query(
    idx: &Index,
    query_id: u32,
    ground: &FeatureVolume,
    opts: &QueryOptions,
) -> Result<QueryResult> {
    let (h, wa, c) = idx.dims;
    if ground.height() != h || ground.channels() != c || ground.width() > wa {
        return Err(Error::Dimension(format!(
            "query {query_id} has dims {:?}, index holds {:?}",
            ground.dims(),
            idx.dims
        )));
    }
    if opts.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let normalized;
    let ground = if ground.is_normalized() {
        ground
    } else {
        normalized = l2_normalize(ground)?;
        &normalized
    };
    let matcher = Matcher::new(ground, wa, opts.path, opts.tie)?;
    let mut ranked = opts
        .exec
        .map(&idx.entries, |e| -> Result<RankedEntry> {
            let m = matcher.match_aerial(&e.volume, e.cache.as_ref())?;
            Ok(RankedEntry {
                id: e.id,
                distance: m.distance,
                orientation: m.orientation,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let k = opts.k.min(ranked.len());
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, by_distance_then_id);
        ranked.truncate(k);
    }
    ranked.sort_by(by_distance_then_id);
    Ok(QueryResult { query_id, ranked })
}

/// Runs many queries; output order matches input order.
pub fn query_batch(
    idx: &Index,
    queries: &[(u32, FeatureVolume)],
    opts: &QueryOptions,
) -> Result<Vec<QueryResult>> {
    let inner = QueryOptions {
        exec: Exec::Sequential,
        ..*opts
    };
    if opts.exec.is_parallel() && queries.len() > 1 {
        opts.exec
            .map(queries, |(id, g)| query(idx, *id, g, &inner))
            .into_iter()
            .collect()
    } else {
        queries
            .iter()
            .map(|(id, g)| query(idx, *id, g, opts))
            .collect()
    }
}
