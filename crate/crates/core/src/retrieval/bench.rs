use std::time::Instant;

use crate::dsm::{flop_model, CorrelationPath, FlopModel};
use crate::error::{Error, Result};
use crate::featex::FeatureVolume;

use super::index::{query, Index, QueryOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTiming {
    pub path: CorrelationPath,
    pub queries: usize,
    pub mean_query_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub database_size: usize,
    pub spatial: Option<PathTiming>,
    pub spectral: Option<PathTiming>,
    pub flops: FlopModel,
    /// Queries run on both paths whose top-1 ids agree, out of `compared`.
    pub top1_agreement: usize,
    pub compared: usize,
}

impl BenchReport {
    /// Spatial over spectral mean query time.
    pub fn speedup(&self) -> Option<f64> {
        match (self.spatial, self.spectral) {
            (Some(a), Some(b)) if b.mean_query_secs > 0.0 => {
                Some(a.mean_query_secs / b.mean_query_secs)
            }
            _ => None,
        }
    }
}

/// Times `spectral_queries` queries on the spectral path and the first
/// `spatial_queries` of them on the spatial path (the direct path is
/// quadratic in width, so it usually gets fewer). Results are only compared,
/// never stored.
pub fn benchmark(
    idx: &Index,
    queries: &[FeatureVolume],
    spectral_queries: usize,
    spatial_queries: usize,
    opts: &QueryOptions,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::Validation(
            "benchmark needs at least one query".into(),
        ));
    }
    let run = |path: CorrelationPath, n: usize| -> Result<Option<(PathTiming, Vec<u32>)>> {
        let n = n.min(queries.len());
        if n == 0 {
            return Ok(None);
        }
        let opts = QueryOptions {
            path,
            k: 1,
            ..*opts
        };
        let mut top1 = Vec::with_capacity(n);
        let start = Instant::now();
        for (i, g) in queries[..n].iter().enumerate() {
            let r = query(idx, i as u32, g, &opts)?;
            top1.push(r.top().map(|t| t.id).unwrap_or(u32::MAX));
        }
        let mean = start.elapsed().as_secs_f64() / n as f64;
        Ok(Some((
            PathTiming {
                path,
                queries: n,
                mean_query_secs: mean,
            },
            top1,
        )))
    };
    let spectral = run(CorrelationPath::Spectral, spectral_queries)?;
    let spatial = run(CorrelationPath::Spatial, spatial_queries)?;
    let (compared, top1_agreement) = match (&spectral, &spatial) {
        (Some((_, a)), Some((_, b))) => {
            let n = a.len().min(b.len());
            (n, a.iter().zip(b).filter(|(x, y)| x == y).count())
        }
        _ => (0, 0),
    };
    let (h, w, c) = idx.dims();
    Ok(BenchReport {
        database_size: idx.len(),
        spatial: spatial.map(|(t, _)| t),
        spectral: spectral.map(|(t, _)| t),
        flops: flop_model(idx.len() as u64, h as u64, w as u64, c as u64),
        top1_agreement,
        compared,
    })
}
