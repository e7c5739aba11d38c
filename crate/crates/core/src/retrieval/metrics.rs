use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

use super::index::QueryResult;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Fraction of the FoV within which an orientation estimate counts as correct.
pub const ORIENTATION_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Great-circle distance in meters on a spherical earth.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

fn nonempty(results: &[QueryResult]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Validation("no query results to evaluate".into()));
    }
    Ok(())
}

fn gt_of(gt: &HashMap<u32, u32>, query_id: u32) -> Result<u32> {
    gt.get(&query_id)
        .copied()
        .ok_or_else(|| Error::Config(format!("no ground-truth id for query {query_id}")))
}

/// Fraction of queries whose ground-truth id is among their first `k` results.
pub fn recall_at_k(results: &[QueryResult], gt: &HashMap<u32, u32>, k: usize) -> Result<f64> {
    nonempty(results)?;
    let mut hits = 0usize;
    for r in results {
        let want = gt_of(gt, r.query_id)?;
        if r.ranked.iter().take(k).any(|e| e.id == want) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// `ceil(n_database * pct / 100)`, at least 1.
pub fn top_k_for_percent(n_database: usize, pct: f64) -> usize {
    ((n_database as f64 * pct / 100.0).ceil() as usize).max(1)
}

pub fn recall_at_percent(
    results: &[QueryResult],
    gt: &HashMap<u32, u32>,
    n_database: usize,
    pct: f64,
) -> Result<f64> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::Config(format!(
            "percentage must be in (0, 100], got {pct}"
        )));
    }
    recall_at_k(results, gt, top_k_for_percent(n_database, pct))
}

/// A query succeeds when any of its top `k` entries lies within `radius_m`
/// of the query's true position.
pub fn distance_recall(
    results: &[QueryResult],
    geo: &HashMap<u32, GeoPoint>,
    gt_pos: &HashMap<u32, GeoPoint>,
    k: usize,
    radius_m: f64,
) -> Result<f64> {
    nonempty(results)?;
    let mut hits = 0usize;
    for r in results {
        let truth = gt_pos
            .get(&r.query_id)
            .ok_or_else(|| Error::Config(format!("no position for query {}", r.query_id)))?;
        let mut success = false;
        for e in r.ranked.iter().take(k) {
            let p = geo.get(&e.id).ok_or_else(|| {
                Error::Config(format!("no coordinates for database entry {}", e.id))
            })?;
            if haversine_m(*p, *truth) <= radius_m {
                success = true;
                break;
            }
        }
        hits += success as usize;
    }
    Ok(hits as f64 / results.len() as f64)
}

/// Absolute angular difference on the circle, in `[0, 180]`.
pub fn circular_error_deg(estimated: f64, truth: f64) -> f64 {
    let d = (estimated - truth).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Median; the midpoint of the two central values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationMetrics {
    pub orien_acc: f64,
    pub median_error_deg: f64,
    pub count: usize,
}

/// Orientation accuracy and median error over `(estimated, truth)` azimuth
/// pairs, which should cover only correctly localized queries. `None` when
/// there are no such queries.
pub fn orientation_metrics(estimates: &[(f64, f64)], fov_deg: f64) -> Option<OrientationMetrics> {
    if estimates.is_empty() {
        return None;
    }
    let threshold = ORIENTATION_TOLERANCE * fov_deg;
    let errors: Vec<f64> = estimates
        .iter()
        .map(|&(e, t)| circular_error_deg(e, t))
        .collect();
    let ok = errors.iter().filter(|&&e| e <= threshold).count();
    Some(OrientationMetrics {
        orien_acc: ok as f64 / errors.len() as f64,
        median_error_deg: median(&errors)?,
        count: errors.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub recall_at_1pct: f64,
    pub pct: f64,
    pub dist_recall_5m: Option<f64>,
    pub orien_acc: Option<f64>,
    pub median_error_deg: Option<f64>,
    pub n_queries: usize,
    pub n_correct_top1: usize,
}

pub struct EvalInputs<'a> {
    pub gt: &'a HashMap<u32, u32>,
    pub gt_azimuth: Option<&'a HashMap<u32, f64>>,
    pub fov_deg: f64,
    pub ks: &'a [usize],
    pub pct: f64,
    pub n_database: usize,
    pub geo: Option<GeoInputs<'a>>,
}

/// Inputs for distance recall.
#[derive(Debug, Clone, Copy)]
pub struct GeoInputs<'a> {
    pub database: &'a HashMap<u32, GeoPoint>,
    pub queries: &'a HashMap<u32, GeoPoint>,
    pub radius_m: f64,
    pub k: usize,
}

impl EvalReport {
    pub fn compute(results: &[QueryResult], inputs: &EvalInputs<'_>) -> Result<Self> {
        let mut recall_at = BTreeMap::new();
        for &k in inputs.ks {
            recall_at.insert(k, recall_at_k(results, inputs.gt, k)?);
        }
        let recall_at_1pct = recall_at_percent(results, inputs.gt, inputs.n_database, inputs.pct)?;
        let dist_recall_5m = inputs
            .geo
            .map(|g| distance_recall(results, g.database, g.queries, g.k, g.radius_m))
            .transpose()?;

        let mut n_correct_top1 = 0usize;
        let mut estimates = Vec::new();
        for r in results {
            let want = gt_of(inputs.gt, r.query_id)?;
            let Some(top) = r.top().filter(|t| t.id == want) else {
                continue;
            };
            n_correct_top1 += 1;
            if let Some(az) = inputs.gt_azimuth {
                let truth = az.get(&r.query_id).ok_or_else(|| {
                    Error::Config(format!("no ground-truth azimuth for query {}", r.query_id))
                })?;
                estimates.push((top.orientation.azimuth_deg, *truth));
            }
        }
        let orientation = orientation_metrics(&estimates, inputs.fov_deg);
        Ok(Self {
            recall_at,
            recall_at_1pct,
            pct: inputs.pct,
            dist_recall_5m,
            orien_acc: orientation.map(|o| o.orien_acc),
            median_error_deg: orientation.map(|o| o.median_error_deg),
            n_queries: results.len(),
            n_correct_top1,
        })
    }

    /// Flat `key -> number` view; undefined metrics are omitted.
    pub fn to_flat(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (k, v) in &self.recall_at {
            out.insert(format!("r@{k}"), *v);
        }
        out.insert(format!("r@{}%", self.pct), self.recall_at_1pct);
        if let Some(v) = self.dist_recall_5m {
            out.insert("dist_recall".into(), v);
        }
        if let Some(v) = self.orien_acc {
            out.insert("orien_acc".into(), v);
        }
        if let Some(v) = self.median_error_deg {
            out.insert("median_error_deg".into(), v);
        }
        out.insert("n_queries".into(), self.n_queries as f64);
        out.insert("n_correct_top1".into(), self.n_correct_top1 as f64);
        out
    }
}
