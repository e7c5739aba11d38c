//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cvdsm::loss::{
    build_exhaustive_triplets, synthetic_pairs, train_toy, triplet_loss, LinearEmbedder,
    LossConfig, TrainConfig,
};
use cvdsm::retrieval::{
    benchmark, build_index, circular_error_deg, distance_recall, orientation_metrics, query,
    recall_at_k, recall_at_percent, top_k_for_percent, GeoPoint, QueryOptions, QueryResult,
    RankedEntry,
};
use cvdsm::{
    correlate_spatial, correlate_spectral, crop_columns, flop_model, fov_columns, polar_transform,
    CorrelationPath, FeatureStore, FeatureVolume, OrientationEstimate, PolarConfig, SpectralCache,
};
use rand::Rng;

use common::{analytic_image, random_unit_volume, rng, SceneSet};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn noisy(v: &FeatureVolume, sigma: f32, r: &mut impl Rng) -> FeatureVolume {
    let data = v
        .data()
        .iter()
        .map(|x| x + sigma * r.gen_range(-1.0f32..1.0))
        .collect();
    cvdsm::l2_normalize(&FeatureVolume::new(v.height(), v.width(), v.channels(), data).unwrap())
        .unwrap()
}

fn spectral_matches_spatial() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut max_diff = 0f64;
    for (i, wg) in [64usize, 32, 16, 12].iter().cycle().take(1000).enumerate() {
        let a = random_unit_volume(4, 64, 16, &mut r);
        let g = random_unit_volume(4, *wg, 16, &mut r);
        let spatial = correlate_spatial(&a, &g).map_err(|e| e.to_string())?;
        let cache = SpectralCache::new(&a);
        let spectral = correlate_spectral(&a, &g, if i % 2 == 0 { Some(&cache) } else { None })
            .map_err(|e| e.to_string())?;
        for (x, y) in spatial.scores().iter().zip(spectral.scores()) {
            max_diff = max_diff.max((x - y).abs());
        }
    }
    check(
        max_diff <= 1e-4,
        format!("max |spectral - spatial| = {max_diff:e}"),
    )?;

    let mut store = FeatureStore::new((4, 64, 16));
    for id in 0..300 {
        store
            .push(id, random_unit_volume(4, 64, 16, &mut r))
            .unwrap();
    }
    let idx = build_index(&store, true, Default::default()).unwrap();
    let mut agree = 0;
    for q in 0..100u32 {
        let target = &store.records[(q * 3) as usize].volume;
        let rolled = noisy(&target.roll_columns(r.gen_range(0..64)), 0.05, &mut r);
        let ground = if q % 2 == 0 {
            rolled
        } else {
            cvdsm::l2_normalize(&crop_columns(&rolled, 0, [32, 16, 12][q as usize % 3]).unwrap())
                .unwrap()
        };
        let top = |path| {
            let opts = QueryOptions {
                path,
                k: 1,
                ..Default::default()
            };
            query(&idx, q, &ground, &opts).unwrap().top().unwrap().id
        };
        agree += (top(CorrelationPath::Spectral) == top(CorrelationPath::Spatial)) as usize;
    }
    check(agree == 100, format!("top-1 agreement {agree}/100"))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "max diff {max_diff:.2e} over 1000 pairs, top-1 agreement 100/100, {secs:.1}s"
    ))
}

fn bin_error(a: usize, b: usize, w: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(w - d)
}

fn exact_orientation_recovery() -> Outcome {
    let start = Instant::now();
    let opts = QueryOptions {
        k: 1,
        ..Default::default()
    };

    let clean = SceneSet::build(256, 7, 0.0);
    let results = clean.run(64, &opts);
    let r1 = recall_at_k(&results, &clean.gt(), 1).unwrap();
    let exact = results
        .iter()
        .filter(|q| q.top().unwrap().orientation.shift == clean.gt_shift(q.query_id))
        .count();
    check(r1 == 1.0, format!("noise-free r@1 {r1}"))?;
    check(exact == 256, format!("noise-free exact bins {exact}/256"))?;

    let noisy = SceneSet::build(256, 7, 2.0);
    let results = noisy.run(64, &opts);
    let r1n = recall_at_k(&results, &noisy.gt(), 1).unwrap();
    let correct: Vec<&QueryResult> = results
        .iter()
        .filter(|q| q.top().unwrap().id == q.query_id)
        .collect();
    let within = correct
        .iter()
        .filter(|q| {
            bin_error(
                q.top().unwrap().orientation.shift,
                noisy.gt_shift(q.query_id),
                64,
            ) <= 1
        })
        .count();
    let frac = within as f64 / correct.len().max(1) as f64;
    check(r1n >= 0.99, format!("noise 2 r@1 {r1n}"))?;
    check(frac >= 0.99, format!("noise 2 bin error <= 1 for {frac}"))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 120.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "noise 0: r@1 {r1}, exact bins 256/256; noise 2: r@1 {r1n:.4}, within 1 bin {frac:.4}; {secs:.1}s"
    ))
}

pub const FOV_NOISE: f64 = 40.0;

fn fov_monotonicity() -> Outcome {
    let set = SceneSet::build(256, 11, FOV_NOISE);
    let opts = QueryOptions {
        k: 1,
        ..Default::default()
    };
    let mut recalls = Vec::new();
    for fov in [360.0, 180.0, 90.0, 70.0] {
        let cols = fov_columns(64, fov).unwrap();
        let results = set.run(cols, &opts);
        recalls.push((fov, recall_at_k(&results, &set.gt(), 1).unwrap()));
    }
    let text = recalls
        .iter()
        .map(|(f, r)| format!("{f}°: {r:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        recalls.windows(2).all(|w| w[1].1 <= w[0].1),
        format!("not non-increasing: {text}"),
    )?;
    Ok(format!("noise {FOV_NOISE}: {text}"))
}

fn flop_ratio() -> Outcome {
    let m = flop_model(8884, 4, 64, 16);
    check(m.ratio == 0.1015625, format!("ratio {}", m.ratio))?;
    check(
        flop_model(1, 4, 64, 16).ratio == 13.0 / 128.0,
        "ratio depends on N",
    )?;
    Ok(format!(
        "ratio {} (spatial {}, spectral {})",
        m.ratio, m.spatial, m.spectral
    ))
}

fn latency() -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    let mut store = FeatureStore::new((4, 64, 16));
    for id in 0..8884 {
        store
            .push(id, random_unit_volume(4, 64, 16, &mut r))
            .unwrap();
    }
    let idx = build_index(&store, true, Default::default()).unwrap();
    let queries: Vec<FeatureVolume> = (0..10)
        .map(|i| {
            noisy(
                &store.records[i * 800].volume.roll_columns(i * 5),
                0.05,
                &mut r,
            )
        })
        .collect();
    let report =
        benchmark(&idx, &queries, 10, 3, &QueryOptions::default()).map_err(|e| e.to_string())?;
    let spectral = report.spectral.as_ref().unwrap().mean_query_secs;
    let spatial = report.spatial.as_ref().unwrap().mean_query_secs;
    let speedup = report.speedup().unwrap();
    check(spectral <= 1.0, format!("spectral mean {spectral:.3}s"))?;
    check(speedup >= 2.0, format!("speedup {speedup:.2}"))?;
    check(
        report.top1_agreement == report.compared,
        "paths disagree on top-1",
    )?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 600.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "N=8884: spectral {:.1} ms/query, spatial {:.1} ms/query, speedup {speedup:.1}x, {secs:.1}s total",
        spectral * 1e3,
        spatial * 1e3
    ))
}

fn loss_values() -> Outcome {
    let cfg = LossConfig::default();
    let ln2 = std::f64::consts::LN_2;
    for d in [0.0, 0.37, 1.5, 4.0] {
        let v = triplet_loss(d, d, &cfg);
        check((v - ln2).abs() <= 1e-9, format!("loss({d},{d}) = {v}"))?;
    }
    let v = triplet_loss(0.4, 0.5, &cfg);
    check(
        (v - 0.313262).abs() <= 1e-6,
        format!("delta -0.1 gives {v}"),
    )?;
    let n = build_exhaustive_triplets(32).unwrap().len();
    check(n == 1984, format!("{n} triplets for B=32"))?;
    Ok(format!(
        "log 2 ok, delta -0.1 -> {v:.6}, B=32 -> {n} triplets"
    ))
}

fn gradient_fidelity() -> Outcome {
    let mut checked = 0;
    let mut worst = 0f64;
    for seed in 0..40u64 {
        let g = common::gradient_check(seed, if seed % 2 == 0 { 6 } else { 4 });
        if g.peak_margin < 1e-3 {
            continue;
        }
        worst = worst.max(g.max_rel_err);
        checked += 1;
    }
    check(checked >= 20, format!("only {checked} tie-free instances"))?;
    check(worst <= 1e-4, format!("worst relative error {worst:e}"))?;

    let pairs = synthetic_pairs(8, 2, 16, 4, 1.0, 3).unwrap();
    let embedder = LinearEmbedder::random(8, 4, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 25,
        seed: 3,
        ..TrainConfig::default()
    };
    let trace = train_toy(&embedder, &pairs, &cfg)
        .map_err(|e| e.to_string())?
        .trace;
    let (first, last) = (trace[0], *trace.last().unwrap());
    check(
        trace.windows(2).all(|w| w[1] <= w[0] + 1e-6),
        "loss trace increased",
    )?;
    check(last < first, format!("loss {first} -> {last}"))?;
    Ok(format!(
        "{checked} instances, worst rel err {worst:.2e}; training loss {first:.6} -> {last:.6}"
    ))
}

fn ranked(query_id: u32, ids: &[u32]) -> QueryResult {
    QueryResult {
        query_id,
        ranked: ids
            .iter()
            .enumerate()
            .map(|(i, &id)| RankedEntry {
                id,
                distance: i as f64,
                orientation: OrientationEstimate {
                    shift: 0,
                    azimuth_deg: 0.0,
                    peak_score: 1.0,
                    tie_count: 1,
                },
            })
            .collect(),
    }
}

fn metric_examples() -> Outcome {
    let gt: HashMap<u32, u32> = (0..4).map(|q| (q, q)).collect();
    let perfect: Vec<QueryResult> = (0..4).map(|q| ranked(q, &[q, 99])).collect();
    let second: Vec<QueryResult> = (0..4).map(|q| ranked(q, &[99, q])).collect();
    check(recall_at_k(&perfect, &gt, 1).unwrap() == 1.0, "perfect r@1")?;
    check(recall_at_k(&second, &gt, 1).unwrap() == 0.0, "rank-2 r@1")?;
    check(recall_at_k(&second, &gt, 2).unwrap() == 1.0, "rank-2 r@2")?;

    let mut r = rng(8);
    let mut total = 0.0;
    for _ in 0..50 {
        let results: Vec<QueryResult> = (0..100u32)
            .map(|q| {
                let mut ids: Vec<u32> = (0..100).collect();
                for i in (1..100).rev() {
                    ids.swap(i, r.gen_range(0..=i));
                }
                ranked(q, &ids)
            })
            .collect();
        let gt: HashMap<u32, u32> = (0..100).map(|q| (q, q)).collect();
        total += recall_at_k(&results, &gt, 10).unwrap();
    }
    let mc = total / 50.0;
    check(
        (mc - 0.10).abs() <= 0.05,
        format!("uniform ranking r@10 {mc}"),
    )?;

    check(top_k_for_percent(8884, 1.0) == 89, "K for 8884")?;
    check(top_k_for_percent(50, 1.0) == 1, "K for 50")?;
    check(
        recall_at_percent(&perfect, &gt, 8884, 1.0).unwrap() == 1.0,
        "perfect r@1%",
    )?;

    let p = |lat, lon| GeoPoint { lat, lon };
    let truth: HashMap<u32, GeoPoint> = [(0, p(-35.0, 149.0))].into();
    let at = |pts: &[(u32, GeoPoint)], k| {
        let geo: HashMap<u32, GeoPoint> = pts.iter().copied().collect();
        let ids: Vec<u32> = pts.iter().map(|x| x.0).collect();
        distance_recall(&[ranked(0, &ids)], &geo, &truth, k, 5.0).unwrap()
    };
    check(
        at(&[(1, p(-35.0, 149.0))], 1) == 1.0,
        "identical coordinates",
    )?;
    check(
        at(&[(1, p(-35.0001, 149.0))], 1) == 0.0,
        "0.0001 deg offset",
    )?;
    let three_m = p(-35.0 + 3.0 / 111_195.0, 149.0);
    let far = p(-35.0 + 300.0 / 111_195.0, 149.0);
    check(
        at(&[(1, far), (2, three_m)], 2) == 1.0,
        "3 m / 300 m at K=2",
    )?;

    check(
        orientation_metrics(&[(30.0, 0.0)], 360.0)
            .unwrap()
            .orien_acc
            == 1.0,
        "30 deg at fov 360",
    )?;
    check(circular_error_deg(359.0, 1.0) == 2.0, "wrap 359/1")?;
    let m =
        orientation_metrics(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (100.0, 0.0)], 360.0).unwrap();
    check(
        m.median_error_deg == 2.5,
        format!("median {}", m.median_error_deg),
    )?;
    check(
        orientation_metrics(&[(7.0, 0.0)], 70.0).unwrap().orien_acc == 1.0,
        "7 deg at fov 70",
    )?;
    check(
        orientation_metrics(&[(7.01, 0.0)], 70.0).unwrap().orien_acc == 0.0,
        "7.01 deg at fov 70",
    )?;
    check(orientation_metrics(&[], 70.0).is_none(), "empty subset")?;
    Ok(format!("all examples exact, uniform-ranking r@10 {mc:.3}"))
}

fn taper(rho: f64) -> f64 {
    let t = ((rho - 40.0) / 18.0).clamp(0.0, 1.0);
    0.5 + 0.5 * (std::f64::consts::PI * t).cos()
}

fn geometry() -> Outcome {
    let s = 128usize;
    let c = s as f64 / 2.0;
    let cfg = PolarConfig::new(s, 32, 128).unwrap();

    // Test images are flat beyond radius 58: the outermost circle reaches
    // column S on the east side, which only exists after border clamping.
    let radial = analytic_image(s, |r, col| {
        let rho = (r - c).hypot(col - c);
        128.0 + 90.0 * (rho / 9.0).cos() * taper(rho)
    });
    let out = polar_transform(&radial, &cfg).unwrap();
    let mut row_dev = 0u8;
    for row in 0..out.height() {
        let vals: Vec<u8> = (0..out.width()).map(|j| out.get(row, j, 0)).collect();
        row_dev = row_dev.max(vals.iter().max().unwrap() - vals.iter().min().unwrap());
    }
    check(row_dev <= 2, format!("within-row deviation {row_dev}"))?;

    let field = |r: f64, col: f64| {
        let (u, v) = (c - r, col - c);
        let wave = 45.0 * (u / 11.0 + 0.7).sin()
            + 35.0 * (v / 13.0 - 0.4).cos()
            + 25.0 * ((u + v) / 17.0).sin();
        128.0 + wave * taper(u.hypot(v))
    };
    let base = polar_transform(&analytic_image(s, field), &cfg).unwrap();
    let mut roll_dev = 0u8;
    for k in [1usize, 5, 32, 77] {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / cfg.target_width as f64;
        let rotated = analytic_image(s, |r, col| {
            let (u, v) = (c - r, col - c);
            let (u2, v2) = (
                u * theta.cos() - v * theta.sin(),
                u * theta.sin() + v * theta.cos(),
            );
            field(c - u2, c + v2)
        });
        let lhs = polar_transform(&rotated, &cfg).unwrap();
        let rhs = base.roll_columns(k);
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            roll_dev = roll_dev.max(a.abs_diff(*b));
        }
    }
    check(
        roll_dev <= 2,
        format!("rotate-vs-roll deviation {roll_dev}"),
    )?;
    Ok(format!(
        "row deviation {row_dev}, rotate-vs-roll deviation {roll_dev} gray levels"
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        (
            "1 spectral and spatial correlation agree",
            spectral_matches_spatial,
        ),
        (
            "2 exact orientation recovery on synthetic scenes",
            exact_orientation_recovery,
        ),
        (
            "3 recall does not increase as FoV narrows",
            fov_monotonicity,
        ),
        ("4 flop ratio", flop_ratio),
        ("5 query latency over 8884 entries", latency),
        ("6 loss values", loss_values),
        (
            "7 gradient fidelity and training descent",
            gradient_fidelity,
        ),
        ("8 metric examples", metric_examples),
        ("9 polar transform geometry", geometry),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
