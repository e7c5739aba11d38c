use std::collections::HashMap;
use std::path::{Path, PathBuf};

use cvdsm::loss::{train_toy, LinearEmbedder, LossConfig, TrainConfig};
use cvdsm::retrieval::{
    benchmark, build_index, query_batch, EvalInputs, EvalReport, GeoInputs, GeoPoint, Index,
    QueryOptions, QueryResult,
};
use cvdsm::{
    extract_features, make_query, match_limited_fov, match_panorama, parse_manifest,
    polar_transform, query_feature_width, read_store, synth_scene, write_store, AzimuthSpec,
    CorrelationPath, Error, Exec, ExtractorConfig, ExtractorMode, FeatureStore, FeatureVolume,
    Image, ManifestRow, PolarConfig, QuerySpec, Result, StoreRecord, TiePolicy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::*;
use crate::report::Report;

pub struct Ctx {
    pub seed: u64,
    pub exec: Exec,
    pub threads: usize,
    pub timestamp: bool,
}

impl Ctx {
    fn report(&self, command: &str) -> Report {
        let mut r = Report::new();
        r.set("command", command)
            .config("seed", self.seed)
            .config("threads", self.threads);
        r
    }
}

fn corr_path(p: PathArg) -> CorrelationPath {
    match p {
        PathArg::Spatial => CorrelationPath::Spatial,
        PathArg::Fft => CorrelationPath::Spectral,
    }
}

fn path_name(p: PathArg) -> &'static str {
    match p {
        PathArg::Spatial => "spatial",
        PathArg::Fft => "fft",
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn polar(a: &PolarArgs) -> Result<()> {
    let img = Image::load(&a.input)?;
    if img.height() != a.sa || img.width() != a.sa {
        return Err(Error::Dimension(format!(
            "{} is {}x{}, expected {}x{}",
            a.input.display(),
            img.height(),
            img.width(),
            a.sa,
            a.sa
        )));
    }
    let cfg = PolarConfig::new(a.sa, a.hg, a.wg)?;
    polar_transform(&img, &cfg)?.save(&a.output)
}

fn aerial_volume(
    row: &ManifestRow,
    a: &ExtractArgs,
    ex: &ExtractorConfig,
) -> Result<FeatureVolume> {
    let img = Image::load(&row.aerial)?;
    if img.height() != img.width() {
        return Err(Error::Dimension(format!(
            "aerial image {} is {}x{}, expected square",
            row.aerial.display(),
            img.height(),
            img.width()
        )));
    }
    let cfg = PolarConfig::new(img.width(), a.polar_h, a.polar_w)?;
    extract_features(&polar_transform(&img, &cfg)?, ex)
}

fn ground_volume(
    row: &ManifestRow,
    spec: &QuerySpec,
    ex: &ExtractorConfig,
) -> Result<(FeatureVolume, f64)> {
    let img = Image::load(&row.ground)?;
    let q = make_query(&img, spec, row.pair_id)?;
    let width = query_feature_width(q.image.width(), img.width(), ex.width);
    let volume = extract_features(&q.image, &ex.with_width(width))?;
    let azimuth = (row.azimuth.unwrap_or(0.0) + q.applied_azimuth).rem_euclid(360.0);
    Ok((volume, azimuth))
}

pub fn extract(ctx: &Ctx, a: &ExtractArgs) -> Result<()> {
    let base = a
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let manifest = parse_manifest(&a.manifest)?.resolve(&base);
    let ex = ExtractorConfig {
        height: a.hg,
        width: a.wg,
        channels: a.c,
        mode: match a.mode {
            ModeArg::BlockMean => ExtractorMode::BlockMean,
            ModeArg::GradientHistogram => ExtractorMode::GradientHistogram,
        },
    };
    let spec = QuerySpec {
        fov_deg: a.fov,
        azimuth: if a.random_azimuth {
            AzimuthSpec::Random
        } else {
            AzimuthSpec::Fixed(a.azimuth.unwrap_or(0.0))
        },
        seed: ctx.seed,
    };
    let extracted: Vec<(u32, FeatureVolume, Option<f64>)> = ctx
        .exec
        .map(&manifest.rows, |row| -> Result<_> {
            Ok(match a.view {
                ViewArg::Aerial => (row.pair_id, aerial_volume(row, a, &ex)?, None),
                ViewArg::Ground => {
                    let (v, az) = ground_volume(row, &spec, &ex)?;
                    (row.pair_id, v, Some(az))
                }
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let store = if extracted.is_empty() {
        FeatureStore::new((a.hg, a.wg, a.c))
    } else {
        FeatureStore::from_records(
            extracted
                .iter()
                .map(|(id, v, _)| StoreRecord {
                    id: *id,
                    volume: v.clone(),
                })
                .collect(),
        )?
    };
    write_store(&store, &a.out)?;
    log::info!(
        "wrote {} volumes of {:?} to {}",
        store.len(),
        store.dims,
        a.out.display()
    );

    if let Some(path) = &a.gt_out {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["query_id", "aerial_id", "azimuth"])
            .map_err(csv_err)?;
        for (id, _, az) in &extracted {
            let az = az.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([id.to_string(), id.to_string(), az])
                .map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Per-scene seed: distinct, reproducible streams for every id.
fn scene_seed(seed: u64, id: u32) -> u64 {
    seed ^ (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let cfg = PolarConfig::new(a.sa, a.hg, a.wg)?;
    for dir in ["aerial", "ground"] {
        std::fs::create_dir_all(a.out.join(dir))?;
    }
    let ids: Vec<u32> = (0..a.n).collect();
    let azimuths: Vec<f64> = ctx
        .exec
        .map(&ids, |&id| -> Result<f64> {
            let scene = synth_scene(scene_seed(ctx.seed, id), &cfg, a.noise)?;
            scene
                .aerial
                .save(a.out.join(format!("aerial/{id:05}.png")))?;
            scene
                .ground
                .save(a.out.join(format!("ground/{id:05}.png")))?;
            Ok(scene.gt_azimuth)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let mut manifest = String::from("pair_id,ground,aerial,azimuth\n");
    for (id, az) in ids.iter().zip(&azimuths) {
        manifest.push_str(&format!(
            "{id},ground/{id:05}.png,aerial/{id:05}.png,{az}\n"
        ));
    }
    std::fs::write(a.out.join("manifest.csv"), manifest)?;
    log::info!("wrote {} scenes to {}", a.n, a.out.display());
    Ok(())
}

fn load_index(path: &Path, exec: Exec) -> Result<Index> {
    build_index(&read_store(path)?, true, exec)
}

pub fn index(ctx: &Ctx, a: &IndexArgs) -> Result<()> {
    let store = read_store(&a.aerial)?;
    let idx = build_index(&store, true, ctx.exec)?;
    let normalized = FeatureStore::from_records(
        idx.entries()
            .iter()
            .map(|e| StoreRecord {
                id: e.id,
                volume: e.volume.clone(),
            })
            .collect(),
    )?;
    write_store(&normalized, &a.out)?;
    let (h, w, c) = idx.dims();
    let (data, cache) = idx.memory_bytes();
    let mut r = ctx.report("index");
    r.config("aerial", display(&a.aerial))
        .config("out", display(&a.out))
        .set("entries", idx.len())
        .set("height", h)
        .set("width", w)
        .set("channels", c)
        .set("data_bytes", data)
        .set("cache_bytes", cache);
    r.emit(a.report.as_deref(), ctx.timestamp)
}

fn store_volume(spec: &str) -> Result<(u32, FeatureVolume)> {
    let (path, id) = spec
        .rsplit_once(':')
        .ok_or_else(|| Error::Config(format!("expected <store>:<id>, got {spec:?}")))?;
    let id: u32 = id
        .parse()
        .map_err(|_| Error::Config(format!("record id {id:?} is not an unsigned integer")))?;
    let store = read_store(PathBuf::from(path))?;
    let volume = store
        .get(id)
        .ok_or_else(|| Error::Validation(format!("no record {id} in {path}")))?
        .clone();
    Ok((id, volume))
}

fn tie_policy(s: &str) -> Result<TiePolicy> {
    if s == "first" {
        return Ok(TiePolicy::LowestIndex);
    }
    s.strip_prefix("random:")
        .and_then(|x| x.parse().ok())
        .map(TiePolicy::SeededRandom)
        .ok_or_else(|| {
            Error::Config(format!(
                "tie policy must be first or random:<seed>, got {s:?}"
            ))
        })
}

fn normalized(v: FeatureVolume) -> Result<FeatureVolume> {
    if v.is_normalized() {
        Ok(v)
    } else {
        cvdsm::l2_normalize(&v)
    }
}

pub fn match_cmd(a: &MatchArgs) -> Result<()> {
    let tie = tie_policy(&a.tie)?;
    let (_, aerial) = store_volume(&a.aerial)?;
    let (_, ground) = store_volume(&a.ground)?;
    let (aerial, ground) = (normalized(aerial)?, normalized(ground)?);
    let path = corr_path(a.path);
    let m = if ground.width() == aerial.width() {
        match_panorama(&aerial, &ground, path, tie)?
    } else {
        match_limited_fov(&aerial, &ground, path, tie)?
    };
    println!(
        "distance={} shift={} azimuth_deg={} tie_count={}",
        m.distance, m.orientation.shift, m.orientation.azimuth_deg, m.orientation.tie_count
    );
    Ok(())
}

fn run_queries(
    ctx: &Ctx,
    idx: &Index,
    queries: &Path,
    path: PathArg,
    k: usize,
) -> Result<Vec<QueryResult>> {
    let store = read_store(queries)?;
    let qs: Vec<(u32, FeatureVolume)> = store
        .records
        .into_iter()
        .map(|r| (r.id, r.volume))
        .collect();
    if qs.is_empty() {
        return Err(Error::Validation(format!(
            "no queries in {}",
            queries.display()
        )));
    }
    let opts = QueryOptions {
        path: corr_path(path),
        k,
        tie: TiePolicy::SeededRandom(ctx.seed),
        exec: ctx.exec,
    };
    query_batch(idx, &qs, &opts)
}

pub fn query(ctx: &Ctx, a: &QueryArgs) -> Result<()> {
    let idx = load_index(&a.index, ctx.exec)?;
    let results = run_queries(ctx, &idx, &a.queries, a.path, a.k)?;
    let sink: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "query_id",
        "rank",
        "aerial_id",
        "distance",
        "shift",
        "azimuth_deg",
    ])
    .map_err(csv_err)?;
    for r in &results {
        for (rank, e) in r.ranked.iter().enumerate() {
            w.write_record([
                r.query_id.to_string(),
                (rank + 1).to_string(),
                e.id.to_string(),
                e.distance.to_string(),
                e.orientation.shift.to_string(),
                e.orientation.azimuth_deg.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

type CsvRows = (Vec<String>, Vec<(u64, csv::StringRecord)>);

fn read_csv(path: &Path) -> Result<CsvRows> {
    let text = std::fs::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        rows.push((rec.position().map(|p| p.line()).unwrap_or(0), rec));
    }
    Ok((headers, rows))
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    line: u64,
    name: &str,
) -> Result<T> {
    let s = rec.get(i).unwrap_or("");
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{name} {s:?} is not valid"),
    })
}

type GroundTruth = (HashMap<u32, u32>, Option<HashMap<u32, f64>>);

fn read_gt(path: &Path) -> Result<GroundTruth> {
    let (headers, rows) = read_csv(path)?;
    let with_az = match headers
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["query_id", "aerial_id"] => false,
        ["query_id", "aerial_id", "azimuth"] => true,
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header must be query_id,aerial_id[,azimuth], got {}",
                    other.join(",")
                ),
            })
        }
    };
    let mut gt = HashMap::new();
    let mut az = HashMap::new();
    for (line, rec) in &rows {
        let q: u32 = field(rec, 0, *line, "query_id")?;
        if gt.insert(q, field(rec, 1, *line, "aerial_id")?).is_some() {
            return Err(Error::Validation(format!(
                "query {q} appears twice (line {line})"
            )));
        }
        if with_az && !rec.get(2).unwrap_or("").is_empty() {
            az.insert(q, field(rec, 2, *line, "azimuth")?);
        }
    }
    let az = (with_az && az.len() == gt.len()).then_some(az);
    Ok((gt, az))
}

fn read_geo(path: &Path) -> Result<HashMap<u32, GeoPoint>> {
    let (headers, rows) = read_csv(path)?;
    if headers != ["id", "lat", "lon"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be id,lat,lon, got {}", headers.join(",")),
        });
    }
    rows.iter()
        .map(|(line, rec)| {
            Ok((
                field(rec, 0, *line, "id")?,
                GeoPoint {
                    lat: field(rec, 1, *line, "lat")?,
                    lon: field(rec, 2, *line, "lon")?,
                },
            ))
        })
        .collect()
}

pub fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    if a.k.is_empty() || a.k.contains(&0) {
        return Err(Error::Config("--k needs positive values".into()));
    }
    let (gt, gt_az) = read_gt(&a.gt)?;
    let geo = a.geo.as_deref().map(read_geo).transpose()?;
    let k_max = a.k.iter().copied().max().unwrap_or(1);
    let idx = load_index(&a.index, ctx.exec)?;
    let k_needed = k_max.max(cvdsm::retrieval::top_k_for_percent(idx.len(), a.pct));
    let results = run_queries(ctx, &idx, &a.queries, a.path, k_needed)?;

    let positions: Option<HashMap<u32, GeoPoint>> = geo.as_ref().map(|g| {
        gt.iter()
            .filter_map(|(q, id)| g.get(id).map(|p| (*q, *p)))
            .collect()
    });
    let inputs = EvalInputs {
        gt: &gt,
        gt_azimuth: gt_az.as_ref(),
        fov_deg: a.fov,
        ks: &a.k,
        pct: a.pct,
        n_database: idx.len(),
        geo: geo
            .as_ref()
            .zip(positions.as_ref())
            .map(|(database, queries)| GeoInputs {
                database,
                queries,
                radius_m: a.radius,
                k: 1,
            }),
    };
    let eval = EvalReport::compute(&results, &inputs)?;

    let mut r = ctx.report("evaluate");
    r.config("index", display(&a.index))
        .config("queries", display(&a.queries))
        .config("gt", display(&a.gt))
        .config("fov", a.fov)
        .config(
            "k",
            a.k.iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
        .config("pct", a.pct)
        .config("path", path_name(a.path))
        .config("radius", a.radius)
        .config("geo", a.geo.as_deref().map(display).unwrap_or_default())
        .set("n_database", idx.len())
        .extend(eval.to_flat());
    r.emit(a.report.as_deref(), ctx.timestamp)
}

fn synthetic_index(n: u32, seed: u64, exec: Exec) -> Result<Index> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = FeatureStore::new((4, 64, 16));
    for id in 0..n {
        let data = (0..4 * 64 * 16)
            .map(|_| rng.gen_range(-1.0f32..1.0))
            .collect();
        store.push(id, FeatureVolume::new(4, 64, 16, data)?)?;
    }
    build_index(&store, true, exec)
}

/// Queries built from index entries: rolled by a seeded shift with small noise.
fn bench_queries(idx: &Index, count: usize, seed: u64) -> Result<Vec<FeatureVolume>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    (0..count)
        .map(|_| {
            let entry = &idx.entries()[rng.gen_range(0..idx.len())];
            let rolled = entry
                .volume
                .roll_columns(rng.gen_range(0..entry.volume.width()));
            let data = rolled
                .data()
                .iter()
                .map(|x| x + 0.01 * rng.gen_range(-1.0f32..1.0))
                .collect();
            let (h, w, c) = rolled.dims();
            cvdsm::l2_normalize(&FeatureVolume::new(h, w, c, data)?)
        })
        .collect()
}

pub fn bench(ctx: &Ctx, a: &BenchArgs) -> Result<()> {
    let idx = match (a.synthetic, &a.index) {
        (Some(n), _) => synthetic_index(n, ctx.seed, ctx.exec)?,
        (None, Some(p)) => load_index(p, ctx.exec)?,
        (None, None) => return Err(Error::Config("bench needs --index or --synthetic".into())),
    };
    let queries = bench_queries(&idx, a.queries.max(a.spatial_queries).max(1), ctx.seed)?;
    let opts = QueryOptions {
        exec: ctx.exec,
        ..Default::default()
    };
    let b = benchmark(&idx, &queries, a.queries, a.spatial_queries, &opts)?;

    let mut r = ctx.report("bench");
    r.config("index", a.index.as_deref().map(display).unwrap_or_default())
        .config("synthetic", a.synthetic.unwrap_or(0))
        .config("queries", a.queries)
        .config("spatial_queries", a.spatial_queries)
        .set("database_size", b.database_size)
        .set("flop_spatial", b.flops.spatial)
        .set("flop_spectral", b.flops.spectral)
        .set("flop_ratio", b.flops.ratio)
        .set("top1_agreement", b.top1_agreement)
        .set("top1_compared", b.compared);
    if let Some(t) = &b.spectral {
        r.set("spectral_mean_query_secs", t.mean_query_secs);
    }
    if let Some(t) = &b.spatial {
        r.set("spatial_mean_query_secs", t.mean_query_secs);
    }
    if let Some(s) = b.speedup() {
        r.set("speedup", s);
    }
    r.emit(a.report.as_deref(), ctx.timestamp)
}

pub fn train(ctx: &Ctx, a: &TrainToyArgs) -> Result<()> {
    let store = read_store(&a.pairs)?;
    if store.len() % 2 != 0 {
        return Err(Error::Validation(format!(
            "{} holds {} records; pairs need ground, aerial alternating",
            a.pairs.display(),
            store.len()
        )));
    }
    let pairs: Vec<(FeatureVolume, FeatureVolume)> = store
        .records
        .chunks(2)
        .map(|p| (p[0].volume.clone(), p[1].volume.clone()))
        .collect();
    let (h, _, c) = store.dims;
    let embedder = LinearEmbedder::random(h * c, a.d_out, ctx.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        step_size: a.step,
        seed: ctx.seed,
        loss: LossConfig::new(a.alpha)?,
        ..TrainConfig::default()
    };
    let out = train_toy(&embedder, &pairs, &cfg)?;
    out.embedder.save(&a.out)?;

    let mut r = ctx.report("train-toy");
    r.config("pairs", display(&a.pairs))
        .config("epochs", a.epochs)
        .config("step", a.step)
        .config("d_out", a.d_out)
        .config("alpha", a.alpha)
        .config("out", display(&a.out))
        .set("n_pairs", pairs.len())
        .set("initial_loss", out.trace[0])
        .set("final_loss", *out.trace.last().unwrap_or(&out.trace[0]));
    for (i, v) in out.trace.iter().enumerate() {
        r.set(format!("trace.{i:04}"), *v);
    }
    r.emit(a.report.as_deref(), ctx.timestamp)
}
