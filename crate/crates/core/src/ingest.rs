//! Dataset manifests, limited-FoV / unknown-orientation query construction,
//! and a procedural scene generator with exact orientation ground truth.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{polar_transform, PolarConfig};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub pair_id: u32,
    pub ground: PathBuf,
    pub aerial: PathBuf,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub azimuth: Option<f64>,
    /// 1-based line in the source file.
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Resolves relative image paths against `base`.
    pub fn resolve(&self, base: &Path) -> Manifest {
        let fix = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        Manifest {
            rows: self
                .rows
                .iter()
                .map(|r| ManifestRow {
                    ground: fix(&r.ground),
                    aerial: fix(&r.aerial),
                    ..r.clone()
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let has_geo = self.rows.iter().any(|r| r.lat.is_some());
        let has_az = self.rows.iter().any(|r| r.azimuth.is_some());
        let mut out = String::from("pair_id,ground,aerial");
        if has_geo {
            out.push_str(",lat,lon");
        }
        if has_az {
            out.push_str(",azimuth");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{}",
                r.pair_id,
                r.ground.display(),
                r.aerial.display()
            ));
            if has_geo {
                out.push_str(&format!(",{},{}", opt(r.lat), opt(r.lon)));
            }
            if has_az {
                out.push_str(&format!(",{}", opt(r.azimuth)));
            }
            out.push('\n');
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Parses `pair_id,ground,aerial[,lat,lon][,azimuth]`.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest_str(&text)
}

pub fn parse_manifest_str(text: &str) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let (has_geo, has_az) = match names.as_slice() {
        ["pair_id", "ground", "aerial"] => (false, false),
        ["pair_id", "ground", "aerial", "lat", "lon"] => (true, false),
        ["pair_id", "ground", "aerial", "azimuth"] => (false, true),
        ["pair_id", "ground", "aerial", "lat", "lon", "azimuth"] => (true, true),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header must be pair_id,ground,aerial[,lat,lon][,azimuth], got {}",
                    names.join(",")
                ),
            })
        }
    };

    let mut rows: Vec<ManifestRow> = Vec::new();
    let mut seen: HashMap<u32, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| Error::Parse { line, message };
        let field = |i: usize| record.get(i).unwrap_or("");

        let pair_id: u32 = field(0)
            .parse()
            .map_err(|_| parse_err(format!("pair_id {:?} is not an unsigned integer", field(0))))?;
        let ground = field(1);
        let aerial = field(2);
        if ground.is_empty() || aerial.is_empty() {
            return Err(parse_err(
                "ground and aerial paths must be non-empty".into(),
            ));
        }
        let number = |i: usize, name: &str| -> Result<Option<f64>> {
            let s = field(i);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(format!("{name} {s:?} is not a number")))
        };
        let (lat, lon) = if has_geo {
            (number(3, "lat")?, number(4, "lon")?)
        } else {
            (None, None)
        };
        if lat.is_some() != lon.is_some() {
            return Err(parse_err("lat and lon must be given together".into()));
        }
        let azimuth = if has_az {
            number(if has_geo { 5 } else { 3 }, "azimuth")?
        } else {
            None
        };
        if let Some(a) = azimuth {
            if !(0.0..360.0).contains(&a) {
                return Err(Error::Validation(format!(
                    "line {line}: azimuth {a} outside [0, 360)"
                )));
            }
        }
        if let Some(first) = seen.insert(pair_id, line) {
            return Err(Error::Validation(format!(
                "duplicate pair_id {pair_id} on lines {first} and {line}"
            )));
        }
        rows.push(ManifestRow {
            pair_id,
            ground: PathBuf::from(ground),
            aerial: PathBuf::from(aerial),
            lat,
            lon,
            azimuth,
            line,
        });
    }
    Ok(Manifest { rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AzimuthSpec {
    Fixed(f64),
    /// Uniform over the image's column grid, drawn per `(seed, pair_id)`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuerySpec {
    pub fov_deg: f64,
    pub azimuth: AzimuthSpec,
    pub seed: u64,
}

impl QuerySpec {
    pub fn panorama() -> Self {
        Self {
            fov_deg: 360.0,
            azimuth: AzimuthSpec::Fixed(0.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub image: Image,
    /// Snapped to the column grid.
    pub applied_azimuth: f64,
    pub shift: usize,
}

/// Round half up.
fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Number of columns kept for `fov_deg` out of a `width`-column panorama.
pub fn fov_columns(width: usize, fov_deg: f64) -> Result<usize> {
    if !(fov_deg > 0.0 && fov_deg <= 360.0) {
        return Err(Error::Config(format!(
            "fov must be in (0, 360], got {fov_deg}"
        )));
    }
    let cols = round_half_up(width as f64 * fov_deg / 360.0).min(width);
    if cols == 0 {
        return Err(Error::Config(format!(
            "fov {fov_deg} keeps no columns of a {width}-column panorama"
        )));
    }
    Ok(cols)
}

/// Feature-grid width for a query cropped to `image_width` of a
/// `pano_width`-column panorama whose full feature width is `feature_width`.
pub fn query_feature_width(image_width: usize, pano_width: usize, feature_width: usize) -> usize {
    if pano_width == 0 {
        return 0;
    }
    round_half_up(feature_width as f64 * image_width as f64 / pano_width as f64)
        .clamp(1, feature_width.max(1))
}

/// Rotates the panorama so column `shift` becomes the leftmost, then keeps
/// the FoV's worth of leftmost columns.
pub fn make_query(pano: &Image, spec: &QuerySpec, pair_id: u32) -> Result<Query> {
    let width = pano.width();
    let cols = fov_columns(width, spec.fov_deg)?;
    let shift = match spec.azimuth {
        AzimuthSpec::Fixed(deg) => {
            if !deg.is_finite() {
                return Err(Error::Config(format!("azimuth {deg} is not finite")));
            }
            round_half_up(deg.rem_euclid(360.0) * width as f64 / 360.0) % width
        }
        AzimuthSpec::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(pair_id as u64);
            rng.gen_range(0..width)
        }
    };
    let image = pano.roll_columns(shift).crop_left(cols)?;
    Ok(Query {
        image,
        applied_azimuth: shift as f64 * 360.0 / width as f64,
        shift,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub aerial: Image,
    pub ground: Image,
    pub gt_azimuth: f64,
    /// Columns the ground panorama was rolled by.
    pub shift: usize,
}

/// Procedural scene with a uniformly random orientation on the target
/// column grid.
pub fn synth_scene(seed: u64, cfg: &PolarConfig, noise_sigma: f64) -> Result<Scene> {
    synth_scene_at(seed, cfg, noise_sigma, None)
}

/// Like [`synth_scene`] but with an explicit ground roll when `shift` is set.
pub fn synth_scene_at(
    seed: u64,
    cfg: &PolarConfig,
    noise_sigma: f64,
    shift: Option<usize>,
) -> Result<Scene> {
    cfg.validate()?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aerial = procedural_aerial(cfg.aerial_size, &mut rng)?;
    let shift = match shift {
        Some(s) => s % cfg.target_width,
        None => rng.gen_range(0..cfg.target_width),
    };
    let mut ground = polar_transform(&aerial, cfg)?.roll_columns(shift);
    if noise_sigma > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(1);
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        for px in ground.data_mut() {
            let v = *px as f64 + normal.sample(&mut noise_rng);
            *px = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(Scene {
        aerial,
        ground,
        gt_azimuth: shift as f64 * 360.0 / cfg.target_width as f64,
        shift,
    })
}

enum Feature {
    Blob {
        r: f64,
        c: f64,
        sigma: f64,
        amp: f64,
    },
    Road {
        angle: f64,
        half_width: f64,
        amp: f64,
    },
    Ring {
        radius: f64,
        half_width: f64,
        amp: f64,
    },
    Wave {
        fr: f64,
        fc: f64,
        phase: f64,
        amp: f64,
    },
}

/// Smooth step from 1 (inside) to 0 over one pixel past `edge`.
fn soft_inside(dist: f64, edge: f64) -> f64 {
    (edge + 0.5 - dist).clamp(0.0, 1.0)
}

fn procedural_aerial(size: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    let s = size as f64;
    let center = s / 2.0;
    let mut features = Vec::new();
    for _ in 0..3 {
        features.push(Feature::Wave {
            fr: rng.gen_range(0.5..3.0) / s,
            fc: rng.gen_range(0.5..3.0) / s,
            phase: rng.gen_range(0.0..2.0 * PI),
            amp: rng.gen_range(8.0..20.0),
        });
    }
    for _ in 0..rng.gen_range(6..13) {
        let radius = rng.gen_range(0.0..0.5) * s;
        let angle = rng.gen_range(0.0..2.0 * PI);
        features.push(Feature::Blob {
            r: center - radius * angle.cos(),
            c: center + radius * angle.sin(),
            sigma: rng.gen_range(0.03..0.12) * s,
            amp: rng.gen_range(40.0..100.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        });
    }
    for _ in 0..rng.gen_range(1..4) {
        features.push(Feature::Road {
            angle: rng.gen_range(0.0..2.0 * PI),
            half_width: rng.gen_range(0.01..0.025) * s,
            amp: rng.gen_range(50.0..90.0),
        });
    }
    for _ in 0..rng.gen_range(0..3) {
        features.push(Feature::Ring {
            radius: rng.gen_range(0.1..0.45) * s,
            half_width: rng.gen_range(0.01..0.02) * s,
            amp: rng.gen_range(-70.0..70.0),
        });
    }
    let base = rng.gen_range(90.0..140.0);

    Image::gray_from_fn(size, size, |row, col| {
        let (r, c) = (row as f64, col as f64);
        let (dr, dc) = (r - center, c - center);
        let mut v = base;
        for f in &features {
            v += match *f {
                Feature::Wave { fr, fc, phase, amp } => {
                    amp * (2.0 * PI * (fr * r + fc * c) + phase).sin()
                }
                Feature::Blob {
                    r: br,
                    c: bc,
                    sigma,
                    amp,
                } => {
                    let d2 = (r - br).powi(2) + (c - bc).powi(2);
                    amp * (-d2 / (2.0 * sigma * sigma)).exp()
                }
                Feature::Road {
                    angle,
                    half_width,
                    amp,
                } => {
                    // direction of the ray in (row, col): north = -row, east = +col
                    let (ur, uc) = (-angle.cos(), angle.sin());
                    let along = dr * ur + dc * uc;
                    if along < 0.0 {
                        0.0
                    } else {
                        let across = (dr * uc - dc * ur).abs();
                        amp * soft_inside(across, half_width)
                    }
                }
                Feature::Ring {
                    radius,
                    half_width,
                    amp,
                } => {
                    let rho = dr.hypot(dc);
                    amp * soft_inside((rho - radius).abs(), half_width)
                }
            };
        }
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    })
}
