//! Feature volumes and the deterministic stand-in extractor.
//!
//! A volume is `height x width x channels`, stored `h`-outer, `w`-middle,
//! `c`-inner. Columns index azimuth. The extractor keeps the two properties
//! the matcher depends on: a fixed output shape and exact equivariance to
//! circular column shifts that are whole multiples of the cell width.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Image;

/// Norms below this are treated as a zero volume.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl FeatureVolume {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension(format!(
                "feature volume dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "feature buffer holds {} values, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature value at flat index {i} is not finite"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            normalized: false,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for h in 0..height {
            for w in 0..width {
                for c in 0..channels {
                    data.push(f(h, w, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn index(&self, h: usize, w: usize, c: usize) -> usize {
        (h * self.width + w) * self.channels + c
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.index(h, w, c)]
    }

    /// Channel vector at (h, w).
    #[inline]
    pub fn cell(&self, h: usize, w: usize) -> &[f32] {
        let start = self.index(h, w, 0);
        &self.data[start..start + self.channels]
    }

    /// Frobenius norm, computed so that any permutation of the entries gives
    /// a bit-identical result.
    pub fn frobenius_norm(&self) -> f64 {
        let mut squares: Vec<f64> = self.data.iter().map(|&v| (v as f64) * (v as f64)).collect();
        squares.sort_unstable_by(f64::total_cmp);
        squares.iter().sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVolume) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "dot product of {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }

    /// Frobenius norm of `self - other`, accumulated in 64-bit.
    pub fn distance(&self, other: &FeatureVolume) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "distance between {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt())
    }

    /// Output column `j` is input column `(j + shift) mod width`.
    pub fn roll_columns(&self, shift: usize) -> FeatureVolume {
        let mut data = Vec::with_capacity(self.data.len());
        for h in 0..self.height {
            for j in 0..self.width {
                data.extend_from_slice(self.cell(h, (j + shift) % self.width));
            }
        }
        FeatureVolume {
            data,
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f32) -> FeatureVolume {
        FeatureVolume {
            data: self.data.iter().map(|v| v * factor).collect(),
            normalized: false,
            ..self.clone()
        }
    }
}

pub fn l2_normalize(v: &FeatureVolume) -> Result<FeatureVolume> {
    let norm = v.frobenius_norm();
    if norm < MIN_NORM {
        return Err(Error::Degenerate(format!(
            "cannot normalize a {:?} volume with norm {norm:e}",
            v.dims()
        )));
    }
    let data = v.data.iter().map(|&x| (x as f64 / norm) as f32).collect();
    Ok(FeatureVolume {
        data,
        normalized: true,
        ..v.clone()
    })
}

/// Column `j` of the output is column `(start + j) mod W` of the input.
pub fn crop_columns(v: &FeatureVolume, start: usize, width: usize) -> Result<FeatureVolume> {
    if width == 0 || width > v.width {
        return Err(Error::Dimension(format!(
            "crop width {width} outside 1..={}",
            v.width
        )));
    }
    let mut data = Vec::with_capacity(v.height * width * v.channels);
    for h in 0..v.height {
        for j in 0..width {
            data.extend_from_slice(v.cell(h, (start + j) % v.width));
        }
    }
    Ok(FeatureVolume {
        height: v.height,
        width,
        channels: v.channels,
        data,
        normalized: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorMode {
    /// Per-cell intensity means, mean absolute gradients, then
    /// orientation-binned gradient magnitude filling the remaining channels.
    BlockMean,
    /// Every channel is an orientation bin of gradient magnitude.
    GradientHistogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractorConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub mode: ExtractorMode,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            height: 4,
            width: 64,
            channels: 16,
            mode: ExtractorMode::BlockMean,
        }
    }
}

impl ExtractorConfig {
    pub fn with_width(self, width: usize) -> Self {
        Self { width, ..self }
    }
}

struct PixelFields {
    width: usize,
    intensity: Vec<f64>, // per pixel per image channel, in [0, 1]
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl PixelFields {
    fn compute(img: &Image) -> Self {
        let (hgt, wid, ch) = (img.height(), img.width(), img.channels());
        let intensity: Vec<f64> = img.data().iter().map(|&v| v as f64 / 255.0).collect();
        let gray: Vec<f64> = intensity
            .chunks_exact(ch)
            .map(|px| px.iter().sum::<f64>() / ch as f64)
            .collect();
        let at = |r: usize, c: usize| gray[r * wid + c];

        let mut dx = Vec::with_capacity(hgt * wid);
        let mut dy = Vec::with_capacity(hgt * wid);
        for r in 0..hgt {
            for c in 0..wid {
                // Columns wrap (azimuth is circular); rows clamp.
                let left = at(r, (c + wid - 1) % wid);
                let right = at(r, (c + 1) % wid);
                let up = at(r.saturating_sub(1), c);
                let down = at((r + 1).min(hgt - 1), c);
                dx.push(0.5 * (right - left));
                dy.push(0.5 * (down - up));
            }
        }
        Self {
            width: wid,
            intensity,
            dx,
            dy,
        }
    }
}

fn orientation_bin(dx: f64, dy: f64, bins: usize) -> usize {
    let theta = dy.atan2(dx).rem_euclid(2.0 * PI);
    ((theta / (2.0 * PI) * bins as f64).floor() as usize).min(bins - 1)
}

/// Per-cell statistics, unnormalized. Exposed for tests.
pub fn extract_raw(img: &Image, cfg: &ExtractorConfig) -> Result<FeatureVolume> {
    if cfg.height == 0 || cfg.width == 0 || cfg.channels == 0 {
        return Err(Error::Config(format!(
            "extractor grid must be positive, got {}x{}x{}",
            cfg.height, cfg.width, cfg.channels
        )));
    }
    if img.height() < cfg.height || img.width() < cfg.width {
        return Err(Error::Dimension(format!(
            "image {}x{} is smaller than the {}x{} feature grid",
            img.height(),
            img.width(),
            cfg.height,
            cfg.width
        )));
    }
    let img_ch = img.channels();
    let fields = PixelFields::compute(img);
    let (base, bins) = match cfg.mode {
        ExtractorMode::BlockMean => {
            let base = img_ch + 2;
            (base, cfg.channels.saturating_sub(base))
        }
        ExtractorMode::GradientHistogram => (0, cfg.channels),
    };

    let row_bounds: Vec<usize> = (0..=cfg.height)
        .map(|i| i * img.height() / cfg.height)
        .collect();
    let col_bounds: Vec<usize> = (0..=cfg.width)
        .map(|j| j * img.width() / cfg.width)
        .collect();

    let mut data = vec![0f32; cfg.height * cfg.width * cfg.channels];
    let mut acc = vec![0f64; base + bins];
    for h in 0..cfg.height {
        for w in 0..cfg.width {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut count = 0usize;
            for r in row_bounds[h]..row_bounds[h + 1] {
                for c in col_bounds[w]..col_bounds[w + 1] {
                    let p = r * fields.width + c;
                    let (gx, gy) = (fields.dx[p], fields.dy[p]);
                    if base > 0 {
                        for (a, v) in acc
                            .iter_mut()
                            .zip(&fields.intensity[p * img_ch..(p + 1) * img_ch])
                        {
                            *a += v;
                        }
                        acc[img_ch] += gx.abs();
                        acc[img_ch + 1] += gy.abs();
                    }
                    if bins > 0 {
                        let mag = gx.hypot(gy);
                        if mag > 0.0 {
                            acc[base + orientation_bin(gx, gy, bins)] += mag;
                        }
                    }
                    count += 1;
                }
            }
            let out = &mut data[(h * cfg.width + w) * cfg.channels..][..cfg.channels];
            for (o, a) in out.iter_mut().zip(&acc) {
                *o = (a / count as f64) as f32;
            }
        }
    }
    FeatureVolume::new(cfg.height, cfg.width, cfg.channels, data)
}

/// Stand-in for a learned two-branch backbone: per-cell statistics,
/// then whole-volume L2 normalization.
pub fn extract_features(img: &Image, cfg: &ExtractorConfig) -> Result<FeatureVolume> {
    l2_normalize(&extract_raw(img, cfg)?)
}
