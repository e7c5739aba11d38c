//! Polar warp of top-down aerial tiles into the ground panorama frame.
//!
//! Target row 0 is the outermost circle of the aerial tile and target row
//! `target_height` would be the tile center; target column 0 points north
//! (up in the tile) and columns advance clockwise.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarConfig {
    pub aerial_size: usize,
    pub target_height: usize,
    pub target_width: usize,
}

impl PolarConfig {
    pub fn new(aerial_size: usize, target_height: usize, target_width: usize) -> Result<Self> {
        let cfg = Self {
            aerial_size,
            target_height,
            target_width,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.aerial_size < 2 || self.target_height < 1 || self.target_width < 1 {
            return Err(Error::Config(format!(
                "polar config needs aerial_size >= 2 and a non-empty target, got {}/{}x{}",
                self.aerial_size, self.target_height, self.target_width
            )));
        }
        Ok(())
    }

    /// Source (row, col) in the aerial tile for target pixel (row, col).
    ///
    /// Defined for any real target row, so `target_row == target_height`
    /// (radius zero) is representable.
    #[inline]
    pub fn source_of(&self, target_row: f64, target_col: f64) -> (f64, f64) {
        let half = self.aerial_size as f64 / 2.0;
        let h = self.target_height as f64;
        let radius = half * (h - target_row) / h;
        let angle = 2.0 * PI * target_col / self.target_width as f64;
        (half - radius * angle.cos(), half + radius * angle.sin())
    }
}

/// Source coordinates for every target pixel, row-major over the target.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    height: usize,
    width: usize,
    coords: Vec<(f64, f64)>,
}

impl SamplingGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn get(&self, target_row: usize, target_col: usize) -> (f64, f64) {
        self.coords[target_row * self.width + target_col]
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }
}

pub fn polar_grid(cfg: &PolarConfig) -> Result<SamplingGrid> {
    cfg.validate()?;
    let mut coords = Vec::with_capacity(cfg.target_height * cfg.target_width);
    for xt in 0..cfg.target_height {
        for yt in 0..cfg.target_width {
            coords.push(cfg.source_of(xt as f64, yt as f64));
        }
    }
    Ok(SamplingGrid {
        height: cfg.target_height,
        width: cfg.target_width,
        coords,
    })
}

/// Bilinear interpolation at real (row, col); coordinates are clamped to the
/// image border first, so the function is total over finite inputs.
pub fn bilinear_sample(img: &Image, row: f64, col: f64, channel: usize) -> f64 {
    let max_r = (img.height() - 1) as f64;
    let max_c = (img.width() - 1) as f64;
    let r = row.clamp(0.0, max_r);
    let c = col.clamp(0.0, max_c);

    let r0 = r.floor() as usize;
    let c0 = c.floor() as usize;
    let r1 = (r0 + 1).min(img.height() - 1);
    let c1 = (c0 + 1).min(img.width() - 1);
    let fr = r - r0 as f64;
    let fc = c - c0 as f64;

    let p00 = img.get(r0, c0, channel) as f64;
    let p01 = img.get(r0, c1, channel) as f64;
    let p10 = img.get(r1, c0, channel) as f64;
    let p11 = img.get(r1, c1, channel) as f64;

    let top = p00 + (p01 - p00) * fc;
    let bottom = p10 + (p11 - p10) * fc;
    top + (bottom - top) * fr
}

pub fn polar_transform(aerial: &Image, cfg: &PolarConfig) -> Result<Image> {
    cfg.validate()?;
    if aerial.height() != cfg.aerial_size || aerial.width() != cfg.aerial_size {
        return Err(Error::Dimension(format!(
            "aerial tile is {}x{}, config expects {}x{}",
            aerial.height(),
            aerial.width(),
            cfg.aerial_size,
            cfg.aerial_size
        )));
    }
    let grid = polar_grid(cfg)?;
    let channels = aerial.channels();
    let mut data = Vec::with_capacity(grid.len() * channels);
    for &(row, col) in grid.coords() {
        for ch in 0..channels {
            data.push(to_u8(bilinear_sample(aerial, row, col, ch)));
        }
    }
    Image::new(cfg.target_height, cfg.target_width, channels, data)
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}
