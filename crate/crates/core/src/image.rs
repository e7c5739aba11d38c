//! Minimal 8-bit raster used throughout the pipeline, plus PNG/JPEG IO.
//!
//! Pixels are stored row-major with interleaved channels. Row index is the
//! first coordinate everywhere (`x` in the polar formulas), column the second.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Dimension(format!(
                "only gray (1) or RGB (3) images are supported, got {channels} channels"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "pixel buffer holds {} bytes, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Gray image from a per-pixel function of (row, col).
    pub fn gray_from_fn(
        height: usize,
        width: usize,
        f: impl Fn(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, 1, data)
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: u8) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    /// Output column `j` takes input column `(j + shift) mod width`.
    pub fn roll_columns(&self, shift: usize) -> Image {
        let w = self.width;
        let ch = self.channels;
        let mut data = vec![0u8; self.data.len()];
        for r in 0..self.height {
            let row = &self.data[r * w * ch..(r + 1) * w * ch];
            let out = &mut data[r * w * ch..(r + 1) * w * ch];
            for j in 0..w {
                let src = (j + shift) % w;
                out[j * ch..(j + 1) * ch].copy_from_slice(&row[src * ch..(src + 1) * ch]);
            }
        }
        Image {
            data,
            ..self.clone()
        }
    }

    /// Keeps the leftmost `width` columns.
    pub fn crop_left(&self, width: usize) -> Result<Image> {
        if width == 0 || width > self.width {
            return Err(Error::Dimension(format!(
                "crop width {width} outside 1..={}",
                self.width
            )));
        }
        let ch = self.channels;
        let mut data = Vec::with_capacity(self.height * width * ch);
        for r in 0..self.height {
            let start = r * self.width * ch;
            data.extend_from_slice(&self.data[start..start + width * ch]);
        }
        Image::new(self.height, width, ch, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let dynamic = image::open(path).map_err(|e| image_error(path, e))?;
        let img = match dynamic.color().channel_count() {
            1 | 2 => {
                let gray = dynamic.into_luma8();
                let (w, h) = gray.dimensions();
                Image::new(h as usize, w as usize, 1, gray.into_raw())?
            }
            _ => {
                let rgb = dynamic.into_rgb8();
                let (w, h) = rgb.dimensions();
                Image::new(h as usize, w as usize, 3, rgb.into_raw())?
            }
        };
        Ok(img)
    }

    /// Format is chosen from the file extension (`.png`, `.jpg`, `.jpeg`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = if self.channels == 1 {
            image::ColorType::L8
        } else {
            image::ColorType::Rgb8
        };
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|e| image_error(path, e))
    }
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}
