//! RGB images with channel values in [0, 1], plus PNG/PPM loading of images
//! and binary masks.

use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::grid::{resize_bilinear, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    /// Interleaved RGB, row-major.
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width * 3 {
            return Err(Error::Dimension(format!(
                "{height}×{width}×3 image cannot hold {} values",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Dimension(format!(
                "channel value {} at index {i} is outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image from a per-pixel RGB function; values are clamped to
    /// [0, 1].
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            for c in 0..width {
                pixels.extend(f(r, c).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn rgb(&self, r: usize, c: usize) -> [f32; 3] {
        let i = (r * self.width + c) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Channel-mean intensity.
    pub fn grayscale(&self) -> Grid<f32> {
        Grid::from_fn(self.height, self.width, |r, c| {
            let [a, b, d] = self.rgb(r, c);
            (a + b + d) / 3.0
        })
    }

    pub fn channel(&self, k: usize) -> Grid<f32> {
        Grid::from_fn(self.height, self.width, |r, c| self.rgb(r, c)[k])
    }

    /// Bilinear resize, channel by channel.
    pub fn resize(&self, height: usize, width: usize) -> Image {
        if self.dims() == (height, width) {
            return self.clone();
        }
        let planes: Vec<Grid<f32>> = (0..3)
            .map(|k| resize_bilinear(&self.channel(k), height, width))
            .collect();
        Image::from_fn(height, width, |r, c| {
            [planes[0].get(r, c), planes[1].get(r, c), planes[2].get(r, c)]
        })
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Rgb(self.rgb(y as usize, x as usize).map(quantise))
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Image {
        let (w, h) = img.dimensions();
        Image {
            height: h as usize,
            width: w as usize,
            pixels: img.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect(),
        }
    }
}

pub(crate) fn quantise(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads an 8-bit PNG or PPM image.
pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })?;
    Ok(Image::from_rgb8(&img.to_rgb8()))
}

pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    img.to_rgb8().save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

/// Reads a mask image; pixels with luma ≥ 128 are positive.
pub fn load_mask(path: &Path) -> Result<Grid<u8>> {
    let img = image::open(path)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    Grid::new(
        h as usize,
        w as usize,
        img.as_raw().iter().map(|&v| u8::from(v >= 128)).collect(),
    )
}

pub fn save_mask(mask: &Grid<u8>, path: &Path) -> Result<()> {
    let img = GrayImage::from_fn(mask.cols() as u32, mask.rows() as u32, |x, y| {
        image::Luma([if mask.get(y as usize, x as usize) != 0 { 255 } else { 0 }])
    });
    img.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_channels() {
        assert!(Image::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(Image::new(1, 1, vec![0.0, 1.0]).is_err());
        assert!(Image::new(1, 1, vec![0.0, 1.0, 0.5]).is_ok());
    }

    #[test]
    fn grayscale_is_channel_mean() {
        let img = Image::new(1, 1, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(img.grayscale().get(0, 0), 0.5);
    }

    #[test]
    fn png_round_trip_through_eight_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Image::from_fn(4, 5, |r, c| [r as f32 / 4.0, c as f32 / 5.0, 0.2]);
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.dims(), (4, 5));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = Grid::from_fn(3, 4, |r, c| u8::from((r + c) % 2 == 0));
        save_mask(&mask, &path).unwrap();
        assert_eq!(load_mask(&path).unwrap(), mask);
    }
}
