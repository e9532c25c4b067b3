//! `[C, H, W]` images with values in `[0, 1]`, and PNG I/O.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Image(Tensor);

impl Image {
    /// Wraps a `[C, H, W]` tensor. Values must be finite; they are clamped to
    /// `[0, 1]` only when written out.
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 3 {
            return Err(Error::shape(format!(
                "image must be [C, H, W], got {:?}",
                data.shape()
            )));
        }
        data.ensure_finite()?;
        Ok(Self(data))
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(Tensor::full(&[channels, height, width], value)?)
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.0.data()[(c * self.height() + row) * self.width() + col]
    }

    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f64) {
        let (h, w) = (self.height(), self.width());
        self.0.data_mut()[(c * h + row) * w + col] = v;
    }

    pub fn same_size(&self, other: &Image) -> Result<()> {
        self.0.expect_same_shape(&other.0)
    }

    /// Mean over channels, as a single-channel image.
    pub fn to_gray(&self) -> Image {
        let (c, h, w) = (self.channels(), self.height(), self.width());
        let plane = h * w;
        let data = Tensor::from_fn(&[1, h, w], |k| {
            (0..c).map(|ch| self.0.data()[ch * plane + k]).sum::<f64>() / c as f64
        })
        .expect("non-empty image");
        Image(data)
    }

    fn quantize(v: f64) -> u8 {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }

    pub fn to_dynamic(&self) -> Result<DynamicImage> {
        let (h, w) = (self.height() as u32, self.width() as u32);
        match self.channels() {
            1 => Ok(DynamicImage::ImageLuma8(GrayImage::from_fn(
                w,
                h,
                |x, y| image::Luma([Self::quantize(self.get(0, y as usize, x as usize))]),
            ))),
            3 => Ok(DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, y| {
                image::Rgb([0, 1, 2].map(|c| Self::quantize(self.get(c, y as usize, x as usize))))
            }))),
            n => Err(Error::invalid(format!(
                "only 1- or 3-channel images can be encoded, got {n}"
            ))),
        }
    }

    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if img.color().has_color() {
            let rgb = img.to_rgb8();
            let plane = w * h;
            Self::new(Tensor::from_fn(&[3, h, w], |k| {
                let (c, p) = (k / plane, k % plane);
                rgb.get_pixel((p % w) as u32, (p / w) as u32)[c] as f64 / 255.0
            })?)
        } else {
            let g = img.to_luma8();
            Self::new(Tensor::from_fn(&[1, h, w], |k| {
                g.get_pixel((k % w) as u32, (k / w) as u32)[0] as f64 / 255.0
            })?)
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_dynamic()?
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_dynamic(&image::open(path)?)
    }
}
