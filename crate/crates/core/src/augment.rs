//! Landmark-driven augmentations that strip expression from the pose
//! driver and pose from the expression driver.
//!
//! * Pose input: eye and mouth regions are covered ([`mask_pose_regions`]).
//! * Expression input: random in-plane rotation ([`random_rotate`]) then a
//!   square crop around the face box resized to 224×224 ([`crop_expression`]),
//!   which removes translation and scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{BBox, LandmarkSet, Similarity2};
use crate::numerics::{bilinear_sample_px, OutOfBounds, Rng, Tensor};
use crate::raster::Image;

pub const DEFAULT_COVER: f64 = 0.5;
pub const EXPRESSION_CROP_SIZE: usize = 224;
pub const DEFAULT_CROP_MARGIN: f64 = 0.1;
pub const DEFAULT_MAX_ROTATION_DEGREES: f64 = 30.0;

/// Pixel-space rectangles [`mask_pose_regions`] covers: each group's point
/// box dilated by `pad`.
pub fn pose_mask_boxes(lm: &LandmarkSet, pad: f64) -> Result<Vec<BBox>> {
    lm.groups
        .iter()
        .map(|(name, idx)| {
            if idx.is_empty() {
                return Err(Error::Validation(format!("landmark group {name} is empty")));
            }
            Ok(lm.group_box(idx)?.dilate(pad))
        })
        .collect()
}

/// Covers the eye and mouth boxes with `cover`. A pixel is covered when its
/// center lies inside a box.
pub fn mask_pose_regions(img: &Image, lm: &LandmarkSet, pad: f64, cover: f64) -> Result<Image> {
    let boxes = pose_mask_boxes(lm, pad)?;
    let mut out = img.clone();
    for row in 0..img.height() {
        let cy = row as f64 + 0.5;
        for col in 0..img.width() {
            let cx = col as f64 + 0.5;
            if boxes.iter().any(|b| b.contains(cx, cy)) {
                for c in 0..img.channels() {
                    out.set(c, row, col, cover);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropOptions {
    pub size: usize,
    /// Fractional enlargement of the square side.
    pub margin: f64,
    #[serde(skip, default = "border")]
    pub oob: OutOfBounds,
}

fn border() -> OutOfBounds {
    OutOfBounds::Border
}

impl Default for CropOptions {
    fn default() -> Self {
        Self {
            size: EXPRESSION_CROP_SIZE,
            margin: DEFAULT_CROP_MARGIN,
            oob: OutOfBounds::Border,
        }
    }
}

/// The square source window `(x0, y0, side)` a crop reads from.
pub fn crop_window(bbox: &BBox, margin: f64) -> Result<(f64, f64, f64)> {
    if !(bbox.w > 0.0 && bbox.h > 0.0) {
        return Err(Error::invalid(format!(
            "face box must have positive area, got {}x{}",
            bbox.w, bbox.h
        )));
    }
    let side = bbox.w.max(bbox.h) * (1.0 + margin);
    let [cx, cy] = bbox.center();
    Ok((cx - 0.5 * side, cy - 0.5 * side, side))
}

/// Similarity taking source pixel coordinates to crop pixel coordinates.
pub fn crop_similarity(bbox: &BBox, opts: &CropOptions) -> Result<Similarity2> {
    let (x0, y0, side) = crop_window(bbox, opts.margin)?;
    let k = opts.size as f64 / side;
    Ok(Similarity2 {
        scale: k,
        theta: 0.0,
        translation: [-x0 * k, -y0 * k],
    })
}

/// Square crop around the landmark face box, bilinearly resized.
pub fn crop_expression(img: &Image, lm: &LandmarkSet, opts: &CropOptions) -> Result<Image> {
    let (x0, y0, side) = crop_window(&lm.bbox, opts.margin)?;
    let n = opts.size;
    let step = side / n as f64;
    let channels = img.channels();
    let mut data = vec![0.0; channels * n * n];
    let mut px = vec![0.0; channels];
    for row in 0..n {
        let sy = y0 + (row as f64 + 0.5) * step;
        for col in 0..n {
            let sx = x0 + (col as f64 + 0.5) * step;
            bilinear_sample_px(img.tensor(), sx, sy, opts.oob, &mut px);
            for (c, v) in px.iter().enumerate() {
                data[(c * n + row) * n + col] = *v;
            }
        }
    }
    Image::new(Tensor::new(vec![channels, n, n], data)?)
}

/// Similarity that [`rotate`] applies to pixel coordinates: rotation by
/// `degrees` about the image center, `+x` turning toward `+y`.
pub fn rotation_similarity(width: usize, height: usize, degrees: f64) -> Similarity2 {
    Similarity2::about(
        [0.5 * width as f64, 0.5 * height as f64],
        degrees.to_radians(),
        1.0,
    )
}

/// Rotates about the image center with bilinear resampling.
pub fn rotate(img: &Image, degrees: f64, oob: OutOfBounds) -> Result<Image> {
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (h, w, channels) = (img.height(), img.width(), img.channels());
    let (cx, cy) = (0.5 * w as f64, 0.5 * h as f64);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut data = vec![0.0; channels * h * w];
    let mut px = vec![0.0; channels];
    for row in 0..h {
        let dy = row as f64 + 0.5 - cy;
        for col in 0..w {
            let dx = col as f64 + 0.5 - cx;
            // inverse rotation
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            bilinear_sample_px(img.tensor(), sx, sy, oob, &mut px);
            for (ch, v) in px.iter().enumerate() {
                data[(ch * h + row) * w + col] = *v;
            }
        }
    }
    Image::new(Tensor::new(vec![channels, h, w], data)?)
}

/// Rotation by an angle drawn uniformly from `[-max_degrees, max_degrees]`.
/// Returns the image and the angle in degrees.
pub fn random_rotate(
    img: &Image,
    rng: &mut Rng,
    max_degrees: f64,
    oob: OutOfBounds,
) -> Result<(Image, f64)> {
    if !(max_degrees >= 0.0 && max_degrees.is_finite()) {
        return Err(Error::invalid(format!(
            "max rotation must be a non-negative angle, got {max_degrees}"
        )));
    }
    if max_degrees == 0.0 {
        return Ok((img.clone(), 0.0));
    }
    let angle = rng.uniform_in(-max_degrees, max_degrees);
    Ok((rotate(img, angle, oob)?, angle))
}
