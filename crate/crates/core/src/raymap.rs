//! Head-pose ray maps.
//!
//! Each pixel `(u, v)` (pixel centers in normalized coordinates) stores the
//! displacement of the image-plane point `[u, v, 0]` under the pose:
//!
//! * [`RayMapMode::LiteralW0`]: `P·[u, v, 0, 0]ᵀ − [u, v, 0]ᵀ = s·R·[u, v, 0]ᵀ − [u, v, 0]ᵀ`.
//!   The homogeneous weight is zero, so translation does not appear.
//! * [`RayMapMode::HomogeneousW1`]: `s·R·[u, v, 0]ᵀ + t − [u, v, 0]ᵀ`.
//!
//! The canonical pose produces an all-zero map in both modes.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{center_coord, Tensor};
use crate::pose::PoseRTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RayMapMode {
    /// Homogeneous weight 0; translation-free.
    #[default]
    #[serde(rename = "w0")]
    LiteralW0,
    /// Homogeneous weight 1; includes translation.
    #[serde(rename = "w1")]
    HomogeneousW1,
}

impl FromStr for RayMapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w0" => Ok(RayMapMode::LiteralW0),
            "w1" => Ok(RayMapMode::HomogeneousW1),
            other => Err(Error::invalid(format!("unknown ray map mode {other:?}"))),
        }
    }
}

impl fmt::Display for RayMapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RayMapMode::LiteralW0 => "w0",
            RayMapMode::HomogeneousW1 => "w1",
        })
    }
}

/// A `[3, H, W]` displacement field; channel order `(x, y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayMap {
    mode: RayMapMode,
    data: Tensor,
}

impl RayMap {
    pub fn mode(&self) -> RayMapMode {
        self.mode
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    /// Displacement stored at pixel `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> [f64; 3] {
        [0, 1, 2].map(|c| self.data.at(&[c, row, col]))
    }
}

pub fn compute_raymap(
    pose: &PoseRTS,
    width: usize,
    height: usize,
    mode: RayMapMode,
) -> Result<RayMap> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "ray map size must be positive, got {width}x{height}"
        )));
    }
    let linear = pose.rotation() * pose.scale();
    let offset = match mode {
        RayMapMode::LiteralW0 => Vector3::zeros(),
        RayMapMode::HomogeneousW1 => *pose.translation(),
    };
    let plane = width * height;
    let mut data = vec![0.0; 3 * plane];
    for row in 0..height {
        let v = center_coord(row, height);
        for col in 0..width {
            let u = center_coord(col, width);
            let p = Vector3::new(u, v, 0.0);
            let d = linear * p + offset - p;
            let k = row * width + col;
            data[k] = d[0];
            data[plane + k] = d[1];
            data[2 * plane + k] = d[2];
        }
    }
    Ok(RayMap {
        mode,
        data: Tensor::new(vec![3, height, width], data)?,
    })
}

/// Source and driving ray maps stacked along channels: `[6, H, W]`.
pub fn raymap_pair(
    source: &PoseRTS,
    driving: &PoseRTS,
    width: usize,
    height: usize,
    mode: RayMapMode,
) -> Result<Tensor> {
    let s = compute_raymap(source, width, height, mode)?;
    let d = compute_raymap(driving, width, height, mode)?;
    Tensor::concat0(&[s.tensor(), d.tensor()])
}

/// Affine mapping of all ray-map values onto `[0, 1]` for visualization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplayMapping {
    pub min: f64,
    pub max: f64,
}

impl DisplayMapping {
    pub fn for_map(map: &RayMap) -> Self {
        let (min, max) = map
            .tensor()
            .data()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        Self { min, max }
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }
}

impl fmt::Display for DisplayMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.max > self.min {
            write!(
                f,
                "rgb = (xyz - {:.6}) / {:.6} for each channel",
                self.min,
                self.max - self.min
            )
        } else {
            write!(f, "rgb = 0.5 (constant map with value {:.6})", self.min)
        }
    }
}

/// Renders the map as an RGB `[3, H, W]` image in `[0, 1]`.
pub fn raymap_to_rgb(map: &RayMap) -> (Tensor, DisplayMapping) {
    let mapping = DisplayMapping::for_map(map);
    (map.tensor().map(|x| mapping.apply(x)), mapping)
}
