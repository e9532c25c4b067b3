//! Named 2D facial landmarks in pixel coordinates, with eye/mouth groups
//! and a face bounding box.
//!
//! Pixel coordinates are continuous: pixel `(row i, col j)` covers
//! `[j, j+1) × [i, i+1)`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Axis-aligned box `(x, y, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first[0], first[1], first[0], first[1]);
        for p in it {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        Some(Self {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x + 0.5 * self.w, self.y + 0.5 * self.h]
    }

    /// Grows every side by `pad` (shrinks for negative `pad`).
    pub fn dilate(&self, pad: f64) -> Self {
        Self {
            x: self.x - pad,
            y: self.y - pad,
            w: self.w + 2.0 * pad,
            h: self.h + 2.0 * pad,
        }
    }

    /// Whether `(px, py)` lies inside the closed box. Boxes with negative
    /// width or height contain nothing.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        self.w >= 0.0
            && self.h >= 0.0
            && px >= self.x
            && px <= self.x + self.w
            && py >= self.y
            && py <= self.y + self.h
    }
}

/// Index lists into the landmark points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkGroups {
    pub left_eye: Vec<usize>,
    pub right_eye: Vec<usize>,
    pub mouth: Vec<usize>,
}

impl LandmarkGroups {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &[usize])> {
        [
            ("left_eye", self.left_eye.as_slice()),
            ("right_eye", self.right_eye.as_slice()),
            ("mouth", self.mouth.as_slice()),
        ]
        .into_iter()
    }
}

/// 2D similarity `p ↦ s·R(θ)·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity2 {
    pub scale: f64,
    pub theta: f64,
    pub translation: [f64; 2],
}

impl Similarity2 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            theta: 0.0,
            translation: [0.0, 0.0],
        }
    }

    /// Rotation by `theta` and scaling by `scale` about `center`.
    pub fn about(center: [f64; 2], theta: f64, scale: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let rc = [
            scale * (c * center[0] - s * center[1]),
            scale * (s * center[0] + c * center[1]),
        ];
        Self {
            scale,
            theta,
            translation: [center[0] - rc[0], center[1] - rc[1]],
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.translation[0],
            self.scale * (s * p[0] + c * p[1]) + self.translation[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    names: Vec<String>,
    points: Vec<[f64; 2]>,
    pub groups: LandmarkGroups,
    pub bbox: BBox,
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    points: Map<String, Value>,
    groups: LandmarkGroups,
    bbox: BBox,
}

impl LandmarkSet {
    pub fn new(
        names: Vec<String>,
        points: Vec<[f64; 2]>,
        groups: LandmarkGroups,
        bbox: BBox,
    ) -> Result<Self> {
        if names.len() != points.len() {
            return Err(Error::AxisMismatch {
                axis: "landmark names",
                expected: points.len(),
                actual: names.len(),
            });
        }
        if let Some(i) = points
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(Error::NonFinite { index: i });
        }
        for (name, idx) in groups.iter() {
            if idx.is_empty() {
                return Err(Error::Validation(format!("landmark group {name} is empty")));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= points.len()) {
                return Err(Error::Validation(format!(
                    "landmark group {name} references point {bad}, but only {} exist",
                    points.len()
                )));
            }
        }
        Ok(Self {
            names,
            points,
            groups,
            bbox,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn get(&self, name: &str) -> Option<[f64; 2]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.points[i])
    }

    /// Bounding box of a group's points.
    pub fn group_box(&self, group: &[usize]) -> Result<BBox> {
        BBox::from_points(group.iter().map(|&i| &self.points[i]))
            .ok_or_else(|| Error::Validation("landmark group is empty".into()))
    }

    /// Clamps every point into `[0, width] × [0, height]`.
    pub fn clamp_to(&mut self, width: usize, height: usize) {
        for p in &mut self.points {
            p[0] = p[0].clamp(0.0, width as f64);
            p[1] = p[1].clamp(0.0, height as f64);
        }
    }

    /// Maps every point through `sim`; the bounding box becomes the
    /// axis-aligned box of the mapped points.
    pub fn transformed(&self, sim: &Similarity2) -> Self {
        let points: Vec<[f64; 2]> = self.points.iter().map(|&p| sim.apply(p)).collect();
        let bbox = BBox::from_points(&points).unwrap_or(self.bbox);
        Self {
            names: self.names.clone(),
            points,
            groups: self.groups.clone(),
            bbox,
        }
    }

    /// Points shared by name with `other`, as pairs `(self, other)` in
    /// `self`'s order.
    pub fn common_points(&self, other: &LandmarkSet) -> Vec<([f64; 2], [f64; 2])> {
        self.names
            .iter()
            .zip(&self.points)
            .filter_map(|(n, &p)| other.get(n).map(|q| (p, q)))
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LandmarkFile = serde_json::from_str(text)?;
        let mut names = Vec::with_capacity(file.points.len());
        let mut points = Vec::with_capacity(file.points.len());
        for (name, value) in file.points {
            let xy: [f64; 2] = serde_json::from_value(value)
                .map_err(|e| Error::Validation(format!("landmark {name}: {e}")))?;
            names.push(name);
            points.push(xy);
        }
        Self::new(names, points, file.groups, file.bbox)
    }

    pub fn to_json(&self) -> String {
        let points = self
            .names
            .iter()
            .zip(&self.points)
            .map(|(n, p)| (n.clone(), serde_json::json!(p)))
            .collect();
        serde_json::to_string_pretty(&LandmarkFile {
            points,
            groups: self.groups.clone(),
            bbox: self.bbox,
        })
        .expect("landmarks serialize")
    }
}
