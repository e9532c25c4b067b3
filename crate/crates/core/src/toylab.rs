//! Synthetic faces with known pose and expression, and an exact denoiser
//! over a finite set of them.
//!
//! A render is a continuous function of face coordinates sampled at pixel
//! centers, so translating or scaling a face moves the picture with it (up
//! to resampling). Faces live in normalized image coordinates `[-1, 1]²`
//! like ray maps: a face point `q` lands at `p = s·R(θ)·q + t`.
//!
//! [`OracleDenoiser`] predicts ε exactly for the data distribution that is
//! uniform over the renders of a [`ToyLab`] grid, restricted to the grid
//! cells named by the condition.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::{ExpressionLatent, EXPRESSION_DIM};
use crate::error::{Error, Result};
use crate::landmarks::{BBox, LandmarkGroups, LandmarkSet, Similarity2};
use crate::numerics::{Rng, Tensor};
use crate::pose::PoseRTS;
use crate::raster::Image;
use crate::raymap::{raymap_pair, RayMapMode};
use crate::sampler::{
    sample, CfgSchedule, ConditionSet, Denoiser, GuidanceMode, NoiseSchedule, PoseCondition,
};

pub const MIN_RENDER_SIZE: usize = 32;
pub const DEFAULT_RENDER_SIZE: usize = 64;

const BACKGROUND: f64 = 0.15;
const SKIN: f64 = 0.75;
const INK: f64 = 0.1;
/// Soft-edge width, face units.
const EDGE: f64 = 0.05;
const HEAD_RADII: [f64; 2] = [0.55, 0.7];
const EYE_CENTER: [f64; 2] = [0.22, -0.18];
const EYE_RADII: [f64; 2] = [0.1, 0.07];
const MOUTH_Y: f64 = 0.32;
const MOUTH_HALF_WIDTH: f64 = 0.22;
const MOUTH_DEPTH: f64 = 0.1;
const MOUTH_HALF_THICKNESS: f64 = 0.04;
/// Slack added around landmark groups so the boxes cover every ink pixel.
const REGION_SLACK: f64 = 0.05;

const HEAD_POINTS: usize = 12;
const EYE_POINTS: usize = 8;
const MOUTH_POINTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyPose {
    /// In-plane rotation, radians.
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    pub scale: f64,
}

impl ToyPose {
    pub fn centered() -> Self {
        Self {
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
            scale: 1.0,
        }
    }

    /// The planar [`PoseRTS`] with roll `theta`.
    pub fn to_pose(&self) -> Result<PoseRTS> {
        PoseRTS::from_euler(0.0, 0.0, self.theta, self.tx, self.ty, self.scale)
    }

    /// Reads `(θ, tx, ty, s)` back from a planar pose.
    pub fn from_pose(p: &PoseRTS) -> Self {
        let r = p.rotation();
        Self {
            theta: r[(1, 0)].atan2(r[(0, 0)]),
            tx: p.translation()[0],
            ty: p.translation()[1],
            scale: p.scale(),
        }
    }

    /// Face coordinates to pixel coordinates for a `size`² render.
    pub fn pixel_similarity(&self, size: usize) -> Similarity2 {
        let half = 0.5 * size as f64;
        Similarity2 {
            scale: self.scale * half,
            theta: self.theta,
            translation: [(self.tx + 1.0) * half, (self.ty + 1.0) * half],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyExpression {
    /// 0 closed, 1 fully open.
    pub eye_open: f64,
    /// Positive curves the mouth corners up.
    pub mouth_curve: f64,
}

impl ToyExpression {
    pub fn neutral() -> Self {
        Self {
            eye_open: 1.0,
            mouth_curve: 0.0,
        }
    }

    /// Expression latent carrying `(eye_open, mouth_curve)` in its first two
    /// entries and zeros elsewhere.
    pub fn to_latent(&self) -> ExpressionLatent {
        let mut v = vec![0.0; EXPRESSION_DIM];
        v[0] = self.eye_open;
        v[1] = self.mouth_curve;
        ExpressionLatent::new(v).expect("finite expression")
    }

    pub fn from_latent(z: &ExpressionLatent) -> Self {
        Self {
            eye_open: z.as_slice()[0],
            mouth_curve: z.as_slice()[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyFactors {
    pub pose: ToyPose,
    pub expression: ToyExpression,
}

impl ToyFactors {
    pub fn validate(&self) -> Result<()> {
        let p = &self.pose;
        if ![p.theta, p.tx, p.ty, p.scale].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("toy pose must be finite"));
        }
        if p.scale <= 0.0 {
            return Err(Error::invalid(format!(
                "toy scale must be positive, got {}",
                p.scale
            )));
        }
        let e = &self.expression;
        if !(0.0..=1.0).contains(&e.eye_open) {
            return Err(Error::invalid(format!(
                "eye_open must lie in [0, 1], got {}",
                e.eye_open
            )));
        }
        if !(-1.0..=1.0).contains(&e.mouth_curve) {
            return Err(Error::invalid(format!(
                "mouth_curve must lie in [-1, 1], got {}",
                e.mouth_curve
            )));
        }
        Ok(())
    }
}

/// A render and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyRender {
    pub image: Image,
    pub landmarks: LandmarkSet,
    /// Padding, in pixels, that makes the landmark group boxes cover every
    /// eye and mouth pixel; pass it to `mask_pose_regions`.
    pub region_pad: f64,
    /// Left eye, right eye, mouth: the group boxes dilated by `region_pad`.
    pub regions: [BBox; 3],
}

/// Coverage of the ellipse interior, fading to zero at the outline.
fn ellipse_inside(q: [f64; 2], center: [f64; 2], radii: [f64; 2]) -> f64 {
    if radii[0] <= 0.0 || radii[1] <= 0.0 {
        return 0.0;
    }
    let (x, y) = ((q[0] - center[0]) / radii[0], (q[1] - center[1]) / radii[1]);
    let d = ((x * x + y * y).sqrt() - 1.0) * radii[0].min(radii[1]);
    (-d / EDGE).clamp(0.0, 1.0)
}

fn mouth_curve_y(x: f64, curve: f64) -> f64 {
    let r = x / MOUTH_HALF_WIDTH;
    MOUTH_Y + curve * MOUTH_DEPTH * (1.0 - r * r)
}

fn mouth_coverage(q: [f64; 2], curve: f64) -> f64 {
    let x = q[0].clamp(-MOUTH_HALF_WIDTH, MOUTH_HALF_WIDTH);
    let dx = q[0] - x;
    let dy = q[1] - mouth_curve_y(x, curve);
    // rounded caps past the corners
    let d = (dx * dx + dy * dy).sqrt();
    ((MOUTH_HALF_THICKNESS - d) / EDGE).clamp(0.0, 1.0)
}

fn shade(q: [f64; 2], e: &ToyExpression) -> f64 {
    let (x, y) = (q[0] / HEAD_RADII[0], q[1] / HEAD_RADII[1]);
    let d = ((x * x + y * y).sqrt() - 1.0) * HEAD_RADII[0];
    let head = (0.5 - d / EDGE).clamp(0.0, 1.0);
    let mut v = BACKGROUND + head * (SKIN - BACKGROUND);
    let eye_radii = [EYE_RADII[0], EYE_RADII[1] * e.eye_open];
    for cx in [-EYE_CENTER[0], EYE_CENTER[0]] {
        let a = ellipse_inside(q, [cx, EYE_CENTER[1]], eye_radii);
        v += a * (INK - v);
    }
    let m = mouth_coverage(q, e.mouth_curve);
    v + m * (INK - v)
}

/// Landmarks in face coordinates, with their names and groups.
fn face_landmarks(e: &ToyExpression) -> (Vec<String>, Vec<[f64; 2]>, LandmarkGroups) {
    let mut names = Vec::new();
    let mut points = Vec::new();
    for k in 0..HEAD_POINTS {
        let a = 2.0 * PI * k as f64 / HEAD_POINTS as f64;
        names.push(format!("head_{k:02}"));
        points.push([HEAD_RADII[0] * a.cos(), HEAD_RADII[1] * a.sin()]);
    }
    let mut groups = LandmarkGroups::default();
    for (side, cx) in [("left_eye", -EYE_CENTER[0]), ("right_eye", EYE_CENTER[0])] {
        let ids: Vec<usize> = (points.len()..points.len() + EYE_POINTS).collect();
        for k in 0..EYE_POINTS {
            let a = 2.0 * PI * k as f64 / EYE_POINTS as f64;
            names.push(format!("{side}_{k}"));
            points.push([
                cx + EYE_RADII[0] * a.cos(),
                EYE_CENTER[1] + EYE_RADII[1] * e.eye_open * a.sin(),
            ]);
        }
        if side == "left_eye" {
            groups.left_eye = ids;
        } else {
            groups.right_eye = ids;
        }
    }
    groups.mouth = (points.len()..points.len() + MOUTH_POINTS).collect();
    for k in 0..MOUTH_POINTS {
        let x = -MOUTH_HALF_WIDTH + 2.0 * MOUTH_HALF_WIDTH * k as f64 / (MOUTH_POINTS - 1) as f64;
        names.push(format!("mouth_{k}"));
        points.push([x, mouth_curve_y(x, e.mouth_curve)]);
    }
    (names, points, groups)
}

/// Renders a `size`² grayscale face.
pub fn render_face(f: &ToyFactors, size: usize) -> Result<ToyRender> {
    f.validate()?;
    if size < MIN_RENDER_SIZE {
        return Err(Error::invalid(format!(
            "render size must be at least {MIN_RENDER_SIZE}, got {size}"
        )));
    }
    let p = &f.pose;
    let (sin, cos) = p.theta.sin_cos();
    let inv_s = 1.0 / p.scale;
    let n = size as f64;
    let data = Tensor::from_fn(&[1, size, size], |k| {
        let (row, col) = (k / size, k % size);
        let u = 2.0 * (col as f64 + 0.5) / n - 1.0 - p.tx;
        let v = 2.0 * (row as f64 + 0.5) / n - 1.0 - p.ty;
        // q = R(-θ)(p - t)/s
        let q = [inv_s * (cos * u + sin * v), inv_s * (-sin * u + cos * v)];
        shade(q, &f.expression)
    })?;
    let (names, points, groups) = face_landmarks(&f.expression);
    let sim = p.pixel_similarity(size);
    let points: Vec<[f64; 2]> = points.into_iter().map(|q| sim.apply(q)).collect();
    let bbox = BBox::from_points(&points).expect("landmarks are non-empty");
    let landmarks = LandmarkSet::new(names, points, groups, bbox)?;
    let region_pad = REGION_SLACK * sim.scale + 0.5;
    let regions = [
        landmarks
            .group_box(&landmarks.groups.left_eye)?
            .dilate(region_pad),
        landmarks
            .group_box(&landmarks.groups.right_eye)?
            .dilate(region_pad),
        landmarks
            .group_box(&landmarks.groups.mouth)?
            .dilate(region_pad),
    ];
    Ok(ToyRender {
        image: Image::new(data)?,
        landmarks,
        region_pad,
        regions,
    })
}

/// Renders as diffusion data: pixel values mapped to `[-1, 1]`.
pub fn image_to_latent(img: &Image) -> Tensor {
    img.tensor().map(|v| 2.0 * v - 1.0)
}

pub fn latent_to_image(z: &Tensor) -> Result<Image> {
    Image::new(z.map(|v| (0.5 * (v + 1.0)).clamp(0.0, 1.0)))
}

/// Bucketing of one real-valued factor: values within half the smallest
/// spacing of a grid value (or `1e-9` for a one-value axis) fall into its
/// cell; anything else has no cell.
fn bucket(values: &[f64], x: f64) -> Option<usize> {
    let mut tol = 1e-9f64;
    if values.len() > 1 {
        let mut s = f64::INFINITY;
        for (i, a) in values.iter().enumerate() {
            for b in &values[i + 1..] {
                s = s.min((a - b).abs());
            }
        }
        tol = 0.5 * s;
    }
    let (i, d) = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, (v - x).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    (d < tol || d <= 1e-9).then_some(i)
}

/// Factor grid covered by a [`ToyLab`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGrid {
    pub thetas: Vec<f64>,
    pub txs: Vec<f64>,
    pub ty: f64,
    pub scale: f64,
    pub expressions: Vec<ToyExpression>,
}

impl Default for ToyGrid {
    /// 3 rotations × 3 horizontal offsets × 3 expressions.
    fn default() -> Self {
        Self {
            thetas: vec![-0.3, 0.0, 0.3],
            txs: vec![-0.15, 0.0, 0.15],
            ty: 0.0,
            scale: 1.0,
            expressions: vec![
                ToyExpression::neutral(),
                ToyExpression {
                    eye_open: 0.2,
                    mouth_curve: 0.9,
                },
                ToyExpression {
                    eye_open: 0.6,
                    mouth_curve: -0.9,
                },
            ],
        }
    }
}

impl ToyGrid {
    pub fn pose_cells(&self) -> usize {
        self.thetas.len() * self.txs.len()
    }

    pub fn pose(&self, cell: usize) -> ToyPose {
        ToyPose {
            theta: self.thetas[cell / self.txs.len()],
            tx: self.txs[cell % self.txs.len()],
            ty: self.ty,
            scale: self.scale,
        }
    }

    pub fn pose_cell(&self, p: &ToyPose) -> Result<usize> {
        let missing = || Error::Validation(format!("pose {p:?} is not in any grid cell"));
        let a = bucket(&self.thetas, p.theta).ok_or_else(missing)?;
        let b = bucket(&self.txs, p.tx).ok_or_else(missing)?;
        bucket(&[self.ty], p.ty).ok_or_else(missing)?;
        bucket(&[self.scale], p.scale).ok_or_else(missing)?;
        Ok(a * self.txs.len() + b)
    }

    pub fn expression_cell(&self, e: &ToyExpression) -> Result<usize> {
        let missing = || Error::Validation(format!("expression {e:?} is not in any grid cell"));
        let dist = |a: &ToyExpression, b: &ToyExpression| {
            ((a.eye_open - b.eye_open).powi(2) + (a.mouth_curve - b.mouth_curve).powi(2)).sqrt()
        };
        let dists: Vec<f64> = self.expressions.iter().map(|x| dist(x, e)).collect();
        let (i, d) = dists
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(missing)?;
        let mut spacing = f64::INFINITY;
        for (k, a) in self.expressions.iter().enumerate() {
            for b in &self.expressions[k + 1..] {
                spacing = spacing.min(dist(a, b));
            }
        }
        if d <= 1e-9 || d < 0.5 * spacing {
            Ok(i)
        } else {
            Err(missing())
        }
    }
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyItem {
    pub factors: ToyFactors,
    pub pose_cell: usize,
    pub expression_cell: usize,
    /// `[1, size, size]` in `[-1, 1]`.
    pub latent: Tensor,
}

/// Every grid combination rendered once.
#[derive(Debug, Clone)]
pub struct ToyLab {
    pub grid: ToyGrid,
    pub size: usize,
    pub items: Vec<ToyItem>,
}

impl ToyLab {
    pub fn new(grid: ToyGrid, size: usize) -> Result<Self> {
        if grid.thetas.is_empty() || grid.txs.is_empty() || grid.expressions.is_empty() {
            return Err(Error::invalid(
                "toy grid must have at least one value per factor",
            ));
        }
        let cells: Vec<(usize, usize)> = (0..grid.pose_cells())
            .flat_map(|p| (0..grid.expressions.len()).map(move |e| (p, e)))
            .collect();
        let items = cells
            .par_iter()
            .map(|&(pose_cell, expression_cell)| {
                let factors = ToyFactors {
                    pose: grid.pose(pose_cell),
                    expression: grid.expressions[expression_cell],
                };
                let r = render_face(&factors, size)?;
                Ok(ToyItem {
                    factors,
                    pose_cell,
                    expression_cell,
                    latent: image_to_latent(&r.image),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, size, items })
    }

    pub fn item_shape(&self) -> [usize; 3] {
        [1, self.size, self.size]
    }

    /// Condition set for reenacting `source` with the pose of `pose_drive`
    /// and, when given, the expression of `exp_drive`.
    pub fn condition(
        &self,
        source: &ToyFactors,
        pose_drive: &ToyFactors,
        exp_drive: Option<&ToyFactors>,
    ) -> Result<ConditionSet> {
        let src = source.pose.to_pose()?;
        let drv = pose_drive.pose.to_pose()?;
        let identity = image_to_latent(&render_face(source, self.size)?.image);
        Ok(ConditionSet {
            identity: Some(identity),
            pose: Some(PoseCondition {
                raymaps: raymap_pair(&src, &drv, self.size, self.size, RayMapMode::LiteralW0)?,
                source: src,
                driving: drv,
            }),
            expression: exp_drive.map(|e| e.expression.to_latent()),
        })
    }

    /// Index and RMS distance of the dataset item closest to `z`.
    pub fn nearest(&self, z: &Tensor) -> Result<(usize, f64)> {
        let mut best = (0, f64::INFINITY);
        for (i, item) in self.items.iter().enumerate() {
            let d = z.sub(&item.latent)?.squared_norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok((best.0, (best.1 / z.len() as f64).sqrt()))
    }
}

/// Exact noise predictor for the uniform distribution over a [`ToyLab`].
///
/// The pose slot keeps the items in the driving pose's grid cell, the
/// expression slot the items in the latent's expression cell; the identity
/// slot is ignored (every item shares one identity). An empty condition
/// uses the whole dataset.
pub struct OracleDenoiser<'a> {
    pub lab: &'a ToyLab,
    pub noise: &'a NoiseSchedule,
}

impl OracleDenoiser<'_> {
    pub fn filtered(&self, cond: &ConditionSet) -> Result<Vec<&ToyItem>> {
        let pose_cell = match &cond.pose {
            Some(p) => Some(self.lab.grid.pose_cell(&ToyPose::from_pose(&p.driving))?),
            None => None,
        };
        let exp_cell = match &cond.expression {
            Some(z) => Some(
                self.lab
                    .grid
                    .expression_cell(&ToyExpression::from_latent(z))?,
            ),
            None => None,
        };
        let items: Vec<&ToyItem> = self
            .lab
            .items
            .iter()
            .filter(|it| pose_cell.is_none_or(|c| it.pose_cell == c))
            .filter(|it| exp_cell.is_none_or(|c| it.expression_cell == c))
            .collect();
        if items.is_empty() {
            return Err(Error::Validation(
                "no dataset item matches the condition".into(),
            ));
        }
        Ok(items)
    }
}

/// Posterior mean `E[x0 | z_t]` and `ε̂ = (z_t − √ᾱ·x̄0)/√(1−ᾱ)` for data
/// uniform over `items`.
pub fn oracle_epsilon(
    z_t: &Tensor,
    items: &[&Tensor],
    t: usize,
    noise: &NoiseSchedule,
) -> Result<Tensor> {
    if items.is_empty() {
        return Err(Error::Validation("oracle dataset is empty".into()));
    }
    let ab = noise.alpha_bar(t)?;
    if ab >= 1.0 {
        return Err(Error::invalid("the oracle needs t > 0"));
    }
    let (sa, var) = (ab.sqrt(), 1.0 - ab);
    let logits: Vec<f64> = items
        .iter()
        .map(|x| {
            z_t.expect_same_shape(x)?;
            let d: f64 = z_t
                .data()
                .iter()
                .zip(x.data())
                .map(|(z, x)| (z - sa * x) * (z - sa * x))
                .sum();
            Ok(-d / (2.0 * var))
        })
        .collect::<Result<_>>()?;
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut mean = vec![0.0; z_t.len()];
    for (x, wi) in items.iter().zip(&w) {
        let wi = wi / total;
        for (m, v) in mean.iter_mut().zip(x.data()) {
            *m += wi * v;
        }
    }
    let sb = var.sqrt();
    Tensor::from_fn(z_t.shape(), |k| (z_t.data()[k] - sa * mean[k]) / sb)
}

impl Denoiser for OracleDenoiser<'_> {
    fn predict(&self, z_t: &Tensor, cond: &ConditionSet, t: usize) -> Result<Tensor> {
        let items = self.filtered(cond)?;
        let latents: Vec<&Tensor> = items.iter().map(|it| &it.latent).collect();
        oracle_epsilon(z_t, &latents, t, self.noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingReport {
    pub seed: u64,
    pub target_pose_cell: usize,
    pub target_expression_cell: usize,
    pub nearest_index: usize,
    pub nearest: ToyFactors,
    /// RMS distance to the nearest item, in latent units.
    pub nearest_distance: f64,
    /// RMS distance to the item of the target cell.
    pub target_distance: f64,
    pub correct: bool,
}

/// Reenacts `source` with the pose of `pose_drive` and the expression of
/// `exp_drive` by sampling the oracle with progressive hybrid guidance.
pub fn run_disentangled_sampling(
    lab: &ToyLab,
    source: &ToyFactors,
    pose_drive: &ToyFactors,
    exp_drive: &ToyFactors,
    sched: &CfgSchedule,
    noise: &NoiseSchedule,
    seed: u64,
) -> Result<(Image, SamplingReport)> {
    let target_pose_cell = lab.grid.pose_cell(&pose_drive.pose)?;
    let target_expression_cell = lab.grid.expression_cell(&exp_drive.expression)?;
    let cond = lab.condition(source, pose_drive, Some(exp_drive))?;
    let oracle = OracleDenoiser { lab, noise };
    let z = sample(
        &oracle,
        &cond,
        sched,
        noise,
        &lab.item_shape(),
        &mut Rng::new(seed),
        GuidanceMode::Progressive,
        0.0,
    )?;
    let (nearest_index, nearest_distance) = lab.nearest(&z)?;
    let target = lab
        .items
        .iter()
        .find(|it| it.pose_cell == target_pose_cell && it.expression_cell == target_expression_cell)
        .ok_or_else(|| Error::Validation("target grid cell has no render".into()))?;
    let target_distance = (z.sub(&target.latent)?.squared_norm() / z.len() as f64).sqrt();
    let hit = &lab.items[nearest_index];
    let report = SamplingReport {
        seed,
        target_pose_cell,
        target_expression_cell,
        nearest_index,
        nearest: hit.factors,
        nearest_distance,
        target_distance,
        correct: hit.pose_cell == target_pose_cell && hit.expression_cell == target_expression_cell,
    };
    Ok((latent_to_image(&z)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub runs: usize,
    pub correct: usize,
    pub fraction: f64,
    pub reports: Vec<SamplingReport>,
}

/// Inputs of one experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentRun {
    pub source: ToyFactors,
    pub pose_drive: ToyFactors,
    pub exp_drive: ToyFactors,
    pub seed: u64,
}

/// Run `index` of the experiment seeded with `seed`: source, pose driver and
/// expression driver drawn uniformly from the dataset, plus a sampling seed.
pub fn experiment_run(lab: &ToyLab, seed: u64, index: usize) -> ExperimentRun {
    let mut rng = Rng::new(seed).fork(index as u64);
    let mut pick = || lab.items[rng.below(lab.items.len())].factors;
    let (source, pose_drive, exp_drive) = (pick(), pick(), pick());
    ExperimentRun {
        source,
        pose_drive,
        exp_drive,
        seed: rng.next_u64(),
    }
}

/// `runs` disentangled reenactments with independently drawn source, pose
/// driver and expression driver. Run `i` uses only streams derived from
/// `(seed, i)`, so the result does not depend on scheduling.
pub fn run_experiment(
    lab: &ToyLab,
    runs: usize,
    seed: u64,
    sched: &CfgSchedule,
    noise: &NoiseSchedule,
) -> Result<ExperimentReport> {
    let reports = (0..runs)
        .into_par_iter()
        .map(|i| {
            let run = experiment_run(lab, seed, i);
            run_disentangled_sampling(
                lab,
                &run.source,
                &run.pose_drive,
                &run.exp_drive,
                sched,
                noise,
                run.seed,
            )
            .map(|(_, r)| r)
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = reports.iter().filter(|r| r.correct).count();
    Ok(ExperimentReport {
        runs,
        correct,
        fraction: if runs == 0 {
            0.0
        } else {
            correct as f64 / runs as f64
        },
        reports,
    })
}
