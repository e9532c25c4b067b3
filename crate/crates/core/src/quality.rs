//! Motion-trainer losses and evaluation metrics.
//!
//! The perceptual terms go through a [`PerceptualFeatureExtractor`]; the
//! default [`RandomProjectionPyramid`] is a seeded stand-in for pretrained
//! VGG features. APD and AED are landmark metrics built on 2D similarity
//! Procrustes fits; their exact form is this crate's definition, documented
//! on each function.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::landmarks::{LandmarkSet, Similarity2};
use crate::numerics::{gaussian_window, Rng, Tensor};
use crate::raster::Image;

/// Maps an image to `N ≥ 1` feature tensors `[C_i, H_i, W_i]`.
pub trait PerceptualFeatureExtractor {
    fn name(&self) -> String;
    fn features(&self, img: &Image) -> Result<Vec<Tensor>>;
}

/// Seeded multi-scale random projections.
///
/// Level `i` average-pools the image `i` times by 2, applies a zero-padded
/// 3×3 convolution with `channels` Gaussian-random filters (fixed by the
/// seed, the level and the input channel count) and a `tanh`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomProjectionPyramid {
    pub seed: u64,
    pub levels: usize,
    pub channels: usize,
}

impl Default for RandomProjectionPyramid {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            levels: 3,
            channels: 8,
        }
    }
}

fn avg_pool2(x: &Tensor) -> Result<Tensor> {
    let [c, h, w]: [usize; 3] = x
        .shape()
        .try_into()
        .map_err(|_| Error::shape("expected [C, H, W]"))?;
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::shape(format!("{h}x{w} is too small to pool")));
    }
    let d = x.data();
    Tensor::from_fn(&[c, oh, ow], |k| {
        let (ch, r, q) = (k / (oh * ow), (k / ow) % oh, k % ow);
        let at = |rr: usize, qq: usize| d[(ch * h + rr) * w + qq];
        0.25 * (at(2 * r, 2 * q)
            + at(2 * r, 2 * q + 1)
            + at(2 * r + 1, 2 * q)
            + at(2 * r + 1, 2 * q + 1))
    })
}

fn conv3x3(x: &Tensor, weights: &[f64], out_channels: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let d = x.data();
    let mut out = vec![0.0; out_channels * h * w];
    for o in 0..out_channels {
        for r in 0..h {
            for q in 0..w {
                let mut acc = 0.0;
                for ci in 0..c {
                    for dr in 0..3 {
                        let rr = r as isize + dr as isize - 1;
                        if rr < 0 || rr >= h as isize {
                            continue;
                        }
                        for dq in 0..3 {
                            let qq = q as isize + dq as isize - 1;
                            if qq < 0 || qq >= w as isize {
                                continue;
                            }
                            acc += weights[((o * c + ci) * 3 + dr) * 3 + dq]
                                * d[(ci * h + rr as usize) * w + qq as usize];
                        }
                    }
                }
                out[(o * h + r) * w + q] = acc.tanh();
            }
        }
    }
    Tensor::new(vec![out_channels, h, w], out).expect("conv output shape")
}

impl PerceptualFeatureExtractor for RandomProjectionPyramid {
    fn name(&self) -> String {
        format!(
            "random-projection-pyramid(seed={}, levels={}, channels={})",
            self.seed, self.levels, self.channels
        )
    }

    fn features(&self, img: &Image) -> Result<Vec<Tensor>> {
        if self.levels == 0 || self.channels == 0 {
            return Err(Error::invalid(
                "extractor needs at least one level and channel",
            ));
        }
        let c = img.channels();
        let mut level_input = img.tensor().clone();
        let mut feats = Vec::with_capacity(self.levels);
        for level in 0..self.levels {
            if level > 0 {
                level_input = avg_pool2(&level_input)?;
            }
            let mut rng = Rng::new(self.seed).fork(((level as u64) << 16) | c as u64);
            let std = 1.0 / ((9 * c) as f64).sqrt();
            let weights: Vec<f64> = (0..self.channels * c * 9)
                .map(|_| std * rng.normal())
                .collect();
            feats.push(conv3x3(&level_input, &weights, self.channels));
        }
        Ok(feats)
    }
}

/// Facial mask `[1, H, W]`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMask(Tensor);

impl FaceMask {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 3 || data.shape()[0] != 1 {
            return Err(Error::shape(format!(
                "mask must be [1, H, W], got {:?}",
                data.shape()
            )));
        }
        if let Some(i) = data.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation(format!(
                "mask value at {i} is outside [0, 1]"
            )));
        }
        Ok(Self(data))
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::new(Tensor::full(&[1, height, width], 1.0)?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    /// Area-average downsampling to `(height, width)`.
    pub fn resized(&self, height: usize, width: usize) -> Result<Tensor> {
        let (h, w) = (self.0.shape()[1], self.0.shape()[2]);
        if height > h || width > w {
            return Err(Error::shape(format!(
                "cannot downsample a {h}x{w} mask to {height}x{width}"
            )));
        }
        let d = self.0.data();
        Tensor::from_fn(&[1, height, width], |k| {
            let (r, q) = (k / width, k % width);
            let (r0, r1) = (r * h / height, (r + 1) * h / height);
            let (q0, q1) = (q * w / width, (q + 1) * w / width);
            let mut acc = 0.0;
            for rr in r0..r1 {
                for qq in q0..q1 {
                    acc += d[rr * w + qq];
                }
            }
            acc / ((r1 - r0) * (q1 - q0)) as f64
        })
    }
}

/// Mean absolute difference.
pub fn l1_loss(pred: &Image, gt: &Image) -> Result<f64> {
    pred.same_size(gt)?;
    Ok(pred
        .tensor()
        .data()
        .iter()
        .zip(gt.tensor().data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / pred.tensor().len() as f64)
}

/// `Σ_i mean((M_i ⊙ (f_i(pred) − f_i(gt)))²)`; the mask (when given) is
/// area-downsampled to each feature resolution and broadcast over channels.
pub fn perceptual_distance(
    pred: &Image,
    gt: &Image,
    fx: &dyn PerceptualFeatureExtractor,
    mask: Option<&FaceMask>,
) -> Result<f64> {
    pred.same_size(gt)?;
    if let Some(m) = mask {
        let s = m.tensor().shape();
        if s[1] != pred.height() || s[2] != pred.width() {
            return Err(Error::shape(format!(
                "mask is {}x{}, images are {}x{}",
                s[1],
                s[2],
                pred.height(),
                pred.width()
            )));
        }
    }
    let fa = fx.features(pred)?;
    let fb = fx.features(gt)?;
    let mut total = 0.0;
    for (a, b) in fa.iter().zip(&fb) {
        a.expect_same_shape(b)?;
        let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
        let m = mask.map(|m| m.resized(h, w)).transpose()?;
        let plane = h * w;
        let mut acc = 0.0;
        for k in 0..a.len() {
            let mut d = a.data()[k] - b.data()[k];
            if let Some(m) = &m {
                d *= m.data()[k % plane];
            }
            acc += d * d;
        }
        total += acc / (c * plane) as f64;
    }
    Ok(total)
}

/// `softplus(−d) = ln(1 + e^{−d})`, evaluated as `max(x, 0) + ln(1 + e^{−|x|})`.
pub fn adversarial_softplus(d_out: f64) -> f64 {
    let x = -d_out;
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub reconstruction: f64,
    pub lpips: f64,
    pub component_lpips: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            reconstruction: 10.0,
            lpips: 1.0,
            component_lpips: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub lpips: f64,
    pub component_lpips: f64,
    pub adversarial: f64,
    pub total: f64,
}

/// `λ_r·L1 + λ_lpips·L_lpips + λ_clpips·L_clpips + L_adv`. Passing
/// `d_out = None` drops the adversarial term.
pub fn total_loss(
    pred: &Image,
    gt: &Image,
    mask: &FaceMask,
    fx: &dyn PerceptualFeatureExtractor,
    d_out: Option<f64>,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let l1 = l1_loss(pred, gt)?;
    let lpips = perceptual_distance(pred, gt, fx, None)?;
    let component_lpips = perceptual_distance(pred, gt, fx, Some(mask))?;
    let adversarial = d_out.map(adversarial_softplus).unwrap_or(0.0);
    let total = weights.reconstruction * l1
        + weights.lpips * lpips
        + weights.component_lpips * component_lpips
        + adversarial;
    Ok(LossBreakdown {
        l1,
        lpips,
        component_lpips,
        adversarial,
        total,
    })
}

pub fn mse(pred: &Image, gt: &Image) -> Result<f64> {
    pred.same_size(gt)?;
    Ok(pred
        .tensor()
        .data()
        .iter()
        .zip(gt.tensor().data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.tensor().len() as f64)
}

/// `10·log10(peak²/MSE)`; identical images give `+∞`.
pub fn psnr(pred: &Image, gt: &Image, peak: f64) -> Result<f64> {
    let m = mse(pred, gt)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Serializes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean SSIM over every valid 11×11 Gaussian-window (σ = 1.5) position and
/// channel, with `K1 = 0.01`, `K2 = 0.03` and peak 1.
pub fn ssim(pred: &Image, gt: &Image) -> Result<f64> {
    pred.same_size(gt)?;
    let (c, h, w) = (pred.channels(), pred.height(), pred.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let win = gaussian_window(SSIM_WINDOW, SSIM_SIGMA)?;
    let wd = win.data();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..c {
        let x = &pred.tensor().data()[ch * h * w..][..h * w];
        let y = &gt.tensor().data()[ch * h * w..][..h * w];
        for r in 0..oh {
            for q in 0..ow {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let g = wd[i * SSIM_WINDOW + j];
                        let a = x[(r + i) * w + q + j];
                        let b = y[(r + i) * w + q + j];
                        mx += g * a;
                        my += g * b;
                        xx += g * a * a;
                        yy += g * b * b;
                        xy += g * a * b;
                    }
                }
                let sx = xx - mx * mx;
                let sy = yy - my * my;
                let sxy = xy - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
                    / ((mx * mx + my * my + c1) * (sx + sy + c2));
            }
        }
    }
    Ok(total / (c * oh * ow) as f64)
}

/// Least-squares similarity taking `template` points onto `target` points
/// (paired by index).
pub fn fit_similarity(template: &[[f64; 2]], target: &[[f64; 2]]) -> Result<Similarity2> {
    if template.len() != target.len() {
        return Err(Error::AxisMismatch {
            axis: "landmark pairs",
            expected: template.len(),
            actual: target.len(),
        });
    }
    if template.len() < 3 {
        return Err(Error::invalid(format!(
            "at least 3 common landmarks are required, got {}",
            template.len()
        )));
    }
    let n = template.len() as f64;
    let centroid = |pts: &[[f64; 2]]| {
        let s = pts
            .iter()
            .fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    };
    let (qc, pc) = (centroid(template), centroid(target));
    let (mut a, mut b, mut qq) = (0.0, 0.0, 0.0);
    for (q, p) in template.iter().zip(target) {
        let (qx, qy) = (q[0] - qc[0], q[1] - qc[1]);
        let (px, py) = (p[0] - pc[0], p[1] - pc[1]);
        a += qx * px + qy * py;
        b += qx * py - qy * px;
        qq += qx * qx + qy * qy;
    }
    if qq == 0.0 {
        return Err(Error::invalid("template landmarks are all coincident"));
    }
    let theta = b.atan2(a);
    let scale = (a * a + b * b).sqrt() / qq;
    let (s, c) = theta.sin_cos();
    Ok(Similarity2 {
        scale,
        theta,
        translation: [
            pc[0] - scale * (c * qc[0] - s * qc[1]),
            pc[1] - scale * (s * qc[0] + c * qc[1]),
        ],
    })
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Weights on the three APD terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApdWeights {
    pub rotation: f64,
    pub translation: f64,
    pub log_scale: f64,
}

impl Default for ApdWeights {
    fn default() -> Self {
        Self {
            rotation: 1.0,
            translation: 1.0,
            log_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApdBreakdown {
    /// `|θ_p − θ_d|`, radians, wrapped to `[0, π]`.
    pub rotation: f64,
    /// `‖t_p − t_d‖`, pixels.
    pub translation: f64,
    /// `|ln(s_p / s_d)|`.
    pub log_scale: f64,
    pub total: f64,
}

/// Average pose distance.
///
/// Both sets are fit (similarity Procrustes over the landmarks they share by
/// name) to a canonical template, centered at the origin; the template
/// defaults to the driving set itself. The fitted translation is then the
/// set's centroid, the rotation and scale are relative to the template. The result is the weighted sum of the rotation, translation and
/// log-scale differences between the two fits.
pub fn apd(
    pred: &LandmarkSet,
    drive: &LandmarkSet,
    template: Option<&LandmarkSet>,
    weights: &ApdWeights,
) -> Result<ApdBreakdown> {
    let template = template.unwrap_or(drive);
    // both fits use the landmarks present in all three sets
    let names: Vec<&String> = template
        .names()
        .iter()
        .filter(|n| pred.get(n).is_some() && drive.get(n).is_some())
        .collect();
    if names.len() < 3 {
        return Err(Error::invalid(format!(
            "at least 3 common landmarks are required, got {}",
            names.len()
        )));
    }
    let pick = |set: &LandmarkSet| -> Vec<[f64; 2]> {
        names.iter().map(|n| set.get(n).unwrap()).collect()
    };
    // centered template, so the fitted translation is the set's centroid
    let mut tpl = pick(template);
    let n = tpl.len() as f64;
    let c = tpl
        .iter()
        .fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    for p in &mut tpl {
        p[0] -= c[0];
        p[1] -= c[1];
    }
    let fp = fit_similarity(&tpl, &pick(pred))?;
    let fd = fit_similarity(&tpl, &pick(drive))?;
    let rotation = wrap_angle(fp.theta - fd.theta).abs();
    let translation = ((fp.translation[0] - fd.translation[0]).powi(2)
        + (fp.translation[1] - fd.translation[1]).powi(2))
    .sqrt();
    let log_scale = (fp.scale / fd.scale).ln().abs();
    Ok(ApdBreakdown {
        rotation,
        translation,
        log_scale,
        total: weights.rotation * rotation
            + weights.translation * translation
            + weights.log_scale * log_scale,
    })
}

/// Centers the points and scales them to unit RMS radius.
fn standardize(pts: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let n = pts.len() as f64;
    let c = pts
        .iter()
        .fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let centered: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect();
    let rms = (centered
        .iter()
        .map(|p| p[0] * p[0] + p[1] * p[1])
        .sum::<f64>()
        / n)
        .sqrt();
    if rms == 0.0 {
        return Err(Error::invalid("landmarks are all coincident"));
    }
    Ok(centered.iter().map(|p| [p[0] / rms, p[1] / rms]).collect())
}

/// Average expression distance: mean landmark L2 distance after removing
/// the similarity transform.
///
/// Without a template both sets are standardized (centroid 0, unit RMS
/// radius) and `pred` is optimally rotated onto `exp`, so the result is in
/// units of the face's RMS radius and symmetric in its arguments. With a
/// template, each set is mapped into the template frame through the inverse
/// of its own Procrustes fit and the distance is in template units.
pub fn aed(pred: &LandmarkSet, exp: &LandmarkSet, template: Option<&LandmarkSet>) -> Result<f64> {
    let names: Vec<&String> = pred
        .names()
        .iter()
        .filter(|n| exp.get(n).is_some() && template.is_none_or(|t| t.get(n).is_some()))
        .collect();
    if names.len() < 3 {
        return Err(Error::invalid(format!(
            "at least 3 common landmarks are required, got {}",
            names.len()
        )));
    }
    let pick = |set: &LandmarkSet| -> Vec<[f64; 2]> {
        names.iter().map(|n| set.get(n).unwrap()).collect()
    };
    let (a, b) = match template {
        Some(t) => {
            let tpl = pick(t);
            let to_template = |pts: Vec<[f64; 2]>| -> Result<Vec<[f64; 2]>> {
                let f = fit_similarity(&tpl, &pts)?;
                let inv = Similarity2 {
                    scale: 1.0 / f.scale,
                    theta: -f.theta,
                    translation: [0.0, 0.0],
                };
                Ok(pts
                    .iter()
                    .map(|p| inv.apply([p[0] - f.translation[0], p[1] - f.translation[1]]))
                    .collect())
            };
            (to_template(pick(pred))?, to_template(pick(exp))?)
        }
        None => {
            let a = standardize(&pick(pred))?;
            let b = standardize(&pick(exp))?;
            // optimal rotation of a onto b
            let (mut s_cos, mut s_sin) = (0.0, 0.0);
            for (p, q) in a.iter().zip(&b) {
                s_cos += p[0] * q[0] + p[1] * q[1];
                s_sin += p[0] * q[1] - p[1] * q[0];
            }
            let rot = Similarity2 {
                scale: 1.0,
                theta: s_sin.atan2(s_cos),
                translation: [0.0, 0.0],
            };
            (a.iter().map(|&p| rot.apply(p)).collect(), b)
        }
    };
    Ok(a.iter()
        .zip(&b)
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .sum::<f64>()
        / a.len() as f64)
}
