//! Diffusion machinery: forward noising, DDIM stepping, classifier-free
//! guidance and the progressive hybrid guidance schedule.
//!
//! Two timestep notions appear here. The *noise-schedule timestep* `t` in
//! `0..=T` indexes `ᾱ_t` (with `ᾱ_0 = 1`). The *sampling step* `k` counts
//! remaining DDIM steps, from `total_steps` (first, noisiest) down to `1`;
//! step `k` maps to timestep `τ(k)`, uniformly spaced over `[1, T]` with
//! `τ(total_steps) = T`, and moves the latent to `τ(k − 1)` where `τ(0) = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conditioning::ExpressionLatent;
use crate::error::{Error, Result};
use crate::numerics::{randn, Rng, Tensor};
use crate::pose::PoseRTS;

/// `ᾱ` table for a discrete forward process.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// `alpha_bar[t]` for `t in 0..=T`; `alpha_bar[0] = 1`.
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("noise schedule needs at least one beta"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::invalid(format!(
                "betas must lie in (0, 1), found {b}"
            )));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        for b in &betas {
            let last = *alpha_bar.last().unwrap();
            alpha_bar.push(last * (1.0 - b));
        }
        Ok(Self { betas, alpha_bar })
    }

    /// Betas linear in `[start, end]`.
    pub fn linear(steps: usize, start: f64, end: f64) -> Result<Self> {
        Self::from_betas(linspace(start, end, steps))
    }

    /// Betas whose square roots are linear in `[√start, √end]`.
    pub fn scaled_linear(steps: usize, start: f64, end: f64) -> Result<Self> {
        Self::from_betas(
            linspace(start.sqrt(), end.sqrt(), steps)
                .into_iter()
                .map(|b| b * b)
                .collect(),
        )
    }

    /// Number of training timesteps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| Error::invalid(format!("timestep {t} outside [0, {}]", self.steps())))
    }
}

impl Default for NoiseSchedule {
    /// 1000 steps, scaled-linear betas from 0.00085 to 0.012.
    fn default() -> Self {
        Self::scaled_linear(1000, 0.00085, 0.012).expect("default schedule is valid")
    }
}

fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Pose conditioning: stacked source/driving ray maps plus the poses that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseCondition {
    pub raymaps: Tensor,
    pub source: PoseRTS,
    pub driving: PoseRTS,
}

impl PoseCondition {
    pub fn relative(&self) -> PoseRTS {
        PoseRTS::relative(&self.source, &self.driving)
    }
}

/// Identity, pose and expression slots; `None` is the null condition ∅.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditionSet {
    /// Reference payload, opaque to the sampler.
    pub identity: Option<Tensor>,
    pub pose: Option<PoseCondition>,
    pub expression: Option<ExpressionLatent>,
}

impl ConditionSet {
    /// ∅: every slot empty.
    pub fn empty() -> Self {
        Self::default()
    }

    /// `c|exp`: the same set with the expression slot cleared.
    pub fn without_expression(&self) -> Self {
        Self {
            expression: None,
            ..self.clone()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.identity.is_none() && self.pose.is_none() && self.expression.is_none()
    }
}

/// Noise predictor `ε̂(z_t, c; t)`. Implementations must be deterministic.
pub trait Denoiser {
    /// `t` is the noise-schedule timestep.
    fn predict(&self, z_t: &Tensor, cond: &ConditionSet, t: usize) -> Result<Tensor>;
}

impl<F> Denoiser for F
where
    F: Fn(&Tensor, &ConditionSet, usize) -> Result<Tensor>,
{
    fn predict(&self, z_t: &Tensor, cond: &ConditionSet, t: usize) -> Result<Tensor> {
        self(z_t, cond, t)
    }
}

/// Progressive hybrid guidance schedule.
///
/// The first `hold_steps` sampling steps exclude the expression condition,
/// the next `ramp_steps` blend it in linearly, and the final `full_steps`
/// use every condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfgSchedule {
    pub total_steps: usize,
    pub hold_steps: usize,
    pub ramp_steps: usize,
    pub full_steps: usize,
    pub guidance_scale: f64,
}

impl Default for CfgSchedule {
    fn default() -> Self {
        Self {
            total_steps: 35,
            hold_steps: 5,
            ramp_steps: 5,
            full_steps: 25,
            guidance_scale: 2.5,
        }
    }
}

impl CfgSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Validation("total_steps must be positive".into()));
        }
        if self.hold_steps + self.ramp_steps + self.full_steps != self.total_steps {
            return Err(Error::Validation(format!(
                "hold ({}) + ramp ({}) + full ({}) must equal total ({})",
                self.hold_steps, self.ramp_steps, self.full_steps, self.total_steps
            )));
        }
        if !self.guidance_scale.is_finite() {
            return Err(Error::Validation("guidance_scale must be finite".into()));
        }
        Ok(())
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if step == 0 || step > self.total_steps {
            return Err(Error::invalid(format!(
                "sampling step {step} outside [1, {}]",
                self.total_steps
            )));
        }
        Ok(())
    }

    /// `(w_excl, w_full)`: weights on the `c|exp` and full-`c` estimates at
    /// sampling step `step` (counting down from `total_steps`).
    pub fn blend_weights(&self, step: usize) -> Result<(f64, f64)> {
        self.check_step(step)?;
        let hold_edge = self.total_steps - self.hold_steps;
        let ramp_edge = hold_edge - self.ramp_steps;
        Ok(if step > hold_edge {
            (1.0, 0.0)
        } else if step > ramp_edge {
            let r = self.ramp_steps as f64;
            ((step - ramp_edge) as f64 / r, (hold_edge - step) as f64 / r)
        } else {
            (0.0, 1.0)
        })
    }

    /// Noise-schedule timestep `τ(step)`; `τ(0) = 0`.
    pub fn timestep(&self, step: usize, noise: &NoiseSchedule) -> Result<usize> {
        if step > self.total_steps {
            return Err(Error::invalid(format!(
                "sampling step {step} outside [0, {}]",
                self.total_steps
            )));
        }
        if step == 0 {
            return Ok(0);
        }
        let big_t = noise.steps();
        if self.total_steps == 1 {
            return Ok(big_t);
        }
        let frac = (step - 1) as f64 / (self.total_steps - 1) as f64;
        Ok(1 + (frac * (big_t - 1) as f64).round() as usize)
    }

    /// `(step, w_excl, w_full)` rows from `total_steps` down to 1.
    pub fn table(&self) -> Result<Vec<(usize, f64, f64)>> {
        (1..=self.total_steps)
            .rev()
            .map(|k| self.blend_weights(k).map(|(a, b)| (k, a, b)))
            .collect()
    }
}

/// Renders the schedule table as whitespace-separated text.
pub fn format_schedule_table(rows: &[(usize, f64, f64)]) -> String {
    let mut s = String::from("t\tw_excl\tw_full\n");
    for (t, a, b) in rows {
        s.push_str(&format!("{t}\t{a:.3}\t{b:.3}\n"));
    }
    s
}

/// `z_t = √ᾱ_t·z0 + √(1−ᾱ_t)·ε` with fresh `ε ~ N(0, I)`; returns `(z_t, ε)`.
pub fn forward_noise(
    z0: &Tensor,
    t: usize,
    noise: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<(Tensor, Tensor)> {
    let ab = noise.alpha_bar(t)?;
    let eps = randn(rng, z0.shape())?;
    if ab == 1.0 {
        return Ok((z0.clone(), eps));
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let zt = z0.zip_map(&eps, |x, e| a * x + b * e)?;
    Ok((zt, eps))
}

/// `ω·cond + (1−ω)·uncond`.
pub fn combine_guidance(cond: &Tensor, uncond: &Tensor, omega: f64) -> Result<Tensor> {
    cond.zip_map(uncond, |c, u| omega * c + (1.0 - omega) * u)
}

/// Classifier-free guidance: `ω·ε̂(z_t, c; t) + (1−ω)·ε̂(z_t, ∅; t)`.
pub fn cfg_estimate<D: Denoiser + ?Sized>(
    z_t: &Tensor,
    cond: &ConditionSet,
    t: usize,
    omega: f64,
    denoiser: &D,
) -> Result<Tensor> {
    let c = denoiser.predict(z_t, cond, t)?;
    let u = denoiser.predict(z_t, &ConditionSet::empty(), t)?;
    combine_guidance(&c, &u, omega)
}

/// Progressive hybrid guidance at sampling step `step`.
///
/// When `cond` carries no expression, `c|exp == c` and the standard
/// estimate is returned for every step.
pub fn progressive_cfg_estimate<D: Denoiser + ?Sized>(
    z_t: &Tensor,
    cond: &ConditionSet,
    step: usize,
    sched: &CfgSchedule,
    noise: &NoiseSchedule,
    denoiser: &D,
) -> Result<Tensor> {
    let (w_excl, w_full) = sched.blend_weights(step)?;
    let t = sched.timestep(step, noise)?;
    let omega = sched.guidance_scale;
    if cond.expression.is_none() {
        return cfg_estimate(z_t, cond, t, omega, denoiser);
    }
    let uncond = denoiser.predict(z_t, &ConditionSet::empty(), t)?;
    let guided = |c: &ConditionSet| -> Result<Tensor> {
        combine_guidance(&denoiser.predict(z_t, c, t)?, &uncond, omega)
    };
    if w_full == 0.0 {
        guided(&cond.without_expression())
    } else if w_excl == 0.0 {
        guided(cond)
    } else {
        let excl = guided(&cond.without_expression())?;
        let full = guided(cond)?;
        excl.zip_map(&full, |a, b| a * w_excl + b * w_full)
    }
}

/// One DDIM update from timestep `t` to `t_prev`.
///
/// `x̂0 = (z_t − √(1−ᾱ_t)·ε̂)/√ᾱ_t`, then
/// `z_prev = √ᾱ_prev·x̂0 + √(1−ᾱ_prev−σ²)·ε̂ + σ·ξ` with
/// `σ = η·√((1−ᾱ_prev)/(1−ᾱ_t))·√(1−ᾱ_t/ᾱ_prev)`. `rng` is only drawn from
/// when `σ > 0`.
pub fn ddim_step(
    z_t: &Tensor,
    eps: &Tensor,
    t: usize,
    t_prev: usize,
    noise: &NoiseSchedule,
    eta: f64,
    rng: &mut Rng,
) -> Result<Tensor> {
    if t_prev > t {
        return Err(Error::invalid(format!(
            "DDIM step must go backwards in time, got t={t}, t_prev={t_prev}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("eta must lie in [0, 1], got {eta}")));
    }
    z_t.expect_same_shape(eps)?;
    let ab_t = noise.alpha_bar(t)?;
    let ab_prev = noise.alpha_bar(t_prev)?;
    if t_prev == t {
        return Ok(z_t.clone());
    }
    let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_prev).sqrt();
    let (sa_t, sb_t) = (ab_t.sqrt(), (1.0 - ab_t).sqrt());
    let sa_prev = ab_prev.sqrt();
    let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let x0 = z_t.zip_map(eps, |z, e| (z - sb_t * e) / sa_t)?;
    let mut out = x0.zip_map(eps, |x, e| sa_prev * x + dir * e)?;
    if sigma > 0.0 {
        for o in out.data_mut() {
            *o += sigma * rng.normal();
        }
    }
    Ok(out)
}

/// Guidance estimator used by [`sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GuidanceMode {
    /// Plain CFG with every condition at every step.
    #[serde(rename = "cfg")]
    Standard,
    #[default]
    #[serde(rename = "progressive")]
    Progressive,
}

impl FromStr for GuidanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cfg" | "standard" => Ok(GuidanceMode::Standard),
            "progressive" => Ok(GuidanceMode::Progressive),
            other => Err(Error::invalid(format!("unknown guidance mode {other:?}"))),
        }
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidanceMode::Standard => "cfg",
            GuidanceMode::Progressive => "progressive",
        })
    }
}

/// Runs the full reverse process from `z ~ N(0, I)`.
#[allow(clippy::too_many_arguments)]
pub fn sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    cond: &ConditionSet,
    sched: &CfgSchedule,
    noise: &NoiseSchedule,
    shape: &[usize],
    rng: &mut Rng,
    mode: GuidanceMode,
    eta: f64,
) -> Result<Tensor> {
    sched.validate()?;
    let mut z = randn(rng, shape)?;
    for step in (1..=sched.total_steps).rev() {
        let t = sched.timestep(step, noise)?;
        let t_prev = sched.timestep(step - 1, noise)?;
        let eps = match mode {
            GuidanceMode::Standard => cfg_estimate(&z, cond, t, sched.guidance_scale, denoiser)?,
            GuidanceMode::Progressive => {
                progressive_cfg_estimate(&z, cond, step, sched, noise, denoiser)?
            }
        };
        z = ddim_step(&z, &eps, t, t_prev, noise, eta, rng)?;
    }
    Ok(z)
}
