//! Run configuration with the published defaults.

use serde::{Deserialize, Serialize};

use crate::augment::{DEFAULT_CROP_MARGIN, DEFAULT_MAX_ROTATION_DEGREES, EXPRESSION_CROP_SIZE};
use crate::error::{Error, Result};
use crate::numerics::OutOfBounds;
use crate::quality::{ApdWeights, LossWeights};
use crate::raymap::RayMapMode;
use crate::sampler::{CfgSchedule, GuidanceMode};

/// How warps and rotations fill samples that fall outside the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FillPolicy {
    Constant { value: f64 },
    Border,
}

impl Default for FillPolicy {
    fn default() -> Self {
        FillPolicy::Constant { value: 0.0 }
    }
}

impl From<FillPolicy> for OutOfBounds {
    fn from(f: FillPolicy) -> Self {
        match f {
            FillPolicy::Constant { value } => OutOfBounds::Constant(value),
            FillPolicy::Border => OutOfBounds::Border,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// ω in `ω·ε(c) + (1−ω)·ε(∅)`.
    pub guidance_scale: f64,
    pub schedule: CfgSchedule,
    pub guidance: GuidanceMode,
    /// DDIM stochasticity.
    pub eta: f64,
    pub raymap_mode: RayMapMode,
    pub warp_fill: FillPolicy,
    pub crop_size: usize,
    pub crop_margin: f64,
    pub max_rotation_degrees: f64,
    pub loss_weights: LossWeights,
    pub apd_weights: ApdWeights,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        let schedule = CfgSchedule::default();
        Self {
            guidance_scale: schedule.guidance_scale,
            schedule,
            guidance: GuidanceMode::default(),
            eta: 0.0,
            raymap_mode: RayMapMode::default(),
            warp_fill: FillPolicy::default(),
            crop_size: EXPRESSION_CROP_SIZE,
            crop_margin: DEFAULT_CROP_MARGIN,
            max_rotation_degrees: DEFAULT_MAX_ROTATION_DEGREES,
            loss_weights: LossWeights::default(),
            apd_weights: ApdWeights::default(),
            seed: 0,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Config =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The guidance schedule with this config's ω.
    pub fn cfg_schedule(&self) -> CfgSchedule {
        CfgSchedule {
            guidance_scale: self.guidance_scale,
            ..self.schedule
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !self.guidance_scale.is_finite() {
            return bad(format!(
                "guidance_scale must be finite, got {}",
                self.guidance_scale
            ));
        }
        self.cfg_schedule().validate()?;
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if let FillPolicy::Constant { value } = self.warp_fill {
            if !value.is_finite() {
                return bad("warp_fill value must be finite".into());
            }
        }
        if self.crop_size == 0 {
            return bad("crop_size must be positive".into());
        }
        if !(self.crop_margin > -1.0 && self.crop_margin.is_finite()) {
            return bad(format!(
                "crop_margin must exceed -1, got {}",
                self.crop_margin
            ));
        }
        if !(self.max_rotation_degrees >= 0.0 && self.max_rotation_degrees.is_finite()) {
            return bad(format!(
                "max_rotation_degrees must be non-negative, got {}",
                self.max_rotation_degrees
            ));
        }
        let w = &self.loss_weights;
        let a = &self.apd_weights;
        for (name, v) in [
            ("loss_weights.reconstruction", w.reconstruction),
            ("loss_weights.lpips", w.lpips),
            ("loss_weights.component_lpips", w.component_lpips),
            ("apd_weights.rotation", a.rotation),
            ("apd_weights.translation", a.translation),
            ("apd_weights.log_scale", a.log_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        Ok(())
    }
}
