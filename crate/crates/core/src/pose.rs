//! Explicit head pose: rotation, translation and scale (RTS).
//!
//! A pose is the similarity transform `x ↦ s·R·x + t`, written in matrix
//! form as the 3×4 block `[s·R | t]`. The public type carries a 2-DOF
//! image-plane translation `(tx, ty, 0)`; composition and inversion may
//! produce a nonzero `tz` in intermediate results (see [`PoseRTS::general`]).
//!
//! Coordinates are the normalized volume/image coordinates of
//! [`crate::numerics`].

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Similarity transform `x ↦ scale · rotation · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRTS {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    scale: f64,
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("rotation has non-finite entries".into()));
    }
    let gram = r.transpose() * r;
    let err = (gram - Matrix3::identity()).amax();
    if err > ORTHONORMAL_TOL {
        return Err(Error::Validation(format!(
            "rotation is not orthonormal: max |RᵀR - I| = {err:.3e}"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::Validation(format!(
            "rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

impl PoseRTS {
    /// Pose with image-plane translation; all invariants are enforced,
    /// including `translation[2] == 0`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self> {
        if translation[2] != 0.0 {
            return Err(Error::Validation(format!(
                "translation z must be 0, got {}",
                translation[2]
            )));
        }
        Self::general(rotation, translation, scale)
    }

    /// Like [`PoseRTS::new`] but admits a full 3-vector translation, as
    /// produced by composing and inverting poses.
    pub fn general(rotation: Matrix3<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self> {
        check_rotation(&rotation)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Validation(format!(
                "scale must be positive, got {scale}"
            )));
        }
        if translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(
                "translation has non-finite entries".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    /// The canonical pose: `R = I`, `t = 0`, `s = 1`.
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// Pose built from Euler angles (see [`euler_to_rotation`]), image-plane
    /// translation and scale.
    pub fn from_euler(
        yaw: f64,
        pitch: f64,
        roll: f64,
        tx: f64,
        ty: f64,
        scale: f64,
    ) -> Result<Self> {
        Self::new(
            euler_to_rotation(yaw, pitch, roll),
            Vector3::new(tx, ty, 0.0),
            scale,
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Whether the translation lies in the image plane (`tz == 0`).
    pub fn is_planar(&self) -> bool {
        self.translation[2] == 0.0
    }

    /// Applies the transform to a point.
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }

    /// `[s·R | t]`.
    pub fn to_matrix(&self) -> PoseMatrix {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.rotation * self.scale));
        m.set_column(3, &self.translation);
        PoseMatrix(m)
    }

    /// Inverse transform: `Rᵀ`, `1/s`, `-(1/s)·Rᵀ·t`.
    pub fn invert(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        Self {
            rotation: rt,
            translation: -(inv_s * (rt * self.translation)),
            scale: inv_s,
        }
    }

    /// `self ∘ other`, i.e. `x ↦ self(other(x))`.
    pub fn compose(&self, other: &PoseRTS) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
            scale: self.scale * other.scale,
        }
    }

    /// Transform taking features at the `source` pose to the `driving` pose:
    /// `P_driving · P_source⁻¹`.
    pub fn relative(source: &PoseRTS, driving: &PoseRTS) -> Self {
        driving.compose(&source.invert())
    }

    /// Largest entrywise deviation from another pose, across R, t and s.
    pub fn max_deviation(&self, other: &PoseRTS) -> f64 {
        let dr = (self.rotation - other.rotation).amax();
        let dt = (self.translation - other.translation).amax();
        dr.max(dt).max((self.scale - other.scale).abs())
    }
}

impl Default for PoseRTS {
    fn default() -> Self {
        Self::identity()
    }
}

/// Convenience free function mirroring [`PoseRTS::relative`].
pub fn relative_pose(source: &PoseRTS, driving: &PoseRTS) -> PoseRTS {
    PoseRTS::relative(source, driving)
}

/// The 3×4 matrix `[s·R | t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMatrix(pub Matrix3x4<f64>);

impl PoseMatrix {
    /// Embeds the matrix into a 4×4 homogeneous transform.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 4>(0, 0).copy_from(&self.0);
        h
    }

    /// Decomposes back into RTS.
    ///
    /// The scale is the mean column norm of the left block; the rotation is
    /// that block divided by the scale, and the translation is the last
    /// column. Fails when the block is not a scaled rotation.
    pub fn to_pose(&self) -> Result<PoseRTS> {
        let block: Matrix3<f64> = self.0.fixed_view::<3, 3>(0, 0).into();
        let norms: Vec<f64> = block.column_iter().map(|c| c.norm()).collect();
        let scale = norms.iter().sum::<f64>() / 3.0;
        if norms
            .iter()
            .any(|n| (n - scale).abs() > ORTHONORMAL_TOL * scale.max(1.0))
        {
            return Err(Error::Validation(format!(
                "left block column norms differ: {norms:?}"
            )));
        }
        PoseRTS::general(block / scale, self.0.column(3).into(), scale)
    }
}

/// Rotation `Rz(roll) · Ry(yaw) · Rx(pitch)`, angles in radians.
pub fn euler_to_rotation(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// On-disk pose: row-major rotation, translation and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl From<&PoseRTS> for PoseFile {
    fn from(p: &PoseRTS) -> Self {
        let r = p.rotation;
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        Self {
            rotation,
            translation: [p.translation[0], p.translation[1], p.translation[2]],
            scale: p.scale,
        }
    }
}

impl TryFrom<&PoseFile> for PoseRTS {
    type Error = Error;

    /// Accepts any valid similarity, including nonzero `tz` (relative poses
    /// written by `compose-pose` may carry one).
    fn try_from(f: &PoseFile) -> Result<Self> {
        PoseRTS::general(
            Matrix3::from_row_slice(&f.rotation),
            Vector3::from_column_slice(&f.translation),
            f.scale,
        )
    }
}

impl PoseFile {
    pub fn from_json(text: &str) -> Result<PoseRTS> {
        let file: PoseFile = serde_json::from_str(text)?;
        PoseRTS::try_from(&file)
    }

    pub fn to_json(p: &PoseRTS) -> String {
        serde_json::to_string_pretty(&PoseFile::from(p)).expect("pose serializes")
    }
}
