//! Reference-feature warping.
//!
//! A reference hidden state of `h²` tokens × `c` channels is viewed as a 3D
//! feature volume of `h/2 × h × h` voxels with `2c/h` channels, resampled
//! under a relative pose, flattened back to tokens and added residually to
//! the host hidden state through a per-token projection.
//!
//! # Token ↔ volume layout
//!
//! With `C' = 2c/h`, token `(row r, col q)` (flat index `r·h + q`) channel
//! `k = d·C' + j` maps to volume element `[j, d, r, q]`: the channel axis
//! is split into (depth, new channel) with depth outermost.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{center_coord, coord_to_index, trilinear_at_index, OutOfBounds, Tensor};
use crate::pose::PoseRTS;
use nalgebra::Vector3;

/// Flattened 2D hidden state: `[h², c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    side: usize,
    data: Tensor,
}

impl TokenGrid {
    pub fn new(side: usize, data: Tensor) -> Result<Self> {
        if side == 0 || side % 2 != 0 {
            return Err(Error::invalid(format!(
                "token grid side must be a positive even integer, got {side}"
            )));
        }
        if data.rank() != 2 || data.shape()[0] != side * side {
            return Err(Error::shape(format!(
                "token grid of side {side} needs shape [{}, c], got {:?}",
                side * side,
                data.shape()
            )));
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }
}

/// 3D feature volume `[C, D, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    data: Tensor,
}

impl FeatureVolume {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 4 {
            return Err(Error::shape(format!(
                "feature volume must be [C, D, H, W], got {:?}",
                data.shape()
            )));
        }
        Ok(Self { data })
    }

    /// `[C, D, H, W]`.
    pub fn dims(&self) -> [usize; 4] {
        self.data
            .shape()
            .try_into()
            .expect("rank checked at construction")
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }
}

/// Channel count of the volume built from a `side`-token grid with
/// `channels` channels, i.e. `2c/h`.
pub fn volume_channels(side: usize, channels: usize) -> Result<usize> {
    if side == 0 || side % 2 != 0 {
        return Err(Error::invalid(format!(
            "side must be positive and even, got h={side}"
        )));
    }
    if channels == 0 || (2 * channels) % side != 0 {
        return Err(Error::invalid(format!(
            "2c/h must be a positive integer, got h={side}, c={channels}"
        )));
    }
    Ok(2 * channels / side)
}

pub fn tokens_to_volume(grid: &TokenGrid) -> Result<FeatureVolume> {
    let h = grid.side();
    let c = grid.channels();
    let cv = volume_channels(h, c)?;
    let depth = h / 2;
    let src = grid.tensor().data();
    let mut out = vec![0.0; src.len()];
    let plane = h * h;
    for token in 0..plane {
        for d in 0..depth {
            for j in 0..cv {
                out[(j * depth + d) * plane + token] = src[token * c + d * cv + j];
            }
        }
    }
    FeatureVolume::new(Tensor::new(vec![cv, depth, h, h], out)?)
}

pub fn volume_to_tokens(volume: &FeatureVolume, side: usize) -> Result<TokenGrid> {
    let [cv, depth, height, width] = volume.dims();
    if side == 0 || side % 2 != 0 {
        return Err(Error::invalid(format!(
            "side must be positive and even, got h={side}"
        )));
    }
    for (axis, expected, actual) in [
        ("depth", side / 2, depth),
        ("height", side, height),
        ("width", side, width),
    ] {
        if expected != actual {
            return Err(Error::AxisMismatch {
                axis,
                expected,
                actual,
            });
        }
    }
    let c = cv * depth;
    let plane = side * side;
    let src = volume.tensor().data();
    let mut out = vec![0.0; src.len()];
    for token in 0..plane {
        for d in 0..depth {
            for j in 0..cv {
                out[token * c + d * cv + j] = src[(j * depth + d) * plane + token];
            }
        }
    }
    TokenGrid::new(side, Tensor::new(vec![plane, c], out)?)
}

/// Resamples `volume` under `rel` by inverse mapping: every output voxel
/// center `x` reads `trilinear(volume, rel⁻¹·x)`.
///
/// Axes map as `x → W`, `y → H`, `z → D`, each normalized to `[-1, 1]`.
pub fn warp_volume(
    volume: &FeatureVolume,
    rel: &PoseRTS,
    oob: OutOfBounds,
) -> Result<FeatureVolume> {
    let dims = volume.dims();
    let [channels, depth, height, width] = dims;
    for (axis, n) in [("depth", depth), ("height", height), ("width", width)] {
        if n < 2 {
            return Err(Error::AxisMismatch {
                axis,
                expected: 2,
                actual: n,
            });
        }
    }
    let inv = rel.invert();
    let plane = height * width;
    let src = volume.tensor().data();

    // voxel-major scratch so each output voxel is written by one task
    let mut scratch = vec![0.0; depth * plane * channels];
    scratch
        .par_chunks_mut(plane * channels)
        .enumerate()
        .for_each(|(z, slab)| {
            let zc = center_coord(z, depth);
            for y in 0..height {
                let yc = center_coord(y, height);
                for x in 0..width {
                    let xc = center_coord(x, width);
                    let p = inv.apply(&Vector3::new(xc, yc, zc));
                    let out = &mut slab[(y * width + x) * channels..][..channels];
                    match oob {
                        OutOfBounds::Constant(v) if p.iter().any(|a| !(-1.0..=1.0).contains(a)) => {
                            out.iter_mut().for_each(|o| *o = v)
                        }
                        _ => {
                            let pos = [
                                coord_to_index(p[0], width),
                                coord_to_index(p[1], height),
                                coord_to_index(p[2], depth),
                            ];
                            trilinear_at_index(src, dims, pos, oob, out);
                        }
                    }
                }
            }
        });

    let voxels = depth * plane;
    let mut out = vec![0.0; scratch.len()];
    for v in 0..voxels {
        for c in 0..channels {
            out[c * voxels + v] = scratch[v * channels + c];
        }
    }
    FeatureVolume::new(Tensor::new(dims.to_vec(), out)?)
}

/// Per-token affine map from the flattened warped channels to the host
/// channels: `y = W·x + b`, `W` is `[c_host, c_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    weight: Tensor,
    bias: Vec<f64>,
}

impl Projection {
    pub fn new(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::shape(format!(
                "projection weight must be [c_out, c_in], got {:?}",
                weight.shape()
            )));
        }
        if bias.len() != weight.shape()[0] {
            return Err(Error::AxisMismatch {
                axis: "bias",
                expected: weight.shape()[0],
                actual: bias.len(),
            });
        }
        Ok(Self { weight, bias })
    }

    /// Zero weights and bias: injection leaves the host untouched.
    pub fn zeros(out_channels: usize, in_channels: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[out_channels, in_channels])?,
            vec![0.0; out_channels],
        )
    }

    pub fn identity(channels: usize) -> Result<Self> {
        let w = Tensor::from_fn(&[channels, channels], |k| {
            if k / channels == k % channels {
                1.0
            } else {
                0.0
            }
        })?;
        Self::new(w, vec![0.0; channels])
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// `host + projection(flatten(warped))`, where the flattening is
/// [`volume_to_tokens`] at the host's side length.
pub fn residual_inject(
    host: &TokenGrid,
    warped: &FeatureVolume,
    projection: &Projection,
) -> Result<TokenGrid> {
    let flat = volume_to_tokens(warped, host.side()).map_err(|e| match e {
        Error::AxisMismatch {
            axis,
            expected,
            actual,
        } => Error::shape(format!(
            "warped volume does not flatten to {} tokens: {axis} is {actual}, expected {expected}",
            host.side() * host.side()
        )),
        other => other,
    })?;
    let c_in = flat.channels();
    let c_out = host.channels();
    if projection.in_channels() != c_in {
        return Err(Error::AxisMismatch {
            axis: "projection input",
            expected: c_in,
            actual: projection.in_channels(),
        });
    }
    if projection.out_channels() != c_out {
        return Err(Error::AxisMismatch {
            axis: "projection output",
            expected: c_out,
            actual: projection.out_channels(),
        });
    }
    let w = projection.weight.data();
    let x = flat.tensor().data();
    let mut out = host.tensor().data().to_vec();
    for (token, row) in out.chunks_exact_mut(c_out).enumerate() {
        let xin = &x[token * c_in..][..c_in];
        for (o, y) in row.iter_mut().enumerate() {
            let dot: f64 = w[o * c_in..][..c_in]
                .iter()
                .zip(xin)
                .map(|(a, b)| a * b)
                .sum();
            *y += dot + projection.bias[o];
        }
    }
    TokenGrid::new(
        host.side(),
        Tensor::new(host.tensor().shape().to_vec(), out)?,
    )
}
