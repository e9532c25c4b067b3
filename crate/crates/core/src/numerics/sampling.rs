//! Resampling kernels and the shared coordinate convention.
//!
//! Normalized coordinates span `[-1, 1]` along every axis and place sample
//! centers at `-1 + (2i + 1) / n` for `i in 0..n` (the "align corners off"
//! convention). Ray maps, volume warping and image crops all use it.

use super::Tensor;
use crate::error::{Error, Result};

/// Index-space positions closer than this to an integer are treated as
/// lying exactly on the lattice, so that sampling at sample centers
/// reproduces stored values bit-for-bit.
const LATTICE_SNAP: f64 = 1e-9;

/// What a sample returns when it reaches outside the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutOfBounds {
    /// Missing neighbours read as this constant.
    Constant(f64),
    /// Coordinates are clamped onto the outermost samples.
    Border,
}

impl Default for OutOfBounds {
    fn default() -> Self {
        OutOfBounds::Constant(0.0)
    }
}

/// Normalized coordinate of sample center `i` on an axis of `n` samples.
#[inline]
pub fn center_coord(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

/// Continuous index-space position of normalized coordinate `x`.
#[inline]
pub fn coord_to_index(x: f64, n: usize) -> f64 {
    ((x + 1.0) * n as f64 - 1.0) / 2.0
}

/// One axis of an interpolation stencil: two neighbours and their weights.
/// `None` marks a neighbour that lies off the grid.
#[derive(Debug, Clone, Copy)]
struct AxisStencil {
    lo: Option<usize>,
    hi: Option<usize>,
    w_lo: f64,
    w_hi: f64,
}

impl AxisStencil {
    /// Stencil for a continuous index `pos` on an axis of `n` samples.
    /// Returns `None` when the whole sample falls outside under `Constant`
    /// fill (the caller then emits the fill value directly).
    fn new(pos: f64, n: usize, oob: OutOfBounds) -> Self {
        let snapped = pos.round();
        let pos = if (pos - snapped).abs() < LATTICE_SNAP {
            snapped
        } else {
            pos
        };
        let pos = match oob {
            OutOfBounds::Border => pos.clamp(0.0, (n - 1) as f64),
            OutOfBounds::Constant(_) => pos,
        };
        let base = pos.floor();
        let frac = pos - base;
        let valid = |i: f64| (i >= 0.0 && i <= (n - 1) as f64).then_some(i as usize);
        if frac == 0.0 {
            return Self {
                lo: valid(base),
                hi: None,
                w_lo: 1.0,
                w_hi: 0.0,
            };
        }
        Self {
            lo: valid(base),
            hi: valid(base + 1.0),
            w_lo: 1.0 - frac,
            w_hi: frac,
        }
    }

    fn taps(&self) -> [(Option<usize>, f64); 2] {
        [(self.lo, self.w_lo), (self.hi, self.w_hi)]
    }
}

fn fill_value(oob: OutOfBounds) -> f64 {
    match oob {
        OutOfBounds::Constant(v) => v,
        OutOfBounds::Border => 0.0,
    }
}

/// Trilinear sample of a `[C, D, H, W]` grid at an index-space position
/// `(x, y, z)` = (width, height, depth) index. Writes `C` values into `out`.
pub(crate) fn trilinear_at_index(
    data: &[f64],
    dims: [usize; 4],
    pos: [f64; 3],
    oob: OutOfBounds,
    out: &mut [f64],
) {
    let [channels, depth, height, width] = dims;
    let sx = AxisStencil::new(pos[0], width, oob);
    let sy = AxisStencil::new(pos[1], height, oob);
    let sz = AxisStencil::new(pos[2], depth, oob);
    let fill = fill_value(oob);
    let plane = height * width;
    let volume = depth * plane;
    out.iter_mut().for_each(|o| *o = 0.0);
    for (iz, wz) in sz.taps() {
        if wz == 0.0 {
            continue;
        }
        for (iy, wy) in sy.taps() {
            if wy == 0.0 {
                continue;
            }
            for (ix, wx) in sx.taps() {
                if wx == 0.0 {
                    continue;
                }
                let w = wz * wy * wx;
                match (iz, iy, ix) {
                    (Some(z), Some(y), Some(x)) => {
                        let offset = z * plane + y * width + x;
                        for (c, o) in out.iter_mut().enumerate().take(channels) {
                            *o += w * data[c * volume + offset];
                        }
                    }
                    _ => {
                        if fill != 0.0 {
                            out.iter_mut().for_each(|o| *o += w * fill);
                        }
                    }
                }
            }
        }
    }
}

fn in_unit_cube(p: &[f64]) -> bool {
    p.iter().all(|x| (-1.0..=1.0).contains(x))
}

/// Trilinear sampling of a `[C, D, H, W]` volume at `N` normalized
/// coordinates `[N, 3]`, ordered `(x, y, z)` = (width, height, depth).
///
/// Points outside `[-1, 1]^3` yield the constant fill (or are clamped under
/// [`OutOfBounds::Border`]). Returns `[N, C]`.
pub fn trilinear_sample(volume: &Tensor, coords: &Tensor, oob: OutOfBounds) -> Result<Tensor> {
    let dims: [usize; 4] = volume.shape().try_into().map_err(|_| {
        Error::shape(format!(
            "volume must have 4 axes [C, D, H, W], got {:?}",
            volume.shape()
        ))
    })?;
    for (axis, &n) in ["depth", "height", "width"].iter().zip(&dims[1..]) {
        if n < 2 {
            return Err(Error::AxisMismatch {
                axis,
                expected: 2,
                actual: n,
            });
        }
    }
    if coords.rank() != 2 || coords.shape()[1] != 3 {
        return Err(Error::AxisMismatch {
            axis: "coordinate",
            expected: 3,
            actual: *coords.shape().last().unwrap_or(&0),
        });
    }
    coords.ensure_finite()?;

    let channels = dims[0];
    let n = coords.shape()[0];
    let mut out = vec![0.0; n * channels];
    for (p, row) in coords
        .data()
        .chunks_exact(3)
        .zip(out.chunks_exact_mut(channels))
    {
        match oob {
            OutOfBounds::Constant(v) if !in_unit_cube(p) => row.iter_mut().for_each(|o| *o = v),
            _ => {
                let pos = [
                    coord_to_index(p[0], dims[3]),
                    coord_to_index(p[1], dims[2]),
                    coord_to_index(p[2], dims[1]),
                ];
                trilinear_at_index(volume.data(), dims, pos, oob, row);
            }
        }
    }
    Tensor::new(vec![n, channels], out)
}

/// Bilinear sample of a `[C, H, W]` image at continuous pixel position
/// `(x, y)`, where pixel `(row i, col j)` covers `[j, j+1) x [i, i+1)` and
/// its center sits at `(j + 0.5, i + 0.5)`. Writes `C` values into `out`.
pub fn bilinear_sample_px(img: &Tensor, x: f64, y: f64, oob: OutOfBounds, out: &mut [f64]) {
    let shape = img.shape();
    let (channels, height, width) = (shape[0], shape[1], shape[2]);
    if let OutOfBounds::Constant(v) = oob {
        if !(0.0..=width as f64).contains(&x) || !(0.0..=height as f64).contains(&y) {
            out.iter_mut().for_each(|o| *o = v);
            return;
        }
    }
    let sx = AxisStencil::new(x - 0.5, width, oob);
    let sy = AxisStencil::new(y - 0.5, height, oob);
    let fill = fill_value(oob);
    let data = img.data();
    let plane = height * width;
    out.iter_mut().for_each(|o| *o = 0.0);
    for (iy, wy) in sy.taps() {
        if wy == 0.0 {
            continue;
        }
        for (ix, wx) in sx.taps() {
            if wx == 0.0 {
                continue;
            }
            let w = wy * wx;
            match (iy, ix) {
                (Some(r), Some(c)) => {
                    for (ch, o) in out.iter_mut().enumerate().take(channels) {
                        *o += w * data[ch * plane + r * width + c];
                    }
                }
                _ => out.iter_mut().for_each(|o| *o += w * fill),
            }
        }
    }
}

/// Normalized separable 2D Gaussian window of odd `size`.
pub fn gaussian_window(size: usize, sigma: f64) -> Result<Tensor> {
    if size % 2 == 0 {
        return Err(Error::invalid(format!(
            "window size must be odd, got {size}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let g: Vec<f64> = raw.iter().map(|v| v / total).collect();
    Tensor::from_fn(&[size, size], |k| g[k / size] * g[k % size])
}
