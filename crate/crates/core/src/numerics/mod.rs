//! Tensor container, seeded randomness, resampling kernels and the DXT1
//! binary tensor format. Every other module builds on these.

pub mod io;
mod rng;
mod sampling;
mod tensor;

pub use rng::{randn, Rng};
pub(crate) use sampling::trilinear_at_index;
pub use sampling::{
    bilinear_sample_px, center_coord, coord_to_index, gaussian_window, trilinear_sample,
    OutOfBounds,
};
pub use tensor::Tensor;
