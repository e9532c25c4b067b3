//! Explicit-pose, disentangled-expression portrait animation primitives.
//!
//! The crate covers the parts of a pose-and-expression conditioned diffusion
//! animator that can be checked without trained networks: RTS pose algebra,
//! ray-map pose encodings, 3D feature warping, AdaIN and cross-attention
//! conditioning, classifier-free guidance with a progressive expression
//! schedule, DDIM sampling, augmentation, losses and metrics, plus a
//! synthetic face lab with an exact denoiser for end-to-end tests.
//!
//! The guide in `book/` walks through each piece; its code snippets are
//! compiled and run as doc-tests of this crate.

pub mod augment;
pub mod conditioning;
pub mod config;
mod error;
pub mod landmarks;
pub mod numerics;
pub mod pose;
pub mod quality;
pub mod raster;
pub mod raymap;
pub mod sampler;
pub mod toylab;
pub mod volume;

pub use error::{Error, Result};
pub use numerics::{Rng, Tensor};
pub use pose::PoseRTS;
pub use raster::Image;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/poses.md")]
    mod poses {}
    #[doc = include_str!("../../../book/src/raymaps.md")]
    mod raymaps {}
    #[doc = include_str!("../../../book/src/volumes.md")]
    mod volumes {}
    #[doc = include_str!("../../../book/src/conditioning.md")]
    mod conditioning {}
    #[doc = include_str!("../../../book/src/guidance.md")]
    mod guidance {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/toylab.md")]
    mod toylab {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
